#pragma once

// Student training against the frozen teacher, plus the text translator used
// for decoder warm starts.

#include <cmath>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "dimt/core/errors.hpp"
#include "dimt/core/hash.hpp"
#include "dimt/core/jsonio.hpp"
#include "dimt/inference/translate.hpp"
#include "dimt/metrics/report.hpp"
#include "dimt/model/student.hpp"
#include "dimt/model/text_translator.hpp"
#include "dimt/synthdoc/corpus.hpp"
#include "dimt/teacher/teacher.hpp"
#include "dimt/training/loop.hpp"

namespace dimt {

struct TrainConfig {
  LoopConfig loop;
  double alpha = 1.0;
  std::string align_loss = "cosine";
  bool cosine_flat = false;
  bool no_align_loss = false;
  bool no_alignment_encoder = false;
  bool use_teacher_output_at_decode = false;
  ModalityMask mask;
  int valid_limit = 0;  // validation samples; 0 uses the whole split
  int decode_max_length = 256;
  std::string warm_start;  // text translator checkpoint

  void validate() const {
    loop.validate();
    if (alpha < 0) throw ContractError("alpha must be non-negative");
    mask.validate();
    parse_align_loss(align_loss);
    if (no_alignment_encoder && use_teacher_output_at_decode)
      throw ContractError("no_alignment_encoder and use_teacher_output_at_decode are exclusive");
    if (valid_limit < 0 || decode_max_length < 1) throw ContractError("invalid validation settings");
  }

  /// Weight of the alignment term in the gradient.
  [[nodiscard]] double effective_alpha() const {
    return no_align_loss || use_teacher_output_at_decode ? 0.0 : alpha;
  }
};

inline Json to_json(const ModalityMask& m) { return Json{{"use_image", m.use_image}, {"use_text", m.use_text}}; }

inline ModalityMask modality_mask_from_json(const Json& j) {
  check_keys(j, {"use_image", "use_text"}, "mask");
  ModalityMask m;
  read_field(j, "use_image", m.use_image);
  read_field(j, "use_text", m.use_text);
  return m;
}

inline Json to_json(const TrainConfig& c) {
  return Json{{"alpha", c.alpha},
              {"lr", c.loop.lr},
              {"warmup", c.loop.warmup},
              {"max_steps", c.loop.max_steps},
              {"batch", c.loop.batch},
              {"clip", c.loop.clip},
              {"seed", c.loop.seed},
              {"checkpoint_every", c.loop.checkpoint_every},
              {"validate_every", c.loop.validate_every},
              {"align_loss", c.align_loss},
              {"cosine_flat", c.cosine_flat},
              {"no_align_loss", c.no_align_loss},
              {"no_alignment_encoder", c.no_alignment_encoder},
              {"use_teacher_output_at_decode", c.use_teacher_output_at_decode},
              {"mask", to_json(c.mask)},
              {"valid_limit", c.valid_limit},
              {"decode_max_length", c.decode_max_length},
              {"warm_start", c.warm_start}};
}

inline TrainConfig train_config_from_json(const Json& j) {
  check_keys(j, {"alpha", "lr", "warmup", "max_steps", "batch", "clip", "seed", "checkpoint_every", "validate_every",
                 "align_loss", "cosine_flat", "no_align_loss", "no_alignment_encoder", "use_teacher_output_at_decode",
                 "mask", "valid_limit", "decode_max_length", "warm_start", "stop_after"},
             "train config");
  TrainConfig c;
  read_field(j, "alpha", c.alpha);
  read_field(j, "lr", c.loop.lr);
  read_field(j, "warmup", c.loop.warmup);
  read_field(j, "max_steps", c.loop.max_steps);
  read_field(j, "batch", c.loop.batch);
  read_field(j, "clip", c.loop.clip);
  read_field(j, "seed", c.loop.seed);
  read_field(j, "checkpoint_every", c.loop.checkpoint_every);
  read_field(j, "validate_every", c.loop.validate_every);
  read_field(j, "stop_after", c.loop.stop_after);
  read_field(j, "align_loss", c.align_loss);
  read_field(j, "cosine_flat", c.cosine_flat);
  read_field(j, "no_align_loss", c.no_align_loss);
  read_field(j, "no_alignment_encoder", c.no_alignment_encoder);
  read_field(j, "use_teacher_output_at_decode", c.use_teacher_output_at_decode);
  if (j.contains("mask")) c.mask = modality_mask_from_json(j.at("mask"));
  read_field(j, "valid_limit", c.valid_limit);
  read_field(j, "decode_max_length", c.decode_max_length);
  read_field(j, "warm_start", c.warm_start);
  return c;
}

/// Model geometry with the run's ablation switches, loss variant and seed applied.
inline ModelConfig resolve_model_config(ModelConfig m, const TrainConfig& t) {
  if (t.no_alignment_encoder) m.align_source = AlignSource::image_encoder;
  if (t.use_teacher_output_at_decode) m.align_source = AlignSource::teacher_output;
  m.align_loss = parse_align_loss(t.align_loss);
  m.cosine_flat = t.cosine_flat;
  m.seed = t.loop.seed;
  return m;
}

/// Mean over rows of the cosine between matching rows (norms offset by 1e-8).
template <class T>
double mean_position_cosine(const Matrix<T>& a, const Matrix<T>& b) {
  if (!a.same_shape(b)) throw ContractError("cosine: shapes differ");
  double total = 0;
  for (std::size_t r = 0; r < a.rows(); ++r) {
    double dot = 0, na = 0, nb = 0;
    auto x = a.row(r);
    auto y = b.row(r);
    for (std::size_t j = 0; j < a.cols(); ++j) {
      dot += static_cast<double>(x[j]) * static_cast<double>(y[j]);
      na += static_cast<double>(x[j]) * static_cast<double>(x[j]);
      nb += static_cast<double>(y[j]) * static_cast<double>(y[j]);
    }
    total += dot / ((std::sqrt(na) + 1e-8) * (std::sqrt(nb) + 1e-8));
  }
  return a.rows() == 0 ? 0.0 : total / static_cast<double>(a.rows());
}

/// Target ids for a reference; must fit the decoder with BOS prepended.
inline std::vector<int> target_tokens(const Vocabulary& vocab, const DocumentSample& s, int max_positions) {
  auto ids = vocab.encode(s.reference_markdown);
  if (static_cast<int>(ids.size()) + 1 > max_positions)
    throw DataError("reference of " + s.id + " has " + std::to_string(ids.size()) + " tokens; decoder holds " +
                    std::to_string(max_positions - 1));
  return ids;
}

/// Teacher representations for the listed samples, computed once.
inline std::vector<const Matrix<float>*> teacher_targets(const Teacher<float>& teacher, TeacherCache<float>& cache,
                                                         const std::vector<const DocumentSample*>& samples,
                                                         const ModalityMask& mask) {
  std::vector<const Matrix<float>*> out;
  out.reserve(samples.size());
  for (const auto* s : samples) out.push_back(&cache.get(teacher, s->id, s->image, s->source_tokens, mask));
  return out;
}

struct ValidationSet {
  std::vector<const DocumentSample*> samples;
  std::vector<const Matrix<float>*> teacher;  // per sample; the run's mask
  std::vector<const Matrix<float>*> teacher_full;  // full mask, used when decoding from teacher output
};

/// Greedy-decoded corpus scores plus mean alignment cosine.
inline Json validate_student(const StudentModel<float>& model, const Vocabulary& target_vocab, const ValidationSet& v,
                             int decode_max_length) {
  std::vector<EvalRow> rows;
  double cos_sum = 0;
  const int max_len = std::min(decode_max_length, model.config().decoder.max_positions);
  for (std::size_t i = 0; i < v.samples.size(); ++i) {
    const auto& s = *v.samples[i];
    const Matrix<float>* override_rep = model.uses_teacher_output() ? v.teacher_full[i] : nullptr;
    const auto r = translate_greedy(model, target_vocab, s.image, max_len, override_rep);
    rows.push_back({s.id, r.markdown, s.reference_markdown, s.context_length, s.layout_nodes, 0.0, r.truncated});
    if (!model.uses_teacher_output()) cos_sum += mean_position_cosine(model.aligned(s.image), *v.teacher[i]);
  }
  Json out;
  if (rows.empty()) return Json{{"count", 0}};
  score_rows(rows);
  const auto sc = *score_subset(rows, whole_slice(rows).members);
  out["BLEU"] = sc.bleu;
  out["BLEU_PT"] = sc.bleu_pt;
  out["STEDS"] = sc.steds;
  out["cosine"] = model.uses_teacher_output() ? Json(nullptr) : Json(cos_sum / static_cast<double>(rows.size()));
  out["count"] = rows.size();
  return out;
}

struct TrainResult {
  std::filesystem::path final_checkpoint;
  std::uint64_t final_hash = 0;
  std::uint64_t teacher_hash_before = 0;
  std::uint64_t teacher_hash_after = 0;
  LoopResult loop;
  std::vector<std::pair<std::string, std::size_t>> parameter_groups;
  std::size_t inference_parameters = 0;
};

/// Checkpoint metadata shared by every student checkpoint of a run.
inline Json run_metadata(const Corpus& corpus, const Teacher<float>& teacher, const TrainConfig& cfg) {
  return Json{{"train", to_json(cfg)},
              {"teacher_hash", hex64(teacher.hash())},
              {"teacher", to_json(teacher.config())},
              {"source_vocab_hash", hex64(corpus.source_vocab.hash())},
              {"target_vocab_hash", hex64(corpus.target_vocab.hash())}};
}

/// Train the student; writes train_log.jsonl, checkpoints/step-N.ckpt and final.ckpt under `out`.
inline TrainResult train_student(const Corpus& corpus, const Teacher<float>& teacher, const ModelConfig& base,
                                 const TrainConfig& cfg, const std::filesystem::path& out, bool resume = false,
                                 TeacherCache<float>* shared_cache = nullptr) {
  namespace fs = std::filesystem;
  cfg.validate();
  const ModelConfig mcfg = resolve_model_config(base, cfg);
  StudentModel<float> model(mcfg);
  if (mcfg.decoder.vocab != corpus.target_vocab.size())
    throw DataError("decoder vocabulary " + std::to_string(mcfg.decoder.vocab) + " does not match the corpus target vocabulary " +
                    std::to_string(corpus.target_vocab.size()));
  if (mcfg.align_len != teacher.config().seq_len || mcfg.align_dim != teacher.config().dim)
    throw ContractError("teacher output " + std::to_string(teacher.config().seq_len) + "x" +
                        std::to_string(teacher.config().dim) + " does not match the model's " +
                        std::to_string(mcfg.align_len) + "x" + std::to_string(mcfg.align_dim));
  if (teacher.config().source_vocab != corpus.source_vocab.size())
    throw DataError("teacher source vocabulary does not match the corpus");
  if (!cfg.warm_start.empty()) {
    auto src = TextTranslator<float>::load(cfg.warm_start);
    warm_start_decoder(model, *src);
  }

  TrainResult res;
  res.teacher_hash_before = teacher.hash();
  const auto train = corpus.split("train");
  if (train.empty()) throw DataError("corpus has an empty train split");
  auto valid = corpus.split("valid");
  if (cfg.valid_limit > 0 && valid.size() > static_cast<std::size_t>(cfg.valid_limit))
    valid.resize(static_cast<std::size_t>(cfg.valid_limit));

  TeacherCache<float> local_cache;
  TeacherCache<float>& cache = shared_cache ? *shared_cache : local_cache;
  const auto targets_train = teacher_targets(teacher, cache, train, cfg.mask);
  ValidationSet vset{valid, teacher_targets(teacher, cache, valid, cfg.mask), {}};
  if (model.uses_teacher_output()) vset.teacher_full = teacher_targets(teacher, cache, valid, ModalityMask{});
  std::vector<const Matrix<float>*> decode_reps;  // fed to the decoder in the teacher-output ablation
  if (model.uses_teacher_output()) decode_reps = teacher_targets(teacher, cache, train, ModalityMask{});

  std::vector<TeacherForcing> forcing;
  for (const auto* s : train)
    forcing.push_back(teacher_forcing(target_tokens(corpus.target_vocab, *s, mcfg.decoder.max_positions), kBos, kEos));

  const double alpha = cfg.effective_alpha();
  const Json meta = run_metadata(corpus, teacher, cfg);
  LoopHooks<float> hooks;
  hooks.loss = [&](Graph<float>& g, std::size_t i) {
    const Matrix<float>* rep = model.uses_teacher_output() ? decode_reps[i] : nullptr;
    auto f = model.forward(g, train[i]->image, forcing[i].input, rep);
    auto l = model.losses(g, f, forcing[i].target, *targets_train[i], alpha);
    return LossParts<float>{l.total, static_cast<double>(g.value(l.align)[0]), static_cast<double>(g.value(l.trans)[0])};
  };
  hooks.sample_name = [&](std::size_t i) { return train[i]->id; };
  hooks.validate = [&](int) { return validate_student(model, corpus.target_vocab, vset, cfg.decode_max_length); };
  hooks.save = [&](const fs::path& p, int step, const Adam<float>& adam) {
    Json extra = meta;
    extra["step"] = step;
    save_student(p, model, extra, [&](std::ostream& os) { adam.save(os); });
  };
  hooks.load = [&](const fs::path& p, Adam<float>& adam) {
    auto loaded = load_student<float>(p, [&](std::istream& is, StudentModel<float>&) { adam.load(is); });
    if (!loaded.has_trailer) throw DataError("checkpoint " + p.string() + " lacks optimizer state");
    Json saved = loaded.extra.at("train");
    Json now = to_json(cfg);
    if (saved != now) throw DataError("resume: checkpoint was written with a different train config");
    if (loaded.extra.at("teacher_hash") != hex64(teacher.hash())) throw DataError("resume: teacher differs");
    for (std::size_t k = 0; k < model.parameters().size(); ++k)
      model.parameters()[k].value = loaded.model->parameters()[k].value;
    return loaded.extra.at("step").get<int>();
  };

  res.loop = run_training(model.parameters(), train.size(), cfg.loop, alpha, out, resume, hooks);
  res.teacher_hash_after = teacher.hash();
  if (res.teacher_hash_after != res.teacher_hash_before) throw ContractError("teacher parameters changed");
  if (res.loop.completed) {
    Json extra = meta;
    extra["step"] = res.loop.last_step;
    res.final_checkpoint = out / "final.ckpt";
    save_student(res.final_checkpoint, model, extra);
  }
  res.final_hash = model.parameters().hash();
  res.parameter_groups = model.group_counts();
  res.inference_parameters = model.parameters().count() + (model.uses_teacher_output() ? teacher.parameter_count() : 0);
  return res;
}

/// Text-to-text translator trained on the train split's source/reference pairs.
inline LoopResult train_text_translator(const Corpus& corpus, const TextTranslatorConfig& tcfg, const LoopConfig& loop,
                                        const std::filesystem::path& out, bool resume = false) {
  namespace fs = std::filesystem;
  TextTranslator<float> model(tcfg);
  if (tcfg.source_vocab != corpus.source_vocab.size() || tcfg.decoder.vocab != corpus.target_vocab.size())
    throw DataError("text translator vocabularies do not match the corpus");
  const auto train = corpus.split("train");
  if (train.empty()) throw DataError("corpus has an empty train split");
  std::vector<TeacherForcing> forcing;
  for (const auto* s : train)
    forcing.push_back(teacher_forcing(target_tokens(corpus.target_vocab, *s, tcfg.decoder.max_positions), kBos, kEos));
  LoopHooks<float> hooks;
  hooks.loss = [&](Graph<float>& g, std::size_t i) {
    auto l = ops::nll(g, model.logits(g, train[i]->source_tokens, forcing[i].input), forcing[i].target);
    return LossParts<float>{l, 0.0, static_cast<double>(g.value(l)[0])};
  };
  hooks.sample_name = [&](std::size_t i) { return train[i]->id; };
  const auto trailer_path = [](const fs::path& p) { return fs::path(p.string() + ".adam"); };
  hooks.save = [&](const fs::path& p, int step, const Adam<float>& adam) {
    model.save(p);
    std::ofstream os(trailer_path(p), std::ios::binary);
    binio::put<std::int64_t>(os, step);
    adam.save(os);
  };
  hooks.load = [&](const fs::path& p, Adam<float>& adam) {
    auto loaded = TextTranslator<float>::load(p);
    for (std::size_t k = 0; k < model.parameters().size(); ++k)
      model.parameters()[k].value = loaded->parameters()[k].value;
    std::ifstream is(trailer_path(p), std::ios::binary);
    if (!is) throw DataError("missing optimizer state for " + p.string());
    const auto step = static_cast<int>(binio::get<std::int64_t>(is));
    adam.load(is);
    return step;
  };
  auto res = run_training(model.parameters(), train.size(), loop, 0.0, out, resume, hooks);
  if (res.completed) model.save(out / "final.ckpt");
  return res;
}

}  // namespace dimt
