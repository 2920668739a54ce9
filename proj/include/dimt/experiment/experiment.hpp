#pragma once

// Experiment orchestration: one spec file drives corpus generation, teacher
// construction, training, evaluation, ablation suites, alpha sweeps and
// representation export. Outputs are deterministic; timestamps and timings
// go only to provenance.json sidecars.

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "dimt/core/errors.hpp"
#include "dimt/core/hash.hpp"
#include "dimt/core/jsonio.hpp"
#include "dimt/experiment/plot.hpp"
#include "dimt/inference/translate.hpp"
#include "dimt/metrics/report.hpp"
#include "dimt/synthdoc/corpus.hpp"
#include "dimt/teacher/teacher.hpp"
#include "dimt/training/trainer.hpp"

namespace dimt {

namespace fs = std::filesystem;

struct EvalSettings {
  std::string split = "test";
  BeamConfig beam;
  int limit = 0;  // samples; 0 uses the whole split
  int complexity_k = 100;
};

struct TextPretrainSettings {
  bool enabled = false;
  int steps = 500;
  double lr = 1e-3;
  int warmup = 50;
  int batch = 16;
  int encoder_dim = 64;
  int encoder_layers = 2;
  int encoder_heads = 4;
  int ffn_mult = 2;
};

struct ExperimentSpec {
  std::string name = "experiment";
  std::uint64_t seed = 1;  // training seed: initialization and data order
  GenConfig corpus;
  std::string corpus_dir;     // empty: <out>/corpus
  std::string teacher_cache;  // empty: <corpus_dir>/teacher_cache; "none" keeps the cache in memory
  TeacherConfig teacher;
  ModelConfig model;
  TrainConfig train;
  EvalSettings eval;
  TextPretrainSettings text_pretrain;
  std::vector<double> alphas{0.0, 0.5, 1.0, 2.0, 4.0};
};

inline Json to_json(const BeamConfig& b) {
  return Json{{"width", b.width}, {"max_length", b.max_length}, {"length_exponent", b.length_exponent}};
}

inline BeamConfig beam_config_from_json(const Json& j) {
  check_keys(j, {"width", "max_length", "length_exponent"}, "beam");
  BeamConfig b;
  read_field(j, "width", b.width);
  read_field(j, "max_length", b.max_length);
  read_field(j, "length_exponent", b.length_exponent);
  return b;
}

inline Json to_json(const EvalSettings& e) {
  return Json{{"split", e.split}, {"beam", to_json(e.beam)}, {"limit", e.limit}, {"complexity_k", e.complexity_k}};
}

inline EvalSettings eval_settings_from_json(const Json& j) {
  check_keys(j, {"split", "beam", "limit", "complexity_k"}, "eval");
  EvalSettings e;
  read_field(j, "split", e.split);
  if (j.contains("beam")) e.beam = beam_config_from_json(j.at("beam"));
  read_field(j, "limit", e.limit);
  read_field(j, "complexity_k", e.complexity_k);
  return e;
}

inline Json to_json(const TextPretrainSettings& t) {
  return Json{{"enabled", t.enabled},         {"steps", t.steps},
              {"lr", t.lr},                   {"warmup", t.warmup},
              {"batch", t.batch},             {"encoder_dim", t.encoder_dim},
              {"encoder_layers", t.encoder_layers}, {"encoder_heads", t.encoder_heads},
              {"ffn_mult", t.ffn_mult}};
}

inline TextPretrainSettings text_pretrain_from_json(const Json& j) {
  check_keys(j, {"enabled", "steps", "lr", "warmup", "batch", "encoder_dim", "encoder_layers", "encoder_heads", "ffn_mult"},
             "text_pretrain");
  TextPretrainSettings t;
  read_field(j, "enabled", t.enabled);
  read_field(j, "steps", t.steps);
  read_field(j, "lr", t.lr);
  read_field(j, "warmup", t.warmup);
  read_field(j, "batch", t.batch);
  read_field(j, "encoder_dim", t.encoder_dim);
  read_field(j, "encoder_layers", t.encoder_layers);
  read_field(j, "encoder_heads", t.encoder_heads);
  read_field(j, "ffn_mult", t.ffn_mult);
  return t;
}

inline Json to_json(const ExperimentSpec& s) {
  return Json{{"name", s.name},
              {"seed", s.seed},
              {"corpus", to_json(s.corpus)},
              {"corpus_dir", s.corpus_dir},
              {"teacher_cache", s.teacher_cache},
              {"teacher", to_json(s.teacher)},
              {"model", to_json(s.model)},
              {"train", to_json(s.train)},
              {"eval", to_json(s.eval)},
              {"text_pretrain", to_json(s.text_pretrain)},
              {"alphas", s.alphas}};
}

/// Parses a spec; the top-level seed wins over train.seed.
inline ExperimentSpec experiment_spec_from_json(const Json& j) {
  check_keys(j, {"name", "seed", "corpus", "corpus_dir", "teacher_cache", "teacher", "model", "train", "eval",
                 "text_pretrain", "alphas"},
             "experiment spec");
  ExperimentSpec s;
  read_field(j, "name", s.name);
  read_field(j, "seed", s.seed);
  if (j.contains("corpus")) s.corpus = gen_config_from_json(j.at("corpus"));
  read_field(j, "corpus_dir", s.corpus_dir);
  read_field(j, "teacher_cache", s.teacher_cache);
  if (j.contains("teacher")) s.teacher = teacher_config_from_json(j.at("teacher"));
  if (j.contains("model")) s.model = model_config_from_json(j.at("model"));
  if (j.contains("train")) s.train = train_config_from_json(j.at("train"));
  if (j.contains("eval")) s.eval = eval_settings_from_json(j.at("eval"));
  if (j.contains("text_pretrain")) s.text_pretrain = text_pretrain_from_json(j.at("text_pretrain"));
  read_field(j, "alphas", s.alphas);
  s.train.loop.seed = s.seed;
  return s;
}

/// Applies `a.b.c=value` overrides to a JSON document. Values parse as JSON
/// when possible and fall back to strings.
inline void apply_override(Json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ContractError("override must look like key.path=value: " + assignment);
  const std::string path = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  Json value;
  try {
    value = Json::parse(text);
  } catch (const Json::exception&) {
    value = text;
  }
  Json* node = &j;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) throw ContractError("empty key in override " + assignment);
    if (!node->is_object()) throw ContractError("override path crosses a non-object at " + key);
    if (dot == std::string::npos) {
      (*node)[key] = value;
      return;
    }
    node = &(*node)[key];
    if (node->is_null()) *node = Json::object();
    start = dot + 1;
  }
}

inline fs::path corpus_path(const ExperimentSpec& s, const fs::path& out) {
  return s.corpus_dir.empty() ? out / "corpus" : fs::path(s.corpus_dir);
}

/// Loads the corpus, generating it first when the directory holds none.
/// An existing corpus must have been generated from the same config.
inline Corpus ensure_corpus(const GenConfig& cfg, const fs::path& dir) {
  if (!fs::exists(dir / "manifest.jsonl")) generate_corpus(cfg, dir);
  Corpus c = load_corpus(dir);
  if (to_json(c.config) != to_json(cfg))
    throw DataError("corpus at " + dir.string() + " was generated with a different config");
  return c;
}

/// Fills fields that follow from the corpus and the teacher: vocabularies,
/// page size and the alignment geometry.
inline ExperimentSpec resolve_spec(ExperimentSpec s, const Corpus& c) {
  const RenderConfig r = c.render();
  s.teacher.source_vocab = c.source_vocab.size();
  s.teacher.image_h = r.height;
  s.teacher.image_w = r.width;
  s.model.decoder.vocab = c.target_vocab.size();
  for (auto* e : {&s.model.align_encoder, &s.model.image_encoder}) {
    e->image_h = r.height;
    e->image_w = r.width;
  }
  s.model.align_len = s.teacher.seq_len;
  s.model.align_dim = s.teacher.dim;
  s.train.loop.seed = s.seed;
  return s;
}

inline std::unique_ptr<TeacherCache<float>> make_teacher_cache(const ExperimentSpec& s, const fs::path& corpus_dir) {
  if (s.teacher_cache == "none") return std::make_unique<TeacherCache<float>>();
  const fs::path dir = s.teacher_cache.empty() ? corpus_dir / "teacher_cache" : fs::path(s.teacher_cache);
  return std::make_unique<TeacherCache<float>>(dir);
}

// ---------------------------------------------------------------------------
// Provenance

inline std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

/// Sidecar holding everything run-dependent: times, arguments, overrides.
class Provenance {
 public:
  Provenance(std::string command, Json args) : started_(utc_now()), t0_(std::chrono::steady_clock::now()) {
    j_["command"] = std::move(command);
    j_["args"] = std::move(args);
  }
  Json& operator[](const std::string& k) { return j_[k]; }
  void write(const fs::path& dir) {
    j_["started"] = started_;
    j_["finished"] = utc_now();
    j_["seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count();
    j_["compiler"] = __VERSION__;
    write_json_file(dir / "provenance.json", j_);
  }

 private:
  Json j_;
  std::string started_;
  std::chrono::steady_clock::time_point t0_;
};

// ---------------------------------------------------------------------------
// Training

inline void write_loss_curve(const std::vector<StepRecord>& steps, const fs::path& stem) {
  plot::LineChart c{"Training loss", "step", "loss", {{"L", {}, {}}, {"L_align", {}, {}}, {"L_trans", {}, {}}}};
  for (const auto& r : steps) {
    for (auto& s : c.series) s.x.push_back(r.step);
    c.series[0].y.push_back(r.total);
    c.series[1].y.push_back(r.align);
    c.series[2].y.push_back(r.trans);
  }
  plot::write_chart(stem, c);
}

/// Text translator for the decoder warm start, cached beside the corpus by config.
inline fs::path ensure_text_pretrain(const ExperimentSpec& s, const Corpus& c, const fs::path& corpus_dir) {
  TextTranslatorConfig tc;
  tc.source_vocab = c.source_vocab.size();
  tc.max_source = 1;
  for (const auto& d : c.samples) tc.max_source = std::max(tc.max_source, static_cast<int>(d.source_tokens.size()));
  tc.encoder_dim = s.text_pretrain.encoder_dim;
  tc.encoder_layers = s.text_pretrain.encoder_layers;
  tc.encoder_heads = s.text_pretrain.encoder_heads;
  tc.ffn_mult = s.text_pretrain.ffn_mult;
  tc.decoder = s.model.decoder;
  tc.seed = s.seed;
  LoopConfig loop;
  loop.lr = s.text_pretrain.lr;
  loop.warmup = s.text_pretrain.warmup;
  loop.max_steps = s.text_pretrain.steps;
  loop.batch = s.text_pretrain.batch;
  loop.seed = s.seed;
  loop.checkpoint_every = 0;
  loop.validate_every = 0;
  Json key{{"model", to_json(tc)}, {"steps", loop.max_steps}, {"lr", loop.lr}, {"warmup", loop.warmup}, {"batch", loop.batch}};
  Fnv1a h;
  const std::string k = key.dump();
  h.update(k.data(), k.size());
  const fs::path dir = corpus_dir / ("text_pretrain-" + hex64(h.digest()));
  if (!fs::exists(dir / "final.ckpt")) train_text_translator(c, tc, loop, dir);
  return dir / "final.ckpt";
}

struct TrainOutcome {
  ExperimentSpec resolved;
  TrainResult result;
  fs::path corpus_dir;
};

/// Full training run into `out`. A fresh run clears earlier checkpoints and logs there.
inline TrainOutcome run_train(const ExperimentSpec& spec, const fs::path& out, bool resume,
                              const fs::path& corpus_dir_override = {}) {
  const fs::path cdir = corpus_dir_override.empty() ? corpus_path(spec, out) : corpus_dir_override;
  Corpus corpus = ensure_corpus(spec.corpus, cdir);
  ExperimentSpec s = resolve_spec(spec, corpus);
  s.corpus_dir = fs::absolute(cdir).lexically_normal().string();
  if (s.text_pretrain.enabled && s.train.warm_start.empty())
    s.train.warm_start = fs::absolute(ensure_text_pretrain(s, corpus, cdir)).string();
  if (!resume) {
    fs::remove_all(out / "checkpoints");
    fs::remove(out / "train_log.jsonl");
    fs::remove(out / "final.ckpt");
  }
  fs::create_directories(out);
  write_json_file(out / "spec.json", to_json(s));
  Teacher<float> teacher(s.teacher);
  auto cache = make_teacher_cache(s, cdir);
  TrainOutcome o{s, train_student(corpus, teacher, s.model, s.train, out, resume, cache.get()), cdir};
  write_loss_curve(o.result.loop.steps, out / "loss_curve");
  return o;
}

// ---------------------------------------------------------------------------
// Evaluation

inline std::vector<const DocumentSample*> eval_samples(const Corpus& c, const std::string& split, int limit) {
  if (split != "train" && split != "valid" && split != "test") throw ContractError("unknown split " + split);
  auto v = c.split(split);
  if (v.empty()) throw DataError("split " + split + " is empty");
  if (limit > 0 && v.size() > static_cast<std::size_t>(limit)) v.resize(static_cast<std::size_t>(limit));
  return v;
}

inline fs::path hypothesis_path(const fs::path& dir, const std::string& id) { return dir / (id + ".hyp.md"); }

/// Translates the samples with a checkpoint into `<id>.hyp.md` files.
/// Teacher-output checkpoints rebuild their teacher from the stored config.
/// Returns per-sample timing for the provenance sidecar.
inline Json write_predictions(const fs::path& checkpoint, const Corpus& corpus,
                              const std::vector<const DocumentSample*>& samples, const BeamConfig& beam,
                              const fs::path& pred_dir) {
  auto loaded = load_student<float>(checkpoint);
  const auto& model = *loaded.model;
  if (loaded.extra.contains("target_vocab_hash") &&
      loaded.extra.at("target_vocab_hash") != hex64(corpus.target_vocab.hash()))
    throw DataError("checkpoint was trained on a different target vocabulary");
  std::unique_ptr<Teacher<float>> teacher;
  if (model.uses_teacher_output()) {
    teacher = std::make_unique<Teacher<float>>(teacher_config_from_json(loaded.extra.at("teacher")));
    if (hex64(teacher->hash()) != loaded.extra.at("teacher_hash")) throw DataError("rebuilt teacher differs from training");
  }
  fs::create_directories(pred_dir);
  double seconds = 0;
  int truncated = 0;
  for (const auto* s : samples) {
    const TranslationResult r = teacher ? translate_with_teacher(model, *teacher, corpus.target_vocab, s->image,
                                                                 std::optional(s->source_tokens), beam)
                                        : translate(model, corpus.target_vocab, s->image, beam);
    write_text_file(hypothesis_path(pred_dir, s->id), r.markdown);
    seconds += r.seconds;
    truncated += r.truncated;
  }
  return Json{{"samples", samples.size()},
              {"seconds_total", seconds},
              {"seconds_per_page", samples.empty() ? 0.0 : seconds / static_cast<double>(samples.size())},
              {"truncated", truncated}};
}

/// Reads predictions for the samples; missing files are listed in the error.
inline EvalReport evaluate_predictions(const std::vector<const DocumentSample*>& samples, const fs::path& pred_dir,
                                       int complexity_k) {
  std::vector<EvalRow> rows;
  std::vector<std::string> missing;
  for (const auto* s : samples) {
    const fs::path p = hypothesis_path(pred_dir, s->id);
    std::ifstream is(p, std::ios::binary);
    if (!is) {
      missing.push_back(p.filename().string());
      continue;
    }
    std::stringstream ss;
    ss << is.rdbuf();
    rows.push_back({s->id, ss.str(), s->reference_markdown, s->context_length, s->layout_nodes, 0.0, false});
  }
  if (!missing.empty()) {
    std::string msg = std::to_string(missing.size()) + " hypothesis file(s) missing in " + pred_dir.string() + ":";
    for (const auto& m : missing) msg += "\n  " + m;
    throw DataError(msg);
  }
  score_rows(rows);
  auto slices = default_slices(rows, static_cast<std::size_t>(std::max(0, complexity_k)));
  return slice_report(std::move(rows), slices);
}

inline std::string format_scores_row(const std::string& name, const std::optional<Scores>& s) {
  char buf[160];
  if (!s) {
    std::snprintf(buf, sizeof buf, "| %-22s | %8s | %8s | %7s | %6d |\n", name.c_str(), "-", "-", "-", 0);
  } else {
    std::snprintf(buf, sizeof buf, "| %-22s | %8.2f | %8.2f | %7.4f | %6zu |\n", name.c_str(), s->bleu, s->bleu_pt,
                  s->steds, s->count);
  }
  return buf;
}

inline std::string report_table(const EvalReport& r) {
  std::string t = "| slice                  |     BLEU |  BLEU-PT |   STEDS |      n |\n"
                  "|------------------------|----------|----------|---------|--------|\n";
  t += format_scores_row("all", r.corpus);
  for (const auto& [name, s] : r.slices) t += format_scores_row(name, s);
  return t;
}

/// report.json, report.txt and the context-length bar chart with its twin.
inline void write_eval_outputs(const EvalReport& r, const fs::path& dir) {
  write_json_file(dir / "report.json", to_json(r));
  write_text_file(dir / "report.txt", report_table(r));
  plot::BarChart c{"Scores by context length", "context length (words)", "score", {}, {{"BLEU", {}}, {"BLEU-PT", {}}, {"STEDS x100", {}}}};
  for (const auto& [name, s] : r.slices) {
    if (name.rfind("context", 0) != 0) continue;
    c.categories.push_back(name.substr(7));
    const double nan = std::nan("");
    c.groups[0].values.push_back(s ? s->bleu : nan);
    c.groups[1].values.push_back(s ? s->bleu_pt : nan);
    c.groups[2].values.push_back(s ? 100.0 * s->steds : nan);
  }
  plot::write_chart(dir / "context_length", c);
}

/// Translate the eval split with a checkpoint, then score it. Writes under `dir`.
inline EvalReport run_eval(const fs::path& checkpoint, const Corpus& corpus, const EvalSettings& e, const fs::path& dir,
                           Json* timing = nullptr) {
  const auto samples = eval_samples(corpus, e.split, e.limit);
  const Json t = write_predictions(checkpoint, corpus, samples, e.beam, dir / "predictions");
  if (timing) *timing = t;
  EvalReport r = evaluate_predictions(samples, dir / "predictions", e.complexity_k);
  r.provenance = Json{{"checkpoint", checkpoint.filename().string()}, {"split", e.split}, {"beam", to_json(e.beam)},
                      {"corpus_config_hash", hex64([&] {
                         Fnv1a h;
                         const std::string s = to_json(corpus.config).dump();
                         h.update(s.data(), s.size());
                         return h.digest();
                       }())}};
  write_eval_outputs(r, dir);
  return r;
}

// ---------------------------------------------------------------------------
// Ablation and sweeps

struct Variant {
  std::string label;
  std::string slug;
  TrainConfig train;
};

/// Base run plus the five ablations.
inline std::vector<Variant> ablation_variants(const TrainConfig& base) {
  std::vector<Variant> v;
  v.push_back({"Full model", "base", base});
  auto no_align = base;
  no_align.no_align_loss = true;
  no_align.alpha = 0.0;
  v.push_back({"w/o L_align", "no_align_loss", no_align});
  auto no_enc = base;
  no_enc.no_alignment_encoder = true;
  v.push_back({"w/o Alignment Encoder", "no_alignment_encoder", no_enc});
  auto out = base;
  out.use_teacher_output_at_decode = true;
  v.push_back({"w MLLM Output", "teacher_output", out});
  auto no_img = base;
  no_img.mask = {.use_image = false, .use_text = true};
  v.push_back({"w/o MLLM Image Input", "no_image", no_img});
  auto no_txt = base;
  no_txt.mask = {.use_image = true, .use_text = false};
  v.push_back({"w/o MLLM Text Input", "no_text", no_txt});
  return v;
}

/// Alignment-loss variants compared on an otherwise fixed run.
inline std::vector<Variant> loss_variants(const TrainConfig& base) {
  std::vector<Variant> v;
  for (const char* l : {"cosine", "mse", "cross_entropy"}) {
    auto t = base;
    t.align_loss = l;
    t.cosine_flat = false;
    v.push_back({l, l, t});
  }
  auto flat = base;
  flat.align_loss = "cosine";
  flat.cosine_flat = true;
  v.push_back({"cosine (flattened)", "cosine_flat", flat});
  return v;
}

/// Named single-flag ablation for `train --ablation`.
inline TrainConfig apply_ablation(TrainConfig t, const std::string& name) {
  if (name.empty() || name == "base") return t;
  for (auto& v : ablation_variants(t))
    if (v.slug == name) return v.train;
  throw ContractError("unknown ablation '" + name +
                      "'; expected base, no_align_loss, no_alignment_encoder, teacher_output, no_image or no_text");
}

struct VariantRow {
  std::string label;
  std::string slug;
  std::string status = "ok";
  std::string error;
  double alpha = 0;
  std::optional<Scores> scores;
  std::size_t trainable_parameters = 0;
  std::size_t inference_parameters = 0;
  std::string final_hash;
};

inline Json to_json(const VariantRow& r) {
  Json j{{"variant", r.label},
         {"slug", r.slug},
         {"status", r.status},
         {"alpha", r.alpha},
         {"BLEU", r.scores ? Json(r.scores->bleu) : Json(nullptr)},
         {"BLEU_PT", r.scores ? Json(r.scores->bleu_pt) : Json(nullptr)},
         {"STEDS", r.scores ? Json(r.scores->steds) : Json(nullptr)},
         {"trainable_parameters", r.trainable_parameters},
         {"inference_parameters", r.inference_parameters},
         {"final_hash", r.final_hash}};
  if (!r.error.empty()) j["error"] = r.error;
  return j;
}

/// Train and evaluate one variant in its own directory. Failures are recorded, not thrown.
inline VariantRow run_variant(const ExperimentSpec& spec, const Variant& v, const fs::path& dir, const fs::path& corpus_dir,
                              std::ostream& log) {
  VariantRow row;
  row.label = v.label;
  row.slug = v.slug;
  row.alpha = v.train.effective_alpha();
  try {
    ExperimentSpec s = spec;
    s.train = v.train;
    s.train.loop.seed = spec.seed;
    log << "[" << v.slug << "] training\n" << std::flush;
    const auto o = run_train(s, dir, false, corpus_dir);
    if (!o.result.loop.completed) throw DataError("training did not complete");
    std::size_t trainable = 0;
    for (const auto& [g, c] : o.result.parameter_groups) trainable += c;
    row.trainable_parameters = trainable;
    row.inference_parameters = o.result.inference_parameters;
    row.final_hash = hex64(o.result.final_hash);
    log << "[" << v.slug << "] evaluating\n" << std::flush;
    const Corpus corpus = load_corpus(corpus_dir);
    Json timing;
    const auto r = run_eval(o.result.final_checkpoint, corpus, o.resolved.eval, dir / "eval", &timing);
    row.scores = r.corpus;
    Provenance p("eval", Json{{"checkpoint", o.result.final_checkpoint.string()}});
    p["timing"] = timing;
    p.write(dir / "eval");
    write_json_file(dir / "variant.json", to_json(row));
  } catch (const std::exception& e) {
    row.status = "failed";
    row.error = e.what();
    log << "[" << v.slug << "] failed: " << e.what() << "\n" << std::flush;
  }
  return row;
}

inline std::string variant_table(const std::vector<VariantRow>& rows) {
  std::string t = "| variant                | status |     BLEU |  BLEU-PT |   STEDS | trainable | inference |\n"
                  "|------------------------|--------|----------|----------|---------|-----------|-----------|\n";
  for (const auto& r : rows) {
    char buf[256];
    if (r.scores)
      std::snprintf(buf, sizeof buf, "| %-22s | %-6s | %8.2f | %8.2f | %7.4f | %9zu | %9zu |\n", r.label.c_str(),
                    r.status.c_str(), r.scores->bleu, r.scores->bleu_pt, r.scores->steds, r.trainable_parameters,
                    r.inference_parameters);
    else
      std::snprintf(buf, sizeof buf, "| %-22s | %-6s | %8s | %8s | %7s | %9zu | %9zu |\n", r.label.c_str(),
                    r.status.c_str(), "-", "-", "-", r.trainable_parameters, r.inference_parameters);
    t += buf;
  }
  return t;
}

/// Runs the variants under out/<slug>/ and writes `<stem>.json` and `<stem>.txt`.
inline std::vector<VariantRow> run_variants(const ExperimentSpec& spec, const std::vector<Variant>& variants,
                                            const fs::path& out, const std::string& stem, std::ostream& log) {
  const fs::path cdir = corpus_path(spec, out);
  ensure_corpus(spec.corpus, cdir);
  std::vector<VariantRow> rows;
  for (const auto& v : variants) rows.push_back(run_variant(spec, v, out / v.slug, cdir, log));
  Json table = Json::array();
  for (const auto& r : rows) table.push_back(to_json(r));
  write_json_file(out / (stem + ".json"), Json{{"name", spec.name}, {"seed", spec.seed}, {"rows", table}});
  write_text_file(out / (stem + ".txt"), variant_table(rows));
  return rows;
}

inline std::string alpha_slug(double a) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "alpha-%g", a);
  return buf;
}

inline std::vector<VariantRow> run_alpha_sweep(const ExperimentSpec& spec, std::vector<double> values, const fs::path& out,
                                               std::ostream& log) {
  if (values.size() < 2) throw ContractError("an alpha sweep needs at least two values");
  std::set<double> seen;
  for (double a : values) {
    if (a < 0 || !std::isfinite(a)) throw ContractError("alpha values must be finite and non-negative");
    if (!seen.insert(a).second) throw ContractError("alpha values must be distinct");
  }
  std::vector<Variant> variants;
  for (double a : values) {
    auto t = spec.train;
    t.alpha = a;
    char label[32];
    std::snprintf(label, sizeof label, "alpha = %g", a);
    variants.push_back({label, alpha_slug(a), t});
  }
  auto rows = run_variants(spec, variants, out, "alpha_sweep", log);
  plot::LineChart c{"Alpha sweep", "α (alignment loss weight)", "BLEU", {{"BLEU", {}, {}}, {"BLEU-PT", {}, {}}}};
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (auto& s : c.series) s.x.push_back(values[i]);
    c.series[0].y.push_back(rows[i].scores ? rows[i].scores->bleu : std::nan(""));
    c.series[1].y.push_back(rows[i].scores ? rows[i].scores->bleu_pt : std::nan(""));
  }
  plot::write_chart(out / "alpha_sweep_plot", c);
  return rows;
}

// ---------------------------------------------------------------------------
// Representation export

/// Writes a little-endian float32 .npy array.
inline void write_npy(const fs::path& path, const std::vector<std::size_t>& shape, const std::vector<float>& data) {
  std::string dims;
  for (std::size_t i = 0; i < shape.size(); ++i) dims += std::to_string(shape[i]) + (shape.size() == 1 || i + 1 < shape.size() ? "," : "");
  std::string header = "{'descr': '<f4', 'fortran_order': False, 'shape': (" + dims + "), }";
  const std::size_t total = 10 + header.size() + 1;
  header.append((64 - total % 64) % 64, ' ');
  header += '\n';
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write " + path.string());
  os.write("\x93NUMPY\x01\x00", 8);
  const auto len = static_cast<std::uint16_t>(header.size());
  const char l[2] = {static_cast<char>(len & 0xff), static_cast<char>(len >> 8)};
  os.write(l, 2);
  os.write(header.data(), static_cast<std::streamsize>(header.size()));
  os.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(float)));
}

struct RepExport {
  std::size_t count = 0;
  double mean_cosine = 0;
  std::vector<double> per_sample;
};

/// Dumps aligned-encoder and teacher representations for the first n samples of a split.
inline RepExport export_representations(const fs::path& checkpoint, const Corpus& corpus, const std::string& split,
                                        int n, const fs::path& out) {
  auto loaded = load_student<float>(checkpoint);
  const auto& model = *loaded.model;
  if (model.uses_teacher_output()) throw DataError("this checkpoint decodes from teacher output and has no aligned representation");
  const Teacher<float> teacher(teacher_config_from_json(loaded.extra.at("teacher")));
  if (hex64(teacher.hash()) != loaded.extra.at("teacher_hash")) throw DataError("rebuilt teacher differs from training");
  if (model.config().align_len != teacher.config().seq_len || model.config().align_dim != teacher.config().dim)
    throw DataError("teacher output shape does not match the checkpoint");
  const ModalityMask mask = modality_mask_from_json(loaded.extra.at("train").at("mask"));
  auto samples = corpus.split(split);
  if (n < 1 || static_cast<std::size_t>(n) > samples.size())
    throw ContractError("n must lie in [1, " + std::to_string(samples.size()) + "] for split " + split);
  samples.resize(static_cast<std::size_t>(n));
  std::vector<float> ha, hm;
  RepExport res;
  std::string ids;
  for (const auto* s : samples) {
    const auto a = model.aligned(s->image);
    const auto m = teacher.encode_mix(s->image, s->source_tokens, mask);
    ha.insert(ha.end(), a.storage().begin(), a.storage().end());
    hm.insert(hm.end(), m.storage().begin(), m.storage().end());
    res.per_sample.push_back(mean_position_cosine(a, m));
    ids += s->id + "\n";
  }
  const std::vector<std::size_t> shape{samples.size(), static_cast<std::size_t>(teacher.config().seq_len),
                                       static_cast<std::size_t>(teacher.config().dim)};
  write_npy(out / "h_align.npy", shape, ha);
  write_npy(out / "h_mllm.npy", shape, hm);
  write_text_file(out / "ids.txt", ids);
  res.count = samples.size();
  for (double c : res.per_sample) res.mean_cosine += c;
  res.mean_cosine /= static_cast<double>(res.count);
  write_json_file(out / "reps.json", Json{{"count", res.count},
                                          {"shape", shape},
                                          {"split", split},
                                          {"mean_cosine", res.mean_cosine},
                                          {"per_sample_cosine", res.per_sample}});
  return res;
}

}  // namespace dimt
