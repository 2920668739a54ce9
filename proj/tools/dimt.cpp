// dimt: document image translation experiments from the command line.
//
//   dimt [--config spec.json] [--seed N] [--out DIR] [--set key.path=value]... <command> [options]
//
// Exit codes: 0 success, 1 usage, 2 data error, 3 numerical failure.

#include <CLI11.hpp>

#include <algorithm>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "dimt/dimt.hpp"

using namespace dimt;

namespace {

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::vector<std::string> sets;
};

Json global_args(const Globals& g) {
  Json j{{"config", g.config}, {"out", g.out}, {"set", g.sets}};
  j["seed"] = g.seed ? Json(*g.seed) : Json(nullptr);
  return j;
}

Json read_config(const Globals& g) {
  if (!fs::exists(g.config)) throw ContractError("config file not found: " + g.config);
  Json j = read_json_file(g.config);
  for (const auto& s : g.sets) apply_override(j, s);
  return j;
}

/// Spec from --config with --set overrides, then --seed on top.
ExperimentSpec load_spec(const Globals& g) {
  Json j = to_json(ExperimentSpec{});
  if (!g.config.empty()) {
    j = read_config(g);
  } else {
    for (const auto& s : g.sets) apply_override(j, s);
  }
  ExperimentSpec spec = experiment_spec_from_json(j);
  if (g.seed) spec.seed = *g.seed;
  spec.train.loop.seed = spec.seed;
  return spec;
}

fs::path require_out(const Globals& g) {
  if (g.out.empty()) throw ContractError("--out is required for this command");
  return g.out;
}

int cmd_gen_corpus(const Globals& g) {
  GenConfig cfg;
  std::string dir = g.out;
  if (!g.config.empty()) {
    const Json j = read_config(g);
    if (j.contains("corpus")) {
      cfg = gen_config_from_json(j.at("corpus"));
      if (dir.empty() && j.contains("corpus_dir")) dir = j.at("corpus_dir").get<std::string>();
    } else {
      cfg = gen_config_from_json(j);
    }
  } else if (!g.sets.empty()) {
    Json j = to_json(cfg);
    for (const auto& s : g.sets) apply_override(j, s);
    cfg = gen_config_from_json(j);
  }
  if (g.seed) cfg.seed = *g.seed;
  if (dir.empty()) throw ContractError("gen-corpus needs --out or a spec with corpus_dir");
  Provenance prov("gen-corpus", global_args(g));
  const auto m = generate_corpus(cfg, dir);
  const Corpus c = load_corpus(dir, false);
  std::cout << "corpus " << dir << ": " << m.ids.size() << " documents (train " << m.ids_in("train").size()
            << ", valid " << m.ids_in("valid").size() << ", test " << m.ids_in("test").size() << "), source vocab "
            << c.source_vocab.size() << ", target vocab " << c.target_vocab.size() << ", seed " << cfg.seed << "\n";
  prov.write(dir);
  return 0;
}

int cmd_train(const Globals& g, bool resume, const std::string& ablation, int stop_after) {
  ExperimentSpec spec = load_spec(g);
  spec.train = apply_ablation(spec.train, ablation);
  spec.train.loop.stop_after = stop_after;
  const fs::path out = require_out(g);
  Provenance prov("train", global_args(g));
  prov["ablation"] = ablation;
  prov["resume"] = resume;
  const auto o = run_train(spec, out, resume);
  const auto& r = o.result;
  for (const auto& v : r.loop.validations) std::cout << "valid " << v.dump() << "\n";
  std::cout << "steps " << r.loop.last_step << (r.loop.completed ? " (complete)" : " (stopped early)") << "\n";
  for (const auto& [grp, n] : r.parameter_groups) std::cout << "  " << grp << ": " << n << " parameters\n";
  std::cout << "inference parameters " << r.inference_parameters << "\n";
  std::cout << "final hash " << hex64(r.final_hash) << "\n";
  if (!r.final_checkpoint.empty()) std::cout << "checkpoint " << r.final_checkpoint.string() << "\n";
  prov["final_hash"] = hex64(r.final_hash);
  prov.write(out);
  return 0;
}

int cmd_translate(const Globals& g, const std::string& checkpoint, const std::string& corpus_dir,
                  const std::vector<std::string>& images, const std::vector<std::string>& sources,
                  const BeamConfig& beam, const std::string& json_path) {
  if (images.empty()) throw ContractError("translate needs at least one --image");
  const Corpus corpus = load_corpus(corpus_dir, false);
  auto loaded = load_student<float>(checkpoint);
  const auto& model = *loaded.model;
  std::unique_ptr<Teacher<float>> teacher;
  if (model.uses_teacher_output()) {
    if (sources.size() != images.size())
      throw ContractError("this checkpoint decodes from teacher output; pass one --source per --image");
    teacher = std::make_unique<Teacher<float>>(teacher_config_from_json(loaded.extra.at("teacher")));
  }
  Json results = Json::array();
  const bool to_dir = images.size() > 1 && !g.out.empty();
  for (std::size_t i = 0; i < images.size(); ++i) {
    const RasterImage img = read_ppm(images[i]);
    TranslationResult r;
    if (teacher) {
      std::ifstream is(sources[i]);
      if (!is) throw DataError("cannot open " + sources[i]);
      std::stringstream ss;
      ss << is.rdbuf();
      r = translate_with_teacher(model, *teacher, corpus.target_vocab, img, std::optional(corpus.source_vocab.encode(ss.str())), beam);
    } else {
      r = translate(model, corpus.target_vocab, img, beam);
    }
    if (g.out.empty()) {
      std::cout << r.markdown << "\n";
    } else if (to_dir) {
      write_text_file(fs::path(g.out) / (fs::path(images[i]).stem().string() + ".hyp.md"), r.markdown);
    } else {
      write_text_file(g.out, r.markdown);
    }
    results.push_back({{"image", images[i]}, {"markdown", r.markdown}, {"tokens", r.tokens},
                       {"log_prob", r.log_prob}, {"truncated", r.truncated}, {"seconds", r.seconds}});
  }
  if (!json_path.empty()) write_json_file(json_path, Json{{"checkpoint", checkpoint}, {"results", results}});
  return 0;
}

int cmd_evaluate(const Globals& g, std::string corpus_dir, const std::string& predictions, const std::string& checkpoint,
                 bool translate_first, std::optional<std::string> split, std::optional<int> limit,
                 std::optional<int> beam_width, std::optional<int> complexity_k) {
  EvalSettings e;
  if (!g.config.empty()) {
    const ExperimentSpec spec = load_spec(g);
    e = spec.eval;
    if (corpus_dir.empty()) corpus_dir = spec.corpus_dir;
  }
  if (split) e.split = *split;
  if (limit) e.limit = *limit;
  if (beam_width) e.beam.width = *beam_width;
  if (complexity_k) e.complexity_k = *complexity_k;
  if (corpus_dir.empty()) throw ContractError("evaluate needs --corpus");
  const fs::path out = require_out(g);
  Provenance prov("evaluate", global_args(g));
  const Corpus corpus = load_corpus(corpus_dir);
  EvalReport r;
  if (translate_first) {
    if (checkpoint.empty()) throw ContractError("--translate-first needs --checkpoint");
    Json timing;
    r = run_eval(checkpoint, corpus, e, out, &timing);
    prov["timing"] = timing;
  } else {
    if (predictions.empty()) throw ContractError("evaluate needs --predictions or --translate-first");
    const auto samples = eval_samples(corpus, e.split, e.limit);
    r = evaluate_predictions(samples, predictions, e.complexity_k);
    r.provenance = Json{{"split", e.split}, {"predictions", fs::path(predictions).filename().string()}};
    write_eval_outputs(r, out);
  }
  std::cout << report_table(r);
  prov.write(out);
  return 0;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

int cmd_ablate(const Globals& g, const std::string& axis, const std::string& only) {
  const ExperimentSpec spec = load_spec(g);
  const fs::path out = require_out(g);
  std::vector<Variant> variants;
  if (axis == "model") variants = ablation_variants(spec.train);
  else if (axis == "loss") variants = loss_variants(spec.train);
  else throw ContractError("--axis must be model or loss");
  if (!only.empty()) {
    const auto keep = split_list(only);
    std::vector<Variant> picked;
    for (const auto& v : variants)
      if (std::find(keep.begin(), keep.end(), v.slug) != keep.end()) picked.push_back(v);
    if (picked.size() != keep.size()) throw ContractError("--only names an unknown variant");
    variants = picked;
  }
  Provenance prov("ablate", global_args(g));
  const auto rows = run_variants(spec, variants, out, axis == "model" ? "ablation" : "loss_variants", std::cerr);
  std::cout << variant_table(rows);
  prov.write(out);
  for (const auto& r : rows)
    if (r.status != "ok") return static_cast<int>(ExitCode::data);
  return 0;
}

int cmd_sweep_alpha(const Globals& g, std::vector<double> values) {
  const ExperimentSpec spec = load_spec(g);
  if (values.empty()) values = spec.alphas;
  const fs::path out = require_out(g);
  Provenance prov("sweep-alpha", global_args(g));
  const auto rows = run_alpha_sweep(spec, values, out, std::cerr);
  std::cout << variant_table(rows);
  prov.write(out);
  for (const auto& r : rows)
    if (r.status != "ok") return static_cast<int>(ExitCode::data);
  return 0;
}

int cmd_export_reps(const Globals& g, const std::string& checkpoint, const std::string& corpus_dir,
                    const std::string& split, int n) {
  const fs::path out = require_out(g);
  Provenance prov("export-reps", global_args(g));
  const Corpus corpus = load_corpus(corpus_dir);
  const auto r = export_representations(checkpoint, corpus, split, n, out);
  std::cout << "exported " << r.count << " samples to " << out.string() << "\n";
  std::cout << "mean per-position cosine " << r.mean_cosine << "\n";
  prov.write(out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Document image translation with single-to-mix alignment"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config, "Experiment spec (JSON)");
  app.add_option("--seed", g.seed, "Seed override");
  app.add_option("--out", g.out, "Output directory or file");
  app.add_option("--set", g.sets, "Override a spec field: key.path=value (repeatable)");

  auto* gen = app.add_subcommand("gen-corpus", "Generate a synthetic document corpus");

  auto* train = app.add_subcommand("train", "Train the student against the frozen teacher");
  bool resume = false;
  std::string ablation;
  int stop_after = 0;
  train->add_flag("--resume", resume, "Continue from the latest checkpoint in --out");
  train->add_option("--ablation", ablation,
                    "base, no_align_loss, no_alignment_encoder, teacher_output, no_image or no_text");
  train->add_option("--stop-after", stop_after, "End this invocation at the given step")->check(CLI::NonNegativeNumber);

  auto* tr = app.add_subcommand("translate", "Translate document images");
  std::string checkpoint, corpus_dir, json_path;
  std::vector<std::string> images, sources;
  BeamConfig beam;
  tr->add_option("--checkpoint", checkpoint, "Student checkpoint")->required();
  tr->add_option("--corpus", corpus_dir, "Corpus directory providing the vocabularies")->required();
  tr->add_option("--image", images, "Input PPM image (repeatable)")->required();
  tr->add_option("--source", sources, "Source text per image for teacher-output checkpoints");
  tr->add_option("--beam", beam.width, "Beam width")->check(CLI::PositiveNumber);
  tr->add_option("--max-length", beam.max_length, "Maximum output tokens")->check(CLI::PositiveNumber);
  tr->add_option("--length-exponent", beam.length_exponent, "Length normalization exponent");
  tr->add_option("--json", json_path, "Also write results with scores and timing");

  auto* ev = app.add_subcommand("evaluate", "Score predictions against corpus references");
  std::string predictions;
  bool translate_first = false;
  std::optional<std::string> split;
  std::optional<int> limit, beam_width, complexity_k;
  ev->add_option("--corpus", corpus_dir, "Corpus directory");
  ev->add_option("--predictions", predictions, "Directory of <id>.hyp.md files");
  ev->add_option("--checkpoint", checkpoint, "Checkpoint for --translate-first");
  ev->add_flag("--translate-first", translate_first, "Translate the split before scoring");
  ev->add_option("--split", split, "train, valid or test");
  ev->add_option("--limit", limit, "Evaluate only the first N samples");
  ev->add_option("--beam", beam_width, "Beam width for --translate-first");
  ev->add_option("--complexity-k", complexity_k, "Size of the simple/complex layout slices");

  auto* ab = app.add_subcommand("ablate", "Run the ablation table");
  std::string axis = "model", only;
  ab->add_option("--axis", axis, "model (six-row table) or loss (alignment-loss variants)");
  ab->add_option("--only", only, "Comma-separated variant slugs");

  auto* sw = app.add_subcommand("sweep-alpha", "Train and evaluate one run per alpha");
  std::vector<double> values;
  sw->add_option("--values", values, "Alpha values")->delimiter(',');

  auto* ex = app.add_subcommand("export-reps", "Dump aligned and teacher representations");
  std::string ex_split = "test";
  int n = 100;
  ex->add_option("--checkpoint", checkpoint, "Student checkpoint")->required();
  ex->add_option("--corpus", corpus_dir, "Corpus directory")->required();
  ex->add_option("--split", ex_split, "Split to export from");
  ex->add_option("--n", n, "Number of samples");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(ExitCode::usage);
  }

  try {
    if (*gen) return cmd_gen_corpus(g);
    if (*train) return cmd_train(g, resume, ablation, stop_after);
    if (*tr) return cmd_translate(g, checkpoint, corpus_dir, images, sources, beam, json_path);
    if (*ev)
      return cmd_evaluate(g, corpus_dir, predictions, checkpoint, translate_first, split, limit, beam_width,
                          complexity_k);
    if (*ab) return cmd_ablate(g, axis, only);
    if (*sw) return cmd_sweep_alpha(g, values);
    if (*ex) return cmd_export_reps(g, checkpoint, corpus_dir, ex_split, n);
  } catch (const ContractError& e) {
    std::cerr << "error: " << e.what() << "\nRun with --help for more information.\n";
    return static_cast<int>(ExitCode::usage);
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return static_cast<int>(ExitCode::numerical);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(ExitCode::data);
  }
  return static_cast<int>(ExitCode::usage);
}
