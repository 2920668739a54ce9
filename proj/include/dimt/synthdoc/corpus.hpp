#pragma once

// Deterministic synthetic bilingual corpora.
//
// Directory layout:
//   manifest.jsonl          header record, then one record per sample
//   lexicon.tsv             source word <TAB> target word
//   source_vocab.txt        one token per line
//   target_vocab.txt
//   images/<id>.ppm         rendered page
//   text/<id>.src.md        source markdown
//   text/<id>.ref.md        reference translation

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "dimt/core/errors.hpp"
#include "dimt/core/hash.hpp"
#include "dimt/core/jsonio.hpp"
#include "dimt/core/raster.hpp"
#include "dimt/metrics/structure.hpp"
#include "dimt/synthdoc/lexicon.hpp"
#include "dimt/synthdoc/render.hpp"
#include "dimt/text/vocab.hpp"

namespace dimt {

struct LayoutMix {
  double heading = 0.2;
  double paragraph = 0.4;
  double list = 0.2;
  double table = 0.1;
  double formula = 0.1;
  double inline_formula = 0.15;  // chance of a formula span after each paragraph word
};

struct GenConfig {
  std::uint64_t seed = 7;
  int samples = 100;
  double train = 0.8;
  double valid = 0.1;
  double test = 0.1;
  int vocab_size = 64;
  std::uint64_t lexicon_seed = 1;
  int min_words = 20;
  int max_words = 60;
  LayoutMix mix;
  RenderConfig render;
  std::string preset = "clean";  // "noisy" turns on font-size jitter

  static constexpr int kMinVocab = 8;
  static constexpr int kMaxAttempts = 16;

  void validate() const {
    if (samples < 1) throw ContractError("sample count must be at least 1");
    if (train < 0 || valid < 0 || test < 0 || std::abs(train + valid + test - 1.0) > 1e-9)
      throw ContractError("split ratios must be non-negative and sum to 1");
    if (vocab_size < kMinVocab)
      throw ContractError("vocabulary too small: need at least " + std::to_string(kMinVocab) + " words");
    if (vocab_size > Lexicon::kCapacity)
      throw ContractError("vocabulary too large: at most " + std::to_string(Lexicon::kCapacity) + " words");
    if (min_words < 1 || max_words < min_words) throw ContractError("need 1 <= min_words <= max_words");
    const double w = mix.heading + mix.paragraph + mix.list + mix.table + mix.formula;
    if (mix.paragraph <= 0 || w <= 0) throw ContractError("layout mix needs a positive paragraph weight");
    if (preset != "clean" && preset != "noisy") throw ContractError("preset must be clean or noisy");
  }

  /// Rendering settings after applying the preset.
  [[nodiscard]] RenderConfig effective_render() const {
    RenderConfig r = render;
    if (preset == "noisy" && r.jitter == 0) r.jitter = 0.15;
    r.jitter_seed = r.jitter_seed ? r.jitter_seed : seed;
    return r;
  }
};

inline Json to_json(const RenderConfig& r) {
  return Json{{"height", r.height},         {"width", r.width},          {"margin", r.margin},
              {"body_scale", r.body_scale}, {"line_gap", r.line_gap},    {"word_space", r.word_space},
              {"block_gap", r.block_gap},   {"indent", r.indent},        {"jitter", r.jitter},
              {"jitter_seed", r.jitter_seed}};
}

inline RenderConfig render_config_from_json(const Json& j) {
  check_keys(j, {"height", "width", "margin", "body_scale", "line_gap", "word_space", "block_gap", "indent", "jitter",
                 "jitter_seed"},
             "render");
  RenderConfig r;
  read_field(j, "height", r.height);
  read_field(j, "width", r.width);
  read_field(j, "margin", r.margin);
  read_field(j, "body_scale", r.body_scale);
  read_field(j, "line_gap", r.line_gap);
  read_field(j, "word_space", r.word_space);
  read_field(j, "block_gap", r.block_gap);
  read_field(j, "indent", r.indent);
  read_field(j, "jitter", r.jitter);
  read_field(j, "jitter_seed", r.jitter_seed);
  return r;
}

inline Json to_json(const GenConfig& c) {
  return Json{{"seed", c.seed},
              {"samples", c.samples},
              {"split", {{"train", c.train}, {"valid", c.valid}, {"test", c.test}}},
              {"vocab_size", c.vocab_size},
              {"lexicon_seed", c.lexicon_seed},
              {"min_words", c.min_words},
              {"max_words", c.max_words},
              {"layout_mix",
               {{"heading", c.mix.heading},
                {"paragraph", c.mix.paragraph},
                {"list", c.mix.list},
                {"table", c.mix.table},
                {"formula", c.mix.formula},
                {"inline_formula", c.mix.inline_formula}}},
              {"render", to_json(c.render)},
              {"preset", c.preset}};
}

inline GenConfig gen_config_from_json(const Json& j) {
  check_keys(j, {"seed", "samples", "split", "vocab_size", "lexicon_seed", "min_words", "max_words", "layout_mix",
                 "render", "preset"},
             "corpus config");
  GenConfig c;
  read_field(j, "seed", c.seed);
  read_field(j, "samples", c.samples);
  if (j.contains("split")) {
    const auto& s = j.at("split");
    check_keys(s, {"train", "valid", "test"}, "split");
    read_field(s, "train", c.train);
    read_field(s, "valid", c.valid);
    read_field(s, "test", c.test);
  }
  read_field(j, "vocab_size", c.vocab_size);
  read_field(j, "lexicon_seed", c.lexicon_seed);
  read_field(j, "min_words", c.min_words);
  read_field(j, "max_words", c.max_words);
  if (j.contains("layout_mix")) {
    const auto& m = j.at("layout_mix");
    check_keys(m, {"heading", "paragraph", "list", "table", "formula", "inline_formula"}, "layout_mix");
    read_field(m, "heading", c.mix.heading);
    read_field(m, "paragraph", c.mix.paragraph);
    read_field(m, "list", c.mix.list);
    read_field(m, "table", c.mix.table);
    read_field(m, "formula", c.mix.formula);
    read_field(m, "inline_formula", c.mix.inline_formula);
  }
  if (j.contains("render")) c.render = render_config_from_json(j.at("render"));
  read_field(j, "preset", c.preset);
  return c;
}

/// Source documents with an exact word budget.
class DocumentGenerator {
 public:
  DocumentGenerator(const GenConfig& cfg, const Lexicon& lexicon) : cfg_(cfg), words_(lexicon.source_words()) {}

  std::string operator()(std::mt19937_64& rng) const {
    const int budget = uniform(rng, cfg_.min_words, cfg_.max_words);
    int remaining = budget;
    int formulas = 0;
    std::vector<std::string> blocks;
    const std::vector<double> weights{cfg_.mix.heading, cfg_.mix.paragraph, cfg_.mix.list, cfg_.mix.table,
                                      cfg_.mix.formula};
    std::discrete_distribution<int> pick(weights.begin(), weights.end());
    while (remaining > 0) {
      int kind = pick(rng);
      if (kind == 3 && remaining < 4) kind = 1;
      if (kind == 4 && (formulas >= 2 || (!blocks.empty() && blocks.back().rfind("$$", 0) == 0))) kind = 1;
      switch (kind) {
        case 0: blocks.push_back(heading(rng, remaining)); break;
        case 2: blocks.push_back(list(rng, remaining)); break;
        case 3: blocks.push_back(table(rng, remaining)); break;
        case 4:
          blocks.push_back("$$" + expression(rng, 5) + "$$");
          ++formulas;
          break;
        default: blocks.push_back(paragraph(rng, remaining)); break;
      }
    }
    std::string out;
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      if (i) out += "\n\n";
      out += blocks[i];
    }
    return out;
  }

 private:
  static int uniform(std::mt19937_64& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

  const std::string& word(std::mt19937_64& rng) const {
    return words_[static_cast<std::size_t>(uniform(rng, 0, static_cast<int>(words_.size()) - 1))];
  }

  std::string words(std::mt19937_64& rng, int n) const {
    std::string s;
    for (int i = 0; i < n; ++i) {
      if (i) s += ' ';
      s += word(rng);
    }
    return s;
  }

  static std::string expression(std::mt19937_64& rng, int max_len) {
    static const char operands[] = {'x', 'y', 'z', '1', '2', '3'};
    static const char ops[] = {'+', '='};
    const int terms = uniform(rng, 2, (max_len + 1) / 2);
    std::string s;
    for (int i = 0; i < terms; ++i) {
      if (i) s += ops[uniform(rng, 0, 1)];
      s += operands[uniform(rng, 0, 5)];
    }
    return s;
  }

  std::string heading(std::mt19937_64& rng, int& remaining) const {
    const int level = uniform(rng, 1, 3);
    const int n = std::min(remaining, uniform(rng, 1, 3));
    remaining -= n;
    return std::string(static_cast<std::size_t>(level), '#') + " " + words(rng, n);
  }

  std::string paragraph(std::mt19937_64& rng, int& remaining) const {
    const int n = std::min(remaining, uniform(rng, 2, 8));
    remaining -= n;
    std::bernoulli_distribution formula(cfg_.mix.inline_formula);
    std::string s;
    for (int i = 0; i < n; ++i) {
      if (i) s += ' ';
      s += word(rng);
      if (i + 1 < n && formula(rng)) s += " $" + expression(rng, 3) + "$";
    }
    return s;
  }

  std::string list(std::mt19937_64& rng, int& remaining) const {
    const int items = uniform(rng, 2, 3);
    std::string s;
    for (int i = 0; i < items && remaining > 0; ++i) {
      const int n = std::min(remaining, uniform(rng, 1, 3));
      remaining -= n;
      if (i) s += '\n';
      s += "- " + words(rng, n);
    }
    return s;
  }

  std::string table(std::mt19937_64& rng, int& remaining) const {
    int cols = uniform(rng, 2, 3);
    int rows = uniform(rng, 2, 3);
    while (cols * rows > remaining && rows > 2) --rows;
    while (cols * rows > remaining && cols > 2) --cols;
    remaining -= cols * rows;
    std::string s;
    for (int r = 0; r < rows; ++r) {
      if (r) s += '\n';
      s += '|';
      for (int c = 0; c < cols; ++c) s += " " + word(rng) + " |";
      if (r == 0) {
        s += "\n|";
        for (int c = 0; c < cols; ++c) s += " --- |";
      }
    }
    return s;
  }

  const GenConfig& cfg_;
  const std::vector<std::string>& words_;
};

struct DocumentSample {
  std::string id;
  std::string split;
  RasterImage image;
  std::string source_markdown;
  std::string reference_markdown;
  std::vector<int> source_tokens;
  int context_length = 0;
  int layout_nodes = 0;
};

struct CorpusManifest {
  std::uint64_t seed = 0;
  std::vector<std::string> ids;
  std::vector<std::string> splits;  // parallel to ids
  Json config;
  [[nodiscard]] std::vector<std::string> ids_in(const std::string& split) const {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < ids.size(); ++i)
      if (splits[i] == split) out.push_back(ids[i]);
    return out;
  }
};

inline std::string sample_id(int index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "doc-%05d", index);
  return buf;
}

/// Split sizes: rounded train and valid counts, remainder to test.
inline std::array<int, 3> split_counts(const GenConfig& c) {
  const int n = c.samples;
  int tr = static_cast<int>(std::lround(n * c.train));
  int va = static_cast<int>(std::lround(n * c.valid));
  tr = std::min(tr, n);
  va = std::min(va, n - tr);
  return {tr, va, n - tr - va};
}

inline Vocabulary source_vocabulary(const Lexicon& lx) { return Vocabulary::build(lx.source_words()); }
inline Vocabulary target_vocabulary(const Lexicon& lx) { return Vocabulary::build(lx.target_words()); }

/// Per-sample stream keyed by (seed, index): serial and parallel generation agree.
inline std::mt19937_64 sample_rng(std::uint64_t seed, int index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index)};
  return std::mt19937_64(seq);
}

/// Source markdown and its page, retrying on overflow with the same stream.
inline std::pair<std::string, RasterImage> make_document(const GenConfig& cfg, const Lexicon& lx, int index) {
  auto rng = sample_rng(cfg.seed, index);
  DocumentGenerator gen(cfg, lx);
  const RenderConfig rc = cfg.effective_render();
  for (int attempt = 0; attempt < GenConfig::kMaxAttempts; ++attempt) {
    std::string md = gen(rng);
    try {
      RasterImage img = render_document(md, rc);
      return {std::move(md), std::move(img)};
    } catch (const RenderOverflow&) {
    }
  }
  throw DataError("documents keep overflowing the page; lower max_words or enlarge the page");
}

inline CorpusManifest generate_corpus(const GenConfig& cfg, const std::filesystem::path& dir) {
  cfg.validate();
  namespace fs = std::filesystem;
  fs::create_directories(dir / "images");
  fs::create_directories(dir / "text");
  const Lexicon lx = Lexicon::generate(cfg.lexicon_seed, cfg.vocab_size);
  const Vocabulary sv = source_vocabulary(lx), tv = target_vocabulary(lx);
  lx.save(dir / "lexicon.tsv");
  sv.save(dir / "source_vocab.txt");
  tv.save(dir / "target_vocab.txt");

  CorpusManifest m;
  m.seed = cfg.seed;
  m.config = to_json(cfg);
  const auto counts = split_counts(cfg);
  std::ofstream manifest(dir / "manifest.jsonl");
  if (!manifest) throw DataError("cannot write manifest in " + dir.string());
  Json header{{"type", "header"},
              {"format", 1},
              {"seed", cfg.seed},
              {"config", m.config},
              {"counts", {{"train", counts[0]}, {"valid", counts[1]}, {"test", counts[2]}}},
              {"lexicon_hash", hex64(lx.hash())},
              {"source_vocab_hash", hex64(sv.hash())},
              {"target_vocab_hash", hex64(tv.hash())}};
  manifest << header.dump() << '\n';
  for (int i = 0; i < cfg.samples; ++i) {
    const std::string id = sample_id(i);
    const std::string split = i < counts[0] ? "train" : (i < counts[0] + counts[1] ? "valid" : "test");
    auto [src, img] = make_document(cfg, lx, i);
    const std::string ref = translate_source(src, lx);
    write_ppm(img, dir / "images" / (id + ".ppm"));
    write_text_file(dir / "text" / (id + ".src.md"), src);
    write_text_file(dir / "text" / (id + ".ref.md"), ref);
    Json rec{{"type", "sample"},
             {"id", id},
             {"split", split},
             {"context_length", measure_context_length(src)},
             {"layout_nodes", measure_layout_complexity(src)},
             {"source_tokens", sv.encode(src).size()},
             {"image", "images/" + id + ".ppm"},
             {"source", "text/" + id + ".src.md"},
             {"reference", "text/" + id + ".ref.md"}};
    manifest << rec.dump() << '\n';
    m.ids.push_back(id);
    m.splits.push_back(split);
  }
  return m;
}

struct Corpus {
  std::filesystem::path dir;
  GenConfig config;
  Lexicon lexicon;
  Vocabulary source_vocab;
  Vocabulary target_vocab;
  std::vector<DocumentSample> samples;

  [[nodiscard]] std::vector<const DocumentSample*> split(const std::string& name) const {
    std::vector<const DocumentSample*> out;
    for (const auto& s : samples)
      if (s.split == name) out.push_back(&s);
    return out;
  }
  [[nodiscard]] const DocumentSample* find(const std::string& id) const {
    for (const auto& s : samples)
      if (s.id == id) return &s;
    return nullptr;
  }
  [[nodiscard]] RenderConfig render() const { return config.effective_render(); }
};

/// Load and validate a corpus. Stored metadata must match recomputation.
inline Corpus load_corpus(const std::filesystem::path& dir, bool load_images = true) {
  namespace fs = std::filesystem;
  const fs::path mpath = dir / "manifest.jsonl";
  std::ifstream is(mpath);
  if (!is) throw DataError("missing corpus manifest: " + mpath.string());
  Corpus c;
  c.dir = dir;
  c.lexicon = Lexicon::load(dir / "lexicon.tsv");
  c.source_vocab = Vocabulary::load(dir / "source_vocab.txt");
  c.target_vocab = Vocabulary::load(dir / "target_vocab.txt");
  std::string line;
  bool have_header = false;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    Json rec;
    try {
      rec = Json::parse(line);
    } catch (const Json::exception& e) {
      throw DataError("malformed manifest line: " + std::string(e.what()));
    }
    const std::string type = rec.value("type", "");
    if (type == "header") {
      c.config = gen_config_from_json(rec.at("config"));
      have_header = true;
      continue;
    }
    if (type != "sample") throw DataError("unknown manifest record type: " + type);
    DocumentSample s;
    s.id = rec.at("id").get<std::string>();
    s.split = rec.at("split").get<std::string>();
    s.source_markdown = read_text_file(dir / rec.at("source").get<std::string>());
    s.reference_markdown = read_text_file(dir / rec.at("reference").get<std::string>());
    if (load_images) s.image = read_ppm(dir / rec.at("image").get<std::string>());
    else if (!fs::exists(dir / rec.at("image").get<std::string>())) throw DataError("missing image for " + s.id);
    s.context_length = rec.at("context_length").get<int>();
    s.layout_nodes = rec.at("layout_nodes").get<int>();
    if (s.context_length != measure_context_length(s.source_markdown) ||
        s.layout_nodes != measure_layout_complexity(s.source_markdown))
      throw DataError("stored metadata disagrees with the text of " + s.id);
    s.source_tokens = c.source_vocab.encode(s.source_markdown);
    c.samples.push_back(std::move(s));
  }
  if (!have_header) throw DataError("manifest has no header record");
  return c;
}

}  // namespace dimt
