#pragma once

// Frozen mix-modality encoder used as the alignment target.
//
// Internal input, one row per token:
//   [system prompt][image marker][image patches | image placeholder]
//   [user prompt][source tokens | text placeholder]
// The transformer output is cut or right-padded with a fixed pad row to
// exactly (seq_len x dim).
//
// Teacher file: magic "DIMTTCH1", u32 version, JSON header (config and
// prompt template), parameter block.

#include <atomic>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "dimt/core/errors.hpp"
#include "dimt/core/jsonio.hpp"
#include "dimt/core/log.hpp"
#include "dimt/core/params.hpp"
#include "dimt/core/raster.hpp"
#include "dimt/nn/layers.hpp"

namespace dimt {

struct ModalityMask {
  bool use_image = true;
  bool use_text = true;

  void validate() const {
    if (!use_image && !use_text) throw ContractError("modality mask must keep the image or the text");
  }
  [[nodiscard]] std::string name() const {
    return use_image && use_text ? "image+text" : (use_image ? "image" : "text");
  }
  friend bool operator==(const ModalityMask&, const ModalityMask&) = default;
};

struct TeacherConfig {
  int seq_len = 256;  // output rows
  int dim = 128;      // output width
  int depth = 16;
  int heads = 4;
  int ffn_mult = 4;
  int patch_h = 8;
  int patch_w = 8;
  int image_h = 64;
  int image_w = 48;
  int source_vocab = 0;  // ids below this are source tokens
  std::uint64_t seed = 1;
  std::string positions = "full";  // "full" or "text_only"
  double token_std = 1.0;          // token and patch embedding scale

  void validate() const {
    if (seq_len < 1 || dim < 1 || depth < 1) throw ContractError("teacher dimensions must be positive");
    if (heads < 1 || dim % heads != 0) throw ContractError("teacher width must be divisible by heads");
    if (source_vocab < 1) throw ContractError("teacher needs the source vocabulary size");
    if (image_h % patch_h != 0 || image_w % patch_w != 0)
      throw ContractError("teacher image size must be a multiple of the patch size");
    if (positions != "full" && positions != "text_only") throw ContractError("positions must be full or text_only");
  }
  [[nodiscard]] int patches() const { return (image_h / patch_h) * (image_w / patch_w); }
};

inline Json to_json(const TeacherConfig& c) {
  return Json{{"seq_len", c.seq_len},       {"dim", c.dim},         {"depth", c.depth},
              {"heads", c.heads},           {"ffn_mult", c.ffn_mult}, {"patch_h", c.patch_h},
              {"patch_w", c.patch_w},       {"image_h", c.image_h}, {"image_w", c.image_w},
              {"source_vocab", c.source_vocab}, {"seed", c.seed},   {"positions", c.positions},
              {"token_std", c.token_std}};
}

inline TeacherConfig teacher_config_from_json(const Json& j) {
  check_keys(j, {"seq_len", "dim", "depth", "heads", "ffn_mult", "patch_h", "patch_w", "image_h", "image_w",
                 "source_vocab", "seed", "positions", "token_std"},
             "teacher config");
  TeacherConfig c;
  read_field(j, "seq_len", c.seq_len);
  read_field(j, "dim", c.dim);
  read_field(j, "depth", c.depth);
  read_field(j, "heads", c.heads);
  read_field(j, "ffn_mult", c.ffn_mult);
  read_field(j, "patch_h", c.patch_h);
  read_field(j, "patch_w", c.patch_w);
  read_field(j, "image_h", c.image_h);
  read_field(j, "image_w", c.image_w);
  read_field(j, "source_vocab", c.source_vocab);
  read_field(j, "seed", c.seed);
  read_field(j, "positions", c.positions);
  read_field(j, "token_std", c.token_std);
  return c;
}

/// Reserved prompt ids sit directly above the source vocabulary.
struct PromptTemplate {
  std::vector<int> system;
  int image_marker = 0;
  std::vector<int> user;
  int image_placeholder = 0;
  int text_placeholder = 0;

  static constexpr int kSystemLen = 4;
  static constexpr int kUserLen = 4;
  static constexpr int kReserved = kSystemLen + 1 + kUserLen + 2;

  static PromptTemplate for_vocab(int source_vocab) {
    PromptTemplate p;
    int id = source_vocab;
    for (int i = 0; i < kSystemLen; ++i) p.system.push_back(id++);
    p.image_marker = id++;
    for (int i = 0; i < kUserLen; ++i) p.user.push_back(id++);
    p.image_placeholder = id++;
    p.text_placeholder = id++;
    return p;
  }
  friend bool operator==(const PromptTemplate&, const PromptTemplate&) = default;
};

inline Json to_json(const PromptTemplate& p) {
  return Json{{"system", p.system},
              {"image_marker", p.image_marker},
              {"user", p.user},
              {"image_placeholder", p.image_placeholder},
              {"text_placeholder", p.text_placeholder}};
}

template <class T>
class Teacher {
 public:
  static constexpr char kMagic[9] = "DIMTTCH1";
  static constexpr std::uint32_t kVersion = 1;

  explicit Teacher(const TeacherConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    prompt_ = PromptTemplate::for_vocab(cfg_.source_vocab);
    const auto d = static_cast<std::size_t>(cfg_.dim);
    const auto vocab = static_cast<std::size_t>(cfg_.source_vocab + PromptTemplate::kReserved);
    tok_emb_ = &store_.add("teacher.tok_emb", "teacher", vocab, d, InitKind::normal, cfg_.token_std);
    const std::size_t patch_values = static_cast<std::size_t>(cfg_.patch_h * cfg_.patch_w * RasterImage::kChannels);
    patch_embed_ = &store_.add("teacher.patch_embed.w", "teacher", patch_values, d, InitKind::normal,
                               2.0 * cfg_.token_std / std::sqrt(static_cast<double>(patch_values)));
    pos_emb_ = &store_.add("teacher.pos_emb", "teacher", static_cast<std::size_t>(cfg_.seq_len), d, InitKind::normal,
                           nn::kEmbeddingStd);
    for (int i = 0; i < cfg_.depth; ++i)
      blocks_.push_back(nn::EncoderBlock<T>::make(store_, "teacher.block" + std::to_string(i), "teacher", d,
                                                  static_cast<std::size_t>(cfg_.heads),
                                                  static_cast<std::size_t>(cfg_.ffn_mult * cfg_.dim)));
    ln_out_ = nn::LayerNorm<T>::make(store_, "teacher.ln_out", "teacher", d);
    pad_ = &store_.add("teacher.pad", "teacher", 1, d, InitKind::normal, 1.0);
    store_.initialize(cfg_.seed);
    store_.set_frozen(true);
    ++instances();
  }

  Teacher(const Teacher&) = delete;
  Teacher& operator=(const Teacher&) = delete;

  /// Number of teachers ever constructed in this process.
  static std::atomic<long>& instances() {
    static std::atomic<long> n{0};
    return n;
  }

  [[nodiscard]] const TeacherConfig& config() const noexcept { return cfg_; }
  [[nodiscard]] const PromptTemplate& prompt() const noexcept { return prompt_; }
  [[nodiscard]] const ParameterStore<T>& parameters() const noexcept { return store_; }
  [[nodiscard]] std::size_t parameter_count() const { return store_.count(); }
  [[nodiscard]] std::uint64_t hash() const { return store_.hash(); }

  /// Rows of the internal sequence before truncation and padding.
  [[nodiscard]] std::size_t prompt_overhead(const ModalityMask& m) const {
    return PromptTemplate::kSystemLen + 1 + (m.use_image ? static_cast<std::size_t>(cfg_.patches()) : 1) +
           PromptTemplate::kUserLen;
  }

  /// Mix-modality representation, shape (seq_len x dim). Pure in its inputs.
  [[nodiscard]] Matrix<T> encode_mix(const RasterImage& image, const std::vector<int>& source_tokens,
                                     const ModalityMask& mask) const {
    mask.validate();
    if (image.height() != cfg_.image_h || image.width() != cfg_.image_w)
      throw ContractError("teacher expects " + std::to_string(cfg_.image_h) + "x" + std::to_string(cfg_.image_w) +
                          " images");
    for (int t : source_tokens)
      if (t < 0 || t >= cfg_.source_vocab) throw ContractError("teacher: source token id out of range");

    const std::size_t seq = static_cast<std::size_t>(cfg_.seq_len);
    const std::size_t overhead = prompt_overhead(mask);
    if (overhead + 1 > seq) throw ContractError("teacher sequence length cannot hold the prompt");
    std::vector<int> text = mask.use_text ? source_tokens : std::vector<int>{prompt_.text_placeholder};
    if (text.empty()) text.push_back(prompt_.text_placeholder);
    if (overhead + text.size() > seq) {
      warn("teacher input truncated from " + std::to_string(overhead + text.size()) + " to " + std::to_string(seq) +
           " tokens");
      text.resize(seq - overhead);
    }

    Graph<T> g(false);
    std::vector<int> head = prompt_.system;
    head.push_back(prompt_.image_marker);
    std::vector<typename Graph<T>::Var> parts;
    parts.push_back(ops::embedding(g, g.weight(*tok_emb_), head));
    if (mask.use_image) {
      Matrix<T> ink = patchify<T>(image, cfg_.patch_h, cfg_.patch_w);
      for (auto& v : ink.storage()) v = T(1) - v;
      parts.push_back(ops::linear(g, g.constant(std::move(ink)), g.weight(*patch_embed_), typename Graph<T>::Var{}));
    } else {
      parts.push_back(ops::embedding(g, g.weight(*tok_emb_), {prompt_.image_placeholder}));
    }
    parts.push_back(ops::embedding(g, g.weight(*tok_emb_), prompt_.user));
    parts.push_back(ops::embedding(g, g.weight(*tok_emb_), text));
    Matrix<T> rows = concat_rows(g, parts);
    const std::size_t n = rows.rows();
    auto x = ops::add(g, g.constant(std::move(rows)), ops::slice_rows(g, g.weight(*pos_emb_), 0, n));
    for (const auto& b : blocks_) x = b(g, x);
    const Matrix<T>& h = g.value(ln_out_(g, x));

    const std::size_t first = cfg_.positions == "full" ? 0 : overhead;
    Matrix<T> out(seq, static_cast<std::size_t>(cfg_.dim));
    for (std::size_t r = 0; r < seq; ++r) {
      const std::size_t src = first + r;
      auto dst = out.row(r);
      if (src < n) {
        auto s = h.row(src);
        std::copy(s.begin(), s.end(), dst.begin());
      } else {
        auto p = pad_->value.row(0);
        std::copy(p.begin(), p.end(), dst.begin());
      }
    }
    return out;
  }

  void save(const std::filesystem::path& path) const {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot write teacher file " + path.string());
    const Json header{{"kind", "teacher"}, {"config", to_json(cfg_)}, {"prompt", to_json(prompt_)}};
    write_envelope(os, kMagic, kVersion, header.dump());
    write_parameter_block(os, store_);
  }

  static std::unique_ptr<Teacher> load(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("missing teacher file: " + path.string());
    const Envelope e = read_envelope(is, kMagic);
    if (e.version != kVersion) throw DataError("unsupported teacher file version");
    Json header;
    try {
      header = Json::parse(e.header);
    } catch (const Json::exception& ex) {
      throw DataError(std::string("malformed teacher header: ") + ex.what());
    }
    auto t = std::make_unique<Teacher>(teacher_config_from_json(header.at("config")));
    read_parameter_block(is, t->store_);
    t->store_.set_frozen(true);
    return t;
  }

 private:
  static Matrix<T> concat_rows(Graph<T>& g, const std::vector<typename Graph<T>::Var>& parts) {
    std::size_t n = 0;
    const std::size_t d = g.value(parts.front()).cols();
    for (auto p : parts) n += g.value(p).rows();
    Matrix<T> out(n, d);
    std::size_t r = 0;
    for (auto p : parts) {
      const auto& m = g.value(p);
      std::copy(m.storage().begin(), m.storage().end(), out.storage().begin() + static_cast<std::ptrdiff_t>(r * d));
      r += m.rows();
    }
    return out;
  }

  TeacherConfig cfg_;
  PromptTemplate prompt_;
  ParameterStore<T> store_;
  Parameter<T>* tok_emb_ = nullptr;
  Parameter<T>* patch_embed_ = nullptr;
  Parameter<T>* pos_emb_ = nullptr;
  std::vector<nn::EncoderBlock<T>> blocks_;
  nn::LayerNorm<T> ln_out_;
  Parameter<T>* pad_ = nullptr;
};

/// Precomputed teacher outputs keyed by (teacher hash, sample id, mask).
/// Optional on-disk mirror so repeated runs skip the teacher entirely.
template <class T>
class TeacherCache {
 public:
  explicit TeacherCache(std::filesystem::path dir = {}) : dir_(std::move(dir)) {}

  const Matrix<T>& get(const Teacher<T>& teacher, const std::string& id, const RasterImage& image,
                       const std::vector<int>& tokens, const ModalityMask& mask) {
    const std::string key = hex64(teacher.hash()) + "/" + mask.name() + "/" + id;
    {
      std::lock_guard<std::mutex> lock(mu_);
      if (auto it = mem_.find(key); it != mem_.end()) return it->second;
    }
    Matrix<T> m;
    const auto file = dir_.empty() ? std::filesystem::path{} : dir_ / (key + ".bin");
    bool loaded = false;
    if (!file.empty() && std::filesystem::exists(file)) {
      std::ifstream is(file, std::ios::binary);
      try {
        m = binio::read_matrix<T>(is);
        loaded = m.rows() == static_cast<std::size_t>(teacher.config().seq_len) &&
                 m.cols() == static_cast<std::size_t>(teacher.config().dim);
      } catch (const DataError&) {
        loaded = false;
      }
    }
    if (!loaded) {
      m = teacher.encode_mix(image, tokens, mask);
      if (!file.empty()) {
        std::filesystem::create_directories(file.parent_path());
        const auto tmp = file.string() + ".tmp";
        {
          std::ofstream os(tmp, std::ios::binary);
          binio::write_matrix(os, m);
        }
        std::filesystem::rename(tmp, file);
      }
    }
    std::lock_guard<std::mutex> lock(mu_);
    return mem_.emplace(key, std::move(m)).first->second;
  }

  [[nodiscard]] std::size_t size() const { return mem_.size(); }

 private:
  std::filesystem::path dir_;
  std::map<std::string, Matrix<T>> mem_;
  std::mutex mu_;
};

}  // namespace dimt
