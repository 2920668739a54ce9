#pragma once

// Transformer building blocks shared by the teacher, the student encoders and
// the decoders. Each block has a graph forward (training) and, where the
// decoder needs it, a plain-matrix forward built on the same kernels.

#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "dimt/core/autograd.hpp"
#include "dimt/core/params.hpp"
#include "dimt/core/raster.hpp"

namespace dimt::nn {

template <class T>
using Var = typename Graph<T>::Var;

inline constexpr double kEmbeddingStd = 0.1;

template <class T>
struct Linear {
  Parameter<T>* w = nullptr;
  Parameter<T>* b = nullptr;

  static Linear make(ParameterStore<T>& s, const std::string& name, const std::string& group, std::size_t in,
                     std::size_t out, bool bias = true) {
    Linear l;
    l.w = &s.add(name + ".w", group, in, out, InitKind::normal, 1.0 / std::sqrt(static_cast<double>(in)));
    if (bias) l.b = &s.add(name + ".b", group, 1, out, InitKind::zeros);
    return l;
  }

  Var<T> operator()(Graph<T>& g, Var<T> x) const {
    return ops::linear(g, x, g.weight(*w), b ? g.weight(*b) : Var<T>{});
  }
  void apply(const Matrix<T>& x, Matrix<T>& out) const { kernels::matmul(x, w->value, out, b ? &b->value : nullptr); }
  [[nodiscard]] std::size_t out_dim() const { return w->value.cols(); }
};

template <class T>
struct LayerNorm {
  Parameter<T>* gain = nullptr;
  Parameter<T>* bias = nullptr;

  static LayerNorm make(ParameterStore<T>& s, const std::string& name, const std::string& group, std::size_t d) {
    return {&s.add(name + ".g", group, 1, d, InitKind::ones), &s.add(name + ".b", group, 1, d, InitKind::zeros)};
  }
  Var<T> operator()(Graph<T>& g, Var<T> x) const {
    return ops::layernorm(g, x, g.weight(*gain), g.weight(*bias));
  }
  void apply(const Matrix<T>& x, Matrix<T>& out) const { kernels::layernorm(x, gain->value, bias->value, out); }
};

/// Two-layer perceptron with a GELU in between.
template <class T>
struct FeedForward {
  Linear<T> fc1, fc2;

  static FeedForward make(ParameterStore<T>& s, const std::string& name, const std::string& group, std::size_t in,
                          std::size_t hidden, std::size_t out) {
    return {Linear<T>::make(s, name + ".fc1", group, in, hidden), Linear<T>::make(s, name + ".fc2", group, hidden, out)};
  }
  Var<T> operator()(Graph<T>& g, Var<T> x) const { return fc2(g, ops::gelu(g, fc1(g, x))); }
  void apply(const Matrix<T>& x, Matrix<T>& out) const {
    Matrix<T> h;
    fc1.apply(x, h);
    kernels::gelu_inplace(h);
    fc2.apply(h, out);
  }
};

template <class T>
struct MultiHeadAttention {
  Linear<T> q, k, v, o;
  std::size_t heads = 1;

  static MultiHeadAttention make(ParameterStore<T>& s, const std::string& name, const std::string& group,
                                 std::size_t d_model, std::size_t d_memory, std::size_t heads) {
    if (heads == 0 || d_model % heads != 0) throw ContractError(name + ": width must be divisible by heads");
    return {Linear<T>::make(s, name + ".q", group, d_model, d_model),
            Linear<T>::make(s, name + ".k", group, d_memory, d_model),
            Linear<T>::make(s, name + ".v", group, d_memory, d_model),
            Linear<T>::make(s, name + ".o", group, d_model, d_model), heads};
  }

  Var<T> operator()(Graph<T>& g, Var<T> x, Var<T> memory, bool causal) const {
    Var<T> a = ops::attention(g, q(g, x), k(g, memory), v(g, memory), heads, causal);
    return o(g, a);
  }
};

/// Pre-norm bidirectional transformer block.
template <class T>
struct EncoderBlock {
  LayerNorm<T> ln_attn;
  MultiHeadAttention<T> attn;
  LayerNorm<T> ln_ffn;
  FeedForward<T> ffn;

  static EncoderBlock make(ParameterStore<T>& s, const std::string& name, const std::string& group, std::size_t d,
                           std::size_t heads, std::size_t ffn_hidden) {
    return {LayerNorm<T>::make(s, name + ".ln_attn", group, d),
            MultiHeadAttention<T>::make(s, name + ".attn", group, d, d, heads),
            LayerNorm<T>::make(s, name + ".ln_ffn", group, d),
            FeedForward<T>::make(s, name + ".ffn", group, d, ffn_hidden, d)};
  }

  Var<T> operator()(Graph<T>& g, Var<T> x) const {
    Var<T> h = ln_attn(g, x);
    x = ops::add(g, x, attn(g, h, h, false));
    return ops::add(g, x, ffn(g, ln_ffn(g, x)));
  }
};

struct EncoderConfig {
  int patch_h = 8;
  int patch_w = 8;
  int image_h = 64;
  int image_w = 48;
  int dim = 64;
  int layers = 2;
  int heads = 4;
  int ffn_mult = 4;

  [[nodiscard]] int tokens() const { return (image_h / patch_h) * (image_w / patch_w); }
  [[nodiscard]] int patch_values() const { return patch_h * patch_w * RasterImage::kChannels; }
};

/// Patch transformer: patchify -> linear embedding + learned positions ->
/// bidirectional blocks -> final norm. Output is (tokens x dim).
template <class T>
struct PatchEncoder {
  EncoderConfig cfg;
  Linear<T> embed;
  Parameter<T>* pos = nullptr;
  std::vector<EncoderBlock<T>> blocks;
  LayerNorm<T> ln_out;

  static PatchEncoder make(ParameterStore<T>& s, const std::string& name, const std::string& group,
                           const EncoderConfig& c) {
    if (c.image_h % c.patch_h != 0 || c.image_w % c.patch_w != 0)
      throw ContractError(name + ": image size must be a multiple of the patch size");
    PatchEncoder e;
    e.cfg = c;
    const auto d = static_cast<std::size_t>(c.dim);
    e.embed = Linear<T>::make(s, name + ".patch_embed", group, static_cast<std::size_t>(c.patch_values()), d);
    e.pos = &s.add(name + ".pos", group, static_cast<std::size_t>(c.tokens()), d, InitKind::normal, kEmbeddingStd);
    for (int i = 0; i < c.layers; ++i)
      e.blocks.push_back(EncoderBlock<T>::make(s, name + ".block" + std::to_string(i), group, d,
                                               static_cast<std::size_t>(c.heads),
                                               static_cast<std::size_t>(c.ffn_mult * c.dim)));
    e.ln_out = LayerNorm<T>::make(s, name + ".ln_out", group, d);
    return e;
  }

  void check_image(const RasterImage& img) const {
    if (img.height() != cfg.image_h || img.width() != cfg.image_w)
      throw ContractError("image is " + std::to_string(img.height()) + "x" + std::to_string(img.width()) +
                          " but the encoder expects " + std::to_string(cfg.image_h) + "x" +
                          std::to_string(cfg.image_w));
  }

  Var<T> operator()(Graph<T>& g, Var<T> patches) const {
    Var<T> x = ops::add(g, embed(g, patches), g.weight(*pos));
    for (const auto& b : blocks) x = b(g, x);
    return ln_out(g, x);
  }
};

struct DecoderConfig {
  int vocab = 32;
  int dim = 64;
  int layers = 2;
  int heads = 4;
  int ffn_mult = 4;
  int max_positions = 128;
};

template <class T>
struct DecoderLayer {
  LayerNorm<T> ln_self;
  MultiHeadAttention<T> self_attn;
  std::vector<LayerNorm<T>> ln_cross;
  std::vector<MultiHeadAttention<T>> cross_attn;
  LayerNorm<T> ln_ffn;
  FeedForward<T> ffn;
};

/// Causal transformer decoder with an ordered list of cross-attention
/// sources per layer: self-attention, then each cross-attention in order,
/// then the feed-forward block, each pre-normed with a residual.
template <class T>
class Decoder {
 public:
  Decoder() = default;

  Decoder(ParameterStore<T>& s, const std::string& name, const std::string& group, const DecoderConfig& c,
          const std::vector<std::string>& cross_names)
      : cfg_(c) {
    const auto d = static_cast<std::size_t>(c.dim);
    tok_emb_ = &s.add(name + ".tok_emb", group, static_cast<std::size_t>(c.vocab), d, InitKind::normal, kEmbeddingStd);
    pos_emb_ = &s.add(name + ".pos_emb", group, static_cast<std::size_t>(c.max_positions), d, InitKind::normal,
                      kEmbeddingStd);
    for (int i = 0; i < c.layers; ++i) {
      const std::string p = name + ".layer" + std::to_string(i);
      DecoderLayer<T> l;
      l.ln_self = LayerNorm<T>::make(s, p + ".ln_self", group, d);
      l.self_attn = MultiHeadAttention<T>::make(s, p + ".self_attn", group, d, d, static_cast<std::size_t>(c.heads));
      for (const auto& cn : cross_names) {
        l.ln_cross.push_back(LayerNorm<T>::make(s, p + ".ln_" + cn, group, d));
        l.cross_attn.push_back(
            MultiHeadAttention<T>::make(s, p + "." + cn + "_attn", group, d, d, static_cast<std::size_t>(c.heads)));
      }
      l.ln_ffn = LayerNorm<T>::make(s, p + ".ln_ffn", group, d);
      l.ffn = FeedForward<T>::make(s, p + ".ffn", group, d, static_cast<std::size_t>(c.ffn_mult * c.dim), d);
      layers_.push_back(std::move(l));
    }
    ln_out_ = LayerNorm<T>::make(s, name + ".ln_out", group, d);
    out_ = Linear<T>::make(s, name + ".out", group, d, static_cast<std::size_t>(c.vocab));
  }

  [[nodiscard]] const DecoderConfig& config() const noexcept { return cfg_; }
  [[nodiscard]] std::size_t cross_sources() const noexcept {
    return layers_.empty() ? 0 : layers_.front().cross_attn.size();
  }
  [[nodiscard]] const std::vector<DecoderLayer<T>>& layers() const noexcept { return layers_; }

  void check_length(std::size_t n) const {
    if (n == 0) throw ContractError("decoder input must contain at least BOS");
    if (n > static_cast<std::size_t>(cfg_.max_positions))
      throw ContractError("decoder prefix of length " + std::to_string(n) + " exceeds max positions " +
                          std::to_string(cfg_.max_positions));
  }

  /// Teacher-forced logits (n x vocab) for input tokens; memories are already
  /// at decoder width, one per cross-attention source.
  Var<T> operator()(Graph<T>& g, const std::vector<int>& tokens, const std::vector<Var<T>>& memories) const {
    check_length(tokens.size());
    if (memories.size() != cross_sources()) throw ContractError("decoder: wrong number of memories");
    Var<T> x = ops::embedding(g, g.weight(*tok_emb_), tokens);
    x = ops::add(g, x, ops::slice_rows(g, g.weight(*pos_emb_), 0, tokens.size()));
    for (const auto& l : layers_) {
      Var<T> h = l.ln_self(g, x);
      x = ops::add(g, x, l.self_attn(g, h, h, true));
      for (std::size_t c = 0; c < l.cross_attn.size(); ++c)
        x = ops::add(g, x, l.cross_attn[c](g, l.ln_cross[c](g, x), memories[c], false));
      x = ops::add(g, x, l.ffn(g, l.ln_ffn(g, x)));
    }
    return out_(g, ln_out_(g, x));
  }

  /// Cross-attention keys and values, computed once per source sequence.
  struct CrossCache {
    std::vector<std::vector<Matrix<T>>> k, v;  // [layer][source]
  };

  /// Per-hypothesis incremental state.
  struct State {
    std::shared_ptr<const CrossCache> cross;
    std::vector<Matrix<T>> self_k, self_v;  // [layer], one row per consumed token
    std::size_t position = 0;
  };

  [[nodiscard]] std::shared_ptr<const CrossCache> prepare(const std::vector<const Matrix<T>*>& memories) const {
    if (memories.size() != cross_sources()) throw ContractError("decoder: wrong number of memories");
    auto cache = std::make_shared<CrossCache>();
    cache->k.resize(layers_.size());
    cache->v.resize(layers_.size());
    for (std::size_t li = 0; li < layers_.size(); ++li)
      for (std::size_t c = 0; c < memories.size(); ++c) {
        Matrix<T> k, v;
        layers_[li].cross_attn[c].k.apply(*memories[c], k);
        layers_[li].cross_attn[c].v.apply(*memories[c], v);
        cache->k[li].push_back(std::move(k));
        cache->v[li].push_back(std::move(v));
      }
    return cache;
  }

  [[nodiscard]] State start(std::shared_ptr<const CrossCache> cross) const {
    State s;
    s.cross = std::move(cross);
    const auto d = static_cast<std::size_t>(cfg_.dim);
    s.self_k.assign(layers_.size(), Matrix<T>(0, d));
    s.self_v.assign(layers_.size(), Matrix<T>(0, d));
    return s;
  }

  /// Consume one token and return the logits for the next position.
  void step(State& s, int token, Matrix<T>& logits) const {
    check_length(s.position + 1);
    if (token < 0 || token >= cfg_.vocab) throw ContractError("decoder: token id out of range");
    const auto d = static_cast<std::size_t>(cfg_.dim);
    Matrix<T> x(1, d);
    {
      auto e = tok_emb_->value.row(static_cast<std::size_t>(token));
      std::copy(e.begin(), e.end(), x.data());
      Matrix<T> p(1, d);
      auto pr = pos_emb_->value.row(s.position);
      std::copy(pr.begin(), pr.end(), p.data());
      x += p;
    }
    Matrix<T> h, q, k, v, a, o;
    for (std::size_t li = 0; li < layers_.size(); ++li) {
      const auto& l = layers_[li];
      l.ln_self.apply(x, h);
      l.self_attn.q.apply(h, q);
      l.self_attn.k.apply(h, k);
      l.self_attn.v.apply(h, v);
      append_row(s.self_k[li], k);
      append_row(s.self_v[li], v);
      kernels::attention(q, s.self_k[li], s.self_v[li], l.self_attn.heads, true, s.position, a);
      l.self_attn.o.apply(a, o);
      x += o;
      for (std::size_t c = 0; c < l.cross_attn.size(); ++c) {
        l.ln_cross[c].apply(x, h);
        l.cross_attn[c].q.apply(h, q);
        kernels::attention(q, s.cross->k[li][c], s.cross->v[li][c], l.cross_attn[c].heads, false, 0, a);
        l.cross_attn[c].o.apply(a, o);
        x += o;
      }
      l.ln_ffn.apply(x, h);
      l.ffn.apply(h, o);
      x += o;
    }
    ln_out_.apply(x, h);
    out_.apply(h, logits);
    ++s.position;
  }


 private:
  static void append_row(Matrix<T>& m, const Matrix<T>& r) {
    Matrix<T> grown(m.rows() + 1, r.cols());
    std::copy(m.storage().begin(), m.storage().end(), grown.storage().begin());
    std::copy(r.storage().begin(), r.storage().end(), grown.storage().begin() + static_cast<std::ptrdiff_t>(m.size()));
    m = std::move(grown);
  }

  DecoderConfig cfg_;
  Parameter<T>* tok_emb_ = nullptr;
  Parameter<T>* pos_emb_ = nullptr;
  std::vector<DecoderLayer<T>> layers_;
  LayerNorm<T> ln_out_;
  Linear<T> out_;
};

}  // namespace dimt::nn
