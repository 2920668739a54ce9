#pragma once

// Text-to-text translator used only as a warm-start source for the student
// decoder: token encoder over source ids plus a decoder with one
// cross-attention source. Its decoder parameters share names with the
// student's so matching blocks can be copied.

#include <filesystem>
#include <fstream>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "dimt/core/autograd.hpp"
#include "dimt/core/jsonio.hpp"
#include "dimt/core/params.hpp"
#include "dimt/model/student.hpp"
#include "dimt/nn/layers.hpp"

namespace dimt {

struct TextTranslatorConfig {
  int source_vocab = 0;
  int max_source = 256;
  int encoder_dim = 64;
  int encoder_layers = 2;
  int encoder_heads = 4;
  int ffn_mult = 4;
  nn::DecoderConfig decoder;
  std::uint64_t seed = 1;

  void validate() const {
    if (source_vocab < 1 || max_source < 1 || encoder_dim < 1 || encoder_layers < 0)
      throw ContractError("text translator dimensions must be positive");
  }
};

inline Json to_json(const TextTranslatorConfig& c) {
  return Json{{"source_vocab", c.source_vocab},     {"max_source", c.max_source}, {"encoder_dim", c.encoder_dim},
              {"encoder_layers", c.encoder_layers}, {"encoder_heads", c.encoder_heads},
              {"ffn_mult", c.ffn_mult},             {"decoder", to_json(c.decoder)}, {"seed", c.seed}};
}

inline TextTranslatorConfig text_translator_config_from_json(const Json& j) {
  check_keys(j, {"source_vocab", "max_source", "encoder_dim", "encoder_layers", "encoder_heads", "ffn_mult", "decoder", "seed"},
             "text translator config");
  TextTranslatorConfig c;
  read_field(j, "source_vocab", c.source_vocab);
  read_field(j, "max_source", c.max_source);
  read_field(j, "encoder_dim", c.encoder_dim);
  read_field(j, "encoder_layers", c.encoder_layers);
  read_field(j, "encoder_heads", c.encoder_heads);
  read_field(j, "ffn_mult", c.ffn_mult);
  if (j.contains("decoder")) c.decoder = decoder_config_from_json(j.at("decoder"), "decoder");
  read_field(j, "seed", c.seed);
  return c;
}

template <class T>
class TextTranslator {
 public:
  using Var = typename Graph<T>::Var;

  explicit TextTranslator(const TextTranslatorConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    const auto d = static_cast<std::size_t>(cfg_.encoder_dim);
    tok_emb_ = &store_.add("text.tok_emb", "text_encoder", static_cast<std::size_t>(cfg_.source_vocab), d,
                           InitKind::normal, nn::kEmbeddingStd);
    pos_emb_ = &store_.add("text.pos_emb", "text_encoder", static_cast<std::size_t>(cfg_.max_source), d,
                           InitKind::normal, nn::kEmbeddingStd);
    for (int i = 0; i < cfg_.encoder_layers; ++i)
      blocks_.push_back(nn::EncoderBlock<T>::make(store_, "text.block" + std::to_string(i), "text_encoder", d,
                                                  static_cast<std::size_t>(cfg_.encoder_heads),
                                                  static_cast<std::size_t>(cfg_.ffn_mult * cfg_.encoder_dim)));
    ln_out_ = nn::LayerNorm<T>::make(store_, "text.ln_out", "text_encoder", d);
    bridge_ = nn::FeedForward<T>::make(store_, "bridge.text", "bridge", d, d,
                                       static_cast<std::size_t>(cfg_.decoder.dim));
    decoder_ = nn::Decoder<T>(store_, "decoder", "decoder", cfg_.decoder, {"text"});
    store_.initialize(cfg_.seed);
  }

  TextTranslator(const TextTranslator&) = delete;
  TextTranslator& operator=(const TextTranslator&) = delete;

  [[nodiscard]] const TextTranslatorConfig& config() const noexcept { return cfg_; }
  ParameterStore<T>& parameters() noexcept { return store_; }
  [[nodiscard]] const ParameterStore<T>& parameters() const noexcept { return store_; }
  [[nodiscard]] const nn::Decoder<T>& decoder() const noexcept { return decoder_; }

  Var encode(Graph<T>& g, const std::vector<int>& source) const {
    if (source.empty()) throw ContractError("text translator needs at least one source token");
    std::vector<int> src = source;
    if (src.size() > static_cast<std::size_t>(cfg_.max_source)) src.resize(static_cast<std::size_t>(cfg_.max_source));
    Var x = ops::embedding(g, g.weight(*tok_emb_), src);
    x = ops::add(g, x, ops::slice_rows(g, g.weight(*pos_emb_), 0, src.size()));
    for (const auto& b : blocks_) x = b(g, x);
    return bridge_(g, ln_out_(g, x));
  }

  Var logits(Graph<T>& g, const std::vector<int>& source, const std::vector<int>& decoder_input) const {
    return decoder_(g, decoder_input, {encode(g, source)});
  }

  void save(const std::filesystem::path& path) const {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot write " + path.string());
    const Json header{{"kind", "text_translator"}, {"config", to_json(cfg_)}};
    write_envelope(os, kStudentMagic, kStudentVersion, header.dump());
    write_parameter_block(os, store_);
  }

  static std::unique_ptr<TextTranslator> load(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open " + path.string());
    const auto env = read_envelope(is, kStudentMagic);
    const Json header = Json::parse(env.header);
    if (header.value("kind", "") != "text_translator") throw DataError(path.string() + " is not a text translator");
    auto t = std::make_unique<TextTranslator>(text_translator_config_from_json(header.at("config")));
    read_parameter_block(is, t->store_);
    return t;
  }

 private:
  TextTranslatorConfig cfg_;
  ParameterStore<T> store_;
  Parameter<T>* tok_emb_ = nullptr;
  Parameter<T>* pos_emb_ = nullptr;
  std::vector<nn::EncoderBlock<T>> blocks_;
  nn::LayerNorm<T> ln_out_;
  nn::FeedForward<T> bridge_;
  nn::Decoder<T> decoder_;
};

/// True for decoder parameters that belong to a cross-attention block.
inline bool is_cross_attention_parameter(const std::string& name, const std::vector<std::string>& cross_names) {
  for (const auto& c : cross_names)
    if (name.find("." + c + "_attn.") != std::string::npos || name.find(".ln_" + c + ".") != std::string::npos)
      return true;
  return false;
}

/// Copy embeddings, self-attention, feed-forward, norms and the output
/// projection of the decoder; cross-attention blocks keep their fresh values.
/// Returns the names copied.
template <class T>
std::vector<std::string> warm_start_decoder(StudentModel<T>& student, const TextTranslator<T>& source) {
  std::vector<std::string> copied;
  for (auto& p : student.parameters()) {
    if (p->group != "decoder" || is_cross_attention_parameter(p->name, {"mix", "image"})) continue;
    const Parameter<T>* s = source.parameters().find(p->name);
    if (!s) throw DataError("warm start: source lacks " + p->name);
    if (!s->value.same_shape(p->value)) throw DataError("warm start: geometry mismatch for " + p->name);
    p->value = s->value;
    copied.push_back(p->name);
  }
  return copied;
}

}  // namespace dimt
