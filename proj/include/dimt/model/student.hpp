#pragma once

// Image-only student: alignment encoder (patch transformer, feature
// projection, transpose, length projection, transpose), image encoder,
// bridges to decoder width, and a decoder that cross-attends to the aligned
// representation first and the image features second.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "dimt/core/autograd.hpp"
#include "dimt/core/errors.hpp"
#include "dimt/core/jsonio.hpp"
#include "dimt/core/params.hpp"
#include "dimt/core/raster.hpp"
#include "dimt/nn/layers.hpp"

namespace dimt {

/// What feeds the mix cross-attention.
enum class AlignSource {
  own_encoder,    // dedicated alignment patch stack
  image_encoder,  // projections applied to the image encoder output
  teacher_output  // teacher hidden states go straight to the decoder
};

inline const char* align_source_name(AlignSource s) {
  switch (s) {
    case AlignSource::own_encoder: return "own_encoder";
    case AlignSource::image_encoder: return "image_encoder";
    case AlignSource::teacher_output: return "teacher_output";
  }
  return "?";
}

inline AlignSource parse_align_source(const std::string& s) {
  if (s == "own_encoder") return AlignSource::own_encoder;
  if (s == "image_encoder") return AlignSource::image_encoder;
  if (s == "teacher_output") return AlignSource::teacher_output;
  throw DataError("unknown align source: " + s);
}

enum class AlignLoss { cosine, mse, cross_entropy };

inline const char* align_loss_name(AlignLoss l) {
  switch (l) {
    case AlignLoss::cosine: return "cosine";
    case AlignLoss::mse: return "mse";
    case AlignLoss::cross_entropy: return "cross_entropy";
  }
  return "?";
}

inline AlignLoss parse_align_loss(const std::string& s) {
  if (s == "cosine") return AlignLoss::cosine;
  if (s == "mse") return AlignLoss::mse;
  if (s == "cross_entropy") return AlignLoss::cross_entropy;
  throw DataError("unknown alignment loss: " + s);
}

struct ModelConfig {
  nn::EncoderConfig align_encoder;
  nn::EncoderConfig image_encoder;
  int align_len = 256;  // teacher rows
  int align_dim = 128;  // teacher width
  int ffn_dim_hidden = 128;
  int ffn_length_hidden = 128;
  int bridge_hidden = 128;
  nn::DecoderConfig decoder{.vocab = 32, .dim = 128, .layers = 4, .heads = 4, .ffn_mult = 4, .max_positions = 256};
  AlignSource align_source = AlignSource::own_encoder;
  AlignLoss align_loss = AlignLoss::cosine;
  bool cosine_flat = false;  // one cosine over whole matrices instead of per position
  bool trans_loss_sum = false;  // sum instead of token mean
  std::uint64_t seed = 1;

  void validate() const {
    auto same_image = [](const nn::EncoderConfig& a, const nn::EncoderConfig& b) {
      return a.image_h == b.image_h && a.image_w == b.image_w;
    };
    if (!same_image(align_encoder, image_encoder)) throw ContractError("encoders must share the image size");
    if (align_len < 1 || align_dim < 1 || ffn_dim_hidden < 1 || ffn_length_hidden < 1 || bridge_hidden < 1)
      throw ContractError("model dimensions must be positive");
    if (decoder.vocab < 5) throw ContractError("decoder vocabulary too small");
    if (decoder.max_positions < 2) throw ContractError("decoder needs at least two positions");
  }

  /// Rows produced by the encoder that feeds the projections.
  [[nodiscard]] const nn::EncoderConfig& projection_source() const {
    return align_source == AlignSource::image_encoder ? image_encoder : align_encoder;
  }
};

inline Json to_json(const nn::EncoderConfig& c) {
  return Json{{"patch_h", c.patch_h}, {"patch_w", c.patch_w}, {"image_h", c.image_h},   {"image_w", c.image_w},
              {"dim", c.dim},         {"layers", c.layers},   {"heads", c.heads},       {"ffn_mult", c.ffn_mult}};
}

inline nn::EncoderConfig encoder_config_from_json(const Json& j, const std::string& where) {
  check_keys(j, {"patch_h", "patch_w", "image_h", "image_w", "dim", "layers", "heads", "ffn_mult"}, where);
  nn::EncoderConfig c;
  read_field(j, "patch_h", c.patch_h);
  read_field(j, "patch_w", c.patch_w);
  read_field(j, "image_h", c.image_h);
  read_field(j, "image_w", c.image_w);
  read_field(j, "dim", c.dim);
  read_field(j, "layers", c.layers);
  read_field(j, "heads", c.heads);
  read_field(j, "ffn_mult", c.ffn_mult);
  return c;
}

inline Json to_json(const nn::DecoderConfig& c) {
  return Json{{"vocab", c.vocab},       {"dim", c.dim},           {"layers", c.layers},
              {"heads", c.heads},       {"ffn_mult", c.ffn_mult}, {"max_positions", c.max_positions}};
}

inline nn::DecoderConfig decoder_config_from_json(const Json& j, const std::string& where) {
  check_keys(j, {"vocab", "dim", "layers", "heads", "ffn_mult", "max_positions"}, where);
  nn::DecoderConfig c;
  read_field(j, "vocab", c.vocab);
  read_field(j, "dim", c.dim);
  read_field(j, "layers", c.layers);
  read_field(j, "heads", c.heads);
  read_field(j, "ffn_mult", c.ffn_mult);
  read_field(j, "max_positions", c.max_positions);
  return c;
}

inline Json to_json(const ModelConfig& c) {
  return Json{{"align_encoder", to_json(c.align_encoder)},
              {"image_encoder", to_json(c.image_encoder)},
              {"align_len", c.align_len},
              {"align_dim", c.align_dim},
              {"ffn_dim_hidden", c.ffn_dim_hidden},
              {"ffn_length_hidden", c.ffn_length_hidden},
              {"bridge_hidden", c.bridge_hidden},
              {"decoder", to_json(c.decoder)},
              {"align_source", align_source_name(c.align_source)},
              {"align_loss", align_loss_name(c.align_loss)},
              {"cosine_flat", c.cosine_flat},
              {"trans_loss_sum", c.trans_loss_sum},
              {"seed", c.seed}};
}

inline ModelConfig model_config_from_json(const Json& j) {
  check_keys(j, {"align_encoder", "image_encoder", "align_len", "align_dim", "ffn_dim_hidden", "ffn_length_hidden",
                 "bridge_hidden", "decoder", "align_source", "align_loss", "cosine_flat", "trans_loss_sum", "seed"},
             "model config");
  ModelConfig c;
  if (j.contains("align_encoder")) c.align_encoder = encoder_config_from_json(j.at("align_encoder"), "align_encoder");
  if (j.contains("image_encoder")) c.image_encoder = encoder_config_from_json(j.at("image_encoder"), "image_encoder");
  read_field(j, "align_len", c.align_len);
  read_field(j, "align_dim", c.align_dim);
  read_field(j, "ffn_dim_hidden", c.ffn_dim_hidden);
  read_field(j, "ffn_length_hidden", c.ffn_length_hidden);
  read_field(j, "bridge_hidden", c.bridge_hidden);
  if (j.contains("decoder")) c.decoder = decoder_config_from_json(j.at("decoder"), "decoder");
  if (j.contains("align_source")) c.align_source = parse_align_source(j.at("align_source").get<std::string>());
  if (j.contains("align_loss")) c.align_loss = parse_align_loss(j.at("align_loss").get<std::string>());
  read_field(j, "cosine_flat", c.cosine_flat);
  read_field(j, "trans_loss_sum", c.trans_loss_sum);
  read_field(j, "seed", c.seed);
  return c;
}

/// Alignment objective between the teacher target and the student output.
template <class T>
typename Graph<T>::Var alignment_loss(Graph<T>& g, typename Graph<T>::Var teacher, typename Graph<T>::Var student,
                                      AlignLoss variant, bool flat = false) {
  if (!g.value(teacher).same_shape(g.value(student)))
    throw ContractError("alignment loss: teacher and student shapes differ");
  switch (variant) {
    case AlignLoss::cosine: return ops::cosine_loss(g, student, teacher, flat);
    case AlignLoss::mse: return ops::mse_loss(g, student, teacher);
    case AlignLoss::cross_entropy: return ops::soft_cross_entropy(g, teacher, student);
  }
  throw ContractError("unknown alignment loss");
}

/// alpha * align + trans.
inline double total_loss(double align, double trans, double alpha) {
  if (alpha < 0) throw ContractError("alpha must be non-negative");
  return alpha * align + trans;
}

/// Decoder input and next-token targets for BOS + tokens + EOS.
struct TeacherForcing {
  std::vector<int> input;
  std::vector<int> target;
};

inline TeacherForcing teacher_forcing(const std::vector<int>& body, int bos, int eos) {
  TeacherForcing tf;
  tf.input.push_back(bos);
  tf.input.insert(tf.input.end(), body.begin(), body.end());
  tf.target.assign(body.begin(), body.end());
  tf.target.push_back(eos);
  return tf;
}

template <class T>
class StudentModel {
 public:
  using Var = typename Graph<T>::Var;

  struct Forward {
    Var h_align;  // invalid when the teacher output is used directly
    Var h_image;
    Var logits;
  };

  explicit StudentModel(const ModelConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    const auto& enc = cfg_.projection_source();
    if (cfg_.align_source == AlignSource::own_encoder)
      align_enc_ = nn::PatchEncoder<T>::make(store_, "align.encoder", "align_encoder", cfg_.align_encoder);
    if (cfg_.align_source != AlignSource::teacher_output) {
      ffn_dim_ = nn::FeedForward<T>::make(store_, "align.ffn_dim", "align_encoder", static_cast<std::size_t>(enc.dim),
                                          static_cast<std::size_t>(cfg_.ffn_dim_hidden),
                                          static_cast<std::size_t>(cfg_.align_dim));
      ffn_length_ = nn::FeedForward<T>::make(store_, "align.ffn_length", "align_encoder",
                                             static_cast<std::size_t>(enc.tokens()),
                                             static_cast<std::size_t>(cfg_.ffn_length_hidden),
                                             static_cast<std::size_t>(cfg_.align_len));
    }
    image_enc_ = nn::PatchEncoder<T>::make(store_, "image.encoder", "image_encoder", cfg_.image_encoder);
    const auto dd = static_cast<std::size_t>(cfg_.decoder.dim);
    bridge_mix_ = nn::FeedForward<T>::make(store_, "bridge.mix", "bridge", static_cast<std::size_t>(cfg_.align_dim),
                                           static_cast<std::size_t>(cfg_.bridge_hidden), dd);
    bridge_image_ = nn::FeedForward<T>::make(store_, "bridge.image", "bridge",
                                             static_cast<std::size_t>(cfg_.image_encoder.dim),
                                             static_cast<std::size_t>(cfg_.bridge_hidden), dd);
    decoder_ = nn::Decoder<T>(store_, "decoder", "decoder", cfg_.decoder, {"mix", "image"});
    store_.initialize(cfg_.seed);
  }

  StudentModel(const StudentModel&) = delete;
  StudentModel& operator=(const StudentModel&) = delete;

  [[nodiscard]] const ModelConfig& config() const noexcept { return cfg_; }
  ParameterStore<T>& parameters() noexcept { return store_; }
  [[nodiscard]] const ParameterStore<T>& parameters() const noexcept { return store_; }
  [[nodiscard]] const nn::Decoder<T>& decoder() const noexcept { return decoder_; }
  [[nodiscard]] bool uses_teacher_output() const noexcept { return cfg_.align_source == AlignSource::teacher_output; }

  /// Parameter count per group, in creation order.
  [[nodiscard]] std::vector<std::pair<std::string, std::size_t>> group_counts() const {
    std::vector<std::pair<std::string, std::size_t>> out;
    for (const auto& gname : store_.groups()) out.emplace_back(gname, store_.count(gname));
    return out;
  }

  Matrix<T> patches(const RasterImage& image) const {
    image_enc_.check_image(image);
    return patchify<T>(image, cfg_.image_encoder.patch_h, cfg_.image_encoder.patch_w);
  }

  /// H_Align with shape (align_len x align_dim).
  Var encode_align(Graph<T>& g, Var image_patches, Var h_image) const {
    if (cfg_.align_source == AlignSource::teacher_output)
      throw ContractError("this model has no alignment encoder");
    Var h_swin = cfg_.align_source == AlignSource::own_encoder ? align_enc_(g, image_patches) : h_image;
    Var a = ffn_dim_(g, h_swin);
    a = ops::transpose(g, a);
    a = ffn_length_(g, a);
    return ops::transpose(g, a);
  }

  Var encode_image(Graph<T>& g, Var image_patches) const { return image_enc_(g, image_patches); }

  /// Teacher-forced pass. `teacher_rep` is required only when the teacher
  /// output feeds the decoder.
  Forward forward(Graph<T>& g, const RasterImage& image, const std::vector<int>& decoder_input,
                  const Matrix<T>* teacher_rep = nullptr) const {
    Var p = g.constant(patches(image));
    Forward f;
    f.h_image = encode_image(g, p);
    Var mix;
    if (uses_teacher_output()) {
      if (!teacher_rep) throw ContractError("teacher output required for this model");
      check_teacher_shape(*teacher_rep);
      mix = g.constant_ref(*teacher_rep);
    } else {
      f.h_align = encode_align(g, p, f.h_image);
      mix = f.h_align;
    }
    f.logits = decoder_(g, decoder_input, {bridge_mix_(g, mix), bridge_image_(g, f.h_image)});
    return f;
  }

  struct Losses {
    Var align;  // 1x1; zero constant when the teacher output is used directly
    Var trans;
    Var total;
  };

  Losses losses(Graph<T>& g, const Forward& f, const std::vector<int>& targets, const Matrix<T>& teacher_rep,
                double alpha) const {
    Losses l;
    l.trans = ops::nll(g, f.logits, targets, !cfg_.trans_loss_sum);
    if (f.h_align.valid()) {
      check_teacher_shape(teacher_rep);
      l.align = alignment_loss(g, g.constant_ref(teacher_rep), f.h_align, cfg_.align_loss, cfg_.cosine_flat);
    } else {
      l.align = g.constant(Matrix<T>(1, 1, T(0)));
    }
    l.total = ops::weighted_sum(g, l.align, static_cast<T>(alpha), l.trans, T(1));
    return l;
  }

  /// Decoder-width memories for inference; `mix_override` replaces H_Align.
  struct Memories {
    Matrix<T> mix, image;
    Matrix<T> h_align;  // empty when overridden
  };

  Memories memories(const RasterImage& image, const Matrix<T>* mix_override = nullptr) const {
    Graph<T> g(false);
    Var p = g.constant(patches(image));
    Var hi = encode_image(g, p);
    Memories m;
    Var mix;
    if (mix_override) {
      check_teacher_shape(*mix_override);
      mix = g.constant_ref(*mix_override);
    } else {
      if (uses_teacher_output()) throw ContractError("this model decodes from teacher output; use the teacher path");
      Var ha = encode_align(g, p, hi);
      m.h_align = g.value(ha);
      mix = ha;
    }
    m.mix = g.value(bridge_mix_(g, mix));
    m.image = g.value(bridge_image_(g, hi));
    return m;
  }

  /// H_Align alone, without running the decoder bridges.
  Matrix<T> aligned(const RasterImage& image) const {
    Graph<T> g(false);
    Var p = g.constant(patches(image));
    Var hi = cfg_.align_source == AlignSource::image_encoder ? encode_image(g, p) : Var{};
    return g.value(encode_align(g, p, hi));
  }

  void check_teacher_shape(const Matrix<T>& rep) const {
    if (rep.rows() != static_cast<std::size_t>(cfg_.align_len) || rep.cols() != static_cast<std::size_t>(cfg_.align_dim))
      throw ContractError("teacher output is " + std::to_string(rep.rows()) + "x" + std::to_string(rep.cols()) +
                          " but the model expects " + std::to_string(cfg_.align_len) + "x" +
                          std::to_string(cfg_.align_dim));
  }

  /// Parameter access for probes and warm starts.
  [[nodiscard]] const nn::FeedForward<T>& ffn_length() const noexcept { return ffn_length_; }
  [[nodiscard]] const nn::FeedForward<T>& ffn_dim() const noexcept { return ffn_dim_; }
  [[nodiscard]] const nn::PatchEncoder<T>& align_encoder() const noexcept { return align_enc_; }

 private:
  ModelConfig cfg_;
  ParameterStore<T> store_;
  nn::PatchEncoder<T> align_enc_;
  nn::FeedForward<T> ffn_dim_, ffn_length_;
  nn::PatchEncoder<T> image_enc_;
  nn::FeedForward<T> bridge_mix_, bridge_image_;
  nn::Decoder<T> decoder_;
};

/// Student checkpoint: envelope header {kind, model, extra}, parameter block,
/// then an optional trailer written by `write_trailer` (optimizer state).
inline constexpr char kStudentMagic[9] = "DIMTCKP1";
inline constexpr std::uint32_t kStudentVersion = 1;

template <class T>
void save_student(const std::filesystem::path& path, const StudentModel<T>& model, const Json& extra = Json::object(),
                  const std::function<void(std::ostream&)>& write_trailer = {}) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw DataError("cannot write " + path.string());
    const Json header{{"kind", "student"}, {"model", to_json(model.config())}, {"extra", extra}};
    write_envelope(os, kStudentMagic, kStudentVersion, header.dump());
    write_parameter_block(os, model.parameters());
    binio::put<std::uint8_t>(os, write_trailer ? 1 : 0);
    if (write_trailer) write_trailer(os);
    if (!os) throw DataError("write failed for " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

template <class T>
struct LoadedStudent {
  std::unique_ptr<StudentModel<T>> model;
  Json extra;
  bool has_trailer = false;
};

/// Loads a checkpoint; `read_trailer` is called with the stream when a trailer is present.
template <class T>
LoadedStudent<T> load_student(const std::filesystem::path& path,
                              const std::function<void(std::istream&, StudentModel<T>&)>& read_trailer = {}) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open checkpoint " + path.string());
  const auto env = read_envelope(is, kStudentMagic);
  if (env.version != kStudentVersion) throw DataError("unsupported checkpoint version " + std::to_string(env.version));
  Json header;
  try {
    header = Json::parse(env.header);
  } catch (const std::exception& e) {
    throw DataError("corrupt checkpoint header: " + std::string(e.what()));
  }
  if (header.value("kind", "") != "student") throw DataError(path.string() + " is not a student checkpoint");
  LoadedStudent<T> out;
  out.model = std::make_unique<StudentModel<T>>(model_config_from_json(header.at("model")));
  out.extra = header.value("extra", Json::object());
  read_parameter_block(is, out.model->parameters());
  out.has_trailer = binio::get<std::uint8_t>(is) != 0;
  if (out.has_trailer && read_trailer) read_trailer(is, *out.model);
  return out;
}

}  // namespace dimt
