#pragma once

// Image-to-markdown translation with the student alone, and the variant that
// feeds teacher hidden states to the decoder in place of the aligned
// representation.

#include <chrono>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dimt/inference/beam.hpp"
#include "dimt/model/student.hpp"
#include "dimt/teacher/teacher.hpp"
#include "dimt/text/vocab.hpp"

namespace dimt {

/// Adapts the cached decoder to the beam-search step interface.
template <class T>
class DecoderStepper {
 public:
  using State = typename nn::Decoder<T>::State;

  DecoderStepper(const nn::Decoder<T>& dec, std::shared_ptr<const typename nn::Decoder<T>::CrossCache> cross)
      : dec_(dec), cross_(std::move(cross)) {}

  State start() const { return dec_.start(cross_); }

  void step(State& s, int token, std::vector<double>& log_probs) {
    dec_.step(s, token, logits_);
    log_softmax(logits_.data(), logits_.size(), log_probs);
  }

 private:
  const nn::Decoder<T>& dec_;
  std::shared_ptr<const typename nn::Decoder<T>::CrossCache> cross_;
  Matrix<T> logits_;
};

struct TranslationResult {
  std::string markdown;
  std::vector<int> tokens;  // EOS excluded
  double log_prob = 0.0;
  double seconds = 0.0;
  bool truncated = false;
};

namespace detail {

template <class T>
TranslationResult decode_memories(const StudentModel<T>& model, const Vocabulary& target_vocab,
                                  const typename StudentModel<T>::Memories& mem, const BeamConfig& beam,
                                  std::chrono::steady_clock::time_point t0) {
  if (target_vocab.size() != model.config().decoder.vocab)
    throw ContractError("target vocabulary does not match the decoder");
  beam.validate(model.config().decoder.max_positions);
  DecoderStepper<T> stepper(model.decoder(), model.decoder().prepare({&mem.mix, &mem.image}));
  const BeamResult r = beam_search(stepper, kBos, kEos, beam);
  TranslationResult out;
  out.tokens = r.tokens;
  if (!out.tokens.empty() && out.tokens.back() == kEos) out.tokens.pop_back();
  out.markdown = target_vocab.decode(out.tokens);
  out.log_prob = r.log_prob;
  out.truncated = r.truncated;
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

}  // namespace detail

/// Argmax decoding, used for fast validation.
template <class T>
TranslationResult translate_greedy(const StudentModel<T>& model, const Vocabulary& target_vocab,
                                   const RasterImage& image, int max_length,
                                   const Matrix<T>* mix_override = nullptr) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto mem = model.memories(image, mix_override);
  DecoderStepper<T> stepper(model.decoder(), model.decoder().prepare({&mem.mix, &mem.image}));
  const BeamResult r = greedy_decode(stepper, kBos, kEos, max_length);
  TranslationResult out;
  out.tokens = r.tokens;
  if (!out.tokens.empty() && out.tokens.back() == kEos) out.tokens.pop_back();
  out.markdown = target_vocab.decode(out.tokens);
  out.log_prob = r.log_prob;
  out.truncated = r.truncated;
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

/// Student-only translation. No teacher is involved.
template <class T>
TranslationResult translate(const StudentModel<T>& model, const Vocabulary& target_vocab, const RasterImage& image,
                            const BeamConfig& beam) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto mem = model.memories(image);
  return detail::decode_memories(model, target_vocab, mem, beam, t0);
}

/// Translation with the aligned representation replaced by the teacher's
/// full-mask output. Source tokens are required.
template <class T>
TranslationResult translate_with_teacher(const StudentModel<T>& model, const Teacher<T>& teacher,
                                         const Vocabulary& target_vocab, const RasterImage& image,
                                         const std::optional<std::vector<int>>& source_tokens,
                                         const BeamConfig& beam) {
  if (!source_tokens) throw ContractError("translation with teacher output requires the source text");
  const auto t0 = std::chrono::steady_clock::now();
  const auto rep = teacher.encode_mix(image, *source_tokens, ModalityMask{});
  const auto mem = model.memories(image, &rep);
  return detail::decode_memories(model, target_vocab, mem, beam, t0);
}

}  // namespace dimt
