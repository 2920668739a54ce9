#pragma once

// Tiny corpus, teacher and model geometry shared by the training and
// experiment tests.

#include <filesystem>

#include "dimt/core/log.hpp"
#include "dimt/model/student.hpp"
#include "dimt/synthdoc/corpus.hpp"
#include "dimt/teacher/teacher.hpp"
#include "support.hpp"

namespace dimt::testing {

inline GenConfig tiny_gen_config() {
  GenConfig c;
  c.seed = 5;
  c.samples = 24;
  c.train = 0.5;
  c.valid = 0.25;
  c.test = 0.25;
  c.vocab_size = 8;
  c.min_words = 2;
  c.max_words = 4;
  c.render.height = 32;
  c.render.width = 32;
  c.render.margin = 1;
  c.render.body_scale = 1.0;
  c.render.line_gap = 1.5;
  c.render.word_space = 1.5;
  c.render.block_gap = 2;
  c.render.indent = 2;
  return c;
}

/// Generated once per process under the temp dir.
inline const std::filesystem::path& tiny_corpus_dir() {
  static const std::filesystem::path dir = [] {
    auto d = scratch_dir("tiny-corpus");
    generate_corpus(tiny_gen_config(), d);
    return d;
  }();
  return dir;
}

inline TeacherConfig tiny_teacher_config(int source_vocab) {
  TeacherConfig c;
  c.seq_len = 40;
  c.dim = 16;
  c.depth = 1;
  c.heads = 2;
  c.patch_h = 8;
  c.patch_w = 8;
  c.image_h = 32;
  c.image_w = 32;
  c.source_vocab = source_vocab;
  c.seed = 1;
  return c;
}

inline ModelConfig tiny_model_config(int target_vocab) {
  ModelConfig m;
  nn::EncoderConfig e{.patch_h = 8, .patch_w = 8, .image_h = 32, .image_w = 32, .dim = 16, .layers = 1, .heads = 2, .ffn_mult = 1};
  m.align_encoder = e;
  m.image_encoder = e;
  m.align_len = 40;
  m.align_dim = 16;
  m.ffn_dim_hidden = 16;
  m.ffn_length_hidden = 16;
  m.bridge_hidden = 16;
  m.decoder = {.vocab = target_vocab, .dim = 16, .layers = 1, .heads = 2, .ffn_mult = 1, .max_positions = 64};
  return m;
}

}  // namespace dimt::testing
