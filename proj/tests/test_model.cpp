#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "dimt/model/student.hpp"
#include "support.hpp"

using namespace dimt;
using dimt::testing::gradient_check;
using dimt::testing::random_matrix;

namespace {

ModelConfig micro_config(AlignSource src = AlignSource::own_encoder) {
  ModelConfig c;
  nn::EncoderConfig e{.patch_h = 4, .patch_w = 4, .image_h = 8, .image_w = 8, .dim = 8, .layers = 1, .heads = 2, .ffn_mult = 1};
  c.align_encoder = e;
  c.image_encoder = e;
  c.image_encoder.dim = 6;
  c.align_len = 6;
  c.align_dim = 8;
  c.ffn_dim_hidden = 5;
  c.ffn_length_hidden = 7;
  c.bridge_hidden = 8;
  c.decoder = {.vocab = 16, .dim = 8, .layers = 1, .heads = 2, .ffn_mult = 1, .max_positions = 8};
  c.align_source = src;
  c.seed = 3;
  return c;
}

RasterImage noise_image(int h, int w, std::uint64_t seed) {
  RasterImage img(h, w);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.0F, 1.0F);
  for (auto& v : img.pixels()) v = u(rng);
  img.quantize();
  return img;
}

double scalar(Graph<double>& g, Graph<double>::Var v) { return g.value(v)[0]; }

}  // namespace

TEST_CASE("alignment shapes follow the projections") {
  ModelConfig c;
  c.align_encoder = {.patch_h = 8, .patch_w = 8, .image_h = 56, .image_w = 56, .dim = 64, .layers = 1, .heads = 4, .ffn_mult = 2};
  c.image_encoder = c.align_encoder;
  c.align_len = 256;
  c.align_dim = 128;
  StudentModel<float> m(c);
  const auto img = noise_image(56, 56, 1);
  Graph<float> g(false);
  auto hs = m.align_encoder()(g, g.constant(m.patches(img)));
  REQUIRE(g.value(hs).rows() == 49);
  REQUIRE(g.value(hs).cols() == 64);
  const auto h = m.aligned(img);
  REQUIRE(h.rows() == 256);
  REQUIRE(h.cols() == 128);
  REQUIRE(h == m.aligned(img));
}

TEST_CASE("micro model gradients match finite differences") {
  for (auto src : {AlignSource::own_encoder, AlignSource::image_encoder}) {
    StudentModel<double> m(micro_config(src));
    std::mt19937_64 rng(11);
    const auto teacher = random_matrix<double>(6, 8, rng);
    const auto img = noise_image(8, 8, 2);
    const auto tf = teacher_forcing({4, 7, 9}, 1, 2);
    auto loss = [&](Graph<double>& g) {
      auto f = m.forward(g, img, tf.input);
      return m.losses(g, f, tf.target, teacher, 1.0).total;
    };
    const auto worst = gradient_check(m.parameters(), loss, 1e-5);
    REQUIRE(worst.size() == 4);
    for (const auto& [group, err] : worst) {
      INFO(align_source_name(src) << " " << group << " " << err);
      REQUIRE(err < 1e-4);
    }
  }
}

TEST_CASE("other alignment losses pass finite-difference checks") {
  for (auto variant : {AlignLoss::mse, AlignLoss::cross_entropy}) {
    auto c = micro_config();
    c.align_loss = variant;
    c.cosine_flat = true;
    StudentModel<double> m(c);
    std::mt19937_64 rng(12);
    const auto teacher = random_matrix<double>(6, 8, rng);
    const auto img = noise_image(8, 8, 3);
    const auto tf = teacher_forcing({5, 6}, 1, 2);
    auto loss = [&](Graph<double>& g) {
      auto f = m.forward(g, img, tf.input);
      return m.losses(g, f, tf.target, teacher, 0.5).total;
    };
    for (const auto& [group, err] : gradient_check(m.parameters(), loss, 1e-5)) {
      INFO(align_loss_name(variant) << " " << group);
      REQUIRE(err < 1e-4);
    }
  }
}

TEST_CASE("cosine alignment loss identities") {
  std::mt19937_64 rng(4);
  auto x = random_matrix<double>(5, 8, rng);
  Matrix<double> neg = x;
  for (auto& v : neg.storage()) v = -v;
  Matrix<double> a(4, 4), b(4, 4);
  for (std::size_t r = 0; r < 4; ++r) {
    a(r, r) = 1.5;
    b(r, (r + 1) % 4) = -2.0;
  }
  Graph<double> g(false);
  auto loss = [&](const Matrix<double>& t, const Matrix<double>& s) {
    return scalar(g, alignment_loss(g, g.constant(t), g.constant(s), AlignLoss::cosine));
  };
  REQUIRE(loss(x, x) == Catch::Approx(0.0).margin(1e-6));
  REQUIRE(loss(x, neg) == Catch::Approx(2.0).margin(1e-6));
  REQUIRE(loss(a, b) == Catch::Approx(1.0).margin(1e-6));
  Matrix<double> zero(5, 8);
  const double z = loss(x, zero);
  REQUIRE(std::isfinite(z));
  REQUIRE(z == Catch::Approx(1.0).margin(1e-6));
  REQUIRE_THROWS_AS(loss(x, a), ContractError);
  for (int i = 0; i < 50; ++i) {
    auto p = random_matrix<double>(3, 4, rng), q = random_matrix<double>(3, 4, rng);
    const double v = loss(p, q);
    REQUIRE(v >= 0.0);
    REQUIRE(v <= 2.0);
  }
}

TEST_CASE("mse and cross-entropy alignment losses match hand values") {
  Matrix<double> t(1, 2), s(1, 2);
  t(0, 0) = 0.0;
  t(0, 1) = std::log(3.0);  // softmax (1/4, 3/4)
  s(0, 0) = 1.0;
  s(0, 1) = 1.0;  // softmax (1/2, 1/2)
  Graph<double> g(false);
  const double mse = scalar(g, alignment_loss(g, g.constant(t), g.constant(s), AlignLoss::mse));
  REQUIRE(mse == Catch::Approx((1.0 + std::pow(1.0 - std::log(3.0), 2)) / 2).epsilon(1e-12));
  const double ce = scalar(g, alignment_loss(g, g.constant(t), g.constant(s), AlignLoss::cross_entropy));
  REQUIRE(ce == Catch::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("translation loss values") {
  Graph<double> g(false);
  const int V = 16;
  Matrix<double> uniform(3, V);
  REQUIRE(scalar(g, ops::nll(g, g.constant(uniform), {1, 2, 3})) == Catch::Approx(std::log(16.0)).epsilon(1e-12));

  Matrix<double> sharp(3, V, -1e4);
  sharp(0, 1) = sharp(1, 2) = sharp(2, 3) = 0;
  REQUIRE(scalar(g, ops::nll(g, g.constant(sharp), {1, 2, 3})) == Catch::Approx(0.0).margin(1e-12));

  // Distributions (0.5, 0.25, 0.25), (0.1, 0.6, 0.3), (0.2, 0.2, 0.6); gold 0, 2, 2.
  Matrix<double> logits(3, 3);
  const double probs[3][3] = {{0.5, 0.25, 0.25}, {0.1, 0.6, 0.3}, {0.2, 0.2, 0.6}};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) logits(i, j) = std::log(probs[i][j]);
  const double hand = -(std::log(0.5) + std::log(0.3) + std::log(0.6)) / 3.0;
  REQUIRE(scalar(g, ops::nll(g, g.constant(logits), {0, 2, 2})) == Catch::Approx(hand).epsilon(1e-12));
  REQUIRE(scalar(g, ops::nll(g, g.constant(logits), {0, 2, 2}, false)) == Catch::Approx(3 * hand).epsilon(1e-12));
  REQUIRE(scalar(g, ops::nll(g, g.constant(logits), {0, -1, 2})) ==
          Catch::Approx(-(std::log(0.5) + std::log(0.6)) / 2.0).epsilon(1e-12));
  REQUIRE_THROWS(ops::nll(g, g.constant(logits), {0, 2}));
}

TEST_CASE("total loss is the weighted sum") {
  REQUIRE(total_loss(0.4, 2.3, 1.0) == Catch::Approx(2.7).epsilon(1e-15));
  REQUIRE(total_loss(0.4, 2.3, 0.0) == 2.3);
  REQUIRE_THROWS_AS(total_loss(0.4, 2.3, -1.0), ContractError);

  StudentModel<double> m(micro_config());
  std::mt19937_64 rng(5);
  const auto teacher = random_matrix<double>(6, 8, rng);
  const auto tf = teacher_forcing({3, 3, 4}, 1, 2);
  Graph<double> g(false);
  auto f = m.forward(g, noise_image(8, 8, 1), tf.input);
  auto l = m.losses(g, f, tf.target, teacher, 0.7);
  REQUIRE(scalar(g, l.total) == Catch::Approx(0.7 * scalar(g, l.align) + scalar(g, l.trans)).epsilon(1e-14));
  auto l0 = m.losses(g, f, tf.target, teacher, 0.0);
  REQUIRE(scalar(g, l0.total) == scalar(g, l0.trans));
}

TEST_CASE("decoder distributions are normalised") {
  StudentModel<float> m(micro_config());
  std::mt19937_64 rng(6);
  std::uniform_int_distribution<int> tok(0, 15);
  for (int trial = 0; trial < 20; ++trial) {
    const auto mem = m.memories(noise_image(8, 8, static_cast<std::uint64_t>(trial)));
    auto st = m.decoder().start(m.decoder().prepare({&mem.mix, &mem.image}));
    Matrix<float> logits, probs;
    for (int s = 0; s < 8; ++s) {
      m.decoder().step(st, tok(rng), logits);
      kernels::softmax_rows(logits, probs);
      double sum = 0;
      for (float p : probs.storage()) {
        REQUIRE(p >= 0.0F);
        sum += p;
      }
      REQUIRE(sum == Catch::Approx(1.0).margin(1e-6));
    }
    REQUIRE_THROWS_AS(m.decoder().step(st, 1, logits), ContractError);
  }
}

TEST_CASE("incremental decoding reproduces teacher forcing") {
  StudentModel<float> m(micro_config());
  const auto img = noise_image(8, 8, 9);
  const std::vector<int> input{1, 5, 9, 3, 12, 7};
  Graph<float> g(false);
  const auto full = g.value(m.forward(g, img, input).logits);
  const auto mem = m.memories(img);
  auto st = m.decoder().start(m.decoder().prepare({&mem.mix, &mem.image}));
  Matrix<float> logits;
  for (std::size_t i = 0; i < input.size(); ++i) {
    m.decoder().step(st, input[i], logits);
    REQUIRE(logits == full.slice_rows(i, i + 1));
  }
}

TEST_CASE("silencing the mix cross-attention removes its influence") {
  StudentModel<float> m(micro_config());
  for (const auto& p : m.parameters())
    if (p->name.find(".mix_attn.o.") != std::string::npos) p->value.fill(0.0F);
  const auto img = noise_image(8, 8, 4);
  const auto mem = m.memories(img);
  std::mt19937_64 rng(7);
  Matrix<float> other = random_matrix<float>(mem.mix.rows(), mem.mix.cols(), rng, 3.0);
  auto run = [&](const Matrix<float>& mix) {
    auto st = m.decoder().start(m.decoder().prepare({&mix, &mem.image}));
    Matrix<float> logits;
    for (int t : {1, 4, 6}) m.decoder().step(st, t, logits);
    return logits;
  };
  REQUIRE(run(mem.mix) == run(other));

  StudentModel<float> live(micro_config());
  const auto mem2 = live.memories(img);
  auto run_live = [&](const Matrix<float>& mix) {
    auto st = live.decoder().start(live.decoder().prepare({&mix, &mem2.image}));
    Matrix<float> logits;
    for (int t : {1, 4, 6}) live.decoder().step(st, t, logits);
    return logits;
  };
  REQUIRE_FALSE(run_live(mem2.mix) == run_live(other));
}

TEST_CASE("length projection weights touch one output row") {
  StudentModel<double> m(micro_config());
  const auto img = noise_image(8, 8, 5);
  Matrix<double> hidden;  // gelu(A^T W1 + b1) with A the feature projection output
  {
    Graph<double> g(false);
    auto a = m.ffn_dim()(g, m.align_encoder()(g, g.constant(m.patches(img))));
    hidden = g.value(ops::gelu(g, m.ffn_length().fc1(g, ops::transpose(g, a))));
  }
  auto& w2 = *m.ffn_length().fc2.w;
  const double eps = 1e-6;
  for (std::size_t h = 0; h < w2.value.rows(); ++h)
    for (std::size_t col = 0; col < w2.value.cols(); ++col) {
      const double keep = w2.value(h, col);
      w2.value(h, col) = keep + eps;
      const auto up = m.aligned(img);
      w2.value(h, col) = keep - eps;
      const auto down = m.aligned(img);
      w2.value(h, col) = keep;
      for (std::size_t r = 0; r < up.rows(); ++r)
        for (std::size_t j = 0; j < up.cols(); ++j) {
          const double d = (up(r, j) - down(r, j)) / (2 * eps);
          if (r != col)
            REQUIRE(d == 0.0);
          else
            REQUIRE(d == Catch::Approx(hidden(j, h)).margin(1e-7));
        }
    }
}

TEST_CASE("image encoder is independent of the alignment branch") {
  StudentModel<float> m(micro_config());
  const auto img = noise_image(8, 8, 6);
  Graph<float> g(false);
  const auto before = g.value(m.encode_image(g, g.constant(m.patches(img))));
  for (const auto& p : m.parameters())
    if (p->group == "align_encoder") p->value.fill(0.5F);
  Graph<float> g2(false);
  REQUIRE(g2.value(m.encode_image(g2, g2.constant(m.patches(img)))) == before);
  Graph<float> g3(false);
  const auto zero = g3.value(m.encode_image(g3, g3.constant(m.patches(RasterImage(8, 8, 0.0F)))));
  const auto one = g3.value(m.encode_image(g3, g3.constant(m.patches(RasterImage(8, 8, 1.0F)))));
  REQUIRE_FALSE(zero == one);
  REQUIRE(zero.rows() == 4);
  REQUIRE(zero.cols() == 6);
  REQUIRE_THROWS_AS(m.patches(RasterImage(16, 8)), ContractError);
}

TEST_CASE("parameter groups partition the model") {
  for (auto src : {AlignSource::own_encoder, AlignSource::image_encoder, AlignSource::teacher_output}) {
    StudentModel<float> m(micro_config(src));
    std::size_t sum = 0;
    std::vector<std::string> names;
    for (const auto& [gname, n] : m.group_counts()) {
      sum += n;
      names.push_back(gname);
    }
    REQUIRE(sum == m.parameters().count());
    const bool has_align = std::find(names.begin(), names.end(), "align_encoder") != names.end();
    REQUIRE(has_align == (src != AlignSource::teacher_output));
    REQUIRE(std::find(names.begin(), names.end(), "decoder") != names.end());
  }
  StudentModel<float> own(micro_config(AlignSource::own_encoder));
  StudentModel<float> shared(micro_config(AlignSource::image_encoder));
  REQUIRE(shared.parameters().count() < own.parameters().count());
}

TEST_CASE("teacher-output model needs the teacher representation") {
  StudentModel<float> m(micro_config(AlignSource::teacher_output));
  const auto img = noise_image(8, 8, 1);
  Graph<float> g(false);
  REQUIRE_THROWS_AS(m.forward(g, img, {1, 2}), ContractError);
  REQUIRE_THROWS_AS(m.memories(img), ContractError);
  Matrix<float> rep(6, 8, 0.25F);
  REQUIRE_NOTHROW(m.forward(g, img, {1, 2}, &rep));
  Matrix<float> wrong(5, 8);
  REQUIRE_THROWS_AS(m.memories(img, &wrong), ContractError);
}

TEST_CASE("model config and checkpoint round trip") {
  auto c = micro_config();
  c.align_loss = AlignLoss::mse;
  c.trans_loss_sum = true;
  const auto back = model_config_from_json(to_json(c));
  REQUIRE(to_json(back) == to_json(c));
  Json bad = to_json(c);
  bad["algn_len"] = 3;
  REQUIRE_THROWS_AS(model_config_from_json(bad), DataError);

  StudentModel<float> m(c);
  StudentModel<float> same(c);
  REQUIRE(m.parameters().hash() == same.parameters().hash());
  const auto dir = dimt::testing::scratch_dir("model");
  save_student(dir / "m.ckpt", m, Json{{"step", 5}});
  auto loaded = load_student<float>(dir / "m.ckpt");
  REQUIRE(loaded.model->parameters().hash() == m.parameters().hash());
  REQUIRE(loaded.extra.at("step") == 5);
  REQUIRE_FALSE(loaded.has_trailer);
  REQUIRE_THROWS_AS(load_student<float>(dir / "missing.ckpt"), DataError);
}
