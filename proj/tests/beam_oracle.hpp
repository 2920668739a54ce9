#pragma once

// Toy decoding models with an exhaustive search oracle, shared by the unit
// tests and the acceptance binary.

#include <functional>
#include <vector>

#include "dimt/core/hash.hpp"
#include "dimt/inference/beam.hpp"

namespace dimt::testing {

/// Distributions looked up from the consumed prefix through a seeded hash.
struct TableModel {
  int vocab = 3;
  std::uint64_t seed = 1;
  double sharpness = 2.0;
  using State = std::vector<int>;
  State start() const { return {}; }
  void step(State& s, int token, std::vector<double>& lp) const {
    s.push_back(token);
    std::vector<double> logits(static_cast<std::size_t>(vocab));
    for (int v = 0; v < vocab; ++v) {
      Fnv1a h;
      h.update(&seed, sizeof seed);
      h.update(s.data(), s.size() * sizeof(int));
      h.update(&v, sizeof v);
      logits[static_cast<std::size_t>(v)] = sharpness * static_cast<double>(h.digest() % 1000) / 1000.0;
    }
    log_softmax(logits.data(), logits.size(), lp);
  }
};

/// Best EOS-terminated sequence of length <= max_len by exhaustive enumeration.
inline BeamResult exhaustive(const TableModel& m, int bos, int eos, int max_len, double exponent) {
  BeamResult best;
  bool have = false;
  std::function<void(TableModel::State, std::vector<int>, double, std::vector<double>)> rec =
      [&](TableModel::State st, std::vector<int> toks, double lp, std::vector<double> next) {
        for (int v = 0; v < m.vocab; ++v) {
          auto t2 = toks;
          t2.push_back(v);
          const double l2 = lp + next[static_cast<std::size_t>(v)];
          if (v == eos) {
            const double sc = normalized_score(l2, t2.size(), exponent);
            if (!have || ranks_before(sc, t2, best.score, best.tokens)) best = {t2, l2, sc, false};
            have = true;
          } else if (static_cast<int>(t2.size()) < max_len) {
            auto s2 = st;
            std::vector<double> n2;
            m.step(s2, v, n2);
            rec(s2, t2, l2, n2);
          }
        }
      };
  TableModel::State s = m.start();
  std::vector<double> first;
  m.step(s, bos, first);
  rec(s, {}, 0.0, first);
  return best;
}

}  // namespace dimt::testing
