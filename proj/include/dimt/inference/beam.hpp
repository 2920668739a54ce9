#pragma once

// Beam search over an incremental step model.
//
// A step model provides `State start()` and
// `void step(State&, int token, std::vector<double>& log_probs)`, which
// consumes one token and yields log-probabilities for the next one.
// The beam shrinks by one slot for every finished hypothesis.

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "dimt/core/errors.hpp"

namespace dimt {

struct BeamConfig {
  int width = 4;
  int max_length = 256;  // generated tokens, EOS included
  double length_exponent = 1.0;

  void validate(int positions = std::numeric_limits<int>::max()) const {
    if (width < 1) throw ContractError("beam width must be at least 1");
    if (max_length < 1) throw ContractError("max length must be at least 1");
    if (max_length > positions)
      throw ContractError("max length " + std::to_string(max_length) + " exceeds decoder positions " +
                          std::to_string(positions));
    if (length_exponent < 0) throw ContractError("length exponent must be non-negative");
  }
};

struct BeamResult {
  std::vector<int> tokens;  // generated tokens without BOS, EOS included when finished
  double log_prob = 0.0;
  double score = 0.0;
  bool truncated = false;
};

inline double normalized_score(double log_prob, std::size_t length, double exponent) {
  return exponent == 0.0 ? log_prob : log_prob / std::pow(static_cast<double>(std::max<std::size_t>(length, 1)), exponent);
}

/// Higher score first; equal scores prefer the lexicographically smaller sequence.
inline bool ranks_before(double score_a, const std::vector<int>& a, double score_b, const std::vector<int>& b) {
  if (score_a != score_b) return score_a > score_b;
  return a < b;
}

inline void log_softmax(const float* logits, std::size_t n, std::vector<double>& out) {
  out.resize(n);
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) mx = std::max(mx, static_cast<double>(logits[i]));
  double s = 0;
  for (std::size_t i = 0; i < n; ++i) s += std::exp(static_cast<double>(logits[i]) - mx);
  const double lse = mx + std::log(s);
  for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<double>(logits[i]) - lse;
}

inline void log_softmax(const double* logits, std::size_t n, std::vector<double>& out) {
  out.resize(n);
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) mx = std::max(mx, logits[i]);
  double s = 0;
  for (std::size_t i = 0; i < n; ++i) s += std::exp(logits[i] - mx);
  const double lse = mx + std::log(s);
  for (std::size_t i = 0; i < n; ++i) out[i] = logits[i] - lse;
}

template <class Model>
BeamResult beam_search(Model& model, int bos, int eos, const BeamConfig& cfg) {
  cfg.validate();
  using State = decltype(model.start());
  struct Live {
    State state;
    std::vector<int> tokens;
    double log_prob = 0;
    std::vector<double> next;  // log-probabilities for the next token
  };
  struct Candidate {
    std::size_t parent;
    int token;
    double log_prob;
    double score;
    std::vector<int> tokens;
  };

  std::vector<Live> live(1);
  live[0].state = model.start();
  model.step(live[0].state, bos, live[0].next);
  std::vector<BeamResult> finished;
  std::vector<Candidate> last;

  for (int t = 1; t <= cfg.max_length && !live.empty(); ++t) {
    const std::size_t slots = static_cast<std::size_t>(cfg.width) - finished.size();
    std::vector<Candidate> cands;
    for (std::size_t h = 0; h < live.size(); ++h)
      for (std::size_t v = 0; v < live[h].next.size(); ++v) {
        Candidate c{h, static_cast<int>(v), live[h].log_prob + live[h].next[v], 0.0, live[h].tokens};
        c.tokens.push_back(c.token);
        c.score = normalized_score(c.log_prob, c.tokens.size(), cfg.length_exponent);
        cands.push_back(std::move(c));
      }
    const std::size_t keep = std::min(slots, cands.size());
    std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(keep), cands.end(),
                      [](const Candidate& a, const Candidate& b) {
                        // all candidates of a step share one length, so raw log-probability ranks them
                        return ranks_before(a.log_prob, a.tokens, b.log_prob, b.tokens);
                      });
    cands.resize(keep);

    std::vector<Live> next_live;
    last.clear();
    for (auto& c : cands) {
      if (c.token == eos) {
        finished.push_back({c.tokens, c.log_prob, c.score, false});
        continue;
      }
      if (t == cfg.max_length) {
        last.push_back(std::move(c));
        continue;
      }
      Live n;
      n.state = live[c.parent].state;
      n.tokens = std::move(c.tokens);
      n.log_prob = c.log_prob;
      model.step(n.state, c.token, n.next);
      next_live.push_back(std::move(n));
    }
    live = std::move(next_live);
  }

  if (!finished.empty()) {
    return *std::min_element(finished.begin(), finished.end(), [](const BeamResult& a, const BeamResult& b) {
      return ranks_before(a.score, a.tokens, b.score, b.tokens);
    });
  }
  if (last.empty()) throw ContractError("beam search produced no hypothesis");
  const auto& best = *std::min_element(last.begin(), last.end(), [](const Candidate& a, const Candidate& b) {
    return ranks_before(a.score, a.tokens, b.score, b.tokens);
  });
  return {best.tokens, best.log_prob, best.score, true};
}

/// Argmax rollout on the running log-probability; ties go to the lowest token id.
template <class Model>
BeamResult greedy_decode(Model& model, int bos, int eos, int max_length, double length_exponent = 1.0) {
  auto state = model.start();
  std::vector<double> lp;
  model.step(state, bos, lp);
  BeamResult r;
  for (int t = 1; t <= max_length; ++t) {
    int best = 0;
    for (std::size_t v = 1; v < lp.size(); ++v)
      if (r.log_prob + lp[v] > r.log_prob + lp[static_cast<std::size_t>(best)]) best = static_cast<int>(v);
    r.tokens.push_back(best);
    r.log_prob += lp[static_cast<std::size_t>(best)];
    if (best == eos) break;
    if (t == max_length) {
      r.truncated = true;
      break;
    }
    model.step(state, best, lp);
  }
  r.score = normalized_score(r.log_prob, r.tokens.size(), length_exponent);
  return r;
}

}  // namespace dimt
