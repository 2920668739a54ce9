#pragma once

// Adam, the warmup-then-linear-decay schedule, gradient accumulation and
// global-norm clipping.

#include <cmath>
#include <cstdint>
#include <istream>
#include <ostream>
#include <vector>

#include "dimt/core/autograd.hpp"
#include "dimt/core/errors.hpp"
#include "dimt/core/params.hpp"

namespace dimt {

struct Schedule {
  double peak = 5e-5;
  int warmup = 1000;
  int max_steps = 3000;
};

/// Linear ramp 0 -> peak over warmup steps, then linear decay to 0 at max_steps.
inline double lr_schedule(int step, const Schedule& s) {
  if (s.max_steps < 1 || s.warmup < 0 || s.warmup > s.max_steps) throw ContractError("invalid schedule");
  if (step < 0 || step > s.max_steps) throw ContractError("step outside the schedule");
  if (step < s.warmup) return s.peak * static_cast<double>(step) / static_cast<double>(s.warmup);
  if (s.max_steps == s.warmup) return s.peak;
  return s.peak * static_cast<double>(s.max_steps - step) / static_cast<double>(s.max_steps - s.warmup);
}

/// Gradient sums for every trainable parameter of a store, in store order.
template <class T>
class GradientBuffer {
 public:
  explicit GradientBuffer(const ParameterStore<T>& store) {
    for (const auto& p : store) grads_.emplace_back(p->value.rows(), p->value.cols());
  }

  void zero() {
    for (auto& g : grads_) g.fill(T(0));
  }

  /// Add the gradients recorded in `g` for the store's parameters.
  void accumulate(const Graph<T>& g, const ParameterStore<T>& store) {
    std::size_t i = 0;
    for (const auto& p : store) {
      if (const Matrix<T>* gp = g.grad_of(*p)) grads_[i] += *gp;
      ++i;
    }
  }

  [[nodiscard]] double norm() const {
    double s = 0;
    for (const auto& g : grads_)
      for (T v : g.storage()) s += static_cast<double>(v) * static_cast<double>(v);
    return std::sqrt(s);
  }

  void scale(T f) {
    for (auto& g : grads_)
      for (auto& v : g.storage()) v *= f;
  }

  /// Rescale to at most max_norm; returns the norm before clipping.
  double clip(double max_norm) {
    const double n = norm();
    if (max_norm > 0 && n > max_norm) scale(static_cast<T>(max_norm / n));
    return n;
  }

  [[nodiscard]] const Matrix<T>& operator[](std::size_t i) const { return grads_[i]; }
  Matrix<T>& operator[](std::size_t i) { return grads_[i]; }
  [[nodiscard]] std::size_t size() const { return grads_.size(); }

 private:
  std::vector<Matrix<T>> grads_;
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <class T>
class Adam {
 public:
  Adam(const ParameterStore<T>& store, AdamConfig cfg = {}) : cfg_(cfg) {
    for (const auto& p : store) {
      m_.emplace_back(p->value.rows(), p->value.cols());
      v_.emplace_back(p->value.rows(), p->value.cols());
    }
  }

  /// One update with bias correction; frozen parameters are skipped.
  void step(ParameterStore<T>& store, const GradientBuffer<T>& grads, double lr) {
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    const T b1 = static_cast<T>(cfg_.beta1), b2 = static_cast<T>(cfg_.beta2);
    const T step_size = static_cast<T>(lr / c1);
    const T inv_c2 = static_cast<T>(1.0 / c2);
    const T eps = static_cast<T>(cfg_.eps);
    std::size_t i = 0;
    for (auto& p : store) {
      if (!p->frozen) {
        auto& w = p->value.storage();
        const auto& g = grads[i].storage();
        auto& m = m_[i].storage();
        auto& v = v_[i].storage();
        for (std::size_t k = 0; k < w.size(); ++k) {
          m[k] = b1 * m[k] + (T(1) - b1) * g[k];
          v[k] = b2 * v[k] + (T(1) - b2) * g[k] * g[k];
          w[k] -= step_size * m[k] / (std::sqrt(v[k] * inv_c2) + eps);
        }
      }
      ++i;
    }
  }

  [[nodiscard]] std::uint64_t steps() const noexcept { return t_; }

  void save(std::ostream& os) const {
    binio::put<std::uint64_t>(os, t_);
    binio::put<std::uint64_t>(os, m_.size());
    for (std::size_t i = 0; i < m_.size(); ++i) {
      binio::write_matrix(os, m_[i]);
      binio::write_matrix(os, v_[i]);
    }
  }

  void load(std::istream& is) {
    t_ = binio::get<std::uint64_t>(is);
    const auto n = binio::get<std::uint64_t>(is);
    if (n != m_.size()) throw DataError("optimizer state does not match the model");
    for (std::size_t i = 0; i < n; ++i) {
      auto m = binio::read_matrix<T>(is);
      auto v = binio::read_matrix<T>(is);
      if (!m.same_shape(m_[i]) || !v.same_shape(v_[i])) throw DataError("optimizer state shape mismatch");
      m_[i] = std::move(m);
      v_[i] = std::move(v);
    }
  }

 private:
  AdamConfig cfg_;
  std::vector<Matrix<T>> m_, v_;
  std::uint64_t t_ = 0;
};

}  // namespace dimt
