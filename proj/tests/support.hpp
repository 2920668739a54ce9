#pragma once

// Helpers shared by the unit tests and the acceptance binary.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <string>

#include "dimt/core/autograd.hpp"
#include "dimt/core/params.hpp"

namespace dimt::testing {

/// Largest elementwise relative error |a - n| / max(|a|, |n|, floor) per
/// parameter group, comparing backprop against central differences.
template <class Loss>
std::map<std::string, double> gradient_check(ParameterStore<double>& store, Loss&& loss, double h = 1e-6,
                                             double floor = 1e-6) {
  std::map<std::string, double> worst;
  std::map<std::string, Matrix<double>> analytic;
  {
    Graph<double> g(true);
    auto l = loss(g);
    g.backward(l);
    for (auto& p : store) {
      if (p->frozen) continue;
      const Matrix<double>* gp = g.grad_of(*p);
      analytic[p->name] = gp ? *gp : Matrix<double>(p->value.rows(), p->value.cols());
    }
  }
  auto eval = [&] {
    Graph<double> g(false);
    return g.value(loss(g))[0];
  };
  for (auto& p : store) {
    if (p->frozen) continue;
    double& w = worst[p->group];
    const auto& a = analytic[p->name];
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double keep = p->value[i];
      p->value[i] = keep + h;
      const double up = eval();
      p->value[i] = keep - h;
      const double down = eval();
      p->value[i] = keep;
      const double n = (up - down) / (2 * h);
      const double rel = std::abs(a[i] - n) / std::max({std::abs(a[i]), std::abs(n), floor});
      w = std::max(w, rel);
    }
  }
  return worst;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("dimt-test-" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

template <class T>
Matrix<T> random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Matrix<T> m(r, c);
  for (auto& v : m.storage()) v = static_cast<T>(n(rng));
  return m;
}

}  // namespace dimt::testing
