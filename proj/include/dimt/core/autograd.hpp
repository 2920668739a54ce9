#pragma once

// Reverse-mode automatic differentiation over Matrix<T> values.
//
// A Graph is built fresh for every forward pass. Trainable parameters enter
// through Graph::weight(), which records a leaf whose gradient can be read
// back after backward(). Frozen parameters, or any parameter in a graph built
// with gradients disabled, enter as constants and never receive gradients.

#include <cstdint>
#include <functional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "dimt/core/matrix.hpp"

namespace dimt {

template <class T>
struct Parameter {
  std::string name;
  std::string group;
  Matrix<T> value;
  bool frozen = false;
};

template <class T>
class Graph {
 public:
  struct Var {
    std::int32_t id = -1;
    [[nodiscard]] bool valid() const noexcept { return id >= 0; }
  };
  using BackFn = std::function<void(Graph&, Var)>;

  explicit Graph(bool grad_enabled = true) : grad_enabled_(grad_enabled) { nodes_.reserve(256); }
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  [[nodiscard]] bool grad_enabled() const noexcept { return grad_enabled_; }

  Var constant(Matrix<T> m) {
    Node n;
    n.owned = std::move(m);
    return push(std::move(n));
  }

  /// Leaf referencing an external matrix; the matrix must outlive the graph.
  Var constant_ref(const Matrix<T>& m) {
    Node n;
    n.ref = &m;
    return push(std::move(n));
  }

  Var weight(const Parameter<T>& p) {
    if (auto it = weights_.find(&p); it != weights_.end()) return it->second;
    Node n;
    n.ref = &p.value;
    n.needs_grad = grad_enabled_ && !p.frozen;
    Var v = push(std::move(n));
    weights_.emplace(&p, v);
    return v;
  }

  [[nodiscard]] const Matrix<T>& value(Var v) const {
    const Node& n = nodes_[static_cast<std::size_t>(v.id)];
    return n.ref ? *n.ref : n.owned;
  }
  [[nodiscard]] bool needs_grad(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].needs_grad; }

  /// Gradient buffer for v, zero-initialised on first access.
  Matrix<T>& grad(Var v) {
    Node& n = nodes_[static_cast<std::size_t>(v.id)];
    if (n.grad.empty()) {
      const Matrix<T>& val = value(v);
      n.grad.resize(val.rows(), val.cols());
    }
    return n.grad;
  }

  /// Gradient accumulated for p, or nullptr if p did not participate.
  [[nodiscard]] const Matrix<T>* grad_of(const Parameter<T>& p) const {
    auto it = weights_.find(&p);
    if (it == weights_.end()) return nullptr;
    const Node& n = nodes_[static_cast<std::size_t>(it->second.id)];
    return n.grad.empty() ? nullptr : &n.grad;
  }

  /// Record a computed node. fn runs during backward only if an input needs a gradient.
  Var make(Matrix<T> value, std::initializer_list<Var> inputs, BackFn fn) {
    Node n;
    n.owned = std::move(value);
    if (grad_enabled_) {
      for (Var in : inputs) n.needs_grad = n.needs_grad || needs_grad(in);
      if (n.needs_grad) n.back = std::move(fn);
    }
    return push(std::move(n));
  }

  /// Back-propagate from a 1x1 loss node.
  void backward(Var loss, T seed = T(1)) {
    if (value(loss).size() != 1) throw std::invalid_argument("backward: loss must be scalar");
    if (!needs_grad(loss)) return;
    grad(loss)[0] += seed;
    for (std::int32_t i = loss.id; i >= 0; --i) {
      Node& n = nodes_[static_cast<std::size_t>(i)];
      if (!n.back || n.grad.empty()) continue;
      n.back(*this, Var{i});
    }
  }

  [[nodiscard]] std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Matrix<T> owned;
    const Matrix<T>* ref = nullptr;
    Matrix<T> grad;
    bool needs_grad = false;
    BackFn back;
  };

  Var push(Node n) {
    nodes_.push_back(std::move(n));
    return Var{static_cast<std::int32_t>(nodes_.size() - 1)};
  }

  bool grad_enabled_;
  std::vector<Node> nodes_;
  std::unordered_map<const Parameter<T>*, Var> weights_;
};

/// Differentiable operations. Every op's forward pass delegates to the shared
/// kernels so graph evaluation and the cached decoder agree bit for bit.
namespace ops {

template <class T>
using Var = typename Graph<T>::Var;

template <class T>
Var<T> add(Graph<T>& g, Var<T> a, Var<T> b) {
  Matrix<T> out = g.value(a);
  out += g.value(b);
  return g.make(std::move(out), {a, b}, [a, b](Graph<T>& gr, Var<T> self) {
    const Matrix<T>& gy = gr.grad(self);
    if (gr.needs_grad(a)) gr.grad(a) += gy;
    if (gr.needs_grad(b)) gr.grad(b) += gy;
  });
}

template <class T>
Var<T> scale(Graph<T>& g, Var<T> a, T s) {
  Matrix<T> out = g.value(a);
  out *= s;
  return g.make(std::move(out), {a}, [a, s](Graph<T>& gr, Var<T> self) {
    Matrix<T> gy = gr.grad(self);
    gy *= s;
    gr.grad(a) += gy;
  });
}

/// x * w + b, with w of shape (in, out) and b of shape (1, out).
template <class T>
Var<T> linear(Graph<T>& g, Var<T> x, Var<T> w, Var<T> b) {
  Matrix<T> out;
  kernels::matmul(g.value(x), g.value(w), out, b.valid() ? &g.value(b) : nullptr);
  return g.make(std::move(out), {x, w, b.valid() ? b : w}, [x, w, b](Graph<T>& gr, Var<T> self) {
    const Matrix<T>& gy = gr.grad(self);
    if (gr.needs_grad(x)) kernels::matmul_nt_acc(gy, gr.value(w), gr.grad(x));
    if (gr.needs_grad(w)) kernels::matmul_tn_acc(gr.value(x), gy, gr.grad(w));
    if (b.valid() && gr.needs_grad(b)) {
      Matrix<T>& gb = gr.grad(b);
      for (std::size_t i = 0; i < gy.rows(); ++i)
        for (std::size_t j = 0; j < gy.cols(); ++j) gb[j] += gy(i, j);
    }
  });
}

template <class T>
Var<T> gelu(Graph<T>& g, Var<T> x) {
  Matrix<T> out = g.value(x);
  kernels::gelu_inplace(out);
  return g.make(std::move(out), {x}, [x](Graph<T>& gr, Var<T> self) {
    const Matrix<T>& gy = gr.grad(self);
    const Matrix<T>& xv = gr.value(x);
    Matrix<T>& gx = gr.grad(x);
    for (std::size_t i = 0; i < xv.size(); ++i) gx[i] += gy[i] * kernels::gelu_grad(xv[i]);
  });
}

template <class T>
Var<T> layernorm(Graph<T>& g, Var<T> x, Var<T> gain, Var<T> bias) {
  Matrix<T> out;
  std::vector<T> mean, rstd;
  kernels::layernorm(g.value(x), g.value(gain), g.value(bias), out, &mean, &rstd);
  return g.make(std::move(out), {x, gain, bias},
                [x, gain, bias, mean = std::move(mean), rstd = std::move(rstd)](Graph<T>& gr, Var<T> self) {
                  const Matrix<T>& gy = gr.grad(self);
                  const Matrix<T>& xv = gr.value(x);
                  const Matrix<T>& gv = gr.value(gain);
                  const std::size_t n = xv.rows(), d = xv.cols();
                  Matrix<T>* gx = gr.needs_grad(x) ? &gr.grad(x) : nullptr;
                  Matrix<T>* gg = gr.needs_grad(gain) ? &gr.grad(gain) : nullptr;
                  Matrix<T>* gb = gr.needs_grad(bias) ? &gr.grad(bias) : nullptr;
                  std::vector<T> xhat(d), dxhat(d);
                  for (std::size_t i = 0; i < n; ++i) {
                    T m1 = 0, m2 = 0;
                    for (std::size_t j = 0; j < d; ++j) {
                      xhat[j] = (xv(i, j) - mean[i]) * rstd[i];
                      dxhat[j] = gy(i, j) * gv[j];
                      m1 += dxhat[j];
                      m2 += dxhat[j] * xhat[j];
                      if (gg) (*gg)[j] += gy(i, j) * xhat[j];
                      if (gb) (*gb)[j] += gy(i, j);
                    }
                    m1 /= static_cast<T>(d);
                    m2 /= static_cast<T>(d);
                    if (gx)
                      for (std::size_t j = 0; j < d; ++j)
                        (*gx)(i, j) += rstd[i] * (dxhat[j] - m1 - xhat[j] * m2);
                  }
                });
}

/// Fused multi-head attention over already-projected q, k, v.
template <class T>
Var<T> attention(Graph<T>& g, Var<T> q, Var<T> k, Var<T> v, std::size_t heads, bool causal) {
  Matrix<T> out;
  std::vector<T> probs;
  kernels::attention(g.value(q), g.value(k), g.value(v), heads, causal, 0, out,
                     g.grad_enabled() ? &probs : nullptr);
  return g.make(std::move(out), {q, k, v}, [q, k, v, heads, probs = std::move(probs)](Graph<T>& gr, Var<T> self) {
    const Matrix<T>& gy = gr.grad(self);
    const Matrix<T>& qv = gr.value(q);
    const Matrix<T>& kv = gr.value(k);
    const Matrix<T>& vv = gr.value(v);
    const std::size_t nq = qv.rows(), nk = kv.rows(), d = qv.cols(), hd = d / heads;
    const T sc = T(1) / std::sqrt(static_cast<T>(hd));
    Matrix<T>* gq = gr.needs_grad(q) ? &gr.grad(q) : nullptr;
    Matrix<T>* gk = gr.needs_grad(k) ? &gr.grad(k) : nullptr;
    Matrix<T>* gv = gr.needs_grad(v) ? &gr.grad(v) : nullptr;
    std::vector<T> dp(nk);
    for (std::size_t h = 0; h < heads; ++h) {
      const std::size_t off = h * hd;
      for (std::size_t i = 0; i < nq; ++i) {
        const T* p = probs.data() + (h * nq + i) * nk;
        const T* go = gy.data() + i * d + off;
        T dot = 0;
        for (std::size_t j = 0; j < nk; ++j) {
          if (p[j] == T(0)) {
            dp[j] = 0;
            continue;
          }
          const T* vr = vv.data() + j * d + off;
          T s = 0;
          for (std::size_t t = 0; t < hd; ++t) s += go[t] * vr[t];
          dp[j] = s;
          dot += p[j] * s;
          if (gv) {
            T* gvr = gv->data() + j * d + off;
            for (std::size_t t = 0; t < hd; ++t) gvr[t] += p[j] * go[t];
          }
        }
        const T* qr = qv.data() + i * d + off;
        for (std::size_t j = 0; j < nk; ++j) {
          if (p[j] == T(0)) continue;
          const T ds = p[j] * (dp[j] - dot) * sc;
          const T* kr = kv.data() + j * d + off;
          if (gq) {
            T* gqr = gq->data() + i * d + off;
            for (std::size_t t = 0; t < hd; ++t) gqr[t] += ds * kr[t];
          }
          if (gk) {
            T* gkr = gk->data() + j * d + off;
            for (std::size_t t = 0; t < hd; ++t) gkr[t] += ds * qr[t];
          }
        }
      }
    }
  });
}

template <class T>
Var<T> transpose(Graph<T>& g, Var<T> x) {
  return g.make(g.value(x).transposed(), {x}, [x](Graph<T>& gr, Var<T> self) {
    gr.grad(x) += gr.grad(self).transposed();
  });
}

/// Gather rows of table by id.
template <class T>
Var<T> embedding(Graph<T>& g, Var<T> table, std::vector<int> ids) {
  const Matrix<T>& tv = g.value(table);
  Matrix<T> out(ids.size(), tv.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto id = static_cast<std::size_t>(ids[i]);
    if (id >= tv.rows()) throw std::out_of_range("embedding: id out of range");
    std::copy(tv.row(id).begin(), tv.row(id).end(), out.row(i).begin());
  }
  return g.make(std::move(out), {table}, [table, ids = std::move(ids)](Graph<T>& gr, Var<T> self) {
    const Matrix<T>& gy = gr.grad(self);
    Matrix<T>& gt = gr.grad(table);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      auto dst = gt.row(static_cast<std::size_t>(ids[i]));
      auto src = gy.row(i);
      for (std::size_t j = 0; j < src.size(); ++j) dst[j] += src[j];
    }
  });
}

template <class T>
Var<T> slice_rows(Graph<T>& g, Var<T> x, std::size_t begin, std::size_t end) {
  return g.make(g.value(x).slice_rows(begin, end), {x}, [x, begin](Graph<T>& gr, Var<T> self) {
    const Matrix<T>& gy = gr.grad(self);
    Matrix<T>& gx = gr.grad(x);
    for (std::size_t i = 0; i < gy.rows(); ++i)
      for (std::size_t j = 0; j < gy.cols(); ++j) gx(begin + i, j) += gy(i, j);
  });
}

/// wa * a + wb * b for 1x1 operands.
template <class T>
Var<T> weighted_sum(Graph<T>& g, Var<T> a, T wa, Var<T> b, T wb) {
  Matrix<T> out(1, 1, wa * g.value(a)[0] + wb * g.value(b)[0]);
  return g.make(std::move(out), {a, b}, [a, b, wa, wb](Graph<T>& gr, Var<T> self) {
    const T gy = gr.grad(self)[0];
    if (gr.needs_grad(a)) gr.grad(a)[0] += wa * gy;
    if (gr.needs_grad(b)) gr.grad(b)[0] += wb * gy;
  });
}

/// Negative log-likelihood of targets under row-wise softmax(logits).
/// Rows whose target is negative are ignored. Returns the mean over counted
/// rows, or the sum when `mean` is false.
template <class T>
Var<T> nll(Graph<T>& g, Var<T> logits, std::vector<int> targets, bool mean = true) {
  const Matrix<T>& lv = g.value(logits);
  if (targets.size() != lv.rows()) throw std::invalid_argument("nll: one target per row required");
  Matrix<T> logp;
  kernels::log_softmax_rows(lv, logp);
  T total = 0;
  std::size_t counted = 0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (targets[i] < 0) continue;
    total -= logp(i, static_cast<std::size_t>(targets[i]));
    ++counted;
  }
  const T norm = (mean && counted) ? T(1) / static_cast<T>(counted) : T(1);
  Matrix<T> out(1, 1, total * norm);
  return g.make(std::move(out), {logits},
                [logits, targets = std::move(targets), logp = std::move(logp), norm](Graph<T>& gr, Var<T> self) {
                  const T gy = gr.grad(self)[0] * norm;
                  Matrix<T>& gl = gr.grad(logits);
                  for (std::size_t i = 0; i < targets.size(); ++i) {
                    if (targets[i] < 0) continue;
                    for (std::size_t j = 0; j < logp.cols(); ++j) gl(i, j) += gy * std::exp(logp(i, j));
                    gl(i, static_cast<std::size_t>(targets[i])) -= gy;
                  }
                });
}

/// 1 - cos(a, b). Per-row cosine averaged over rows, or one cosine over the
/// flattened matrices when `flat`. Norms are offset by eps so zero rows stay finite.
template <class T>
Var<T> cosine_loss(Graph<T>& g, Var<T> a, Var<T> b, bool flat, T eps = T(1e-8)) {
  const Matrix<T>& av = g.value(a);
  const Matrix<T>& bv = g.value(b);
  av.check_same(bv, "cosine_loss");
  const std::size_t groups = flat ? 1 : av.rows();
  const std::size_t width = flat ? av.size() : av.cols();
  std::vector<T> dots(groups), na(groups), nb(groups);
  T loss = 0;
  for (std::size_t r = 0; r < groups; ++r) {
    const T* ar = av.data() + r * width;
    const T* br = bv.data() + r * width;
    T d = 0, sa = 0, sb = 0;
    for (std::size_t j = 0; j < width; ++j) {
      d += ar[j] * br[j];
      sa += ar[j] * ar[j];
      sb += br[j] * br[j];
    }
    dots[r] = d;
    na[r] = std::sqrt(sa);
    nb[r] = std::sqrt(sb);
    loss += T(1) - d / ((na[r] + eps) * (nb[r] + eps));
  }
  loss /= static_cast<T>(groups);
  return g.make(Matrix<T>(1, 1, loss), {a, b},
                [a, b, groups, width, eps, dots = std::move(dots), na = std::move(na), nb = std::move(nb)](
                    Graph<T>& gr, Var<T> self) {
                  const T gy = gr.grad(self)[0] / static_cast<T>(groups);
                  const Matrix<T>& av = gr.value(a);
                  const Matrix<T>& bv = gr.value(b);
                  Matrix<T>* ga = gr.needs_grad(a) ? &gr.grad(a) : nullptr;
                  Matrix<T>* gb = gr.needs_grad(b) ? &gr.grad(b) : nullptr;
                  for (std::size_t r = 0; r < groups; ++r) {
                    const T da = na[r] + eps, db = nb[r] + eps;
                    const T inv = T(1) / (da * db);
                    // d cos / d b = a/(da db) - dot * b / (da db^2 |b|); symmetric for a.
                    const T cb = nb[r] > T(0) ? dots[r] / (da * db * db * nb[r]) : T(0);
                    const T ca = na[r] > T(0) ? dots[r] / (db * da * da * na[r]) : T(0);
                    for (std::size_t j = 0; j < width; ++j) {
                      const std::size_t idx = r * width + j;
                      if (gb) (*gb)[idx] -= gy * (av[idx] * inv - cb * bv[idx]);
                      if (ga) (*ga)[idx] -= gy * (bv[idx] * inv - ca * av[idx]);
                    }
                  }
                });
}

/// Mean squared elementwise error.
template <class T>
Var<T> mse_loss(Graph<T>& g, Var<T> a, Var<T> b) {
  const Matrix<T>& av = g.value(a);
  const Matrix<T>& bv = g.value(b);
  av.check_same(bv, "mse_loss");
  T s = 0;
  for (std::size_t i = 0; i < av.size(); ++i) {
    const T d = av[i] - bv[i];
    s += d * d;
  }
  const T n = static_cast<T>(av.size());
  return g.make(Matrix<T>(1, 1, s / n), {a, b}, [a, b, n](Graph<T>& gr, Var<T> self) {
    const T gy = gr.grad(self)[0] * T(2) / n;
    const Matrix<T>& av = gr.value(a);
    const Matrix<T>& bv = gr.value(b);
    Matrix<T>* ga = gr.needs_grad(a) ? &gr.grad(a) : nullptr;
    Matrix<T>* gb = gr.needs_grad(b) ? &gr.grad(b) : nullptr;
    for (std::size_t i = 0; i < av.size(); ++i) {
      const T d = av[i] - bv[i];
      if (ga) (*ga)[i] += gy * d;
      if (gb) (*gb)[i] -= gy * d;
    }
  });
}

/// Mean over rows of CE(softmax(target_logits), softmax(logits)).
template <class T>
Var<T> soft_cross_entropy(Graph<T>& g, Var<T> target_logits, Var<T> logits) {
  const Matrix<T>& tv = g.value(target_logits);
  const Matrix<T>& sv = g.value(logits);
  tv.check_same(sv, "soft_cross_entropy");
  Matrix<T> p, logq;
  kernels::softmax_rows(tv, p);
  kernels::log_softmax_rows(sv, logq);
  T s = 0;
  for (std::size_t i = 0; i < p.size(); ++i) s -= p[i] * logq[i];
  const T n = static_cast<T>(tv.rows());
  return g.make(Matrix<T>(1, 1, s / n), {target_logits, logits},
                [target_logits, logits, n, p = std::move(p), logq = std::move(logq)](Graph<T>& gr, Var<T> self) {
                  const T gy = gr.grad(self)[0] / n;
                  if (gr.needs_grad(logits)) {
                    Matrix<T>& gl = gr.grad(logits);
                    for (std::size_t i = 0; i < p.size(); ++i) gl[i] += gy * (std::exp(logq[i]) - p[i]);
                  }
                  if (gr.needs_grad(target_logits)) {
                    Matrix<T>& gt = gr.grad(target_logits);
                    for (std::size_t i = 0; i < p.rows(); ++i) {
                      T mean_logq = 0;
                      for (std::size_t j = 0; j < p.cols(); ++j) mean_logq += p(i, j) * logq(i, j);
                      for (std::size_t j = 0; j < p.cols(); ++j)
                        gt(i, j) -= gy * p(i, j) * (logq(i, j) - mean_logq);
                    }
                  }
                });
}

}  // namespace ops
}  // namespace dimt
