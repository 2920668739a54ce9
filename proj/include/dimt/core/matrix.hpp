#pragma once

// Dense row-major matrices and the handful of kernels the models need.
//
// Every forward kernel computes output row i from input row i alone, with a
// fixed accumulation order. A prefix of rows therefore produces bit-identical
// results whether it is evaluated alone or as part of a larger matrix, which
// is what lets cached incremental decoding reproduce teacher forcing exactly.
// Build with -ffp-contract=off so scalar and vector tails agree.

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace dimt {

template <class T>
class Matrix {
 public:
  using value_type = T;

  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, T fill = T(0))
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<T> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) throw std::invalid_argument("Matrix: data size mismatch");
  }
  Matrix(std::initializer_list<std::initializer_list<T>> init) {
    rows_ = init.size();
    cols_ = rows_ ? init.begin()->size() : 0;
    data_.reserve(rows_ * cols_);
    for (const auto& r : init) {
      if (r.size() != cols_) throw std::invalid_argument("Matrix: ragged initializer");
      data_.insert(data_.end(), r.begin(), r.end());
    }
  }

  [[nodiscard]] std::size_t rows() const noexcept { return rows_; }
  [[nodiscard]] std::size_t cols() const noexcept { return cols_; }
  [[nodiscard]] std::size_t size() const noexcept { return data_.size(); }
  [[nodiscard]] bool empty() const noexcept { return data_.empty(); }

  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }
  std::vector<T>& storage() noexcept { return data_; }
  const std::vector<T>& storage() const noexcept { return data_; }

  T& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  const T& operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }
  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }

  std::span<T> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const T> row(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }
  void resize(std::size_t rows, std::size_t cols) {
    rows_ = rows;
    cols_ = cols;
    data_.assign(rows * cols, T(0));
  }

  [[nodiscard]] bool same_shape(const Matrix& o) const noexcept {
    return rows_ == o.rows_ && cols_ == o.cols_;
  }

  Matrix& operator+=(const Matrix& o) {
    check_same(o, "+=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
  }
  Matrix& operator*=(T s) {
    for (auto& v : data_) v *= s;
    return *this;
  }

  [[nodiscard]] Matrix transposed() const {
    Matrix out(cols_, rows_);
    for (std::size_t r = 0; r < rows_; ++r)
      for (std::size_t c = 0; c < cols_; ++c) out(c, r) = (*this)(r, c);
    return out;
  }

  /// Rows [begin, end) as a new matrix.
  [[nodiscard]] Matrix slice_rows(std::size_t begin, std::size_t end) const {
    if (begin > end || end > rows_) throw std::out_of_range("Matrix::slice_rows");
    Matrix out(end - begin, cols_);
    std::copy(data_.begin() + static_cast<std::ptrdiff_t>(begin * cols_),
              data_.begin() + static_cast<std::ptrdiff_t>(end * cols_), out.data_.begin());
    return out;
  }

  template <class U>
  [[nodiscard]] Matrix<U> cast() const {
    std::vector<U> d(data_.size());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = static_cast<U>(data_[i]);
    return Matrix<U>(rows_, cols_, std::move(d));
  }

  friend bool operator==(const Matrix& a, const Matrix& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
  }

  void check_same(const Matrix& o, const char* what) const {
    if (!same_shape(o))
      throw std::invalid_argument(std::string("Matrix shape mismatch in ") + what + ": " +
                                  std::to_string(rows_) + "x" + std::to_string(cols_) + " vs " +
                                  std::to_string(o.rows_) + "x" + std::to_string(o.cols_));
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

namespace kernels {

inline void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(what);
}

/// out = a * b (+ bias broadcast over rows, if given). Row-independent.
template <class T>
void matmul(const Matrix<T>& a, const Matrix<T>& b, Matrix<T>& out, const Matrix<T>* bias = nullptr) {
  require(a.cols() == b.rows(), "matmul: inner dimension mismatch");
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  out.resize(n, m);
  for (std::size_t i = 0; i < n; ++i) {
    T* o = out.data() + i * m;
    if (bias) {
      const T* bb = bias->data();
      for (std::size_t j = 0; j < m; ++j) o[j] = bb[j];
    }
    const T* ar = a.data() + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = ar[p];
      const T* br = b.data() + p * m;
      for (std::size_t j = 0; j < m; ++j) o[j] += av * br[j];
    }
  }
}

template <class T>
Matrix<T> matmul(const Matrix<T>& a, const Matrix<T>& b) {
  Matrix<T> out;
  matmul(a, b, out);
  return out;
}

/// out += a^T * b
template <class T>
void matmul_tn_acc(const Matrix<T>& a, const Matrix<T>& b, Matrix<T>& out) {
  require(a.rows() == b.rows(), "matmul_tn: row mismatch");
  require(out.rows() == a.cols() && out.cols() == b.cols(), "matmul_tn: output shape");
  const std::size_t n = a.rows(), ka = a.cols(), m = b.cols();
  for (std::size_t r = 0; r < n; ++r) {
    const T* ar = a.data() + r * ka;
    const T* br = b.data() + r * m;
    for (std::size_t i = 0; i < ka; ++i) {
      const T av = ar[i];
      if (av == T(0)) continue;
      T* o = out.data() + i * m;
      for (std::size_t j = 0; j < m; ++j) o[j] += av * br[j];
    }
  }
}

/// out += a * b^T
template <class T>
void matmul_nt_acc(const Matrix<T>& a, const Matrix<T>& b, Matrix<T>& out) {
  require(a.cols() == b.cols(), "matmul_nt: inner mismatch");
  require(out.rows() == a.rows() && out.cols() == b.rows(), "matmul_nt: output shape");
  const Matrix<T> bt = b.transposed();
  const std::size_t n = a.rows(), k = a.cols(), m = bt.cols();
  for (std::size_t i = 0; i < n; ++i) {
    T* o = out.data() + i * m;
    const T* ar = a.data() + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = ar[p];
      const T* br = bt.data() + p * m;
      for (std::size_t j = 0; j < m; ++j) o[j] += av * br[j];
    }
  }
}

template <class T>
T gelu(T x) {
  constexpr T c = T(0.7978845608028654);  // sqrt(2/pi)
  const T u = c * (x + T(0.044715) * x * x * x);
  return T(0.5) * x * (T(1) + std::tanh(u));
}

template <class T>
T gelu_grad(T x) {
  constexpr T c = T(0.7978845608028654);
  const T x2 = x * x;
  const T u = c * (x + T(0.044715) * x2 * x);
  const T t = std::tanh(u);
  const T du = c * (T(1) + T(3) * T(0.044715) * x2);
  return T(0.5) * (T(1) + t) + T(0.5) * x * (T(1) - t * t) * du;
}

template <class T>
void gelu_inplace(Matrix<T>& m) {
  for (auto& v : m.storage()) v = gelu(v);
}

inline constexpr double kLayerNormEps = 1e-5;

/// Row-wise layer normalisation. Optionally returns per-row mean and inverse std.
template <class T>
void layernorm(const Matrix<T>& x, const Matrix<T>& gain, const Matrix<T>& bias, Matrix<T>& out,
               std::vector<T>* mean_out = nullptr, std::vector<T>* rstd_out = nullptr) {
  const std::size_t n = x.rows(), d = x.cols();
  require(gain.size() == d && bias.size() == d, "layernorm: parameter width");
  out.resize(n, d);
  if (mean_out) mean_out->assign(n, T(0));
  if (rstd_out) rstd_out->assign(n, T(0));
  for (std::size_t i = 0; i < n; ++i) {
    const T* xr = x.data() + i * d;
    T mean = 0;
    for (std::size_t j = 0; j < d; ++j) mean += xr[j];
    mean /= static_cast<T>(d);
    T var = 0;
    for (std::size_t j = 0; j < d; ++j) {
      const T c = xr[j] - mean;
      var += c * c;
    }
    var /= static_cast<T>(d);
    const T rstd = T(1) / std::sqrt(var + static_cast<T>(kLayerNormEps));
    T* o = out.data() + i * d;
    for (std::size_t j = 0; j < d; ++j) o[j] = (xr[j] - mean) * rstd * gain[j] + bias[j];
    if (mean_out) (*mean_out)[i] = mean;
    if (rstd_out) (*rstd_out)[i] = rstd;
  }
}

/// Multi-head scaled dot-product attention over pre-projected q, k, v.
/// Query row i attends to keys [0, i + causal_offset] when causal, else all keys.
/// probs (optional) receives per-head attention weights, laid out
/// [head][query][key] with unattended entries left at zero.
template <class T>
void attention(const Matrix<T>& q, const Matrix<T>& k, const Matrix<T>& v, std::size_t heads,
               bool causal, std::size_t causal_offset, Matrix<T>& out,
               std::vector<T>* probs = nullptr) {
  const std::size_t nq = q.rows(), nk = k.rows(), d = q.cols();
  require(k.cols() == d && v.cols() == d && v.rows() == nk, "attention: shape mismatch");
  require(heads > 0 && d % heads == 0, "attention: width not divisible by heads");
  const std::size_t hd = d / heads;
  const T scale = T(1) / std::sqrt(static_cast<T>(hd));
  out.resize(nq, d);
  if (probs) probs->assign(heads * nq * nk, T(0));
  std::vector<T> p(nk);
  for (std::size_t h = 0; h < heads; ++h) {
    const std::size_t off = h * hd;
    for (std::size_t i = 0; i < nq; ++i) {
      const std::size_t limit = causal ? std::min(nk, i + causal_offset + 1) : nk;
      const T* qr = q.data() + i * d + off;
      T mx = -std::numeric_limits<T>::infinity();
      for (std::size_t j = 0; j < limit; ++j) {
        const T* kr = k.data() + j * d + off;
        T s = 0;
        for (std::size_t t = 0; t < hd; ++t) s += qr[t] * kr[t];
        s *= scale;
        p[j] = s;
        mx = std::max(mx, s);
      }
      T sum = 0;
      for (std::size_t j = 0; j < limit; ++j) {
        p[j] = std::exp(p[j] - mx);
        sum += p[j];
      }
      const T inv = T(1) / sum;
      for (std::size_t j = 0; j < limit; ++j) p[j] *= inv;
      T* o = out.data() + i * d + off;
      for (std::size_t t = 0; t < hd; ++t) o[t] = 0;
      for (std::size_t j = 0; j < limit; ++j) {
        const T pj = p[j];
        const T* vr = v.data() + j * d + off;
        for (std::size_t t = 0; t < hd; ++t) o[t] += pj * vr[t];
      }
      if (probs) {
        T* pr = probs->data() + (h * nq + i) * nk;
        for (std::size_t j = 0; j < limit; ++j) pr[j] = p[j];
      }
    }
  }
}

/// Numerically stable row-wise softmax.
template <class T>
void softmax_rows(const Matrix<T>& x, Matrix<T>& out) {
  out.resize(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    auto xr = x.row(i);
    auto o = out.row(i);
    const T mx = *std::max_element(xr.begin(), xr.end());
    T sum = 0;
    for (std::size_t j = 0; j < xr.size(); ++j) {
      o[j] = std::exp(xr[j] - mx);
      sum += o[j];
    }
    for (auto& v : o) v /= sum;
  }
}

template <class T>
void log_softmax_rows(const Matrix<T>& x, Matrix<T>& out) {
  out.resize(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    auto xr = x.row(i);
    auto o = out.row(i);
    const T mx = *std::max_element(xr.begin(), xr.end());
    T sum = 0;
    for (auto v : xr) sum += std::exp(v - mx);
    const T lse = mx + std::log(sum);
    for (std::size_t j = 0; j < xr.size(); ++j) o[j] = xr[j] - lse;
  }
}

}  // namespace kernels

template <class T>
bool all_finite(const Matrix<T>& m) {
  return std::all_of(m.storage().begin(), m.storage().end(), [](T v) { return std::isfinite(v); });
}

template <class T>
double frobenius_norm(const Matrix<T>& m) {
  double s = 0;
  for (auto v : m.storage()) s += static_cast<double>(v) * static_cast<double>(v);
  return std::sqrt(s);
}

}  // namespace dimt
