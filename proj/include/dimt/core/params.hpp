#pragma once

// Named parameter collections and their on-disk layout.
//
// Parameter block layout (all integers little-endian):
//   u32 dtype        4 = float32, 8 = float64
//   u64 count
//   count x { u32 name_len, name bytes, u64 rows, u64 cols, rows*cols values }
//
// Checkpoint files wrap one block:
//   8-byte magic, u32 format version, u64 header_len, header_len bytes of JSON,
//   parameter block, then optional trailing sections described by the header.

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <map>
#include <memory>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "dimt/core/autograd.hpp"
#include "dimt/core/errors.hpp"
#include "dimt/core/hash.hpp"

namespace dimt {

enum class InitKind { normal, zeros, ones };

template <class T>
class ParameterStore {
 public:
  ParameterStore() = default;
  ParameterStore(const ParameterStore&) = delete;
  ParameterStore& operator=(const ParameterStore&) = delete;
  ParameterStore(ParameterStore&&) noexcept = default;
  ParameterStore& operator=(ParameterStore&&) noexcept = default;

  Parameter<T>& add(std::string name, std::string group, std::size_t rows, std::size_t cols, InitKind kind,
                    double stddev = 0.0) {
    if (index_.count(name)) throw std::logic_error("duplicate parameter name: " + name);
    auto p = std::make_unique<Parameter<T>>();
    p->name = std::move(name);
    p->group = std::move(group);
    p->value = Matrix<T>(rows, cols);
    index_[p->name] = params_.size();
    inits_.push_back({kind, stddev});
    params_.push_back(std::move(p));
    return *params_.back();
  }

  /// Draw every parameter from its initializer, in creation order.
  void initialize(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto& v = params_[i]->value;
      switch (inits_[i].kind) {
        case InitKind::zeros: v.fill(T(0)); break;
        case InitKind::ones: v.fill(T(1)); break;
        case InitKind::normal:
          for (auto& x : v.storage()) x = static_cast<T>(normal(rng) * inits_[i].stddev);
          break;
      }
    }
  }

  void set_frozen(bool frozen) {
    for (auto& p : params_) p->frozen = frozen;
  }

  [[nodiscard]] std::size_t size() const noexcept { return params_.size(); }
  Parameter<T>& operator[](std::size_t i) { return *params_[i]; }
  const Parameter<T>& operator[](std::size_t i) const { return *params_[i]; }

  [[nodiscard]] Parameter<T>* find(const std::string& name) {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : params_[it->second].get();
  }
  [[nodiscard]] const Parameter<T>* find(const std::string& name) const {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : params_[it->second].get();
  }

  [[nodiscard]] std::size_t count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p->value.size();
    return n;
  }
  [[nodiscard]] std::size_t count(const std::string& group) const {
    std::size_t n = 0;
    for (const auto& p : params_)
      if (p->group == group) n += p->value.size();
    return n;
  }
  [[nodiscard]] std::vector<std::string> groups() const {
    std::vector<std::string> out;
    for (const auto& p : params_)
      if (std::find(out.begin(), out.end(), p->group) == out.end()) out.push_back(p->group);
    return out;
  }

  /// Fingerprint over names, shapes, and raw values.
  [[nodiscard]] std::uint64_t hash() const {
    Fnv1a h;
    for (const auto& p : params_) {
      h.update(p->name);
      const std::uint64_t shape[2] = {p->value.rows(), p->value.cols()};
      h.update(shape, sizeof shape);
      h.update(p->value.data(), p->value.size() * sizeof(T));
    }
    return h.digest();
  }

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

 private:
  struct InitSpec {
    InitKind kind;
    double stddev;
  };
  std::vector<std::unique_ptr<Parameter<T>>> params_;
  std::vector<InitSpec> inits_;
  std::map<std::string, std::size_t> index_;
};

namespace binio {

template <class V>
void put(std::ostream& os, V v) {
  static_assert(std::is_trivially_copyable_v<V>);
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <class V>
V get(std::istream& is) {
  V v{};
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!is) throw DataError("unexpected end of file");
  return v;
}

inline void put_string(std::ostream& os, const std::string& s) {
  put<std::uint64_t>(os, s.size());
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string get_string(std::istream& is, std::uint64_t limit = (1ULL << 32)) {
  const auto n = get<std::uint64_t>(is);
  if (n > limit) throw DataError("corrupt length field");
  std::string s(n, '\0');
  is.read(s.data(), static_cast<std::streamsize>(n));
  if (!is) throw DataError("unexpected end of file");
  return s;
}

template <class T>
void write_matrix(std::ostream& os, const Matrix<T>& m) {
  put<std::uint64_t>(os, m.rows());
  put<std::uint64_t>(os, m.cols());
  os.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(T)));
}

template <class T>
Matrix<T> read_matrix(std::istream& is) {
  const auto r = get<std::uint64_t>(is);
  const auto c = get<std::uint64_t>(is);
  if (r * c > (1ULL << 31)) throw DataError("corrupt matrix shape");
  Matrix<T> m(r, c);
  is.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(T)));
  if (!is) throw DataError("unexpected end of file");
  return m;
}

}  // namespace binio

template <class T>
void write_parameter_block(std::ostream& os, const ParameterStore<T>& store) {
  binio::put<std::uint32_t>(os, sizeof(T));
  binio::put<std::uint64_t>(os, store.size());
  for (const auto& p : store) {
    binio::put<std::uint32_t>(os, static_cast<std::uint32_t>(p->name.size()));
    os.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
    binio::write_matrix(os, p->value);
  }
}

/// Read a parameter block into `store`, matching by name and shape.
/// Every stored tensor must exist in `store` and vice versa.
template <class T>
void read_parameter_block(std::istream& is, ParameterStore<T>& store) {
  const auto dtype = binio::get<std::uint32_t>(is);
  const auto count = binio::get<std::uint64_t>(is);
  if (dtype != 4 && dtype != 8) throw DataError("unsupported parameter dtype");
  if (count != store.size())
    throw DataError("parameter count mismatch: file has " + std::to_string(count) + ", model has " +
                    std::to_string(store.size()));
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto len = binio::get<std::uint32_t>(is);
    if (len > 4096) throw DataError("corrupt parameter name");
    std::string name(len, '\0');
    is.read(name.data(), len);
    Parameter<T>* p = store.find(name);
    if (!p) throw DataError("unknown parameter in file: " + name);
    Matrix<T> m;
    if (dtype == sizeof(T)) {
      m = binio::read_matrix<T>(is);
    } else if (dtype == 4) {
      m = binio::read_matrix<float>(is).template cast<T>();
    } else {
      m = binio::read_matrix<double>(is).template cast<T>();
    }
    if (!m.same_shape(p->value))
      throw DataError("shape mismatch for parameter " + name + ": file " + std::to_string(m.rows()) + "x" +
                      std::to_string(m.cols()) + ", model " + std::to_string(p->value.rows()) + "x" +
                      std::to_string(p->value.cols()));
    p->value = std::move(m);
  }
}

/// Checkpoint envelope: magic, version, JSON header, then a parameter block.
struct Envelope {
  std::uint32_t version = 0;
  std::string header;
};

inline void write_envelope(std::ostream& os, const char (&magic)[9], std::uint32_t version, const std::string& header) {
  os.write(magic, 8);
  binio::put<std::uint32_t>(os, version);
  binio::put_string(os, header);
}

inline Envelope read_envelope(std::istream& is, const char (&magic)[9]) {
  char m[8];
  is.read(m, 8);
  if (!is || std::memcmp(m, magic, 8) != 0) throw DataError(std::string("bad file magic, expected ") + magic);
  Envelope e;
  e.version = binio::get<std::uint32_t>(is);
  e.header = binio::get_string(is, 1ULL << 26);
  return e;
}

}  // namespace dimt
