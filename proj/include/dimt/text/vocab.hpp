#pragma once

// Token vocabulary and the canonical markdown tokenizer.
//
// Lines are separated by <nl>. Within a line, whitespace-separated chunks are
// single tokens (words and markup), except formula chunks ($...$ and $$...$$),
// which are split into their delimiters and one token per symbol. Generated
// documents detokenize back to the exact same string.

#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "dimt/core/errors.hpp"
#include "dimt/core/hash.hpp"
#include "dimt/text/markdown.hpp"

namespace dimt {

inline constexpr int kPad = 0;
inline constexpr int kBos = 1;
inline constexpr int kEos = 2;
inline constexpr int kUnk = 3;
inline constexpr int kNewline = 4;

inline const std::vector<std::string>& special_tokens() {
  static const std::vector<std::string> t{"<pad>", "<bos>", "<eos>", "<unk>", "<nl>"};
  return t;
}
inline const std::vector<std::string>& markup_tokens() {
  static const std::vector<std::string> t{"#", "##", "###", "-", "|", "---", "$", "$$"};
  return t;
}
inline const std::vector<std::string>& formula_symbols() {
  static const std::vector<std::string> t{"x", "y", "z", "+", "=", "1", "2", "3"};
  return t;
}

class Vocabulary {
 public:
  Vocabulary() = default;

  /// Specials, markup and formula symbols first, then `words` in the given order.
  static Vocabulary build(const std::vector<std::string>& words) {
    Vocabulary v;
    for (const auto* group : {&special_tokens(), &markup_tokens(), &formula_symbols()})
      for (const auto& t : *group) v.push(t);
    for (const auto& w : words) v.push(w);
    return v;
  }

  [[nodiscard]] int size() const noexcept { return static_cast<int>(tokens_.size()); }
  [[nodiscard]] const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  [[nodiscard]] int id(std::string_view t) const {
    auto it = index_.find(std::string(t));
    return it == index_.end() ? kUnk : it->second;
  }
  [[nodiscard]] bool contains(std::string_view t) const { return index_.count(std::string(t)) != 0; }
  [[nodiscard]] const std::vector<std::string>& tokens() const noexcept { return tokens_; }

  [[nodiscard]] std::vector<int> encode(std::string_view markdown) const {
    std::vector<int> out;
    const auto lines = md::split_lines(markdown);
    for (std::size_t li = 0; li < lines.size(); ++li) {
      if (li > 0) out.push_back(kNewline);
      for (const auto& chunk : md::split_words(lines[li])) encode_chunk(chunk, out);
    }
    return out;
  }

  /// Inverse of encode. Stops at <eos>; skips <pad> and <bos>.
  [[nodiscard]] std::string decode(const std::vector<int>& ids) const {
    std::string out;
    bool line_start = true;
    std::string_view formula;  // open delimiter while inside a formula chunk
    for (int id : ids) {
      if (id == kEos) break;
      if (id == kPad || id == kBos) continue;
      if (id < 0 || id >= size()) id = kUnk;
      const std::string& t = tokens_[static_cast<std::size_t>(id)];
      if (id == kNewline) {
        out.push_back('\n');
        line_start = true;
        formula = {};
        continue;
      }
      if (!formula.empty()) {
        out += t;
        if (t == "$" || t == "$$") formula = {};
        continue;
      }
      if (!line_start) out.push_back(' ');
      line_start = false;
      out += t;
      if (t == "$" || t == "$$") formula = t == "$" ? "$" : "$$";
    }
    return out;
  }

  [[nodiscard]] std::uint64_t hash() const {
    Fnv1a h;
    for (const auto& t : tokens_) {
      h.update(t);
      h.update("\n");
    }
    return h.digest();
  }

  void save(const std::filesystem::path& path) const {
    std::ofstream os(path);
    if (!os) throw DataError("cannot write vocabulary: " + path.string());
    for (const auto& t : tokens_) os << t << '\n';
  }

  static Vocabulary load(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw DataError("missing vocabulary file: " + path.string());
    Vocabulary v;
    std::string line;
    while (std::getline(is, line))
      if (!line.empty()) v.push(line);
    const auto& sp = special_tokens();
    for (std::size_t i = 0; i < sp.size(); ++i)
      if (v.tokens_.size() <= i || v.tokens_[i] != sp[i]) throw DataError("vocabulary file lacks special tokens");
    return v;
  }

 private:
  void push(const std::string& t) {
    if (index_.count(t)) return;
    index_[t] = size();
    tokens_.push_back(t);
  }

  void encode_chunk(std::string_view chunk, std::vector<int>& out) const {
    const bool display = chunk.size() >= 4 && chunk.substr(0, 2) == "$$" && chunk.substr(chunk.size() - 2) == "$$";
    const bool inline_f = !display && chunk.size() >= 2 && chunk.front() == '$' && chunk.back() == '$' &&
                          chunk.substr(0, 2) != "$$";
    if (display || inline_f) {
      const std::size_t d = display ? 2 : 1;
      const int delim = id(chunk.substr(0, d));
      out.push_back(delim);
      for (char c : chunk.substr(d, chunk.size() - 2 * d)) out.push_back(id(std::string_view(&c, 1)));
      out.push_back(delim);
      return;
    }
    out.push_back(id(chunk));
  }

  std::vector<std::string> tokens_;
  std::map<std::string, int> index_;
};

}  // namespace dimt
