#pragma once

// The synthetic target language: a word-for-word bijective lexicon from
// lowercase source words to uppercase target words. Lexicon targets never
// start with 'Z'; out-of-lexicon words map to "Z" + uppercase(word), which
// keeps the mapping invertible for every input.

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "dimt/core/errors.hpp"
#include "dimt/core/hash.hpp"
#include "dimt/text/markdown.hpp"

namespace dimt {

/// Rewrite every word chunk outside formulas. A word chunk is a maximal
/// run of non-space characters made only of ASCII letters. Whitespace and
/// every other chunk are copied verbatim.
inline std::string map_words(std::string_view text, const std::function<std::string(std::string_view)>& fn) {
  std::string out;
  out.reserve(text.size() * 2);
  bool in_inline = false;   // between single-$ delimiters
  bool in_display = false;  // inside a multi-line $$ block
  const auto lines = md::split_lines(text);
  for (std::size_t li = 0; li < lines.size(); ++li) {
    if (li > 0) out.push_back('\n');
    const std::string_view line = lines[li];
    const std::string_view t = md::trim(line);
    if (in_display) {
      out += line;
      if (t.size() >= 2 && t.substr(t.size() - 2) == "$$") in_display = false;
      continue;
    }
    if (md::opens_formula(t) && !md::closes_formula_inline(t)) {
      out += line;
      in_display = true;
      continue;
    }
    in_inline = false;
    std::size_t i = 0;
    while (i < line.size()) {
      if (std::isspace(static_cast<unsigned char>(line[i]))) {
        out.push_back(line[i++]);
        continue;
      }
      const std::size_t b = i;
      while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
      const std::string_view chunk = line.substr(b, i - b);
      const bool alpha = std::all_of(chunk.begin(), chunk.end(), [](char c) {
        return std::isalpha(static_cast<unsigned char>(c)) != 0;
      });
      if (alpha && !in_inline) {
        out += fn(chunk);
      } else {
        out += chunk;
        if (chunk.find("$$") == std::string_view::npos)
          in_inline ^= (std::count(chunk.begin(), chunk.end(), '$') % 2) == 1;
      }
    }
  }
  return out;
}

/// Number of lowercase source words in a document (formula content excluded).
inline int measure_context_length(std::string_view markdown) {
  int n = 0;
  map_words(markdown, [&](std::string_view w) {
    if (md::is_lower_word(w)) ++n;
    return std::string(w);
  });
  return n;
}

inline std::string to_upper(std::string_view s) {
  std::string o(s);
  for (auto& c : o) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return o;
}
inline std::string to_lower(std::string_view s) {
  std::string o(s);
  for (auto& c : o) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return o;
}

class Lexicon {
 public:
  /// Largest lexicon generate() can produce: all two-letter lowercase words.
  static constexpr int kCapacity = 26 * 26;

  Lexicon() = default;
  explicit Lexicon(const std::vector<std::pair<std::string, std::string>>& pairs) {
    for (const auto& [s, t] : pairs) add(s, t);
  }

  /// `size` two-letter source words paired with three-letter targets, both
  /// drawn without replacement from a seeded shuffle.
  static Lexicon generate(std::uint64_t seed, int size) {
    if (size < 1 || size > kCapacity)
      throw ContractError("lexicon size must be in [1, " + std::to_string(kCapacity) + "]");
    std::mt19937_64 rng(seed);
    std::vector<std::string> src, tgt;
    for (char a = 'a'; a <= 'z'; ++a)
      for (char b = 'a'; b <= 'z'; ++b) src.push_back(std::string{a, b});
    for (char a = 'A'; a < 'Z'; ++a)
      for (char b = 'A'; b <= 'Z'; ++b)
        for (char c = 'A'; c <= 'Z'; ++c) tgt.push_back(std::string{a, b, c});
    std::shuffle(src.begin(), src.end(), rng);
    std::shuffle(tgt.begin(), tgt.end(), rng);
    Lexicon lx;
    for (int i = 0; i < size; ++i) lx.add(src[static_cast<std::size_t>(i)], tgt[static_cast<std::size_t>(i)]);
    return lx;
  }

  [[nodiscard]] std::string forward(std::string_view w) const {
    auto it = fwd_.find(std::string(w));
    return it != fwd_.end() ? it->second : "Z" + to_upper(w);
  }
  [[nodiscard]] std::string inverse(std::string_view w) const {
    auto it = inv_.find(std::string(w));
    if (it != inv_.end()) return it->second;
    if (w.size() > 1 && w[0] == 'Z') return to_lower(w.substr(1));
    return std::string(w);
  }

  [[nodiscard]] const std::vector<std::string>& source_words() const noexcept { return src_; }
  [[nodiscard]] std::vector<std::string> target_words() const {
    std::vector<std::string> out;
    for (const auto& s : src_) out.push_back(fwd_.at(s));
    return out;
  }
  [[nodiscard]] int size() const noexcept { return static_cast<int>(src_.size()); }

  [[nodiscard]] std::uint64_t hash() const {
    Fnv1a h;
    for (const auto& s : src_) {
      h.update(s);
      h.update("\t");
      h.update(fwd_.at(s));
      h.update("\n");
    }
    return h.digest();
  }

  void save(const std::filesystem::path& path) const {
    std::ofstream os(path);
    if (!os) throw DataError("cannot write lexicon: " + path.string());
    for (const auto& s : src_) os << s << '\t' << fwd_.at(s) << '\n';
  }
  static Lexicon load(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw DataError("missing lexicon file: " + path.string());
    Lexicon lx;
    std::string line;
    while (std::getline(is, line)) {
      if (line.empty()) continue;
      const auto tab = line.find('\t');
      if (tab == std::string::npos) throw DataError("malformed lexicon line: " + line);
      lx.add(line.substr(0, tab), line.substr(tab + 1));
    }
    return lx;
  }

 private:
  void add(const std::string& s, const std::string& t) {
    if (fwd_.count(s) || inv_.count(t)) throw DataError("lexicon is not a bijection at " + s + " -> " + t);
    if (!t.empty() && t[0] == 'Z') throw DataError("lexicon targets may not start with Z: " + t);
    fwd_[s] = t;
    inv_[t] = s;
    src_.push_back(s);
  }

  std::map<std::string, std::string> fwd_, inv_;
  std::vector<std::string> src_;
};

/// Word-for-word translation; markup, formulas and whitespace are kept verbatim.
inline std::string translate_source(std::string_view source_markdown, const Lexicon& lx) {
  return map_words(source_markdown, [&](std::string_view w) { return lx.forward(w); });
}

inline std::string invert_target(std::string_view target_markdown, const Lexicon& lx) {
  return map_words(target_markdown, [&](std::string_view w) { return lx.inverse(w); });
}

}  // namespace dimt
