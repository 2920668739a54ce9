#pragma once

// Corpus BLEU, plain-text extraction and plain-text BLEU.

#include <array>
#include <cctype>
#include <cmath>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "dimt/core/errors.hpp"
#include "dimt/core/log.hpp"
#include "dimt/text/markdown.hpp"

namespace dimt {

/// Whitespace split, with every non-alphanumeric character its own token.
inline std::vector<std::string> bleu_tokenize(std::string_view s) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) out.push_back(std::move(cur));
    cur.clear();
  };
  for (char c : s) {
    const auto u = static_cast<unsigned char>(c);
    if (std::isspace(u)) {
      flush();
    } else if (std::isalnum(u)) {
      cur.push_back(c);
    } else {
      flush();
      out.emplace_back(1, c);
    }
  }
  flush();
  return out;
}

struct BleuOptions {
  int max_order = 4;
  bool smoothing = true;
  double smooth_value = 0.1;  // replaces a zero match count
};

/// Corpus-aggregated n-gram statistics.
struct BleuStats {
  std::array<long, 4> matches{};
  std::array<long, 4> totals{};
  long hyp_len = 0;
  long ref_len = 0;

  void add(const std::vector<std::string>& hyp, const std::vector<std::string>& ref, int max_order) {
    hyp_len += static_cast<long>(hyp.size());
    ref_len += static_cast<long>(ref.size());
    for (int n = 1; n <= max_order; ++n) {
      std::map<std::vector<std::string>, long> ref_counts;
      for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= ref.size(); ++i)
        ++ref_counts[std::vector<std::string>(ref.begin() + static_cast<long>(i), ref.begin() + static_cast<long>(i) + n)];
      std::map<std::vector<std::string>, long> hyp_counts;
      for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= hyp.size(); ++i)
        ++hyp_counts[std::vector<std::string>(hyp.begin() + static_cast<long>(i), hyp.begin() + static_cast<long>(i) + n)];
      for (const auto& [gram, c] : hyp_counts) {
        totals[static_cast<std::size_t>(n - 1)] += c;
        const auto it = ref_counts.find(gram);
        if (it != ref_counts.end()) matches[static_cast<std::size_t>(n - 1)] += std::min(c, it->second);
      }
    }
  }

  /// Orders without any hypothesis n-gram are dropped from the mean.
  /// Two empty sides score 100 and an empty hypothesis alone scores 0.
  [[nodiscard]] double score(const BleuOptions& o) const {
    if (hyp_len == 0) return ref_len == 0 ? 100.0 : 0.0;
    double log_sum = 0.0;
    int orders = 0;
    for (int n = 0; n < o.max_order; ++n) {
      const auto t = totals[static_cast<std::size_t>(n)];
      if (t == 0) break;
      const auto m = matches[static_cast<std::size_t>(n)];
      double p = 0.0;
      if (m > 0)
        p = static_cast<double>(m) / static_cast<double>(t);
      else if (o.smoothing)
        p = o.smooth_value / static_cast<double>(t);
      if (p == 0.0) return 0.0;
      log_sum += std::log(p);
      ++orders;
    }
    const double bp = hyp_len >= ref_len ? 1.0 : std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(hyp_len));
    return 100.0 * bp * std::exp(log_sum / orders);
  }
};

inline double corpus_bleu(const std::vector<std::string>& hypotheses, const std::vector<std::string>& references,
                          const BleuOptions& opts = {}) {
  if (hypotheses.empty()) throw ContractError("corpus_bleu needs at least one pair");
  if (hypotheses.size() != references.size()) throw ContractError("corpus_bleu: list lengths differ");
  if (opts.max_order < 1 || opts.max_order > 4) throw ContractError("corpus_bleu: max_order must be 1..4");
  BleuStats st;
  for (std::size_t i = 0; i < hypotheses.size(); ++i)
    st.add(bleu_tokenize(hypotheses[i]), bleu_tokenize(references[i]), opts.max_order);
  return st.score(opts);
}

namespace detail {

/// Drops `$...$` and `$$...$$` spans; an unclosed span runs to the end of the line.
inline std::string drop_inline_formulas(std::string_view line, bool* unbalanced) {
  std::string out;
  std::size_t i = 0;
  while (i < line.size()) {
    if (line[i] != '$') {
      out.push_back(line[i++]);
      continue;
    }
    const bool dbl = i + 1 < line.size() && line[i + 1] == '$';
    const std::string_view delim = dbl ? "$$" : "$";
    const auto close = line.find(delim, i + delim.size());
    if (close == std::string_view::npos) {
      *unbalanced = true;
      break;
    }
    out.push_back(' ');
    i = close + delim.size();
  }
  return out;
}

inline std::string strip_once(std::string_view markdown, bool* unbalanced) {
  std::string text;
  auto append = [&](std::string_view line) {
    for (const auto& w : md::split_words(drop_inline_formulas(line, unbalanced))) {
      if (!text.empty()) text.push_back(' ');
      text += w;
    }
  };
  for (const auto& b : md::parse_blocks(markdown)) {
    switch (b.kind) {
      case md::BlockKind::heading:
      case md::BlockKind::paragraph:
      case md::BlockKind::list:
        for (const auto& l : b.lines) append(l);
        break;
      case md::BlockKind::table:
      case md::BlockKind::formula: break;
    }
  }
  return text;
}

}  // namespace detail

/// Prose only: formulas, tables and heading/list markers removed, words
/// joined by single spaces. Applied until stable so the result is a fixpoint.
inline std::string strip_plain_text(std::string_view markdown, bool* unbalanced = nullptr) {
  bool bad = false;
  std::string cur = detail::strip_once(markdown, &bad);
  for (;;) {
    std::string next = detail::strip_once(cur, &bad);
    if (next == cur) break;
    cur = std::move(next);
  }
  if (bad) warn("unbalanced formula delimiter; stripped to end of line");
  if (unbalanced) *unbalanced = bad;
  return cur;
}

inline double bleu_pt(const std::vector<std::string>& hypotheses, const std::vector<std::string>& references,
                      const BleuOptions& opts = {}) {
  if (hypotheses.size() != references.size()) throw ContractError("bleu_pt: list lengths differ");
  std::vector<std::string> h, r;
  h.reserve(hypotheses.size());
  r.reserve(references.size());
  for (const auto& s : hypotheses) h.push_back(strip_plain_text(s));
  for (const auto& s : references) r.push_back(strip_plain_text(s));
  return corpus_bleu(h, r, opts);
}

}  // namespace dimt
