#pragma once

// Per-corpus and per-slice scores.

#include <algorithm>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "dimt/core/errors.hpp"
#include "dimt/core/jsonio.hpp"
#include "dimt/metrics/bleu.hpp"
#include "dimt/metrics/structure.hpp"

namespace dimt {

struct EvalRow {
  std::string id;
  std::string hypothesis;
  std::string reference;
  int context_length = 0;
  int layout_nodes = 0;
  double steds = 0.0;
  bool truncated = false;
};

struct Scores {
  double bleu = 0.0;
  double bleu_pt = 0.0;
  double steds = 0.0;
  std::size_t count = 0;
};

struct Slice {
  std::string name;
  std::vector<std::size_t> members;  // row indices
};

struct EvalReport {
  Scores corpus;
  std::vector<std::pair<std::string, std::optional<Scores>>> slices;  // absent when the slice is empty
  std::vector<EvalRow> rows;
  Json provenance = Json::object();
};

inline Json to_json(const Scores& s) {
  return Json{{"BLEU", s.bleu}, {"BLEU_PT", s.bleu_pt}, {"STEDS", s.steds}, {"count", s.count}};
}

inline Json to_json(const EvalReport& r, bool with_rows = true) {
  Json j;
  j["corpus"] = to_json(r.corpus);
  Json sl = Json::object();
  for (const auto& [name, s] : r.slices) sl[name] = s ? to_json(*s) : Json(nullptr);
  j["slices"] = sl;
  if (with_rows) {
    Json rows = Json::array();
    for (const auto& row : r.rows)
      rows.push_back({{"id", row.id},
                      {"context_length", row.context_length},
                      {"layout_nodes", row.layout_nodes},
                      {"steds", row.steds},
                      {"truncated", row.truncated},
                      {"hypothesis", row.hypothesis},
                      {"reference", row.reference}});
    j["samples"] = rows;
  }
  j["provenance"] = r.provenance;
  return j;
}

/// Fills per-row STEDS from the hypothesis and reference structure trees.
inline void score_rows(std::vector<EvalRow>& rows) {
  TreeEditDistance ted;
  for (auto& r : rows) {
    const auto a = parse_structure_tree(r.hypothesis);
    const auto b = parse_structure_tree(r.reference);
    r.steds = steds_from_distance(ted(a, b), a.size(), b.size());
  }
}

/// BLEU and BLEU-PT over the members, STEDS as the mean of per-row values.
inline std::optional<Scores> score_subset(const std::vector<EvalRow>& rows, const std::vector<std::size_t>& members,
                                          const BleuOptions& opts = {}) {
  if (members.empty()) return std::nullopt;
  std::vector<std::string> h, r;
  double steds_sum = 0.0;
  for (auto i : members) {
    h.push_back(rows.at(i).hypothesis);
    r.push_back(rows.at(i).reference);
    steds_sum += rows.at(i).steds;
  }
  Scores s;
  s.bleu = corpus_bleu(h, r, opts);
  s.bleu_pt = bleu_pt(h, r, opts);
  s.steds = steds_sum / static_cast<double>(members.size());
  s.count = members.size();
  return s;
}

inline const std::vector<std::pair<int, int>>& context_bucket_bounds() {
  static const std::vector<std::pair<int, int>> b{
      {0, 250}, {250, 500}, {500, 750}, {750, std::numeric_limits<int>::max()}};
  return b;
}

inline std::string context_bucket_name(std::size_t i) {
  const auto [lo, hi] = context_bucket_bounds().at(i);
  return "context(" + std::to_string(lo) + "," + (hi == std::numeric_limits<int>::max() ? std::string("inf)") : std::to_string(hi) + "]");
}

/// Index of the bucket (lo, hi] holding `words`; a zero-word document joins the first bucket.
inline std::size_t context_bucket(int words) {
  const auto& b = context_bucket_bounds();
  for (std::size_t i = 0; i < b.size(); ++i)
    if (words <= b[i].second) return i;
  return b.size() - 1;
}

inline std::vector<Slice> context_slices(const std::vector<EvalRow>& rows) {
  std::vector<Slice> out;
  for (std::size_t i = 0; i < context_bucket_bounds().size(); ++i) out.push_back({context_bucket_name(i), {}});
  for (std::size_t i = 0; i < rows.size(); ++i) out[context_bucket(rows[i].context_length)].members.push_back(i);
  return out;
}

/// The k rows with the fewest and the most structure nodes; ties keep corpus order.
inline std::vector<Slice> complexity_slices(const std::vector<EvalRow>& rows, std::size_t k) {
  std::vector<std::size_t> order(rows.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return rows[a].layout_nodes < rows[b].layout_nodes; });
  const std::size_t n = std::min(k, rows.size());
  Slice simple{"simple_bottom" + std::to_string(k), {order.begin(), order.begin() + static_cast<long>(n)}};
  std::vector<std::size_t> rev(order.rbegin(), order.rend());
  std::stable_sort(rev.begin(), rev.end(),
                   [&](std::size_t a, std::size_t b) { return rows[a].layout_nodes > rows[b].layout_nodes; });
  Slice complex{"complex_top" + std::to_string(k), {rev.begin(), rev.begin() + static_cast<long>(n)}};
  std::sort(simple.members.begin(), simple.members.end());
  std::sort(complex.members.begin(), complex.members.end());
  return {simple, complex};
}

inline Slice whole_slice(const std::vector<EvalRow>& rows, std::string name = "all") {
  Slice s{std::move(name), std::vector<std::size_t>(rows.size())};
  std::iota(s.members.begin(), s.members.end(), std::size_t{0});
  return s;
}

/// Corpus scores plus one entry per slice. Rows must already carry STEDS.
inline EvalReport slice_report(std::vector<EvalRow> rows, const std::vector<Slice>& slices, const BleuOptions& opts = {}) {
  if (rows.empty()) throw ContractError("slice_report needs at least one sample");
  EvalReport rep;
  rep.corpus = *score_subset(rows, whole_slice(rows).members, opts);
  for (const auto& s : slices) rep.slices.emplace_back(s.name, score_subset(rows, s.members, opts));
  rep.rows = std::move(rows);
  return rep;
}

/// Standard slices: context buckets plus simple/complex layout subsets.
inline std::vector<Slice> default_slices(const std::vector<EvalRow>& rows, std::size_t complexity_k) {
  auto s = context_slices(rows);
  for (auto& c : complexity_slices(rows, complexity_k)) s.push_back(std::move(c));
  return s;
}

}  // namespace dimt
