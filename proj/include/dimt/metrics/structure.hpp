#pragma once

// Document structure trees, ordered tree edit distance and STEDS.

#include <algorithm>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "dimt/text/markdown.hpp"

namespace dimt {

enum class NodeLabel : std::uint8_t {
  root,
  heading1,
  heading2,
  heading3,
  paragraph,
  list,
  list_item,
  table,
  formula
};

inline const char* label_name(NodeLabel l) {
  static constexpr const char* names[] = {"root",      "heading1", "heading2",  "heading3", "paragraph",
                                          "list",      "list_item", "table",    "formula"};
  return names[static_cast<int>(l)];
}

/// Ordered labeled tree stored in preorder: node 0 is the root and every
/// parent index precedes its children. Labels are small integers so the
/// distance code also serves synthetic label alphabets.
struct LabeledTree {
  std::vector<int> labels;
  std::vector<int> parent;  // -1 for the root

  [[nodiscard]] std::size_t size() const noexcept { return labels.size(); }
  int add(int label, int parent_index) {
    labels.push_back(label);
    parent.push_back(parent_index);
    return static_cast<int>(labels.size()) - 1;
  }
  friend bool operator==(const LabeledTree&, const LabeledTree&) = default;
};

using StructureTree = LabeledTree;

/// Blocks hang off the root; headings nest under the nearest preceding
/// heading of lower level; lists own one list_item per bullet line.
inline StructureTree parse_structure_tree(std::string_view markdown) {
  StructureTree t;
  t.add(static_cast<int>(NodeLabel::root), -1);
  std::vector<std::pair<int, int>> headings;  // (level, node)
  for (const auto& b : md::parse_blocks(markdown)) {
    switch (b.kind) {
      case md::BlockKind::heading: {
        while (!headings.empty() && headings.back().first >= b.level) headings.pop_back();
        const int parent = headings.empty() ? 0 : headings.back().second;
        const int n = t.add(static_cast<int>(NodeLabel::heading1) + b.level - 1, parent);
        headings.emplace_back(b.level, n);
        break;
      }
      case md::BlockKind::paragraph: t.add(static_cast<int>(NodeLabel::paragraph), 0); break;
      case md::BlockKind::list: {
        const int l = t.add(static_cast<int>(NodeLabel::list), 0);
        for (std::size_t i = 0; i < b.lines.size(); ++i) t.add(static_cast<int>(NodeLabel::list_item), l);
        break;
      }
      case md::BlockKind::table: t.add(static_cast<int>(NodeLabel::table), 0); break;
      case md::BlockKind::formula: t.add(static_cast<int>(NodeLabel::formula), 0); break;
    }
  }
  return t;
}

/// Node count of the structure tree.
inline int measure_layout_complexity(std::string_view markdown) {
  return static_cast<int>(parse_structure_tree(markdown).size());
}

/// Zhang-Shasha ordered tree edit distance with unit insert, delete and
/// relabel costs. Reuse one instance to avoid reallocating scratch space.
class TreeEditDistance {
 public:
  int operator()(const LabeledTree& a, const LabeledTree& b) {
    if (a.size() == 0 || b.size() == 0) return static_cast<int>(a.size() + b.size());
    prepare(a, a_);
    prepare(b, b_);
    const std::size_t n = a_.labels.size(), m = b_.labels.size();
    td_.assign(n * m, 0);
    fd_.resize((n + 1) * (m + 1));
    for (int i : a_.keyroots)
      for (int j : b_.keyroots) treedist(i, j, m);
    return td_[(n - 1) * m + (m - 1)];
  }

 private:
  struct Post {
    std::vector<int> labels;    // by postorder index
    std::vector<int> leftmost;  // leftmost leaf descendant, postorder index
    std::vector<int> keyroots;
  };

  static void prepare(const LabeledTree& t, Post& p) {
    const std::size_t n = t.size();
    std::vector<std::vector<int>> children(n);
    for (std::size_t i = 1; i < n; ++i) children[static_cast<std::size_t>(t.parent[i])].push_back(static_cast<int>(i));
    p.labels.assign(n, 0);
    p.leftmost.assign(n, 0);
    std::vector<int> post_of(n);
    int counter = 0;
    // Iterative postorder.
    std::vector<std::pair<int, std::size_t>> stack{{0, 0}};
    while (!stack.empty()) {
      auto& [node, next] = stack.back();
      const auto& ch = children[static_cast<std::size_t>(node)];
      if (next < ch.size()) {
        const int c = ch[next++];
        stack.emplace_back(c, 0);
        continue;
      }
      const int id = counter++;
      post_of[static_cast<std::size_t>(node)] = id;
      p.labels[static_cast<std::size_t>(id)] = t.labels[static_cast<std::size_t>(node)];
      p.leftmost[static_cast<std::size_t>(id)] =
          ch.empty() ? id : p.leftmost[static_cast<std::size_t>(post_of[static_cast<std::size_t>(ch.front())])];
      stack.pop_back();
    }
    p.keyroots.clear();
    std::vector<char> seen(n, 0);
    for (int i = static_cast<int>(n) - 1; i >= 0; --i) {
      const int l = p.leftmost[static_cast<std::size_t>(i)];
      if (!seen[static_cast<std::size_t>(l)]) {
        seen[static_cast<std::size_t>(l)] = 1;
        p.keyroots.push_back(i);
      }
    }
    std::sort(p.keyroots.begin(), p.keyroots.end());
  }

  void treedist(int i, int j, std::size_t m) {
    const int li = a_.leftmost[static_cast<std::size_t>(i)];
    const int lj = b_.leftmost[static_cast<std::size_t>(j)];
    const int rows = i - li + 2, cols = j - lj + 2;
    auto fd = [&](int r, int c) -> int& { return fd_[static_cast<std::size_t>(r) * static_cast<std::size_t>(cols) + static_cast<std::size_t>(c)]; };
    fd(0, 0) = 0;
    for (int r = 1; r < rows; ++r) fd(r, 0) = fd(r - 1, 0) + 1;
    for (int c = 1; c < cols; ++c) fd(0, c) = fd(0, c - 1) + 1;
    for (int r = 1; r < rows; ++r) {
      const int i1 = li + r - 1;
      const int li1 = a_.leftmost[static_cast<std::size_t>(i1)];
      for (int c = 1; c < cols; ++c) {
        const int j1 = lj + c - 1;
        const int lj1 = b_.leftmost[static_cast<std::size_t>(j1)];
        const int del = fd(r - 1, c) + 1;
        const int ins = fd(r, c - 1) + 1;
        if (li1 == li && lj1 == lj) {
          const int rel = fd(r - 1, c - 1) +
                          (a_.labels[static_cast<std::size_t>(i1)] != b_.labels[static_cast<std::size_t>(j1)] ? 1 : 0);
          const int v = std::min({del, ins, rel});
          fd(r, c) = v;
          td_[static_cast<std::size_t>(i1) * m + static_cast<std::size_t>(j1)] = v;
        } else {
          const int sub = fd(li1 - li, lj1 - lj) + td_[static_cast<std::size_t>(i1) * m + static_cast<std::size_t>(j1)];
          fd(r, c) = std::min({del, ins, sub});
        }
      }
    }
  }

  Post a_, b_;
  std::vector<int> td_, fd_;
};

inline int tree_edit_distance(const LabeledTree& a, const LabeledTree& b) {
  TreeEditDistance ted;
  return ted(a, b);
}

/// 1 - distance / max(|a|, |b|), floored at 0 for pairs whose distance exceeds the larger size.
inline double steds_from_distance(int distance, std::size_t size_a, std::size_t size_b) {
  const auto mx = std::max(size_a, size_b);
  if (mx == 0) return 1.0;
  return std::max(0.0, 1.0 - static_cast<double>(distance) / static_cast<double>(mx));
}

inline double steds(const LabeledTree& a, const LabeledTree& b) {
  return steds_from_distance(tree_edit_distance(a, b), a.size(), b.size());
}

}  // namespace dimt
