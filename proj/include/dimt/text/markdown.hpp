#pragma once

// Block-level grammar for the markdown subset used throughout: headings
// (#, ##, ###), paragraphs, bullet lists, display formulas ($$...$$), and
// tables (pipe rows or ``` fences). The renderer, the structure tree and the
// plain-text stripper all read documents through this one parser.

#include <cctype>
#include <string>
#include <string_view>
#include <vector>

namespace dimt::md {

enum class BlockKind { heading, paragraph, list, table, formula };

struct Block {
  BlockKind kind = BlockKind::paragraph;
  int level = 0;                   // heading level 1..3
  std::vector<std::string> lines;  // heading/paragraph text, list items, table rows, formula body
};

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto nl = text.find('\n', start);
    if (nl == std::string_view::npos) {
      out.push_back(text.substr(start));
      break;
    }
    out.push_back(text.substr(start, nl - start));
    start = nl + 1;
  }
  return out;
}

inline std::vector<std::string> split_words(std::string_view s) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    const std::size_t b = i;
    while (i < s.size() && !std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    if (i > b) out.emplace_back(s.substr(b, i - b));
  }
  return out;
}

/// Heading level (1..3) of a trimmed line, or 0. The text after the marker goes to `rest`.
inline int heading_level(std::string_view line, std::string_view* rest = nullptr) {
  std::size_t n = 0;
  while (n < line.size() && line[n] == '#') ++n;
  if (n == 0 || n > 3) return 0;
  if (n < line.size() && !std::isspace(static_cast<unsigned char>(line[n]))) return 0;
  if (rest) *rest = trim(line.substr(n));
  return static_cast<int>(n);
}

/// True for "- item", "* item", or a bare bullet; the item text goes to `rest`.
inline bool list_marker(std::string_view line, std::string_view* rest = nullptr) {
  if (line.empty() || (line[0] != '-' && line[0] != '*')) return false;
  if (line.size() > 1 && !std::isspace(static_cast<unsigned char>(line[1]))) return false;
  if (rest) *rest = trim(line.substr(1));
  return true;
}

inline bool is_fence(std::string_view line) { return line.substr(0, 3) == "```"; }
inline bool is_table_row(std::string_view line) { return !line.empty() && line[0] == '|'; }
inline bool opens_formula(std::string_view line) { return line.substr(0, 2) == "$$"; }
inline bool closes_formula_inline(std::string_view line) {
  return line.size() >= 4 && line.substr(line.size() - 2) == "$$";
}

/// Total function: every input yields a block list.
inline std::vector<Block> parse_blocks(std::string_view text) {
  std::vector<Block> blocks;
  const auto lines = split_lines(text);
  Block* open = nullptr;  // paragraph, list or table accepting more lines
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::string_view line = trim(lines[i]);
    if (line.empty()) {
      open = nullptr;
      continue;
    }
    std::string_view rest;
    if (is_fence(line)) {
      Block b{BlockKind::table, 0, {std::string(line)}};
      for (++i; i < lines.size(); ++i) {
        const auto l = trim(lines[i]);
        b.lines.emplace_back(l);
        if (is_fence(l)) break;
      }
      blocks.push_back(std::move(b));
      open = nullptr;
    } else if (opens_formula(line)) {
      Block b{BlockKind::formula, 0, {std::string(line)}};
      if (!closes_formula_inline(line)) {
        for (++i; i < lines.size(); ++i) {
          const auto l = trim(lines[i]);
          b.lines.emplace_back(l);
          if (l.size() >= 2 && l.substr(l.size() - 2) == "$$") break;
        }
      }
      blocks.push_back(std::move(b));
      open = nullptr;
    } else if (const int lv = heading_level(line, &rest); lv > 0) {
      blocks.push_back({BlockKind::heading, lv, {std::string(rest)}});
      open = nullptr;
    } else if (list_marker(line, &rest)) {
      if (!open || open->kind != BlockKind::list) {
        blocks.push_back({BlockKind::list, 0, {}});
        open = &blocks.back();
      }
      open->lines.emplace_back(rest);
    } else if (is_table_row(line)) {
      if (!open || open->kind != BlockKind::table) {
        blocks.push_back({BlockKind::table, 0, {}});
        open = &blocks.back();
      }
      open->lines.emplace_back(line);
    } else {
      if (!open || open->kind != BlockKind::paragraph) {
        blocks.push_back({BlockKind::paragraph, 0, {}});
        open = &blocks.back();
      }
      open->lines.emplace_back(line);
    }
  }
  return blocks;
}

/// Cells of a pipe row, trimmed, without the outer pipes.
inline std::vector<std::string> table_cells(std::string_view row) {
  std::vector<std::string> cells;
  row = trim(row);
  if (!row.empty() && row.front() == '|') row.remove_prefix(1);
  if (!row.empty() && row.back() == '|') row.remove_suffix(1);
  std::size_t start = 0;
  while (true) {
    const auto bar = row.find('|', start);
    cells.emplace_back(trim(row.substr(start, bar == std::string_view::npos ? std::string_view::npos : bar - start)));
    if (bar == std::string_view::npos) break;
    start = bar + 1;
  }
  return cells;
}

/// "| --- | :-: |" style separator row.
inline bool is_separator_row(std::string_view row) {
  bool dash = false;
  for (char c : row) {
    if (c == '-') dash = true;
    else if (c != '|' && c != ':' && !std::isspace(static_cast<unsigned char>(c))) return false;
  }
  return dash;
}

inline bool is_lower_word(std::string_view w) {
  if (w.empty()) return false;
  for (char c : w)
    if (c < 'a' || c > 'z') return false;
  return true;
}

}  // namespace dimt::md
