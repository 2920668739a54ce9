#pragma once

// 3x5 bitmap font. Letters are case-insensitive; characters without a glyph
// draw as a hollow box.

#include <array>
#include <cctype>
#include <string_view>

namespace dimt::font {

inline constexpr int kGlyphW = 3;
inline constexpr int kGlyphH = 5;
inline constexpr int kAdvance = 4;  // glyph width plus one column of spacing

using Glyph = std::array<std::string_view, kGlyphH>;

inline const Glyph& glyph(char ch) {
  static const std::array<Glyph, 26> letters{{
      {".#.", "#.#", "###", "#.#", "#.#"},  // a
      {"##.", "#.#", "##.", "#.#", "##."},  // b
      {".##", "#..", "#..", "#..", ".##"},  // c
      {"##.", "#.#", "#.#", "#.#", "##."},  // d
      {"###", "#..", "##.", "#..", "###"},  // e
      {"###", "#..", "##.", "#..", "#.."},  // f
      {".##", "#..", "#.#", "#.#", ".##"},  // g
      {"#.#", "#.#", "###", "#.#", "#.#"},  // h
      {"###", ".#.", ".#.", ".#.", "###"},  // i
      {"..#", "..#", "..#", "#.#", ".#."},  // j
      {"#.#", "#.#", "##.", "#.#", "#.#"},  // k
      {"#..", "#..", "#..", "#..", "###"},  // l
      {"#.#", "###", "###", "#.#", "#.#"},  // m
      {"##.", "#.#", "#.#", "#.#", "#.#"},  // n
      {".#.", "#.#", "#.#", "#.#", ".#."},  // o
      {"##.", "#.#", "##.", "#..", "#.."},  // p
      {".#.", "#.#", "#.#", "##.", ".##"},  // q
      {"##.", "#.#", "##.", "#.#", "#.#"},  // r
      {".##", "#..", ".#.", "..#", "##."},  // s
      {"###", ".#.", ".#.", ".#.", ".#."},  // t
      {"#.#", "#.#", "#.#", "#.#", "###"},  // u
      {"#.#", "#.#", "#.#", "#.#", ".#."},  // v
      {"#.#", "#.#", "###", "###", "#.#"},  // w
      {"#.#", "#.#", ".#.", "#.#", "#.#"},  // x
      {"#.#", "#.#", ".#.", ".#.", ".#."},  // y
      {"###", "..#", ".#.", "#..", "###"},  // z
  }};
  static const Glyph one{".#.", "##.", ".#.", ".#.", "###"};
  static const Glyph two{"##.", "..#", ".#.", "#..", "###"};
  static const Glyph three{"##.", "..#", ".#.", "..#", "##."};
  static const Glyph plus{"...", ".#.", "###", ".#.", "..."};
  static const Glyph equals{"...", "###", "...", "###", "..."};
  static const Glyph minus{"...", "...", "###", "...", "..."};
  static const Glyph blank{"...", "...", "...", "...", "..."};
  static const Glyph box{"###", "#.#", "#.#", "#.#", "###"};
  const auto c = static_cast<unsigned char>(ch);
  if (std::isalpha(c)) return letters[static_cast<std::size_t>(std::tolower(c) - 'a')];
  switch (ch) {
    case '1': return one;
    case '2': return two;
    case '3': return three;
    case '+': return plus;
    case '=': return equals;
    case '-': return minus;
    case ' ': return blank;
    default: return box;
  }
}

}  // namespace dimt::font
