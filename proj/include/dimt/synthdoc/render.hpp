#pragma once

// Rasterises the markdown subset onto a white page with the bitmap font.
// Glyph cells are scaled by a real factor and area-sampled, so fractional
// scales produce anti-aliased grey edges. Output is quantised to 8 bits.

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "dimt/core/errors.hpp"
#include "dimt/core/hash.hpp"
#include "dimt/core/raster.hpp"
#include "dimt/synthdoc/font.hpp"
#include "dimt/text/markdown.hpp"

namespace dimt {

struct RenderConfig {
  int height = 224;
  int width = 168;
  double margin = 4;
  double body_scale = 1.5;  // pixels per font cell for body text
  double line_gap = 2;      // font cells between lines
  double word_space = 2;    // font cells added between words
  double block_gap = 3;     // font cells between blocks
  double indent = 4;        // font cells of list indentation
  double jitter = 0;        // relative font-size jitter; 0 disables
  std::uint64_t jitter_seed = 0;
};

inline constexpr double kHeadingScale[3] = {2.0, 1.5, 1.25};

namespace detail {

class Canvas {
 public:
  Canvas(int h, int w) : h_(h), w_(w), cov_(static_cast<std::size_t>(h) * static_cast<std::size_t>(w), 0.0) {}

  /// Add ink over [x0, x1) x [y0, y1) weighted by per-pixel overlap area.
  void fill(double x0, double y0, double x1, double y1) {
    const int px0 = std::max(0, static_cast<int>(std::floor(x0)));
    const int px1 = std::min(w_, static_cast<int>(std::ceil(x1)));
    const int py0 = std::max(0, static_cast<int>(std::floor(y0)));
    const int py1 = std::min(h_, static_cast<int>(std::ceil(y1)));
    for (int y = py0; y < py1; ++y) {
      const double oy = std::min<double>(y + 1, y1) - std::max<double>(y, y0);
      if (oy <= 0) continue;
      for (int x = px0; x < px1; ++x) {
        const double ox = std::min<double>(x + 1, x1) - std::max<double>(x, x0);
        if (ox > 0) cov_[static_cast<std::size_t>(y) * static_cast<std::size_t>(w_) + static_cast<std::size_t>(x)] += ox * oy;
      }
    }
  }

  void text(std::string_view s, double x, double y, double scale) {
    for (char c : s) {
      const auto& g = font::glyph(c);
      for (int r = 0; r < font::kGlyphH; ++r)
        for (int k = 0; k < font::kGlyphW; ++k)
          if (g[static_cast<std::size_t>(r)][static_cast<std::size_t>(k)] == '#')
            fill(x + k * scale, y + r * scale, x + (k + 1) * scale, y + (r + 1) * scale);
      x += font::kAdvance * scale;
    }
  }

  [[nodiscard]] RasterImage finish() const {
    RasterImage img(h_, w_);
    for (int y = 0; y < h_; ++y)
      for (int x = 0; x < w_; ++x) {
        const double c = std::min(1.0, cov_[static_cast<std::size_t>(y) * static_cast<std::size_t>(w_) + static_cast<std::size_t>(x)]);
        for (int ch = 0; ch < RasterImage::kChannels; ++ch) img.at(y, x, ch) = static_cast<float>(1.0 - c);
      }
    img.quantize();
    return img;
  }

 private:
  int h_, w_;
  std::vector<double> cov_;
};

inline double text_width(std::string_view s, double scale) {
  return s.empty() ? 0.0 : (font::kAdvance * static_cast<double>(s.size()) - 1.0) * scale;
}

/// Formula chunks render without their delimiters and with a dotted underline.
inline bool formula_chunk(std::string_view c, std::string_view* inner) {
  if (c.size() >= 4 && c.substr(0, 2) == "$$" && c.substr(c.size() - 2) == "$$") {
    *inner = c.substr(2, c.size() - 4);
    return true;
  }
  if (c.size() >= 2 && c.front() == '$' && c.back() == '$') {
    *inner = c.substr(1, c.size() - 2);
    return true;
  }
  return false;
}

class Layout {
 public:
  Layout(const RenderConfig& cfg, std::string_view markdown) : cfg_(cfg), canvas_(cfg.height, cfg.width) {
    body_ = cfg.body_scale;
    if (cfg.jitter > 0) {
      std::mt19937_64 rng(cfg.jitter_seed ^ hash_bytes(markdown));
      std::uniform_real_distribution<double> u(1.0 - cfg.jitter, 1.0 + cfg.jitter);
      body_ *= u(rng);
      rng_ = rng;
      jitter_ = true;
    }
    y_ = cfg.margin;
    right_ = cfg.width - cfg.margin;
    bottom_ = cfg.height - cfg.margin;
  }

  void run(const std::vector<md::Block>& blocks) {
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      if (i > 0) y_ += cfg_.block_gap * body_;
      const auto& b = blocks[i];
      switch (b.kind) {
        case md::BlockKind::heading:
          flow(md::split_words(b.lines.front()), cfg_.margin, body_ * kHeadingScale[b.level - 1]);
          break;
        case md::BlockKind::paragraph: {
          std::vector<std::string> words;
          for (const auto& l : b.lines)
            for (auto& w : md::split_words(l)) words.push_back(std::move(w));
          flow(words, cfg_.margin, body_);
          break;
        }
        case md::BlockKind::list:
          for (const auto& item : b.lines) {
            const double x = cfg_.margin + body_;
            check_line(body_);
            canvas_.fill(x, y_ + 1.5 * body_, x + 2 * body_, y_ + 3.5 * body_);
            flow(md::split_words(item), cfg_.margin + cfg_.indent * body_, body_);
          }
          break;
        case md::BlockKind::formula: formula(b); break;
        case md::BlockKind::table: table(b); break;
      }
    }
  }

  [[nodiscard]] RasterImage finish() const { return canvas_.finish(); }

 private:
  [[nodiscard]] double line_height(double s) const { return (font::kGlyphH + cfg_.line_gap) * s; }

  void check_line(double s) const {
    if (y_ + font::kGlyphH * s > bottom_ + 1e-9) throw RenderOverflow("document overflows the page");
  }

  double jitter_offset(double s) {
    if (!jitter_) return 0.0;
    std::uniform_real_distribution<double> u(0.0, cfg_.jitter * font::kAdvance * s);
    return u(rng_);
  }

  void flow(const std::vector<std::string>& chunks, double left, double s) {
    if (chunks.empty()) {
      y_ += line_height(s);
      return;
    }
    const double gap = (1.0 + cfg_.word_space) * s;
    double x = left + jitter_offset(s);
    check_line(s);
    bool first = true;
    for (const auto& c : chunks) {
      std::string_view inner;
      const bool f = formula_chunk(c, &inner);
      const std::string_view shown = f ? inner : std::string_view(c);
      const double w = text_width(shown, s);
      if (left + w > right_ + 1e-9) throw RenderOverflow("word wider than the page: " + c);
      if (!first && x + w > right_ + 1e-9) {
        y_ += line_height(s);
        x = left + jitter_offset(s);
        check_line(s);
      }
      if (x + w > right_ + 1e-9) throw RenderOverflow("line overflows the page: " + c);
      canvas_.text(shown, x, y_, s);
      if (f)
        for (double dx = 0; dx < w; dx += 2 * s) canvas_.fill(x + dx, y_ + 5.5 * s, x + dx + s, y_ + 6.0 * s);
      x += w + gap;
      first = false;
    }
    y_ += line_height(s);
  }

  void formula(const md::Block& b) {
    std::string body;
    for (const auto& l : b.lines) body += l;
    std::string_view inner = body;
    if (inner.substr(0, 2) == "$$") inner.remove_prefix(2);
    if (inner.size() >= 2 && inner.substr(inner.size() - 2) == "$$") inner.remove_suffix(2);
    std::string text;
    for (char c : inner)
      if (c != ' ') text.push_back(c);
    const double w = text_width(text, body_);
    if (w > right_ - cfg_.margin + 1e-9) throw RenderOverflow("formula wider than the page");
    check_line(body_);
    canvas_.text(text, cfg_.margin + (right_ - cfg_.margin - w) / 2.0, y_, body_);
    y_ += line_height(body_);
  }

  void table(const md::Block& b) {
    std::vector<std::vector<std::string>> rows;
    for (const auto& l : b.lines) {
      if (md::is_fence(l) || md::is_separator_row(l)) continue;
      rows.push_back(md::table_cells(l));
    }
    if (rows.empty()) return;
    std::size_t cols = 1;
    for (const auto& r : rows) cols = std::max(cols, r.size());
    const double s = body_;
    const double left = cfg_.margin;
    const double cw = (right_ - left) / static_cast<double>(cols);
    const double rh = (font::kGlyphH + 2) * s + 1;
    const double top = y_;
    for (const auto& r : rows) {
      if (y_ + rh > bottom_ + 1e-9) throw RenderOverflow("table overflows the page");
      canvas_.fill(left, y_, right_, y_ + 1);
      for (std::size_t c = 0; c < r.size(); ++c) {
        const double w = text_width(r[c], s);
        if (w > cw - 2 - s + 1e-9) throw RenderOverflow("table cell too wide: " + r[c]);
        canvas_.text(r[c], left + static_cast<double>(c) * cw + 1 + s * 0.5, y_ + 1 + s, s);
      }
      y_ += rh;
    }
    canvas_.fill(left, y_, right_, y_ + 1);
    for (std::size_t c = 0; c <= cols; ++c) {
      const double x = std::min(right_ - 1, left + static_cast<double>(c) * cw);
      canvas_.fill(x, top, x + 1, y_ + 1);
    }
    y_ += 1 + line_gap_px();
  }

  [[nodiscard]] double line_gap_px() const { return cfg_.line_gap * body_; }

  const RenderConfig& cfg_;
  Canvas canvas_;
  double body_ = 1;
  double y_ = 0, right_ = 0, bottom_ = 0;
  bool jitter_ = false;
  std::mt19937_64 rng_;
};

}  // namespace detail

/// Deterministic in (markdown, config). Throws RenderOverflow instead of clipping.
inline RasterImage render_document(std::string_view markdown, const RenderConfig& cfg) {
  if (cfg.height <= 0 || cfg.width <= 0) throw ContractError("page dimensions must be positive");
  if (cfg.body_scale <= 0) throw ContractError("body scale must be positive");
  detail::Layout layout(cfg, markdown);
  layout.run(md::parse_blocks(markdown));
  return layout.finish();
}

}  // namespace dimt
