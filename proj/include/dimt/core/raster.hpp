#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "dimt/core/errors.hpp"
#include "dimt/core/matrix.hpp"

namespace dimt {

/// H x W x 3 image with values in [0, 1], stored interleaved row-major.
/// Values are kept on the 8-bit grid so images survive a file round trip exactly.
class RasterImage {
 public:
  static constexpr int kChannels = 3;

  RasterImage() = default;
  RasterImage(int height, int width, float fill = 1.0F) : height_(height), width_(width) {
    if (height <= 0 || width <= 0) throw ContractError("RasterImage: dimensions must be positive");
    pixels_.assign(static_cast<std::size_t>(height) * static_cast<std::size_t>(width) * kChannels, fill);
  }

  [[nodiscard]] int height() const noexcept { return height_; }
  [[nodiscard]] int width() const noexcept { return width_; }
  [[nodiscard]] int channels() const noexcept { return kChannels; }
  [[nodiscard]] const std::vector<float>& pixels() const noexcept { return pixels_; }
  std::vector<float>& pixels() noexcept { return pixels_; }

  float& at(int y, int x, int c) noexcept { return pixels_[index(y, x, c)]; }
  [[nodiscard]] float at(int y, int x, int c) const noexcept { return pixels_[index(y, x, c)]; }

  /// Snap every value to the nearest k/255 inside [0, 1].
  void quantize() {
    for (auto& v : pixels_) {
      const float c = std::clamp(v, 0.0F, 1.0F);
      v = static_cast<float>(static_cast<int>(c * 255.0F + 0.5F)) / 255.0F;
    }
  }

  friend bool operator==(const RasterImage&, const RasterImage&) = default;

 private:
  [[nodiscard]] std::size_t index(int y, int x, int c) const noexcept {
    return (static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x)) *
               kChannels +
           static_cast<std::size_t>(c);
  }

  int height_ = 0;
  int width_ = 0;
  std::vector<float> pixels_;
};

/// Binary PPM (P6, maxval 255).
inline void write_ppm(const RasterImage& img, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write image: " + path.string());
  os << "P6\n" << img.width() << ' ' << img.height() << "\n255\n";
  std::string bytes;
  bytes.reserve(img.pixels().size());
  for (float v : img.pixels()) bytes.push_back(static_cast<char>(static_cast<unsigned char>(
      static_cast<int>(std::clamp(v, 0.0F, 1.0F) * 255.0F + 0.5F))));
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

inline RasterImage read_ppm(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("missing image: " + path.string());
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  is >> magic >> w >> h >> maxval;
  if (magic != "P6" || w <= 0 || h <= 0 || maxval != 255) throw DataError("unsupported image format: " + path.string());
  is.get();
  RasterImage img(h, w);
  std::string bytes(img.pixels().size(), '\0');
  is.read(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!is) throw DataError("truncated image: " + path.string());
  for (std::size_t i = 0; i < bytes.size(); ++i)
    img.pixels()[i] = static_cast<float>(static_cast<unsigned char>(bytes[i])) / 255.0F;
  return img;
}

/// Split an image into non-overlapping patches, row-major over the patch grid.
/// Each output row is one flattened patch (patch_h * patch_w * 3 values).
template <class T>
Matrix<T> patchify(const RasterImage& img, int patch_h, int patch_w) {
  if (patch_h <= 0 || patch_w <= 0 || img.height() % patch_h != 0 || img.width() % patch_w != 0)
    throw ContractError("patchify: image " + std::to_string(img.height()) + "x" + std::to_string(img.width()) +
                        " is not divisible into " + std::to_string(patch_h) + "x" + std::to_string(patch_w) +
                        " patches");
  const int gh = img.height() / patch_h, gw = img.width() / patch_w;
  const std::size_t width = static_cast<std::size_t>(patch_h * patch_w * RasterImage::kChannels);
  Matrix<T> out(static_cast<std::size_t>(gh * gw), width);
  for (int py = 0; py < gh; ++py)
    for (int px = 0; px < gw; ++px) {
      auto row = out.row(static_cast<std::size_t>(py * gw + px));
      std::size_t k = 0;
      for (int y = 0; y < patch_h; ++y)
        for (int x = 0; x < patch_w; ++x)
          for (int c = 0; c < RasterImage::kChannels; ++c)
            row[k++] = static_cast<T>(img.at(py * patch_h + y, px * patch_w + x, c));
    }
  return out;
}

}  // namespace dimt
