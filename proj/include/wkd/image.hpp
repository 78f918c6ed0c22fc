#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace wkd {

// 64x64 RGB raster, row-major, channel-last, values in [0,1].
struct Image {
  static constexpr std::size_t kWidth = 64;
  static constexpr std::size_t kHeight = 64;
  static constexpr std::size_t kChannels = 3;
  static constexpr std::size_t kSize = kWidth * kHeight * kChannels;

  std::vector<float> pixels = std::vector<float>(kSize, 0.0f);

  float& at(std::size_t y, std::size_t x, std::size_t c) { return pixels[(y * kWidth + x) * kChannels + c]; }
  float at(std::size_t y, std::size_t x, std::size_t c) const {
    return pixels[(y * kWidth + x) * kChannels + c];
  }

  bool in_range() const;
  // FNV-1a over the raw IEEE-754 bytes.
  std::uint64_t checksum() const;

  friend bool operator==(const Image&, const Image&) = default;
};

double mean_abs_diff(const Image& a, const Image& b);
bool bitwise_equal(const Image& a, const Image& b);

// Binary PPM (P6), 8 bits per channel.
void write_ppm(const std::filesystem::path& path, const Image& img);

std::uint64_t fnv1a(const void* data, std::size_t bytes, std::uint64_t seed = 1469598103934665603ull);

}  // namespace wkd
