#include "wkd/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "wkd/errors.hpp"

namespace wkd {

std::uint64_t fnv1a(const void* data, std::size_t bytes, std::uint64_t seed) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < bytes; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

bool Image::in_range() const {
  for (float v : pixels) {
    if (!(v >= 0.0f && v <= 1.0f)) return false;
  }
  return true;
}

std::uint64_t Image::checksum() const { return fnv1a(pixels.data(), pixels.size() * sizeof(float)); }

double mean_abs_diff(const Image& a, const Image& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < Image::kSize; ++i) s += std::fabs(double(a.pixels[i]) - double(b.pixels[i]));
  return s / static_cast<double>(Image::kSize);
}

bool bitwise_equal(const Image& a, const Image& b) {
  return a.pixels.size() == b.pixels.size() &&
         std::memcmp(a.pixels.data(), b.pixels.data(), a.pixels.size() * sizeof(float)) == 0;
}

void write_ppm(const std::filesystem::path& path, const Image& img) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw ConfigError("cannot write " + path.string());
  os << "P6\n" << Image::kWidth << ' ' << Image::kHeight << "\n255\n";
  for (float v : img.pixels) {
    const float c = std::clamp(v, 0.0f, 1.0f);
    os.put(static_cast<char>(static_cast<unsigned char>(std::lround(c * 255.0f))));
  }
}

}  // namespace wkd
