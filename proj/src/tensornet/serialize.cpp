#include "wkd/serialize.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace wkd::tn {

namespace {

constexpr char kMagic[4] = {'W', 'K', 'D', 'T'};

template <typename U>
void put_le(std::ostream& os, U v) {
  unsigned char buf[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
  os.write(reinterpret_cast<const char*>(buf), sizeof(U));
}

template <typename U>
U get_le(std::istream& is) {
  unsigned char buf[sizeof(U)];
  if (!is.read(reinterpret_cast<char*>(buf), sizeof(U))) throw ConfigError("truncated tensor file");
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(buf[i]) << (8 * i);
  return v;
}

}  // namespace

void save_tensors(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw ConfigError("cannot open " + path.string() + " for writing");
  os.write(kMagic, 4);
  put_le<std::uint32_t>(os, kTensorFileVersion);
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& nt : tensors) {
    put_le<std::uint32_t>(os, static_cast<std::uint32_t>(nt.name.size()));
    os.write(nt.name.data(), static_cast<std::streamsize>(nt.name.size()));
    put_le<std::uint32_t>(os, static_cast<std::uint32_t>(nt.value.rank()));
    for (std::size_t d : nt.value.shape()) put_le<std::uint64_t>(os, d);
    for (float f : nt.value.data()) put_le<std::uint32_t>(os, std::bit_cast<std::uint32_t>(f));
  }
  if (!os) throw ConfigError("write failed for " + path.string());
}

std::vector<NamedTensor> load_tensors(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot open tensor file " + path.string());
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    throw ConfigError(path.string() + " is not a tensor file (bad magic)");
  }
  const auto version = get_le<std::uint32_t>(is);
  if (version != kTensorFileVersion) {
    throw ConfigError("unsupported tensor file version " + std::to_string(version));
  }
  const auto count = get_le<std::uint32_t>(is);
  std::vector<NamedTensor> out;
  out.reserve(count);
  for (std::uint32_t t = 0; t < count; ++t) {
    NamedTensor nt;
    const auto len = get_le<std::uint32_t>(is);
    nt.name.resize(len);
    if (!is.read(nt.name.data(), len)) throw ConfigError("truncated tensor name");
    const auto rank = get_le<std::uint32_t>(is);
    Shape shape(rank);
    for (auto& d : shape) d = static_cast<std::size_t>(get_le<std::uint64_t>(is));
    std::vector<float> data(element_count(shape));
    for (auto& f : data) f = std::bit_cast<float>(get_le<std::uint32_t>(is));
    nt.value = Tensor(std::move(shape), std::move(data));
    out.push_back(std::move(nt));
  }
  return out;
}

}  // namespace wkd::tn
