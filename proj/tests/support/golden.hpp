#pragma once

// Golden values live in tests/golden as "key value" lines. Setting
// WKD_REGENERATE_GOLDEN=1 rewrites the file from the current build instead of
// comparing.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

namespace golden {

inline std::filesystem::path path(const std::string& file) {
  return std::filesystem::path(WKD_TEST_DATA_DIR) / "golden" / file;
}

inline bool regenerate() {
  const char* e = std::getenv("WKD_REGENERATE_GOLDEN");
  return e != nullptr && std::string(e) == "1";
}

inline std::map<std::string, std::string> read(const std::string& file) {
  std::map<std::string, std::string> out;
  std::ifstream is(path(file));
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string k, v;
    ls >> k >> v;
    out[k] = v;
  }
  return out;
}

inline void write(const std::string& file, const std::map<std::string, std::string>& values,
                  const std::string& header) {
  std::filesystem::create_directories(path(file).parent_path());
  std::ofstream os(path(file));
  os << "# " << header << '\n';
  for (const auto& [k, v] : values) os << k << ' ' << v << '\n';
}

}  // namespace golden
