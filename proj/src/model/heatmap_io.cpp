#include <algorithm>
#include <cmath>
#include <fstream>

#include "wkd/errors.hpp"
#include "wkd/model.hpp"
#include "wkd/serialize.hpp"

namespace wkd::model {

std::vector<float> activation_map(const Model& model, const Image& image) {
  const auto feats = model.unit1_features(image_to_tensor<float>(image));
  const std::size_t C = feats.dim(1), H = feats.dim(2), W = feats.dim(3);
  std::vector<float> energy(H * W, 0.0f);
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t p = 0; p < H * W; ++p) energy[p] += feats[c * H * W + p];

  // Bilinear upsampling with half-pixel centers.
  constexpr std::size_t OH = Image::kHeight, OW = Image::kWidth;
  std::vector<float> up(OH * OW);
  auto src = [](std::size_t d, std::size_t out_n, std::size_t in_n, std::size_t& i0, std::size_t& i1, float& t) {
    const float s = (static_cast<float>(d) + 0.5f) * static_cast<float>(in_n) / static_cast<float>(out_n) - 0.5f;
    const float c = std::clamp(s, 0.0f, static_cast<float>(in_n - 1));
    i0 = static_cast<std::size_t>(std::floor(c));
    i1 = std::min(i0 + 1, in_n - 1);
    t = c - static_cast<float>(i0);
  };
  for (std::size_t y = 0; y < OH; ++y) {
    std::size_t y0, y1;
    float ty;
    src(y, OH, H, y0, y1, ty);
    for (std::size_t x = 0; x < OW; ++x) {
      std::size_t x0, x1;
      float tx;
      src(x, OW, W, x0, x1, tx);
      const float top = (1 - tx) * energy[y0 * W + x0] + tx * energy[y0 * W + x1];
      const float bot = (1 - tx) * energy[y1 * W + x0] + tx * energy[y1 * W + x1];
      up[y * OW + x] = (1 - ty) * top + ty * bot;
    }
  }

  const auto [mn, mx] = std::minmax_element(up.begin(), up.end());
  const float lo = *mn, range = *mx - *mn;
  for (auto& v : up) v = range > 0.0f ? (v - lo) / range : 0.0f;
  return up;
}

Image activation_heatmap(const Model& model, const Image& image) {
  const auto m = activation_map(model, image);
  Image out;
  for (std::size_t p = 0; p < m.size(); ++p) {
    const float v = m[p];
    out.pixels[p * 3 + 0] = std::clamp(1.5f - std::fabs(4.0f * v - 3.0f), 0.0f, 1.0f);
    out.pixels[p * 3 + 1] = std::clamp(1.5f - std::fabs(4.0f * v - 2.0f), 0.0f, 1.0f);
    out.pixels[p * 3 + 2] = std::clamp(1.5f - std::fabs(4.0f * v - 1.0f), 0.0f, 1.0f);
  }
  return out;
}

namespace {

std::filesystem::path sidecar_path(const std::filesystem::path& path) {
  auto p = path;
  p += ".json";
  return p;
}

}  // namespace

void save_model(const Model& model, const std::filesystem::path& path, const nlohmann::json& provenance) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::vector<tn::NamedTensor> tensors;
  for (const auto& p : model.parameters()) tensors.push_back({p.name, *p.value});
  tn::save_tensors(path, tensors);

  nlohmann::json j;
  j["architecture_version"] = kArchitectureVersion;
  j["channels"] = kChannels;
  j["feature_dim"] = kFeatureDim;
  std::vector<std::size_t> heads1;
  for (std::size_t h : model.heads()) heads1.push_back(h + 1);
  j["retained_heads"] = heads1;
  j["alpha_logits"] = std::vector<float>(model.logits().data().begin(), model.logits().data().end());
  j["alphas"] = model.alphas();
  j["provenance"] = provenance.is_null() ? nlohmann::json::object() : provenance;
  std::ofstream os(sidecar_path(path), std::ios::trunc);
  if (!os) throw ConfigError("cannot write " + sidecar_path(path).string());
  os << j.dump(2) << '\n';
}

nlohmann::json load_sidecar(const std::filesystem::path& path) {
  std::ifstream is(sidecar_path(path));
  if (!is) throw ConfigError("model sidecar missing: " + sidecar_path(path).string());
  try {
    return nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("bad model sidecar " + sidecar_path(path).string() + ": " + e.what());
  }
}

Model load_model(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ConfigError("model file missing: " + path.string());
  const auto side = load_sidecar(path);
  if (side.value("architecture_version", -1) != kArchitectureVersion)
    throw ConfigError("unsupported architecture version in " + path.string());
  std::vector<std::size_t> keep;
  for (std::size_t h1 : side.at("retained_heads").get<std::vector<std::size_t>>()) {
    if (h1 < 1 || h1 > kHeads) throw ConfigError("bad retained head in " + path.string());
    keep.push_back(h1 - 1);
  }
  Model m = Model().subset(keep);
  const auto tensors = tn::load_tensors(path);
  auto params = m.parameters();
  if (tensors.size() != params.size())
    throw ConfigError("model file " + path.string() + " has " + std::to_string(tensors.size()) +
                      " tensors, expected " + std::to_string(params.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (tensors[i].name != params[i].name || tensors[i].value.shape() != params[i].value->shape())
      throw ConfigError("model file " + path.string() + ": tensor '" + tensors[i].name + "' does not match '" +
                        params[i].name + "'");
    *params[i].value = tensors[i].value;
  }
  return m;
}

}  // namespace wkd::model
