#include "wkd/domainxfer.hpp"

#include <random>
#include <set>

#include "wkd/errors.hpp"
#include "wkd/sim/render.hpp"

namespace wkd::xfer {

std::string kind_name(TranslatorKind k) { return k == TranslatorKind::Oracle ? "oracle" : "parametric"; }

TranslatorKind kind_from_name(const std::string& name) {
  if (name == "oracle") return TranslatorKind::Oracle;
  if (name == "parametric") return TranslatorKind::Parametric;
  throw ConfigError("unknown translator kind '" + name + "' (expected oracle or parametric)");
}

TranslatorConfig TranslatorConfig::from_json(const nlohmann::json& j) {
  TranslatorConfig c;
  if (!j.is_object()) throw ConfigError("translator block must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (it.key() != "kind" && it.key() != "targets" && it.key() != "fidelity")
      throw ConfigError("unknown translator key '" + it.key() + "'");
  }
  try {
    if (j.contains("kind")) c.kind = kind_from_name(j.at("kind").get<std::string>());
    if (j.contains("targets")) c.targets = j.at("targets").get<std::vector<int>>();
    if (j.contains("fidelity")) c.fidelity = j.at("fidelity").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad translator block: ") + e.what());
  }
  return c;
}

nlohmann::json TranslatorConfig::to_json() const {
  return {{"kind", kind_name(kind)}, {"targets", targets}, {"fidelity", fidelity}};
}

std::vector<Translator> build_translation_table(std::span<const int> targets, TranslatorKind kind,
                                                double fidelity) {
  if (targets.empty()) throw ConfigError("translator target list is empty");
  if (!(fidelity >= 0.0 && fidelity <= 1.0)) throw ConfigError("translator fidelity must lie in [0, 1]");
  std::set<int> seen;
  std::vector<Translator> out;
  for (int t : targets) {
    if (t < 0 || t >= sim::kWeatherCount) throw ConfigError("translator target " + std::to_string(t) + " is not a weather id");
    if (!seen.insert(t).second) throw ConfigError("duplicate translator target " + std::to_string(t));
    out.push_back({kind, 0, t, kind == TranslatorKind::Parametric ? fidelity : 1.0});
  }
  return out;
}

std::vector<Translator> build_translation_table(const TranslatorConfig& cfg) {
  return build_translation_table(cfg.targets, cfg.kind, cfg.fidelity);
}

namespace {

// Fixed per-target color error; only its scale depends on fidelity.
sim::PaletteError palette_error(int target, double fidelity) {
  sim::PaletteError e;
  e.scale = static_cast<float>(1.0 - fidelity);
  std::mt19937_64 rng(sim::mix64(0x7a11e77eull + static_cast<std::uint64_t>(target)));
  std::uniform_real_distribution<float> off(-0.3f, 0.3f);
  std::uniform_real_distribution<float> amp(0.05f, 0.2f);
  std::uniform_real_distribution<float> freq(0.5f, 2.0f);
  std::uniform_real_distribution<float> phase(0.0f, 1.0f);
  for (auto& cls : e.class_offset)
    for (auto& v : cls) v = off(rng);
  for (auto& v : e.field_amplitude) v = amp(rng);
  e.freq_x = freq(rng);
  e.freq_y = freq(rng);
  e.phase_x = phase(rng);
  e.phase_y = phase(rng);
  return e;
}

}  // namespace

Image translate(const Translator& t, const sim::Sample& sample, const sim::WeatherTable& weathers) {
  if (sample.weather != t.source) {
    throw UsageError("translator expects a weather-" + std::to_string(t.source) + " sample, got weather " +
                     std::to_string(sample.weather));
  }
  const sim::WeatherParams& target = weathers.at(t.target);
  if (t.target == t.source) return sample.image;

  if (t.kind == TranslatorKind::Oracle) {
    if (!sample.scene) throw UsageError("oracle translation needs the sample's scene state");
    sim::SceneState s = *sample.scene;
    s.weather = t.target;
    return sim::render(s, weathers);
  }

  const auto classes = sim::classify_colors(sample.image, weathers.at(t.source));
  const std::uint64_t stream = sample.scene ? sample.scene->rng_stream_id : sample.image.checksum();
  const auto err = palette_error(t.target, t.fidelity);
  return sim::shade(classes, target, stream, &err);
}

}  // namespace wkd::xfer
