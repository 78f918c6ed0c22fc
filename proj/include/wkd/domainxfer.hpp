#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "wkd/image.hpp"
#include "wkd/sim/dataset.hpp"
#include "wkd/sim/weather.hpp"

namespace wkd::xfer {

enum class TranslatorKind { Oracle, Parametric };

std::string kind_name(TranslatorKind k);
TranslatorKind kind_from_name(const std::string& name);

inline constexpr std::array<int, 10> kDefaultTargets{2, 3, 4, 6, 8, 9, 10, 11, 12, 13};
inline constexpr double kDefaultFidelity = 0.9;

// Maps weather-0 images to a target weather.
//   Oracle: re-renders the sample's stored scene under the target weather.
//   Parametric: recovers per-pixel classes from the weather-0 palette and
//   re-applies the target weather chain, with palette errors scaled by
//   (1 - fidelity).
struct Translator {
  TranslatorKind kind = TranslatorKind::Oracle;
  int source = 0;
  int target = 0;
  double fidelity = 1.0;
};

struct TranslatorConfig {
  TranslatorKind kind = TranslatorKind::Parametric;
  std::vector<int> targets{kDefaultTargets.begin(), kDefaultTargets.end()};
  double fidelity = kDefaultFidelity;

  static TranslatorConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

// One translator per target. Throws ConfigError on an empty list, duplicate
// targets, ids outside 0..14 or fidelity outside [0,1].
std::vector<Translator> build_translation_table(std::span<const int> targets, TranslatorKind kind,
                                                double fidelity = 1.0);
std::vector<Translator> build_translation_table(const TranslatorConfig& cfg);

// Target 0 returns the input unchanged. Throws UsageError when the sample is
// not from weather 0 or when an oracle translator gets a sample without a
// scene state.
Image translate(const Translator& t, const sim::Sample& sample, const sim::WeatherTable& weathers);

}  // namespace wkd::xfer
