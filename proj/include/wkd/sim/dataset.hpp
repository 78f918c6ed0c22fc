#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "wkd/image.hpp"
#include "wkd/sim/scene.hpp"
#include "wkd/sim/track.hpp"
#include "wkd/sim/weather.hpp"

namespace wkd::sim {

struct Sample {
  Image image;
  std::optional<double> label;       // expert steering, present for the labeled subset
  std::optional<SceneState> scene;   // needed by the oracle translator
  int weather = 0;
};

struct Dataset {
  static constexpr int kFormatVersion = 1;

  TrackId track = TrackId::A;
  std::uint64_t seed = 0;
  std::vector<int> weathers;  // sample i uses weathers[i % size]
  std::vector<Sample> samples;

  std::size_t size() const { return samples.size(); }
  std::size_t labeled_count() const;
  std::vector<std::size_t> labeled_indices() const;
  std::vector<std::size_t> unlabeled_indices() const;
};

struct CollectSpec {
  TrackId track = TrackId::B;
  std::vector<int> weathers{0};
  std::size_t n_total = 6500;
  std::size_t n_labeled = 3200;
  std::uint64_t seed = 1;
  int perturb_every = 10;           // frames between perturbations
  double perturb_lateral = 0.5;     // m, uniform in [-x, x]
  double perturb_heading_deg = 5.0;
};

// Drives the expert around the track from a seeded start, injecting small
// lateral/heading perturbations, and records one sample per frame. Exactly
// n_labeled samples, chosen uniformly by seed, carry the expert label.
Dataset collect_dataset(const CollectSpec& spec, const WeatherTable& weathers);
Dataset collect_dataset(TrackId track, int weather, std::size_t n_total, std::size_t n_labeled,
                        std::uint64_t seed, const WeatherTable& weathers);

// Directory layout: manifest.json, images.bin (f32 LE records of 64x64x3),
// labels.csv (index,steering), scenes.csv (full SceneState per sample).
void save_dataset(const Dataset& ds, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

}  // namespace wkd::sim
