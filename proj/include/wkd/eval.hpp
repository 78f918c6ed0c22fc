#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "wkd/distill.hpp"
#include "wkd/domainxfer.hpp"
#include "wkd/model.hpp"
#include "wkd/sim/dataset.hpp"
#include "wkd/sim/episode.hpp"
#include "wkd/sim/weather.hpp"

namespace wkd::eval {

// Batched steering prediction for offline evaluation.
using Predictor = std::function<std::vector<float>(std::span<const Image* const>)>;

Predictor model_predictor(const model::Model& m);

struct WeatherMae {
  int weather = 0;
  double mae = 0.0;
  std::size_t samples = 0;
};

// Mean absolute error per evaluation set (one weather each). Throws
// UsageError on an unlabeled sample.
std::vector<WeatherMae> eval_offline(const Predictor& predict, std::span<const sim::Dataset> eval_sets);

struct OnlineSpec {
  sim::TrackId track = sim::TrackId::A;
  std::vector<int> weathers{0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14};
  std::vector<std::size_t> turns{0, 1, 2, 3, 4, 5, 6, 7};
  int frames = sim::kTurnFrames;
  std::uint64_t seed = 7;
  double lane_width = sim::kLaneWidth;
};

struct WeatherOnline {
  int weather = 0;
  std::vector<double> per_turn;  // in-lane %, aligned with OnlineSpec::turns
  std::size_t frames = 0;        // total recorded frames
  double mean() const;
};

std::uint64_t episode_seed(std::uint64_t base, int weather, std::size_t turn);

std::vector<WeatherOnline> eval_online(const sim::Policy& policy, const OnlineSpec& spec,
                                       const sim::WeatherTable& weathers);

// Fully labeled evaluation sets on one track, one per weather; every set
// shares the same driven trajectory.
std::vector<sim::Dataset> make_eval_sets(sim::TrackId track, std::span<const int> weathers, std::size_t per_weather,
                                         std::uint64_t seed, const sim::WeatherTable& table);

struct ExperimentConfig {
  std::uint64_t seed = 1;
  std::optional<std::filesystem::path> weather_config;

  sim::TrackId train_track = sim::TrackId::B;
  std::size_t n_total = 6500;
  std::size_t n_labeled = 3200;
  sim::TrackId eval_track = sim::TrackId::A;
  std::size_t eval_per_weather = 400;
  std::size_t oracle_total = 6000;

  distill::TrainConfig teacher;
  distill::TrainConfig oracle;
  distill::DistillConfig student;
  xfer::TranslatorConfig translator;

  // Pruning threshold; absent means "keep only the dominant head".
  std::optional<double> prune_threshold;
  OnlineSpec online;
  std::vector<int> heatmap_weathers{0, 9};

  // Optional pre-trained models / pre-generated datasets, keyed by roster name
  // ("Oracle", "Teacher", "Ours") and dataset role ("train", "oracle").
  std::map<std::string, std::filesystem::path> models;
  std::map<std::string, std::filesystem::path> datasets;

  bool verbose = false;

  static ExperimentConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
  static ExperimentConfig load(const std::filesystem::path& path);
  nlohmann::json to_json() const;
  sim::WeatherTable weather_table() const;
};

struct RosterEntry {
  std::string name;
  model::Model model;
  std::vector<WeatherMae> offline;
  std::vector<WeatherOnline> online;
  distill::TrainLog log;  // empty for loaded or derived models

  double online_overall() const;
  double online_mean(int first_weather, int last_weather) const;
  double offline_mean(int first_weather, int last_weather) const;
};

struct RosterReport {
  std::vector<RosterEntry> entries;  // Oracle, Teacher, Ours, Ours-pruned
  std::vector<std::size_t> pruned_heads;
  nlohmann::json summary;

  const RosterEntry& at(const std::string& name) const;
};

// Trains or loads every roster model, evaluates it offline and online, and
// writes offline.csv, online.csv, table1.csv, divergence.csv, alphas.csv,
// heatmaps/, logs/, models/ and report.json under `out`.
RosterReport run_roster(const ExperimentConfig& cfg, const std::filesystem::path& out);

void write_offline_csv(const std::filesystem::path& path, const std::vector<RosterEntry>& entries);
void write_online_csv(const std::filesystem::path& path, const std::vector<RosterEntry>& entries);
void write_table1_csv(const std::filesystem::path& path, const std::vector<RosterEntry>& entries);
void write_divergence_csv(const std::filesystem::path& path, const std::vector<RosterEntry>& entries);

}  // namespace wkd::eval
