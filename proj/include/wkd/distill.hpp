#pragma once

#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "json.hpp"
#include "wkd/domainxfer.hpp"
#include "wkd/model.hpp"
#include "wkd/sim/dataset.hpp"
#include "wkd/sim/episode.hpp"
#include "wkd/sim/weather.hpp"

namespace wkd::distill {

struct TrainConfig {
  int epochs = 12;
  std::size_t batch_size = 32;
  float lr = 1e-3f;
  float alpha_lr_scale = 1.0f;  // multiplies lr for the auxiliary logits
  float lr_final_scale = 1.0f;  // cosine decay per epoch down to lr * this; 1 keeps lr constant
  double entropy_tau = 0.0;     // adds -tau * H(alpha) when positive
  std::uint64_t seed = 1;
  bool verbose = false;
};

struct DistillConfig {
  TrainConfig train;
  double lambda_soft = 0.5;           // hard weight is 1 - lambda_soft
  std::vector<int> mix{0, 2, 3, 4, 6, 8, 9, 10, 11, 12, 13};
  bool translate_labeled = true;      // hard loss on the translated image
  bool per_head_soft_targets = false; // soft target per head instead of the combined output
  bool warm_start = false;            // start from the teacher's weights
};

TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});
nlohmann::json to_json(const TrainConfig& c);
DistillConfig distill_config_from_json(const nlohmann::json& j, DistillConfig base = {});
nlohmann::json to_json(const DistillConfig& c);

struct EpochLog {
  int epoch = 0;
  double loss = 0.0;                  // mean total objective over batches
  std::vector<double> head_loss;      // mean L_i
  std::vector<double> alphas;         // after the epoch's last step
  double hard = 0.0;
  double soft = 0.0;
  double seconds = 0.0;
  double combined_mse = 0.0;          // combined output vs the batch targets
};

struct TrainLog {
  std::vector<EpochLog> epochs;

  static constexpr const char* kHeader = "epoch,L,L1,L2,L3,L4,a1,a2,a3,a4,hard,soft,seconds";
  void write_csv(const std::filesystem::path& path) const;
};

struct TrainResult {
  model::Model model;
  TrainLog log;
};

// Called after every optimizer step with the updated model and the global step index.
using StepHook = std::function<void(const model::Model&, std::size_t)>;

// Plain supervised training on every labeled sample as stored (any weather).
TrainResult train_supervised(const sim::Dataset& data, const TrainConfig& cfg, const StepHook& hook = {});

// Supervised training of the teacher; every sample must be weather 0.
TrainResult train_teacher(const sim::Dataset& labeled, const TrainConfig& cfg, const StepHook& hook = {});

// Soft targets for sample indices: returns one value per index, or
// heads x indices values (head-major) when per-head targets are requested.
using SoftTargetFn = std::function<std::vector<float>(std::span<const std::size_t>)>;

// Teacher-to-student transfer over translated multi-domain batches.
TrainResult distill_student(const model::Model& teacher, const sim::Dataset& full,
                            std::span<const xfer::Translator> translators, const DistillConfig& cfg,
                            const sim::WeatherTable& weathers, const StepHook& hook = {});
// Same, with an arbitrary soft-target source (e.g. a ground-truth stub).
TrainResult distill_student(const SoftTargetFn& soft_targets, const model::Model* warm_start,
                            const sim::Dataset& full, std::span<const xfer::Translator> translators,
                            const DistillConfig& cfg, const sim::WeatherTable& weathers, const StepHook& hook = {});

// Domain assigned to each batch of an epoch: the mix cycled in order, so
// per-domain batch counts differ by at most one.
std::vector<int> batch_domains(std::size_t n_batches, std::span<const int> mix);

// Closed-loop policy emitting the model's combined output.
sim::Policy substitute(const model::Model& student);

}  // namespace wkd::distill
