#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "wkd/image.hpp"
#include "wkd/layers.hpp"
#include "wkd/tensor.hpp"

namespace wkd::model {

using tn::BasicTensor;
using tn::Sequential;
using tn::Tape;

inline constexpr std::size_t kHeads = 4;
inline constexpr std::array<std::size_t, kHeads> kChannels{16, 24, 32, 50};
inline constexpr std::size_t kFeatureDim = 800;  // 4 * 4 * 50
inline constexpr int kArchitectureVersion = 1;

// Images (HWC) -> [B, 3, 64, 64].
template <typename T>
BasicTensor<T> images_to_tensor(std::span<const Image* const> images);
template <typename T>
BasicTensor<T> image_to_tensor(const Image& image);

// Everything a recorded forward pass keeps for backward.
template <typename T>
struct ForwardCache {
  std::vector<Tape<T>> fem;                    // one per FEM unit in use
  std::array<std::optional<Tape<T>>, 3> proj;  // projections of retained heads 1..3
  Tape<T> control;                             // over the stacked [heads * B, 800] features
};

template <typename T>
struct BatchOutput {
  std::size_t batch = 0;
  std::vector<std::size_t> heads;  // 0-based head indices, ascending
  BasicTensor<T> per_head;         // [heads.size(), B]
  std::vector<T> alphas;           // softmax over the retained heads' logits
  std::vector<T> combined;         // [B] = sum_i alpha_i * O_i
  std::optional<ForwardCache<T>> cache;

  T head(std::size_t h, std::size_t row) const { return per_head[h * batch + row]; }
};

// Single-image prediction.
struct AuxOutput {
  std::vector<std::size_t> heads;
  std::vector<float> per_head;
  std::vector<float> alphas;
  float combined = 0.0f;
};

// FEM units F1..F4, projections P1..P3, a control module shared by every
// head, and one logit per head. A pruned model keeps a subset of heads and
// only the FEM prefix they need.
template <typename T>
class BasicModel {
 public:
  BasicModel();
  // Kaiming-uniform initialization, zero biases and zero logits.
  static BasicModel create(std::uint64_t seed);

  const std::vector<std::size_t>& heads() const { return heads_; }
  std::size_t fem_units() const { return fem_.size(); }
  bool is_pruned() const { return heads_.size() != kHeads; }

  Sequential<T>& fem(std::size_t i) { return fem_.at(i); }
  const Sequential<T>& fem(std::size_t i) const { return fem_.at(i); }
  Sequential<T>& projection(std::size_t i) { return proj_.at(i); }
  const Sequential<T>& projection(std::size_t i) const { return proj_.at(i); }
  Sequential<T>& control() { return control_; }
  const Sequential<T>& control() const { return control_; }
  // One logit per retained head, aligned with heads().
  BasicTensor<T>& logits() { return logits_; }
  const BasicTensor<T>& logits() const { return logits_; }

  std::vector<T> alphas() const;

  std::vector<tn::ParamRef<T>> parameters();
  std::vector<tn::ConstParamRef<T>> parameters() const;
  std::vector<BasicTensor<T>> zero_grads() const;
  std::size_t parameter_count() const;

  // images: [B, 3, 64, 64]
  BatchOutput<T> forward(const BasicTensor<T>& images, bool record) const;
  // Runs only the control module; features: [N, 800] -> [N].
  std::vector<T> control_forward(const BasicTensor<T>& features) const;
  // Unit-1 post-activation features, [1, 16, 32, 32].
  BasicTensor<T> unit1_features(const BasicTensor<T>& image) const;

  // d_heads: dL/dO, [heads, B]; d_logits: dL/dz. Gradients are added into
  // `grads`, which is aligned with parameters().
  void backward(const BatchOutput<T>& out, const BasicTensor<T>& d_heads, std::span<const T> d_logits,
                std::span<BasicTensor<T>> grads) const;

  // Keeps `keep` (0-based, any order) and the FEM prefix they need.
  BasicModel subset(std::vector<std::size_t> keep) const;

  template <typename U>
  BasicModel<U> cast() const {
    BasicModel<U> m;
    m.heads_ = heads_;
    m.fem_.clear();
    for (const auto& f : fem_) m.fem_.push_back(f.template cast<U>());
    for (std::size_t i = 0; i < proj_.size(); ++i) m.proj_[i] = proj_[i].template cast<U>();
    m.control_ = control_.template cast<U>();
    m.logits_ = logits_.template cast<U>();
    return m;
  }

  friend bool operator==(const BasicModel& a, const BasicModel& b) {
    if (a.heads_ != b.heads_ || !(a.logits_ == b.logits_)) return false;
    const auto pa = a.parameters(), pb = b.parameters();
    if (pa.size() != pb.size()) return false;
    for (std::size_t i = 0; i < pa.size(); ++i)
      if (pa[i].name != pb[i].name || !(*pa[i].value == *pb[i].value)) return false;
    return true;
  }

 private:
  template <typename>
  friend class BasicModel;

  std::vector<std::size_t> heads_;
  std::vector<Sequential<T>> fem_;
  std::array<Sequential<T>, 3> proj_;  // empty Sequential when that head is not retained
  Sequential<T> control_;
  BasicTensor<T> logits_;
};

using Model = BasicModel<float>;

extern template class BasicModel<float>;
extern template class BasicModel<double>;

AuxOutput predict(const Model& model, const Image& image);
// Batched combined outputs; the batch size does not change the results.
std::vector<float> predict_combined(const Model& model, std::span<const Image* const> images);

template <typename T>
struct LossResult {
  T total = T(0);
  std::vector<T> per_head;
};

template <typename T>
struct LossGrad {
  BasicTensor<T> d_heads;  // [heads, B]
  std::vector<T> d_logits;

  static LossGrad zeros(const BatchOutput<T>& out) {
    return {BasicTensor<T>({out.heads.size(), out.batch}), std::vector<T>(out.heads.size(), T(0))};
  }
};

// L_i = mean over `rows` of (y - O_i)^2, L = sum_i alpha_i L_i. Targets are
// [B] (shared by every head) or, when `per_head_targets`, [heads, B].
// Adds weight * dL into `grad` when it is non-null. Throws UsageError on
// an empty row set.
template <typename T>
LossResult<T> weighted_loss(const BatchOutput<T>& out, std::span<const T> targets,
                            std::span<const std::size_t> rows, T weight = T(1), LossGrad<T>* grad = nullptr,
                            bool per_head_targets = false);

// All rows of the batch.
template <typename T>
LossResult<T> weighted_loss(const BatchOutput<T>& out, std::span<const T> targets);

// -tau * H(alpha) added to the loss; returns the penalty value.
template <typename T>
T entropy_penalty(const BatchOutput<T>& out, T tau, LossGrad<T>* grad);

struct PruneResult {
  Model model;
  std::vector<std::size_t> retained;
};

// Drops heads whose alpha is below eps together with FEM units only they use.
// Throws UsageError when every alpha is below eps.
PruneResult prune_by_alpha(const Model& model, double eps);

// Normalized unit-1 activation energy upsampled to 64x64, values in [0,1].
std::vector<float> activation_map(const Model& model, const Image& image);
// activation_map colorized with a jet ramp.
Image activation_heatmap(const Model& model, const Image& image);

// <path> holds the tensors, <path>.json the sidecar.
void save_model(const Model& model, const std::filesystem::path& path, const nlohmann::json& provenance = {});
Model load_model(const std::filesystem::path& path);
nlohmann::json load_sidecar(const std::filesystem::path& path);

}  // namespace wkd::model
