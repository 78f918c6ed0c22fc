#include "wkd/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "wkd/errors.hpp"

namespace wkd::model {

using tn::LayerKind;
using tn::LayerSpec;

namespace {

std::vector<LayerSpec> fem_unit_specs(std::size_t unit) {
  const std::size_t in = unit == 0 ? 3 : kChannels[unit - 1];
  return {LayerSpec::conv3x3(in, kChannels[unit]), LayerSpec::of(LayerKind::MaxPool2x2),
          LayerSpec::of(LayerKind::Relu)};
}

std::vector<LayerSpec> projection_specs(std::size_t unit) {
  return {LayerSpec::of(LayerKind::AdaptiveAvgPool4), LayerSpec::of(LayerKind::Flatten),
          LayerSpec::linear(kChannels[unit] * 16, kFeatureDim), LayerSpec::of(LayerKind::Relu)};
}

std::vector<LayerSpec> control_specs() {
  return {LayerSpec::linear(kFeatureDim, 64), LayerSpec::of(LayerKind::Relu), LayerSpec::linear(64, 16),
          LayerSpec::of(LayerKind::Relu), LayerSpec::linear(16, 1), LayerSpec::of(LayerKind::Tanh)};
}

template <typename T>
std::vector<T> softmax(const BasicTensor<T>& z) {
  std::vector<T> a(z.size());
  if (a.empty()) return a;
  T mx = z[0];
  for (std::size_t i = 1; i < z.size(); ++i) mx = std::max(mx, z[i]);
  T sum = T(0);
  for (std::size_t i = 0; i < z.size(); ++i) {
    a[i] = std::exp(z[i] - mx);
    sum += a[i];
  }
  for (auto& v : a) v /= sum;
  return a;
}

template <typename T>
void add_into(BasicTensor<T>& dst, const BasicTensor<T>& src) {
  if (dst.empty()) {
    dst = src;
    return;
  }
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

}  // namespace

template <typename T>
BasicTensor<T> images_to_tensor(std::span<const Image* const> images) {
  const std::size_t B = images.size();
  constexpr std::size_t HW = Image::kWidth * Image::kHeight;
  BasicTensor<T> t({B, 3, Image::kHeight, Image::kWidth});
  for (std::size_t b = 0; b < B; ++b) {
    const float* px = images[b]->pixels.data();
    T* dst = t.ptr() + b * 3 * HW;
    for (std::size_t p = 0; p < HW; ++p)
      for (std::size_t c = 0; c < 3; ++c) dst[c * HW + p] = static_cast<T>(px[p * 3 + c]);
  }
  return t;
}

template <typename T>
BasicTensor<T> image_to_tensor(const Image& image) {
  const Image* p = &image;
  return images_to_tensor<T>(std::span<const Image* const>(&p, 1));
}

template BasicTensor<float> images_to_tensor<float>(std::span<const Image* const>);
template BasicTensor<double> images_to_tensor<double>(std::span<const Image* const>);
template BasicTensor<float> image_to_tensor<float>(const Image&);
template BasicTensor<double> image_to_tensor<double>(const Image&);

template <typename T>
BasicModel<T>::BasicModel() : heads_{0, 1, 2, 3}, control_(control_specs()), logits_({kHeads}) {
  for (std::size_t u = 0; u < kHeads; ++u) fem_.emplace_back(fem_unit_specs(u));
  for (std::size_t u = 0; u < 3; ++u) proj_[u] = Sequential<T>(projection_specs(u));
}

template <typename T>
BasicModel<T> BasicModel<T>::create(std::uint64_t seed) {
  BasicModel m;
  std::mt19937_64 rng(seed);
  for (auto& f : m.fem_) f.init_kaiming(rng);
  for (auto& p : m.proj_) p.init_kaiming(rng);
  m.control_.init_kaiming(rng);
  return m;
}

template <typename T>
std::vector<T> BasicModel<T>::alphas() const {
  return softmax(logits_);
}

template <typename T>
std::vector<tn::ParamRef<T>> BasicModel<T>::parameters() {
  std::vector<tn::ParamRef<T>> out;
  auto append = [&](std::vector<tn::ParamRef<T>> v) { out.insert(out.end(), v.begin(), v.end()); };
  for (std::size_t u = 0; u < fem_.size(); ++u) append(fem_[u].parameters("fem." + std::to_string(u) + "."));
  for (std::size_t u = 0; u < 3; ++u) append(proj_[u].parameters("proj." + std::to_string(u) + "."));
  append(control_.parameters("control."));
  out.push_back({"aux_logits", &logits_});
  return out;
}

template <typename T>
std::vector<tn::ConstParamRef<T>> BasicModel<T>::parameters() const {
  std::vector<tn::ConstParamRef<T>> out;
  auto append = [&](std::vector<tn::ConstParamRef<T>> v) { out.insert(out.end(), v.begin(), v.end()); };
  for (std::size_t u = 0; u < fem_.size(); ++u) append(fem_[u].parameters("fem." + std::to_string(u) + "."));
  for (std::size_t u = 0; u < 3; ++u) append(proj_[u].parameters("proj." + std::to_string(u) + "."));
  append(control_.parameters("control."));
  out.push_back({"aux_logits", &logits_});
  return out;
}

template <typename T>
std::vector<BasicTensor<T>> BasicModel<T>::zero_grads() const {
  std::vector<BasicTensor<T>> g;
  for (const auto& p : parameters()) g.emplace_back(p.value->shape());
  return g;
}

template <typename T>
std::size_t BasicModel<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.value->size();
  return n;
}

template <typename T>
BatchOutput<T> BasicModel<T>::forward(const BasicTensor<T>& images, bool record) const {
  if (images.rank() != 4 || images.dim(1) != 3 || images.dim(2) != Image::kHeight ||
      images.dim(3) != Image::kWidth) {
    throw ShapeError("model input must be [B, 3, 64, 64], got " + tn::shape_str(images.shape()));
  }
  const std::size_t B = images.dim(0);
  if (B == 0) throw UsageError("empty batch");

  BatchOutput<T> out;
  out.batch = B;
  out.heads = heads_;
  if (record) out.cache.emplace();

  std::vector<BasicTensor<T>> units(fem_.size());
  const BasicTensor<T>* cur = &images;
  for (std::size_t u = 0; u < fem_.size(); ++u) {
    auto r = fem_[u].forward(*cur, record);
    units[u] = std::move(r.output);
    if (record) out.cache->fem.push_back(std::move(*r.tape));
    cur = &units[u];
  }

  const std::size_t H = heads_.size();
  BasicTensor<T> stacked({H * B, kFeatureDim});
  for (std::size_t k = 0; k < H; ++k) {
    const std::size_t h = heads_[k];
    T* dst = stacked.ptr() + k * B * kFeatureDim;
    if (h < 3) {
      auto r = proj_[h].forward(units[h], record);
      std::copy(r.output.ptr(), r.output.ptr() + B * kFeatureDim, dst);
      if (record) out.cache->proj[h] = std::move(*r.tape);
    } else {
      if (units[3].size() != B * kFeatureDim) throw ShapeError("unit-4 features do not flatten to 800");
      std::copy(units[3].ptr(), units[3].ptr() + B * kFeatureDim, dst);
    }
  }

  auto c = control_.forward(stacked, record);
  out.per_head = std::move(c.output);
  out.per_head.reshape({H, B});
  if (record) out.cache->control = std::move(*c.tape);

  out.alphas = alphas();
  out.combined.assign(B, T(0));
  for (std::size_t b = 0; b < B; ++b) {
    T s = T(0);
    for (std::size_t k = 0; k < H; ++k) s += out.alphas[k] * out.per_head[k * B + b];
    out.combined[b] = s;
  }
  return out;
}

template <typename T>
std::vector<T> BasicModel<T>::control_forward(const BasicTensor<T>& features) const {
  auto r = control_.forward(features, false);
  return {r.output.data().begin(), r.output.data().end()};
}

template <typename T>
BasicTensor<T> BasicModel<T>::unit1_features(const BasicTensor<T>& image) const {
  return fem_.at(0).forward(image, false).output;
}

template <typename T>
void BasicModel<T>::backward(const BatchOutput<T>& out, const BasicTensor<T>& d_heads, std::span<const T> d_logits,
                             std::span<BasicTensor<T>> grads) const {
  if (!out.cache) throw UsageError("backward needs a forward pass recorded with record=true");
  const std::size_t B = out.batch, H = heads_.size();
  if (d_heads.size() != H * B) throw ShapeError("head gradient must be [heads, B]");
  if (d_logits.size() != H) throw ShapeError("logit gradient must have one entry per head");

  // Gradient slots follow parameters(): FEM units, projections, control, logits.
  std::vector<std::size_t> fem_off(fem_.size());
  std::size_t off = 0;
  for (std::size_t u = 0; u < fem_.size(); ++u) {
    fem_off[u] = off;
    off += fem_[u].parameters().size();
  }
  std::array<std::size_t, 3> proj_off{};
  for (std::size_t u = 0; u < 3; ++u) {
    proj_off[u] = off;
    off += proj_[u].parameters().size();
  }
  const std::size_t ctrl_off = off;
  off += control_.parameters().size();
  if (grads.size() != off + 1) throw UsageError("gradient buffer count mismatch");
  auto slots = [&](std::size_t begin, std::size_t n) { return grads.subspan(begin, n); };

  BasicTensor<T> d_out({H * B, 1});
  std::copy(d_heads.ptr(), d_heads.ptr() + H * B, d_out.ptr());
  const BasicTensor<T> d_feat =
      control_.backward(out.cache->control, d_out, slots(ctrl_off, control_.parameters().size()), true);

  std::vector<BasicTensor<T>> g_unit(fem_.size());
  for (std::size_t k = 0; k < H; ++k) {
    const std::size_t h = heads_[k];
    BasicTensor<T> slice({B, kFeatureDim});
    std::copy(d_feat.ptr() + k * B * kFeatureDim, d_feat.ptr() + (k + 1) * B * kFeatureDim, slice.ptr());
    if (h < 3) {
      add_into(g_unit[h], proj_[h].backward(*out.cache->proj[h], slice,
                                            slots(proj_off[h], proj_[h].parameters().size()), true));
    } else {
      slice.reshape(out.cache->fem[3].acts.back().shape());
      add_into(g_unit[3], slice);
    }
  }
  for (std::size_t u = fem_.size(); u-- > 0;) {
    if (g_unit[u].empty()) g_unit[u] = BasicTensor<T>(out.cache->fem[u].acts.back().shape());
    BasicTensor<T> din =
        fem_[u].backward(out.cache->fem[u], g_unit[u], slots(fem_off[u], fem_[u].parameters().size()), u > 0);
    if (u > 0) add_into(g_unit[u - 1], din);
  }

  BasicTensor<T>& gz = grads[off];
  for (std::size_t k = 0; k < H; ++k) gz[k] += d_logits[k];
  if (!gz.all_finite()) throw NumericError("non-finite logit gradient");
}

template <typename T>
BasicModel<T> BasicModel<T>::subset(std::vector<std::size_t> keep) const {
  std::sort(keep.begin(), keep.end());
  keep.erase(std::unique(keep.begin(), keep.end()), keep.end());
  if (keep.empty()) throw UsageError("a model needs at least one head");
  BasicModel m;
  m.heads_.clear();
  std::vector<T> z;
  for (std::size_t h : keep) {
    const auto it = std::find(heads_.begin(), heads_.end(), h);
    if (it == heads_.end()) throw UsageError("head " + std::to_string(h + 1) + " is not present in this model");
    m.heads_.push_back(h);
    z.push_back(logits_[static_cast<std::size_t>(it - heads_.begin())]);
  }
  m.fem_.assign(fem_.begin(), fem_.begin() + static_cast<std::ptrdiff_t>(keep.back() + 1));
  for (std::size_t u = 0; u < 3; ++u) {
    const bool kept = std::find(keep.begin(), keep.end(), u) != keep.end();
    m.proj_[u] = kept ? proj_[u] : Sequential<T>();
  }
  m.control_ = control_;
  m.logits_ = BasicTensor<T>({z.size()}, z);
  return m;
}

template class BasicModel<float>;
template class BasicModel<double>;

AuxOutput predict(const Model& model, const Image& image) {
  const auto out = model.forward(image_to_tensor<float>(image), false);
  AuxOutput r;
  r.heads = out.heads;
  r.per_head.assign(out.per_head.data().begin(), out.per_head.data().end());
  r.alphas = out.alphas;
  r.combined = out.combined[0];
  return r;
}

std::vector<float> predict_combined(const Model& model, std::span<const Image* const> images) {
  constexpr std::size_t kChunk = 64;
  std::vector<float> out;
  out.reserve(images.size());
  for (std::size_t i = 0; i < images.size(); i += kChunk) {
    const auto part = images.subspan(i, std::min(kChunk, images.size() - i));
    const auto r = model.forward(images_to_tensor<float>(part), false);
    out.insert(out.end(), r.combined.begin(), r.combined.end());
  }
  return out;
}

template <typename T>
LossResult<T> weighted_loss(const BatchOutput<T>& out, std::span<const T> targets,
                            std::span<const std::size_t> rows, T weight, LossGrad<T>* grad, bool per_head_targets) {
  if (rows.empty()) throw UsageError("weighted loss over an empty batch");
  const std::size_t H = out.heads.size(), B = out.batch;
  if (targets.size() != (per_head_targets ? H * B : B)) throw ShapeError("target count does not match the batch");
  const T inv_n = T(1) / static_cast<T>(rows.size());

  LossResult<T> r;
  r.per_head.assign(H, T(0));
  for (std::size_t k = 0; k < H; ++k) {
    T s = T(0);
    for (std::size_t j : rows) {
      const T y = per_head_targets ? targets[k * B + j] : targets[j];
      const T e = out.per_head[k * B + j] - y;
      s += e * e;
    }
    r.per_head[k] = s * inv_n;
  }
  for (std::size_t k = 0; k < H; ++k) r.total += out.alphas[k] * r.per_head[k];

  if (grad != nullptr) {
    for (std::size_t k = 0; k < H; ++k) {
      const T coef = weight * out.alphas[k] * T(2) * inv_n;
      for (std::size_t j : rows) {
        const T y = per_head_targets ? targets[k * B + j] : targets[j];
        grad->d_heads[k * B + j] += coef * (out.per_head[k * B + j] - y);
      }
      grad->d_logits[k] += weight * out.alphas[k] * (r.per_head[k] - r.total);
    }
  }
  return r;
}

template <typename T>
LossResult<T> weighted_loss(const BatchOutput<T>& out, std::span<const T> targets) {
  std::vector<std::size_t> rows(out.batch);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return weighted_loss<T>(out, targets, rows);
}

template <typename T>
T entropy_penalty(const BatchOutput<T>& out, T tau, LossGrad<T>* grad) {
  T h = T(0);
  for (T a : out.alphas) h -= a * std::log(a);
  if (grad != nullptr) {
    for (std::size_t k = 0; k < out.alphas.size(); ++k) {
      const T a = out.alphas[k];
      grad->d_logits[k] += tau * a * (std::log(a) + h);
    }
  }
  return -tau * h;
}

template LossResult<float> weighted_loss<float>(const BatchOutput<float>&, std::span<const float>,
                                                std::span<const std::size_t>, float, LossGrad<float>*, bool);
template LossResult<double> weighted_loss<double>(const BatchOutput<double>&, std::span<const double>,
                                                  std::span<const std::size_t>, double, LossGrad<double>*, bool);
template LossResult<float> weighted_loss<float>(const BatchOutput<float>&, std::span<const float>);
template LossResult<double> weighted_loss<double>(const BatchOutput<double>&, std::span<const double>);
template float entropy_penalty<float>(const BatchOutput<float>&, float, LossGrad<float>*);
template double entropy_penalty<double>(const BatchOutput<double>&, double, LossGrad<double>*);

PruneResult prune_by_alpha(const Model& model, double eps) {
  const auto a = model.alphas();
  std::vector<std::size_t> keep;
  for (std::size_t k = 0; k < a.size(); ++k)
    if (static_cast<double>(a[k]) >= eps) keep.push_back(model.heads()[k]);
  if (keep.empty()) throw UsageError("every auxiliary weight is below the pruning threshold");
  if (keep.size() == model.heads().size()) return {model, keep};
  return {model.subset(keep), keep};
}

}  // namespace wkd::model
