#include "wkd/distill.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <numbers>
#include <random>
#include <set>

#include "wkd/errors.hpp"
#include "wkd/optimizer.hpp"

namespace wkd::distill {

using model::Model;
using sim::Dataset;

namespace {

template <typename T>
void read_key(const nlohmann::json& j, const char* key, T& dst) {
  if (!j.contains(key)) return;
  try {
    dst = j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config key '") + key + "': " + e.what());
  }
}

void reject_unknown(const nlohmann::json& j, const std::set<std::string>& known, const char* what) {
  if (!j.is_object()) throw ConfigError(std::string(what) + " must be an object");
  for (const auto& [k, v] : j.items()) {
    if (!known.count(k)) throw ConfigError(std::string("unknown key '") + k + "' in " + what);
  }
}

const std::set<std::string> kTrainKeys{"epochs", "batch_size", "lr", "alpha_lr_scale", "lr_final_scale",
                                        "entropy_tau", "seed"};

void validate(const TrainConfig& c) {
  if (c.epochs < 0) throw ConfigError("epochs must be >= 0");
  if (c.batch_size == 0) throw ConfigError("batch_size must be positive");
  if (!(c.lr > 0.0f) || !(c.alpha_lr_scale >= 0.0f)) throw ConfigError("learning rates must be positive");
  if (!(c.lr_final_scale > 0.0f && c.lr_final_scale <= 1.0f)) throw ConfigError("lr_final_scale must be in (0, 1]");
  if (!(c.entropy_tau >= 0.0)) throw ConfigError("entropy_tau must be >= 0");
}

}  // namespace

TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig c) {
  reject_unknown(j, kTrainKeys, "training config");
  read_key(j, "epochs", c.epochs);
  read_key(j, "batch_size", c.batch_size);
  read_key(j, "lr", c.lr);
  read_key(j, "alpha_lr_scale", c.alpha_lr_scale);
  read_key(j, "lr_final_scale", c.lr_final_scale);
  read_key(j, "entropy_tau", c.entropy_tau);
  read_key(j, "seed", c.seed);
  validate(c);
  return c;
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"lr", c.lr},
          {"alpha_lr_scale", c.alpha_lr_scale},
          {"lr_final_scale", c.lr_final_scale},
          {"entropy_tau", c.entropy_tau},
          {"seed", c.seed}};
}

DistillConfig distill_config_from_json(const nlohmann::json& j, DistillConfig c) {
  auto known = kTrainKeys;
  known.insert({"lambda_soft", "mix", "translate_labeled", "per_head_soft_targets", "warm_start"});
  reject_unknown(j, known, "distillation config");
  nlohmann::json train = nlohmann::json::object();
  for (const auto& k : kTrainKeys)
    if (j.contains(k)) train[k] = j.at(k);
  c.train = train_config_from_json(train, c.train);
  read_key(j, "lambda_soft", c.lambda_soft);
  read_key(j, "mix", c.mix);
  read_key(j, "translate_labeled", c.translate_labeled);
  read_key(j, "per_head_soft_targets", c.per_head_soft_targets);
  read_key(j, "warm_start", c.warm_start);
  if (!(c.lambda_soft >= 0.0 && c.lambda_soft <= 1.0)) throw ConfigError("lambda_soft must lie in [0, 1]");
  if (c.mix.empty() || std::find(c.mix.begin(), c.mix.end(), 0) == c.mix.end())
    throw ConfigError("domain mix must be nonempty and include weather 0");
  for (int w : c.mix)
    if (w < 0 || w >= sim::kWeatherCount) throw ConfigError("domain mix holds unknown weather " + std::to_string(w));
  return c;
}

nlohmann::json to_json(const DistillConfig& c) {
  nlohmann::json j = to_json(c.train);
  j["lambda_soft"] = c.lambda_soft;
  j["mix"] = c.mix;
  j["translate_labeled"] = c.translate_labeled;
  j["per_head_soft_targets"] = c.per_head_soft_targets;
  j["warm_start"] = c.warm_start;
  return j;
}

void TrainLog::write_csv(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw ConfigError("cannot write " + path.string());
  os << kHeader << '\n';
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return std::string(buf);
  };
  for (const auto& e : epochs) {
    os << e.epoch << ',' << num(e.loss);
    for (std::size_t k = 0; k < model::kHeads; ++k) os << ',' << num(k < e.head_loss.size() ? e.head_loss[k] : 0.0);
    for (std::size_t k = 0; k < model::kHeads; ++k) os << ',' << num(k < e.alphas.size() ? e.alphas[k] : 0.0);
    os << ',' << num(e.hard) << ',' << num(e.soft) << ',' << num(e.seconds) << '\n';
  }
}

namespace {

// What one training run consumes. Domain `kAsStored` means "use the stored image".
constexpr int kAsStored = -1;

struct Plan {
  std::vector<std::size_t> pool;       // sample indices, ascending
  std::vector<int> mix{kAsStored};     // one domain per batch, cycled
  double lambda = 0.0;
  bool per_head_soft = false;
  std::vector<float> soft;             // per sample (x heads when per_head_soft)
  std::function<const Image*(std::size_t, int, Image&)> image_for;
};

TrainResult fit(Model model, const Dataset& ds, const Plan& plan, const TrainConfig& cfg, const StepHook& hook) {
  validate(cfg);
  const std::size_t H = model.heads().size();
  auto params = model.parameters();
  std::vector<tn::Tensor*> ptrs;
  std::vector<float> scales;
  for (const auto& p : params) {
    ptrs.push_back(p.value);
    scales.push_back(p.name == "aux_logits" ? cfg.alpha_lr_scale : 1.0f);
  }
  tn::AdamConfig ac;
  ac.lr = cfg.lr;
  tn::Adam opt(ac, ptrs, scales);
  auto grads = model.zero_grads();

  std::mt19937_64 rng(sim::mix64(cfg.seed ^ 0x5bd1e995ull));
  std::vector<std::size_t> order = plan.pool;
  const double wh = 1.0 - plan.lambda, ws = plan.lambda;
  const std::size_t B = cfg.batch_size;
  std::size_t global_step = 0;

  TrainResult result{model, {}};
  std::vector<Image> scratch(B);
  for (int epoch = 1; epoch <= cfg.epochs && !order.empty(); ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::shuffle(order.begin(), order.end(), rng);
    if (cfg.lr_final_scale != 1.0f && cfg.epochs > 1) {
      const double frac = static_cast<double>(epoch - 1) / (cfg.epochs - 1);
      const double s = cfg.lr_final_scale;
      opt.set_lr(static_cast<float>(cfg.lr * (s + (1.0 - s) * 0.5 * (1.0 + std::cos(std::numbers::pi * frac)))));
    }
    EpochLog log;
    log.epoch = epoch;
    log.head_loss.assign(H, 0.0);
    std::size_t n_batches = 0, n_hard = 0, n_soft = 0, n_mse = 0;
    double mse_sum = 0.0;

    const auto domains = batch_domains((order.size() + B - 1) / B, plan.mix);
    for (std::size_t start = 0, b = 0; start < order.size(); start += B, ++b) {
      const std::size_t n = std::min(B, order.size() - start);
      const int domain = domains[b];
      std::vector<const Image*> imgs(n);
      std::vector<float> targets(plan.per_head_soft ? H * n : n, 0.0f);
      std::vector<std::size_t> hard_rows, soft_rows;
      for (std::size_t r = 0; r < n; ++r) {
        const std::size_t idx = order[start + r];
        const auto& s = ds.samples[idx];
        imgs[r] = plan.image_for(idx, domain, scratch[r]);
        if (s.label) {
          hard_rows.push_back(r);
          for (std::size_t k = 0; k < (plan.per_head_soft ? H : 1); ++k)
            targets[k * n + r] = static_cast<float>(*s.label);
        } else {
          soft_rows.push_back(r);
          if (plan.per_head_soft) {
            for (std::size_t k = 0; k < H; ++k) targets[k * n + r] = plan.soft[idx * H + k];
          } else {
            targets[r] = plan.soft[idx];
          }
        }
      }

      const auto out = model.forward(model::images_to_tensor<float>(imgs), true);
      auto g = model::LossGrad<float>::zeros(out);
      double total = 0.0;
      if (wh > 0.0 && !hard_rows.empty()) {
        const auto lr = model::weighted_loss<float>(out, targets, hard_rows, static_cast<float>(wh), &g,
                                                    plan.per_head_soft);
        total += wh * lr.total;
        log.hard += lr.total;
        ++n_hard;
        for (std::size_t k = 0; k < H; ++k) log.head_loss[k] += wh * lr.per_head[k];
      }
      if (ws > 0.0 && !soft_rows.empty()) {
        const auto lr = model::weighted_loss<float>(out, targets, soft_rows, static_cast<float>(ws), &g,
                                                    plan.per_head_soft);
        total += ws * lr.total;
        log.soft += lr.total;
        ++n_soft;
        for (std::size_t k = 0; k < H; ++k) log.head_loss[k] += ws * lr.per_head[k];
      }
      if (cfg.entropy_tau > 0.0) total += model::entropy_penalty<float>(out, static_cast<float>(cfg.entropy_tau), &g);
      for (std::size_t r = 0; r < n; ++r) {
        const bool scalar_target = ds.samples[order[start + r]].label.has_value() || !plan.per_head_soft;
        if (!scalar_target) continue;
        const double e = static_cast<double>(out.combined[r]) - targets[r];
        mse_sum += e * e;
        ++n_mse;
      }

      for (auto& t : grads) t.fill(0.0f);
      model.backward(out, g.d_heads, g.d_logits, grads);
      opt.step(ptrs, grads);
      ++global_step;
      if (hook) hook(model, global_step);
      log.loss += total;
      ++n_batches;
    }

    log.loss /= static_cast<double>(std::max<std::size_t>(n_batches, 1));
    for (auto& v : log.head_loss) v /= static_cast<double>(std::max<std::size_t>(n_batches, 1));
    log.hard = n_hard ? log.hard / static_cast<double>(n_hard) : 0.0;
    log.soft = n_soft ? log.soft / static_cast<double>(n_soft) : 0.0;
    log.combined_mse = n_mse ? mse_sum / static_cast<double>(n_mse) : 0.0;
    const auto a = model.alphas();
    log.alphas.assign(a.begin(), a.end());
    log.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (cfg.verbose) {
      std::fprintf(stderr, "  epoch %d  L %.5f  hard %.5f  soft %.5f  alpha [%.3f %.3f %.3f %.3f]  %.1fs\n", epoch,
                   log.loss, log.hard, log.soft, a.size() > 0 ? a[0] : 0.f, a.size() > 1 ? a[1] : 0.f,
                   a.size() > 2 ? a[2] : 0.f, a.size() > 3 ? a[3] : 0.f, log.seconds);
    }
    result.log.epochs.push_back(std::move(log));
  }
  result.model = std::move(model);
  return result;
}

Model fresh_model(const TrainConfig& cfg) { return Model::create(sim::mix64(cfg.seed ^ 0x1717ull)); }

}  // namespace

TrainResult train_supervised(const Dataset& data, const TrainConfig& cfg, const StepHook& hook) {
  Plan plan;
  plan.pool = data.labeled_indices();
  if (plan.pool.empty()) throw UsageError("training needs at least one labeled sample");
  plan.image_for = [&data](std::size_t idx, int, Image&) { return &data.samples[idx].image; };
  return fit(fresh_model(cfg), data, plan, cfg, hook);
}

TrainResult train_teacher(const Dataset& labeled, const TrainConfig& cfg, const StepHook& hook) {
  for (const auto& s : labeled.samples) {
    if (s.weather != 0) throw UsageError("teacher data must come from weather 0");
  }
  Plan plan;
  plan.pool = labeled.labeled_indices();
  if (plan.pool.empty()) throw UsageError("teacher training needs at least one labeled sample");
  plan.mix = {0};
  plan.image_for = [&labeled](std::size_t idx, int, Image&) { return &labeled.samples[idx].image; };
  return fit(fresh_model(cfg), labeled, plan, cfg, hook);
}

TrainResult distill_student(const SoftTargetFn& soft_targets, const Model* warm_start, const Dataset& full,
                            std::span<const xfer::Translator> translators, const DistillConfig& cfg,
                            const sim::WeatherTable& weathers, const StepHook& hook) {
  if (cfg.mix.empty() || std::find(cfg.mix.begin(), cfg.mix.end(), 0) == cfg.mix.end())
    throw ConfigError("domain mix must be nonempty and include weather 0");
  if (!(cfg.lambda_soft >= 0.0 && cfg.lambda_soft <= 1.0)) throw ConfigError("lambda_soft must lie in [0, 1]");
  for (const auto& s : full.samples) {
    if (s.weather != 0) throw UsageError("distillation data must come from weather 0");
  }
  std::map<int, const xfer::Translator*> by_target;
  for (const auto& t : translators) by_target[t.target] = &t;
  for (int d : cfg.mix) {
    weathers.at(d);
    if (d != 0 && !by_target.count(d)) throw ConfigError("no translator for domain " + std::to_string(d));
  }

  const auto labeled = full.labeled_indices();
  const auto unlabeled = full.unlabeled_indices();
  if (cfg.lambda_soft == 1.0 && unlabeled.empty())
    std::cerr << "warning: lambda_soft = 1 but the dataset has no unlabeled samples; nothing to train on\n";
  if (cfg.lambda_soft == 0.0 && labeled.empty())
    std::cerr << "warning: lambda_soft = 0 but the dataset has no labeled samples; nothing to train on\n";

  Plan plan;
  plan.lambda = cfg.lambda_soft;
  plan.per_head_soft = cfg.per_head_soft_targets;
  plan.mix = cfg.mix;
  // Samples whose loss term carries zero weight are left out of the pool.
  for (std::size_t i = 0; i < full.size(); ++i) {
    const bool is_labeled = full.samples[i].label.has_value();
    if ((is_labeled && cfg.lambda_soft < 1.0) || (!is_labeled && cfg.lambda_soft > 0.0)) plan.pool.push_back(i);
  }

  const std::size_t H = model::kHeads;
  if (cfg.lambda_soft > 0.0 && !unlabeled.empty()) {
    const auto vals = soft_targets(unlabeled);
    const std::size_t per = cfg.per_head_soft_targets ? H : 1;
    if (vals.size() != unlabeled.size() * per) throw UsageError("soft target source returned the wrong count");
    plan.soft.assign(full.size() * per, 0.0f);
    for (std::size_t j = 0; j < unlabeled.size(); ++j) {
      for (std::size_t k = 0; k < per; ++k) plan.soft[unlabeled[j] * per + k] = vals[k * unlabeled.size() + j];
    }
  }

  const bool translate_labeled = cfg.translate_labeled;
  plan.image_for = [&full, &by_target, &weathers, translate_labeled](std::size_t idx, int domain,
                                                                   Image& scratch) -> const Image* {
    const auto& s = full.samples[idx];
    if (domain == 0 || (s.label && !translate_labeled)) return &s.image;
    scratch = xfer::translate(*by_target.at(domain), s, weathers);
    return &scratch;
  };

  Model init = warm_start != nullptr ? *warm_start : fresh_model(cfg.train);
  return fit(std::move(init), full, plan, cfg.train, hook);
}

TrainResult distill_student(const Model& teacher, const Dataset& full, std::span<const xfer::Translator> translators,
                            const DistillConfig& cfg, const sim::WeatherTable& weathers, const StepHook& hook) {
  if (teacher.is_pruned()) throw UsageError("the teacher must keep all four heads");
  const bool per_head = cfg.per_head_soft_targets;
  SoftTargetFn fn = [&teacher, &full, per_head](std::span<const std::size_t> idx) {
    std::vector<const Image*> imgs;
    for (std::size_t i : idx) imgs.push_back(&full.samples[i].image);
    if (!per_head) return model::predict_combined(teacher, imgs);
    std::vector<float> out(model::kHeads * idx.size());
    constexpr std::size_t kChunk = 64;
    for (std::size_t s = 0; s < imgs.size(); s += kChunk) {
      const std::size_t n = std::min(kChunk, imgs.size() - s);
      const auto r = teacher.forward(model::images_to_tensor<float>(std::span(imgs).subspan(s, n)), false);
      for (std::size_t k = 0; k < model::kHeads; ++k)
        for (std::size_t j = 0; j < n; ++j) out[k * idx.size() + s + j] = r.head(k, j);
    }
    return out;
  };
  return distill_student(fn, cfg.warm_start ? &teacher : nullptr, full, translators, cfg, weathers, hook);
}

std::vector<int> batch_domains(std::size_t n_batches, std::span<const int> mix) {
  if (mix.empty()) throw ConfigError("domain mix is empty");
  std::vector<int> out(n_batches);
  for (std::size_t b = 0; b < n_batches; ++b) out[b] = mix[b % mix.size()];
  return out;
}

sim::Policy substitute(const Model& student) {
  auto m = std::make_shared<const Model>(student);
  return [m](const Image& img, const sim::SceneState&) { return static_cast<double>(model::predict(*m, img).combined); };
}

}  // namespace wkd::distill
