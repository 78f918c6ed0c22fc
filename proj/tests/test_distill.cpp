#include <cmath>
#include <fstream>
#include <map>

#include "doctest.h"
#include "wkd/distill.hpp"
#include "wkd/errors.hpp"
#include "wkd/sim/expert.hpp"
#include "wkd/sim/render.hpp"

using namespace wkd;
using namespace wkd::distill;

namespace {

const sim::WeatherTable& table() {
  static const auto t = sim::WeatherTable::defaults();
  return t;
}

TrainConfig small_config(int epochs, std::size_t batch = 16) {
  TrainConfig c;
  c.epochs = epochs;
  c.batch_size = batch;
  c.seed = 5;
  return c;
}

void check_logs_equal(const TrainLog& a, const TrainLog& b) {
  REQUIRE(a.epochs.size() == b.epochs.size());
  for (std::size_t e = 0; e < a.epochs.size(); ++e) {
    CHECK(a.epochs[e].loss == b.epochs[e].loss);
    CHECK(a.epochs[e].head_loss == b.epochs[e].head_loss);
    CHECK(a.epochs[e].alphas == b.epochs[e].alphas);
    CHECK(a.epochs[e].hard == b.epochs[e].hard);
    CHECK(a.epochs[e].combined_mse == b.epochs[e].combined_mse);
  }
}

}  // namespace

TEST_CASE("teacher training: combined-head MSE falls over the first three epochs") {
  const auto ds = sim::collect_dataset(sim::TrackId::B, 0, 6500, 3200, 101, table());
  TrainConfig c;
  c.epochs = 3;
  c.seed = 1;
  const auto r = train_teacher(ds, c);
  REQUIRE(r.log.epochs.size() == 3);
  CHECK(r.log.epochs[1].combined_mse < r.log.epochs[0].combined_mse);
  CHECK(r.log.epochs[2].combined_mse < r.log.epochs[1].combined_mse);
}

TEST_CASE("teacher training memorizes a single repeated sample") {
  auto ds = sim::collect_dataset(sim::TrackId::A, 0, 1, 1, 9, table());
  // choose a frame with a clearly non-zero label
  sim::SceneState s = *ds.samples[0].scene;
  s.vehicle.position = s.vehicle.position + sim::Vec2{0.0, 0.8};
  const double label = sim::expert_steering(s);
  REQUIRE(std::fabs(label) > 0.02);
  ds.samples.assign(8, sim::Sample{sim::render(s, table()), label, s, 0});
  const auto r = train_teacher(ds, small_config(200, 8));
  CHECK(std::fabs(model::predict(r.model, ds.samples[0].image).combined - label) < 0.01);
}

TEST_CASE("training is bitwise deterministic under a fixed seed") {
  const auto ds = sim::collect_dataset(sim::TrackId::B, 0, 120, 60, 3, table());
  const auto a = train_teacher(ds, small_config(2));
  const auto b = train_teacher(ds, small_config(2));
  CHECK(a.model == b.model);
  check_logs_equal(a.log, b.log);
  auto other = small_config(2);
  other.seed = 6;
  CHECK(!(train_teacher(ds, other).model == a.model));
}

TEST_CASE("cosine decay: single epoch is unaffected, later epochs differ") {
  const auto ds = sim::collect_dataset(sim::TrackId::B, 0, 96, 64, 3, table());
  auto decayed = small_config(1);
  decayed.lr_final_scale = 0.1f;
  CHECK(train_teacher(ds, decayed).model == train_teacher(ds, small_config(1)).model);
  decayed.epochs = 3;
  const auto a = train_teacher(ds, decayed);
  const auto b = train_teacher(ds, small_config(3));
  // the first epoch runs at the full rate in both
  CHECK(a.log.epochs[0].loss == b.log.epochs[0].loss);
  CHECK(!(a.model == b.model));
}

TEST_CASE("distillation with lambda 0 and mix {0} is teacher training, bitwise") {
  const auto ds = sim::collect_dataset(sim::TrackId::B, 0, 160, 70, 4, table());
  const auto teacher = train_teacher(ds, small_config(2));
  DistillConfig dc;
  dc.train = small_config(2);
  dc.lambda_soft = 0.0;
  dc.mix = {0};
  const auto student = distill_student(teacher.model, ds, {}, dc, table());
  CHECK(student.model == teacher.model);
  check_logs_equal(student.log, teacher.log);
}

TEST_CASE("ground-truth teacher stub: soft loss equals the hard loss of the labels") {
  // Fully labeled 10-sample batch trained on hard labels, versus the same
  // samples unlabeled with a stub returning those labels as soft targets.
  const auto labeled = sim::collect_dataset(sim::TrackId::B, 0, 10, 10, 12, table());
  auto unlabeled = labeled;
  std::map<std::size_t, float> truth;
  for (std::size_t i = 0; i < unlabeled.size(); ++i) {
    truth[i] = static_cast<float>(*unlabeled.samples[i].label);
    unlabeled.samples[i].label.reset();
  }
  const SoftTargetFn stub = [&truth](std::span<const std::size_t> idx) {
    std::vector<float> v;
    for (std::size_t i : idx) v.push_back(truth.at(i));
    return v;
  };
  const std::vector<int> targets{3};
  const auto tt = xfer::build_translation_table(targets, xfer::TranslatorKind::Oracle);

  DistillConfig hard;
  hard.train = small_config(3, 5);  // two batches per epoch: domains 0 and 3
  hard.lambda_soft = 0.0;
  hard.mix = {0, 3};
  DistillConfig soft = hard;
  soft.lambda_soft = 1.0;

  const auto rh = distill_student(stub, nullptr, labeled, tt, hard, table());
  const auto rs = distill_student(stub, nullptr, unlabeled, tt, soft, table());
  REQUIRE(rh.log.epochs.size() == 3);
  for (std::size_t e = 0; e < 3; ++e) {
    CHECK(std::fabs(rs.log.epochs[e].soft - rh.log.epochs[e].hard) <= 1e-6);
    CHECK(rs.log.epochs[e].hard == 0.0);
  }
  CHECK(rs.model == rh.model);
}

TEST_CASE("equal-proportion domain sampler") {
  const std::vector<int> mix{0, 2, 3, 4, 6, 8, 9, 10, 11, 12, 13};
  for (std::size_t n : {0u, 1u, 10u, 11u, 12u, 100u, 204u}) {
    const auto d = batch_domains(n, mix);
    REQUIRE(d.size() == n);
    std::map<int, int> counts;
    for (int w : mix) counts[w] = 0;
    for (int w : d) ++counts.at(w);
    int lo = 1 << 30, hi = 0;
    for (const auto& [w, c] : counts) {
      lo = std::min(lo, c);
      hi = std::max(hi, c);
    }
    CHECK(hi - lo <= 1);
  }
  CHECK_THROWS_AS(batch_domains(3, std::vector<int>{}), ConfigError);
}

TEST_CASE("alphas sum to one after every step and in every log row") {
  const auto ds = sim::collect_dataset(sim::TrackId::B, 0, 96, 40, 8, table());
  const auto teacher = train_teacher(ds, small_config(1));
  DistillConfig dc;
  dc.train = small_config(2);
  dc.train.alpha_lr_scale = 50.0f;  // move alpha fast so the check is not vacuous
  const auto tt = xfer::build_translation_table(xfer::TranslatorConfig{});
  std::size_t steps = 0;
  double worst = 0.0;
  const StepHook hook = [&](const model::Model& m, std::size_t) {
    double s = 0.0;
    for (float a : m.alphas()) s += a;
    worst = std::max(worst, std::fabs(s - 1.0));
    ++steps;
  };
  const auto r = distill_student(teacher.model, ds, tt, dc, table(), hook);
  CHECK(steps == 2 * 6);
  CHECK(worst <= 1e-6);
  for (const auto& e : r.log.epochs) {
    double s = 0.0;
    for (double a : e.alphas) s += a;
    CHECK(std::fabs(s - 1.0) <= 1e-6);
  }
  CHECK(r.model.alphas()[0] != doctest::Approx(0.25));
}

TEST_CASE("configuration validation") {
  CHECK_THROWS_AS(train_config_from_json({{"epochs", 2}, {"learning_rate", 0.1}}), ConfigError);
  CHECK_THROWS_AS(train_config_from_json({{"batch_size", 0}}), ConfigError);
  CHECK_THROWS_AS(train_config_from_json({{"lr_final_scale", 0.0}}), ConfigError);
  CHECK_THROWS_AS(train_config_from_json({{"lr_final_scale", 1.5}}), ConfigError);
  CHECK(train_config_from_json(to_json(TrainConfig{.lr_final_scale = 0.25f})).lr_final_scale == 0.25f);
  CHECK_THROWS_AS(distill_config_from_json({{"lambda_soft", 1.5}}), ConfigError);
  CHECK_THROWS_AS(distill_config_from_json({{"mix", {2, 3}}}), ConfigError);
  CHECK_THROWS_AS(distill_config_from_json({{"mix", nlohmann::json::array()}}), ConfigError);
  DistillConfig d;
  d.lambda_soft = 0.3;
  d.mix = {0, 9};
  d.train.epochs = 4;
  const auto back = distill_config_from_json(to_json(d));
  CHECK(back.lambda_soft == 0.3);
  CHECK(back.mix == d.mix);
  CHECK(back.train.epochs == 4);

  const auto ds = sim::collect_dataset(sim::TrackId::B, 0, 20, 10, 8, table());
  const auto teacher = model::Model::create(1);
  DistillConfig missing;
  missing.mix = {0, 5};
  const std::vector<int> targets{3};
  const auto tt = xfer::build_translation_table(targets, xfer::TranslatorKind::Oracle);
  CHECK_THROWS_AS(distill_student(teacher, ds, tt, missing, table()), ConfigError);
}

TEST_CASE("teacher preconditions") {
  auto ds = sim::collect_dataset(sim::TrackId::B, 0, 20, 0, 8, table());
  CHECK_THROWS_AS(train_teacher(ds, small_config(1)), UsageError);
  auto rainy = sim::collect_dataset(sim::TrackId::B, 4, 20, 20, 8, table());
  CHECK_THROWS_AS(train_teacher(rainy, small_config(1)), UsageError);
}

TEST_CASE("degenerate lambda settings warn instead of failing") {
  const auto full = sim::collect_dataset(sim::TrackId::B, 0, 20, 20, 8, table());
  DistillConfig dc;
  dc.train = small_config(1);
  dc.lambda_soft = 1.0;
  dc.mix = {0};
  const auto r = distill_student(model::Model::create(1), full, {}, dc, table());
  CHECK(r.log.epochs.empty());
}

TEST_CASE("substitute drives with the combined output") {
  const auto m = model::Model::create(21);
  const auto policy = substitute(m);
  const auto ds = sim::collect_dataset(sim::TrackId::A, 0, 20, 0, 8, table());
  for (const auto& s : ds.samples) {
    const double v = policy(s.image, *s.scene);
    CHECK(std::fabs(v) < 1.0);
    CHECK(v == static_cast<double>(model::predict(m, s.image).combined));
  }
  const auto& a = sim::track(sim::TrackId::A);
  const sim::Policy direct = [&m](const Image& img, const sim::SceneState&) {
    return static_cast<double>(model::predict(m, img).combined);
  };
  const auto r1 = sim::run_episode(a, a.turns()[2], table(), policy, {0, sim::kTurnFrames, 3});
  const auto r2 = sim::run_episode(a, a.turns()[2], table(), direct, {0, sim::kTurnFrames, 3});
  CHECK(r1.deviation == r2.deviation);
}

TEST_CASE("train log CSV layout") {
  TrainLog log;
  log.epochs.push_back({1, 0.5, {0.1, 0.2, 0.3, 0.4}, {0.25, 0.25, 0.25, 0.25}, 0.5, 0.0, 1.0, 0.4});
  const auto p = std::filesystem::temp_directory_path() / "wkd_trainlog.csv";
  log.write_csv(p);
  std::ifstream is(p);
  std::string header, row;
  std::getline(is, header);
  std::getline(is, row);
  CHECK(header == TrainLog::kHeader);
  CHECK(row == "1,0.5,0.1,0.2,0.3,0.4,0.25,0.25,0.25,0.25,0.5,0,1");
}
