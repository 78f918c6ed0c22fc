// Acceptance run: one PASS/FAIL line per criterion. Criteria 6-10 share one
// roster run of the default experiment (or an existing one via --reuse).
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "support/gradcheck.hpp"
#include "wkd/distill.hpp"
#include "wkd/eval.hpp"
#include "wkd/sim/expert.hpp"
#include "wkd/sim/render.hpp"

using namespace wkd;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

int failures = 0;

void verdict(int id, bool ok, const std::string& detail) {
  std::printf("criterion %2d: %s  %s\n", id, ok ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

const sim::WeatherTable& table() {
  static const auto t = sim::WeatherTable::defaults();
  return t;
}

void criterion_1() {
  const auto t0 = Clock::now();
  gradcheck::Report all;
  for (auto kind : {tn::LayerKind::Conv3x3, tn::LayerKind::MaxPool2x2, tn::LayerKind::Relu, tn::LayerKind::Tanh,
                    tn::LayerKind::Linear, tn::LayerKind::AdaptiveAvgPool4, tn::LayerKind::Flatten})
    for (std::uint64_t seed = 1; seed <= 20; ++seed) all.merge(gradcheck::check_layer(kind, seed));
  for (std::uint64_t seed = 1; seed <= 20; ++seed) all.merge(gradcheck::check_model(seed));
  const double secs = seconds_since(t0);
  const bool ok = all.max_rel < 1e-3 && all.skipped * 50 <= all.checked && secs < 120.0;
  verdict(1, ok,
          "max rel err " + fmt("%.2e", all.max_rel) + " over " + std::to_string(all.checked) + " coords (" +
              std::to_string(all.skipped) + " kink-skipped), 7 layers + model x 20 seeds, " + fmt("%.1f s", secs));
}

void criterion_2() {
  bool ok = true;
  std::ostringstream why;

  // alpha sum after every step, with alpha moving fast enough to matter
  const auto ds = sim::collect_dataset(sim::TrackId::B, 0, 320, 160, 21, table());
  distill::TrainConfig tc;
  tc.epochs = 2;
  tc.seed = 4;
  const auto teacher = distill::train_teacher(ds, tc);
  distill::DistillConfig dc;
  dc.train = tc;
  dc.train.alpha_lr_scale = 50.0f;
  double worst_sum = 0.0;
  std::size_t steps = 0;
  const distill::StepHook hook = [&](const model::Model& m, std::size_t) {
    double s = 0.0;
    for (float a : m.alphas()) s += a;
    worst_sum = std::max(worst_sum, std::fabs(s - 1.0));
    ++steps;
  };
  const auto tt = xfer::build_translation_table(xfer::TranslatorConfig{});
  const auto student = distill::distill_student(teacher.model, ds, tt, dc, table(), hook);
  if (worst_sum > 1e-6) ok = false;
  why << "max|sum a - 1| " << fmt("%.1e", worst_sum) << " over " << steps << " steps";

  // combined = sum a_i O_i and the output range, on rendered frames
  double worst_comb = 0.0, max_abs = 0.0;
  for (const auto* m : {&teacher.model, &student.model}) {
    for (std::size_t i = 0; i < ds.size(); i += 8) {
      const auto p = model::predict(*m, ds.samples[i].image);
      double c = 0.0;
      for (std::size_t h = 0; h < p.per_head.size(); ++h) {
        c += static_cast<double>(p.alphas[h]) * p.per_head[h];
        max_abs = std::max(max_abs, static_cast<double>(std::fabs(p.per_head[h])));
      }
      worst_comb = std::max(worst_comb, std::fabs(c - p.combined));
      max_abs = std::max(max_abs, static_cast<double>(std::fabs(p.combined)));
    }
  }
  if (worst_comb > 1e-6 || max_abs >= 1.0) ok = false;
  why << "; combined err " << fmt("%.1e", worst_comb) << "; max|out| " << fmt("%.4f", max_abs);

  // bitwise determinism of rendering and training
  bool render_det = true;
  for (int w = 0; w < sim::kWeatherCount; ++w)
    for (std::size_t i = 0; i < ds.size(); i += 40) {
      sim::SceneState s = *ds.samples[i].scene;
      s.weather = w;
      render_det = render_det && bitwise_equal(sim::render(s, table()), sim::render(s, table()));
    }
  const bool train_det = distill::train_teacher(ds, tc).model == teacher.model &&
                         distill::distill_student(teacher.model, ds, tt, dc, table()).model == student.model;
  if (!render_det || !train_det) ok = false;
  why << "; render " << (render_det ? "bitwise" : "DIFFERS") << ", training " << (train_det ? "bitwise" : "DIFFERS");
  verdict(2, ok, why.str());
}

void criterion_3() {
  // 1000 random labeled frames spread over both tracks
  auto a = sim::collect_dataset(sim::TrackId::A, 0, 500, 500, 77, table());
  const auto b = sim::collect_dataset(sim::TrackId::B, 0, 500, 500, 78, table());
  a.samples.insert(a.samples.end(), b.samples.begin(), b.samples.end());
  const auto tt = xfer::build_translation_table(xfer::kDefaultTargets, xfer::TranslatorKind::Oracle);
  std::size_t checked = 0, mismatched = 0;
  for (const auto& s : a.samples)
    for (const auto& t : tt) {
      const Image img = xfer::translate(t, s, table());
      sim::SceneState moved = *s.scene;
      moved.weather = t.target;
      if (!(sim::expert_steering(moved) == *s.label) || !bitwise_equal(img, sim::render(moved, table()))) ++mismatched;
      ++checked;
    }
  verdict(3, checked == 10000 && mismatched == 0,
          std::to_string(checked) + " translated samples, " + std::to_string(mismatched) + " label changes");
}

void criterion_4() {
  const auto ds = sim::collect_dataset(sim::TrackId::B, 0, 800, 400, 5, table());
  distill::TrainConfig tc;
  tc.epochs = 3;
  tc.seed = 11;
  const auto teacher = distill::train_teacher(ds, tc);
  distill::DistillConfig dc;
  dc.train = tc;
  dc.lambda_soft = 0.0;
  dc.mix = {0};
  const auto student = distill::distill_student(teacher.model, ds, {}, dc, table());
  bool logs = teacher.log.epochs.size() == student.log.epochs.size();
  for (std::size_t e = 0; logs && e < teacher.log.epochs.size(); ++e)
    logs = teacher.log.epochs[e].loss == student.log.epochs[e].loss &&
           teacher.log.epochs[e].alphas == student.log.epochs[e].alphas;
  const bool same = student.model == teacher.model;
  verdict(4, same && logs,
          std::string("lambda 0, mix {0}: parameters ") + (same ? "bitwise equal" : "differ") + ", epoch losses " +
              (logs ? "bitwise equal" : "differ"));
}

void criterion_5() {
  const auto t0 = Clock::now();
  std::size_t episodes = 0, frames = 0;
  double worst = 100.0;
  for (auto id : {sim::TrackId::A, sim::TrackId::B}) {
    const auto& tr = sim::track(id);
    for (int w = 0; w < sim::kWeatherCount; ++w) {
      eval::OnlineSpec spec;
      spec.track = id;
      spec.weathers = {w};
      for (const auto& r : eval::eval_online(sim::expert_policy(), spec, table())) {
        for (double p : r.per_turn) worst = std::min(worst, p);
        episodes += r.per_turn.size();
        frames += r.frames;
      }
    }
    if (tr.turns().size() != 8) worst = -1.0;
  }
  const double secs = seconds_since(t0);
  verdict(5, worst == 100.0 && episodes == 240 && frames == 240 * 120 && secs < 300.0,
          std::to_string(episodes) + " episodes, " + std::to_string(frames) + " frames, worst in-lane " +
              fmt("%.2f%%", worst) + ", " + fmt("%.1f s", secs));
}

bool pruning_bound(std::string& detail) {
  std::mt19937_64 rng(29);
  std::normal_distribution<float> z(0.0f, 2.0f);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  std::uniform_int_distribution<int> pick(0, 3);
  std::size_t n = 0, violations = 0;
  double tightest = 0.0;
  for (std::uint64_t base = 0; base < 20; ++base) {
    model::Model m = model::Model::create(5000 + base);
    for (auto& v : m.control().parameters()[4].value->data()) v *= 8.0f;
    for (int t = 0; t < 50; ++t) {
      for (auto& l : m.logits().data()) l = z(rng);
      const auto a = m.alphas();
      const auto r = model::prune_by_alpha(m, a[static_cast<std::size_t>(pick(rng))]);
      Image img;
      for (auto& p : img.pixels) p = u(rng);
      const auto full = model::predict(m, img);
      std::set<std::size_t> keep(r.retained.begin(), r.retained.end());
      double kept = 0.0, removed = 0.0;
      for (std::size_t h = 0; h < a.size(); ++h) {
        if (keep.count(h))
          kept += static_cast<double>(a[h]) * full.per_head[h];
        else
          removed += a[h];
      }
      const double delta = std::fabs(full.combined - kept);
      if (delta > removed + 1e-6) ++violations;
      if (removed > 0.0) tightest = std::max(tightest, delta / removed);
      ++n;
    }
  }
  detail = "bound held on " + std::to_string(n - violations) + "/" + std::to_string(n) + " random models (max |d|/bound " +
           fmt("%.3f", tightest) + ")";
  return n == 1000 && violations == 0;
}

std::size_t line_count(const fs::path& p) {
  std::ifstream is(p);
  std::size_t n = 0;
  std::string line;
  while (std::getline(is, line)) ++n;
  return n;
}

void roster_criteria(const fs::path& config, const fs::path& out, bool reuse) {
  const auto cfg = eval::ExperimentConfig::load(config);
  const auto t0 = Clock::now();
  nlohmann::json summary;
  if (reuse && fs::exists(out / "report.json")) {
    std::ifstream is(out / "report.json");
    summary = nlohmann::json::parse(is).at("summary");
    std::printf("reusing roster outputs in %s\n", out.c_str());
  } else {
    summary = eval::run_roster(cfg, out).summary;
  }
  const double secs = seconds_since(t0);
  const auto& models = summary.at("models");
  auto overall = [&](const char* m) { return models.at(m).at("online_overall").get<double>(); };
  auto w3_14 = [&](const char* m) { return models.at(m).at("online_w3_14").get<double>(); };

  // 6: ordering and margin
  const double oracle = overall("Oracle"), ours = overall("Ours"), teacher = overall("Teacher");
  const double margin = w3_14("Ours") - w3_14("Teacher");
  const bool c6 = oracle >= ours && ours >= teacher && margin >= 10.0;
  verdict(6, c6,
          "overall in-lane Oracle " + fmt("%.2f", oracle) + " / Ours " + fmt("%.2f", ours) + " / Teacher " +
              fmt("%.2f", teacher) + "; Ours - Teacher on weathers 3-14 " + fmt("%+.2f pp", margin) +
              (reuse ? "" : "; roster " + fmt("%.0f s", secs)));

  // 7: pruning closeness (to the dominant head) and the analytic bound
  const auto alphas = summary.at("alphas_student").get<std::vector<double>>();
  const auto dom = static_cast<std::size_t>(std::max_element(alphas.begin(), alphas.end()) - alphas.begin());
  const double max_alpha = alphas[dom];
  const double pruned = overall("Ours-pruned");
  const double gap = std::fabs(pruned - ours);
  std::string bound_detail;
  const bool bound = pruning_bound(bound_detail);
  const bool c7 = gap <= 5.0 && bound;
  verdict(7, c7,
          "pruned to head " + std::to_string(dom + 1) + " (alpha " + fmt("%.3f", max_alpha) + (max_alpha > 0.9 ? "" : ", below 0.9") +
              ") " + fmt("%.2f", pruned) + " vs full " + fmt("%.2f", ours) + " (|d| " + fmt("%.2f pp", gap) + "); " +
              bound_detail);

  // 8: student offline MAE on weather 0 against the teacher
  const double mae_s = models.at("Ours").at("offline_mae_w0").get<double>();
  const double mae_t = models.at("Teacher").at("offline_mae_w0").get<double>();
  const double ratio = mae_s / mae_t;
  verdict(8, ratio <= 1.1,
          "weather-0 MAE student " + fmt("%.5f", mae_s) + " / teacher " + fmt("%.5f", mae_t) + " = ratio " +
              fmt("%.3f", ratio) + " (limit 1.1)");

  // 9: table completeness
  const std::size_t turns = cfg.online.turns.size();
  const bool c9 = cfg.online.weathers.size() == 15 && line_count(out / "offline.csv") == 1 + 60 &&
                  line_count(out / "divergence.csv") == 1 + 60 && line_count(out / "online.csv") == 1 + 60 * turns &&
                  line_count(out / "table1.csv") == 1 + 4;
  verdict(9, c9,
          "offline " + std::to_string(line_count(out / "offline.csv") - 1) + ", divergence " +
              std::to_string(line_count(out / "divergence.csv") - 1) + ", online " +
              std::to_string(line_count(out / "online.csv") - 1) + " (" + std::to_string(turns) + " turns), table1 " +
              std::to_string(line_count(out / "table1.csv") - 1) + " rows");

  // supporting check, not a numbered criterion: teacher fit on its own track
  {
    const auto teacher_model = model::load_model(out / "models" / "Teacher.wkdt");
    const std::vector<int> w0{0};
    const auto sets = eval::make_eval_sets(cfg.train_track, w0, cfg.eval_per_weather, sim::mix64(cfg.seed + 9),
                                           cfg.weather_table());
    const double mae = eval::eval_offline(eval::model_predictor(teacher_model), sets)[0].mae;
    std::printf("check       : %s  teacher weather-0 MAE on the training track %.5f (limit 0.05)\n",
                mae < 0.05 ? "PASS" : "FAIL", mae);
    if (!(mae < 0.05)) ++failures;
  }

  // 10: concentration is reported; 6 and 7 must hold for whichever head dominates
  std::size_t traj = 0;
  {
    std::ifstream is(out / "alphas.csv");
    std::string line;
    while (std::getline(is, line))
      if (line.rfind("Ours,", 0) == 0) ++traj;
  }
  const bool c10 = c6 && c7 && traj == static_cast<std::size_t>(cfg.student.train.epochs);
  std::ostringstream a;
  for (std::size_t i = 0; i < alphas.size(); ++i) a << (i ? " " : "") << fmt("%.3f", alphas[i]);
  verdict(10, c10,
          "final alphas [" + a.str() + "], dominant head " + std::to_string(dom + 1) + "; alphas.csv has " +
              std::to_string(traj) + " student epochs");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::string config = std::string(WKD_SOURCE_DIR) + "/config/experiment.json";
  std::string out = "acceptance_run";
  bool reuse = false;
  app.add_option("--config", config, "Experiment config for criteria 6-10");
  app.add_option("--out", out, "Roster output directory");
  app.add_flag("--reuse", reuse, "Score an existing roster output instead of re-running it");
  CLI11_PARSE(app, argc, argv);

  try {
    criterion_1();
    criterion_2();
    criterion_3();
    criterion_4();
    criterion_5();
    roster_criteria(config, out, reuse);
  } catch (const std::exception& e) {
    std::printf("acceptance aborted: %s\n", e.what());
    return 1;
  }
  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
