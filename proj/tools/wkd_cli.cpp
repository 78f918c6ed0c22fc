// Command-line front end: data generation, training, distillation,
// evaluation, pruning, heatmaps and the full roster.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "wkd/distill.hpp"
#include "wkd/errors.hpp"
#include "wkd/eval.hpp"
#include "wkd/kernels/kernels.hpp"
#include "wkd/sim/render.hpp"

namespace fs = std::filesystem;
using namespace wkd;

namespace {

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
  bool verbose = false;
};

eval::ExperimentConfig load_config(const Globals& g) {
  nlohmann::json j = nlohmann::json::object();
  fs::path base;
  if (!g.config.empty()) {
    std::ifstream is(g.config);
    if (!is) throw ConfigError("cannot open config " + g.config);
    try {
      j = nlohmann::json::parse(is);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("bad config " + g.config + ": " + e.what());
    }
    base = fs::path(g.config).parent_path();
  }
  if (g.seed) j["seed"] = *g.seed;
  if (g.verbose) j["verbose"] = true;
  return eval::ExperimentConfig::from_json(j, base);
}

std::vector<int> all_weathers() {
  std::vector<int> w(sim::kWeatherCount);
  for (int i = 0; i < sim::kWeatherCount; ++i) w[static_cast<std::size_t>(i)] = i;
  return w;
}

void print_offline(const std::vector<eval::WeatherMae>& r) {
  for (const auto& w : r) std::printf("weather %2d  mae %.5f  (n=%zu)\n", w.weather, w.mae, w.samples);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Weather-robust steering: simulation, distillation and evaluation workbench"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "Experiment config (JSON)");
  app.add_option("--seed", g.seed, "Experiment seed (overrides the config)");
  app.add_option("--out", g.out, "Output directory");
  app.add_flag("-v,--verbose", g.verbose, "Progress on stderr");
  std::string kernels;
  app.add_option("--kernels", kernels, "GEMM backend: scalar or avx2 (default: best available)");

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Collect the training (and oracle) datasets to <out>/train, <out>/oracle");
  bool gen_oracle = false;
  gen->add_flag("--oracle", gen_oracle, "Also collect the fully labeled all-weather oracle set");

  // train-teacher
  auto* teach = app.add_subcommand("train-teacher", "Train the teacher on labeled weather-0 data");
  std::string data_dir;
  teach->add_option("--data", data_dir, "Dataset directory (default: collect from the config)");

  // distill
  auto* dist = app.add_subcommand("distill", "Distill a student from a trained teacher");
  std::string teacher_path;
  dist->add_option("--teacher", teacher_path, "Teacher model file")->required();
  dist->add_option("--data", data_dir, "Dataset directory (default: collect from the config)");

  // eval-offline / eval-online
  auto* off = app.add_subcommand("eval-offline", "Mean absolute steering error per weather on the eval track");
  std::string model_path;
  off->add_option("--model", model_path, "Model file")->required();
  auto* on = app.add_subcommand("eval-online", "Closed-loop in-lane percentage per weather and turn");
  on->add_option("--model", model_path, "Model file (omit with --expert)");
  bool use_expert = false;
  on->add_flag("--expert", use_expert, "Drive with the state-based expert");

  // prune
  auto* pr = app.add_subcommand("prune", "Remove auxiliary heads whose weight is below a threshold");
  pr->add_option("--model", model_path, "Model file")->required();
  std::optional<double> threshold;
  pr->add_option("--threshold", threshold, "Alpha threshold (default: keep only the dominant head)");

  // heatmap
  auto* hm = app.add_subcommand("heatmap", "First-unit activation heatmaps on the reference frame");
  hm->add_option("--model", model_path, "Model file")->required();
  std::vector<int> hm_weathers{0, 9};
  hm->add_option("--weathers", hm_weathers, "Weathers to render");

  // roster
  auto* roster = app.add_subcommand("roster", "Train and evaluate Oracle, Teacher, Ours and Ours-pruned");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (!kernels.empty()) {
      if (kernels == "scalar") {
        kernels::set_backend(kernels::Backend::Scalar);
      } else if (kernels == "avx2") {
        kernels::set_backend(kernels::Backend::Avx2);
      } else {
        throw ConfigError("unknown kernel backend '" + kernels + "'");
      }
    }
    const auto cfg = load_config(g);
    const sim::WeatherTable weathers = cfg.weather_table();
    const fs::path out(g.out);
    fs::create_directories(out);

    auto dataset = [&]() {
      if (!data_dir.empty()) return sim::load_dataset(data_dir);
      return sim::collect_dataset(cfg.train_track, 0, cfg.n_total, cfg.n_labeled, sim::mix64(cfg.seed + 1), weathers);
    };
    auto eval_sets = [&]() {
      return eval::make_eval_sets(cfg.eval_track, all_weathers(), cfg.eval_per_weather, sim::mix64(cfg.seed + 3),
                                  weathers);
    };

    if (gen->parsed()) {
      const auto ds = dataset();
      sim::save_dataset(ds, out / "train");
      std::printf("wrote %zu samples (%zu labeled) to %s\n", ds.size(), ds.labeled_count(), (out / "train").c_str());
      if (gen_oracle) {
        sim::CollectSpec spec;
        spec.track = cfg.eval_track;
        spec.weathers = all_weathers();
        spec.n_total = cfg.oracle_total;
        spec.n_labeled = cfg.oracle_total;
        spec.seed = sim::mix64(cfg.seed + 2);
        sim::save_dataset(sim::collect_dataset(spec, weathers), out / "oracle");
        std::printf("wrote oracle set to %s\n", (out / "oracle").c_str());
      }
    } else if (teach->parsed()) {
      auto tc = cfg.teacher;
      tc.verbose = g.verbose;
      const auto r = distill::train_teacher(dataset(), tc);
      model::save_model(r.model, out / "teacher.wkdt", {{"role", "teacher"}, {"train", distill::to_json(tc)}});
      r.log.write_csv(out / "teacher_train.csv");
      std::printf("teacher written to %s\n", (out / "teacher.wkdt").c_str());
    } else if (dist->parsed()) {
      const auto teacher = model::load_model(teacher_path);
      auto dc = cfg.student;
      dc.train.verbose = g.verbose;
      const auto translators = xfer::build_translation_table(cfg.translator);
      const auto r = distill::distill_student(teacher, dataset(), translators, dc, weathers);
      model::save_model(r.model, out / "student.wkdt",
                        {{"role", "student"}, {"distill", distill::to_json(dc)}, {"translator", cfg.translator.to_json()}});
      r.log.write_csv(out / "student_train.csv");
      std::printf("student written to %s\n", (out / "student.wkdt").c_str());
    } else if (off->parsed()) {
      const auto m = model::load_model(model_path);
      const auto sets = eval_sets();
      const auto r = eval::eval_offline(eval::model_predictor(m), sets);
      eval::RosterEntry e{fs::path(model_path).stem().string(), m, r, {}, {}};
      eval::write_offline_csv(out / "offline.csv", {e});
      print_offline(r);
    } else if (on->parsed()) {
      if (use_expert == !model_path.empty()) throw ConfigError("eval-online needs exactly one of --model or --expert");
      eval::RosterEntry e;
      sim::Policy policy;
      if (use_expert) {
        e.name = "expert";
        policy = sim::expert_policy();
      } else {
        e.model = model::load_model(model_path);
        e.name = fs::path(model_path).stem().string();
        policy = distill::substitute(e.model);
      }
      e.online = eval::eval_online(policy, cfg.online, weathers);
      eval::write_online_csv(out / "online.csv", {e});
      for (const auto& w : e.online) std::printf("weather %2d  in-lane %.2f%%\n", w.weather, w.mean());
      std::printf("overall %.2f%%\n", e.online_overall());
    } else if (pr->parsed()) {
      const auto m = model::load_model(model_path);
      const auto a = m.alphas();
      const double eps = threshold.value_or(*std::max_element(a.begin(), a.end()));
      const auto r = model::prune_by_alpha(m, eps);
      nlohmann::json prov = model::load_sidecar(model_path).value("provenance", nlohmann::json::object());
      prov["pruned_from"] = model_path;
      prov["prune_threshold"] = eps;
      model::save_model(r.model, out / "pruned.wkdt", prov);
      std::printf("kept heads:");
      for (std::size_t h : r.retained) std::printf(" %zu", h + 1);
      std::printf("\npruned model written to %s\n", (out / "pruned.wkdt").c_str());
    } else if (hm->parsed()) {
      const auto m = model::load_model(model_path);
      const sim::Track& et = sim::track(cfg.eval_track);
      sim::SceneState ref;
      ref.track = cfg.eval_track;
      ref.vehicle.position = et.turns().front().start.position;
      ref.vehicle.heading = sim::normalize_angle(et.turns().front().start.heading);
      ref.rng_stream_id = sim::mix64(cfg.seed + 5);
      for (int w : hm_weathers) {
        ref.weather = w;
        const Image frame = sim::render(ref, weathers);
        write_ppm(out / ("frame_w" + std::to_string(w) + ".ppm"), frame);
        write_ppm(out / ("heatmap_w" + std::to_string(w) + ".ppm"), model::activation_heatmap(m, frame));
      }
      std::printf("heatmaps written to %s\n", out.c_str());
    } else if (roster->parsed()) {
      const auto rep = eval::run_roster(cfg, out);
      std::ifstream t(out / "table1.csv");
      std::cout << t.rdbuf();
      std::cout << rep.summary.dump(2) << '\n';
    }
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const nlohmann::json::exception& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numeric error: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
