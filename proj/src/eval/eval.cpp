#include "wkd/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numeric>

#include "wkd/errors.hpp"
#include "wkd/sim/render.hpp"

namespace wkd::eval {

Predictor model_predictor(const model::Model& m) {
  auto p = std::make_shared<const model::Model>(m);
  return [p](std::span<const Image* const> imgs) { return model::predict_combined(*p, imgs); };
}

std::vector<WeatherMae> eval_offline(const Predictor& predict, std::span<const sim::Dataset> eval_sets) {
  std::vector<WeatherMae> out;
  for (const auto& ds : eval_sets) {
    if (ds.samples.empty()) throw UsageError("empty evaluation set");
    std::vector<const Image*> imgs;
    for (const auto& s : ds.samples) {
      if (!s.label) throw UsageError("evaluation sample without a label");
      imgs.push_back(&s.image);
    }
    const auto pred = predict(imgs);
    if (pred.size() != imgs.size()) throw UsageError("predictor returned the wrong number of outputs");
    double sum = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) sum += std::fabs(static_cast<double>(pred[i]) - *ds.samples[i].label);
    out.push_back({ds.samples.front().weather, sum / static_cast<double>(pred.size()), pred.size()});
  }
  return out;
}

double WeatherOnline::mean() const {
  if (per_turn.empty()) return 0.0;
  return std::accumulate(per_turn.begin(), per_turn.end(), 0.0) / static_cast<double>(per_turn.size());
}

std::uint64_t episode_seed(std::uint64_t base, int weather, std::size_t turn) {
  return sim::mix64(base ^ sim::mix64(static_cast<std::uint64_t>(weather) * 1000003ull + turn));
}

std::vector<WeatherOnline> eval_online(const sim::Policy& policy, const OnlineSpec& spec,
                                       const sim::WeatherTable& weathers) {
  const sim::Track& tr = sim::track(spec.track);
  std::vector<WeatherOnline> out;
  for (int w : spec.weathers) {
    WeatherOnline r;
    r.weather = w;
    for (std::size_t t : spec.turns) {
      if (t >= tr.turns().size()) throw ConfigError("turn index " + std::to_string(t) + " out of range");
      const auto rec = sim::run_episode(tr, tr.turns()[t], weathers, policy, {w, spec.frames, episode_seed(spec.seed, w, t)});
      r.per_turn.push_back(rec.in_lane_pct(spec.lane_width));
      r.frames += rec.frames();
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<sim::Dataset> make_eval_sets(sim::TrackId track, std::span<const int> weathers, std::size_t per_weather,
                                         std::uint64_t seed, const sim::WeatherTable& table) {
  std::vector<sim::Dataset> sets;
  for (int w : weathers) {
    sim::CollectSpec spec;
    spec.track = track;
    spec.weathers = {w};
    spec.n_total = per_weather;
    spec.n_labeled = per_weather;
    spec.seed = seed;
    sets.push_back(sim::collect_dataset(spec, table));
  }
  return sets;
}

// ---------------------------------------------------------------------------

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

void reject_unknown(const nlohmann::json& j, std::initializer_list<const char*> known, const char* what) {
  if (!j.is_object()) throw ConfigError(std::string(what) + " must be an object");
  for (const auto& [k, v] : j.items()) {
    if (std::none_of(known.begin(), known.end(), [&](const char* s) { return k == s; }))
      throw ConfigError("unknown key '" + k + "' in " + what);
  }
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  const std::filesystem::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j, const std::filesystem::path& base_dir) {
  reject_unknown(j,
                 {"seed", "weather_config", "data", "teacher", "oracle", "student", "translator", "prune", "online",
                  "heatmap_weathers", "models", "datasets", "verbose"},
                 "experiment config");
  ExperimentConfig c;
  read_key(j, "seed", c.seed);
  if (j.contains("weather_config")) c.weather_config = resolve(base_dir, j.at("weather_config").get<std::string>());
  if (j.contains("data")) {
    const auto& d = j.at("data");
    reject_unknown(d, {"train_track", "n_total", "n_labeled", "eval_track", "eval_per_weather", "oracle_total"},
                   "data block");
    if (d.contains("train_track")) c.train_track = sim::track_from_name(d.at("train_track").get<std::string>());
    if (d.contains("eval_track")) c.eval_track = sim::track_from_name(d.at("eval_track").get<std::string>());
    read_key(d, "n_total", c.n_total);
    read_key(d, "n_labeled", c.n_labeled);
    read_key(d, "eval_per_weather", c.eval_per_weather);
    read_key(d, "oracle_total", c.oracle_total);
  }
  if (c.n_labeled > c.n_total) throw ConfigError("n_labeled exceeds n_total");
  if (c.eval_per_weather == 0) throw ConfigError("eval_per_weather must be positive");

  // Training seeds default to values derived from the experiment seed.
  c.teacher.seed = sim::mix64(c.seed + 11);
  c.oracle.seed = sim::mix64(c.seed + 12);
  c.student.train.seed = sim::mix64(c.seed + 13);
  if (j.contains("teacher")) c.teacher = distill::train_config_from_json(j.at("teacher"), c.teacher);
  if (j.contains("oracle")) c.oracle = distill::train_config_from_json(j.at("oracle"), c.oracle);
  if (j.contains("student")) c.student = distill::distill_config_from_json(j.at("student"), c.student);
  if (j.contains("translator")) c.translator = xfer::TranslatorConfig::from_json(j.at("translator"));
  xfer::build_translation_table(c.translator);

  if (j.contains("prune")) {
    const auto& p = j.at("prune");
    reject_unknown(p, {"threshold"}, "prune block");
    if (p.contains("threshold") && !(p.at("threshold").is_string() && p.at("threshold") == "dominant"))
      c.prune_threshold = p.at("threshold").get<double>();
  }
  if (j.contains("online")) {
    const auto& o = j.at("online");
    reject_unknown(o, {"track", "weathers", "turns", "frames", "seed"}, "online block");
    c.online.track = c.eval_track;
    if (o.contains("track")) c.online.track = sim::track_from_name(o.at("track").get<std::string>());
    read_key(o, "weathers", c.online.weathers);
    read_key(o, "turns", c.online.turns);
    read_key(o, "frames", c.online.frames);
    read_key(o, "seed", c.online.seed);
  } else {
    c.online.track = c.eval_track;
  }
  if (c.online.frames <= 0) throw ConfigError("online frames must be positive");
  read_key(j, "heatmap_weathers", c.heatmap_weathers);
  if (j.contains("models")) {
    for (const auto& [k, v] : j.at("models").items()) {
      if (k != "Oracle" && k != "Teacher" && k != "Ours") throw ConfigError("unknown roster model '" + k + "'");
      c.models[k] = resolve(base_dir, v.get<std::string>());
    }
  }
  if (j.contains("datasets")) {
    for (const auto& [k, v] : j.at("datasets").items()) {
      if (k != "train" && k != "oracle") throw ConfigError("unknown dataset role '" + k + "'");
      c.datasets[k] = resolve(base_dir, v.get<std::string>());
    }
  }
  read_key(j, "verbose", c.verbose);
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open experiment config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("bad experiment config " + path.string() + ": " + e.what());
  }
  return from_json(j, path.parent_path());
}

nlohmann::json ExperimentConfig::to_json() const {
  nlohmann::json j;
  j["seed"] = seed;
  if (weather_config) j["weather_config"] = weather_config->string();
  j["data"] = {{"train_track", sim::track_name(train_track)}, {"n_total", n_total},
               {"n_labeled", n_labeled},                      {"eval_track", sim::track_name(eval_track)},
               {"eval_per_weather", eval_per_weather},        {"oracle_total", oracle_total}};
  j["teacher"] = distill::to_json(teacher);
  j["oracle"] = distill::to_json(oracle);
  j["student"] = distill::to_json(student);
  j["translator"] = translator.to_json();
  j["prune"] = {{"threshold", prune_threshold ? nlohmann::json(*prune_threshold) : nlohmann::json("dominant")}};
  j["online"] = {{"track", sim::track_name(online.track)},
                 {"weathers", online.weathers},
                 {"turns", online.turns},
                 {"frames", online.frames},
                 {"seed", online.seed}};
  j["heatmap_weathers"] = heatmap_weathers;
  return j;
}

sim::WeatherTable ExperimentConfig::weather_table() const {
  return weather_config ? sim::WeatherTable::load(*weather_config) : sim::WeatherTable::defaults();
}

// ---------------------------------------------------------------------------

double RosterEntry::online_overall() const {
  if (online.empty()) return 0.0;
  double s = 0.0;
  for (const auto& w : online) s += w.mean();
  return s / static_cast<double>(online.size());
}

double RosterEntry::online_mean(int first, int last) const {
  double s = 0.0;
  int n = 0;
  for (const auto& w : online) {
    if (w.weather >= first && w.weather <= last) {
      s += w.mean();
      ++n;
    }
  }
  return n ? s / n : 0.0;
}

double RosterEntry::offline_mean(int first, int last) const {
  double s = 0.0;
  int n = 0;
  for (const auto& w : offline) {
    if (w.weather >= first && w.weather <= last) {
      s += w.mae;
      ++n;
    }
  }
  return n ? s / n : 0.0;
}

const RosterEntry& RosterReport::at(const std::string& name) const {
  for (const auto& e : entries)
    if (e.name == name) return e;
  throw UsageError("no roster entry named " + name);
}

namespace {

std::string num(double v, const char* fmt = "%.6f") {
  char buf[64];
  std::snprintf(buf, sizeof buf, fmt, v);
  return buf;
}

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw ConfigError("cannot write " + path.string());
  return os;
}

}  // namespace

void write_offline_csv(const std::filesystem::path& path, const std::vector<RosterEntry>& entries) {
  auto os = open_out(path);
  os << "weather,model,mae\n";
  for (const auto& e : entries)
    for (const auto& w : e.offline) os << w.weather << ',' << e.name << ',' << num(w.mae) << '\n';
}

void write_online_csv(const std::filesystem::path& path, const std::vector<RosterEntry>& entries) {
  auto os = open_out(path);
  os << "weather,model,turn,in_lane_pct\n";
  for (const auto& e : entries)
    for (const auto& w : e.online)
      for (std::size_t t = 0; t < w.per_turn.size(); ++t)
        os << w.weather << ',' << e.name << ',' << t << ',' << num(w.per_turn[t], "%.4f") << '\n';
}

void write_table1_csv(const std::filesystem::path& path, const std::vector<RosterEntry>& entries) {
  auto os = open_out(path);
  os << "model";
  if (!entries.empty())
    for (const auto& w : entries.front().online) os << ",w" << w.weather;
  os << ",mean_w3_14,overall\n";
  for (const auto& e : entries) {
    os << e.name;
    for (const auto& w : e.online) os << ',' << num(w.mean(), "%.4f");
    os << ',' << num(e.online_mean(3, 14), "%.4f") << ',' << num(e.online_overall(), "%.4f") << '\n';
  }
}

void write_divergence_csv(const std::filesystem::path& path, const std::vector<RosterEntry>& entries) {
  auto os = open_out(path);
  os << "weather,model,mae,in_lane_pct\n";
  for (const auto& e : entries) {
    for (const auto& off : e.offline) {
      const auto it = std::find_if(e.online.begin(), e.online.end(),
                                   [&](const WeatherOnline& w) { return w.weather == off.weather; });
      if (it == e.online.end()) continue;
      os << off.weather << ',' << e.name << ',' << num(off.mae) << ',' << num(it->mean(), "%.4f") << '\n';
    }
  }
}

namespace {

void write_alphas_csv(const std::filesystem::path& path, const std::vector<RosterEntry>& entries) {
  auto os = open_out(path);
  os << "model,epoch,a1,a2,a3,a4\n";
  for (const auto& e : entries) {
    auto row = [&](int epoch, const std::vector<double>& a, const std::vector<std::size_t>& heads) {
      std::vector<double> full(model::kHeads, 0.0);
      for (std::size_t k = 0; k < heads.size() && k < a.size(); ++k) full[heads[k]] = a[k];
      os << e.name << ',' << epoch;
      for (double v : full) os << ',' << num(v, "%.8f");
      os << '\n';
    };
    const auto& heads = e.model.heads();
    if (e.log.epochs.empty()) {
      const auto a = e.model.alphas();
      row(0, std::vector<double>(a.begin(), a.end()), heads);
    }
    for (const auto& ep : e.log.epochs) row(ep.epoch, ep.alphas, heads);
  }
}

// Spearman rank correlation with average ranks for ties.
double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  auto ranks = [](const std::vector<double>& v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < idx.size();) {
      std::size_t j = i;
      while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
      for (std::size_t k = i; k <= j; ++k) r[idx[k]] = 0.5 * static_cast<double>(i + j) + 1.0;
      i = j + 1;
    }
    return r;
  };
  const auto rx = ranks(x), ry = ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n, my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  return sxx > 0 && syy > 0 ? sxy / std::sqrt(sxx * syy) : 0.0;
}

model::Model load_roster_model(const ExperimentConfig& cfg, const std::string& name) {
  const auto& path = cfg.models.at(name);
  if (!std::filesystem::exists(path))
    throw ConfigError("roster entry '" + name + "': model file " + path.string() + " does not exist");
  return model::load_model(path);
}

void log_line(const ExperimentConfig& cfg, const std::string& msg) {
  if (cfg.verbose) std::cerr << msg << std::endl;
}

}  // namespace

RosterReport run_roster(const ExperimentConfig& cfg, const std::filesystem::path& out) {
  const sim::WeatherTable weathers = cfg.weather_table();
  std::filesystem::create_directories(out);
  for (const auto& [name, path] : cfg.models) {
    if (!std::filesystem::exists(path))
      throw ConfigError("roster entry '" + name + "': model file " + path.string() + " does not exist");
  }

  std::vector<int> all_weathers(sim::kWeatherCount);
  std::iota(all_weathers.begin(), all_weathers.end(), 0);

  log_line(cfg, "roster: generating evaluation sets");
  const auto eval_sets =
      make_eval_sets(cfg.eval_track, all_weathers, cfg.eval_per_weather, sim::mix64(cfg.seed + 3), weathers);

  auto train_data = [&]() {
    if (cfg.datasets.count("train")) return sim::load_dataset(cfg.datasets.at("train"));
    log_line(cfg, "roster: collecting training data");
    return sim::collect_dataset(cfg.train_track, 0, cfg.n_total, cfg.n_labeled, sim::mix64(cfg.seed + 1), weathers);
  };
  std::optional<sim::Dataset> train_ds;
  if (!cfg.models.count("Teacher") || !cfg.models.count("Ours")) train_ds = train_data();

  RosterReport report;
  // Oracle: labels for every weather on the evaluation track.
  RosterEntry oracle{"Oracle", model::Model(), {}, {}, {}};
  if (cfg.models.count("Oracle")) {
    oracle.model = load_roster_model(cfg, "Oracle");
  } else {
    sim::Dataset ods;
    if (cfg.datasets.count("oracle")) {
      ods = sim::load_dataset(cfg.datasets.at("oracle"));
    } else {
      sim::CollectSpec spec;
      spec.track = cfg.eval_track;
      spec.weathers = all_weathers;
      spec.n_total = cfg.oracle_total;
      spec.n_labeled = cfg.oracle_total;
      spec.seed = sim::mix64(cfg.seed + 2);
      ods = sim::collect_dataset(spec, weathers);
    }
    log_line(cfg, "roster: training Oracle");
    auto tc = cfg.oracle;
    tc.verbose = cfg.verbose;
    auto r = distill::train_supervised(ods, tc);
    oracle.model = std::move(r.model);
    oracle.log = std::move(r.log);
  }

  RosterEntry teacher{"Teacher", model::Model(), {}, {}, {}};
  if (cfg.models.count("Teacher")) {
    teacher.model = load_roster_model(cfg, "Teacher");
  } else {
    log_line(cfg, "roster: training Teacher");
    auto tc = cfg.teacher;
    tc.verbose = cfg.verbose;
    auto r = distill::train_teacher(*train_ds, tc);
    teacher.model = std::move(r.model);
    teacher.log = std::move(r.log);
  }

  RosterEntry ours{"Ours", model::Model(), {}, {}, {}};
  if (cfg.models.count("Ours")) {
    ours.model = load_roster_model(cfg, "Ours");
  } else {
    log_line(cfg, "roster: distilling student");
    auto dc = cfg.student;
    dc.train.verbose = cfg.verbose;
    const auto translators = xfer::build_translation_table(cfg.translator);
    auto r = distill::distill_student(teacher.model, *train_ds, translators, dc, weathers);
    ours.model = std::move(r.model);
    ours.log = std::move(r.log);
  }
  train_ds.reset();

  const auto alphas = ours.model.alphas();
  const double max_alpha = *std::max_element(alphas.begin(), alphas.end());
  const double eps = cfg.prune_threshold.value_or(max_alpha);
  auto pruned = model::prune_by_alpha(ours.model, eps);
  report.pruned_heads = pruned.retained;
  RosterEntry ours_pruned{"Ours-pruned", std::move(pruned.model), {}, {}, {}};

  report.entries.push_back(std::move(oracle));
  report.entries.push_back(std::move(teacher));
  report.entries.push_back(std::move(ours));
  report.entries.push_back(std::move(ours_pruned));

  nlohmann::json provenance_base = {{"experiment", cfg.to_json()}};
  for (auto& e : report.entries) {
    log_line(cfg, "roster: evaluating " + e.name);
    e.offline = eval_offline(model_predictor(e.model), eval_sets);
    e.online = eval_online(distill::substitute(e.model), cfg.online, weathers);
    nlohmann::json prov = provenance_base;
    prov["roster_entry"] = e.name;
    model::save_model(e.model, out / "models" / (e.name + ".wkdt"), prov);
    if (!e.log.epochs.empty()) e.log.write_csv(out / "logs" / (e.name + "_train.csv"));
  }

  write_offline_csv(out / "offline.csv", report.entries);
  write_online_csv(out / "online.csv", report.entries);
  write_table1_csv(out / "table1.csv", report.entries);
  write_divergence_csv(out / "divergence.csv", report.entries);
  write_alphas_csv(out / "alphas.csv", report.entries);

  // Heatmaps of the first FEM unit on one reference frame under two weathers.
  const sim::Track& et = sim::track(cfg.eval_track);
  sim::SceneState ref;
  ref.track = cfg.eval_track;
  ref.vehicle.position = et.turns().front().start.position;
  ref.vehicle.heading = sim::normalize_angle(et.turns().front().start.heading);
  ref.rng_stream_id = sim::mix64(cfg.seed + 5);
  std::filesystem::create_directories(out / "heatmaps");
  for (int w : cfg.heatmap_weathers) {
    ref.weather = w;
    const Image frame = sim::render(ref, weathers);
    write_ppm(out / "heatmaps" / ("frame_w" + std::to_string(w) + ".ppm"), frame);
    for (const auto& e : report.entries) {
      if (e.name != "Teacher" && e.name != "Ours") continue;
      write_ppm(out / "heatmaps" / (e.name + "_w" + std::to_string(w) + ".ppm"), model::activation_heatmap(e.model, frame));
    }
  }

  // Summary of the directional checks.
  const auto& o = report.at("Oracle");
  const auto& t = report.at("Teacher");
  const auto& s = report.at("Ours");
  const auto& p = report.at("Ours-pruned");
  nlohmann::json sm;
  for (const auto& e : report.entries) {
    sm["models"][e.name] = {{"online_overall", e.online_overall()},
                            {"online_w3_14", e.online_mean(3, 14)},
                            {"offline_mae_mean", e.offline_mean(0, 14)},
                            {"offline_mae_w3_14", e.offline_mean(3, 14)},
                            {"offline_mae_w0", e.offline_mean(0, 0)},
                            {"heads", e.model.heads()}};
    std::vector<double> mae, lane;
    for (std::size_t i = 0; i < e.offline.size() && i < e.online.size(); ++i) {
      mae.push_back(e.offline[i].mae);
      lane.push_back(e.online[i].mean());
    }
    sm["models"][e.name]["spearman_mae_vs_inlane"] = spearman(mae, lane);
  }
  std::vector<std::size_t> dominant_1based;
  for (std::size_t h : report.pruned_heads) dominant_1based.push_back(h + 1);
  sm["alphas_student"] = alphas;
  sm["dominant_alpha"] = max_alpha;
  sm["pruned_heads"] = dominant_1based;
  sm["prune_threshold"] = eps;
  sm["ordering_oracle_ge_ours_ge_teacher"] =
      o.online_overall() >= s.online_overall() && s.online_overall() >= t.online_overall();
  sm["ours_minus_teacher_w3_14"] = s.online_mean(3, 14) - t.online_mean(3, 14);
  sm["pruned_minus_full_overall"] = p.online_overall() - s.online_overall();
  const double t_w0 = t.offline_mean(0, 0);
  sm["student_teacher_mae_ratio_w0"] = t_w0 > 0 ? s.offline_mean(0, 0) / t_w0 : 0.0;
  sm["frames_per_episode"] = cfg.online.frames;
  sm["turns"] = cfg.online.turns;
  report.summary = sm;

  nlohmann::json rep;
  rep["config"] = cfg.to_json();
  rep["summary"] = sm;
  auto os = open_out(out / "report.json");
  os << rep.dump(2) << '\n';
  return report;
}

}  // namespace wkd::eval
