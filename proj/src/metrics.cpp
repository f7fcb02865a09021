#include "godhs/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <set>
#include <tuple>

#include "godhs/errors.hpp"
#include "godhs/math3.hpp"

namespace godhs {

namespace {

using nlohmann::ordered_json;

const std::string& event_name(const ordered_json& ev) {
  return ev.at("event").get_ref<const std::string&>();
}

const char* sorting_label(bool sort_ee, bool sort_ch) {
  if (sort_ee && sort_ch) return "both";
  if (sort_ee) return "ee";
  if (sort_ch) return "ch";
  return "none";
}

}  // namespace

int placement_count(const Scene& s, const Carrier& c) {
  int n = 0;
  for (Feature f : exposed_features(s, c))
    if (!carrier_feature_points(s, c, f).points.empty()) ++n;
  return n;
}

SearchRates compute_rates(const SearchTrace& trace, const Scene& scene) {
  SearchRates r;
  r.rooms_den = static_cast<int>(scene.rooms.size());
  r.carriers_den = static_cast<int>(scene.carriers.size());
  for (const Carrier& c : scene.carriers)
    r.placements_den += placement_count(scene, c);
  if (r.rooms_den == 0 || r.carriers_den == 0 || r.placements_den == 0)
    throw ArgumentError("rates: scene has an empty denominator");

  if (!trace.found) {
    r.not_found = true;
    r.rooms_num = r.rooms_den;
    r.carriers_num = r.carriers_den;
    r.placements_num = r.placements_den;
    r.r_r = r.r_c = r.r_i = 100.0;
    return r;
  }

  std::set<std::string> rooms, carriers;
  std::set<std::pair<std::string, std::string>> placements;
  for (const ordered_json& ev : trace.events) {
    const std::string& e = event_name(ev);
    if (e == "room-entered") {
      if (ev.at("phase").get_ref<const std::string&>() == "search")
        rooms.insert(ev.at("room").get<std::string>());
    } else if (e == "carrier-inspected") {
      carriers.insert(ev.at("carrier").get<std::string>());
    } else if (e == "detection-check") {
      placements.emplace(ev.at("carrier").get<std::string>(),
                         ev.at("feature").get<std::string>());
    }
  }
  r.rooms_num = static_cast<int>(rooms.size());
  r.carriers_num = static_cast<int>(carriers.size());
  r.placements_num = static_cast<int>(placements.size());
  r.r_r = 100.0 * r.rooms_num / r.rooms_den;
  r.r_c = 100.0 * r.carriers_num / r.carriers_den;
  r.r_i = 100.0 * r.placements_num / r.placements_den;
  return r;
}

double compute_osr(const SearchRates& rates, const RateWeights& w) {
  if (w.w1 < 0.0 || w.w2 < 0.0 || w.w3 < 0.0)
    throw ArgumentError("rate weights must be non-negative");
  if (std::abs(w.w1 + w.w2 + w.w3 - 1.0) > 1e-9)
    throw ArgumentError("rate weights must sum to 1");
  return w.w1 * rates.r_r + w.w2 * rates.r_c + w.w3 * rates.r_i;
}

double optimal_tour_length(const std::vector<Vec3>& waypoints,
                           const Vec3& start) {
  if (waypoints.size() > 10)
    throw ArgumentError(
        "optimal tour capped at 10 waypoints; reduce max_poses_per_feature");
  if (waypoints.empty()) return 0.0;
  std::vector<int> idx(waypoints.size());
  std::iota(idx.begin(), idx.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double len = distance(start, waypoints[idx[0]]);
    for (size_t i = 1; i < idx.size() && len < best; ++i)
      len += distance(waypoints[idx[i - 1]], waypoints[idx[i]]);
    best = std::min(best, len);
  } while (std::next_permutation(idx.begin(), idx.end()));
  return best;
}

PathStats path_stats(const SearchTrace& trace,
                     const SearchTrace* unsorted_pair) {
  PathStats ps;
  ps.time_s = trace.time_s;

  // Camera-pose run: the ee moves executed from one base placement.
  std::vector<Vec3> run;
  double run_exec = 0.0;
  double ee_exec = 0.0, ee_opt = 0.0;
  auto flush_run = [&] {
    if (run.size() >= 2) {
      ee_exec += run_exec;
      ee_opt += optimal_tour_length({run.begin() + 1, run.end()}, run[0]);
    }
    run.clear();
    run_exec = 0.0;
  };

  // Base run: consecutive placements at the same carrier for one feature.
  // The first move of a run is the approach from elsewhere and is not part
  // of the circling distance.
  bool ch_active = false;
  std::string ch_carrier;
  std::vector<Vec3> ch_run;
  double ch_run_exec = 0.0;
  double ch_exec = 0.0, ch_opt = 0.0;
  auto flush_ch = [&] {
    if (ch_active && ch_run.size() >= 2) {
      ch_exec += ch_run_exec;
      ch_opt +=
          optimal_tour_length({ch_run.begin() + 1, ch_run.end()}, ch_run[0]);
    }
    ch_run.clear();
    ch_run_exec = 0.0;
    ch_active = false;
  };

  for (const ordered_json& ev : trace.events) {
    const std::string& e = event_name(ev);
    if (e == "ee-move") {
      const ordered_json& p = ev.at("pose");
      run.push_back({p[0].get<double>(), p[1].get<double>(),
                     p[2].get<double>()});
      run_exec += ev.at("length").get<double>();
    } else if (e == "chassis-move") {
      flush_run();
      const ordered_json& p = ev.at("pose");
      if (ev.at("carrier").is_null()) {
        flush_ch();
      } else {
        const std::string c = ev.at("carrier").get<std::string>();
        if (ch_active && c == ch_carrier) {
          ch_run.push_back({p[0].get<double>(), p[1].get<double>(), 0.0});
          ch_run_exec += ev.at("length").get<double>();
        } else {
          flush_ch();
          ch_active = true;
          ch_carrier = c;
          ch_run.push_back({p[0].get<double>(), p[1].get<double>(), 0.0});
        }
      }
    } else if (e == "feature-inspected" || e == "feature-skipped" ||
               e == "carrier-inspected" || e == "room-entered" ||
               e == "target-found" || e == "target-not-found") {
      flush_run();
      flush_ch();
    }
    // detection-check, open-action, ranking and room-type-inferred events
    // interleave inside a run and do not break it.
  }
  flush_run();
  flush_ch();

  ps.ee_executed = ee_exec;
  ps.ee_optimal = ee_opt;
  ps.ch_executed = ch_exec;
  ps.ch_optimal = ch_opt;
  if (ee_opt > 0.0) {
    ps.ee_defined = true;
    ps.ee_ratio = ee_exec / ee_opt;
  }
  if (ch_opt > 0.0) {
    ps.ch_defined = true;
    ps.ch_ratio = ch_exec / ch_opt;
  }
  if (unsorted_pair && unsorted_pair->time_s > 0.0) {
    ps.has_time_ratio = true;
    ps.time_ratio = trace.time_s / unsorted_pair->time_s;
  }
  return ps;
}

namespace {

std::string categorize(const SearchTrace& trace, const Scene& scene,
                       const std::string& target) {
  if (trace.found) return "";
  const Item* item = scene.find_item(target);
  if (!item) return "";  // absent target, failure is expected
  const std::string& cid = item->placement.carrier;
  const std::string feat = to_string(item->placement.feature);
  bool skipped_true = false, any_invalid = false, checked_true = false;
  for (const ordered_json& ev : trace.events) {
    const std::string& e = event_name(ev);
    if (e == "feature-skipped") {
      if (ev.at("carrier") == cid && ev.at("feature") == feat)
        skipped_true = true;
    } else if (e == "ranking") {
      if (ev.at("valid") == false) any_invalid = true;
    } else if (e == "detection-check") {
      if (ev.at("carrier") == cid && ev.at("feature") == feat)
        checked_true = true;
    }
  }
  // Most concrete explanation wins: the true placement was planned and
  // dropped, some ranking reply was malformed, or the descent never
  // reached the placement at all.
  if (skipped_true) return "hardware-reach";
  if (any_invalid) return "semantic-ambiguity";
  if (!checked_true) return "common-sense";
  return "";
}

ordered_json config_snapshot(const SuiteConfig& s) {
  ordered_json j;
  ordered_json scenes = ordered_json::array();
  for (const SuiteScene& sc : s.scenes) {
    int placements = 0;
    for (const Carrier& c : sc.scene.carriers)
      placements += placement_count(sc.scene, c);
    scenes.push_back({{"id", sc.id},
                      {"target", sc.target},
                      {"rooms", sc.scene.rooms.size()},
                      {"carriers", sc.scene.carriers.size()},
                      {"placements", placements}});
  }
  j["scenes"] = scenes;
  j["seeds"] = s.seeds;
  ordered_json strategies = ordered_json::array();
  for (Strategy st : s.strategies) strategies.push_back(to_string(st));
  j["strategies"] = strategies;
  ordered_json sortings = ordered_json::array();
  for (const auto& [ee, ch] : s.sortings)
    sortings.push_back(sorting_label(ee, ch));
  j["sortings"] = sortings;
  j["noise"] = s.detection_noise;
  j["weights"] = {s.weights.w1, s.weights.w2, s.weights.w3};
  j["time"] = {{"base_speed", s.time.base_speed},
               {"ee_speed", s.time.ee_speed},
               {"inspect_time", s.time.inspect_time},
               {"open_time", s.time.open_time}};
  j["planner"] = {{"standoff", s.planner.standoff},
                  {"coverage_target", s.planner.coverage_target},
                  {"max_poses_per_feature", s.planner.max_poses_per_feature}};
  j["ranker"] = s.ranker;
  j["definitions"] = {
      {"rooms_rate",
       "distinct rooms entered during the search phase over total rooms"},
      {"carriers_rate",
       "distinct carriers whose inspection began over total carriers"},
      {"placements_rate",
       "distinct feature clusters checked over total clusters; a cluster is "
       "a non-empty top, sides or bottom map, plus inside on openable "
       "carriers"},
      {"time_ratio",
       "trial time over the paired trial with sorting disabled"}};
  return j;
}

}  // namespace

std::vector<BenchAggregate> aggregate_rows(const std::vector<BenchRow>& rows) {
  struct Acc {
    double osr = 0, rr = 0, rc = 0, ri = 0, ee = 0, ch = 0, tr = 0;
    std::vector<double> osrs;
  };
  std::vector<BenchAggregate> out;
  std::vector<Acc> accs;
  auto slot = [&](const std::string& st, const std::string& so) -> size_t {
    for (size_t i = 0; i < out.size(); ++i)
      if (out[i].strategy == st && out[i].sorting == so) return i;
    out.emplace_back();
    out.back().strategy = st;
    out.back().sorting = so;
    accs.emplace_back();
    return out.size() - 1;
  };
  for (const BenchRow& r : rows) {
    const size_t i = slot(r.strategy, r.sorting);
    BenchAggregate& a = out[i];
    Acc& acc = accs[i];
    if (!r.ok) {
      ++a.failures;
      continue;
    }
    ++a.trials;
    if (r.found) ++a.found;
    acc.osr += r.osr;
    acc.rr += r.rates.r_r;
    acc.rc += r.rates.r_c;
    acc.ri += r.rates.r_i;
    acc.ee += r.stats.ee_ratio;
    acc.ch += r.stats.ch_ratio;
    if (r.stats.has_time_ratio) {
      acc.tr += r.stats.time_ratio;
      ++a.time_ratio_trials;
    }
    acc.osrs.push_back(r.osr);
  }
  for (size_t i = 0; i < out.size(); ++i) {
    BenchAggregate& a = out[i];
    Acc& acc = accs[i];
    if (a.trials > 0) {
      a.mean_osr = acc.osr / a.trials;
      a.mean_r_r = acc.rr / a.trials;
      a.mean_r_c = acc.rc / a.trials;
      a.mean_r_i = acc.ri / a.trials;
      a.mean_ee_ratio = acc.ee / a.trials;
      a.mean_ch_ratio = acc.ch / a.trials;
      std::sort(acc.osrs.begin(), acc.osrs.end());
      const size_t n = acc.osrs.size();
      a.median_osr = (n % 2 == 1)
                         ? acc.osrs[n / 2]
                         : (acc.osrs[n / 2 - 1] + acc.osrs[n / 2]) / 2.0;
    }
    if (a.time_ratio_trials > 0) a.mean_time_ratio = acc.tr / a.time_ratio_trials;
  }
  return out;
}

BenchReport run_benchmark(const SuiteConfig& suite, const KnowledgeBase& kb,
                          const RankerFactory& factory) {
  if (suite.scenes.empty())
    throw ArgumentError("benchmark suite lists no scenes");
  if (suite.seeds.empty() || suite.strategies.empty() ||
      suite.sortings.empty())
    throw ArgumentError("benchmark suite lists no trials");
  compute_osr(SearchRates{}, suite.weights);

  BenchReport rep;
  rep.config = config_snapshot(suite);

  struct TrialResult {
    bool ok = false;
    SearchTrace trace;
    std::string error;
  };
  const size_t n_sc = suite.scenes.size(), n_st = suite.strategies.size(),
               n_so = suite.sortings.size(), n_sd = suite.seeds.size();
  auto at = [&](size_t sc, size_t st, size_t so, size_t sd) {
    return ((sc * n_st + st) * n_so + so) * n_sd + sd;
  };
  std::vector<TrialResult> results(n_sc * n_st * n_so * n_sd);

  size_t baseline_so = n_so;  // index of the sorting-disabled configuration
  for (size_t so = 0; so < n_so; ++so)
    if (!suite.sortings[so].first && !suite.sortings[so].second) {
      baseline_so = so;
      break;
    }

  for (size_t sc = 0; sc < n_sc; ++sc)
    for (size_t st = 0; st < n_st; ++st)
      for (size_t so = 0; so < n_so; ++so)
        for (size_t sd = 0; sd < n_sd; ++sd) {
          TrialResult& tr = results[at(sc, st, so, sd)];
          const SuiteScene& entry = suite.scenes[sc];
          try {
            StrategyConfig cfg;
            cfg.strategy = suite.strategies[st];
            cfg.target = entry.target;
            cfg.ranker = suite.ranker;
            cfg.seed = suite.seeds[sd];
            cfg.detection_noise = suite.detection_noise;
            cfg.sort_ee = suite.sortings[so].first;
            cfg.sort_ch = suite.sortings[so].second;
            cfg.time = suite.time;
            cfg.planner = suite.planner;
            std::unique_ptr<Ranker> rk =
                factory ? factory(entry, cfg.seed)
                        : std::make_unique<MockRanker>(kb);
            tr.trace = run_search(entry.scene, kb, *rk, cfg);
            tr.ok = true;
          } catch (const std::exception& ex) {
            tr.error = ex.what();
          }
        }

  for (size_t sc = 0; sc < n_sc; ++sc)
    for (size_t st = 0; st < n_st; ++st)
      for (size_t so = 0; so < n_so; ++so)
        for (size_t sd = 0; sd < n_sd; ++sd) {
          const TrialResult& tr = results[at(sc, st, so, sd)];
          const SuiteScene& entry = suite.scenes[sc];
          BenchRow row;
          row.scene_id = entry.id;
          row.target = entry.target;
          row.strategy = to_string(suite.strategies[st]);
          row.sorting = sorting_label(suite.sortings[so].first,
                                      suite.sortings[so].second);
          row.seed = suite.seeds[sd];
          if (tr.ok) {
            try {
              row.found = tr.trace.found;
              row.rates = compute_rates(tr.trace, entry.scene);
              row.osr = compute_osr(row.rates, suite.weights);
              const SearchTrace* pair = nullptr;
              if (baseline_so < n_so) {
                const TrialResult& b = results[at(sc, st, baseline_so, sd)];
                if (b.ok) pair = &b.trace;
              }
              row.stats = path_stats(tr.trace, pair);
              row.category = categorize(tr.trace, entry.scene, entry.target);
              row.ok = true;
            } catch (const std::exception& ex) {
              row = BenchRow{};
              row.scene_id = entry.id;
              row.target = entry.target;
              row.strategy = to_string(suite.strategies[st]);
              row.sorting = sorting_label(suite.sortings[so].first,
                                          suite.sortings[so].second);
              row.seed = suite.seeds[sd];
              row.error = ex.what();
            }
          } else {
            row.error = tr.error;
          }
          rep.rows.push_back(std::move(row));
        }

  rep.aggregates = aggregate_rows(rep.rows);
  return rep;
}

namespace {

ordered_json rates_json(const SearchRates& r) {
  return {{"r_r", r.r_r},
          {"r_c", r.r_c},
          {"r_i", r.r_i},
          {"rooms", {r.rooms_num, r.rooms_den}},
          {"carriers", {r.carriers_num, r.carriers_den}},
          {"placements", {r.placements_num, r.placements_den}},
          {"not_found", r.not_found}};
}

ordered_json path_json(const PathStats& p) {
  ordered_json j{{"ee_ratio", p.ee_ratio},
                 {"ch_ratio", p.ch_ratio},
                 {"time_ratio", nullptr},
                 {"ee_defined", p.ee_defined},
                 {"ch_defined", p.ch_defined},
                 {"ee_executed", p.ee_executed},
                 {"ee_optimal", p.ee_optimal},
                 {"ch_executed", p.ch_executed},
                 {"ch_optimal", p.ch_optimal},
                 {"time_s", p.time_s}};
  if (p.has_time_ratio) j["time_ratio"] = p.time_ratio;
  return j;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

nlohmann::ordered_json BenchReport::to_json() const {
  ordered_json j;
  j["record"] = "bench-report";
  j["version"] = 1;
  j["config"] = config;
  ordered_json rws = ordered_json::array();
  for (const BenchRow& r : rows) {
    ordered_json row{{"scene", r.scene_id},   {"target", r.target},
                     {"strategy", r.strategy}, {"sorting", r.sorting},
                     {"seed", r.seed},        {"ok", r.ok},
                     {"found", r.found},      {"category", r.category},
                     {"error", r.error}};
    if (r.ok) {
      row["rates"] = rates_json(r.rates);
      row["osr"] = r.osr;
      row["path"] = path_json(r.stats);
    } else {
      row["rates"] = nullptr;
      row["osr"] = nullptr;
      row["path"] = nullptr;
    }
    rws.push_back(std::move(row));
  }
  j["rows"] = rws;
  ordered_json aggs = ordered_json::array();
  for (const BenchAggregate& a : aggregates) {
    ordered_json ja{{"strategy", a.strategy},
                    {"sorting", a.sorting},
                    {"trials", a.trials},
                    {"failures", a.failures},
                    {"found", a.found},
                    {"mean_osr", a.mean_osr},
                    {"median_osr", a.median_osr},
                    {"mean_r_r", a.mean_r_r},
                    {"mean_r_c", a.mean_r_c},
                    {"mean_r_i", a.mean_r_i},
                    {"mean_ee_ratio", a.mean_ee_ratio},
                    {"mean_ch_ratio", a.mean_ch_ratio},
                    {"mean_time_ratio", nullptr},
                    {"time_ratio_trials", a.time_ratio_trials}};
    if (a.time_ratio_trials > 0) ja["mean_time_ratio"] = a.mean_time_ratio;
    aggs.push_back(std::move(ja));
  }
  j["aggregates"] = aggs;
  return j;
}

std::string BenchReport::csv() const {
  std::string out =
      "scene,target,strategy,sorting,seed,ok,found,category,error,"
      "r_r,r_c,r_i,osr,rooms_num,rooms_den,carriers_num,carriers_den,"
      "placements_num,placements_den,ee_ratio,ch_ratio,time_ratio,time_s\n";
  for (const BenchRow& r : rows) {
    out += csv_field(r.scene_id) + ',' + csv_field(r.target) + ',' +
           r.strategy + ',' + r.sorting + ',' + std::to_string(r.seed) + ',' +
           (r.ok ? '1' : '0') + ',' + (r.found ? '1' : '0') + ',' +
           csv_field(r.category) + ',' + csv_field(r.error) + ',';
    if (r.ok) {
      out += num(r.rates.r_r) + ',' + num(r.rates.r_c) + ',' +
             num(r.rates.r_i) + ',' + num(r.osr) + ',' +
             std::to_string(r.rates.rooms_num) + ',' +
             std::to_string(r.rates.rooms_den) + ',' +
             std::to_string(r.rates.carriers_num) + ',' +
             std::to_string(r.rates.carriers_den) + ',' +
             std::to_string(r.rates.placements_num) + ',' +
             std::to_string(r.rates.placements_den) + ',' +
             num(r.stats.ee_ratio) + ',' + num(r.stats.ch_ratio) + ',' +
             (r.stats.has_time_ratio ? num(r.stats.time_ratio)
                                     : std::string()) +
             ',' + num(r.stats.time_s);
    } else {
      out += ",,,,,,,,,,,,,";
    }
    out += '\n';
  }
  return out;
}

}  // namespace godhs
