#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "godhs/scene.hpp"
#include "godhs/search.hpp"
#include "godhs/semantics.hpp"

namespace godhs {

/// Fraction of each hierarchy level consumed before termination. Rates are
/// percentages in [0, 100]; the counts behind them are kept so reports can
/// re-derive every number.
struct SearchRates {
  double r_r = 0.0;
  double r_c = 0.0;
  double r_i = 0.0;
  int rooms_num = 0, rooms_den = 0;
  int carriers_num = 0, carriers_den = 0;
  int placements_num = 0, placements_den = 0;
  bool not_found = false;  // full-denominator semantics applied
};

/// Per-level weights for the overall search rate; must be non-negative and
/// sum to 1 within 1e-9.
struct RateWeights {
  double w1 = 0.2;
  double w2 = 0.3;
  double w3 = 0.5;
};

/// Number of candidate placement clusters a carrier exposes: the carrier's
/// exposed features whose maps are non-empty. This is exactly the set an
/// exhaustive search can attempt.
int placement_count(const Scene& s, const Carrier& c);

/// Rooms entered during the search phase (the found room included),
/// carriers whose inspection began, and distinct feature clusters checked,
/// each over its scene-wide total. A not-found trace reports 100 on every
/// axis with numerators forced to the denominators, and is flagged.
/// Throws ArgumentError when the scene has no rooms, carriers or
/// placements (denominators must stay positive).
SearchRates compute_rates(const SearchTrace& trace, const Scene& scene);

/// Weighted average w1*R_r + w2*R_c + w3*R_i. Throws ArgumentError on
/// negative weights or a sum off 1 by more than 1e-9.
double compute_osr(const SearchRates& rates, const RateWeights& w = {});

/// Exact minimum open-tour length from start through every waypoint by
/// full enumeration. Throws ArgumentError above 10 waypoints; shrink the
/// per-feature pose budget instead of raising the cap.
double optimal_tour_length(const std::vector<Vec3>& waypoints,
                           const Vec3& start);

struct PathStats {
  double ee_ratio = 1.0;
  double ch_ratio = 1.0;
  double time_ratio = 1.0;
  bool ee_defined = false;  // false when no pose run had positive optimum
  bool ch_defined = false;
  bool has_time_ratio = false;  // true only with a paired baseline trace
  double ee_executed = 0.0, ee_optimal = 0.0;
  double ch_executed = 0.0, ch_optimal = 0.0;
  double time_s = 0.0;
};

/// Executed-over-optimal travel ratios recomputed from trace events.
/// The arm ratio compares each chassis visit's camera-pose run against the
/// optimal tour from its first executed pose; the base ratio does the same
/// per carrier over consecutive base placements. Undefined ratios stay at
/// 1.0 with their defined flag false. The paired trace, when given, must
/// be the same trial rerun with sorting disabled; otherwise time_ratio is
/// omitted and flagged.
PathStats path_stats(const SearchTrace& trace,
                     const SearchTrace* unsorted_pair = nullptr);

struct SuiteScene {
  std::string id;
  Scene scene;
  std::string target;
};

struct SuiteConfig {
  std::vector<SuiteScene> scenes;
  std::vector<uint64_t> seeds = {1};
  std::vector<Strategy> strategies = {Strategy::kGodhs};
  // Sorting configurations as (sort_ee, sort_ch); a (false, false) entry
  // doubles as the pairing baseline for time_ratio.
  std::vector<std::pair<bool, bool>> sortings = {{true, true}};
  double detection_noise = 0.0;
  RateWeights weights;
  TimeModel time;
  PlannerConfig planner;
  std::string ranker = "mock";
};

struct BenchRow {
  std::string scene_id;
  std::string target;
  std::string strategy;
  std::string sorting;  // none | ee | ch | both
  uint64_t seed = 0;
  bool ok = false;
  bool found = false;
  SearchRates rates;
  double osr = 0.0;
  PathStats stats;
  std::string category;  // hardware-reach | common-sense | semantic-ambiguity
  std::string error;
};

struct BenchAggregate {
  std::string strategy;
  std::string sorting;
  int trials = 0;    // rows that ran to completion
  int failures = 0;  // rows that crashed
  int found = 0;
  double mean_osr = 0.0, median_osr = 0.0;
  double mean_r_r = 0.0, mean_r_c = 0.0, mean_r_i = 0.0;
  double mean_ee_ratio = 0.0, mean_ch_ratio = 0.0;
  double mean_time_ratio = 0.0;
  int time_ratio_trials = 0;  // rows carrying a paired time_ratio
};

struct BenchReport {
  nlohmann::ordered_json config;
  std::vector<BenchRow> rows;  // ordered by (scene, strategy, sorting, seed)
  std::vector<BenchAggregate> aggregates;

  nlohmann::ordered_json to_json() const;
  std::string csv() const;  // flat table, one row per trial
};

/// Reduction used by run_benchmark and the report checker: grouped by
/// (strategy, sorting) in row order, means summed in row order so a rerun
/// reproduces aggregates bit-exactly. Crashed rows count only as failures.
std::vector<BenchAggregate> aggregate_rows(const std::vector<BenchRow>& rows);

using RankerFactory =
    std::function<std::unique_ptr<Ranker>(const SuiteScene&, uint64_t seed)>;

/// Runs every scene x strategy x sorting x seed trial single-threaded in
/// row order. A trial that throws becomes a failed row; the report is
/// still produced. With the default mock factory the report serializes
/// byte-identically across reruns.
BenchReport run_benchmark(const SuiteConfig& suite, const KnowledgeBase& kb,
                          const RankerFactory& factory = {});

}  // namespace godhs
