#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <unordered_set>
#include <vector>

#include "json.hpp"

#include "godhs/geometry.hpp"
#include "godhs/pose_planner.hpp"
#include "godhs/rng.hpp"
#include "godhs/scene.hpp"
#include "godhs/semantics.hpp"

namespace godhs {

enum class Strategy { kGodhs, kCoverage, kRandom };

const char* to_string(Strategy s);
Strategy strategy_from_string(const std::string& name);

/// Wall-clock model for trace time accounting. The accumulated trial time
/// is chassis_length/base_speed + ee_length/ee_speed + checks*inspect_time
/// + successful_opens*open_time, recomputable exactly from the trace.
struct TimeModel {
  double base_speed = 0.5;    // chassis, m/s
  double ee_speed = 0.2;      // end effector, m/s
  double inspect_time = 2.0;  // per detection check, s
  double open_time = 3.0;     // per successful open, s
};

struct PlannerConfig {
  CameraModel camera;
  RobotModel robot = default_robot();
  double standoff = 0.4;
  double ee_angular_step = kPi / 4.0;
  double ch_radial_step = 0.15;
  double ch_angular_step = kPi / 8.0;
  double coverage_target = 0.95;
  int point_cap = 256;
  int max_poses_per_feature = 10;  // keeps per-feature tours brute-forceable
  double ik_tol = 1e-3;
  int ik_max_iters = 200;
};

/// One trial's behaviour is a pure function of the scene, this config, and
/// the ranker's responses. `ranker` is the backend name recorded in the
/// trace header; a replayed trial keeps the original name so the bytes
/// match.
struct StrategyConfig {
  Strategy strategy = Strategy::kGodhs;
  std::string target;
  std::string ranker = "mock";
  uint64_t seed = 0;
  double detection_noise = 0.0;  // false-negative probability, [0, 1)
  bool sort_ee = true;
  bool sort_ch = true;
  TimeModel time;
  PlannerConfig planner;
};

/// Throws ArgumentError on out-of-range fields.
void validate_config(const StrategyConfig& cfg);

// Independent PRNG streams derived from the master seed (mt19937_64 under
// Rng::derive). Exploration tie-breaking, the random strategy's picks, and
// detection noise never share state.
inline constexpr uint64_t kStreamExplore = 1;
inline constexpr uint64_t kStreamDecide = 2;
inline constexpr uint64_t kStreamNoise = 3;

/// The robot's accumulated world model. Keys are scene ids, so the
/// room->grid and carrier->cloud correspondences stay injective.
struct SceneMap {
  VoxelGrid global;  // union of every integrated room grid
  std::map<std::string, VoxelGrid> rooms;
  std::map<std::string, std::vector<Vec3>> carrier_clouds;
  std::map<std::string, std::string> room_types;  // inferred, not ground truth
};

/// Ground-truth occupancy of one room: its wall band (door openings carved)
/// plus the clouds of its carriers. The union over all rooms equals the
/// full scene grid.
VoxelGrid room_reveal(const Scene& s, const Room& r);

/// Unions the cells into the global grid and stores the room grid.
/// Re-integrating the same room is a no-op.
void integrate_room(SceneMap& map, const std::string& room_id,
                    const VoxelGrid& cells);

/// Global grid == union of the per-room grids, resolutions consistent.
bool scene_map_consistent(const SceneMap& map);

/// Line-delimited trace: one header record with the full config snapshot,
/// then one record per event in execution order. Serialization is
/// byte-stable: identical runs dump identical text.
struct SearchTrace {
  nlohmann::ordered_json header;
  std::vector<nlohmann::ordered_json> events;
  bool found = false;
  double time_s = 0.0;

  std::string to_jsonl() const;
  static SearchTrace from_jsonl(const std::string& text);
};

/// Structural checks: header record first, non-negative move lengths, at
/// most one terminal event and only in final position, and the terminal
/// time equal (exactly) to the time model applied to the logged events.
/// Empty result = well formed.
std::vector<std::string> trace_violations(const SearchTrace& t);

struct ExploreOutcome {
  SceneMap map;
  std::vector<std::string> room_order;  // visit order, entry room first
  SearchTrace trace;                    // exploration events, no terminal
};

/// Breadth-first mapping pass over the door graph from the scene's first
/// room. Each visited room is revealed at ground truth, its objects are
/// observed, and its type inferred through the ranker. Neighbor expansion
/// order is shuffled by the explore stream, so the walk is a pure function
/// of the seed.
ExploreOutcome explore_scene(const Scene& scene, const KnowledgeBase& kb,
                             Ranker& ranker, const StrategyConfig& cfg);

/// True when the end effector's camera sees the target: the item's world
/// point lies in the view cone, the straight segment from the camera is
/// unobstructed in `los_grid`, and an inside-placed item additionally
/// requires its carrier in `opened`. A positive result is then flipped to
/// a miss with probability `noise` drawn from `noise_rng`.
bool detect_target(const EEPose& ee, const CameraModel& cam,
                   const Scene& scene, const VoxelGrid& los_grid,
                   const std::unordered_set<std::string>& opened,
                   const std::string& target, double noise = 0.0,
                   Rng* noise_rng = nullptr);

/// Ranked descent: explore, rank room types, then walk rooms, carriers,
/// and features in ranked order, planning poses per feature and running a
/// detection check at every end-effector pose. Inside features require a
/// successful open action first. Stops at the first detection.
SearchTrace run_godhs(const Scene& scene, const KnowledgeBase& kb,
                      Ranker& ranker, const StrategyConfig& cfg);

/// Exhaustive baseline: rooms in exploration order, carriers in room
/// order, features in the fixed order top, sides, bottom, inside. Same
/// pose machinery and detection as the ranked strategy, no ranking.
SearchTrace run_coverage(const Scene& scene, const KnowledgeBase& kb,
                         Ranker& ranker, const StrategyConfig& cfg);

/// Uniformly samples the next unvisited room, then the next unvisited
/// carrier within it, from the decide stream. Features keep the fixed
/// baseline order so a choice-free scene reproduces the coverage trace.
SearchTrace run_random(const Scene& scene, const KnowledgeBase& kb,
                       Ranker& ranker, const StrategyConfig& cfg);

/// Dispatches on cfg.strategy.
SearchTrace run_search(const Scene& scene, const KnowledgeBase& kb,
                       Ranker& ranker, const StrategyConfig& cfg);

}  // namespace godhs
