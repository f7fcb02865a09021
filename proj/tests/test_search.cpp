// Ranked hierarchical search: mapping, traces, strategies, determinism.
#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "doctest.h"
#include "godhs/errors.hpp"
#include "godhs/llm.hpp"
#include "godhs/search.hpp"
#include "json.hpp"

using namespace godhs;
using nlohmann::ordered_json;

namespace {

const KnowledgeBase& shipped_kb() {
  static const KnowledgeBase kb = load_kb(GODHS_SOURCE_DIR "/data/kb.json");
  return kb;
}

const Scene& flat_scene() {
  static const Scene s =
      load_scene(GODHS_SOURCE_DIR "/data/scenes/flat.json");
  return s;
}

// 4x4 room, one coffee table, an orange on its top.
const Scene& one_room_scene() {
  static const Scene s = scene_from_json(R"({
    "version": 1, "name": "unit-one-room", "resolution": 0.05,
    "rooms": [{"id": "r1", "type": "living room",
               "footprint": [[0,0],[4,0],[4,4],[0,4]],
               "carriers": ["table"], "objects": ["tv"]}],
    "doors": [],
    "carriers": [{"id": "table", "label": "coffee table", "pose": [2,2,0],
                  "openable": false, "z0": 0.4,
                  "boxes": [[-0.5,-0.3,0.4,0.5,0.3,0.45]]}],
    "items": [{"label": "orange", "carrier": "table", "feature": "top",
               "offset": [0,0,0.47]}]
  })");
  return s;
}

// Living room and kitchen joined by one door; the orange sits on the
// living-room table, a book on top of the kitchen fridge.
const Scene& two_room_scene() {
  static const Scene s = scene_from_json(R"({
    "version": 1, "name": "unit-two-rooms", "resolution": 0.05,
    "rooms": [
      {"id": "a", "type": "living room",
       "footprint": [[0,0],[4,0],[4,4],[0,4]],
       "carriers": ["ta"], "objects": []},
      {"id": "b", "type": "kitchen",
       "footprint": [[4,0],[8,0],[8,4],[4,4]],
       "carriers": ["tb"], "objects": []}
    ],
    "doors": [{"rooms": ["a", "b"], "position": [4, 2]}],
    "carriers": [
      {"id": "ta", "label": "coffee table", "pose": [2,2,0],
       "openable": false, "z0": 0.4,
       "boxes": [[-0.5,-0.3,0.4,0.5,0.3,0.45]]},
      {"id": "tb", "label": "fridge", "pose": [6,2,0],
       "openable": true, "z0": 0.0,
       "boxes": [[-0.35,-0.35,0.0,-0.25,0.35,1.2],
                 [0.25,-0.35,0.0,0.35,0.35,1.2],
                 [-0.25,0.25,0.0,0.25,0.35,1.2],
                 [-0.25,-0.35,0.0,0.25,-0.25,1.2],
                 [-0.25,-0.25,0.0,0.25,0.25,0.1],
                 [-0.25,-0.25,1.0,0.25,0.25,1.2]],
       "interior": [-0.25,-0.25,0.1,0.25,0.25,1.0]}
    ],
    "items": [
      {"label": "orange", "carrier": "ta", "feature": "top",
       "offset": [0,0,0.47]},
      {"label": "book", "carrier": "tb", "feature": "top",
       "offset": [0,0,1.25]}
    ]
  })");
  return s;
}

// A sealed box that cannot be opened, plus a pillar too tall to reach.
const Scene& chest_scene() {
  static const Scene s = scene_from_json(R"({
    "version": 1, "name": "unit-chest", "resolution": 0.05,
    "rooms": [{"id": "r1", "type": "living room",
               "footprint": [[0,0],[4,0],[4,4],[0,4]],
               "carriers": ["chest", "pillar"], "objects": []}],
    "doors": [],
    "carriers": [
      {"id": "chest", "label": "chest", "pose": [2.6,2.6,0],
       "openable": false, "z0": 0.0,
       "boxes": [[-0.35,-0.35,0.0,-0.25,0.35,0.5],
                 [0.25,-0.35,0.0,0.35,0.35,0.5],
                 [-0.25,0.25,0.0,0.25,0.35,0.5],
                 [-0.25,-0.35,0.0,0.25,-0.25,0.5],
                 [-0.25,-0.25,0.0,0.25,0.25,0.1],
                 [-0.25,-0.25,0.4,0.25,0.25,0.5]]},
      {"id": "pillar", "label": "bookshelf", "pose": [1.0,1.0,0],
       "openable": false, "z0": 0.0,
       "boxes": [[-0.2,-0.2,0.0,0.2,0.2,1.5]]}
    ],
    "items": []
  })");
  return s;
}

// Openable chest with a gem inside; the lid model for the detection gate.
const Scene& cabinet_scene() {
  static const Scene s = scene_from_json(R"({
    "version": 1, "name": "unit-cabinet", "resolution": 0.05,
    "rooms": [{"id": "r1", "type": "kitchen",
               "footprint": [[0,0],[4,0],[4,4],[0,4]],
               "carriers": ["box"], "objects": []}],
    "doors": [],
    "carriers": [
      {"id": "box", "label": "kitchen cabinet", "pose": [2,2,0],
       "openable": true, "z0": 0.0,
       "boxes": [[-0.35,-0.35,0.0,-0.25,0.35,0.5],
                 [0.25,-0.35,0.0,0.35,0.35,0.5],
                 [-0.25,0.25,0.0,0.25,0.35,0.5],
                 [-0.25,-0.35,0.0,0.25,-0.25,0.5],
                 [-0.25,-0.25,0.0,0.25,0.25,0.1],
                 [-0.25,-0.25,0.4,0.25,0.25,0.5]],
       "interior": [-0.25,-0.25,0.1,0.25,0.25,0.4]}
    ],
    "items": [{"label": "gem", "carrier": "box", "feature": "inside",
               "offset": [0,0,0.25]}]
  })");
  return s;
}

StrategyConfig base_cfg(Strategy strategy, const std::string& target,
                        uint64_t seed = 1) {
  StrategyConfig cfg;
  cfg.strategy = strategy;
  cfg.target = target;
  cfg.seed = seed;
  return cfg;
}

std::vector<const ordered_json*> events_of(const SearchTrace& t,
                                           const std::string& name) {
  std::vector<const ordered_json*> out;
  for (const ordered_json& e : t.events)
    if (e.at("event") == name) out.push_back(&e);
  return out;
}

std::vector<std::string> search_rooms(const SearchTrace& t) {
  std::vector<std::string> out;
  for (const ordered_json* e : events_of(t, "room-entered"))
    if (e->at("phase") == "search") out.push_back(e->at("room"));
  return out;
}

std::vector<std::string> inspected_carriers(const SearchTrace& t) {
  std::vector<std::string> out;
  for (const ordered_json* e : events_of(t, "carrier-inspected"))
    out.push_back(e->at("carrier"));
  return out;
}

std::vector<std::string> inspected_features(const SearchTrace& t,
                                            const std::string& carrier) {
  std::vector<std::string> out;
  for (const ordered_json* e : events_of(t, "feature-inspected"))
    if (e->at("carrier") == carrier) out.push_back(e->at("feature"));
  return out;
}

double recompute_trace_time(const SearchTrace& t, const TimeModel& tm) {
  double ch = 0.0;
  double ee = 0.0;
  int checks = 0;
  int opens = 0;
  for (const ordered_json& e : t.events) {
    const std::string name = e.at("event");
    if (name == "chassis-move") ch += e.at("length").get<double>();
    if (name == "ee-move") ee += e.at("length").get<double>();
    if (name == "detection-check") ++checks;
    if (name == "open-action" && e.at("success").get<bool>()) ++opens;
  }
  return ch / tm.base_speed + ee / tm.ee_speed + checks * tm.inspect_time +
         opens * tm.open_time;
}

// Scripted single-turn completions; no transport involved.
class ScriptedLlm : public LlmClient {
 public:
  explicit ScriptedLlm(std::vector<std::string> replies)
      : LlmClient(LlmConfig{}), replies_(std::move(replies)) {}
  std::string complete(const std::string&) override {
    if (i_ >= replies_.size()) throw TransportError("script exhausted");
    return replies_[i_++];
  }

 private:
  std::vector<std::string> replies_;
  size_t i_ = 0;
};

}  // namespace

TEST_CASE("strategy names round-trip and reject unknowns") {
  CHECK(strategy_from_string("godhs") == Strategy::kGodhs);
  CHECK(strategy_from_string("coverage") == Strategy::kCoverage);
  CHECK(strategy_from_string("random") == Strategy::kRandom);
  for (const Strategy s :
       {Strategy::kGodhs, Strategy::kCoverage, Strategy::kRandom})
    CHECK(strategy_from_string(to_string(s)) == s);
  CHECK_THROWS_AS(strategy_from_string("greedy"), ArgumentError);
  CHECK_THROWS_AS(strategy_from_string(""), ArgumentError);
}

TEST_CASE("config validation rejects out-of-range fields") {
  StrategyConfig cfg = base_cfg(Strategy::kCoverage, "orange");
  CHECK_NOTHROW(validate_config(cfg));

  StrategyConfig bad = cfg;
  bad.target = "";
  CHECK_THROWS_AS(validate_config(bad), ArgumentError);

  bad = cfg;
  bad.detection_noise = 1.0;
  CHECK_THROWS_AS(validate_config(bad), ArgumentError);
  bad.detection_noise = -0.01;
  CHECK_THROWS_AS(validate_config(bad), ArgumentError);

  bad = cfg;
  bad.time.base_speed = 0.0;
  CHECK_THROWS_AS(validate_config(bad), ArgumentError);

  bad = cfg;
  bad.time.ee_speed = -1.0;
  CHECK_THROWS_AS(validate_config(bad), ArgumentError);

  bad = cfg;
  bad.planner.coverage_target = 0.0;
  CHECK_THROWS_AS(validate_config(bad), ArgumentError);

  bad = cfg;
  bad.planner.max_poses_per_feature = 0;
  CHECK_THROWS_AS(validate_config(bad), ArgumentError);
}

TEST_CASE("running on an invalid scene is a validation error") {
  Scene empty;
  empty.resolution = 0.05;
  MockRanker ranker(shipped_kb());
  const StrategyConfig cfg = base_cfg(Strategy::kCoverage, "orange");
  CHECK_THROWS_AS(run_coverage(empty, shipped_kb(), ranker, cfg),
                  ValidationError);
}

TEST_CASE("room integration unions grids and tolerates re-integration") {
  const Scene& s = flat_scene();
  SceneMap map;
  const VoxelGrid hall = room_reveal(s, s.rooms[0]);
  CHECK(!hall.occupied.empty());

  integrate_room(map, s.rooms[0].id, hall);
  const size_t n = map.global.occupied.size();
  CHECK(n == hall.occupied.size());
  CHECK(scene_map_consistent(map));

  integrate_room(map, s.rooms[0].id, hall);  // no-op
  CHECK(map.global.occupied.size() == n);
  CHECK(scene_map_consistent(map));

  VoxelGrid coarse;
  coarse.resolution = 0.1;
  coarse.occupied.insert(Cell3{0, 0, 0});
  CHECK_THROWS_AS(integrate_room(map, "x", coarse), ArgumentError);

  // A cell in the global grid that no room accounts for breaks consistency.
  SceneMap broken = map;
  broken.global.occupied.insert(Cell3{9999, 9999, 9});
  CHECK_FALSE(scene_map_consistent(broken));
  SceneMap missing = map;
  missing.global.occupied.erase(*missing.rooms.begin()->second.occupied.begin());
  CHECK_FALSE(scene_map_consistent(missing));
}

TEST_CASE("exploration maps the whole flat and infers every room type") {
  MockRanker ranker(shipped_kb());
  const StrategyConfig cfg = base_cfg(Strategy::kGodhs, "orange", 4);
  const ExploreOutcome out =
      explore_scene(flat_scene(), shipped_kb(), ranker, cfg);

  CHECK(out.room_order.size() == 7);
  CHECK(out.room_order.front() == "hallway");
  CHECK(scene_map_consistent(out.map));
  CHECK(out.map.rooms.size() == 7);

  // The union of per-room reveals is exactly the full scene grid.
  const SceneGrid full = build_scene_grid(flat_scene());
  CHECK(out.map.global.occupied == full.grid.occupied);

  // Inferred types match the fixture's ground truth labels.
  for (const Room& r : flat_scene().rooms) {
    REQUIRE(out.map.room_types.count(r.id) == 1);
    CHECK(out.map.room_types.at(r.id) == r.type);
  }

  // One room-type-inferred event per room, in visit order.
  const auto inferred = events_of(out.trace, "room-type-inferred");
  REQUIRE(inferred.size() == 7);
  for (size_t i = 0; i < inferred.size(); ++i)
    CHECK(inferred[i]->at("room") == out.room_order[i]);
}

TEST_CASE("exploration is a pure function of the seed") {
  MockRanker ranker(shipped_kb());
  const StrategyConfig cfg = base_cfg(Strategy::kGodhs, "orange", 11);
  const ExploreOutcome a =
      explore_scene(flat_scene(), shipped_kb(), ranker, cfg);
  const ExploreOutcome b =
      explore_scene(flat_scene(), shipped_kb(), ranker, cfg);
  CHECK(a.room_order == b.room_order);
  CHECK(a.trace.to_jsonl() == b.trace.to_jsonl());
}

TEST_CASE("the exploration move crosses rooms through the door") {
  MockRanker ranker(shipped_kb());
  const StrategyConfig cfg = base_cfg(Strategy::kCoverage, "orange");
  const ExploreOutcome out =
      explore_scene(two_room_scene(), shipped_kb(), ranker, cfg);

  CHECK(out.room_order == std::vector<std::string>{"a", "b"});
  const auto moves = events_of(out.trace, "chassis-move");
  REQUIRE(moves.size() == 1);
  CHECK(moves[0]->at("phase") == "explore");
  CHECK(moves[0]->at("room") == "b");
  CHECK(moves[0]->at("carrier").is_null());
  // Centroid (2,2) to the door (4,2), then to centroid (6,2).
  CHECK(moves[0]->at("length").get<double>() ==
        doctest::Approx(4.0).epsilon(1e-12));
}

TEST_CASE("trace serialization round-trips byte for byte") {
  MockRanker ranker(shipped_kb());
  const StrategyConfig cfg = base_cfg(Strategy::kCoverage, "orange", 5);
  const SearchTrace t =
      run_coverage(one_room_scene(), shipped_kb(), ranker, cfg);
  CHECK(t.found);
  CHECK(trace_violations(t).empty());

  const std::string text = t.to_jsonl();
  const SearchTrace back = SearchTrace::from_jsonl(text);
  CHECK(back.to_jsonl() == text);
  CHECK(back.found == t.found);
  CHECK(back.time_s == t.time_s);
  CHECK(back.events.size() == t.events.size());
  CHECK(back.header.dump() == t.header.dump());
}

TEST_CASE("malformed trace text is a parse error") {
  CHECK_THROWS_AS(SearchTrace::from_jsonl(""), ParseError);
  CHECK_THROWS_AS(SearchTrace::from_jsonl("not json\n"), ParseError);
  // First record must be the header.
  CHECK_THROWS_AS(SearchTrace::from_jsonl("{\"record\":\"event\"}\n"),
                  ParseError);

  MockRanker ranker(shipped_kb());
  const StrategyConfig cfg = base_cfg(Strategy::kCoverage, "orange", 5);
  const SearchTrace t =
      run_coverage(one_room_scene(), shipped_kb(), ranker, cfg);
  std::string text = t.to_jsonl();
  const size_t first_break = text.find('\n');
  text.insert(first_break + 1, "\n");  // interior blank line
  CHECK_THROWS_AS(SearchTrace::from_jsonl(text), ParseError);
}

TEST_CASE("structural checks flag tampered traces") {
  MockRanker ranker(shipped_kb());
  const StrategyConfig cfg = base_cfg(Strategy::kCoverage, "orange", 5);
  const SearchTrace good =
      run_coverage(one_room_scene(), shipped_kb(), ranker, cfg);
  REQUIRE(trace_violations(good).empty());

  SearchTrace t = good;
  t.header["record"] = "event";
  CHECK(!trace_violations(t).empty());

  t = good;
  for (ordered_json& e : t.events)
    if (e.at("event") == "ee-move" && e.at("length").get<double>() > 0.0) {
      e["length"] = -1.0;
      break;
    }
  CHECK(!trace_violations(t).empty());

  t = good;
  t.events.push_back(t.events.back());  // second terminal
  CHECK(!trace_violations(t).empty());

  t = good;
  t.events.back()["time"] = t.events.back()["time"].get<double>() + 1.0;
  CHECK(!trace_violations(t).empty());

  t = good;
  ordered_json extra;
  extra["event"] = "room-entered";
  extra["phase"] = "search";
  extra["room"] = "r1";
  t.events.push_back(extra);  // event after the terminal
  CHECK(!trace_violations(t).empty());
}

TEST_CASE("detection respects cone, range, occlusion, and the open gate") {
  const Scene& s = one_room_scene();
  const CameraModel cam;
  const VoxelGrid grid = build_scene_grid(s).grid;
  const std::unordered_set<std::string> none;

  // Straight down at the orange from standoff height.
  EEPose above{2.0, 2.0, 0.87, 0.0, -kPi / 2.0, 0.0};
  CHECK(detect_target(above, cam, s, grid, none, "orange"));
  CHECK_FALSE(detect_target(above, cam, s, grid, none, "kiwi"));

  EEPose away = above;
  away.theta = kPi / 2.0;  // looks at the ceiling
  CHECK_FALSE(detect_target(away, cam, s, grid, none, "orange"));

  EEPose close = above;
  close.z = 0.51;  // range 0.04 under the near plane
  CHECK_FALSE(detect_target(close, cam, s, grid, none, "orange"));

  SUBCASE("a wall blocks sight, a door opening does not") {
    const Scene& two = two_room_scene();
    const VoxelGrid g2 = build_scene_grid(two).grid;
    // Book on the fridge top at (6,2,1.25), seen from room a.
    EEPose thru_door{3.6, 2.0, 1.25, 0.0, 0.0, 0.0};
    CHECK(detect_target(thru_door, cam, two, g2, none, "book"));
    EEPose thru_wall{3.6, 3.4, 1.25, 0.0, 0.0,
                     std::atan2(2.0 - 3.4, 6.0 - 3.6)};
    CHECK_FALSE(detect_target(thru_wall, cam, two, g2, none, "book"));
  }

  SUBCASE("inside placements require the carrier opened and carved out") {
    const Scene& cab = cabinet_scene();
    const VoxelGrid closed = build_scene_grid(cab).grid;
    const VoxelGrid opened_grid = build_scene_grid(cab, {"box"}).grid;
    const std::unordered_set<std::string> opened{"box"};
    EEPose front{2.0, 1.2, 0.25, 0.0, 0.0, kPi / 2.0};

    CHECK_FALSE(detect_target(front, cam, cab, closed, none, "gem"));
    CHECK_FALSE(detect_target(front, cam, cab, closed, opened, "gem"));
    CHECK(detect_target(front, cam, cab, opened_grid, opened, "gem"));
  }

  SUBCASE("noise draws come from the stream only on geometric hits") {
    Rng quiet(9);
    EEPose miss = above;
    miss.theta = kPi / 2.0;
    for (int i = 0; i < 3; ++i)
      CHECK_FALSE(detect_target(miss, cam, s, grid, none, "orange", 0.5,
                                &quiet));
    Rng fresh(9);
    CHECK(quiet.uniform() == fresh.uniform());  // nothing consumed

    Rng a(7);
    Rng b(7);
    int misses_a = 0;
    int misses_b = 0;
    for (int i = 0; i < 100; ++i)
      if (!detect_target(above, cam, s, grid, none, "orange", 0.5, &a))
        ++misses_a;
    for (int i = 0; i < 100; ++i)
      if (!detect_target(above, cam, s, grid, none, "orange", 0.5, &b))
        ++misses_b;
    CHECK(misses_a == misses_b);
    CHECK(misses_a > 0);
    CHECK(misses_a < 100);

    Rng c(7);
    CHECK(detect_target(above, cam, s, grid, none, "orange", 0.0, &c));
  }
}

TEST_CASE("the exhaustive baseline finds a top item in one room") {
  MockRanker ranker(shipped_kb());
  const StrategyConfig cfg = base_cfg(Strategy::kCoverage, "orange", 2);
  const SearchTrace t =
      run_coverage(one_room_scene(), shipped_kb(), ranker, cfg);
  REQUIRE(t.found);
  const ordered_json& last = t.events.back();
  CHECK(last.at("event") == "target-found");
  CHECK(last.at("room") == "r1");
  CHECK(last.at("carrier") == "table");
  CHECK(last.at("feature") == "top");
  CHECK(t.time_s == last.at("time").get<double>());
  CHECK(trace_violations(t).empty());
  CHECK(t.header.at("strategy") == "coverage");
}

TEST_CASE("a choice-free scene makes random replay the baseline events") {
  MockRanker ranker(shipped_kb());
  const SearchTrace cov = run_coverage(
      one_room_scene(), shipped_kb(), ranker,
      base_cfg(Strategy::kCoverage, "orange", 6));
  const SearchTrace rnd = run_random(
      one_room_scene(), shipped_kb(), ranker,
      base_cfg(Strategy::kRandom, "orange", 6));
  CHECK(cov.found);
  CHECK(rnd.found);
  CHECK(cov.header.at("strategy") == "coverage");
  CHECK(rnd.header.at("strategy") == "random");
  REQUIRE(cov.events.size() == rnd.events.size());
  for (size_t i = 0; i < cov.events.size(); ++i)
    CHECK(cov.events[i].dump() == rnd.events[i].dump());
}

TEST_CASE("the dispatcher honors the configured strategy") {
  MockRanker ranker(shipped_kb());
  const StrategyConfig cfg = base_cfg(Strategy::kCoverage, "orange", 6);
  const SearchTrace a =
      run_search(one_room_scene(), shipped_kb(), ranker, cfg);
  const SearchTrace b =
      run_coverage(one_room_scene(), shipped_kb(), ranker, cfg);
  CHECK(a.to_jsonl() == b.to_jsonl());
}

TEST_CASE("ranked search stops in the first-ranked room when it scores") {
  MockRanker ranker(shipped_kb());
  const StrategyConfig cfg = base_cfg(Strategy::kGodhs, "orange", 3);
  const SearchTrace t =
      run_godhs(two_room_scene(), shipped_kb(), ranker, cfg);
  REQUIRE(t.found);
  CHECK(search_rooms(t) == std::vector<std::string>{"a"});
  CHECK(t.events.back().at("carrier") == "ta");
  CHECK(t.events.back().at("feature") == "top");
  // The kitchen fridge is never touched.
  for (const std::string& c : inspected_carriers(t)) CHECK(c != "tb");
  CHECK(trace_violations(t).empty());
}

TEST_CASE("failed opens and unreachable features are logged and skipped") {
  MockRanker ranker(shipped_kb());
  const StrategyConfig cfg = base_cfg(Strategy::kCoverage, "gem", 2);
  const SearchTrace t =
      run_coverage(chest_scene(), shipped_kb(), ranker, cfg);

  CHECK_FALSE(t.found);
  CHECK(t.events.back().at("event") == "target-not-found");

  // Both carriers were inspected; the cavity is asked for even though the
  // chest cannot open.
  CHECK(inspected_carriers(t) ==
        std::vector<std::string>{"chest", "pillar"});
  CHECK(inspected_features(t, "chest") ==
        std::vector<std::string>{"top", "sides", "inside"});

  const auto opens = events_of(t, "open-action");
  REQUIRE(opens.size() == 1);
  CHECK(opens[0]->at("carrier") == "chest");
  CHECK(opens[0]->at("success") == false);

  bool open_failed = false;
  bool top_unreachable = false;
  for (const ordered_json* e : events_of(t, "feature-skipped")) {
    if (e->at("carrier") == "chest" && e->at("feature") == "inside" &&
        e->at("reason") == "open-failed")
      open_failed = true;
    if (e->at("carrier") == "pillar" && e->at("feature") == "top" &&
        e->at("reason") == "unreachable")
      top_unreachable = true;
  }
  CHECK(open_failed);
  CHECK(top_unreachable);
  CHECK(trace_violations(t).empty());
}

TEST_CASE("opening a cavity reveals its contents end to end") {
  MockRanker ranker(shipped_kb());
  const StrategyConfig cfg = base_cfg(Strategy::kCoverage, "gem", 2);
  const SearchTrace t =
      run_coverage(cabinet_scene(), shipped_kb(), ranker, cfg);
  REQUIRE(t.found);
  const ordered_json& last = t.events.back();
  CHECK(last.at("carrier") == "box");
  CHECK(last.at("feature") == "inside");
  const auto opens = events_of(t, "open-action");
  REQUIRE(opens.size() == 1);
  CHECK(opens[0]->at("success") == true);
  CHECK(last.at("opens") == 1);
  CHECK(trace_violations(t).empty());
}

TEST_CASE("ranked descent on the flat follows the knowledge base") {
  MockRanker ranker(shipped_kb());
  const StrategyConfig cfg = base_cfg(Strategy::kGodhs, "orange", 1);
  const SearchTrace t = run_godhs(flat_scene(), shipped_kb(), ranker, cfg);
  REQUIRE(t.found);

  const ordered_json& last = t.events.back();
  CHECK(last.at("event") == "target-found");
  CHECK(last.at("room") == "kitchen");
  CHECK(last.at("carrier") == "fridge");
  CHECK(last.at("feature") == "inside");

  // Living room first (prior 0.9), then the kitchen (0.85); the rest of
  // the flat is never searched.
  CHECK(search_rooms(t) == std::vector<std::string>{"living", "kitchen"});
  CHECK(inspected_carriers(t) ==
        std::vector<std::string>{"coffee_table", "sofa", "fridge"});
  CHECK(inspected_features(t, "coffee_table") ==
        std::vector<std::string>{"top", "bottom"});
  CHECK(inspected_features(t, "fridge") ==
        std::vector<std::string>{"sides", "inside"});

  const auto opens = events_of(t, "open-action");
  REQUIRE(opens.size() == 1);
  CHECK(opens[0]->at("carrier") == "fridge");
  CHECK(opens[0]->at("success") == true);

  // Every check before the last misses; the last one hits.
  const auto checks = events_of(t, "detection-check");
  REQUIRE(!checks.empty());
  for (size_t i = 0; i + 1 < checks.size(); ++i)
    CHECK(checks[i]->at("found") == false);
  CHECK(checks.back()->at("found") == true);

  // The terminal time is the grouped time identity, bit for bit.
  CHECK(recompute_trace_time(t, cfg.time) == t.time_s);
  CHECK(last.at("time").get<double>() == t.time_s);
  CHECK(last.at("opens") == 1);
  CHECK(t.time_s > 0.0);
  CHECK(trace_violations(t).empty());
}

TEST_CASE("reruns with one config produce identical bytes") {
  MockRanker ranker(shipped_kb());
  const StrategyConfig cfg = base_cfg(Strategy::kGodhs, "orange", 3);
  const SearchTrace a = run_godhs(flat_scene(), shipped_kb(), ranker, cfg);
  MockRanker ranker2(shipped_kb());
  const SearchTrace b = run_godhs(flat_scene(), shipped_kb(), ranker2, cfg);
  CHECK(a.to_jsonl() == b.to_jsonl());
}

TEST_CASE("a replayed language-model trial reproduces the trace bytes") {
  const std::string log_path = "search_replay_transcript.jsonl";
  StrategyConfig cfg = base_cfg(Strategy::kGodhs, "orange", 8);
  cfg.ranker = "llm";

  std::string original;
  {
    ScriptedLlm client({"living room", "living room", "coffee table",
                        "coffee table", "top, bottom"});
    TranscriptLog log(log_path);
    LlmRanker ranker(client, shipped_kb(), &log);
    const SearchTrace t =
        run_godhs(one_room_scene(), shipped_kb(), ranker, cfg);
    CHECK(t.found);
    original = t.to_jsonl();
    CHECK(TranscriptLog::read(log_path).size() == 5);
  }

  ReplayRanker replay(log_path);
  const SearchTrace again =
      run_godhs(one_room_scene(), shipped_kb(), replay, cfg);
  CHECK(again.to_jsonl() == original);
  std::remove(log_path.c_str());
}

TEST_CASE("an exhausted search visits everything exactly once in order") {
  MockRanker ranker(shipped_kb());
  const StrategyConfig cfg = base_cfg(Strategy::kCoverage, "book", 2);
  const SearchTrace t = run_coverage(flat_scene(), shipped_kb(), ranker, cfg);

  CHECK_FALSE(t.found);
  CHECK(t.events.back().at("event") == "target-not-found");
  for (const ordered_json* e : events_of(t, "detection-check"))
    CHECK(e->at("found") == false);

  // Search-phase room order equals exploration order for this seed.
  const ExploreOutcome out =
      explore_scene(flat_scene(), shipped_kb(), ranker, cfg);
  CHECK(search_rooms(t) == out.room_order);

  // Every carrier inspected exactly once.
  const std::vector<std::string> carriers = inspected_carriers(t);
  CHECK(carriers.size() == flat_scene().carriers.size());
  std::set<std::string> unique(carriers.begin(), carriers.end());
  CHECK(unique.size() == carriers.size());

  // No (carrier, feature) pair repeats.
  std::set<std::pair<std::string, std::string>> pairs;
  for (const ordered_json* e : events_of(t, "feature-inspected"))
    CHECK(pairs.emplace(e->at("carrier"), e->at("feature")).second);

  // Chassis blocks per feature wind monotonically around the carrier,
  // with at most one wrap in polar angle.
  struct Group {
    std::string carrier;
    std::vector<Vec2> poses;
  };
  std::vector<Group> groups;
  for (const ordered_json& e : t.events) {
    const std::string name = e.at("event");
    if (name == "feature-inspected")
      groups.push_back({e.at("carrier"), {}});
    else if (name == "chassis-move" && !e.at("carrier").is_null() &&
             !groups.empty())
      groups.back().poses.push_back(
          {e.at("pose")[0].get<double>(), e.at("pose")[1].get<double>()});
  }
  int multi_block_groups = 0;
  for (const Group& g : groups) {
    if (g.poses.size() < 2) continue;
    ++multi_block_groups;
    const Carrier* c = flat_scene().find_carrier(g.carrier);
    REQUIRE(c != nullptr);
    const Footprint2D fp =
        footprint_of(voxelize(c->cloud, flat_scene().resolution));
    double cx = 0.0;
    double cy = 0.0;
    const std::vector<Cell2> cells = fp.sorted_cells();
    for (const Cell2& cell : cells) {
      const Vec2 p = fp.cell_center(cell);
      cx += p.x;
      cy += p.y;
    }
    cx /= static_cast<double>(cells.size());
    cy /= static_cast<double>(cells.size());
    int ascents = 0;
    for (size_t i = 0; i + 1 < g.poses.size(); ++i) {
      const double a0 =
          std::atan2(g.poses[i].y - cy, g.poses[i].x - cx);
      const double a1 =
          std::atan2(g.poses[i + 1].y - cy, g.poses[i + 1].x - cx);
      if (a1 > a0 + 1e-12) ++ascents;
    }
    CHECK(ascents <= 1);
  }
  CHECK(multi_block_groups > 0);

  // Within a block, executed end-effector poses are lexicographically
  // sorted on (z, y, x, yaw, pitch, roll).
  using Key = std::array<double, 6>;
  std::vector<Key> block;
  int checked_pairs = 0;
  auto flush = [&] { block.clear(); };
  for (const ordered_json& e : t.events) {
    const std::string name = e.at("event");
    if (name == "ee-move") {
      const ordered_json& p = e.at("pose");
      const Key k{p[2].get<double>(), p[1].get<double>(),
                  p[0].get<double>(), p[5].get<double>(),
                  p[4].get<double>(), p[3].get<double>()};
      if (!block.empty()) {
        CHECK(!(k < block.back()));
        ++checked_pairs;
      }
      block.push_back(k);
    } else if (name != "detection-check") {
      flush();
    }
  }
  CHECK(checked_pairs > 0);

  // First move of each block travels zero; time identity holds exactly.
  bool block_start = true;
  for (const ordered_json& e : t.events) {
    const std::string name = e.at("event");
    if (name == "chassis-move") block_start = true;
    if (name == "ee-move") {
      if (block_start) CHECK(e.at("length").get<double>() == 0.0);
      block_start = false;
    }
  }
  CHECK(recompute_trace_time(t, cfg.time) == t.time_s);
  CHECK(trace_violations(t).empty());
}

TEST_CASE("disabling the sort flags is recorded and still legal") {
  MockRanker ranker(shipped_kb());
  StrategyConfig cfg = base_cfg(Strategy::kCoverage, "orange", 2);
  cfg.sort_ee = false;
  cfg.sort_ch = false;
  const SearchTrace t =
      run_coverage(one_room_scene(), shipped_kb(), ranker, cfg);
  CHECK(t.header.at("sort_ee") == false);
  CHECK(t.header.at("sort_ch") == false);
  CHECK(t.found);
  CHECK(trace_violations(t).empty());
}
