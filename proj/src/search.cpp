#include "godhs/search.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <tuple>
#include <utility>

#include "godhs/errors.hpp"

namespace godhs {

using nlohmann::ordered_json;

const char* to_string(Strategy s) {
  switch (s) {
    case Strategy::kGodhs:
      return "godhs";
    case Strategy::kCoverage:
      return "coverage";
    case Strategy::kRandom:
      return "random";
  }
  return "?";
}

Strategy strategy_from_string(const std::string& name) {
  if (name == "godhs") return Strategy::kGodhs;
  if (name == "coverage") return Strategy::kCoverage;
  if (name == "random") return Strategy::kRandom;
  throw ArgumentError("strategy: unknown name '" + name + "'");
}

void validate_config(const StrategyConfig& cfg) {
  if (cfg.target.empty()) throw ArgumentError("config: target label empty");
  if (!(cfg.detection_noise >= 0.0 && cfg.detection_noise < 1.0))
    throw ArgumentError("config: detection noise must lie in [0, 1)");
  if (!(cfg.time.base_speed > 0.0) || !(cfg.time.ee_speed > 0.0))
    throw ArgumentError("config: speeds must be positive");
  if (cfg.time.inspect_time < 0.0 || cfg.time.open_time < 0.0)
    throw ArgumentError("config: action times must be non-negative");
  if (!cfg.planner.camera.valid()) throw ArgumentError("config: bad camera");
  if (!cfg.planner.robot.valid()) throw ArgumentError("config: bad robot");
  if (!(cfg.planner.standoff > 0.0))
    throw ArgumentError("config: standoff must be positive");
  if (!(cfg.planner.ee_angular_step > 0.0) ||
      !(cfg.planner.ch_radial_step > 0.0) ||
      !(cfg.planner.ch_angular_step > 0.0))
    throw ArgumentError("config: planner steps must be positive");
  if (!(cfg.planner.coverage_target > 0.0 &&
        cfg.planner.coverage_target <= 1.0))
    throw ArgumentError("config: coverage target must lie in (0, 1]");
  if (cfg.planner.point_cap < 1)
    throw ArgumentError("config: point cap must be at least 1");
  if (cfg.planner.max_poses_per_feature < 1)
    throw ArgumentError("config: pose cap must be at least 1");
}

VoxelGrid room_reveal(const Scene& s, const Room& r) {
  // A one-room scene copy reuses the exact wall and cloud sampling of the
  // full grid builder, so unioning the per-room reveals reproduces it.
  Scene sub;
  sub.version = s.version;
  sub.name = s.name;
  sub.resolution = s.resolution;
  sub.rooms.push_back(r);
  sub.doors = s.doors;  // openings depend only on door positions
  for (const std::string& cid : r.carriers) {
    const Carrier* c = s.find_carrier(cid);
    if (c) sub.carriers.push_back(*c);
  }
  return build_scene_grid(sub).grid;
}

void integrate_room(SceneMap& map, const std::string& room_id,
                    const VoxelGrid& cells) {
  if (map.global.resolution == 0.0) {
    map.global.origin = cells.origin;
    map.global.resolution = cells.resolution;
  } else if (map.global.resolution != cells.resolution) {
    throw ArgumentError("scene map: resolution mismatch on integration");
  }
  for (const Cell3& c : cells.occupied) map.global.occupied.insert(c);
  map.rooms[room_id] = cells;
}

bool scene_map_consistent(const SceneMap& map) {
  CellSet3 unioned;
  for (const auto& [id, grid] : map.rooms) {
    if (grid.resolution != map.global.resolution) return false;
    for (const Cell3& c : grid.occupied) {
      if (!map.global.is_occupied(c)) return false;
      unioned.insert(c);
    }
  }
  return unioned.size() == map.global.occupied.size();
}

namespace {

ordered_json vec3_json(const Vec3& v) {
  return ordered_json::array({v.x, v.y, v.z});
}

ordered_json chassis_json(const ChassisPose& p) {
  return ordered_json::array({p.x, p.y, p.theta});
}

ordered_json ee_json(const EEPose& p) {
  return ordered_json::array({p.x, p.y, p.z, p.phi, p.theta, p.psi});
}

ordered_json make_header(const Scene& scene, const StrategyConfig& cfg) {
  ordered_json h;
  h["record"] = "header";
  h["version"] = 1;
  h["scene"] = scene.name;
  h["target"] = cfg.target;
  h["strategy"] = to_string(cfg.strategy);
  h["ranker"] = cfg.ranker;
  h["seed"] = cfg.seed;
  h["rng"] = "mt19937_64";
  h["noise"] = cfg.detection_noise;
  h["sort_ee"] = cfg.sort_ee;
  h["sort_ch"] = cfg.sort_ch;
  ordered_json tm;
  tm["base_speed"] = cfg.time.base_speed;
  tm["ee_speed"] = cfg.time.ee_speed;
  tm["inspect_time"] = cfg.time.inspect_time;
  tm["open_time"] = cfg.time.open_time;
  h["time"] = std::move(tm);
  ordered_json pl;
  pl["standoff"] = cfg.planner.standoff;
  pl["ee_angular_step"] = cfg.planner.ee_angular_step;
  pl["ch_radial_step"] = cfg.planner.ch_radial_step;
  pl["ch_angular_step"] = cfg.planner.ch_angular_step;
  pl["coverage_target"] = cfg.planner.coverage_target;
  pl["point_cap"] = cfg.planner.point_cap;
  pl["max_poses_per_feature"] = cfg.planner.max_poses_per_feature;
  pl["ik_tol"] = cfg.planner.ik_tol;
  pl["ik_max_iters"] = cfg.planner.ik_max_iters;
  h["planner"] = std::move(pl);
  ordered_json cam;
  cam["fov_h"] = cfg.planner.camera.fov_h;
  cam["fov_v"] = cfg.planner.camera.fov_v;
  cam["near"] = cfg.planner.camera.near;
  cam["far"] = cfg.planner.camera.far;
  h["camera"] = std::move(cam);
  ordered_json rb;
  rb["mount"] = vec3_json(cfg.planner.robot.mount);
  rb["tool"] = vec3_json(cfg.planner.robot.tool);
  rb["reach_min"] = cfg.planner.robot.reach_min;
  rb["reach_max"] = cfg.planner.robot.reach_max;
  rb["chassis_radius"] = cfg.planner.robot.chassis_radius;
  rb["joints"] = ordered_json::array();
  for (const Joint& j : cfg.planner.robot.chain) {
    ordered_json jj;
    jj["offset"] = vec3_json(j.offset);
    jj["axis"] = vec3_json(j.axis);
    jj["q_min"] = j.q_min;
    jj["q_max"] = j.q_max;
    rb["joints"].push_back(std::move(jj));
  }
  h["robot"] = std::move(rb);
  return h;
}

bool is_terminal(const ordered_json& e) {
  const auto it = e.find("event");
  if (it == e.end() || !it->is_string()) return false;
  const std::string name = it->get<std::string>();
  return name == "target-found" || name == "target-not-found";
}

/// Applies the time model to the logged events. Sums run in event order,
/// so the engine's accumulator reproduces the value bit for bit.
double recompute_time(const ordered_json& header,
                      const std::vector<ordered_json>& events) {
  double ch = 0.0, ee = 0.0;
  int64_t checks = 0, opens = 0;
  for (const ordered_json& e : events) {
    const std::string name = e.value("event", "");
    if (name == "chassis-move")
      ch += e.value("length", 0.0);
    else if (name == "ee-move")
      ee += e.value("length", 0.0);
    else if (name == "detection-check")
      ++checks;
    else if (name == "open-action" && e.value("success", false))
      ++opens;
  }
  const ordered_json& tm = header.at("time");
  return ch / tm.at("base_speed").get<double>() +
         ee / tm.at("ee_speed").get<double>() +
         static_cast<double>(checks) * tm.at("inspect_time").get<double>() +
         static_cast<double>(opens) * tm.at("open_time").get<double>();
}

}  // namespace

std::string SearchTrace::to_jsonl() const {
  std::string out = header.dump();
  out.push_back('\n');
  for (const ordered_json& e : events) {
    out += e.dump();
    out.push_back('\n');
  }
  return out;
}

SearchTrace SearchTrace::from_jsonl(const std::string& text) {
  SearchTrace t;
  size_t start = 0;
  bool have_header = false;
  while (start < text.size()) {
    size_t end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    const std::string line = text.substr(start, end - start);
    start = end + 1;
    if (line.empty()) {
      if (start >= text.size()) break;
      throw ParseError("trace: blank line inside record stream");
    }
    ordered_json j;
    try {
      j = ordered_json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(std::string("trace: ") + e.what());
    }
    if (!j.is_object()) throw ParseError("trace: record must be an object");
    if (!have_header) {
      if (j.value("record", "") != "header")
        throw ParseError("trace: first record must be the header");
      t.header = std::move(j);
      have_header = true;
    } else {
      t.events.push_back(std::move(j));
    }
  }
  if (!have_header) throw ParseError("trace: empty input");
  t.found = false;
  for (const ordered_json& e : t.events)
    if (e.value("event", "") == "target-found") t.found = true;
  try {
    t.time_s = recompute_time(t.header, t.events);
  } catch (const nlohmann::json::exception&) {
    throw ParseError("trace: header lacks a usable time model");
  }
  return t;
}

std::vector<std::string> trace_violations(const SearchTrace& t) {
  std::vector<std::string> out;
  if (!t.header.is_object() || t.header.value("record", "") != "header")
    out.push_back("missing header record");
  else {
    const double noise = t.header.value("noise", 0.0);
    if (!(noise >= 0.0 && noise < 1.0)) out.push_back("noise out of range");
    if (!t.header.contains("time")) out.push_back("header lacks time model");
  }
  int terminals = 0;
  for (size_t i = 0; i < t.events.size(); ++i) {
    const ordered_json& e = t.events[i];
    if (!e.is_object() || !e.contains("event") || !e["event"].is_string()) {
      out.push_back("event record without event name");
      continue;
    }
    const std::string name = e["event"].get<std::string>();
    if ((name == "chassis-move" || name == "ee-move") &&
        e.value("length", 0.0) < 0.0)
      out.push_back("negative move length");
    if (is_terminal(e)) {
      ++terminals;
      if (i + 1 != t.events.size())
        out.push_back("terminal event before end of trace");
    }
  }
  if (terminals > 1) out.push_back("multiple terminal events");
  if (terminals == 1 && t.header.contains("time")) {
    const ordered_json& last = t.events.back();
    if (is_terminal(last)) {
      const double logged = last.value("time", -1.0);
      if (logged != recompute_time(t.header, t.events))
        out.push_back("terminal time differs from the event-sum identity");
    }
  }
  return out;
}

bool detect_target(const EEPose& ee, const CameraModel& cam,
                   const Scene& scene, const VoxelGrid& los_grid,
                   const std::unordered_set<std::string>& opened,
                   const std::string& target, double noise, Rng* noise_rng) {
  const Item* item = scene.find_item(target);
  if (!item) return false;
  if (item->placement.feature == Feature::kInside &&
      !opened.count(item->placement.carrier))
    return false;
  const Vec3 p = item_world_position(scene, *item);
  if (!cone_covers(ee, cam, p)) return false;
  if (segment_blocked(los_grid, {ee.x, ee.y, ee.z}, p)) return false;
  if (noise > 0.0 && noise_rng && noise_rng->uniform() < noise) return false;
  return true;
}

namespace {

// ---------------------------------------------------------------------
// Trial machinery shared by the three strategies.

struct Trial {
  const Scene* scene = nullptr;
  const KnowledgeBase* kb = nullptr;
  Ranker* ranker = nullptr;
  const StrategyConfig* cfg = nullptr;

  SearchTrace trace;
  SceneMap map;
  std::vector<std::string> explore_order;

  Vec2 pos{};
  std::string room;

  double ch_len = 0.0;
  double ee_len = 0.0;
  int64_t checks = 0;
  int64_t opens = 0;
  std::unordered_set<std::string> opened;

  SceneGrid det_grid;
  std::map<std::string, SceneGrid> plan_grids;

  Rng explore_rng;
  Rng decide_rng;
  Rng noise_rng;

  bool found = false;
  std::string found_room;
  std::string found_carrier;
  Feature found_feature = Feature::kTop;

  Trial(const Scene& s, const KnowledgeBase& k, Ranker& r,
        const StrategyConfig& c)
      : scene(&s),
        kb(&k),
        ranker(&r),
        cfg(&c),
        explore_rng(Rng::derive(c.seed, kStreamExplore)),
        decide_rng(Rng::derive(c.seed, kStreamDecide)),
        noise_rng(Rng::derive(c.seed, kStreamNoise)) {
    trace.header = make_header(s, c);
    det_grid = build_scene_grid(s);
  }

  double total_time() const {
    return ch_len / cfg->time.base_speed + ee_len / cfg->time.ee_speed +
           static_cast<double>(checks) * cfg->time.inspect_time +
           static_cast<double>(opens) * cfg->time.open_time;
  }

  const SceneGrid& plan_grid(const std::string& carrier_id) {
    auto it = plan_grids.find(carrier_id);
    if (it == plan_grids.end())
      it = plan_grids.emplace(carrier_id, build_scene_grid(*scene, {carrier_id}))
               .first;
    return it->second;
  }
};

std::vector<std::string> dedupe(const std::vector<std::string>& in) {
  std::vector<std::string> out;
  for (const std::string& s : in)
    if (std::find(out.begin(), out.end(), s) == out.end()) out.push_back(s);
  return out;
}

// Travel distance from one standing point to another: straight within a
// room, otherwise the shortest door-to-door walk over the shared-door
// graph with straight segments between consecutive waypoints.
double route_length(const Scene& s, const std::string& from_room,
                    const Vec2& from, const std::string& to_room,
                    const Vec2& to) {
  if (from_room == to_room) return distance(from, to);
  const size_t n = s.doors.size();
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> dist(n, kInf);
  std::vector<bool> done(n, false);
  auto touches = [&](const Door& d, const std::string& rid) {
    return d.rooms[0] == rid || d.rooms[1] == rid;
  };
  for (size_t i = 0; i < n; ++i)
    if (touches(s.doors[i], from_room))
      dist[i] = distance(from, s.doors[i].position);
  double best = kInf;
  for (;;) {
    size_t cur = n;
    for (size_t i = 0; i < n; ++i)
      if (!done[i] && dist[i] < (cur == n ? kInf : dist[cur])) cur = i;
    if (cur == n) break;
    done[cur] = true;
    if (touches(s.doors[cur], to_room))
      best = std::min(best, dist[cur] + distance(s.doors[cur].position, to));
    for (size_t i = 0; i < n; ++i) {
      if (done[i]) continue;
      const bool share = touches(s.doors[i], s.doors[cur].rooms[0]) ||
                         touches(s.doors[i], s.doors[cur].rooms[1]);
      if (!share) continue;
      const double nd =
          dist[cur] + distance(s.doors[cur].position, s.doors[i].position);
      if (nd < dist[i]) dist[i] = nd;
    }
  }
  if (best == kInf)
    throw ValidationError("route: rooms " + from_room + " and " + to_room +
                          " are not connected");
  return best;
}

void emit_chassis_move(Trial& t, const std::string& phase,
                       const std::string& room_id, const std::string& carrier,
                       const ChassisPose& pose, double length) {
  ordered_json e;
  e["event"] = "chassis-move";
  e["phase"] = phase;
  e["room"] = room_id;
  if (carrier.empty())
    e["carrier"] = nullptr;
  else
    e["carrier"] = carrier;
  e["pose"] = chassis_json(pose);
  e["length"] = length;
  t.trace.events.push_back(std::move(e));
  t.ch_len += length;
  t.pos = {pose.x, pose.y};
}

void emit_room_entered(Trial& t, const std::string& phase,
                       const std::string& room_id) {
  ordered_json e;
  e["event"] = "room-entered";
  e["phase"] = phase;
  e["room"] = room_id;
  t.trace.events.push_back(std::move(e));
}

void emit_ranking(Trial& t, RankLevel level, const std::string& context,
                  bool valid, const std::vector<std::string>& labels) {
  ordered_json e;
  e["event"] = "ranking";
  e["level"] = to_string(level);
  e["context"] = context;
  e["valid"] = valid;
  e["labels"] = labels;
  t.trace.events.push_back(std::move(e));
}

void emit_feature_skipped(Trial& t, const std::string& carrier_id, Feature f,
                          const std::string& reason) {
  ordered_json e;
  e["event"] = "feature-skipped";
  e["carrier"] = carrier_id;
  e["feature"] = to_string(f);
  e["reason"] = reason;
  t.trace.events.push_back(std::move(e));
}

void finish(Trial& t) {
  ordered_json e;
  if (t.found) {
    e["event"] = "target-found";
    e["room"] = t.found_room;
    e["carrier"] = t.found_carrier;
    e["feature"] = to_string(t.found_feature);
  } else {
    e["event"] = "target-not-found";
  }
  e["time"] = t.total_time();
  e["chassis_length"] = t.ch_len;
  e["ee_length"] = t.ee_len;
  e["checks"] = t.checks;
  e["opens"] = t.opens;
  t.trace.events.push_back(std::move(e));
  t.trace.found = t.found;
  t.trace.time_s = t.total_time();
}

/// Moves to a standing point, logging the walk. Zero-length stand-stills
/// are not logged.
void move_to(Trial& t, const std::string& room_id, const Vec2& target,
             const std::string& phase, const std::string& carrier) {
  const double len = route_length(*t.scene, t.room, t.pos, room_id, target);
  if (len == 0.0 && t.room == room_id) {
    t.room = room_id;
    return;
  }
  const Vec2 d = target - t.pos;
  const double heading = (d.x == 0.0 && d.y == 0.0)
                             ? 0.0
                             : std::atan2(d.y, d.x);
  emit_chassis_move(t, phase, room_id, carrier,
                    {target.x, target.y, heading}, len);
  t.room = room_id;
}

void enter_room(Trial& t, const std::string& room_id,
                const std::string& phase) {
  const Room* r = t.scene->find_room(room_id);
  move_to(t, room_id, polygon_centroid(r->footprint), phase, "");
  emit_room_entered(t, phase, room_id);
}

std::vector<std::string> observed_in(const Room& r, const Scene& s) {
  std::vector<std::string> obs = r.objects;
  for (const std::string& cid : r.carriers) {
    const Carrier* c = s.find_carrier(cid);
    if (c) obs.push_back(c->label);
  }
  return dedupe(obs);
}

void explore(Trial& t) {
  const Room& entry = t.scene->rooms.front();
  t.room = entry.id;
  t.pos = polygon_centroid(entry.footprint);
  std::unordered_set<std::string> seen = {entry.id};
  std::vector<std::string> queue = {entry.id};
  size_t head = 0;
  while (head < queue.size()) {
    const std::string rid = queue[head++];
    const Room* r = t.scene->find_room(rid);
    if (rid != entry.id)
      move_to(t, rid, polygon_centroid(r->footprint), "explore", "");
    emit_room_entered(t, "explore", rid);
    integrate_room(t.map, rid, room_reveal(*t.scene, *r));
    const std::string type =
        infer_room_type(*t.ranker, observed_in(*r, *t.scene), t.kb->room_types);
    t.map.room_types[rid] = type;
    ordered_json e;
    e["event"] = "room-type-inferred";
    e["room"] = rid;
    e["type"] = type;
    t.trace.events.push_back(std::move(e));
    t.explore_order.push_back(rid);

    std::vector<std::string> next;
    for (const Door& d : t.scene->doors) {
      std::string other;
      if (d.rooms[0] == rid)
        other = d.rooms[1];
      else if (d.rooms[1] == rid)
        other = d.rooms[0];
      else
        continue;
      if (seen.insert(other).second) next.push_back(other);
    }
    t.explore_rng.shuffle(next);
    for (std::string& o : next) queue.push_back(std::move(o));
  }
}

/// Feature set worth pointing a camera at: top and sides always, the
/// underside when it is raised off the floor, the interior when the shape
/// actually encloses a cavity (openable or not; opening may still fail).
std::vector<Feature> askable_features(const Scene& s, const Carrier& c) {
  std::vector<Feature> out = {Feature::kTop, Feature::kSides};
  if (c.z0 > 0.0) out.push_back(Feature::kBottom);
  if (!carrier_feature_points(s, c, Feature::kInside).points.empty())
    out.push_back(Feature::kInside);
  return out;
}

Footprint2D room_occupied_footprint(const Trial& t, const Room& r) {
  std::vector<Vec3> cloud;
  for (const std::string& cid : r.carriers) {
    const Carrier* c = t.scene->find_carrier(cid);
    if (!c) continue;
    cloud.insert(cloud.end(), c->cloud.begin(), c->cloud.end());
  }
  return footprint_of(voxelize(cloud, t.scene->resolution));
}

Vec2 footprint_mean(const Footprint2D& fp) {
  double sx = 0.0;
  double sy = 0.0;
  const std::vector<Cell2> cells = fp.sorted_cells();
  for (const Cell2& c : cells) {
    const Vec2 p = fp.cell_center(c);
    sx += p.x;
    sy += p.y;
  }
  if (cells.empty()) return {0.0, 0.0};
  const double n = static_cast<double>(cells.size());
  return {sx / n, sy / n};
}

std::vector<size_t> chassis_order(const std::vector<ChassisPose>& sorted,
                                  const std::vector<ChassisPose>& orig) {
  std::vector<size_t> order;
  std::vector<bool> used(orig.size(), false);
  for (const ChassisPose& sp : sorted)
    for (size_t i = 0; i < orig.size(); ++i)
      if (!used[i] && orig[i].x == sp.x && orig[i].y == sp.y &&
          orig[i].theta == sp.theta) {
        used[i] = true;
        order.push_back(i);
        break;
      }
  return order;
}

/// Ascending (z, y, x, yaw, pitch, roll), the same key the lexicographic
/// pose sort uses; sorting indices keeps the joint vectors aligned.
std::vector<size_t> ee_order(const std::vector<EEPose>& poses) {
  std::vector<size_t> idx(poses.size());
  for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::stable_sort(idx.begin(), idx.end(), [&](size_t a, size_t b) {
    const EEPose& p = poses[a];
    const EEPose& q = poses[b];
    return std::tie(p.z, p.y, p.x, p.psi, p.theta, p.phi) <
           std::tie(q.z, q.y, q.x, q.psi, q.theta, q.phi);
  });
  return idx;
}

bool inspect_feature(Trial& t, const Room& room, const Carrier& c,
                     Feature f) {
  const PlannerConfig& pc = t.cfg->planner;
  {
    ordered_json e;
    e["event"] = "feature-inspected";
    e["carrier"] = c.id;
    e["feature"] = to_string(f);
    t.trace.events.push_back(std::move(e));
  }

  if (f == Feature::kInside) {
    const bool ok = c.openable;
    ordered_json e;
    e["event"] = "open-action";
    e["carrier"] = c.id;
    e["success"] = ok;
    t.trace.events.push_back(std::move(e));
    if (!ok) {
      emit_feature_skipped(t, c.id, f, "open-failed");
      return false;
    }
    if (t.opened.insert(c.id).second) {
      ++t.opens;  // a successful open costs open_time once
      t.det_grid = build_scene_grid(*t.scene, t.opened);
    }
  }

  const FeatureMap fm = carrier_feature_points(*t.scene, c, f);
  if (fm.points.empty()) {
    emit_feature_skipped(t, c.id, f, "no-surface");
    return false;
  }

  // The inspected carrier is carved out of the planning grid so its own
  // body never occludes its feature points.
  const SceneGrid& grid = t.plan_grid(c.id);
  const std::vector<EEPose> raw_cands = generate_ee_candidates(
      fm, pc.camera, pc.standoff, pc.ee_angular_step, &grid.grid,
      pc.point_cap);

  const Footprint2D carrier_fp =
      footprint_of(voxelize(c.cloud, t.scene->resolution));
  const std::vector<ChassisPose> ch_cands = generate_ch_candidates(
      carrier_fp, room.footprint, room_occupied_footprint(t, room), pc.robot,
      pc.ch_radial_step, pc.ch_angular_step);

  // Views no base placement could serve are dropped before selection so
  // coverage concentrates on the region within the arm's reach band.
  std::vector<EEPose> cands;
  cands.reserve(raw_cands.size());
  for (const EEPose& e : raw_cands) {
    bool servable = false;
    for (const ChassisPose& ch : ch_cands) {
      const double cth = std::cos(ch.theta), sth = std::sin(ch.theta);
      const Vec3 m{ch.x + cth * pc.robot.mount.x - sth * pc.robot.mount.y,
                   ch.y + sth * pc.robot.mount.x + cth * pc.robot.mount.y,
                   pc.robot.mount.z};
      const double dx = e.x - m.x, dy = e.y - m.y, dz = e.z - m.z;
      const double d = std::sqrt(dx * dx + dy * dy + dz * dz);
      if (d >= pc.robot.reach_min && d <= pc.robot.reach_max) {
        servable = true;
        break;
      }
    }
    if (servable) cands.push_back(e);
  }
  if (cands.empty() && !raw_cands.empty()) {
    emit_feature_skipped(t, c.id, f, "unreachable");
    return false;
  }

  EESelection sel =
      greedy_select_ee(cands, pc.camera, fm, grid.grid, pc.coverage_target);
  if (sel.poses.size() > static_cast<size_t>(pc.max_poses_per_feature))
    sel.poses.resize(pc.max_poses_per_feature);
  if (sel.poses.empty()) {
    emit_feature_skipped(t, c.id, f, "no-poses");
    return false;
  }
  const CHSelection chs =
      greedy_select_ch(ch_cands, sel.poses, pc.robot, grid.grid);
  // The greedy cover screens by distance band only; the plan builder runs
  // full IK, so it also gets the nearest spare candidates as fallbacks for
  // view poses the picked chassis cannot orient to.
  std::vector<ChassisPose> attempts = chs.poses;
  {
    const Vec2 fc = footprint_mean(carrier_fp);
    std::vector<size_t> spare;
    for (size_t i = 0; i < ch_cands.size(); ++i)
      if (std::find(chs.picked.begin(), chs.picked.end(), i) ==
          chs.picked.end())
        spare.push_back(i);
    std::stable_sort(spare.begin(), spare.end(), [&](size_t a, size_t b) {
      const ChassisPose &pa = ch_cands[a], &pb = ch_cands[b];
      const double da = std::hypot(pa.x - fc.x, pa.y - fc.y);
      const double db = std::hypot(pb.x - fc.x, pb.y - fc.y);
      if (da != db) return da < db;
      return std::tie(pa.x, pa.y, pa.theta) < std::tie(pb.x, pb.y, pb.theta);
    });
    const size_t cap = std::min<size_t>(spare.size(), 16);
    for (size_t i = 0; i < cap; ++i) attempts.push_back(ch_cands[spare[i]]);
  }
  const PosePlan plan = build_pose_plan(attempts, sel.poses, pc.robot,
                                        grid.grid, pc.ik_tol,
                                        pc.ik_max_iters);
  if (plan.empty()) {
    emit_feature_skipped(t, c.id, f, "unreachable");
    return false;
  }

  std::vector<size_t> block_order(plan.blocks.size());
  for (size_t i = 0; i < block_order.size(); ++i) block_order[i] = i;
  if (t.cfg->sort_ch && plan.blocks.size() > 1) {
    std::vector<ChassisPose> poses;
    for (const PosePlan::Block& b : plan.blocks) poses.push_back(b.chassis);
    const std::vector<ChassisPose> sorted = sort_ch_polar(
        poses, footprint_mean(carrier_fp), ChassisPose{t.pos.x, t.pos.y, 0.0});
    block_order = chassis_order(sorted, poses);
  }

  for (const size_t bi : block_order) {
    const PosePlan::Block& block = plan.blocks[bi];
    emit_chassis_move(t, "search", room.id, c.id, block.chassis,
                      distance(t.pos, Vec2{block.chassis.x, block.chassis.y}));

    std::vector<size_t> order(block.ee.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    if (t.cfg->sort_ee) order = ee_order(block.ee);

    std::optional<Vec3> prev;
    for (const size_t ei : order) {
      const EEPose& ee = block.ee[ei];
      const Vec3 at{ee.x, ee.y, ee.z};
      const double len = prev ? distance(*prev, at) : 0.0;
      prev = at;
      ordered_json em;
      em["event"] = "ee-move";
      em["carrier"] = c.id;
      em["feature"] = to_string(f);
      em["pose"] = ee_json(ee);
      em["length"] = len;
      t.trace.events.push_back(std::move(em));
      t.ee_len += len;

      const bool hit = detect_target(
          ee, pc.camera, *t.scene, t.det_grid.grid, t.opened, t.cfg->target,
          t.cfg->detection_noise, &t.noise_rng);
      ++t.checks;
      ordered_json dc;
      dc["event"] = "detection-check";
      dc["carrier"] = c.id;
      dc["feature"] = to_string(f);
      dc["found"] = hit;
      t.trace.events.push_back(std::move(dc));
      if (hit) {
        t.found = true;
        t.found_room = room.id;
        t.found_carrier = c.id;
        t.found_feature = f;
        return true;
      }
    }
  }
  return false;
}

bool inspect_carrier(Trial& t, const Room& room, const Carrier& c,
                     const std::vector<Feature>& feats) {
  ordered_json e;
  e["event"] = "carrier-inspected";
  e["room"] = room.id;
  e["carrier"] = c.id;
  e["label"] = c.label;
  t.trace.events.push_back(std::move(e));
  for (const Feature f : feats)
    if (inspect_feature(t, room, c, f)) return true;
  return false;
}

std::vector<Feature> baseline_features(const Scene& s, const Carrier& c) {
  const std::vector<Feature> ask = askable_features(s, c);
  std::vector<Feature> out;
  for (const Feature f :
       {Feature::kTop, Feature::kSides, Feature::kBottom, Feature::kInside})
    if (std::find(ask.begin(), ask.end(), f) != ask.end()) out.push_back(f);
  return out;
}

void search_godhs(Trial& t) {
  std::vector<std::string> types;
  for (const std::string& rid : t.explore_order) {
    const std::string& ty = t.map.room_types[rid];
    if (std::find(types.begin(), types.end(), ty) == types.end())
      types.push_back(ty);
  }
  const RankResponse room_resp = rank_rooms(*t.ranker, types, t.cfg->target);
  emit_ranking(t, RankLevel::kRoomRank, "", room_resp.valid, room_resp.labels);

  std::vector<std::string> room_order;
  for (const std::string& ty : room_resp.labels)
    for (const std::string& rid : t.explore_order)
      if (t.map.room_types[rid] == ty) room_order.push_back(rid);

  for (const std::string& rid : room_order) {
    const Room* room = t.scene->find_room(rid);
    enter_room(t, rid, "search");
    std::vector<std::string> labels;
    for (const std::string& cid : room->carriers) {
      const Carrier* c = t.scene->find_carrier(cid);
      if (c) labels.push_back(c->label);
    }
    labels = dedupe(labels);
    if (labels.empty()) continue;

    const std::string& context = t.map.room_types[rid];
    const RankResponse cls =
        classify_carriers(*t.ranker, labels, t.cfg->target, context);
    emit_ranking(t, RankLevel::kCarrierClassify, rid, cls.valid, cls.labels);
    if (cls.labels.empty()) continue;

    std::vector<const Carrier*> classified;
    for (const std::string& l : cls.labels)
      for (const std::string& cid : room->carriers) {
        const Carrier* c = t.scene->find_carrier(cid);
        if (c && c->label == l) classified.push_back(c);
      }
    for (const Carrier* c : classified)
      t.map.carrier_clouds[c->id] = c->cloud;  // scanned before ranking

    const RankResponse rk =
        rank_carriers(*t.ranker, cls.labels, t.cfg->target, context);
    emit_ranking(t, RankLevel::kCarrierRank, rid, rk.valid, rk.labels);

    std::vector<const Carrier*> ordered;
    for (const std::string& l : rk.labels)
      for (const Carrier* c : classified)
        if (c->label == l &&
            std::find(ordered.begin(), ordered.end(), c) == ordered.end())
          ordered.push_back(c);

    for (const Carrier* c : ordered) {
      bool flagged = false;
      const std::vector<Feature> feats =
          rank_features(*t.ranker, c->label, t.cfg->target,
                        askable_features(*t.scene, *c), &flagged);
      {
        std::vector<std::string> names;
        for (const Feature f : feats) names.emplace_back(to_string(f));
        emit_ranking(t, RankLevel::kFeatureRank, c->id, !flagged, names);
      }
      if (inspect_carrier(t, *room, *c, feats)) return;
    }
  }
}

void search_coverage(Trial& t) {
  for (const std::string& rid : t.explore_order) {
    const Room* room = t.scene->find_room(rid);
    enter_room(t, rid, "search");
    for (const std::string& cid : room->carriers) {
      const Carrier* c = t.scene->find_carrier(cid);
      if (!c) continue;
      t.map.carrier_clouds[c->id] = c->cloud;
      if (inspect_carrier(t, *room, *c, baseline_features(*t.scene, *c)))
        return;
    }
  }
}

void search_random(Trial& t) {
  // Uniform draws happen only when there is a real choice, so a scene with
  // one room and one carrier replays the coverage trace exactly.
  std::vector<std::string> rooms = t.explore_order;
  while (!rooms.empty()) {
    const size_t ri =
        rooms.size() == 1
            ? 0
            : static_cast<size_t>(t.decide_rng.uniform_int(
                  0, static_cast<int64_t>(rooms.size()) - 1));
    const std::string rid = rooms[ri];
    rooms.erase(rooms.begin() + static_cast<std::ptrdiff_t>(ri));
    const Room* room = t.scene->find_room(rid);
    enter_room(t, rid, "search");
    std::vector<std::string> carriers = room->carriers;
    while (!carriers.empty()) {
      const size_t ci =
          carriers.size() == 1
              ? 0
              : static_cast<size_t>(t.decide_rng.uniform_int(
                    0, static_cast<int64_t>(carriers.size()) - 1));
      const std::string cid = carriers[ci];
      carriers.erase(carriers.begin() + static_cast<std::ptrdiff_t>(ci));
      const Carrier* c = t.scene->find_carrier(cid);
      if (!c) continue;
      t.map.carrier_clouds[c->id] = c->cloud;
      if (inspect_carrier(t, *room, *c, baseline_features(*t.scene, *c)))
        return;
    }
  }
}

Trial start_trial(const Scene& scene, const KnowledgeBase& kb, Ranker& ranker,
                  const StrategyConfig& cfg) {
  validate_config(cfg);
  const ValidationReport rep = validate_scene(scene);
  if (!rep.ok()) throw ValidationError("scene invalid: " + rep.str());
  return Trial(scene, kb, ranker, cfg);
}

SearchTrace run_with(void (*search)(Trial&), const Scene& scene,
                     const KnowledgeBase& kb, Ranker& ranker,
                     const StrategyConfig& cfg) {
  Trial t = start_trial(scene, kb, ranker, cfg);
  explore(t);
  search(t);
  finish(t);
  return std::move(t.trace);
}

}  // namespace

ExploreOutcome explore_scene(const Scene& scene, const KnowledgeBase& kb,
                             Ranker& ranker, const StrategyConfig& cfg) {
  Trial t = start_trial(scene, kb, ranker, cfg);
  explore(t);
  t.trace.found = false;
  t.trace.time_s = t.total_time();
  ExploreOutcome out;
  out.map = std::move(t.map);
  out.room_order = std::move(t.explore_order);
  out.trace = std::move(t.trace);
  return out;
}

SearchTrace run_godhs(const Scene& scene, const KnowledgeBase& kb,
                      Ranker& ranker, const StrategyConfig& cfg) {
  StrategyConfig c = cfg;
  c.strategy = Strategy::kGodhs;  // the header names what actually ran
  return run_with(&search_godhs, scene, kb, ranker, c);
}

SearchTrace run_coverage(const Scene& scene, const KnowledgeBase& kb,
                         Ranker& ranker, const StrategyConfig& cfg) {
  StrategyConfig c = cfg;
  c.strategy = Strategy::kCoverage;
  return run_with(&search_coverage, scene, kb, ranker, c);
}

SearchTrace run_random(const Scene& scene, const KnowledgeBase& kb,
                       Ranker& ranker, const StrategyConfig& cfg) {
  StrategyConfig c = cfg;
  c.strategy = Strategy::kRandom;
  return run_with(&search_random, scene, kb, ranker, c);
}

SearchTrace run_search(const Scene& scene, const KnowledgeBase& kb,
                       Ranker& ranker, const StrategyConfig& cfg) {
  switch (cfg.strategy) {
    case Strategy::kGodhs:
      return run_godhs(scene, kb, ranker, cfg);
    case Strategy::kCoverage:
      return run_coverage(scene, kb, ranker, cfg);
    case Strategy::kRandom:
      return run_random(scene, kb, ranker, cfg);
  }
  throw ArgumentError("run_search: bad strategy");
}

}  // namespace godhs
