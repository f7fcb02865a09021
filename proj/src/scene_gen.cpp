#include "godhs/scene_gen.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "godhs/errors.hpp"
#include "godhs/rng.hpp"

namespace godhs {

namespace {


double snap(double v, double q) { return std::round(v / q) * q; }

/// Sampled carrier shape plus the regions items may occupy.
struct Recipe {
  std::string label;
  bool openable = false;
  double z0 = 0.0;
  std::vector<Box3> boxes;
  std::optional<Box3> interior;
  Box3 top_region{};   // local box whose upper face holds items
  bool has_top = false;
};

Box3 slab(double hw, double hd, double z0, double t) {
  return {{-hw, -hd, z0}, {hw, hd, z0 + t}};
}

/// Sealed cabinet: four walls, floor and lid around a void. The cavity is
/// only observable after the abstract open action.
void cabinet_boxes(Recipe& r, double hw, double hd, double h, double wall) {
  r.boxes = {
      {{-hw, -hd, 0.0}, {-hw + wall, hd, h}},
      {{hw - wall, -hd, 0.0}, {hw, hd, h}},
      {{-hw + wall, hd - wall, 0.0}, {hw - wall, hd, h}},
      {{-hw + wall, -hd, 0.0}, {hw - wall, -hd + wall, h}},
      {{-hw + wall, -hd + wall, 0.0}, {hw - wall, hd - wall, 0.05}},
      {{-hw + wall, -hd + wall, h - 0.05}, {hw - wall, hd - wall, h}},
  };
  r.interior = Box3{{-hw + wall, -hd + wall, 0.05},
                    {hw - wall, hd - wall, h - 0.05}};
}

/// Builds one carrier shape for the label, sizes drawn from the rng. All
/// item-holding surfaces stay low enough for the arm's reach band.
Recipe make_recipe(const std::string& label, Rng& rng) {
  Recipe r;
  r.label = label;
  auto u = [&](double lo, double hi) { return snap(rng.uniform(lo, hi), 0.05); };
  if (label == "coffee table") {
    const double hw = u(0.4, 0.5), hd = u(0.25, 0.3), z0 = u(0.35, 0.45);
    r.z0 = z0;
    r.boxes = {slab(hw, hd, z0, 0.05)};
    r.top_region = r.boxes[0];
    r.has_top = true;
  } else if (label == "desk" || label == "dressing table") {
    const double hw = u(0.45, 0.6), hd = 0.25, z0 = u(0.4, 0.45);
    r.z0 = z0;
    r.boxes = {slab(hw, hd, z0, 0.05)};
    r.top_region = r.boxes[0];
    r.has_top = true;
  } else if (label == "dining table") {
    const double hw = u(0.55, 0.7), hd = u(0.3, 0.35), z0 = u(0.5, 0.55);
    r.z0 = z0;
    r.boxes = {slab(hw, hd, z0, 0.05)};
    r.top_region = r.boxes[0];
  } else if (label == "chair") {
    const double hs = u(0.18, 0.22), h = u(0.4, 0.45);
    r.boxes = {{{-hs, -hs, 0.0}, {hs, hs, h}}};
    r.top_region = r.boxes[0];
    r.has_top = true;
  } else if (label == "nightstand") {
    const double hs = 0.2, h = u(0.45, 0.5);
    r.boxes = {{{-hs, -hs, 0.0}, {hs, hs, h}}};
    r.top_region = r.boxes[0];
    r.has_top = true;
  } else if (label == "tv stand") {
    const double hw = u(0.45, 0.55), h = u(0.4, 0.5);
    r.boxes = {{{-hw, -0.2, 0.0}, {hw, 0.2, h}}};
    r.top_region = r.boxes[0];
    r.has_top = true;
  } else if (label == "sofa") {
    const double hw = u(0.6, 0.8);
    r.z0 = 0.1;
    r.boxes = {{{-hw, -0.35, 0.1}, {hw, 0.35, 0.4}},
               {{-hw, 0.2, 0.4}, {hw, 0.35, 0.8}}};
    r.top_region = r.boxes[0];
  } else if (label == "bookshelf") {
    const double hw = u(0.35, 0.45), h = u(1.0, 1.2);
    r.boxes = {{{-hw, -0.15, 0.0}, {hw, 0.15, h}}};
    r.top_region = r.boxes[0];
  } else if (label == "fridge") {
    r.openable = true;
    cabinet_boxes(r, 0.35, 0.35, 1.2, 0.1);
  } else if (label == "kitchen cabinet" || label == "sink cabinet") {
    r.openable = true;
    cabinet_boxes(r, 0.4, 0.25, 0.9, 0.1);
  } else {
    throw ArgumentError("generate_scene: no recipe for carrier label '" +
                        label + "'");
  }
  return r;
}

struct RoomKind {
  const char* type;
  std::vector<const char*> pool;
  std::vector<const char*> objects;
};

const std::vector<RoomKind>& room_kinds() {
  static const std::vector<RoomKind> kinds = {
      {"living room",
       {"coffee table", "sofa", "tv stand", "bookshelf"},
       {"tv", "sofa"}},
      {"kitchen", {"fridge", "kitchen cabinet", "dining table"},
       {"stove", "sink"}},
      {"bedroom", {"nightstand", "dressing table"}, {"bed"}},
      {"office", {"desk", "bookshelf", "chair"}, {"monitor", "office chair"}},
      {"bathroom", {"sink cabinet"}, {"toilet", "bathtub"}},
      {"dining room", {"dining table", "chair"}, {"dining table"}},
  };
  return kinds;
}

/// World half-extents of the recipe's box hull after a quarter-turn yaw.
Vec2 rotated_half_extents(const Recipe& r, double yaw) {
  double hx = 0.0, hy = 0.0;
  for (const Box3& b : r.boxes) {
    hx = std::max({hx, std::abs(b.min.x), std::abs(b.max.x)});
    hy = std::max({hy, std::abs(b.min.y), std::abs(b.max.y)});
  }
  const int q = static_cast<int>(std::llround(yaw / (kPi / 2.0))) & 3;
  if (q % 2 == 1) std::swap(hx, hy);
  return {hx, hy};
}

struct Placed {
  Vec2 lo;
  Vec2 hi;
};

bool separated(const Placed& a, const Placed& b, double gap) {
  return a.hi.x + gap <= b.lo.x || b.hi.x + gap <= a.lo.x ||
         a.hi.y + gap <= b.lo.y || b.hi.y + gap <= a.lo.y;
}

}  // namespace

std::vector<std::string> generator_item_labels() {
  return {"orange", "mug",   "book",  "towel",
          "laptop", "remote control", "plate", "toothbrush"};
}

std::vector<std::pair<std::string, Feature>> target_spots(
    const std::string& item) {
  using P = std::pair<std::string, Feature>;
  // Only pairs with a positive shipped prior, on surfaces the arm can
  // actually service (tops at or below half a metre, low cavities).
  if (item == "orange")
    return {P{"fridge", Feature::kInside}, P{"coffee table", Feature::kTop},
            P{"kitchen cabinet", Feature::kInside}, P{"desk", Feature::kTop},
            P{"nightstand", Feature::kTop}, P{"chair", Feature::kTop}};
  if (item == "mug")
    return {P{"desk", Feature::kTop}, P{"kitchen cabinet", Feature::kInside},
            P{"coffee table", Feature::kTop},
            P{"sink cabinet", Feature::kInside},
            P{"nightstand", Feature::kTop}};
  if (item == "book")
    return {P{"desk", Feature::kTop}, P{"nightstand", Feature::kTop},
            P{"coffee table", Feature::kTop}, P{"chair", Feature::kTop}};
  if (item == "towel")
    return {P{"sink cabinet", Feature::kInside},
            P{"nightstand", Feature::kTop}, P{"chair", Feature::kTop}};
  if (item == "laptop")
    return {P{"desk", Feature::kTop}, P{"coffee table", Feature::kTop},
            P{"nightstand", Feature::kTop}};
  if (item == "remote control")
    return {P{"coffee table", Feature::kTop}, P{"tv stand", Feature::kTop},
            P{"nightstand", Feature::kTop}, P{"desk", Feature::kTop}};
  if (item == "plate")
    return {P{"kitchen cabinet", Feature::kInside},
            P{"sink cabinet", Feature::kInside},
            P{"coffee table", Feature::kTop}, P{"fridge", Feature::kInside},
            P{"desk", Feature::kTop}};
  if (item == "toothbrush")
    return {P{"sink cabinet", Feature::kInside},
            P{"nightstand", Feature::kTop}};
  return {};
}

Scene generate_scene(const GenConfig& cfg, uint64_t seed) {
  if (cfg.rooms_min < 1 || cfg.rooms_max < cfg.rooms_min)
    throw ArgumentError("generate_scene: room count range is infeasible");
  if (cfg.carriers_min < 1 || cfg.carriers_max < cfg.carriers_min)
    throw ArgumentError("generate_scene: carrier count range is infeasible");
  if (!(cfg.resolution > 0.0))
    throw ArgumentError("generate_scene: resolution must be positive");
  if (!(cfg.room_min_side >= 3.0 && cfg.room_max_side >= cfg.room_min_side))
    throw ArgumentError(
        "generate_scene: room sides must be >= 3.0 and ordered");
  if (cfg.catalog.empty())
    throw ArgumentError("generate_scene: item catalog is empty");
  if (std::find(cfg.catalog.begin(), cfg.catalog.end(), cfg.target) ==
      cfg.catalog.end())
    throw ArgumentError("generate_scene: target '" + cfg.target +
                        "' is not in the catalog");
  const auto spots = target_spots(cfg.target);
  if (spots.empty())
    throw ArgumentError("generate_scene: no placement rule for target '" +
                        cfg.target + "'");

  Rng rng(Rng::derive(seed, 0x5ce9e));
  Scene s;
  s.version = 1;
  s.name = "gen-" + std::to_string(seed);
  s.resolution = cfg.resolution;

  const int n_rooms =
      static_cast<int>(rng.uniform_int(cfg.rooms_min, cfg.rooms_max));
  std::vector<int> kind_order(room_kinds().size());
  for (size_t i = 0; i < kind_order.size(); ++i)
    kind_order[i] = static_cast<int>(i);
  rng.shuffle(kind_order);

  // Rooms in a row along x, each sharing a wall with the next.
  double x0 = 0.0;
  for (int i = 0; i < n_rooms; ++i) {
    const RoomKind& kind =
        room_kinds()[static_cast<size_t>(kind_order[i % kind_order.size()])];
    Room room;
    room.id = "r" + std::to_string(i + 1);
    room.type = kind.type;
    const double w = snap(rng.uniform(cfg.room_min_side, cfg.room_max_side), 0.1);
    const double h = snap(rng.uniform(cfg.room_min_side, cfg.room_max_side), 0.1);
    room.footprint = {{x0, 0.0}, {x0 + w, 0.0}, {x0 + w, h}, {x0, h}};
    room.objects.push_back(kind.objects[0]);
    if (kind.objects.size() > 1 && rng.uniform_int(0, 1) == 1)
      room.objects.push_back(kind.objects[1]);
    s.rooms.push_back(std::move(room));
    if (i > 0) {
      const double prev_h = s.rooms[i - 1].footprint[2].y;
      Door d;
      d.rooms = {s.rooms[i - 1].id, s.rooms[i].id};
      d.position = {x0, snap(std::min(prev_h, h) / 2.0, 0.05)};
      s.doors.push_back(d);
    }
    x0 += w;
  }

  // The target's carrier is pinned first so the item always has a home:
  // one room gets the chosen archetype as its opening carrier.
  const auto& spot = spots[static_cast<size_t>(
      rng.uniform_int(0, static_cast<int64_t>(spots.size()) - 1))];
  std::vector<int> hosting;
  for (int i = 0; i < n_rooms; ++i) {
    const RoomKind& kind =
        room_kinds()[static_cast<size_t>(kind_order[i % kind_order.size()])];
    for (const char* l : kind.pool)
      if (spot.first == l) {
        hosting.push_back(i);
        break;
      }
  }
  const int target_room =
      hosting.empty()
          ? static_cast<int>(rng.uniform_int(0, n_rooms - 1))
          : hosting[static_cast<size_t>(rng.uniform_int(
                0, static_cast<int64_t>(hosting.size()) - 1))];

  struct Instance {
    int carrier_index;
    Recipe recipe;
  };
  std::vector<Instance> instances;
  int counter = 0;
  for (int i = 0; i < n_rooms; ++i) {
    Room& room = s.rooms[static_cast<size_t>(i)];
    const RoomKind& kind =
        room_kinds()[static_cast<size_t>(kind_order[i % kind_order.size()])];
    const int want =
        static_cast<int>(rng.uniform_int(cfg.carriers_min, cfg.carriers_max));
    const double rx0 = room.footprint[0].x;
    const double rw = room.footprint[1].x - rx0;
    const double rh = room.footprint[2].y;
    std::vector<Placed> placed;
    for (int k = 0; k < want; ++k) {
      std::string label;
      if (i == target_room && k == 0)
        label = spot.first;
      else
        label = kind.pool[static_cast<size_t>(rng.uniform_int(
            0, static_cast<int64_t>(kind.pool.size()) - 1))];
      Recipe rec = make_recipe(label, rng);
      const double yaw = (kPi / 2.0) * static_cast<double>(rng.uniform_int(0, 3));
      const Vec2 he = rotated_half_extents(rec, yaw);
      bool ok = false;
      Vec2 center{};
      for (int attempt = 0; attempt < 40 && !ok; ++attempt) {
        const double mx = he.x + 0.8, my = he.y + 0.8;
        if (rx0 + mx > rx0 + rw - mx || my > rh - my) break;
        center = {snap(rng.uniform(rx0 + mx, rx0 + rw - mx), 0.05),
                  snap(rng.uniform(my, rh - my), 0.05)};
        const Placed cand{{center.x - he.x, center.y - he.y},
                          {center.x + he.x, center.y + he.y}};
        ok = true;
        for (const Placed& p : placed)
          if (!separated(p, cand, 0.55)) {
            ok = false;
            break;
          }
        if (ok) placed.push_back(cand);
      }
      if (!ok) {
        if (i == target_room && k == 0)
          throw ArgumentError(
              "generate_scene: could not place the target carrier");
        continue;
      }
      Carrier c;
      ++counter;
      std::string id = label;
      std::replace(id.begin(), id.end(), ' ', '_');
      c.id = id + "_" + std::to_string(counter);
      c.label = label;
      c.pose = {center.x, center.y, yaw};
      c.openable = rec.openable;
      c.z0 = rec.z0;
      c.boxes = rec.boxes;
      c.interior = rec.interior;
      room.carriers.push_back(c.id);
      s.carriers.push_back(std::move(c));
      instances.push_back(
          {static_cast<int>(s.carriers.size()) - 1, std::move(rec)});
    }
  }

  // Items: the target goes on one eligible instance; distractors use any
  // instance that physically holds items. Labels stay unique.
  auto place_item = [&](const std::string& label, const Instance& inst,
                        Feature feature) {
    const Recipe& rec = inst.recipe;
    Item it;
    it.label = label;
    it.placement.carrier =
        s.carriers[static_cast<size_t>(inst.carrier_index)].id;
    it.placement.feature = feature;
    if (feature == Feature::kInside) {
      const Box3& cav = *rec.interior;
      it.placement.offset = {
          snap(rng.uniform(0.5 * cav.min.x, 0.5 * cav.max.x), 0.01),
          snap(rng.uniform(0.5 * cav.min.y, 0.5 * cav.max.y), 0.01),
          snap(cav.min.z + 0.05 +
                   rng.uniform(0.0, std::min(0.3, cav.max.z - cav.min.z - 0.1)),
               0.01)};
    } else {
      const Box3& top = rec.top_region;
      it.placement.offset = {
          snap(rng.uniform(0.7 * top.min.x, 0.7 * top.max.x), 0.01),
          snap(rng.uniform(0.7 * top.min.y, 0.7 * top.max.y), 0.01),
          snap(top.max.z + 0.02, 0.01)};
    }
    s.items.push_back(std::move(it));
  };

  std::vector<size_t> eligible;
  for (size_t idx = 0; idx < instances.size(); ++idx)
    if (instances[idx].recipe.label == spot.first) eligible.push_back(idx);
  place_item(cfg.target,
             instances[eligible[static_cast<size_t>(rng.uniform_int(
                 0, static_cast<int64_t>(eligible.size()) - 1))]],
             spot.second);

  std::vector<std::string> others;
  for (const std::string& l : cfg.catalog)
    if (l != cfg.target && !target_spots(l).empty()) others.push_back(l);
  rng.shuffle(others);
  const int extras = static_cast<int>(
      rng.uniform_int(0, std::min<int64_t>(cfg.distractors_max,
                                           static_cast<int64_t>(others.size()))));
  for (int d = 0; d < extras; ++d) {
    const std::string& label = others[static_cast<size_t>(d)];
    std::vector<std::pair<size_t, Feature>> homes;
    for (size_t idx = 0; idx < instances.size(); ++idx) {
      const Recipe& rec = instances[idx].recipe;
      if (rec.openable)
        homes.push_back({idx, Feature::kInside});
      else if (rec.has_top)
        homes.push_back({idx, Feature::kTop});
    }
    if (homes.empty()) break;
    const auto& home = homes[static_cast<size_t>(
        rng.uniform_int(0, static_cast<int64_t>(homes.size()) - 1))];
    place_item(label, instances[home.first], home.second);
  }

  finalize_scene(s);
  const ValidationReport rep = validate_scene(s);
  if (!rep.ok())
    throw ValidationError("generate_scene produced an invalid scene: " +
                          rep.str());
  return s;
}

}  // namespace godhs
