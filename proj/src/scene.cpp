#include "godhs/scene.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>

#include "godhs/errors.hpp"
#include "json.hpp"

namespace godhs {

using ordered_json = nlohmann::ordered_json;

const Carrier* Scene::find_carrier(const std::string& id) const {
  for (const Carrier& c : carriers)
    if (c.id == id) return &c;
  return nullptr;
}

const Room* Scene::find_room(const std::string& id) const {
  for (const Room& r : rooms)
    if (r.id == id) return &r;
  return nullptr;
}

const Room* Scene::room_of_carrier(const std::string& carrier_id) const {
  for (const Room& r : rooms)
    for (const std::string& cid : r.carriers)
      if (cid == carrier_id) return &r;
  return nullptr;
}

const Item* Scene::find_item(const std::string& label) const {
  for (const Item& it : items)
    if (it.label == label) return &it;
  return nullptr;
}

int Scene::carrier_index(const std::string& id) const {
  for (size_t i = 0; i < carriers.size(); ++i)
    if (carriers[i].id == id) return static_cast<int>(i);
  return -1;
}

bool point_in_polygon(const std::vector<Vec2>& poly, const Vec2& p) {
  bool inside = false;
  const size_t n = poly.size();
  for (size_t i = 0, j = n - 1; i < n; j = i++) {
    const Vec2& a = poly[i];
    const Vec2& b = poly[j];
    if ((a.y > p.y) != (b.y > p.y)) {
      const double x = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
      if (p.x < x) inside = !inside;
    }
  }
  return inside;
}

namespace {

int orient(const Vec2& a, const Vec2& b, const Vec2& c) {
  const double v = (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
  if (v > 1e-12) return 1;
  if (v < -1e-12) return -1;
  return 0;
}

bool on_segment(const Vec2& a, const Vec2& b, const Vec2& p) {
  return std::min(a.x, b.x) - 1e-12 <= p.x && p.x <= std::max(a.x, b.x) + 1e-12 &&
         std::min(a.y, b.y) - 1e-12 <= p.y && p.y <= std::max(a.y, b.y) + 1e-12;
}

bool segments_intersect(const Vec2& a, const Vec2& b, const Vec2& c,
                        const Vec2& d) {
  const int o1 = orient(a, b, c), o2 = orient(a, b, d);
  const int o3 = orient(c, d, a), o4 = orient(c, d, b);
  if (o1 != o2 && o3 != o4) return true;
  if (o1 == 0 && on_segment(a, b, c)) return true;
  if (o2 == 0 && on_segment(a, b, d)) return true;
  if (o3 == 0 && on_segment(c, d, a)) return true;
  if (o4 == 0 && on_segment(c, d, b)) return true;
  return false;
}

}  // namespace

bool polygon_simple(const std::vector<Vec2>& poly) {
  const size_t n = poly.size();
  if (n < 3) return false;
  for (size_t i = 0; i < n; ++i)
    if (distance(poly[i], poly[(i + 1) % n]) < 1e-9) return false;
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = i + 1; j < n; ++j) {
      // Skip edges sharing a vertex.
      if (j == i || (i + 1) % n == j || (j + 1) % n == i) continue;
      if (segments_intersect(poly[i], poly[(i + 1) % n], poly[j],
                             poly[(j + 1) % n]))
        return false;
    }
  }
  return true;
}

double polygon_area(const std::vector<Vec2>& poly) {
  double s = 0.0;
  const size_t n = poly.size();
  for (size_t i = 0; i < n; ++i) {
    const Vec2& a = poly[i];
    const Vec2& b = poly[(i + 1) % n];
    s += a.x * b.y - b.x * a.y;
  }
  return std::abs(s) * 0.5;
}

Vec2 polygon_centroid(const std::vector<Vec2>& poly) {
  double s = 0.0, cx = 0.0, cy = 0.0;
  const size_t n = poly.size();
  for (size_t i = 0; i < n; ++i) {
    const Vec2& a = poly[i];
    const Vec2& b = poly[(i + 1) % n];
    const double w = a.x * b.y - b.x * a.y;
    s += w;
    cx += (a.x + b.x) * w;
    cy += (a.y + b.y) * w;
  }
  if (std::abs(s) < 1e-12) {
    // Degenerate polygon: fall back to the vertex mean.
    Vec2 m{};
    for (const Vec2& v : poly) m = m + v;
    return m * (1.0 / static_cast<double>(n));
  }
  return {cx / (3.0 * s), cy / (3.0 * s)};
}

Vec3 carrier_to_world(const Carrier& c, const Vec3& local) {
  const double cs = std::cos(c.pose.yaw), sn = std::sin(c.pose.yaw);
  return {local.x * cs - local.y * sn + c.pose.x,
          local.x * sn + local.y * cs + c.pose.y, local.z};
}

std::vector<Vec3> sample_boxes(const std::vector<Box3>& boxes, double res) {
  if (!(res > 0.0)) throw ArgumentError("sample_boxes: resolution must be positive");
  std::vector<Vec3> cloud;
  for (const Box3& b : boxes) {
    if (!b.valid()) throw ArgumentError("sample_boxes: inverted box");
    const Vec3 ext = b.size();
    const int nx = std::max(1, static_cast<int>(std::ceil(ext.x / res)));
    const int ny = std::max(1, static_cast<int>(std::ceil(ext.y / res)));
    const int nz = std::max(1, static_cast<int>(std::ceil(ext.z / res)));
    for (int i = 0; i < nx; ++i)
      for (int j = 0; j < ny; ++j)
        for (int k = 0; k < nz; ++k)
          cloud.push_back({b.min.x + (i + 0.5) * ext.x / nx,
                           b.min.y + (j + 0.5) * ext.y / ny,
                           b.min.z + (k + 0.5) * ext.z / nz});
  }
  return cloud;
}

void finalize_scene(Scene& s) {
  for (Carrier& c : s.carriers) {
    c.cloud.clear();
    for (const Vec3& p : sample_boxes(c.boxes, s.resolution))
      c.cloud.push_back(carrier_to_world(c, p));
  }
}

Box3 carrier_world_bounds(const Carrier& c) {
  if (c.cloud.empty())
    throw ArgumentError("carrier_world_bounds: carrier has no cloud");
  Box3 b{c.cloud.front(), c.cloud.front()};
  for (const Vec3& p : c.cloud) {
    b.min.x = std::min(b.min.x, p.x);
    b.min.y = std::min(b.min.y, p.y);
    b.min.z = std::min(b.min.z, p.z);
    b.max.x = std::max(b.max.x, p.x);
    b.max.y = std::max(b.max.y, p.y);
    b.max.z = std::max(b.max.z, p.z);
  }
  return b;
}

Vec3 item_world_position(const Scene& s, const Item& it) {
  const Carrier* c = s.find_carrier(it.placement.carrier);
  if (!c)
    throw ArgumentError("item_world_position: unknown carrier id " +
                        it.placement.carrier);
  return carrier_to_world(*c, it.placement.offset);
}

FeatureMap carrier_feature_points(const Scene& s, const Carrier& c,
                                  Feature f) {
  const VoxelGrid grid = voxelize(c.cloud, s.resolution);
  const Footprint2D fp = footprint_of(grid);
  switch (f) {
    case Feature::kTop:
      return extract_top(c.cloud, fp);
    case Feature::kSides:
      return extract_sides(c.cloud, footprint_boundary(fp));
    case Feature::kBottom:
      return extract_bottom(fp, c.z0);
    case Feature::kInside:
      return extract_inside(grid);
  }
  throw ArgumentError("carrier_feature_points: bad feature");
}

std::vector<Feature> exposed_features(const Scene& s, const Carrier& c) {
  std::vector<Feature> out = {Feature::kTop, Feature::kSides};
  if (c.z0 > 0.0) out.push_back(Feature::kBottom);
  if (c.openable && !carrier_feature_points(s, c, Feature::kInside).points.empty())
    out.push_back(Feature::kInside);
  return out;
}

std::string ValidationReport::str() const {
  std::string out;
  for (const std::string& v : violations) {
    out += v;
    out += '\n';
  }
  return out;
}

ValidationReport validate_scene(const Scene& s) {
  ValidationReport rep;
  auto fail = [&](const std::string& msg) { rep.violations.push_back(msg); };

  if (s.version != 1) fail("unsupported scene version");
  if (!(s.resolution > 0.0)) fail("resolution must be positive");
  if (s.rooms.empty()) fail("scene has no rooms");

  std::set<std::string> room_ids;
  for (const Room& r : s.rooms) {
    if (r.id.empty()) fail("room with empty id");
    if (!room_ids.insert(r.id).second) fail("duplicate room id " + r.id);
    if (r.footprint.size() < 3) {
      fail("room " + r.id + " footprint needs at least 3 vertices");
      continue;
    }
    if (!polygon_simple(r.footprint))
      fail("room " + r.id + " footprint is self-intersecting");
    else if (polygon_area(r.footprint) < 1e-6)
      fail("room " + r.id + " footprint has no area");
  }

  std::set<std::string> carrier_ids;
  for (const Carrier& c : s.carriers) {
    if (c.id.empty()) fail("carrier with empty id");
    if (!carrier_ids.insert(c.id).second) fail("duplicate carrier id " + c.id);
    if (c.boxes.empty()) fail("carrier " + c.id + " has no shape boxes");
    for (const Box3& b : c.boxes)
      if (!b.valid()) fail("carrier " + c.id + " has an inverted box");
    if (c.z0 < 0.0) fail("carrier " + c.id + " has negative underside height");
    if (c.cloud.empty()) fail("carrier " + c.id + " has an empty point cloud");
    if (c.interior) {
      if (!c.interior->valid())
        fail("carrier " + c.id + " interior region inverted");
      else if (!c.boxes.empty()) {
        Box3 hull = c.boxes.front();
        for (const Box3& b : c.boxes) {
          hull.min.x = std::min(hull.min.x, b.min.x);
          hull.min.y = std::min(hull.min.y, b.min.y);
          hull.min.z = std::min(hull.min.z, b.min.z);
          hull.max.x = std::max(hull.max.x, b.max.x);
          hull.max.y = std::max(hull.max.y, b.max.y);
          hull.max.z = std::max(hull.max.z, b.max.z);
        }
        if (!hull.contains(c.interior->min) || !hull.contains(c.interior->max))
          fail("carrier " + c.id + " interior region outside its shape");
      }
    }
  }

  // Every carrier belongs to exactly one room; all references resolve.
  std::unordered_map<std::string, int> referenced;
  for (const Room& r : s.rooms) {
    for (const std::string& cid : r.carriers) {
      if (!carrier_ids.count(cid))
        fail("room " + r.id + " references unknown carrier id " + cid);
      referenced[cid]++;
    }
  }
  for (const Carrier& c : s.carriers) {
    const auto it = referenced.find(c.id);
    if (it == referenced.end())
      fail("carrier " + c.id + " not referenced by any room");
    else if (it->second > 1)
      fail("carrier " + c.id + " referenced by multiple rooms");
  }

  // Carrier clouds must stay inside their room's footprint.
  for (const Room& r : s.rooms) {
    if (r.footprint.size() < 3) continue;
    for (const std::string& cid : r.carriers) {
      const Carrier* c = s.find_carrier(cid);
      if (!c || c->cloud.empty()) continue;
      for (const Vec3& p : c->cloud) {
        if (!point_in_polygon(r.footprint, p.xy())) {
          fail("carrier " + cid + " extends outside room " + r.id);
          break;
        }
      }
    }
  }

  // Door references and connectivity.
  for (const Door& d : s.doors) {
    for (const std::string& rid : d.rooms)
      if (!room_ids.count(rid)) fail("door references unknown room " + rid);
    if (d.rooms[0] == d.rooms[1]) fail("door connects a room to itself");
  }
  if (!s.rooms.empty()) {
    std::set<std::string> seen = {s.rooms.front().id};
    std::deque<std::string> queue = {s.rooms.front().id};
    while (!queue.empty()) {
      const std::string cur = queue.front();
      queue.pop_front();
      for (const Door& d : s.doors) {
        std::string other;
        if (d.rooms[0] == cur)
          other = d.rooms[1];
        else if (d.rooms[1] == cur)
          other = d.rooms[0];
        else
          continue;
        if (seen.insert(other).second) queue.push_back(other);
      }
    }
    for (const Room& r : s.rooms)
      if (!seen.count(r.id)) fail("unreachable room " + r.id);
  }

  // Item placements.
  std::set<std::string> item_labels;
  for (const Item& it : s.items) {
    if (it.label.empty()) fail("item with empty label");
    if (!item_labels.insert(it.label).second)
      fail("duplicate item label " + it.label);
    const Carrier* c = s.find_carrier(it.placement.carrier);
    if (!c) {
      fail("item " + it.label + " references unknown carrier id " +
           it.placement.carrier);
      continue;
    }
    if (c->cloud.empty()) continue;
    const std::vector<Feature> exposed = exposed_features(s, *c);
    if (std::find(exposed.begin(), exposed.end(), it.placement.feature) ==
        exposed.end()) {
      fail("item " + it.label + " placed on feature " +
           to_string(it.placement.feature) + " not exposed by carrier " +
           c->id);
      continue;
    }
    const FeatureMap fm = carrier_feature_points(s, *c, it.placement.feature);
    if (fm.points.empty()) {
      fail("item " + it.label + " placed on an empty feature region");
      continue;
    }
    Box3 bb{fm.points.front(), fm.points.front()};
    for (const Vec3& p : fm.points) {
      bb.min.x = std::min(bb.min.x, p.x);
      bb.min.y = std::min(bb.min.y, p.y);
      bb.min.z = std::min(bb.min.z, p.z);
      bb.max.x = std::max(bb.max.x, p.x);
      bb.max.y = std::max(bb.max.y, p.y);
      bb.max.z = std::max(bb.max.z, p.z);
    }
    const Vec3 wp = item_world_position(s, it);
    if (!bb.contains(wp, 2.0 * s.resolution))
      fail("item " + it.label + " offset lies outside its feature region");
  }

  return rep;
}

namespace {

double expect_number(const ordered_json& j, const std::string& ctx) {
  if (!j.is_number()) throw ParseError("scene: " + ctx + " must be a number");
  return j.get<double>();
}

std::string expect_string(const ordered_json& j, const std::string& ctx) {
  if (!j.is_string()) throw ParseError("scene: " + ctx + " must be a string");
  return j.get<std::string>();
}

const ordered_json& expect_field(const ordered_json& j, const char* key,
                                 const std::string& ctx) {
  const auto it = j.find(key);
  if (it == j.end())
    throw ParseError("scene: missing field '" + std::string(key) + "' in " +
                     ctx);
  return *it;
}

Vec2 parse_vec2(const ordered_json& j, const std::string& ctx) {
  if (!j.is_array() || j.size() != 2)
    throw ParseError("scene: " + ctx + " must be [x, y]");
  return {expect_number(j[0], ctx), expect_number(j[1], ctx)};
}

Vec3 parse_vec3(const ordered_json& j, const std::string& ctx) {
  if (!j.is_array() || j.size() != 3)
    throw ParseError("scene: " + ctx + " must be [x, y, z]");
  return {expect_number(j[0], ctx), expect_number(j[1], ctx),
          expect_number(j[2], ctx)};
}

Box3 parse_box(const ordered_json& j, const std::string& ctx) {
  if (!j.is_array() || j.size() != 6)
    throw ParseError("scene: " + ctx +
                     " must be [minx, miny, minz, maxx, maxy, maxz]");
  Box3 b;
  b.min = {expect_number(j[0], ctx), expect_number(j[1], ctx),
           expect_number(j[2], ctx)};
  b.max = {expect_number(j[3], ctx), expect_number(j[4], ctx),
           expect_number(j[5], ctx)};
  return b;
}

ordered_json box_json(const Box3& b) {
  return ordered_json::array(
      {b.min.x, b.min.y, b.min.z, b.max.x, b.max.y, b.max.z});
}

}  // namespace

Scene scene_from_json(const std::string& text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("scene: ") + e.what());
  }
  if (!j.is_object()) throw ParseError("scene: top level must be an object");

  Scene s;
  const ordered_json& ver = expect_field(j, "version", "scene");
  if (!ver.is_number_integer())
    throw ParseError("scene: version must be an integer");
  s.version = ver.get<int>();
  if (s.version != 1) throw ParseError("scene: unsupported version");

  s.name = expect_string(expect_field(j, "name", "scene"), "name");
  s.resolution =
      expect_number(expect_field(j, "resolution", "scene"), "resolution");

  for (const ordered_json& rj : expect_field(j, "rooms", "scene")) {
    Room r;
    r.id = expect_string(expect_field(rj, "id", "room"), "room id");
    r.type = expect_string(expect_field(rj, "type", "room " + r.id), "type");
    for (const ordered_json& v :
         expect_field(rj, "footprint", "room " + r.id))
      r.footprint.push_back(parse_vec2(v, "room " + r.id + " footprint"));
    for (const ordered_json& v : expect_field(rj, "carriers", "room " + r.id))
      r.carriers.push_back(expect_string(v, "room " + r.id + " carriers"));
    for (const ordered_json& v : expect_field(rj, "objects", "room " + r.id))
      r.objects.push_back(expect_string(v, "room " + r.id + " objects"));
    s.rooms.push_back(std::move(r));
  }

  for (const ordered_json& dj : expect_field(j, "doors", "scene")) {
    Door d;
    const ordered_json& rr = expect_field(dj, "rooms", "door");
    if (!rr.is_array() || rr.size() != 2)
      throw ParseError("scene: door rooms must name two rooms");
    d.rooms[0] = expect_string(rr[0], "door rooms");
    d.rooms[1] = expect_string(rr[1], "door rooms");
    d.position = parse_vec2(expect_field(dj, "position", "door"), "door position");
    s.doors.push_back(std::move(d));
  }

  for (const ordered_json& cj : expect_field(j, "carriers", "scene")) {
    Carrier c;
    c.id = expect_string(expect_field(cj, "id", "carrier"), "carrier id");
    c.label =
        expect_string(expect_field(cj, "label", "carrier " + c.id), "label");
    const ordered_json& pj = expect_field(cj, "pose", "carrier " + c.id);
    if (!pj.is_array() || pj.size() != 3)
      throw ParseError("scene: carrier " + c.id + " pose must be [x, y, yaw]");
    c.pose = {expect_number(pj[0], "pose"), expect_number(pj[1], "pose"),
              expect_number(pj[2], "pose")};
    const ordered_json& oj = expect_field(cj, "openable", "carrier " + c.id);
    if (!oj.is_boolean())
      throw ParseError("scene: carrier " + c.id + " openable must be boolean");
    c.openable = oj.get<bool>();
    c.z0 = expect_number(expect_field(cj, "z0", "carrier " + c.id), "z0");
    for (const ordered_json& bj : expect_field(cj, "boxes", "carrier " + c.id))
      c.boxes.push_back(parse_box(bj, "carrier " + c.id + " box"));
    if (cj.contains("interior"))
      c.interior = parse_box(cj["interior"], "carrier " + c.id + " interior");
    s.carriers.push_back(std::move(c));
  }

  for (const ordered_json& ij : expect_field(j, "items", "scene")) {
    Item it;
    it.label = expect_string(expect_field(ij, "label", "item"), "item label");
    it.placement.carrier = expect_string(
        expect_field(ij, "carrier", "item " + it.label), "item carrier");
    const std::string fname = expect_string(
        expect_field(ij, "feature", "item " + it.label), "item feature");
    const auto f = feature_from_string(fname);
    if (!f)
      throw ParseError("scene: item " + it.label + " has unknown feature '" +
                       fname + "'");
    it.placement.feature = *f;
    it.placement.offset = parse_vec3(
        expect_field(ij, "offset", "item " + it.label), "item offset");
    s.items.push_back(std::move(it));
  }

  finalize_scene(s);
  return s;
}

std::string scene_to_json(const Scene& s) {
  ordered_json j;
  j["version"] = s.version;
  j["name"] = s.name;
  j["resolution"] = s.resolution;
  j["rooms"] = ordered_json::array();
  for (const Room& r : s.rooms) {
    ordered_json rj;
    rj["id"] = r.id;
    rj["type"] = r.type;
    rj["footprint"] = ordered_json::array();
    for (const Vec2& v : r.footprint)
      rj["footprint"].push_back(ordered_json::array({v.x, v.y}));
    rj["carriers"] = r.carriers;
    rj["objects"] = r.objects;
    j["rooms"].push_back(std::move(rj));
  }
  j["doors"] = ordered_json::array();
  for (const Door& d : s.doors) {
    ordered_json dj;
    dj["rooms"] = ordered_json::array({d.rooms[0], d.rooms[1]});
    dj["position"] = ordered_json::array({d.position.x, d.position.y});
    j["doors"].push_back(std::move(dj));
  }
  j["carriers"] = ordered_json::array();
  for (const Carrier& c : s.carriers) {
    ordered_json cj;
    cj["id"] = c.id;
    cj["label"] = c.label;
    cj["pose"] = ordered_json::array({c.pose.x, c.pose.y, c.pose.yaw});
    cj["openable"] = c.openable;
    cj["z0"] = c.z0;
    cj["boxes"] = ordered_json::array();
    for (const Box3& b : c.boxes) cj["boxes"].push_back(box_json(b));
    if (c.interior) cj["interior"] = box_json(*c.interior);
    j["carriers"].push_back(std::move(cj));
  }
  j["items"] = ordered_json::array();
  for (const Item& it : s.items) {
    ordered_json ij;
    ij["label"] = it.label;
    ij["carrier"] = it.placement.carrier;
    ij["feature"] = to_string(it.placement.feature);
    ij["offset"] = ordered_json::array({it.placement.offset.x,
                                        it.placement.offset.y,
                                        it.placement.offset.z});
    j["items"].push_back(std::move(ij));
  }
  return j.dump(2) + "\n";
}

Scene load_scene(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("scene: cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  Scene s = scene_from_json(buf.str());
  const ValidationReport rep = validate_scene(s);
  if (!rep.ok()) throw ValidationError("scene " + path + ":\n" + rep.str());
  return s;
}

void save_scene(const Scene& s, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ArgumentError("scene: cannot write " + path);
  out << scene_to_json(s);
}

SceneGrid build_scene_grid(const Scene& s,
                           const std::unordered_set<std::string>& exclude) {
  SceneGrid sg;
  sg.grid.resolution = s.resolution;

  for (size_t i = 0; i < s.carriers.size(); ++i) {
    const Carrier& c = s.carriers[i];
    if (exclude.count(c.id)) continue;
    for (const Vec3& p : c.cloud) {
      const Cell3 cell = sg.grid.cell_of(p);
      if (sg.grid.occupied.insert(cell).second)
        sg.owner.emplace(cell, static_cast<int>(i));
    }
  }

  // Wall bands along room footprints, with door openings carved out.
  const double step = s.resolution * 0.5;
  for (const Room& r : s.rooms) {
    const size_t n = r.footprint.size();
    for (size_t i = 0; i < n; ++i) {
      const Vec2 a = r.footprint[i];
      const Vec2 b = r.footprint[(i + 1) % n];
      const double len = distance(a, b);
      const int steps = std::max(1, static_cast<int>(std::ceil(len / step)));
      for (int k = 0; k <= steps; ++k) {
        const double t = static_cast<double>(k) / steps;
        const Vec2 q = a + (b - a) * t;
        bool in_door = false;
        for (const Door& d : s.doors)
          if (distance(q, d.position) <= kDoorWidth * 0.5) {
            in_door = true;
            break;
          }
        if (in_door) continue;
        for (double z = step; z < kWallHeight; z += s.resolution) {
          const Cell3 cell = sg.grid.cell_of({q.x, q.y, z});
          if (sg.grid.occupied.insert(cell).second) sg.owner.emplace(cell, -1);
        }
      }
    }
  }
  return sg;
}

}  // namespace godhs
