#pragma once

#include <array>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

#include "godhs/geometry.hpp"
#include "godhs/math3.hpp"

namespace godhs {

/// Height of room walls in the occupancy grid.
inline constexpr double kWallHeight = 2.2;
/// Width of the opening carved into walls around a door position.
inline constexpr double kDoorWidth = 0.9;

struct Box3 {
  Vec3 min{};
  Vec3 max{};

  bool valid() const {
    return min.x <= max.x && min.y <= max.y && min.z <= max.z;
  }
  bool contains(const Vec3& p, double eps = 0.0) const {
    return p.x >= min.x - eps && p.x <= max.x + eps && p.y >= min.y - eps &&
           p.y <= max.y + eps && p.z >= min.z - eps && p.z <= max.z + eps;
  }
  Vec3 size() const { return max - min; }
  Vec3 center() const { return (min + max) * 0.5; }
};

struct Pose2 {
  double x = 0.0;
  double y = 0.0;
  double yaw = 0.0;
};

struct Placement {
  std::string carrier;
  Feature feature = Feature::kTop;
  Vec3 offset;  // carrier-local
};

struct Item {
  std::string label;
  Placement placement;
};

/// A furniture-scale object that can hold the target. Shape is a union of
/// carrier-local axis-aligned boxes; the world-frame sampled cloud is
/// derived on load.
struct Carrier {
  std::string id;
  std::string label;
  Pose2 pose;
  bool openable = false;
  double z0 = 0.0;  // height of the underside plane
  std::vector<Box3> boxes;
  std::optional<Box3> interior;  // carrier-local cavity annotation
  std::vector<Vec3> cloud;       // world frame, derived, not serialized
};

struct Door {
  std::array<std::string, 2> rooms;
  Vec2 position;
};

struct Room {
  std::string id;
  std::string type;
  std::vector<Vec2> footprint;  // simple polygon, world meters
  std::vector<std::string> carriers;
  std::vector<std::string> objects;  // observable context objects
};

struct Scene {
  int version = 1;
  std::string name;
  double resolution = 0.05;
  std::vector<Room> rooms;
  std::vector<Door> doors;
  std::vector<Carrier> carriers;
  std::vector<Item> items;

  const Carrier* find_carrier(const std::string& id) const;
  const Room* find_room(const std::string& id) const;
  const Room* room_of_carrier(const std::string& carrier_id) const;
  const Item* find_item(const std::string& label) const;
  int carrier_index(const std::string& id) const;  // -1 when absent
};

// Polygon helpers (vertices in order, implicitly closed).
bool point_in_polygon(const std::vector<Vec2>& poly, const Vec2& p);
bool polygon_simple(const std::vector<Vec2>& poly);
double polygon_area(const std::vector<Vec2>& poly);
Vec2 polygon_centroid(const std::vector<Vec2>& poly);

/// Applies the carrier pose (yaw about z, then translation) to a local point.
Vec3 carrier_to_world(const Carrier& c, const Vec3& local);

/// Samples the box union into a local-frame cloud with spacing <= res on
/// every axis (at least one sample per axis per box).
std::vector<Vec3> sample_boxes(const std::vector<Box3>& boxes, double res);

/// Derives every carrier's world cloud. Must run after parse/generation.
void finalize_scene(Scene& s);

/// World-frame bounding box of the carrier's derived cloud.
Box3 carrier_world_bounds(const Carrier& c);

Vec3 item_world_position(const Scene& s, const Item& it);

/// Features the carrier actually offers: top and sides always, bottom when
/// the underside plane is raised, inside when openable with a real cavity.
std::vector<Feature> exposed_features(const Scene& s, const Carrier& c);

/// Extracts the feature's point set from the carrier's world cloud.
FeatureMap carrier_feature_points(const Scene& s, const Carrier& c,
                                  Feature f);

struct ValidationReport {
  std::vector<std::string> violations;
  bool ok() const { return violations.empty(); }
  std::string str() const;
};

ValidationReport validate_scene(const Scene& s);

Scene scene_from_json(const std::string& text);
std::string scene_to_json(const Scene& s);  // canonical field order
Scene load_scene(const std::string& path);
void save_scene(const Scene& s, const std::string& path);

/// World occupancy with per-cell ownership: carrier index, or -1 for walls.
struct SceneGrid {
  VoxelGrid grid;
  std::unordered_map<Cell3, int, Cell3Hash> owner;
};

/// Builds the occupancy grid from carrier clouds and room wall bands, with
/// door openings carved out. Carriers in `exclude` are left out entirely.
SceneGrid build_scene_grid(const Scene& s,
                           const std::unordered_set<std::string>& exclude = {});

}  // namespace godhs
