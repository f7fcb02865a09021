#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "godhs/math3.hpp"

namespace godhs {

struct Cell3 {
  int x = 0;
  int y = 0;
  int z = 0;
  bool operator==(const Cell3&) const = default;
};

struct Cell2 {
  int x = 0;
  int y = 0;
  bool operator==(const Cell2&) const = default;
  bool operator<(const Cell2& o) const {
    return x != o.x ? x < o.x : y < o.y;
  }
};

struct Cell3Hash {
  size_t operator()(const Cell3& c) const {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (int v : {c.x, c.y, c.z}) {
      h ^= static_cast<uint64_t>(static_cast<uint32_t>(v));
      h *= 0x100000001b3ULL;
    }
    return static_cast<size_t>(h);
  }
};

struct Cell2Hash {
  size_t operator()(const Cell2& c) const {
    return Cell3Hash{}(Cell3{c.x, c.y, 0});
  }
};

using CellSet3 = std::unordered_set<Cell3, Cell3Hash>;
using CellSet2 = std::unordered_set<Cell2, Cell2Hash>;

/// Sparse occupancy grid over cubical cells. Cell (i,j,k) spans
/// [origin + i*res, origin + (i+1)*res) per axis (floor binning,
/// lower-inclusive).
struct VoxelGrid {
  Vec3 origin{};
  double resolution = 0.0;
  CellSet3 occupied;

  Cell3 cell_of(const Vec3& p) const {
    return {static_cast<int>(std::floor((p.x - origin.x) / resolution)),
            static_cast<int>(std::floor((p.y - origin.y) / resolution)),
            static_cast<int>(std::floor((p.z - origin.z) / resolution))};
  }
  Vec3 cell_center(const Cell3& c) const {
    return {origin.x + (c.x + 0.5) * resolution,
            origin.y + (c.y + 0.5) * resolution,
            origin.z + (c.z + 0.5) * resolution};
  }
  bool is_occupied(const Cell3& c) const { return occupied.count(c) > 0; }
};

/// 2D projection of a voxel grid onto the ground plane.
struct Footprint2D {
  Vec2 origin{};
  double resolution = 0.0;
  CellSet2 cells;

  Cell2 cell_of(const Vec2& p) const {
    return {static_cast<int>(std::floor((p.x - origin.x) / resolution)),
            static_cast<int>(std::floor((p.y - origin.y) / resolution))};
  }
  Vec2 cell_center(const Cell2& c) const {
    return {origin.x + (c.x + 0.5) * resolution,
            origin.y + (c.y + 0.5) * resolution};
  }
  /// Cells in deterministic (x, then y) order.
  std::vector<Cell2> sorted_cells() const;
};

enum class Feature { kTop, kBottom, kSides, kInside };

inline constexpr const char* kFeatureNames[] = {"top", "bottom", "sides",
                                                "inside"};
const char* to_string(Feature f);
std::optional<Feature> feature_from_string(const std::string& name);

/// Point set representing one spatial region of a carrier.
struct FeatureMap {
  Feature feature = Feature::kTop;
  std::vector<Vec3> points;
};

/// Bins a point cloud into an occupancy grid anchored at the world origin.
/// A cell is occupied iff at least one point falls in it.
VoxelGrid voxelize(const std::vector<Vec3>& cloud, double resolution);

/// Ground-plane projection of the occupied cells.
Footprint2D footprint_of(const VoxelGrid& grid);

/// Occupied cells with at least one unoccupied 4-neighbor.
Footprint2D footprint_boundary(const Footprint2D& fp);

/// One point per footprint cell at the column's maximum z; x,y at the cell
/// center.
FeatureMap extract_top(const std::vector<Vec3>& cloud, const Footprint2D& fp);

/// Vertical sample columns above each boundary cell: z from 0 to the
/// column max in resolution steps, both ends included.
FeatureMap extract_sides(const std::vector<Vec3>& cloud,
                         const Footprint2D& boundary);

/// One point per footprint cell on the horizontal plane z = z0.
FeatureMap extract_bottom(const Footprint2D& fp, double z0);

/// Enclosed-cavity detection: flood-fills empty cells of the occupied
/// bounding box from the exterior (6-connectivity); unreached empty cells
/// form the cavity. Empty map when no cavity exists.
FeatureMap extract_inside(const VoxelGrid& grid);

/// Arithmetic mean of the (x, y) coordinates.
Vec2 centroid(const std::vector<Vec3>& cloud);

/// True when an occupied voxel lies strictly between a and b (cells
/// containing the endpoints are ignored).
bool segment_blocked(const VoxelGrid& grid, const Vec3& a, const Vec3& b);

/// Per-column z maxima of a cloud, keyed by footprint cell.
std::unordered_map<Cell2, double, Cell2Hash> column_max_z(
    const std::vector<Vec3>& cloud, const Footprint2D& fp);

/// Per-column minimum z strictly above a floor height; used to find the
/// clearance under overhanging geometry. Missing key = no point above.
std::unordered_map<Cell2, double, Cell2Hash> column_min_z_above(
    const std::vector<Vec3>& cloud, const Footprint2D& fp, double z_floor);

}  // namespace godhs
