#include "godhs/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

#include "godhs/errors.hpp"

namespace godhs {

const char* to_string(Feature f) {
  return kFeatureNames[static_cast<int>(f)];
}

std::optional<Feature> feature_from_string(const std::string& name) {
  for (int i = 0; i < 4; ++i)
    if (name == kFeatureNames[i]) return static_cast<Feature>(i);
  return std::nullopt;
}

std::vector<Cell2> Footprint2D::sorted_cells() const {
  std::vector<Cell2> out(cells.begin(), cells.end());
  std::sort(out.begin(), out.end());
  return out;
}

VoxelGrid voxelize(const std::vector<Vec3>& cloud, double resolution) {
  if (cloud.empty()) throw ArgumentError("voxelize: empty cloud");
  if (!(resolution > 0.0))
    throw ArgumentError("voxelize: resolution must be positive");
  VoxelGrid grid;
  grid.resolution = resolution;
  for (const Vec3& p : cloud) grid.occupied.insert(grid.cell_of(p));
  return grid;
}

Footprint2D footprint_of(const VoxelGrid& grid) {
  Footprint2D fp;
  fp.origin = grid.origin.xy();
  fp.resolution = grid.resolution;
  for (const Cell3& c : grid.occupied) fp.cells.insert({c.x, c.y});
  return fp;
}

Footprint2D footprint_boundary(const Footprint2D& fp) {
  Footprint2D out;
  out.origin = fp.origin;
  out.resolution = fp.resolution;
  for (const Cell2& c : fp.cells) {
    const Cell2 n4[] = {{c.x + 1, c.y}, {c.x - 1, c.y}, {c.x, c.y + 1},
                        {c.x, c.y - 1}};
    for (const Cell2& n : n4) {
      if (!fp.cells.count(n)) {
        out.cells.insert(c);
        break;
      }
    }
  }
  return out;
}

std::unordered_map<Cell2, double, Cell2Hash> column_max_z(
    const std::vector<Vec3>& cloud, const Footprint2D& fp) {
  std::unordered_map<Cell2, double, Cell2Hash> zmax;
  for (const Vec3& p : cloud) {
    const Cell2 c = fp.cell_of(p.xy());
    auto [it, inserted] = zmax.try_emplace(c, p.z);
    if (!inserted && p.z > it->second) it->second = p.z;
  }
  return zmax;
}

std::unordered_map<Cell2, double, Cell2Hash> column_min_z_above(
    const std::vector<Vec3>& cloud, const Footprint2D& fp, double z_floor) {
  std::unordered_map<Cell2, double, Cell2Hash> zmin;
  for (const Vec3& p : cloud) {
    if (p.z <= z_floor) continue;
    const Cell2 c = fp.cell_of(p.xy());
    auto [it, inserted] = zmin.try_emplace(c, p.z);
    if (!inserted && p.z < it->second) it->second = p.z;
  }
  return zmin;
}

FeatureMap extract_top(const std::vector<Vec3>& cloud, const Footprint2D& fp) {
  const auto zmax = column_max_z(cloud, fp);
  FeatureMap fm;
  fm.feature = Feature::kTop;
  for (const Cell2& c : fp.sorted_cells()) {
    const auto it = zmax.find(c);
    if (it == zmax.end())
      throw std::logic_error("extract_top: footprint cell with no cloud point");
    const Vec2 ctr = fp.cell_center(c);
    fm.points.push_back({ctr.x, ctr.y, it->second});
  }
  return fm;
}

FeatureMap extract_sides(const std::vector<Vec3>& cloud,
                         const Footprint2D& boundary) {
  const auto zmax = column_max_z(cloud, boundary);
  FeatureMap fm;
  fm.feature = Feature::kSides;
  const double res = boundary.resolution;
  for (const Cell2& c : boundary.sorted_cells()) {
    const auto it = zmax.find(c);
    if (it == zmax.end())
      throw std::logic_error(
          "extract_sides: boundary cell with no cloud point");
    const double top = it->second;
    const Vec2 ctr = boundary.cell_center(c);
    const int n = static_cast<int>(std::floor(top / res + 1e-9));
    for (int i = 0; i <= n; ++i)
      fm.points.push_back({ctr.x, ctr.y, i * res});
    if (top - n * res > 1e-9) fm.points.push_back({ctr.x, ctr.y, top});
  }
  return fm;
}

FeatureMap extract_bottom(const Footprint2D& fp, double z0) {
  if (z0 < 0.0) throw ArgumentError("extract_bottom: negative z0");
  FeatureMap fm;
  fm.feature = Feature::kBottom;
  for (const Cell2& c : fp.sorted_cells()) {
    const Vec2 ctr = fp.cell_center(c);
    fm.points.push_back({ctr.x, ctr.y, z0});
  }
  return fm;
}

FeatureMap extract_inside(const VoxelGrid& grid) {
  FeatureMap fm;
  fm.feature = Feature::kInside;
  if (grid.occupied.empty()) return fm;

  Cell3 lo = *grid.occupied.begin(), hi = lo;
  for (const Cell3& c : grid.occupied) {
    lo.x = std::min(lo.x, c.x);
    lo.y = std::min(lo.y, c.y);
    lo.z = std::min(lo.z, c.z);
    hi.x = std::max(hi.x, c.x);
    hi.y = std::max(hi.y, c.y);
    hi.z = std::max(hi.z, c.z);
  }
  // Flood-fill the empty space of the box expanded by one cell, starting
  // outside; anything empty and unreached inside the original box is
  // enclosed.
  const Cell3 elo{lo.x - 1, lo.y - 1, lo.z - 1};
  const Cell3 ehi{hi.x + 1, hi.y + 1, hi.z + 1};
  CellSet3 reached;
  std::deque<Cell3> queue;
  queue.push_back(elo);
  reached.insert(elo);
  while (!queue.empty()) {
    const Cell3 c = queue.front();
    queue.pop_front();
    const Cell3 n6[] = {{c.x + 1, c.y, c.z}, {c.x - 1, c.y, c.z},
                        {c.x, c.y + 1, c.z}, {c.x, c.y - 1, c.z},
                        {c.x, c.y, c.z + 1}, {c.x, c.y, c.z - 1}};
    for (const Cell3& n : n6) {
      if (n.x < elo.x || n.y < elo.y || n.z < elo.z || n.x > ehi.x ||
          n.y > ehi.y || n.z > ehi.z)
        continue;
      if (grid.is_occupied(n) || reached.count(n)) continue;
      reached.insert(n);
      queue.push_back(n);
    }
  }
  std::vector<Cell3> cavity;
  for (int x = lo.x; x <= hi.x; ++x)
    for (int y = lo.y; y <= hi.y; ++y)
      for (int z = lo.z; z <= hi.z; ++z) {
        const Cell3 c{x, y, z};
        if (!grid.is_occupied(c) && !reached.count(c)) cavity.push_back(c);
      }
  for (const Cell3& c : cavity) fm.points.push_back(grid.cell_center(c));
  return fm;
}

Vec2 centroid(const std::vector<Vec3>& cloud) {
  if (cloud.empty()) throw ArgumentError("centroid: empty cloud");
  double sx = 0.0, sy = 0.0;
  for (const Vec3& p : cloud) {
    sx += p.x;
    sy += p.y;
  }
  const double n = static_cast<double>(cloud.size());
  return {sx / n, sy / n};
}

bool segment_blocked(const VoxelGrid& grid, const Vec3& a, const Vec3& b) {
  const Cell3 ca = grid.cell_of(a);
  const Cell3 cb = grid.cell_of(b);
  if (ca == cb) return false;

  // Amanatides-Woo traversal from a to b.
  const Vec3 d = b - a;
  const double res = grid.resolution;
  Cell3 cur = ca;
  int step[3];
  double t_max[3], t_delta[3];
  const double dd[3] = {d.x, d.y, d.z};
  const double aa[3] = {a.x - grid.origin.x, a.y - grid.origin.y,
                        a.z - grid.origin.z};
  const int cc[3] = {ca.x, ca.y, ca.z};
  for (int i = 0; i < 3; ++i) {
    if (dd[i] > 0.0) {
      step[i] = 1;
      t_max[i] = ((cc[i] + 1) * res - aa[i]) / dd[i];
      t_delta[i] = res / dd[i];
    } else if (dd[i] < 0.0) {
      step[i] = -1;
      t_max[i] = (cc[i] * res - aa[i]) / dd[i];
      t_delta[i] = -res / dd[i];
    } else {
      step[i] = 0;
      t_max[i] = std::numeric_limits<double>::infinity();
      t_delta[i] = std::numeric_limits<double>::infinity();
    }
  }
  int xyz[3] = {cur.x, cur.y, cur.z};
  while (true) {
    const int axis = (t_max[0] <= t_max[1] && t_max[0] <= t_max[2]) ? 0
                     : (t_max[1] <= t_max[2])                       ? 1
                                                                    : 2;
    if (t_max[axis] >= 1.0) return false;  // past b without hitting anything
    xyz[axis] += step[axis];
    t_max[axis] += t_delta[axis];
    const Cell3 c{xyz[0], xyz[1], xyz[2]};
    if (c == cb) return false;
    if (grid.is_occupied(c)) return true;
  }
}

}  // namespace godhs
