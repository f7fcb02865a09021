#include "godhs/pose_planner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "godhs/errors.hpp"
#include "godhs/rng.hpp"
#include "godhs/scene.hpp"

namespace godhs {

namespace {

constexpr double kMinCameraZ = 0.05;
constexpr double kDedupTol = 1e-6;
constexpr double kOrientWeight = 0.1;
constexpr int kIkRestarts = 4;
constexpr int kIkSeedPool = 128;

Vec3 mean3(const std::vector<Vec3>& pts) {
  Vec3 s;
  for (const Vec3& p : pts) s += p;
  return s * (1.0 / static_cast<double>(pts.size()));
}

double snap_angle(double a, double step) {
  return normalize_angle(std::round(a / step) * step);
}

bool near_duplicate(const EEPose& a, const EEPose& b) {
  return std::fabs(a.x - b.x) < kDedupTol && std::fabs(a.y - b.y) < kDedupTol &&
         std::fabs(a.z - b.z) < kDedupTol &&
         std::fabs(a.phi - b.phi) < kDedupTol &&
         std::fabs(a.theta - b.theta) < kDedupTol &&
         std::fabs(a.psi - b.psi) < kDedupTol;
}

}  // namespace

bool RobotModel::valid() const {
  if (chain.size() < 2) return false;
  if (!(reach_min < reach_max) || reach_min < 0.0) return false;
  if (!(chassis_radius >= 0.0)) return false;
  for (const Joint& j : chain) {
    if (j.axis.norm() < 1e-9) return false;
    if (!(j.q_min <= j.q_max)) return false;
  }
  return true;
}

RobotModel default_robot() {
  RobotModel r;
  r.mount = {0.0, 0.0, 0.3};
  // Yaw and roll axes are continuous; their limits span two turns so no
  // artificial wall sits inside the workspace.
  r.chain = {
      {{0.0, 0.0, 0.10}, {0.0, 0.0, 1.0}, -2.0 * kPi, 2.0 * kPi},
      {{0.0, 0.0, 0.05}, {0.0, 1.0, 0.0}, -2.2, 2.2},
      {{0.42, 0.0, 0.0}, {0.0, 1.0, 0.0}, -2.8, 2.8},
      {{0.40, 0.0, 0.0}, {1.0, 0.0, 0.0}, -2.0 * kPi, 2.0 * kPi},
      {{0.10, 0.0, 0.0}, {0.0, 1.0, 0.0}, -2.8, 2.8},
      {{0.05, 0.0, 0.0}, {1.0, 0.0, 0.0}, -2.0 * kPi, 2.0 * kPi},
  };
  r.tool = {0.08, 0.0, 0.0};
  r.reach_min = 0.1;
  r.reach_max = 0.8;
  r.chassis_radius = 0.25;
  return r;
}

Mat3 rotation_from_ypr(double psi, double theta, double phi) {
  return Mat3::rot_z(psi) * Mat3::rot_y(-theta) * Mat3::rot_x(phi);
}

void ypr_from_rotation(const Mat3& r, double& psi, double& theta,
                       double& phi) {
  const double sz = std::clamp(r.m[2][0], -1.0, 1.0);
  theta = std::asin(sz);
  if (std::fabs(sz) > 1.0 - 1e-9) {
    // View axis vertical: yaw and roll share one degree of freedom; put it
    // all in yaw.
    phi = 0.0;
    psi = std::atan2(-r.m[0][1], r.m[1][1]);
    return;
  }
  psi = std::atan2(r.m[1][0], r.m[0][0]);
  const Mat3 rest =
      (Mat3::rot_z(psi) * Mat3::rot_y(-theta)).transposed() * r;
  phi = std::atan2(rest.m[2][1], rest.m[1][1]);
}

Mat3 ee_rotation(const EEPose& ee) {
  return rotation_from_ypr(ee.psi, ee.theta, ee.phi);
}

bool cone_covers(const EEPose& ee, const CameraModel& cam, const Vec3& p) {
  const Vec3 d{p.x - ee.x, p.y - ee.y, p.z - ee.z};
  const double range = d.norm();
  if (range < cam.near || range > cam.far) return false;
  const Vec3 dc = ee_rotation(ee).transposed() * d;
  const double az = std::atan2(dc.y, dc.x);
  if (std::fabs(az) >= cam.fov_h * 0.5) return false;
  const double el = std::atan2(dc.z, dc.x);
  return std::fabs(el) < cam.fov_v * 0.5;
}

std::vector<EEPose> generate_ee_candidates(const FeatureMap& fm,
                                           const CameraModel& cam,
                                           double standoff,
                                           double angular_step,
                                           const VoxelGrid* grid,
                                           int point_cap) {
  if (fm.points.empty())
    throw ArgumentError("generate_ee_candidates: empty feature map");
  if (!cam.valid())
    throw ArgumentError("generate_ee_candidates: invalid camera");
  if (!(standoff > 0.0))
    throw ArgumentError("generate_ee_candidates: standoff must be positive");
  if (!(angular_step > 0.0))
    throw ArgumentError(
        "generate_ee_candidates: angular_step must be positive");
  if (point_cap < 1)
    throw ArgumentError("generate_ee_candidates: point_cap must be >= 1");

  const int n = static_cast<int>(fm.points.size());
  const int stride = (n + point_cap - 1) / point_cap;
  const Vec3 c = mean3(fm.points);

  std::vector<EEPose> out;
  for (int i = 0; i < n; i += stride) {
    const Vec3& p = fm.points[static_cast<size_t>(i)];
    EEPose e;
    if (fm.feature == Feature::kTop) {
      e.x = p.x;
      e.y = p.y;
      e.z = p.z + standoff;
      e.theta = -kPi / 2.0;
    } else if (fm.feature == Feature::kBottom) {
      e.x = p.x;
      e.y = p.y;
      e.z = std::max(kMinCameraZ, p.z - standoff);
      e.theta = kPi / 2.0;
    } else {
      Vec3 dir = c - p;
      if (dir.norm() < 1e-9) dir = {1.0, 0.0, 0.0};
      dir = dir.normalized();
      const double yaw = snap_angle(std::atan2(dir.y, dir.x), angular_step);
      double pitch =
          snap_angle(std::asin(std::clamp(dir.z, -1.0, 1.0)), angular_step);
      // A centroid far above a low point would put the camera underground;
      // such views flatten to a level look at the point's own height.
      if (p.z - standoff * std::sin(pitch) < kMinCameraZ) pitch = 0.0;
      const Vec3 view{std::cos(pitch) * std::cos(yaw),
                      std::cos(pitch) * std::sin(yaw), std::sin(pitch)};
      e.x = p.x - standoff * view.x;
      e.y = p.y - standoff * view.y;
      e.z = std::max(kMinCameraZ, p.z - standoff * view.z);
      e.psi = yaw;
      e.theta = pitch;
    }
    if (grid && grid->is_occupied(grid->cell_of({e.x, e.y, e.z}))) continue;
    bool dup = false;
    for (const EEPose& k : out) {
      if (near_duplicate(e, k)) {
        dup = true;
        break;
      }
    }
    if (!dup) out.push_back(e);
  }
  return out;
}

std::vector<int> coverage_set(const EEPose& ee, const CameraModel& cam,
                              const FeatureMap& fm, const VoxelGrid& grid) {
  if (!cam.valid()) throw ArgumentError("coverage_set: invalid camera");
  const Vec3 cpos{ee.x, ee.y, ee.z};
  std::vector<int> out;
  for (size_t i = 0; i < fm.points.size(); ++i) {
    const Vec3& p = fm.points[i];
    if (!cone_covers(ee, cam, p)) continue;
    if (segment_blocked(grid, cpos, p)) continue;
    out.push_back(static_cast<int>(i));
  }
  return out;
}

CoverPick greedy_cover(const std::vector<std::vector<int>>& sets,
                       int universe, double target) {
  if (!(target > 0.0) || target > 1.0)
    throw ArgumentError("greedy_cover: target must be in (0, 1]");
  if (universe < 0) throw ArgumentError("greedy_cover: negative universe");

  CoverPick r;
  if (universe == 0) {
    r.coverage = 1.0;
    return r;
  }
  std::vector<char> covered(static_cast<size_t>(universe), 0);
  std::vector<char> used(sets.size(), 0);
  int ncov = 0;
  while (static_cast<double>(ncov) / universe < target - 1e-12) {
    int best = -1;
    int best_gain = 0;
    for (size_t i = 0; i < sets.size(); ++i) {
      if (used[i]) continue;
      int gain = 0;
      for (int e : sets[i]) {
        if (e >= 0 && e < universe && !covered[static_cast<size_t>(e)])
          ++gain;
      }
      if (gain > best_gain) {
        best_gain = gain;
        best = static_cast<int>(i);
      }
    }
    if (best < 0) {
      r.saturated = true;
      break;
    }
    used[static_cast<size_t>(best)] = 1;
    for (int e : sets[static_cast<size_t>(best)]) {
      if (e >= 0 && e < universe && !covered[static_cast<size_t>(e)]) {
        covered[static_cast<size_t>(e)] = 1;
        ++ncov;
      }
    }
    r.picked.push_back(best);
  }
  r.coverage = static_cast<double>(ncov) / universe;
  return r;
}

EESelection greedy_select_ee(const std::vector<EEPose>& candidates,
                             const CameraModel& cam, const FeatureMap& fm,
                             const VoxelGrid& grid, double coverage_target) {
  std::vector<std::vector<int>> sets;
  sets.reserve(candidates.size());
  for (const EEPose& e : candidates)
    sets.push_back(coverage_set(e, cam, fm, grid));

  const CoverPick pick =
      greedy_cover(sets, static_cast<int>(fm.points.size()), coverage_target);

  EESelection sel;
  sel.picked = pick.picked;
  sel.coverage = pick.coverage;
  sel.saturated = pick.saturated;
  std::vector<char> covered(fm.points.size(), 0);
  for (int i : pick.picked) {
    sel.poses.push_back(candidates[static_cast<size_t>(i)]);
    for (int e : sets[static_cast<size_t>(i)]) covered[static_cast<size_t>(e)] = 1;
  }
  for (size_t i = 0; i < covered.size(); ++i)
    if (covered[i]) sel.covered.push_back(static_cast<int>(i));
  return sel;
}

std::vector<ChassisPose> generate_ch_candidates(
    const Footprint2D& carrier, const std::vector<Vec2>& room_polygon,
    const Footprint2D& occupied, const RobotModel& robot, double radial_step,
    double angular_step) {
  if (carrier.cells.empty())
    throw ArgumentError("generate_ch_candidates: empty carrier footprint");
  if (!robot.valid())
    throw ArgumentError("generate_ch_candidates: invalid robot");
  if (!(radial_step > 0.0) || !(angular_step > 0.0))
    throw ArgumentError("generate_ch_candidates: steps must be positive");

  Vec2 c{0.0, 0.0};
  const std::vector<Cell2> cells = carrier.sorted_cells();
  for (const Cell2& cell : cells) {
    const Vec2 p = carrier.cell_center(cell);
    c.x += p.x;
    c.y += p.y;
  }
  c.x /= static_cast<double>(cells.size());
  c.y /= static_cast<double>(cells.size());

  const std::vector<Cell2> occ = occupied.sorted_cells();
  const double rr = robot.chassis_radius * robot.chassis_radius;
  const double r0 = std::max(robot.reach_min, robot.chassis_radius);

  // Rings span from hugging the carrier out to arm's length past its
  // farthest footprint cell, so standoff poses beyond the face stay in
  // front of the chassis.
  double fp_radius = 0.0;
  for (const Cell2& cell : cells) {
    const Vec2 p = carrier.cell_center(cell);
    const double dx = p.x - c.x, dy = p.y - c.y;
    fp_radius = std::max(fp_radius, std::sqrt(dx * dx + dy * dy));
  }
  const double r1 = robot.reach_max + fp_radius;

  std::vector<ChassisPose> out;
  for (double r = r0; r <= r1 + 1e-12; r += radial_step) {
    for (double a = 0.0; a < 2.0 * kPi - 1e-9; a += angular_step) {
      const Vec2 pos{c.x + r * std::cos(a), c.y + r * std::sin(a)};
      if (!point_in_polygon(room_polygon, pos)) continue;
      bool collides = false;
      for (const Cell2& cell : occ) {
        const Vec2 q = occupied.cell_center(cell);
        const double dx = q.x - pos.x, dy = q.y - pos.y;
        if (dx * dx + dy * dy <= rr) {
          collides = true;
          break;
        }
      }
      if (collides) continue;
      out.push_back({pos.x, pos.y, normalize_angle(a + kPi)});
    }
  }
  return out;
}

bool reachable_fast(const ChassisPose& ch, const EEPose& ee,
                    const RobotModel& robot, const VoxelGrid& grid) {
  const Vec3 mount =
      Vec3{ch.x, ch.y, 0.0} + Mat3::rot_z(ch.theta) * robot.mount;
  const Vec3 target{ee.x, ee.y, ee.z};
  const double d = distance(mount, target);
  if (d < robot.reach_min || d > robot.reach_max) return false;
  return !segment_blocked(grid, mount, target);
}

CHSelection greedy_select_ch(const std::vector<ChassisPose>& candidates,
                             const std::vector<EEPose>& ee_poses,
                             const RobotModel& robot, const VoxelGrid& grid) {
  if (ee_poses.empty())
    throw ArgumentError("greedy_select_ch: no end-effector poses");

  std::vector<std::vector<int>> sets;
  sets.reserve(candidates.size());
  for (const ChassisPose& ch : candidates) {
    std::vector<int> s;
    for (size_t j = 0; j < ee_poses.size(); ++j)
      if (reachable_fast(ch, ee_poses[j], robot, grid))
        s.push_back(static_cast<int>(j));
    sets.push_back(std::move(s));
  }

  const CoverPick pick =
      greedy_cover(sets, static_cast<int>(ee_poses.size()), 1.0);

  CHSelection sel;
  sel.picked = pick.picked;
  std::vector<char> covered(ee_poses.size(), 0);
  for (int i : pick.picked) {
    sel.poses.push_back(candidates[static_cast<size_t>(i)]);
    for (int e : sets[static_cast<size_t>(i)]) covered[static_cast<size_t>(e)] = 1;
  }
  for (size_t j = 0; j < covered.size(); ++j)
    if (!covered[j]) sel.uncovered.push_back(static_cast<int>(j));
  return sel;
}

FkResult forward_kinematics(const ChassisPose& ch, const RobotModel& robot,
                            const std::vector<double>& q) {
  if (!robot.valid()) throw ArgumentError("forward_kinematics: invalid robot");
  if (q.size() != robot.chain.size())
    throw ArgumentError("forward_kinematics: joint vector size mismatch");

  FkResult fk;
  fk.rot = Mat3::rot_z(ch.theta);
  fk.pos = Vec3{ch.x, ch.y, 0.0} + fk.rot * robot.mount;
  for (size_t i = 0; i < robot.chain.size(); ++i) {
    const Joint& j = robot.chain[i];
    fk.pos += fk.rot * j.offset;
    const Vec3 axis = j.axis.normalized();
    fk.joint_pos.push_back(fk.pos);
    fk.joint_axis.push_back(fk.rot * axis);
    fk.rot = fk.rot * Mat3::axis_angle(axis, q[i]);
  }
  fk.pos += fk.rot * robot.tool;
  return fk;
}

namespace {

struct IkErr {
  double pos;
  double rot;
  // Least-squares objective the damped step actually descends.
  double total() const {
    return pos * pos + kOrientWeight * kOrientWeight * rot * rot;
  }
};

IkErr ik_error(const FkResult& fk, const Vec3& pt, const Mat3& rt,
               Vec3& ep, Vec3& er) {
  ep = pt - fk.pos;
  er = (rt * fk.rot.transposed()).log();
  return {ep.norm(), er.norm()};
}

}  // namespace

IKResult solve_ik(const ChassisPose& ch, const EEPose& ee,
                  const RobotModel& robot, double tol, int max_iters,
                  double tol_rot) {
  if (!robot.valid()) throw ArgumentError("solve_ik: invalid robot");
  if (!(tol > 0.0) || !(tol_rot > 0.0))
    throw ArgumentError("solve_ik: tolerances must be positive");
  if (max_iters < 1) throw ArgumentError("solve_ik: max_iters must be >= 1");

  const int n = static_cast<int>(robot.chain.size());
  const Vec3 pt{ee.x, ee.y, ee.z};
  const Mat3 rt = ee_rotation(ee);

  const auto clamp_q = [&](std::vector<double>& q) {
    for (int i = 0; i < n; ++i)
      q[static_cast<size_t>(i)] =
          std::clamp(q[static_cast<size_t>(i)], robot.chain[static_cast<size_t>(i)].q_min,
                     robot.chain[static_cast<size_t>(i)].q_max);
  };

  IKResult best;
  best.pos_err = std::numeric_limits<double>::infinity();
  best.rot_err = std::numeric_limits<double>::infinity();
  int total_iters = 0;

  // Restart list: all-zeros first, then the lowest-initial-error members
  // of a deterministic seeded sample pool.
  std::vector<std::vector<double>> starts;
  starts.emplace_back(static_cast<size_t>(n), 0.0);
  {
    struct Seed {
      double err;
      std::vector<double> q;
    };
    std::vector<Seed> pool;
    pool.reserve(kIkSeedPool);
    for (int s = 1; s <= kIkSeedPool; ++s) {
      Rng rng(Rng::derive(0x706f7365ULL, static_cast<uint64_t>(s)));
      std::vector<double> q(static_cast<size_t>(n));
      for (int i = 0; i < n; ++i)
        q[static_cast<size_t>(i)] =
            rng.uniform(robot.chain[static_cast<size_t>(i)].q_min,
                        robot.chain[static_cast<size_t>(i)].q_max);
      const FkResult fk = forward_kinematics(ch, robot, q);
      Vec3 ep, er;
      pool.push_back({ik_error(fk, pt, rt, ep, er).total(), std::move(q)});
    }
    std::stable_sort(pool.begin(), pool.end(),
                     [](const Seed& a, const Seed& b) { return a.err < b.err; });
    for (int k = 0; k < kIkRestarts && k < static_cast<int>(pool.size()); ++k)
      starts.push_back(std::move(pool[static_cast<size_t>(k)].q));
  }

  for (size_t attempt = 0; attempt < starts.size(); ++attempt) {
    std::vector<double> q = starts[attempt];
    clamp_q(q);

    double lambda = 1e-3;
    FkResult fk = forward_kinematics(ch, robot, q);
    Vec3 ep, er;
    IkErr err = ik_error(fk, pt, rt, ep, er);

    for (int it = 0; it < max_iters; ++it) {
      if (err.pos < tol && err.rot < tol_rot) {
        IKResult r;
        r.success = true;
        r.q = q;
        r.pos_err = err.pos;
        r.rot_err = err.rot;
        r.iters = total_iters;
        r.restarts = static_cast<int>(attempt);
        return r;
      }
      ++total_iters;

      // Geometric Jacobian, orientation rows scaled by the error weight.
      std::vector<std::array<double, 6>> jt(static_cast<size_t>(n));
      for (int i = 0; i < n; ++i) {
        const Vec3& a = fk.joint_axis[static_cast<size_t>(i)];
        const Vec3 lin = a.cross(fk.pos - fk.joint_pos[static_cast<size_t>(i)]);
        jt[static_cast<size_t>(i)] = {lin.x, lin.y, lin.z,
                                      kOrientWeight * a.x,
                                      kOrientWeight * a.y,
                                      kOrientWeight * a.z};
      }
      const std::array<double, 6> e6 = {ep.x, ep.y, ep.z,
                                        kOrientWeight * er.x,
                                        kOrientWeight * er.y,
                                        kOrientWeight * er.z};

      // dq = J^T (J J^T + lambda I)^-1 e, joints pinned at a limit with an
      // outward step frozen out so the remaining joints absorb the motion.
      std::vector<char> frozen(static_cast<size_t>(n), 0);
      std::vector<double> dq(static_cast<size_t>(n), 0.0);
      bool solved = false;
      for (int round = 0; round < 3; ++round) {
        double a66[36];
        double b6[6];
        double y6[6];
        for (int r = 0; r < 6; ++r) {
          for (int cidx = 0; cidx < 6; ++cidx) {
            double s = 0.0;
            for (int k = 0; k < n; ++k) {
              if (frozen[static_cast<size_t>(k)]) continue;
              s += jt[static_cast<size_t>(k)][static_cast<size_t>(r)] *
                   jt[static_cast<size_t>(k)][static_cast<size_t>(cidx)];
            }
            a66[r * 6 + cidx] = s + (r == cidx ? lambda : 0.0);
          }
          b6[r] = e6[static_cast<size_t>(r)];
        }
        if (!solve_dense(6, a66, b6, y6)) break;
        solved = true;
        bool newly_frozen = false;
        for (int i = 0; i < n; ++i) {
          if (frozen[static_cast<size_t>(i)]) {
            dq[static_cast<size_t>(i)] = 0.0;
            continue;
          }
          double s = 0.0;
          for (int r = 0; r < 6; ++r)
            s += jt[static_cast<size_t>(i)][static_cast<size_t>(r)] * y6[r];
          dq[static_cast<size_t>(i)] = s;
          const Joint& jnt = robot.chain[static_cast<size_t>(i)];
          const bool at_lo = q[static_cast<size_t>(i)] <= jnt.q_min + 1e-12;
          const bool at_hi = q[static_cast<size_t>(i)] >= jnt.q_max - 1e-12;
          if ((at_lo && s < 0.0) || (at_hi && s > 0.0)) {
            frozen[static_cast<size_t>(i)] = 1;
            newly_frozen = true;
          }
        }
        if (!newly_frozen) break;
      }
      if (!solved) {
        lambda = std::min(lambda * 2.0, 1e8);
        continue;
      }

      std::vector<double> qn = q;
      for (int i = 0; i < n; ++i)
        qn[static_cast<size_t>(i)] += dq[static_cast<size_t>(i)];
      clamp_q(qn);

      const FkResult fkn = forward_kinematics(ch, robot, qn);
      Vec3 epn, ern;
      const IkErr errn = ik_error(fkn, pt, rt, epn, ern);
      if (errn.total() < err.total()) {
        q = qn;
        fk = fkn;
        ep = epn;
        er = ern;
        err = errn;
        lambda = std::max(lambda * 0.5, 1e-9);
      } else {
        // Raising the damping shrinks the step toward plain gradient
        // descent; only an accepted step consumes an iteration.
        lambda *= 2.0;
        --it;
        --total_iters;
        if (lambda > 1e8) break;
      }
    }

    if (err.pos < tol && err.rot < tol_rot) {
      IKResult r;
      r.success = true;
      r.q = q;
      r.pos_err = err.pos;
      r.rot_err = err.rot;
      r.iters = total_iters;
      r.restarts = static_cast<int>(attempt);
      return r;
    }
    if (err.total() < best.pos_err + kOrientWeight * best.rot_err) {
      best.q = q;
      best.pos_err = err.pos;
      best.rot_err = err.rot;
      best.restarts = static_cast<int>(attempt);
    }
  }
  best.iters = total_iters;
  return best;
}

PosePlan build_pose_plan(const std::vector<ChassisPose>& ch_poses,
                         const std::vector<EEPose>& ee_poses,
                         const RobotModel& robot, const VoxelGrid& grid,
                         double ik_tol, int ik_max_iters) {
  PosePlan plan;
  std::vector<PosePlan::Block> blocks(ch_poses.size());
  for (size_t k = 0; k < ch_poses.size(); ++k) blocks[k].chassis = ch_poses[k];

  for (size_t j = 0; j < ee_poses.size(); ++j) {
    bool assigned = false;
    for (size_t k = 0; k < ch_poses.size(); ++k) {
      if (!reachable_fast(ch_poses[k], ee_poses[j], robot, grid)) continue;
      const IKResult ik =
          solve_ik(ch_poses[k], ee_poses[j], robot, ik_tol, ik_max_iters);
      if (!ik.success) continue;
      blocks[k].ee.push_back(ee_poses[j]);
      blocks[k].joints.push_back(ik.q);
      assigned = true;
      break;
    }
    if (!assigned) plan.dropped.push_back(static_cast<int>(j));
  }

  for (PosePlan::Block& b : blocks)
    if (!b.ee.empty()) plan.blocks.push_back(std::move(b));
  return plan;
}

std::vector<EEPose> sort_ee_lexicographic(std::vector<EEPose> poses) {
  std::stable_sort(poses.begin(), poses.end(),
                   [](const EEPose& a, const EEPose& b) {
                     return std::tie(a.z, a.y, a.x, a.psi, a.theta, a.phi) <
                            std::tie(b.z, b.y, b.x, b.psi, b.theta, b.phi);
                   });
  return poses;
}

std::vector<ChassisPose> sort_ch_polar(std::vector<ChassisPose> poses,
                                       const Vec2& centroid,
                                       const ChassisPose& start_hint,
                                       bool* degenerate) {
  if (poses.empty()) throw ArgumentError("sort_ch_polar: no poses");

  struct Entry {
    ChassisPose p;
    double rho;
    double rad;
  };
  std::vector<Entry> regular;
  std::vector<ChassisPose> coincident;
  for (const ChassisPose& p : poses) {
    const double dx = p.x - centroid.x;
    const double dy = p.y - centroid.y;
    const double rad = std::sqrt(dx * dx + dy * dy);
    if (rad < 1e-9) {
      coincident.push_back(p);
    } else {
      regular.push_back({p, std::atan2(dy, dx), rad});
    }
  }
  std::stable_sort(regular.begin(), regular.end(),
                   [](const Entry& a, const Entry& b) {
                     if (a.rho != b.rho) return a.rho > b.rho;
                     return a.rad < b.rad;
                   });

  if (!regular.empty()) {
    size_t first = 0;
    double bd = std::numeric_limits<double>::infinity();
    for (size_t i = 0; i < regular.size(); ++i) {
      const double dx = regular[i].p.x - start_hint.x;
      const double dy = regular[i].p.y - start_hint.y;
      const double d = dx * dx + dy * dy;
      if (d < bd) {
        bd = d;
        first = i;
      }
    }
    std::rotate(regular.begin(), regular.begin() + static_cast<long>(first),
                regular.end());
  }

  std::vector<ChassisPose> out;
  out.reserve(poses.size());
  for (const Entry& e : regular) out.push_back(e.p);
  for (const ChassisPose& p : coincident) out.push_back(p);
  if (degenerate) *degenerate = !coincident.empty();
  return out;
}

namespace {

double plan_num(const nlohmann::json& j, const char* ctx) {
  if (!j.is_number())
    throw ParseError(std::string("pose plan: ") + ctx + " must be a number");
  return j.get<double>();
}

const nlohmann::json& plan_field(const nlohmann::json& j, const char* key) {
  const auto it = j.find(key);
  if (it == j.end())
    throw ParseError(std::string("pose plan: missing field '") + key + "'");
  return *it;
}

}  // namespace

nlohmann::ordered_json pose_plan_to_json(const PosePlan& plan) {
  nlohmann::ordered_json j;
  j["carrier"] = plan.carrier_id;
  j["feature"] = plan.feature;
  j["blocks"] = nlohmann::ordered_json::array();
  for (const PosePlan::Block& b : plan.blocks) {
    nlohmann::ordered_json jb;
    jb["chassis"] = {{"x", b.chassis.x},
                     {"y", b.chassis.y},
                     {"theta", b.chassis.theta}};
    jb["ee"] = nlohmann::ordered_json::array();
    for (const EEPose& e : b.ee) {
      jb["ee"].push_back({{"x", e.x},
                          {"y", e.y},
                          {"z", e.z},
                          {"phi", e.phi},
                          {"theta", e.theta},
                          {"psi", e.psi}});
    }
    jb["joints"] = b.joints;
    j["blocks"].push_back(std::move(jb));
  }
  j["dropped"] = plan.dropped;
  return j;
}

PosePlan pose_plan_from_json(const nlohmann::json& j) {
  if (!j.is_object())
    throw ParseError("pose plan: top level must be an object");
  PosePlan plan;
  plan.carrier_id = plan_field(j, "carrier").get<std::string>();
  plan.feature = plan_field(j, "feature").get<std::string>();
  const nlohmann::json& jblocks = plan_field(j, "blocks");
  if (!jblocks.is_array())
    throw ParseError("pose plan: blocks must be an array");
  for (const nlohmann::json& jb : jblocks) {
    PosePlan::Block b;
    const nlohmann::json& jc = plan_field(jb, "chassis");
    b.chassis.x = plan_num(plan_field(jc, "x"), "chassis.x");
    b.chassis.y = plan_num(plan_field(jc, "y"), "chassis.y");
    b.chassis.theta = plan_num(plan_field(jc, "theta"), "chassis.theta");
    const nlohmann::json& je = plan_field(jb, "ee");
    if (!je.is_array() || je.empty())
      throw ParseError("pose plan: block ee list must be a non-empty array");
    for (const nlohmann::json& jp : je) {
      EEPose e;
      e.x = plan_num(plan_field(jp, "x"), "ee.x");
      e.y = plan_num(plan_field(jp, "y"), "ee.y");
      e.z = plan_num(plan_field(jp, "z"), "ee.z");
      e.phi = plan_num(plan_field(jp, "phi"), "ee.phi");
      e.theta = plan_num(plan_field(jp, "theta"), "ee.theta");
      e.psi = plan_num(plan_field(jp, "psi"), "ee.psi");
      b.ee.push_back(e);
    }
    if (jb.contains("joints")) {
      const nlohmann::json& jq = jb["joints"];
      if (!jq.is_array())
        throw ParseError("pose plan: joints must be an array");
      for (const nlohmann::json& row : jq) {
        std::vector<double> qs;
        for (const nlohmann::json& v : row) qs.push_back(plan_num(v, "joint"));
        b.joints.push_back(std::move(qs));
      }
      if (!b.joints.empty() && b.joints.size() != b.ee.size())
        throw ParseError("pose plan: joints must parallel the ee list");
    }
    plan.blocks.push_back(std::move(b));
  }
  if (j.contains("dropped")) {
    for (const nlohmann::json& v : j["dropped"])
      plan.dropped.push_back(static_cast<int>(plan_num(v, "dropped index")));
  }
  return plan;
}

}  // namespace godhs
