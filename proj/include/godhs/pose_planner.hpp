#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "godhs/geometry.hpp"
#include "godhs/math3.hpp"

namespace godhs {

struct ChassisPose {
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;  // yaw in (-pi, pi]
};

/// Camera-bearing end-effector pose. Orientation is yaw (psi) about world z,
/// then pitch (theta, positive looks up), then roll (phi) about the view
/// axis; the view axis at zero angles is +x.
struct EEPose {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  double phi = 0.0;
  double theta = 0.0;
  double psi = 0.0;
};

struct CameraModel {
  double fov_h = kPi / 2.0;
  double fov_v = kPi / 3.0;
  double near = 0.05;
  double far = 3.0;

  bool valid() const {
    return fov_h > 0.0 && fov_h < kPi && fov_v > 0.0 && fov_v < kPi &&
           near >= 0.0 && near < far;
  }
};

/// One revolute joint: fixed translation from the previous frame, then a
/// rotation about `axis` by the joint variable.
struct Joint {
  Vec3 offset{};
  Vec3 axis{0.0, 0.0, 1.0};
  double q_min = -kPi;
  double q_max = kPi;
};

struct RobotModel {
  Vec3 mount{0.0, 0.0, 0.3};  // arm base in the chassis frame
  std::vector<Joint> chain;
  Vec3 tool{};  // fixed offset after the last joint
  double reach_min = 0.1;
  double reach_max = 0.8;
  double chassis_radius = 0.25;

  bool valid() const;
};

/// Six-joint arm (z-y-y positioning, x-y-x wrist) used by all defaults.
RobotModel default_robot();

Mat3 rotation_from_ypr(double psi, double theta, double phi);
void ypr_from_rotation(const Mat3& r, double& psi, double& theta, double& phi);
Mat3 ee_rotation(const EEPose& ee);

/// True when p lies inside the camera's view cone: both frame angles
/// strictly inside half the field of view and range within [near, far].
bool cone_covers(const EEPose& ee, const CameraModel& cam, const Vec3& p);

/// Deterministic viewing candidates for a feature map: top/bottom get a
/// straight vertical view per point, sides/inside views point along the
/// cell-to-centroid direction snapped to angular_step. Candidates landing
/// in occupied cells of `grid` (when given) are discarded; near-identical
/// poses (1e-6 on every field) are deduplicated.
std::vector<EEPose> generate_ee_candidates(const FeatureMap& fm,
                                           const CameraModel& cam,
                                           double standoff,
                                           double angular_step,
                                           const VoxelGrid* grid = nullptr,
                                           int point_cap = 256);

/// Indices of feature points the camera covers with an unobstructed
/// straight line of sight through the grid.
std::vector<int> coverage_set(const EEPose& ee, const CameraModel& cam,
                              const FeatureMap& fm, const VoxelGrid& grid);

struct CoverPick {
  std::vector<int> picked;   // set indices in selection order
  double coverage = 0.0;     // fraction of the universe covered
  bool saturated = false;    // stopped below target with no gain available
};

/// Greedy set cover over integer universes; ties go to the lowest set
/// index. Stops at `target` coverage or when no set adds anything.
CoverPick greedy_cover(const std::vector<std::vector<int>>& sets,
                       int universe, double target);

struct EESelection {
  std::vector<EEPose> poses;
  std::vector<int> picked;
  std::vector<int> covered;  // sorted point indices
  double coverage = 0.0;
  bool saturated = false;
};

EESelection greedy_select_ee(const std::vector<EEPose>& candidates,
                             const CameraModel& cam, const FeatureMap& fm,
                             const VoxelGrid& grid, double coverage_target);

/// Collision-free ring samples around a carrier footprint, facing its
/// centroid. A pose collides when any occupied cell center lies within
/// chassis_radius of it or its center leaves the room polygon.
std::vector<ChassisPose> generate_ch_candidates(
    const Footprint2D& carrier, const std::vector<Vec2>& room_polygon,
    const Footprint2D& occupied, const RobotModel& robot, double radial_step,
    double angular_step);

/// Geometric reachability screen: mount-to-camera distance within the reach
/// band and the straight segment between them unobstructed.
bool reachable_fast(const ChassisPose& ch, const EEPose& ee,
                    const RobotModel& robot, const VoxelGrid& grid);

struct CHSelection {
  std::vector<ChassisPose> poses;
  std::vector<int> picked;
  std::vector<int> uncovered;  // ee indices no candidate reaches
};

CHSelection greedy_select_ch(const std::vector<ChassisPose>& candidates,
                             const std::vector<EEPose>& ee_poses,
                             const RobotModel& robot, const VoxelGrid& grid);

struct FkResult {
  Vec3 pos;
  Mat3 rot;
  std::vector<Vec3> joint_pos;   // world joint origins
  std::vector<Vec3> joint_axis;  // world joint axes
};

FkResult forward_kinematics(const ChassisPose& ch, const RobotModel& robot,
                            const std::vector<double>& q);

struct IKResult {
  bool success = false;
  std::vector<double> q;
  double pos_err = 0.0;
  double rot_err = 0.0;
  int iters = 0;     // iterations spent across attempts
  int restarts = 0;  // restarts consumed (0 = all-zeros start sufficed)
};

/// Damped least-squares inverse kinematics with adaptive damping and
/// seeded restarts. Joint values stay clamped to their limits throughout,
/// so a success never violates them. Non-convergence is a failure result,
/// not an exception.
IKResult solve_ik(const ChassisPose& ch, const EEPose& ee,
                  const RobotModel& robot, double tol = 1e-3,
                  int max_iters = 200, double tol_rot = 1e-2);

struct PosePlan {
  struct Block {
    ChassisPose chassis;
    std::vector<EEPose> ee;
    std::vector<std::vector<double>> joints;  // parallel to ee
  };
  std::string carrier_id;
  std::string feature;
  std::vector<Block> blocks;
  std::vector<int> dropped;  // ee indices with no valid chassis pose

  bool empty() const { return blocks.empty(); }
};

/// Assigns each end-effector pose to the first chassis pose (in selection
/// order) that passes both the reachability screen and inverse kinematics;
/// unassignable poses are reported in `dropped`.
PosePlan build_pose_plan(const std::vector<ChassisPose>& ch_poses,
                         const std::vector<EEPose>& ee_poses,
                         const RobotModel& robot, const VoxelGrid& grid,
                         double ik_tol = 1e-3, int ik_max_iters = 200);

/// Stable ascending sort by (z, y, x, psi, theta, phi).
std::vector<EEPose> sort_ee_lexicographic(std::vector<EEPose> poses);

/// Clockwise order around the centroid: strictly descending polar angle,
/// ties by ascending radius, cyclically rotated so the pose nearest
/// start_hint comes first. Poses coincident with the centroid go last and
/// set *degenerate.
std::vector<ChassisPose> sort_ch_polar(std::vector<ChassisPose> poses,
                                       const Vec2& centroid,
                                       const ChassisPose& start_hint,
                                       bool* degenerate = nullptr);

nlohmann::ordered_json pose_plan_to_json(const PosePlan& plan);
PosePlan pose_plan_from_json(const nlohmann::json& j);

}  // namespace godhs
