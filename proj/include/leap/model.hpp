#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <nlohmann/json.hpp>

#include "leap/errors.hpp"
#include "leap/geom.hpp"

namespace leap {

inline constexpr int kNumLegs = 4;
inline constexpr int kNumJoints = 12;
inline constexpr int kDof = 18;  // xyz + yaw/pitch/roll + 12 joints
inline constexpr double kGravity = 9.81;

using Vec18 = Eigen::Matrix<double, kDof, 1>;

// Simplified quadruped: rigid body with four 3-DOF point-foot legs
// (abduction about x, hip pitch and knee pitch about y). Link masses are
// lumped at a fixed fraction along each link.
struct RobotModel {
  double mass = 9.0;                       // total, body + links [kg]
  Eigen::Matrix3d body_inertia = Eigen::Vector3d(0.05, 0.10, 0.10).asDiagonal();
  std::array<Eigen::Vector3d, kNumLegs> hip_offsets = {
      Eigen::Vector3d(0.19, -0.11, 0.0), Eigen::Vector3d(0.19, 0.11, 0.0),
      Eigen::Vector3d(-0.19, -0.11, 0.0), Eigen::Vector3d(-0.19, 0.11, 0.0)};
  std::array<double, kNumLegs> upper_link_length = {0.21, 0.21, 0.21, 0.21};
  std::array<double, kNumLegs> lower_link_length = {0.21, 0.21, 0.21, 0.21};
  std::array<double, kNumLegs> upper_link_mass = {0.55, 0.55, 0.55, 0.55};
  std::array<double, kNumLegs> lower_link_mass = {0.20, 0.20, 0.20, 0.20};
  std::array<std::array<double, 2>, kNumJoints> joint_limits = default_joint_limits();
  double force_limit = 120.0;              // per foot, per axis bound [N]
  double nominal_hip_height = 0.26;        // [m]
  int n_c = 4;
  double friction_mu = 0.5;
  double link_com_fraction = 0.5;          // lumped-mass position along each link

  static std::array<std::array<double, 2>, kNumJoints> default_joint_limits() {
    std::array<std::array<double, 2>, kNumJoints> lim{};
    for (int leg = 0; leg < kNumLegs; ++leg) {
      lim[3 * leg + 0] = {-0.9, 0.9};     // abduction
      lim[3 * leg + 1] = {-0.8, 2.0};     // hip pitch
      lim[3 * leg + 2] = {-2.7, -0.15};   // knee pitch
    }
    return lim;
  }

  double body_mass() const {
    double legs = 0.0;
    for (int l = 0; l < kNumLegs; ++l) legs += upper_link_mass[l] + lower_link_mass[l];
    return mass - legs;
  }

  void validate() const {
    if (mass <= 0.0) throw BadInput("mass must be positive");
    if (n_c != kNumLegs) throw BadInput("n_c must be 4");
    if (body_mass() <= 0.0) throw BadInput("link masses exceed total mass");
    for (int l = 0; l < kNumLegs; ++l) {
      if (upper_link_length[l] <= 0.0 || lower_link_length[l] <= 0.0)
        throw BadInput("link lengths must be positive");
    }
    for (const auto& lim : joint_limits) {
      if (!(lim[0] < lim[1])) throw BadInput("joint limit min must be < max");
    }
    if (friction_mu <= 0.0 || force_limit <= 0.0 || nominal_hip_height <= 0.0)
      throw BadInput("friction_mu, force_limit, nominal_hip_height must be positive");
  }
};

// Centroidal state: CoM position/velocity, centroidal angular momentum, and
// the four contact points.
struct CentroidalState {
  Eigen::Vector3d r = Eigen::Vector3d::Zero();
  Eigen::Vector3d r_dot = Eigen::Vector3d::Zero();
  Eigen::Vector3d h = Eigen::Vector3d::Zero();
  std::array<Eigen::Vector3d, kNumLegs> c{};
};

struct ControlForces {
  std::array<Eigen::Vector3d, kNumLegs> f{};
};

// Joint-space state: q = [xyz, yaw, pitch, roll, 12 joint angles].
struct KinematicState {
  Vec18 q = Vec18::Zero();
  Vec18 q_dot = Vec18::Zero();
};

template <typename T>
struct KinematicsEval {
  Vec3T<T> com;
  Vec3T<T> com_vel;
  Vec3T<T> momentum;  // centroidal angular momentum
  std::array<Vec3T<T>, kNumLegs> feet;
};

// Full kinematics pass: foot positions, CoM of body + lumped link masses,
// CoM velocity, and centroidal angular momentum. Templated so the same chain
// can be evaluated with Dual for derivatives. q/q_dot are length-18 arrays.
template <typename T>
KinematicsEval<T> kinematics_eval(const RobotModel& m, const T* q, const T* qd) {
  using V = Vec3T<T>;
  using M = Mat3T<T>;

  const V base_p{q[0], q[1], q[2]};
  const V base_v{qd[0], qd[1], qd[2]};
  const T yaw = q[3], pitch = q[4], roll = q[5];

  const M Rz = M::rot_z(yaw), Ry = M::rot_y(pitch), Rx = M::rot_x(roll);
  const M R = Rz * (Ry * Rx);

  // World angular velocity from yaw-pitch-roll rates.
  const V ez{T(0.0), T(0.0), T(1.0)};
  const V ey_yawed = Rz * V{T(0.0), T(1.0), T(0.0)};
  const V ex_yp = (Rz * Ry) * V{T(1.0), T(0.0), T(0.0)};
  const V omega = ez * qd[3] + ey_yawed * qd[4] + ex_yp * qd[5];

  struct Point {
    double mass;
    Vec3T<T> p;  // world position
    Vec3T<T> v;  // world velocity
  };
  std::array<Point, 1 + 2 * kNumLegs> pts;

  // Body treated as a point mass at the base origin plus rotational inertia.
  pts[0] = {m.body_mass(), base_p, base_v};

  KinematicsEval<T> out;
  for (int leg = 0; leg < kNumLegs; ++leg) {
    const T abd = q[6 + 3 * leg], hip = q[7 + 3 * leg], knee = q[8 + 3 * leg];
    const T abd_d = qd[6 + 3 * leg], hip_d = qd[7 + 3 * leg], knee_d = qd[8 + 3 * leg];
    const double l_up = m.upper_link_length[leg], l_low = m.lower_link_length[leg];
    const double frac = m.link_com_fraction;

    const V ho = {T(m.hip_offsets[leg].x()), T(m.hip_offsets[leg].y()),
                  T(m.hip_offsets[leg].z())};
    const M R1 = M::rot_x(abd);
    const M Rup = R1 * M::rot_y(hip);
    const M Rlow = R1 * M::rot_y(hip + knee);

    // Body-frame positions along the chain.
    const V knee_b = ho + Rup * V{T(0.0), T(0.0), T(-l_up)};
    const V foot_b = knee_b + Rlow * V{T(0.0), T(0.0), T(-l_low)};
    const V up_com_b = ho + Rup * V{T(0.0), T(0.0), T(-frac * l_up)};
    const V low_com_b = knee_b + Rlow * V{T(0.0), T(0.0), T(-frac * l_low)};

    // Body-frame velocities: abduction axis x through the hip, hip/knee axes
    // y in the abducted frame.
    const V ax_abd{T(1.0), T(0.0), T(0.0)};
    const V ax_pitch = R1 * V{T(0.0), T(1.0), T(0.0)};
    const V w_up = ax_abd * abd_d + ax_pitch * hip_d;
    const V w_low = ax_abd * abd_d + ax_pitch * (hip_d + knee_d);
    const V knee_vb = w_up.cross(knee_b - ho);
    const V up_com_vb = w_up.cross(up_com_b - ho);
    const V low_com_vb = knee_vb + w_low.cross(low_com_b - knee_b);

    auto world_p = [&](const V& u) { return base_p + R * u; };
    auto world_v = [&](const V& u, const V& ub_dot) {
      return base_v + omega.cross(R * u) + R * ub_dot;
    };

    out.feet[leg] = world_p(foot_b);
    pts[1 + 2 * leg] = {m.upper_link_mass[leg], world_p(up_com_b), world_v(up_com_b, up_com_vb)};
    pts[2 + 2 * leg] = {m.lower_link_mass[leg], world_p(low_com_b), world_v(low_com_b, low_com_vb)};
  }

  V com = V::zero(), com_vel = V::zero();
  for (const auto& pt : pts) {
    com += pt.p * T(pt.mass);
    com_vel += pt.v * T(pt.mass);
  }
  const T inv_mass = T(1.0 / m.mass);
  out.com = com * inv_mass;
  out.com_vel = com_vel * inv_mass;

  // h about the CoM: body rotational term R I_b R^T omega plus point-mass
  // terms summed over body and link lumped masses.
  const V omega_body = R.transpose_mul(omega);
  const Eigen::Matrix3d& I = m.body_inertia;
  const V Iw{T(I(0, 0)) * omega_body.x + T(I(0, 1)) * omega_body.y + T(I(0, 2)) * omega_body.z,
             T(I(1, 0)) * omega_body.x + T(I(1, 1)) * omega_body.y + T(I(1, 2)) * omega_body.z,
             T(I(2, 0)) * omega_body.x + T(I(2, 1)) * omega_body.y + T(I(2, 2)) * omega_body.z};
  V h = R * Iw;
  for (const auto& pt : pts) {
    h += (pt.p - out.com).cross(pt.v - out.com_vel) * T(pt.mass);
  }
  out.momentum = h;
  return out;
}

inline KinematicsEval<double> kinematics_eval(const RobotModel& m, const KinematicState& x) {
  return kinematics_eval<double>(m, x.q.data(), x.q_dot.data());
}

namespace detail {
inline void check_pitch(double pitch) {
  // Yaw-pitch-roll parameterization; jumps in this artifact stay away from
  // the pitch = ±90 deg singularity.
  if (std::abs(std::cos(pitch)) < 0.1)
    throw BadInput("base pitch too close to +-90 deg (Euler singularity)");
}
}  // namespace detail

struct FkResult {
  std::array<Eigen::Vector3d, kNumLegs> feet;
  Eigen::Vector3d com;
};

inline FkResult forward_kinematics(const RobotModel& m, const Vec18& q) {
  detail::check_pitch(q[4]);
  Vec18 qd = Vec18::Zero();
  const auto ev = kinematics_eval<double>(m, q.data(), qd.data());
  FkResult out;
  out.com = to_eigen(ev.com);
  for (int l = 0; l < kNumLegs; ++l) out.feet[l] = to_eigen(ev.feet[l]);
  return out;
}

inline Eigen::Vector3d centroidal_momentum(const RobotModel& m, const KinematicState& x) {
  detail::check_pitch(x.q[4]);
  return to_eigen(kinematics_eval(m, x).momentum);
}

inline Eigen::Vector3d com_velocity(const RobotModel& m, const KinematicState& x) {
  return to_eigen(kinematics_eval(m, x).com_vel);
}

// Base pose for stance seeding: position plus yaw-pitch-roll.
struct BasePose {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  double yaw = 0.0;
  double pitch = 0.0;
  double roll = 0.0;
};

// 3-DOF leg IK for a foot target in the hip frame (body coordinates).
// Returns {abduction, hip pitch, knee pitch}; knee-back branch.
inline Eigen::Vector3d leg_inverse_kinematics(double l_up, double l_low,
                                              const Eigen::Vector3d& target_in_hip) {
  const double tx = target_in_hip.x(), ty = target_in_hip.y(), tz = target_in_hip.z();
  const double abd = std::atan2(ty, -tz);
  // Rotate into the abducted sagittal plane.
  const double wz = std::sin(abd) * ty - std::cos(abd) * tz;  // -z after un-abduction
  const double u = -tx, w = wz;
  const double d2 = u * u + w * w;
  const double reach = l_up + l_low;
  if (d2 > reach * reach)
    throw UnreachableStance("foot target beyond leg reach");
  double ck = (d2 - l_up * l_up - l_low * l_low) / (2.0 * l_up * l_low);
  ck = std::clamp(ck, -1.0, 1.0);
  const double knee = -std::acos(ck);
  const double hip = std::atan2(u, w) -
                     std::atan2(l_low * std::sin(knee), l_up + l_low * std::cos(knee));
  return {abd, hip, knee};
}

// Statically balanced four-legs-down configuration with each foot directly
// below its hip at height ground_z. Seeds references and walking poses.
inline KinematicState default_stance(const RobotModel& m, const BasePose& pose,
                                     double ground_z = 0.0) {
  KinematicState x;
  x.q[0] = pose.position.x();
  x.q[1] = pose.position.y();
  x.q[2] = pose.position.z();
  x.q[3] = pose.yaw;
  x.q[4] = pose.pitch;
  x.q[5] = pose.roll;

  const Eigen::Matrix3d R =
      (Eigen::AngleAxisd(pose.yaw, Eigen::Vector3d::UnitZ()) *
       Eigen::AngleAxisd(pose.pitch, Eigen::Vector3d::UnitY()) *
       Eigen::AngleAxisd(pose.roll, Eigen::Vector3d::UnitX()))
          .toRotationMatrix();
  for (int leg = 0; leg < kNumLegs; ++leg) {
    const Eigen::Vector3d hip_world = pose.position + R * m.hip_offsets[leg];
    const Eigen::Vector3d foot_world(hip_world.x(), hip_world.y(), ground_z);
    const Eigen::Vector3d target_hip = R.transpose() * (foot_world - pose.position) - m.hip_offsets[leg];
    const Eigen::Vector3d angles =
        leg_inverse_kinematics(m.upper_link_length[leg], m.lower_link_length[leg], target_hip);
    x.q.segment<3>(6 + 3 * leg) = angles;
  }
  return x;
}

// --- JSON ---

inline void to_json(nlohmann::json& j, const RobotModel& m) {
  j = nlohmann::json{
      {"mass", m.mass},
      {"body_inertia", {m.body_inertia(0, 0), m.body_inertia(1, 1), m.body_inertia(2, 2)}},
      {"force_limit", m.force_limit},
      {"nominal_hip_height", m.nominal_hip_height},
      {"n_c", m.n_c},
      {"friction_mu", m.friction_mu},
      {"link_com_fraction", m.link_com_fraction}};
  for (int l = 0; l < kNumLegs; ++l) {
    j["hip_offsets"].push_back({m.hip_offsets[l].x(), m.hip_offsets[l].y(), m.hip_offsets[l].z()});
    j["link_lengths"].push_back({m.upper_link_length[l], m.lower_link_length[l]});
    j["link_masses"].push_back({m.upper_link_mass[l], m.lower_link_mass[l]});
  }
  for (const auto& lim : m.joint_limits) j["joint_limits"].push_back({lim[0], lim[1]});
}

inline void from_json(const nlohmann::json& j, RobotModel& m) {
  m = RobotModel{};
  j.at("mass").get_to(m.mass);
  if (j.contains("body_inertia")) {
    const auto& bi = j.at("body_inertia");
    if (bi.size() == 3 && bi[0].is_number()) {
      m.body_inertia = Eigen::Vector3d(bi[0], bi[1], bi[2]).asDiagonal();
    } else {
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) m.body_inertia(r, c) = bi.at(r).at(c);
    }
  }
  if (j.contains("hip_offsets"))
    for (int l = 0; l < kNumLegs; ++l) {
      const auto& h = j.at("hip_offsets").at(l);
      m.hip_offsets[l] = Eigen::Vector3d(h.at(0), h.at(1), h.at(2));
    }
  if (j.contains("link_lengths"))
    for (int l = 0; l < kNumLegs; ++l) {
      const auto& ll = j.at("link_lengths").at(l);
      m.upper_link_length[l] = ll.at(0);
      m.lower_link_length[l] = ll.at(1);
    }
  if (j.contains("link_masses"))
    for (int l = 0; l < kNumLegs; ++l) {
      const auto& lm = j.at("link_masses").at(l);
      m.upper_link_mass[l] = lm.at(0);
      m.lower_link_mass[l] = lm.at(1);
    }
  if (j.contains("joint_limits"))
    for (int k = 0; k < kNumJoints; ++k) {
      const auto& lim = j.at("joint_limits").at(k);
      m.joint_limits[k] = {lim.at(0), lim.at(1)};
    }
  if (j.contains("force_limit")) j.at("force_limit").get_to(m.force_limit);
  if (j.contains("nominal_hip_height")) j.at("nominal_hip_height").get_to(m.nominal_hip_height);
  if (j.contains("n_c")) j.at("n_c").get_to(m.n_c);
  if (j.contains("friction_mu")) j.at("friction_mu").get_to(m.friction_mu);
  if (j.contains("link_com_fraction")) j.at("link_com_fraction").get_to(m.link_com_fraction);
  m.validate();
}

}  // namespace leap
