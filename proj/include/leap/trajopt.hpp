#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "leap/auglag.hpp"
#include "leap/errors.hpp"
#include "leap/model.hpp"
#include "leap/terrain.hpp"

namespace leap {

// Where the jump must end: a box for the final CoM, a yaw window, the height
// feet land at, and optionally a required horizontal velocity direction.
struct LandingSet {
  Eigen::Vector3d center = Eigen::Vector3d(0.6, 0.0, 0.46);
  Eigen::Vector3d half_extent = Eigen::Vector3d(0.06, 0.06, 0.05);
  double yaw_center = 0.0;
  double yaw_half_width = 0.52;
  double foot_height = 0.2;  // upper-surface height the feet touch down on
  std::optional<Eigen::Vector2d> velocity_dir;
};

struct CostWeights {
  double force_effort = 1e-4;
  double joint_rate = 1e-4;
  double joint_tracking = 1e-3;
};

// One jump: start state on the lower surface, sigmoid step terrain, landing
// set on the upper surface. Takeoff duration is fixed, flight time is free.
struct JumpProblem {
  RobotModel model;
  SigmoidStep terrain;
  KinematicState initial_state;
  LandingSet landing;
  int n_takeoff_nodes = 15;
  int n_flight_nodes = 10;
  double takeoff_duration = 0.4;
  double clearance_margin = 0.005;
  double surface_tol = 0.02;
  double landing_speed_max = 4.0;
  double flight_time_min = 0.1;
  double flight_time_max = 1.0;
  CostWeights weights;
};

// Decision vector layout. Per node: centroidal block [r rdot h c1..c4] (21)
// and kinematic block [q qdot] (36); per takeoff interval: forces (12); one
// trailing flight-time variable.
struct Layout {
  int n_to = 15;
  int n_fl = 10;

  int n_nodes() const { return n_to + n_fl; }
  int n_intervals() const { return n_nodes() - 1; }
  int n_force_intervals() const { return n_to - 1; }

  int dyn(int i) const { return i * 21; }
  int r(int i) const { return dyn(i); }
  int rdot(int i) const { return dyn(i) + 3; }
  int h(int i) const { return dyn(i) + 6; }
  int c(int i, int foot) const { return dyn(i) + 9 + 3 * foot; }
  int f(int k, int foot) const { return n_nodes() * 21 + k * 12 + 3 * foot; }
  int q(int i) const { return n_nodes() * 21 + n_force_intervals() * 12 + i * 36; }
  int qd(int i) const { return q(i) + 18; }
  int tfl() const { return n_nodes() * 21 + n_force_intervals() * 12 + n_nodes() * 36; }
  int size() const { return tfl() + 1; }

  bool has_forces(int k) const { return k < n_force_intervals(); }

  // Interval lengths: stance intervals split the fixed takeoff duration, the
  // transition interval and everything after split the free flight time.
  double dt(int k, double t_to, double t_fl) const {
    return k <= n_to - 2 ? t_to / (n_to - 1) : t_fl / (n_fl - 1);
  }
  double dt_dtfl(int k) const { return k <= n_to - 2 ? 0.0 : 1.0 / (n_fl - 1); }
};

enum class JumpStatus { Converged, NotConverged };

struct TrajOptSolution {
  JumpStatus status = JumpStatus::NotConverged;
  std::vector<CentroidalState> dyn;   // one per node
  std::vector<ControlForces> forces;  // one per takeoff interval
  std::vector<KinematicState> kin;    // one per node
  double flight_duration = 0.0;
  double takeoff_duration = 0.0;
  SolveReport report;
  double solve_seconds = 0.0;
};

namespace detail {

inline Layout layout_of(const JumpProblem& p) {
  return Layout{p.n_takeoff_nodes, p.n_flight_nodes};
}

inline std::array<Eigen::Vector3d, kNumLegs> initial_footholds(const JumpProblem& p) {
  return forward_kinematics(p.model, p.initial_state.q).feet;
}

}  // namespace detail

inline void validate_problem(const JumpProblem& p) {
  p.model.validate();
  if (p.n_takeoff_nodes < 3 || p.n_flight_nodes < 3)
    throw BadInput("need at least 3 takeoff and 3 flight nodes");
  if (p.takeoff_duration <= 0.0) throw BadInput("takeoff duration must be positive");
  if (!(p.flight_time_min > 0.0 && p.flight_time_min < p.flight_time_max))
    throw BadInput("flight time window is empty");
  if ((p.landing.half_extent.array() <= 0.0).any())
    throw BadInput("landing box must have positive half extents");
  if (p.landing.velocity_dir && p.landing.velocity_dir->norm() < 1e-9)
    throw BadInput("landing velocity direction must be nonzero");

  detail::check_pitch(p.initial_state.q[4]);
  for (int j = 0; j < kNumJoints; ++j) {
    const double v = p.initial_state.q[6 + j];
    if (v < p.model.joint_limits[j][0] - 1e-9 || v > p.model.joint_limits[j][1] + 1e-9)
      throw BadInitialState("initial joints outside limits");
  }
  const auto feet = detail::initial_footholds(p);
  for (const auto& c : feet) {
    const double zg = p.terrain.height(c.x(), c.y());
    if (std::abs(c.z() - zg) > std::max(0.03, 1.5 * p.surface_tol))
      throw BadInitialState("initial feet are not resting on the terrain");
  }
}

// Seed flight time for a jump over a step of height h_obs: enough hang time
// to rise from a crouch over the obstacle with margin and come back down.
inline double reference_flight_time(double h_obs, double apex_margin = 0.05,
                                    double crouch_drop = 0.06) {
  const double rise = std::max(0.01, h_obs + apex_margin + crouch_drop);
  return 2.0 * std::sqrt(2.0 * rise / kGravity);
}

// Kinematic warm start: crouch-extend during stance, a discrete-Euler
// ballistic base path in flight with legs tucked, landing upright. The
// centroidal track is derived from the kinematic one so the agreement
// residuals start at zero.
inline Eigen::VectorXd build_reference(const JumpProblem& p) {
  const Layout L = detail::layout_of(p);
  const RobotModel& m = p.model;
  Eigen::VectorXd x = Eigen::VectorXd::Zero(L.size());

  const double t_fl = std::clamp(reference_flight_time(p.landing.foot_height -
                                                       p.terrain.height(
                                                           p.initial_state.q[0],
                                                           p.initial_state.q[1])),
                                 p.flight_time_min, p.flight_time_max);
  x[L.tfl()] = t_fl;

  const auto footholds = detail::initial_footholds(p);
  const Eigen::Vector3d base0 = p.initial_state.q.head<3>();
  const double yaw0 = p.initial_state.q[3];
  const double yaw1 = p.landing.yaw_center;
  const double hip_h = m.nominal_hip_height;
  const double crouch_drop = 0.06;

  // Base targets: land with the base one hip height above the landing feet.
  const Eigen::Vector3d base1(p.landing.center.x(), p.landing.center.y(),
                              p.landing.foot_height + hip_h);

  const int n_to = L.n_to, n_fl = L.n_fl, n = L.n_nodes();

  // Flight spans intervals n_to-1 .. n-2, all of length dt_fl.
  const double dt_fl = t_fl / (n_fl - 1);
  const int m_fl = n_fl;  // ballistic interval count
  const double t_flight_total = m_fl * dt_fl;

  // Takeoff velocity, with part of the travel already done during stance: the
  // base accelerates along a quartic-velocity ramp in the plane and extends
  // upward over the last 35% of stance. Spreading the impulse keeps the
  // seeded forces inside the friction cone instead of cramming the whole
  // launch into the final interval.
  const double T_to = p.takeoff_duration;
  const double s0 = 0.65;
  const double c_xy = T_to / 5.0;
  const double c_z = T_to * (1.0 - s0) / 3.0;
  const Eigen::Vector2d v_xy =
      (base1.head<2>() - base0.head<2>()) / (t_flight_total + c_xy);
  const double vz0 =
      (base1.z() - base0.z() + 0.5 * kGravity * t_flight_total * t_flight_total) /
      (t_flight_total + c_z);
  const double launch_rise = std::min(c_z * std::max(0.0, vz0), 0.12);

  auto stance_base = [&](double s) {
    Eigen::Vector3d b = base0;
    b.head<2>() += v_xy * T_to * std::pow(s, 5) / 5.0;
    const double dip = crouch_drop * std::sin(std::min(1.0, s / 0.85) * M_PI);
    const double u = s <= s0 ? 0.0 : (s - s0) / (1.0 - s0);
    b.z() += launch_rise * u * u * u - dip;
    return b;
  };
  const Eigen::Vector3d base_to = stance_base(1.0);

  std::vector<Eigen::Matrix<double, kDof, 1>> qs(n);
  for (int i = 0; i < n; ++i) {
    Vec18 q = Vec18::Zero();
    double yaw, tuck = 0.0;
    Eigen::Vector3d base;
    if (i <= n_to - 1) {
      // Crouch, then drive forward and up toward the launch velocity.
      const double s = static_cast<double>(i) / (n_to - 1);
      base = stance_base(s);
      yaw = yaw0 + (s > 0.5 ? (s - 0.5) / 0.5 : 0.0) * 0.3 * wrap_angle(yaw1 - yaw0);
    } else {
      // Ballistic path from the takeoff node.
      const int j = i - (n_to - 1);  // flight steps since takeoff
      const double tj = j * dt_fl;
      base.head<2>() = base_to.head<2>() + tj * v_xy;
      base.z() = base_to.z() + tj * vz0 - 0.5 * kGravity * tj * tj;
      const double s = static_cast<double>(j) / m_fl;
      yaw = yaw0 + (0.3 + 0.7 * s) * wrap_angle(yaw1 - yaw0);
      tuck = 0.35 * hip_h * std::sin(M_PI * std::min(1.0, s));
    }
    q.head<3>() = base;
    q[3] = yaw;

    const Eigen::Matrix3d R = Eigen::AngleAxisd(yaw, Eigen::Vector3d::UnitZ()).toRotationMatrix();
    for (int leg = 0; leg < kNumLegs; ++leg) {
      Eigen::Vector3d foot_world;
      if (i <= n_to - 1) {
        foot_world = footholds[leg];
      } else {
        const Eigen::Vector3d hip_world = base + R * m.hip_offsets[leg];
        const double ground = i == n - 1 ? p.landing.foot_height
                                         : base.z() - hip_h + tuck;
        foot_world = Eigen::Vector3d(hip_world.x(), hip_world.y(), ground);
      }
      const Eigen::Vector3d target =
          R.transpose() * (foot_world - base) - m.hip_offsets[leg];
      Eigen::Vector3d angles;
      try {
        angles = leg_inverse_kinematics(m.upper_link_length[leg], m.lower_link_length[leg],
                                        target);
      } catch (const UnreachableStance&) {
        angles = Eigen::Vector3d(0.0, 0.8, -1.6);
      }
      for (int a = 0; a < 3; ++a)
        angles[a] = std::clamp(angles[a], m.joint_limits[3 * leg + a][0],
                               m.joint_limits[3 * leg + a][1]);
      q.segment<3>(6 + 3 * leg) = angles;
    }
    qs[i] = q;
  }
  qs[0] = p.initial_state.q;

  // Rates by forward differences keep the integration residuals near zero.
  for (int i = 0; i < n; ++i) {
    Vec18 qd;
    if (i < n - 1) {
      const double dt = L.dt(i, p.takeoff_duration, t_fl);
      qd = (qs[i + 1] - qs[i]) / dt;
    } else {
      qd = x.segment<18>(L.qd(i - 1));
    }
    if (i == 0) qd = p.initial_state.q_dot;
    x.segment<18>(L.q(i)) = qs[i];
    x.segment<18>(L.qd(i)) = qd;
  }

  // Centroidal track from the kinematic one.
  for (int i = 0; i < n; ++i) {
    KinematicState s;
    s.q = x.segment<18>(L.q(i));
    s.q_dot = x.segment<18>(L.qd(i));
    const auto ev = kinematics_eval(m, s);
    x.segment<3>(L.r(i)) = to_eigen(ev.com);
    x.segment<3>(L.rdot(i)) = to_eigen(ev.com_vel);
    x.segment<3>(L.h(i)) = to_eigen(ev.momentum);
    for (int leg = 0; leg < kNumLegs; ++leg)
      x.segment<3>(L.c(i, leg)) = i <= n_to - 1 ? footholds[leg] : to_eigen(ev.feet[leg]);
  }

  // Forces that explain the seeded CoM acceleration, split evenly.
  for (int k = 0; k < L.n_force_intervals(); ++k) {
    const double dt = L.dt(k, p.takeoff_duration, t_fl);
    const Eigen::Vector3d a =
        (x.segment<3>(L.rdot(k + 1)) - x.segment<3>(L.rdot(k))) / dt +
        Eigen::Vector3d(0, 0, kGravity);
    Eigen::Vector3d f = m.mass * a / kNumLegs;
    f.z() = std::clamp(f.z(), 0.0, m.force_limit);
    f.x() = std::clamp(f.x(), -m.force_limit, m.force_limit);
    f.y() = std::clamp(f.y(), -m.force_limit, m.force_limit);
    for (int leg = 0; leg < kNumLegs; ++leg) x.segment<3>(L.f(k, leg)) = f;
  }
  return x;
}

namespace detail {

// --- constraint families over the decision vector ---

class DynLinFamily final : public ConstraintFamily {
 public:
  DynLinFamily(const JumpProblem& p, Layout L) : p_(&p), L_(L) {}
  std::string_view name() const override { return "dyn_lin"; }
  int dim() const override { return 6 * L_.n_intervals(); }
  bool is_inequality() const override { return false; }

  void eval(const Eigen::VectorXd& x, Eigen::Ref<Eigen::VectorXd> out) const override {
    const double t_fl = x[L_.tfl()];
    for (int k = 0; k < L_.n_intervals(); ++k) {
      const double dt = L_.dt(k, p_->takeoff_duration, t_fl);
      Eigen::Vector3d acc(0, 0, -kGravity);
      if (L_.has_forces(k)) {
        for (int leg = 0; leg < kNumLegs; ++leg) acc += x.segment<3>(L_.f(k, leg)) / p_->model.mass;
      }
      // Trapezoidal position rule: with piecewise-constant interval forces
      // the velocity is linear in time, so these node states sit exactly on
      // the continuous trajectory and a fine-grained replay reproduces them.
      out.segment<3>(6 * k) =
          x.segment<3>(L_.r(k + 1)) - x.segment<3>(L_.r(k)) -
          0.5 * dt * (x.segment<3>(L_.rdot(k)) + x.segment<3>(L_.rdot(k + 1)));
      out.segment<3>(6 * k + 3) =
          x.segment<3>(L_.rdot(k + 1)) - x.segment<3>(L_.rdot(k)) - dt * acc;
    }
  }

  void apply_jt(const Eigen::VectorXd& x, const Eigen::VectorXd& w,
                Eigen::Ref<Eigen::VectorXd> g) const override {
    const double t_fl = x[L_.tfl()];
    for (int k = 0; k < L_.n_intervals(); ++k) {
      const double dt = L_.dt(k, p_->takeoff_duration, t_fl);
      const Eigen::Vector3d wr = w.segment<3>(6 * k);
      const Eigen::Vector3d wv = w.segment<3>(6 * k + 3);
      g.segment<3>(L_.r(k + 1)) += wr;
      g.segment<3>(L_.r(k)) -= wr;
      g.segment<3>(L_.rdot(k)) -= 0.5 * dt * wr;
      g.segment<3>(L_.rdot(k + 1)) -= 0.5 * dt * wr;
      g.segment<3>(L_.rdot(k + 1)) += wv;
      g.segment<3>(L_.rdot(k)) -= wv;
      Eigen::Vector3d acc(0, 0, -kGravity);
      if (L_.has_forces(k)) {
        for (int leg = 0; leg < kNumLegs; ++leg) {
          acc += x.segment<3>(L_.f(k, leg)) / p_->model.mass;
          g.segment<3>(L_.f(k, leg)) -= (dt / p_->model.mass) * wv;
        }
      }
      const double ddt = L_.dt_dtfl(k);
      if (ddt != 0.0) {
        g[L_.tfl()] -= ddt * 0.5 *
                       (x.segment<3>(L_.rdot(k)) + x.segment<3>(L_.rdot(k + 1))).dot(wr);
        g[L_.tfl()] -= ddt * acc.dot(wv);
      }
    }
  }

 private:
  const JumpProblem* p_;
  Layout L_;
};

class DynAngFamily final : public ConstraintFamily {
 public:
  DynAngFamily(const JumpProblem& p, Layout L) : p_(&p), L_(L) {}
  std::string_view name() const override { return "dyn_ang"; }
  int dim() const override { return 3 * L_.n_intervals(); }
  bool is_inequality() const override { return false; }

  void eval(const Eigen::VectorXd& x, Eigen::Ref<Eigen::VectorXd> out) const override {
    const double t_fl = x[L_.tfl()];
    for (int k = 0; k < L_.n_intervals(); ++k) {
      const double dt = L_.dt(k, p_->takeoff_duration, t_fl);
      // Trapezoidal torque quadrature, matching the position rule: the lever
      // arms move within an interval even though the force is held constant.
      Eigen::Vector3d tau = Eigen::Vector3d::Zero();
      if (L_.has_forces(k)) {
        for (int e = 0; e < 2; ++e) {
          const Eigen::Vector3d r = x.segment<3>(L_.r(k + e));
          for (int leg = 0; leg < kNumLegs; ++leg)
            tau += 0.5 * (x.segment<3>(L_.c(k + e, leg)) - r)
                             .cross(x.segment<3>(L_.f(k, leg)));
        }
      }
      out.segment<3>(3 * k) = x.segment<3>(L_.h(k + 1)) - x.segment<3>(L_.h(k)) - dt * tau;
    }
  }

  void apply_jt(const Eigen::VectorXd& x, const Eigen::VectorXd& w,
                Eigen::Ref<Eigen::VectorXd> g) const override {
    const double t_fl = x[L_.tfl()];
    for (int k = 0; k < L_.n_intervals(); ++k) {
      const double dt = L_.dt(k, p_->takeoff_duration, t_fl);
      const Eigen::Vector3d wk = w.segment<3>(3 * k);
      g.segment<3>(L_.h(k + 1)) += wk;
      g.segment<3>(L_.h(k)) -= wk;
      if (L_.has_forces(k)) {
        for (int e = 0; e < 2; ++e) {
          const Eigen::Vector3d r = x.segment<3>(L_.r(k + e));
          for (int leg = 0; leg < kNumLegs; ++leg) {
            const Eigen::Vector3d f = x.segment<3>(L_.f(k, leg));
            const Eigen::Vector3d arm = x.segment<3>(L_.c(k + e, leg)) - r;
            // res -= dt/2 * arm x f per endpoint; (a x b)^T w identities.
            g.segment<3>(L_.c(k + e, leg)) -= 0.5 * dt * f.cross(wk);
            g.segment<3>(L_.r(k + e)) += 0.5 * dt * f.cross(wk);
            g.segment<3>(L_.f(k, leg)) -= 0.5 * dt * wk.cross(arm);
          }
        }
      }
      // Flight intervals have zero torque, so the residual there does not
      // depend on the flight time and no tfl term is needed.
    }
  }

 private:
  const JumpProblem* p_;
  Layout L_;
};

class KinIntFamily final : public ConstraintFamily {
 public:
  KinIntFamily(const JumpProblem& p, Layout L) : p_(&p), L_(L) {}
  std::string_view name() const override { return "kin_int"; }
  int dim() const override { return 18 * L_.n_intervals(); }
  bool is_inequality() const override { return false; }

  void eval(const Eigen::VectorXd& x, Eigen::Ref<Eigen::VectorXd> out) const override {
    const double t_fl = x[L_.tfl()];
    for (int k = 0; k < L_.n_intervals(); ++k) {
      const double dt = L_.dt(k, p_->takeoff_duration, t_fl);
      // Explicit rule on purpose: a trapezoidal average here would leave
      // alternating-sign null modes in qd (nothing integrates qd itself),
      // and the joint track needs no replay-grade accuracy.
      out.segment<18>(18 * k) = x.segment<18>(L_.q(k + 1)) - x.segment<18>(L_.q(k)) -
                                dt * x.segment<18>(L_.qd(k));
    }
  }

  void apply_jt(const Eigen::VectorXd& x, const Eigen::VectorXd& w,
                Eigen::Ref<Eigen::VectorXd> g) const override {
    const double t_fl = x[L_.tfl()];
    for (int k = 0; k < L_.n_intervals(); ++k) {
      const double dt = L_.dt(k, p_->takeoff_duration, t_fl);
      const auto wk = w.segment<18>(18 * k);
      g.segment<18>(L_.q(k + 1)) += wk;
      g.segment<18>(L_.q(k)) -= wk;
      g.segment<18>(L_.qd(k)) -= dt * wk;
      const double ddt = L_.dt_dtfl(k);
      if (ddt != 0.0) g[L_.tfl()] -= ddt * x.segment<18>(L_.qd(k)).dot(wk);
    }
  }

 private:
  const JumpProblem* p_;
  Layout L_;
};

// Ties the centroidal track to the kinematic one: per node, CoM position,
// CoM velocity is folded into dyn_lin via rdot so here it is CoM, feet, and
// centroidal momentum. 18 rows per node: com(3), feet(12), momentum(3).
class KinAgreeFamily final : public ConstraintFamily {
 public:
  KinAgreeFamily(const JumpProblem& p, Layout L) : p_(&p), L_(L) {}
  std::string_view name() const override { return "kin_agree"; }
  int dim() const override { return 18 * L_.n_nodes(); }
  bool is_inequality() const override { return false; }

  void eval(const Eigen::VectorXd& x, Eigen::Ref<Eigen::VectorXd> out) const override {
    for (int i = 0; i < L_.n_nodes(); ++i) {
      const auto ev =
          kinematics_eval<double>(p_->model, x.data() + L_.q(i), x.data() + L_.qd(i));
      out.segment<3>(18 * i) = to_eigen(ev.com) - x.segment<3>(L_.r(i));
      for (int leg = 0; leg < kNumLegs; ++leg)
        out.segment<3>(18 * i + 3 + 3 * leg) =
            to_eigen(ev.feet[leg]) - x.segment<3>(L_.c(i, leg));
      out.segment<3>(18 * i + 15) = to_eigen(ev.momentum) - x.segment<3>(L_.h(i));
    }
  }

  void apply_jt(const Eigen::VectorXd& x, const Eigen::VectorXd& w,
                Eigen::Ref<Eigen::VectorXd> g) const override {
    std::array<Dual, 18> q{}, qd{};
    for (int i = 0; i < L_.n_nodes(); ++i) {
      const auto wi = w.segment<18>(18 * i);
      // Direct rows on the centroidal variables.
      g.segment<3>(L_.r(i)) -= wi.segment<3>(0);
      for (int leg = 0; leg < kNumLegs; ++leg)
        g.segment<3>(L_.c(i, leg)) -= wi.segment<3>(3 + 3 * leg);
      g.segment<3>(L_.h(i)) -= wi.segment<3>(15);

      // Forward-mode sweep per kinematic coordinate.
      for (int a = 0; a < 18; ++a) {
        q[a] = Dual(x[L_.q(i) + a], 0.0);
        qd[a] = Dual(x[L_.qd(i) + a], 0.0);
      }
      for (int a = 0; a < 36; ++a) {
        Dual* slot = a < 18 ? &q[a] : &qd[a - 18];
        slot->d = 1.0;
        const auto ev = kinematics_eval<Dual>(p_->model, q.data(), qd.data());
        double acc = 0.0;
        acc += ev.com.x.d * wi[0] + ev.com.y.d * wi[1] + ev.com.z.d * wi[2];
        for (int leg = 0; leg < kNumLegs; ++leg) {
          const auto& ft = ev.feet[leg];
          acc += ft.x.d * wi[3 + 3 * leg] + ft.y.d * wi[4 + 3 * leg] +
                 ft.z.d * wi[5 + 3 * leg];
        }
        acc += ev.momentum.x.d * wi[15] + ev.momentum.y.d * wi[16] +
               ev.momentum.z.d * wi[17];
        g[L_.q(i) + a] += acc;
        slot->d = 0.0;
      }
    }
  }

 private:
  const JumpProblem* p_;
  Layout L_;
};

// Pyramid friction cone on every stance force: |f_x|, |f_y| <= mu f_z / sqrt2.
class FrictionFamily final : public ConstraintFamily {
 public:
  FrictionFamily(const JumpProblem& p, Layout L) : p_(&p), L_(L) {}
  std::string_view name() const override { return "friction"; }
  int dim() const override { return 16 * L_.n_force_intervals(); }
  bool is_inequality() const override { return true; }

  // Rows are normalized by body weight so a violation of 1e-4 means the same
  // thing here as it does for the meter-scaled families.
  void eval(const Eigen::VectorXd& x, Eigen::Ref<Eigen::VectorXd> out) const override {
    const double s = p_->model.friction_mu / std::sqrt(2.0);
    const double inv_w = 1.0 / (p_->model.mass * kGravity);
    for (int k = 0; k < L_.n_force_intervals(); ++k)
      for (int leg = 0; leg < kNumLegs; ++leg) {
        const Eigen::Vector3d f = x.segment<3>(L_.f(k, leg));
        const int base = 16 * k + 4 * leg;
        out[base + 0] = inv_w * (f.x() - s * f.z());
        out[base + 1] = inv_w * (-f.x() - s * f.z());
        out[base + 2] = inv_w * (f.y() - s * f.z());
        out[base + 3] = inv_w * (-f.y() - s * f.z());
      }
  }

  void apply_jt(const Eigen::VectorXd&, const Eigen::VectorXd& w,
                Eigen::Ref<Eigen::VectorXd> g) const override {
    const double s = p_->model.friction_mu / std::sqrt(2.0);
    const double inv_w = 1.0 / (p_->model.mass * kGravity);
    for (int k = 0; k < L_.n_force_intervals(); ++k)
      for (int leg = 0; leg < kNumLegs; ++leg) {
        const int base = 16 * k + 4 * leg;
        const int fo = L_.f(k, leg);
        g[fo + 0] += inv_w * (w[base + 0] - w[base + 1]);
        g[fo + 1] += inv_w * (w[base + 2] - w[base + 3]);
        g[fo + 2] += -inv_w * s * (w[base + 0] + w[base + 1] + w[base + 2] + w[base + 3]);
      }
  }

 private:
  const JumpProblem* p_;
  Layout L_;
};

// Feet stay a margin above the terrain on interior flight nodes. The takeoff
// and touchdown nodes are in contact and excluded.
class ClearanceFamily final : public ConstraintFamily {
 public:
  ClearanceFamily(const JumpProblem& p, Layout L) : p_(&p), L_(L) {}
  std::string_view name() const override { return "clearance"; }
  int dim() const override { return 4 * std::max(0, L_.n_fl - 1); }
  bool is_inequality() const override { return true; }

  void eval(const Eigen::VectorXd& x, Eigen::Ref<Eigen::VectorXd> out) const override {
    int row = 0;
    for (int i = L_.n_to; i <= L_.n_nodes() - 2; ++i)
      for (int leg = 0; leg < kNumLegs; ++leg) {
        const Eigen::Vector3d c = x.segment<3>(L_.c(i, leg));
        out[row++] = p_->terrain.height(c.x(), c.y()) + p_->clearance_margin - c.z();
      }
  }

  void apply_jt(const Eigen::VectorXd& x, const Eigen::VectorXd& w,
                Eigen::Ref<Eigen::VectorXd> g) const override {
    int row = 0;
    for (int i = L_.n_to; i <= L_.n_nodes() - 2; ++i)
      for (int leg = 0; leg < kNumLegs; ++leg) {
        const Eigen::Vector3d c = x.segment<3>(L_.c(i, leg));
        const Eigen::Vector2d grad = p_->terrain.gradient(c.x(), c.y());
        g[L_.c(i, leg) + 0] += grad.x() * w[row];
        g[L_.c(i, leg) + 1] += grad.y() * w[row];
        g[L_.c(i, leg) + 2] -= w[row];
        ++row;
      }
  }

 private:
  const JumpProblem* p_;
  Layout L_;
};

// Touchdown conditions: bounded landing speed, feet over the upper surface,
// and when a landing direction is given, no backward motion along it.
class LandingIneqFamily final : public ConstraintFamily {
 public:
  LandingIneqFamily(const JumpProblem& p, Layout L) : p_(&p), L_(L) {}
  std::string_view name() const override { return "landing"; }
  int dim() const override { return 5 + (p_->landing.velocity_dir ? 1 : 0); }
  bool is_inequality() const override { return true; }

  void eval(const Eigen::VectorXd& x, Eigen::Ref<Eigen::VectorXd> out) const override {
    const int i = L_.n_nodes() - 1;
    const Eigen::Vector3d v = x.segment<3>(L_.rdot(i));
    out[0] = v.squaredNorm() - p_->landing_speed_max * p_->landing_speed_max;
    for (int leg = 0; leg < kNumLegs; ++leg) {
      const Eigen::Vector3d c = x.segment<3>(L_.c(i, leg));
      out[1 + leg] = (p_->landing.foot_height - p_->surface_tol) -
                     p_->terrain.height(c.x(), c.y());
    }
    if (p_->landing.velocity_dir) {
      const Eigen::Vector2d n = p_->landing.velocity_dir->normalized();
      out[5] = -(v.x() * n.x() + v.y() * n.y());
    }
  }

  void apply_jt(const Eigen::VectorXd& x, const Eigen::VectorXd& w,
                Eigen::Ref<Eigen::VectorXd> g) const override {
    const int i = L_.n_nodes() - 1;
    const Eigen::Vector3d v = x.segment<3>(L_.rdot(i));
    g.segment<3>(L_.rdot(i)) += 2.0 * v * w[0];
    for (int leg = 0; leg < kNumLegs; ++leg) {
      const Eigen::Vector3d c = x.segment<3>(L_.c(i, leg));
      const Eigen::Vector2d grad = p_->terrain.gradient(c.x(), c.y());
      g[L_.c(i, leg) + 0] -= grad.x() * w[1 + leg];
      g[L_.c(i, leg) + 1] -= grad.y() * w[1 + leg];
    }
    if (p_->landing.velocity_dir) {
      const Eigen::Vector2d n = p_->landing.velocity_dir->normalized();
      g[L_.rdot(i) + 0] -= n.x() * w[5];
      g[L_.rdot(i) + 1] -= n.y() * w[5];
    }
  }

 private:
  const JumpProblem* p_;
  Layout L_;
};

// Landing velocity aligned with the requested direction (zero cross product).
class LandingEqFamily final : public ConstraintFamily {
 public:
  LandingEqFamily(const JumpProblem& p, Layout L) : p_(&p), L_(L) {}
  std::string_view name() const override { return "landing_dir"; }
  int dim() const override { return p_->landing.velocity_dir ? 1 : 0; }
  bool is_inequality() const override { return false; }

  void eval(const Eigen::VectorXd& x, Eigen::Ref<Eigen::VectorXd> out) const override {
    if (!p_->landing.velocity_dir) return;
    const int i = L_.n_nodes() - 1;
    const Eigen::Vector2d n = p_->landing.velocity_dir->normalized();
    out[0] = x[L_.rdot(i) + 0] * n.y() - x[L_.rdot(i) + 1] * n.x();
  }

  void apply_jt(const Eigen::VectorXd&, const Eigen::VectorXd& w,
                Eigen::Ref<Eigen::VectorXd> g) const override {
    if (!p_->landing.velocity_dir) return;
    const int i = L_.n_nodes() - 1;
    const Eigen::Vector2d n = p_->landing.velocity_dir->normalized();
    g[L_.rdot(i) + 0] += n.y() * w[0];
    g[L_.rdot(i) + 1] -= n.x() * w[0];
  }

 private:
  const JumpProblem* p_;
  Layout L_;
};

// Box bounds: variable pins for the initial node, stance feet, the landing
// box and yaw window, force limits, and generous state boxes elsewhere.
inline void build_bounds(const JumpProblem& p, const Layout& L, Eigen::VectorXd& lo,
                         Eigen::VectorXd& hi) {
  const RobotModel& m = p.model;
  lo = Eigen::VectorXd::Constant(L.size(), -1e3);
  hi = Eigen::VectorXd::Constant(L.size(), 1e3);
  const int n = L.n_nodes();

  for (int i = 0; i < n; ++i) {
    // Centroidal states.
    lo.segment<3>(L.r(i)) = Eigen::Vector3d(-5, -5, 0.0);
    hi.segment<3>(L.r(i)) = Eigen::Vector3d(5, 5, 2.0);
    lo.segment<3>(L.rdot(i)).setConstant(-8.0);
    hi.segment<3>(L.rdot(i)).setConstant(8.0);
    lo.segment<3>(L.h(i)).setConstant(-15.0);
    hi.segment<3>(L.h(i)).setConstant(15.0);
    for (int leg = 0; leg < kNumLegs; ++leg) {
      lo.segment<3>(L.c(i, leg)) = Eigen::Vector3d(-5, -5, -0.5);
      hi.segment<3>(L.c(i, leg)) = Eigen::Vector3d(5, 5, 2.0);
    }
    // Kinematic states.
    lo.segment<3>(L.q(i)) = Eigen::Vector3d(-5, -5, 0.05);
    hi.segment<3>(L.q(i)) = Eigen::Vector3d(5, 5, 1.5);
    lo[L.q(i) + 3] = -2.0 * M_PI;
    hi[L.q(i) + 3] = 2.0 * M_PI;
    lo[L.q(i) + 4] = -0.6;
    hi[L.q(i) + 4] = 0.6;
    lo[L.q(i) + 5] = -0.6;
    hi[L.q(i) + 5] = 0.6;
    for (int j = 0; j < kNumJoints; ++j) {
      lo[L.q(i) + 6 + j] = m.joint_limits[j][0];
      hi[L.q(i) + 6 + j] = m.joint_limits[j][1];
    }
    lo.segment<6>(L.qd(i)).setConstant(-10.0);
    hi.segment<6>(L.qd(i)).setConstant(10.0);
    lo.segment<12>(L.qd(i) + 6).setConstant(-30.0);
    hi.segment<12>(L.qd(i) + 6).setConstant(30.0);
  }

  // Stance feet stay planted on the initial footholds.
  const auto footholds = initial_footholds(p);
  for (int i = 0; i <= L.n_to - 1; ++i)
    for (int leg = 0; leg < kNumLegs; ++leg) {
      lo.segment<3>(L.c(i, leg)) = footholds[leg];
      hi.segment<3>(L.c(i, leg)) = footholds[leg];
    }

  // Node 0 is the given state.
  {
    KinematicState s = p.initial_state;
    const auto ev = kinematics_eval(m, s);
    lo.segment<18>(L.q(0)) = s.q;
    hi.segment<18>(L.q(0)) = s.q;
    lo.segment<18>(L.qd(0)) = s.q_dot;
    hi.segment<18>(L.qd(0)) = s.q_dot;
    lo.segment<3>(L.r(0)) = to_eigen(ev.com);
    hi.segment<3>(L.r(0)) = to_eigen(ev.com);
    lo.segment<3>(L.rdot(0)) = to_eigen(ev.com_vel);
    hi.segment<3>(L.rdot(0)) = to_eigen(ev.com_vel);
    lo.segment<3>(L.h(0)) = to_eigen(ev.momentum);
    hi.segment<3>(L.h(0)) = to_eigen(ev.momentum);
  }

  // Landing node: CoM box, yaw window, level posture, feet at surface height.
  {
    const int i = n - 1;
    lo.segment<3>(L.r(i)) = p.landing.center - p.landing.half_extent;
    hi.segment<3>(L.r(i)) = p.landing.center + p.landing.half_extent;
    lo[L.q(i) + 3] = p.landing.yaw_center - p.landing.yaw_half_width;
    hi[L.q(i) + 3] = p.landing.yaw_center + p.landing.yaw_half_width;
    lo[L.q(i) + 4] = -0.3;
    hi[L.q(i) + 4] = 0.3;
    lo[L.q(i) + 5] = -0.3;
    hi[L.q(i) + 5] = 0.3;
    for (int leg = 0; leg < kNumLegs; ++leg) {
      lo[L.c(i, leg) + 2] = p.landing.foot_height;
      hi[L.c(i, leg) + 2] = p.landing.foot_height;
    }
  }

  // Forces: pyramid interior via bounds on f_z >= 0 and |f_xy| <= limit.
  for (int k = 0; k < L.n_force_intervals(); ++k)
    for (int leg = 0; leg < kNumLegs; ++leg) {
      lo.segment<3>(L.f(k, leg)) = Eigen::Vector3d(-m.force_limit, -m.force_limit, 0.0);
      hi.segment<3>(L.f(k, leg)).setConstant(m.force_limit);
    }

  lo[L.tfl()] = p.flight_time_min;
  hi[L.tfl()] = p.flight_time_max;
}

inline void add_families(const JumpProblem& p, const Layout& L, Problem& prob) {
  prob.families.push_back(std::make_unique<DynLinFamily>(p, L));
  prob.families.push_back(std::make_unique<DynAngFamily>(p, L));
  prob.families.push_back(std::make_unique<KinIntFamily>(p, L));
  prob.families.push_back(std::make_unique<KinAgreeFamily>(p, L));
  prob.families.push_back(std::make_unique<FrictionFamily>(p, L));
  prob.families.push_back(std::make_unique<ClearanceFamily>(p, L));
  prob.families.push_back(std::make_unique<LandingIneqFamily>(p, L));
  if (p.landing.velocity_dir)
    prob.families.push_back(std::make_unique<LandingEqFamily>(p, L));
}

inline Eigen::VectorXd build_scales(const JumpProblem& p, const Layout& L) {
  Eigen::VectorXd s = Eigen::VectorXd::Ones(L.size());
  const double fs = p.model.mass * kGravity;
  for (int k = 0; k < L.n_force_intervals(); ++k)
    for (int leg = 0; leg < kNumLegs; ++leg) s.segment<3>(L.f(k, leg)).setConstant(fs);
  s[L.tfl()] = 0.25;
  return s;
}

}  // namespace detail

// Regularizing cost: force effort, joint rates, and light tracking of the
// reference joints to keep the kinematic chain well-posed.
inline std::function<double(const Eigen::VectorXd&, Eigen::VectorXd&)> make_cost(
    const JumpProblem& p, const Layout& L, Eigen::VectorXd reference) {
  const double f_norm = p.model.mass * kGravity;
  return [&p, L, ref = std::move(reference), f_norm](const Eigen::VectorXd& x,
                                                     Eigen::VectorXd& g) {
    double cost = 0.0;
    const CostWeights& w = p.weights;
    for (int k = 0; k < L.n_force_intervals(); ++k)
      for (int leg = 0; leg < kNumLegs; ++leg) {
        const Eigen::Vector3d f = x.segment<3>(L.f(k, leg)) / f_norm;
        cost += w.force_effort * f.squaredNorm();
        g.segment<3>(L.f(k, leg)) += 2.0 * w.force_effort * f / f_norm;
      }
    for (int i = 0; i < L.n_nodes(); ++i) {
      const auto qd = x.segment<12>(L.qd(i) + 6);
      cost += w.joint_rate * qd.squaredNorm();
      g.segment<12>(L.qd(i) + 6) += 2.0 * w.joint_rate * qd;
      const Eigen::VectorXd dq =
          x.segment<12>(L.q(i) + 6) - ref.segment<12>(L.q(i) + 6);
      cost += w.joint_tracking * dq.squaredNorm();
      g.segment<12>(L.q(i) + 6) += 2.0 * w.joint_tracking * dq;
    }
    return cost;
  };
}

inline SolveOptions default_jump_solve_options() {
  SolveOptions o;
  o.max_outer = 20;
  o.max_inner = 4000;
  o.penalty_initial = 10.0;
  o.penalty_scale = 10.0;
  o.penalty_max = 1e6;
  o.tol_constraint = 1e-4;
  o.tol_gradient = 1e-3;
  o.lbfgs_memory = 30;
  return o;
}

inline TrajOptSolution unpack_solution(const JumpProblem& p, const Eigen::VectorXd& x,
                                       const SolveReport& rep) {
  const Layout L = detail::layout_of(p);
  TrajOptSolution sol;
  sol.status =
      rep.status == SolveStatus::Converged ? JumpStatus::Converged : JumpStatus::NotConverged;
  sol.report = rep;
  sol.flight_duration = x[L.tfl()];
  sol.takeoff_duration = p.takeoff_duration;
  for (int i = 0; i < L.n_nodes(); ++i) {
    CentroidalState d;
    d.r = x.segment<3>(L.r(i));
    d.r_dot = x.segment<3>(L.rdot(i));
    d.h = x.segment<3>(L.h(i));
    for (int leg = 0; leg < kNumLegs; ++leg) d.c[leg] = x.segment<3>(L.c(i, leg));
    sol.dyn.push_back(d);
    KinematicState s;
    s.q = x.segment<18>(L.q(i));
    s.q_dot = x.segment<18>(L.qd(i));
    sol.kin.push_back(s);
  }
  for (int k = 0; k < L.n_force_intervals(); ++k) {
    ControlForces f;
    for (int leg = 0; leg < kNumLegs; ++leg) f.f[leg] = x.segment<3>(L.f(k, leg));
    sol.forces.push_back(f);
  }
  return sol;
}

inline Eigen::VectorXd pack_solution(const JumpProblem& p, const TrajOptSolution& sol) {
  const Layout L = detail::layout_of(p);
  if (static_cast<int>(sol.dyn.size()) != L.n_nodes() ||
      static_cast<int>(sol.kin.size()) != L.n_nodes() ||
      static_cast<int>(sol.forces.size()) != L.n_force_intervals())
    throw DimensionMismatch("solution does not match the problem discretization");
  Eigen::VectorXd x(L.size());
  for (int i = 0; i < L.n_nodes(); ++i) {
    x.segment<3>(L.r(i)) = sol.dyn[i].r;
    x.segment<3>(L.rdot(i)) = sol.dyn[i].r_dot;
    x.segment<3>(L.h(i)) = sol.dyn[i].h;
    for (int leg = 0; leg < kNumLegs; ++leg) x.segment<3>(L.c(i, leg)) = sol.dyn[i].c[leg];
    x.segment<18>(L.q(i)) = sol.kin[i].q;
    x.segment<18>(L.qd(i)) = sol.kin[i].q_dot;
  }
  for (int k = 0; k < L.n_force_intervals(); ++k)
    for (int leg = 0; leg < kNumLegs; ++leg) x.segment<3>(L.f(k, leg)) = sol.forces[k].f[leg];
  x[L.tfl()] = sol.flight_duration;
  return x;
}

inline std::vector<double> node_times(const JumpProblem& p, double flight_duration) {
  const Layout L = detail::layout_of(p);
  std::vector<double> t(L.n_nodes(), 0.0);
  for (int k = 0; k < L.n_intervals(); ++k)
    t[k + 1] = t[k] + L.dt(k, p.takeoff_duration, flight_duration);
  return t;
}

inline TrajOptSolution solve_jump(const JumpProblem& p,
                                  const SolveOptions& options = default_jump_solve_options()) {
  validate_problem(p);
  const Layout L = detail::layout_of(p);

  Problem prob;
  prob.n = L.size();
  detail::build_bounds(p, L, prob.lower, prob.upper);
  prob.x_scale = detail::build_scales(p, L);
  Eigen::VectorXd x0 = build_reference(p);
  prob.cost = make_cost(p, L, x0);
  detail::add_families(p, L, prob);

  const auto start = std::chrono::steady_clock::now();
  auto [x, rep] = AugLagSolver(options).solve(prob, x0);
  const auto stop = std::chrono::steady_clock::now();

  TrajOptSolution sol = unpack_solution(p, x, rep);
  sol.solve_seconds = std::chrono::duration<double>(stop - start).count();
  return sol;
}

// --- independent residual audit ---

struct ValidationRow {
  std::string family;
  double max_violation = 0.0;
};

struct ValidationReport {
  bool ok = false;
  double tolerance = 1e-4;
  std::vector<ValidationRow> rows;

  double max_violation() const {
    double v = 0.0;
    for (const auto& r : rows) v = std::max(v, r.max_violation);
    return v;
  }
  const ValidationRow* row(std::string_view name) const {
    for (const auto& r : rows)
      if (r.family == name) return &r;
    return nullptr;
  }
};

// Recomputes every residual family from the typed solution, including the
// pinned quantities the solver enforces through bounds.
inline ValidationReport validate_solution(const JumpProblem& p, const TrajOptSolution& sol,
                                          double tolerance = 1e-4) {
  const Layout L = detail::layout_of(p);
  const Eigen::VectorXd x = pack_solution(p, sol);
  ValidationReport rep;
  rep.tolerance = tolerance;

  auto add_family = [&](const ConstraintFamily& fam) {
    Eigen::VectorXd r(fam.dim());
    fam.eval(x, r);
    double v = 0.0;
    for (int i = 0; i < r.size(); ++i)
      v = std::max(v, fam.is_inequality() ? std::max(0.0, r[i]) : std::abs(r[i]));
    rep.rows.push_back({std::string(fam.name()), v});
  };
  add_family(detail::DynLinFamily(p, L));
  add_family(detail::DynAngFamily(p, L));
  add_family(detail::KinIntFamily(p, L));

  // Split the agreement rows into their three reported families.
  {
    detail::KinAgreeFamily fam(p, L);
    Eigen::VectorXd r(fam.dim());
    fam.eval(x, r);
    double v_com = 0.0, v_feet = 0.0, v_mom = 0.0;
    for (int i = 0; i < L.n_nodes(); ++i) {
      v_com = std::max(v_com, r.segment<3>(18 * i).cwiseAbs().maxCoeff());
      v_feet = std::max(v_feet, r.segment<12>(18 * i + 3).cwiseAbs().maxCoeff());
      v_mom = std::max(v_mom, r.segment<3>(18 * i + 15).cwiseAbs().maxCoeff());
    }
    rep.rows.push_back({"agree_com", v_com});
    rep.rows.push_back({"agree_feet", v_feet});
    rep.rows.push_back({"agree_mom", v_mom});
  }

  add_family(detail::FrictionFamily(p, L));
  add_family(detail::ClearanceFamily(p, L));
  add_family(detail::LandingIneqFamily(p, L));
  if (p.landing.velocity_dir) add_family(detail::LandingEqFamily(p, L));

  // Stance pins and the initial state.
  {
    const auto footholds = detail::initial_footholds(p);
    double v = 0.0;
    for (int i = 0; i <= L.n_to - 1; ++i)
      for (int leg = 0; leg < kNumLegs; ++leg)
        v = std::max(v, (sol.dyn[i].c[leg] - footholds[leg]).cwiseAbs().maxCoeff());
    rep.rows.push_back({"stance", v});

    const auto ev = kinematics_eval(p.model, p.initial_state);
    double vi = (sol.kin[0].q - p.initial_state.q).cwiseAbs().maxCoeff();
    vi = std::max(vi, (sol.kin[0].q_dot - p.initial_state.q_dot).cwiseAbs().maxCoeff());
    vi = std::max(vi, (sol.dyn[0].r - to_eigen(ev.com)).cwiseAbs().maxCoeff());
    vi = std::max(vi, (sol.dyn[0].r_dot - to_eigen(ev.com_vel)).cwiseAbs().maxCoeff());
    vi = std::max(vi, (sol.dyn[0].h - to_eigen(ev.momentum)).cwiseAbs().maxCoeff());
    rep.rows.push_back({"initial", vi});
  }

  // Landing pins and windows handled by bounds.
  {
    const int i = L.n_nodes() - 1;
    double v = 0.0;
    const Eigen::Vector3d d = (sol.dyn[i].r - p.landing.center).cwiseAbs() -
                              p.landing.half_extent;
    v = std::max(v, d.maxCoeff());
    v = std::max(v, std::abs(sol.kin[i].q[3] - p.landing.yaw_center) -
                        p.landing.yaw_half_width);
    for (int leg = 0; leg < kNumLegs; ++leg)
      v = std::max(v, std::abs(sol.dyn[i].c[leg].z() - p.landing.foot_height));
    rep.rows.push_back({"landing_box", std::max(0.0, v)});
  }

  rep.ok = rep.max_violation() <= tolerance;
  return rep;
}

// --- serialization ---

inline void to_json(nlohmann::json& j, const LandingSet& s) {
  j = {{"center", {s.center.x(), s.center.y(), s.center.z()}},
       {"half_extent", {s.half_extent.x(), s.half_extent.y(), s.half_extent.z()}},
       {"yaw_center", s.yaw_center},
       {"yaw_half_width", s.yaw_half_width},
       {"foot_height", s.foot_height}};
  if (s.velocity_dir) j["velocity_dir"] = {s.velocity_dir->x(), s.velocity_dir->y()};
}

inline void from_json(const nlohmann::json& j, LandingSet& s) {
  const auto& c = j.at("center");
  s.center = Eigen::Vector3d(c.at(0), c.at(1), c.at(2));
  const auto& e = j.at("half_extent");
  s.half_extent = Eigen::Vector3d(e.at(0), e.at(1), e.at(2));
  j.at("yaw_center").get_to(s.yaw_center);
  j.at("yaw_half_width").get_to(s.yaw_half_width);
  j.at("foot_height").get_to(s.foot_height);
  if (j.contains("velocity_dir")) {
    const auto& v = j.at("velocity_dir");
    s.velocity_dir = Eigen::Vector2d(v.at(0), v.at(1));
  } else {
    s.velocity_dir.reset();
  }
}

inline void to_json(nlohmann::json& j, const CostWeights& w) {
  j = {{"force_effort", w.force_effort},
       {"joint_rate", w.joint_rate},
       {"joint_tracking", w.joint_tracking}};
}

inline void from_json(const nlohmann::json& j, CostWeights& w) {
  if (j.contains("force_effort")) j.at("force_effort").get_to(w.force_effort);
  if (j.contains("joint_rate")) j.at("joint_rate").get_to(w.joint_rate);
  if (j.contains("joint_tracking")) j.at("joint_tracking").get_to(w.joint_tracking);
}

inline void to_json(nlohmann::json& j, const JumpProblem& p) {
  nlohmann::json init = {{"q", std::vector<double>(p.initial_state.q.data(),
                                                   p.initial_state.q.data() + kDof)},
                         {"q_dot", std::vector<double>(p.initial_state.q_dot.data(),
                                                       p.initial_state.q_dot.data() + kDof)}};
  j = {{"model", p.model},
       {"terrain", p.terrain},
       {"initial_state", init},
       {"landing", p.landing},
       {"n_takeoff_nodes", p.n_takeoff_nodes},
       {"n_flight_nodes", p.n_flight_nodes},
       {"takeoff_duration", p.takeoff_duration},
       {"clearance_margin", p.clearance_margin},
       {"surface_tol", p.surface_tol},
       {"landing_speed_max", p.landing_speed_max},
       {"flight_time_min", p.flight_time_min},
       {"flight_time_max", p.flight_time_max},
       {"weights", p.weights}};
}

inline void from_json(const nlohmann::json& j, JumpProblem& p) {
  j.at("model").get_to(p.model);
  j.at("terrain").get_to(p.terrain);
  const auto& init = j.at("initial_state");
  for (int i = 0; i < kDof; ++i) {
    p.initial_state.q[i] = init.at("q").at(i);
    p.initial_state.q_dot[i] = init.at("q_dot").at(i);
  }
  j.at("landing").get_to(p.landing);
  if (j.contains("n_takeoff_nodes")) j.at("n_takeoff_nodes").get_to(p.n_takeoff_nodes);
  if (j.contains("n_flight_nodes")) j.at("n_flight_nodes").get_to(p.n_flight_nodes);
  if (j.contains("takeoff_duration")) j.at("takeoff_duration").get_to(p.takeoff_duration);
  if (j.contains("clearance_margin")) j.at("clearance_margin").get_to(p.clearance_margin);
  if (j.contains("surface_tol")) j.at("surface_tol").get_to(p.surface_tol);
  if (j.contains("landing_speed_max")) j.at("landing_speed_max").get_to(p.landing_speed_max);
  if (j.contains("flight_time_min")) j.at("flight_time_min").get_to(p.flight_time_min);
  if (j.contains("flight_time_max")) j.at("flight_time_max").get_to(p.flight_time_max);
  if (j.contains("weights")) j.at("weights").get_to(p.weights);
}

inline void to_json(nlohmann::json& j, const TrajOptSolution& sol) {
  auto vec3 = [](const Eigen::Vector3d& v) {
    return nlohmann::json::array({v.x(), v.y(), v.z()});
  };
  j = nlohmann::json::object();
  j["status"] = sol.status == JumpStatus::Converged ? "converged" : "not_converged";
  j["flight_duration"] = sol.flight_duration;
  j["takeoff_duration"] = sol.takeoff_duration;
  j["solve_seconds"] = sol.solve_seconds;
  j["max_violation"] = sol.report.max_violation;
  auto& nodes = j["nodes"] = nlohmann::json::array();
  for (std::size_t i = 0; i < sol.dyn.size(); ++i) {
    nlohmann::json nd;
    nd["r"] = vec3(sol.dyn[i].r);
    nd["r_dot"] = vec3(sol.dyn[i].r_dot);
    nd["h"] = vec3(sol.dyn[i].h);
    for (int leg = 0; leg < kNumLegs; ++leg) nd["c"].push_back(vec3(sol.dyn[i].c[leg]));
    nd["q"] = std::vector<double>(sol.kin[i].q.data(), sol.kin[i].q.data() + kDof);
    nd["q_dot"] =
        std::vector<double>(sol.kin[i].q_dot.data(), sol.kin[i].q_dot.data() + kDof);
    nodes.push_back(nd);
  }
  auto& fs = j["forces"] = nlohmann::json::array();
  for (const auto& fk : sol.forces) {
    nlohmann::json row = nlohmann::json::array();
    for (int leg = 0; leg < kNumLegs; ++leg) row.push_back(vec3(fk.f[leg]));
    fs.push_back(row);
  }
}

inline void from_json(const nlohmann::json& j, TrajOptSolution& sol) {
  sol = TrajOptSolution{};
  sol.status =
      j.at("status") == "converged" ? JumpStatus::Converged : JumpStatus::NotConverged;
  j.at("flight_duration").get_to(sol.flight_duration);
  j.at("takeoff_duration").get_to(sol.takeoff_duration);
  if (j.contains("solve_seconds")) j.at("solve_seconds").get_to(sol.solve_seconds);
  auto vec3 = [](const nlohmann::json& a) {
    return Eigen::Vector3d(a.at(0), a.at(1), a.at(2));
  };
  for (const auto& nd : j.at("nodes")) {
    CentroidalState d;
    d.r = vec3(nd.at("r"));
    d.r_dot = vec3(nd.at("r_dot"));
    d.h = vec3(nd.at("h"));
    for (int leg = 0; leg < kNumLegs; ++leg) d.c[leg] = vec3(nd.at("c").at(leg));
    sol.dyn.push_back(d);
    KinematicState s;
    for (int i = 0; i < kDof; ++i) {
      s.q[i] = nd.at("q").at(i);
      s.q_dot[i] = nd.at("q_dot").at(i);
    }
    sol.kin.push_back(s);
  }
  for (const auto& row : j.at("forces")) {
    ControlForces f;
    for (int leg = 0; leg < kNumLegs; ++leg) f.f[leg] = vec3(row.at(leg));
    sol.forces.push_back(f);
  }
}

inline void write_solution_csv(const std::string& path, const JumpProblem& p,
                               const TrajOptSolution& sol) {
  std::ofstream out(path);
  if (!out) throw BadInput("cannot open csv output path");
  out << "node,t,phase";
  for (const char* v : {"r", "r_dot", "h"})
    for (const char* a : {"x", "y", "z"}) out << "," << v << "_" << a;
  for (int leg = 0; leg < kNumLegs; ++leg)
    for (const char* a : {"x", "y", "z"}) out << ",c" << leg << "_" << a;
  for (int leg = 0; leg < kNumLegs; ++leg)
    for (const char* a : {"x", "y", "z"}) out << ",f" << leg << "_" << a;
  for (int i = 0; i < kDof; ++i) out << ",q" << i;
  for (int i = 0; i < kDof; ++i) out << ",qd" << i;
  out << "\n";
  const auto t = node_times(p, sol.flight_duration);
  out.precision(12);
  for (std::size_t i = 0; i < sol.dyn.size(); ++i) {
    out << i << "," << t[i] << ","
        << (static_cast<int>(i) <= p.n_takeoff_nodes - 1 ? "stance" : "flight");
    const auto& d = sol.dyn[i];
    for (const auto& v : {d.r, d.r_dot, d.h})
      out << "," << v.x() << "," << v.y() << "," << v.z();
    for (int leg = 0; leg < kNumLegs; ++leg)
      out << "," << d.c[leg].x() << "," << d.c[leg].y() << "," << d.c[leg].z();
    for (int leg = 0; leg < kNumLegs; ++leg) {
      const Eigen::Vector3d f =
          i < sol.forces.size() ? sol.forces[i].f[leg] : Eigen::Vector3d::Zero();
      out << "," << f.x() << "," << f.y() << "," << f.z();
    }
    for (int k = 0; k < kDof; ++k) out << "," << sol.kin[i].q[k];
    for (int k = 0; k < kDof; ++k) out << "," << sol.kin[i].q_dot[k];
    out << "\n";
  }
}

}  // namespace leap
