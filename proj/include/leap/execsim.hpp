#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <nlohmann/json.hpp>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "leap/errors.hpp"
#include "leap/model.hpp"
#include "leap/rng.hpp"
#include "leap/terrain.hpp"
#include "leap/trajopt.hpp"

namespace leap {

// Per-dimension standard deviations of the realized jump parameters
// (meters / radians), waypoint tracking noise for walk segments, and the
// seed pinning the draw sequence. Draws are truncated at 3 sigma.
struct ExecutionNoise {
  double h_obs_std = 0.0;
  double d_i_std = 0.0;
  double psi_i_std = 0.0;
  double d_f_std = 0.0;
  double psi_f_std = 0.0;
  double tracking_std = 0.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (h_obs_std < 0.0 || d_i_std < 0.0 || psi_i_std < 0.0 || d_f_std < 0.0 ||
        psi_f_std < 0.0 || tracking_std < 0.0)
      throw BadInput("noise stds must be nonnegative");
  }
};

inline void to_json(nlohmann::json& j, const ExecutionNoise& n) {
  j = {{"h_obs_std", n.h_obs_std}, {"d_i_std", n.d_i_std},
       {"psi_i_std", n.psi_i_std}, {"d_f_std", n.d_f_std},
       {"psi_f_std", n.psi_f_std}, {"tracking_std", n.tracking_std},
       {"seed", n.seed}};
}

inline void from_json(const nlohmann::json& j, ExecutionNoise& n) {
  j.at("h_obs_std").get_to(n.h_obs_std);
  j.at("d_i_std").get_to(n.d_i_std);
  j.at("psi_i_std").get_to(n.psi_i_std);
  j.at("d_f_std").get_to(n.d_f_std);
  j.at("psi_f_std").get_to(n.psi_f_std);
  if (j.contains("tracking_std")) j.at("tracking_std").get_to(n.tracking_std);
  if (j.contains("seed")) j.at("seed").get_to(n.seed);
  n.validate();
}

enum class SimOutcome { Landed, Fell, Collided, MissedSurface };

inline std::string_view outcome_name(SimOutcome o) {
  switch (o) {
    case SimOutcome::Landed: return "landed";
    case SimOutcome::Fell: return "fell";
    case SimOutcome::Collided: return "collided";
    case SimOutcome::MissedSurface: return "missed_surface";
  }
  return "missed_surface";
}

inline SimOutcome outcome_from_name(std::string_view s) {
  if (s == "landed") return SimOutcome::Landed;
  if (s == "fell") return SimOutcome::Fell;
  if (s == "collided") return SimOutcome::Collided;
  if (s == "missed_surface") return SimOutcome::MissedSurface;
  throw BadInput("unknown sim outcome name");
}

struct SimSample {
  double t = 0.0;
  Eigen::Vector3d r = Eigen::Vector3d::Zero();
  Eigen::Vector3d v = Eigen::Vector3d::Zero();
  Eigen::Vector3d h = Eigen::Vector3d::Zero();
  double roll = 0.0, pitch = 0.0, yaw = 0.0;
};

struct SimResult {
  SimOutcome outcome = SimOutcome::MissedSurface;
  Eigen::Vector3d final_com = Eigen::Vector3d::Zero();
  double roll = 0.0, pitch = 0.0, yaw = 0.0;
  // Worst airborne foot-below-terrain depth; negative means the feet always
  // cleared the ground until contact. Stance samples are excluded since the
  // stance feet rest on the terrain by definition.
  double max_penetration = -std::numeric_limits<double>::infinity();
  double landing_time = 0.0;
  // Realized parameter errors, in draw order:
  // [dh_obs, dd_i, dpsi_i, dd_f, dpsi_f].
  Eigen::Matrix<double, 5, 1> param_shift = Eigen::Matrix<double, 5, 1>::Zero();
  std::vector<SimSample> trace;
};

inline void to_json(nlohmann::json& j, const SimResult& r) {
  j = {{"outcome", std::string(outcome_name(r.outcome))},
       {"final_com", {r.final_com.x(), r.final_com.y(), r.final_com.z()}},
       {"roll", r.roll},
       {"pitch", r.pitch},
       {"yaw", r.yaw},
       {"max_penetration", r.max_penetration},
       {"landing_time", r.landing_time},
       {"param_shift", {r.param_shift[0], r.param_shift[1], r.param_shift[2],
                        r.param_shift[3], r.param_shift[4]}}};
}

inline void write_trace_csv(std::ostream& os, const SimResult& r) {
  os << "t,x,y,z,vx,vy,vz,hx,hy,hz,roll,pitch,yaw\n";
  for (const auto& s : r.trace) {
    os << s.t << ',' << s.r.x() << ',' << s.r.y() << ',' << s.r.z() << ','
       << s.v.x() << ',' << s.v.y() << ',' << s.v.z() << ',' << s.h.x() << ','
       << s.h.y() << ',' << s.h.z() << ',' << s.roll << ',' << s.pitch << ','
       << s.yaw << '\n';
  }
}

namespace detail {

inline Eigen::Matrix3d sim_rotz(double a) {
  return Eigen::AngleAxisd(a, Eigen::Vector3d::UnitZ()).toRotationMatrix();
}

// Base Euler rates that make the full-model centroidal momentum equal the
// simulated one, given the replayed joint motion. Momentum is linear in the
// generalized rates, so three unit-rate evaluations assemble the base block
// and an SVD solve stays bounded even at a gimbal-locked pitch.
inline Eigen::Vector3d sim_base_rates(const RobotModel& m, const Vec18& q,
                                      const Eigen::Matrix<double, 12, 1>& qd_j,
                                      const Eigen::Vector3d& h) {
  Vec18 qd = Vec18::Zero();
  qd.tail<12>() = qd_j;
  const Eigen::Vector3d h_joint =
      to_eigen(kinematics_eval<double>(m, q.data(), qd.data()).momentum);
  Eigen::Matrix3d basis;
  qd.setZero();
  for (int k = 0; k < 3; ++k) {
    qd[3 + k] = 1.0;
    basis.col(k) =
        to_eigen(kinematics_eval<double>(m, q.data(), qd.data()).momentum);
    qd[3 + k] = 0.0;
  }
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(
      basis, Eigen::ComputeFullU | Eigen::ComputeFullV);
  svd.setThreshold(1e-8);
  return svd.solve(h - h_joint);
}

// Forward replay of a solved jump against a terrain height function, with
// the plan perturbed by one realized noise draw. Semi-implicit Euler at
// roughly 1 kHz; stance substeps are aligned to the force intervals so the
// piecewise-constant profile is sampled exactly.
template <typename HeightFn>
SimResult simulate_core(const TrajOptSolution& sol, const RobotModel& model,
                        HeightFn&& ground, const ExecutionNoise& noise) {
  noise.validate();
  const int n_nodes = static_cast<int>(sol.dyn.size());
  const int n_to = static_cast<int>(sol.forces.size()) + 1;
  const int n_fl = n_nodes - n_to;
  if (n_to < 2 || n_fl < 2 || static_cast<int>(sol.kin.size()) != n_nodes)
    throw BadInput("solution is missing nodes or forces");
  if (!(sol.takeoff_duration > 0.0) || !(sol.flight_duration > 0.0))
    throw BadInput("solution durations must be positive");

  // Fixed draw order, so one seed always names one realization.
  Rng rng(noise.seed);
  Eigen::Matrix<double, 5, 1> d;
  d[0] = rng.gauss_truncated(noise.h_obs_std);
  d[1] = rng.gauss_truncated(noise.d_i_std);
  d[2] = rng.gauss_truncated(noise.psi_i_std);
  d[3] = rng.gauss_truncated(noise.d_f_std);
  d[4] = rng.gauss_truncated(noise.psi_f_std);

  // Approach-distance error shifts the start pose along the jump heading;
  // initial-yaw error rotates the whole plan about the start CoM.
  Eigen::Vector2d u2 = (sol.dyn.back().r - sol.dyn.front().r).head<2>();
  if (u2.norm() < 1e-6)
    u2 = {std::cos(sol.kin.front().q[3]), std::sin(sol.kin.front().q[3])};
  else
    u2.normalize();
  const Eigen::Vector3d shift = -d[1] * Eigen::Vector3d(u2.x(), u2.y(), 0.0);
  const Eigen::Vector3d r0_plan = sol.dyn.front().r;
  const Eigen::Matrix3d Ri = sim_rotz(d[2]);
  auto place = [&](const Eigen::Vector3d& p) -> Eigen::Vector3d {
    return r0_plan + shift + Ri * (p - r0_plan);
  };

  // Obstacle-height and landing-distance errors scale the thrust, the
  // landing-yaw error steers it. The denominators are reference scales for
  // a desk-size jump; they calibrate noise magnitude to thrust change.
  const double kz = std::clamp(1.0 + d[0] / 0.35, 0.5, 1.5);
  const double kxy = std::clamp(1.0 + d[3] / 0.60, 0.5, 1.5);
  const Eigen::Matrix3d Rf = sim_rotz(0.5 * d[4]);
  const int n_force = n_to - 1;
  std::vector<std::array<Eigen::Vector3d, kNumLegs>> force(n_force);
  for (int k = 0; k < n_force; ++k)
    for (int leg = 0; leg < kNumLegs; ++leg) {
      const Eigen::Vector3d f = Ri * sol.forces[k].f[leg];
      const Eigen::Vector3d fh = Rf * Eigen::Vector3d(f.x(), f.y(), 0.0);
      force[k][leg] = {kxy * fh.x(), kxy * fh.y(), kz * f.z()};
    }

  std::array<Eigen::Vector3d, kNumLegs> stance;
  for (int leg = 0; leg < kNumLegs; ++leg)
    stance[leg] = place(sol.dyn.front().c[leg]);

  const double dt_to = sol.takeoff_duration / (n_to - 1);
  const double dt_fl = sol.flight_duration / (n_fl - 1);
  const double t_liftoff = sol.takeoff_duration;

  // Planned foot-to-CoM offsets over the airborne nodes, replayed
  // kinematically for contact detection.
  std::vector<std::array<Eigen::Vector3d, kNumLegs>> off(n_fl + 1);
  for (int j = 0; j <= n_fl; ++j) {
    const int i = n_to - 1 + j;
    for (int leg = 0; leg < kNumLegs; ++leg)
      off[j][leg] = Ri * (sol.dyn[i].c[leg] - sol.dyn[i].r);
  }
  auto foot_offset = [&](double t, int leg) -> Eigen::Vector3d {
    const double s =
        std::clamp((t - t_liftoff) / dt_fl, 0.0, static_cast<double>(n_fl));
    const int j = std::min(static_cast<int>(s), n_fl - 1);
    const double w = s - j;
    return (1.0 - w) * off[j][leg] + w * off[j + 1][leg];
  };

  // Node times and planned joint motion. The base orientation is integrated
  // from momentum below; the joints are replayed from the plan, piecewise
  // linear to match the plan's explicit-Euler kinematic integration.
  std::vector<double> node_t(n_nodes);
  for (int i = 0; i < n_nodes; ++i)
    node_t[i] = i < n_to ? i * dt_to : t_liftoff + (i - (n_to - 1)) * dt_fl;
  auto joint_state = [&](double t, Eigen::Matrix<double, 12, 1>& qj,
                         Eigen::Matrix<double, 12, 1>& qdj) {
    int i = static_cast<int>(std::upper_bound(node_t.begin(), node_t.end(), t) -
                             node_t.begin()) -
            1;
    i = std::clamp(i, 0, n_nodes - 2);
    const double span = node_t[i + 1] - node_t[i];
    const double w = std::clamp((t - node_t[i]) / span, 0.0, 1.0);
    const auto a = sol.kin[i].q.tail<12>(), b = sol.kin[i + 1].q.tail<12>();
    qj = (1.0 - w) * a + w * b;
    qdj = t > node_t.back() ? Eigen::Matrix<double, 12, 1>::Zero().eval()
                            : ((b - a) / span).eval();
  };

  Eigen::Vector3d r = place(r0_plan);
  Eigen::Vector3d v = Ri * sol.dyn.front().r_dot;
  Eigen::Vector3d h = Ri * sol.dyn.front().h;
  const Vec18& q0 = sol.kin.front().q;
  Eigen::Vector3d ypr(q0[3] + d[2], q0[4], q0[5]);

  const double mass = model.mass;
  const Eigen::Vector3d grav(0.0, 0.0, -kGravity);
  const double start_z = r.z();
  const double target_z = sol.dyn.back().r.z();
  double surface_z = 0.0;
  for (int leg = 0; leg < kNumLegs; ++leg)
    surface_z += sol.dyn.back().c[leg].z() / kNumLegs;

  SimResult res;
  res.param_shift = d;
  res.trace.reserve(2048);

  auto record = [&](double t) {
    SimSample s;
    s.t = t;
    s.r = r;
    s.v = v;
    s.h = h;
    s.yaw = ypr[0];
    s.pitch = ypr[1];
    s.roll = ypr[2];
    res.trace.push_back(s);
  };
  auto finish = [&](SimOutcome o, double t) {
    res.outcome = o;
    res.landing_time = t;
    res.final_com = r;
    res.yaw = ypr[0];
    res.pitch = ypr[1];
    res.roll = ypr[2];
    return res;
  };

  record(0.0);

  // A start pose shoved into the terrain is an immediate collision.
  for (int leg = 0; leg < kNumLegs; ++leg) {
    const double pen = ground(stance[leg].x(), stance[leg].y()) - stance[leg].z();
    if (pen > 0.02) {
      res.max_penetration = std::max(res.max_penetration, pen);
      return finish(SimOutcome::Collided, 0.0);
    }
  }

  auto advance = [&](double t, double dt,
                     const std::array<Eigen::Vector3d, kNumLegs>* f) {
    Eigen::Vector3d acc = grav;
    Eigen::Vector3d tau = Eigen::Vector3d::Zero();
    if (f)
      for (int leg = 0; leg < kNumLegs; ++leg) {
        acc += (*f)[leg] / mass;
        tau += (stance[leg] - r).cross((*f)[leg]);
      }
    v += dt * acc;
    r += dt * v;
    h += dt * tau;
    Eigen::Matrix<double, 12, 1> qj, qdj;
    joint_state(t, qj, qdj);
    Vec18 q;
    q.head<3>() = r;
    q.segment<3>(3) = ypr;
    q.tail<12>() = qj;
    ypr += dt * sim_base_rates(model, q, qdj, h);
  };

  for (int k = 0; k < n_force; ++k) {
    const int n_sub = std::max(1, static_cast<int>(std::ceil(dt_to / 1e-3)));
    const double dts = dt_to / n_sub;
    for (int s = 0; s < n_sub; ++s) {
      advance(k * dt_to + s * dts, dts, &force[k]);
      record(k * dt_to + (s + 1) * dts);
    }
  }

  // Ballistic flight. Contact checks arm once every foot has cleared the
  // ground, so the takeoff instant itself never reads as a landing.
  const double t_end = t_liftoff + n_fl * dt_fl + 0.5;
  const double step = 1e-3;
  std::array<bool, kNumLegs> aloft{};
  bool armed = false;
  double t = t_liftoff;
  while (t < t_end) {
    advance(t, step, nullptr);
    t += step;
    record(t);

    std::array<Eigen::Vector3d, kNumLegs> foot;
    std::array<double, kNumLegs> gz;
    bool all_aloft = true;
    for (int leg = 0; leg < kNumLegs; ++leg) {
      foot[leg] = r + foot_offset(t, leg);
      gz[leg] = ground(foot[leg].x(), foot[leg].y());
      if (foot[leg].z() > gz[leg] + 0.001) aloft[leg] = true;
      all_aloft = all_aloft && aloft[leg];
    }
    if (!armed) {
      armed = all_aloft;
      continue;
    }

    int hit = -1;
    double worst = -std::numeric_limits<double>::infinity();
    for (int leg = 0; leg < kNumLegs; ++leg) {
      const double pen = gz[leg] - foot[leg].z();
      worst = std::max(worst, pen);
      if (pen >= 0.0 && hit < 0) hit = leg;
    }
    if (hit < 0) {
      res.max_penetration = std::max(res.max_penetration, worst);
      continue;
    }

    // Contact. Moving upward means the foot struck an obstacle face;
    // otherwise it is a landing, graded against the planned touchdown.
    if (v.z() > 0.05) {
      res.max_penetration = std::max(res.max_penetration, worst);
      return finish(SimOutcome::Collided, t);
    }
    if (std::abs(ypr[2]) > 0.3 || std::abs(ypr[1]) > 0.3)
      return finish(SimOutcome::Fell, t);
    if (std::abs(r.z() - target_z) > 0.05)
      return finish(SimOutcome::MissedSurface, t);
    for (int leg = 0; leg < kNumLegs; ++leg)
      if (std::abs(gz[leg] - surface_z) > 0.03)
        return finish(SimOutcome::MissedSurface, t);
    return finish(SimOutcome::Landed, t);
  }

  // Never touched down within the time budget.
  return finish(r.z() < start_z - 0.05 ? SimOutcome::Fell
                                       : SimOutcome::MissedSurface,
                t);
}

}  // namespace detail

inline SimResult simulate_jump(const TrajOptSolution& sol,
                               const RobotModel& model,
                               const SigmoidStep& terrain,
                               const ExecutionNoise& noise) {
  return detail::simulate_core(
      sol, model, [&](double x, double y) { return terrain.height(x, y); },
      noise);
}

inline SimResult simulate_jump(const TrajOptSolution& sol,
                               const RobotModel& model, const HeightMap& map,
                               const ExecutionNoise& noise) {
  map.validate();
  const double floor_z = map.grid.minCoeff() - 1.0;
  return detail::simulate_core(
      sol, model,
      [&](double x, double y) {
        return map.contains(x, y) ? height_at(map, x, y) : floor_z;
      },
      noise);
}

}  // namespace leap
