#include <Eigen/Geometry>
#include <catch2/catch_amalgamated.hpp>

#include "leap/model.hpp"
#include "leap/rng.hpp"

using namespace leap;

namespace {

// Reference kinematics built from Eigen affine transform chains. Shares no
// code with the library implementation beyond the model constants.
struct OraclePoints {
  std::array<Eigen::Vector3d, kNumLegs> feet;
  std::vector<std::pair<double, Eigen::Vector3d>> masses;  // (mass, world pos)
  Eigen::Matrix3d R;
  Eigen::Vector3d com;
};

OraclePoints oracle_fk(const RobotModel& m, const Vec18& q) {
  OraclePoints out;
  const Eigen::Isometry3d base = Eigen::Translation3d(q[0], q[1], q[2]) *
                                 Eigen::AngleAxisd(q[3], Eigen::Vector3d::UnitZ()) *
                                 Eigen::AngleAxisd(q[4], Eigen::Vector3d::UnitY()) *
                                 Eigen::AngleAxisd(q[5], Eigen::Vector3d::UnitX());
  out.R = base.rotation();
  out.masses.push_back({m.body_mass(), base.translation()});
  for (int leg = 0; leg < kNumLegs; ++leg) {
    const double l1 = m.upper_link_length[leg], l2 = m.lower_link_length[leg];
    const Eigen::Isometry3d upper = base * Eigen::Translation3d(m.hip_offsets[leg]) *
                                    Eigen::AngleAxisd(q[6 + 3 * leg], Eigen::Vector3d::UnitX()) *
                                    Eigen::AngleAxisd(q[7 + 3 * leg], Eigen::Vector3d::UnitY());
    const Eigen::Isometry3d lower = upper * Eigen::Translation3d(0, 0, -l1) *
                                    Eigen::AngleAxisd(q[8 + 3 * leg], Eigen::Vector3d::UnitY());
    out.feet[leg] = lower * Eigen::Vector3d(0, 0, -l2);
    out.masses.push_back(
        {m.upper_link_mass[leg], upper * Eigen::Vector3d(0, 0, -m.link_com_fraction * l1)});
    out.masses.push_back(
        {m.lower_link_mass[leg], lower * Eigen::Vector3d(0, 0, -m.link_com_fraction * l2)});
  }
  Eigen::Vector3d c = Eigen::Vector3d::Zero();
  double total = 0.0;
  for (const auto& [mm, p] : out.masses) {
    c += mm * p;
    total += mm;
  }
  out.com = c / total;
  return out;
}

// Angular momentum about the CoM by central differencing the oracle point
// positions along q_dot. Independent of the library velocity propagation.
Eigen::Vector3d oracle_momentum(const RobotModel& m, const Vec18& q, const Vec18& qd) {
  const double eps = 1e-6;
  const OraclePoints plus = oracle_fk(m, (q + eps * qd).eval());
  const OraclePoints minus = oracle_fk(m, (q - eps * qd).eval());
  const OraclePoints mid = oracle_fk(m, q);

  Eigen::Matrix3d Om = ((plus.R - minus.R) / (2.0 * eps)) * mid.R.transpose();
  Om = 0.5 * (Om - Om.transpose()).eval();
  const Eigen::Vector3d omega(Om(2, 1), Om(0, 2), Om(1, 0));
  const Eigen::Vector3d com_vel = (plus.com - minus.com) / (2.0 * eps);

  Eigen::Vector3d h = mid.R * m.body_inertia * mid.R.transpose() * omega;
  for (std::size_t i = 0; i < mid.masses.size(); ++i) {
    const Eigen::Vector3d v = (plus.masses[i].second - minus.masses[i].second) / (2.0 * eps);
    h += mid.masses[i].first * (mid.masses[i].second - mid.com).cross(v - com_vel);
  }
  return h;
}

Vec18 random_state(Rng& rng, const RobotModel& m) {
  Vec18 q;
  q[0] = rng.uniform(-2.0, 2.0);
  q[1] = rng.uniform(-2.0, 2.0);
  q[2] = rng.uniform(0.15, 0.45);
  q[3] = rng.uniform(-3.0, 3.0);
  q[4] = rng.uniform(-0.5, 0.5);
  q[5] = rng.uniform(-0.5, 0.5);
  for (int k = 0; k < kNumJoints; ++k)
    q[6 + k] = rng.uniform(m.joint_limits[k][0], m.joint_limits[k][1]);
  return q;
}

Vec18 random_rates(Rng& rng) {
  Vec18 qd;
  for (int i = 0; i < kDof; ++i) qd[i] = rng.gauss();
  return qd;
}

}  // namespace

TEST_CASE("forward kinematics matches a transform-chain oracle") {
  RobotModel m;
  Rng rng(2024);
  for (int trial = 0; trial < 50; ++trial) {
    const Vec18 q = random_state(rng, m);
    const FkResult fk = forward_kinematics(m, q);
    const OraclePoints ref = oracle_fk(m, q);
    for (int leg = 0; leg < kNumLegs; ++leg)
      REQUIRE((fk.feet[leg] - ref.feet[leg]).norm() < 1e-12);
    REQUIRE((fk.com - ref.com).norm() < 1e-12);
  }
}

TEST_CASE("centroidal momentum matches a finite-difference oracle") {
  RobotModel m;
  Rng rng(77);
  for (int trial = 0; trial < 30; ++trial) {
    KinematicState x;
    x.q = random_state(rng, m);
    x.q_dot = random_rates(rng);
    const Eigen::Vector3d h = centroidal_momentum(m, x);
    const Eigen::Vector3d h_ref = oracle_momentum(m, x.q, x.q_dot);
    REQUIRE((h - h_ref).norm() <= 1e-6 * std::max(1.0, h_ref.norm()));

    const Eigen::Vector3d v = com_velocity(m, x);
    const double eps = 1e-6;
    const Eigen::Vector3d v_ref =
        (oracle_fk(m, (x.q + eps * x.q_dot).eval()).com -
         oracle_fk(m, (x.q - eps * x.q_dot).eval()).com) /
        (2.0 * eps);
    REQUIRE((v - v_ref).norm() <= 1e-8 * std::max(1.0, v_ref.norm()) + 1e-9);
  }
}

TEST_CASE("kinematics is equivariant under base translation") {
  RobotModel m;
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    KinematicState x;
    x.q = random_state(rng, m);
    x.q_dot = random_rates(rng);
    const Eigen::Vector3d t(rng.uniform(-5.0, 5.0), rng.uniform(-5.0, 5.0),
                            rng.uniform(-5.0, 5.0));
    KinematicState y = x;
    y.q.head<3>() += t;

    const auto ex = kinematics_eval(m, x);
    const auto ey = kinematics_eval(m, y);
    REQUIRE((to_eigen(ey.com) - to_eigen(ex.com) - t).norm() < 1e-12);
    for (int leg = 0; leg < kNumLegs; ++leg)
      REQUIRE((to_eigen(ey.feet[leg]) - to_eigen(ex.feet[leg]) - t).norm() < 1e-12);
    REQUIRE((to_eigen(ey.com_vel) - to_eigen(ex.com_vel)).norm() < 1e-12);
    REQUIRE((to_eigen(ey.momentum) - to_eigen(ex.momentum)).norm() < 1e-12);
  }
}

TEST_CASE("centroidal momentum is linear in joint rates") {
  RobotModel m;
  Rng rng(9);
  KinematicState x;
  x.q = random_state(rng, m);
  const Vec18 qd1 = random_rates(rng), qd2 = random_rates(rng);
  const double a = 1.7, b = -0.4;

  auto h_of = [&](const Vec18& qd) {
    KinematicState s;
    s.q = x.q;
    s.q_dot = qd;
    return centroidal_momentum(m, s);
  };
  const Eigen::Vector3d lhs = h_of(a * qd1 + b * qd2);
  const Eigen::Vector3d rhs = a * h_of(qd1) + b * h_of(qd2);
  REQUIRE((lhs - rhs).norm() < 1e-12 * std::max(1.0, rhs.norm()));
}

TEST_CASE("dual-number derivatives match central differences") {
  RobotModel m;
  Rng rng(31);
  KinematicState x;
  x.q = random_state(rng, m);
  x.q_dot = random_rates(rng);

  for (int j = 0; j < kDof; ++j) {
    std::array<Dual, kDof> qd_dual{}, qdd_dual{};
    for (int i = 0; i < kDof; ++i) {
      qd_dual[i] = Dual(x.q[i], i == j ? 1.0 : 0.0);
      qdd_dual[i] = Dual(x.q_dot[i], 0.0);
    }
    const auto ev = kinematics_eval<Dual>(m, qd_dual.data(), qdd_dual.data());

    const double eps = 1e-6;
    Vec18 qp = x.q, qm = x.q;
    qp[j] += eps;
    qm[j] -= eps;
    KinematicState xp{qp, x.q_dot}, xm{qm, x.q_dot};
    const auto evp = kinematics_eval(m, xp);
    const auto evm = kinematics_eval(m, xm);

    auto check = [&](double dual_d, double fp, double fm) {
      const double fd = (fp - fm) / (2.0 * eps);
      REQUIRE(std::abs(dual_d - fd) <= 1e-6 * std::max(1.0, std::abs(fd)));
    };
    check(ev.feet[0].z.d, evp.feet[0].z, evm.feet[0].z);
    check(ev.feet[2].x.d, evp.feet[2].x, evm.feet[2].x);
    check(ev.com.y.d, evp.com.y, evm.com.y);
    check(ev.momentum.x.d, evp.momentum.x, evm.momentum.x);
    check(ev.momentum.z.d, evp.momentum.z, evm.momentum.z);
    check(ev.com_vel.y.d, evp.com_vel.y, evm.com_vel.y);
  }
}

TEST_CASE("default stance puts feet under hips with the CoM inside support") {
  RobotModel m;
  struct Case {
    BasePose pose;
    double ground;
  };
  const Case cases[] = {
      {{{0.0, 0.0, 0.26}, 0.0, 0.0, 0.0}, 0.0},
      {{{1.0, -2.0, 0.24}, 0.8, 0.0, 0.0}, -0.02},
      {{{-0.5, 0.3, 0.30}, -2.2, 0.0, 0.0}, 0.05},
  };
  for (const auto& tc : cases) {
    const KinematicState x = default_stance(m, tc.pose, tc.ground);
    const FkResult fk = forward_kinematics(m, x.q);
    const Eigen::Matrix3d R =
        (Eigen::AngleAxisd(tc.pose.yaw, Eigen::Vector3d::UnitZ())).toRotationMatrix();

    double min_x = 1e9, max_x = -1e9, min_y = 1e9, max_y = -1e9;
    for (int leg = 0; leg < kNumLegs; ++leg) {
      const Eigen::Vector3d hip_world = tc.pose.position + R * m.hip_offsets[leg];
      REQUIRE(std::abs(fk.feet[leg].x() - hip_world.x()) < 1e-9);
      REQUIRE(std::abs(fk.feet[leg].y() - hip_world.y()) < 1e-9);
      REQUIRE(std::abs(fk.feet[leg].z() - tc.ground) < 1e-9);
      min_x = std::min(min_x, fk.feet[leg].x());
      max_x = std::max(max_x, fk.feet[leg].x());
      min_y = std::min(min_y, fk.feet[leg].y());
      max_y = std::max(max_y, fk.feet[leg].y());
    }
    for (int k = 0; k < kNumJoints; ++k) {
      REQUIRE(x.q[6 + k] >= m.joint_limits[k][0]);
      REQUIRE(x.q[6 + k] <= m.joint_limits[k][1]);
    }
    REQUIRE(fk.com.x() >= min_x);
    REQUIRE(fk.com.x() <= max_x);
    REQUIRE(fk.com.y() >= min_y);
    REQUIRE(fk.com.y() <= max_y);
  }

  BasePose too_high;
  too_high.position = Eigen::Vector3d(0, 0, 0.8);
  REQUIRE_THROWS_AS(default_stance(m, too_high, 0.0), UnreachableStance);
}

TEST_CASE("leg IK inverts the foot chain on the knee-back branch") {
  RobotModel m;
  Rng rng(123);
  int tested = 0;
  for (int trial = 0; trial < 300; ++trial) {
    const double abd = rng.uniform(-0.85, 0.85);
    const double hip = rng.uniform(-0.6, 1.2);
    const double knee = rng.uniform(-2.5, -0.3);

    Vec18 q = Vec18::Zero();
    q[2] = 0.0;
    const int leg = rng.uniform_int(0, 3);
    q[6 + 3 * leg] = abd;
    q[7 + 3 * leg] = hip;
    q[8 + 3 * leg] = knee;
    Vec18 qd = Vec18::Zero();
    const auto ev = kinematics_eval<double>(m, q.data(), qd.data());
    const Eigen::Vector3d target = to_eigen(ev.feet[leg]) - m.hip_offsets[leg];

    // Stay on the branch where the foot hangs below the abducted hip axis.
    const double wz = std::sin(abd) * target.y() - std::cos(abd) * target.z();
    if (wz < 0.02) continue;
    ++tested;
    const Eigen::Vector3d sol =
        leg_inverse_kinematics(m.upper_link_length[leg], m.lower_link_length[leg], target);
    REQUIRE(std::abs(sol[0] - abd) < 1e-9);
    REQUIRE(std::abs(sol[1] - hip) < 1e-9);
    REQUIRE(std::abs(sol[2] - knee) < 1e-9);
  }
  REQUIRE(tested >= 200);

  REQUIRE_THROWS_AS(
      leg_inverse_kinematics(0.21, 0.21, Eigen::Vector3d(0.0, 0.0, -0.5)),
      UnreachableStance);
}

TEST_CASE("model json round trip is byte identical") {
  RobotModel m;
  m.friction_mu = 0.6;
  m.hip_offsets[2] = Eigen::Vector3d(-0.185, -0.105, 0.01);
  nlohmann::json j1 = m;
  RobotModel m2 = j1.get<RobotModel>();
  nlohmann::json j2 = m2;
  REQUIRE(j1.dump() == j2.dump());
}

TEST_CASE("model validation rejects inconsistent parameters") {
  RobotModel m;
  m.mass = -1.0;
  REQUIRE_THROWS_AS(m.validate(), BadInput);
  m = RobotModel{};
  m.n_c = 2;
  REQUIRE_THROWS_AS(m.validate(), BadInput);
  m = RobotModel{};
  m.joint_limits[4] = {1.0, -1.0};
  REQUIRE_THROWS_AS(m.validate(), BadInput);
  m = RobotModel{};
  m.mass = 2.0;  // below the summed link masses
  REQUIRE_THROWS_AS(m.validate(), BadInput);
  REQUIRE(RobotModel{}.body_mass() == Catch::Approx(6.0));
}

TEST_CASE("kinematics rejects pitch near the Euler singularity") {
  RobotModel m;
  Vec18 q = Vec18::Zero();
  q[2] = 0.3;
  q[4] = 1.52;
  REQUIRE_THROWS_AS(forward_kinematics(m, q), BadInput);
}
