#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "leap/jfc.hpp"

using namespace leap;

namespace {

SolveOptions quick_solve(int outer, int inner) {
  SolveOptions o = default_jump_solve_options();
  o.max_outer = outer;
  o.max_inner = inner;
  return o;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

struct TempDir {
  std::filesystem::path dir;
  TempDir() {
    dir = std::filesystem::temp_directory_path() /
          ("jfc_test_" + std::to_string(::getpid()));
    std::filesystem::create_directories(dir);
  }
  ~TempDir() { std::filesystem::remove_all(dir); }
  std::string path(const std::string& name) const { return (dir / name).string(); }
};

// Synthetic labeling rule, monotone in obstacle height: success below a
// tilted threshold surface.
LabeledJump rule_label(const JumpParams& p) {
  LabeledJump lj;
  lj.params = p;
  const bool ok = p.h_obs + 0.25 * p.d_f + 0.05 * std::abs(p.psi_f) < 0.40;
  lj.label = ok ? JumpLabel::Success : JumpLabel::Failure;
  lj.detail = ok ? FailureDetail::None : FailureDetail::LandingMissed;
  return lj;
}

std::vector<LabeledJump> rule_dataset(int n, std::uint64_t seed) {
  const ParamBox box;
  std::vector<LabeledJump> data;
  data.reserve(n);
  for (int i = 0; i < n; ++i)
    data.push_back(rule_label(sample_params(box, seed, i)));
  return data;
}

}  // namespace

TEST_CASE("params map to the canonical jump frame") {
  const RobotModel model;
  JumpParams p;
  p.h_obs = 0.35;
  p.d_i = 0.30;
  p.psi_i = 0.0;
  p.d_f = 0.30;
  p.psi_f = 0.0;
  const JumpProblem jp = params_to_problem(p, model);

  // Step amplitude is the obstacle height, edge at x = 0.
  REQUIRE(jp.terrain.a == 0.35);
  REQUIRE(jp.terrain.b == 0.0);
  REQUIRE(jp.terrain.d == 0.0);

  // Equal distances put the landing box straight ahead of the stance.
  const Eigen::Vector3d com0 = forward_kinematics(model, jp.initial_state.q).com;
  REQUIRE(com0.x() == Catch::Approx(-0.30).margin(0.02));
  REQUIRE(com0.y() == Catch::Approx(0.0).margin(1e-9));
  REQUIRE(jp.landing.center.x() == Catch::Approx(0.30).margin(1e-12));
  REQUIRE(jp.landing.center.y() == 0.0);
  REQUIRE(jp.landing.center.z() == Catch::Approx(com0.z() + 0.35).margin(1e-12));
  REQUIRE(jp.landing.foot_height == 0.35);
  REQUIRE(jp.landing.velocity_dir.has_value());
  REQUIRE((*jp.landing.velocity_dir - Eigen::Vector2d(1.0, 0.0)).norm() == 0.0);

  // Rotational scenario class: landing yaw window centered a quarter turn
  // from the takeoff yaw.
  JumpParams rot = p;
  rot.psi_i = 0.2;
  rot.psi_f = 0.2 + M_PI / 2.0;
  const JumpProblem rp = params_to_problem(rot, model);
  REQUIRE(rp.initial_state.q[3] == Catch::Approx(0.2));
  REQUIRE(rp.landing.yaw_center - rp.initial_state.q[3] ==
          Catch::Approx(M_PI / 2.0));
  REQUIRE(rp.landing.yaw_half_width == Catch::Approx(0.0873));
}

TEST_CASE("invalid params are rejected") {
  const RobotModel model;
  JumpParams p;
  p.h_obs = -0.1;
  REQUIRE_THROWS_AS(params_to_problem(p, model), BadInput);
  p.h_obs = 0.1;
  p.d_i = 0.0;
  REQUIRE_THROWS_AS(p.validate(), BadInput);
  p.d_i = 0.3;
  p.d_f = -0.2;
  REQUIRE_THROWS_AS(p.validate(), BadInput);

  nlohmann::json j = {{"h_obs", 0.1}, {"d_i", -1.0}, {"psi_i", 0.0},
                      {"d_f", 0.3}, {"psi_f", 0.0}};
  REQUIRE_THROWS_AS(j.get<JumpParams>(), BadInput);
}

TEST_CASE("seeded draws are deterministic and fill the box") {
  const ParamBox box;
  for (int i = 0; i < 200; ++i) {
    const JumpParams a = sample_params(box, 42, i);
    const JumpParams b = sample_params(box, 42, i);
    REQUIRE(a.h_obs == b.h_obs);
    REQUIRE(a.d_i == b.d_i);
    REQUIRE(a.psi_i == b.psi_i);
    REQUIRE(a.d_f == b.d_f);
    REQUIRE(a.psi_f == b.psi_f);
    REQUIRE((a.h_obs >= box.h_obs[0] && a.h_obs <= box.h_obs[1]));
    REQUIRE((a.d_i >= box.d_i[0] && a.d_i <= box.d_i[1]));
    REQUIRE((a.psi_i >= box.psi_i[0] && a.psi_i <= box.psi_i[1]));
    REQUIRE((a.d_f >= box.d_f[0] && a.d_f <= box.d_f[1]));
    REQUIRE((a.psi_f >= box.psi_f[0] && a.psi_f <= box.psi_f[1]));
  }
  REQUIRE(sample_params(box, 42, 0).h_obs != sample_params(box, 42, 1).h_obs);
  REQUIRE(sample_params(box, 42, 0).h_obs != sample_params(box, 43, 0).h_obs);

  // A collapsed range pins its dimension.
  ParamBox point = box;
  point.h_obs = {0.2, 0.2};
  REQUIRE(sample_params(point, 7, 3).h_obs == 0.2);
}

TEST_CASE("box and labeled jump serialization round-trip") {
  ParamBox box;
  box.h_obs = {0.05, 0.3};
  const nlohmann::json bj = box;
  const ParamBox back = bj.get<ParamBox>();
  REQUIRE(back.h_obs == box.h_obs);
  REQUIRE(back.psi_f == box.psi_f);

  nlohmann::json bad = bj;
  bad["d_i"] = {0.5, 0.3};
  REQUIRE_THROWS_AS(bad.get<ParamBox>(), BadInput);

  LabeledJump lj;
  lj.params = sample_params(box, 1, 5);
  lj.label = JumpLabel::Failure;
  lj.detail = FailureDetail::Collision;
  const nlohmann::json j = lj;
  const LabeledJump lback = j.get<LabeledJump>();
  REQUIRE(lback.params.d_f == lj.params.d_f);
  REQUIRE(lback.label == JumpLabel::Failure);
  REQUIRE(lback.detail == FailureDetail::Collision);
  REQUIRE(j.at("label").get<std::string>() == "failure");
  REQUIRE(j.at("detail").get<std::string>() == "collision");
}

TEST_CASE("nominal short frontal jump labels success") {
  JumpParams p;
  p.h_obs = 0.10;
  p.d_i = 0.30;
  p.psi_i = 0.0;
  p.d_f = 0.30;
  p.psi_f = 0.0;
  const LabeledJump lj = label_jump(p, RobotModel{});
  REQUIRE(lj.label == JumpLabel::Success);
  REQUIRE(lj.detail == FailureDetail::None);
}

TEST_CASE("meter-high obstacle labels optimization-infeasible") {
  // Thrust is not the binding resource; leg stroke is. From a 0.26 m stance
  // the legs can extend ~0.16 m while pushing, so even at the force limit
  // the takeoff speed tops out below what a 1 m rise demands.
  const RobotModel model;
  const double a_max = (4.0 * model.force_limit - model.mass * 9.81) / model.mass;
  const double stroke = 0.42 - model.nominal_hip_height;
  const double v_reachable = std::sqrt(2.0 * stroke * a_max);
  const double v_needed = std::sqrt(2.0 * 9.81 * 1.0);
  REQUIRE(v_reachable < v_needed);

  JumpParams p;
  p.h_obs = 1.0;
  p.d_i = 0.5;
  p.psi_i = 0.0;
  p.d_f = 0.5;
  p.psi_f = 0.0;
  const LabeledJump lj = label_jump(p, RobotModel{}, quick_solve(5, 800));
  REQUIRE(lj.label == JumpLabel::Failure);
  REQUIRE(lj.detail == FailureDetail::OptimizationInfeasible);
}

TEST_CASE("half-turn jump with a snap takeoff exceeds the momentum budget") {
  // With a 2 ms stance the yaw-momentum budget is provably too small: the
  // friction-limited tangential impulse acting at the stance lever arm can
  // store less spin than even the bare body needs to turn half around
  // within the longest allowed flight.
  const RobotModel model;
  const double t_to = 0.002;
  const double lever = std::hypot(0.19, 0.11);
  const double tangential = model.friction_mu * model.force_limit;
  const double budget = 4.0 * lever * tangential * t_to;

  JumpParams p;
  p.h_obs = 0.0;
  p.d_i = 0.4;
  p.psi_i = 0.0;
  p.d_f = 0.4;
  p.psi_f = M_PI;
  JumpProblem jp = params_to_problem(p, model);
  jp.takeoff_duration = t_to;

  const double flight_span =
      jp.flight_time_max * jp.n_flight_nodes / (jp.n_flight_nodes - 1.0);
  const double demand = model.body_inertia(2, 2) * M_PI / flight_span;
  REQUIRE(budget < demand);

  const TrajOptSolution sol = solve_jump(jp, quick_solve(4, 600));
  REQUIRE(sol.status == JumpStatus::NotConverged);
}

TEST_CASE("campaign datasets resume and do not depend on worker count") {
  const RobotModel model;
  TempDir tmp;

  // Collapsed box at a dynamically infeasible point: every index labels the
  // same way, and the memo keeps the cost at one solve per call.
  ParamBox box;
  box.h_obs = {1.0, 1.0};
  box.d_i = {0.5, 0.5};
  box.psi_i = {0.0, 0.0};
  box.d_f = {0.5, 0.5};
  box.psi_f = {0.0, 0.0};
  CampaignOptions opt;
  opt.solve = quick_solve(2, 300);

  const std::string file_a = tmp.path("a.jsonl");
  const auto run_a = sample_and_label(box, 4, 11, model, file_a, opt);
  REQUIRE(run_a.size() == 4);
  for (const auto& lj : run_a) {
    REQUIRE(lj.label == JumpLabel::Failure);
    REQUIRE(lj.detail == FailureDetail::OptimizationInfeasible);
    REQUIRE(lj.params.h_obs == 1.0);
  }

  CampaignOptions parallel = opt;
  parallel.workers = 3;
  const std::string file_b = tmp.path("b.jsonl");
  sample_and_label(box, 4, 11, model, file_b, parallel);
  REQUIRE(read_file(file_a) == read_file(file_b));

  // Resume: a shorter prior run is verified and extended in place.
  const std::string file_c = tmp.path("c.jsonl");
  sample_and_label(box, 2, 11, model, file_c, opt);
  const auto resumed = sample_and_label(box, 4, 11, model, file_c, opt);
  REQUIRE(resumed.size() == 4);
  REQUIRE(read_file(file_c) == read_file(file_a));

  // A torn final line from an interrupted append is dropped and rewritten.
  const std::string file_d = tmp.path("d.jsonl");
  std::filesystem::copy_file(file_c, file_d);
  {
    std::ofstream torn(file_d, std::ios::binary | std::ios::app);
    torn << "{\"params\": {\"h_obs\": 1.0";
  }
  const auto before = load_dataset(file_d);
  REQUIRE(before.entries.size() == 4);
  sample_and_label(box, 5, 11, model, file_d, opt);
  const auto after = load_dataset(file_d);
  REQUIRE(after.entries.size() == 5);

  // A dataset from a different seed is rejected, not silently extended.
  REQUIRE_THROWS_AS(sample_and_label(box, 4, 12, model, file_a, opt),
                    BadInput);

  // In-memory campaigns are byte-equivalent to the file path.
  const auto memory = sample_and_label(box, 4, 11, model, "", opt);
  REQUIRE(nlohmann::json(memory).dump() == nlohmann::json(run_a).dump());
}

TEST_CASE("classifier wrappers learn a synthetic rule") {
  const auto data = rule_dataset(500, 3);
  int positives = 0;
  for (const auto& lj : data)
    if (lj.label == JumpLabel::Success) ++positives;
  REQUIRE(positives > 50);
  REQUIRE(positives < 450);

  SvmTrainStats stats;
  const SvmModel model = train_svm(data, SvmKernel::Rbf, 10.0, 0, &stats);
  REQUIRE(stats.holdout_accuracy >= 0.9);
  REQUIRE(stats.kkt_gap <= 1e-3);
  REQUIRE(model.dims() == 5);

  // Fresh draws: the decision agrees with the rule away from noise-free
  // boundary effects, and the feasible flag is the margin's sign.
  const ParamBox box;
  int agree = 0;
  for (int i = 0; i < 300; ++i) {
    const JumpParams p = sample_params(box, 77, i);
    const Classification c = classify(model, p);
    REQUIRE(c.feasible == (c.margin > 0.0));
    if (c.feasible == (rule_label(p).label == JumpLabel::Success)) ++agree;
  }
  REQUIRE(agree >= 270);

  // Single-class data is an error, not a degenerate model.
  std::vector<LabeledJump> one_class;
  for (const auto& lj : data)
    if (lj.label == JumpLabel::Success) one_class.push_back(lj);
  REQUIRE_THROWS_AS(train_svm(one_class), SingleClassData);
}

TEST_CASE("monotone height scan flags only non-monotone models") {
  // The synthetic rule is monotone in h_obs, so a model trained on it scans
  // clean along the height ray.
  const auto data = rule_dataset(500, 3);
  const SvmModel trained = train_svm(data);
  const ParamBox box;
  REQUIRE(monotone_height_warnings(trained, box).empty());

  // Hand-built model with a feasible pocket above an infeasible band.
  SvmModel pocket;
  pocket.kernel = SvmKernel::Rbf;
  pocket.gamma = 1.0;
  pocket.support_vectors = Eigen::MatrixXd::Zero(3, 5);
  pocket.support_vectors(0, 0) = -1.0;
  pocket.support_vectors(1, 0) = 0.0;
  pocket.support_vectors(2, 0) = 1.0;
  pocket.alphas = Eigen::Vector3d(1.0, -1.2, 1.0);
  pocket.bias = 0.0;
  pocket.mean = Eigen::VectorXd(5);
  pocket.mean << 0.225, 0.5 * (box.d_i[0] + box.d_i[1]),
      0.5 * (box.psi_i[0] + box.psi_i[1]), 0.5 * (box.d_f[0] + box.d_f[1]),
      0.5 * (box.psi_f[0] + box.psi_f[1]);
  pocket.scale = Eigen::VectorXd::Ones(5);
  pocket.scale[0] = 0.1;
  pocket.sample_count = 3;
  pocket.validate();
  const auto warnings = monotone_height_warnings(pocket, box);
  REQUIRE(!warnings.empty());
  REQUIRE(warnings.front().find("h_obs") != std::string::npos);
}
