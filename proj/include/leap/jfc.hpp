#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <condition_variable>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "leap/errors.hpp"
#include "leap/execsim.hpp"
#include "leap/model.hpp"
#include "leap/rng.hpp"
#include "leap/svm.hpp"
#include "leap/terrain.hpp"
#include "leap/trajopt.hpp"

namespace leap {

// One point in the 5D jump space: obstacle height, CoM distance to the edge
// at takeoff, takeoff yaw relative to the edge normal, CoM distance past the
// edge at landing, landing yaw.
struct JumpParams {
  double h_obs = 0.0;
  double d_i = 0.3;
  double psi_i = 0.0;
  double d_f = 0.3;
  double psi_f = 0.0;

  void validate() const {
    if (h_obs < 0.0) throw BadInput("h_obs must be nonnegative");
    if (!(d_i > 0.0) || !(d_f > 0.0)) throw BadInput("d_i and d_f must be positive");
  }

  // Feature order used everywhere: training, classification, sampling.
  Eigen::Matrix<double, 5, 1> vec() const {
    Eigen::Matrix<double, 5, 1> v;
    v << h_obs, d_i, psi_i, d_f, psi_f;
    return v;
  }
};

inline void to_json(nlohmann::json& j, const JumpParams& p) {
  j = {{"h_obs", p.h_obs}, {"d_i", p.d_i}, {"psi_i", p.psi_i},
       {"d_f", p.d_f}, {"psi_f", p.psi_f}};
}

inline void from_json(const nlohmann::json& j, JumpParams& p) {
  j.at("h_obs").get_to(p.h_obs);
  j.at("d_i").get_to(p.d_i);
  j.at("psi_i").get_to(p.psi_i);
  j.at("d_f").get_to(p.d_f);
  j.at("psi_f").get_to(p.psi_f);
  p.validate();
}

enum class JumpLabel { Success, Failure };

enum class FailureDetail {
  None,
  OptimizationInfeasible,
  LandingMissed,
  PostureFailed,
  Collision
};

inline std::string_view label_name(JumpLabel l) {
  return l == JumpLabel::Success ? "success" : "failure";
}

inline JumpLabel label_from_name(std::string_view s) {
  if (s == "success") return JumpLabel::Success;
  if (s == "failure") return JumpLabel::Failure;
  throw BadInput("unknown jump label");
}

inline std::string_view detail_name(FailureDetail d) {
  switch (d) {
    case FailureDetail::None: return "none";
    case FailureDetail::OptimizationInfeasible: return "optimization_infeasible";
    case FailureDetail::LandingMissed: return "landing_missed";
    case FailureDetail::PostureFailed: return "posture_failed";
    case FailureDetail::Collision: return "collision";
  }
  return "none";
}

inline FailureDetail detail_from_name(std::string_view s) {
  if (s == "none") return FailureDetail::None;
  if (s == "optimization_infeasible") return FailureDetail::OptimizationInfeasible;
  if (s == "landing_missed") return FailureDetail::LandingMissed;
  if (s == "posture_failed") return FailureDetail::PostureFailed;
  if (s == "collision") return FailureDetail::Collision;
  throw BadInput("unknown failure detail");
}

struct LabeledJump {
  JumpParams params;
  JumpLabel label = JumpLabel::Failure;
  FailureDetail detail = FailureDetail::None;
};

inline void to_json(nlohmann::json& j, const LabeledJump& lj) {
  j = {{"params", lj.params},
       {"label", std::string(label_name(lj.label))},
       {"detail", std::string(detail_name(lj.detail))}};
}

inline void from_json(const nlohmann::json& j, LabeledJump& lj) {
  j.at("params").get_to(lj.params);
  lj.label = label_from_name(j.at("label").get<std::string>());
  lj.detail = detail_from_name(j.at("detail").get<std::string>());
}

// Per-dimension sampling ranges. A range may collapse to a single point.
struct ParamBox {
  std::array<double, 2> h_obs{0.0, 0.45};
  std::array<double, 2> d_i{0.25, 0.8};
  std::array<double, 2> psi_i{-0.8, 0.8};
  std::array<double, 2> d_f{0.25, 0.8};
  std::array<double, 2> psi_f{-1.8, 1.8};

  void validate() const {
    auto check = [](const std::array<double, 2>& r, const char* what) {
      if (!(r[0] <= r[1])) throw BadInput(std::string(what) + " range is inverted");
    };
    check(h_obs, "h_obs");
    check(d_i, "d_i");
    check(psi_i, "psi_i");
    check(d_f, "d_f");
    check(psi_f, "psi_f");
    if (h_obs[0] < 0.0) throw BadInput("h_obs range must be nonnegative");
    if (!(d_i[0] > 0.0) || !(d_f[0] > 0.0))
      throw BadInput("d_i and d_f ranges must be positive");
  }
};

inline void to_json(nlohmann::json& j, const ParamBox& b) {
  j = {{"h_obs", b.h_obs}, {"d_i", b.d_i}, {"psi_i", b.psi_i},
       {"d_f", b.d_f}, {"psi_f", b.psi_f}};
}

inline void from_json(const nlohmann::json& j, ParamBox& b) {
  j.at("h_obs").get_to(b.h_obs);
  j.at("d_i").get_to(b.d_i);
  j.at("psi_i").get_to(b.psi_i);
  j.at("d_f").get_to(b.d_f);
  j.at("psi_f").get_to(b.psi_f);
  b.validate();
}

// Canonical jump frame: the step edge runs along y through x = 0, the upper
// surface lies at x > 0, and the edge normal is +x. The stance is d_i behind
// the edge, yawed psi_i; the landing box is d_f past it at surface height
// plus the nominal body height, with the horizontal landing velocity pinned
// to the edge normal.
inline JumpProblem params_to_problem(const JumpParams& p, const RobotModel& model) {
  p.validate();
  JumpProblem jp;
  jp.model = model;
  jp.terrain = SigmoidStep{p.h_obs, 0.0, 0.0};

  BasePose pose;
  pose.position = Eigen::Vector3d(-p.d_i, 0.0, model.nominal_hip_height);
  pose.yaw = p.psi_i;
  jp.initial_state = default_stance(model, pose, 0.0);
  const Eigen::Vector3d com0 = forward_kinematics(model, jp.initial_state.q).com;

  jp.landing.center = Eigen::Vector3d(p.d_f, 0.0, com0.z() + p.h_obs);
  jp.landing.half_extent = Eigen::Vector3d(0.06, 0.06, 0.06);
  jp.landing.yaw_center = p.psi_f;
  jp.landing.yaw_half_width = 0.0873;  // the optimizer needs a window, ~5 deg
  jp.landing.foot_height = p.h_obs;
  jp.landing.velocity_dir = Eigen::Vector2d(1.0, 0.0);
  return jp;
}

// Index-addressed deterministic draw: sample i depends only on (box, seed, i),
// so campaigns can be resumed, reordered, or sharded without changing points.
inline JumpParams sample_params(const ParamBox& box, std::uint64_t seed,
                                std::uint64_t index) {
  box.validate();
  Rng rng(Rng::derive(seed, index));
  JumpParams p;
  p.h_obs = rng.uniform(box.h_obs[0], box.h_obs[1]);
  p.d_i = rng.uniform(box.d_i[0], box.d_i[1]);
  p.psi_i = rng.uniform(box.psi_i[0], box.psi_i[1]);
  p.d_f = rng.uniform(box.d_f[0], box.d_f[1]);
  p.psi_f = rng.uniform(box.psi_f[0], box.psi_f[1]);
  return p;
}

// The labeling oracle: optimize the jump, then replay it in the simulator
// with zero noise. Anything short of a clean landing is a failure with a
// reason tag; exceptions and non-convergence are labels, not errors.
inline LabeledJump label_jump(const JumpParams& params, const RobotModel& model,
                              const SolveOptions& solve = default_jump_solve_options()) {
  LabeledJump out;
  out.params = params;
  out.label = JumpLabel::Failure;
  out.detail = FailureDetail::OptimizationInfeasible;

  JumpProblem jp;
  TrajOptSolution sol;
  try {
    jp = params_to_problem(params, model);
    sol = solve_jump(jp, solve);
  } catch (const Error&) {
    return out;
  }
  if (sol.status != JumpStatus::Converged) return out;

  const SimResult sim = simulate_jump(sol, model, jp.terrain, ExecutionNoise{});
  switch (sim.outcome) {
    case SimOutcome::Landed:
      out.label = JumpLabel::Success;
      out.detail = FailureDetail::None;
      break;
    case SimOutcome::Collided:
      out.detail = FailureDetail::Collision;
      break;
    case SimOutcome::MissedSurface:
      out.detail = FailureDetail::LandingMissed;
      break;
    case SimOutcome::Fell:
      out.detail = FailureDetail::PostureFailed;
      break;
  }
  return out;
}

struct DatasetFile {
  std::vector<LabeledJump> entries;
  std::uintmax_t valid_bytes = 0;  // offset past the last parseable line
};

// Reads a JSON-lines dataset. A torn final line (interrupted append) is
// dropped and excluded from valid_bytes; corruption anywhere else throws.
inline DatasetFile load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw BadInput("cannot open dataset: " + path);
  DatasetFile out;
  std::string line;
  std::uintmax_t offset = 0;
  while (std::getline(in, line)) {
    const bool complete = !in.eof();  // getline stopped at a newline
    const std::uintmax_t end = offset + line.size() + (complete ? 1 : 0);
    if (!line.empty()) {
      try {
        out.entries.push_back(nlohmann::json::parse(line).get<LabeledJump>());
      } catch (const nlohmann::json::exception&) {
        if (complete) throw BadInput("corrupt dataset line in " + path);
        return out;  // torn tail from an interrupted write
      } catch (const BadInput&) {
        if (complete) throw;
        return out;
      }
    }
    out.valid_bytes = end;
    offset = end;
  }
  return out;
}

struct CampaignOptions {
  int workers = 1;
  SolveOptions solve = default_jump_solve_options();
};

// Labels samples 0..n-1 of the seeded draw sequence. If dataset_path names an
// existing file, its entries are verified against the draw sequence and only
// the remainder is computed; new results are appended one line at a time in
// index order, so an interrupted campaign resumes where it stopped and the
// output bytes do not depend on the worker count. Identical parameter points
// (a collapsed box) are solved once and reused.
inline std::vector<LabeledJump> sample_and_label(
    const ParamBox& box, int n, std::uint64_t seed, const RobotModel& model,
    const std::string& dataset_path = {}, const CampaignOptions& opt = {}) {
  box.validate();
  if (n < 1) throw BadInput("need at least one sample");

  std::vector<LabeledJump> out;
  out.reserve(n);
  std::ofstream appender;
  if (!dataset_path.empty()) {
    if (std::filesystem::exists(dataset_path)) {
      const DatasetFile existing = load_dataset(dataset_path);
      for (std::size_t i = 0; i < existing.entries.size() && i < static_cast<std::size_t>(n); ++i) {
        const JumpParams want = sample_params(box, seed, i);
        const JumpParams& got = existing.entries[i].params;
        if (got.h_obs != want.h_obs || got.d_i != want.d_i ||
            got.psi_i != want.psi_i || got.d_f != want.d_f ||
            got.psi_f != want.psi_f)
          throw BadInput("dataset does not match the box and seed");
        out.push_back(existing.entries[i]);
      }
      if (existing.valid_bytes < std::filesystem::file_size(dataset_path))
        std::filesystem::resize_file(dataset_path, existing.valid_bytes);
    }
    appender.open(dataset_path, std::ios::binary | std::ios::app);
    if (!appender) throw BadInput("cannot append to dataset: " + dataset_path);
  }

  const int start = static_cast<int>(out.size());
  if (start >= n) {
    out.resize(n);
    return out;
  }

  std::vector<std::optional<LabeledJump>> slot(n);
  std::atomic<int> cursor{start};
  std::mutex memo_mu;
  std::map<std::array<double, 5>, LabeledJump> memo;
  std::mutex slot_mu;
  std::condition_variable slot_cv;

  auto work = [&] {
    for (;;) {
      const int i = cursor.fetch_add(1);
      if (i >= n) return;
      const JumpParams p = sample_params(box, seed, i);
      const std::array<double, 5> key{p.h_obs, p.d_i, p.psi_i, p.d_f, p.psi_f};
      LabeledJump lj;
      bool cached = false;
      {
        std::lock_guard<std::mutex> g(memo_mu);
        if (auto it = memo.find(key); it != memo.end()) {
          lj = it->second;
          cached = true;
        }
      }
      if (!cached) {
        lj = label_jump(p, model, opt.solve);
        std::lock_guard<std::mutex> g(memo_mu);
        memo.emplace(key, lj);
      }
      {
        std::lock_guard<std::mutex> g(slot_mu);
        slot[i] = lj;
      }
      slot_cv.notify_all();
    }
  };

  const int workers = std::clamp(opt.workers, 1, n - start);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) pool.emplace_back(work);

  for (int i = start; i < n; ++i) {
    std::unique_lock<std::mutex> lk(slot_mu);
    slot_cv.wait(lk, [&] { return slot[i].has_value(); });
    const LabeledJump lj = *slot[i];
    lk.unlock();
    out.push_back(lj);
    if (appender.is_open()) {
      appender << nlohmann::json(lj).dump() << '\n';
      appender.flush();
    }
  }
  for (auto& th : pool) th.join();
  return out;
}

// SVM over the raw 5D parameter vectors; standardization lives inside the
// model. Success maps to +1.
inline SvmModel train_svm(const std::vector<LabeledJump>& data,
                          SvmKernel kernel = SvmKernel::Rbf,
                          double c_regularization = 10.0,
                          std::uint64_t seed = 0,
                          SvmTrainStats* stats = nullptr) {
  if (data.size() < 2) throw SingleClassData("need labeled jumps of both classes");
  Eigen::MatrixXd x(static_cast<int>(data.size()), 5);
  std::vector<int> y(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    x.row(static_cast<int>(i)) = data[i].params.vec().transpose();
    y[i] = data[i].label == JumpLabel::Success ? 1 : -1;
  }
  SvmTrainOptions o;
  o.kernel = kernel;
  o.c_regularization = c_regularization;
  o.seed = seed;
  return train_svm_matrix(x, y, o, stats);
}

struct Classification {
  bool feasible = false;
  double margin = 0.0;
};

inline Classification classify(const SvmModel& model, const JumpParams& p) {
  if (model.dims() != 5)
    throw DimensionMismatch("jump classifier must have 5 input dimensions");
  const double margin = decision_value(model, p.vec());
  return {margin > 0.0, margin};
}

// Scans the obstacle-height ray through the box midpoint. Once the model
// flips to infeasible it should stay infeasible for taller obstacles; each
// flip back is reported as a model-quality warning.
inline std::vector<std::string> monotone_height_warnings(const SvmModel& model,
                                                         const ParamBox& box,
                                                         int steps = 64) {
  box.validate();
  if (steps < 2) throw BadInput("need at least 2 scan steps");
  JumpParams p;
  p.d_i = 0.5 * (box.d_i[0] + box.d_i[1]);
  p.psi_i = 0.5 * (box.psi_i[0] + box.psi_i[1]);
  p.d_f = 0.5 * (box.d_f[0] + box.d_f[1]);
  p.psi_f = 0.5 * (box.psi_f[0] + box.psi_f[1]);

  std::vector<std::string> warnings;
  bool infeasible_seen = false;
  double flip_h = 0.0;
  for (int k = 0; k <= steps; ++k) {
    p.h_obs = box.h_obs[0] + (box.h_obs[1] - box.h_obs[0]) * k / steps;
    const Classification c = classify(model, p);
    if (!c.feasible) {
      if (!infeasible_seen) {
        infeasible_seen = true;
        flip_h = p.h_obs;
      }
    } else if (infeasible_seen) {
      char buf[160];
      std::snprintf(buf, sizeof(buf),
                    "classifier returns to feasible at h_obs=%.3f after going "
                    "infeasible at h_obs=%.3f",
                    p.h_obs, flip_h);
      warnings.emplace_back(buf);
      infeasible_seen = false;
    }
  }
  return warnings;
}

}  // namespace leap
