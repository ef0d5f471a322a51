#pragma once

// Soft-margin support vector machine for low-dimensional feasibility
// boundaries. Training solves the dual by sequential minimal optimization
// with maximal-violating-pair selection, which is exact enough to drive the
// per-point KKT residuals below a requested tolerance. Inputs are
// standardized per dimension before the kernel sees them; the model stores
// the normalization so callers always work in raw units.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "leap/errors.hpp"
#include "leap/rng.hpp"

namespace leap {

enum class SvmKernel { Linear, Rbf };

inline std::string kernel_name(SvmKernel k) {
  return k == SvmKernel::Linear ? "linear" : "rbf";
}

inline SvmKernel kernel_from_name(const std::string& name) {
  if (name == "linear") return SvmKernel::Linear;
  if (name == "rbf") return SvmKernel::Rbf;
  throw BadInput("unknown kernel '" + name + "'");
}

struct SvmModel {
  SvmKernel kernel = SvmKernel::Rbf;
  double gamma = 0.2;  // rbf width in normalized space; unused for linear
  double c_regularization = 10.0;
  Eigen::MatrixXd support_vectors;  // one per row, normalized coordinates
  Eigen::VectorXd alphas;           // signed duals: alpha_i * y_i
  double bias = 0.0;
  Eigen::VectorXd mean;   // per-dimension shift
  Eigen::VectorXd scale;  // per-dimension divisor, strictly positive
  std::uint64_t sample_count = 0;
  std::uint64_t seed = 0;
  double train_accuracy = 0.0;
  double holdout_accuracy = 0.0;

  int dims() const { return static_cast<int>(mean.size()); }

  void validate() const {
    if (support_vectors.rows() < 1) throw BadInput("model has no support vectors");
    if (support_vectors.rows() != alphas.size())
      throw DimensionMismatch("support vector / alpha count mismatch");
    if (support_vectors.cols() != mean.size() || mean.size() != scale.size())
      throw DimensionMismatch("normalization does not match support vectors");
    if ((scale.array() <= 0.0).any()) throw BadInput("non-positive feature scale");
    if (kernel == SvmKernel::Rbf && !(gamma > 0.0)) throw BadInput("rbf gamma must be positive");
  }
};

inline Eigen::VectorXd svm_normalize(const SvmModel& m, const Eigen::VectorXd& x) {
  if (x.size() != m.mean.size()) throw DimensionMismatch("feature vector has wrong dimension");
  return (x - m.mean).cwiseQuotient(m.scale);
}

inline Eigen::VectorXd svm_denormalize(const SvmModel& m, const Eigen::VectorXd& z) {
  if (z.size() != m.mean.size()) throw DimensionMismatch("feature vector has wrong dimension");
  return m.mean + z.cwiseProduct(m.scale);
}

namespace detail {

inline double kernel_eval(SvmKernel k, double gamma, const Eigen::VectorXd& a,
                          const Eigen::VectorXd& b) {
  if (k == SvmKernel::Linear) return a.dot(b);
  return std::exp(-gamma * (a - b).squaredNorm());
}

}  // namespace detail

// Kernel decision function in raw coordinates. Sign gives the class, the
// magnitude is the margin used by clearance search downstream.
inline double decision_value(const SvmModel& m, const Eigen::VectorXd& x_raw) {
  const Eigen::VectorXd z = svm_normalize(m, x_raw);
  double f = m.bias;
  for (Eigen::Index i = 0; i < m.support_vectors.rows(); ++i)
    f += m.alphas[i] *
         detail::kernel_eval(m.kernel, m.gamma, m.support_vectors.row(i).transpose(), z);
  return f;
}

struct SvmTrainOptions {
  SvmKernel kernel = SvmKernel::Rbf;
  double c_regularization = 10.0;
  double gamma = 0.0;  // <= 0 picks 1 / (dims * variance) on normalized data
  double kkt_tolerance = 1e-3;
  double holdout_fraction = 0.2;  // stratified, seeded; 0 trains on everything
  std::uint64_t seed = 0;
  std::int64_t max_iterations = 2'000'000;
};

struct SvmTrainStats {
  std::int64_t iterations = 0;
  double kkt_gap = 0.0;           // final duality-pair gap m - M
  double max_kkt_residual = 0.0;  // worst per-point violation given the bias
  int support_count = 0;
  int positives = 0;
  int negatives = 0;
  double train_accuracy = 0.0;
  double holdout_accuracy = 0.0;
};

// Trains on rows of x with labels y in {+1, -1}. The holdout rows never
// enter the dual; they only produce the reported holdout accuracy.
inline SvmModel train_svm_matrix(const Eigen::MatrixXd& x, const std::vector<int>& y,
                                 const SvmTrainOptions& opt, SvmTrainStats* stats = nullptr) {
  const auto n_all = static_cast<int>(x.rows());
  const auto dims = static_cast<int>(x.cols());
  if (n_all < 2 || dims < 1) throw BadInput("need at least two samples to train");
  if (static_cast<int>(y.size()) != n_all)
    throw DimensionMismatch("label count does not match sample count");
  for (int v : y)
    if (v != 1 && v != -1) throw BadInput("labels must be +1 or -1");

  std::vector<int> pos, neg;
  for (int i = 0; i < n_all; ++i) (y[i] > 0 ? pos : neg).push_back(i);
  if (pos.empty() || neg.empty())
    throw SingleClassData("training data contains a single class");

  // Stratified seeded holdout split, deterministic in (data order, seed).
  Rng rng(opt.seed);
  auto shuffle = [&rng](std::vector<int>& v) {
    for (int i = static_cast<int>(v.size()) - 1; i > 0; --i)
      std::swap(v[i], v[rng.uniform_int(0, i)]);
  };
  shuffle(pos);
  shuffle(neg);
  const auto hold_of = [&](const std::vector<int>& v) {
    return std::min(static_cast<int>(v.size()) - 1,
                    static_cast<int>(std::floor(opt.holdout_fraction * v.size())));
  };
  const int hold_pos = opt.holdout_fraction > 0.0 ? hold_of(pos) : 0;
  const int hold_neg = opt.holdout_fraction > 0.0 ? hold_of(neg) : 0;
  std::vector<int> train_idx, hold_idx;
  train_idx.insert(train_idx.end(), pos.begin() + hold_pos, pos.end());
  train_idx.insert(train_idx.end(), neg.begin() + hold_neg, neg.end());
  hold_idx.insert(hold_idx.end(), pos.begin(), pos.begin() + hold_pos);
  hold_idx.insert(hold_idx.end(), neg.begin(), neg.begin() + hold_neg);
  std::sort(train_idx.begin(), train_idx.end());
  std::sort(hold_idx.begin(), hold_idx.end());
  const auto n = static_cast<int>(train_idx.size());

  // Standardize on the training rows only.
  Eigen::MatrixXd xt(n, dims);
  Eigen::VectorXi yt(n);
  for (int i = 0; i < n; ++i) {
    xt.row(i) = x.row(train_idx[i]);
    yt[i] = y[train_idx[i]];
  }
  SvmModel model;
  model.kernel = opt.kernel;
  model.c_regularization = opt.c_regularization;
  model.mean = xt.colwise().mean();
  model.scale.resize(dims);
  double variance_sum = 0.0;
  for (int j = 0; j < dims; ++j) {
    const double var = (xt.col(j).array() - model.mean[j]).square().mean();
    variance_sum += var;
    model.scale[j] = var > 1e-24 ? std::sqrt(var) : 1.0;
  }
  Eigen::MatrixXd z(n, dims);
  double norm_variance = 0.0;
  for (int i = 0; i < n; ++i) {
    z.row(i) = (xt.row(i) - model.mean.transpose()).cwiseQuotient(model.scale.transpose());
  }
  for (int j = 0; j < dims; ++j)
    norm_variance += (z.col(j).array() - z.col(j).mean()).square().mean();
  norm_variance /= dims;
  model.gamma = opt.gamma > 0.0
                    ? opt.gamma
                    : 1.0 / (dims * std::max(norm_variance, 1e-12));

  // Dual: minimize 1/2 a'Qa - sum(a) with 0 <= a <= C, y'a = 0,
  // Q_ij = y_i y_j K_ij. Kernel rows are cached up front; the campaign sizes
  // this library targets keep the full matrix small.
  Eigen::MatrixXd kmat(n, n);
  for (int i = 0; i < n; ++i) {
    kmat(i, i) = detail::kernel_eval(opt.kernel, model.gamma, z.row(i).transpose(),
                                     z.row(i).transpose());
    for (int j = i + 1; j < n; ++j) {
      const double v = detail::kernel_eval(opt.kernel, model.gamma, z.row(i).transpose(),
                                           z.row(j).transpose());
      kmat(i, j) = v;
      kmat(j, i) = v;
    }
  }

  const double c_bound = opt.c_regularization;
  Eigen::VectorXd alpha = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd grad = Eigen::VectorXd::Constant(n, -1.0);
  std::int64_t iters = 0;
  double gap = std::numeric_limits<double>::infinity();
  double m_up = 0.0, m_low = 0.0;
  while (iters < opt.max_iterations) {
    // Maximal violating pair over the box-and-equality feasible directions.
    int i_up = -1, i_low = -1;
    m_up = -std::numeric_limits<double>::infinity();
    m_low = std::numeric_limits<double>::infinity();
    for (int t = 0; t < n; ++t) {
      const double v = -yt[t] * grad[t];
      const bool in_up = (yt[t] > 0 && alpha[t] < c_bound) || (yt[t] < 0 && alpha[t] > 0.0);
      const bool in_low = (yt[t] > 0 && alpha[t] > 0.0) || (yt[t] < 0 && alpha[t] < c_bound);
      if (in_up && v > m_up) {
        m_up = v;
        i_up = t;
      }
      if (in_low && v < m_low) {
        m_low = v;
        i_low = t;
      }
    }
    gap = m_up - m_low;
    if (gap <= opt.kkt_tolerance || i_up < 0 || i_low < 0) break;

    const int i = i_up, j = i_low;
    const double yi = yt[i], yj = yt[j];
    // Step along d = y_i e_i - y_j e_j, which preserves y'a; curvature along
    // d is kernel-only because the label signs square away.
    const double quad = std::max(kmat(i, i) + kmat(j, j) - 2.0 * kmat(i, j), 1e-12);
    double step = gap / quad;
    step = std::min(step, yi > 0.0 ? c_bound - alpha[i] : alpha[i]);
    step = std::min(step, yj > 0.0 ? alpha[j] : c_bound - alpha[j]);
    const double old_ai = alpha[i], old_aj = alpha[j];
    alpha[i] = std::clamp(alpha[i] + yi * step, 0.0, c_bound);
    alpha[j] = std::clamp(alpha[j] - yj * step, 0.0, c_bound);
    const double di = alpha[i] - old_ai, dj = alpha[j] - old_aj;
    for (int t = 0; t < n; ++t)
      grad[t] += yt[t] * (yt[i] * kmat(t, i) * di + yt[j] * kmat(t, j) * dj);
    ++iters;
  }
  model.bias = 0.5 * (m_up + m_low);

  // Per-point KKT residuals against the chosen bias: free points must sit on
  // their margin, bound points on the right side of it.
  double max_resid = 0.0;
  for (int t = 0; t < n; ++t) {
    const double v = -yt[t] * grad[t];  // y_t - (decision without bias)
    const bool in_up = (yt[t] > 0 && alpha[t] < c_bound) || (yt[t] < 0 && alpha[t] > 0.0);
    const bool in_low = (yt[t] > 0 && alpha[t] > 0.0) || (yt[t] < 0 && alpha[t] < c_bound);
    if (in_up) max_resid = std::max(max_resid, v - model.bias);
    if (in_low) max_resid = std::max(max_resid, model.bias - v);
  }

  std::vector<int> sv;
  for (int t = 0; t < n; ++t)
    if (alpha[t] > 1e-12) sv.push_back(t);
  if (sv.empty()) {
    // Degenerate but legal when the tolerance admits the zero dual; keep the
    // single closest-to-boundary point so the model stays well-formed.
    sv.push_back(0);
  }
  model.support_vectors.resize(static_cast<int>(sv.size()), dims);
  model.alphas.resize(static_cast<int>(sv.size()));
  for (int s = 0; s < static_cast<int>(sv.size()); ++s) {
    model.support_vectors.row(s) = z.row(sv[s]);
    model.alphas[s] = alpha[sv[s]] * yt[sv[s]];
  }
  model.sample_count = static_cast<std::uint64_t>(n_all);
  model.seed = opt.seed;

  auto accuracy = [&](const std::vector<int>& idx) {
    if (idx.empty()) return 0.0;
    int hit = 0;
    for (int t : idx) {
      const double f = decision_value(model, x.row(t).transpose());
      if ((f >= 0.0 ? 1 : -1) == y[t]) ++hit;
    }
    return static_cast<double>(hit) / static_cast<double>(idx.size());
  };
  model.train_accuracy = accuracy(train_idx);
  model.holdout_accuracy = accuracy(hold_idx);

  if (stats) {
    stats->iterations = iters;
    stats->kkt_gap = gap;
    stats->max_kkt_residual = max_resid;
    stats->support_count = static_cast<int>(sv.size());
    stats->positives = static_cast<int>(pos.size());
    stats->negatives = static_cast<int>(neg.size());
    stats->train_accuracy = model.train_accuracy;
    stats->holdout_accuracy = model.holdout_accuracy;
  }
  return model;
}

inline void to_json(nlohmann::json& j, const SvmModel& m) {
  auto vec = [](const Eigen::VectorXd& v) {
    return std::vector<double>(v.data(), v.data() + v.size());
  };
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.support_vectors.rows(); ++i) {
    const Eigen::VectorXd r = m.support_vectors.row(i).transpose();
    rows.push_back(vec(r));
  }
  j = nlohmann::json{{"kernel", kernel_name(m.kernel)},
                     {"gamma", m.gamma},
                     {"c", m.c_regularization},
                     {"support_vectors", rows},
                     {"alphas", vec(m.alphas)},
                     {"bias", m.bias},
                     {"normalization", {{"mean", vec(m.mean)}, {"scale", vec(m.scale)}}},
                     {"metadata",
                      {{"samples", m.sample_count},
                       {"seed", m.seed},
                       {"train_accuracy", m.train_accuracy},
                       {"holdout_accuracy", m.holdout_accuracy}}}};
}

inline void from_json(const nlohmann::json& j, SvmModel& m) {
  m.kernel = kernel_from_name(j.at("kernel").get<std::string>());
  m.gamma = j.at("gamma").get<double>();
  m.c_regularization = j.at("c").get<double>();
  const auto& rows = j.at("support_vectors");
  const auto k = static_cast<Eigen::Index>(rows.size());
  auto vec = [](const nlohmann::json& a) {
    Eigen::VectorXd v(a.size());
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = a[i].get<double>();
    return v;
  };
  m.mean = vec(j.at("normalization").at("mean"));
  m.scale = vec(j.at("normalization").at("scale"));
  m.support_vectors.resize(k, m.mean.size());
  for (Eigen::Index i = 0; i < k; ++i) m.support_vectors.row(i) = vec(rows[i]).transpose();
  m.alphas = vec(j.at("alphas"));
  m.bias = j.at("bias").get<double>();
  const auto& meta = j.at("metadata");
  m.sample_count = meta.at("samples").get<std::uint64_t>();
  m.seed = meta.at("seed").get<std::uint64_t>();
  m.train_accuracy = meta.at("train_accuracy").get<double>();
  m.holdout_accuracy = meta.at("holdout_accuracy").get<double>();
  m.validate();
}

}  // namespace leap
