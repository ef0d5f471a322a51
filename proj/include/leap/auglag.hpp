#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "leap/errors.hpp"

namespace leap {

// One block of constraint residuals. Equalities drive c(x) = 0, inequalities
// g(x) <= 0. Jacobians enter only through the adjoint product grad += J^T w,
// which is all the augmented Lagrangian needs; it also gives directional
// derivatives for free since w^T (J v) = (J^T w)^T v.
class ConstraintFamily {
 public:
  virtual ~ConstraintFamily() = default;
  virtual std::string_view name() const = 0;
  virtual int dim() const = 0;
  virtual bool is_inequality() const = 0;
  virtual void eval(const Eigen::VectorXd& x, Eigen::Ref<Eigen::VectorXd> r) const = 0;
  virtual void apply_jt(const Eigen::VectorXd& x, const Eigen::VectorXd& w,
                        Eigen::Ref<Eigen::VectorXd> grad) const = 0;
  // Equilibration factor applied to this family's residuals inside the
  // penalty energy only; violations are always measured on raw residuals.
  // Families whose natural units give outsized Jacobian rows (forces in
  // newtons next to positions in meters) override this.
  virtual double residual_scale() const { return 1.0; }
};

// Adapter for small hand-rolled families.
class LambdaFamily final : public ConstraintFamily {
 public:
  using EvalFn = std::function<void(const Eigen::VectorXd&, Eigen::Ref<Eigen::VectorXd>)>;
  using ApplyJtFn =
      std::function<void(const Eigen::VectorXd&, const Eigen::VectorXd&,
                         Eigen::Ref<Eigen::VectorXd>)>;

  LambdaFamily(std::string name, int dim, bool inequality, EvalFn eval, ApplyJtFn apply_jt)
      : name_(std::move(name)),
        dim_(dim),
        inequality_(inequality),
        eval_(std::move(eval)),
        apply_jt_(std::move(apply_jt)) {}

  std::string_view name() const override { return name_; }
  int dim() const override { return dim_; }
  bool is_inequality() const override { return inequality_; }
  void eval(const Eigen::VectorXd& x, Eigen::Ref<Eigen::VectorXd> r) const override {
    eval_(x, r);
  }
  void apply_jt(const Eigen::VectorXd& x, const Eigen::VectorXd& w,
                Eigen::Ref<Eigen::VectorXd> grad) const override {
    apply_jt_(x, w, grad);
  }

 private:
  std::string name_;
  int dim_;
  bool inequality_;
  EvalFn eval_;
  ApplyJtFn apply_jt_;
};

// Nonlinear program over a box: min f(x) subject to families and
// lower <= x <= upper. The cost callback adds its gradient into grad.
struct Problem {
  int n = 0;
  Eigen::VectorXd lower, upper;
  Eigen::VectorXd x_scale;  // positive per-variable scales; empty means ones
  std::function<double(const Eigen::VectorXd&, Eigen::VectorXd&)> cost;
  std::vector<std::unique_ptr<ConstraintFamily>> families;
};

struct SolveOptions {
  int max_outer = 20;
  int max_inner = 400;
  double penalty_initial = 10.0;
  double penalty_scale = 10.0;
  double penalty_max = 1e8;
  double tol_constraint = 1e-4;
  double tol_gradient = 1e-3;
  double armijo_c = 1e-4;
  int lbfgs_memory = 10;
  // Refine x_scale from a probe of the constraint Jacobian so stiff columns
  // take smaller steps. Deterministic; only ever shrinks a column's step.
  bool auto_equilibrate = true;
  bool verbose = false;
};

enum class SolveStatus { Converged, NotConverged };

struct FamilyReport {
  std::string name;
  double max_violation = 0.0;
};

struct SolveReport {
  SolveStatus status = SolveStatus::NotConverged;
  int outer_iterations = 0;
  int inner_iterations = 0;
  double final_penalty = 0.0;
  double max_violation = std::numeric_limits<double>::infinity();
  double projected_gradient_norm = std::numeric_limits<double>::infinity();
  double cost = 0.0;
  std::vector<FamilyReport> families;
  std::vector<Eigen::VectorXd> multipliers;   // one block per family
  std::vector<double> violation_history;      // best max-violation after each outer pass
  std::vector<double> penalty_history;        // penalty used in that pass
};

namespace detail {

inline Eigen::VectorXd clamp_to_box(const Eigen::VectorXd& x, const Eigen::VectorXd& lo,
                                    const Eigen::VectorXd& hi) {
  return x.cwiseMax(lo).cwiseMin(hi);
}

struct LbfgsMemory {
  std::deque<Eigen::VectorXd> s, y;
  std::deque<double> rho;
  int capacity = 10;

  void clear() {
    s.clear();
    y.clear();
    rho.clear();
  }

  void push(const Eigen::VectorXd& si, const Eigen::VectorXd& yi) {
    const double sy = si.dot(yi);
    if (!(sy > 1e-12 * si.norm() * yi.norm())) return;
    s.push_back(si);
    y.push_back(yi);
    rho.push_back(1.0 / sy);
    while (static_cast<int>(s.size()) > capacity) {
      s.pop_front();
      y.pop_front();
      rho.pop_front();
    }
  }

  // Two-loop recursion, H0 = gamma * I.
  Eigen::VectorXd direction(const Eigen::VectorXd& grad) const {
    Eigen::VectorXd q = -grad;
    if (s.empty()) return q;
    const int k = static_cast<int>(s.size());
    std::vector<double> alpha(k);
    for (int i = k - 1; i >= 0; --i) {
      alpha[i] = rho[i] * s[i].dot(q);
      q -= alpha[i] * y[i];
    }
    const double gamma = s.back().dot(y.back()) / y.back().squaredNorm();
    q *= gamma;
    for (int i = 0; i < k; ++i) {
      const double beta = rho[i] * y[i].dot(q);
      q += (alpha[i] - beta) * s[i];
    }
    return q;
  }
};

}  // namespace detail

// Augmented Lagrangian (PHR) with a projected L-BFGS inner loop. Multipliers
// are updated when the constraint violation shrinks enough, otherwise the
// penalty grows by penalty_scale. Variables are optionally rescaled so the
// inner solver sees O(1) quantities.
class AugLagSolver {
 public:
  explicit AugLagSolver(SolveOptions options = {}) : opt_(options) {}

  std::pair<Eigen::VectorXd, SolveReport> solve(const Problem& p, Eigen::VectorXd x0) const {
    const int n = p.n;
    if (x0.size() != n || p.lower.size() != n || p.upper.size() != n)
      throw DimensionMismatch("problem dimensions disagree");
    if ((p.lower.array() > p.upper.array()).any())
      throw BadInput("lower bound exceeds upper bound");

    Eigen::VectorXd scale = p.x_scale.size() ? p.x_scale : Eigen::VectorXd::Ones(n);
    if (scale.size() != n || (scale.array() <= 0.0).any())
      throw BadInput("x_scale must be positive and sized like x");

    const Eigen::VectorXd base_scale = scale;
    const Eigen::VectorXd x_start = detail::clamp_to_box(x0, p.lower, p.upper);

    // Jacobi-style equilibration: estimate the Gauss-Newton diagonal
    // diag(J^T J) at x_at over the penalty's active rows with fixed
    // Rademacher probes (E[(J^T w)_i^2] over sign vectors w is exactly the
    // diagonal) and rescale columns against the median stiffness. Refreshed
    // each outer pass since the iterate and the active set move.
    auto equilibrate_at = [&](const Eigen::VectorXd& x_at, double rho_now,
                              const std::vector<Eigen::VectorXd>& lam) {
      scale = base_scale;
      if (!opt_.auto_equilibrate || p.families.empty()) return;
      Eigen::VectorXd diag = Eigen::VectorXd::Zero(n);
      std::uint64_t state = 0x9e3779b97f4a7c15ull;
      auto sign = [&state]() {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        return (state & 1ull) ? 1.0 : -1.0;
      };
      const int probes = 8;
      Eigen::VectorXd gx(n);
      for (std::size_t kf = 0; kf < p.families.size(); ++kf) {
        const auto& fam = *p.families[kf];
        if (fam.dim() == 0) continue;
        const double sig = fam.residual_scale();
        Eigen::VectorXd w(fam.dim());
        Eigen::VectorXd mask = Eigen::VectorXd::Ones(fam.dim());
        if (fam.is_inequality()) {
          Eigen::VectorXd r(fam.dim());
          fam.eval(x_at, r);
          for (int i = 0; i < r.size(); ++i)
            mask[i] = lam[kf][i] + rho_now * sig * r[i] > 0.0 ? 1.0 : 0.0;
        }
        for (int t = 0; t < probes; ++t) {
          for (int i = 0; i < w.size(); ++i) w[i] = sig * mask[i] * sign();
          gx.setZero();
          fam.apply_jt(x_at, w, gx);
          diag += gx.cwiseProduct(base_scale).cwiseAbs2() / static_cast<double>(probes);
        }
      }
      Eigen::VectorXd col = diag.cwiseSqrt();
      std::vector<double> positive;
      for (int i = 0; i < n; ++i)
        if (col[i] > 0.0) positive.push_back(col[i]);
      if (positive.empty()) return;
      std::nth_element(positive.begin(), positive.begin() + positive.size() / 2,
                       positive.end());
      const double median = positive[positive.size() / 2];
      if (median <= 0.0) return;
      for (int i = 0; i < n; ++i)
        scale[i] /= std::clamp(col[i] / median, 0.3, 300.0);
    };

    std::vector<Eigen::VectorXd> lambda;
    for (const auto& fam : p.families) lambda.push_back(Eigen::VectorXd::Zero(fam->dim()));

    double rho = opt_.penalty_initial;

    // Work in z = x / scale.
    equilibrate_at(x_start, rho, lambda);
    Eigen::VectorXd lo = p.lower.cwiseQuotient(scale);
    Eigen::VectorXd hi = p.upper.cwiseQuotient(scale);
    Eigen::VectorXd z = x_start.cwiseQuotient(scale);
    SolveReport rep;
    Eigen::VectorXd x(n), grad_x(n), grad_z(n);

    // Augmented Lagrangian value and gradient in scaled coordinates. Each
    // family's residuals enter the energy multiplied by its equilibration
    // factor; multipliers live in those scaled units.
    auto eval_al = [&](const Eigen::VectorXd& zq, Eigen::VectorXd* gz) -> double {
      const Eigen::VectorXd xq = zq.cwiseProduct(scale);
      grad_x.setZero();
      double L = p.cost ? p.cost(xq, grad_x) : 0.0;
      for (std::size_t k = 0; k < p.families.size(); ++k) {
        const auto& fam = *p.families[k];
        const double sig = fam.residual_scale();
        Eigen::VectorXd r(fam.dim());
        fam.eval(xq, r);
        r *= sig;
        if (fam.is_inequality()) {
          const Eigen::VectorXd t = (lambda[k] + rho * r).cwiseMax(0.0);
          L += (t.squaredNorm() - lambda[k].squaredNorm()) / (2.0 * rho);
          if (gz) fam.apply_jt(xq, sig * t, grad_x);
        } else {
          L += lambda[k].dot(r) + 0.5 * rho * r.squaredNorm();
          if (gz) fam.apply_jt(xq, sig * (lambda[k] + rho * r), grad_x);
        }
      }
      if (gz) *gz = grad_x.cwiseProduct(scale);
      return L;
    };

    auto max_violation = [&](const Eigen::VectorXd& zq, std::vector<double>* per_family) {
      const Eigen::VectorXd xq = zq.cwiseProduct(scale);
      double v = 0.0;
      for (std::size_t k = 0; k < p.families.size(); ++k) {
        const auto& fam = *p.families[k];
        Eigen::VectorXd r(fam.dim());
        fam.eval(xq, r);
        const double fv = fam.dim() == 0 ? 0.0
                          : fam.is_inequality() ? std::max(0.0, r.maxCoeff())
                                                : r.cwiseAbs().maxCoeff();
        if (per_family) per_family->push_back(fv);
        v = std::max(v, fv);
      }
      return v;
    };

    auto update_multipliers = [&](const Eigen::VectorXd& zq) {
      const Eigen::VectorXd xq = zq.cwiseProduct(scale);
      for (std::size_t k = 0; k < p.families.size(); ++k) {
        const auto& fam = *p.families[k];
        const double sig = fam.residual_scale();
        Eigen::VectorXd r(fam.dim());
        fam.eval(xq, r);
        if (fam.is_inequality())
          lambda[k] = (lambda[k] + rho * sig * r).cwiseMax(0.0);
        else
          lambda[k] += rho * sig * r;
      }
    };

    // Best-feasibility iterate retained across passes; it is what the solver
    // returns if the final pass is not the best one, which keeps the reported
    // violations non-increasing without constraining the multiplier dynamics.
    double v_best = std::numeric_limits<double>::infinity();
    Eigen::VectorXd z_best = z;
    double pg = std::numeric_limits<double>::infinity();
    bool converged = false;

    for (int outer = 0; outer < opt_.max_outer; ++outer) {
      rep.outer_iterations = outer + 1;
      if (outer > 0 && opt_.auto_equilibrate) {
        const Eigen::VectorXd x_cur = z.cwiseProduct(scale);
        const Eigen::VectorXd x_best = z_best.cwiseProduct(scale);
        equilibrate_at(x_cur, rho, lambda);
        lo = p.lower.cwiseQuotient(scale);
        hi = p.upper.cwiseQuotient(scale);
        z = x_cur.cwiseQuotient(scale);
        z_best = x_best.cwiseQuotient(scale);
      }

      // Early passes only need a rough minimizer; the target tightens as the
      // multipliers settle.
      const double inner_tol = std::max(
          opt_.tol_gradient * 0.5, 1e-2 * std::pow(0.3, static_cast<double>(outer)));

      // Inner: projected L-BFGS on the AL.
      detail::LbfgsMemory mem;
      mem.capacity = opt_.lbfgs_memory;
      double L = eval_al(z, &grad_z);
      for (int it = 0; it < opt_.max_inner; ++it) {
        pg = (detail::clamp_to_box(z - grad_z, lo, hi) - z).cwiseAbs().maxCoeff();
        if (pg <= inner_tol) break;

        // Freeze coordinates pressed against an active bound.
        Eigen::VectorXd g_free = grad_z;
        for (int i = 0; i < n; ++i) {
          const bool at_lo = z[i] <= lo[i] + 1e-14 && grad_z[i] > 0.0;
          const bool at_hi = z[i] >= hi[i] - 1e-14 && grad_z[i] < 0.0;
          if (at_lo || at_hi) g_free[i] = 0.0;
        }

        Eigen::VectorXd d = mem.direction(g_free);
        for (int i = 0; i < n; ++i) {
          const bool at_lo = z[i] <= lo[i] + 1e-14 && grad_z[i] > 0.0;
          const bool at_hi = z[i] >= hi[i] - 1e-14 && grad_z[i] < 0.0;
          if (at_lo || at_hi) d[i] = 0.0;
        }
        if (!(d.dot(g_free) < 0.0)) {
          mem.clear();
          d = -g_free;
          if (!(d.dot(g_free) < 0.0)) break;  // flat; nothing to do
        }

        double alpha = 1.0;
        bool accepted = false;
        Eigen::VectorXd z_new, g_new(n);
        double L_new = 0.0;
        for (int bt = 0; bt < 50; ++bt) {
          z_new = detail::clamp_to_box(z + alpha * d, lo, hi);
          L_new = eval_al(z_new, nullptr);
          const double decrease = grad_z.dot(z_new - z);
          if (std::isfinite(L_new) && L_new <= L + opt_.armijo_c * decrease) {
            accepted = true;
            break;
          }
          alpha *= 0.5;
        }
        ++rep.inner_iterations;
        if (!accepted) break;  // line search stalled

        L_new = eval_al(z_new, &g_new);
        mem.push(z_new - z, g_new - grad_z);
        z = std::move(z_new);
        grad_z = std::move(g_new);
        L = L_new;
      }
      pg = (detail::clamp_to_box(z - grad_z, lo, hi) - z).cwiseAbs().maxCoeff();

      const double v = max_violation(z, nullptr);
      rep.penalty_history.push_back(rho);

      const double v_prev_best = v_best;
      if (v < v_best) {
        v_best = v;
        z_best = z;
      }
      rep.violation_history.push_back(v_best);

      if (v <= opt_.tol_constraint && pg <= opt_.tol_gradient) {
        z_best = z;
        rep.status = SolveStatus::Converged;
        converged = true;
        break;
      }

      // Classic update rule: reward progress on feasibility with a
      // first-order multiplier step, otherwise raise the penalty. Any pass
      // inside the feasibility tolerance counts as progress, so the penalty
      // stops growing once the multipliers hold the constraints and the
      // quasi-Newton passes can polish the gradient at a fixed, moderate
      // penalty. Once capped, the multiplier step is all that is left.
      const bool capped = rho >= opt_.penalty_max * (1.0 - 1e-12);
      if (v <= std::max(opt_.tol_constraint, 0.9 * v_prev_best) || capped)
        update_multipliers(z);
      else
        rho = std::min(rho * opt_.penalty_scale, opt_.penalty_max);
    }

    if (!converged) z = z_best;
    eval_al(z, &grad_z);  // refresh at the returned iterate
    pg = (detail::clamp_to_box(z - grad_z, lo, hi) - z).cwiseAbs().maxCoeff();

    std::vector<double> per_family;
    rep.max_violation = max_violation(z, &per_family);
    for (std::size_t k = 0; k < p.families.size(); ++k)
      rep.families.push_back({std::string(p.families[k]->name()), per_family[k]});
    rep.multipliers = lambda;
    rep.final_penalty = rho;
    rep.projected_gradient_norm = pg;

    // The scale round-trip can land an at-bound coordinate one ulp outside
    // the box; snap back so callers can rely on the bounds verbatim.
    x = detail::clamp_to_box(z.cwiseProduct(scale), p.lower, p.upper);
    grad_x.setZero();
    rep.cost = p.cost ? p.cost(x, grad_x) : 0.0;
    return {x, rep};
  }

 private:
  SolveOptions opt_;
};

}  // namespace leap
