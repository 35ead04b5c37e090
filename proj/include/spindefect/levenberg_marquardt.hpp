#pragma once

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <cmath>
#include <functional>
#include <limits>
#include <string>

#include "spindefect/error.hpp"

namespace spindefect {

struct LMOptions {
  int max_iterations = 200;
  double relative_step = 1e-6;  // forward-difference Jacobian
  double gradient_tol = 1e-10;  // max |J^T r|
  double step_tol = 1e-12;      // |dp| relative to |p|
  double initial_lambda = 1e-3;
  double max_condition = 1e12;  // Jacobian condition number ceiling
};

struct LMResult {
  Eigen::VectorXd params;
  Eigen::MatrixXd covariance;  // s^2 (J^T J)^-1 in the solver parametrisation
  Eigen::MatrixXd jacobian;
  Eigen::VectorXd residuals;
  double residual_norm = 0.0;
  double condition = 0.0;
  int iterations = 0;
  bool converged = false;
  std::string message;
};

using ResidualFunction = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

inline Eigen::MatrixXd forward_jacobian(const ResidualFunction& f, const Eigen::VectorXd& p, const Eigen::VectorXd& r0,
                                        double rel_step) {
  Eigen::MatrixXd J(r0.size(), p.size());
  for (Eigen::Index k = 0; k < p.size(); ++k) {
    Eigen::VectorXd q = p;
    const double h = rel_step * std::max(std::abs(p[k]), 1.0);
    q[k] += h;
    J.col(k) = (f(q) - r0) / (q[k] - p[k]);
  }
  return J;
}

inline double jacobian_condition(const Eigen::MatrixXd& J) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(J);
  const auto& s = svd.singularValues();
  if (s.size() == 0) return std::numeric_limits<double>::infinity();
  const double lo = s[s.size() - 1];
  return lo > 0.0 ? s[0] / lo : std::numeric_limits<double>::infinity();
}

/// (J^T J)^-1 from the SVD of J, which keeps weakly determined directions
/// (large variance) instead of squaring the condition number. Exactly
/// null directions are dropped.
inline Eigen::MatrixXd normal_inverse(const Eigen::MatrixXd& J) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(J, Eigen::ComputeThinV);
  const auto& s = svd.singularValues();
  const auto& V = svd.matrixV();
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(J.cols(), J.cols());
  const double cut = s.size() ? s[0] * std::numeric_limits<double>::epsilon() * static_cast<double>(J.rows()) : 0.0;
  for (Eigen::Index k = 0; k < s.size(); ++k)
    if (s[k] > cut) out += V.col(k) * V.col(k).transpose() / (s[k] * s[k]);
  return out;
}

/// Damped Gauss-Newton with Marquardt diagonal scaling. Rejects a degenerate
/// initial Jacobian; exhausting the iteration cap returns converged = false.
inline LMResult levenberg_marquardt(const ResidualFunction& f, Eigen::VectorXd p, const LMOptions& opt = {}) {
  LMResult res;
  Eigen::VectorXd r = f(p);
  if (!r.allFinite()) throw InvalidInput("least squares: residuals are not finite at the initial guess");
  if (r.size() < p.size()) throw InvalidInput("least squares: fewer data points than parameters");
  double cost = r.squaredNorm();
  Eigen::MatrixXd J = forward_jacobian(f, p, r, opt.relative_step);
  const double cond0 = jacobian_condition(J);
  if (!(cond0 <= opt.max_condition))
    throw InvalidInput("least squares: degenerate Jacobian at the initial guess (condition estimate " +
                       std::to_string(cond0) + ")");

  double lambda = opt.initial_lambda;
  for (res.iterations = 0; res.iterations < opt.max_iterations; ++res.iterations) {
    const Eigen::VectorXd g = J.transpose() * r;
    if (g.cwiseAbs().maxCoeff() < opt.gradient_tol) {
      res.converged = true;
      res.message = "gradient tolerance reached";
      break;
    }
    const Eigen::MatrixXd A = J.transpose() * J;
    Eigen::VectorXd d = A.diagonal();
    const double dmax = std::max(d.maxCoeff(), 1e-300);
    for (Eigen::Index k = 0; k < d.size(); ++k) d[k] = std::max(d[k], 1e-12 * dmax);

    bool accepted = false, small_step = false;
    while (true) {
      Eigen::MatrixXd M = A;
      M.diagonal() += lambda * d;
      const Eigen::VectorXd step = M.ldlt().solve(-g);
      small_step = step.norm() <= opt.step_tol * (p.norm() + opt.step_tol);
      const Eigen::VectorXd trial = p + step;
      const Eigen::VectorXd rt = f(trial);
      const double ct = rt.allFinite() ? rt.squaredNorm() : std::numeric_limits<double>::infinity();
      if (ct < cost) {
        p = trial;
        r = rt;
        cost = ct;
        lambda = std::max(lambda * 0.3, 1e-12);
        accepted = true;
        break;
      }
      if (small_step || lambda > 1e16) break;
      lambda *= 10.0;
    }
    if (small_step || !accepted) {
      res.converged = true;
      res.message = accepted ? "step tolerance reached" : "no further decrease possible";
      if (accepted) ++res.iterations;
      break;
    }
    J = forward_jacobian(f, p, r, opt.relative_step);
  }
  if (!res.converged) res.message = "iteration cap reached";

  J = forward_jacobian(f, p, r, opt.relative_step);
  res.params = p;
  res.residuals = r;
  res.jacobian = J;
  res.residual_norm = std::sqrt(cost);
  res.condition = jacobian_condition(J);
  const auto m = r.size(), n = p.size();
  const double s2 = m > n ? cost / static_cast<double>(m - n) : 0.0;
  res.covariance = s2 * normal_inverse(J);
  return res;
}

}  // namespace spindefect
