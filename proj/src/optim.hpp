#pragma once

// Shared numerical kernels: rank-revealing linear least squares and a dense
// Levenberg-Marquardt loop. Both the coefficient fitter and the sheaf
// minimizer run through these.

#include <functional>

#include "netsheaf/common.hpp"

namespace netsheaf::optim {

struct LinearLsq {
  Vec x;
  Eigen::Index rank = 0;
  bool rank_deficient = false;
};

// Minimum-norm least-squares solution of A x = b.
inline LinearLsq linear_least_squares(const Mat& a, const Vec& b, double threshold = 1e-10) {
  LinearLsq out;
  if (a.cols() == 0) {
    out.x = Vec::Zero(0);
    return out;
  }
  Eigen::CompleteOrthogonalDecomposition<Mat> cod(a);
  cod.setThreshold(threshold);
  out.x = cod.solve(b);
  out.rank = cod.rank();
  out.rank_deficient = out.rank < a.cols();
  return out;
}

struct LmOptions {
  int max_iters = 10000;
  double grad_tol = 1e-8;   // infinity norm of the gradient of ||r||^2
  double step_tol = 1e-10;  // infinity norm of the parameter step
};

struct LmResult {
  Vec x;
  double objective = 0.0;  // ||r||^2 at x
  bool converged = false;
  int iterations = 0;
  bool rank_deficient = false;
};

// Damped Gauss-Newton on r(x); jac returns the dense Jacobian of r.
inline LmResult levenberg_marquardt(const std::function<Vec(const Vec&)>& residual,
                                    const std::function<Mat(const Vec&)>& jac, Vec x,
                                    const LmOptions& opts = {}) {
  LmResult res;
  if (x.size() == 0) {
    res.x = x;
    Vec r = residual(x);
    res.objective = r.squaredNorm();
    res.converged = true;
    return res;
  }
  double lambda = 1e-4;
  Vec r = residual(x);
  double f = r.squaredNorm();
  for (int it = 0; it < opts.max_iters; ++it) {
    res.iterations = it + 1;
    Mat j = jac(x);
    Vec g = 2.0 * j.transpose() * r;
    if (g.lpNorm<Eigen::Infinity>() <= opts.grad_tol) {
      res.converged = true;
      break;
    }
    Mat h = j.transpose() * j;
    bool stepped = false;
    for (int tries = 0; tries < 40; ++tries) {
      Mat hd = h;
      hd.diagonal().array() += lambda;
      Eigen::LDLT<Mat> ldlt(hd);
      Vec step = ldlt.solve(-0.5 * g);
      if (!step.allFinite()) {
        lambda *= 10.0;
        continue;
      }
      Vec xt = x + step;
      Vec rt = residual(xt);
      double ft = rt.squaredNorm();
      if (ft <= f + 1e-15) {
        bool tiny = step.lpNorm<Eigen::Infinity>() <= opts.step_tol;
        x = xt;
        r = rt;
        f = ft;
        lambda = std::max(lambda * 0.3, 1e-12);
        stepped = true;
        if (tiny) {
          res.converged = true;
          it = opts.max_iters;  // double break
        }
        break;
      }
      lambda *= 10.0;
    }
    if (!stepped) {
      // No downhill step at any damping: treat as converged to tolerance.
      res.converged = true;
      break;
    }
    if (it >= opts.max_iters) break;
  }
  res.x = x;
  res.objective = f;
  return res;
}

}  // namespace netsheaf::optim
