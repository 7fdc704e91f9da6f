#pragma once

#include <cmath>
#include <stdexcept>
#include <utility>

#include "vawi/common.hpp"
#include "vawi/grid.hpp"

namespace vawi {

// forward difference along x; last row is zero (Neumann edge)
inline RealField grad_x(const RealField& w) {
  RealField g(w.grid);
  for (int i = 0; i + 1 < w.grid.nx; ++i)
    for (int j = 0; j < w.grid.nz; ++j) g(i, j) = w(i + 1, j) - w(i, j);
  return g;
}

inline RealField grad_z(const RealField& w) {
  RealField g(w.grid);
  for (int i = 0; i < w.grid.nx; ++i)
    for (int j = 0; j + 1 < w.grid.nz; ++j) g(i, j) = w(i, j + 1) - w(i, j);
  return g;
}

// exact adjoints of the forward differences
inline RealField grad_x_adj(const RealField& w) {
  const int nx = w.grid.nx, nz = w.grid.nz;
  RealField g(w.grid);
  for (int j = 0; j < nz; ++j) {
    g(0, j) = -w(0, j);
    for (int i = 1; i + 1 < nx; ++i) g(i, j) = w(i - 1, j) - w(i, j);
    g(nx - 1, j) = w(nx - 2, j);
  }
  return g;
}

inline RealField grad_z_adj(const RealField& w) {
  const int nx = w.grid.nx, nz = w.grid.nz;
  RealField g(w.grid);
  for (int i = 0; i < nx; ++i) {
    g(i, 0) = -w(i, 0);
    for (int j = 1; j + 1 < nz; ++j) g(i, j) = w(i, j - 1) - w(i, j);
    g(i, nz - 1) = w(i, nz - 2);
  }
  return g;
}

// isotropic discrete total variation
inline double tv_norm(const RealField& w) {
  RealField gx = grad_x(w), gz = grad_z(w);
  double s = 0.0;
  for (int k = 0; k < w.grid.n(); ++k)
    s += std::hypot(gx.data[k], gz.data[k]);
  return s;
}

// joint soft threshold of the gradient pair; zero stays zero
inline std::pair<RealField, RealField> shrink2(const RealField& gx,
                                               const RealField& gz, double t) {
  if (!(gx.grid == gz.grid))
    throw std::invalid_argument("shrink2: fields on different grids");
  if (t < 0.0) throw std::invalid_argument("shrink2: negative threshold");
  RealField px(gx.grid), pz(gx.grid);
  for (int k = 0; k < gx.grid.n(); ++k) {
    double r = std::hypot(gx.data[k], gz.data[k]);
    double f = r > t ? 1.0 - t / r : 0.0;
    px.data[k] = f * gx.data[k];
    pz.data[k] = f * gz.data[k];
  }
  return {px, pz};
}

inline RealField project_box(const RealField& w, const BoxBounds& b) {
  RealField out(w.grid);
  for (int k = 0; k < w.grid.n(); ++k)
    out.data[k] = std::clamp(w.data[k], b.lo, b.hi);
  return out;
}

// Bound-constrained TV-regularized least squares with a diagonal data term:
//   min_x  lambda ||G x - y||^2 + mu TV(x)  s.t.  lo <= x <= hi
// where G is diagonal. Several (G, y) pairs may be stacked with add_term;
// only |G|^2, Re(conj(G) y) and ||y||^2 are kept, so the normal operator
// stays diagonal. mu enters through threshold = mu / xi.
struct TvProblem {
  Grid2D grid;
  Eigen::VectorXd misfit_diag;  // sum of |G_i|^2
  Eigen::VectorXd misfit_rhs;   // sum of Re(conj(G_i) y_i)
  double y_norm_sq = 0.0;
  double lambda = 1.0;
  double xi = 1.0;        // split penalty weight
  double threshold = 0.0; // mu / xi
  BoxBounds bounds;

  explicit TvProblem(const Grid2D& g, double lambda_ = 1.0, BoxBounds b = {})
      : grid(g),
        misfit_diag(Eigen::VectorXd::Zero(g.n())),
        misfit_rhs(Eigen::VectorXd::Zero(g.n())),
        lambda(lambda_),
        bounds(b) {}

  void add_term(const ComplexField& g_diag, const ComplexField& y) {
    if (!(g_diag.grid == grid) || !(y.grid == grid))
      throw std::invalid_argument("TvProblem::add_term: grid mismatch");
    for (int k = 0; k < grid.n(); ++k) {
      misfit_diag[k] += std::norm(g_diag.data[k]);
      misfit_rhs[k] += std::real(std::conj(g_diag.data[k]) * y.data[k]);
    }
    y_norm_sq += y.data.squaredNorm();
  }

  double mu() const { return threshold * xi; }
};

// split variables p and scaled duals q of the inner ADMM; py carries the
// box-constrained copy of x
struct TvState {
  RealField x, px, py, pz, qx, qy, qz;
};

inline TvState init_tv_state(const RealField& x0, const BoxBounds& b) {
  TvState s;
  s.x = x0;
  s.px = grad_x(x0);
  s.pz = grad_z(x0);
  s.py = project_box(x0, b);
  s.qx = RealField(x0.grid, 0.0);
  s.qy = RealField(x0.grid, 0.0);
  s.qz = RealField(x0.grid, 0.0);
  return s;
}

inline double tv_objective(const TvProblem& p, const RealField& x) {
  double misfit = x.data.dot(p.misfit_diag.cwiseProduct(x.data)) -
                  2.0 * p.misfit_rhs.dot(x.data) + p.y_norm_sq;
  return p.lambda * misfit + p.mu() * tv_norm(x);
}

// x-block normal equations (gradient of lambda*misfit plus the split terms)
//   [2 lambda diag + xi (Gx^T Gx + I + Gz^T Gz)] x
//     = 2 lambda rhs + xi [Gx^T (px+qx) + (py+qy) + Gz^T (pz+qz)]
// solved by diagonally preconditioned CG to 1e-8 relative residual.
inline RealField tv_x_update(const TvProblem& p, const TvState& s) {
  const Grid2D& g = p.grid;
  const int n = g.n();

  auto apply = [&](const RealField& x) {
    RealField out(g);
    RealField gxTgx = grad_x_adj(grad_x(x));
    RealField gzTgz = grad_z_adj(grad_z(x));
    for (int k = 0; k < n; ++k)
      out.data[k] = 2.0 * p.lambda * p.misfit_diag[k] * x.data[k] +
                    p.xi * (gxTgx.data[k] + x.data[k] + gzTgz.data[k]);
    return out;
  };

  RealField rhs(g);
  {
    RealField tx(g), tz(g);
    for (int k = 0; k < n; ++k) {
      tx.data[k] = s.px.data[k] + s.qx.data[k];
      tz.data[k] = s.pz.data[k] + s.qz.data[k];
    }
    RealField ax = grad_x_adj(tx), az = grad_z_adj(tz);
    for (int k = 0; k < n; ++k)
      rhs.data[k] = 2.0 * p.lambda * p.misfit_rhs[k] +
                    p.xi * (ax.data[k] + s.py.data[k] + s.qy.data[k] + az.data[k]);
  }

  // diagonal of the normal operator for preconditioning
  Eigen::VectorXd prec(n);
  for (int i = 0; i < g.nx; ++i)
    for (int j = 0; j < g.nz; ++j) {
      double degx = (i + 1 < g.nx ? 1.0 : 0.0) + (i >= 1 ? 1.0 : 0.0);
      double degz = (j + 1 < g.nz ? 1.0 : 0.0) + (j >= 1 ? 1.0 : 0.0);
      int k = g.idx(i, j);
      prec[k] = 2.0 * p.lambda * p.misfit_diag[k] + p.xi * (1.0 + degx + degz);
    }

  RealField x = s.x;  // warm start
  RealField r(g), z(g), d(g);
  {
    RealField ax = apply(x);
    for (int k = 0; k < n; ++k) r.data[k] = rhs.data[k] - ax.data[k];
  }
  double rhs_norm = rhs.data.norm();
  if (rhs_norm == 0.0) return RealField(g, 0.0);
  for (int k = 0; k < n; ++k) z.data[k] = r.data[k] / prec[k];
  d = z;
  double rz = r.data.dot(z.data);
  const double tol = 1e-8 * rhs_norm;
  const int max_iter = 10 * n + 100;
  for (int it = 0; it < max_iter; ++it) {
    if (r.data.norm() <= tol) return x;
    RealField ad = apply(d);
    double dad = d.data.dot(ad.data);
    if (dad <= 0.0) throw SolverError("tv_x_update: operator lost positive definiteness");
    double step = rz / dad;
    for (int k = 0; k < n; ++k) {
      x.data[k] += step * d.data[k];
      r.data[k] -= step * ad.data[k];
    }
    for (int k = 0; k < n; ++k) z.data[k] = r.data[k] / prec[k];
    double rz_new = r.data.dot(z.data);
    double beta = rz_new / rz;
    rz = rz_new;
    for (int k = 0; k < n; ++k) d.data[k] = z.data[k] + beta * d.data[k];
  }
  if (r.data.norm() <= tol) return x;
  throw SolverError("tv_x_update: conjugate gradient stalled");
}

// One inner ADMM sweep: x-block solve, joint shrink of the gradient pair,
// box projection, scaled dual ascent. With zero threshold and no bounds the
// whole step collapses to the closed-form diagonal least-squares solution.
inline void tv_admm_step(const TvProblem& p, TvState& s) {
  if (!(p.xi > 0.0)) throw std::invalid_argument("tv_admm_step: xi must be positive");
  const int n = p.grid.n();

  if (p.threshold == 0.0 && !p.bounds.finite()) {
    for (int k = 0; k < n; ++k)
      if (p.misfit_diag[k] > 0.0) s.x.data[k] = p.misfit_rhs[k] / p.misfit_diag[k];
    return;
  }

  s.x = tv_x_update(p, s);
  RealField gx = grad_x(s.x), gz = grad_z(s.x);
  RealField sx(p.grid), sz(p.grid);
  for (int k = 0; k < n; ++k) {
    sx.data[k] = gx.data[k] - s.qx.data[k];
    sz.data[k] = gz.data[k] - s.qz.data[k];
  }
  auto [px, pz] = shrink2(sx, sz, p.threshold);
  s.px = px;
  s.pz = pz;
  RealField xy(p.grid);
  for (int k = 0; k < n; ++k) xy.data[k] = s.x.data[k] - s.qy.data[k];
  s.py = project_box(xy, p.bounds);
  for (int k = 0; k < n; ++k) {
    s.qx.data[k] += s.px.data[k] - gx.data[k];
    s.qy.data[k] += s.py.data[k] - s.x.data[k];
    s.qz.data[k] += s.pz.data[k] - gz.data[k];
  }
}

}  // namespace vawi
