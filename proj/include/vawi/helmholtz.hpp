#pragma once

#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <cmath>
#include <cstdio>
#include <memory>
#include <random>
#include <utility>
#include <vector>

#include "vawi/attenuation.hpp"
#include "vawi/common.hpp"
#include "vawi/grid.hpp"

namespace vawi {

using SpMat = Eigen::SparseMatrix<cplx>;

struct ModelingOptions {
  AttenuationLaw law{};
  // reference velocity for the absorbing-layer profile; 0 derives it from the
  // model. Keep it fixed across forward and inverse runs that must share one
  // discretization.
  double pml_ref_velocity = 0.0;
};

// replicate edge values of an interior field into the pad
template <class S>
Eigen::Vector<S, Eigen::Dynamic> extend_to_pad(const Field<S>& f) {
  const Grid2D& g = f.grid;
  Eigen::Vector<S, Eigen::Dynamic> out(g.n_pad());
  for (int ip = 0; ip < g.nxp(); ++ip) {
    int i = std::clamp(ip - g.npml, 0, g.nx - 1);
    for (int jp = 0; jp < g.nzp(); ++jp) {
      int j = std::clamp(jp - g.npml, 0, g.nz - 1);
      out[g.pidx(ip, jp)] = f(i, j);
    }
  }
  return out;
}

template <class S>
Field<S> restrict_to_interior(const Grid2D& g, const Eigen::Vector<S, Eigen::Dynamic>& u) {
  if (u.size() != g.n_pad())
    throw std::invalid_argument("restrict_to_interior: vector does not match padded grid");
  Field<S> out(g);
  for (int i = 0; i < g.nx; ++i)
    for (int j = 0; j < g.nz; ++j) out(i, j) = u[g.pad_idx(i, j)];
  return out;
}

// Discrete frequency-domain wave operator A = Delta + omega^2 diag(m o rho(alpha))
// on the padded grid, with complex coordinate stretching in the pad. The
// stretched 5-point Laplacian is symmetrized by the similarity transform
// diag(sqrt(sx*sz)), which leaves interior rows untouched and the mass term
// exactly diagonal, and makes the matrix complex-symmetric (reciprocity).
struct HelmholtzOperator {
  Grid2D grid;
  double omega = 0;
  AttenuationLaw law{};
  SpMat delta_part;             // stretched Laplacian, n_pad x n_pad
  Eigen::VectorXcd mass_diag;   // omega^2 * (m_ext o rho(alpha_ext))
  SpMat matrix;                 // delta_part + diag(mass_diag)

  Eigen::VectorXcd apply(const Eigen::VectorXcd& u) const {
    if (u.size() != matrix.rows())
      throw std::invalid_argument("HelmholtzOperator::apply: size mismatch");
    return matrix * u;
  }
};

namespace detail {

inline cplx pml_stretch(double coord, double lo, double hi, double lpml,
                        double sigma_max, double omega) {
  double t = coord < lo ? lo - coord : (coord > hi ? coord - hi : 0.0);
  if (t <= 0.0 || lpml <= 0.0) return {1.0, 0.0};
  double sigma = sigma_max * (t / lpml) * (t / lpml);
  return 1.0 / cplx(1.0, sigma / omega);
}

inline SpMat stretched_laplacian(const Grid2D& g, double omega, double c_ref) {
  const double lx = g.npml * g.dx, lz = g.npml * g.dz;
  const double smx = lx > 0 ? 3.0 * c_ref * std::log(1000.0) / (2.0 * lx) : 0.0;
  const double smz = lz > 0 ? 3.0 * c_ref * std::log(1000.0) / (2.0 * lz) : 0.0;
  const double xlo = g.x0, xhi = g.x(g.nx - 1);
  const double zlo = g.z0, zhi = g.z(g.nz - 1);
  auto sx = [&](double x) { return pml_stretch(x, xlo, xhi, lx, smx, omega); };
  auto sz = [&](double z) { return pml_stretch(z, zlo, zhi, lz, smz, omega); };

  std::vector<Eigen::Triplet<cplx>> trips;
  trips.reserve(5 * g.n_pad());
  const double idx2 = 1.0 / (g.dx * g.dx), idz2 = 1.0 / (g.dz * g.dz);
  for (int ip = 0; ip < g.nxp(); ++ip) {
    const double x = g.xp(ip);
    const cplx sxc = sx(x), sxp = sx(x + 0.5 * g.dx), sxm = sx(x - 0.5 * g.dx);
    for (int jp = 0; jp < g.nzp(); ++jp) {
      const double z = g.zp(jp);
      const cplx szc = sz(z), szp = sz(z + 0.5 * g.dz), szm = sz(z - 0.5 * g.dz);
      const int r = g.pidx(ip, jp);
      trips.emplace_back(r, r, -sxc * (sxp + sxm) * idx2 - szc * (szp + szm) * idz2);
      // off-diagonal couplings are symmetric under i <-> i+1 by construction
      if (ip + 1 < g.nxp())
        trips.emplace_back(r, g.pidx(ip + 1, jp), sxp * std::sqrt(sxc * sx(x + g.dx)) * idx2);
      if (ip > 0)
        trips.emplace_back(r, g.pidx(ip - 1, jp), sxm * std::sqrt(sxc * sx(x - g.dx)) * idx2);
      if (jp + 1 < g.nzp())
        trips.emplace_back(r, g.pidx(ip, jp + 1), szp * std::sqrt(szc * sz(z + g.dz)) * idz2);
      if (jp > 0)
        trips.emplace_back(r, g.pidx(ip, jp - 1), szm * std::sqrt(szc * sz(z - g.dz)) * idz2);
    }
  }
  SpMat d(g.n_pad(), g.n_pad());
  d.setFromTriplets(trips.begin(), trips.end());
  d.makeCompressed();
  return d;
}

}  // namespace detail

inline Eigen::VectorXcd mass_diagonal(const Grid2D& g, const RealField& m,
                                      const RealField& alpha, double omega,
                                      const AttenuationLaw& law) {
  Eigen::VectorXd m_ext = extend_to_pad(m);
  Eigen::VectorXd a_ext = extend_to_pad(alpha);
  Eigen::VectorXcd mass(g.n_pad());
  const double w2 = omega * omega;
  for (int k = 0; k < g.n_pad(); ++k)
    mass[k] = w2 * m_ext[k] * rho(a_ext[k], omega, law);
  return mass;
}

inline HelmholtzOperator assemble(const Grid2D& g, const RealField& m,
                                  const RealField& alpha, double omega,
                                  const ModelingOptions& opt = {}) {
  if (!(m.grid == g) || !(alpha.grid == g))
    throw std::invalid_argument("assemble: fields do not match grid");
  if (!(omega > 0.0)) throw std::invalid_argument("assemble: omega must be positive");
  double m_min = m.data.minCoeff(), m_max = m.data.maxCoeff();
  if (!(m_min > 0.0))
    throw std::invalid_argument("assemble: squared slowness must be positive everywhere");

  double v_min = 1.0 / std::sqrt(m_max);
  double freq = omega / (2.0 * pi);
  double ppw = v_min / (freq * std::max(g.dx, g.dz));
  if (ppw < 2.5)
    throw std::invalid_argument("assemble: fewer than 2.5 grid points per wavelength (" +
                                std::to_string(ppw) + "); refine the grid or lower the frequency");
  if (ppw < 4.0)
    std::fprintf(stderr, "warning: only %.2f grid points per wavelength at %.3f Hz\n",
                 ppw, freq);

  double c_ref = opt.pml_ref_velocity > 0.0 ? opt.pml_ref_velocity : 1.0 / std::sqrt(m_min);

  HelmholtzOperator op;
  op.grid = g;
  op.omega = omega;
  op.law = opt.law;
  op.delta_part = detail::stretched_laplacian(g, omega, c_ref);
  op.mass_diag = mass_diagonal(g, m, alpha, omega, opt.law);
  op.matrix = op.delta_part;
  for (int k = 0; k < g.n_pad(); ++k) op.matrix.coeffRef(k, k) += op.mass_diag[k];
  op.matrix.makeCompressed();
  return op;
}

// swap in a new model without re-deriving the stretched Laplacian
inline void update_mass(HelmholtzOperator& op, const RealField& m,
                        const RealField& alpha) {
  op.mass_diag = mass_diagonal(op.grid, m, alpha, op.omega, op.law);
  op.matrix = op.delta_part;
  for (int k = 0; k < op.grid.n_pad(); ++k) op.matrix.coeffRef(k, k) += op.mass_diag[k];
  op.matrix.makeCompressed();
}

// point sampling at receiver nodes
struct SamplingOperator {
  std::vector<int> interior_nodes;  // idx() of each receiver
  std::vector<int> padded_nodes;    // pad_idx() of each receiver

  int count() const { return static_cast<int>(padded_nodes.size()); }
};

inline SamplingOperator make_sampling(const Grid2D& g,
                                      const std::vector<Position>& positions) {
  if (static_cast<int>(positions.size()) >= g.n())
    throw std::invalid_argument("make_sampling: more receivers than interior nodes");
  SamplingOperator op;
  op.interior_nodes.reserve(positions.size());
  op.padded_nodes.reserve(positions.size());
  for (const auto& p : positions) {
    auto [i, j] = nearest_node(g, p);
    op.interior_nodes.push_back(g.idx(i, j));
    op.padded_nodes.push_back(g.pad_idx(i, j));
  }
  return op;
}

inline Eigen::VectorXcd sample(const SamplingOperator& op, const Eigen::VectorXcd& u_pad) {
  Eigen::VectorXcd d(op.count());
  for (int r = 0; r < op.count(); ++r) d[r] = u_pad[op.padded_nodes[r]];
  return d;
}

// adjoint of sample: scatter receiver values onto the padded grid (sums duplicates)
inline Eigen::VectorXcd inject(const Grid2D& g, const SamplingOperator& op,
                               const Eigen::VectorXcd& values) {
  if (values.size() != op.count())
    throw std::invalid_argument("inject: value count does not match sampling operator");
  Eigen::VectorXcd u = Eigen::VectorXcd::Zero(g.n_pad());
  for (int r = 0; r < op.count(); ++r) u[op.padded_nodes[r]] += values[r];
  return u;
}

// discrete delta at the nearest node, scaled by 1/cell area so the source
// integrates to unit strength
inline Eigen::VectorXcd make_source_vector(const Grid2D& g, Position p) {
  auto [i, j] = nearest_node(g, p);
  Eigen::VectorXcd b = Eigen::VectorXcd::Zero(g.n_pad());
  b[g.pad_idx(i, j)] = 1.0 / (g.dx * g.dz);
  return b;
}

enum class FactorMethod { sparse_lu, cgnr };

class Factorization {
 public:
  virtual ~Factorization() = default;
  virtual Eigen::VectorXcd solve(const Eigen::VectorXcd& rhs) const = 0;
  int solve_count() const { return solves_; }

 protected:
  mutable int solves_ = 0;
};

namespace detail {

class SparseLuFactorization final : public Factorization {
 public:
  explicit SparseLuFactorization(SpMat a) : a_(std::move(a)) {
    lu_.compute(a_);
    if (lu_.info() != Eigen::Success) {
      std::string msg = "sparse LU factorization failed: singular pivot";
      for (int k = 0; k < a_.rows(); ++k)
        if (a_.coeff(k, k) == cplx(0.0, 0.0)) {
          msg += " (zero diagonal at row " + std::to_string(k) + ")";
          break;
        }
      throw SolverError(msg);
    }
  }

  Eigen::VectorXcd solve(const Eigen::VectorXcd& rhs) const override {
    ++solves_;
    Eigen::VectorXcd x = lu_.solve(rhs);
    double rn = rhs.norm();
    if (rn > 0.0) {
      // one step of iterative refinement keeps the residual near roundoff
      Eigen::VectorXcd r = rhs - a_ * x;
      if (r.norm() > 1e-13 * rn) x += lu_.solve(r);
    }
    return x;
  }

 private:
  SpMat a_;
  Eigen::SparseLU<SpMat, Eigen::COLAMDOrdering<int>> lu_;
};

class CgnrFactorization final : public Factorization {
 public:
  explicit CgnrFactorization(SpMat a) : a_(std::move(a)), ah_(a_.adjoint()) {
    precond_ = Eigen::VectorXd::Zero(a_.cols());
    for (int c = 0; c < a_.outerSize(); ++c)
      for (SpMat::InnerIterator it(a_, c); it; ++it)
        precond_[it.col()] += std::norm(it.value());
    for (int k = 0; k < precond_.size(); ++k)
      if (precond_[k] <= 0.0)
        throw SolverError("cgnr: matrix has an empty column (row " + std::to_string(k) + ")");
  }

  Eigen::VectorXcd solve(const Eigen::VectorXcd& rhs) const override {
    ++solves_;
    const double tol = 1e-10;
    const int max_iter = std::max<int>(2000, 10 * static_cast<int>(a_.rows()));
    Eigen::VectorXcd x = Eigen::VectorXcd::Zero(a_.cols());
    Eigen::VectorXcd r = rhs;
    double rhs_norm = rhs.norm();
    if (rhs_norm == 0.0) return x;
    Eigen::VectorXcd s = ah_ * r;
    Eigen::VectorXcd z = s.cwiseQuotient(precond_.cast<cplx>());
    Eigen::VectorXcd p = z;
    double gamma = std::real(s.dot(z));
    for (int it = 0; it < max_iter; ++it) {
      if (r.norm() <= tol * rhs_norm) return x;
      Eigen::VectorXcd q = a_ * p;
      double qq = q.squaredNorm();
      if (qq == 0.0) break;
      double alpha = gamma / qq;
      x += alpha * p;
      r -= alpha * q;
      s = ah_ * r;
      z = s.cwiseQuotient(precond_.cast<cplx>());
      double gamma_new = std::real(s.dot(z));
      p = z + (gamma_new / gamma) * p;
      gamma = gamma_new;
    }
    if (r.norm() <= tol * rhs_norm) return x;
    char buf[160];
    std::snprintf(buf, sizeof buf,
                  "cgnr did not converge: relative residual %.3e after %d iterations",
                  r.norm() / rhs_norm, max_iter);
    throw SolverError(buf);
  }

 private:
  SpMat a_, ah_;
  Eigen::VectorXd precond_;
};

}  // namespace detail

inline std::unique_ptr<Factorization> factorize(const SpMat& a,
                                                FactorMethod method = FactorMethod::sparse_lu) {
  if (a.rows() != a.cols())
    throw std::invalid_argument("factorize: matrix must be square");
  switch (method) {
    case FactorMethod::sparse_lu:
      return std::make_unique<detail::SparseLuFactorization>(a);
    case FactorMethod::cgnr:
      return std::make_unique<detail::CgnrFactorization>(a);
  }
  throw std::invalid_argument("factorize: unknown method");
}

inline Eigen::VectorXcd solve(const Factorization& f, const Eigen::VectorXcd& rhs) {
  return f.solve(rhs);
}

// largest eigenvalue of A^H A by power iteration; *converged reports whether
// the Rayleigh quotient settled to rel_tol
inline double largest_normal_eigenvalue(const SpMat& a, int max_iter = 500,
                                        double rel_tol = 1e-5, unsigned seed = 12345,
                                        bool* converged = nullptr) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  Eigen::VectorXcd v(a.cols());
  for (int k = 0; k < v.size(); ++k) v[k] = cplx(uni(rng), uni(rng));
  v.normalize();
  double lam = 0.0;
  if (converged) *converged = false;
  for (int it = 0; it < max_iter; ++it) {
    Eigen::VectorXcd w = a * v;
    double lam_new = w.squaredNorm();  // v^H A^H A v with ||v|| = 1
    Eigen::VectorXcd vn = a.adjoint() * w;
    double n = vn.norm();
    if (n == 0.0) return 0.0;
    v = vn / n;
    if (it > 0 && std::abs(lam_new - lam) <= rel_tol * lam_new) {
      if (converged) *converged = true;
      return lam_new;
    }
    lam = lam_new;
  }
  return lam;
}

// upper bound on the largest eigenvalue of A^H A via ||A||_1 * ||A||_inf
inline double normal_eigenvalue_bound(const SpMat& a) {
  Eigen::VectorXd col_sums = Eigen::VectorXd::Zero(a.cols());
  Eigen::VectorXd row_sums = Eigen::VectorXd::Zero(a.rows());
  for (int c = 0; c < a.outerSize(); ++c)
    for (SpMat::InnerIterator it(a, c); it; ++it) {
      double v = std::abs(it.value());
      col_sums[it.col()] += v;
      row_sums[it.row()] += v;
    }
  return col_sums.maxCoeff() * row_sums.maxCoeff();
}

}  // namespace vawi
