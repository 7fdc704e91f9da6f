#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <utility>
#include <vector>

#include "vawi/attenuation.hpp"
#include "vawi/common.hpp"
#include "vawi/grid.hpp"
#include "vawi/helmholtz.hpp"
#include "vawi/tv.hpp"

namespace vawi {

struct Penalties {
  double lambda = 1.0;    // wavefield-equation weight
  double gamma = 0.0;     // data weight; 0 = tune per batch from the operator spectrum
  double mu = 0.6;        // TV weight on squared slowness
  double nu = 0.4;        // TV weight on attenuation
  double xi_m = 0.0;      // split penalty; 0 = tune from the gradient-magnitude rule
  double xi_alpha = 0.0;
};

struct StopCriteria {
  double eps_src = 1e-3;   // sum of squared wave-equation residuals
  double eps_data = 1e-5;  // sum of squared data residuals
  int max_iterations = 30;
};

inline bool check_stop(double src_residual_sq, double data_residual_sq,
                       const StopCriteria& c) {
  return src_residual_sq <= c.eps_src && data_residual_sq <= c.eps_data;
}

// peaceman_rachford refreshes the source dual after every primal block (and
// the data dual after the wavefield block); admm keeps duals frozen through
// the primal sweep and updates them once at the end of the cycle.
enum class IterationMode { peaceman_rachford, admm };

struct SurveyData {
  Acquisition acq;
  std::vector<double> frequencies_hz;
  std::vector<Eigen::MatrixXcd> data;  // per frequency: receivers x sources
};

inline void validate_survey(const SurveyData& s) {
  if (s.acq.sources.empty() || s.acq.receivers.empty())
    throw std::invalid_argument("survey: needs at least one source and one receiver");
  if (s.frequencies_hz.empty())
    throw std::invalid_argument("survey: needs at least one frequency");
  if (s.data.size() != s.frequencies_hz.size())
    throw std::invalid_argument("survey: one data block per frequency required");
  for (double f : s.frequencies_hz)
    if (!(f > 0.0)) throw std::invalid_argument("survey: frequencies must be positive");
  for (const auto& blk : s.data)
    if (blk.rows() != static_cast<Eigen::Index>(s.acq.receivers.size()) ||
        blk.cols() != static_cast<Eigen::Index>(s.acq.sources.size()))
      throw std::invalid_argument("survey: data block shape must be receivers x sources");
}

struct InversionSettings {
  Penalties penalties;
  StopCriteria stop;
  IterationMode mode = IterationMode::peaceman_rachford;
  BoxBounds m_bounds;      // on squared slowness
  BoxBounds alpha_bounds;
  bool regularize = true;  // false drops the TV terms (bounds still apply)
  double threshold_fraction = 0.02;  // of the largest gradient magnitude
  double eig_margin = 1e-2;          // gamma = lambda / (margin * lambda_max(A^H A))
  ModelingOptions modeling;
  FactorMethod factor_method = FactorMethod::sparse_lu;
  int threads = 1;
  std::vector<std::vector<int>> batches;  // frequency-index groups; empty = all jointly
};

struct HistoryRow {
  int k = 0, batch = 0;
  double sum_src_residual_sq = 0, sum_data_residual_sq = 0;
  double tv_m = 0, tv_alpha = 0;
};

struct BatchReport {
  int batch = 0, iterations = 0;
  bool hit_thresholds = false;
  double final_src_residual_sq = 0, final_data_residual_sq = 0;
  double gamma = 0, threshold_m = 0, threshold_alpha = 0;
};

struct InversionResult {
  RealField m, alpha;
  std::vector<HistoryRow> history;
  std::vector<BatchReport> reports;
  std::vector<std::pair<RealField, RealField>> batch_models;
};

// gamma tuned so the data term sits eig_margin below the operator spectrum:
// gamma = lambda / (eig_margin * max_f lambda_max(A_f^H A_f))
inline Penalties tune_penalties(Penalties base,
                                const std::vector<const HelmholtzOperator*>& ops,
                                double eig_margin = 1e-2) {
  if (ops.empty()) throw std::invalid_argument("tune_penalties: no operators given");
  double lam_max = 0.0;
  for (size_t i = 0; i < ops.size(); ++i) {
    bool ok = false;
    double lam = largest_normal_eigenvalue(ops[i]->matrix, 500, 1e-5,
                                           12345u + static_cast<unsigned>(i), &ok);
    if (!ok) lam = normal_eigenvalue_bound(ops[i]->matrix);
    lam_max = std::max(lam_max, lam);
  }
  if (!(lam_max > 0.0)) throw SolverError("tune_penalties: operator spectrum estimate is zero");
  base.gamma = base.lambda / (eig_margin * lam_max);
  return base;
}

class InversionDriver {
 public:
  InversionDriver(const Grid2D& g, const SurveyData& survey, const RealField& m0,
                  const RealField& alpha0, const InversionSettings& st)
      : grid_(g), set_(st), m_(m0), alpha_(alpha0) {
    validate_survey(survey);
    if (!(m0.grid == g) || !(alpha0.grid == g))
      throw std::invalid_argument("inversion: initial models do not match grid");
    freqs_ = survey.frequencies_hz;
    acq_ = survey.acq;
    sampling_ = make_sampling(g, acq_.receivers);
    const int ns = static_cast<int>(acq_.sources.size());

    // fix the absorbing-layer profile once so every assembly in the run uses
    // the same discretization
    if (set_.modeling.pml_ref_velocity <= 0.0)
      set_.modeling.pml_ref_velocity = 1.0 / std::sqrt(m0.data.minCoeff());

    b_.resize(g.n_pad(), ns);
    for (int s = 0; s < ns; ++s) b_.col(s) = make_source_vector(g, acq_.sources[s]);
    scale_ = 1.0 / b_.cwiseAbs().maxCoeff();
    b_ *= scale_;

    const int nf = static_cast<int>(freqs_.size());
    d_.resize(nf);
    ops_.reserve(nf);
    for (int f = 0; f < nf; ++f) {
      d_[f] = survey.data[f] * scale_;
      ops_.push_back(assemble(g, m_, alpha_, 2.0 * pi * freqs_[f], set_.modeling));
    }
    facts_.resize(nf);
    u_.assign(nf, Eigen::MatrixXcd::Zero(g.n_pad(), ns));
    bd_.assign(nf, Eigen::MatrixXcd::Zero(g.n_pad(), ns));
    dd_.assign(nf, Eigen::MatrixXcd::Zero(sampling_.count(), ns));

    if (set_.batches.empty()) {
      set_.batches.emplace_back(nf);
      std::iota(set_.batches[0].begin(), set_.batches[0].end(), 0);
    }
    for (const auto& grp : set_.batches) {
      if (grp.empty()) throw std::invalid_argument("inversion: empty frequency batch");
      for (int f : grp)
        if (f < 0 || f >= nf)
          throw std::invalid_argument("inversion: batch frequency index out of range");
    }
  }

  int batch_count() const { return static_cast<int>(set_.batches.size()); }
  int source_count() const { return static_cast<int>(b_.cols()); }
  const RealField& m() const { return m_; }
  const RealField& alpha() const { return alpha_; }
  const std::vector<HistoryRow>& history() const { return history_; }
  double gamma() const { return gamma_; }
  double data_scale() const { return scale_; }
  int factorization_count() const { return factor_count_; }
  bool stop_reached() const { return stop_hit_; }
  int iterations_in_batch() const { return iter_in_batch_; }
  double threshold_m() const { return thr_m_; }
  double threshold_alpha() const { return thr_a_; }
  const HelmholtzOperator& op(int f) const { return ops_.at(f); }
  const SamplingOperator& sampling() const { return sampling_; }
  const Eigen::MatrixXcd& wavefields(int f) const { return u_.at(f); }
  const Eigen::MatrixXcd& source_duals(int f) const { return bd_.at(f); }
  const Eigen::MatrixXcd& data_duals(int f) const { return dd_.at(f); }
  double last_src_residual_sq() const { return src_sq_; }
  double last_data_residual_sq() const { return data_sq_; }

  void start_batch(int bi) {
    if (bi < 0 || bi >= batch_count())
      throw std::invalid_argument("start_batch: batch index out of range");
    batch_ = bi;
    active_ = set_.batches[bi];
    iter_in_batch_ = 0;
    stop_hit_ = false;
    for (int f : active_) {
      u_[f].setZero();
      bd_[f].setZero();
      dd_[f].setZero();
    }
    tvs_m_ = init_tv_state(m_, set_.m_bounds);
    tvs_a_ = init_tv_state(alpha_, set_.alpha_bounds);
    m_tuned_ = a_tuned_ = false;
    thr_m_ = thr_a_ = 0.0;

    refresh_operators();
    if (set_.penalties.gamma > 0.0) {
      gamma_ = set_.penalties.gamma;
    } else {
      std::vector<const HelmholtzOperator*> ops;
      for (int f : active_) ops.push_back(&ops_[f]);
      gamma_ = tune_penalties(set_.penalties, ops, set_.eig_margin).gamma;
    }
  }

  // one full outer iteration in the configured mode
  void iterate() {
    ++iter_in_batch_;
    src_sq_ = data_sq_ = 0.0;
    if (set_.mode == IterationMode::peaceman_rachford) {
      // staggered: duals refresh between the wavefield block and the combined
      // model block, so each side works against an up-to-date residual
      reconstruct_wavefields();
      refresh_data_duals(true);
      refresh_source_duals(false);
      slowness_update();
      attenuation_update();
      refresh_operators();
      refresh_source_duals(true);
    } else {
      reconstruct_wavefields();
      slowness_update();
      attenuation_update();
      refresh_operators();
      refresh_source_duals(true);
      refresh_data_duals(true);
    }
    history_.push_back({iter_in_batch_, batch_, src_sq_, data_sq_,
                        tv_norm(m_), tv_norm(alpha_)});
    stop_hit_ = check_stop(src_sq_, data_sq_, set_.stop);
  }

  InversionResult run() {
    InversionResult res;
    for (int bi = 0; bi < batch_count(); ++bi) {
      start_batch(bi);
      while (iter_in_batch_ < set_.stop.max_iterations && !stop_hit_) iterate();
      res.reports.push_back({bi, iter_in_batch_, stop_hit_, src_sq_, data_sq_,
                             gamma_, thr_m_, thr_a_});
      res.batch_models.emplace_back(m_, alpha_);
    }
    res.m = m_;
    res.alpha = alpha_;
    res.history = history_;
    return res;
  }

  // --- primal blocks and dual refreshes (public for verification) ---

  // minimizes lambda ||A u - (b~ + b)||^2 + gamma ||P u - (d~ + d)||^2 per
  // source; one factorization of the normal matrix per frequency, shared by
  // all sources
  void reconstruct_wavefields() {
    refresh_operators();
    const double lam = set_.penalties.lambda;
    parallel_for(static_cast<int>(active_.size()), set_.threads, [&](int a) {
      int f = active_[a];
      const SpMat& A = ops_[f].matrix;
      SpMat K = (SpMat(A.adjoint()) * A).pruned();
      K *= lam;
      for (int node : sampling_.padded_nodes) K.coeffRef(node, node) += gamma_;
      K.makeCompressed();
      facts_[f] = factorize(K, set_.factor_method);
      for (int s = 0; s < source_count(); ++s) {
        Eigen::VectorXcd rhs =
            lam * (A.adjoint() * (bd_[f].col(s) + b_.col(s))) +
            gamma_ * inject(grid_, sampling_, dd_[f].col(s) + d_[f].col(s));
        u_[f].col(s) = facts_[f]->solve(rhs);
      }
    });
    factor_count_ += static_cast<int>(active_.size());
  }

  void slowness_update() {
    TvProblem prob(grid_, set_.penalties.lambda, set_.m_bounds);
    for (int f : active_) {
      const double w2 = ops_[f].omega * ops_[f].omega;
      ComplexField rho_int(grid_);
      for (int k = 0; k < grid_.n(); ++k)
        rho_int.data[k] = rho(alpha_.data[k], ops_[f].omega, set_.modeling.law);
      for (int s = 0; s < source_count(); ++s) {
        Eigen::VectorXcd y_pad =
            bd_[f].col(s) + b_.col(s) - ops_[f].delta_part * u_[f].col(s);
        ComplexField u_int = restrict_to_interior<cplx>(grid_, u_[f].col(s));
        ComplexField ldiag(grid_);
        for (int k = 0; k < grid_.n(); ++k)
          ldiag.data[k] = w2 * u_int.data[k] * rho_int.data[k];
        prob.add_term(ldiag, restrict_to_interior<cplx>(grid_, y_pad));
      }
    }
    run_model_step(prob, tvs_m_, effective_mu(), set_.penalties.xi_m, m_tuned_,
                   thr_m_, xi_m_);
    m_ = tvs_m_.x;
  }

  void attenuation_update() {
    TvProblem prob(grid_, set_.penalties.lambda, set_.alpha_bounds);
    Eigen::VectorXd m_ext = extend_to_pad(m_);
    for (int f : active_) {
      const double w2 = ops_[f].omega * ops_[f].omega;
      const cplx bet = beta(ops_[f].omega, set_.modeling.law);
      for (int s = 0; s < source_count(); ++s) {
        // lossless operator at the fresh slowness: A(m, 0) u
        Eigen::VectorXcd au = ops_[f].delta_part * u_[f].col(s);
        au.array() += w2 * m_ext.array().cast<cplx>() * u_[f].col(s).array();
        Eigen::VectorXcd h_pad = bd_[f].col(s) + b_.col(s) - au;
        ComplexField u_int = restrict_to_interior<cplx>(grid_, u_[f].col(s));
        ComplexField hdiag(grid_);
        for (int k = 0; k < grid_.n(); ++k)
          hdiag.data[k] = 2.0 * w2 * bet * u_int.data[k] * m_.data[k];
        prob.add_term(hdiag, restrict_to_interior<cplx>(grid_, h_pad));
      }
    }
    run_model_step(prob, tvs_a_, effective_nu(), set_.penalties.xi_alpha, a_tuned_,
                   thr_a_, xi_a_);
    alpha_ = tvs_a_.x;
  }

  // b~ += b - A u with the operators at their current masses
  void refresh_source_duals(bool capture_residual) {
    for (int f : active_)
      for (int s = 0; s < source_count(); ++s) {
        Eigen::VectorXcd inc = b_.col(s) - ops_[f].matrix * u_[f].col(s);
        bd_[f].col(s) += inc;
        if (capture_residual) src_sq_ += inc.squaredNorm();
      }
  }

  // d~ += d - P u
  void refresh_data_duals(bool capture_residual) {
    for (int f : active_)
      for (int s = 0; s < source_count(); ++s) {
        Eigen::VectorXcd inc = d_[f].col(s) - sample(sampling_, u_[f].col(s));
        dd_[f].col(s) += inc;
        if (capture_residual) data_sq_ += inc.squaredNorm();
      }
  }

  // re-sync operator mass diagonals with the current (m, alpha)
  void refresh_operators() {
    for (int f : active_) update_mass(ops_[f], m_, alpha_);
  }

 private:
  double effective_mu() const { return set_.regularize ? set_.penalties.mu : 0.0; }
  double effective_nu() const { return set_.regularize ? set_.penalties.nu : 0.0; }

  // Applies the shared threshold/penalty policy, runs one inner TV sweep and,
  // on the first regularized pass of a batch (homogeneous models have zero
  // gradients, so no scale exists yet), bootstraps with threshold 0 and tunes
  // the threshold from the resulting iterate.
  void run_model_step(TvProblem& prob, TvState& state, double weight,
                      double user_xi, bool& tuned, double& thr, double& xi) {
    if (user_xi > 0.0) {
      prob.xi = user_xi;
      prob.threshold = weight / user_xi;
    } else if (weight <= 0.0) {
      prob.xi = fallback_xi(prob);
      prob.threshold = 0.0;
    } else if (tuned) {
      prob.xi = xi;
      prob.threshold = thr;
    } else {
      double r = max_gradient_magnitude(state.x);
      if (r > 0.0) {
        thr = set_.threshold_fraction * r;
        xi = weight / thr;
        tuned = true;
        prob.xi = xi;
        prob.threshold = thr;
      } else {
        prob.xi = fallback_xi(prob);
        prob.threshold = 0.0;
      }
    }
    // The weights mu, nu and the 0.02 threshold rule assume parameters of
    // order one, but squared slowness (~1e-7 in SI) and attenuation (~1e-1)
    // give misfit quadratics twelve orders of magnitude apart. Dividing by
    // the mean normal diagonal makes lambda the dimensionless misfit-versus-
    // regularization balance for every block, independent of units.
    double mean_diag = prob.misfit_diag.mean();
    if (mean_diag > 0.0)
      prob.lambda = set_.penalties.lambda * prob.xi / mean_diag;
    tv_admm_step(prob, state);
    if (weight > 0.0 && user_xi <= 0.0 && !tuned) {
      double r = max_gradient_magnitude(state.x);
      if (r > 0.0) {
        thr = set_.threshold_fraction * r;
        xi = weight / thr;
        tuned = true;
      }
    }
  }

  static double max_gradient_magnitude(const RealField& x) {
    RealField gx = grad_x(x), gz = grad_z(x);
    double r = 0.0;
    for (int k = 0; k < x.grid.n(); ++k)
      r = std::max(r, std::hypot(gx.data[k], gz.data[k]));
    return r;
  }

  double fallback_xi(const TvProblem& prob) const {
    double mean = prob.misfit_diag.mean();
    return mean > 0.0 ? mean : 1.0;
  }

  Grid2D grid_;
  InversionSettings set_;
  std::vector<double> freqs_;
  Acquisition acq_;
  SamplingOperator sampling_;
  Eigen::MatrixXcd b_;
  std::vector<Eigen::MatrixXcd> d_, u_, bd_, dd_;
  std::vector<HelmholtzOperator> ops_;
  std::vector<std::unique_ptr<Factorization>> facts_;
  double scale_ = 1.0;

  RealField m_, alpha_;
  TvState tvs_m_, tvs_a_;
  std::vector<HistoryRow> history_;
  std::vector<int> active_;
  int batch_ = 0, iter_in_batch_ = 0, factor_count_ = 0;
  bool stop_hit_ = false, m_tuned_ = false, a_tuned_ = false;
  double gamma_ = 0.0, src_sq_ = 0.0, data_sq_ = 0.0;
  double thr_m_ = 0.0, thr_a_ = 0.0, xi_m_ = 0.0, xi_a_ = 0.0;
};

inline InversionResult run_inversion(const Grid2D& g, const SurveyData& survey,
                                     const RealField& m0, const RealField& alpha0,
                                     const InversionSettings& settings) {
  InversionDriver driver(g, survey, m0, alpha0, settings);
  return driver.run();
}

}  // namespace vawi
