#include <doctest.h>

#include <cmath>
#include <vector>

#include <vawi/admm.hpp>
#include <vawi/scenario.hpp>

using namespace vawi;
using doctest::Approx;

namespace {

// desk-size two-frequency benchmark with a fast circle and a lossy patch
struct Tiny {
    Grid2D g;
    RealField v_true, a_true;
    RealField m_true, m0, a0;
    Acquisition acq;
    std::vector<double> freqs;
    ModelingOptions opt;
    SurveyData survey;
};

Tiny make_tiny(bool heterogeneous = true) {
    Tiny t;
    t.g = make_grid(25, 25, 40.0, 40.0, 8);
    t.v_true = RealField(t.g, 1500.0);
    t.a_true = RealField(t.g, 0.0);
    if (heterogeneous)
        for (int i = 0; i < t.g.nx; ++i)
            for (int j = 0; j < t.g.nz; ++j) {
                if (std::hypot(t.g.x(i) - 480.0, t.g.z(j) - 480.0) <= 150.0)
                    t.v_true(i, j) = 1650.0;
                if (std::hypot(t.g.x(i) - 320.0, t.g.z(j) - 560.0) <= 120.0)
                    t.a_true(i, j) = 0.05;
            }
    t.m_true = velocity_to_slowness_sq(t.v_true);
    t.m0 = RealField(t.g, 1.0 / (1500.0 * 1500.0));
    t.a0 = RealField(t.g, 0.0);

    const double lo = t.g.x(1), hi = t.g.x(t.g.nx - 2);
    for (int k = 0; k < 6; ++k) {
        double c = lo + (k + 0.5) * (hi - lo) / 6.0;
        t.acq.receivers.push_back({c, lo});
        t.acq.receivers.push_back({c, hi});
        t.acq.receivers.push_back({lo, c});
        t.acq.receivers.push_back({hi, c});
    }
    t.acq.sources = {{lo, lo}, {hi, 480.0}, {480.0, hi}};
    t.freqs = {5.0, 6.5};
    t.opt.pml_ref_velocity = 1500.0;
    t.survey = generate_data(t.g, t.m_true, t.a_true, t.acq, t.freqs, t.opt);
    return t;
}

InversionSettings plain_settings(const Tiny& t) {
    InversionSettings st;
    st.modeling = t.opt;
    return st;
}

InversionSettings regularized_settings(const Tiny& t) {
    InversionSettings st = plain_settings(t);
    st.m_bounds = make_bounds(1.0 / (2000.0 * 2000.0), 1.0 / (1200.0 * 1200.0));
    st.alpha_bounds = make_bounds(0.0, 0.15);
    return st;
}

}  // namespace

TEST_SUITE("inversion") {

TEST_CASE("stop test truth table") {
    StopCriteria c;  // 1e-3 / 1e-5
    CHECK(check_stop(5e-4, 5e-6, c));
    CHECK_FALSE(check_stop(2e-3, 5e-6, c));
    CHECK_FALSE(check_stop(5e-4, 2e-5, c));
    CHECK(check_stop(1e-3, 1e-5, c));  // inclusive thresholds
}

TEST_CASE("survey and construction validation") {
    Tiny t = make_tiny(false);
    SurveyData bad = t.survey;
    bad.data[0].resize(3, 3);
    InversionSettings st = plain_settings(t);
    CHECK_THROWS_AS(InversionDriver(t.g, bad, t.m0, t.a0, st), std::invalid_argument);

    SurveyData nofreq = t.survey;
    nofreq.frequencies_hz.clear();
    nofreq.data.clear();
    CHECK_THROWS_AS(InversionDriver(t.g, nofreq, t.m0, t.a0, st), std::invalid_argument);

    InversionSettings badbatch = st;
    badbatch.batches = {{0, 5}};
    CHECK_THROWS_AS(InversionDriver(t.g, t.survey, t.m0, t.a0, badbatch),
                    std::invalid_argument);
    badbatch.batches = {{}};
    CHECK_THROWS_AS(InversionDriver(t.g, t.survey, t.m0, t.a0, badbatch),
                    std::invalid_argument);

    Grid2D g2 = make_grid(9, 9, 40.0, 40.0, 4);
    RealField wrong(g2, t.m0.data[0]);
    CHECK_THROWS_AS(InversionDriver(t.g, t.survey, wrong, t.a0, st),
                    std::invalid_argument);
}

TEST_CASE("normal-equation wavefield limits") {
    // small homogeneous operator: with no data weight the augmented solve
    // reduces to the direct solve; with an overwhelming data weight the
    // receiver samples track the data
    Grid2D g = make_grid(13, 13, 50.0, 50.0, 4);
    RealField m(g, 1.0 / (1500.0 * 1500.0)), a(g, 0.0);
    HelmholtzOperator op = assemble(g, m, a, 2.0 * pi * 3.0);
    const SpMat& A = op.matrix;
    Eigen::VectorXcd b = make_source_vector(g, {300.0, 300.0}) * (50.0 * 50.0);

    std::vector<Position> rec{{100.0, 500.0}, {500.0, 100.0}, {450.0, 450.0}};
    SamplingOperator P = make_sampling(g, rec);

    SpMat K0 = (SpMat(A.adjoint()) * A).pruned();
    Eigen::VectorXcd u0 = factorize(K0)->solve(A.adjoint() * b);
    Eigen::VectorXcd direct = factorize(A)->solve(b);
    CHECK((u0 - direct).norm() <= 1e-8 * direct.norm());

    Eigen::VectorXcd d(3);
    d << cplx(0.3, -0.1), cplx(-0.2, 0.4), cplx(0.1, 0.1);
    double gamma = 1e6 * normal_eigenvalue_bound(A);
    SpMat K1 = K0;
    for (int node : P.padded_nodes) K1.coeffRef(node, node) += gamma;
    K1.makeCompressed();
    Eigen::VectorXcd rhs = A.adjoint() * b + gamma * inject(g, P, d);
    Eigen::VectorXcd u1 = factorize(K1)->solve(rhs);
    CHECK((sample(P, u1) - d).norm() <= 1e-4 * d.norm());
}

TEST_CASE("consistent data from the initial model is a fixed point") {
    Tiny t = make_tiny(false);  // homogeneous truth, data from the same model
    InversionSettings st = plain_settings(t);
    st.regularize = false;
    InversionDriver drv(t.g, t.survey, t.m_true, t.a_true, st);
    drv.start_batch(0);
    drv.iterate();
    CHECK(drv.stop_reached());
    CHECK(drv.last_src_residual_sq() < 1e-10);
    CHECK(drv.last_data_residual_sq() < 1e-10);
    CHECK((drv.m().data - t.m_true.data).cwiseAbs().maxCoeff() <
          1e-6 * t.m_true.data.cwiseAbs().maxCoeff());
    CHECK(drv.alpha().data.cwiseAbs().maxCoeff() < 1e-4);
}

TEST_CASE("unregularized model updates match their closed forms") {
    Tiny t = make_tiny();
    InversionSettings st = plain_settings(t);
    st.regularize = false;
    InversionDriver drv(t.g, t.survey, t.m0, t.a0, st);
    drv.start_batch(0);
    drv.reconstruct_wavefields();

    const int n = t.g.n();
    const int ns = drv.source_count();
    Eigen::MatrixXcd b_hat(t.g.n_pad(), ns);
    for (int s = 0; s < ns; ++s)
        b_hat.col(s) = make_source_vector(t.g, t.acq.sources[s]) * drv.data_scale();

    // squared-slowness block: diagonal least squares over all (f, s) pairs
    Eigen::VectorXd diag = Eigen::VectorXd::Zero(n), rhs = Eigen::VectorXd::Zero(n);
    for (int f = 0; f < 2; ++f) {
        const auto& op = drv.op(f);
        const double w2 = op.omega * op.omega;
        for (int s = 0; s < ns; ++s) {
            Eigen::VectorXcd y_pad = b_hat.col(s) - op.delta_part * drv.wavefields(f).col(s);
            ComplexField u_int = restrict_to_interior<cplx>(t.g, drv.wavefields(f).col(s));
            ComplexField y_int = restrict_to_interior<cplx>(t.g, y_pad);
            for (int k = 0; k < n; ++k) {
                cplx L = w2 * u_int.data[k] * rho(t.a0.data[k], op.omega);
                diag[k] += std::norm(L);
                rhs[k] += std::real(std::conj(L) * y_int.data[k]);
            }
        }
    }
    drv.slowness_update();
    for (int k = 0; k < n; ++k) {
        REQUIRE(diag[k] > 0.0);
        CHECK(drv.m().data[k] == Approx(rhs[k] / diag[k]).epsilon(1e-12));
    }

    // attenuation block against the linearized closed form at the fresh m
    RealField m_cur = drv.m();
    Eigen::VectorXd m_ext = extend_to_pad(m_cur);
    Eigen::VectorXd adiag = Eigen::VectorXd::Zero(n), arhs = Eigen::VectorXd::Zero(n);
    for (int f = 0; f < 2; ++f) {
        const auto& op = drv.op(f);
        const double w2 = op.omega * op.omega;
        const cplx bet = beta(op.omega);
        for (int s = 0; s < ns; ++s) {
            Eigen::VectorXcd au = op.delta_part * drv.wavefields(f).col(s);
            au.array() += w2 * m_ext.array().cast<cplx>() * drv.wavefields(f).col(s).array();
            Eigen::VectorXcd h_pad = b_hat.col(s) - au;
            ComplexField u_int = restrict_to_interior<cplx>(t.g, drv.wavefields(f).col(s));
            ComplexField h_int = restrict_to_interior<cplx>(t.g, h_pad);
            for (int k = 0; k < n; ++k) {
                cplx H = 2.0 * w2 * bet * u_int.data[k] * m_cur.data[k];
                adiag[k] += std::norm(H);
                arhs[k] += std::real(std::conj(H) * h_int.data[k]);
            }
        }
    }
    drv.attenuation_update();
    for (int k = 0; k < n; ++k) {
        REQUIRE(adiag[k] > 0.0);
        CHECK(drv.alpha().data[k] ==
              Approx(arhs[k] / adiag[k]).epsilon(1e-12));
    }
}

TEST_CASE("both iteration modes share the wavefield block") {
    Tiny t = make_tiny();
    InversionSettings pr = regularized_settings(t);
    InversionSettings ad = regularized_settings(t);
    ad.mode = IterationMode::admm;
    InversionDriver d1(t.g, t.survey, t.m0, t.a0, pr);
    InversionDriver d2(t.g, t.survey, t.m0, t.a0, ad);
    d1.start_batch(0);
    d2.start_batch(0);
    CHECK(d1.gamma() == d2.gamma());
    d1.iterate();
    d2.iterate();
    for (int f = 0; f < 2; ++f)
        CHECK((d1.wavefields(f) - d2.wavefields(f)).norm() == 0.0);
}

TEST_CASE("dual bookkeeping telescopes over cycles") {
    Tiny t = make_tiny();
    InversionSettings st = regularized_settings(t);
    st.mode = IterationMode::admm;
    InversionDriver drv(t.g, t.survey, t.m0, t.a0, st);
    drv.start_batch(0);

    const int ns = drv.source_count();
    std::vector<Eigen::MatrixXcd> exp_bd(2), exp_dd(2);
    for (int f = 0; f < 2; ++f) {
        exp_bd[f].setZero(t.g.n_pad(), ns);
        exp_dd[f].setZero(int(t.acq.receivers.size()), ns);
    }
    Eigen::MatrixXcd b_hat(t.g.n_pad(), ns);
    for (int s = 0; s < ns; ++s)
        b_hat.col(s) = make_source_vector(t.g, t.acq.sources[s]) * drv.data_scale();

    for (int it = 0; it < 3; ++it) {
        drv.iterate();
        // one source-dual and one data-dual refresh per cycle, evaluated at
        // the end-of-cycle operators and wavefields
        for (int f = 0; f < 2; ++f)
            for (int s = 0; s < ns; ++s) {
                exp_bd[f].col(s) +=
                    b_hat.col(s) - drv.op(f).matrix * drv.wavefields(f).col(s);
                exp_dd[f].col(s) += t.survey.data[f].col(s) * drv.data_scale() -
                                    sample(drv.sampling(), drv.wavefields(f).col(s));
            }
    }
    for (int f = 0; f < 2; ++f) {
        CHECK((drv.source_duals(f) - exp_bd[f]).norm() <=
              1e-12 * (1.0 + exp_bd[f].norm()));
        CHECK((drv.data_duals(f) - exp_dd[f]).norm() <=
              1e-12 * (1.0 + exp_dd[f].norm()));
    }
}

TEST_CASE("alternating-direction mode refreshes the data dual once per cycle") {
    Tiny t = make_tiny();
    InversionSettings st = regularized_settings(t);  // staggered refresh mode
    InversionDriver drv(t.g, t.survey, t.m0, t.a0, st);
    drv.start_batch(0);
    drv.iterate();
    const int ns = drv.source_count();
    for (int f = 0; f < 2; ++f)
        for (int s = 0; s < ns; ++s) {
            Eigen::VectorXcd want = t.survey.data[f].col(s) * drv.data_scale() -
                                    sample(drv.sampling(), drv.wavefields(f).col(s));
            CHECK((drv.data_duals(f).col(s) - want).norm() <=
                  1e-12 * (1.0 + want.norm()));
        }
}

TEST_CASE("penalty tuning follows the spectral rule") {
    Tiny t = make_tiny(false);
    HelmholtzOperator o1 = assemble(t.g, t.m0, t.a0, 2.0 * pi * 5.0, t.opt);
    HelmholtzOperator o2 = assemble(t.g, t.m0, t.a0, 2.0 * pi * 6.5, t.opt);
    Penalties base;
    base.lambda = 2.0;
    Penalties tuned = tune_penalties(base, {&o1, &o2}, 0.05);
    double l1 = largest_normal_eigenvalue(o1.matrix, 500, 1e-5, 12345u);
    double l2 = largest_normal_eigenvalue(o2.matrix, 500, 1e-5, 12346u);
    CHECK(tuned.gamma == 2.0 / (0.05 * std::max(l1, l2)));
    CHECK_THROWS_AS(tune_penalties(base, {}, 0.05), std::invalid_argument);
}

TEST_CASE("residuals fall on the desk benchmark") {
    Tiny t = make_tiny();
    InversionSettings st = regularized_settings(t);
    InversionDriver drv(t.g, t.survey, t.m0, t.a0, st);
    drv.start_batch(0);
    for (int it = 0; it < 8; ++it) drv.iterate();
    const auto& h = drv.history();
    REQUIRE(h.size() == 8);
    CHECK(h[0].k == 1);
    CHECK(h[7].k == 8);
    CHECK(h[7].batch == 0);
    CHECK(h[7].sum_src_residual_sq < h[0].sum_src_residual_sq);
    CHECK(h[7].sum_data_residual_sq < 0.9 * h[0].sum_data_residual_sq);
    for (const auto& row : h) {
        CHECK(std::isfinite(row.tv_m));
        CHECK(std::isfinite(row.tv_alpha));
        CHECK(row.tv_alpha >= 0.0);
    }
    CHECK(drv.factorization_count() == 8 * 2);  // one per frequency per cycle
    CHECK(drv.threshold_m() > 0.0);
    CHECK(drv.threshold_alpha() > 0.0);
}

TEST_CASE("loose thresholds stop after the first cycle") {
    Tiny t = make_tiny();
    InversionSettings st = regularized_settings(t);
    st.stop.eps_src = 1e9;
    st.stop.eps_data = 1e9;
    InversionResult res = run_inversion(t.g, t.survey, t.m0, t.a0, st);
    REQUIRE(res.reports.size() == 1);
    CHECK(res.reports[0].iterations == 1);
    CHECK(res.reports[0].hit_thresholds);

    st.stop = StopCriteria{1e-30, 1e-30, 3};
    InversionResult res2 = run_inversion(t.g, t.survey, t.m0, t.a0, st);
    CHECK(res2.reports[0].iterations == 3);
    CHECK_FALSE(res2.reports[0].hit_thresholds);
    CHECK(res2.history.size() == 3);
}

TEST_CASE("frequency batches run sequentially and snapshot models") {
    Tiny t = make_tiny();
    InversionSettings st = regularized_settings(t);
    st.batches = {{0}, {0, 1}};
    st.stop.max_iterations = 2;
    InversionResult res = run_inversion(t.g, t.survey, t.m0, t.a0, st);
    REQUIRE(res.reports.size() == 2);
    REQUIRE(res.batch_models.size() == 2);
    REQUIRE(res.history.size() == 4);
    CHECK(res.history[0].batch == 0);
    CHECK(res.history[1].batch == 0);
    CHECK(res.history[2].batch == 1);
    CHECK(res.history[2].k == 1);  // per-batch cycle counter restarts
    CHECK((res.batch_models[1].first.data - res.m.data).norm() == 0.0);
}

TEST_CASE("thread count does not change the result") {
    Tiny t = make_tiny();
    InversionSettings s1 = regularized_settings(t);
    InversionSettings s3 = regularized_settings(t);
    s3.threads = 3;
    InversionDriver d1(t.g, t.survey, t.m0, t.a0, s1);
    InversionDriver d3(t.g, t.survey, t.m0, t.a0, s3);
    d1.start_batch(0);
    d3.start_batch(0);
    for (int it = 0; it < 3; ++it) {
        d1.iterate();
        d3.iterate();
    }
    CHECK((d1.m().data - d3.m().data).norm() == 0.0);
    CHECK((d1.alpha().data - d3.alpha().data).norm() == 0.0);
    for (int f = 0; f < 2; ++f)
        CHECK((d1.wavefields(f) - d3.wavefields(f)).norm() == 0.0);
}

TEST_CASE("staggered versus end-of-cycle dual refresh comparison") {
    Tiny t = make_tiny();
    InversionSettings pr = regularized_settings(t);
    pr.stop.max_iterations = 12;
    InversionSettings ad = pr;
    ad.mode = IterationMode::admm;
    InversionResult rp = run_inversion(t.g, t.survey, t.m0, t.a0, pr);
    InversionResult ra = run_inversion(t.g, t.survey, t.m0, t.a0, ad);
    MESSAGE("staggered refresh: iters=", rp.reports[0].iterations,
            " src=", rp.reports[0].final_src_residual_sq,
            " data=", rp.reports[0].final_data_residual_sq);
    MESSAGE("end-of-cycle refresh: iters=", ra.reports[0].iterations,
            " src=", ra.reports[0].final_src_residual_sq,
            " data=", ra.reports[0].final_data_residual_sq);
    CHECK(rp.reports[0].final_src_residual_sq <
          rp.history[0].sum_src_residual_sq);
    CHECK(ra.reports[0].final_src_residual_sq <
          ra.history[0].sum_src_residual_sq);
}

}  // TEST_SUITE
