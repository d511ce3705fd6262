#include "doctest.h"
#include "test_support.hpp"

#include "nssm/errors.hpp"
#include "nssm/gaussmodel.hpp"
#include "nssm/simulate.hpp"

#include <numeric>

using namespace nssm;
using namespace nssm::gauss;
using testsupport::max_abs;
using testsupport::random_row_stochastic;

namespace {

PanelData simulated(int n, int t, std::uint64_t seed, double rw_sd = 0.0, double sigma2 = 0.25) {
    Rng rng(seed);
    const MatrixXd w = random_row_stochastic(n, rng);
    sim::CoeffPathSpec cps;
    cps.init = (VectorXd(3) << 0.2, 0.3, 0.4).finished();
    cps.rw_sd = VectorXd::Constant(3, rw_sd);
    const auto paths = sim::gen_coeff_paths(cps, t, seed + 1);
    sim::PanelOptions opt;
    opt.sigma2 = sigma2;
    opt.burn_in = 20;
    return sim::gen_gaussian_panel({w}, paths.theta, opt, seed + 2).data;
}

GaussianSpec full_spec(double q, double sigma2 = 0.25, double p0 = 10.0) {
    return GaussianSpec::make(design::DesignRecipe{}, lgss::StateNoiseSpec::constant(q * MatrixXd::Identity(3, 3)), sigma2, p0);
}

}  // namespace

TEST_CASE("single node own-lag model is a scalar Kalman filter") {
    Rng rng(1);
    std::normal_distribution<double> e(0.0, 0.5);
    const int t_count = 60;
    PanelData data;
    data.y = MatrixXd::Zero(t_count, 1);
    data.w_seq = {MatrixXd::Zero(1, 1)};
    double beta = 0.5;
    for (int t = 1; t < t_count; ++t) {
        beta += 0.02 * e(rng);
        data.y(t, 0) = beta * data.y(t - 1, 0) + e(rng) + 0.3;
    }
    design::DesignRecipe r;
    r.include_intercept = false;
    r.include_network_lags = false;
    const double q = 1e-3;
    const double sigma2 = 0.3;
    const GaussianSpec spec = GaussianSpec::make(r, lgss::StateNoiseSpec::constant(MatrixXd::Constant(1, 1, q)), sigma2, 2.0);
    const lgss::FilterRun run = fit_gaussian(data, spec);
    REQUIRE(run.n_steps() == t_count - 1);

    double m = 0.0;
    double p = 2.0;
    double ll = 0.0;
    for (int t = 1; t < t_count; ++t) {
        p += q;
        const double x = data.y(t - 1, 0);
        const double s = x * x * p + sigma2;
        const double v = data.y(t, 0) - x * m;
        ll += -0.5 * (std::log(2 * M_PI * s) + v * v / s);
        const double k = p * x / s;
        m += k * v;
        p -= k * x * p;
        const auto& f = run.filtered[static_cast<std::size_t>(t - 1)];
        CHECK(f.mean(0) == doctest::Approx(m).epsilon(1e-12));
        CHECK(f.cov(0, 0) == doctest::Approx(p).epsilon(1e-10));
        CHECK(f.time_index == t);
    }
    CHECK(run.loglik == doctest::Approx(ll).epsilon(1e-11));
}

TEST_CASE("static coefficients converge to the batch estimates") {
    const PanelData data = simulated(5, 200, 3);
    const int p = 1;
    MatrixXd xtx = MatrixXd::Zero(3, 3);
    VectorXd xty = VectorXd::Zero(3);
    for (int t = p; t < data.n_times(); ++t) {
        const auto lags = lag_window(data.y, t, p);
        const auto x = design::build_design(data.w_at(t), lags, data.z_at(t), design::DesignRecipe{}).x;
        xtx += x.transpose() * x;
        xty += x.transpose() * data.y.row(t).transpose();
    }
    const double sigma2 = 0.25;
    const VectorXd gls = xtx.ldlt().solve(xty);

    const auto bayes = fit_gaussian(data, full_spec(0.0, sigma2, 10.0));
    const VectorXd exact = (MatrixXd::Identity(3, 3) / 10.0 + xtx / sigma2).ldlt().solve(xty / sigma2);
    CHECK(max_abs(bayes.filtered.back().mean - exact) <= 1e-9);

    const auto diffuse = fit_gaussian(data, full_spec(0.0, sigma2, 1e8));
    CHECK(max_abs(diffuse.filtered.back().mean - gls) <= 1e-6);
}

TEST_CASE("relabeling nodes leaves the coefficient filter unchanged") {
    const PanelData data = simulated(8, 80, 5, 0.01);
    const auto run = fit_gaussian(data, full_spec(1e-4));
    std::vector<int> perm(8);
    std::iota(perm.begin(), perm.end(), 0);
    std::reverse(perm.begin(), perm.end());
    std::swap(perm[0], perm[3]);
    PanelData shuffled = data;
    Eigen::PermutationMatrix<Eigen::Dynamic> pm(8);
    for (int i = 0; i < 8; ++i) pm.indices()(i) = perm[i];
    shuffled.y = data.y * pm.transpose();
    shuffled.w_seq = {pm * data.w_seq[0] * pm.transpose()};
    const auto run2 = fit_gaussian(shuffled, full_spec(1e-4));
    for (int s = 0; s < run.n_steps(); ++s) {
        CHECK(max_abs(run.filtered[s].mean - run2.filtered[s].mean) <= 1e-10);
        CHECK(max_abs(run.filtered[s].cov - run2.filtered[s].cov) <= 1e-10);
    }
    CHECK(run.loglik == doctest::Approx(run2.loglik).epsilon(1e-12));
}

TEST_CASE("one-step forecast") {
    const PanelData data = simulated(6, 50, 7, 0.01);
    const int origin = 40;
    for (double q : {0.0, 1e-3}) {
        const GaussianSpec spec = full_spec(q);
        const auto run = fit_gaussian(data, spec);
        const auto fc = forecast_gaussian(run, spec, data, origin, 1, NetworkPolicy::carry_forward);
        const auto& b = belief_at(run, spec, origin);
        const MatrixXd x = design::build_design(data.w_at(origin), lag_window(data.y, origin + 1, 1), data.z_at(origin),
                                                spec.recipe).x;
        CHECK(max_abs(fc[0].mean - x * b.mean) <= 1e-12);
        const MatrixXd cov = x * (b.cov + q * MatrixXd::Identity(3, 3)) * x.transpose() + 0.25 * MatrixXd::Identity(6, 6);
        CHECK(max_abs(fc[0].cov - cov) <= 1e-12);
        CHECK(fc[0].horizon == 1);
    }
}

TEST_CASE("two-step mean chains the recursion") {
    const PanelData data = simulated(5, 40, 9, 0.01);
    const GaussianSpec spec = full_spec(1e-4);
    const auto run = fit_gaussian(data, spec);
    const int origin = 30;
    const VectorXd m = belief_at(run, spec, origin).mean;
    const MatrixXd& w = data.w_at(origin);
    const VectorXd y0 = data.y.row(origin).transpose();
    const VectorXd y1 = m(0) * VectorXd::Ones(5) + m(1) * w * y0 + m(2) * y0;
    const VectorXd y2 = m(0) * VectorXd::Ones(5) + m(1) * w * y1 + m(2) * y1;
    const auto fc = forecast_gaussian(run, spec, data, origin, 2, NetworkPolicy::carry_forward);
    CHECK(max_abs(fc[0].mean - y1) <= 1e-12);
    CHECK(max_abs(fc[1].mean - y2) <= 1e-12);

    const auto oracle = forecast_gaussian(run, spec, data, origin, 2, NetworkPolicy::oracle);
    CHECK(max_abs(oracle[0].mean - y1) <= 1e-12);  // static network: same operator
}

TEST_CASE("zero spillover gives a flat forecast at the intercept") {
    const PanelData data = simulated(4, 30, 11);
    GaussianSpec spec = full_spec(0.0, 0.25, 1e-12);
    spec.m0 << 1.5, 0.0, 0.0;
    const auto run = fit_gaussian(data, spec);
    const auto fc = forecast_gaussian(run, spec, data, 20, 5, NetworkPolicy::carry_forward);
    for (const auto& f : fc) CHECK(max_abs(f.mean - VectorXd::Constant(4, 1.5)) <= 1e-9);
}

TEST_CASE("linearized multi-step forecast agrees with Monte-Carlo") {
    const PanelData data = simulated(3, 120, 13, 0.005);
    const GaussianSpec spec = full_spec(1e-4);
    const auto run = fit_gaussian(data, spec);
    const auto lin = forecast_gaussian(run, spec, data, 100, 3, NetworkPolicy::carry_forward);
    const auto mc = forecast_gaussian_mc(run, spec, data, 100, 3, NetworkPolicy::carry_forward, 40000, 21);
    CHECK(max_abs(lin[0].mean - mc[0].mean) <= 0.02);
    for (int h = 0; h < 3; ++h) {
        CHECK(max_abs(lin[h].mean - mc[h].mean) <= 0.05);
        for (int i = 0; i < 3; ++i)
            CHECK(std::abs(lin[h].cov(i, i) / mc[h].cov(i, i) - 1.0) <= 0.08);
    }
}

TEST_CASE("user-supplied network must cover the horizon") {
    const PanelData data = simulated(4, 30, 15);
    const GaussianSpec spec = full_spec(1e-4);
    const auto run = fit_gaussian(data, spec);
    CHECK_THROWS_AS((void)forecast_gaussian(run, spec, data, 20, 2, NetworkPolicy::user_supplied, FutureInputs{{data.w_at(0)}, {}}),
                    InvalidArgument);
    const auto ok = forecast_gaussian(run, spec, data, 20, 2, NetworkPolicy::user_supplied,
                                      FutureInputs{{data.w_at(0), data.w_at(0)}, {}});
    const auto cf = forecast_gaussian(run, spec, data, 20, 2, NetworkPolicy::carry_forward);
    CHECK(max_abs(ok[1].mean - cf[1].mean) <= 1e-14);
}

TEST_CASE("plug-in forecast with the true network is the model forecast") {
    const PanelData data = simulated(6, 40, 17, 0.01);
    const GaussianSpec spec = full_spec(1e-4);
    const auto run = fit_gaussian(data, spec);
    const auto fc = forecast_gaussian(run, spec, data, 30, 1, NetworkPolicy::oracle);
    const auto pi = plug_in_forecast(run, spec, data, 30, data.w_at(31));
    CHECK(max_abs(pi.mean - fc[0].mean) <= 1e-13);
}

TEST_CASE("hyperparameter selection") {
    const PanelData data = simulated(6, 60, 19, 0.02);
    const GaussianSpec base = full_spec(1e-4);
    SUBCASE("grid of one") {
        const auto sel = select_hyperparams(data, base, {HyperCandidate{base.state_noise, ScalarNoise{0.25}, "only"}});
        CHECK(sel.chosen == 0);
        CHECK(sel.table.size() == 1);
    }
    SUBCASE("invalid candidate is flagged and skipped") {
        MatrixXd bad = MatrixXd::Identity(6, 6);
        bad(0, 0) = -1.0;
        const auto sel = select_hyperparams(
            data, base, {HyperCandidate{base.state_noise, FullNoise{bad}, "bad"}, HyperCandidate{base.state_noise, ScalarNoise{0.25}, "ok"}});
        CHECK(sel.chosen == 1);
        CHECK_FALSE(sel.table[0].valid);
        CHECK_FALSE(sel.table[0].message.empty());
        CHECK_THROWS_AS((void)select_hyperparams(data, base, {HyperCandidate{base.state_noise, FullNoise{bad}, "bad"}}),
                        NumericalError);
    }
    SUBCASE("ties go to the smaller state-noise trace") {
        auto tiny = lgss::StateNoiseSpec::constant(1e-300 * MatrixXd::Identity(3, 3));
        auto zero = lgss::StateNoiseSpec::constant(MatrixXd::Zero(3, 3));
        const auto sel = select_hyperparams(data, base, {HyperCandidate{tiny, ScalarNoise{0.25}, "tiny"},
                                                         HyperCandidate{zero, ScalarNoise{0.25}, "zero"}});
        CHECK(sel.table[0].loglik == sel.table[1].loglik);
        CHECK(sel.chosen == 1);
    }
}

TEST_CASE("selection picks the data-generating state noise") {
    int wins = 0;
    const double rw_sd = 0.01;
    for (int rep = 0; rep < 100; ++rep) {
        const PanelData data = simulated(10, 100, 1000 + static_cast<std::uint64_t>(rep), rw_sd);
        const GaussianSpec base = full_spec(rw_sd * rw_sd);
        const auto sel = select_hyperparams(
            data, base,
            {HyperCandidate{lgss::StateNoiseSpec::constant(rw_sd * rw_sd * MatrixXd::Identity(3, 3)), ScalarNoise{0.25}, "dgp"},
             HyperCandidate{lgss::StateNoiseSpec::constant(0.1 * MatrixXd::Identity(3, 3)), ScalarNoise{0.25}, "loose"}});
        wins += sel.chosen == 0 ? 1 : 0;
    }
    CHECK(wins >= 90);
}

TEST_CASE("joint node and edge filter") {
    const PanelData data = simulated(4, 12, 23, 0.01);
    GaussianSpec spec = full_spec(1e-3);
    Rng rng(29);
    const int m = 3;
    const int ke = 2;
    const MatrixXd edges = testsupport::random_matrix(data.n_times(), m, rng);
    EdgeSubmodel e;
    e.loading = testsupport::random_matrix(m, ke, rng);
    e.u = 0.5 * MatrixXd::Identity(m, m);
    e.noise = lgss::StateNoiseSpec::constant(0.05 * MatrixXd::Identity(ke, ke));
    e.m0 = VectorXd::Zero(ke);
    e.p0 = MatrixXd::Identity(ke, ke);
    const auto node_only = fit_gaussian(data, spec);

    SUBCASE("zero loading leaves the coefficient marginals alone") {
        spec.edge = e;
        spec.edge->loading.setZero();
        const auto joint = fit_joint_node_edge(data, edges, spec);
        for (int s = 0; s < joint.n_steps(); ++s)
            CHECK(max_abs(joint.filtered[s].mean.head(3) - node_only.filtered[s].mean) <= 1e-12);
    }
    SUBCASE("noiseless edges reproduce the known-edge fit") {
        spec.edge = e;
        spec.edge->u = 1e-8 * MatrixXd::Identity(m, m);
        const auto joint = fit_joint_node_edge(data, edges, spec);
        for (int s = 0; s < joint.n_steps(); ++s) {
            CHECK(max_abs(joint.filtered[s].mean.head(3) - node_only.filtered[s].mean) <= 1e-6);
            CHECK(max_abs(joint.filtered[s].cov.topLeftCorner(3, 3) - node_only.filtered[s].cov) <= 1e-6);
        }
    }
    SUBCASE("marginals match joint-Gaussian conditioning") {
        spec.edge = e;
        const auto joint = fit_joint_node_edge(data, edges, spec);
        testsupport::JointModel jm;
        const int kj = 3 + ke;
        jm.m0 = VectorXd::Zero(kj);
        jm.p0 = MatrixXd::Zero(kj, kj);
        jm.p0.topLeftCorner(3, 3) = spec.p0;
        jm.p0.bottomRightCorner(ke, ke) = e.p0;
        jm.f = MatrixXd::Identity(kj, kj);
        MatrixXd q = MatrixXd::Zero(kj, kj);
        q.topLeftCorner(3, 3) = 1e-3 * MatrixXd::Identity(3, 3);
        q.bottomRightCorner(ke, ke) = 0.05 * MatrixXd::Identity(ke, ke);
        const int n = data.n_nodes();
        for (int t = 1; t < data.n_times(); ++t) {
            const MatrixXd x = design::build_design(data.w_at(t), lag_window(data.y, t, 1), data.z_at(t), spec.recipe).x;
            MatrixXd h = MatrixXd::Zero(m + n, kj);
            h.topRightCorner(m, ke) = e.loading;
            h.bottomLeftCorner(n, 3) = x;
            MatrixXd r = MatrixXd::Zero(m + n, m + n);
            r.topLeftCorner(m, m) = e.u;
            r.bottomRightCorner(n, n) = 0.25 * MatrixXd::Identity(n, n);
            VectorXd y(m + n);
            y << edges.row(t).transpose(), data.y.row(t).transpose();
            jm.q.push_back(q);
            jm.h.push_back(h);
            jm.r.push_back(r);
            jm.y.push_back(y);
        }
        for (int s = 0; s < joint.n_steps(); ++s) {
            const auto o = jm.marginal(s + 1, s + 1);
            CHECK(max_abs(joint.filtered[s].mean - o.mean) <= 1e-9);
            CHECK(max_abs(joint.filtered[s].cov - o.cov) <= 1e-9);
        }
    }
}

TEST_CASE("origins before the first filtered step return the prior") {
    const PanelData data = simulated(3, 10, 31);
    const GaussianSpec spec = full_spec(1e-4);
    const auto run = fit_gaussian(data, spec);
    const auto b = belief_at(run, spec, 0);
    CHECK(max_abs(b.mean - spec.m0) == 0.0);
    CHECK_THROWS_AS((void)belief_at(run, spec, 10), InvalidArgument);
}
