#include "doctest.h"
#include "test_support.hpp"

#include "nssm/errors.hpp"
#include "nssm/evalharness.hpp"
#include "nssm/gaussmodel.hpp"
#include "nssm/poissonmodel.hpp"
#include "nssm/simulate.hpp"

#include <cmath>

using namespace nssm;
using namespace nssm::poisson;
using testsupport::max_abs;

namespace {

design::DesignRecipe intercept_only() {
    design::DesignRecipe r;
    r.include_network_lags = false;
    r.include_own_lags = false;
    return r;
}

lgss::StateNoiseSpec constant_q(int k, double q) { return lgss::StateNoiseSpec::constant(q * MatrixXd::Identity(k, k)); }

PanelData stable_counts(int n, int t, std::uint64_t seed) {
    Rng rng(seed);
    const MatrixXd w = testsupport::random_row_stochastic(n, rng);
    sim::CoeffPathSpec cps;
    cps.init = (VectorXd(3) << 0.5, 0.08, 0.08).finished();
    cps.rw_sd = VectorXd::Zero(3);
    const auto paths = sim::gen_coeff_paths(cps, t, seed + 1);
    sim::PanelOptions opt;
    opt.burn_in = 30;
    return sim::gen_poisson_panel({w}, paths.theta, opt, seed + 2).data;
}

}  // namespace

TEST_CASE("intercept converges to the log of the sample mean") {
    Rng rng(1);
    std::poisson_distribution<int> pois(4.0);
    PanelData data;
    data.y.resize(500, 1);
    for (int t = 0; t < 500; ++t) data.y(t, 0) = pois(rng);
    data.w_seq = {MatrixXd::Zero(1, 1)};
    const PoissonSpec spec = PoissonSpec::make(intercept_only(), constant_q(1, 0.0), 10.0);
    const auto run = fit_poisson(data, spec);
    CHECK(std::abs(run.filtered.back().mean(0) - std::log(data.y.mean())) <= 0.05);
}

TEST_CASE("all-zero panel stays finite") {
    PanelData data;
    data.y = MatrixXd::Zero(40, 3);
    data.w_seq = {MatrixXd::Zero(3, 3)};
    PoissonSpec spec = PoissonSpec::make(intercept_only(), constant_q(1, 1e-3), 1.0);
    const auto run = fit_poisson(data, spec);
    for (const auto& b : run.filtered) {
        CHECK(b.mean.allFinite());
        CHECK(b.cov.allFinite());
    }
    CHECK(run.filtered.back().mean(0) < run.filtered.front().mean(0));
    CHECK(std::isfinite(run.loglik));
}

TEST_CASE("count validation") {
    MatrixXd y = MatrixXd::Ones(3, 2);
    y(1, 1) = 0.5;
    CHECK_THROWS_AS(check_counts(y), InvalidArgument);
    y(1, 1) = -1.0;
    CHECK_THROWS_AS(check_counts(y), InvalidArgument);
    y(1, 1) = 3.0;
    CHECK_NOTHROW(check_counts(y));
}

TEST_CASE("one-step plug-in PIT is close to uniform in a well-specified simulation") {
    const PanelData data = stable_counts(30, 300, 7);
    const PoissonSpec spec = PoissonSpec::make(design::DesignRecipe{}, constant_q(3, 1e-6), 1.0);
    const auto run = fit_poisson(data, spec);
    std::vector<int> bins(10, 0);
    int total = 0;
    for (int origin = 50; origin < data.n_times() - 1; ++origin) {
        const VectorXd lam = plug_in_intensity(run, spec, data, origin);
        const auto cp = eval::coverage_and_pit(eval::PoissonPredictive{lam}, data.y.row(origin + 1).transpose(), 0.9,
                                               derive_seed(3, "pit", static_cast<std::uint64_t>(origin)));
        for (Eigen::Index i = 0; i < cp.pit.size(); ++i) {
            ++bins[std::min(9, static_cast<int>(cp.pit(i) * 10.0))];
            ++total;
        }
    }
    for (int b : bins) {
        const double share = static_cast<double>(b) / total;
        CHECK(share >= 0.07);
        CHECK(share <= 0.14);
    }
}

TEST_CASE("large counts match a Gaussian filter on log counts") {
    Rng rng(5);
    const int n = 20;
    const int t_count = 100;
    std::normal_distribution<double> z01;
    MatrixXd zc(n, 1);
    for (int i = 0; i < n; ++i) zc(i, 0) = z01(rng);
    PanelData counts;
    counts.y.resize(t_count, n);
    for (int t = 0; t < t_count; ++t)
        for (int i = 0; i < n; ++i) {
            std::poisson_distribution<int> pois(std::exp(5.3 + 0.3 * zc(i, 0)));
            counts.y(t, i) = pois(rng);
        }
    counts.w_seq = {MatrixXd::Zero(n, n)};
    counts.z = std::vector<MatrixXd>(t_count, zc);
    design::DesignRecipe r = intercept_only();
    r.covariate_count = 1;
    // Start inside the large-count regime so the first linearization point
    // already has intensities in the hundreds.
    PoissonSpec pspec = PoissonSpec::make(r, constant_q(2, 0.0), 10.0);
    pspec.m0 = (VectorXd(2) << 5.0, 0.0).finished();
    const auto prun = fit_poisson(counts, pspec);

    PanelData logs = counts;
    logs.y = counts.y.array().log();
    const auto grun = gauss::fit_gaussian(logs, gauss::GaussianSpec::make(r, constant_q(2, 0.0), 1.0 / 200.0, 10.0));
    const VectorXd a = prun.filtered.back().mean;
    const VectorXd b = grun.filtered.back().mean;
    for (int j = 0; j < 2; ++j) CHECK(std::abs(a(j) - b(j)) <= 0.05 * std::abs(b(j)));
}

TEST_CASE("stabilizer caps") {
    PanelData data;
    data.y = MatrixXd::Zero(3, 2);
    data.w_seq = {MatrixXd::Zero(2, 2)};
    PoissonSpec spec = PoissonSpec::make(intercept_only(), constant_q(1, 0.0), 1.0);
    spec.m0 = VectorXd::Constant(1, 15.0);
    spec.p0 = MatrixXd::Zero(1, 1);
    lgss::FilterRun run;
    run.initial = lgss::Belief{spec.m0, spec.p0, 0};

    const auto capped = mc_forecast(run, spec, data, 0, 2, 20, StabilizerConfig{}, 9);
    for (const auto& e : capped) CHECK(max_abs(e.intensities - MatrixXd::Constant(20, 2, 1e5)) == 0.0);
    const auto raw = mc_forecast(run, spec, data, 0, 1, 5, StabilizerConfig::disabled(), 9);
    CHECK(raw[0].intensities(0, 0) == doctest::Approx(std::exp(15.0)).epsilon(1e-14));
    spec.m0(0) = 25.0;
    run.initial.mean(0) = 25.0;
    const auto raw_cap = mc_forecast(run, spec, data, 0, 1, 5, StabilizerConfig::disabled(), 9);
    CHECK(raw_cap[0].intensities(0, 0) == doctest::Approx(std::exp(20.0)).epsilon(1e-14));
    CHECK(ensemble_stats(raw_cap[0]).explosion_prob == 1.0);

    StabilizerConfig bad;
    bad.phi = 1.5;
    CHECK_THROWS_AS(bad.validate(), InvalidArgument);
    CHECK_THROWS_AS((void)mc_forecast(run, spec, data, 0, 1, 5, StabilizerConfig{}, 1, NetworkPolicy::user_supplied),
                    Unsupported);
}

TEST_CASE("degenerate single draw reproduces the plug-in intensity") {
    const PanelData data = stable_counts(5, 60, 11);
    const PoissonSpec spec = PoissonSpec::make(design::DesignRecipe{}, constant_q(3, 0.0), 1.0);
    auto run = fit_poisson(data, spec);
    const int origin = 50;
    const auto step = static_cast<std::size_t>(origin - 1);
    run.filtered[step].cov.setZero();
    const auto e = mc_forecast(run, spec, data, origin, 1, 1, StabilizerConfig::disabled(), 3);
    CHECK(max_abs(e[0].intensities.row(0).transpose() - plug_in_intensity(run, spec, data, origin)) <= 1e-12);
}

TEST_CASE("ensemble properties") {
    const PanelData data = stable_counts(10, 120, 13);
    const PoissonSpec spec = PoissonSpec::make(design::DesignRecipe{}, constant_q(3, 1e-6), 1.0);
    const auto run = fit_poisson(data, spec);
    const int origin = 100;

    SUBCASE("deterministic and independent of the worker count") {
        const auto a = mc_forecast(run, spec, data, origin, 4, 200, StabilizerConfig{}, 42, NetworkPolicy::carry_forward, 1);
        const auto b = mc_forecast(run, spec, data, origin, 4, 200, StabilizerConfig{}, 42, NetworkPolicy::carry_forward, 3);
        for (int h = 0; h < 4; ++h) {
            CHECK((a[h].intensities.array() == b[h].intensities.array()).all());
            CHECK((a[h].counts.array() == b[h].counts.array()).all());
        }
    }
    SUBCASE("stabilized intensities never exceed the cap") {
        StabilizerConfig tight;
        tight.lambda_max = 3.0;
        for (const auto& e : mc_forecast(run, spec, data, origin, 6, 300, tight, 1))
            CHECK(e.intensities.maxCoeff() <= 3.0);
    }
    SUBCASE("one-step count means match the plug-in intensity") {
        const int s = 4000;
        const auto e = mc_forecast(run, spec, data, origin, 1, s, StabilizerConfig::disabled(), 5);
        const VectorXd lam = plug_in_intensity(run, spec, data, origin);
        const EnsembleStats st = ensemble_stats(e[0]);
        for (int i = 0; i < data.n_nodes(); ++i)
            CHECK(std::abs(st.mean_count(i) - lam(i)) <= 4.0 * std::sqrt(lam(i) / s) + 0.01 * lam(i));
    }
}

TEST_CASE("ensemble statistics") {
    ForecastEnsemble e;
    e.intensities = MatrixXd::Constant(300, 3, 2.0);
    e.counts = CountMatrix::Constant(300, 3, 2);
    e.intensities(17, 1) = 2e6;
    const EnsembleStats st = ensemble_stats(e);
    CHECK(st.explosion_prob == doctest::Approx(1.0 / 300.0));
    CHECK(st.median_intensity(1) == 2.0);

    ForecastEnsemble one;
    one.intensities = (MatrixXd(1, 2) << 3.5, 7.0).finished();
    one.counts = (CountMatrix(1, 2) << 4, 6).finished();
    const EnsembleStats s1 = ensemble_stats(one);
    CHECK(max_abs(s1.mean_intensity - s1.median_intensity) == 0.0);
    CHECK(s1.mean_intensity(1) == 7.0);
    CHECK(s1.count_quantiles(1, 0) == 4.0);
    CHECK(s1.explosion_prob == 0.0);
}
