#include "doctest.h"
#include "test_support.hpp"

#include "nssm/errors.hpp"
#include "nssm/tensorcp.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>

using namespace nssm;
using namespace nssm::cp;
using testsupport::max_abs;
using testsupport::random_vector;

namespace {

CPFactors random_factors(int r, int n, int p, Rng& rng) {
    CPFactors f = CPFactors::zeros(r, n, p);
    for (int k = 0; k < r; ++k) {
        f.mode1[static_cast<std::size_t>(k)] = random_vector(n, rng);
        f.mode2[static_cast<std::size_t>(k)] = random_vector(n, rng);
        f.mode3[static_cast<std::size_t>(k)] = random_vector(p, rng);
    }
    return f;
}

std::vector<VectorXd> random_lags(int n, int p, Rng& rng) {
    std::vector<VectorXd> lags;
    for (int l = 0; l < p; ++l) lags.push_back(random_vector(n, rng));
    return lags;
}

VectorXd dense_mean(const CPFactors& f, const std::vector<VectorXd>& lags) {
    const auto slices = cp_reconstruct(f);
    VectorXd g = VectorXd::Zero(f.n);
    for (int l = 0; l < f.p; ++l) g += slices[static_cast<std::size_t>(l)] * lags[static_cast<std::size_t>(l)];
    return g;
}

// One-step MSE of per-node AR(p) models refitted by least squares on an
// expanding window.
double diagonal_var_mse(const MatrixXd& y, int p, int first) {
    const auto t_count = static_cast<int>(y.rows());
    const auto n = static_cast<int>(y.cols());
    double sse = 0.0;
    int count = 0;
    for (int t = first; t < t_count; ++t) {
        for (int i = 0; i < n; ++i) {
            const int rows = t - p;
            MatrixXd x(rows, p);
            VectorXd target(rows);
            for (int s = p; s < t; ++s) {
                for (int l = 1; l <= p; ++l) x(s - p, l - 1) = y(s - l, i);
                target(s - p) = y(s, i);
            }
            const VectorXd coef = x.colPivHouseholderQr().solve(target);
            double pred = 0.0;
            for (int l = 1; l <= p; ++l) pred += coef(l - 1) * y(t - l, i);
            sse += (y(t, i) - pred) * (y(t, i) - pred);
            ++count;
        }
    }
    return sse / count;
}

}  // namespace

TEST_CASE("stacking round trip") {
    Rng rng(1);
    const CPFactors f = random_factors(3, 5, 2, rng);
    CHECK(f.state_dim() == 3 * (2 * 5 + 2));
    const VectorXd xi = f.stack();
    CHECK(xi.size() == f.state_dim());
    CHECK(xi.segment(0, 5) == f.mode1[0]);
    CHECK(xi.segment(15, 5) == f.mode2[0]);
    CHECK(xi.segment(30, 2) == f.mode3[0]);
    const CPFactors g = CPFactors::unstack(xi, 3, 5, 2);
    CHECK(g.stack() == xi);
    CHECK_THROWS_AS((void)CPFactors::unstack(xi.head(10), 3, 5, 2), InvalidArgument);
}

TEST_CASE("reconstruction") {
    CPFactors ind = CPFactors::zeros(1, 3, 2);
    ind.mode1[0](0) = 1.0;
    ind.mode2[0](1) = 1.0;
    ind.mode3[0](0) = 1.0;
    const auto s = cp_reconstruct(ind);
    MatrixXd e12 = MatrixXd::Zero(3, 3);
    e12(0, 1) = 1.0;
    CHECK(s[0] == e12);
    CHECK(s[1].isZero(0.0));

    const auto empty = cp_reconstruct(CPFactors::zeros(0, 3, 2));
    REQUIRE(empty.size() == 2);
    CHECK(empty[0].isZero(0.0));

    Rng rng(2);
    const CPFactors f = random_factors(3, 6, 3, rng);
    const auto slices = cp_reconstruct(f);
    for (int l = 0; l < 3; ++l)
        for (int i = 0; i < 6; ++i)
            for (int j = 0; j < 6; ++j) {
                double v = 0.0;
                for (int r = 0; r < 3; ++r)
                    v += f.mode3[static_cast<std::size_t>(r)](l) * f.mode1[static_cast<std::size_t>(r)](i) *
                         f.mode2[static_cast<std::size_t>(r)](j);
                CHECK(std::abs(slices[static_cast<std::size_t>(l)](i, j) - v) <= 1e-12);
            }
}

TEST_CASE("trilinear mean and conditional designs") {
    Rng rng(3);
    for (int rep = 0; rep < 50; ++rep) {
        const int r = 1 + rep % 4;
        const int n = 1 + rep % 7;
        const int p = 1 + rep % 3;
        const CPFactors f = random_factors(r, n, p, rng);
        const auto lags = random_lags(n, p, rng);
        const VectorXd g = cp_mean(f, lags);
        CHECK(max_abs(g - dense_mean(f, lags)) <= 1e-12);
        for (int mode = 1; mode <= 3; ++mode) {
            const MatrixXd h = conditional_design(f, mode, lags);
            CHECK(h.rows() == n);
            CHECK(max_abs(h * f.mode_block(mode) - g) <= 1e-12);
        }
    }

    const CPFactors f = random_factors(2, 4, 2, rng);
    const std::vector<VectorXd> zeros(2, VectorXd::Zero(4));
    CHECK(cp_mean(f, zeros).isZero(0.0));

    const auto lags = random_lags(4, 2, rng);
    CPFactors scaled = f;
    scaled.mode1[1] *= 3.0;
    scaled.mode2[1] /= 3.0;
    CHECK(max_abs(cp_mean(scaled, lags) - cp_mean(f, lags)) <= 1e-12);
}

TEST_CASE("conditional design edge cases") {
    Rng rng(4);
    CPFactors f = random_factors(1, 3, 2, rng);
    f.mode3[0].setZero();
    const auto lags = random_lags(3, 2, rng);
    CHECK(conditional_design(f, 1, lags).isZero(0.0));

    const CPFactors one = random_factors(2, 3, 1, rng);
    const std::vector<VectorXd> lag1{random_vector(3, rng)};
    const MatrixXd h3 = conditional_design(one, 3, lag1);
    REQUIRE(h3.cols() == 2);
    for (int r = 0; r < 2; ++r) {
        const double m = one.mode2[static_cast<std::size_t>(r)].dot(lag1[0]);
        CHECK(max_abs(h3.col(r) - one.mode1[static_cast<std::size_t>(r)] * m) <= 1e-14);
    }
    CHECK_THROWS_AS((void)conditional_design(one, 4, lag1), InvalidArgument);
}

TEST_CASE("sign convention") {
    Rng rng(5);
    const CPFactors f = random_factors(3, 5, 2, rng);
    const auto lags = random_lags(5, 2, rng);
    const CPFactors canon = sign_fix(f);
    CHECK(max_abs(cp_mean(canon, lags) - cp_mean(f, lags)) <= 1e-12);
    for (int r = 0; r < 3; ++r) {
        const auto i = static_cast<std::size_t>(r);
        CHECK(canon.mode1[i].norm() == doctest::Approx(canon.mode2[i].norm()));
        CHECK(canon.mode1[i](0) > 0.0);
        if (r > 0) {
            const double prev = canon.mode1[i - 1].norm() * canon.mode2[i - 1].norm() * canon.mode3[i - 1].norm();
            CHECK(prev >= canon.mode1[i].norm() * canon.mode2[i].norm() * canon.mode3[i].norm());
        }
    }
    CHECK(max_abs(sign_fix(canon).stack() - canon.stack()) <= 1e-14);

    CPFactors neg = canon;
    for (int r = 0; r < 3; ++r) {
        neg.mode1[static_cast<std::size_t>(r)] *= -1.0;
        neg.mode2[static_cast<std::size_t>(r)] *= -1.0;
    }
    CHECK(max_abs(sign_fix(neg).stack() - canon.stack()) <= 1e-14);
    CHECK(max_abs(cp_mean(neg, lags) - cp_mean(canon, lags)) <= 1e-12);
}

TEST_CASE("state dimension is smaller than the dense lag tensor") {
    for (int n : {10, 50, 552})
        for (int p : {1, 2, 4})
            for (int r : {1, 2, 3}) {
                const CPFactors f = CPFactors::zeros(r, n, p);
                CHECK(f.state_dim() == r * (2 * n + p));
                CHECK(static_cast<int>(f.stack().size()) == f.state_dim());
                CHECK(f.state_dim() < n * n * p);
            }
}

TEST_CASE("scalar collapse matches a Kalman oracle") {
    // N = 1, R = 1 with modes 1 and 2 pinned at 1: the lag weights follow a
    // random walk observed through y_t = sum_l b3(l) y_{t-l} + e_t.
    Rng rng(6);
    const int t_count = 120;
    const int p = 2;
    MatrixXd y(t_count, 1);
    y(0, 0) = 1.0;
    y(1, 0) = 0.5;
    std::normal_distribution<double> z(0.0, 1.0);
    VectorXd coef = (VectorXd(2) << 0.5, 0.2).finished();
    for (int t = 2; t < t_count; ++t) {
        coef += 0.02 * VectorXd::NullaryExpr(2, [&](Eigen::Index) { return z(rng); });
        y(t, 0) = coef(0) * y(t - 1, 0) + coef(1) * y(t - 2, 0) + 0.5 * z(rng);
    }

    CPFactors init = CPFactors::zeros(1, 1, p);
    init.mode1[0](0) = 1.0;
    init.mode2[0](0) = 1.0;
    CPNoise noise;
    noise.q = {0.0, 0.0, 4e-4};
    noise.p0 = {0.0, 0.0, 1.0};
    noise.sigma2 = 0.25;
    const CPFilterResult run = cp_filter_alternating(y, 1, p, noise, {}, 0, init);

    VectorXd m = VectorXd::Zero(2);
    MatrixXd cov = MatrixXd::Identity(2, 2);
    for (int t = p; t < t_count; ++t) {
        cov += 4e-4 * MatrixXd::Identity(2, 2);
        const Eigen::RowVector2d x(y(t - 1, 0), y(t - 2, 0));
        const double pred = x * m;
        const double s = (x * cov * x.transpose())(0, 0) + 0.25;
        const Eigen::Vector2d gain = cov * x.transpose() / s;
        CHECK(std::abs(run.one_step_mean[static_cast<std::size_t>(t - p)](0) - pred) <= 1e-4);
        m += gain * (y(t, 0) - pred);
        cov -= gain * x * cov;
        CHECK(max_abs(run.filtered[static_cast<std::size_t>(t - p)].mode3[0] - m) <= 1e-4);
    }
    // Lag weights start at zero, so the first sweep of the first step has
    // nothing to condition modes 1 and 2 on.
    CHECK(run.skipped_updates == 2);
}

TEST_CASE("degenerate design is skipped") {
    MatrixXd y = MatrixXd::Zero(6, 2);
    CPNoise noise;
    const CPFilterResult run = cp_filter_alternating(y, 1, 1, noise);
    CHECK(run.skipped_updates > 0);
    CHECK(run.filtered.size() == 5);
}

TEST_CASE("filter is deterministic") {
    Rng rng(7);
    const MatrixXd y = testsupport::random_matrix(30, 4, rng);
    CPNoise noise;
    const auto a = cp_filter_alternating(y, 2, 2, noise, {}, 11);
    const auto b = cp_filter_alternating(y, 2, 2, noise, {}, 11);
    CHECK(a.loglik == b.loglik);
    CHECK(a.filtered.back().stack() == b.filtered.back().stack());
    CHECK_THROWS_AS((void)cp_filter_alternating(y, 0, 2, noise), InvalidArgument);
    CHECK_THROWS_AS((void)cp_filter_alternating(y.topRows(2), 1, 2, noise), InvalidArgument);
}

TEST_CASE("low-rank filter beats a diagonal VAR on low-rank data") {
    const int n = 10;
    const int p = 2;
    const int rank = 2;
    const int t_count = 200;
    int wins = 0;
    for (int seed = 0; seed < 50; ++seed) {
        Rng rng(1000 + static_cast<std::uint64_t>(seed));
        std::normal_distribution<double> z(0.0, 1.0);
        CPFactors f = CPFactors::zeros(rank, n, p);
        for (int r = 0; r < rank; ++r) {
            const auto i = static_cast<std::size_t>(r);
            f.mode1[i] = VectorXd::NullaryExpr(n, [&](Eigen::Index) { return z(rng); }).normalized();
            f.mode2[i] = VectorXd::NullaryExpr(n, [&](Eigen::Index) { return z(rng); }).normalized();
            f.mode3[i] = r == 0 ? (VectorXd(2) << 0.6, 0.2).finished() : (VectorXd(2) << -0.3, 0.3).finished();
        }
        // Rescale the lag weights so the companion form has spectral radius 0.8.
        const auto slices = cp_reconstruct(f);
        MatrixXd companion = MatrixXd::Zero(2 * n, 2 * n);
        companion.topLeftCorner(n, n) = slices[0];
        companion.topRightCorner(n, n) = slices[1];
        companion.bottomLeftCorner(n, n).setIdentity();
        const double rho = Eigen::EigenSolver<MatrixXd>(companion).eigenvalues().cwiseAbs().maxCoeff();
        for (auto& m3 : f.mode3) m3 *= 0.8 / rho;
        MatrixXd y = MatrixXd::Zero(t_count, n);
        for (int t = 0; t < p; ++t) y.row(t) = VectorXd::NullaryExpr(n, [&](Eigen::Index) { return z(rng); });
        for (int t = p; t < t_count; ++t) {
            for (int r = 0; r < rank; ++r) {
                const auto i = static_cast<std::size_t>(r);
                f.mode1[i] += 0.002 * VectorXd::NullaryExpr(n, [&](Eigen::Index) { return z(rng); });
                f.mode2[i] += 0.002 * VectorXd::NullaryExpr(n, [&](Eigen::Index) { return z(rng); });
            }
            const std::vector<VectorXd> lags{y.row(t - 1).transpose(), y.row(t - 2).transpose()};
            y.row(t) = (cp_mean(f, lags) + 0.3 * VectorXd::NullaryExpr(n, [&](Eigen::Index) { return z(rng); }))
                           .transpose();
        }
        CPNoise noise;
        noise.q = {1e-5, 1e-5, 1e-5};
        noise.p0 = {1.0, 1.0, 1.0};
        noise.sigma2 = 0.09;
        const auto run = cp_filter_alternating(y, rank, p, noise, {}, static_cast<std::uint64_t>(seed));
        const int first = 60;
        double sse = 0.0;
        int count = 0;
        for (int t = first; t < t_count; ++t) {
            sse += (y.row(t).transpose() - run.one_step_mean[static_cast<std::size_t>(t - p)]).squaredNorm();
            count += n;
        }
        if (sse / count < diagonal_var_mse(y, p, first)) ++wins;
    }
    MESSAGE("low-rank wins: " << wins << " of 50");
    CHECK(wins >= 40);
}
