#include "doctest.h"
#include "test_support.hpp"

#include "nssm/design.hpp"
#include "nssm/errors.hpp"

#include <string>

using namespace nssm;
using namespace nssm::design;
using testsupport::max_abs;
using testsupport::random_matrix;
using testsupport::random_row_stochastic;
using testsupport::random_vector;

TEST_CASE("two-node design by hand") {
    MatrixXd w(2, 2);
    w << 0, 1, 1, 0;
    const std::vector<VectorXd> lags{(VectorXd(2) << 1, 2).finished()};
    const DesignMatrix d = build_design(w, lags, MatrixXd(2, 0), DesignRecipe{});
    MatrixXd expected(2, 3);
    expected << 1, 2, 1, 1, 1, 2;
    CHECK(max_abs(d.x - expected) == 0.0);
    CHECK(d.column_labels.size() == 3);
}

TEST_CASE("empty recipe is rejected") {
    DesignRecipe r;
    r.include_intercept = false;
    r.include_network_lags = false;
    r.include_own_lags = false;
    CHECK_THROWS_WITH_AS(r.validate(), "empty design", InvalidArgument);
    CHECK_THROWS_AS((void)build_design(MatrixXd::Zero(2, 2), std::vector<VectorXd>{VectorXd::Zero(2)}, MatrixXd(2, 0), r),
                    InvalidArgument);
}

TEST_CASE("lag-2 columns match explicit products") {
    Rng rng(7);
    const int n = 6;
    const MatrixXd w = random_row_stochastic(n, rng);
    const std::vector<VectorXd> lags{random_vector(n, rng), random_vector(n, rng)};
    const MatrixXd z = random_matrix(n, 2, rng);
    DesignRecipe r;
    r.lag_order = 2;
    r.network_powers = {1, 2};
    r.covariate_count = 2;
    const DesignMatrix d = build_design(w, lags, z, r);
    REQUIRE(d.x.cols() == r.n_columns());
    CHECK(max_abs(d.x.col(0) - VectorXd::Ones(n)) == 0.0);
    for (int power : {1, 2})
        for (int lag : {1, 2}) {
            VectorXd oracle = lags[lag - 1];
            for (int k = 0; k < power; ++k) oracle = w * oracle;
            CHECK(max_abs(d.x.col(r.network_column(power, lag)) - oracle) <= 1e-14);
        }
    for (int lag : {1, 2}) CHECK(max_abs(d.x.col(r.own_column(lag)) - lags[lag - 1]) == 0.0);
    CHECK(max_abs(d.x.middleCols(r.covariate_offset(), 2) - z) == 0.0);
}

TEST_CASE("dimension mismatches name the block") {
    const MatrixXd w = MatrixXd::Zero(3, 3);
    DesignRecipe r;
    r.lag_order = 2;
    CHECK_THROWS_AS((void)build_design(w, std::vector<VectorXd>{VectorXd::Zero(3)}, MatrixXd(3, 0), r), InvalidArgument);
    r.lag_order = 1;
    r.covariate_count = 1;
    try {
        (void)build_design(w, std::vector<VectorXd>{VectorXd::Zero(3)}, MatrixXd::Zero(2, 1), r);
        FAIL("expected InvalidArgument");
    } catch (const InvalidArgument& e) {
        CHECK(std::string(e.what()).find("Z") != std::string::npos);
    }
}

TEST_CASE("column count equals the recipe width for random recipes") {
    Rng rng(19);
    std::uniform_int_distribution<int> coin(0, 1);
    std::uniform_int_distribution<int> small(0, 3);
    for (int rep = 0; rep < 200; ++rep) {
        DesignRecipe r;
        r.lag_order = 1 + small(rng);
        r.include_intercept = coin(rng) == 1;
        r.include_network_lags = coin(rng) == 1;
        r.include_own_lags = coin(rng) == 1;
        r.network_powers.clear();
        for (int k = 1; k <= 1 + small(rng); ++k) r.network_powers.push_back(k);
        r.covariate_count = small(rng);
        if (r.n_columns() == 0) continue;
        const int n = 4;
        std::vector<VectorXd> lags;
        for (int l = 0; l < r.lag_order; ++l) lags.push_back(random_vector(n, rng));
        const DesignMatrix d = build_design(random_row_stochastic(n, rng), lags, random_matrix(n, r.covariate_count, rng), r);
        CHECK(d.x.cols() == r.n_columns());
        CHECK(static_cast<int>(d.column_labels.size()) == r.n_columns());
    }
}

TEST_CASE("spillover matrix") {
    Rng rng(2);
    const MatrixXd w = random_row_stochastic(5, rng);
    CHECK(max_abs(spillover_matrix(0.0, 0.7, w) - 0.7 * MatrixXd::Identity(5, 5)) == 0.0);
    CHECK(max_abs(spillover_matrix(0.3, 0.5, MatrixXd::Identity(3, 3)) - 0.8 * MatrixXd::Identity(3, 3)) <= 1e-16);
    const MatrixXd b = spillover_matrix(0.4, 0.2, w);
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 5; ++j) CHECK(b(i, j) == 0.4 * w(i, j) + (i == j ? 0.2 : 0.0));
    for (double a : {-2.0, 0.5, 3.0})
        CHECK(max_abs(spillover_matrix(a * 0.4, a * 0.2, w) - a * b) <= 1e-14);
}

TEST_CASE("summary augmentation") {
    Rng rng(3);
    const int n = 4;
    DesignMatrix x{random_matrix(n, 3, rng), {"a", "b", "c"}};
    const MatrixXd r = 0.5 * MatrixXd::Identity(n, n);

    SummaryAugment first{MatrixXd::Zero(1, n), MatrixXd::Identity(1, 1)};
    first.s(0, 0) = 1.0;
    auto [h1, r1] = augment_summaries(x, r, first);
    CHECK(max_abs(h1.row(n) - x.x.row(0)) == 0.0);

    SummaryAugment total{MatrixXd::Ones(1, n), 2.0 * MatrixXd::Identity(1, 1)};
    auto [h2, r2] = augment_summaries(x, r, total);
    CHECK(max_abs(h2.row(n) - x.x.colwise().sum()) <= 1e-14);
    CHECK(r2(n, n) == 2.0);
    CHECK(max_abs(r2.topRightCorner(n, 1)) == 0.0);

    MatrixXd a = random_matrix(2, n, rng).cwiseAbs();
    SummaryAugment degrees{a, MatrixXd::Identity(2, 2)};
    auto [h3, r3] = augment_summaries(x, r, degrees);
    CHECK(max_abs(h3.bottomRows(2) - a * x.x) <= 1e-14);
    CHECK(max_abs(r3.topLeftCorner(n, n) - r) == 0.0);

    SummaryAugment bad{MatrixXd::Ones(1, n + 1), MatrixXd::Identity(1, 1)};
    CHECK_THROWS_AS((void)augment_summaries(x, r, bad), InvalidArgument);
}
