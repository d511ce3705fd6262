#include "doctest.h"
#include "test_support.hpp"

#include "nssm/diagnostics.hpp"
#include "nssm/errors.hpp"
#include "nssm/simulate.hpp"

#include <cmath>

using namespace nssm;
using namespace nssm::sim;
using testsupport::max_abs;

namespace {

double density(const graph::Adjacency& a) {
    const int n = a.n_nodes();
    return a.entries.sum() / (static_cast<double>(n) * (n - 1));
}

MatrixXd constant_paths(int t, double b0, double b1, double b2) {
    MatrixXd th(t, 3);
    th.col(0).setConstant(b0);
    th.col(1).setConstant(b1);
    th.col(2).setConstant(b2);
    return th;
}

}  // namespace

TEST_CASE("graph generators") {
    SUBCASE("sbm corner case is block diagonal") {
        const auto g = gen_graph({Sbm{{3, 4}, 1.0, 0.0}, 7, 1});
        for (int i = 0; i < 7; ++i)
            for (int j = 0; j < 7; ++j) {
                const bool same = (i < 3) == (j < 3);
                CHECK(g.adjacency.entries(i, j) == (same && i != j ? 1.0 : 0.0));
            }
        g.w.validate();
    }
    SUBCASE("preferential attachment with one edge per node is a tree") {
        const auto g = gen_graph({ScaleFree{1}, 5, 3});
        CHECK(g.adjacency.entries.sum() == doctest::Approx(2.0 * 4));
        CHECK(g.adjacency.entries.isApprox(g.adjacency.entries.transpose()));
    }
    SUBCASE("latent distance hits its target density") {
        double total = 0.0;
        for (std::uint64_t s = 0; s < 20; ++s) total += density(gen_graph({LatentDistance{}, 60, s}).adjacency);
        CHECK(total / 20 == doctest::Approx(0.15).epsilon(0.2));
    }
    SUBCASE("latent distance with vanishing scale and no target has density one half") {
        LatentDistance ld;
        ld.scale = 1e-9;
        ld.target_density.reset();
        double total = 0.0;
        for (std::uint64_t s = 0; s < 10; ++s) total += density(gen_graph({ld, 60, s}).adjacency);
        CHECK(std::abs(total / 10 - 0.5) <= 0.05);
    }
    SUBCASE("row-stochastic output and determinism") {
        const auto a = gen_graph({LatentDistance{}, 30, 9});
        const auto b = gen_graph({LatentDistance{}, 30, 9});
        CHECK(max_abs(a.w.w - b.w.w) == 0.0);
        CHECK(a.w.provenance == graph::Provenance::simulated);
        const VectorXd sums = a.w.w.rowwise().sum();
        for (int i = 0; i < 30; ++i) CHECK((sums(i) == 0.0 || std::abs(sums(i) - 1.0) <= 1e-12));
    }
    SUBCASE("drifting latent graphs share the intercept") {
        const auto seq = gen_latent_drift(20, LatentDistance{}, 5, 0.1, 4);
        REQUIRE(seq.size() == 5);
        for (const auto& g : seq) CHECK(g.intercept == seq.front().intercept);
        CHECK(max_abs(seq[0].embeddings - seq[4].embeddings) > 0.0);
    }
}

TEST_CASE("coefficient paths") {
    CoeffPathSpec flat;
    flat.init = (VectorXd(3) << 0.1, 0.2, 0.3).finished();
    flat.rw_sd = VectorXd::Zero(3);
    const auto c = gen_coeff_paths(flat, 50, 1);
    for (int t = 0; t < 50; ++t) CHECK(max_abs(c.theta.row(t).transpose() - flat.init) == 0.0);

    CoeffPathSpec every = flat;
    every.jumps = SparseJumps{1.0, 1.0, 1.0, {1}, false};
    const auto j = gen_coeff_paths(every, 20, 2);
    for (int t = 0; t < 20; ++t) CHECK(j.theta(t, 1) == doctest::Approx(0.2 + t));
    CHECK(j.jump_times[1].size() == 19);

    CoeffPathSpec sparse = flat;
    sparse.jumps = SparseJumps{};
    double total = 0.0;
    for (std::uint64_t s = 0; s < 500; ++s) total += gen_coeff_paths(sparse, 200, s).jump_times[1].size();
    const double mean = total / 500;
    CHECK(mean >= 2.0);
    CHECK(mean <= 6.0);

    CoeffPathSpec scaled = flat;
    scaled.c = 1.1;
    const auto sc = gen_coeff_paths(scaled, 3, 1);
    CHECK(sc.theta(2, 1) == doctest::Approx(0.22));
    CHECK(sc.theta(2, 0) == 0.1);
}

TEST_CASE("gaussian panels") {
    Rng rng(5);
    const MatrixXd w = testsupport::random_row_stochastic(10, rng);
    SUBCASE("no spillover gives i.i.d. draws") {
        PanelOptions opt;
        opt.sigma2 = 0.25;
        const auto p = gen_gaussian_panel({w}, constant_paths(400, 1.5, 0.0, 0.0), opt, 3);
        const MatrixXd body = p.data.y.bottomRows(399);
        const double n = static_cast<double>(body.size());
        const double mean = body.mean();
        const double var = (body.array() - mean).square().sum() / (n - 1);
        CHECK(std::abs(mean - 1.5) <= 3.0 * 0.5 / std::sqrt(n));
        CHECK(std::abs(var - 0.25) <= 3.0 * 0.25 * std::sqrt(2.0 / n));
    }
    SUBCASE("noiseless recursion halves every step") {
        PanelOptions opt;
        opt.sigma2 = 0.0;
        opt.y0 = VectorXd::Ones(4);
        const auto p = gen_gaussian_panel({MatrixXd::Identity(4, 4)}, constant_paths(10, 0.0, 0.2, 0.3), opt, 1);
        for (int t = 0; t < 10; ++t) CHECK(max_abs(p.data.y.row(t).transpose() - VectorXd::Constant(4, std::pow(0.5, t))) <= 1e-15);
    }
    SUBCASE("aggregate follows the scalar recursion with realized innovations") {
        MatrixXd ring = MatrixXd::Zero(6, 6);
        for (int i = 0; i < 6; ++i) ring(i, (i + 1) % 6) = ring(i, (i + 5) % 6) = 0.5;
        CoeffPathSpec cps;
        cps.init = (VectorXd(3) << 0.2, 0.3, 0.4).finished();
        cps.rw_sd = VectorXd::Constant(3, 0.02);
        const auto paths = gen_coeff_paths(cps, 60, 8);
        const auto p = gen_gaussian_panel({ring}, paths.theta, PanelOptions{}, 9);
        const auto pi = graph::invariant_vector(graph::WeightMatrix{ring, graph::Provenance::row_normalized, {}});
        const VectorXd ybar = p.data.y * pi.pi;
        const VectorXd ebar = p.innovations * pi.pi;
        const VectorXd rec = diag::aggregate_recursion(paths.theta.col(0), paths.theta.col(1), paths.theta.col(2), {}, ybar(0), ebar);
        CHECK(max_abs(rec - ybar) <= 1e-12);
    }
    SUBCASE("contractive regime stays bounded") {
        CoeffPathSpec cps;
        cps.init = (VectorXd(3) << 0.5, 0.3, 0.3).finished();
        cps.rw_sd = VectorXd::Zero(3);
        cps.c = 0.8;
        const auto paths = gen_coeff_paths(cps, 400, 1);
        const auto p = gen_gaussian_panel({w}, paths.theta, PanelOptions{}, 2);
        CHECK_FALSE(p.unstable);
        CHECK(p.data.y.allFinite());
        CHECK(p.data.y.cwiseAbs().maxCoeff() < 20.0);
    }
    SUBCASE("expansive regime is flagged, not rejected") {
        const auto p = gen_gaussian_panel({w}, constant_paths(20, 0.0, 0.6, 0.6), PanelOptions{}, 2);
        CHECK(p.unstable);
        CHECK(p.max_op_norm > 1.0);
    }
    SUBCASE("replay is bit-identical") {
        const auto a = gen_gaussian_panel({w}, constant_paths(30, 0.1, 0.2, 0.3), PanelOptions{}, 77);
        const auto b = gen_gaussian_panel({w}, constant_paths(30, 0.1, 0.2, 0.3), PanelOptions{}, 77);
        CHECK((a.data.y.array() == b.data.y.array()).all());
    }
}

TEST_CASE("count panels") {
    Rng rng(6);
    const MatrixXd w = testsupport::random_row_stochastic(10, rng);
    SUBCASE("unit intensity") {
        const auto p = gen_poisson_panel({w}, constant_paths(300, 0.0, 0.0, 0.0), PanelOptions{}, 4);
        const MatrixXd body = p.data.y.bottomRows(299);
        CHECK(std::abs(body.mean() - 1.0) <= 3.0 / std::sqrt(static_cast<double>(body.size())));
    }
    SUBCASE("very negative intercept gives zeros") {
        const auto p = gen_poisson_panel({w}, constant_paths(50, -20.0, 0.0, 0.0), PanelOptions{}, 4);
        CHECK(p.data.y.sum() == 0.0);
    }
    SUBCASE("persistence shows in node sums") {
        const auto p = gen_poisson_panel({w}, constant_paths(400, 0.3, 0.05, 0.15), PanelOptions{}, 5);
        const VectorXd s = p.data.y.rowwise().sum();
        const VectorXd a = s.head(399).array() - s.mean();
        const VectorXd b = s.tail(399).array() - s.mean();
        CHECK(a.dot(b) > 0.0);
    }
    SUBCASE("exploding log-intensity is refused") {
        CHECK_THROWS_AS((void)gen_poisson_panel({w}, constant_paths(50, 31.0, 0.0, 0.0), PanelOptions{}, 4), InvalidArgument);
    }
}

TEST_CASE("dynamic edges") {
    EdgePathSpec zero;
    zero.eta0 = VectorXd::Zero(2);
    zero.s = MatrixXd::Zero(2, 2);
    const auto e = gen_dynamic_edges(zero, 3, 40, 1);
    for (const auto& a : e.adjacency) CHECK(std::abs(density(a) - 0.5) <= 0.03);
    CHECK(max_abs(e.eta.row(0) - e.eta.row(2)) == 0.0);

    EdgePathSpec dense = zero;
    dense.eta0(0) = 8.0;
    for (const auto& a : gen_dynamic_edges(dense, 2, 40, 2).adjacency) CHECK(density(a) >= 0.95);

    EdgePathSpec moving = zero;
    moving.s = 0.1 * MatrixXd::Identity(2, 2);
    const auto m = gen_dynamic_edges(moving, 5, 10, 3);
    CHECK(max_abs(m.eta.row(0) - m.eta.row(4)) > 0.0);
}
