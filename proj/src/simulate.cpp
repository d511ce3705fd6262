#include "nssm/simulate.hpp"

#include "nssm/errors.hpp"
#include "nssm/rng.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>
#include <random>

namespace nssm::sim {

namespace {

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

MatrixXd pairwise_distances(const MatrixXd& u) {
    const auto n = u.rows();
    MatrixXd d = MatrixXd::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = i + 1; j < n; ++j) d(i, j) = d(j, i) = (u.row(i) - u.row(j)).norm();
    return d;
}

double expected_density(const MatrixXd& dist, double intercept, double scale) {
    const auto n = dist.rows();
    double acc = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = i + 1; j < n; ++j) acc += logistic(intercept - scale * dist(i, j));
    return acc / (0.5 * static_cast<double>(n * (n - 1)));
}

double solve_intercept(const MatrixXd& dist, const LatentDistance& kind) {
    if (!kind.target_density) return 0.0;
    const double target = *kind.target_density;
    double lo = -60.0;
    double hi = 60.0;
    for (int it = 0; it < 200 && hi - lo > 1e-12; ++it) {
        const double mid = 0.5 * (lo + hi);
        (expected_density(dist, mid, kind.scale) < target ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

MatrixXd sample_latent(const MatrixXd& dist, double intercept, double scale, Rng& rng) {
    const auto n = dist.rows();
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    MatrixXd a = MatrixXd::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = i + 1; j < n; ++j)
            if (u01(rng) < logistic(intercept - scale * dist(i, j))) a(i, j) = a(j, i) = 1.0;
    return a;
}

MatrixXd normal_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
    std::normal_distribution<double> z01;
    MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = z01(rng);
    return m;
}

void check_latent(const LatentDistance& k) {
    if (k.dim < 1) throw InvalidArgument("latent_distance: dim must be >= 1");
    if (!(k.scale >= 0.0)) throw InvalidArgument("latent_distance: scale must be nonnegative");
    if (k.target_density && !(*k.target_density > 0.0 && *k.target_density < 1.0))
        throw InvalidArgument("latent_distance: target density must lie in (0, 1)");
}

MatrixXd gen_sbm(const Sbm& k, int n, Rng& rng) {
    if (!(k.p_in >= 0.0 && k.p_in <= 1.0 && k.p_out >= 0.0 && k.p_out <= 1.0))
        throw InvalidArgument("sbm: probabilities must lie in [0, 1]");
    std::vector<int> block;
    for (std::size_t b = 0; b < k.block_sizes.size(); ++b) {
        if (k.block_sizes[b] < 1) throw InvalidArgument("sbm: block sizes must be positive");
        block.insert(block.end(), static_cast<std::size_t>(k.block_sizes[b]), static_cast<int>(b));
    }
    if (static_cast<int>(block.size()) != n) throw InvalidArgument("sbm: block sizes must sum to n_nodes");
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    MatrixXd a = MatrixXd::Zero(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            const double pr = block[static_cast<std::size_t>(i)] == block[static_cast<std::size_t>(j)] ? k.p_in : k.p_out;
            if (u01(rng) < pr) a(i, j) = a(j, i) = 1.0;
        }
    return a;
}

MatrixXd gen_scale_free(const ScaleFree& k, int n, Rng& rng) {
    const int m = k.m_attach;
    if (m < 1 || m + 1 > n) throw InvalidArgument("scale_free: need 1 <= m_attach < n_nodes");
    MatrixXd a = MatrixXd::Zero(n, n);
    std::vector<int> endpoints;  // node repeated once per incident edge
    for (int i = 0; i <= m; ++i)
        for (int j = i + 1; j <= m; ++j) {
            a(i, j) = a(j, i) = 1.0;
            endpoints.push_back(i);
            endpoints.push_back(j);
        }
    for (int v = m + 1; v < n; ++v) {
        std::vector<int> targets;
        while (static_cast<int>(targets.size()) < m) {
            std::uniform_int_distribution<std::size_t> pick(0, endpoints.size() - 1);
            const int u = endpoints[pick(rng)];
            if (std::find(targets.begin(), targets.end(), u) == targets.end()) targets.push_back(u);
        }
        for (int u : targets) {
            a(u, v) = a(v, u) = 1.0;
            endpoints.push_back(u);
            endpoints.push_back(v);
        }
    }
    return a;
}

// Operator norm of the lag-1 spillover matrix for a standard recipe.
double spillover_norm(const design::DesignRecipe& recipe, const VectorXd& theta, const MatrixXd& w) {
    const int net = recipe.include_network_lags ? recipe.network_column(1, 1) : -1;
    const int own = recipe.own_column(1);
    const double b1 = net >= 0 ? theta(net) : 0.0;
    const double b2 = own >= 0 ? theta(own) : 0.0;
    const MatrixXd b = design::spillover_matrix(b1, b2, w);
    try {
        return graph::operator_norm(b, 1e-10, 20000);
    } catch (const NonConvergenceError& e) {
        return e.last_iterate();
    }
}

enum class Family { gaussian, poisson };

SimulatedPanel simulate_panel(const std::vector<MatrixXd>& w_seq, const MatrixXd& theta,
                              const PanelOptions& opt, std::uint64_t seed, Family family,
                              double eta_cap) {
    opt.recipe.validate();
    const auto t_count = static_cast<int>(theta.rows());
    const int p = opt.recipe.lag_order;
    if (w_seq.empty()) throw InvalidArgument("simulate: empty network sequence");
    const auto n = static_cast<int>(w_seq.front().rows());
    if (w_seq.size() != 1 && static_cast<int>(w_seq.size()) != t_count)
        throw InvalidArgument("simulate: network sequence must have length T or 1");
    if (theta.cols() != opt.recipe.n_columns())
        throw InvalidArgument("simulate: coefficient paths do not match the design width");
    if (t_count < p + 1) throw InvalidArgument("simulate: need at least p + 1 rows");
    if (!(opt.sigma2 >= 0.0)) throw InvalidArgument("simulate: sigma2 must be nonnegative");
    if (opt.y0.size() != 0 && opt.y0.size() != n) throw InvalidArgument("simulate: y0 must have length N");
    if (opt.burn_in < 0) throw InvalidArgument("simulate: burn_in must be nonnegative");

    SimulatedPanel out;
    out.data.w_seq = w_seq;
    out.data.z = opt.z;
    out.data.y = MatrixXd::Zero(t_count, n);
    out.innovations = MatrixXd::Zero(t_count, n);

    Rng rng = make_rng(seed, family == Family::gaussian ? "gaussian_panel" : "poisson_panel");
    std::normal_distribution<double> z01;
    const double sigma = std::sqrt(opt.sigma2);

    auto step = [&](const std::vector<VectorXd>& lags, const MatrixXd& w, const MatrixXd& z,
                    const VectorXd& th, VectorXd* eps_out) -> VectorXd {
        const MatrixXd x = design::build_design(w, lags, z, opt.recipe).x;
        const VectorXd mean = x * th;
        VectorXd y(n);
        if (family == Family::gaussian) {
            VectorXd eps(n);
            for (int i = 0; i < n; ++i) eps(i) = sigma * z01(rng);
            y = mean + eps;
            if (eps_out != nullptr) *eps_out = eps;
        } else {
            const double mx = mean.maxCoeff();
            if (mx > eta_cap)
                throw InvalidArgument("gen_poisson_panel: log-intensity " + std::to_string(mx) +
                                      " exceeds the generation cap; use smaller coefficients");
            for (int i = 0; i < n; ++i) {
                std::poisson_distribution<std::int64_t> pois(std::exp(mean(i)));
                y(i) = static_cast<double>(pois(rng));
            }
        }
        return y;
    };

    auto z_at = [&](int t) -> MatrixXd {
        if (opt.z.empty()) return MatrixXd(n, 0);
        return opt.z[static_cast<std::size_t>(std::min<int>(t, static_cast<int>(opt.z.size()) - 1))];
    };
    auto w_at = [&](int t) -> const MatrixXd& { return w_seq.size() == 1 ? w_seq.front() : w_seq[static_cast<std::size_t>(t)]; };

    const VectorXd y0 = opt.y0.size() == n ? opt.y0 : VectorXd::Zero(n);
    std::deque<VectorXd> history(static_cast<std::size_t>(p), y0);
    for (int b = 0; b < opt.burn_in; ++b) {
        std::vector<VectorXd> lags(history.rbegin(), history.rbegin() + p);
        history.push_back(step(lags, w_at(0), z_at(0), theta.row(0).transpose(), nullptr));
        history.pop_front();
    }
    for (int t = 0; t < p; ++t) out.data.y.row(t) = history[static_cast<std::size_t>(t)].transpose();

    for (int t = p; t < t_count; ++t) {
        const auto lags = lag_window(out.data.y, t, p);
        VectorXd eps;
        const VectorXd th = theta.row(t).transpose();
        out.data.y.row(t) = step(lags, w_at(t), z_at(t), th, &eps).transpose();
        if (family == Family::gaussian) out.innovations.row(t) = eps.transpose();
        if (opt.stability_check && (opt.recipe.include_own_lags || opt.recipe.include_network_lags))
            out.max_op_norm = std::max(out.max_op_norm, spillover_norm(opt.recipe, th, w_at(t)));
    }
    out.unstable = out.max_op_norm > 1.0;
    return out;
}

}  // namespace

GeneratedGraph gen_graph(const GraphGen& g) {
    if (g.n_nodes < 2) throw InvalidArgument("gen_graph: need at least two nodes");
    Rng rng = make_rng(g.seed, "gen_graph");
    GeneratedGraph out;
    MatrixXd a;
    if (const auto* ld = std::get_if<LatentDistance>(&g.kind)) {
        check_latent(*ld);
        out.embeddings = normal_matrix(g.n_nodes, ld->dim, rng);
        const MatrixXd dist = pairwise_distances(out.embeddings);
        out.intercept = solve_intercept(dist, *ld);
        a = sample_latent(dist, out.intercept, ld->scale, rng);
    } else if (const auto* sbm = std::get_if<Sbm>(&g.kind)) {
        a = gen_sbm(*sbm, g.n_nodes, rng);
    } else {
        a = gen_scale_free(std::get<ScaleFree>(g.kind), g.n_nodes, rng);
    }
    out.adjacency = graph::make_adjacency(std::move(a), false);
    out.w = graph::row_normalize(out.adjacency);
    out.w.provenance = graph::Provenance::simulated;
    return out;
}

std::vector<GeneratedGraph> gen_latent_drift(int n_nodes, const LatentDistance& kind, int n_times,
                                             double drift_sd, std::uint64_t seed) {
    check_latent(kind);
    if (n_nodes < 2 || n_times < 1) throw InvalidArgument("gen_latent_drift: need N >= 2 and T >= 1");
    if (!(drift_sd >= 0.0)) throw InvalidArgument("gen_latent_drift: drift_sd must be nonnegative");
    Rng rng = make_rng(seed, "gen_latent_drift");
    MatrixXd u = normal_matrix(n_nodes, kind.dim, rng);
    const double intercept = solve_intercept(pairwise_distances(u), kind);
    std::vector<GeneratedGraph> out;
    out.reserve(static_cast<std::size_t>(n_times));
    for (int t = 0; t < n_times; ++t) {
        if (t > 0) u += drift_sd * normal_matrix(n_nodes, kind.dim, rng);
        GeneratedGraph g;
        g.embeddings = u;
        g.intercept = intercept;
        g.adjacency = graph::make_adjacency(sample_latent(pairwise_distances(u), intercept, kind.scale, rng), false);
        g.adjacency.time_index = t;
        g.w = graph::row_normalize(g.adjacency);
        g.w.provenance = graph::Provenance::simulated;
        out.push_back(std::move(g));
    }
    return out;
}

void CoeffPathSpec::validate() const {
    const int k = dim();
    if (k < 1) throw InvalidArgument("CoeffPathSpec: init is empty");
    if (rw_sd.size() != k) throw InvalidArgument("CoeffPathSpec: rw_sd must have length K");
    if ((rw_sd.array() < 0.0).any()) throw InvalidArgument("CoeffPathSpec: rw_sd must be nonnegative");
    if (!(c > 0.0)) throw InvalidArgument("CoeffPathSpec: stability multiplier must be positive");
    for (int j : scaled)
        if (j < 0 || j >= k) throw InvalidArgument("CoeffPathSpec: scaled index out of range");
    if (jumps) {
        if (!(jumps->rate >= 0.0 && jumps->rate <= 1.0))
            throw InvalidArgument("CoeffPathSpec: jump rate must lie in [0, 1]");
        if (jumps->size_lo > jumps->size_hi) throw InvalidArgument("CoeffPathSpec: jump bounds reversed");
        for (int j : jumps->coords)
            if (j < 0 || j >= k) throw InvalidArgument("CoeffPathSpec: jump index out of range");
    }
}

CoeffPaths gen_coeff_paths(const CoeffPathSpec& spec, int n_times, std::uint64_t seed) {
    spec.validate();
    if (n_times < 1) throw InvalidArgument("gen_coeff_paths: T must be >= 1");
    const int k = spec.dim();
    Rng rng = make_rng(seed, "gen_coeff_paths");
    std::normal_distribution<double> z01;
    std::uniform_real_distribution<double> u01(0.0, 1.0);

    CoeffPaths out;
    out.theta.resize(n_times, k);
    out.jump_times.assign(static_cast<std::size_t>(k), {});
    out.jump_sizes.assign(static_cast<std::size_t>(k), {});
    out.theta.row(0) = spec.init.transpose();
    for (int t = 1; t < n_times; ++t) {
        VectorXd th = out.theta.row(t - 1).transpose();
        for (int j = 0; j < k; ++j) th(j) += spec.rw_sd(j) * z01(rng);
        if (spec.jumps) {
            for (int j : spec.jumps->coords) {
                if (u01(rng) >= spec.jumps->rate) continue;
                double size = spec.jumps->size_lo + (spec.jumps->size_hi - spec.jumps->size_lo) * u01(rng);
                if (spec.jumps->random_sign && u01(rng) < 0.5) size = -size;
                th(j) += size;
                out.jump_times[static_cast<std::size_t>(j)].push_back(t);
                out.jump_sizes[static_cast<std::size_t>(j)].push_back(size);
            }
        }
        out.theta.row(t) = th.transpose();
    }
    for (int j : spec.scaled) {
        out.theta.col(j) *= spec.c;
        for (double& s : out.jump_sizes[static_cast<std::size_t>(j)]) s *= spec.c;
    }
    return out;
}

SimulatedPanel gen_gaussian_panel(const std::vector<MatrixXd>& w_seq, const MatrixXd& theta,
                                  const PanelOptions& opt, std::uint64_t seed) {
    return simulate_panel(w_seq, theta, opt, seed, Family::gaussian, 0.0);
}

SimulatedPanel gen_poisson_panel(const std::vector<MatrixXd>& w_seq, const MatrixXd& theta,
                                 const PanelOptions& opt, std::uint64_t seed, double eta_cap) {
    return simulate_panel(w_seq, theta, opt, seed, Family::poisson, eta_cap);
}

void EdgePathSpec::validate() const {
    const auto p = eta0.size();
    if (p < 1) throw InvalidArgument("EdgePathSpec: eta0 is empty");
    if (s.rows() != p || s.cols() != p) throw InvalidArgument("EdgePathSpec: S must be p x p");
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(s);
    if (!s.isApprox(s.transpose()) && s.norm() > 0.0)
        throw InvalidArgument("EdgePathSpec: S must be symmetric");
    if (es.eigenvalues().minCoeff() < -1e-12) throw InvalidArgument("EdgePathSpec: S must be PSD");
}

DynamicEdges gen_dynamic_edges(const EdgePathSpec& spec, int n_times, int n_nodes, std::uint64_t seed) {
    spec.validate();
    if (n_times < 1 || n_nodes < 2) throw InvalidArgument("gen_dynamic_edges: need T >= 1 and N >= 2");
    const auto p = spec.eta0.size();
    Rng rng = make_rng(seed, "gen_dynamic_edges");
    std::normal_distribution<double> z01;
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(spec.s);
    const MatrixXd ls = es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();

    const auto pairs = static_cast<Eigen::Index>(n_nodes) * n_nodes;
    auto draw_features = [&] {
        MatrixXd g(pairs, p);
        g.col(0).setOnes();
        for (Eigen::Index r = 0; r < pairs; ++r)
            for (Eigen::Index c = 1; c < p; ++c) g(r, c) = z01(rng);
        return g;
    };
    MatrixXd feats = draw_features();

    DynamicEdges out;
    out.eta.resize(n_times, p);
    VectorXd eta = spec.eta0;
    for (int t = 0; t < n_times; ++t) {
        if (t > 0) {
            VectorXd z(p);
            for (Eigen::Index c = 0; c < p; ++c) z(c) = z01(rng);
            eta += ls * z;
            if (spec.time_varying_features) feats = draw_features();
        }
        out.eta.row(t) = eta.transpose();
        const VectorXd logits = feats * eta;
        MatrixXd a = MatrixXd::Zero(n_nodes, n_nodes);
        for (int i = 0; i < n_nodes; ++i)
            for (int j = 0; j < n_nodes; ++j) {
                if (i == j) continue;
                if (u01(rng) < logistic(logits(static_cast<Eigen::Index>(i) * n_nodes + j))) a(i, j) = 1.0;
            }
        graph::Adjacency adj = graph::make_adjacency(std::move(a), true);
        adj.time_index = t;
        out.adjacency.push_back(std::move(adj));
    }
    return out;
}

}  // namespace nssm::sim
