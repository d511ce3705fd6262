#include "nssm/graph.hpp"

#include "nssm/errors.hpp"
#include "nssm/rng.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace nssm::graph {

namespace {

constexpr double kRowSumTol = 1e-12;

MatrixXd normalize_rows(const MatrixXd& a) {
    MatrixXd w = MatrixXd::Zero(a.rows(), a.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
        const double n_i = a.row(i).sum();
        if (n_i > 0.0) w.row(i) = a.row(i) / n_i;
    }
    return w;
}

void require_square(const MatrixXd& m, const char* what) {
    if (m.rows() != m.cols()) {
        std::ostringstream os;
        os << what << ": expected a square matrix, got " << m.rows() << "x" << m.cols();
        throw InvalidArgument(os.str());
    }
}

// Deterministic start with no special structure. The all-ones vector is an
// eigenvector of every beta1 W + beta2 I with row-stochastic W, so starting
// there reports |beta1 + beta2| instead of the dominant modulus.
VectorXd generic_start(Eigen::Index n) {
    VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = std::cos(1.0 + static_cast<double>(i));
    return v.normalized();
}

}  // namespace

std::string to_string(Provenance p) {
    switch (p) {
        case Provenance::observed: return "observed";
        case Provenance::row_normalized: return "row_normalized";
        case Provenance::perturbed: return "perturbed";
        case Provenance::simulated: return "simulated";
    }
    return "unknown";
}

void Adjacency::validate() const {
    require_square(entries, "Adjacency");
    if (entries.rows() == 0) throw InvalidArgument("Adjacency: n_nodes must be positive");
    for (Eigen::Index i = 0; i < entries.rows(); ++i) {
        if (entries(i, i) != 0.0) throw InvalidArgument("Adjacency: nonzero diagonal entry");
        for (Eigen::Index j = 0; j < entries.cols(); ++j) {
            const double a = entries(i, j);
            if (!std::isfinite(a) || a < 0.0)
                throw InvalidArgument("Adjacency: entries must be finite and nonnegative");
        }
    }
}

void WeightMatrix::validate() const {
    require_square(w, "WeightMatrix");
    if (w.rows() == 0) throw InvalidArgument("WeightMatrix: n_nodes must be positive");
    if (!w.allFinite()) throw InvalidArgument("WeightMatrix: non-finite entry");
    if ((w.array() < 0.0).any()) throw InvalidArgument("WeightMatrix: negative entry");
    if (provenance == Provenance::row_normalized) {
        for (Eigen::Index i = 0; i < w.rows(); ++i) {
            const double s = w.row(i).sum();
            if (s != 0.0 && std::abs(s - 1.0) > kRowSumTol)
                throw InvalidArgument("WeightMatrix: row sum outside {0} u [1-eps, 1+eps]");
        }
    }
}

Partition::Partition(std::vector<int> assignment) : assignment_(std::move(assignment)) {
    if (assignment_.empty()) throw InvalidArgument("Partition: empty assignment");
    const int max_label = *std::max_element(assignment_.begin(), assignment_.end());
    if (*std::min_element(assignment_.begin(), assignment_.end()) < 0)
        throw InvalidArgument("Partition: negative community label");
    sizes_.assign(static_cast<std::size_t>(max_label) + 1, 0);
    for (int c : assignment_) ++sizes_[static_cast<std::size_t>(c)];
    for (std::size_t c = 0; c < sizes_.size(); ++c) {
        if (sizes_[c] == 0)
            throw InvalidArgument("Partition: community " + std::to_string(c) + " is empty");
    }
}

MatrixXd Partition::averaging_operator() const {
    MatrixXd pi = MatrixXd::Zero(n_communities(), n_nodes());
    for (int i = 0; i < n_nodes(); ++i) {
        const int c = assignment_[static_cast<std::size_t>(i)];
        pi(c, i) = 1.0 / sizes_[static_cast<std::size_t>(c)];
    }
    return pi;
}

Adjacency make_adjacency(MatrixXd entries, bool directed) {
    Adjacency a{std::move(entries), directed, std::nullopt};
    a.validate();
    return a;
}

WeightMatrix row_normalize(const Adjacency& a) {
    a.validate();
    return WeightMatrix{normalize_rows(a.entries), Provenance::row_normalized, {}};
}

double operator_norm(const MatrixXd& m, double tol, int max_iter) {
    if (!(tol > 0.0)) throw InvalidArgument("operator_norm: tol must be positive");
    if (!m.allFinite()) throw InvalidArgument("operator_norm: non-finite entry");
    if (m.size() == 0 || m.cwiseAbs().maxCoeff() == 0.0) return 0.0;

    VectorXd v = generic_start(m.cols());
    if ((m * v).norm() == 0.0) v = VectorXd::Ones(m.cols()).normalized();

    double lambda = 0.0;
    for (int it = 1; it <= max_iter; ++it) {
        const VectorXd w = m.transpose() * (m * v);
        lambda = v.dot(w);
        const double wn = w.norm();
        if (wn == 0.0) return 0.0;
        const double residual = (w - lambda * v).norm();
        v = w / wn;
        if (residual <= tol * lambda) return std::sqrt(lambda);
    }
    throw NonConvergenceError("operator_norm: power iteration did not converge",
                              std::sqrt(std::max(lambda, 0.0)), max_iter);
}

SpectralEstimate spectral_radius(const MatrixXd& m, double tol, int max_iter) {
    require_square(m, "spectral_radius");
    if (!(tol > 0.0)) throw InvalidArgument("spectral_radius: tol must be positive");
    if (!m.allFinite()) throw InvalidArgument("spectral_radius: non-finite entry");
    const Eigen::Index n = m.rows();
    if (n == 0 || m.cwiseAbs().maxCoeff() == 0.0) return {0.0, 0, PowerStatus::converged_to_zero};

    // Power iteration on `op` applied `power` times per step; returns the
    // dominant modulus of op^power, or nullopt when the residual test fails.
    auto run = [&](int power, int budget, int& used) -> std::optional<double> {
        bool hit_zero_once = false;
        for (VectorXd x : {generic_start(n), VectorXd(VectorXd::Ones(n).normalized())}) {
            bool annihilated = false;
            for (int it = 1; it <= budget; ++it) {
                ++used;
                VectorXd y = x;
                for (int k = 0; k < power; ++k) y = m * y;
                const double yn = y.norm();
                if (yn == 0.0) {
                    annihilated = true;
                    break;
                }
                const double lambda = x.dot(y);
                const double residual = (y - lambda * x).norm();
                x = y / yn;
                if (residual <= tol * std::abs(lambda)) return std::abs(lambda);
            }
            if (!annihilated) return std::nullopt;
            if (hit_zero_once) return 0.0;
            hit_zero_once = true;
        }
        return 0.0;
    };

    int used = 0;
    const int budget = std::max(1, max_iter / 2);
    if (auto r = run(1, budget, used)) {
        return {*r, used, *r == 0.0 ? PowerStatus::converged_to_zero : PowerStatus::converged};
    }
    if (auto r = run(2, budget, used)) {
        const double v = std::sqrt(*r);
        return {v, used, v == 0.0 ? PowerStatus::converged_to_zero : PowerStatus::converged};
    }
    Eigen::EigenSolver<MatrixXd> es(m, /*computeEigenvectors=*/false);
    if (es.info() != Eigen::Success)
        throw NonConvergenceError("spectral_radius: dense eigen fallback failed", 0.0, used);
    return {es.eigenvalues().cwiseAbs().maxCoeff(), used, PowerStatus::dense_fallback};
}

double inf_norm(const MatrixXd& m) {
    if (m.size() == 0) return 0.0;
    return m.cwiseAbs().rowwise().sum().maxCoeff();
}

InvariantVector invariant_vector(const WeightMatrix& w, double tol, int max_iter) {
    w.validate();
    const Eigen::Index n = w.w.rows();
    for (Eigen::Index i = 0; i < n; ++i) {
        if (std::abs(w.w.row(i).sum() - 1.0) > 1e-9)
            throw InvalidArgument("invariant_vector: W must be row-stochastic (row " +
                                  std::to_string(i) + " does not sum to 1)");
    }
    const MatrixXd wt = w.w.transpose();
    VectorXd pi = VectorXd::Constant(n, 1.0 / static_cast<double>(n));
    double residual = 0.0;
    for (int it = 0; it <= max_iter; ++it) {
        VectorXd next = wt * pi;
        residual = (next - pi).cwiseAbs().maxCoeff();
        if (residual <= tol) return {pi, residual, it};
        pi = next / next.sum();
    }
    throw NonConvergenceError(
        "invariant_vector: power iteration did not converge (periodic chain?); "
        "apply damping, e.g. W <- (I + W) / 2, which has the same invariant vector",
        residual, max_iter);
}

std::string describe(const Perturbation& kind) {
    std::ostringstream os;
    std::visit(
        [&](const auto& k) {
            using K = std::decay_t<decltype(k)>;
            if constexpr (std::is_same_v<K, EdgeDelete>) os << "edge_delete(" << k.frac << ")";
            else if constexpr (std::is_same_v<K, MixUniform>) os << "mix_uniform(" << k.alpha << ")";
            else if constexpr (std::is_same_v<K, PermuteLabels>) os << "permute_labels";
            else os << "rewire_degseq(" << k.iters << ")";
        },
        kind);
    return os.str();
}

std::vector<int> label_permutation(int n, std::uint64_t rng_seed) {
    std::vector<int> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    Rng rng = make_rng(rng_seed, "perturb.permute_labels");
    std::shuffle(perm.begin(), perm.end(), rng);
    return perm;
}

namespace {

MatrixXd edge_delete(const MatrixXd& w, double frac, std::uint64_t seed) {
    if (!(frac >= 0.0 && frac < 1.0)) throw InvalidArgument("edge_delete: frac must be in [0,1)");
    std::vector<std::pair<Eigen::Index, Eigen::Index>> edges;
    for (Eigen::Index i = 0; i < w.rows(); ++i)
        for (Eigen::Index j = 0; j < w.cols(); ++j)
            if (i != j && w(i, j) > 0.0) edges.emplace_back(i, j);
    Rng rng = make_rng(seed, "perturb.edge_delete");
    std::shuffle(edges.begin(), edges.end(), rng);
    const auto n_remove =
        static_cast<std::size_t>(std::floor(frac * static_cast<double>(edges.size())));
    MatrixXd out = w;
    for (std::size_t k = 0; k < n_remove; ++k) out(edges[k].first, edges[k].second) = 0.0;
    return out;
}

MatrixXd mix_uniform(const MatrixXd& w, double alpha) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw InvalidArgument("mix_uniform: alpha must be in [0,1]");
    const Eigen::Index n = w.rows();
    if (alpha == 0.0) return w;
    if (n < 2) throw InvalidArgument("mix_uniform: needs at least two nodes");
    MatrixXd u = MatrixXd::Constant(n, n, 1.0 / static_cast<double>(n - 1));
    u.diagonal().setZero();
    return (1.0 - alpha) * w + alpha * u;
}

MatrixXd rewire(const MatrixXd& w, int iters, std::uint64_t seed) {
    if (iters < 0) throw InvalidArgument("rewire_degseq: iters must be nonnegative");
    struct Edge {
        Eigen::Index src, dst;
        double weight;
    };
    std::vector<Edge> edges;
    for (Eigen::Index i = 0; i < w.rows(); ++i)
        for (Eigen::Index j = 0; j < w.cols(); ++j)
            if (i != j && w(i, j) > 0.0) edges.push_back({i, j, w(i, j)});
    MatrixXd out = w;
    if (iters == 0) return out;
    if (edges.size() < 2) throw InvalidArgument("rewire_degseq: infeasible, fewer than two edges");

    Rng rng = make_rng(seed, "perturb.rewire_degseq");
    std::uniform_int_distribution<std::size_t> pick(0, edges.size() - 1);
    int done = 0;
    long failed = 0;
    const long max_failed = 10L * iters;
    while (done < iters) {
        const std::size_t e1 = pick(rng);
        const std::size_t e2 = pick(rng);
        Edge& x = edges[e1];
        Edge& y = edges[e2];
        const bool ok = e1 != e2 && x.src != y.src && x.dst != y.dst && x.src != y.dst &&
                        y.src != x.dst && out(x.src, y.dst) == 0.0 && out(y.src, x.dst) == 0.0;
        if (!ok) {
            if (++failed > max_failed)
                throw InvalidArgument("rewire_degseq: infeasible, " + std::to_string(failed) +
                                      " failed swap attempts");
            continue;
        }
        out(x.src, x.dst) = 0.0;
        out(y.src, y.dst) = 0.0;
        out(x.src, y.dst) = x.weight;
        out(y.src, x.dst) = y.weight;
        std::swap(x.dst, y.dst);
        ++done;
    }
    return out;
}

}  // namespace

WeightMatrix perturb(const WeightMatrix& w, const Perturbation& kind, std::uint64_t rng_seed) {
    w.validate();
    MatrixXd raw = std::visit(
        [&](const auto& k) -> MatrixXd {
            using K = std::decay_t<decltype(k)>;
            if constexpr (std::is_same_v<K, EdgeDelete>) {
                return edge_delete(w.w, k.frac, rng_seed);
            } else if constexpr (std::is_same_v<K, MixUniform>) {
                return mix_uniform(w.w, k.alpha);
            } else if constexpr (std::is_same_v<K, PermuteLabels>) {
                const auto perm = label_permutation(w.n_nodes(), rng_seed);
                MatrixXd out(w.w.rows(), w.w.cols());
                for (Eigen::Index i = 0; i < w.w.rows(); ++i)
                    for (Eigen::Index j = 0; j < w.w.cols(); ++j)
                        out(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]) =
                            w.w(i, j);
                return out;
            } else {
                return rewire(w.w, k.iters, rng_seed);
            }
        },
        kind);
    return WeightMatrix{normalize_rows(raw), Provenance::perturbed, describe(kind)};
}

QuotientMap quotient_operator(const WeightMatrix& w, const Partition& part) {
    if (part.n_nodes() != w.n_nodes())
        throw InvalidArgument("quotient_operator: partition size does not match W");
    const int c = part.n_communities();
    MatrixXd omega = MatrixXd::Zero(c, c);
    const auto& lab = part.assignment();
    for (int i = 0; i < w.n_nodes(); ++i)
        for (int j = 0; j < w.n_nodes(); ++j)
            omega(lab[static_cast<std::size_t>(i)], lab[static_cast<std::size_t>(j)]) += w.w(i, j);
    for (int a = 0; a < c; ++a) omega.row(a) /= part.sizes()[static_cast<std::size_t>(a)];
    const MatrixXd pi = part.averaging_operator();
    const MatrixXd defect = pi * w.w - omega * pi;
    return QuotientMap{omega, operator_norm(defect)};
}

bool balance_holds(const WeightMatrix& w, const Partition& part, double tol) {
    const QuotientMap q = quotient_operator(w, part);
    const auto& lab = part.assignment();
    const auto& sizes = part.sizes();
    for (int c = 0; c < part.n_communities(); ++c) {
        for (int j = 0; j < w.n_nodes(); ++j) {
            double avg = 0.0;
            for (int i = 0; i < w.n_nodes(); ++i)
                if (lab[static_cast<std::size_t>(i)] == c) avg += w.w(i, j);
            avg /= sizes[static_cast<std::size_t>(c)];
            const int cj = lab[static_cast<std::size_t>(j)];
            if (std::abs(avg - q.omega(c, cj) / sizes[static_cast<std::size_t>(cj)]) > tol) return false;
        }
    }
    return true;
}

VectorXd apply_power(const MatrixXd& w, const VectorXd& y, int r) {
    if (r < 0) throw InvalidArgument("apply_power: negative power");
    VectorXd out = y;
    for (int k = 0; k < r; ++k) out = w * out;
    return out;
}

MatrixXd matrix_power(const MatrixXd& w, int r) {
    require_square(w, "matrix_power");
    if (r < 0) throw InvalidArgument("matrix_power: negative power");
    MatrixXd out = MatrixXd::Identity(w.rows(), w.cols());
    for (int k = 0; k < r; ++k) out = w * out;
    return out;
}

}  // namespace nssm::graph
