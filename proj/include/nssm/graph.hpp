#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace nssm::graph {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Raw (possibly weighted) adjacency. Zero diagonal, finite nonnegative entries.
struct Adjacency {
    MatrixXd entries;
    bool directed = true;
    std::optional<int> time_index;

    [[nodiscard]] int n_nodes() const { return static_cast<int>(entries.rows()); }

    /// Throws InvalidArgument when the invariants do not hold.
    void validate() const;
};

enum class Provenance { observed, row_normalized, perturbed, simulated };

[[nodiscard]] std::string to_string(Provenance p);

/// Network operator W. Rows of a row_normalized matrix sum to 0 or 1.
struct WeightMatrix {
    MatrixXd w;
    Provenance provenance = Provenance::observed;
    /// Free-form tag for perturbed matrices, e.g. "edge_delete(0.1)".
    std::string perturbation;

    [[nodiscard]] int n_nodes() const { return static_cast<int>(w.rows()); }
    void validate() const;
};

/// Community assignment with labels 0..C-1; every community is nonempty.
class Partition {
public:
    explicit Partition(std::vector<int> assignment);

    [[nodiscard]] int n_nodes() const { return static_cast<int>(assignment_.size()); }
    [[nodiscard]] int n_communities() const { return static_cast<int>(sizes_.size()); }
    [[nodiscard]] const std::vector<int>& assignment() const { return assignment_; }
    [[nodiscard]] const std::vector<int>& sizes() const { return sizes_; }

    /// Community-averaging operator (C x N), rows average over members.
    [[nodiscard]] MatrixXd averaging_operator() const;

private:
    std::vector<int> assignment_;
    std::vector<int> sizes_;
};

struct QuotientMap {
    MatrixXd omega;
    double delta = 0.0;
};

struct InvariantVector {
    VectorXd pi;
    double residual = 0.0;  ///< ||pi'W - pi'||_inf at return
    int iterations = 0;
};

enum class PowerStatus { converged, converged_to_zero, dense_fallback };

struct SpectralEstimate {
    double value = 0.0;
    int iterations = 0;
    PowerStatus status = PowerStatus::converged;
};

[[nodiscard]] Adjacency make_adjacency(MatrixXd entries, bool directed = true);

/// w_ij = a_ij / n_i for rows with positive degree n_i; zero-degree rows stay zero.
[[nodiscard]] WeightMatrix row_normalize(const Adjacency& a);

/// Largest singular value via power iteration on M'M from the normalized
/// all-ones vector. Throws NonConvergenceError after max_iter iterations.
[[nodiscard]] double operator_norm(const MatrixXd& m, double tol = 1e-12, int max_iter = 100000);

/// Modulus of the dominant eigenvalue. Power iteration on M, then on M^2
/// (handles +-lambda pairs), then a dense Hessenberg-QR solve for complex
/// dominant pairs.
[[nodiscard]] SpectralEstimate spectral_radius(const MatrixXd& m, double tol = 1e-12,
                                               int max_iter = 20000);

/// Induced infinity norm (max absolute row sum).
[[nodiscard]] double inf_norm(const MatrixXd& m);

/// Invariant probability vector of a row-stochastic W by power iteration on W'
/// from the uniform vector.
[[nodiscard]] InvariantVector invariant_vector(const WeightMatrix& w, double tol = 1e-12,
                                               int max_iter = 200000);

struct EdgeDelete {
    double frac;
};
struct MixUniform {
    double alpha;
};
struct PermuteLabels {};
struct RewireDegseq {
    int iters;
};
using Perturbation = std::variant<EdgeDelete, MixUniform, PermuteLabels, RewireDegseq>;

[[nodiscard]] std::string describe(const Perturbation& kind);

/// Apply a perturbation and re-row-normalize. Deterministic given rng_seed.
[[nodiscard]] WeightMatrix perturb(const WeightMatrix& w, const Perturbation& kind,
                                   std::uint64_t rng_seed);

/// The permutation used by perturb(PermuteLabels) for the same seed;
/// perm[i] is the new label of node i.
[[nodiscard]] std::vector<int> label_permutation(int n, std::uint64_t rng_seed);

[[nodiscard]] QuotientMap quotient_operator(const WeightMatrix& w, const Partition& part);

/// Entrywise balance: community-average of column j over K_c equals
/// omega_cc' / |K_c'| for every c, c' and j in K_c'.
[[nodiscard]] bool balance_holds(const WeightMatrix& w, const Partition& part, double tol = 1e-12);

/// y -> W^r y by repeated products.
[[nodiscard]] VectorXd apply_power(const MatrixXd& w, const VectorXd& y, int r);

[[nodiscard]] MatrixXd matrix_power(const MatrixXd& w, int r);

}  // namespace nssm::graph
