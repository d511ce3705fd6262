#pragma once

#include "nssm/design.hpp"
#include "nssm/graph.hpp"
#include "nssm/panel.hpp"

#include <cstdint>
#include <optional>
#include <variant>
#include <vector>

namespace nssm::sim {

/// Logistic random graph on i.i.d. standard-normal embeddings:
/// logit P(a_ij = 1) = intercept - scale * ||u_i - u_j||.
/// With a target density the intercept is found by bisection on the expected
/// density of the sampled embeddings; without one the intercept is 0.
struct LatentDistance {
    int dim = 2;
    double scale = 1.0;
    std::optional<double> target_density = 0.15;
};

struct Sbm {
    std::vector<int> block_sizes;
    double p_in = 0.3;
    double p_out = 0.02;
};

/// Preferential attachment from a complete seed graph on m_attach + 1 nodes.
struct ScaleFree {
    int m_attach = 2;
};

struct GraphGen {
    std::variant<LatentDistance, Sbm, ScaleFree> kind;
    int n_nodes = 20;
    std::uint64_t seed = 0;
};

struct GeneratedGraph {
    graph::Adjacency adjacency;
    graph::WeightMatrix w;
    MatrixXd embeddings;  ///< latent-distance only
    double intercept = 0.0;
};

[[nodiscard]] GeneratedGraph gen_graph(const GraphGen& g);

/// Latent-distance graphs whose embeddings follow a Gaussian random walk with
/// step sd `drift_sd`. The intercept is fixed from the first embedding draw.
[[nodiscard]] std::vector<GeneratedGraph> gen_latent_drift(int n_nodes, const LatentDistance& kind,
                                                           int n_times, double drift_sd,
                                                           std::uint64_t seed);

struct SparseJumps {
    double rate = 0.02;
    double size_lo = 0.2;
    double size_hi = 0.5;
    /// Coefficients that receive jumps.
    std::vector<int> coords{1};
    /// Draw the jump sign uniformly instead of always positive.
    bool random_sign = false;
};

struct CoeffPathSpec {
    VectorXd init;
    VectorXd rw_sd;
    std::optional<SparseJumps> jumps;
    /// Stability multiplier applied to the `scaled` coefficients.
    double c = 1.0;
    std::vector<int> scaled{1, 2};

    [[nodiscard]] int dim() const { return static_cast<int>(init.size()); }
    void validate() const;
};

struct CoeffPaths {
    MatrixXd theta;                            ///< T x K
    std::vector<std::vector<int>> jump_times;  ///< per coefficient
    std::vector<std::vector<double>> jump_sizes;
};

/// theta_0 = init; theta_t = theta_{t-1} + N(0, diag(rw_sd^2)) + jumps for
/// t >= 1, then the scaled coefficients are multiplied by c.
[[nodiscard]] CoeffPaths gen_coeff_paths(const CoeffPathSpec& spec, int n_times, std::uint64_t seed);

struct PanelOptions {
    design::DesignRecipe recipe;
    double sigma2 = 0.25;
    /// Initial state for rows before the first modelled row (zero if empty).
    VectorXd y0;
    int burn_in = 0;
    /// Covariates per time (N x q); leave empty without covariates.
    std::vector<MatrixXd> z;
    /// Track max_t ||B_t||_op (one power iteration per row).
    bool stability_check = true;
};

struct SimulatedPanel {
    PanelData data;
    MatrixXd innovations;  ///< T x N; rows before the lag order are zero
    double max_op_norm = 0.0;
    bool unstable = false;  ///< some B_t had operator norm above 1
};

/// y_t = X_t theta_t + eps_t with X_t from the recipe, W_t and the lagged
/// rows. Rows 0..p-1 come from a burn-in run at theta_0 and W_0 started at y0.
/// `w_seq` has one entry per row or a single static entry.
[[nodiscard]] SimulatedPanel gen_gaussian_panel(const std::vector<MatrixXd>& w_seq,
                                                const MatrixXd& theta, const PanelOptions& opt,
                                                std::uint64_t seed);

/// Counts y_ti ~ Poisson(exp(eta_ti)), eta_t = X_t theta_t on lagged counts.
/// Throws when some eta exceeds eta_cap.
[[nodiscard]] SimulatedPanel gen_poisson_panel(const std::vector<MatrixXd>& w_seq,
                                               const MatrixXd& theta, const PanelOptions& opt,
                                               std::uint64_t seed, double eta_cap = 30.0);

/// Edge features x_ij = (1, g_ij1, ..., g_ij(p-1)); the g are standard normal,
/// drawn once per ordered pair, or afresh every step when `time_varying`.
struct EdgePathSpec {
    VectorXd eta0;
    MatrixXd s;
    bool time_varying_features = false;
    void validate() const;
};

struct DynamicEdges {
    std::vector<graph::Adjacency> adjacency;
    MatrixXd eta;  ///< T x p
};

/// eta_t random walk with covariance S; a_ij,t ~ Bernoulli(logistic(x_ij' eta_t)).
[[nodiscard]] DynamicEdges gen_dynamic_edges(const EdgePathSpec& spec, int n_times, int n_nodes,
                                             std::uint64_t seed);

}  // namespace nssm::sim
