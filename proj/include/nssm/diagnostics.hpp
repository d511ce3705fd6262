#pragma once

#include "nssm/graph.hpp"

#include <optional>
#include <vector>

namespace nssm::diag {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct StabilityRow {
    int t = 0;
    double op_norm = 0.0;
    double spectral_radius = 0.0;
    double inf_norm = 0.0;
    double proxy = 0.0;  ///< |beta1| + |beta2|
};

struct StabilityReport {
    std::vector<StabilityRow> rows;
    double max_op_norm = 0.0;
    double max_spectral_radius = 0.0;
    double max_inf_norm = 0.0;
    double max_proxy = 0.0;
    bool contraction = false;  ///< max_t ||B_t||_op < 1
};

/// Norms of B_t = beta1_t W_t + beta2_t I for every t. `w_seq` has one entry
/// per time point or a single static entry.
[[nodiscard]] StabilityReport stability_report(const VectorXd& beta1, const VectorXd& beta2,
                                               const std::vector<MatrixXd>& w_seq);

struct HopDecomp {
    int anchor = 0;
    int horizon = 1;
    VectorXd c;  ///< c[r], r = 0..h
};

/// Coefficients of prod_{k=1..h} (beta2_{t+k} + beta1_{t+k} x), built one
/// factor at a time.
[[nodiscard]] HopDecomp hop_coefficients(const VectorXd& beta1, const VectorXd& beta2, int t, int h);

/// Same coefficients by enumerating all subsets of {1..h}. Exponential in h.
[[nodiscard]] VectorXd hop_coefficients_by_subsets(const VectorXd& beta1, const VectorXd& beta2,
                                                   int t, int h);

/// B_{t+h} ... B_{t+1} for a static W.
[[nodiscard]] MatrixXd propagation_matrix(const VectorXd& beta1, const VectorXd& beta2,
                                          const MatrixXd& w, int t, int h);

struct IrfResult {
    VectorXd total;
    MatrixXd contributions;  ///< N x (h + 1); column r is c_r W^r e_j
};

[[nodiscard]] IrfResult irf(const MatrixXd& w, const HopDecomp& decomp, int shock_node);
/// Throws Unsupported unless every W in the sequence is identical.
[[nodiscard]] IrfResult irf(const std::vector<MatrixXd>& w_seq, const HopDecomp& decomp, int shock_node);

/// pi_j * prod_{k=1..h} (beta1_{t+k} + beta2_{t+k}).
[[nodiscard]] double macro_irf(const graph::InvariantVector& pi, const VectorXd& beta1,
                               const VectorXd& beta2, int t, int h, int shock_node);

/// M^{h-1} (sum_k |beta1_{t+k}|) delta_W with M = max_k (|beta1| C_W + |beta2|).
[[nodiscard]] double counterfactual_bound(const VectorXd& beta1, const VectorXd& beta2, double c_w,
                                          double delta_w, int t, int h);

/// ||Phi(W) - Phi(W_cf)||_op, the quantity counterfactual_bound controls.
[[nodiscard]] double counterfactual_gap(const VectorXd& beta1, const VectorXd& beta2,
                                        const MatrixXd& w, const MatrixXd& w_cf, int t, int h);

/// Error-propagation bound for estimated coefficients and network:
/// max(M, M_hat)^{h-1} sum_k (C_W |db1| + |db2| + |b1_hat| delta_W).
[[nodiscard]] double irf_error_bound(const VectorXd& beta1, const VectorXd& beta2,
                                     const VectorXd& beta1_hat, const VectorXd& beta2_hat,
                                     double c_w, double delta_w, int t, int h);

/// ybar_t = beta0_t + (beta1_t + beta2_t) ybar_{t-1} + zbar_t + ebar_t for
/// t >= 1, ybar_0 given. Empty zbar / ebar are treated as zero.
[[nodiscard]] VectorXd aggregate_recursion(const VectorXd& beta0, const VectorXd& beta1,
                                           const VectorXd& beta2, const VectorXd& zbar, double ybar0,
                                           const VectorXd& ebar = {});

struct MesoStep {
    int t = 0;
    double delta = 0.0;
    double remainder_norm = 0.0;  ///< ||beta1 (PW - Omega P) y_{t-1}||
    double remainder_bound = 0.0; ///< |beta1| delta ||y_{t-1}||
    double residual = 0.0;        ///< reduced-recursion residual given realized innovations
};

struct MesoReduction {
    std::vector<VectorXd> reduced;  ///< community averages P y_t
    std::vector<MatrixXd> omega;
    std::vector<MesoStep> steps;
};

/// Community-level recursion for y_t = beta0 1 + beta1 W_t y_{t-1} + beta2 y_{t-1}
/// + exog_t + eps_t. `exog` and `innovations` are T x N (empty means zero).
/// The residual omits the remainder, so it is zero under exact balance.
[[nodiscard]] MesoReduction meso_reduce(const std::vector<MatrixXd>& w_seq,
                                        const graph::Partition& part, const MatrixXd& y,
                                        const VectorXd& beta0, const VectorXd& beta1,
                                        const VectorXd& beta2, const MatrixXd& exog = {},
                                        const MatrixXd& innovations = {});

struct BreakSet {
    std::vector<std::vector<int>> activations;  ///< per coefficient
    VectorXd thresholds;
};

/// s_jt = 1{|theta_{j,t-1} - theta_{j,t-2}| > d_j} for t = 2..T, rows of
/// `theta_hat` indexed by time 0..T-1.
[[nodiscard]] BreakSet detect_breaks(const MatrixXd& theta_hat, const VectorXd& d);

/// d_j = factor * median |theta_{j,t} - theta_{j,t-1}|.
[[nodiscard]] VectorXd data_scaled_threshold(const MatrixXd& theta_hat, double factor = 4.0);

/// c * sqrt(log T / T).
[[nodiscard]] double rate_threshold(int n_times, double c);

/// B1^2 delta_W^2 ||y||^2.
[[nodiscard]] double sensitivity_bound(double b1, double delta_w, double y_norm_sq);

}  // namespace nssm::diag
