#pragma once

#include "nssm/design.hpp"
#include "nssm/lgss.hpp"
#include "nssm/panel.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace nssm::gauss {

struct ScalarNoise {
    double sigma2;
};
struct DiagonalNoise {
    VectorXd r;
};
struct FullNoise {
    MatrixXd r;
};
using ObsNoise = std::variant<ScalarNoise, DiagonalNoise, FullNoise>;

/// Gaussian edge observations a_t = L psi_t + zeta_t, zeta_t ~ N(0, U), with a
/// random-walk edge state psi_t.
struct EdgeSubmodel {
    MatrixXd loading;  ///< L, M x K_e
    MatrixXd u;        ///< M x M positive definite
    lgss::StateNoiseSpec noise;
    VectorXd m0;
    MatrixXd p0;
};

struct GaussianSpec {
    design::DesignRecipe recipe;
    lgss::StateNoiseSpec state_noise;
    ObsNoise obs_noise = ScalarNoise{1.0};
    VectorXd m0;
    MatrixXd p0;
    std::optional<EdgeSubmodel> edge;
    NetworkPolicy network_policy = NetworkPolicy::carry_forward;

    /// m0 = 0, P0 = p0_scale * I, R = sigma2 * I.
    [[nodiscard]] static GaussianSpec make(design::DesignRecipe recipe, lgss::StateNoiseSpec noise,
                                           double sigma2, double p0_scale = 10.0);

    [[nodiscard]] int state_dim() const { return recipe.n_columns(); }
    void validate(int n_nodes) const;
};

struct GaussianForecast {
    int horizon = 1;
    VectorXd mean;
    MatrixXd cov;
    NetworkPolicy network_policy = NetworkPolicy::carry_forward;
};

/// Regressors for steps after the forecast origin, indexed by horizon - 1.
struct FutureInputs {
    std::vector<MatrixXd> w;
    std::vector<MatrixXd> z;
};

/// Observation block for one time step under the model's noise law.
[[nodiscard]] lgss::ObsBlock node_block(const MatrixXd& x, const VectorXd& y, const ObsNoise& noise);

/// Kalman filter over t = p..T-1; step k has time_index p + k.
[[nodiscard]] lgss::FilterRun fit_gaussian(const PanelData& data, const GaussianSpec& spec);

/// Filtered belief at a forecast origin (the prior when origin < p).
[[nodiscard]] lgss::Belief belief_at(const lgss::FilterRun& run, const GaussianSpec& spec, int origin);

/// Iterated h-step predictive distribution from `origin`.
///
/// Means chain through spillover matrices built from the predicted
/// coefficient means. Covariances come from a joint linearization over the
/// coefficient state and the last p predicted panel rows; h = 1 is exact.
[[nodiscard]] std::vector<GaussianForecast> forecast_gaussian(const lgss::FilterRun& run,
                                                              const GaussianSpec& spec,
                                                              const PanelData& data, int origin,
                                                              int horizon, NetworkPolicy policy,
                                                              const FutureInputs& future = {});

/// Monte-Carlo reference for forecast_gaussian: sample coefficient paths and
/// innovations, return sample mean and covariance per horizon.
[[nodiscard]] std::vector<GaussianForecast> forecast_gaussian_mc(
    const lgss::FilterRun& run, const GaussianSpec& spec, const PanelData& data, int origin,
    int horizon, NetworkPolicy policy, int draws, std::uint64_t seed,
    const FutureInputs& future = {});

/// One-step forecast with w_hat substituted in the network-lag columns only;
/// the coefficient prediction is left as filtered under the original W.
[[nodiscard]] GaussianForecast plug_in_forecast(const lgss::FilterRun& run, const GaussianSpec& spec,
                                                const PanelData& data, int origin,
                                                const MatrixXd& w_hat);

struct HyperCandidate {
    lgss::StateNoiseSpec state_noise;
    ObsNoise obs_noise;
    std::string label;
};

struct SelectionRow {
    std::string label;
    bool valid = false;
    double loglik = 0.0;
    double noise_trace = 0.0;
    std::string message;
};

struct Selection {
    GaussianSpec spec;
    int chosen = -1;
    std::vector<SelectionRow> table;
};

/// Grid search over (state-noise, obs-noise) candidates by total innovations
/// log-likelihood; ties go to the smallest baseline state-noise trace.
[[nodiscard]] Selection select_hyperparams(const PanelData& data, const GaussianSpec& base_spec,
                                           const std::vector<HyperCandidate>& grid);

/// Joint node/edge filter over (theta, psi): edge block [0 | L] first, then
/// node block [H_t | 0]. `edge_obs` holds one edge vector per panel row.
[[nodiscard]] lgss::FilterRun fit_joint_node_edge(const PanelData& data, const MatrixXd& edge_obs,
                                                  const GaussianSpec& spec);

}  // namespace nssm::gauss
