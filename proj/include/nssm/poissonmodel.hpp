#pragma once

#include "nssm/design.hpp"
#include "nssm/lgss.hpp"
#include "nssm/panel.hpp"

#include <cstdint>
#include <vector>

namespace nssm::poisson {

using CountMatrix = Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic>;

/// Counts y_ti ~ Poisson(exp(eta_ti)), eta_t = X_t theta_t, with the design
/// built from lagged counts and a random-walk coefficient state.
struct PoissonSpec {
    design::DesignRecipe recipe;
    lgss::StateNoiseSpec state_noise;
    VectorXd m0;
    MatrixXd p0;

    [[nodiscard]] static PoissonSpec make(design::DesignRecipe recipe, lgss::StateNoiseSpec noise,
                                          double p0_scale = 10.0);
    [[nodiscard]] int state_dim() const { return recipe.n_columns(); }
    void validate() const;
};

/// Forecast-time damping and caps. Never applied while filtering.
struct StabilizerConfig {
    double phi = 0.98;
    double eta_max = 12.0;
    double lambda_max = 1e5;
    bool enabled = true;

    /// Raw simulation: no damping, no intensity cap, eta capped at 20.
    [[nodiscard]] static StabilizerConfig disabled();
    [[nodiscard]] double effective_phi() const { return enabled ? phi : 1.0; }
    [[nodiscard]] double effective_eta_max() const { return enabled ? eta_max : 20.0; }
    void validate() const;
};

struct ForecastEnsemble {
    int horizon = 1;
    MatrixXd intensities;  ///< S x N
    CountMatrix counts;    ///< S x N
    StabilizerConfig stabilizer;
    std::uint64_t seed = 0;

    [[nodiscard]] int n_draws() const { return static_cast<int>(intensities.rows()); }
    [[nodiscard]] int n_nodes() const { return static_cast<int>(intensities.cols()); }
};

struct EnsembleStats {
    VectorXd mean_intensity;
    VectorXd median_intensity;
    VectorXd mean_count;
    std::vector<double> levels;
    MatrixXd count_quantiles;  ///< levels x N, type-7
    double explosion_prob = 0.0;
};

inline constexpr double kExplosionThreshold = 1e6;

/// Throws unless every entry is a finite nonnegative integer.
void check_counts(const MatrixXd& y);

/// Linearized log-link filter. Each step updates on the working response at
/// the predicted mean, then once more from the prediction re-linearized at the
/// first posterior mean. step_loglik holds the plug-in Poisson log-likelihood
/// at exp(X_t m_{t|t-1}).
[[nodiscard]] lgss::FilterRun fit_poisson(const PanelData& data, const PoissonSpec& spec);

[[nodiscard]] lgss::Belief belief_at(const lgss::FilterRun& run, const PoissonSpec& spec, int origin);

/// Plug-in one-step intensities exp(X_{t+1} m_t) with the network carried forward.
[[nodiscard]] VectorXd plug_in_intensity(const lgss::FilterRun& run, const PoissonSpec& spec,
                                         const PanelData& data, int origin);

/// Monte-Carlo h-step predictive ensembles from `origin`. Draw s uses a
/// substream derived from (seed, s), so results do not depend on `threads`.
[[nodiscard]] std::vector<ForecastEnsemble> mc_forecast(
    const lgss::FilterRun& run, const PoissonSpec& spec, const PanelData& data, int origin,
    int horizon, int draws, const StabilizerConfig& stab, std::uint64_t seed,
    NetworkPolicy policy = NetworkPolicy::carry_forward, int threads = 1);

[[nodiscard]] EnsembleStats ensemble_stats(const ForecastEnsemble& ens,
                                           std::vector<double> levels = {0.05, 0.5, 0.95},
                                           double explosion_threshold = kExplosionThreshold);

}  // namespace nssm::poisson
