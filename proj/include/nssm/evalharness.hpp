#pragma once

#include "nssm/gaussmodel.hpp"
#include "nssm/graph.hpp"
#include "nssm/panel.hpp"
#include "nssm/poissonmodel.hpp"

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

namespace nssm::eval {

enum class ScoreKind { mae, mse, gaussian_lpd, poisson_ls, preq_mc_ls, coverage, pit };

[[nodiscard]] std::string to_string(ScoreKind k);
[[nodiscard]] ScoreKind parse_score_kind(const std::string& s);

struct GaussianPredictive {
    VectorXd mean;
    MatrixXd cov;
};

/// Plug-in Poisson intensities (one per node).
struct PoissonPredictive {
    VectorXd lambda;
};

using Predictive = std::variant<GaussianPredictive, PoissonPredictive, poisson::ForecastEnsemble>;

/// Point forecast: Gaussian mean, plug-in intensity, or mean ensemble intensity.
[[nodiscard]] VectorXd point_forecast(const Predictive& pred);

struct ScoreValue {
    double value = 0.0;
    /// The outcome had zero probability under the predictive (value is -inf).
    bool zero_probability = false;
};

/// mae and mse average over nodes; gaussian_lpd is the joint normal log
/// density; poisson_ls sums log pmfs at the plug-in intensities (the mean
/// intensity for ensembles); preq_mc_ls is log((1/S) sum_s prod_i pmf).
[[nodiscard]] ScoreValue score(ScoreKind kind, const Predictive& pred, const VectorXd& actual);

struct CoverageResult {
    std::vector<bool> covered;
    VectorXd lower;
    VectorXd upper;
    VectorXd pit;
};

/// Equal-tailed per-node intervals at `level` and PIT values. Count
/// predictives use the randomized PIT F(y-1) + V (F(y) - F(y-1)) with V drawn
/// from `seed`; ensembles use the mixture CDF and count-draw quantiles.
[[nodiscard]] CoverageResult coverage_and_pit(const Predictive& pred, const VectorXd& actual,
                                              double level, std::uint64_t seed);

struct Interval {
    double lo = 0.0;
    double hi = 0.0;
    double estimate = 0.0;
};

/// Percentile CI for the mean from a circular moving-block bootstrap.
[[nodiscard]] Interval block_bootstrap_ci(const VectorXd& deltas, int block_len, int replicates,
                                          std::uint64_t seed, double level = 0.95);

struct ChiSquareTest {
    std::vector<int> counts;
    double statistic = 0.0;
    double p_value = 1.0;
};

/// Equal-width histogram of PIT values on [0, 1] and Pearson chi-square test
/// of uniformity.
[[nodiscard]] ChiSquareTest pit_uniformity(const std::vector<double>& pit, int bins = 10);

struct TailMetrics {
    double explosion_prob = 0.0;
    double median_abs_err = 0.0;
    double trimmed_mae = 0.0;
    double mae = 0.0;
};

/// Explosion probability averaged over ensembles; absolute errors of mean
/// intensities pooled over ensembles and nodes.
[[nodiscard]] TailMetrics tail_metrics(const std::vector<poisson::ForecastEnsemble>& ensembles,
                                       const std::vector<VectorXd>& actuals, double trim = 0.05,
                                       double explosion_threshold = poisson::kExplosionThreshold);

/// A model evaluated by rolling origin. fit() sees the full panel once;
/// forecast() must only use information up to `origin` (filters are causal,
/// so a full-sample pass read at the origin qualifies).
class ForecastModel {
public:
    virtual ~ForecastModel() = default;
    [[nodiscard]] virtual std::string name() const = 0;
    virtual void fit(const PanelData& data) = 0;
    /// Predictives for horizons 1..max_h.
    [[nodiscard]] virtual std::vector<Predictive> forecast(const PanelData& data, int origin, int max_h,
                                                           std::uint64_t seed) const = 0;
};

using ModelFactory = std::function<std::unique_ptr<ForecastModel>()>;

class GaussianForecaster : public ForecastModel {
public:
    GaussianForecaster(gauss::GaussianSpec spec, NetworkPolicy policy, std::string name = "gaussian");
    [[nodiscard]] std::string name() const override { return name_; }
    void fit(const PanelData& data) override;
    [[nodiscard]] std::vector<Predictive> forecast(const PanelData& data, int origin, int max_h,
                                                   std::uint64_t seed) const override;
    [[nodiscard]] const lgss::FilterRun& run() const { return run_; }

private:
    gauss::GaussianSpec spec_;
    NetworkPolicy policy_;
    std::string name_;
    lgss::FilterRun run_;
};

class PoissonForecaster : public ForecastModel {
public:
    PoissonForecaster(poisson::PoissonSpec spec, int draws, poisson::StabilizerConfig stab,
                      NetworkPolicy policy = NetworkPolicy::carry_forward, std::string name = "poisson");
    [[nodiscard]] std::string name() const override { return name_; }
    void fit(const PanelData& data) override;
    [[nodiscard]] std::vector<Predictive> forecast(const PanelData& data, int origin, int max_h,
                                                   std::uint64_t seed) const override;
    [[nodiscard]] const lgss::FilterRun& run() const { return run_; }

private:
    poisson::PoissonSpec spec_;
    int draws_;
    poisson::StabilizerConfig stab_;
    NetworkPolicy policy_;
    std::string name_;
    lgss::FilterRun run_;
};

/// Constant-coefficient network VAR fitted by least squares on rows up to the
/// origin. Predictive covariance propagates sigma^2 I through the fitted lag
/// operator and ignores parameter uncertainty.
class StaticOlsForecaster : public ForecastModel {
public:
    explicit StaticOlsForecaster(design::DesignRecipe recipe, std::string name = "static_ols");
    [[nodiscard]] std::string name() const override { return name_; }
    void fit(const PanelData&) override {}
    [[nodiscard]] std::vector<Predictive> forecast(const PanelData& data, int origin, int max_h,
                                                   std::uint64_t seed) const override;

private:
    design::DesignRecipe recipe_;
    std::string name_;
};

struct BootstrapPlan {
    int block_len = 8;
    int replicates = 2000;
    std::uint64_t seed = 0;
    double level = 0.95;
};

struct EvalPlan {
    std::vector<int> origins;
    std::vector<int> horizons{1, 2, 4, 8};
    std::set<ScoreKind> scores{ScoreKind::mae, ScoreKind::mse};
    double coverage_level = 0.9;
    BootstrapPlan bootstrap;
    std::uint64_t seed = 0;
    int threads = 1;

    [[nodiscard]] int max_horizon() const;
    /// Throws unless horizons are positive and ascending and every origin
    /// leaves room for the longest horizon in a panel of n_times rows.
    void validate(int n_times) const;
};

struct HorizonResult {
    int horizon = 1;
    MatrixXd abs_err;      ///< origins x N (NaN where not computed)
    MatrixXd sq_err;
    MatrixXd covered;      ///< 0/1, empty unless requested
    MatrixXd pit;          ///< empty unless requested
    VectorXd log_score;    ///< per origin, NaN unless a log score was requested
    std::vector<bool> zero_probability;
    std::vector<bool> failed;
    std::vector<std::string> failure;
    std::optional<TailMetrics> tail;

    double mae = 0.0;
    double mse = 0.0;
    double mean_log_score = 0.0;
    double coverage_rate = 0.0;
    int n_valid = 0;

    /// Per-origin node average of the named metric (mae, mse, log_score, coverage).
    [[nodiscard]] VectorXd per_origin(const std::string& metric) const;
};

struct EvalReport {
    std::string model;
    std::vector<int> origins;
    std::string log_score_kind;
    std::vector<HorizonResult> by_horizon;

    [[nodiscard]] const HorizonResult& at(int horizon) const;
};

/// Fit once, forecast from every origin, score against the realized rows.
/// Failures at an origin are recorded in the report and do not abort the run.
[[nodiscard]] EvalReport rolling_eval(ForecastModel& model, const PanelData& data, const EvalPlan& plan);

struct PairedDelta {
    int horizon = 1;
    VectorXd deltas;  ///< per origin, a - b
    double mean = 0.0;
    Interval ci;
};

/// Per-origin differences a - b of a metric, with block-bootstrap CIs.
[[nodiscard]] std::vector<PairedDelta> paired_deltas(const EvalReport& a, const EvalReport& b,
                                                     const std::string& metric, const BootstrapPlan& boot);

struct StressRow {
    std::string label;
    EvalReport report;
    std::vector<double> delta_mae_vs_original;
    std::vector<double> delta_ls_vs_original;
    std::vector<double> delta_mae_vs_baseline;
    std::vector<double> delta_ls_vs_baseline;
};

struct StressResult {
    EvalReport original;
    EvalReport baseline;
    std::vector<StressRow> rows;
};

/// Refit with each perturbed network (same perturbation seed at every time
/// point) and compare to the original network and to a no-network baseline.
[[nodiscard]] StressResult stress_suite(const ModelFactory& network_model, const ModelFactory& baseline,
                                        const PanelData& data,
                                        const std::vector<graph::Perturbation>& perturbations,
                                        const EvalPlan& plan, std::uint64_t perturb_seed);

}  // namespace nssm::eval
