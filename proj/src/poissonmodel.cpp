#include "nssm/poissonmodel.hpp"

#include "nssm/errors.hpp"
#include "nssm/parallel.hpp"
#include "nssm/rng.hpp"
#include "nssm/stats.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace nssm::poisson {

namespace {

constexpr double kLambdaFloor = 1e-8;
constexpr double kFilterEtaCap = 20.0;

// Working response and variance for the log link linearized at eta.
lgss::ObsBlock working_block(const MatrixXd& x, const VectorXd& y, const VectorXd& eta) {
    const VectorXd lam = eta.array().exp().max(kLambdaFloor).min(std::exp(kFilterEtaCap));
    const VectorXd eta_c = lam.array().log();
    VectorXd pseudo = eta_c.array() + (y - lam).array() / lam.array();
    return lgss::ObsBlock::diagonal(x, std::move(pseudo), lam.cwiseInverse());
}

double poisson_loglik(const VectorXd& y, const VectorXd& lam) {
    double ll = 0.0;
    for (Eigen::Index i = 0; i < y.size(); ++i) ll += stats::poisson_logpmf(y(i), lam(i));
    return ll;
}

MatrixXd sqrt_factor(const MatrixXd& m) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(m);
    return es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
}

}  // namespace

PoissonSpec PoissonSpec::make(design::DesignRecipe recipe, lgss::StateNoiseSpec noise,
                              double p0_scale) {
    const int k = recipe.n_columns();
    PoissonSpec s;
    s.recipe = std::move(recipe);
    s.state_noise = std::move(noise);
    s.m0 = VectorXd::Zero(k);
    s.p0 = p0_scale * MatrixXd::Identity(k, k);
    return s;
}

void PoissonSpec::validate() const {
    recipe.validate();
    state_noise.validate();
    const int k = state_dim();
    if (state_noise.dim() != k)
        throw InvalidArgument("PoissonSpec: state-noise dimension does not match the design");
    if (m0.size() != k || p0.rows() != k || p0.cols() != k)
        throw InvalidArgument("PoissonSpec: initial law has wrong dimension");
}

StabilizerConfig StabilizerConfig::disabled() {
    StabilizerConfig s;
    s.enabled = false;
    return s;
}

void StabilizerConfig::validate() const {
    if (!(phi > 0.0 && phi <= 1.0)) throw InvalidArgument("stabilizer.phi must lie in (0, 1]");
    if (!std::isfinite(eta_max)) throw InvalidArgument("stabilizer.eta_max must be finite");
    if (!(lambda_max > 0.0)) throw InvalidArgument("stabilizer.lambda_max must be positive");
}

void check_counts(const MatrixXd& y) {
    for (Eigen::Index t = 0; t < y.rows(); ++t)
        for (Eigen::Index i = 0; i < y.cols(); ++i) {
            const double v = y(t, i);
            if (!std::isfinite(v) || v < 0.0 || v != std::floor(v))
                throw InvalidArgument("counts must be nonnegative integers (row " + std::to_string(t) +
                                      ", node " + std::to_string(i) + ")");
        }
}

lgss::FilterRun fit_poisson(const PanelData& data, const PoissonSpec& spec) {
    data.validate();
    check_counts(data.y);
    spec.validate();
    const int p = spec.recipe.lag_order;
    const int t_count = data.n_times();
    if (t_count < p + 1) throw InvalidArgument("fit_poisson: panel needs at least p + 1 rows");

    std::vector<int> times;
    for (int t = p; t < t_count; ++t) times.push_back(t);
    std::vector<double> plug_in(static_cast<std::size_t>(t_count - p), 0.0);
    const MatrixXd empty_w = MatrixXd::Zero(data.n_nodes(), data.n_nodes());

    auto provider = [&](int k, const lgss::Belief& pred) {
        const int t = p + k;
        const auto lags = lag_window(data.y, t, p);
        const MatrixXd& w = spec.recipe.include_network_lags ? data.w_at(t) : empty_w;
        const MatrixXd x = design::build_design(w, lags, data.z_at(t), spec.recipe).x;
        const VectorXd y = data.y.row(t).transpose();
        const VectorXd eta_pred = x * pred.mean;
        plug_in[static_cast<std::size_t>(k)] =
            poisson_loglik(y, eta_pred.array().min(kFilterEtaCap).exp().matrix());
        const lgss::Belief first = lgss::update(pred, working_block(x, y, eta_pred)).belief;
        return std::vector<lgss::ObsBlock>{working_block(x, y, x * first.mean)};
    };
    lgss::Belief init{spec.m0, spec.p0, p - 1};
    lgss::FilterRun run = lgss::run_filter(init, spec.state_noise, t_count - p, provider, times);
    run.step_loglik = plug_in;
    run.loglik = 0.0;
    for (double v : plug_in) run.loglik += v;
    return run;
}

lgss::Belief belief_at(const lgss::FilterRun& run, const PoissonSpec& spec, int origin) {
    const int p = spec.recipe.lag_order;
    if (origin < p) {
        lgss::Belief b = run.initial;
        b.time_index = origin;
        return b;
    }
    const int step = origin - p;
    if (step >= run.n_steps())
        throw InvalidArgument("forecast origin " + std::to_string(origin) + " lies beyond the filtered sample");
    return run.filtered[static_cast<std::size_t>(step)];
}

VectorXd plug_in_intensity(const lgss::FilterRun& run, const PoissonSpec& spec, const PanelData& data,
                           int origin) {
    const lgss::Belief b = belief_at(run, spec, origin);
    const auto lags = lag_window(data.y, origin + 1, spec.recipe.lag_order);
    const MatrixXd x = design::build_design(data.w_at(origin), lags, data.z_at(origin), spec.recipe).x;
    return (x * (spec.state_noise.transition_matrix() * b.mean)).array().exp();
}

std::vector<ForecastEnsemble> mc_forecast(const lgss::FilterRun& run, const PoissonSpec& spec,
                                          const PanelData& data, int origin, int horizon, int draws,
                                          const StabilizerConfig& stab, std::uint64_t seed,
                                          NetworkPolicy policy, int threads) {
    if (horizon < 1) throw InvalidArgument("mc_forecast: horizon must be >= 1");
    if (draws < 1) throw InvalidArgument("mc_forecast: need at least one draw");
    if (policy == NetworkPolicy::user_supplied)
        throw Unsupported("mc_forecast: user_supplied networks are not supported for count forecasts");
    stab.validate();
    const int p = spec.recipe.lag_order;
    const int n = data.n_nodes();
    if (origin < p - 1 || origin >= data.n_times())
        throw InvalidArgument("mc_forecast: origin outside the panel");

    const lgss::Belief at_origin = belief_at(run, spec, origin);
    const lgss::Belief before = belief_at(run, spec, origin - 1);
    const MatrixXd f = spec.state_noise.transition_matrix();
    const MatrixXd l0 = sqrt_factor(at_origin.cov);
    std::vector<MatrixXd> lq;
    std::vector<MatrixXd> ws;
    std::vector<MatrixXd> zs;
    for (int k = 1; k <= horizon; ++k) {
        MatrixXd q;
        if (const auto* c = std::get_if<lgss::ConstantNoise>(&spec.state_noise.mode)) q = c->q;
        else if (k == 1) q = lgss::threshold_Q(at_origin.mean, before.mean, spec.state_noise).q;
        else q = std::get<lgss::ThresholdNoise>(spec.state_noise.mode).q0.asDiagonal();
        lq.push_back(sqrt_factor(q));
        const int t = policy == NetworkPolicy::oracle ? origin + k : origin;
        ws.push_back(spec.recipe.include_network_lags ? data.w_at(t) : MatrixXd::Zero(n, n));
        zs.push_back(data.z_at(t));
    }

    const double phi = stab.effective_phi();
    const double eta_max = stab.effective_eta_max();
    std::vector<ForecastEnsemble> out(static_cast<std::size_t>(horizon));
    for (int k = 1; k <= horizon; ++k) {
        auto& e = out[static_cast<std::size_t>(k - 1)];
        e.horizon = k;
        e.intensities.resize(draws, n);
        e.counts.resize(draws, n);
        e.stabilizer = stab;
        e.seed = seed;
    }
    const std::vector<VectorXd> start_lags = lag_window(data.y, origin + 1, p);

    parallel_for(draws, threads, [&](int s) {
        Rng rng = make_rng(seed, "poisson_mc_forecast", static_cast<std::uint64_t>(s));
        std::normal_distribution<double> z01;
        auto normal_vec = [&](Eigen::Index m) {
            VectorXd v(m);
            for (Eigen::Index i = 0; i < m; ++i) v(i) = z01(rng);
            return v;
        };
        VectorXd theta = at_origin.mean + l0 * normal_vec(l0.cols());
        std::vector<VectorXd> lags = start_lags;
        VectorXd y(n);
        for (int k = 1; k <= horizon; ++k) {
            const auto ks = static_cast<std::size_t>(k - 1);
            theta = phi * (f * theta) + (1.0 - phi) * at_origin.mean + lq[ks] * normal_vec(lq[ks].cols());
            const MatrixXd x = design::build_design(ws[ks], lags, zs[ks], spec.recipe).x;
            const VectorXd eta = (x * theta).cwiseMin(eta_max);
            auto& e = out[ks];
            for (int i = 0; i < n; ++i) {
                double lam = std::exp(eta(i));
                if (stab.enabled) lam = std::min(lam, stab.lambda_max);
                std::poisson_distribution<std::int64_t> pois(lam);
                const std::int64_t c = lam > 0.0 ? pois(rng) : 0;
                e.intensities(s, i) = lam;
                e.counts(s, i) = c;
                y(i) = static_cast<double>(c);
            }
            lags.insert(lags.begin(), y);
            lags.pop_back();
        }
    });
    return out;
}

EnsembleStats ensemble_stats(const ForecastEnsemble& ens, std::vector<double> levels,
                             double explosion_threshold) {
    const int s_count = ens.n_draws();
    const int n = ens.n_nodes();
    if (s_count < 1) throw InvalidArgument("ensemble_stats: empty ensemble");
    EnsembleStats st;
    st.levels = std::move(levels);
    st.mean_intensity = ens.intensities.colwise().mean().transpose();
    st.mean_count = ens.counts.cast<double>().colwise().mean().transpose();
    st.median_intensity.resize(n);
    st.count_quantiles.resize(static_cast<Eigen::Index>(st.levels.size()), n);
    std::vector<double> col(static_cast<std::size_t>(s_count));
    for (int i = 0; i < n; ++i) {
        for (int s = 0; s < s_count; ++s) col[static_cast<std::size_t>(s)] = ens.intensities(s, i);
        std::sort(col.begin(), col.end());
        st.median_intensity(i) = stats::quantile_sorted(col, 0.5);
        for (int s = 0; s < s_count; ++s)
            col[static_cast<std::size_t>(s)] = static_cast<double>(ens.counts(s, i));
        std::sort(col.begin(), col.end());
        for (std::size_t l = 0; l < st.levels.size(); ++l)
            st.count_quantiles(static_cast<Eigen::Index>(l), i) = stats::quantile_sorted(col, st.levels[l]);
    }
    int exploded = 0;
    for (int s = 0; s < s_count; ++s)
        if (ens.intensities.row(s).maxCoeff() > explosion_threshold) ++exploded;
    st.explosion_prob = static_cast<double>(exploded) / s_count;
    return st;
}

}  // namespace nssm::poisson
