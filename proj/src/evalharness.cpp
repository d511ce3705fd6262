#include "nssm/evalharness.hpp"

#include "nssm/errors.hpp"
#include "nssm/parallel.hpp"
#include "nssm/rng.hpp"
#include "nssm/stats.hpp"

#include <boost/math/distributions/chi_squared.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace nssm::eval {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

const poisson::ForecastEnsemble& need_ensemble(const Predictive& pred, const char* who) {
    const auto* e = std::get_if<poisson::ForecastEnsemble>(&pred);
    if (e == nullptr) throw InvalidArgument(std::string(who) + " needs an ensemble predictive");
    if (e->n_draws() < 1) throw InvalidArgument(std::string(who) + ": empty ensemble");
    return *e;
}

VectorXd plug_in_lambda(const Predictive& pred, const char* who) {
    if (const auto* p = std::get_if<PoissonPredictive>(&pred)) return p->lambda;
    if (const auto* e = std::get_if<poisson::ForecastEnsemble>(&pred))
        return e->intensities.colwise().mean().transpose();
    throw InvalidArgument(std::string(who) + " needs a count predictive");
}

VectorXd lgamma_plus_one(const VectorXd& y) {
    VectorXd out(y.size());
    for (Eigen::Index i = 0; i < y.size(); ++i) out(i) = std::lgamma(y(i) + 1.0);
    return out;
}

bool is_count(double y) { return y >= 0.0 && y == std::floor(y); }

// Smallest k with P(Y <= k) >= q for Y ~ Poisson(lambda).
double poisson_quantile(double q, double lambda) {
    if (lambda <= 0.0) return 0.0;
    double k = std::max(0.0, std::floor(lambda + stats::normal_quantile(std::clamp(q, 1e-12, 1 - 1e-12)) *
                                                      std::sqrt(lambda)));
    while (k > 0.0 && stats::poisson_cdf(k - 1.0, lambda) >= q) k -= 1.0;
    while (stats::poisson_cdf(k, lambda) < q) k += 1.0;
    return k;
}

double randomized_pit(double f_below, double f_at, Rng& rng) {
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    return f_below + u01(rng) * (f_at - f_below);
}

double nan_mean(const MatrixXd& m, const std::vector<char>& ok) {
    double acc = 0.0;
    long count = 0;
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        if (!ok[static_cast<std::size_t>(r)]) continue;
        for (Eigen::Index c = 0; c < m.cols(); ++c)
            if (!std::isnan(m(r, c))) {
                acc += m(r, c);
                ++count;
            }
    }
    return count > 0 ? acc / static_cast<double>(count) : kNaN;
}

// Lag operator of a fitted constant-coefficient design.
MatrixXd lag_operator(const design::DesignRecipe& recipe, const VectorXd& theta, const MatrixXd& w, int lag) {
    const auto n = w.rows();
    MatrixXd b = MatrixXd::Zero(n, n);
    if (recipe.include_network_lags)
        for (int r : recipe.network_powers) b += theta(recipe.network_column(r, lag)) * graph::matrix_power(w, r);
    if (const int col = recipe.own_column(lag); col >= 0) b.diagonal().array() += theta(col);
    return b;
}

}  // namespace

std::string to_string(ScoreKind k) {
    switch (k) {
        case ScoreKind::mae: return "mae";
        case ScoreKind::mse: return "mse";
        case ScoreKind::gaussian_lpd: return "gaussian_lpd";
        case ScoreKind::poisson_ls: return "poisson_ls";
        case ScoreKind::preq_mc_ls: return "preq_mc_ls";
        case ScoreKind::coverage: return "coverage";
        case ScoreKind::pit: return "pit";
    }
    return "unknown";
}

ScoreKind parse_score_kind(const std::string& s) {
    for (ScoreKind k : {ScoreKind::mae, ScoreKind::mse, ScoreKind::gaussian_lpd, ScoreKind::poisson_ls,
                        ScoreKind::preq_mc_ls, ScoreKind::coverage, ScoreKind::pit})
        if (to_string(k) == s) return k;
    throw InvalidArgument("unknown score kind '" + s + "'");
}

VectorXd point_forecast(const Predictive& pred) {
    if (const auto* g = std::get_if<GaussianPredictive>(&pred)) return g->mean;
    return plug_in_lambda(pred, "point_forecast");
}

ScoreValue score(ScoreKind kind, const Predictive& pred, const VectorXd& actual) {
    switch (kind) {
        case ScoreKind::mae:
        case ScoreKind::mse: {
            const VectorXd point = point_forecast(pred);
            if (point.size() != actual.size()) throw InvalidArgument("score: forecast and outcome differ in length");
            const VectorXd err = point - actual;
            return {kind == ScoreKind::mae ? err.cwiseAbs().mean() : err.squaredNorm() / static_cast<double>(err.size())};
        }
        case ScoreKind::gaussian_lpd: {
            const auto* g = std::get_if<GaussianPredictive>(&pred);
            if (g == nullptr) throw InvalidArgument("gaussian_lpd needs a Gaussian predictive");
            return {lgss::mvn_logpdf(actual, g->mean, g->cov)};
        }
        case ScoreKind::poisson_ls: {
            const VectorXd lam = plug_in_lambda(pred, "poisson_ls");
            if (lam.size() != actual.size()) throw InvalidArgument("score: forecast and outcome differ in length");
            double ll = 0.0;
            for (Eigen::Index i = 0; i < lam.size(); ++i) ll += stats::poisson_logpmf(actual(i), lam(i));
            return {ll, ll == kNegInf};
        }
        case ScoreKind::preq_mc_ls: {
            const auto& e = need_ensemble(pred, "preq_mc_ls");
            if (e.n_nodes() != actual.size()) throw InvalidArgument("score: forecast and outcome differ in length");
            for (Eigen::Index i = 0; i < actual.size(); ++i)
                if (!is_count(actual(i))) return {kNegInf, true};
            const VectorXd lg = lgamma_plus_one(actual);
            const double lg_sum = lg.sum();
            std::vector<double> per_draw(static_cast<std::size_t>(e.n_draws()));
            for (int s = 0; s < e.n_draws(); ++s) {
                double acc = -lg_sum;
                for (Eigen::Index i = 0; i < actual.size(); ++i) {
                    const double lam = e.intensities(s, i);
                    if (lam <= 0.0) {
                        if (actual(i) != 0.0) {
                            acc = kNegInf;
                            break;
                        }
                        continue;
                    }
                    acc += actual(i) * std::log(lam) - lam;
                }
                per_draw[static_cast<std::size_t>(s)] = acc;
            }
            const double v = stats::logsumexp(per_draw) - std::log(static_cast<double>(e.n_draws()));
            return {v, v == kNegInf};
        }
        case ScoreKind::coverage:
        case ScoreKind::pit: throw InvalidArgument("coverage and pit are computed by coverage_and_pit");
    }
    throw InvalidArgument("score: unknown kind");
}

CoverageResult coverage_and_pit(const Predictive& pred, const VectorXd& actual, double level,
                                std::uint64_t seed) {
    if (!(level > 0.0 && level < 1.0)) throw InvalidArgument("coverage level must lie in (0, 1)");
    const auto n = actual.size();
    const double lo_q = 0.5 * (1.0 - level);
    const double hi_q = 1.0 - lo_q;
    CoverageResult out;
    out.covered.resize(static_cast<std::size_t>(n));
    out.lower.resize(n);
    out.upper.resize(n);
    out.pit.resize(n);
    Rng rng = make_rng(seed, "randomized_pit");

    if (const auto* g = std::get_if<GaussianPredictive>(&pred)) {
        if (g->mean.size() != n) throw InvalidArgument("coverage_and_pit: length mismatch");
        const double z = stats::normal_quantile(hi_q);
        for (Eigen::Index i = 0; i < n; ++i) {
            const double sd = std::sqrt(std::max(g->cov(i, i), 0.0));
            out.lower(i) = g->mean(i) - z * sd;
            out.upper(i) = g->mean(i) + z * sd;
            out.pit(i) = sd > 0.0 ? stats::normal_cdf((actual(i) - g->mean(i)) / sd)
                                  : (actual(i) >= g->mean(i) ? 1.0 : 0.0);
        }
    } else if (const auto* p = std::get_if<PoissonPredictive>(&pred)) {
        if (p->lambda.size() != n) throw InvalidArgument("coverage_and_pit: length mismatch");
        for (Eigen::Index i = 0; i < n; ++i) {
            const double lam = p->lambda(i);
            out.lower(i) = poisson_quantile(lo_q, lam);
            out.upper(i) = poisson_quantile(hi_q, lam);
            out.pit(i) = randomized_pit(stats::poisson_cdf(actual(i) - 1.0, lam),
                                        stats::poisson_cdf(actual(i), lam), rng);
        }
    } else {
        const auto& e = need_ensemble(pred, "coverage_and_pit");
        if (e.n_nodes() != n) throw InvalidArgument("coverage_and_pit: length mismatch");
        const int s_count = e.n_draws();
        std::vector<double> col(static_cast<std::size_t>(s_count));
        for (Eigen::Index i = 0; i < n; ++i) {
            for (int s = 0; s < s_count; ++s) col[static_cast<std::size_t>(s)] = static_cast<double>(e.counts(s, i));
            std::sort(col.begin(), col.end());
            out.lower(i) = stats::quantile_sorted(col, lo_q);
            out.upper(i) = stats::quantile_sorted(col, hi_q);
            double f_below = 0.0;
            double f_at = 0.0;
            for (int s = 0; s < s_count; ++s) {
                const double lam = e.intensities(s, i);
                f_below += stats::poisson_cdf(actual(i) - 1.0, lam);
                f_at += stats::poisson_cdf(actual(i), lam);
            }
            out.pit(i) = randomized_pit(f_below / s_count, f_at / s_count, rng);
        }
    }
    for (Eigen::Index i = 0; i < n; ++i)
        out.covered[static_cast<std::size_t>(i)] = actual(i) >= out.lower(i) && actual(i) <= out.upper(i);
    return out;
}

Interval block_bootstrap_ci(const VectorXd& deltas, int block_len, int replicates, std::uint64_t seed,
                            double level) {
    const auto n = deltas.size();
    if (n < 1) throw InvalidArgument("block_bootstrap_ci: no deltas");
    if (block_len < 1) throw InvalidArgument("block_bootstrap_ci: block length must be >= 1");
    if (replicates < 100) throw InvalidArgument("block_bootstrap_ci: need at least 100 replicates");
    if (!(level > 0.0 && level < 1.0)) throw InvalidArgument("block_bootstrap_ci: level must lie in (0, 1)");
    if (!deltas.allFinite()) throw InvalidArgument("block_bootstrap_ci: non-finite delta");
    std::vector<double> means(static_cast<std::size_t>(replicates));
    std::uniform_int_distribution<Eigen::Index> start(0, n - 1);
    for (int b = 0; b < replicates; ++b) {
        Rng rng = make_rng(seed, "block_bootstrap", static_cast<std::uint64_t>(b));
        double acc = 0.0;
        Eigen::Index taken = 0;
        while (taken < n) {
            const Eigen::Index s = start(rng);
            for (int k = 0; k < block_len && taken < n; ++k, ++taken) acc += deltas((s + k) % n);
        }
        means[static_cast<std::size_t>(b)] = acc / static_cast<double>(n);
    }
    std::sort(means.begin(), means.end());
    Interval ci;
    ci.estimate = deltas.mean();
    ci.lo = stats::quantile_sorted(means, 0.5 * (1.0 - level));
    ci.hi = stats::quantile_sorted(means, 0.5 * (1.0 + level));
    return ci;
}

ChiSquareTest pit_uniformity(const std::vector<double>& pit, int bins) {
    if (bins < 2) throw InvalidArgument("pit_uniformity: need at least two bins");
    if (pit.empty()) throw InvalidArgument("pit_uniformity: no PIT values");
    ChiSquareTest out;
    out.counts.assign(static_cast<std::size_t>(bins), 0);
    for (double u : pit) {
        if (!(u >= 0.0 && u <= 1.0)) throw InvalidArgument("pit_uniformity: PIT value outside [0, 1]");
        const int b = std::min(static_cast<int>(u * bins), bins - 1);
        ++out.counts[static_cast<std::size_t>(b)];
    }
    const double expected = static_cast<double>(pit.size()) / bins;
    for (int c : out.counts) out.statistic += (c - expected) * (c - expected) / expected;
    boost::math::chi_squared dist(bins - 1);
    out.p_value = boost::math::cdf(boost::math::complement(dist, out.statistic));
    return out;
}

TailMetrics tail_metrics(const std::vector<poisson::ForecastEnsemble>& ensembles,
                         const std::vector<VectorXd>& actuals, double trim, double explosion_threshold) {
    if (ensembles.empty()) throw InvalidArgument("tail_metrics: no ensembles");
    if (ensembles.size() != actuals.size()) throw InvalidArgument("tail_metrics: one outcome per ensemble");
    TailMetrics out;
    std::vector<double> errs;
    for (std::size_t k = 0; k < ensembles.size(); ++k) {
        const auto st = poisson::ensemble_stats(ensembles[k], {0.5}, explosion_threshold);
        out.explosion_prob += st.explosion_prob;
        const VectorXd e = (st.mean_intensity - actuals[k]).cwiseAbs();
        errs.insert(errs.end(), e.data(), e.data() + e.size());
    }
    out.explosion_prob /= static_cast<double>(ensembles.size());
    out.mae = stats::mean(errs);
    out.median_abs_err = stats::median(errs);
    out.trimmed_mae = stats::trimmed_mean(std::move(errs), trim);
    return out;
}

GaussianForecaster::GaussianForecaster(gauss::GaussianSpec spec, NetworkPolicy policy, std::string name)
    : spec_(std::move(spec)), policy_(policy), name_(std::move(name)) {}

void GaussianForecaster::fit(const PanelData& data) { run_ = gauss::fit_gaussian(data, spec_); }

std::vector<Predictive> GaussianForecaster::forecast(const PanelData& data, int origin, int max_h,
                                                     std::uint64_t) const {
    std::vector<Predictive> out;
    for (auto& f : gauss::forecast_gaussian(run_, spec_, data, origin, max_h, policy_))
        out.emplace_back(GaussianPredictive{std::move(f.mean), std::move(f.cov)});
    return out;
}

PoissonForecaster::PoissonForecaster(poisson::PoissonSpec spec, int draws, poisson::StabilizerConfig stab,
                                     NetworkPolicy policy, std::string name)
    : spec_(std::move(spec)), draws_(draws), stab_(stab), policy_(policy), name_(std::move(name)) {}

void PoissonForecaster::fit(const PanelData& data) { run_ = poisson::fit_poisson(data, spec_); }

std::vector<Predictive> PoissonForecaster::forecast(const PanelData& data, int origin, int max_h,
                                                    std::uint64_t seed) const {
    std::vector<Predictive> out;
    for (auto& e : poisson::mc_forecast(run_, spec_, data, origin, max_h, draws_, stab_, seed, policy_, 1))
        out.emplace_back(std::move(e));
    return out;
}

StaticOlsForecaster::StaticOlsForecaster(design::DesignRecipe recipe, std::string name)
    : recipe_(std::move(recipe)), name_(std::move(name)) {}

std::vector<Predictive> StaticOlsForecaster::forecast(const PanelData& data, int origin, int max_h,
                                                      std::uint64_t) const {
    const int p = recipe_.lag_order;
    const int n = data.n_nodes();
    const int k = recipe_.n_columns();
    const int rows = (origin - p + 1) * n;
    if (rows <= k) throw InvalidArgument("static_ols: too few observations before the origin");
    MatrixXd x(rows, k);
    VectorXd y(rows);
    const MatrixXd empty_w = MatrixXd::Zero(n, n);
    for (int t = p; t <= origin; ++t) {
        const auto lags = lag_window(data.y, t, p);
        const MatrixXd& w = recipe_.include_network_lags ? data.w_at(t) : empty_w;
        x.middleRows((t - p) * n, n) = design::build_design(w, lags, data.z_at(t), recipe_).x;
        y.segment((t - p) * n, n) = data.y.row(t).transpose();
    }
    const VectorXd theta = x.colPivHouseholderQr().solve(y);
    const double sigma2 = (y - x * theta).squaredNorm() / static_cast<double>(rows - k);

    const MatrixXd& w = recipe_.include_network_lags ? data.w_at(origin) : empty_w;
    const MatrixXd z = data.z_at(origin);
    std::vector<MatrixXd> ops;
    for (int l = 1; l <= p; ++l) ops.push_back(lag_operator(recipe_, theta, w, l));
    std::vector<VectorXd> lags = lag_window(data.y, origin + 1, p);
    MatrixXd s = MatrixXd::Zero(p * n, p * n);  // covariance of the stacked lag window
    std::vector<Predictive> out;
    for (int h = 1; h <= max_h; ++h) {
        const VectorXd mean = design::build_design(w, lags, z, recipe_).x * theta;
        MatrixXd a(n, p * n);
        for (int l = 0; l < p; ++l) a.middleCols(l * n, n) = ops[static_cast<std::size_t>(l)];
        const MatrixXd as = a * s;
        MatrixXd cov = as * a.transpose();
        cov.diagonal().array() += sigma2;
        MatrixXd next = MatrixXd::Zero(p * n, p * n);
        next.topLeftCorner(n, n) = cov;
        if (p > 1) {
            const int keep = (p - 1) * n;
            next.bottomRightCorner(keep, keep) = s.topLeftCorner(keep, keep);
            next.block(0, n, n, keep) = as.leftCols(keep);
            next.block(n, 0, keep, n) = as.leftCols(keep).transpose();
        }
        s = std::move(next);
        lags.insert(lags.begin(), mean);
        lags.pop_back();
        out.emplace_back(GaussianPredictive{mean, cov});
    }
    return out;
}

int EvalPlan::max_horizon() const { return horizons.empty() ? 0 : horizons.back(); }

void EvalPlan::validate(int n_times) const {
    if (origins.empty()) throw InvalidArgument("plan.origins is empty");
    if (horizons.empty()) throw InvalidArgument("plan.horizons is empty");
    for (std::size_t i = 0; i < horizons.size(); ++i) {
        if (horizons[i] < 1) throw InvalidArgument("plan.horizons must be positive");
        if (i > 0 && horizons[i] <= horizons[i - 1])
            throw InvalidArgument("plan.horizons must be strictly ascending");
    }
    for (int o : origins)
        if (o < 0 || o + max_horizon() > n_times - 1)
            throw InvalidArgument("plan.origins: origin " + std::to_string(o) + " leaves no room for horizon " +
                                  std::to_string(max_horizon()));
    if (!(coverage_level > 0.0 && coverage_level < 1.0))
        throw InvalidArgument("plan.coverage_level must lie in (0, 1)");
    int log_scores = 0;
    for (ScoreKind k : scores)
        if (k == ScoreKind::gaussian_lpd || k == ScoreKind::poisson_ls || k == ScoreKind::preq_mc_ls) ++log_scores;
    if (log_scores > 1) throw InvalidArgument("plan.scores: request at most one log score");
}

VectorXd HorizonResult::per_origin(const std::string& metric) const {
    const auto rows = static_cast<Eigen::Index>(failed.size());
    VectorXd out = VectorXd::Constant(rows, kNaN);
    const MatrixXd* m = nullptr;
    if (metric == "mae") m = &abs_err;
    else if (metric == "mse") m = &sq_err;
    else if (metric == "coverage") m = &covered;
    else if (metric == "log_score") return log_score.size() == rows ? log_score : out;
    else throw InvalidArgument("unknown metric '" + metric + "'");
    if (m->rows() != rows) return out;
    for (Eigen::Index r = 0; r < rows; ++r)
        if (!failed[static_cast<std::size_t>(r)]) out(r) = m->row(r).mean();
    return out;
}

const HorizonResult& EvalReport::at(int horizon) const {
    for (const auto& h : by_horizon)
        if (h.horizon == horizon) return h;
    throw InvalidArgument("report has no horizon " + std::to_string(horizon));
}

EvalReport rolling_eval(ForecastModel& model, const PanelData& data, const EvalPlan& plan) {
    data.validate();
    plan.validate(data.n_times());
    model.fit(data);

    const auto n_orig = static_cast<Eigen::Index>(plan.origins.size());
    const int n = data.n_nodes();
    const bool want_cov = plan.scores.count(ScoreKind::coverage) > 0 || plan.scores.count(ScoreKind::pit) > 0;
    std::optional<ScoreKind> log_kind;
    for (ScoreKind k : {ScoreKind::gaussian_lpd, ScoreKind::poisson_ls, ScoreKind::preq_mc_ls})
        if (plan.scores.count(k) > 0) log_kind = k;

    EvalReport rep;
    rep.model = model.name();
    rep.origins = plan.origins;
    rep.log_score_kind = log_kind ? to_string(*log_kind) : "";
    const std::size_t n_h = plan.horizons.size();
    std::vector<std::vector<char>> failed(n_h, std::vector<char>(static_cast<std::size_t>(n_orig), 0));
    std::vector<std::vector<char>> zero_prob = failed;
    std::vector<std::vector<std::string>> failure(n_h, std::vector<std::string>(static_cast<std::size_t>(n_orig)));
    std::vector<VectorXd> explosion(n_h, VectorXd::Constant(n_orig, kNaN));
    std::vector<char> ensemble_seen(static_cast<std::size_t>(n_orig), 0);
    for (int h : plan.horizons) {
        HorizonResult hr;
        hr.horizon = h;
        hr.abs_err = MatrixXd::Constant(n_orig, n, kNaN);
        hr.sq_err = MatrixXd::Constant(n_orig, n, kNaN);
        if (want_cov) {
            hr.covered = MatrixXd::Constant(n_orig, n, kNaN);
            hr.pit = MatrixXd::Constant(n_orig, n, kNaN);
        }
        hr.log_score = VectorXd::Constant(n_orig, kNaN);
        rep.by_horizon.push_back(std::move(hr));
    }

    const ForecastModel& fitted = model;
    parallel_for(static_cast<int>(n_orig), resolve_threads(plan.threads), [&](int oi) {
        const auto o = static_cast<std::size_t>(oi);
        const int origin = plan.origins[o];
        std::vector<Predictive> preds;
        try {
            preds = fitted.forecast(data, origin, plan.max_horizon(),
                                    derive_seed(plan.seed, "origin_forecast", static_cast<std::uint64_t>(origin)));
            if (static_cast<int>(preds.size()) < plan.max_horizon())
                throw NumericalError("model returned fewer horizons than requested");
        } catch (const std::exception& e) {
            for (std::size_t hi = 0; hi < n_h; ++hi) {
                failed[hi][o] = 1;
                failure[hi][o] = e.what();
            }
            return;
        }
        for (std::size_t hi = 0; hi < n_h; ++hi) {
            const int h = plan.horizons[hi];
            auto& hr = rep.by_horizon[hi];
            const Predictive& pred = preds[static_cast<std::size_t>(h - 1)];
            const VectorXd actual = data.y.row(origin + h).transpose();
            try {
                const VectorXd err = point_forecast(pred) - actual;
                hr.abs_err.row(oi) = err.cwiseAbs().transpose();
                hr.sq_err.row(oi) = err.array().square().matrix().transpose();
                if (log_kind) {
                    const ScoreValue sv = score(*log_kind, pred, actual);
                    hr.log_score(oi) = sv.value;
                    zero_prob[hi][o] = sv.zero_probability ? 1 : 0;
                }
                if (want_cov) {
                    const auto cr = coverage_and_pit(
                        pred, actual, plan.coverage_level,
                        derive_seed(plan.seed, "origin_pit", static_cast<std::uint64_t>(origin) * 1024U + h));
                    for (int i = 0; i < n; ++i) hr.covered(oi, i) = cr.covered[static_cast<std::size_t>(i)] ? 1.0 : 0.0;
                    hr.pit.row(oi) = cr.pit.transpose();
                }
                if (const auto* e = std::get_if<poisson::ForecastEnsemble>(&pred)) {
                    ensemble_seen[o] = 1;
                    int exploded = 0;
                    for (int s = 0; s < e->n_draws(); ++s)
                        if (e->intensities.row(s).maxCoeff() > poisson::kExplosionThreshold) ++exploded;
                    explosion[hi](oi) = static_cast<double>(exploded) / e->n_draws();
                }
            } catch (const std::exception& ex) {
                failed[hi][o] = 1;
                failure[hi][o] = ex.what();
            }
        }
    });

    const bool any_ensemble = std::any_of(ensemble_seen.begin(), ensemble_seen.end(), [](char c) { return c != 0; });
    for (std::size_t hi = 0; hi < n_h; ++hi) {
        auto& hr = rep.by_horizon[hi];
        std::vector<char> ok(static_cast<std::size_t>(n_orig));
        for (std::size_t o = 0; o < ok.size(); ++o) ok[o] = failed[hi][o] ? 0 : 1;
        hr.failed.assign(failed[hi].begin(), failed[hi].end());
        hr.zero_probability.assign(zero_prob[hi].begin(), zero_prob[hi].end());
        hr.failure = failure[hi];
        hr.n_valid = static_cast<int>(std::count(ok.begin(), ok.end(), 1));
        hr.mae = nan_mean(hr.abs_err, ok);
        hr.mse = nan_mean(hr.sq_err, ok);
        hr.coverage_rate = want_cov ? nan_mean(hr.covered, ok) : kNaN;
        if (log_kind) {
            double acc = 0.0;
            int count = 0;
            for (Eigen::Index o = 0; o < n_orig; ++o)
                if (ok[static_cast<std::size_t>(o)] && !std::isnan(hr.log_score(o))) {
                    acc += hr.log_score(o);
                    ++count;
                }
            hr.mean_log_score = count > 0 ? acc / count : kNaN;
        } else {
            hr.mean_log_score = kNaN;
        }
        if (any_ensemble && hr.n_valid > 0) {
            TailMetrics tm;
            std::vector<double> errs;
            double expl = 0.0;
            int count = 0;
            for (Eigen::Index o = 0; o < n_orig; ++o) {
                if (!ok[static_cast<std::size_t>(o)]) continue;
                expl += explosion[hi](o);
                ++count;
                for (int i = 0; i < n; ++i) errs.push_back(hr.abs_err(o, i));
            }
            tm.explosion_prob = expl / count;
            tm.mae = stats::mean(errs);
            tm.median_abs_err = stats::median(errs);
            tm.trimmed_mae = stats::trimmed_mean(std::move(errs), 0.05);
            hr.tail = tm;
        }
    }
    return rep;
}

std::vector<PairedDelta> paired_deltas(const EvalReport& a, const EvalReport& b, const std::string& metric,
                                       const BootstrapPlan& boot) {
    if (a.origins != b.origins) throw InvalidArgument("paired_deltas: reports use different origins");
    std::vector<PairedDelta> out;
    for (const auto& ha : a.by_horizon) {
        const auto& hb = b.at(ha.horizon);
        const VectorXd va = ha.per_origin(metric);
        const VectorXd vb = hb.per_origin(metric);
        std::vector<double> d;
        for (Eigen::Index o = 0; o < va.size(); ++o)
            if (std::isfinite(va(o)) && std::isfinite(vb(o))) d.push_back(va(o) - vb(o));
        PairedDelta pd;
        pd.horizon = ha.horizon;
        pd.deltas = Eigen::Map<const VectorXd>(d.data(), static_cast<Eigen::Index>(d.size()));
        if (!d.empty()) {
            pd.mean = pd.deltas.mean();
            pd.ci = block_bootstrap_ci(pd.deltas, boot.block_len, boot.replicates,
                                       derive_seed(boot.seed, "paired_delta", static_cast<std::uint64_t>(ha.horizon)),
                                       boot.level);
        } else {
            pd.mean = kNaN;
            pd.ci = {kNaN, kNaN, kNaN};
        }
        out.push_back(std::move(pd));
    }
    return out;
}

StressResult stress_suite(const ModelFactory& network_model, const ModelFactory& baseline, const PanelData& data,
                          const std::vector<graph::Perturbation>& perturbations, const EvalPlan& plan,
                          std::uint64_t perturb_seed) {
    StressResult out;
    {
        auto m = network_model();
        out.original = rolling_eval(*m, data, plan);
    }
    {
        auto m = baseline();
        out.baseline = rolling_eval(*m, data, plan);
    }
    auto deltas = [](const EvalReport& x, const EvalReport& y, bool log_score) {
        std::vector<double> d;
        for (const auto& hx : x.by_horizon) {
            const auto& hy = y.at(hx.horizon);
            d.push_back(log_score ? hx.mean_log_score - hy.mean_log_score : hx.mae - hy.mae);
        }
        return d;
    };
    for (std::size_t i = 0; i < perturbations.size(); ++i) {
        const std::uint64_t s = derive_seed(perturb_seed, "stress_perturbation", i);
        PanelData pd = data;
        for (auto& w : pd.w_seq)
            w = graph::perturb(graph::WeightMatrix{w, graph::Provenance::observed, {}}, perturbations[i], s).w;
        auto m = network_model();
        StressRow row;
        row.label = graph::describe(perturbations[i]);
        row.report = rolling_eval(*m, pd, plan);
        row.delta_mae_vs_original = deltas(row.report, out.original, false);
        row.delta_ls_vs_original = deltas(row.report, out.original, true);
        row.delta_mae_vs_baseline = deltas(row.report, out.baseline, false);
        row.delta_ls_vs_baseline = deltas(row.report, out.baseline, true);
        out.rows.push_back(std::move(row));
    }
    return out;
}

}  // namespace nssm::eval
