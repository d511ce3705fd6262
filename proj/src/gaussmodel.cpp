#include "nssm/gaussmodel.hpp"

#include "nssm/errors.hpp"
#include "nssm/graph.hpp"
#include "nssm/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace nssm::gauss {

namespace {

MatrixXd noise_matrix(const ObsNoise& noise, int n) {
    return std::visit(
        [n](const auto& k) -> MatrixXd {
            using K = std::decay_t<decltype(k)>;
            if constexpr (std::is_same_v<K, ScalarNoise>) return k.sigma2 * MatrixXd::Identity(n, n);
            else if constexpr (std::is_same_v<K, DiagonalNoise>) return k.r.asDiagonal();
            else return k.r;
        },
        noise);
}

void validate_noise(const ObsNoise& noise, int n) {
    std::visit(
        [n](const auto& k) {
            using K = std::decay_t<decltype(k)>;
            if constexpr (std::is_same_v<K, ScalarNoise>) {
                if (!(k.sigma2 > 0.0)) throw InvalidArgument("obs_noise: sigma2 must be positive");
            } else if constexpr (std::is_same_v<K, DiagonalNoise>) {
                if (k.r.size() != n) throw InvalidArgument("obs_noise: diagonal must have length N");
                if (!(k.r.array() > 0.0).all())
                    throw InvalidArgument("obs_noise: diagonal entries must be positive");
            } else {
                if (k.r.rows() != n || k.r.cols() != n)
                    throw InvalidArgument("obs_noise: full R must be N x N");
                Eigen::LLT<MatrixXd> llt(k.r);
                if (!k.r.isApprox(k.r.transpose(), 1e-12) || llt.info() != Eigen::Success)
                    throw InvalidArgument("obs_noise: full R must be symmetric positive definite");
            }
        },
        noise);
}

// Innovation covariance for forecast step `k` (1-based) past the origin.
MatrixXd future_q(const GaussianSpec& spec, const lgss::Belief& at_origin,
                  const lgss::Belief& before_origin, int k) {
    const auto& sn = spec.state_noise;
    if (const auto* c = std::get_if<lgss::ConstantNoise>(&sn.mode)) return c->q;
    const auto& t = std::get<lgss::ThresholdNoise>(sn.mode);
    if (k == 1) return lgss::threshold_Q(at_origin.mean, before_origin.mean, sn).q;
    // Predicted increments beyond the first step are zero, so s = 0.
    return t.q0.asDiagonal();
}

struct StepRegressors {
    MatrixXd w;
    MatrixXd z;
};

StepRegressors regressors_for(const GaussianSpec& spec, const PanelData& data, int origin, int k,
                              NetworkPolicy policy, const FutureInputs& future) {
    const int t = origin + k;
    StepRegressors out;
    const bool need_w = spec.recipe.include_network_lags;
    const bool need_z = spec.recipe.covariate_count > 0;
    switch (policy) {
        case NetworkPolicy::oracle:
            if (need_w) out.w = data.w_at(t);
            if (need_z) out.z = data.z_at(t);
            break;
        case NetworkPolicy::carry_forward:
            if (need_w) out.w = data.w_at(origin);
            if (need_z) out.z = data.z_at(origin);
            break;
        case NetworkPolicy::user_supplied: {
            const auto idx = static_cast<std::size_t>(k - 1);
            if (need_w) {
                if (idx >= future.w.size())
                    throw InvalidArgument("forecast: user_supplied policy is missing the future W for horizon " +
                                          std::to_string(k));
                out.w = future.w[idx];
            }
            if (need_z) {
                if (idx >= future.z.size())
                    throw InvalidArgument(
                        "forecast: user_supplied policy is missing future covariates for horizon " +
                        std::to_string(k));
                out.z = future.z[idx];
            }
            break;
        }
    }
    if (!need_w) out.w = MatrixXd::Zero(data.n_nodes(), data.n_nodes());
    if (!need_z) out.z = MatrixXd(data.n_nodes(), 0);
    return out;
}

// dY_t / dY_{t-lag} for the design at coefficient vector theta.
MatrixXd lag_jacobian(const design::DesignRecipe& recipe, const VectorXd& theta, const MatrixXd& w,
                      int lag, int n) {
    MatrixXd b = MatrixXd::Zero(n, n);
    if (recipe.include_network_lags) {
        for (int r : recipe.network_powers) {
            const int col = recipe.network_column(r, lag);
            if (theta(col) != 0.0) b += theta(col) * graph::matrix_power(w, r);
        }
    }
    if (const int col = recipe.own_column(lag); col >= 0) b.diagonal().array() += theta(col);
    return b;
}

lgss::Belief belief_before(const lgss::FilterRun& run, const GaussianSpec& spec, int origin) {
    return belief_at(run, spec, origin - 1);
}

}  // namespace

GaussianSpec GaussianSpec::make(design::DesignRecipe recipe, lgss::StateNoiseSpec noise,
                                double sigma2, double p0_scale) {
    const int k = recipe.n_columns();
    GaussianSpec s;
    s.recipe = std::move(recipe);
    s.state_noise = std::move(noise);
    s.obs_noise = ScalarNoise{sigma2};
    s.m0 = VectorXd::Zero(k);
    s.p0 = p0_scale * MatrixXd::Identity(k, k);
    return s;
}

void GaussianSpec::validate(int n_nodes) const {
    recipe.validate();
    state_noise.validate();
    const int k = state_dim();
    if (state_noise.dim() != k)
        throw InvalidArgument("GaussianSpec: state-noise dimension does not match the design");
    if (m0.size() != k || p0.rows() != k || p0.cols() != k)
        throw InvalidArgument("GaussianSpec: initial law has wrong dimension");
    validate_noise(obs_noise, n_nodes);
    if (edge) {
        const auto& e = *edge;
        e.noise.validate();
        const auto ke = e.loading.cols();
        if (e.noise.dim() != ke || e.m0.size() != ke || e.p0.rows() != ke || e.p0.cols() != ke)
            throw InvalidArgument("GaussianSpec: edge submodel dimensions are inconsistent");
        if (e.u.rows() != e.loading.rows() || e.u.cols() != e.loading.rows())
            throw InvalidArgument("GaussianSpec: edge noise U must be M x M");
    }
}

lgss::ObsBlock node_block(const MatrixXd& x, const VectorXd& y, const ObsNoise& noise) {
    const auto n = y.size();
    if (const auto* s = std::get_if<ScalarNoise>(&noise))
        return lgss::ObsBlock::diagonal(x, y, VectorXd::Constant(n, s->sigma2));
    if (const auto* d = std::get_if<DiagonalNoise>(&noise)) return lgss::ObsBlock::diagonal(x, y, d->r);
    return lgss::ObsBlock::dense(x, y, std::get<FullNoise>(noise).r);
}

lgss::FilterRun fit_gaussian(const PanelData& data, const GaussianSpec& spec) {
    data.validate();
    spec.validate(data.n_nodes());
    const int p = spec.recipe.lag_order;
    const int t_count = data.n_times();
    if (t_count < p + 1)
        throw InvalidArgument("fit_gaussian: panel needs at least p + 1 rows");
    if (spec.recipe.covariate_count != data.n_covariates() && spec.recipe.covariate_count > 0)
        throw InvalidArgument("fit_gaussian: covariate count does not match the recipe");

    std::vector<int> times;
    for (int t = p; t < t_count; ++t) times.push_back(t);
    const MatrixXd empty_w = MatrixXd::Zero(data.n_nodes(), data.n_nodes());

    auto provider = [&](int k, const lgss::Belief&) {
        const int t = p + k;
        const auto lags = lag_window(data.y, t, p);
        const MatrixXd& w = spec.recipe.include_network_lags ? data.w_at(t) : empty_w;
        const auto x = design::build_design(w, lags, data.z_at(t), spec.recipe);
        return std::vector<lgss::ObsBlock>{node_block(x.x, data.y.row(t).transpose(), spec.obs_noise)};
    };
    lgss::Belief init{spec.m0, spec.p0, p - 1};
    return lgss::run_filter(init, spec.state_noise, t_count - p, provider, times);
}

lgss::Belief belief_at(const lgss::FilterRun& run, const GaussianSpec& spec, int origin) {
    const int p = spec.recipe.lag_order;
    if (origin < p) {
        lgss::Belief b = run.initial;
        b.time_index = origin;
        return b;
    }
    const int step = origin - p;
    if (step >= run.n_steps()) {
        std::ostringstream os;
        os << "forecast origin " << origin << " lies beyond the filtered sample";
        throw InvalidArgument(os.str());
    }
    return run.filtered[static_cast<std::size_t>(step)];
}

std::vector<GaussianForecast> forecast_gaussian(const lgss::FilterRun& run, const GaussianSpec& spec,
                                                const PanelData& data, int origin, int horizon,
                                                NetworkPolicy policy, const FutureInputs& future) {
    if (horizon < 1) throw InvalidArgument("forecast_gaussian: horizon must be >= 1");
    const int p = spec.recipe.lag_order;
    const int n = data.n_nodes();
    const int k_dim = spec.state_dim();
    if (origin < p - 1 || origin >= data.n_times())
        throw InvalidArgument("forecast_gaussian: origin outside the panel");

    const lgss::Belief at_origin = belief_at(run, spec, origin);
    const lgss::Belief before = belief_before(run, spec, origin);
    const MatrixXd f = spec.state_noise.transition_matrix();
    const MatrixXd r = noise_matrix(spec.obs_noise, n);

    // Joint state z = (theta, Y_{k-1}, ..., Y_{k-p}); lag blocks start known.
    const int dim = k_dim + p * n;
    VectorXd theta = at_origin.mean;
    MatrixXd c = MatrixXd::Zero(dim, dim);
    c.topLeftCorner(k_dim, k_dim) = at_origin.cov;
    std::vector<VectorXd> lags = lag_window(data.y, origin + 1, p);

    std::vector<GaussianForecast> out;
    out.reserve(static_cast<std::size_t>(horizon));
    for (int k = 1; k <= horizon; ++k) {
        const MatrixXd q = future_q(spec, at_origin, before, k);
        theta = f * theta;
        c.topRows(k_dim) = (f * c.topRows(k_dim)).eval();
        c.leftCols(k_dim) = (c.leftCols(k_dim) * f.transpose()).eval();
        c.topLeftCorner(k_dim, k_dim) += q;

        const StepRegressors reg = regressors_for(spec, data, origin, k, policy, future);
        const auto x = design::build_design(reg.w, lags, reg.z, spec.recipe);
        const VectorXd mean = x.x * theta;

        MatrixXd a(n, dim);
        a.leftCols(k_dim) = x.x;
        for (int l = 1; l <= p; ++l)
            a.middleCols(k_dim + (l - 1) * n, n) = lag_jacobian(spec.recipe, theta, reg.w, l, n);
        const MatrixXd ac = a * c;
        MatrixXd cov_y = ac * a.transpose() + r;
        lgss::symmetrize(cov_y);

        // Shift lag blocks: new order (theta, Y_k, Y_{k-1}, ..., Y_{k-p+1}).
        MatrixXd next = MatrixXd::Zero(dim, dim);
        const int keep = (p - 1) * n;
        next.topLeftCorner(k_dim, k_dim) = c.topLeftCorner(k_dim, k_dim);
        next.block(k_dim, k_dim, n, n) = cov_y;
        next.block(k_dim, 0, n, k_dim) = ac.leftCols(k_dim);
        next.block(0, k_dim, k_dim, n) = ac.leftCols(k_dim).transpose();
        if (keep > 0) {
            next.block(k_dim + n, k_dim + n, keep, keep) = c.block(k_dim, k_dim, keep, keep);
            next.block(k_dim + n, 0, keep, k_dim) = c.block(k_dim, 0, keep, k_dim);
            next.block(0, k_dim + n, k_dim, keep) = c.block(0, k_dim, k_dim, keep);
            next.block(k_dim, k_dim + n, n, keep) = ac.middleCols(k_dim, keep);
            next.block(k_dim + n, k_dim, keep, n) = ac.middleCols(k_dim, keep).transpose();
        }
        c = std::move(next);
        lgss::symmetrize(c);

        lags.insert(lags.begin(), mean);
        lags.pop_back();
        out.push_back(GaussianForecast{k, mean, cov_y, policy});
    }
    return out;
}

std::vector<GaussianForecast> forecast_gaussian_mc(const lgss::FilterRun& run,
                                                   const GaussianSpec& spec, const PanelData& data,
                                                   int origin, int horizon, NetworkPolicy policy,
                                                   int draws, std::uint64_t seed,
                                                   const FutureInputs& future) {
    if (horizon < 1 || draws < 2) throw InvalidArgument("forecast_gaussian_mc: need horizon >= 1, draws >= 2");
    const int p = spec.recipe.lag_order;
    const int n = data.n_nodes();
    const lgss::Belief at_origin = belief_at(run, spec, origin);
    const lgss::Belief before = belief_before(run, spec, origin);
    const MatrixXd f = spec.state_noise.transition_matrix();
    const MatrixXd r = noise_matrix(spec.obs_noise, n);

    auto chol = [](const MatrixXd& m) -> MatrixXd {
        Eigen::SelfAdjointEigenSolver<MatrixXd> es(m);
        return es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
    };
    const MatrixXd l0 = chol(at_origin.cov);
    const MatrixXd lr = chol(r);
    std::vector<MatrixXd> lq;
    std::vector<StepRegressors> regs;
    for (int k = 1; k <= horizon; ++k) {
        lq.push_back(chol(future_q(spec, at_origin, before, k)));
        regs.push_back(regressors_for(spec, data, origin, k, policy, future));
    }

    std::vector<MatrixXd> samples(static_cast<std::size_t>(horizon), MatrixXd(draws, n));
    for (int s = 0; s < draws; ++s) {
        Rng rng = make_rng(seed, "forecast_gaussian_mc", static_cast<std::uint64_t>(s));
        std::normal_distribution<double> z01;
        auto normal_vec = [&](Eigen::Index m) {
            VectorXd v(m);
            for (Eigen::Index i = 0; i < m; ++i) v(i) = z01(rng);
            return v;
        };
        VectorXd theta = at_origin.mean + l0 * normal_vec(l0.cols());
        std::vector<VectorXd> lags = lag_window(data.y, origin + 1, p);
        for (int k = 1; k <= horizon; ++k) {
            const auto ks = static_cast<std::size_t>(k - 1);
            theta = f * theta + lq[ks] * normal_vec(lq[ks].cols());
            const auto x = design::build_design(regs[ks].w, lags, regs[ks].z, spec.recipe);
            VectorXd y = x.x * theta + lr * normal_vec(lr.cols());
            samples[ks].row(s) = y.transpose();
            lags.insert(lags.begin(), y);
            lags.pop_back();
        }
    }
    std::vector<GaussianForecast> out;
    for (int k = 1; k <= horizon; ++k) {
        const MatrixXd& sm = samples[static_cast<std::size_t>(k - 1)];
        const VectorXd mean = sm.colwise().mean().transpose();
        const MatrixXd centered = sm.rowwise() - mean.transpose();
        MatrixXd cov = centered.transpose() * centered / static_cast<double>(draws - 1);
        out.push_back(GaussianForecast{k, mean, cov, policy});
    }
    return out;
}

GaussianForecast plug_in_forecast(const lgss::FilterRun& run, const GaussianSpec& spec,
                                  const PanelData& data, int origin, const MatrixXd& w_hat) {
    FutureInputs future;
    future.w.push_back(w_hat);
    if (spec.recipe.covariate_count > 0) future.z.push_back(data.z_at(origin + 1));
    auto fc = forecast_gaussian(run, spec, data, origin, 1, NetworkPolicy::user_supplied, future);
    return fc.front();
}

Selection select_hyperparams(const PanelData& data, const GaussianSpec& base_spec,
                             const std::vector<HyperCandidate>& grid) {
    if (grid.empty()) throw InvalidArgument("select_hyperparams: empty grid");
    Selection sel;
    double best = -std::numeric_limits<double>::infinity();
    double best_trace = std::numeric_limits<double>::infinity();
    std::ostringstream failures;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const auto& cand = grid[i];
        SelectionRow row;
        row.label = cand.label.empty() ? "candidate_" + std::to_string(i) : cand.label;
        GaussianSpec spec = base_spec;
        spec.state_noise = cand.state_noise;
        spec.obs_noise = cand.obs_noise;
        try {
            spec.validate(data.n_nodes());
            row.noise_trace = spec.state_noise.baseline_trace();
            row.loglik = fit_gaussian(data, spec).loglik;
            row.valid = std::isfinite(row.loglik);
            if (!row.valid) row.message = "non-finite log-likelihood";
        } catch (const std::exception& e) {
            row.valid = false;
            row.message = e.what();
        }
        if (!row.valid) failures << "\n  " << row.label << ": " << row.message;
        if (row.valid && (row.loglik > best || (row.loglik == best && row.noise_trace < best_trace))) {
            best = row.loglik;
            best_trace = row.noise_trace;
            sel.chosen = static_cast<int>(i);
            sel.spec = std::move(spec);
        }
        sel.table.push_back(std::move(row));
    }
    if (sel.chosen < 0) throw NumericalError("select_hyperparams: every candidate failed:" + failures.str());
    return sel;
}

lgss::FilterRun fit_joint_node_edge(const PanelData& data, const MatrixXd& edge_obs,
                                    const GaussianSpec& spec) {
    data.validate();
    spec.validate(data.n_nodes());
    if (!spec.edge) throw InvalidArgument("fit_joint_node_edge: spec has no edge submodel");
    const auto& e = *spec.edge;
    const auto* qn = std::get_if<lgss::ConstantNoise>(&spec.state_noise.mode);
    const auto* qe = std::get_if<lgss::ConstantNoise>(&e.noise.mode);
    if (qn == nullptr || qe == nullptr)
        throw InvalidArgument("fit_joint_node_edge: joint filtering needs constant state noise");
    if (spec.state_noise.transition.size() > 0 || e.noise.transition.size() > 0)
        throw InvalidArgument("fit_joint_node_edge: joint state evolves as a random walk");
    if (edge_obs.rows() != data.n_times() || edge_obs.cols() != e.loading.rows())
        throw InvalidArgument("fit_joint_node_edge: edge observations must be T x M");

    const int kn = spec.state_dim();
    const auto ke = static_cast<int>(e.loading.cols());
    const int kj = kn + ke;
    const auto m = e.loading.rows();

    MatrixXd q = MatrixXd::Zero(kj, kj);
    q.topLeftCorner(kn, kn) = qn->q;
    q.bottomRightCorner(ke, ke) = qe->q;
    lgss::Belief init;
    init.mean.resize(kj);
    init.mean << spec.m0, e.m0;
    init.cov = MatrixXd::Zero(kj, kj);
    init.cov.topLeftCorner(kn, kn) = spec.p0;
    init.cov.bottomRightCorner(ke, ke) = e.p0;
    const int p = spec.recipe.lag_order;
    init.time_index = p - 1;

    MatrixXd he = MatrixXd::Zero(m, kj);
    he.rightCols(ke) = e.loading;
    std::vector<int> times;
    for (int t = p; t < data.n_times(); ++t) times.push_back(t);
    const MatrixXd empty_w = MatrixXd::Zero(data.n_nodes(), data.n_nodes());

    auto provider = [&](int k, const lgss::Belief&) {
        const int t = p + k;
        const auto lags = lag_window(data.y, t, p);
        const MatrixXd& w = spec.recipe.include_network_lags ? data.w_at(t) : empty_w;
        const auto x = design::build_design(w, lags, data.z_at(t), spec.recipe);
        MatrixXd hn = MatrixXd::Zero(data.n_nodes(), kj);
        hn.leftCols(kn) = x.x;
        std::vector<lgss::ObsBlock> blocks;
        blocks.push_back(lgss::ObsBlock::dense(he, edge_obs.row(t).transpose(), e.u, lgss::BlockLabel::edge));
        blocks.push_back(node_block(hn, data.y.row(t).transpose(), spec.obs_noise));
        return blocks;
    };
    return lgss::run_filter(init, lgss::StateNoiseSpec::constant(q), data.n_times() - p, provider, times);
}

}  // namespace nssm::gauss
