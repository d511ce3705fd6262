#include "nssm/tensorcp.hpp"

#include "nssm/errors.hpp"
#include "nssm/panel.hpp"
#include "nssm/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace nssm::cp {

namespace {

void check_lags(const CPFactors& f, LagWindow lags) {
    if (static_cast<int>(lags.size()) != f.p) throw InvalidArgument("lag window must hold exactly p vectors");
    for (const auto& v : lags)
        if (v.size() != f.n) throw InvalidArgument("lag vectors must have length N");
}

void check_mode(int mode) {
    if (mode < 1 || mode > 3) throw InvalidArgument("mode must be 1, 2 or 3");
}

VectorXd lag_combination(const VectorXd& weights, LagWindow lags) {
    VectorXd s = VectorXd::Zero(lags.front().size());
    for (std::size_t l = 0; l < lags.size(); ++l) s += weights(static_cast<Eigen::Index>(l)) * lags[l];
    return s;
}

}  // namespace

VectorXd CPFactors::stack() const {
    VectorXd xi(state_dim());
    Eigen::Index pos = 0;
    for (const auto* mode : {&mode1, &mode2, &mode3})
        for (const auto& v : *mode) {
            xi.segment(pos, v.size()) = v;
            pos += v.size();
        }
    return xi;
}

VectorXd CPFactors::mode_block(int mode) const {
    check_mode(mode);
    const auto& vecs = mode == 1 ? mode1 : mode == 2 ? mode2 : mode3;
    const int len = mode == 3 ? p : n;
    VectorXd b(rank() * len);
    for (int r = 0; r < rank(); ++r) b.segment(r * len, len) = vecs[static_cast<std::size_t>(r)];
    return b;
}

void CPFactors::set_mode_block(int mode, const VectorXd& block) {
    check_mode(mode);
    auto& vecs = mode == 1 ? mode1 : mode == 2 ? mode2 : mode3;
    const int len = mode == 3 ? p : n;
    if (block.size() != rank() * len) throw InvalidArgument("set_mode_block: block has wrong length");
    for (int r = 0; r < rank(); ++r) vecs[static_cast<std::size_t>(r)] = block.segment(r * len, len);
}

CPFactors CPFactors::unstack(const VectorXd& xi, int rank, int n, int p) {
    if (rank < 0 || n < 1 || p < 1) throw InvalidArgument("unstack: invalid dimensions");
    if (xi.size() != rank * (2 * n + p)) throw InvalidArgument("unstack: stacked length must be R(2N+p)");
    CPFactors f = zeros(rank, n, p);
    Eigen::Index pos = 0;
    for (auto* mode : {&f.mode1, &f.mode2, &f.mode3})
        for (auto& v : *mode) {
            v = xi.segment(pos, v.size());
            pos += v.size();
        }
    return f;
}

CPFactors CPFactors::zeros(int rank, int n, int p) {
    CPFactors f;
    f.n = n;
    f.p = p;
    f.mode1.assign(static_cast<std::size_t>(rank), VectorXd::Zero(n));
    f.mode2.assign(static_cast<std::size_t>(rank), VectorXd::Zero(n));
    f.mode3.assign(static_cast<std::size_t>(rank), VectorXd::Zero(p));
    return f;
}

void CPFactors::validate() const {
    if (n < 1 || p < 1) throw InvalidArgument("CPFactors: N and p must be positive");
    if (mode2.size() != mode1.size() || mode3.size() != mode1.size())
        throw InvalidArgument("CPFactors: modes disagree on the rank");
    for (int r = 0; r < rank(); ++r) {
        const auto i = static_cast<std::size_t>(r);
        if (mode1[i].size() != n || mode2[i].size() != n || mode3[i].size() != p)
            throw InvalidArgument("CPFactors: factor vector has wrong length");
    }
}

std::vector<MatrixXd> cp_reconstruct(const CPFactors& f) {
    f.validate();
    std::vector<MatrixXd> slices(static_cast<std::size_t>(f.p), MatrixXd::Zero(f.n, f.n));
    for (int r = 0; r < f.rank(); ++r) {
        const auto i = static_cast<std::size_t>(r);
        const MatrixXd outer = f.mode1[i] * f.mode2[i].transpose();
        for (int l = 0; l < f.p; ++l) slices[static_cast<std::size_t>(l)] += f.mode3[i](l) * outer;
    }
    return slices;
}

VectorXd cp_mean(const CPFactors& f, LagWindow lags) {
    f.validate();
    check_lags(f, lags);
    VectorXd g = VectorXd::Zero(f.n);
    for (int r = 0; r < f.rank(); ++r) {
        const auto i = static_cast<std::size_t>(r);
        g += f.mode1[i] * f.mode2[i].dot(lag_combination(f.mode3[i], lags));
    }
    return g;
}

MatrixXd conditional_design(const CPFactors& f, int mode, LagWindow lags) {
    f.validate();
    check_lags(f, lags);
    check_mode(mode);
    const int rank = f.rank();
    const int len = mode == 3 ? f.p : f.n;
    MatrixXd h = MatrixXd::Zero(f.n, rank * len);
    for (int r = 0; r < rank; ++r) {
        const auto i = static_cast<std::size_t>(r);
        if (mode == 1) {
            const double alpha = f.mode2[i].dot(lag_combination(f.mode3[i], lags));
            h.middleCols(r * len, len).diagonal().setConstant(alpha);
        } else if (mode == 2) {
            h.middleCols(r * len, len) = f.mode1[i] * lag_combination(f.mode3[i], lags).transpose();
        } else {
            VectorXd m(f.p);
            for (int l = 0; l < f.p; ++l) m(l) = f.mode2[i].dot(lags[static_cast<std::size_t>(l)]);
            h.middleCols(r * len, len) = f.mode1[i] * m.transpose();
        }
    }
    return h;
}

CPFactors sign_fix(const CPFactors& f) {
    f.validate();
    CPFactors g = f;
    for (int r = 0; r < g.rank(); ++r) {
        const auto i = static_cast<std::size_t>(r);
        const double n1 = g.mode1[i].norm();
        const double n2 = g.mode2[i].norm();
        if (n1 > 0.0 && n2 > 0.0) {
            const double s = std::sqrt(n2 / n1);
            g.mode1[i] *= s;
            g.mode2[i] /= s;
        }
        for (Eigen::Index k = 0; k < g.n; ++k) {
            if (g.mode1[i](k) == 0.0) continue;
            if (g.mode1[i](k) < 0.0) {
                g.mode1[i] = -g.mode1[i];
                g.mode2[i] = -g.mode2[i];
            }
            break;
        }
    }
    std::vector<int> order(static_cast<std::size_t>(g.rank()));
    std::iota(order.begin(), order.end(), 0);
    auto weight = [&](int r) {
        const auto i = static_cast<std::size_t>(r);
        return g.mode1[i].norm() * g.mode2[i].norm() * g.mode3[i].norm();
    };
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return weight(a) > weight(b); });
    CPFactors out = g;
    for (std::size_t k = 0; k < order.size(); ++k) {
        const auto src = static_cast<std::size_t>(order[k]);
        out.mode1[k] = g.mode1[src];
        out.mode2[k] = g.mode2[src];
        out.mode3[k] = g.mode3[src];
    }
    return out;
}

CPFilterResult cp_filter_alternating(const MatrixXd& y, int rank, int p, const CPNoise& noise,
                                     const SweepSchedule& schedule, std::uint64_t seed,
                                     const std::optional<CPFactors>& init) {
    const auto t_count = static_cast<int>(y.rows());
    const auto n = static_cast<int>(y.cols());
    if (rank < 1) throw InvalidArgument("cp_filter_alternating: rank must be >= 1");
    if (p < 1 || t_count <= p) throw InvalidArgument("cp_filter_alternating: panel must be longer than p");
    if (!y.allFinite()) throw InvalidArgument("cp_filter_alternating: non-finite data");
    if (!(noise.sigma2 > 0.0)) throw InvalidArgument("cp_filter_alternating: sigma2 must be positive");
    for (int k = 0; k < 3; ++k)
        if (noise.q[static_cast<std::size_t>(k)] < 0.0 || noise.p0[static_cast<std::size_t>(k)] < 0.0)
            throw InvalidArgument("cp_filter_alternating: variances must be nonnegative");
    if (schedule.sweeps < 1 || schedule.order.empty())
        throw InvalidArgument("cp_filter_alternating: schedule needs at least one sweep and one mode");
    for (int m : schedule.order) check_mode(m);

    CPFactors start = CPFactors::zeros(rank, n, p);
    if (init) {
        init->validate();
        if (init->rank() != rank || init->n != n || init->p != p)
            throw InvalidArgument("cp_filter_alternating: initial factors have wrong shape");
        start = *init;
    } else {
        Rng rng = make_rng(seed, "cp_init");
        std::normal_distribution<double> z(0.0, 0.1);
        for (int r = 0; r < rank; ++r) {
            const auto i = static_cast<std::size_t>(r);
            for (int k = 0; k < n; ++k) start.mode1[i](k) = z(rng);
            for (int k = 0; k < n; ++k) start.mode2[i](k) = z(rng);
            start.mode3[i](0) = 1.0;
        }
    }

    std::array<lgss::Belief, 3> belief;
    std::array<lgss::StateNoiseSpec, 3> rw;
    std::array<MatrixXd, 3> q;
    for (int m = 1; m <= 3; ++m) {
        const auto k = static_cast<std::size_t>(m - 1);
        const VectorXd mean = start.mode_block(m);
        const auto d = mean.size();
        belief[k] = lgss::Belief{mean, noise.p0[k] * MatrixXd::Identity(d, d), p - 1};
        q[k] = noise.q[k] * MatrixXd::Identity(d, d);
        rw[k] = lgss::StateNoiseSpec::constant(q[k]);
    }

    CPFilterResult out;
    out.rank = rank;
    out.lag_order = p;
    const VectorXd r_diag = VectorXd::Constant(n, noise.sigma2);
    const MatrixXd obs_cov = noise.sigma2 * MatrixXd::Identity(n, n);
    for (int t = p; t < t_count; ++t) {
        const auto lags = lag_window(y, t, p);
        const VectorXd yt = y.row(t).transpose();
        std::array<lgss::Belief, 3> pred;
        CPFactors current = start;
        for (int m = 1; m <= 3; ++m) {
            const auto k = static_cast<std::size_t>(m - 1);
            pred[k] = lgss::predict(belief[k], rw[k], q[k]);
            pred[k].time_index = t;
            current.set_mode_block(m, pred[k].mean);
        }
        const VectorXd g = cp_mean(current, lags);
        const double ll = lgss::mvn_logpdf(yt, g, obs_cov);
        out.one_step_mean.push_back(g);
        out.step_loglik.push_back(ll);
        out.loglik += ll;

        std::array<lgss::Belief, 3> post = pred;
        for (int sweep = 0; sweep < schedule.sweeps; ++sweep) {
            for (int m : schedule.order) {
                const auto k = static_cast<std::size_t>(m - 1);
                const MatrixXd h = conditional_design(current, m, lags);
                if (h.cwiseAbs().maxCoeff() == 0.0) {
                    ++out.skipped_updates;
                    continue;
                }
                post[k] = lgss::update(pred[k], lgss::ObsBlock::diagonal(h, yt, r_diag)).belief;
                post[k].time_index = t;
                current.set_mode_block(m, post[k].mean);
            }
        }
        belief = post;
        start = current;
        out.filtered.push_back(current);
        out.beliefs.push_back(post);
    }
    return out;
}

}  // namespace nssm::cp
