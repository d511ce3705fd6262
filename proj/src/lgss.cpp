#include "nssm/lgss.hpp"

#include "nssm/errors.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <numbers>
#include <sstream>

namespace nssm::lgss {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;
constexpr double kSymTol = 1e-10;
constexpr double kPsdTol = 1e-10;

void check_psd(const MatrixXd& p, const char* where) {
    if (p.size() == 0) return;
    if (!p.allFinite()) throw NumericalError(std::string(where) + ": non-finite covariance");
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(p, Eigen::EigenvaluesOnly);
    const double scale = std::max(1.0, p.diagonal().cwiseAbs().maxCoeff());
    const double min_eig = es.eigenvalues().minCoeff();
    if (min_eig < -kPsdTol * scale) {
        std::ostringstream os;
        os << where << ": covariance has negative eigenvalue " << min_eig;
        throw NumericalError(os.str());
    }
}

double rcond_estimate(const MatrixXd& s) {
    Eigen::JacobiSVD<MatrixXd> svd(s);
    const auto& sv = svd.singularValues();
    if (sv.size() == 0 || sv(0) == 0.0) return 0.0;
    return sv(sv.size() - 1) / sv(0);
}

UpdateResult update_dense(const Belief& b, const ObsBlock& obs) {
    const MatrixXd& h = obs.h();
    const MatrixXd r = obs.r();
    const MatrixXd ph = b.cov * h.transpose();
    MatrixXd s = h * ph + r;
    symmetrize(s);
    Eigen::LLT<MatrixXd> llt(s);
    if (llt.info() != Eigen::Success || !(llt.rcond() > 1e-14)) {
        const double rc = llt.info() == Eigen::Success ? llt.rcond() : rcond_estimate(s);
        std::ostringstream os;
        os << "update: innovation covariance is not positive definite (rcond " << rc << ")";
        throw NumericalError(os.str(), rc);
    }
    const VectorXd v = obs.y() - h * b.mean;
    const MatrixXd gain = llt.solve(ph.transpose()).transpose();  // P H' S^-1
    const MatrixXd a = MatrixXd::Identity(b.dim(), b.dim()) - gain * h;

    UpdateResult out;
    out.belief.time_index = b.time_index;
    out.belief.mean = b.mean + gain * v;
    out.belief.cov = a * b.cov * a.transpose() + gain * r * gain.transpose();
    symmetrize(out.belief.cov);

    const VectorXd sv = llt.solve(v);
    const double logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
    out.loglik = -0.5 * (static_cast<double>(v.size()) * kLog2Pi + logdet + v.dot(sv));
    return out;
}

// Diagonal R with more rows than states. With P = L L' and C = I + L' G L,
// G = H' R^-1 H, push-through identities keep every solve K x K:
// posterior cov L C^-1 L', gain times innovation L C^-1 L' H' R^-1 v, and
// det S = det R det C. C >= I, so it can only fail to factor on overflow.
UpdateResult update_diagonal(const Belief& b, const ObsBlock& obs) {
    const MatrixXd& h = obs.h();
    const VectorXd& r = obs.r_diag();
    const Eigen::Index k = b.dim();
    const VectorXd rinv = r.cwiseInverse();
    const VectorXd v = obs.y() - h * b.mean;

    const MatrixXd hr = h.transpose() * rinv.asDiagonal();  // H' R^-1
    const MatrixXd g = hr * h;
    const VectorXd gv = hr * v;

    const Eigen::SelfAdjointEigenSolver<MatrixXd> es(b.cov);
    const MatrixXd l = es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
    MatrixXd c = MatrixXd::Identity(k, k) + l.transpose() * g * l;
    symmetrize(c);
    Eigen::LLT<MatrixXd> llt(c);
    if (llt.info() != Eigen::Success || !c.allFinite()) {
        std::ostringstream os;
        os << "update: innovation covariance could not be factored (non-finite or overflowing design)";
        throw NumericalError(os.str(), 0.0);
    }

    const VectorXd lgv = l.transpose() * gv;
    const VectorXd c_lgv = llt.solve(lgv);
    const MatrixXd c_lt = llt.solve(l.transpose());

    UpdateResult out;
    out.belief.time_index = b.time_index;
    out.belief.mean = b.mean + l * c_lgv;
    out.belief.cov = l * c_lt;
    symmetrize(out.belief.cov);

    const double logdet_r = r.array().log().sum();
    const double logdet_c = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
    const double quad = v.dot(rinv.cwiseProduct(v)) - lgv.dot(c_lgv);
    out.loglik = -0.5 * (static_cast<double>(v.size()) * kLog2Pi + logdet_r + logdet_c + quad);
    return out;
}

}  // namespace

void symmetrize(MatrixXd& p) { p = 0.5 * (p + p.transpose()).eval(); }

void Belief::validate() const {
    if (cov.rows() != mean.size() || cov.cols() != mean.size())
        throw InvalidArgument("Belief: covariance dimension does not match mean");
    if (!mean.allFinite()) throw NumericalError("Belief: non-finite mean");
    if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > kSymTol * std::max(1.0, cov.cwiseAbs().maxCoeff()))
        throw NumericalError("Belief: covariance not symmetric");
    check_psd(cov, "Belief");
}

StateNoiseSpec StateNoiseSpec::constant(MatrixXd q) {
    StateNoiseSpec s{ConstantNoise{std::move(q)}, {}};
    s.validate();
    return s;
}

StateNoiseSpec StateNoiseSpec::threshold(VectorXd q0, VectorXd q1, VectorXd d) {
    StateNoiseSpec s{ThresholdNoise{std::move(q0), std::move(q1), std::move(d)}, {}};
    s.validate();
    return s;
}

int StateNoiseSpec::dim() const {
    if (const auto* c = std::get_if<ConstantNoise>(&mode)) return static_cast<int>(c->q.rows());
    return static_cast<int>(std::get<ThresholdNoise>(mode).q0.size());
}

MatrixXd StateNoiseSpec::transition_matrix() const {
    if (transition.size() == 0) return MatrixXd::Identity(dim(), dim());
    return transition;
}

double StateNoiseSpec::baseline_trace() const {
    if (const auto* c = std::get_if<ConstantNoise>(&mode)) return c->q.trace();
    return std::get<ThresholdNoise>(mode).q0.sum();
}

void StateNoiseSpec::validate() const {
    if (const auto* c = std::get_if<ConstantNoise>(&mode)) {
        if (c->q.rows() != c->q.cols()) throw InvalidArgument("StateNoiseSpec: Q must be square");
        if (c->q.size() > 0) {
            if (!c->q.isApprox(c->q.transpose(), 1e-12) && c->q.cwiseAbs().maxCoeff() > 0)
                throw InvalidArgument("StateNoiseSpec: Q must be symmetric");
            Eigen::SelfAdjointEigenSolver<MatrixXd> es(c->q, Eigen::EigenvaluesOnly);
            if (es.eigenvalues().minCoeff() < -kPsdTol)
                throw InvalidArgument("StateNoiseSpec: Q must be positive semidefinite");
        }
    } else {
        const auto& t = std::get<ThresholdNoise>(mode);
        if (t.q1.size() != t.q0.size() || t.d.size() != t.q0.size())
            throw InvalidArgument("StateNoiseSpec: q0, q1, d must have equal length");
        for (Eigen::Index j = 0; j < t.q0.size(); ++j) {
            if (!(t.q0(j) > 0.0) || !(t.q1(j) > 0.0) || !(t.d(j) > 0.0))
                throw InvalidArgument("StateNoiseSpec: q0, q1, d must be positive");
            if (!(t.q0(j) < t.q1(j)))
                throw InvalidArgument("StateNoiseSpec: threshold mode needs q0_j < q1_j");
        }
    }
    if (transition.size() > 0 && (transition.rows() != dim() || transition.cols() != dim()))
        throw InvalidArgument("StateNoiseSpec: transition must be K x K");
}

ObsBlock ObsBlock::diagonal(MatrixXd h, VectorXd y, VectorXd r_diag, BlockLabel label) {
    if (h.rows() != y.size() || r_diag.size() != y.size())
        throw InvalidArgument("ObsBlock: H rows, y and R must agree in length");
    for (Eigen::Index i = 0; i < r_diag.size(); ++i)
        if (!(r_diag(i) > 0.0) || !std::isfinite(r_diag(i)))
            throw InvalidArgument("ObsBlock: R must be positive definite");
    if (!h.allFinite() || !y.allFinite()) throw InvalidArgument("ObsBlock: non-finite H or y");
    ObsBlock b;
    b.h_ = std::move(h);
    b.y_ = std::move(y);
    b.r_diag_ = std::move(r_diag);
    b.diagonal_ = true;
    b.label_ = label;
    return b;
}

ObsBlock ObsBlock::dense(MatrixXd h, VectorXd y, MatrixXd r, BlockLabel label) {
    if (h.rows() != y.size() || r.rows() != y.size() || r.cols() != y.size())
        throw InvalidArgument("ObsBlock: H rows, y and R must agree in size");
    if (!h.allFinite() || !y.allFinite() || !r.allFinite())
        throw InvalidArgument("ObsBlock: non-finite H, y or R");
    if (!r.isApprox(r.transpose(), 1e-12)) throw InvalidArgument("ObsBlock: R must be symmetric");
    Eigen::LLT<MatrixXd> llt(r);
    if (llt.info() != Eigen::Success) throw InvalidArgument("ObsBlock: R must be positive definite");
    ObsBlock b;
    b.h_ = std::move(h);
    b.y_ = std::move(y);
    b.r_dense_ = std::move(r);
    b.diagonal_ = false;
    b.label_ = label;
    return b;
}

MatrixXd ObsBlock::r() const {
    if (diagonal_) return r_diag_.asDiagonal();
    return r_dense_;
}

int FilterRun::step_of_time(int time_index) const {
    for (std::size_t k = 0; k < filtered.size(); ++k)
        if (filtered[k].time_index == time_index) return static_cast<int>(k);
    return -1;
}

Belief predict(const Belief& b, const StateNoiseSpec& spec, const MatrixXd& q_t) {
    if (q_t.rows() != b.dim() || q_t.cols() != b.dim())
        throw InvalidArgument("predict: Q_t dimension does not match the state");
    Belief out;
    out.time_index = b.time_index + 1;
    if (spec.transition.size() == 0) {
        out.mean = b.mean;
        out.cov = b.cov + q_t;
    } else {
        const MatrixXd& f = spec.transition;
        out.mean = f * b.mean;
        out.cov = f * b.cov * f.transpose() + q_t;
    }
    symmetrize(out.cov);
    return out;
}

UpdateResult update(const Belief& b, const ObsBlock& obs) {
    if (obs.h().cols() != b.dim())
        throw InvalidArgument("update: observation design has wrong number of columns");
    UpdateResult out = (obs.is_diagonal() && obs.size() > b.dim()) ? update_diagonal(b, obs)
                                                                   : update_dense(b, obs);
    check_psd(out.belief.cov, "update");
    return out;
}

TwoBlockResult two_block_update(const Belief& b, const ObsBlock& edge, const ObsBlock& node) {
    const UpdateResult e = update(b, edge);
    const UpdateResult n = update(e.belief, node);
    return {n.belief, e.loglik, n.loglik};
}

std::vector<Belief> rts_smooth(const FilterRun& run) {
    const int n = run.n_steps();
    std::vector<Belief> sm(run.filtered.begin(), run.filtered.end());
    if (n <= 1) return sm;
    const bool identity = run.transition.size() == 0;
    for (int k = n - 2; k >= 0; --k) {
        const Belief& f = run.filtered[static_cast<std::size_t>(k)];
        const Belief& pn = run.predicted[static_cast<std::size_t>(k) + 1];
        const Belief& sn = sm[static_cast<std::size_t>(k) + 1];
        const MatrixXd pf_ft = identity ? f.cov : MatrixXd(f.cov * run.transition.transpose());
        Eigen::LDLT<MatrixXd> ldlt(pn.cov);
        if (ldlt.info() != Eigen::Success || !(ldlt.rcond() > 1e-14)) {
            std::ostringstream os;
            os << "rts_smooth: predicted covariance at step " << k + 1 << " is singular";
            throw NumericalError(os.str(), ldlt.info() == Eigen::Success ? ldlt.rcond() : 0.0);
        }
        const MatrixXd j = ldlt.solve(pf_ft.transpose()).transpose();
        Belief& s = sm[static_cast<std::size_t>(k)];
        s.mean = f.mean + j * (sn.mean - pn.mean);
        s.cov = f.cov + j * (sn.cov - pn.cov) * j.transpose();
        symmetrize(s.cov);
    }
    return sm;
}

ThresholdDraw threshold_Q(const VectorXd& theta_prev, const VectorXd& theta_prev2,
                          const StateNoiseSpec& spec) {
    const auto* t = std::get_if<ThresholdNoise>(&spec.mode);
    if (t == nullptr) throw InvalidArgument("threshold_Q: spec is not in threshold mode");
    const Eigen::Index k = t->q0.size();
    if (theta_prev.size() != k || theta_prev2.size() != k)
        throw InvalidArgument("threshold_Q: coefficient vectors have wrong length");
    ThresholdDraw out{MatrixXd::Zero(k, k), Eigen::VectorXi::Zero(k)};
    for (Eigen::Index j = 0; j < k; ++j) {
        out.s(j) = std::abs(theta_prev(j) - theta_prev2(j)) > t->d(j) ? 1 : 0;
        out.q(j, j) = t->q0(j) + out.s(j) * (t->q1(j) - t->q0(j));
    }
    return out;
}

FilterRun run_filter(const Belief& init, const StateNoiseSpec& spec, int n_steps,
                     const ObsProvider& provider, std::span<const int> time_index) {
    spec.validate();
    if (init.dim() != spec.dim()) throw InvalidArgument("run_filter: initial belief has wrong dimension");
    if (!time_index.empty() && static_cast<int>(time_index.size()) != n_steps)
        throw InvalidArgument("run_filter: time_index length must equal n_steps");
    init.validate();

    FilterRun run;
    run.initial = init;
    run.transition = spec.transition;
    run.filtered.reserve(static_cast<std::size_t>(n_steps));
    run.predicted.reserve(static_cast<std::size_t>(n_steps));
    run.q_seq.reserve(static_cast<std::size_t>(n_steps));
    if (spec.is_threshold()) run.threshold_states = Eigen::MatrixXi::Zero(n_steps, spec.dim());

    const MatrixXd* q_const = nullptr;
    if (const auto* c = std::get_if<ConstantNoise>(&spec.mode)) q_const = &c->q;

    for (int k = 0; k < n_steps; ++k) {
        const Belief& prev = k == 0 ? init : run.filtered.back();
        MatrixXd q;
        if (q_const != nullptr) {
            q = *q_const;
        } else {
            const VectorXd& last = prev.mean;
            const VectorXd& before = k >= 2 ? run.filtered[static_cast<std::size_t>(k) - 2].mean
                                   : k == 1 ? init.mean
                                            : prev.mean;
            ThresholdDraw td = threshold_Q(last, before, spec);
            run.threshold_states->row(k) = td.s.transpose();
            q = std::move(td.q);
        }
        Belief pred = predict(prev, spec, q);
        pred.time_index = time_index.empty() ? k + 1 : time_index[static_cast<std::size_t>(k)];

        Belief post = pred;
        double ll = 0.0;
        for (const ObsBlock& block : provider(k, pred)) {
            UpdateResult u = update(post, block);
            post = std::move(u.belief);
            ll += u.loglik;
        }
        post.time_index = pred.time_index;
        run.predicted.push_back(std::move(pred));
        run.filtered.push_back(std::move(post));
        run.q_seq.push_back(std::move(q));
        run.step_loglik.push_back(ll);
        run.loglik += ll;
    }
    return run;
}

Eigen::MatrixXi reevaluate_thresholds(const Belief& initial, std::span<const Belief> smoothed,
                                      const StateNoiseSpec& spec) {
    const auto n = static_cast<Eigen::Index>(smoothed.size());
    Eigen::MatrixXi s = Eigen::MatrixXi::Zero(n, spec.dim());
    for (Eigen::Index k = 1; k < n; ++k) {
        const VectorXd& last = smoothed[static_cast<std::size_t>(k) - 1].mean;
        const VectorXd& before =
            k >= 2 ? smoothed[static_cast<std::size_t>(k) - 2].mean : initial.mean;
        s.row(k) = threshold_Q(last, before, spec).s.transpose();
    }
    return s;
}

double mvn_logpdf(const VectorXd& x, const VectorXd& mean, const MatrixXd& cov) {
    Eigen::LLT<MatrixXd> llt(cov);
    if (llt.info() != Eigen::Success)
        throw NumericalError("mvn_logpdf: covariance is not positive definite", rcond_estimate(cov));
    const VectorXd v = x - mean;
    const double logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
    return -0.5 * (static_cast<double>(v.size()) * kLog2Pi + logdet + v.dot(llt.solve(v)));
}

}  // namespace nssm::lgss
