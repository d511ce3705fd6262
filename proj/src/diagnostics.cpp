#include "nssm/diagnostics.hpp"

#include "nssm/design.hpp"
#include "nssm/errors.hpp"
#include "nssm/stats.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace nssm::diag {

namespace {

void check_window(const VectorXd& beta1, const VectorXd& beta2, int t, int h, const char* who) {
    if (beta1.size() != beta2.size()) throw InvalidArgument(std::string(who) + ": paths differ in length");
    if (h < 1) throw InvalidArgument(std::string(who) + ": horizon must be >= 1");
    if (t < 0 || t + h >= beta1.size())
        throw InvalidArgument(std::string(who) + ": paths must cover t+1..t+h");
}

double largest_singular_value(const MatrixXd& m) {
    if (m.size() == 0) return 0.0;
    Eigen::BDCSVD<MatrixXd> svd(m);
    return svd.singularValues()(0);
}

double growth_factor(const VectorXd& b1, const VectorXd& b2, double c_w, int t, int h) {
    double m = 0.0;
    for (int k = 1; k <= h; ++k) m = std::max(m, std::abs(b1(t + k)) * c_w + std::abs(b2(t + k)));
    return m;
}

}  // namespace

StabilityReport stability_report(const VectorXd& beta1, const VectorXd& beta2,
                                 const std::vector<MatrixXd>& w_seq) {
    if (beta1.size() != beta2.size()) throw InvalidArgument("stability_report: paths differ in length");
    if (w_seq.empty()) throw InvalidArgument("stability_report: empty network sequence");
    if (w_seq.size() != 1 && static_cast<Eigen::Index>(w_seq.size()) != beta1.size())
        throw InvalidArgument("stability_report: network sequence must match the paths or be static");
    StabilityReport rep;
    for (Eigen::Index t = 0; t < beta1.size(); ++t) {
        const MatrixXd& w = w_seq.size() == 1 ? w_seq.front() : w_seq[static_cast<std::size_t>(t)];
        const MatrixXd b = design::spillover_matrix(beta1(t), beta2(t), w);
        StabilityRow row;
        row.t = static_cast<int>(t);
        row.op_norm = graph::operator_norm(b);
        row.spectral_radius = graph::spectral_radius(b).value;
        row.inf_norm = graph::inf_norm(b);
        row.proxy = std::abs(beta1(t)) + std::abs(beta2(t));
        rep.max_op_norm = std::max(rep.max_op_norm, row.op_norm);
        rep.max_spectral_radius = std::max(rep.max_spectral_radius, row.spectral_radius);
        rep.max_inf_norm = std::max(rep.max_inf_norm, row.inf_norm);
        rep.max_proxy = std::max(rep.max_proxy, row.proxy);
        rep.rows.push_back(row);
    }
    rep.contraction = rep.max_op_norm < 1.0;
    return rep;
}

HopDecomp hop_coefficients(const VectorXd& beta1, const VectorXd& beta2, int t, int h) {
    check_window(beta1, beta2, t, h, "hop_coefficients");
    VectorXd c = VectorXd::Zero(h + 1);
    c(0) = 1.0;
    for (int k = 1; k <= h; ++k) {
        const double b1 = beta1(t + k);
        const double b2 = beta2(t + k);
        for (int r = k; r >= 1; --r) c(r) = b2 * c(r) + b1 * c(r - 1);
        c(0) *= b2;
    }
    return HopDecomp{t, h, c};
}

VectorXd hop_coefficients_by_subsets(const VectorXd& beta1, const VectorXd& beta2, int t, int h) {
    check_window(beta1, beta2, t, h, "hop_coefficients_by_subsets");
    if (h > 20) throw InvalidArgument("hop_coefficients_by_subsets: horizon too large to enumerate");
    VectorXd c = VectorXd::Zero(h + 1);
    for (unsigned mask = 0; mask < (1U << h); ++mask) {
        double prod = 1.0;
        int r = 0;
        for (int k = 1; k <= h; ++k) {
            if (mask & (1U << (k - 1))) {
                prod *= beta1(t + k);
                ++r;
            } else {
                prod *= beta2(t + k);
            }
        }
        c(r) += prod;
    }
    return c;
}

MatrixXd propagation_matrix(const VectorXd& beta1, const VectorXd& beta2, const MatrixXd& w, int t, int h) {
    check_window(beta1, beta2, t, h, "propagation_matrix");
    MatrixXd phi = MatrixXd::Identity(w.rows(), w.cols());
    for (int k = 1; k <= h; ++k) phi = design::spillover_matrix(beta1(t + k), beta2(t + k), w) * phi;
    return phi;
}

IrfResult irf(const MatrixXd& w, const HopDecomp& decomp, int shock_node) {
    const auto n = w.rows();
    if (shock_node < 0 || shock_node >= n) throw InvalidArgument("irf: shock node out of range");
    if (decomp.c.size() != decomp.horizon + 1) throw InvalidArgument("irf: malformed hop decomposition");
    IrfResult out;
    out.contributions.resize(n, decomp.horizon + 1);
    VectorXd walk = VectorXd::Unit(n, shock_node);
    for (int r = 0; r <= decomp.horizon; ++r) {
        if (r > 0) walk = w * walk;
        out.contributions.col(r) = decomp.c(r) * walk;
    }
    out.total = out.contributions.rowwise().sum();
    return out;
}

IrfResult irf(const std::vector<MatrixXd>& w_seq, const HopDecomp& decomp, int shock_node) {
    if (w_seq.empty()) throw InvalidArgument("irf: empty network sequence");
    for (const auto& w : w_seq)
        if (w.rows() != w_seq.front().rows() || w != w_seq.front())
            throw Unsupported("irf: hop attribution needs a single W over the horizon; the network varies");
    return irf(w_seq.front(), decomp, shock_node);
}

double macro_irf(const graph::InvariantVector& pi, const VectorXd& beta1, const VectorXd& beta2, int t,
                 int h, int shock_node) {
    check_window(beta1, beta2, t, h, "macro_irf");
    if (shock_node < 0 || shock_node >= pi.pi.size()) throw InvalidArgument("macro_irf: shock node out of range");
    double prod = pi.pi(shock_node);
    for (int k = 1; k <= h; ++k) prod *= beta1(t + k) + beta2(t + k);
    return prod;
}

double counterfactual_bound(const VectorXd& beta1, const VectorXd& beta2, double c_w, double delta_w,
                            int t, int h) {
    check_window(beta1, beta2, t, h, "counterfactual_bound");
    if (!(c_w >= 0.0) || !(delta_w >= 0.0))
        throw InvalidArgument("counterfactual_bound: C_W and delta_W must be nonnegative");
    double sum_b1 = 0.0;
    for (int k = 1; k <= h; ++k) sum_b1 += std::abs(beta1(t + k));
    return std::pow(growth_factor(beta1, beta2, c_w, t, h), h - 1) * sum_b1 * delta_w;
}

double counterfactual_gap(const VectorXd& beta1, const VectorXd& beta2, const MatrixXd& w,
                          const MatrixXd& w_cf, int t, int h) {
    return largest_singular_value(propagation_matrix(beta1, beta2, w, t, h) -
                                  propagation_matrix(beta1, beta2, w_cf, t, h));
}

double irf_error_bound(const VectorXd& beta1, const VectorXd& beta2, const VectorXd& beta1_hat,
                       const VectorXd& beta2_hat, double c_w, double delta_w, int t, int h) {
    check_window(beta1, beta2, t, h, "irf_error_bound");
    check_window(beta1_hat, beta2_hat, t, h, "irf_error_bound");
    const double m = std::max(growth_factor(beta1, beta2, c_w, t, h),
                              growth_factor(beta1_hat, beta2_hat, c_w, t, h));
    double acc = 0.0;
    for (int k = 1; k <= h; ++k)
        acc += c_w * std::abs(beta1_hat(t + k) - beta1(t + k)) + std::abs(beta2_hat(t + k) - beta2(t + k)) +
               std::abs(beta1_hat(t + k)) * delta_w;
    return std::pow(m, h - 1) * acc;
}

VectorXd aggregate_recursion(const VectorXd& beta0, const VectorXd& beta1, const VectorXd& beta2,
                             const VectorXd& zbar, double ybar0, const VectorXd& ebar) {
    const auto t_count = beta0.size();
    if (beta1.size() != t_count || beta2.size() != t_count)
        throw InvalidArgument("aggregate_recursion: paths differ in length");
    if ((zbar.size() != 0 && zbar.size() != t_count) || (ebar.size() != 0 && ebar.size() != t_count))
        throw InvalidArgument("aggregate_recursion: zbar and ebar must match the paths");
    VectorXd ybar(t_count);
    if (t_count == 0) return ybar;
    ybar(0) = ybar0;
    for (Eigen::Index t = 1; t < t_count; ++t) {
        double v = beta0(t) + (beta1(t) + beta2(t)) * ybar(t - 1);
        if (zbar.size() != 0) v += zbar(t);
        if (ebar.size() != 0) v += ebar(t);
        ybar(t) = v;
    }
    return ybar;
}

MesoReduction meso_reduce(const std::vector<MatrixXd>& w_seq, const graph::Partition& part,
                          const MatrixXd& y, const VectorXd& beta0, const VectorXd& beta1,
                          const VectorXd& beta2, const MatrixXd& exog, const MatrixXd& innovations) {
    const auto t_count = y.rows();
    const auto n = y.cols();
    if (part.n_nodes() != n) throw InvalidArgument("meso_reduce: partition size differs from N");
    if (beta0.size() != t_count || beta1.size() != t_count || beta2.size() != t_count)
        throw InvalidArgument("meso_reduce: coefficient paths must have one entry per row");
    if (w_seq.empty() || (w_seq.size() != 1 && static_cast<Eigen::Index>(w_seq.size()) != t_count))
        throw InvalidArgument("meso_reduce: network sequence must have length T or 1");
    auto check_tn = [&](const MatrixXd& m, const char* name) {
        if (m.size() != 0 && (m.rows() != t_count || m.cols() != n))
            throw InvalidArgument(std::string("meso_reduce: ") + name + " must be T x N");
    };
    check_tn(exog, "exog");
    check_tn(innovations, "innovations");

    const MatrixXd avg = part.averaging_operator();
    const VectorXd ones_c = VectorXd::Ones(part.n_communities());
    MesoReduction out;
    out.reduced.reserve(static_cast<std::size_t>(t_count));
    for (Eigen::Index t = 0; t < t_count; ++t) out.reduced.push_back(avg * y.row(t).transpose());

    for (Eigen::Index t = 1; t < t_count; ++t) {
        const MatrixXd& w = w_seq.size() == 1 ? w_seq.front() : w_seq[static_cast<std::size_t>(t)];
        graph::WeightMatrix wm{w, graph::Provenance::observed, {}};
        const graph::QuotientMap q = graph::quotient_operator(wm, part);
        const VectorXd y_prev = y.row(t - 1).transpose();
        const MatrixXd defect = avg * w - q.omega * avg;

        MesoStep st;
        st.t = static_cast<int>(t);
        st.delta = largest_singular_value(defect);
        st.remainder_norm = std::abs(beta1(t)) * (defect * y_prev).norm();
        st.remainder_bound = std::abs(beta1(t)) * st.delta * y_prev.norm();
        VectorXd pred = beta0(t) * ones_c + beta1(t) * q.omega * out.reduced[static_cast<std::size_t>(t - 1)] +
                        beta2(t) * out.reduced[static_cast<std::size_t>(t - 1)];
        if (exog.size() != 0) pred += avg * exog.row(t).transpose();
        if (innovations.size() != 0) pred += avg * innovations.row(t).transpose();
        st.residual = (out.reduced[static_cast<std::size_t>(t)] - pred).norm();
        out.omega.push_back(q.omega);
        out.steps.push_back(st);
    }
    return out;
}

BreakSet detect_breaks(const MatrixXd& theta_hat, const VectorXd& d) {
    const auto t_count = theta_hat.rows();
    const auto k = theta_hat.cols();
    if (t_count < 3) throw InvalidArgument("detect_breaks: need T >= 3");
    if (d.size() != k) throw InvalidArgument("detect_breaks: one threshold per coefficient");
    if (!(d.array() > 0.0).all()) throw InvalidArgument("detect_breaks: thresholds must be positive");
    BreakSet out;
    out.thresholds = d;
    out.activations.assign(static_cast<std::size_t>(k), {});
    for (Eigen::Index j = 0; j < k; ++j)
        for (Eigen::Index t = 2; t <= t_count; ++t)
            if (std::abs(theta_hat(t - 1, j) - theta_hat(t - 2, j)) > d(j))
                out.activations[static_cast<std::size_t>(j)].push_back(static_cast<int>(t));
    return out;
}

VectorXd data_scaled_threshold(const MatrixXd& theta_hat, double factor) {
    if (theta_hat.rows() < 2) throw InvalidArgument("data_scaled_threshold: need at least two rows");
    if (!(factor > 0.0)) throw InvalidArgument("data_scaled_threshold: factor must be positive");
    VectorXd d(theta_hat.cols());
    for (Eigen::Index j = 0; j < theta_hat.cols(); ++j) {
        std::vector<double> inc;
        for (Eigen::Index t = 1; t < theta_hat.rows(); ++t)
            inc.push_back(std::abs(theta_hat(t, j) - theta_hat(t - 1, j)));
        d(j) = factor * stats::median(std::move(inc));
    }
    return d;
}

double rate_threshold(int n_times, double c) {
    if (n_times < 2) throw InvalidArgument("rate_threshold: need T >= 2");
    const double t = n_times;
    return c * std::sqrt(std::log(t) / t);
}

double sensitivity_bound(double b1, double delta_w, double y_norm_sq) {
    if (b1 < 0.0 || delta_w < 0.0 || y_norm_sq < 0.0)
        throw InvalidArgument("sensitivity_bound: inputs must be nonnegative");
    return b1 * b1 * delta_w * delta_w * y_norm_sq;
}

}  // namespace nssm::diag
