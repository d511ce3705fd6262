#include "nssm/design.hpp"

#include "nssm/errors.hpp"
#include "nssm/graph.hpp"

#include <sstream>

namespace nssm::design {

int DesignRecipe::n_columns() const {
    const int net = include_network_lags ? static_cast<int>(network_powers.size()) * lag_order : 0;
    const int own = include_own_lags ? lag_order : 0;
    return (include_intercept ? 1 : 0) + net + own + covariate_count;
}

void DesignRecipe::validate() const {
    if (lag_order < 1) throw InvalidArgument("DesignRecipe: lag_order must be >= 1");
    if (covariate_count < 0) throw InvalidArgument("DesignRecipe: covariate_count must be >= 0");
    if (include_network_lags) {
        if (network_powers.empty())
            throw InvalidArgument("DesignRecipe: network lags requested with no network powers");
        for (int r : network_powers)
            if (r < 1) throw InvalidArgument("DesignRecipe: network powers must be positive");
    }
    if (n_columns() == 0) throw InvalidArgument("empty design");
}

int DesignRecipe::network_column(int power, int lag) const {
    if (!include_network_lags || lag < 1 || lag > lag_order) return -1;
    int col = include_intercept ? 1 : 0;
    for (int r : network_powers) {
        if (r == power) return col + lag - 1;
        col += lag_order;
    }
    return -1;
}

int DesignRecipe::own_column(int lag) const {
    if (!include_own_lags || lag < 1 || lag > lag_order) return -1;
    const int net = include_network_lags ? static_cast<int>(network_powers.size()) * lag_order : 0;
    return (include_intercept ? 1 : 0) + net + lag - 1;
}

int DesignRecipe::covariate_offset() const {
    if (covariate_count == 0) return -1;
    return n_columns() - covariate_count;
}

std::vector<std::string> DesignRecipe::column_labels() const {
    std::vector<std::string> labels;
    if (include_intercept) labels.emplace_back("intercept");
    if (include_network_lags) {
        for (int r : network_powers) {
            const std::string w = r == 1 ? "WY" : "W" + std::to_string(r) + "Y";
            for (int l = 1; l <= lag_order; ++l) labels.push_back(w + "_lag_" + std::to_string(l));
        }
    }
    if (include_own_lags)
        for (int l = 1; l <= lag_order; ++l) labels.push_back("Y_lag_" + std::to_string(l));
    for (int m = 1; m <= covariate_count; ++m) labels.push_back("Z_col_" + std::to_string(m));
    return labels;
}

void SummaryAugment::validate() const {
    if (v.rows() != v.cols() || v.rows() != s.rows())
        throw InvalidArgument("SummaryAugment: V must be M x M with M = rows(S)");
    if (!v.isApprox(v.transpose(), 1e-12))
        throw InvalidArgument("SummaryAugment: V must be symmetric");
    Eigen::LLT<MatrixXd> llt(v);
    if (llt.info() != Eigen::Success)
        throw InvalidArgument("SummaryAugment: V must be positive definite");
}

DesignMatrix build_design(const MatrixXd& w, std::span<const VectorXd> y_lags, const MatrixXd& z,
                          const DesignRecipe& recipe) {
    recipe.validate();
    const auto p = static_cast<std::size_t>(recipe.lag_order);
    if (y_lags.size() != p) {
        std::ostringstream os;
        os << "build_design: lag block has " << y_lags.size() << " vectors, recipe needs " << p;
        throw InvalidArgument(os.str());
    }
    const Eigen::Index n = y_lags[0].size();
    for (const auto& y : y_lags)
        if (y.size() != n) throw InvalidArgument("build_design: lag block vectors differ in length");
    if (recipe.include_network_lags && (w.rows() != n || w.cols() != n)) {
        std::ostringstream os;
        os << "build_design: network block W is " << w.rows() << "x" << w.cols() << ", expected " << n
           << "x" << n;
        throw InvalidArgument(os.str());
    }
    if (recipe.covariate_count > 0 && (z.rows() != n || z.cols() != recipe.covariate_count)) {
        std::ostringstream os;
        os << "build_design: covariate block Z is " << z.rows() << "x" << z.cols() << ", expected "
           << n << "x" << recipe.covariate_count;
        throw InvalidArgument(os.str());
    }

    DesignMatrix out{MatrixXd(n, recipe.n_columns()), recipe.column_labels()};
    int col = 0;
    if (recipe.include_intercept) out.x.col(col++).setOnes();
    if (recipe.include_network_lags) {
        for (int r : recipe.network_powers)
            for (std::size_t l = 0; l < p; ++l) out.x.col(col++) = graph::apply_power(w, y_lags[l], r);
    }
    if (recipe.include_own_lags)
        for (std::size_t l = 0; l < p; ++l) out.x.col(col++) = y_lags[l];
    if (recipe.covariate_count > 0) {
        out.x.middleCols(col, recipe.covariate_count) = z;
        col += recipe.covariate_count;
    }
    if (!out.x.allFinite()) throw InvalidArgument("build_design: non-finite entry in design");
    return out;
}

MatrixXd spillover_matrix(double beta1, double beta2, const MatrixXd& w) {
    if (w.rows() != w.cols()) throw InvalidArgument("spillover_matrix: W must be square");
    MatrixXd b = beta1 * w;
    b.diagonal().array() += beta2;
    return b;
}

std::pair<MatrixXd, MatrixXd> augment_summaries(const DesignMatrix& x, const MatrixXd& r,
                                                const SummaryAugment& aug) {
    aug.validate();
    const Eigen::Index n = x.x.rows();
    if (aug.s.cols() != n) {
        std::ostringstream os;
        os << "augment_summaries: S has " << aug.s.cols() << " columns but the design has " << n
           << " rows";
        throw InvalidArgument(os.str());
    }
    if (r.rows() != n || r.cols() != n) throw InvalidArgument("augment_summaries: R must be N x N");
    const Eigen::Index m = aug.s.rows();
    MatrixXd h(n + m, x.x.cols());
    h.topRows(n) = x.x;
    h.bottomRows(m) = aug.s * x.x;
    MatrixXd rr = MatrixXd::Zero(n + m, n + m);
    rr.topLeftCorner(n, n) = r;
    rr.bottomRightCorner(m, m) = aug.v;
    return {h, rr};
}

}  // namespace nssm::design
