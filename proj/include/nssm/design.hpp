#pragma once

#include <Eigen/Dense>

#include <span>
#include <string>
#include <utility>
#include <vector>

namespace nssm::design {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Which regressor blocks make up the design, and in what multiplicity.
///
/// Column order is fixed: intercept, then W^r y_{t-l} for each network power r
/// (outer) and lag l (inner), then own lags y_{t-l}, then the q covariates.
struct DesignRecipe {
    int lag_order = 1;
    bool include_intercept = true;
    bool include_network_lags = true;
    bool include_own_lags = true;
    std::vector<int> network_powers{1};
    int covariate_count = 0;

    [[nodiscard]] int n_columns() const;
    void validate() const;

    /// Column of W^power y_{t-lag}, or -1 when absent.
    [[nodiscard]] int network_column(int power, int lag) const;
    /// Column of y_{t-lag}, or -1 when absent.
    [[nodiscard]] int own_column(int lag) const;
    /// First covariate column, or -1 when q = 0.
    [[nodiscard]] int covariate_offset() const;
    [[nodiscard]] std::vector<std::string> column_labels() const;
};

struct DesignMatrix {
    MatrixXd x;
    std::vector<std::string> column_labels;
};

/// Pseudo-observation block s_t = S y_t + nu_t with nu_t ~ N(0, V).
struct SummaryAugment {
    MatrixXd s;
    MatrixXd v;

    void validate() const;
};

/// Design rows for one time step. `y_lags[0]` is y_{t-1}. Z has N rows and
/// q columns (may be empty when q = 0).
[[nodiscard]] DesignMatrix build_design(const MatrixXd& w, std::span<const VectorXd> y_lags,
                                        const MatrixXd& z, const DesignRecipe& recipe);

/// B = beta1 * W + beta2 * I.
[[nodiscard]] MatrixXd spillover_matrix(double beta1, double beta2, const MatrixXd& w);

/// Stack node rows with summary rows: H = [X; S X], R = blockdiag(R, V).
[[nodiscard]] std::pair<MatrixXd, MatrixXd> augment_summaries(const DesignMatrix& x,
                                                              const MatrixXd& r,
                                                              const SummaryAugment& aug);

}  // namespace nssm::design
