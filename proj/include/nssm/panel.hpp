#pragma once

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace nssm {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// How the network operator for future steps is obtained at forecast time.
enum class NetworkPolicy { oracle, carry_forward, user_supplied };

[[nodiscard]] std::string to_string(NetworkPolicy p);
[[nodiscard]] NetworkPolicy parse_network_policy(const std::string& s);

/// Observed panel with its network and covariate sequences.
///
/// Rows of `y` are time points. `w_seq` holds one N x N operator per time
/// point, or a single operator for a static network. `z` is either empty
/// (no covariates) or holds one N x q block per time point.
struct PanelData {
    MatrixXd y;
    std::vector<MatrixXd> w_seq;
    std::vector<MatrixXd> z;

    [[nodiscard]] int n_times() const { return static_cast<int>(y.rows()); }
    [[nodiscard]] int n_nodes() const { return static_cast<int>(y.cols()); }
    [[nodiscard]] bool static_network() const { return w_seq.size() == 1; }
    [[nodiscard]] int n_covariates() const;

    /// Network operator in force at time t. Throws when t is outside the sequence.
    [[nodiscard]] const MatrixXd& w_at(int t) const;
    /// Covariates at time t (N x 0 when there are none).
    [[nodiscard]] MatrixXd z_at(int t) const;

    /// Copy restricted to rows [0, t_end).
    [[nodiscard]] PanelData head(int t_end) const;

    void validate() const;
};

/// {y_{t-1}, ..., y_{t-p}} from the rows of `y`.
[[nodiscard]] std::vector<VectorXd> lag_window(const MatrixXd& y, int t, int p);

}  // namespace nssm
