#pragma once

#include "nssm/lgss.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace nssm::cp {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Rank-R CP factors of the N x N x p lag tensor. Stacked order: every mode-1
/// vector, then every mode-2 vector, then every mode-3 vector.
struct CPFactors {
    int n = 0;
    int p = 0;
    std::vector<VectorXd> mode1;  ///< R vectors of length N
    std::vector<VectorXd> mode2;  ///< R vectors of length N
    std::vector<VectorXd> mode3;  ///< R vectors of length p

    [[nodiscard]] int rank() const { return static_cast<int>(mode1.size()); }
    [[nodiscard]] int state_dim() const { return rank() * (2 * n + p); }
    [[nodiscard]] VectorXd stack() const;
    /// Stacked block of one mode (1, 2 or 3).
    [[nodiscard]] VectorXd mode_block(int mode) const;
    void set_mode_block(int mode, const VectorXd& block);
    [[nodiscard]] static CPFactors unstack(const VectorXd& xi, int rank, int n, int p);
    [[nodiscard]] static CPFactors zeros(int rank, int n, int p);
    void validate() const;
};

/// {y_{t-1}, ..., y_{t-p}}.
using LagWindow = std::span<const VectorXd>;

/// Dense slices B_l = sum_r b3_r(l) b1_r b2_r'.
[[nodiscard]] std::vector<MatrixXd> cp_reconstruct(const CPFactors& f);

/// sum_r b1_r (b2_r' s_r) with s_r = sum_l b3_r(l) y_{t-l}, without forming slices.
[[nodiscard]] VectorXd cp_mean(const CPFactors& f, LagWindow lags);

/// Design of the mean as a linear function of one mode's stacked block with
/// the other two held fixed; multiplying it by that block gives cp_mean.
[[nodiscard]] MatrixXd conditional_design(const CPFactors& f, int mode, LagWindow lags);

/// Canonical form: equal mode-1/mode-2 norms per component, positive first
/// nonzero mode-1 entry, components by descending norm product.
[[nodiscard]] CPFactors sign_fix(const CPFactors& f);

struct CPNoise {
    std::array<double, 3> q{1e-4, 1e-4, 1e-4};   ///< random-walk variance per mode
    std::array<double, 3> p0{1.0, 1.0, 1.0};     ///< prior variance per mode
    double sigma2 = 1.0;
};

struct SweepSchedule {
    std::vector<int> order{1, 2, 3};
    int sweeps = 2;
};

struct CPFilterResult {
    int rank = 0;
    int lag_order = 1;
    std::vector<CPFactors> filtered;        ///< means after each step, time p..T-1
    std::vector<std::array<lgss::Belief, 3>> beliefs;
    std::vector<VectorXd> one_step_mean;    ///< g at the predicted means
    std::vector<double> step_loglik;
    double loglik = 0.0;
    int skipped_updates = 0;
};

/// Alternating conditional filter. Every step predicts the three mode beliefs
/// as independent random walks; each sweep then conditions each mode, from
/// its own prediction, on a design built at the other modes' current means.
/// `init` overrides the default start (mode-3 = e1, modes 1 and 2 small
/// random draws from `seed`).
[[nodiscard]] CPFilterResult cp_filter_alternating(const MatrixXd& y, int rank, int p,
                                                   const CPNoise& noise,
                                                   const SweepSchedule& schedule = {},
                                                   std::uint64_t seed = 0,
                                                   const std::optional<CPFactors>& init = std::nullopt);

}  // namespace nssm::cp
