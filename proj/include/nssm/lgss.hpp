#pragma once

#include <Eigen/Dense>

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace nssm::lgss {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Gaussian state summary N(mean, cov) at a given time.
struct Belief {
    VectorXd mean;
    MatrixXd cov;
    int time_index = 0;

    [[nodiscard]] int dim() const { return static_cast<int>(mean.size()); }
    /// Throws NumericalError if cov is not symmetric PSD to 1e-10.
    void validate() const;
};

struct ConstantNoise {
    MatrixXd q;
};

/// Latent-threshold innovation variances: q_j = q0_j, or q1_j once the
/// previous increment of coefficient j exceeded d_j.
struct ThresholdNoise {
    VectorXd q0;
    VectorXd q1;
    VectorXd d;
};

struct StateNoiseSpec {
    std::variant<ConstantNoise, ThresholdNoise> mode;
    /// Empty means identity.
    MatrixXd transition;

    [[nodiscard]] static StateNoiseSpec constant(MatrixXd q);
    [[nodiscard]] static StateNoiseSpec threshold(VectorXd q0, VectorXd q1, VectorXd d);

    [[nodiscard]] int dim() const;
    [[nodiscard]] bool is_threshold() const { return std::holds_alternative<ThresholdNoise>(mode); }
    [[nodiscard]] MatrixXd transition_matrix() const;
    /// Sum of the baseline innovation variances (trace Q, or sum q0).
    [[nodiscard]] double baseline_trace() const;
    void validate() const;
};

enum class BlockLabel { node, edge, summary };

/// One linear-Gaussian observation block y = H x + e, e ~ N(0, R).
/// R is stored either as a diagonal or as a dense matrix.
class ObsBlock {
public:
    [[nodiscard]] static ObsBlock diagonal(MatrixXd h, VectorXd y, VectorXd r_diag,
                                           BlockLabel label = BlockLabel::node);
    [[nodiscard]] static ObsBlock dense(MatrixXd h, VectorXd y, MatrixXd r,
                                        BlockLabel label = BlockLabel::node);

    [[nodiscard]] const MatrixXd& h() const { return h_; }
    [[nodiscard]] const VectorXd& y() const { return y_; }
    [[nodiscard]] bool is_diagonal() const { return diagonal_; }
    [[nodiscard]] const VectorXd& r_diag() const { return r_diag_; }
    [[nodiscard]] MatrixXd r() const;
    [[nodiscard]] BlockLabel label() const { return label_; }
    [[nodiscard]] int size() const { return static_cast<int>(y_.size()); }

private:
    ObsBlock() = default;
    MatrixXd h_;
    VectorXd y_;
    VectorXd r_diag_;
    MatrixXd r_dense_;
    bool diagonal_ = true;
    BlockLabel label_ = BlockLabel::node;
};

struct FilterRun {
    Belief initial;
    std::vector<Belief> filtered;
    std::vector<Belief> predicted;
    std::vector<MatrixXd> q_seq;  ///< innovation covariance used at each step
    MatrixXd transition;          ///< empty = identity
    double loglik = 0.0;
    std::vector<double> step_loglik;
    std::optional<Eigen::MatrixXi> threshold_states;

    [[nodiscard]] int n_steps() const { return static_cast<int>(filtered.size()); }
    /// Index into filtered/predicted for a given time index, or -1.
    [[nodiscard]] int step_of_time(int time_index) const;
};

struct UpdateResult {
    Belief belief;
    double loglik = 0.0;
};

struct TwoBlockResult {
    Belief belief;
    double loglik_edge = 0.0;
    double loglik_node = 0.0;
};

struct ThresholdDraw {
    MatrixXd q;
    Eigen::VectorXi s;
};

/// mean <- F m, cov <- F P F' + Q.
[[nodiscard]] Belief predict(const Belief& b, const StateNoiseSpec& spec, const MatrixXd& q_t);

/// Conditioning on one observation block. Joseph-form covariance; returns the
/// innovation log density log N(y - H m; 0, H P H' + R).
[[nodiscard]] UpdateResult update(const Belief& b, const ObsBlock& obs);

/// Edge block first, then node block (whose design may depend on the edges).
[[nodiscard]] TwoBlockResult two_block_update(const Belief& b, const ObsBlock& edge,
                                              const ObsBlock& node);

/// Rauch-Tung-Striebel backward pass over a completed run.
[[nodiscard]] std::vector<Belief> rts_smooth(const FilterRun& run);

/// q_jt = q0_j + s_jt (q1_j - q0_j) with s_jt = 1{|prev_j - prev2_j| > d_j}.
[[nodiscard]] ThresholdDraw threshold_Q(const VectorXd& theta_prev, const VectorXd& theta_prev2,
                                        const StateNoiseSpec& spec);

/// Observation blocks for a step given the predicted belief. An empty list
/// leaves the belief at its prediction.
using ObsProvider = std::function<std::vector<ObsBlock>(int step, const Belief& predicted)>;

/// Sequential predict/update driver. The threshold indicator at step k uses
/// the filtered means of steps k-1 and k-2 (the initial mean stands in for
/// step -1); at step 0 no increment is available and s = 0.
[[nodiscard]] FilterRun run_filter(const Belief& init, const StateNoiseSpec& spec, int n_steps,
                                   const ObsProvider& provider,
                                   std::span<const int> time_index = {});

/// Threshold indicators recomputed from smoothed means (post-pass).
[[nodiscard]] Eigen::MatrixXi reevaluate_thresholds(const Belief& initial,
                                                    std::span<const Belief> smoothed,
                                                    const StateNoiseSpec& spec);

/// Symmetrize in place: P <- (P + P') / 2.
void symmetrize(MatrixXd& p);

/// Gaussian log density of x under N(mean, cov) (dense Cholesky).
[[nodiscard]] double mvn_logpdf(const VectorXd& x, const VectorXd& mean, const MatrixXd& cov);

}  // namespace nssm::lgss
