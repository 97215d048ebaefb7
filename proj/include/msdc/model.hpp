#pragma once

#include <Eigen/Dense>
#include <optional>
#include <vector>

#include "msdc/crf.hpp"
#include "msdc/network.hpp"

namespace msdc {

enum class LossKind { msdc, msdc_crf };
enum class CrfEmissionKind { log_prob, prob };

/// The two stacks share the input window but no parameters.
struct DualCnnParams {
    NetworkConfig config;
    Eigen::VectorXd state_net;
    Eigen::VectorXd value_net;
    double power_scale = 1.0;  // softplus output scale, watts
};

DualCnnParams init_dual_params(const NetworkConfig& config, double power_scale, Rng& rng);

/// Row-wise softmax of a (q x M) logit matrix.
Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& logits);

struct StateForwardResult {
    Eigen::MatrixXd logits;  // q x M
    Eigen::MatrixXd probs;   // q x M, rows sum to 1
};

/// Single-window forward passes (q x M window views of the stack output).
StateForwardResult forward_state(const DualCnnParams& params, const Eigen::VectorXd& input);
Eigen::MatrixXd forward_power(const DualCnnParams& params, const Eigen::VectorXd& input);

/// y_hat_tau = sum_s probs(tau, s) * powers(tau, s).
Eigen::VectorXd combine(const Eigen::MatrixXd& probs, const Eigen::MatrixXd& powers);

/// Per-row argmax; ties break toward the lower state index.
std::vector<int> decode_states(const Eigen::MatrixXd& probs);

/// Mean over tau of (target - combined prediction)^2.
double loss_power(const Eigen::MatrixXd& probs, const Eigen::MatrixXd& powers,
                  const Eigen::VectorXd& target_power);

/// Mean over tau of -log softmax(logits_tau)[label_tau].
double loss_state_ce(const Eigen::MatrixXd& logits, const std::vector<int>& labels);

/// J_MSDC = J_state + J_power for one window.
double loss_msdc(const Eigen::MatrixXd& logits, const Eigen::MatrixXd& powers,
                 const Eigen::VectorXd& target_power, const std::vector<int>& labels);

/// Numerically stable scaled softplus and its input.
double softplus(double x);
double sigmoid(double x);

struct ModelGradients {
    Eigen::VectorXd state_net;
    Eigen::VectorXd value_net;
    Eigen::MatrixXd crf_transition;
    Eigen::VectorXd crf_start;
    Eigen::VectorXd crf_stop;

    void set_zero(const DualCnnParams& params, int num_states);
    void add_scaled(const ModelGradients& other, double scale);
};

struct DualWorkspace {
    StackWorkspace state_ws;
    StackWorkspace value_ws;
    Eigen::MatrixXd probs;     // qM x B
    Eigen::MatrixXd log_probs; // qM x B
    Eigen::MatrixXd powers;    // qM x B
    Eigen::MatrixXd yhat;      // q x B
    Eigen::MatrixXd d_state;   // qM x B
    Eigen::MatrixXd d_value;   // qM x B
};

struct BatchLoss {
    double total = 0.0;
    double power = 0.0;
    double state = 0.0;  // cross-entropy or CRF part

    BatchLoss& operator+=(const BatchLoss& o) {
        total += o.total;
        power += o.power;
        state += o.state;
        return *this;
    }
};

/// Loss (and, when `grads` is non-null, exact analytic gradients) of the
/// configured objective over batch columns [col_begin, col_end). Per-window
/// losses are averaged over `batch_denominator` windows so that chunked
/// calls sum to the full-batch mean. `power_weight` scales the power term
/// inside the combined objective (1 = the plain J_state + J_power sum);
/// the reported BatchLoss::power stays unscaled watts^2 either way.
/// Throws NumericError on a non-finite loss or gradient.
BatchLoss dual_loss(const DualCnnParams& params, const CrfParams* crf, LossKind kind,
                    CrfEmissionKind emission, const Eigen::MatrixXd& inputs,
                    const Eigen::MatrixXd& target_power, const Eigen::MatrixXi& target_states,
                    int col_begin, int col_end, int batch_denominator, DualWorkspace& ws,
                    ModelGradients* grads, double power_weight = 1.0);

struct BatchPrediction {
    Eigen::MatrixXd power;  // q x B, combined prediction in watts
    Eigen::MatrixXi states; // q x B
};

/// Inference over batch columns: combined power plus decoded states
/// (per-step argmax for msdc, Viterbi for msdc_crf).
BatchPrediction predict_batch(const DualCnnParams& params, const CrfParams* crf, LossKind kind,
                              CrfEmissionKind emission, const Eigen::MatrixXd& inputs,
                              DualWorkspace& ws);

}  // namespace msdc
