#pragma once

#include <Eigen/Dense>
#include <vector>

#include "msdc/rng.hpp"

namespace msdc {

/// Shape of one CNN stack: conv layers (stride 1, zero-padded to preserve
/// length, ReLU) followed by one ReLU hidden FC layer and a linear output
/// FC layer producing output_len * num_states values per window.
struct NetworkConfig {
    int input_len = 0;   // w
    int output_len = 0;  // q
    int num_states = 0;  // M
    std::vector<int> conv_channels = {30, 30, 40, 50, 50, 50};
    std::vector<int> conv_kernels = {10, 8, 6, 5, 5, 5};
    int fc_hidden = 1024;

    int output_dim() const { return output_len * num_states; }
    void validate() const;
};

/// Flat-parameter layout of one stack. Per conv layer the weight block is
/// row-major [out_channel][in_channel][kernel_pos] followed by the bias;
/// then fc1 [hidden][channel * position] + bias, fc2 [out][hidden] + bias.
struct ParamLayout {
    struct ConvLayer {
        int in_channels, out_channels, kernel, weight_offset, bias_offset;
    };
    struct DenseLayer {
        int in_dim, out_dim, weight_offset, bias_offset;
    };
    std::vector<ConvLayer> conv;
    DenseLayer fc1, fc2;
    int total = 0;

    static ParamLayout build(const NetworkConfig& config);
};

int param_count(const NetworkConfig& config);

/// Uniform init in +-sqrt(6 / (fan_in + fan_out)); biases zero.
Eigen::VectorXd init_params(const NetworkConfig& config, Rng& rng);

/// Per-stack scratch space; activations are cached for the backward pass.
/// Layout of conv activations: (channels x (len * batch)), column b*len+p.
struct StackWorkspace {
    std::vector<Eigen::MatrixXd> conv_act;  // post-ReLU per conv layer
    std::vector<Eigen::MatrixXd> im2col;    // input columns per conv layer
    Eigen::MatrixXd input_rows;             // 1 x (len * batch)
    Eigen::MatrixXd flat;                   // (channels*len) x batch, fc input
    Eigen::MatrixXd fc1_act;                // hidden x batch, post-ReLU
    Eigen::MatrixXd output;                 // (q*M) x batch
    // backward scratch
    Eigen::MatrixXd d_act, d_cols, d_flat, d_fc1;
};

/// Forward pass over a batch: input (w x B) -> workspace.output (qM x B).
void stack_forward(const NetworkConfig& config, const Eigen::VectorXd& params,
                   const Eigen::MatrixXd& input, StackWorkspace& ws);

/// Accumulates d loss / d params into `grad` (same length as params) given
/// d loss / d output. Requires the workspace of the matching forward call.
void stack_backward(const NetworkConfig& config, const Eigen::VectorXd& params,
                    const Eigen::MatrixXd& d_output, StackWorkspace& ws, Eigen::VectorXd& grad);

}  // namespace msdc
