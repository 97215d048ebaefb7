#include "msdc/network.hpp"

#include <cmath>

#include "msdc/errors.hpp"

namespace msdc {

void NetworkConfig::validate() const {
    if (input_len <= 0 || output_len <= 0 || num_states <= 0) {
        throw UsageError("NetworkConfig: input_len, output_len, num_states must be positive");
    }
    if (conv_channels.empty() || conv_channels.size() != conv_kernels.size()) {
        throw UsageError("NetworkConfig: conv_channels and conv_kernels must match and be nonempty");
    }
    for (std::size_t i = 0; i < conv_channels.size(); ++i) {
        if (conv_channels[i] <= 0 || conv_kernels[i] <= 0 || conv_kernels[i] > input_len) {
            throw UsageError("NetworkConfig: invalid conv layer " + std::to_string(i));
        }
    }
    if (fc_hidden <= 0) {
        throw UsageError("NetworkConfig: fc_hidden must be positive");
    }
}

ParamLayout ParamLayout::build(const NetworkConfig& config) {
    config.validate();
    ParamLayout layout;
    int offset = 0;
    int in_channels = 1;
    for (std::size_t l = 0; l < config.conv_channels.size(); ++l) {
        ConvLayer layer;
        layer.in_channels = in_channels;
        layer.out_channels = config.conv_channels[l];
        layer.kernel = config.conv_kernels[l];
        layer.weight_offset = offset;
        offset += layer.out_channels * layer.in_channels * layer.kernel;
        layer.bias_offset = offset;
        offset += layer.out_channels;
        layout.conv.push_back(layer);
        in_channels = layer.out_channels;
    }
    layout.fc1.in_dim = in_channels * config.input_len;
    layout.fc1.out_dim = config.fc_hidden;
    layout.fc1.weight_offset = offset;
    offset += layout.fc1.in_dim * layout.fc1.out_dim;
    layout.fc1.bias_offset = offset;
    offset += layout.fc1.out_dim;

    layout.fc2.in_dim = config.fc_hidden;
    layout.fc2.out_dim = config.output_dim();
    layout.fc2.weight_offset = offset;
    offset += layout.fc2.in_dim * layout.fc2.out_dim;
    layout.fc2.bias_offset = offset;
    offset += layout.fc2.out_dim;

    layout.total = offset;
    return layout;
}

int param_count(const NetworkConfig& config) {
    return ParamLayout::build(config).total;
}

Eigen::VectorXd init_params(const NetworkConfig& config, Rng& rng) {
    const ParamLayout layout = ParamLayout::build(config);
    // Small positive bias keeps ReLU units off the exact-zero kink (a unit
    // fed an all-zero window would otherwise sit at pre-activation 0, where
    // the subgradient and a finite-difference probe disagree).
    constexpr double kBiasInit = 0.01;
    Eigen::VectorXd params = Eigen::VectorXd::Constant(layout.total, kBiasInit);
    auto fill_uniform = [&](int offset, int count, int fan_in, int fan_out) {
        const double bound = std::sqrt(6.0 / (fan_in + fan_out));
        for (int i = 0; i < count; ++i) params(offset + i) = rng.uniform(-bound, bound);
    };
    for (const auto& c : layout.conv) {
        fill_uniform(c.weight_offset, c.out_channels * c.in_channels * c.kernel,
                     c.in_channels * c.kernel, c.out_channels * c.kernel);
    }
    fill_uniform(layout.fc1.weight_offset, layout.fc1.in_dim * layout.fc1.out_dim, layout.fc1.in_dim,
                 layout.fc1.out_dim);
    fill_uniform(layout.fc2.weight_offset, layout.fc2.in_dim * layout.fc2.out_dim, layout.fc2.in_dim,
                 layout.fc2.out_dim);
    return params;
}

namespace {

using ConstMap = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using Map = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;
using VecMap = Eigen::Map<Eigen::VectorXd>;

// Gathers zero-padded sliding columns: src is (C x (L*B)), dst becomes
// (C*K x (L*B)) with dst(c*K + k, b*L + p) = src(c, b*L + p + k - pad_left).
void im2col(const Eigen::MatrixXd& src, int len, int batch, int kernel, Eigen::MatrixXd& dst) {
    const int channels = static_cast<int>(src.rows());
    const int pad_left = (kernel - 1) / 2;
    dst.resize(channels * kernel, static_cast<Eigen::Index>(len) * batch);
    for (int c = 0; c < channels; ++c) {
        for (int k = 0; k < kernel; ++k) {
            const int row = c * kernel + k;
            const int shift = k - pad_left;
            for (int b = 0; b < batch; ++b) {
                const int col0 = b * len;
                const int lo = std::max(0, -shift);
                const int hi = std::min(len, len - shift);
                if (lo > 0) dst.row(row).segment(col0, lo).setZero();
                if (hi < len) dst.row(row).segment(col0 + hi, len - hi).setZero();
                if (hi > lo) {
                    dst.row(row).segment(col0 + lo, hi - lo) =
                        src.row(c).segment(col0 + lo + shift, hi - lo);
                }
            }
        }
    }
}

// Scatter-accumulate transpose of im2col.
void col2im(const Eigen::MatrixXd& cols, int len, int batch, int kernel, Eigen::MatrixXd& dst,
            int channels) {
    const int pad_left = (kernel - 1) / 2;
    dst.setZero(channels, static_cast<Eigen::Index>(len) * batch);
    for (int c = 0; c < channels; ++c) {
        for (int k = 0; k < kernel; ++k) {
            const int row = c * kernel + k;
            const int shift = k - pad_left;
            for (int b = 0; b < batch; ++b) {
                const int col0 = b * len;
                const int lo = std::max(0, -shift);
                const int hi = std::min(len, len - shift);
                if (hi > lo) {
                    dst.row(c).segment(col0 + lo + shift, hi - lo) +=
                        cols.row(row).segment(col0 + lo, hi - lo);
                }
            }
        }
    }
}

}  // namespace

void stack_forward(const NetworkConfig& config, const Eigen::VectorXd& params,
                   const Eigen::MatrixXd& input, StackWorkspace& ws) {
    const ParamLayout layout = ParamLayout::build(config);
    if (params.size() != layout.total) {
        throw DataError("stack_forward: parameter vector size mismatch");
    }
    if (input.rows() != config.input_len) {
        throw DataError("stack_forward: input window length mismatch");
    }
    const int len = config.input_len;
    const int batch = static_cast<int>(input.cols());
    const std::size_t n_conv = layout.conv.size();
    ws.conv_act.resize(n_conv);
    ws.im2col.resize(n_conv);

    // Input (w x B) viewed as one channel of length w per batch element.
    ws.input_rows.resize(1, static_cast<Eigen::Index>(len) * batch);
    for (int b = 0; b < batch; ++b) {
        ws.input_rows.block(0, static_cast<Eigen::Index>(b) * len, 1, len) =
            input.col(b).transpose();
    }

    const Eigen::MatrixXd* prev = &ws.input_rows;
    for (std::size_t l = 0; l < n_conv; ++l) {
        const auto& c = layout.conv[l];
        im2col(*prev, len, batch, c.kernel, ws.im2col[l]);
        ConstMap weights(params.data() + c.weight_offset, c.out_channels,
                         c.in_channels * c.kernel);
        ConstVecMap bias(params.data() + c.bias_offset, c.out_channels);
        ws.conv_act[l].noalias() = weights * ws.im2col[l];
        ws.conv_act[l].colwise() += bias;
        ws.conv_act[l] = ws.conv_act[l].cwiseMax(0.0);  // ReLU
        prev = &ws.conv_act[l];
    }

    // Flatten (channels x len*batch) -> (channels*len x batch), feature
    // index c*len + p.
    const int last_channels = layout.conv.back().out_channels;
    ws.flat.resize(static_cast<Eigen::Index>(last_channels) * len, batch);
    for (int b = 0; b < batch; ++b) {
        for (int c = 0; c < last_channels; ++c) {
            ws.flat.col(b).segment(static_cast<Eigen::Index>(c) * len, len) =
                prev->row(c).segment(static_cast<Eigen::Index>(b) * len, len).transpose();
        }
    }

    ConstMap w1(params.data() + layout.fc1.weight_offset, layout.fc1.out_dim, layout.fc1.in_dim);
    ConstVecMap b1(params.data() + layout.fc1.bias_offset, layout.fc1.out_dim);
    ws.fc1_act.noalias() = w1 * ws.flat;
    ws.fc1_act.colwise() += b1;
    ws.fc1_act = ws.fc1_act.cwiseMax(0.0);

    ConstMap w2(params.data() + layout.fc2.weight_offset, layout.fc2.out_dim, layout.fc2.in_dim);
    ConstVecMap b2(params.data() + layout.fc2.bias_offset, layout.fc2.out_dim);
    ws.output.noalias() = w2 * ws.fc1_act;
    ws.output.colwise() += b2;
}

void stack_backward(const NetworkConfig& config, const Eigen::VectorXd& params,
                    const Eigen::MatrixXd& d_output, StackWorkspace& ws, Eigen::VectorXd& grad) {
    const ParamLayout layout = ParamLayout::build(config);
    if (grad.size() != layout.total) {
        throw DataError("stack_backward: gradient vector size mismatch");
    }
    if (d_output.rows() != config.output_dim() || d_output.cols() != ws.output.cols()) {
        throw DataError("stack_backward: output gradient shape mismatch");
    }
    const int len = config.input_len;
    const int batch = static_cast<int>(d_output.cols());

    // fc2 (linear output)
    {
        Map dw2(grad.data() + layout.fc2.weight_offset, layout.fc2.out_dim, layout.fc2.in_dim);
        VecMap db2(grad.data() + layout.fc2.bias_offset, layout.fc2.out_dim);
        ConstMap w2(params.data() + layout.fc2.weight_offset, layout.fc2.out_dim,
                    layout.fc2.in_dim);
        dw2.noalias() += d_output * ws.fc1_act.transpose();
        db2.noalias() += d_output.rowwise().sum();
        ws.d_fc1.noalias() = w2.transpose() * d_output;
    }

    // fc1 with ReLU
    {
        ws.d_fc1 = ws.d_fc1.cwiseProduct((ws.fc1_act.array() > 0.0).cast<double>().matrix());
        Map dw1(grad.data() + layout.fc1.weight_offset, layout.fc1.out_dim, layout.fc1.in_dim);
        VecMap db1(grad.data() + layout.fc1.bias_offset, layout.fc1.out_dim);
        ConstMap w1(params.data() + layout.fc1.weight_offset, layout.fc1.out_dim,
                    layout.fc1.in_dim);
        dw1.noalias() += ws.d_fc1 * ws.flat.transpose();
        db1.noalias() += ws.d_fc1.rowwise().sum();
        ws.d_flat.noalias() = w1.transpose() * ws.d_fc1;
    }

    // Unflatten to (channels x len*batch).
    const int last_channels = layout.conv.back().out_channels;
    ws.d_act.resize(last_channels, static_cast<Eigen::Index>(len) * batch);
    for (int b = 0; b < batch; ++b) {
        for (int c = 0; c < last_channels; ++c) {
            ws.d_act.row(c).segment(static_cast<Eigen::Index>(b) * len, len) =
                ws.d_flat.col(b).segment(static_cast<Eigen::Index>(c) * len, len).transpose();
        }
    }

    for (int l = static_cast<int>(layout.conv.size()) - 1; l >= 0; --l) {
        const auto& c = layout.conv[l];
        // ReLU mask, then weight/bias/input gradients of the convolution.
        ws.d_act = ws.d_act.cwiseProduct((ws.conv_act[l].array() > 0.0).cast<double>().matrix());
        Map dw(grad.data() + c.weight_offset, c.out_channels, c.in_channels * c.kernel);
        VecMap db(grad.data() + c.bias_offset, c.out_channels);
        ConstMap w(params.data() + c.weight_offset, c.out_channels, c.in_channels * c.kernel);
        dw.noalias() += ws.d_act * ws.im2col[l].transpose();
        db.noalias() += ws.d_act.rowwise().sum();
        if (l > 0) {
            ws.d_cols.noalias() = w.transpose() * ws.d_act;
            col2im(ws.d_cols, len, batch, c.kernel, ws.d_act, c.in_channels);
        }
    }
}

}  // namespace msdc
