#include "msdc/model.hpp"

#include <cmath>

#include "msdc/errors.hpp"

namespace msdc {

double softplus(double x) {
    if (x > 30.0) return x;
    if (x < -30.0) return std::exp(x);
    return std::log1p(std::exp(x));
}

double sigmoid(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

DualCnnParams init_dual_params(const NetworkConfig& config, double power_scale, Rng& rng) {
    DualCnnParams params;
    params.config = config;
    params.state_net = init_params(config, rng);
    params.value_net = init_params(config, rng);
    params.power_scale = power_scale;
    return params;
}

Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& logits) {
    Eigen::MatrixXd probs(logits.rows(), logits.cols());
    for (Eigen::Index r = 0; r < logits.rows(); ++r) {
        const double m = logits.row(r).maxCoeff();
        double sum = 0.0;
        for (Eigen::Index c = 0; c < logits.cols(); ++c) {
            probs(r, c) = std::exp(logits(r, c) - m);
            sum += probs(r, c);
        }
        probs.row(r) /= sum;
    }
    return probs;
}

namespace {

// Column data of the (qM x B) stack output viewed as a (q x M) window.
Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
window_view(const Eigen::MatrixXd& mat, Eigen::Index col, int q, int m) {
    return {mat.col(col).data(), q, m};
}

void check_window_shapes(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw DataError(std::string(op) + ": shape mismatch");
    }
}

}  // namespace

StateForwardResult forward_state(const DualCnnParams& params, const Eigen::VectorXd& input) {
    if (input.size() != params.config.input_len) {
        throw DataError("forward_state: input window length mismatch");
    }
    StackWorkspace ws;
    stack_forward(params.config, params.state_net, input, ws);
    StateForwardResult result;
    result.logits = window_view(ws.output, 0, params.config.output_len, params.config.num_states);
    result.probs = softmax_rows(result.logits);
    return result;
}

Eigen::MatrixXd forward_power(const DualCnnParams& params, const Eigen::VectorXd& input) {
    if (input.size() != params.config.input_len) {
        throw DataError("forward_power: input window length mismatch");
    }
    StackWorkspace ws;
    stack_forward(params.config, params.value_net, input, ws);
    Eigen::MatrixXd powers =
        window_view(ws.output, 0, params.config.output_len, params.config.num_states);
    for (Eigen::Index r = 0; r < powers.rows(); ++r) {
        for (Eigen::Index c = 0; c < powers.cols(); ++c) {
            powers(r, c) = params.power_scale * softplus(powers(r, c));
        }
    }
    return powers;
}

Eigen::VectorXd combine(const Eigen::MatrixXd& probs, const Eigen::MatrixXd& powers) {
    check_window_shapes(probs, powers, "combine");
    return (probs.array() * powers.array()).rowwise().sum().matrix();
}

std::vector<int> decode_states(const Eigen::MatrixXd& probs) {
    std::vector<int> labels(static_cast<std::size_t>(probs.rows()));
    for (Eigen::Index r = 0; r < probs.rows(); ++r) {
        int best = 0;
        for (Eigen::Index c = 1; c < probs.cols(); ++c) {
            if (probs(r, c) > probs(r, best)) best = static_cast<int>(c);
        }
        labels[static_cast<std::size_t>(r)] = best;
    }
    return labels;
}

double loss_power(const Eigen::MatrixXd& probs, const Eigen::MatrixXd& powers,
                  const Eigen::VectorXd& target_power) {
    check_window_shapes(probs, powers, "loss_power");
    if (target_power.size() != probs.rows()) {
        throw DataError("loss_power: target length mismatch");
    }
    const Eigen::VectorXd yhat = combine(probs, powers);
    return (target_power - yhat).squaredNorm() / static_cast<double>(probs.rows());
}

double loss_state_ce(const Eigen::MatrixXd& logits, const std::vector<int>& labels) {
    if (static_cast<Eigen::Index>(labels.size()) != logits.rows()) {
        throw DataError("loss_state_ce: label length mismatch");
    }
    double total = 0.0;
    for (Eigen::Index r = 0; r < logits.rows(); ++r) {
        const int label = labels[static_cast<std::size_t>(r)];
        if (label < 0 || label >= logits.cols()) {
            throw DataError("loss_state_ce: label out of range");
        }
        const double m = logits.row(r).maxCoeff();
        double sum = 0.0;
        for (Eigen::Index c = 0; c < logits.cols(); ++c) sum += std::exp(logits(r, c) - m);
        total += -(logits(r, label) - m - std::log(sum));
    }
    return total / static_cast<double>(logits.rows());
}

double loss_msdc(const Eigen::MatrixXd& logits, const Eigen::MatrixXd& powers,
                 const Eigen::VectorXd& target_power, const std::vector<int>& labels) {
    return loss_state_ce(logits, labels) + loss_power(softmax_rows(logits), powers, target_power);
}

void ModelGradients::set_zero(const DualCnnParams& params, int num_states) {
    state_net.setZero(params.state_net.size());
    value_net.setZero(params.value_net.size());
    crf_transition.setZero(num_states, num_states);
    crf_start.setZero(num_states);
    crf_stop.setZero(num_states);
}

void ModelGradients::add_scaled(const ModelGradients& other, double scale) {
    state_net += scale * other.state_net;
    value_net += scale * other.value_net;
    crf_transition += scale * other.crf_transition;
    crf_start += scale * other.crf_start;
    crf_stop += scale * other.crf_stop;
}

BatchLoss dual_loss(const DualCnnParams& params, const CrfParams* crf, LossKind kind,
                    CrfEmissionKind emission, const Eigen::MatrixXd& inputs,
                    const Eigen::MatrixXd& target_power, const Eigen::MatrixXi& target_states,
                    int col_begin, int col_end, int batch_denominator, DualWorkspace& ws,
                    ModelGradients* grads, double power_weight) {
    const int q = params.config.output_len;
    const int m = params.config.num_states;
    const int chunk = col_end - col_begin;
    if (chunk <= 0 || batch_denominator <= 0) {
        throw UsageError("dual_loss: empty batch chunk");
    }
    if (kind == LossKind::msdc_crf && crf == nullptr) {
        throw UsageError("dual_loss: msdc_crf requires CRF parameters");
    }
    if (target_power.rows() != q || target_states.rows() != q) {
        throw DataError("dual_loss: target shape mismatch");
    }
    const double alpha = 1.0 / static_cast<double>(batch_denominator);

    const Eigen::MatrixXd input_block = inputs.middleCols(col_begin, chunk);
    stack_forward(params.config, params.state_net, input_block, ws.state_ws);
    stack_forward(params.config, params.value_net, input_block, ws.value_ws);

    const Eigen::MatrixXd& logits = ws.state_ws.output;  // qM x chunk
    const Eigen::MatrixXd& raw = ws.value_ws.output;

    ws.probs.resize(logits.rows(), chunk);
    ws.log_probs.resize(logits.rows(), chunk);
    ws.powers.resize(logits.rows(), chunk);
    ws.yhat.resize(q, chunk);
    if (grads) {
        ws.d_state.setZero(logits.rows(), chunk);
        ws.d_value.setZero(logits.rows(), chunk);
    }

    // Softmax per timestep block; scaled softplus for the value head.
    for (int b = 0; b < chunk; ++b) {
        for (int t = 0; t < q; ++t) {
            const int r0 = t * m;
            double mx = logits(r0, b);
            for (int s = 1; s < m; ++s) mx = std::max(mx, logits(r0 + s, b));
            double sum = 0.0;
            for (int s = 0; s < m; ++s) sum += std::exp(logits(r0 + s, b) - mx);
            const double log_sum = std::log(sum);
            for (int s = 0; s < m; ++s) {
                ws.log_probs(r0 + s, b) = logits(r0 + s, b) - mx - log_sum;
                ws.probs(r0 + s, b) = std::exp(ws.log_probs(r0 + s, b));
            }
        }
        for (int r = 0; r < logits.rows(); ++r) {
            ws.powers(r, b) = params.power_scale * softplus(raw(r, b));
        }
        for (int t = 0; t < q; ++t) {
            double acc = 0.0;
            for (int s = 0; s < m; ++s) acc += ws.probs(t * m + s, b) * ws.powers(t * m + s, b);
            ws.yhat(t, b) = acc;
        }
    }

    BatchLoss loss;
    Eigen::MatrixXd emissions(q, m);
    std::vector<int> labels(static_cast<std::size_t>(q));
    CrfGradients crf_grads;

    for (int b = 0; b < chunk; ++b) {
        const int col = col_begin + b;
        for (int t = 0; t < q; ++t) {
            const int label = target_states(t, col);
            if (label < 0 || label >= m) {
                throw DataError("dual_loss: state label out of range");
            }
            labels[static_cast<std::size_t>(t)] = label;
        }

        // Power term and its pull on both heads.
        double window_power = 0.0;
        for (int t = 0; t < q; ++t) {
            const double err = target_power(t, col) - ws.yhat(t, b);
            window_power += err * err;
            if (grads) {
                const double gy = -2.0 * err / q * alpha * power_weight;
                const int r0 = t * m;
                for (int s = 0; s < m; ++s) {
                    ws.d_value(r0 + s, b) +=
                        gy * ws.probs(r0 + s, b) * params.power_scale * sigmoid(raw(r0 + s, b));
                }
                // dP staged in d_state, converted through the softmax below.
                for (int s = 0; s < m; ++s) {
                    ws.d_state(r0 + s, b) += gy * ws.powers(r0 + s, b);
                }
            }
        }
        loss.power += window_power / q * alpha;

        if (kind == LossKind::msdc) {
            double ce = 0.0;
            for (int t = 0; t < q; ++t) ce += -ws.log_probs(t * m + labels[t], b);
            loss.state += ce / q * alpha;
        } else {
            for (int t = 0; t < q; ++t) {
                for (int s = 0; s < m; ++s) {
                    emissions(t, s) = (emission == CrfEmissionKind::log_prob)
                                          ? ws.log_probs(t * m + s, b)
                                          : ws.probs(t * m + s, b);
                }
            }
            double crf_loss;
            if (grads) {
                crf_loss = loss_crf_with_gradients(emissions, *crf, labels, crf_grads);
                grads->crf_transition += alpha * crf_grads.transition;
                grads->crf_start += alpha * crf_grads.start;
                grads->crf_stop += alpha * crf_grads.stop;
            } else {
                crf_loss = loss_crf(emissions, *crf, labels);
            }
            loss.state += crf_loss * alpha;
        }

        if (!grads) continue;

        // Convert the staged dP (power pull) plus the state-objective terms
        // into logit gradients, one softmax block at a time.
        for (int t = 0; t < q; ++t) {
            const int r0 = t * m;
            double dp_dot_p = 0.0;
            double de_sum = 0.0;
            for (int s = 0; s < m; ++s) {
                double dp = ws.d_state(r0 + s, b);
                if (kind == LossKind::msdc_crf && emission == CrfEmissionKind::prob) {
                    dp += alpha * crf_grads.emissions(t, s);
                }
                ws.d_state(r0 + s, b) = dp;  // keep merged dP for this block
                dp_dot_p += dp * ws.probs(r0 + s, b);
            }
            if (kind == LossKind::msdc_crf && emission == CrfEmissionKind::log_prob) {
                for (int s = 0; s < m; ++s) de_sum += alpha * crf_grads.emissions(t, s);
            }
            for (int s = 0; s < m; ++s) {
                const double p = ws.probs(r0 + s, b);
                double dlogit = p * (ws.d_state(r0 + s, b) - dp_dot_p);  // softmax backward
                if (kind == LossKind::msdc) {
                    const double onehot = (labels[t] == s) ? 1.0 : 0.0;
                    dlogit += alpha / q * (p - onehot);  // cross-entropy
                } else if (emission == CrfEmissionKind::log_prob) {
                    dlogit += alpha * crf_grads.emissions(t, s) - p * de_sum;
                }
                ws.d_state(r0 + s, b) = dlogit;
            }
        }
    }

    loss.total = power_weight * loss.power + loss.state;
    if (!std::isfinite(loss.total)) {
        throw NumericError("dual_loss: non-finite loss");
    }

    if (grads) {
        stack_backward(params.config, params.state_net, ws.d_state, ws.state_ws, grads->state_net);
        stack_backward(params.config, params.value_net, ws.d_value, ws.value_ws, grads->value_net);
        if (!grads->state_net.allFinite() || !grads->value_net.allFinite()) {
            throw NumericError("dual_loss: non-finite gradient");
        }
    }
    return loss;
}

BatchPrediction predict_batch(const DualCnnParams& params, const CrfParams* crf, LossKind kind,
                              CrfEmissionKind emission, const Eigen::MatrixXd& inputs,
                              DualWorkspace& ws) {
    const int q = params.config.output_len;
    const int m = params.config.num_states;
    const int batch = static_cast<int>(inputs.cols());
    if (kind == LossKind::msdc_crf && crf == nullptr) {
        throw UsageError("predict_batch: msdc_crf requires CRF parameters");
    }

    stack_forward(params.config, params.state_net, inputs, ws.state_ws);
    stack_forward(params.config, params.value_net, inputs, ws.value_ws);

    BatchPrediction pred;
    pred.power.resize(q, batch);
    pred.states.resize(q, batch);
    Eigen::MatrixXd emissions(q, m);

    for (int b = 0; b < batch; ++b) {
        const auto logits = window_view(ws.state_ws.output, b, q, m);
        const Eigen::MatrixXd probs = softmax_rows(logits);
        Eigen::MatrixXd powers = window_view(ws.value_ws.output, b, q, m);
        for (int t = 0; t < q; ++t) {
            for (int s = 0; s < m; ++s) powers(t, s) = params.power_scale * softplus(powers(t, s));
        }
        const Eigen::VectorXd yhat = combine(probs, powers);
        pred.power.col(b) = yhat;

        if (kind == LossKind::msdc) {
            const auto labels = decode_states(probs);
            for (int t = 0; t < q; ++t) pred.states(t, b) = labels[static_cast<std::size_t>(t)];
        } else {
            for (int t = 0; t < q; ++t) {
                for (int s = 0; s < m; ++s) {
                    emissions(t, s) = (emission == CrfEmissionKind::log_prob)
                                          ? std::log(std::max(probs(t, s), 1e-300))
                                          : probs(t, s);
                }
            }
            const auto [path, score] = viterbi(emissions, *crf);
            (void)score;
            for (int t = 0; t < q; ++t) pred.states(t, b) = path[static_cast<std::size_t>(t)];
        }
    }
    return pred;
}

}  // namespace msdc
