#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "msdc/checkpoint.hpp"
#include "msdc/model.hpp"
#include "msdc/state_extraction.hpp"
#include "msdc/windowing.hpp"

namespace msdc {

struct AdamHyper {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct AdamState {
    Eigen::VectorXd m, v;
    void init(Eigen::Index n) {
        m.setZero(n);
        v.setZero(n);
    }
};

/// One Adam update with bias correction; `step` starts at 1.
void adam_step(Eigen::VectorXd& params, const Eigen::VectorXd& grad, AdamState& state, int step,
               const AdamHyper& hyper);

struct TrainConfig {
    LossKind loss_kind = LossKind::msdc;
    CrfEmissionKind emission = CrfEmissionKind::log_prob;
    int input_len = 200;   // w
    int output_len = 32;   // q
    int train_stride = 0;  // 0 -> q/2
    int eval_stride = 0;   // 0 -> q
    std::vector<int> conv_channels = {30, 30, 40, 50, 50, 50};
    std::vector<int> conv_kernels = {10, 8, 6, 5, 5, 5};
    int fc_hidden = 1024;
    int batch_size = 64;
    AdamHyper adam;
    int max_epochs = 30;
    int patience = 5;  // <= 0 disables early stopping
    std::uint64_t seed = 1;
    std::array<double, 3> split_ratios = {0.7, 0.1, 0.2};
    int workers = 2;
    // Weight of the power term in the training objective. 0 selects the
    // auto balance 1/power_scale^2, which turns the watts^2 error into a
    // relative error of the same order as the state loss; the value head
    // is unaffected (Adam is invariant to uniform gradient scaling) while
    // the state head keeps its label supervision.
    double power_loss_weight = 0.0;

    void validate() const;
    int effective_train_stride() const { return train_stride > 0 ? train_stride : output_len / 2; }
    int effective_eval_stride() const { return eval_stride > 0 ? eval_stride : output_len; }
};

/// Supervised bundle for one appliance.
struct Dataset {
    std::string appliance_id;
    PowerSeries aggregate;
    PowerSeries appliance;
    std::vector<int> labels;      // pre-extracted state labels, length T
    std::vector<double> centers;  // state centers, sorted ascending
};

/// Contiguous chronological lengths: floor the exact shares, then hand the
/// remaining samples to the largest fractional parts (earlier segment on
/// ties).
std::array<std::size_t, 3> split_lengths(std::size_t total, const std::array<double, 3>& ratios);

/// Order-preserving disjoint chronological split of the bundle.
std::array<Dataset, 3> split_dataset(const Dataset& data, const std::array<double, 3>& ratios);

struct EpochLog {
    int epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;  // validation J_power
    double val_mae = 0.0;
    double wall_seconds = 0.0;
};

struct TrainReport {
    std::vector<EpochLog> epochs;
    int best_epoch = 0;  // 0 = initial parameters
    double best_val_loss = 0.0;
    double best_val_mae = 0.0;
};

struct TrainResult {
    Checkpoint best;
    Checkpoint last;
    TrainReport report;
};

/// Trains the dual network (and CRF when loss is msdc_crf) on the train
/// segment, early-stops on validation J_power, and returns the best and
/// final checkpoints. When `run_dir` is nonempty writes the run layout:
/// config.snapshot, checkpoint.best, checkpoint.last, train_log.csv.
TrainResult train(const Dataset& data, const TrainConfig& config, const std::string& run_dir = "",
                  const std::string& config_snapshot = "");

struct Prediction {
    PowerSeries power;
    StateSequence states;
};

/// Windows -> forward -> combine -> stitch; states by per-step argmax
/// (msdc) or per-window Viterbi (msdc_crf).
Prediction predict(const Checkpoint& model, const PowerSeries& aggregate, int eval_stride = 0);

}  // namespace msdc
