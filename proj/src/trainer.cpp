#include "msdc/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <thread>

#include "msdc/errors.hpp"
#include "msdc/metrics.hpp"

namespace msdc {

void adam_step(Eigen::VectorXd& params, const Eigen::VectorXd& grad, AdamState& state, int step,
               const AdamHyper& hyper) {
    if (state.m.size() != params.size()) state.init(params.size());
    state.m = hyper.beta1 * state.m + (1.0 - hyper.beta1) * grad;
    state.v = hyper.beta2 * state.v.array().matrix() +
              (1.0 - hyper.beta2) * grad.cwiseProduct(grad);
    const double c1 = 1.0 - std::pow(hyper.beta1, step);
    const double c2 = 1.0 - std::pow(hyper.beta2, step);
    params.array() -=
        hyper.learning_rate * (state.m.array() / c1) / ((state.v.array() / c2).sqrt() + hyper.epsilon);
}

void TrainConfig::validate() const {
    if (output_len <= 0 || input_len <= output_len) {
        throw UsageError("TrainConfig: need 0 < output_len < input_len");
    }
    if (batch_size <= 0 || max_epochs < 0 || workers <= 0) {
        throw UsageError("TrainConfig: batch_size and workers must be positive, max_epochs >= 0");
    }
    if (patience > max_epochs) {
        throw UsageError("TrainConfig: patience must be <= max_epochs");
    }
    double sum = 0.0;
    for (double r : split_ratios) {
        if (r < 0.0) throw UsageError("TrainConfig: negative split ratio");
        sum += r;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
        throw UsageError("TrainConfig: split ratios must sum to 1");
    }
}

std::array<std::size_t, 3> split_lengths(std::size_t total, const std::array<double, 3>& ratios) {
    double sum = 0.0;
    for (double r : ratios) {
        if (r < 0.0) throw UsageError("split_lengths: negative ratio");
        sum += r;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
        throw UsageError("split_lengths: ratios must sum to 1");
    }
    std::array<std::size_t, 3> lengths{};
    std::array<double, 3> fractions{};
    std::size_t assigned = 0;
    for (int i = 0; i < 3; ++i) {
        const double exact = ratios[i] * static_cast<double>(total);
        lengths[i] = static_cast<std::size_t>(std::floor(exact));
        fractions[i] = exact - std::floor(exact);
        assigned += lengths[i];
    }
    std::array<int, 3> order = {0, 1, 2};
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return fractions[a] > fractions[b]; });
    for (std::size_t r = 0; r < total - assigned; ++r) {
        ++lengths[order[r % 3]];
    }
    return lengths;
}

std::array<Dataset, 3> split_dataset(const Dataset& data, const std::array<double, 3>& ratios) {
    const std::size_t total = data.aggregate.size();
    if (data.appliance.size() != total || data.labels.size() != total) {
        throw DataError("split_dataset: aggregate, appliance and labels must share length");
    }
    const auto lengths = split_lengths(total, ratios);
    std::array<Dataset, 3> out;
    std::size_t offset = 0;
    for (int i = 0; i < 3; ++i) {
        Dataset& d = out[i];
        d.appliance_id = data.appliance_id;
        d.centers = data.centers;
        auto slice_series = [&](const PowerSeries& s) {
            PowerSeries r;
            r.interval = s.interval;
            r.start_timestamp = s.timestamp_at(offset);
            r.values.assign(s.values.begin() + static_cast<long>(offset),
                            s.values.begin() + static_cast<long>(offset + lengths[i]));
            return r;
        };
        d.aggregate = slice_series(data.aggregate);
        d.appliance = slice_series(data.appliance);
        d.labels.assign(data.labels.begin() + static_cast<long>(offset),
                        data.labels.begin() + static_cast<long>(offset + lengths[i]));
        offset += lengths[i];
    }
    return out;
}

namespace {

struct CrfAdam {
    AdamState transition, start, stop;
};

// Deterministic fan-out: worker k takes a fixed contiguous column chunk;
// partial gradients are reduced in worker order.
BatchLoss parallel_loss(const DualCnnParams& params, const CrfParams* crf,
                        const TrainConfig& config, double power_weight,
                        const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& target_power,
                        const Eigen::MatrixXi& target_states, int batch_denominator,
                        std::vector<DualWorkspace>& workspaces,
                        std::vector<ModelGradients>* worker_grads, ModelGradients* total_grads) {
    const int batch = static_cast<int>(inputs.cols());
    const int workers = std::min(config.workers, batch);
    const int chunk = (batch + workers - 1) / workers;

    std::vector<BatchLoss> losses(static_cast<std::size_t>(workers));
    std::vector<std::thread> threads;
    std::exception_ptr error;
    std::mutex error_mutex;
    for (int k = 0; k < workers; ++k) {
        const int begin = k * chunk;
        const int end = std::min(batch, begin + chunk);
        if (begin >= end) break;
        auto task = [&, k, begin, end]() {
            try {
                ModelGradients* grads = worker_grads ? &(*worker_grads)[k] : nullptr;
                if (grads) grads->set_zero(params, params.config.num_states);
                losses[k] = dual_loss(params, crf, config.loss_kind, config.emission, inputs,
                                      target_power, target_states, begin, end, batch_denominator,
                                      workspaces[k], grads, power_weight);
            } catch (...) {
                const std::lock_guard<std::mutex> lock(error_mutex);
                if (!error) error = std::current_exception();
            }
        };
        if (workers == 1) {
            task();
        } else {
            threads.emplace_back(task);
        }
    }
    for (auto& t : threads) t.join();
    if (error) std::rethrow_exception(error);

    BatchLoss total;
    for (int k = 0; k < workers; ++k) total += losses[k];
    if (total_grads && worker_grads) {
        total_grads->set_zero(params, params.config.num_states);
        for (int k = 0; k < workers; ++k) total_grads->add_scaled((*worker_grads)[k], 1.0);
    }
    return total;
}

Eigen::MatrixXd gather_cols(const Eigen::MatrixXd& src, const std::vector<int>& order,
                            std::size_t begin, std::size_t end) {
    Eigen::MatrixXd out(src.rows(), static_cast<Eigen::Index>(end - begin));
    for (std::size_t i = begin; i < end; ++i) {
        out.col(static_cast<Eigen::Index>(i - begin)) = src.col(order[i]);
    }
    return out;
}

Eigen::MatrixXi gather_cols(const Eigen::MatrixXi& src, const std::vector<int>& order,
                            std::size_t begin, std::size_t end) {
    Eigen::MatrixXi out(src.rows(), static_cast<Eigen::Index>(end - begin));
    for (std::size_t i = begin; i < end; ++i) {
        out.col(static_cast<Eigen::Index>(i - begin)) = src.col(order[i]);
    }
    return out;
}

void write_train_log(const std::string& path, const TrainReport& report) {
    std::ofstream out(path);
    if (!out) {
        throw DataError("train: cannot write " + path);
    }
    out << "epoch,train_loss,val_loss,val_mae,wall_seconds\n";
    out.precision(12);
    for (const auto& e : report.epochs) {
        out << e.epoch << ',' << e.train_loss << ',' << e.val_loss << ',' << e.val_mae << ','
            << e.wall_seconds << '\n';
    }
}

}  // namespace

TrainResult train(const Dataset& data, const TrainConfig& config, const std::string& run_dir,
                  const std::string& config_snapshot) {
    config.validate();
    const std::size_t total = data.aggregate.size();
    if (data.appliance.size() != total || data.labels.size() != total) {
        throw DataError("train: aggregate, appliance and labels must share length");
    }
    if (data.centers.empty()) {
        throw DataError("train: dataset has no state centers (run state extraction first)");
    }
    const int num_states = static_cast<int>(data.centers.size());

    const auto splits = split_dataset(data, config.split_ratios);
    const Dataset& train_split = splits[0];
    const Dataset& val_split = splits[1];
    if (train_split.aggregate.size() < static_cast<std::size_t>(config.output_len)) {
        throw DataError("train: training split shorter than one output window");
    }

    const NormalizationStats stats = compute_normalization(train_split.aggregate);
    double power_scale = 0.0;
    for (double v : train_split.appliance.values) power_scale = std::max(power_scale, v);
    if (power_scale <= 0.0) power_scale = 1.0;

    NetworkConfig net;
    net.input_len = config.input_len;
    net.output_len = config.output_len;
    net.num_states = num_states;
    net.conv_channels = config.conv_channels;
    net.conv_kernels = config.conv_kernels;
    net.fc_hidden = config.fc_hidden;
    net.validate();

    Rng rng(config.seed);
    DualCnnParams params = init_dual_params(net, power_scale, rng);
    CrfParams crf = CrfParams::zeros(num_states);
    const bool use_crf = config.loss_kind == LossKind::msdc_crf;
    const double power_weight = config.power_loss_weight > 0.0
                                    ? config.power_loss_weight
                                    : 1.0 / (power_scale * power_scale);

    const WindowSpec train_window{config.input_len, config.output_len,
                                  config.effective_train_stride()};
    const WindowSpec eval_window{config.input_len, config.output_len,
                                 config.effective_eval_stride()};
    const WindowBatch train_batch =
        make_windows(train_split.aggregate, train_split.appliance, train_split.labels,
                     train_window, stats);

    const bool has_val = val_split.aggregate.size() >= static_cast<std::size_t>(config.output_len);
    WindowBatch val_batch;
    if (has_val) {
        val_batch = make_windows(val_split.aggregate, val_split.appliance, val_split.labels,
                                 eval_window, stats);
    }

    const int workers = config.workers;
    std::vector<DualWorkspace> workspaces(static_cast<std::size_t>(workers));
    std::vector<ModelGradients> worker_grads(static_cast<std::size_t>(workers));
    ModelGradients grads;

    AdamState adam_state_net, adam_value_net;
    CrfAdam adam_crf;
    Eigen::Map<Eigen::VectorXd> crf_transition_flat(crf.transition.data(), crf.transition.size());

    auto make_checkpoint = [&](const DualCnnParams& p, const CrfParams& c) {
        Checkpoint ck;
        ck.appliance_id = data.appliance_id;
        ck.loss_kind = config.loss_kind;
        ck.emission = config.emission;
        ck.params = p;
        if (use_crf) ck.crf = c;
        ck.stats = stats;
        ck.state_centers = data.centers;
        ck.seed = config.seed;
        return ck;
    };

    TrainReport report;
    report.best_epoch = 0;
    report.best_val_loss = std::numeric_limits<double>::infinity();
    DualCnnParams best_params = params;
    CrfParams best_crf = crf;
    int epochs_since_best = 0;
    int adam_t = 0;

    std::vector<int> order(static_cast<std::size_t>(train_batch.count()));
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
        const auto epoch_start = std::chrono::steady_clock::now();
        rng.shuffle(order);

        double train_loss_sum = 0.0;
        int batches = 0;
        for (std::size_t pos = 0; pos < order.size(); pos += config.batch_size) {
            const std::size_t end = std::min(order.size(), pos + config.batch_size);
            const Eigen::MatrixXd inputs = gather_cols(train_batch.inputs, order, pos, end);
            const Eigen::MatrixXd target_power =
                gather_cols(train_batch.target_power, order, pos, end);
            const Eigen::MatrixXi target_states =
                gather_cols(train_batch.target_states, order, pos, end);

            const BatchLoss loss = parallel_loss(params, use_crf ? &crf : nullptr, config,
                                                 power_weight, inputs, target_power, target_states,
                                                 static_cast<int>(end - pos), workspaces,
                                                 &worker_grads, &grads);
            if (!std::isfinite(loss.total)) {
                throw NumericError("train: loss diverged at epoch " + std::to_string(epoch));
            }
            ++adam_t;
            adam_step(params.state_net, grads.state_net, adam_state_net, adam_t, config.adam);
            adam_step(params.value_net, grads.value_net, adam_value_net, adam_t, config.adam);
            if (use_crf) {
                Eigen::Map<Eigen::VectorXd> grad_transition_flat(grads.crf_transition.data(),
                                                                 grads.crf_transition.size());
                Eigen::VectorXd flat = crf_transition_flat;
                Eigen::VectorXd gflat = grad_transition_flat;
                adam_step(flat, gflat, adam_crf.transition, adam_t, config.adam);
                crf_transition_flat = flat;
                adam_step(crf.start, grads.crf_start, adam_crf.start, adam_t, config.adam);
                adam_step(crf.stop, grads.crf_stop, adam_crf.stop, adam_t, config.adam);
            }
            train_loss_sum += loss.total;
            ++batches;
        }

        EpochLog log;
        log.epoch = epoch;
        log.train_loss = batches ? train_loss_sum / batches : 0.0;

        if (has_val) {
            BatchLoss val_loss;
            Eigen::MatrixXd val_pred(config.output_len, val_batch.count());
            for (int pos = 0; pos < val_batch.count(); pos += config.batch_size) {
                const int end = std::min(val_batch.count(), pos + config.batch_size);
                val_loss += dual_loss(params, use_crf ? &crf : nullptr, config.loss_kind,
                                      config.emission, val_batch.inputs, val_batch.target_power,
                                      val_batch.target_states, pos, end, val_batch.count(),
                                      workspaces[0], nullptr);
                val_pred.middleCols(pos, end - pos) = workspaces[0].yhat;
            }
            log.val_loss = val_loss.power;
            const auto stitched = stitch_predictions(val_batch.centers, val_pred,
                                                     val_batch.series_len, eval_window);
            log.val_mae = mae(stitched, val_split.appliance.values);
        }

        log.wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - epoch_start).count();
        report.epochs.push_back(log);

        if (!has_val) {
            report.best_epoch = epoch;
            best_params = params;
            best_crf = crf;
            continue;
        }
        if (log.val_loss < report.best_val_loss) {
            report.best_val_loss = log.val_loss;
            report.best_val_mae = log.val_mae;
            report.best_epoch = epoch;
            best_params = params;
            best_crf = crf;
            epochs_since_best = 0;
        } else {
            ++epochs_since_best;
            if (config.patience > 0 && epochs_since_best >= config.patience) {
                break;
            }
        }
    }

    TrainResult result;
    result.best = make_checkpoint(best_params, best_crf);
    result.last = make_checkpoint(params, crf);
    result.report = report;

    if (!run_dir.empty()) {
        std::filesystem::create_directories(run_dir);
        if (!config_snapshot.empty()) {
            std::ofstream snap(run_dir + "/config.snapshot");
            snap << config_snapshot;
        }
        save_checkpoint(run_dir + "/checkpoint.best", result.best);
        save_checkpoint(run_dir + "/checkpoint.last", result.last);
        write_train_log(run_dir + "/train_log.csv", report);
    }
    return result;
}

Prediction predict(const Checkpoint& model, const PowerSeries& aggregate, int eval_stride) {
    const auto& cfg = model.params.config;
    const WindowSpec window{cfg.input_len, cfg.output_len,
                            eval_stride > 0 ? eval_stride : cfg.output_len};
    const WindowBatch batch = make_input_windows(aggregate, window, model.stats);

    const CrfParams* crf = model.crf ? &*model.crf : nullptr;
    if (model.loss_kind == LossKind::msdc_crf && crf == nullptr) {
        throw DataError("predict: checkpoint lacks CRF parameters for msdc_crf decoding");
    }

    Eigen::MatrixXd power(cfg.output_len, batch.count());
    Eigen::MatrixXi states(cfg.output_len, batch.count());
    DualWorkspace ws;
    constexpr int kChunk = 64;
    for (int pos = 0; pos < batch.count(); pos += kChunk) {
        const int end = std::min(batch.count(), pos + kChunk);
        const BatchPrediction pred =
            predict_batch(model.params, crf, model.loss_kind, model.emission,
                          batch.inputs.middleCols(pos, end - pos), ws);
        power.middleCols(pos, end - pos) = pred.power;
        states.middleCols(pos, end - pos) = pred.states;
    }

    Prediction out;
    out.power = stitch_predictions_series(batch.centers, power, aggregate, window);
    out.states.labels = stitch_states(batch.centers, states, batch.series_len, window);
    return out;
}

}  // namespace msdc
