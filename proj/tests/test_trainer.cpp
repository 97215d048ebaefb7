#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "msdc/errors.hpp"
#include "msdc/simulator.hpp"
#include "msdc/trainer.hpp"

using namespace msdc;
namespace fs = std::filesystem;

namespace {

// Small synthetic supervised bundle around a sticky 3-state appliance.
Dataset make_synthetic(std::size_t t_len, std::uint64_t seed, int states = 3) {
    ApplianceFsm fsm;
    fsm.name = "synth";
    if (states == 3) {
        fsm.means = {0.0, 200.0, 500.0};
        fsm.stds = {1.0, 2.0, 3.0};
        fsm.transition.resize(3, 3);
        fsm.transition << 0.97, 0.02, 0.01, 0.02, 0.96, 0.02, 0.01, 0.02, 0.97;
        fsm.initial.resize(3);
        fsm.initial << 1.0, 0.0, 0.0;
    } else {
        fsm.means = {0.0, 300.0};
        fsm.stds = {1.0, 2.0};
        fsm.transition.resize(2, 2);
        fsm.transition << 0.97, 0.03, 0.03, 0.97;
        fsm.initial.resize(2);
        fsm.initial << 1.0, 0.0;
    }
    auto [series, labels] = simulate_appliance(fsm, t_len, 3.0, seed);
    AggregationNoiseSpec noise;
    noise.base_load_watts = 20.0;
    noise.noise_std_watts = 2.0;
    Dataset data;
    data.appliance_id = "synth";
    data.aggregate = aggregate({series}, noise, seed + 1);
    data.appliance = std::move(series);
    data.labels = std::move(labels.labels);
    data.centers.assign(fsm.means.begin(), fsm.means.end());
    return data;
}

TrainConfig quick_config(std::uint64_t seed = 1) {
    TrainConfig config;
    config.input_len = 32;
    config.output_len = 8;
    config.conv_channels = {4, 4, 6, 8, 8, 8};
    config.conv_kernels = {5, 5, 3, 3, 3, 3};
    config.fc_hidden = 32;
    config.batch_size = 32;
    config.max_epochs = 4;
    config.patience = 4;
    config.seed = seed;
    config.workers = 2;
    return config;
}

}  // namespace

TEST_CASE("split_lengths follows the floor-then-remainder rule") {
    const auto a = split_lengths(10, {0.7, 0.1, 0.2});
    CHECK(a == std::array<std::size_t, 3>{7, 1, 2});
    const auto b = split_lengths(9, {0.7, 0.1, 0.2});
    CHECK(b == std::array<std::size_t, 3>{6, 1, 2});
    const auto c = split_lengths(10, {1.0, 0.0, 0.0});
    CHECK(c == std::array<std::size_t, 3>{10, 0, 0});
    CHECK_THROWS_AS(split_lengths(10, {0.5, 0.1, 0.1}), UsageError);
}

TEST_CASE("split_dataset yields disjoint contiguous order-preserving segments") {
    Dataset data = make_synthetic(100, 3);
    const auto splits = split_dataset(data, {0.7, 0.1, 0.2});
    CHECK(splits[0].aggregate.size() == 70);
    CHECK(splits[1].aggregate.size() == 10);
    CHECK(splits[2].aggregate.size() == 20);
    for (int i = 0; i < 70; ++i) {
        CHECK(splits[0].aggregate.values[i] == data.aggregate.values[i]);
    }
    CHECK(splits[2].appliance.values[0] == data.appliance.values[80]);
    CHECK(splits[2].labels[0] == data.labels[80]);
    CHECK(splits[1].aggregate.start_timestamp ==
          data.aggregate.timestamp_at(70));
}

TEST_CASE("adam drives a convex least-squares problem monotonically down") {
    // J(theta) = mean_i (y_i - theta . x_i)^2 over fixed features: the final
    // FC layer of the value net reduces to exactly this shape.
    Rng rng(11);
    const int dim = 8, n = 64;
    Eigen::MatrixXd x(dim, n);
    Eigen::VectorXd truth(dim), y(n);
    for (int i = 0; i < dim; ++i) truth(i) = rng.uniform(-2.0, 2.0);
    for (int j = 0; j < n; ++j) {
        for (int i = 0; i < dim; ++i) x(i, j) = rng.normal(0.0, 1.0);
        y(j) = truth.dot(x.col(j));
    }
    Eigen::VectorXd theta = Eigen::VectorXd::Zero(dim);
    AdamState state;
    AdamHyper hyper;
    hyper.learning_rate = 0.05;
    auto loss_of = [&](const Eigen::VectorXd& th) {
        return (y - x.transpose() * th).squaredNorm() / n;
    };
    double last = loss_of(theta);
    const double first = last;
    for (int step = 1; step <= 200; ++step) {
        const Eigen::VectorXd grad = -2.0 / n * x * (y - x.transpose() * theta);
        adam_step(theta, grad, state, step, hyper);
        const double now = loss_of(theta);
        if (step <= 50) CHECK(now < last);  // strict decrease away from optimum
        last = now;
    }
    CHECK(last < 1e-2 * first);
}

TEST_CASE("zero epochs returns the initial parameters unchanged") {
    Dataset data = make_synthetic(400, 7);
    TrainConfig config = quick_config();
    config.max_epochs = 0;
    config.patience = 0;
    const TrainResult result = train(data, config);
    CHECK(result.report.epochs.empty());
    CHECK(result.report.best_epoch == 0);

    Rng rng(config.seed);
    NetworkConfig net;
    net.input_len = config.input_len;
    net.output_len = config.output_len;
    net.num_states = 3;
    net.conv_channels = config.conv_channels;
    net.conv_kernels = config.conv_kernels;
    net.fc_hidden = config.fc_hidden;
    const DualCnnParams fresh = init_dual_params(net, result.best.params.power_scale, rng);
    CHECK(result.best.params.state_net == fresh.state_net);
    CHECK(result.best.params.value_net == fresh.value_net);
}

TEST_CASE("training decreases loss and produces a usable predictor") {
    Dataset data = make_synthetic(4000, 13);
    TrainConfig config = quick_config();
    config.max_epochs = 6;
    config.patience = 6;
    const TrainResult result = train(data, config);
    REQUIRE(!result.report.epochs.empty());
    CHECK(result.report.epochs.back().train_loss < result.report.epochs.front().train_loss);
    CHECK(result.report.best_epoch >= 1);

    const auto splits = split_dataset(data, config.split_ratios);
    const Prediction pred = predict(result.best, splits[2].aggregate);
    CHECK(pred.power.size() == splits[2].aggregate.size());
    CHECK(pred.states.labels.size() == splits[2].aggregate.size());
    for (double v : pred.power.values) CHECK(v >= 0.0);
}

TEST_CASE("single-state constant appliance trains to near-constant output") {
    // M=1: the state head is trivial and the value head must regress the
    // constant; validation J_power should fall well below the signal power.
    Rng rng(17);
    Dataset data;
    data.appliance_id = "constant";
    data.aggregate.interval = data.appliance.interval = 3.0;
    const std::size_t t_len = 3000;
    for (std::size_t t = 0; t < t_len; ++t) {
        const double w = 120.0;
        data.appliance.values.push_back(w);
        data.aggregate.values.push_back(w + 30.0 + rng.normal(0.0, 2.0));
        data.labels.push_back(0);
    }
    data.centers = {120.0};
    TrainConfig config = quick_config(21);
    config.max_epochs = 8;
    config.patience = 8;
    const TrainResult result = train(data, config);
    // J_power in watts^2 against a 120 W constant: demand < 1% of 120^2
    CHECK(result.report.best_val_loss < 0.01 * 120.0 * 120.0);
}

TEST_CASE("training is deterministic: same seed, same checkpoint bytes") {
    Dataset data = make_synthetic(1500, 23);
    TrainConfig config = quick_config(5);
    config.max_epochs = 2;
    config.patience = 2;

    const fs::path dir_a = fs::temp_directory_path() / "msdc_det_a";
    const fs::path dir_b = fs::temp_directory_path() / "msdc_det_b";
    fs::remove_all(dir_a);
    fs::remove_all(dir_b);
    train(data, config, dir_a.string(), "{}");
    train(data, config, dir_b.string(), "{}");

    auto slurp = [](const fs::path& p) {
        std::ifstream in(p, std::ios::binary);
        return std::string((std::istreambuf_iterator<char>(in)),
                           std::istreambuf_iterator<char>());
    };
    const std::string a = slurp(dir_a / "checkpoint.best");
    const std::string b = slurp(dir_b / "checkpoint.best");
    REQUIRE(!a.empty());
    CHECK(a == b);
    CHECK(slurp(dir_a / "checkpoint.last") == slurp(dir_b / "checkpoint.last"));

    // different seed changes the checkpoint
    TrainConfig other = config;
    other.seed = 6;
    const fs::path dir_c = fs::temp_directory_path() / "msdc_det_c";
    fs::remove_all(dir_c);
    train(data, other, dir_c.string(), "{}");
    CHECK(slurp(dir_c / "checkpoint.best") != a);

    fs::remove_all(dir_a);
    fs::remove_all(dir_b);
    fs::remove_all(dir_c);
}

TEST_CASE("run directory contains the documented layout") {
    Dataset data = make_synthetic(1200, 29);
    TrainConfig config = quick_config(2);
    config.max_epochs = 1;
    config.patience = 1;
    const fs::path dir = fs::temp_directory_path() / "msdc_run_layout";
    fs::remove_all(dir);
    train(data, config, dir.string(), "{\"snapshot\": true}\n");
    CHECK(fs::exists(dir / "config.snapshot"));
    CHECK(fs::exists(dir / "checkpoint.best"));
    CHECK(fs::exists(dir / "checkpoint.last"));
    CHECK(fs::exists(dir / "train_log.csv"));
    std::ifstream log(dir / "train_log.csv");
    std::string header;
    std::getline(log, header);
    CHECK(header == "epoch,train_loss,val_loss,val_mae,wall_seconds");
    fs::remove_all(dir);
}

TEST_CASE("early stopping halts within patience epochs of the best") {
    Dataset data = make_synthetic(1500, 31);
    TrainConfig config = quick_config(3);
    config.max_epochs = 12;
    config.patience = 2;
    const TrainResult result = train(data, config);
    const int last_epoch = result.report.epochs.back().epoch;
    CHECK(last_epoch <= result.report.best_epoch + config.patience);
}

TEST_CASE("checkpoint round-trips through save/load") {
    Dataset data = make_synthetic(1200, 37);
    TrainConfig config = quick_config(4);
    config.max_epochs = 1;
    config.patience = 1;
    config.loss_kind = LossKind::msdc_crf;
    const TrainResult result = train(data, config);

    const fs::path path = fs::temp_directory_path() / "msdc_ckpt_roundtrip";
    save_checkpoint(path.string(), result.best);
    const Checkpoint loaded = load_checkpoint(path.string());
    CHECK(loaded.params.state_net == result.best.params.state_net);
    CHECK(loaded.params.value_net == result.best.params.value_net);
    CHECK(loaded.params.power_scale == result.best.params.power_scale);
    CHECK(loaded.stats.mean == result.best.stats.mean);
    CHECK(loaded.state_centers == result.best.state_centers);
    REQUIRE(loaded.crf.has_value());
    CHECK(loaded.crf->transition == result.best.crf->transition);
    CHECK(loaded.loss_kind == LossKind::msdc_crf);
    fs::remove(path);
}

TEST_CASE("predict is deterministic and honors the aggregate length") {
    Dataset data = make_synthetic(1200, 41);
    TrainConfig config = quick_config(6);
    config.max_epochs = 1;
    config.patience = 1;
    const TrainResult result = train(data, config);
    const Prediction a = predict(result.best, data.aggregate);
    const Prediction b = predict(result.best, data.aggregate);
    CHECK(a.power.values == b.power.values);
    CHECK(a.states.labels == b.states.labels);
}

TEST_CASE("training rejects mismatched label lengths") {
    Dataset data = make_synthetic(600, 43);
    data.labels.pop_back();
    CHECK_THROWS_AS(train(data, quick_config()), DataError);
}
