#include "msdc/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <ostream>

#include "msdc/ablation.hpp"
#include "msdc/dataset_io.hpp"
#include "msdc/errors.hpp"
#include "msdc/simulator.hpp"

namespace msdc {

namespace {

std::string sidecar_base(const std::string& root, int house_id, const std::string& appliance) {
    return house_dir(root, house_id) + "/" + ApplianceAliases::normalize(appliance);
}

std::string require_root(const RunConfig& config) {
    const std::string root = config.dataset_root();
    if (root.empty()) {
        throw UsageError("dataset root not set (dataset.root or MSDC_DATA_ROOT)");
    }
    return root;
}

}  // namespace

std::string state_sidecar_path(const std::string& root, int house_id, const std::string& appliance) {
    return sidecar_base(root, house_id, appliance) + ".states";
}

std::string truth_sidecar_path(const std::string& root, int house_id, const std::string& appliance) {
    return sidecar_base(root, house_id, appliance) + ".truth_states";
}

void run_simulate(const RunConfig& config, std::ostream& log) {
    const std::string root = require_root(config);
    const auto spec = config.simulator();
    if (spec.appliances.empty()) {
        throw UsageError("simulate: no appliances configured");
    }
    if (spec.length == 0) {
        throw UsageError("simulate: length must be > 0");
    }

    std::vector<PowerSeries> series;
    std::vector<StateSequence> states;
    for (std::size_t i = 0; i < spec.appliances.size(); ++i) {
        const std::uint64_t seed = spec.seed ^ (0x9E3779B97F4A7C15ULL * (i + 1));
        auto [s, labels] = simulate_appliance(spec.appliances[i], spec.length,
                                              spec.interval_seconds, seed);
        series.push_back(std::move(s));
        states.push_back(std::move(labels));
    }
    const PowerSeries mains =
        aggregate(series, spec.noise, spec.seed ^ 0xD1B54A32D192ED03ULL);

    const int house = config.dataset_house();
    std::vector<std::pair<std::string, PowerSeries>> named;
    for (std::size_t i = 0; i < series.size(); ++i) {
        named.emplace_back(spec.appliances[i].name, series[i]);
    }
    export_house(root, house, mains, named);

    for (std::size_t i = 0; i < series.size(); ++i) {
        // Truth sidecars use the state index of the FSM declaration, which
        // matches sorted extraction centers when means are ascending.
        std::vector<double> centers(spec.appliances[i].means.begin(),
                                    spec.appliances[i].means.end());
        write_state_sidecar(truth_sidecar_path(root, house, spec.appliances[i].name), centers,
                            states[i].labels);
    }
    log << "simulate: wrote house_" << house << " with " << series.size() << " appliances, T="
        << spec.length << " to " << root << "\n";
}

std::vector<ExtractionSummary> run_extract_states(const RunConfig& config, std::ostream& log) {
    const std::string root = require_root(config);
    const int house = config.dataset_house();
    const auto appliances = config.dataset_appliances();
    const HouseBundle bundle = load_house(root, house, appliances, config.dataset());
    for (const auto& note : bundle.notes) log << note << "\n";

    const ExtractionConfig extraction = config.extraction();
    const auto ratios = config.trainer().split_ratios;

    std::vector<ExtractionSummary> out;
    for (const auto& name : appliances) {
        const PowerSeries& series = bundle.channels.at(name);
        // Fit the state model on the training portion only, then label the
        // whole series against it.
        const auto lengths = split_lengths(series.size(), ratios);
        PowerSeries train_part = series;
        if (lengths[0] > 0) {
            train_part.values.assign(series.values.begin(),
                                     series.values.begin() + static_cast<long>(lengths[0]));
        }
        auto [model, train_labels] = extract_state_model(train_part, extraction, name);
        const StateSequence labels = assign_states(series, model);
        write_state_sidecar(state_sidecar_path(root, house, name), model.centers, labels.labels);

        log << "extract-states: " << name << " M=" << model.num_states() << " centers=[";
        for (int k = 0; k < model.num_states(); ++k) {
            log << (k ? ", " : "") << model.centers[k];
        }
        log << "] bandwidth=" << model.bandwidth << " W\n";
        out.push_back({name, std::move(model), series.size()});
    }
    return out;
}

Dataset load_appliance_dataset(const RunConfig& config, const std::string& appliance,
                               bool use_truth) {
    const std::string root = require_root(config);
    const int house = config.dataset_house();
    const HouseBundle bundle = load_house(root, house, {appliance}, config.dataset());

    const std::string sidecar = use_truth ? truth_sidecar_path(root, house, appliance)
                                          : state_sidecar_path(root, house, appliance);
    if (!std::filesystem::exists(sidecar)) {
        throw DataError("missing state sidecar " + sidecar +
                        " — run `msdc extract-states` first (or `msdc simulate` for truth labels)");
    }
    auto [centers, labels] = read_state_sidecar(sidecar);

    Dataset data;
    data.appliance_id = appliance;
    data.aggregate = bundle.mains;
    data.appliance = bundle.channels.at(appliance);
    if (labels.size() != data.appliance.size()) {
        throw DataError("state sidecar " + sidecar + " has " + std::to_string(labels.size()) +
                        " labels but the series has " + std::to_string(data.appliance.size()) +
                        " samples — re-run `msdc extract-states` with the current dataset config");
    }
    data.labels = std::move(labels);
    data.centers = std::move(centers);
    return data;
}

std::vector<SeedRunSummary> run_train(const RunConfig& config, int num_seeds, std::ostream& log) {
    if (num_seeds < 1) {
        throw UsageError("train: --seeds must be >= 1");
    }
    const TrainConfig base = config.trainer();
    const bool single_state = config.ablation_single_state();
    const auto appliances = config.dataset_appliances();
    const std::string run_root = config.run_dir();

    std::vector<SeedRunSummary> summaries;
    for (const auto& appliance : appliances) {
        Dataset data = load_appliance_dataset(config, appliance);
        if (single_state) {
            StateModel model;
            model.appliance_id = appliance;
            model.centers = data.centers;
            StateSequence seq{data.labels};
            auto [collapsed_model, collapsed_seq] =
                collapse_states(model, seq, config.ablation_threshold());
            data.centers = collapsed_model.centers;
            data.labels = collapsed_seq.labels;
        }

        std::vector<SeedRunSummary> appliance_runs;
        for (int k = 0; k < num_seeds; ++k) {
            TrainConfig train_config = base;
            train_config.seed = base.seed + static_cast<std::uint64_t>(k);
            RunConfig snapshot = config;
            snapshot.apply_override("trainer.seed", std::to_string(train_config.seed));

            std::string run_dir = run_root + "/" + ApplianceAliases::normalize(appliance);
            if (num_seeds > 1) run_dir += "/seed_" + std::to_string(train_config.seed);

            const TrainResult result = train(data, train_config, run_dir, snapshot.snapshot());
            SeedRunSummary summary;
            summary.appliance = appliance;
            summary.seed = train_config.seed;
            summary.best_epoch = result.report.best_epoch;
            summary.best_val_loss = result.report.best_val_loss;
            summary.best_val_mae = result.report.best_val_mae;
            summary.run_dir = run_dir;
            log << "train: " << appliance << " seed=" << summary.seed << " best_epoch="
                << summary.best_epoch << " val_j_power=" << summary.best_val_loss
                << " val_mae=" << summary.best_val_mae << " -> " << run_dir << "\n";
            appliance_runs.push_back(summary);
            summaries.push_back(std::move(summary));
        }

        if (num_seeds > 1) {
            double mean_loss = 0.0, mean_mae = 0.0;
            for (const auto& r : appliance_runs) {
                mean_loss += r.best_val_loss;
                mean_mae += r.best_val_mae;
            }
            mean_loss /= num_seeds;
            mean_mae /= num_seeds;
            const std::string summary_path =
                run_root + "/" + ApplianceAliases::normalize(appliance) + "/seeds_summary.csv";
            std::ofstream out(summary_path);
            out << "seed,best_epoch,val_j_power,val_mae\n";
            out.precision(12);
            for (const auto& r : appliance_runs) {
                out << r.seed << ',' << r.best_epoch << ',' << r.best_val_loss << ','
                    << r.best_val_mae << '\n';
            }
            out << "mean,," << mean_loss << ',' << mean_mae << '\n';
            log << "train: " << appliance << " averaged over " << num_seeds
                << " seeds: val_j_power=" << mean_loss << " val_mae=" << mean_mae << "\n";
        }
    }
    return summaries;
}

namespace {

struct SplitChoice {
    int index = 2;  // 0 train, 1 val, 2 test, -1 all
};

SplitChoice parse_split(const std::string& name) {
    if (name == "train") return {0};
    if (name == "val" || name == "validation") return {1};
    if (name == "test") return {2};
    if (name == "all") return {-1};
    throw UsageError("evaluate.split must be train, val, test or all");
}

}  // namespace

EvaluationResult run_evaluate(const RunConfig& config, std::ostream& log) {
    const std::string checkpoint_path = config.evaluate_checkpoint();
    if (checkpoint_path.empty()) {
        throw UsageError("evaluate: no checkpoint configured (evaluate.checkpoint)");
    }
    const Checkpoint model = load_checkpoint(checkpoint_path);
    const std::string appliance =
        model.appliance_id.empty() ? config.dataset_appliances().at(0) : model.appliance_id;

    const bool use_truth =
        config.doc().at("evaluate").at("truth_states").get<std::string>() == "simulator";
    Dataset data = load_appliance_dataset(config, appliance, use_truth);
    if (config.ablation_single_state()) {
        StateModel state_model;
        state_model.appliance_id = appliance;
        state_model.centers = data.centers;
        StateSequence seq{data.labels};
        auto [collapsed_model, collapsed_seq] =
            collapse_states(state_model, seq, config.ablation_threshold());
        data.centers = collapsed_model.centers;
        data.labels = collapsed_seq.labels;
    }

    const SplitChoice choice = parse_split(config.evaluate_split());
    Dataset eval = data;
    if (choice.index >= 0) {
        eval = split_dataset(data, config.trainer().split_ratios)[choice.index];
    }
    if (eval.aggregate.size() < static_cast<std::size_t>(model.params.config.output_len)) {
        throw DataError("evaluate: selected split shorter than one output window");
    }

    const Prediction pred =
        predict(model, eval.aggregate, config.trainer().effective_eval_stride());

    MetricsReport report;
    report.mae = mae(pred.power.values, eval.appliance.values);
    report.sae = sae(pred.power.values, eval.appliance.values);
    const int period = config.metrics_period();
    report.sae_delta = static_cast<int>(pred.power.size()) >= period
                           ? sae_delta(pred.power.values, eval.appliance.values, period)
                           : 0.0;
    report.state_accuracy = state_accuracy(pred.states.labels, eval.labels);

    const std::string out_dir = config.evaluate_output_dir();
    std::filesystem::create_directories(out_dir);
    EvaluationResult result;
    result.metrics = report;
    result.metrics_csv = out_dir + "/metrics.csv";
    result.predictions_csv = out_dir + "/predictions.csv";
    write_metrics_csv(result.metrics_csv, {{appliance, report}});
    {
        std::ofstream out(result.predictions_csv);
        if (!out) {
            throw DataError("evaluate: cannot write " + result.predictions_csv);
        }
        out << "t,truth_watts,pred_watts,truth_state,pred_state\n";
        char buf[64];
        auto fmt = [&buf](double v) {
            const auto res = std::to_chars(buf, buf + sizeof(buf), v);
            return std::string(buf, res.ptr);
        };
        for (std::size_t t = 0; t < eval.appliance.size(); ++t) {
            out << t << ',' << fmt(eval.appliance.values[t]) << ',' << fmt(pred.power.values[t])
                << ',' << eval.labels[t] << ',' << pred.states.labels[t] << '\n';
        }
    }
    log << "evaluate: " << appliance << " mae=" << report.mae << " sae=" << report.sae
        << " sae_delta=" << report.sae_delta << " state_accuracy=" << report.state_accuracy
        << " -> " << result.metrics_csv << "\n";
    return result;
}

TheoryResult run_verify_theory(const RunConfig& config, std::ostream& log) {
    const auto spec = config.theory();
    TheoryResult result;
    result.fact1 = verify_fact1(spec.experiment, spec.mean_tolerance_watts, spec.var_tolerance_rel);
    result.theorem1 =
        verify_theorem1(spec.experiment, spec.mean_tolerance_watts, spec.var_tolerance_rel);
    result.corollary = verify_corollary(spec.experiment, spec.xi);
    result.all_pass = result.fact1.pass && result.theorem1.pass && result.corollary.pass;

    log << "fact1: " << (result.fact1.pass ? "PASS" : "FAIL") << " empirical_mean="
        << result.fact1.empirical_mean << " expected_mean=" << result.fact1.expected_mean
        << " empirical_var=" << result.fact1.empirical_var
        << " expected_var=" << result.fact1.expected_var << "\n";
    log << "theorem1: " << (result.theorem1.pass ? "PASS" : "FAIL")
        << " multi_var=" << result.theorem1.multi_var
        << " single_var=" << result.theorem1.single_var
        << " empirical_ratio=" << result.theorem1.empirical_ratio
        << " analytic_ratio=" << result.theorem1.analytic_ratio << "\n";
    log << "corollary: " << (result.corollary.pass ? "PASS" : "FAIL")
        << " multi_prob=" << result.corollary.multi_prob
        << " (closed form " << result.corollary.multi_closed_form << ")"
        << " single_prob=" << result.corollary.single_prob
        << " (closed form " << result.corollary.single_closed_form << ")\n";
    return result;
}

}  // namespace msdc
