#include <CLI11.hpp>
#include <iostream>
#include <string>
#include <vector>

#include "msdc/config.hpp"
#include "msdc/errors.hpp"
#include "msdc/pipeline.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

struct Override {
    std::string key, value;
};

// `--section.key=value` tokens are config overrides; everything else goes
// to the regular argument parser.
std::pair<std::vector<std::string>, std::vector<Override>> split_overrides(int argc, char** argv) {
    std::vector<std::string> args;
    std::vector<Override> overrides;
    for (int i = 0; i < argc; ++i) {
        const std::string arg = argv[i];
        if (arg.rfind("--", 0) == 0) {
            const auto eq = arg.find('=');
            const std::string key = arg.substr(2, eq == std::string::npos ? eq : eq - 2);
            if (eq != std::string::npos && key.find('.') != std::string::npos) {
                overrides.push_back({key, arg.substr(eq + 1)});
                continue;
            }
        }
        args.push_back(arg);
    }
    return {args, overrides};
}

}  // namespace

int main(int argc, char** argv) {
    auto [args, overrides] = split_overrides(argc, argv);

    CLI::App app{"Multi-state NILM engine: disaggregates household power into "
                 "per-appliance signals via a dual-CNN state/value model with an "
                 "optional linear-chain CRF regularizer"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path;
    app.add_option("-c,--config", config_path, "JSON config file")->envname("MSDC_CONFIG");

    auto* cmd_simulate = app.add_subcommand(
        "simulate", "Generate a synthetic REDD-format dataset from appliance FSMs");
    auto* cmd_extract = app.add_subcommand(
        "extract-states", "Pre-extract appliance power states via mean shift; writes sidecars");
    auto* cmd_train = app.add_subcommand("train", "Train one model per configured appliance");
    auto* cmd_evaluate =
        app.add_subcommand("evaluate", "Compute MAE/SAE/SAE_delta/state accuracy for a checkpoint");
    auto* cmd_verify =
        app.add_subcommand("verify-theory", "Monte Carlo check of the variance-reduction results");

    int seeds = 1;
    std::string loss;
    std::string ablation;
    double threshold = 0.0;
    cmd_train->add_option("--seeds", seeds, "Train this many consecutive seeds and average");
    cmd_train->add_option("--loss", loss, "Loss variant: msdc or msdc-crf");
    cmd_train->add_option("--ablation", ablation, "single-state or multi-state");
    cmd_train->add_option("--threshold", threshold, "On/off threshold in watts for single-state");

    std::string checkpoint;
    std::string split;
    cmd_evaluate->add_option("--checkpoint", checkpoint, "Checkpoint file to evaluate");
    cmd_evaluate->add_option("--split", split, "train, val, test or all");

    std::vector<const char*> arg_ptrs;
    for (const auto& a : args) arg_ptrs.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(arg_ptrs.size()), arg_ptrs.data());
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitUsage;
    }

    try {
        msdc::RunConfig config =
            config_path.empty() ? msdc::RunConfig() : msdc::RunConfig::from_file(config_path);
        for (const auto& o : overrides) config.apply_override(o.key, o.value);
        if (!loss.empty()) config.apply_override("trainer.loss", "\"" + loss + "\"");
        if (!ablation.empty()) config.apply_override("ablation.mode", "\"" + ablation + "\"");
        if (threshold > 0.0) {
            config.apply_override("ablation.threshold_watts", std::to_string(threshold));
        }
        if (!checkpoint.empty()) {
            config.apply_override("evaluate.checkpoint", "\"" + checkpoint + "\"");
        }
        if (!split.empty()) config.apply_override("evaluate.split", "\"" + split + "\"");

        if (cmd_simulate->parsed()) {
            msdc::run_simulate(config, std::cout);
        } else if (cmd_extract->parsed()) {
            msdc::run_extract_states(config, std::cout);
        } else if (cmd_train->parsed()) {
            msdc::run_train(config, seeds, std::cout);
        } else if (cmd_evaluate->parsed()) {
            msdc::run_evaluate(config, std::cout);
        } else if (cmd_verify->parsed()) {
            const auto result = msdc::run_verify_theory(config, std::cout);
            if (!result.all_pass) return kExitNumeric;
        }
        return kExitOk;
    } catch (const msdc::UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const msdc::DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const msdc::NumericError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    }
}
