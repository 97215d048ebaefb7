#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "msdc/config.hpp"
#include "msdc/metrics.hpp"
#include "msdc/trainer.hpp"

namespace msdc {

/// Sidecar locations inside the REDD-layout house directory.
std::string state_sidecar_path(const std::string& root, int house_id, const std::string& appliance);
std::string truth_sidecar_path(const std::string& root, int house_id, const std::string& appliance);

/// Generates the configured appliances, aggregates them with base load and
/// noise, and exports the REDD layout plus `.truth_states` sidecars.
void run_simulate(const RunConfig& config, std::ostream& log);

struct ExtractionSummary {
    std::string appliance;
    StateModel model;
    std::size_t series_len = 0;
};

/// Extracts each appliance's state model on the training portion of the
/// loaded series (split per trainer.split_ratios), assigns labels to the
/// full series and writes the `.states` sidecars.
std::vector<ExtractionSummary> run_extract_states(const RunConfig& config, std::ostream& log);

/// Loads one appliance's supervised bundle: aggregate, channel and sidecar
/// labels (`.states` by default, `.truth_states` when use_truth is set).
Dataset load_appliance_dataset(const RunConfig& config, const std::string& appliance,
                               bool use_truth = false);

struct SeedRunSummary {
    std::string appliance;
    std::uint64_t seed = 0;
    int best_epoch = 0;
    double best_val_loss = 0.0;
    double best_val_mae = 0.0;
    std::string run_dir;
};

/// Trains one model per configured appliance; `num_seeds` > 1 fans the run
/// out over consecutive seeds, each in its own run subdirectory.
std::vector<SeedRunSummary> run_train(const RunConfig& config, int num_seeds, std::ostream& log);

struct EvaluationResult {
    MetricsReport metrics;
    std::string metrics_csv;
    std::string predictions_csv;
};

/// Evaluates a checkpoint on the configured split; writes the metrics CSV
/// and the per-timestep prediction CSV
/// (`t,truth_watts,pred_watts,truth_state,pred_state`).
EvaluationResult run_evaluate(const RunConfig& config, std::ostream& log);

struct TheoryResult {
    Fact1Report fact1;
    Theorem1Report theorem1;
    CorollaryReport corollary;
    bool all_pass = false;
};

/// Monte Carlo verification of the variance-reduction theory.
TheoryResult run_verify_theory(const RunConfig& config, std::ostream& log);

}  // namespace msdc
