#pragma once

#include <json.hpp>
#include <string>
#include <vector>

#include "msdc/dataset_io.hpp"
#include "msdc/simulator.hpp"
#include "msdc/state_extraction.hpp"
#include "msdc/trainer.hpp"

namespace msdc {

/// Structured run configuration backed by JSON. Every key must exist in
/// the default schema (unknown keys are rejected to catch typos) and each
/// run snapshots its fully resolved document.
class RunConfig {
  public:
    RunConfig();  // defaults
    static nlohmann::json default_schema();
    static RunConfig from_file(const std::string& path);
    static RunConfig from_json(const nlohmann::json& doc);

    /// `--section.key=value` dotted override; value is parsed as JSON when
    /// possible and treated as a string otherwise.
    void apply_override(const std::string& dotted_key, const std::string& value);

    const nlohmann::json& doc() const { return doc_; }
    std::string snapshot() const { return doc_.dump(2) + "\n"; }

    // Typed section views.
    std::string dataset_root() const;  // falls back to MSDC_DATA_ROOT
    int dataset_house() const;
    std::vector<std::string> dataset_appliances() const;
    DatasetConfig dataset() const;
    ExtractionConfig extraction() const;
    TrainConfig trainer() const;
    std::string run_dir() const;
    int metrics_period() const;
    bool ablation_single_state() const;
    double ablation_threshold() const;

    struct SimulatorSpec {
        std::uint64_t seed = 1;
        std::size_t length = 0;
        double interval_seconds = 3.0;
        AggregationNoiseSpec noise;
        std::vector<ApplianceFsm> appliances;
    };
    SimulatorSpec simulator() const;

    struct TheorySpec {
        VarianceExperimentSpec experiment;
        double xi = 5.0;
        double mean_tolerance_watts = 0.5;
        double var_tolerance_rel = 0.05;
    };
    TheorySpec theory() const;

    std::string evaluate_split() const;
    std::string evaluate_checkpoint() const;
    std::string evaluate_output_dir() const;

  private:
    nlohmann::json doc_;
};

}  // namespace msdc
