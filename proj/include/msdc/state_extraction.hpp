#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "msdc/power_series.hpp"

namespace msdc {

/// An appliance's discrete power states: sorted distinct watt levels.
struct StateModel {
    std::string appliance_id;
    std::vector<double> centers;  // strictly increasing, watts
    double bandwidth = 0.0;       // watts used at extraction

    int num_states() const { return static_cast<int>(centers.size()); }

    /// Index of the nearest center; lower index wins ties.
    int nearest(double value) const;
};

struct StateSequence {
    std::vector<int> labels;
};

struct ExtractionConfig {
    double bandwidth_watts = 0.0;  // 0 = auto: 5% of observed max power
    double min_fraction = 0.005;   // cluster survival threshold
    double tolerance_watts = 1e-3;
    int max_iters = 500;
    int max_seeds = 10000;
};

/// Flat-kernel mean shift over 1-D watt readings. Seeds are every k-th
/// point (k chosen so at most max_seeds seeds); each seed iterates to the
/// mean of the points within `bandwidth` of it; converged modes closer
/// than bandwidth/2 are merged (weighted by attracted seeds).
/// Returns sorted ascending cluster centers.
/// Throws NumericError when a seed fails to converge within max_iters.
std::vector<double> mean_shift(const std::vector<double>& values, double bandwidth,
                               const ExtractionConfig& config = {});

/// Runs mean shift, assigns every timestep to its nearest center and
/// dissolves clusters holding fewer than min_fraction of the samples into
/// the nearest surviving center.
std::pair<StateModel, StateSequence> extract_state_model(const PowerSeries& appliance,
                                                         const ExtractionConfig& config,
                                                         const std::string& appliance_id = "");

/// Assigns labels for a series against an existing model.
StateSequence assign_states(const PowerSeries& appliance, const StateModel& model);

/// Rows are one-hot vectors; throws DataError when a label is out of range.
Eigen::MatrixXd one_hot(const StateSequence& states, int num_states);

/// Sidecar format: header `# centers: c0,c1,...` (4 decimal places),
/// then one `index<TAB>label` line per timestep.
void write_state_sidecar(const std::string& path, const std::vector<double>& centers,
                         const std::vector<int>& labels);
std::pair<std::vector<double>, std::vector<int>> read_state_sidecar(const std::string& path);

}  // namespace msdc
