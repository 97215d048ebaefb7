#include "msdc/ablation.hpp"

#include "msdc/errors.hpp"

namespace msdc {

std::pair<StateModel, StateSequence> collapse_states(const StateModel& model,
                                                     const StateSequence& sequence,
                                                     double threshold_watts) {
    if (model.num_states() < 1) {
        throw DataError("collapse_states: empty state model");
    }
    if (threshold_watts <= model.centers.front() || threshold_watts > model.centers.back()) {
        throw UsageError("collapse_states: threshold " + std::to_string(threshold_watts) +
                         " W must lie between the lowest and highest centers");
    }

    std::vector<int> binary_of(model.centers.size());
    for (int k = 0; k < model.num_states(); ++k) {
        binary_of[k] = model.centers[k] < threshold_watts ? 0 : 1;
    }

    std::array<double, 2> weighted_sum = {0.0, 0.0};
    std::array<std::size_t, 2> counts = {0, 0};
    StateSequence collapsed;
    collapsed.labels.resize(sequence.labels.size());
    for (std::size_t i = 0; i < sequence.labels.size(); ++i) {
        const int label = sequence.labels[i];
        if (label < 0 || label >= model.num_states()) {
            throw DataError("collapse_states: label out of range");
        }
        const int b = binary_of[label];
        collapsed.labels[i] = b;
        weighted_sum[b] += model.centers[label];
        ++counts[b];
    }

    StateModel out;
    out.appliance_id = model.appliance_id;
    out.bandwidth = model.bandwidth;
    out.centers.resize(2);
    for (int b = 0; b < 2; ++b) {
        if (counts[b] > 0) {
            out.centers[b] = weighted_sum[b] / static_cast<double>(counts[b]);
        } else {
            // A side never visited: fall back to the plain mean of its centers.
            double sum = 0.0;
            int n = 0;
            for (int k = 0; k < model.num_states(); ++k) {
                if (binary_of[k] == b) {
                    sum += model.centers[k];
                    ++n;
                }
            }
            out.centers[b] = n ? sum / n : (b == 0 ? 0.0 : threshold_watts);
        }
    }
    return {std::move(out), std::move(collapsed)};
}

}  // namespace msdc
