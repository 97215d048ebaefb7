#include "msdc/state_extraction.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "msdc/errors.hpp"

namespace msdc {

int StateModel::nearest(double value) const {
    int best = 0;
    double best_dist = std::numeric_limits<double>::infinity();
    for (int k = 0; k < num_states(); ++k) {
        const double d = std::abs(value - centers[k]);
        if (d < best_dist) {
            best_dist = d;
            best = k;
        }
    }
    return best;
}

namespace {

// Mean of the sorted values within [lo, hi] via prefix sums.
struct SortedView {
    std::vector<double> sorted;
    std::vector<double> prefix;  // prefix[i] = sum of sorted[0..i)

    explicit SortedView(const std::vector<double>& values) : sorted(values) {
        std::sort(sorted.begin(), sorted.end());
        prefix.resize(sorted.size() + 1, 0.0);
        for (std::size_t i = 0; i < sorted.size(); ++i) prefix[i + 1] = prefix[i] + sorted[i];
    }

    // Returns false when the window holds no points.
    bool window_mean(double lo, double hi, double& mean) const {
        const auto first = std::lower_bound(sorted.begin(), sorted.end(), lo) - sorted.begin();
        const auto last = std::upper_bound(sorted.begin(), sorted.end(), hi) - sorted.begin();
        if (last <= first) return false;
        mean = (prefix[last] - prefix[first]) / static_cast<double>(last - first);
        return true;
    }
};

}  // namespace

std::vector<double> mean_shift(const std::vector<double>& values, double bandwidth,
                               const ExtractionConfig& config) {
    if (values.empty()) {
        throw DataError("mean_shift: empty input");
    }
    if (bandwidth <= 0.0) {
        throw UsageError("mean_shift: bandwidth must be > 0");
    }
    const SortedView view(values);

    const std::size_t n = values.size();
    const std::size_t step =
        std::max<std::size_t>(1, (n + config.max_seeds - 1) / config.max_seeds);

    // Converge each seed to its mode.
    std::vector<double> modes;
    modes.reserve(n / step + 1);
    for (std::size_t i = 0; i < n; i += step) {
        double m = values[i];
        bool converged = false;
        for (int iter = 0; iter < config.max_iters; ++iter) {
            double next;
            if (!view.window_mean(m - bandwidth, m + bandwidth, next)) {
                next = m;  // isolated position, already a fixed point
            }
            const double shift = std::abs(next - m);
            m = next;
            if (shift < config.tolerance_watts) {
                converged = true;
                break;
            }
        }
        if (!converged) {
            throw NumericError("mean_shift: seed did not converge within " +
                               std::to_string(config.max_iters) + " iterations");
        }
        modes.push_back(m);
    }

    // Merge modes closer than bandwidth/2, single-linkage over sorted modes,
    // weighted by the number of seeds attracted to each mode.
    std::sort(modes.begin(), modes.end());
    std::vector<double> centers;
    double group_sum = modes[0];
    int group_count = 1;
    double group_last = modes[0];
    for (std::size_t i = 1; i < modes.size(); ++i) {
        if (modes[i] - group_last < bandwidth / 2.0) {
            group_sum += modes[i];
            ++group_count;
        } else {
            centers.push_back(group_sum / group_count);
            group_sum = modes[i];
            group_count = 1;
        }
        group_last = modes[i];
    }
    centers.push_back(group_sum / group_count);
    return centers;
}

std::pair<StateModel, StateSequence> extract_state_model(const PowerSeries& appliance,
                                                         const ExtractionConfig& config,
                                                         const std::string& appliance_id) {
    if (appliance.empty()) {
        throw DataError("extract_state_model: empty series");
    }
    double bandwidth = config.bandwidth_watts;
    if (bandwidth <= 0.0) {
        const double max_power = *std::max_element(appliance.values.begin(), appliance.values.end());
        bandwidth = 0.05 * max_power;
        if (bandwidth <= 0.0) bandwidth = 1.0;  // constant-zero series
    }

    StateModel model;
    model.appliance_id = appliance_id;
    model.bandwidth = bandwidth;
    model.centers = mean_shift(appliance.values, bandwidth, config);

    StateSequence seq = assign_states(appliance, model);

    // Dissolve clusters holding fewer than min_fraction of the samples,
    // smallest first, reassigning their points to surviving centers.
    const auto min_count = static_cast<std::size_t>(
        std::ceil(config.min_fraction * static_cast<double>(appliance.size())));
    while (model.num_states() > 1) {
        std::vector<std::size_t> counts(model.centers.size(), 0);
        for (int label : seq.labels) ++counts[label];
        int smallest = 0;
        for (int k = 1; k < model.num_states(); ++k) {
            if (counts[k] < counts[smallest]) smallest = k;
        }
        if (counts[smallest] >= min_count) break;
        model.centers.erase(model.centers.begin() + smallest);
        seq = assign_states(appliance, model);
    }
    return {std::move(model), std::move(seq)};
}

StateSequence assign_states(const PowerSeries& appliance, const StateModel& model) {
    StateSequence seq;
    seq.labels.resize(appliance.size());
    for (std::size_t i = 0; i < appliance.size(); ++i) {
        seq.labels[i] = model.nearest(appliance.values[i]);
    }
    return seq;
}

Eigen::MatrixXd one_hot(const StateSequence& states, int num_states) {
    Eigen::MatrixXd out =
        Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(states.labels.size()), num_states);
    for (std::size_t i = 0; i < states.labels.size(); ++i) {
        const int label = states.labels[i];
        if (label < 0 || label >= num_states) {
            throw DataError("one_hot: label " + std::to_string(label) + " out of range [0, " +
                            std::to_string(num_states) + ")");
        }
        out(static_cast<Eigen::Index>(i), label) = 1.0;
    }
    return out;
}

void write_state_sidecar(const std::string& path, const std::vector<double>& centers,
                         const std::vector<int>& labels) {
    std::ofstream out(path);
    if (!out) {
        throw DataError("write_state_sidecar: cannot open " + path);
    }
    out << "# centers: ";
    char buf[64];
    for (std::size_t k = 0; k < centers.size(); ++k) {
        std::snprintf(buf, sizeof(buf), "%.4f", centers[k]);
        out << (k ? "," : "") << buf;
    }
    out << '\n';
    for (std::size_t i = 0; i < labels.size(); ++i) {
        out << i << '\t' << labels[i] << '\n';
    }
}

std::pair<std::vector<double>, std::vector<int>> read_state_sidecar(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw DataError("read_state_sidecar: cannot open " + path);
    }
    std::string header;
    if (!std::getline(in, header) || header.rfind("# centers: ", 0) != 0) {
        throw DataError("read_state_sidecar: missing centers header in " + path);
    }
    std::vector<double> centers;
    {
        std::stringstream ss(header.substr(11));
        std::string tok;
        while (std::getline(ss, tok, ',')) centers.push_back(std::stod(tok));
    }
    std::vector<int> labels;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos) {
            throw DataError("read_state_sidecar: malformed line in " + path);
        }
        labels.push_back(std::stoi(line.substr(tab + 1)));
    }
    return {std::move(centers), std::move(labels)};
}

}  // namespace msdc
