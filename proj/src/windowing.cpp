#include "msdc/windowing.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>

#include "msdc/errors.hpp"

namespace msdc {

void WindowSpec::validate() const {
    if (output_len <= 0 || input_len <= output_len) {
        throw UsageError("WindowSpec: need 0 < output_len < input_len");
    }
    if (stride <= 0 || stride > output_len) {
        throw UsageError("WindowSpec: need 0 < stride <= output_len");
    }
}

std::vector<int> window_centers(int series_len, const WindowSpec& spec) {
    spec.validate();
    if (series_len < spec.output_len) {
        throw DataError("window_centers: series shorter than output window");
    }
    const int first = spec.output_len / 2;
    const int last = series_len - (spec.output_len + 1) / 2;  // max center with output inside [0, T)
    std::vector<int> centers;
    for (int t = first; t <= last; t += spec.stride) {
        centers.push_back(t);
    }
    // Clamped tail window so index T-1 is always covered.
    if (centers.empty() || spec.output_end(centers.back()) < series_len) {
        centers.push_back(last);
    }
    return centers;
}

std::vector<double> pad_and_normalize(const PowerSeries& raw, const WindowSpec& spec,
                                      const NormalizationStats& stats) {
    if (raw.empty()) {
        throw DataError("pad_and_normalize: empty series");
    }
    const int pad = spec.input_len / 2;
    const int t_len = static_cast<int>(raw.size());
    std::vector<double> padded(static_cast<std::size_t>(t_len + 2 * pad));
    for (int i = 0; i < pad; ++i) padded[i] = raw.values.front();
    for (int i = 0; i < t_len; ++i) padded[pad + i] = raw.values[i];
    for (int i = 0; i < pad; ++i) padded[pad + t_len + i] = raw.values.back();
    for (double& v : padded) v = (v - stats.mean) / stats.std;
    return padded;
}

WindowBatch make_input_windows(const PowerSeries& aggregate, const WindowSpec& spec,
                               const NormalizationStats& stats) {
    const int t_len = static_cast<int>(aggregate.size());
    const auto centers = window_centers(t_len, spec);
    const auto padded = pad_and_normalize(aggregate, spec, stats);
    const int pad = spec.input_len / 2;

    WindowBatch batch;
    batch.series_len = t_len;
    batch.centers = centers;
    batch.inputs.resize(spec.input_len, static_cast<Eigen::Index>(centers.size()));
    for (std::size_t n = 0; n < centers.size(); ++n) {
        const int begin = spec.input_begin(centers[n]) + pad;  // index into padded
        for (int i = 0; i < spec.input_len; ++i) {
            batch.inputs(i, static_cast<Eigen::Index>(n)) = padded[begin + i];
        }
    }
    return batch;
}

WindowBatch make_windows(const PowerSeries& aggregate, const PowerSeries& appliance,
                         const std::vector<int>& states, const WindowSpec& spec,
                         const NormalizationStats& stats) {
    const int t_len = static_cast<int>(aggregate.size());
    if (appliance.size() != aggregate.size() || states.size() != aggregate.size()) {
        throw DataError("make_windows: aggregate, appliance and states must share length");
    }
    if (t_len < spec.output_len) {
        throw DataError("make_windows: series shorter than output window");
    }
    WindowBatch batch = make_input_windows(aggregate, spec, stats);
    const int n = batch.count();
    batch.target_power.resize(spec.output_len, n);
    batch.target_states.resize(spec.output_len, n);
    for (int k = 0; k < n; ++k) {
        const int begin = spec.output_begin(batch.centers[k]);
        for (int i = 0; i < spec.output_len; ++i) {
            batch.target_power(i, k) = appliance.values[begin + i];
            batch.target_states(i, k) = states[begin + i];
        }
    }
    return batch;
}

std::vector<double> stitch_predictions(const std::vector<int>& centers,
                                       const Eigen::MatrixXd& predictions, int series_len,
                                       const WindowSpec& spec) {
    if (predictions.cols() != static_cast<Eigen::Index>(centers.size()) ||
        predictions.rows() != spec.output_len) {
        throw DataError("stitch_predictions: prediction shape mismatch");
    }
    std::vector<double> sum(static_cast<std::size_t>(series_len), 0.0);
    std::vector<int> hits(static_cast<std::size_t>(series_len), 0);
    for (std::size_t k = 0; k < centers.size(); ++k) {
        const int begin = spec.output_begin(centers[k]);
        for (int i = 0; i < spec.output_len; ++i) {
            const int idx = begin + i;
            if (idx < 0 || idx >= series_len) {
                throw DataError("stitch_predictions: window outside [0, T)");
            }
            sum[idx] += predictions(i, static_cast<Eigen::Index>(k));
            ++hits[idx];
        }
    }
    for (int i = 0; i < series_len; ++i) {
        if (hits[i] == 0) {
            throw DataError("stitch_predictions: coverage gap at index " + std::to_string(i));
        }
        sum[i] = std::max(0.0, sum[i] / hits[i]);
    }
    return sum;
}

PowerSeries stitch_predictions_series(const std::vector<int>& centers,
                                      const Eigen::MatrixXd& predictions,
                                      const PowerSeries& like, const WindowSpec& spec) {
    PowerSeries out;
    out.start_timestamp = like.start_timestamp;
    out.interval = like.interval;
    out.values = stitch_predictions(centers, predictions, static_cast<int>(like.size()), spec);
    return out;
}

std::vector<int> stitch_states(const std::vector<int>& centers,
                               const Eigen::MatrixXi& state_windows, int series_len,
                               const WindowSpec& spec) {
    if (state_windows.cols() != static_cast<Eigen::Index>(centers.size()) ||
        state_windows.rows() != spec.output_len) {
        throw DataError("stitch_states: shape mismatch");
    }
    std::vector<int> out(static_cast<std::size_t>(series_len), -1);
    std::vector<int> best_dist(static_cast<std::size_t>(series_len), -1);
    for (std::size_t k = 0; k < centers.size(); ++k) {
        const int begin = spec.output_begin(centers[k]);
        for (int i = 0; i < spec.output_len; ++i) {
            const int idx = begin + i;
            if (idx < 0 || idx >= series_len) {
                throw DataError("stitch_states: window outside [0, T)");
            }
            const int dist = std::abs(idx - centers[k]);
            if (best_dist[idx] < 0 || dist < best_dist[idx]) {
                best_dist[idx] = dist;
                out[idx] = state_windows(i, static_cast<Eigen::Index>(k));
            }
        }
    }
    for (int i = 0; i < series_len; ++i) {
        if (out[i] < 0) {
            throw DataError("stitch_states: coverage gap at index " + std::to_string(i));
        }
    }
    return out;
}

}  // namespace msdc
