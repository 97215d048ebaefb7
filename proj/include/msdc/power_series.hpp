#pragma once

#include <string>
#include <vector>

namespace msdc {

/// Uniformly sampled power signal in watts. Values are finite and >= 0
/// after cleaning; the sampling interval is constant across the series.
struct PowerSeries {
    double start_timestamp = 0.0;  // seconds since epoch
    double interval = 1.0;         // seconds per sample, > 0
    std::vector<double> values;    // watts

    std::size_t size() const { return values.size(); }
    bool empty() const { return values.empty(); }
    double timestamp_at(std::size_t i) const {
        return start_timestamp + interval * static_cast<double>(i);
    }
};

struct NormalizationStats {
    double mean = 0.0;
    double std = 1.0;  // > 0
};

/// Replaces non-finite readings with 0 and clamps negatives to 0.
/// Returns the number of samples that were altered.
std::size_t clean_in_place(PowerSeries& series);

/// Mean and population standard deviation of the series values.
/// Throws NumericError on an empty or constant (std == 0) series.
NormalizationStats compute_normalization(const PowerSeries& series);

/// Elementwise (v - mean) / std.
std::vector<double> normalize(const PowerSeries& series, const NormalizationStats& stats);

/// Inverse of normalize.
std::vector<double> denormalize(const std::vector<double>& values, const NormalizationStats& stats);

}  // namespace msdc
