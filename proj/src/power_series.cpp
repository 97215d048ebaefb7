#include "msdc/power_series.hpp"

#include <cmath>

#include "msdc/errors.hpp"

namespace msdc {

std::size_t clean_in_place(PowerSeries& series) {
    std::size_t altered = 0;
    for (double& v : series.values) {
        if (!std::isfinite(v)) {
            v = 0.0;
            ++altered;
        } else if (v < 0.0) {
            v = 0.0;
            ++altered;
        }
    }
    return altered;
}

NormalizationStats compute_normalization(const PowerSeries& series) {
    if (series.empty()) {
        throw NumericError("compute_normalization: empty series");
    }
    const auto n = static_cast<double>(series.size());
    double mean = 0.0;
    for (double v : series.values) mean += v;
    mean /= n;
    double var = 0.0;
    for (double v : series.values) {
        const double d = v - mean;
        var += d * d;
    }
    var /= n;  // population variance
    const double std = std::sqrt(var);
    if (std == 0.0) {
        throw NumericError("compute_normalization: degenerate series (std == 0)");
    }
    return {mean, std};
}

std::vector<double> normalize(const PowerSeries& series, const NormalizationStats& stats) {
    if (stats.std <= 0.0) {
        throw NumericError("normalize: stats.std must be > 0");
    }
    std::vector<double> out(series.size());
    for (std::size_t i = 0; i < series.size(); ++i) {
        out[i] = (series.values[i] - stats.mean) / stats.std;
    }
    return out;
}

std::vector<double> denormalize(const std::vector<double>& values, const NormalizationStats& stats) {
    std::vector<double> out(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        out[i] = values[i] * stats.std + stats.mean;
    }
    return out;
}

}  // namespace msdc
