#pragma once

#include <string>
#include <vector>

namespace msdc {

struct MetricsReport {
    double mae = 0.0;             // watts
    double sae = 0.0;             // fraction
    double sae_delta = 0.0;       // watts
    double state_accuracy = 1.0;  // fraction in [0, 1]
};

/// (1/T) sum |pred - truth|.
double mae(const std::vector<double>& pred, const std::vector<double>& truth);

/// |sum pred - sum truth| / sum truth. Throws DataError when sum truth == 0.
double sae(const std::vector<double>& pred, const std::vector<double>& truth);

/// Splits the series into floor(T / period) disjoint consecutive periods of
/// `period` samples, computes (1/period)|sum pred - sum truth| per period and
/// averages over periods; the trailing partial period is dropped.
double sae_delta(const std::vector<double>& pred, const std::vector<double>& truth, int period);

/// Fraction of exactly matching labels.
double state_accuracy(const std::vector<int>& pred, const std::vector<int>& truth);

/// CSV with header `appliance,mae,sae,sae_delta,state_accuracy`.
void write_metrics_csv(const std::string& path,
                       const std::vector<std::pair<std::string, MetricsReport>>& rows);

}  // namespace msdc
