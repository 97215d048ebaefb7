#include "msdc/metrics.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "msdc/errors.hpp"

namespace msdc {

namespace {
void require_equal_lengths(std::size_t a, std::size_t b, const char* op) {
    if (a != b) {
        throw DataError(std::string(op) + ": length mismatch (" + std::to_string(a) + " vs " +
                        std::to_string(b) + ")");
    }
}
}  // namespace

double mae(const std::vector<double>& pred, const std::vector<double>& truth) {
    require_equal_lengths(pred.size(), truth.size(), "mae");
    if (pred.empty()) {
        throw DataError("mae: empty input");
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) sum += std::abs(pred[i] - truth[i]);
    return sum / static_cast<double>(pred.size());
}

double sae(const std::vector<double>& pred, const std::vector<double>& truth) {
    require_equal_lengths(pred.size(), truth.size(), "sae");
    double sp = 0.0, st = 0.0;
    for (double v : pred) sp += v;
    for (double v : truth) st += v;
    if (st <= 0.0) {
        throw DataError("sae: total truth energy is zero");
    }
    return std::abs(sp - st) / st;
}

double sae_delta(const std::vector<double>& pred, const std::vector<double>& truth, int period) {
    require_equal_lengths(pred.size(), truth.size(), "sae_delta");
    if (period < 1) {
        throw UsageError("sae_delta: period must be >= 1");
    }
    const int t_len = static_cast<int>(pred.size());
    const int num_periods = t_len / period;
    if (num_periods == 0) {
        throw DataError("sae_delta: series shorter than one period");
    }
    double total = 0.0;
    for (int k = 0; k < num_periods; ++k) {
        double rp = 0.0, rt = 0.0;
        for (int i = 0; i < period; ++i) {
            rp += pred[static_cast<std::size_t>(k) * period + i];
            rt += truth[static_cast<std::size_t>(k) * period + i];
        }
        total += std::abs(rp - rt) / period;
    }
    return total / num_periods;
}

double state_accuracy(const std::vector<int>& pred, const std::vector<int>& truth) {
    require_equal_lengths(pred.size(), truth.size(), "state_accuracy");
    if (pred.empty()) {
        throw DataError("state_accuracy: empty input");
    }
    std::size_t hits = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (pred[i] == truth[i]) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(pred.size());
}

void write_metrics_csv(const std::string& path,
                       const std::vector<std::pair<std::string, MetricsReport>>& rows) {
    std::ofstream out(path);
    if (!out) {
        throw DataError("write_metrics_csv: cannot open " + path);
    }
    out << "appliance,mae,sae,sae_delta,state_accuracy\n";
    char buf[64];
    auto fmt = [&buf](double v) {
        const auto res = std::to_chars(buf, buf + sizeof(buf), v);
        return std::string(buf, res.ptr);
    };
    for (const auto& [name, m] : rows) {
        out << name << ',' << fmt(m.mae) << ',' << fmt(m.sae) << ',' << fmt(m.sae_delta) << ','
            << fmt(m.state_accuracy) << '\n';
    }
}

}  // namespace msdc
