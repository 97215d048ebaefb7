#pragma once

#include <Eigen/Dense>
#include <vector>

#include "msdc/power_series.hpp"

namespace msdc {

/// Sliding-window geometry. The input window at center t covers indices
/// [t - floor(w/2), t + ceil(w/2) - 1]; the output window covers
/// [t - floor(q/2), t + ceil(q/2) - 1]. The two are nested and co-centered.
struct WindowSpec {
    int input_len = 0;   // w
    int output_len = 0;  // q
    int stride = 0;      // <= q

    void validate() const;
    int input_begin(int center) const { return center - input_len / 2; }
    int input_end(int center) const { return center + (input_len + 1) / 2; }  // exclusive
    int output_begin(int center) const { return center - output_len / 2; }
    int output_end(int center) const { return center + (output_len + 1) / 2; }  // exclusive
};

/// One batch element per window center; inputs are normalized aggregate
/// segments, targets stay in raw watts / state labels.
struct WindowBatch {
    Eigen::MatrixXd inputs;         // w x N
    Eigen::MatrixXd target_power;   // q x N
    Eigen::MatrixXi target_states;  // q x N
    std::vector<int> centers;       // N
    int series_len = 0;             // T

    int count() const { return static_cast<int>(centers.size()); }
};

/// Window centers stepped by spec.stride so every index in [0, T) is
/// covered by at least one output window (a clamped tail center is
/// appended when the stride tiling falls short).
std::vector<int> window_centers(int series_len, const WindowSpec& spec);

/// Replicate-pads `raw` by floor(w/2) samples on each side, then normalizes.
std::vector<double> pad_and_normalize(const PowerSeries& raw, const WindowSpec& spec,
                                      const NormalizationStats& stats);

/// Inputs only (inference path): padded + normalized aggregate windows.
WindowBatch make_input_windows(const PowerSeries& aggregate, const WindowSpec& spec,
                               const NormalizationStats& stats);

/// Full supervised batch: aggregate, per-appliance watts and state labels
/// must share length T >= q.
WindowBatch make_windows(const PowerSeries& aggregate, const PowerSeries& appliance,
                         const std::vector<int>& states, const WindowSpec& spec,
                         const NormalizationStats& stats);

/// Averages overlapping q-length predictions per index and clamps at 0 W.
/// Throws DataError when some index in [0, T) is not covered.
std::vector<double> stitch_predictions(const std::vector<int>& centers,
                                       const Eigen::MatrixXd& predictions, int series_len,
                                       const WindowSpec& spec);

PowerSeries stitch_predictions_series(const std::vector<int>& centers,
                                      const Eigen::MatrixXd& predictions,
                                      const PowerSeries& like, const WindowSpec& spec);

/// Per-index state decision from overlapping windows: the window whose
/// center is nearest to the index wins, earlier center on ties.
std::vector<int> stitch_states(const std::vector<int>& centers,
                               const Eigen::MatrixXi& state_windows, int series_len,
                               const WindowSpec& spec);

}  // namespace msdc
