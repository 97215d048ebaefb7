#pragma once

#include <map>
#include <string>
#include <vector>

#include "msdc/power_series.hpp"

namespace msdc {

/// Non-uniformly timestamped readings straight from a channel file.
struct RawChannel {
    std::vector<double> timestamps;
    std::vector<double> watts;
    std::size_t malformed = 0;
    std::size_t total_lines = 0;
};

struct DatasetConfig {
    double target_interval_seconds = 3.0;
    int max_gap_intervals = 3;           // forward-fill horizon
    double zero_fraction_threshold = 0.995;
    std::string alias_file;              // optional, TSV of alias groups
};

struct HouseBundle {
    int house_id = 0;
    PowerSeries mains;
    std::map<std::string, PowerSeries> channels;  // requested name -> series
    double interval = 0.0;
    std::vector<std::string> notes;  // cleaning / retention report
};

/// Lines of `unix_timestamp<SPACE>watts`. Malformed lines are counted and
/// skipped; more than 1% malformed is a hard error. An empty file yields
/// an empty channel (callers warn).
RawChannel parse_channel_file(const std::string& path);

/// Buckets `raw` onto the grid t0 + k*interval, k in [0, n): samples in a
/// bucket are averaged; empty buckets are forward-filled while the gap is
/// at most max_gap_intervals buckets, beyond that the bucket is invalid.
struct ResampledChannel {
    std::vector<double> values;
    std::vector<bool> valid;
};
ResampledChannel resample_to_grid(const RawChannel& raw, double t0, double interval, std::size_t n,
                                  int max_gap_intervals);

/// Resamples both series to target_interval over their overlapping time
/// range; indices invalid in either series split the data and the largest
/// contiguous segment is retained. Throws DataError when ranges do not
/// overlap.
std::pair<PowerSeries, PowerSeries> align_and_resample(const RawChannel& mains,
                                                       const RawChannel& channel,
                                                       double target_interval,
                                                       int max_gap_intervals = 3);

/// Appliance-name alias groups; names are matched after normalization
/// (lowercase, non-alphanumeric -> '_') by equality, substring either way,
/// or shared alias group.
class ApplianceAliases {
  public:
    ApplianceAliases();  // built-in defaults
    static ApplianceAliases from_file(const std::string& path);
    bool matches(const std::string& requested, const std::string& channel_name) const;
    static std::string normalize(const std::string& name);

  private:
    std::vector<std::vector<std::string>> groups_;
};

/// Loads `root/house_<id>` with the requested appliances; channels whose
/// labels match "mains" are summed into the bundle mains, and multiple
/// channels matching one appliance are summed. A requested appliance with
/// no matching channel is a hard error.
HouseBundle load_house(const std::string& root, int house_id,
                       const std::vector<std::string>& appliances, const DatasetConfig& config);

/// Writes the REDD on-disk layout: labels.dat plus channel_<k>.dat files,
/// channel 1 = mains, appliances from channel 2 on (iteration order of the
/// map). Values are written in shortest round-trip decimal form.
void export_house(const std::string& root, int house_id, const PowerSeries& mains,
                  const std::vector<std::pair<std::string, PowerSeries>>& appliances);

/// Path helpers for the REDD layout.
std::string house_dir(const std::string& root, int house_id);
std::string channel_path(const std::string& root, int house_id, int channel);

}  // namespace msdc
