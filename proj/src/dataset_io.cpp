#include "msdc/dataset_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "msdc/errors.hpp"

namespace msdc {

namespace {

bool parse_double(const std::string& tok, double& out) {
    const char* begin = tok.data();
    const char* end = begin + tok.size();
    const auto res = std::from_chars(begin, end, out);
    return res.ec == std::errc() && res.ptr == end && std::isfinite(out);
}

std::string format_double(double v) {
    char buf[64];
    if (v == std::floor(v) && std::abs(v) < 1e15) {
        const auto res = std::to_chars(buf, buf + sizeof(buf), static_cast<long long>(v));
        return std::string(buf, res.ptr);
    }
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

}  // namespace

RawChannel parse_channel_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw DataError("parse_channel_file: cannot open " + path);
    }
    RawChannel channel;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        ++channel.total_lines;
        const auto space = line.find(' ');
        double ts = 0.0, watts = 0.0;
        if (space == std::string::npos || !parse_double(line.substr(0, space), ts) ||
            !parse_double(line.substr(space + 1), watts)) {
            ++channel.malformed;
            continue;
        }
        channel.timestamps.push_back(ts);
        channel.watts.push_back(watts);
    }
    if (channel.total_lines > 0 &&
        static_cast<double>(channel.malformed) > 0.01 * static_cast<double>(channel.total_lines)) {
        throw DataError("parse_channel_file: " + std::to_string(channel.malformed) + " of " +
                        std::to_string(channel.total_lines) + " lines malformed in " + path);
    }
    return channel;
}

ResampledChannel resample_to_grid(const RawChannel& raw, double t0, double interval, std::size_t n,
                                  int max_gap_intervals) {
    ResampledChannel out;
    out.values.assign(n, 0.0);
    out.valid.assign(n, false);

    std::vector<double> sums(n, 0.0);
    std::vector<std::size_t> counts(n, 0);
    for (std::size_t i = 0; i < raw.timestamps.size(); ++i) {
        const double rel = (raw.timestamps[i] - t0) / interval;
        const auto k = static_cast<long long>(std::floor(rel));
        if (k < 0 || k >= static_cast<long long>(n)) continue;
        sums[static_cast<std::size_t>(k)] += raw.watts[i];
        ++counts[static_cast<std::size_t>(k)];
    }

    long long last_filled = -1;
    double last_value = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        if (counts[k] > 0) {
            out.values[k] = sums[k] / static_cast<double>(counts[k]);
            out.valid[k] = true;
            last_filled = static_cast<long long>(k);
            last_value = out.values[k];
        } else if (last_filled >= 0 &&
                   static_cast<long long>(k) - last_filled <= max_gap_intervals) {
            out.values[k] = last_value;  // forward fill inside the gap horizon
            out.valid[k] = true;
        }
    }
    return out;
}

namespace {

struct GridSpec {
    double t0 = 0.0;
    std::size_t n = 0;
};

GridSpec overlap_grid(const std::vector<const RawChannel*>& channels, double interval) {
    double t_begin = -std::numeric_limits<double>::infinity();
    double t_end = std::numeric_limits<double>::infinity();
    for (const auto* c : channels) {
        if (c->timestamps.empty()) {
            throw DataError("align: empty channel");
        }
        t_begin = std::max(t_begin, c->timestamps.front());
        t_end = std::min(t_end, c->timestamps.back());
    }
    if (t_end < t_begin) {
        throw DataError("align: channel time ranges do not overlap");
    }
    GridSpec grid;
    grid.t0 = t_begin;
    grid.n = static_cast<std::size_t>(std::floor((t_end - t_begin) / interval)) + 1;
    return grid;
}

struct Segment {
    std::size_t begin = 0, length = 0;
};

Segment longest_valid_run(const std::vector<bool>& valid) {
    Segment best, cur;
    for (std::size_t i = 0; i < valid.size(); ++i) {
        if (valid[i]) {
            if (cur.length == 0) cur.begin = i;
            ++cur.length;
            if (cur.length > best.length) best = cur;
        } else {
            cur.length = 0;
        }
    }
    return best;
}

}  // namespace

std::pair<PowerSeries, PowerSeries> align_and_resample(const RawChannel& mains,
                                                       const RawChannel& channel,
                                                       double target_interval,
                                                       int max_gap_intervals) {
    if (target_interval <= 0.0) {
        throw UsageError("align_and_resample: target interval must be > 0");
    }
    const GridSpec grid = overlap_grid({&mains, &channel}, target_interval);
    const auto rm = resample_to_grid(mains, grid.t0, target_interval, grid.n, max_gap_intervals);
    const auto rc = resample_to_grid(channel, grid.t0, target_interval, grid.n, max_gap_intervals);

    std::vector<bool> both(grid.n);
    for (std::size_t i = 0; i < grid.n; ++i) both[i] = rm.valid[i] && rc.valid[i];
    const Segment seg = longest_valid_run(both);
    if (seg.length == 0) {
        throw DataError("align_and_resample: no valid overlapping samples");
    }

    auto slice = [&](const ResampledChannel& r) {
        PowerSeries s;
        s.start_timestamp = grid.t0 + target_interval * static_cast<double>(seg.begin);
        s.interval = target_interval;
        s.values.assign(r.values.begin() + static_cast<long>(seg.begin),
                        r.values.begin() + static_cast<long>(seg.begin + seg.length));
        return s;
    };
    return {slice(rm), slice(rc)};
}

std::string ApplianceAliases::normalize(const std::string& name) {
    std::string out;
    out.reserve(name.size());
    bool last_sep = true;
    for (char ch : name) {
        if (std::isalnum(static_cast<unsigned char>(ch))) {
            out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
            last_sep = false;
        } else if (!last_sep) {
            out.push_back('_');
            last_sep = true;
        }
    }
    while (!out.empty() && out.back() == '_') out.pop_back();
    return out;
}

ApplianceAliases::ApplianceAliases() {
    groups_ = {
        {"fridge", "refrigerator", "fridge_freezer"},
        {"washing_machine", "washer_dryer", "washer"},
        {"dishwasher", "dishwaser", "dish_washer"},
        {"microwave"},
        {"kettle"},
        {"mains", "aggregate"},
    };
}

ApplianceAliases ApplianceAliases::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw DataError("ApplianceAliases: cannot open " + path);
    }
    ApplianceAliases aliases;
    aliases.groups_.clear();
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::vector<std::string> group;
        std::stringstream ss(line);
        std::string tok;
        while (std::getline(ss, tok, '\t')) {
            const std::string norm = normalize(tok);
            if (!norm.empty()) group.push_back(norm);
        }
        if (!group.empty()) aliases.groups_.push_back(std::move(group));
    }
    return aliases;
}

bool ApplianceAliases::matches(const std::string& requested, const std::string& channel_name) const {
    const std::string a = normalize(requested);
    const std::string b = normalize(channel_name);
    if (a.empty() || b.empty()) return false;
    auto related = [&](const std::string& x, const std::string& y) {
        return x == y || x.find(y) != std::string::npos || y.find(x) != std::string::npos;
    };
    if (related(a, b)) return true;
    for (const auto& group : groups_) {
        bool has_a = false, has_b = false;
        for (const auto& name : group) {
            has_a = has_a || related(a, name);
            has_b = has_b || related(b, name);
        }
        if (has_a && has_b) return true;
    }
    return false;
}

std::string house_dir(const std::string& root, int house_id) {
    return root + "/house_" + std::to_string(house_id);
}

std::string channel_path(const std::string& root, int house_id, int channel) {
    return house_dir(root, house_id) + "/channel_" + std::to_string(channel) + ".dat";
}

HouseBundle load_house(const std::string& root, int house_id,
                       const std::vector<std::string>& appliances, const DatasetConfig& config) {
    const std::string dir = house_dir(root, house_id);
    const std::string labels_path = dir + "/labels.dat";
    std::ifstream labels_in(labels_path);
    if (!labels_in) {
        throw DataError("load_house: missing labels file " + labels_path);
    }
    std::vector<std::pair<int, std::string>> labels;
    std::string line;
    while (std::getline(labels_in, line)) {
        if (line.empty()) continue;
        const auto space = line.find(' ');
        if (space == std::string::npos) {
            throw DataError("load_house: malformed labels line `" + line + "`");
        }
        labels.emplace_back(std::stoi(line.substr(0, space)), line.substr(space + 1));
    }

    const ApplianceAliases aliases = config.alias_file.empty()
                                         ? ApplianceAliases()
                                         : ApplianceAliases::from_file(config.alias_file);

    // Channel numbers per requested name; "mains" resolved implicitly.
    auto channels_for = [&](const std::string& name) {
        std::vector<int> found;
        for (const auto& [num, label] : labels) {
            if (aliases.matches(name, label)) found.push_back(num);
        }
        std::sort(found.begin(), found.end());
        return found;
    };

    HouseBundle bundle;
    bundle.house_id = house_id;
    bundle.interval = config.target_interval_seconds;

    const std::vector<int> mains_channels = channels_for("mains");
    if (mains_channels.empty()) {
        throw DataError("load_house: no mains channel in " + labels_path);
    }

    struct Loaded {
        std::string name;
        std::vector<RawChannel> raws;
    };
    std::vector<Loaded> loaded;
    {
        Loaded mains{"mains", {}};
        for (int k : mains_channels) mains.raws.push_back(parse_channel_file(channel_path(root, house_id, k)));
        loaded.push_back(std::move(mains));
    }
    for (const auto& name : appliances) {
        const auto nums = channels_for(name);
        if (nums.empty()) {
            throw DataError("load_house: no channel matches appliance `" + name + "` in " +
                            labels_path);
        }
        Loaded l{name, {}};
        for (int k : nums) l.raws.push_back(parse_channel_file(channel_path(root, house_id, k)));
        loaded.push_back(std::move(l));
    }

    std::vector<const RawChannel*> all;
    for (const auto& l : loaded) {
        for (const auto& r : l.raws) {
            if (r.timestamps.empty()) {
                bundle.notes.push_back("warning: empty channel for " + l.name);
            }
            if (r.malformed > 0) {
                bundle.notes.push_back("warning: " + std::to_string(r.malformed) +
                                       " malformed lines in a " + l.name + " channel");
            }
            all.push_back(&r);
        }
    }
    const GridSpec grid = overlap_grid(all, config.target_interval_seconds);

    // Shared validity across every channel, then the largest segment.
    std::vector<bool> valid(grid.n, true);
    std::vector<std::pair<const Loaded*, std::vector<ResampledChannel>>> resampled;
    for (const auto& l : loaded) {
        std::vector<ResampledChannel> rs;
        for (const auto& r : l.raws) {
            rs.push_back(resample_to_grid(r, grid.t0, config.target_interval_seconds, grid.n,
                                          config.max_gap_intervals));
            const auto& v = rs.back().valid;
            for (std::size_t i = 0; i < grid.n; ++i) valid[i] = valid[i] && v[i];
        }
        resampled.emplace_back(&l, std::move(rs));
    }
    const Segment seg = longest_valid_run(valid);
    if (seg.length == 0) {
        throw DataError("load_house: no jointly valid samples after alignment");
    }
    if (seg.length < grid.n) {
        bundle.notes.push_back("retained largest contiguous segment: " +
                               std::to_string(seg.length) + " of " + std::to_string(grid.n) +
                               " samples");
    }

    auto assemble = [&](const std::vector<ResampledChannel>& rs) {
        PowerSeries s;
        s.start_timestamp = grid.t0 + config.target_interval_seconds * static_cast<double>(seg.begin);
        s.interval = config.target_interval_seconds;
        s.values.assign(seg.length, 0.0);
        for (const auto& r : rs) {
            for (std::size_t i = 0; i < seg.length; ++i) s.values[i] += r.values[seg.begin + i];
        }
        clean_in_place(s);
        return s;
    };

    for (const auto& [l, rs] : resampled) {
        PowerSeries series = assemble(rs);
        std::size_t zeros = 0;
        for (double v : series.values) {
            if (v == 0.0) ++zeros;
        }
        const double zero_fraction = static_cast<double>(zeros) / static_cast<double>(seg.length);
        if (l->name != "mains" && zero_fraction > config.zero_fraction_threshold) {
            bundle.notes.push_back("warning: appliance `" + l->name + "` is " +
                                   std::to_string(zero_fraction * 100.0) + "% zero readings");
        }
        if (l->name == "mains") {
            bundle.mains = std::move(series);
        } else {
            bundle.channels[l->name] = std::move(series);
        }
    }
    return bundle;
}

void export_house(const std::string& root, int house_id, const PowerSeries& mains,
                  const std::vector<std::pair<std::string, PowerSeries>>& appliances) {
    const std::string dir = house_dir(root, house_id);
    std::filesystem::create_directories(dir);

    std::ofstream labels(dir + "/labels.dat");
    if (!labels) {
        throw DataError("export_house: cannot write labels.dat in " + dir);
    }
    labels << "1 mains\n";
    for (std::size_t i = 0; i < appliances.size(); ++i) {
        labels << (i + 2) << ' ' << appliances[i].first << '\n';
    }

    auto write_channel = [&](int number, const PowerSeries& series) {
        std::ofstream out(channel_path(root, house_id, number));
        if (!out) {
            throw DataError("export_house: cannot write channel " + std::to_string(number));
        }
        for (std::size_t i = 0; i < series.size(); ++i) {
            out << format_double(series.timestamp_at(i)) << ' ' << format_double(series.values[i])
                << '\n';
        }
    };
    write_channel(1, mains);
    for (std::size_t i = 0; i < appliances.size(); ++i) {
        write_channel(static_cast<int>(i) + 2, appliances[i].second);
    }
}

}  // namespace msdc
