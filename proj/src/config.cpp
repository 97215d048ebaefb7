#include "msdc/config.hpp"

#include <cstdlib>
#include <fstream>

#include "msdc/errors.hpp"

namespace msdc {

namespace {

using nlohmann::json;

bool same_kind(const json& a, const json& b) {
    if (a.is_number() && b.is_number()) return true;
    return a.type() == b.type();
}

// Recursively checks `user` against `schema` and merges values in.
void merge_checked(json& schema, const json& user, const std::string& prefix) {
    if (!user.is_object()) {
        throw UsageError("config: expected object at `" + (prefix.empty() ? "<root>" : prefix) +
                         "`");
    }
    for (const auto& [key, value] : user.items()) {
        const std::string path = prefix.empty() ? key : prefix + "." + key;
        if (!schema.contains(key)) {
            throw UsageError("config: unknown key `" + path + "`");
        }
        json& slot = schema[key];
        if (slot.is_object()) {
            merge_checked(slot, value, path);
        } else if (slot.is_array() && !slot.empty() && slot[0].is_object()) {
            // Array of structured entries (simulator appliances): validate
            // each element against the first default entry.
            if (!value.is_array()) {
                throw UsageError("config: `" + path + "` must be an array");
            }
            json element_schema = slot[0];
            json merged = json::array();
            for (std::size_t i = 0; i < value.size(); ++i) {
                json element = element_schema;
                merge_checked(element, value[i], path + "[" + std::to_string(i) + "]");
                merged.push_back(std::move(element));
            }
            slot = std::move(merged);
        } else {
            if (!same_kind(slot, value)) {
                throw UsageError("config: wrong type for `" + path + "`");
            }
            slot = value;
        }
    }
}

double number_at(const json& doc, const char* section, const char* key) {
    return doc.at(section).at(key).get<double>();
}

}  // namespace

nlohmann::json RunConfig::default_schema() {
    return json{
        {"dataset",
         {{"root", ""},
          {"house", 1},
          {"appliances", json::array({"dishwasher_sim", "fridge_sim"})},
          {"target_interval_seconds", 3.0},
          {"max_gap_intervals", 3},
          {"zero_fraction_threshold", 0.995},
          {"alias_file", ""}}},
        {"extraction",
         {{"bandwidth_watts", 0.0},
          {"min_fraction", 0.005},
          {"tolerance_watts", 0.001},
          {"max_iters", 500},
          {"max_seeds", 10000}}},
        {"window",
         {{"input_len", 200}, {"output_len", 32}, {"train_stride", 0}, {"eval_stride", 0}}},
        {"network",
         {{"conv_channels", json::array({30, 30, 40, 50, 50, 50})},
          {"conv_kernels", json::array({10, 8, 6, 5, 5, 5})},
          {"fc_hidden", 1024}}},
        {"crf", {{"emission", "log_prob"}}},
        {"trainer",
         {{"loss", "msdc"},
          {"batch_size", 64},
          {"learning_rate", 0.001},
          {"adam_beta1", 0.9},
          {"adam_beta2", 0.999},
          {"adam_epsilon", 1e-8},
          {"max_epochs", 30},
          {"patience", 5},
          {"seed", 1},
          {"split_ratios", json::array({0.7, 0.1, 0.2})},
          {"workers", 2},
          {"power_loss_weight", 0.0},
          {"run_dir", "runs"}}},
        {"metrics", {{"sae_delta_period", 1200}}},
        {"ablation", {{"mode", "multi_state"}, {"threshold_watts", 0.0}}},
        {"simulator",
         {{"seed", 1},
          {"length", 200000},
          {"interval_seconds", 3.0},
          {"base_load_watts", 30.0},
          {"base_load_profile", "constant"},
          {"base_load_period_samples", 1200.0},
          {"base_load_amplitude_fraction", 0.2},
          {"noise_std_watts", 5.0},
          {"appliances",
           json::array(
               {{{"name", "dishwasher_sim"},
                 {"means", json::array({0.0, 300.0, 800.0})},
                 {"stds", json::array({2.0, 4.0, 5.0})},
                 {"transition",
                  json::array({json::array({0.98, 0.02, 0.0}), json::array({0.01, 0.97, 0.02}),
                               json::array({0.02, 0.01, 0.97})})},
                 {"initial", json::array({1.0, 0.0, 0.0})}},
                {{"name", "fridge_sim"},
                 {"means", json::array({0.0, 150.0})},
                 {"stds", json::array({1.0, 3.0})},
                 {"transition", json::array({json::array({0.99, 0.01}), json::array({0.02, 0.98})})},
                 {"initial", json::array({1.0, 0.0})}}})}}},
        {"theory",
         {{"probs", json::array({1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0})},
          {"means", json::array({0.0, 300.0, 800.0})},
          {"stds", json::array({12.0, 12.0, 12.0})},
          {"aggregate_std", 12.0},
          {"samples", 100000},
          {"xi", 5.0},
          {"seed", 1},
          {"mean_tolerance_watts", 0.5},
          {"var_tolerance_rel", 0.05}}},
        {"evaluate",
         {{"split", "test"},
          {"checkpoint", ""},
          {"output_dir", "eval"},
          {"truth_states", "extracted"}}},
    };
}

RunConfig::RunConfig() : doc_(default_schema()) {}

RunConfig RunConfig::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw UsageError("config: cannot open " + path);
    }
    json user;
    try {
        in >> user;
    } catch (const json::exception& e) {
        throw UsageError("config: failed to parse " + path + ": " + e.what());
    }
    return from_json(user);
}

RunConfig RunConfig::from_json(const nlohmann::json& user) {
    RunConfig config;
    merge_checked(config.doc_, user, "");
    return config;
}

void RunConfig::apply_override(const std::string& dotted_key, const std::string& value) {
    // Build a nested single-key document and merge it through the same
    // unknown-key validation as file configs.
    json parsed;
    try {
        parsed = json::parse(value);
    } catch (const json::exception&) {
        parsed = value;  // plain string
    }
    json nested = parsed;
    std::vector<std::string> parts;
    std::size_t begin = 0;
    while (begin <= dotted_key.size()) {
        const auto dot = dotted_key.find('.', begin);
        const std::string part = dotted_key.substr(begin, dot == std::string::npos ? dot : dot - begin);
        if (part.empty()) {
            throw UsageError("config override: malformed key `" + dotted_key + "`");
        }
        parts.push_back(part);
        if (dot == std::string::npos) break;
        begin = dot + 1;
    }
    for (auto it = parts.rbegin(); it != parts.rend(); ++it) {
        json wrapper = json::object();
        wrapper[*it] = std::move(nested);
        nested = std::move(wrapper);
    }
    merge_checked(doc_, nested, "");
}

std::string RunConfig::dataset_root() const {
    std::string root = doc_.at("dataset").at("root").get<std::string>();
    if (root.empty()) {
        if (const char* env = std::getenv("MSDC_DATA_ROOT")) root = env;
    }
    return root;
}

int RunConfig::dataset_house() const { return doc_.at("dataset").at("house").get<int>(); }

std::vector<std::string> RunConfig::dataset_appliances() const {
    return doc_.at("dataset").at("appliances").get<std::vector<std::string>>();
}

DatasetConfig RunConfig::dataset() const {
    DatasetConfig c;
    c.target_interval_seconds = number_at(doc_, "dataset", "target_interval_seconds");
    c.max_gap_intervals = doc_.at("dataset").at("max_gap_intervals").get<int>();
    c.zero_fraction_threshold = number_at(doc_, "dataset", "zero_fraction_threshold");
    c.alias_file = doc_.at("dataset").at("alias_file").get<std::string>();
    return c;
}

ExtractionConfig RunConfig::extraction() const {
    ExtractionConfig c;
    c.bandwidth_watts = number_at(doc_, "extraction", "bandwidth_watts");
    c.min_fraction = number_at(doc_, "extraction", "min_fraction");
    c.tolerance_watts = number_at(doc_, "extraction", "tolerance_watts");
    c.max_iters = doc_.at("extraction").at("max_iters").get<int>();
    c.max_seeds = doc_.at("extraction").at("max_seeds").get<int>();
    return c;
}

TrainConfig RunConfig::trainer() const {
    TrainConfig c;
    const json& t = doc_.at("trainer");
    c.loss_kind = loss_kind_from_string(t.at("loss").get<std::string>());
    c.emission = emission_from_string(doc_.at("crf").at("emission").get<std::string>());
    const json& w = doc_.at("window");
    c.input_len = w.at("input_len").get<int>();
    c.output_len = w.at("output_len").get<int>();
    c.train_stride = w.at("train_stride").get<int>();
    c.eval_stride = w.at("eval_stride").get<int>();
    const json& n = doc_.at("network");
    c.conv_channels = n.at("conv_channels").get<std::vector<int>>();
    c.conv_kernels = n.at("conv_kernels").get<std::vector<int>>();
    c.fc_hidden = n.at("fc_hidden").get<int>();
    c.batch_size = t.at("batch_size").get<int>();
    c.adam.learning_rate = t.at("learning_rate").get<double>();
    c.adam.beta1 = t.at("adam_beta1").get<double>();
    c.adam.beta2 = t.at("adam_beta2").get<double>();
    c.adam.epsilon = t.at("adam_epsilon").get<double>();
    c.max_epochs = t.at("max_epochs").get<int>();
    c.patience = t.at("patience").get<int>();
    c.seed = t.at("seed").get<std::uint64_t>();
    const auto ratios = t.at("split_ratios").get<std::vector<double>>();
    if (ratios.size() != 3) {
        throw UsageError("config: trainer.split_ratios must have 3 entries");
    }
    c.split_ratios = {ratios[0], ratios[1], ratios[2]};
    c.workers = t.at("workers").get<int>();
    c.power_loss_weight = t.at("power_loss_weight").get<double>();
    return c;
}

std::string RunConfig::run_dir() const { return doc_.at("trainer").at("run_dir").get<std::string>(); }

int RunConfig::metrics_period() const {
    return doc_.at("metrics").at("sae_delta_period").get<int>();
}

bool RunConfig::ablation_single_state() const {
    const std::string mode = doc_.at("ablation").at("mode").get<std::string>();
    if (mode == "multi_state" || mode == "multi-state") return false;
    if (mode == "single_state" || mode == "single-state") return true;
    throw UsageError("config: ablation.mode must be multi_state or single_state");
}

double RunConfig::ablation_threshold() const {
    return number_at(doc_, "ablation", "threshold_watts");
}

RunConfig::SimulatorSpec RunConfig::simulator() const {
    SimulatorSpec spec;
    const json& s = doc_.at("simulator");
    spec.seed = s.at("seed").get<std::uint64_t>();
    spec.length = s.at("length").get<std::size_t>();
    spec.interval_seconds = s.at("interval_seconds").get<double>();
    spec.noise.base_load_watts = s.at("base_load_watts").get<double>();
    const std::string profile = s.at("base_load_profile").get<std::string>();
    if (profile == "constant") {
        spec.noise.profile = BaseLoadProfile::constant;
    } else if (profile == "sinusoidal") {
        spec.noise.profile = BaseLoadProfile::sinusoidal;
    } else {
        throw UsageError("config: simulator.base_load_profile must be constant or sinusoidal");
    }
    spec.noise.profile_period_samples = s.at("base_load_period_samples").get<double>();
    spec.noise.profile_amplitude_fraction = s.at("base_load_amplitude_fraction").get<double>();
    spec.noise.noise_std_watts = s.at("noise_std_watts").get<double>();
    for (const json& a : s.at("appliances")) {
        ApplianceFsm fsm;
        fsm.name = a.at("name").get<std::string>();
        fsm.means = a.at("means").get<std::vector<double>>();
        fsm.stds = a.at("stds").get<std::vector<double>>();
        const auto rows = a.at("transition").get<std::vector<std::vector<double>>>();
        const int m = static_cast<int>(fsm.means.size());
        fsm.transition.resize(m, m);
        if (static_cast<int>(rows.size()) != m) {
            throw UsageError("config: simulator appliance `" + fsm.name +
                             "` transition must be MxM");
        }
        for (int r = 0; r < m; ++r) {
            if (static_cast<int>(rows[r].size()) != m) {
                throw UsageError("config: simulator appliance `" + fsm.name +
                                 "` transition must be MxM");
            }
            for (int cidx = 0; cidx < m; ++cidx) fsm.transition(r, cidx) = rows[r][cidx];
        }
        const auto init = a.at("initial").get<std::vector<double>>();
        if (static_cast<int>(init.size()) != m) {
            throw UsageError("config: simulator appliance `" + fsm.name + "` initial must have M entries");
        }
        fsm.initial.resize(m);
        for (int i = 0; i < m; ++i) fsm.initial(i) = init[i];
        spec.appliances.push_back(std::move(fsm));
    }
    return spec;
}

RunConfig::TheorySpec RunConfig::theory() const {
    TheorySpec spec;
    const json& t = doc_.at("theory");
    spec.experiment.probs = t.at("probs").get<std::vector<double>>();
    spec.experiment.means = t.at("means").get<std::vector<double>>();
    spec.experiment.stds = t.at("stds").get<std::vector<double>>();
    spec.experiment.aggregate_std = t.at("aggregate_std").get<double>();
    spec.experiment.samples = t.at("samples").get<std::size_t>();
    spec.experiment.seed = t.at("seed").get<std::uint64_t>();
    spec.xi = t.at("xi").get<double>();
    spec.mean_tolerance_watts = t.at("mean_tolerance_watts").get<double>();
    spec.var_tolerance_rel = t.at("var_tolerance_rel").get<double>();
    return spec;
}

std::string RunConfig::evaluate_split() const {
    return doc_.at("evaluate").at("split").get<std::string>();
}
std::string RunConfig::evaluate_checkpoint() const {
    return doc_.at("evaluate").at("checkpoint").get<std::string>();
}
std::string RunConfig::evaluate_output_dir() const {
    return doc_.at("evaluate").at("output_dir").get<std::string>();
}

}  // namespace msdc
