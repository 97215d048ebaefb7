#include "msdc/checkpoint.hpp"

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "msdc/errors.hpp"

namespace msdc {

std::string to_string(LossKind kind) {
    return kind == LossKind::msdc ? "msdc" : "msdc_crf";
}

LossKind loss_kind_from_string(const std::string& s) {
    if (s == "msdc") return LossKind::msdc;
    if (s == "msdc_crf" || s == "msdc-crf") return LossKind::msdc_crf;
    throw UsageError("unknown loss kind `" + s + "` (expected msdc or msdc_crf)");
}

std::string to_string(CrfEmissionKind kind) {
    return kind == CrfEmissionKind::log_prob ? "log_prob" : "prob";
}

CrfEmissionKind emission_from_string(const std::string& s) {
    if (s == "log_prob") return CrfEmissionKind::log_prob;
    if (s == "prob") return CrfEmissionKind::prob;
    throw UsageError("unknown crf emission `" + s + "` (expected log_prob or prob)");
}

namespace {

void append_values(std::string& out, const double* data, std::size_t count) {
    char buf[64];
    for (std::size_t i = 0; i < count; ++i) {
        const auto res = std::to_chars(buf, buf + sizeof(buf), data[i]);
        out.append(buf, res.ptr);
        out.push_back((i + 1) % 8 == 0 ? '\n' : ' ');
    }
    if (count % 8 != 0) out.push_back('\n');
}

void append_tensor(std::string& out, const std::string& name, const double* data,
                   std::size_t count) {
    out += "tensor " + name + " " + std::to_string(count) + "\n";
    append_values(out, data, count);
}

class Reader {
  public:
    explicit Reader(std::string text) : text_(std::move(text)) {}

    std::string line() {
        const auto nl = text_.find('\n', pos_);
        if (nl == std::string::npos) {
            throw DataError("checkpoint: unexpected end of file");
        }
        std::string out = text_.substr(pos_, nl - pos_);
        pos_ = nl + 1;
        return out;
    }

    void read_values(double* data, std::size_t count) {
        const char* end = text_.data() + text_.size();
        const char* p = text_.data() + pos_;
        for (std::size_t i = 0; i < count; ++i) {
            while (p < end && (*p == ' ' || *p == '\n')) ++p;
            double v = 0.0;
            const auto res = std::from_chars(p, end, v);
            if (res.ec != std::errc()) {
                throw DataError("checkpoint: malformed tensor value");
            }
            data[i] = v;
            p = res.ptr;
        }
        while (p < end && (*p == ' ' || *p == '\n')) {
            if (*p == '\n') {
                ++p;
                break;
            }
            ++p;
        }
        pos_ = static_cast<std::size_t>(p - text_.data());
    }

  private:
    std::string text_;
    std::size_t pos_ = 0;
};

std::size_t expect_tensor_header(const std::string& header, const std::string& name) {
    std::size_t count = 0;
    const std::string prefix = "tensor " + name + " ";
    if (header.rfind(prefix, 0) != 0) {
        throw DataError("checkpoint: expected tensor `" + name + "`, got `" + header + "`");
    }
    count = std::stoull(header.substr(prefix.size()));
    return count;
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& checkpoint) {
    const auto& cfg = checkpoint.params.config;
    nlohmann::json meta = {
        {"format_version", Checkpoint::format_version},
        {"appliance_id", checkpoint.appliance_id},
        {"loss_kind", to_string(checkpoint.loss_kind)},
        {"crf_emission", to_string(checkpoint.emission)},
        {"input_len", cfg.input_len},
        {"output_len", cfg.output_len},
        {"num_states", cfg.num_states},
        {"conv_channels", cfg.conv_channels},
        {"conv_kernels", cfg.conv_kernels},
        {"fc_hidden", cfg.fc_hidden},
        {"normalization", {{"mean", checkpoint.stats.mean}, {"std", checkpoint.stats.std}}},
        {"power_scale", checkpoint.params.power_scale},
        {"state_centers", checkpoint.state_centers},
        {"seed", checkpoint.seed},
        {"has_crf", checkpoint.crf.has_value()},
    };

    std::string out;
    out.reserve(64 + static_cast<std::size_t>(checkpoint.params.state_net.size() +
                                              checkpoint.params.value_net.size()) *
                         20);
    out += "msdc-checkpoint " + std::to_string(Checkpoint::format_version) + "\n";
    out += "meta " + meta.dump() + "\n";
    append_tensor(out, "state_net", checkpoint.params.state_net.data(),
                  static_cast<std::size_t>(checkpoint.params.state_net.size()));
    append_tensor(out, "value_net", checkpoint.params.value_net.data(),
                  static_cast<std::size_t>(checkpoint.params.value_net.size()));
    if (checkpoint.crf) {
        append_tensor(out, "crf.transition", checkpoint.crf->transition.data(),
                      static_cast<std::size_t>(checkpoint.crf->transition.size()));
        append_tensor(out, "crf.start", checkpoint.crf->start.data(),
                      static_cast<std::size_t>(checkpoint.crf->start.size()));
        append_tensor(out, "crf.stop", checkpoint.crf->stop.data(),
                      static_cast<std::size_t>(checkpoint.crf->stop.size()));
    }
    out += "end\n";

    const std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary);
        if (!f) {
            throw DataError("save_checkpoint: cannot open " + tmp);
        }
        f.write(out.data(), static_cast<std::streamsize>(out.size()));
        if (!f) {
            throw DataError("save_checkpoint: write failed for " + tmp);
        }
    }
    std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) {
        throw DataError("load_checkpoint: cannot open " + path);
    }
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    Reader reader(std::move(text));

    const std::string banner = reader.line();
    if (banner != "msdc-checkpoint " + std::to_string(Checkpoint::format_version)) {
        throw DataError("load_checkpoint: unsupported container `" + banner + "`");
    }
    const std::string meta_line = reader.line();
    if (meta_line.rfind("meta ", 0) != 0) {
        throw DataError("load_checkpoint: missing meta line");
    }
    nlohmann::json meta;
    try {
        meta = nlohmann::json::parse(meta_line.substr(5));
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("load_checkpoint: bad meta json: ") + e.what());
    }

    Checkpoint checkpoint;
    checkpoint.appliance_id = meta.at("appliance_id").get<std::string>();
    checkpoint.loss_kind = loss_kind_from_string(meta.at("loss_kind").get<std::string>());
    checkpoint.emission = emission_from_string(meta.at("crf_emission").get<std::string>());
    NetworkConfig cfg;
    cfg.input_len = meta.at("input_len").get<int>();
    cfg.output_len = meta.at("output_len").get<int>();
    cfg.num_states = meta.at("num_states").get<int>();
    cfg.conv_channels = meta.at("conv_channels").get<std::vector<int>>();
    cfg.conv_kernels = meta.at("conv_kernels").get<std::vector<int>>();
    cfg.fc_hidden = meta.at("fc_hidden").get<int>();
    checkpoint.params.config = cfg;
    checkpoint.params.power_scale = meta.at("power_scale").get<double>();
    checkpoint.stats.mean = meta.at("normalization").at("mean").get<double>();
    checkpoint.stats.std = meta.at("normalization").at("std").get<double>();
    checkpoint.state_centers = meta.at("state_centers").get<std::vector<double>>();
    checkpoint.seed = meta.at("seed").get<std::uint64_t>();

    const int expected = param_count(cfg);
    auto read_named = [&](const std::string& name, Eigen::VectorXd& out, std::size_t count) {
        const std::size_t n = expect_tensor_header(reader.line(), name);
        if (n != count) {
            throw DataError("load_checkpoint: tensor `" + name + "` has " + std::to_string(n) +
                            " values, expected " + std::to_string(count));
        }
        out.resize(static_cast<Eigen::Index>(count));
        reader.read_values(out.data(), count);
    };
    read_named("state_net", checkpoint.params.state_net, static_cast<std::size_t>(expected));
    read_named("value_net", checkpoint.params.value_net, static_cast<std::size_t>(expected));

    if (meta.at("has_crf").get<bool>()) {
        CrfParams crf = CrfParams::zeros(cfg.num_states);
        const auto m = static_cast<std::size_t>(cfg.num_states);
        const std::size_t nt = expect_tensor_header(reader.line(), "crf.transition");
        if (nt != m * m) {
            throw DataError("load_checkpoint: crf.transition size mismatch");
        }
        reader.read_values(crf.transition.data(), m * m);
        Eigen::VectorXd tmp;
        read_named("crf.start", tmp, m);
        crf.start = tmp;
        read_named("crf.stop", tmp, m);
        crf.stop = tmp;
        checkpoint.crf = std::move(crf);
    }
    return checkpoint;
}

}  // namespace msdc
