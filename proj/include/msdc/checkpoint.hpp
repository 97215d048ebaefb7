#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "msdc/crf.hpp"
#include "msdc/model.hpp"
#include "msdc/power_series.hpp"

namespace msdc {

/// Everything needed to reload and run a trained per-appliance model.
struct Checkpoint {
    static constexpr int format_version = 1;

    std::string appliance_id;
    LossKind loss_kind = LossKind::msdc;
    CrfEmissionKind emission = CrfEmissionKind::log_prob;
    DualCnnParams params;
    std::optional<CrfParams> crf;
    NormalizationStats stats;
    std::vector<double> state_centers;
    std::uint64_t seed = 0;
};

std::string to_string(LossKind kind);
LossKind loss_kind_from_string(const std::string& s);
std::string to_string(CrfEmissionKind kind);
CrfEmissionKind emission_from_string(const std::string& s);

/// Self-describing text container: a `msdc-checkpoint <version>` banner,
/// one JSON meta line (hyperparameters, M, normalization stats, state
/// centers), then named row-major tensor blocks in shortest round-trip
/// decimal form. Writes are atomic (temp file + rename).
void save_checkpoint(const std::string& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace msdc
