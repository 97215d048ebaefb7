#pragma once

#include "msdc/state_extraction.hpp"

namespace msdc {

/// Collapses a multi-state model to binary off/on supervision: centers
/// below the threshold map to state 0, the rest to state 1. The merged
/// on-center (and off-center) is the occupancy-weighted mean of the merged
/// centers, so the binary model reuses the full pipeline with M=2.
std::pair<StateModel, StateSequence> collapse_states(const StateModel& model,
                                                     const StateSequence& sequence,
                                                     double threshold_watts);

}  // namespace msdc
