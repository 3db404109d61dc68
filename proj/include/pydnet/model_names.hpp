#pragma once

#include "pydnet/network.hpp"

namespace pydnet {

// Canonical model-name strings: family, nominal depth, width multiplier,
// e.g. "PydMobileNet-Concat-56-0.75" or "MobileNet-29-1". Used by the CLI
// and by checkpoint metadata; parse and format round-trip.

std::string format_alpha(double alpha);
std::string canonical_model_name(BlockKind kind, int depth, double alpha);
std::string canonical_model_name(const NetworkConfig& cfg);

// Throws std::invalid_argument on malformed names. classes defaults to 10;
// it is not part of the name.
NetworkConfig parse_model_name(const std::string& name, int classes = 10);

// The stock benchmark grid: ResNet alpha {0.5}; MobileNet {0.5, 1, 1.5};
// PydMobileNet-Add {0.25, 0.5, 0.75, 1}; PydMobileNet-Concat
// {0.25, 0.5, 0.75}; each at depths 29 and 56. 22 configurations.
std::vector<NetworkConfig> benchmark_grid(int classes = 10);

}  // namespace pydnet
