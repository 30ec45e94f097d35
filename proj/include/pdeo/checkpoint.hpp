#pragma once

#include "pdeo/optimizer.hpp"

#include <iosfwd>

namespace pdeo {

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
    Scene scene;
    OptimizerState state;
};

/// Versioned text dump. Reals are written as hexadecimal floating point so a
/// load reproduces every bit.
void save_checkpoint(std::ostream& out, const Scene& scene, const OptimizerState& state);

/// Throws ConfigError on a malformed or unsupported-version stream.
Checkpoint load_checkpoint(std::istream& in);

}  // namespace pdeo
