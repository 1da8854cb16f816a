#pragma once

#include <cstdint>
#include <string>

#include "pirsurf/renderer.hpp"

namespace pirsurf {

// Checkpoint: text header (shapes, env/LUT bake settings, step, seed)
// followed by raw little-endian doubles for every optimizable buffer. Writes
// are atomic (temp file + rename); identical state produces identical bytes.
void save_checkpoint(const std::string& path, const SceneModel& model, int step,
                     std::uint64_t seed);

// Rebuilds the env mip chain and rebakes the LUT from the recorded settings.
SceneModel load_checkpoint(const std::string& path, int* step = nullptr,
                           std::uint64_t* seed = nullptr);

// Grid-only blob (fixtures bake the analytic SDF for geometry oracles).
void save_feature_grid(const std::string& path, const FeatureGrid& grid);
FeatureGrid load_feature_grid(const std::string& path);

}  // namespace pirsurf
