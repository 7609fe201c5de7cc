#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <nlohmann/json_fwd.hpp>

#include "glandsynth/discriminators.hpp"
#include "glandsynth/losses.hpp"
#include "glandsynth/networks.hpp"

namespace glandsynth {

struct CheckpointManifest {
    std::string id;
    ModelDims dims;
    std::int64_t iteration = 0;
    LossWeights weights;
    std::uint64_t seed = 0;
    bool has_critics = false;
};

nlohmann::json manifest_to_json(const CheckpointManifest& manifest);
CheckpointManifest manifest_from_json(const nlohmann::json& j);

/// Writes one archive holding the generator (embedding, mask generator, reducer, encoder-decoder),
/// the critics when given, and the manifest. `manifest.has_critics` is set from `critics`.
void save_checkpoint(const std::filesystem::path& path, CheckpointManifest manifest, Generator& generator,
                     const Critics* critics = nullptr);

CheckpointManifest read_manifest(const std::filesystem::path& path);

struct LoadedGenerator {
    CheckpointManifest manifest;
    Generator generator;
};

/// Loads the generator after checking the stored dims against `expected`; throws std::runtime_error on
/// a missing file or a mismatch.
LoadedGenerator load_generator(const std::filesystem::path& path, const ModelDims& expected = {});

/// Restores critic weights; throws if the checkpoint holds none.
void load_critics(const std::filesystem::path& path, Critics& critics);

}  // namespace glandsynth
