#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>
#include <opencv2/core.hpp>
#include <torch/torch.h>

#include "glandsynth/layout.hpp"
#include "glandsynth/networks.hpp"

namespace glandsynth {

/// Ground truth for one training step.
struct TrainingSample {
    torch::Tensor image;        // [3, N, N] in [-1, 1]
    torch::Tensor mask;         // [1, N, N] in {0, 1}
    torch::Tensor gland_masks;  // [n, 1, B, B] in {0, 1}
    std::vector<BoundingBox> boxes;

    /// Throws std::invalid_argument when shapes, alignment or binarity are off.
    void validate(const ModelDims& dims = {}) const;
};

struct PatchParams {
    int patch_size = 512;
    int out_size = 256;
    int stride = 512;
    double min_foreground = 0.02;
};

struct PatchPair {
    cv::Mat image;  // RGB, out_size x out_size
    cv::Mat mask;   // {0, 255}, out_size x out_size
    int x = 0;      // top-left of the source tile
    int y = 0;
};

struct PatchExtraction {
    std::vector<PatchPair> patches;
    std::size_t grid_positions = 0;
    std::size_t filtered = 0;  // grid positions dropped by the foreground filter
};

/// Regular-grid tiles of `patch_size`, image resized bilinearly and mask by nearest neighbour then
/// thresholded. Tiles whose mask foreground fraction is below `min_foreground` are dropped.
PatchExtraction extract_patches(const cv::Mat& image, const cv::Mat& mask, const PatchParams& params);

struct GlandTargets {
    torch::Tensor masks;  // [n, 1, B, B]
    std::vector<BoundingBox> boxes;
};

/// Per-gland targets from a binary component mask: one box per blob, the mask cropped to the box,
/// resized to B x B and thresholded at 0.5.
GlandTargets derive_individual_gt_masks(const torch::Tensor& mask, std::int64_t mask_size = 64);

TrainingSample make_training_sample(const torch::Tensor& image, const torch::Tensor& mask, const ModelDims& dims = {});

enum class Split { Train, Test };

std::string to_string(Split split);
Split split_from_string(const std::string& text);

struct ManifestEntry {
    std::filesystem::path image;
    std::filesystem::path mask;
    Split split = Split::Train;
};

struct DatasetManifest {
    std::vector<ManifestEntry> entries;
    PatchParams params;

    std::vector<ManifestEntry> of(Split split) const;
};

/// Seeded shuffle, then the first floor(n * train_fraction) entries go to train.
DatasetManifest split_dataset(std::vector<ManifestEntry> entries, double train_fraction, std::uint64_t seed,
                              PatchParams params = {});

/// Entry paths are stored relative to the manifest's directory.
void save_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);
/// Resolves paths against the manifest's directory and checks that they exist.
DatasetManifest load_manifest(const std::filesystem::path& path);

TrainingSample load_training_sample(const ManifestEntry& entry, const ModelDims& dims = {});
std::vector<TrainingSample> load_split(const DatasetManifest& manifest, Split split, const ModelDims& dims = {});

}  // namespace glandsynth
