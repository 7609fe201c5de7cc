#include "glandsynth/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <stdexcept>

#include <nlohmann/json.hpp>
#include <opencv2/imgproc.hpp>

#include "glandsynth/image_io.hpp"
#include "glandsynth/resample.hpp"

namespace fs = std::filesystem;

namespace glandsynth {

void TrainingSample::validate(const ModelDims& dims) const {
    const auto n = static_cast<std::int64_t>(boxes.size());
    if (n < 1) {
        throw std::invalid_argument("training sample has no glands");
    }
    if (!image.defined() || image.sizes() != torch::IntArrayRef{3, dims.canvas, dims.canvas}) {
        throw std::invalid_argument("training image must be [3, N, N]");
    }
    if (!mask.defined() || mask.sizes() != torch::IntArrayRef{1, dims.canvas, dims.canvas}) {
        throw std::invalid_argument("training mask must be [1, N, N]");
    }
    if (!gland_masks.defined() || gland_masks.sizes() != torch::IntArrayRef{n, 1, dims.mask, dims.mask}) {
        throw std::invalid_argument("per-gland masks must be [n, 1, B, B] with one mask per box");
    }
    const auto binary = [](const torch::Tensor& t) { return t.eq(0).logical_or(t.eq(1)).all().item<bool>(); };
    if (!binary(mask) || !binary(gland_masks)) {
        throw std::invalid_argument("training masks must be binary");
    }
    if (image.min().item<float>() < -1.0f || image.max().item<float>() > 1.0f) {
        throw std::invalid_argument("training image values must lie in [-1, 1]");
    }
}

PatchExtraction extract_patches(const cv::Mat& image, const cv::Mat& mask, const PatchParams& params) {
    if (image.rows != mask.rows || image.cols != mask.cols) {
        throw std::invalid_argument("image and mask sizes differ");
    }
    if (params.stride < 1 || params.patch_size < 1 || params.out_size < 1 || params.patch_size < params.out_size) {
        throw std::invalid_argument("patch parameters need stride >= 1 and patch_size >= out_size >= 1");
    }
    PatchExtraction result;
    if (image.rows < params.patch_size || image.cols < params.patch_size) {
        return result;
    }
    const int steps_y = (image.rows - params.patch_size) / params.stride + 1;
    const int steps_x = (image.cols - params.patch_size) / params.stride + 1;
    result.grid_positions = static_cast<std::size_t>(steps_x) * static_cast<std::size_t>(steps_y);
    const cv::Size out(params.out_size, params.out_size);
    for (int iy = 0; iy < steps_y; ++iy) {
        for (int ix = 0; ix < steps_x; ++ix) {
            const cv::Rect tile(ix * params.stride, iy * params.stride, params.patch_size, params.patch_size);
            PatchPair pair{cv::Mat(), cv::Mat(), tile.x, tile.y};
            cv::resize(mask(tile), pair.mask, out, 0, 0, cv::INTER_NEAREST);
            cv::threshold(pair.mask, pair.mask, 127, 255, cv::THRESH_BINARY);
            const double fraction = static_cast<double>(cv::countNonZero(pair.mask)) / (out.area());
            if (fraction < params.min_foreground) {
                ++result.filtered;
                continue;
            }
            cv::resize(image(tile), pair.image, out, 0, 0, cv::INTER_LINEAR);
            result.patches.push_back(std::move(pair));
        }
    }
    return result;
}

GlandTargets derive_individual_gt_masks(const torch::Tensor& mask, std::int64_t mask_size) {
    torch::Tensor plane = mask.detach().to(torch::kCPU, torch::kFloat32);
    while (plane.dim() > 2) {
        plane = plane.squeeze(0);
    }
    if (plane.dim() != 2) {
        throw std::invalid_argument("component mask must be [1, H, W]");
    }
    const torch::Tensor bytes = plane.ge(0.5).to(torch::kUInt8).contiguous();
    const std::span<const std::uint8_t> view(bytes.data_ptr<std::uint8_t>(), static_cast<std::size_t>(bytes.numel()));
    const auto objects = extract_gland_objects(view, static_cast<int>(plane.size(1)), static_cast<int>(plane.size(0)));

    GlandTargets targets;
    if (objects.empty()) {
        targets.masks = torch::zeros({0, 1, mask_size, mask_size});
        return targets;
    }
    const torch::Tensor source = bytes.to(torch::kFloat32).unsqueeze(0);
    std::vector<torch::Tensor> crops;
    for (const auto& obj : objects) {
        targets.boxes.push_back(obj.bbox);
        crops.push_back(crop_and_resize(source, obj.bbox, mask_size).ge(0.5).to(torch::kFloat32));
    }
    targets.masks = torch::stack(crops);
    return targets;
}

TrainingSample make_training_sample(const torch::Tensor& image, const torch::Tensor& mask, const ModelDims& dims) {
    TrainingSample sample;
    sample.image = image;
    sample.mask = mask.ge(0.5).to(torch::kFloat32);
    GlandTargets targets = derive_individual_gt_masks(sample.mask, dims.mask);
    sample.gland_masks = std::move(targets.masks);
    sample.boxes = std::move(targets.boxes);
    sample.validate(dims);
    return sample;
}

std::string to_string(Split split) {
    return split == Split::Train ? "train" : "test";
}

Split split_from_string(const std::string& text) {
    if (text == "train") {
        return Split::Train;
    }
    if (text == "test") {
        return Split::Test;
    }
    throw std::invalid_argument("split must be 'train' or 'test', got '" + text + "'");
}

std::vector<ManifestEntry> DatasetManifest::of(Split split) const {
    std::vector<ManifestEntry> out;
    std::copy_if(entries.begin(), entries.end(), std::back_inserter(out),
                 [split](const ManifestEntry& e) { return e.split == split; });
    return out;
}

DatasetManifest split_dataset(std::vector<ManifestEntry> entries, double train_fraction, std::uint64_t seed,
                              PatchParams params) {
    if (entries.empty()) {
        throw std::invalid_argument("cannot split an empty dataset");
    }
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
        throw std::invalid_argument("train fraction must lie strictly between 0 and 1");
    }
    std::mt19937_64 rng(seed);
    std::shuffle(entries.begin(), entries.end(), rng);
    const auto n_train = static_cast<std::size_t>(std::floor(static_cast<double>(entries.size()) * train_fraction));
    for (std::size_t i = 0; i < entries.size(); ++i) {
        entries[i].split = i < n_train ? Split::Train : Split::Test;
    }
    return {std::move(entries), params};
}

void save_manifest(const fs::path& path, const DatasetManifest& manifest) {
    const fs::path base = path.parent_path();
    nlohmann::json entries = nlohmann::json::array();
    for (const auto& e : manifest.entries) {
        entries.push_back({{"image", fs::relative(e.image, base).generic_string()},
                           {"mask", fs::relative(e.mask, base).generic_string()},
                           {"split", to_string(e.split)}});
    }
    const nlohmann::json doc{{"patch_size", manifest.params.patch_size},
                             {"out_size", manifest.params.out_size},
                             {"stride", manifest.params.stride},
                             {"min_foreground", manifest.params.min_foreground},
                             {"entries", std::move(entries)}};
    std::ofstream out(path);
    out << doc.dump(2) << '\n';
    if (!out) {
        throw std::runtime_error("cannot write manifest " + path.string());
    }
}

DatasetManifest load_manifest(const fs::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open manifest " + path.string());
    }
    DatasetManifest manifest;
    try {
        const nlohmann::json doc = nlohmann::json::parse(in);
        manifest.params.patch_size = doc.at("patch_size").get<int>();
        manifest.params.out_size = doc.at("out_size").get<int>();
        manifest.params.stride = doc.at("stride").get<int>();
        manifest.params.min_foreground = doc.value("min_foreground", manifest.params.min_foreground);
        const fs::path base = path.parent_path();
        for (const auto& e : doc.at("entries")) {
            ManifestEntry entry{base / e.at("image").get<std::string>(), base / e.at("mask").get<std::string>(),
                                split_from_string(e.at("split").get<std::string>())};
            for (const auto& p : {entry.image, entry.mask}) {
                if (!fs::exists(p)) {
                    throw std::runtime_error("manifest entry points to a missing file: " + p.string());
                }
            }
            manifest.entries.push_back(std::move(entry));
        }
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("malformed manifest " + path.string() + ": " + e.what());
    }
    if (manifest.params.patch_size < manifest.params.out_size) {
        throw std::runtime_error("manifest patch_size is smaller than out_size");
    }
    return manifest;
}

TrainingSample load_training_sample(const ManifestEntry& entry, const ModelDims& dims) {
    const torch::Tensor image = image_from_mat(read_rgb(entry.image));
    const torch::Tensor mask = mask_from_mat(read_gray(entry.mask));
    try {
        return make_training_sample(image, mask, dims);
    } catch (const std::invalid_argument& e) {
        throw std::invalid_argument(entry.image.string() + ": " + e.what());
    }
}

std::vector<TrainingSample> load_split(const DatasetManifest& manifest, Split split, const ModelDims& dims) {
    std::vector<TrainingSample> samples;
    for (const auto& entry : manifest.of(split)) {
        samples.push_back(load_training_sample(entry, dims));
    }
    return samples;
}

}  // namespace glandsynth
