#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json_fwd.hpp>
#include <torch/script.h>
#include <torch/torch.h>

namespace glandsynth {

/// Rows are images, columns are feature dimensions.
using FeatureMatrix = Eigen::MatrixXd;

struct GaussianFit {
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;  // population covariance (divides by n)
};

/// Throws std::invalid_argument for fewer than two rows or non-finite entries.
GaussianFit fit_gaussian(const FeatureMatrix& features);

/// ||mu_r - mu_g||^2 + Tr(Sr + Sg - 2 (Sr^1/2 Sg Sr^1/2)^1/2) with Sx = cov_x + eps I.
double frechet_distance(const GaussianFit& real, const GaussianFit& gen, double eps = 1e-6);

double fid(const FeatureMatrix& real, const FeatureMatrix& gen, double eps = 1e-6);

/// Maps a batch of [3, H, W] images in [-1, 1] to one feature row each.
class FeatureExtractor {
public:
    virtual ~FeatureExtractor() = default;
    virtual FeatureMatrix extract(const std::vector<torch::Tensor>& images) const = 0;
    virtual std::string name() const = 0;
};

// Area-downsamples to side x side and projects onto a fixed seeded Gaussian basis.
class RandomProjectionExtractor final : public FeatureExtractor {
public:
    explicit RandomProjectionExtractor(std::int64_t dim = 64, std::int64_t side = 16, std::uint64_t seed = 0);
    FeatureMatrix extract(const std::vector<torch::Tensor>& images) const override;
    std::string name() const override { return "random-projection"; }

private:
    std::int64_t side_;
    torch::Tensor basis_;  // [3 * side * side, dim]
};

// A TorchScript module taking [B, 3, H, W] in [-1, 1] and returning [B, F] (or [B, F, 1, 1]).
class TorchScriptExtractor final : public FeatureExtractor {
public:
    explicit TorchScriptExtractor(const std::filesystem::path& path);
    FeatureMatrix extract(const std::vector<torch::Tensor>& images) const override;
    std::string name() const override { return "torchscript"; }

private:
    mutable torch::jit::Module module_;
};

/// "random-projection" or "torchscript:<path>".
std::unique_ptr<FeatureExtractor> make_extractor(const std::string& name);

/// 2|a & b| / (|a| + |b|), 1 when both are empty. Masks hold only 0 and 1.
double dice(const torch::Tensor& a, const torch::Tensor& b);

using Segmenter = std::function<torch::Tensor(const torch::Tensor& image)>;

struct ImageMaskPair {
    torch::Tensor image;  // [3, H, W]
    torch::Tensor mask;   // [1, H, W] binary
};

struct PairFailure {
    std::size_t index = 0;
    std::string message;
};

struct AssessmentReport {
    std::vector<std::optional<double>> per_pair;  // empty for failed pairs
    std::vector<PairFailure> failures;
    double mean = 0.0;
    double stddev = 0.0;  // population
    std::size_t scored = 0;
};

nlohmann::json assessment_to_json(const AssessmentReport& report);

/// Scores segmenter(image) against each paired mask. Segmenter exceptions and shape mismatches are
/// recorded per pair and left out of the mean and standard deviation.
AssessmentReport segmentation_assessment(const Segmenter& segmenter, const std::vector<ImageMaskPair>& pairs);

/// Otsu threshold on the inverted luminance: darker, stained tissue is foreground.
torch::Tensor otsu_segment(const torch::Tensor& image);

}  // namespace glandsynth
