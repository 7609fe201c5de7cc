#include "glandsynth/evaluation.hpp"

#include <ATen/CPUGeneratorImpl.h>

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <Eigen/Eigenvalues>
#include <nlohmann/json.hpp>
#include <opencv2/imgproc.hpp>

#include "glandsynth/image_io.hpp"

namespace glandsynth {

GaussianFit fit_gaussian(const FeatureMatrix& features) {
    if (features.rows() < 2) {
        throw std::invalid_argument("FID needs at least two feature rows, got " + std::to_string(features.rows()));
    }
    if (!features.allFinite()) {
        throw std::invalid_argument("feature matrix holds non-finite entries");
    }
    GaussianFit fit;
    fit.mean = features.colwise().mean().transpose();
    const Eigen::MatrixXd centered = features.rowwise() - fit.mean.transpose();
    fit.cov = (centered.transpose() * centered) / static_cast<double>(features.rows());
    return fit;
}

namespace {

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m);
    const Eigen::VectorXd roots = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return eig.eigenvectors() * roots.asDiagonal() * eig.eigenvectors().transpose();
}

}  // namespace

double frechet_distance(const GaussianFit& real, const GaussianFit& gen, double eps) {
    if (real.mean.size() != gen.mean.size()) {
        throw std::invalid_argument("feature dimensions differ: " + std::to_string(real.mean.size()) + " vs " +
                                    std::to_string(gen.mean.size()));
    }
    const auto dim = real.mean.size();
    const Eigen::MatrixXd ridge = eps * Eigen::MatrixXd::Identity(dim, dim);
    const Eigen::MatrixXd sr = real.cov + ridge;
    const Eigen::MatrixXd sg = gen.cov + ridge;

    const Eigen::MatrixXd root = psd_sqrt(sr);
    Eigen::MatrixXd inner = root * sg * root;
    inner = 0.5 * (inner + inner.transpose());
    const Eigen::VectorXd lambdas = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(inner, Eigen::EigenvaluesOnly)
                                        .eigenvalues();
    const double trace_sqrt = lambdas.cwiseMax(0.0).cwiseSqrt().sum();

    const double mean_term = (real.mean - gen.mean).squaredNorm();
    const double value = mean_term + sr.trace() + sg.trace() - 2.0 * trace_sqrt;
    return std::max(value, 0.0);
}

double fid(const FeatureMatrix& real, const FeatureMatrix& gen, double eps) {
    if (real.cols() != gen.cols()) {
        throw std::invalid_argument("feature column counts differ: " + std::to_string(real.cols()) + " vs " +
                                    std::to_string(gen.cols()));
    }
    return frechet_distance(fit_gaussian(real), fit_gaussian(gen), eps);
}

namespace {

torch::Tensor stack_images(const std::vector<torch::Tensor>& images) {
    if (images.empty()) {
        throw std::invalid_argument("no images to extract features from");
    }
    std::vector<torch::Tensor> batch;
    batch.reserve(images.size());
    for (const auto& img : images) {
        if (img.dim() != 3 || img.size(0) != 3) {
            throw std::invalid_argument("feature extractors take [3, H, W] images");
        }
        batch.push_back(img.detach().to(torch::kCPU, torch::kFloat32));
    }
    return torch::stack(batch);
}

FeatureMatrix to_matrix(const torch::Tensor& rows) {
    const torch::Tensor d = rows.to(torch::kFloat64).contiguous();
    FeatureMatrix out(d.size(0), d.size(1));
    const auto acc = d.accessor<double, 2>();
    for (std::int64_t i = 0; i < d.size(0); ++i) {
        for (std::int64_t j = 0; j < d.size(1); ++j) {
            out(i, j) = acc[i][j];
        }
    }
    return out;
}

}  // namespace

RandomProjectionExtractor::RandomProjectionExtractor(std::int64_t dim, std::int64_t side, std::uint64_t seed)
    : side_(side) {
    if (dim < 1 || side < 1) {
        throw std::invalid_argument("projection dim and side must be positive");
    }
    auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
    const auto in = 3 * side * side;
    basis_ = torch::randn({in, dim}, gen, torch::kFloat32) / std::sqrt(static_cast<double>(in));
}

FeatureMatrix RandomProjectionExtractor::extract(const std::vector<torch::Tensor>& images) const {
    c10::InferenceMode guard;
    const torch::Tensor pooled = torch::adaptive_avg_pool2d(stack_images(images), {side_, side_});
    return to_matrix(pooled.flatten(1).matmul(basis_));
}

TorchScriptExtractor::TorchScriptExtractor(const std::filesystem::path& path) {
    try {
        module_ = torch::jit::load(path.string());
    } catch (const c10::Error& e) {
        throw std::runtime_error("cannot load feature extractor " + path.string() + ": " + e.what_without_backtrace());
    }
    module_.eval();
}

FeatureMatrix TorchScriptExtractor::extract(const std::vector<torch::Tensor>& images) const {
    c10::InferenceMode guard;
    torch::Tensor out = module_.forward({stack_images(images)}).toTensor();
    return to_matrix(out.flatten(1));
}

std::unique_ptr<FeatureExtractor> make_extractor(const std::string& name) {
    if (name == "random-projection") {
        return std::make_unique<RandomProjectionExtractor>();
    }
    const std::string prefix = "torchscript:";
    if (name.rfind(prefix, 0) == 0 && name.size() > prefix.size()) {
        return std::make_unique<TorchScriptExtractor>(name.substr(prefix.size()));
    }
    throw std::invalid_argument("unknown extractor '" + name + "' (expected random-projection or torchscript:PATH)");
}

double dice(const torch::Tensor& a, const torch::Tensor& b) {
    if (a.sizes() != b.sizes()) {
        throw std::invalid_argument("dice needs masks of the same shape");
    }
    const auto binary = [](const torch::Tensor& t) { return t.eq(0).logical_or(t.eq(1)).all().item<bool>(); };
    if (!binary(a) || !binary(b)) {
        throw std::invalid_argument("dice needs binary masks");
    }
    const torch::Tensor fa = a.to(torch::kBool);
    const torch::Tensor fb = b.to(torch::kBool);
    const auto size_a = fa.sum().item<std::int64_t>();
    const auto size_b = fb.sum().item<std::int64_t>();
    if (size_a + size_b == 0) {
        return 1.0;
    }
    const auto overlap = fa.logical_and(fb).sum().item<std::int64_t>();
    return 2.0 * static_cast<double>(overlap) / static_cast<double>(size_a + size_b);
}

nlohmann::json assessment_to_json(const AssessmentReport& report) {
    nlohmann::json per_pair = nlohmann::json::array();
    for (const auto& d : report.per_pair) {
        per_pair.push_back(d ? nlohmann::json(*d) : nlohmann::json(nullptr));
    }
    nlohmann::json failures = nlohmann::json::array();
    for (const auto& f : report.failures) {
        failures.push_back({{"index", f.index}, {"error", f.message}});
    }
    nlohmann::json j{{"per_pair", std::move(per_pair)}, {"failures", std::move(failures)}, {"scored", report.scored}};
    j["mean"] = report.scored ? nlohmann::json(report.mean) : nlohmann::json(nullptr);
    j["std"] = report.scored ? nlohmann::json(report.stddev) : nlohmann::json(nullptr);
    return j;
}

AssessmentReport segmentation_assessment(const Segmenter& segmenter, const std::vector<ImageMaskPair>& pairs) {
    AssessmentReport report;
    report.per_pair.resize(pairs.size());
    std::vector<double> scores;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        try {
            const torch::Tensor predicted = segmenter(pairs[i].image);
            if (!predicted.defined() || predicted.sizes() != pairs[i].mask.sizes()) {
                throw std::runtime_error("segmenter output shape does not match the mask");
            }
            const double d = dice(predicted, pairs[i].mask);
            report.per_pair[i] = d;
            scores.push_back(d);
        } catch (const std::exception& e) {
            report.failures.push_back({i, e.what()});
        }
    }
    report.scored = scores.size();
    if (!scores.empty()) {
        const double n = static_cast<double>(scores.size());
        double sum = 0.0;
        for (double s : scores) {
            sum += s;
        }
        report.mean = sum / n;
        double sq = 0.0;
        for (double s : scores) {
            sq += (s - report.mean) * (s - report.mean);
        }
        report.stddev = std::sqrt(sq / n);
    }
    return report;
}

torch::Tensor otsu_segment(const torch::Tensor& image) {
    cv::Mat gray;
    cv::cvtColor(image_to_mat(image), gray, cv::COLOR_RGB2GRAY);
    cv::Mat fg;
    cv::threshold(gray, fg, 0, 255, cv::THRESH_BINARY_INV | cv::THRESH_OTSU);
    return mask_from_mat(fg);
}

}  // namespace glandsynth
