#include "glandsynth/image_io.hpp"

#include <cstring>
#include <stdexcept>

#include <openssl/evp.h>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

namespace glandsynth {

torch::Tensor image_from_mat(const cv::Mat& rgb) {
    if (rgb.type() != CV_8UC3) {
        throw std::invalid_argument("expected an 8-bit three-channel image");
    }
    const cv::Mat dense = rgb.isContinuous() ? rgb : rgb.clone();
    const torch::Tensor hwc = torch::from_blob(dense.data, {dense.rows, dense.cols, 3}, torch::kUInt8);
    return hwc.permute({2, 0, 1}).to(torch::kFloat32).div(127.5).sub(1.0).contiguous();
}

cv::Mat image_to_mat(const torch::Tensor& image) {
    const torch::Tensor img = image.dim() == 4 ? image.squeeze(0) : image;
    if (img.dim() != 3 || img.size(0) != 3) {
        throw std::invalid_argument("expected a [3, H, W] image tensor");
    }
    const torch::Tensor hwc =
        img.detach().to(torch::kCPU, torch::kFloat32).add(1.0).mul(127.5).round().clamp(0, 255).to(torch::kUInt8)
            .permute({1, 2, 0}).contiguous();
    cv::Mat out(static_cast<int>(hwc.size(0)), static_cast<int>(hwc.size(1)), CV_8UC3);
    std::memcpy(out.data, hwc.data_ptr<std::uint8_t>(), static_cast<std::size_t>(hwc.numel()));
    return out;
}

torch::Tensor mask_from_mat(const cv::Mat& gray) {
    if (gray.type() != CV_8UC1) {
        throw std::invalid_argument("expected an 8-bit single-channel mask");
    }
    const cv::Mat dense = gray.isContinuous() ? gray : gray.clone();
    const torch::Tensor hw = torch::from_blob(dense.data, {dense.rows, dense.cols}, torch::kUInt8);
    return hw.ge(128).to(torch::kFloat32).unsqueeze(0).contiguous();
}

cv::Mat mask_to_mat(const torch::Tensor& mask) {
    torch::Tensor m = mask.detach().to(torch::kCPU, torch::kFloat32);
    while (m.dim() > 2) {
        m = m.squeeze(0);
    }
    if (m.dim() != 2) {
        throw std::invalid_argument("expected a single-channel mask tensor");
    }
    const torch::Tensor bytes = m.ge(0.5).to(torch::kUInt8).mul(255).contiguous();
    cv::Mat out(static_cast<int>(bytes.size(0)), static_cast<int>(bytes.size(1)), CV_8UC1);
    std::memcpy(out.data, bytes.data_ptr<std::uint8_t>(), static_cast<std::size_t>(bytes.numel()));
    return out;
}

cv::Mat read_rgb(const std::filesystem::path& path) {
    cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
    if (bgr.empty()) {
        throw std::runtime_error("cannot read image " + path.string());
    }
    cv::Mat rgb;
    cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
    return rgb;
}

cv::Mat read_gray(const std::filesystem::path& path) {
    cv::Mat gray = cv::imread(path.string(), cv::IMREAD_GRAYSCALE);
    if (gray.empty()) {
        throw std::runtime_error("cannot read mask " + path.string());
    }
    return gray;
}

void write_png(const std::filesystem::path& path, const cv::Mat& mat) {
    cv::Mat out = mat;
    if (mat.channels() == 3) {
        cv::cvtColor(mat, out, cv::COLOR_RGB2BGR);
    }
    if (!cv::imwrite(path.string(), out)) {
        throw std::runtime_error("cannot write " + path.string());
    }
}

std::vector<std::uint8_t> encode_png(const cv::Mat& mat) {
    cv::Mat out = mat;
    if (mat.channels() == 3) {
        cv::cvtColor(mat, out, cv::COLOR_RGB2BGR);
    }
    std::vector<std::uint8_t> bytes;
    if (!cv::imencode(".png", out, bytes)) {
        throw std::runtime_error("PNG encoding failed");
    }
    return bytes;
}

cv::Mat decode_png(std::string_view bytes, bool color) {
    const cv::Mat raw(1, static_cast<int>(bytes.size()), CV_8UC1, const_cast<char*>(bytes.data()));
    cv::Mat mat = cv::imdecode(raw, color ? cv::IMREAD_COLOR : cv::IMREAD_GRAYSCALE);
    if (mat.empty()) {
        throw std::invalid_argument("not a decodable PNG");
    }
    if (color) {
        cv::cvtColor(mat, mat, cv::COLOR_BGR2RGB);
    }
    return mat;
}

std::string base64_encode(std::string_view bytes) {
    std::string out(4 * ((bytes.size() + 2) / 3), '\0');
    const int written = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                        reinterpret_cast<const unsigned char*>(bytes.data()), static_cast<int>(bytes.size()));
    out.resize(static_cast<std::size_t>(written));
    return out;
}

std::string base64_decode(std::string_view text) {
    if (text.size() % 4 != 0) {
        throw std::invalid_argument("base64 length must be a multiple of 4");
    }
    std::string out(3 * (text.size() / 4), '\0');
    const int written = EVP_DecodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                        reinterpret_cast<const unsigned char*>(text.data()), static_cast<int>(text.size()));
    if (written < 0) {
        throw std::invalid_argument("malformed base64");
    }
    // EVP_DecodeBlock keeps the bytes produced by '=' padding.
    std::size_t padding = 0;
    if (!text.empty() && text.back() == '=') {
        padding = text.size() >= 2 && text[text.size() - 2] == '=' ? 2 : 1;
    }
    out.resize(static_cast<std::size_t>(written) - padding);
    return out;
}

}  // namespace glandsynth
