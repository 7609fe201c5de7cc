#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "glandsynth/layout.hpp"
#include "glandsynth/synthesis.hpp"

namespace httplib {
class Server;
}

namespace glandsynth {

struct GenerateRequest {
    GlandLayout layout;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> checkpoint_id;
};

/// Throws std::invalid_argument on unknown fields or wrong types; the layout is not validated here.
GenerateRequest request_from_json(const nlohmann::json& j);
nlohmann::json request_to_json(const GenerateRequest& request);

struct GenerateResponse {
    std::string image;  // base64 PNG, RGB
    std::string mask;   // base64 PNG, grayscale {0, 255}
    std::vector<BoundingBox> bboxes;
    std::uint64_t seed_used = 0;
    std::string checkpoint_id;
    double latency_ms = 0.0;
};

nlohmann::json response_to_json(const GenerateResponse& response);
GenerateResponse response_from_json(const nlohmann::json& j);

/// PNG-encoded, base64 wire form of a synthesized pair.
GenerateResponse encode_pair(const GeneratedPair& pair);

struct HttpResult {
    int status = 200;
    nlohmann::json body;
};

enum class ServiceStatus { NoModel, Loading, Ready };
std::string to_string(ServiceStatus status);

// Request handling independent of the HTTP transport. One checkpoint per process.
class GenerationService {
public:
    using Loader = std::function<std::shared_ptr<const Synthesizer>()>;

    /// Runs `loader` on the calling thread, reporting "loading" until it returns. A throwing loader
    /// leaves the service without a model and rethrows.
    void load(const Loader& loader);
    void load(const std::filesystem::path& checkpoint);

    ServiceStatus status() const;
    HttpResult health() const;
    HttpResult generate(const std::string& body) const;
    HttpResult generate(const GenerateRequest& request) const;

private:
    std::shared_ptr<const Synthesizer> current() const;

    mutable std::mutex mutex_;
    std::shared_ptr<const Synthesizer> synthesizer_;
    bool loading_ = false;
};

/// Mounts POST /api/generate and GET /api/health.
void register_routes(httplib::Server& server, GenerationService& service);

}  // namespace glandsynth
