#include "glandsynth/service.hpp"

#include <chrono>
#include <random>
#include <stdexcept>

#include <httplib.h>

#include "glandsynth/image_io.hpp"

namespace glandsynth {

GenerateRequest request_from_json(const nlohmann::json& j) {
    if (!j.is_object()) {
        throw std::invalid_argument("request must be a JSON object");
    }
    for (const auto& [key, _] : j.items()) {
        if (key != "layout" && key != "seed" && key != "checkpoint_id") {
            throw std::invalid_argument("unknown request field '" + key + "'");
        }
    }
    const auto layout = j.find("layout");
    if (layout == j.end()) {
        throw std::invalid_argument("request requires a 'layout'");
    }
    GenerateRequest request;
    request.layout = layout_from_json(*layout);
    if (const auto seed = j.find("seed"); seed != j.end() && !seed->is_null()) {
        if (!seed->is_number_unsigned() && !(seed->is_number_integer() && seed->get<std::int64_t>() >= 0)) {
            throw std::invalid_argument("seed must be a non-negative 64-bit integer");
        }
        request.seed = seed->get<std::uint64_t>();
    }
    if (const auto id = j.find("checkpoint_id"); id != j.end() && !id->is_null()) {
        if (!id->is_string()) {
            throw std::invalid_argument("checkpoint_id must be a string");
        }
        request.checkpoint_id = id->get<std::string>();
    }
    return request;
}

nlohmann::json request_to_json(const GenerateRequest& request) {
    nlohmann::json j{{"layout", layout_to_json(request.layout)}};
    if (request.seed) {
        j["seed"] = *request.seed;
    }
    if (request.checkpoint_id) {
        j["checkpoint_id"] = *request.checkpoint_id;
    }
    return j;
}

nlohmann::json response_to_json(const GenerateResponse& response) {
    nlohmann::json boxes = nlohmann::json::array();
    for (const auto& b : response.bboxes) {
        boxes.push_back(bbox_to_json(b));
    }
    return {{"image", response.image},
            {"mask", response.mask},
            {"bboxes", std::move(boxes)},
            {"seed_used", response.seed_used},
            {"checkpoint_id", response.checkpoint_id},
            {"latency_ms", response.latency_ms}};
}

GenerateResponse response_from_json(const nlohmann::json& j) {
    GenerateResponse r;
    try {
        r.image = j.at("image").get<std::string>();
        r.mask = j.at("mask").get<std::string>();
        for (const auto& b : j.at("bboxes")) {
            r.bboxes.push_back({b.at("x0").get<double>(), b.at("y0").get<double>(), b.at("x1").get<double>(),
                                b.at("y1").get<double>()});
        }
        r.seed_used = j.at("seed_used").get<std::uint64_t>();
        r.checkpoint_id = j.at("checkpoint_id").get<std::string>();
        r.latency_ms = j.at("latency_ms").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument(std::string("malformed generate response: ") + e.what());
    }
    return r;
}

GenerateResponse encode_pair(const GeneratedPair& pair) {
    const auto to_b64 = [](const std::vector<std::uint8_t>& png) {
        return base64_encode(std::string_view(reinterpret_cast<const char*>(png.data()), png.size()));
    };
    GenerateResponse r;
    r.image = to_b64(encode_png(image_to_mat(pair.image)));
    r.mask = to_b64(encode_png(mask_to_mat(pair.component_mask)));
    r.bboxes = pair.boxes;
    r.seed_used = pair.seed;
    r.checkpoint_id = pair.checkpoint_id;
    return r;
}

std::string to_string(ServiceStatus status) {
    switch (status) {
        case ServiceStatus::NoModel:
            return "no_model";
        case ServiceStatus::Loading:
            return "loading";
        case ServiceStatus::Ready:
            return "ready";
    }
    return "no_model";
}

void GenerationService::load(const Loader& loader) {
    {
        std::lock_guard lock(mutex_);
        loading_ = true;
    }
    std::shared_ptr<const Synthesizer> loaded;
    try {
        loaded = loader();
    } catch (...) {
        std::lock_guard lock(mutex_);
        loading_ = false;
        throw;
    }
    std::lock_guard lock(mutex_);
    synthesizer_ = std::move(loaded);
    loading_ = false;
}

void GenerationService::load(const std::filesystem::path& checkpoint) {
    load([checkpoint] { return std::make_shared<const Synthesizer>(checkpoint); });
}

std::shared_ptr<const Synthesizer> GenerationService::current() const {
    std::lock_guard lock(mutex_);
    return synthesizer_;
}

ServiceStatus GenerationService::status() const {
    std::lock_guard lock(mutex_);
    if (loading_) {
        return ServiceStatus::Loading;
    }
    return synthesizer_ ? ServiceStatus::Ready : ServiceStatus::NoModel;
}

HttpResult GenerationService::health() const {
    const ServiceStatus s = status();
    const auto model = current();
    nlohmann::json body{{"status", to_string(s)}};
    body["checkpoint_id"] = (s == ServiceStatus::Ready && model) ? nlohmann::json(model->checkpoint_id())
                                                                  : nlohmann::json(nullptr);
    return {200, std::move(body)};
}

namespace {

HttpResult error(int status, const std::string& message) {
    return {status, {{"error", message}}};
}

}  // namespace

HttpResult GenerationService::generate(const std::string& body) const {
    nlohmann::json parsed = nlohmann::json::parse(body, nullptr, false);
    if (parsed.is_discarded()) {
        return error(400, "request body is not valid JSON");
    }
    GenerateRequest request;
    try {
        request = request_from_json(parsed);
    } catch (const std::invalid_argument& e) {
        return error(400, e.what());
    }
    return generate(request);
}

HttpResult GenerationService::generate(const GenerateRequest& request) const {
    const auto started = std::chrono::steady_clock::now();
    const ValidationReport report = validate_layout(request.layout);
    if (!report.ok()) {
        HttpResult r{400, report_to_json(report)};
        r.body["error"] = "invalid layout";
        return r;
    }
    const auto model = status() == ServiceStatus::Ready ? current() : nullptr;
    if (!model) {
        return error(503, "model not loaded");
    }
    if (request.checkpoint_id && *request.checkpoint_id != model->checkpoint_id()) {
        return error(404, "unknown checkpoint '" + *request.checkpoint_id + "'");
    }
    std::uint64_t seed = 0;
    if (request.seed) {
        seed = *request.seed;
    } else {
        std::random_device rd;
        seed = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
    }
    GenerateResponse response;
    try {
        response = encode_pair(model->generate(request.layout, seed));
    } catch (const std::invalid_argument& e) {
        return error(400, e.what());
    }
    response.latency_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
    return {200, response_to_json(response)};
}

void register_routes(httplib::Server& server, GenerationService& service) {
    const auto reply = [](httplib::Response& res, const HttpResult& result) {
        res.status = result.status;
        res.set_content(result.body.dump(), "application/json");
    };
    server.Get("/api/health", [&service, reply](const httplib::Request&, httplib::Response& res) {
        reply(res, service.health());
    });
    server.Post("/api/generate", [&service, reply](const httplib::Request& req, httplib::Response& res) {
        try {
            reply(res, service.generate(req.body));
        } catch (const std::exception& e) {
            reply(res, {500, {{"error", e.what()}}});
        }
    });
}

}  // namespace glandsynth
