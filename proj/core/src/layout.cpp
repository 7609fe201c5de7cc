#include "glandsynth/layout.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <tuple>

#include <nlohmann/json.hpp>

namespace glandsynth {

BoundingBox bbox_from_spec(const GlandSpec& spec, int canvas_size) {
    if (canvas_size <= 0) {
        throw std::invalid_argument("canvas size must be positive");
    }
    const double n = static_cast<double>(canvas_size);
    BoundingBox box{spec.x - spec.sx / 2.0, spec.y - spec.sy / 2.0, spec.x + spec.sx / 2.0, spec.y + spec.sy / 2.0};
    box.x0 = std::clamp(box.x0, 0.0, n);
    box.y0 = std::clamp(box.y0, 0.0, n);
    box.x1 = std::clamp(box.x1, 0.0, n);
    box.y1 = std::clamp(box.y1, 0.0, n);
    if (!(box.x1 > box.x0) || !(box.y1 > box.y0)) {
        throw std::invalid_argument("gland at (" + std::to_string(spec.x) + ", " + std::to_string(spec.y) + ") with size (" +
                                    std::to_string(spec.sx) + ", " + std::to_string(spec.sy) +
                                    ") has no area on a canvas of " + std::to_string(canvas_size) + " pixels");
    }
    return box;
}

GlandSpec spec_from_bbox(const BoundingBox& box) {
    return {box.center_x(), box.center_y(), box.width(), box.height(), std::nullopt};
}

std::vector<BoundingBox> bboxes_from_layout(const GlandLayout& layout) {
    std::vector<BoundingBox> boxes;
    boxes.reserve(layout.glands.size());
    for (const auto& g : layout.glands) {
        boxes.push_back(bbox_from_spec(g, layout.canvas_size));
    }
    return boxes;
}

namespace {

struct DisjointSet {
    std::vector<std::int32_t> parent;

    std::int32_t make() {
        parent.push_back(static_cast<std::int32_t>(parent.size()));
        return parent.back();
    }
    std::int32_t find(std::int32_t a) {
        while (parent[a] != a) {
            parent[a] = parent[parent[a]];
            a = parent[a];
        }
        return a;
    }
    void unite(std::int32_t a, std::int32_t b) {
        a = find(a);
        b = find(b);
        if (a != b) {
            parent[std::max(a, b)] = std::min(a, b);
        }
    }
};

}  // namespace

std::vector<GlandObject> extract_gland_objects(std::span<const std::uint8_t> mask, int width, int height,
                                               std::int64_t min_area) {
    if (width < 0 || height < 0 || mask.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height)) {
        throw std::invalid_argument("mask buffer does not match its declared size");
    }

    // Two-pass labelling; provisional labels are merged through a disjoint set.
    std::vector<std::int32_t> labels(mask.size(), -1);
    DisjointSet sets;
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const std::size_t idx = static_cast<std::size_t>(y) * width + x;
            if (mask[idx] == 0) {
                continue;
            }
            std::int32_t label = -1;
            const auto visit = [&](int nx, int ny) {
                if (nx < 0 || nx >= width || ny < 0) {
                    return;
                }
                const std::int32_t other = labels[static_cast<std::size_t>(ny) * width + nx];
                if (other < 0) {
                    return;
                }
                if (label < 0) {
                    label = other;
                } else {
                    sets.unite(label, other);
                }
            };
            visit(x - 1, y);
            visit(x - 1, y - 1);
            visit(x, y - 1);
            visit(x + 1, y - 1);
            labels[idx] = label < 0 ? sets.make() : label;
        }
    }

    struct Accum {
        std::int64_t count = 0;
        double sum_x = 0.0;
        double sum_y = 0.0;
        int x0 = 0, y0 = 0, x1 = 0, y1 = 0;
    };
    std::vector<Accum> acc(sets.parent.size());
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const std::int32_t l = labels[static_cast<std::size_t>(y) * width + x];
            if (l < 0) {
                continue;
            }
            Accum& a = acc[sets.find(l)];
            if (a.count == 0) {
                a.x0 = a.x1 = x;
                a.y0 = a.y1 = y;
            }
            ++a.count;
            a.sum_x += x;
            a.sum_y += y;
            a.x0 = std::min(a.x0, x);
            a.x1 = std::max(a.x1, x);
            a.y0 = std::min(a.y0, y);
            a.y1 = std::max(a.y1, y);
        }
    }

    std::vector<GlandObject> objects;
    for (const Accum& a : acc) {
        if (a.count == 0 || a.count < min_area) {
            continue;
        }
        const double n = static_cast<double>(a.count);
        objects.push_back({a.sum_x / n, a.sum_y / n,
                           BoundingBox{double(a.x0), double(a.y0), double(a.x1 + 1), double(a.y1 + 1)}, a.count});
    }
    std::sort(objects.begin(), objects.end(), [](const GlandObject& a, const GlandObject& b) {
        return std::tie(a.bbox.y0, a.bbox.x0, a.bbox.y1, a.bbox.x1) < std::tie(b.bbox.y0, b.bbox.x0, b.bbox.y1, b.bbox.x1);
    });
    return objects;
}

ValidationReport validate_layout(const GlandLayout& layout, std::size_t max_glands) {
    ValidationReport report;
    const std::size_t n = layout.glands.size();
    if (layout.canvas_size <= 0) {
        report.violations.push_back(
            {"invalid canvas size", std::nullopt, "canvas_size must be positive, got " + std::to_string(layout.canvas_size)});
    }
    if (n < 1 || n > max_glands) {
        report.violations.push_back({"n out of range", std::nullopt,
                                     "layout has " + std::to_string(n) + " glands; expected 1.." + std::to_string(max_glands)});
    }
    const double canvas = static_cast<double>(layout.canvas_size);
    for (std::size_t i = 0; i < n; ++i) {
        const GlandSpec& g = layout.glands[i];
        if (!(g.sx > 0.0) || !(g.sy > 0.0)) {
            report.violations.push_back({"non-positive size", i,
                                         "gland " + std::to_string(i) + " has size (" + std::to_string(g.sx) + ", " +
                                             std::to_string(g.sy) + ")"});
        }
        if (!(g.x >= 0.0 && g.x < canvas && g.y >= 0.0 && g.y < canvas)) {
            report.violations.push_back({"off-canvas gland", i,
                                         "gland " + std::to_string(i) + " centre (" + std::to_string(g.x) + ", " +
                                             std::to_string(g.y) + ") lies outside the canvas"});
        }
    }
    return report;
}

namespace {

double number_field(const nlohmann::json& obj, const char* key) {
    const auto it = obj.find(key);
    if (it == obj.end()) {
        throw std::invalid_argument(std::string("gland is missing field '") + key + "'");
    }
    if (!it->is_number()) {
        throw std::invalid_argument(std::string("gland field '") + key + "' must be a number");
    }
    const double v = it->get<double>();
    if (!std::isfinite(v)) {
        throw std::invalid_argument(std::string("gland field '") + key + "' must be finite");
    }
    return v;
}

}  // namespace

GlandLayout layout_from_json(const nlohmann::json& j) {
    if (!j.is_object()) {
        throw std::invalid_argument("layout must be a JSON object");
    }
    for (const auto& [key, _] : j.items()) {
        if (key != "canvas_size" && key != "glands") {
            throw std::invalid_argument("unknown layout field '" + key + "'");
        }
    }
    GlandLayout layout;
    if (const auto it = j.find("canvas_size"); it != j.end()) {
        if (!it->is_number_integer()) {
            throw std::invalid_argument("canvas_size must be an integer");
        }
        layout.canvas_size = it->get<int>();
    }
    const auto glands = j.find("glands");
    if (glands == j.end() || !glands->is_array()) {
        throw std::invalid_argument("layout requires a 'glands' array");
    }
    for (const auto& g : *glands) {
        if (!g.is_object()) {
            throw std::invalid_argument("each gland must be a JSON object");
        }
        for (const auto& [key, _] : g.items()) {
            if (key != "x" && key != "y" && key != "sx" && key != "sy" && key != "seed") {
                throw std::invalid_argument("unknown gland field '" + key + "'");
            }
        }
        GlandSpec spec{number_field(g, "x"), number_field(g, "y"), number_field(g, "sx"), number_field(g, "sy"), std::nullopt};
        if (const auto seed = g.find("seed"); seed != g.end()) {
            if (!seed->is_number_unsigned() && !(seed->is_number_integer() && seed->get<std::int64_t>() >= 0)) {
                throw std::invalid_argument("gland seed must be a non-negative integer");
            }
            spec.seed = seed->get<std::uint64_t>();
        }
        layout.glands.push_back(spec);
    }
    return layout;
}

nlohmann::json layout_to_json(const GlandLayout& layout) {
    nlohmann::json glands = nlohmann::json::array();
    for (const auto& g : layout.glands) {
        nlohmann::json item{{"x", g.x}, {"y", g.y}, {"sx", g.sx}, {"sy", g.sy}};
        if (g.seed) {
            item["seed"] = *g.seed;
        }
        glands.push_back(std::move(item));
    }
    return {{"canvas_size", layout.canvas_size}, {"glands", std::move(glands)}};
}

nlohmann::json bbox_to_json(const BoundingBox& box) {
    return {{"x0", box.x0}, {"y0", box.y0}, {"x1", box.x1}, {"y1", box.y1}};
}

nlohmann::json report_to_json(const ValidationReport& report) {
    nlohmann::json violations = nlohmann::json::array();
    for (const auto& v : report.violations) {
        nlohmann::json item{{"kind", v.kind}, {"message", v.message}};
        item["gland"] = v.gland ? nlohmann::json(*v.gland) : nlohmann::json(nullptr);
        violations.push_back(std::move(item));
    }
    return {{"ok", report.ok()}, {"violations", std::move(violations)}};
}

}  // namespace glandsynth
