#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace glandsynth {

inline constexpr int kDefaultCanvasSize = 256;
inline constexpr std::size_t kMaxGlands = 20;
inline constexpr std::int64_t kMinBlobArea = 16;

/// One gland as placed by the user: centre location and horizontal/vertical span, in canvas pixels.
struct GlandSpec {
    double x = 0.0;
    double y = 0.0;
    double sx = 0.0;
    double sy = 0.0;
    std::optional<std::uint64_t> seed;

    bool operator==(const GlandSpec&) const = default;
};

struct GlandLayout {
    int canvas_size = kDefaultCanvasSize;
    std::vector<GlandSpec> glands;

    bool operator==(const GlandLayout&) const = default;
};

/// Axis-aligned box in canvas pixels, half-open: [x0, x1) x [y0, y1).
struct BoundingBox {
    double x0 = 0.0;
    double y0 = 0.0;
    double x1 = 0.0;
    double y1 = 0.0;

    double width() const { return x1 - x0; }
    double height() const { return y1 - y0; }
    double area() const { return width() * height(); }
    double center_x() const { return 0.5 * (x0 + x1); }
    double center_y() const { return 0.5 * (y0 + y1); }

    bool operator==(const BoundingBox&) const = default;
};

/// Box centred on the gland location with the gland's span, clamped per edge to [0, canvas_size].
/// Throws std::invalid_argument when the clamped box has no area.
BoundingBox bbox_from_spec(const GlandSpec& spec, int canvas_size);

/// Inverse of bbox_from_spec for a box inside the canvas: centre and extent.
GlandSpec spec_from_bbox(const BoundingBox& box);

std::vector<BoundingBox> bboxes_from_layout(const GlandLayout& layout);

struct GlandObject {
    double centroid_x = 0.0;
    double centroid_y = 0.0;
    BoundingBox bbox;
    std::int64_t area = 0;
};

/// 8-connected foreground components of a row-major binary mask (non-zero = foreground).
/// Components smaller than `min_area` pixels are dropped; output is ordered by (y0, x0).
std::vector<GlandObject> extract_gland_objects(std::span<const std::uint8_t> mask, int width, int height,
                                               std::int64_t min_area = kMinBlobArea);

struct LayoutViolation {
    std::string kind;  // "non-positive size", "off-canvas gland", "n out of range", "invalid canvas size"
    std::optional<std::size_t> gland;
    std::string message;
};

struct ValidationReport {
    std::vector<LayoutViolation> violations;
    bool ok() const { return violations.empty(); }
};

ValidationReport validate_layout(const GlandLayout& layout, std::size_t max_glands = kMaxGlands);

// JSON wire form: {"canvas_size": 256, "glands": [{"x":..,"y":..,"sx":..,"sy":..,"seed":..}]}.
// Parsing rejects unknown fields and wrong types with std::invalid_argument; it does not validate geometry.
GlandLayout layout_from_json(const nlohmann::json& j);
nlohmann::json layout_to_json(const GlandLayout& layout);
nlohmann::json bbox_to_json(const BoundingBox& box);
nlohmann::json report_to_json(const ValidationReport& report);

}  // namespace glandsynth
