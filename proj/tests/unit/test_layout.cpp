#include <gtest/gtest.h>

#include <random>

#include <nlohmann/json.hpp>

#include "glandsynth/layout.hpp"
#include "synthetic.hpp"

using namespace glandsynth;

namespace {

BoundingBox box_of(double x0, double y0, double x1, double y1) {
    return {x0, y0, x1, y1};
}

std::vector<std::uint8_t> to_bytes(const torch::Tensor& mask) {
    const torch::Tensor b = mask.squeeze().ge(0.5).to(torch::kUInt8).contiguous();
    return {b.data_ptr<std::uint8_t>(), b.data_ptr<std::uint8_t>() + b.numel()};
}

}  // namespace

TEST(BBoxFromSpec, CentredGland) {
    EXPECT_EQ(bbox_from_spec({128, 128, 64, 32, {}}, 256), box_of(96, 112, 160, 144));
}

TEST(BBoxFromSpec, TouchingOrigin) {
    EXPECT_EQ(bbox_from_spec({10, 10, 20, 20, {}}, 256), box_of(0, 0, 20, 20));
}

TEST(BBoxFromSpec, ClampsEachEdge) {
    EXPECT_EQ(bbox_from_spec({2, 2, 20, 20, {}}, 256), box_of(0, 0, 12, 12));
    EXPECT_EQ(bbox_from_spec({250, 128, 20, 10, {}}, 256), box_of(240, 123, 256, 133));
}

TEST(BBoxFromSpec, RejectsBoxWithNoAreaOnCanvas) {
    EXPECT_THROW(bbox_from_spec({-20, 50, 10, 10, {}}, 256), std::invalid_argument);
    EXPECT_THROW(bbox_from_spec({300, 50, 10, 10, {}}, 256), std::invalid_argument);
}

TEST(BBoxFromSpec, RoundTripAndTranslation) {
    std::mt19937_64 rng(11);
    std::uniform_int_distribution<int> size(1, 61);
    std::uniform_int_distribution<int> pos(40, 210);
    for (int i = 0; i < 500; ++i) {
        const GlandSpec s{double(pos(rng)), double(pos(rng)), double(size(rng)), double(size(rng)), {}};
        const BoundingBox b = bbox_from_spec(s, 256);
        EXPECT_DOUBLE_EQ(b.center_x(), s.x);
        EXPECT_DOUBLE_EQ(b.center_y(), s.y);
        EXPECT_DOUBLE_EQ(b.width(), s.sx);
        EXPECT_DOUBLE_EQ(b.height(), s.sy);
        const GlandSpec back = spec_from_bbox(b);
        EXPECT_EQ(bbox_from_spec(back, 256), b);

        const BoundingBox shifted = bbox_from_spec({s.x + 5, s.y - 7, s.sx, s.sy, {}}, 256);
        EXPECT_EQ(shifted, box_of(b.x0 + 5, b.y0 - 7, b.x1 + 5, b.y1 - 7));
    }
}

TEST(ExtractGlandObjects, SingleSquare) {
    std::vector<std::uint8_t> mask(64 * 64, 0);
    for (int y = 30; y < 40; ++y) {
        for (int x = 20; x < 30; ++x) {
            mask[y * 64 + x] = 1;
        }
    }
    const auto objs = extract_gland_objects(mask, 64, 64);
    ASSERT_EQ(objs.size(), 1u);
    EXPECT_DOUBLE_EQ(objs[0].centroid_x, 24.5);
    EXPECT_DOUBLE_EQ(objs[0].centroid_y, 34.5);
    EXPECT_EQ(objs[0].bbox, box_of(20, 30, 30, 40));
    EXPECT_EQ(objs[0].area, 100);
}

TEST(ExtractGlandObjects, EmptyMaskGivesNothing) {
    std::vector<std::uint8_t> mask(32 * 32, 0);
    EXPECT_TRUE(extract_gland_objects(mask, 32, 32).empty());
}

TEST(ExtractGlandObjects, DiagonalNeighboursJoin) {
    std::vector<std::uint8_t> mask(8 * 8, 0);
    mask[0] = mask[9] = mask[18] = 1;
    const auto objs = extract_gland_objects(mask, 8, 8, 1);
    ASSERT_EQ(objs.size(), 1u);
    EXPECT_EQ(objs[0].area, 3);
}

TEST(ExtractGlandObjects, DropsSpecklesBelowMinArea) {
    std::vector<std::uint8_t> mask(32 * 32, 0);
    for (int y = 0; y < 3; ++y) {
        for (int x = 0; x < 5; ++x) {
            mask[y * 32 + x] = 1;  // 15 px
        }
    }
    for (int y = 20; y < 24; ++y) {
        for (int x = 20; x < 24; ++x) {
            mask[y * 32 + x] = 1;  // 16 px
        }
    }
    const auto objs = extract_gland_objects(mask, 32, 32);
    ASSERT_EQ(objs.size(), 1u);
    EXPECT_EQ(objs[0].bbox, box_of(20, 20, 24, 24));
}

TEST(ExtractGlandObjects, RenderedRectanglesComeBackExactly) {
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        auto rects = fixtures::random_rects(seed, 5);
        const auto objs = extract_gland_objects(to_bytes(fixtures::rect_mask(rects)), 256, 256);
        ASSERT_EQ(objs.size(), rects.size());
        std::sort(rects.begin(), rects.end(), [](auto& a, auto& b) { return std::tie(a.y0, a.x0) < std::tie(b.y0, b.x0); });
        for (std::size_t i = 0; i < rects.size(); ++i) {
            EXPECT_EQ(objs[i].bbox, box_of(rects[i].x0, rects[i].y0, rects[i].x1, rects[i].y1));
        }
    }
}

TEST(ExtractGlandObjects, MatchesBreadthFirstLabelling) {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 120; ++trial) {
        const int w = 24 + trial % 40;
        const int h = 20 + (trial * 7) % 45;
        std::bernoulli_distribution on(0.25 + 0.3 * (trial % 3) / 2.0);
        std::vector<std::uint8_t> mask(static_cast<std::size_t>(w * h));
        for (auto& v : mask) {
            v = on(rng) ? 1 : 0;
        }
        const std::int64_t min_area = trial % 4;
        const auto got = extract_gland_objects(mask, w, h, min_area);
        const auto want = fixtures::bfs_objects(mask, w, h, min_area);
        ASSERT_EQ(got.size(), want.size()) << "trial " << trial;
        for (std::size_t i = 0; i < got.size(); ++i) {
            EXPECT_EQ(got[i].bbox, want[i].bbox);
            EXPECT_EQ(got[i].area, want[i].area);
            EXPECT_NEAR(got[i].centroid_x, want[i].centroid_x, 1e-9);
            EXPECT_NEAR(got[i].centroid_y, want[i].centroid_y, 1e-9);
        }
    }
}

TEST(ValidateLayout, AcceptsInBoundsGlands) {
    const GlandLayout layout{256, {{60, 60, 30, 30, {}}, {128, 128, 40, 20, 7}, {200, 200, 10, 50, {}}}};
    EXPECT_TRUE(validate_layout(layout).ok());
}

TEST(ValidateLayout, ReportsEachViolation) {
    const auto kinds = [](const ValidationReport& r) {
        std::vector<std::string> k;
        for (const auto& v : r.violations) {
            k.push_back(v.kind);
        }
        return k;
    };
    EXPECT_EQ(kinds(validate_layout({256, {{50, 50, 0, 10, {}}}})), std::vector<std::string>{"non-positive size"});
    EXPECT_EQ(kinds(validate_layout({256, {}})), std::vector<std::string>{"n out of range"});
    EXPECT_EQ(kinds(validate_layout({256, {{256, 10, 10, 10, {}}}})), std::vector<std::string>{"off-canvas gland"});
    EXPECT_EQ(kinds(validate_layout({256, {{-1, 10, 10, 10, {}}}})), std::vector<std::string>{"off-canvas gland"});

    GlandLayout crowded{256, std::vector<GlandSpec>(21, GlandSpec{30, 30, 5, 5, {}})};
    EXPECT_EQ(kinds(validate_layout(crowded)), std::vector<std::string>{"n out of range"});
    crowded.glands.pop_back();
    EXPECT_TRUE(validate_layout(crowded).ok());

    const auto report = validate_layout({256, {{50, 50, 10, 10, {}}, {50, 50, -3, 10, {}}}});
    ASSERT_EQ(report.violations.size(), 1u);
    EXPECT_EQ(report.violations[0].gland, std::optional<std::size_t>(1));
}

TEST(LayoutJson, RoundTrips) {
    const GlandLayout layout{256, {{128, 128, 64, 32, 7}, {40.5, 60.25, 10, 12, {}}}};
    const GlandLayout back = layout_from_json(nlohmann::json::parse(layout_to_json(layout).dump()));
    ASSERT_EQ(back.glands.size(), 2u);
    EXPECT_EQ(back.canvas_size, 256);
    EXPECT_EQ(back.glands[0].seed, std::optional<std::uint64_t>(7));
    EXPECT_FALSE(back.glands[1].seed.has_value());
    EXPECT_DOUBLE_EQ(back.glands[1].y, 60.25);
}

TEST(LayoutJson, ParsesDocumentedExample) {
    const auto j = nlohmann::json::parse(R"({"canvas_size": 256, "glands": [{"x": 128, "y": 128, "sx": 64, "sy": 32, "seed": 7}]})");
    const GlandLayout layout = layout_from_json(j);
    ASSERT_EQ(layout.glands.size(), 1u);
    EXPECT_EQ(bbox_from_spec(layout.glands[0], layout.canvas_size), box_of(96, 112, 160, 144));
}

TEST(LayoutJson, RejectsUnknownFieldsAndBadTypes) {
    EXPECT_THROW(layout_from_json(nlohmann::json::parse(R"({"glands": [], "extra": 1})")), std::invalid_argument);
    EXPECT_THROW(layout_from_json(nlohmann::json::parse(R"({"glands": [{"x":1,"y":1,"sx":1,"sy":1,"r":2}]})")),
                 std::invalid_argument);
    EXPECT_THROW(layout_from_json(nlohmann::json::parse(R"({"glands": [{"x":"1","y":1,"sx":1,"sy":1}]})")),
                 std::invalid_argument);
    EXPECT_THROW(layout_from_json(nlohmann::json::parse(R"({"glands": [{"x":1,"y":1,"sx":1,"sy":1,"seed":-4}]})")),
                 std::invalid_argument);
    EXPECT_THROW(layout_from_json(nlohmann::json::parse(R"({"canvas_size": 256})")), std::invalid_argument);
}
