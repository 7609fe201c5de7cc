#include "synthetic.hpp"

#include <ATen/CPUGeneratorImpl.h>

#include <algorithm>
#include <deque>
#include <random>
#include <tuple>

namespace glandsynth::fixtures {

std::vector<Rect> random_rects(std::uint64_t seed, int count, int canvas, int min_side, int max_side, int gap) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> side(min_side, max_side);
    std::vector<Rect> rects;
    for (int attempt = 0; attempt < 10000 && static_cast<int>(rects.size()) < count; ++attempt) {
        const int w = side(rng);
        const int h = side(rng);
        std::uniform_int_distribution<int> px(1, canvas - w - 1);
        std::uniform_int_distribution<int> py(1, canvas - h - 1);
        const Rect r{px(rng), py(rng), 0, 0};
        const Rect c{r.x0, r.y0, r.x0 + w, r.y0 + h};
        const bool clear = std::none_of(rects.begin(), rects.end(), [&](const Rect& o) {
            return c.x0 < o.x1 + gap && o.x0 < c.x1 + gap && c.y0 < o.y1 + gap && o.y0 < c.y1 + gap;
        });
        if (clear) {
            rects.push_back(c);
        }
    }
    return rects;
}

torch::Tensor rect_mask(const std::vector<Rect>& rects, int canvas) {
    torch::Tensor m = torch::zeros({1, canvas, canvas});
    for (const auto& r : rects) {
        m.index_put_({0, torch::indexing::Slice(r.y0, r.y1), torch::indexing::Slice(r.x0, r.x1)}, 1.0);
    }
    return m;
}

torch::Tensor rect_image(const std::vector<Rect>& rects, std::uint64_t seed, int canvas) {
    using torch::indexing::Slice;
    torch::Tensor img = torch::empty({3, canvas, canvas});
    img[0].fill_(0.80);
    img[1].fill_(0.35);
    img[2].fill_(0.60);
    for (const auto& r : rects) {
        img.index_put_({0, Slice(r.y0, r.y1), Slice(r.x0, r.x1)}, -0.20);
        img.index_put_({1, Slice(r.y0, r.y1), Slice(r.x0, r.x1)}, -0.60);
        img.index_put_({2, Slice(r.y0, r.y1), Slice(r.x0, r.x1)}, 0.10);
        const int bx = (r.x1 - r.x0) / 4;
        const int by = (r.y1 - r.y0) / 4;
        img.index_put_({Slice(), Slice(r.y0 + by, r.y1 - by), Slice(r.x0 + bx, r.x1 - bx)}, 0.95);
    }
    auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
    img.add_(torch::randn({3, canvas, canvas}, gen).mul_(0.03));
    return img.clamp_(-1.0, 1.0);
}

TrainingSample rect_sample(std::uint64_t seed, int glands) {
    const auto rects = random_rects(seed, glands, 256, 20, 64, 4);
    return make_training_sample(rect_image(rects, seed), rect_mask(rects));
}

std::vector<GlandObject> bfs_objects(const std::vector<std::uint8_t>& mask, int width, int height,
                                     std::int64_t min_area) {
    std::vector<int> label(mask.size(), -1);
    std::vector<GlandObject> out;
    int next = 0;
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const auto start = static_cast<std::size_t>(y) * width + x;
            if (!mask[start] || label[start] >= 0) {
                continue;
            }
            std::deque<std::pair<int, int>> queue{{x, y}};
            label[start] = next;
            int x0 = x, x1 = x, y0 = y, y1 = y;
            double sx = 0, sy = 0;
            std::int64_t area = 0;
            while (!queue.empty()) {
                const auto [cx, cy] = queue.front();
                queue.pop_front();
                ++area;
                sx += cx;
                sy += cy;
                x0 = std::min(x0, cx);
                x1 = std::max(x1, cx);
                y0 = std::min(y0, cy);
                y1 = std::max(y1, cy);
                for (int dy = -1; dy <= 1; ++dy) {
                    for (int dx = -1; dx <= 1; ++dx) {
                        const int nx = cx + dx;
                        const int ny = cy + dy;
                        if (nx < 0 || ny < 0 || nx >= width || ny >= height) {
                            continue;
                        }
                        const auto idx = static_cast<std::size_t>(ny) * width + nx;
                        if (mask[idx] && label[idx] < 0) {
                            label[idx] = next;
                            queue.emplace_back(nx, ny);
                        }
                    }
                }
            }
            ++next;
            if (area >= min_area) {
                GlandObject obj;
                obj.centroid_x = sx / static_cast<double>(area);
                obj.centroid_y = sy / static_cast<double>(area);
                obj.bbox = {double(x0), double(y0), double(x1 + 1), double(y1 + 1)};
                obj.area = area;
                out.push_back(obj);
            }
        }
    }
    std::sort(out.begin(), out.end(), [](const GlandObject& a, const GlandObject& b) {
        return std::tie(a.bbox.y0, a.bbox.x0, a.bbox.y1, a.bbox.x1) < std::tie(b.bbox.y0, b.bbox.x0, b.bbox.y1, b.bbox.x1);
    });
    return out;
}

}  // namespace glandsynth::fixtures
