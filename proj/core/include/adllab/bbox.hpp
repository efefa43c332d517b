#pragma once

#include <algorithm>
#include <cstdint>

namespace adllab {

// Axis-aligned box in input-image pixel coordinates, [x0, x1) x [y0, y1).
struct BBox {
    int x0 = 0;
    int y0 = 0;
    int x1 = 0;
    int y1 = 0;

    int width() const { return x1 - x0; }
    int height() const { return y1 - y0; }
    std::int64_t area() const {
        return static_cast<std::int64_t>(width()) * static_cast<std::int64_t>(height());
    }
    bool valid() const { return x0 < x1 && y0 < y1; }

    friend bool operator==(const BBox&, const BBox&) = default;
};

// Intersection over union with integer pixel areas; 0 for disjoint boxes.
inline double iou(const BBox& a, const BBox& b) {
    const int ix0 = std::max(a.x0, b.x0);
    const int iy0 = std::max(a.y0, b.y0);
    const int ix1 = std::min(a.x1, b.x1);
    const int iy1 = std::min(a.y1, b.y1);
    const std::int64_t iw = std::max(0, ix1 - ix0);
    const std::int64_t ih = std::max(0, iy1 - iy0);
    const std::int64_t inter = iw * ih;
    const std::int64_t uni = a.area() + b.area() - inter;
    return uni > 0 ? static_cast<double>(inter) / static_cast<double>(uni) : 0.0;
}

}  // namespace adllab
