#pragma once

#include <algorithm>
#include <cstdint>
#include <ostream>

namespace manga {

/// Integer pixel box, origin top-left, half-open in spirit: width = xmax - xmin.
struct BBox {
    int xmin = 0;
    int ymin = 0;
    int xmax = 0;
    int ymax = 0;

    int width() const { return xmax - xmin; }
    int height() const { return ymax - ymin; }
    std::int64_t area() const {
        return valid() ? std::int64_t(width()) * height() : 0;
    }
    bool valid() const { return xmin < xmax && ymin < ymax; }
    double center_x() const { return 0.5 * (xmin + xmax); }
    double center_y() const { return 0.5 * (ymin + ymax); }

    bool inside(int page_width, int page_height) const {
        return xmin >= 0 && ymin >= 0 && xmax <= page_width && ymax <= page_height;
    }
    bool contains_point(double x, double y) const {
        return x >= xmin && x <= xmax && y >= ymin && y <= ymax;
    }
    BBox translated(int dx, int dy) const { return {xmin + dx, ymin + dy, xmax + dx, ymax + dy}; }

    /// Padding entries of fixed-size records use the all-zero box.
    static constexpr BBox sentinel() { return {0, 0, 0, 0}; }
    bool is_sentinel() const { return xmin == 0 && ymin == 0 && xmax == 0 && ymax == 0; }

    friend bool operator==(const BBox&, const BBox&) = default;
};

inline BBox intersect(const BBox& a, const BBox& b) {
    return {std::max(a.xmin, b.xmin), std::max(a.ymin, b.ymin),
            std::min(a.xmax, b.xmax), std::min(a.ymax, b.ymax)};
}

inline std::int64_t intersection_area(const BBox& a, const BBox& b) { return intersect(a, b).area(); }

inline std::ostream& operator<<(std::ostream& os, const BBox& b) {
    return os << "(" << b.xmin << "," << b.ymin << "," << b.xmax << "," << b.ymax << ")";
}

}  // namespace manga
