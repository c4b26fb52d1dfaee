#include "manga/panel_order.hpp"

#include "manga/error.hpp"

#include <algorithm>
#include <numeric>

namespace manga {

double default_gap_tolerance(int page_height) { return 2.0 * double(page_height) / 1170.0; }

std::string to_string(CutAxis axis) {
    switch (axis) {
        case CutAxis::Horizontal: return "horizontal";
        case CutAxis::Vertical: return "vertical";
        case CutAxis::None: return "none";
    }
    return "none";
}

namespace {

struct Interval {
    double lo, hi;
};

Interval along(const BBox& b, CutAxis axis) {
    return axis == CutAxis::Horizontal ? Interval{double(b.ymin), double(b.ymax)}
                                       : Interval{double(b.xmin), double(b.xmax)};
}

BBox bounds(const std::vector<BBox>& boxes, const std::vector<int>& idx) {
    BBox r = boxes[idx.front()];
    for (int i : idx) {
        r.xmin = std::min(r.xmin, boxes[i].xmin);
        r.ymin = std::min(r.ymin, boxes[i].ymin);
        r.xmax = std::max(r.xmax, boxes[i].xmax);
        r.ymax = std::max(r.ymax, boxes[i].ymax);
    }
    return r;
}

std::vector<BBox> gather(const std::vector<BBox>& boxes, const std::vector<int>& idx) {
    std::vector<BBox> out;
    for (int i : idx) out.push_back(boxes[i]);
    return out;
}

CutNode order_region(const std::vector<BBox>& boxes, const std::vector<int>& idx, double tol) {
    CutNode node;
    if (idx.size() == 1) {
        node.indices = idx;
        return node;
    }
    const BBox region = bounds(boxes, idx);
    const auto subset = gather(boxes, idx);
    for (CutAxis axis : {CutAxis::Horizontal, CutAxis::Vertical}) {
        auto cut = find_cut(subset, region, axis, tol);
        if (!cut) continue;
        std::vector<int> before, after;
        for (int i : idx) {
            Interval iv = along(boxes[i], axis);
            (0.5 * (iv.lo + iv.hi) < *cut ? before : after).push_back(i);
        }
        node.axis = axis;
        node.position = *cut;
        // top group first; for vertical cuts the right group first
        if (axis == CutAxis::Horizontal) {
            node.children.push_back(order_region(boxes, before, tol));
            node.children.push_back(order_region(boxes, after, tol));
        } else {
            node.children.push_back(order_region(boxes, after, tol));
            node.children.push_back(order_region(boxes, before, tol));
        }
        return node;
    }
    // No clean cut: overlapping or interlocking panels.
    node.indices = idx;
    std::stable_sort(node.indices.begin(), node.indices.end(), [&](int a, int b) {
        const auto& A = boxes[a];
        const auto& B = boxes[b];
        if (A.ymin + A.ymax != B.ymin + B.ymax) return A.ymin + A.ymax < B.ymin + B.ymax;
        if (A.xmin + A.xmax != B.xmin + B.xmax) return A.xmin + A.xmax > B.xmin + B.xmax;
        if (A.ymin != B.ymin) return A.ymin < B.ymin;
        if (A.xmax != B.xmax) return A.xmax > B.xmax;
        return a < b;
    });
    return node;
}

void flatten(const CutNode& n, std::vector<int>& out) {
    if (n.children.empty()) {
        out.insert(out.end(), n.indices.begin(), n.indices.end());
        return;
    }
    for (const auto& c : n.children) flatten(c, out);
}

}  // namespace

std::optional<double> find_cut(const std::vector<BBox>& boxes, const BBox& region, CutAxis axis,
                               double gap_tolerance) {
    if (boxes.size() < 2 || axis == CutAxis::None) return std::nullopt;
    std::vector<Interval> iv;
    for (const auto& b : boxes) iv.push_back(along(b, axis));
    std::sort(iv.begin(), iv.end(), [](const Interval& a, const Interval& b) {
        return a.lo != b.lo ? a.lo < b.lo : a.hi < b.hi;
    });
    const Interval reg = along(region, axis);

    std::optional<double> best;
    double best_clearance = 0.0;
    double prefix_hi = iv.front().hi;
    for (std::size_t i = 1; i < iv.size(); ++i) {
        // prefix [0, i) before the cut, suffix [i, n) after it
        const double gap_lo = prefix_hi;
        const double gap_hi = iv[i].lo;
        prefix_hi = std::max(prefix_hi, iv[i].hi);
        if (gap_lo - gap_tolerance > gap_hi + gap_tolerance) continue;
        const double c = 0.5 * (gap_lo + gap_hi);
        if (!(c > reg.lo && c < reg.hi)) continue;
        // every box must land on one side by its center as well
        bool ok = true;
        for (std::size_t j = 0; j < iv.size() && ok; ++j) {
            const double mid = 0.5 * (iv[j].lo + iv[j].hi);
            ok = (j < i) == (mid < c);
        }
        if (!ok) continue;
        const double clearance = 0.5 * (gap_hi - gap_lo);
        if (!best || clearance > best_clearance) {
            best = c;
            best_clearance = clearance;
        }
    }
    return best;
}

OrderResult order_panels(const std::vector<BBox>& boxes, int page_width, int page_height, double gap_tolerance) {
    if (boxes.empty()) throw DataError("order_panels: no panel boxes given");
    for (std::size_t i = 0; i < boxes.size(); ++i) {
        if (!boxes[i].valid() || !boxes[i].inside(page_width, page_height))
            throw DataError("order_panels: panel " + std::to_string(i) + " is degenerate or outside the page");
    }
    std::vector<int> idx(boxes.size());
    std::iota(idx.begin(), idx.end(), 0);
    OrderResult r;
    r.cut_tree = order_region(boxes, idx, gap_tolerance);
    flatten(r.cut_tree, r.permutation);
    return r;
}

}  // namespace manga
