#pragma once

#include "manga/bbox.hpp"

#include <optional>
#include <string>
#include <vector>

namespace manga {

enum class CutAxis {
    Horizontal,  ///< a horizontal line; splits top from bottom
    Vertical,    ///< a vertical line; splits right from left
    None,        ///< leaf group ordered by the fallback sort
};

/// Record of the recursive cuts. Children appear in reading order. A node
/// with axis None lists its panels (already sorted) in `indices`.
struct CutNode {
    CutAxis axis = CutAxis::None;
    double position = 0.0;
    std::vector<int> indices;
    std::vector<CutNode> children;
};

struct OrderResult {
    std::vector<int> permutation;  ///< panel indices in reading order
    CutNode cut_tree;
};

/// Jitter allowance: 2 px for a 1170 px tall page, proportional otherwise.
double default_gap_tolerance(int page_height);

/// Cut coordinate with maximal clearance that separates `boxes` into two
/// non-empty groups, no box crossing it by more than `gap_tolerance`.
std::optional<double> find_cut(const std::vector<BBox>& boxes, const BBox& region, CutAxis axis,
                               double gap_tolerance);

/// Manga reading order: rows top to bottom, right to left within a row.
OrderResult order_panels(const std::vector<BBox>& boxes, int page_width, int page_height,
                         double gap_tolerance);

inline OrderResult order_panels(const std::vector<BBox>& boxes, int page_width, int page_height) {
    return order_panels(boxes, page_width, page_height, default_gap_tolerance(page_height));
}

std::string to_string(CutAxis axis);

}  // namespace manga
