#include "doctest.h"

#include "manga/panel_order.hpp"
#include "manga/error.hpp"
#include "support/layouts.hpp"

#include <algorithm>
#include <chrono>
#include <numeric>
#include <random>

using namespace manga;
using namespace manga::testing;

namespace {

std::vector<BBox> in_reading_order(const std::vector<BBox>& boxes, const std::vector<int>& perm) {
    std::vector<BBox> out;
    for (int i : perm) out.push_back(boxes[std::size_t(i)]);
    return out;
}

bool is_permutation(std::vector<int> p, std::size_t n) {
    std::sort(p.begin(), p.end());
    std::vector<int> id(n);
    std::iota(id.begin(), id.end(), 0);
    return p == id;
}

}  // namespace

TEST_CASE("2x2 grid reads right to left") {
    const std::vector<BBox> b = {{0, 0, 50, 50}, {50, 0, 100, 50}, {0, 50, 50, 100}, {50, 50, 100, 100}};
    CHECK(order_panels(b, 100, 100).permutation == std::vector<int>{1, 0, 3, 2});
}

TEST_CASE("single box and stacked rows") {
    CHECK(order_panels({{10, 10, 90, 90}}, 100, 100).permutation == std::vector<int>{0});
    const std::vector<BBox> rows = {{0, 0, 100, 30}, {0, 35, 100, 65}, {0, 70, 100, 100}};
    CHECK(order_panels(rows, 100, 100).permutation == std::vector<int>{0, 1, 2});
    const std::vector<BBox> shuffled = {rows[2], rows[0], rows[1]};
    CHECK(order_panels(shuffled, 100, 100).permutation == std::vector<int>{1, 2, 0});
}

TEST_CASE("find_cut") {
    const BBox page{0, 0, 100, 100};
    SUBCASE("gap midpoint") {
        const std::vector<BBox> b = {{0, 0, 100, 40}, {0, 50, 100, 100}};
        REQUIRE(find_cut(b, page, CutAxis::Horizontal, 2.0));
        CHECK(*find_cut(b, page, CutAxis::Horizontal, 2.0) == 45.0);
        CHECK(!find_cut(b, page, CutAxis::Vertical, 2.0));
    }
    SUBCASE("overlap beyond tolerance") {
        const std::vector<BBox> b = {{0, 0, 100, 60}, {0, 30, 100, 100}};
        CHECK(!find_cut(b, page, CutAxis::Horizontal, 2.0));
    }
    SUBCASE("overlap within tolerance still cuts") {
        const std::vector<BBox> b = {{0, 0, 100, 51}, {0, 50, 100, 100}};
        CHECK(find_cut(b, page, CutAxis::Horizontal, 2.0).has_value());
    }
    SUBCASE("one box") {
        CHECK(!find_cut({{0, 0, 10, 10}}, page, CutAxis::Horizontal, 2.0));
    }
    SUBCASE("widest gap wins") {
        const std::vector<BBox> b = {{0, 0, 100, 20}, {0, 22, 100, 50}, {0, 70, 100, 100}};
        CHECK(*find_cut(b, page, CutAxis::Horizontal, 1.0) == 60.0);
    }
}

TEST_CASE("every grid up to 4x4 is row-major right to left") {
    for (int m = 1; m <= 4; ++m)
        for (int n = 1; n <= 4; ++n)
            for (int gutter : {0, 1, 3}) {
                const auto b = grid(m, n, 384, 512, gutter);
                std::vector<int> want;
                for (int r = 0; r < m; ++r)
                    for (int c = n - 1; c >= 0; --c) want.push_back(r * n + c);
                CAPTURE(m);
                CAPTURE(n);
                CHECK(order_panels(b, 384, 512).permutation == want);
            }
}

TEST_CASE("random layouts: permutation, shuffle and translation invariance") {
    std::mt19937_64 rng(2024);
    const auto start = std::chrono::steady_clock::now();
    for (int trial = 0; trial < 1000; ++trial) {
        const int W = 200 + trial % 50, H = 280 + trial % 70;
        std::vector<BBox> boxes;
        if (trial % 2) guillotine({0, 0, W, H}, 4, rng, boxes);
        else boxes = scatter(W, H, rng);
        const double tol = default_gap_tolerance(H);
        const auto r = order_panels(boxes, W, H, tol);
        REQUIRE(is_permutation(r.permutation, boxes.size()));
        const auto reading = in_reading_order(boxes, r.permutation);

        std::vector<BBox> shuffled = boxes;
        std::shuffle(shuffled.begin(), shuffled.end(), rng);
        CHECK(in_reading_order(shuffled, order_panels(shuffled, W, H, tol).permutation) == reading);

        std::vector<BBox> moved;
        for (const auto& b : boxes) moved.push_back(b.translated(17, 5));
        CHECK(order_panels(moved, W + 17, H + 5, tol).permutation == r.permutation);
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    CHECK(secs < 10.0);
}

TEST_CASE("interlocking panels fall back to centre sort") {
    // pinwheel: no straight cut separates any group
    const std::vector<BBox> b = {{0, 0, 60, 30}, {60, 0, 90, 60}, {30, 60, 90, 90}, {0, 30, 30, 90}, {30, 30, 60, 60}};
    const auto r = order_panels(b, 90, 90, 0.0);
    CHECK(r.cut_tree.axis == CutAxis::None);
    CHECK(r.permutation == std::vector<int>{0, 1, 4, 3, 2});
}

TEST_CASE("order_panels errors") {
    CHECK_THROWS_AS(order_panels({}, 10, 10), DataError);
    CHECK_THROWS_AS(order_panels({{0, 0, 20, 5}}, 10, 10), DataError);
    CHECK_THROWS_AS(order_panels({{5, 0, 5, 5}}, 10, 10), DataError);
    CHECK(default_gap_tolerance(1170) == doctest::Approx(2.0));
}
