#include "doctest.h"

#include "manga/error.hpp"
#include "manga/panelization.hpp"
#include "support/pages.hpp"

#include <algorithm>
#include <random>

using namespace manga;
using namespace manga::testing;

TEST_CASE("split_page examples") {
    SUBCASE("black page, full box") {
        const Image page(10, 8, 0.0f);
        const auto s = split_page(page, {{0, 0, 8, 10}});
        REQUIRE(s.size() == 1);
        CHECK(s.images[0] == page);
    }
    SUBCASE("gray page, left half") {
        const auto s = split_page(Image(6, 8, 0.5f), {{0, 0, 4, 6}});
        const auto& g = s.images[0].channels[1];
        CHECK((g.leftCols(4) == 0.5f).all());
        CHECK((g.rightCols(4) == 1.0f).all());
    }
    SUBCASE("disjoint boxes own disjoint pixels") {
        Image page(20, 20, 0.2f);
        const std::vector<BBox> b = {{0, 0, 10, 20}, {10, 0, 20, 20}};
        const auto s = split_page(page, b);
        for (int y = 0; y < 20; ++y)
            for (int x = 0; x < 20; ++x) {
                int dark = 0;
                for (const auto& img : s.images) dark += img.channels[0](y, x) < 1.0f;
                CHECK(dark == 1);
            }
    }
    SUBCASE("errors") {
        CHECK_THROWS_AS(split_page(Image(5, 5), {{0, 0, 6, 5}}), DataError);
        CHECK_THROWS_AS(compose_page(std::vector<Image>{}), DataError);
        CHECK_THROWS_AS(compose_page(std::vector<Image>{Image(5, 5), Image(5, 6)}), DataError);
    }
}

TEST_CASE("compose inverts split up to whitening") {
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 50; ++trial) {
        const int H = std::uniform_int_distribution<int>(4, 40)(rng), W = std::uniform_int_distribution<int>(4, 40)(rng);
        const Image page = random_page(H, W, rng);
        const auto boxes = random_boxes(H, W, rng);
        const Image composed = compose_page(split_page(page, boxes));
        const Image oracle = loop_oracle(page, boxes);
        CHECK(composed == oracle);
        CHECK(whiten_outside(page, boxes) == oracle);
    }
}

TEST_CASE("composition is a min-semilattice with white as identity") {
    std::mt19937_64 rng(18);
    for (int trial = 0; trial < 30; ++trial) {
        const int H = 9, W = 7;
        std::vector<Image> s;
        const int n = std::uniform_int_distribution<int>(1, 5)(rng);
        for (int i = 0; i < n; ++i) s.push_back(random_page(H, W, rng));
        const Image all = compose_page(s);

        auto shuffled = s;
        std::shuffle(shuffled.begin(), shuffled.end(), rng);
        CHECK(compose_page(shuffled) == all);  // commutative

        auto doubled = s;
        doubled.insert(doubled.end(), s.begin(), s.end());
        CHECK(compose_page(doubled) == all);  // idempotent

        const std::size_t cut = std::uniform_int_distribution<std::size_t>(0, s.size())(rng);
        std::vector<Image> left(s.begin(), s.begin() + long(cut)), right(s.begin() + long(cut), s.end());
        std::vector<Image> nested;
        if (!left.empty()) nested.push_back(compose_page(left));
        if (!right.empty()) nested.push_back(compose_page(right));
        CHECK(compose_page(nested) == all);  // associative

        auto with_white = s;
        with_white.insert(with_white.begin() + long(cut), Image(H, W, 1.0f));
        CHECK(compose_page(with_white) == all);
    }
    CHECK(compose_page(std::vector<Image>(3, Image(4, 4, 1.0f))) == Image(4, 4, 1.0f));
}

TEST_CASE("overlapping panels agree where they overlap") {
    std::mt19937_64 rng(19);
    const Image page = random_page(30, 30, rng);
    const std::vector<BBox> b = {{0, 0, 20, 20}, {10, 10, 30, 30}};
    const auto s = split_page(page, b);
    const Image c = compose_page(s);
    for (int y = 10; y < 20; ++y)
        for (int x = 10; x < 20; ++x) {
            CHECK(s.images[0].channels[0](y, x) == s.images[1].channels[0](y, x));
            CHECK(c.channels[0](y, x) == page.channels[0](y, x));
        }
}
