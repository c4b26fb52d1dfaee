#include "doctest.h"

#include "manga/annotation.hpp"
#include "manga/xml.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <set>

using namespace manga;

namespace {

const char* kOnePanel = R"(<?xml version="1.0"?>
<page id="p1" width="100" height="80">
  <panel xmin="0" ymin="0" xmax="100" ymax="80"/>
</page>)";

std::string random_text(std::mt19937_64& rng) {
    static const std::vector<std::string> pieces = {"hi", "A&B", "<no>", "\"q\"", "it's", "猫", "x y", "!", "—"};
    std::string s;
    const int n = std::uniform_int_distribution<int>(1, 4)(rng);
    for (int i = 0; i < n; ++i) s += (i ? " " : "") + pieces[std::uniform_int_distribution<std::size_t>(0, pieces.size() - 1)(rng)];
    return s;
}

BBox random_box(int W, int H, std::mt19937_64& rng) {
    const int x0 = std::uniform_int_distribution<int>(0, W - 1)(rng), y0 = std::uniform_int_distribution<int>(0, H - 1)(rng);
    return {x0, y0, std::uniform_int_distribution<int>(x0 + 1, W)(rng), std::uniform_int_distribution<int>(y0 + 1, H)(rng)};
}

PageAnnotation random_annotation(std::mt19937_64& rng) {
    PageAnnotation a;
    a.page_id = "page_" + std::to_string(rng() % 1000);
    a.width = std::uniform_int_distribution<int>(10, 2000)(rng);
    a.height = std::uniform_int_distribution<int>(10, 2000)(rng);
    const int panels = std::uniform_int_distribution<int>(0, 8)(rng);
    const bool ordered = rng() % 2;
    std::vector<int> order(static_cast<std::size_t>(panels));
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    for (int i = 0; i < panels; ++i) {
        PanelAnnotation p{random_box(a.width, a.height, rng), {}, {}};
        if (ordered) p.order_index = order[std::size_t(i)];
        if (rng() % 3 == 0) p.caption = random_text(rng);
        a.panels.push_back(p);
    }
    const int chars = std::uniform_int_distribution<int>(0, 4)(rng);
    for (int i = 0; i < chars; ++i) a.characters.push_back({"c" + std::to_string(i), random_box(a.width, a.height, rng)});
    for (int i = 0; i < int(rng() % 3); ++i) a.faces.push_back({"f" + std::to_string(i), random_box(a.width, a.height, rng)});
    const int texts = std::uniform_int_distribution<int>(0, 5)(rng);
    for (int i = 0; i < texts; ++i) a.texts.push_back({random_text(rng), random_box(a.width, a.height, rng)});
    if (chars > 0)
        for (int i = 0; i < texts; ++i)
            if (rng() % 2) a.dialog_links.push_back({i, "c" + std::to_string(rng() % std::uint64_t(chars))});
    return a;
}

std::set<std::string> codes(const PageAnnotation& a) {
    std::set<std::string> out;
    for (const auto& v : validate(a)) out.insert(v.code);
    return out;
}

}  // namespace

TEST_CASE("parse examples") {
    const auto a = parse_page_annotation(kOnePanel);
    CHECK(a.page_id == "p1");
    REQUIRE(a.panels.size() == 1);
    CHECK(a.panels[0].box == BBox{0, 0, 100, 80});
    CHECK(a.panel_boxes() == std::vector<BBox>{{0, 0, 100, 80}});

    const auto b = parse_page_annotation(R"(<page id="p" width="50" height="50">
      <character name="A" xmin="1" ymin="1" xmax="9" ymax="9"/>
      <text xmin="2" ymin="2" xmax="8" ymax="8">Hello &amp; bye</text>
      <link text_index="0" character="A"/>
    </page>)");
    REQUIRE(b.dialog_links.size() == 1);
    CHECK(b.dialog_links[0] == DialogLink{0, "A"});
    CHECK(b.texts[0].content == "Hello & bye");

    CHECK_THROWS_AS(parse_page_annotation(R"(<page id="p" width="50" height="50">
      <panel xmin="30" ymin="0" xmax="10" ymax="20"/></page>)"),
                    ValidationError);
}

TEST_CASE("parse errors") {
    CHECK_THROWS_AS(parse_page_annotation("<page id=\"p\" width=\"5\" height=\"5\">"), XmlParseError);
    try {
        parse_page_annotation("<page id=\"p\" width=\"5\" height=\"5\">\n  <panel xmin=\"0\"\n</page>");
        FAIL("expected a parse error");
    } catch (const XmlParseError& e) {
        CHECK(e.line >= 2);
    }
    // fractional coordinates are rejected, not rounded
    CHECK_THROWS_AS(parse_page_annotation(R"(<page id="p" width="50" height="50">
      <panel xmin="0.5" ymin="0" xmax="10" ymax="20"/></page>)"),
                    DataError);
    CHECK_THROWS_AS(parse_page_annotation(R"(<book/>)"), DataError);
    std::vector<std::string> warnings;
    parse_page_annotation(R"(<page id="p" width="5" height="5"><mystery/></page>)", &warnings);
    CHECK(warnings.size() == 1);
}

TEST_CASE("serialize round trips") {
    const auto a = parse_page_annotation(kOnePanel);
    CHECK(parse_page_annotation(serialize_page_annotation(a)) == a);

    PageAnnotation ordered;
    ordered.page_id = "o";
    ordered.width = ordered.height = 100;
    const int idx[] = {3, 1, 2, 0};
    for (int i = 0; i < 4; ++i) ordered.panels.push_back({{i * 20, 0, i * 20 + 10, 10}, idx[i], {}});
    const auto back = parse_page_annotation(serialize_page_annotation(ordered));
    CHECK(back == ordered);
    CHECK(*back.panels[0].order_index == 3);

    PageAnnotation empty;
    empty.page_id = "e";
    empty.width = empty.height = 10;
    const auto e = parse_page_annotation(serialize_page_annotation(empty));
    CHECK(e == empty);
    CHECK(e.panels.empty());
}

TEST_CASE("round trip property on random annotations") {
    std::mt19937_64 rng(99);
    for (int trial = 0; trial < 300; ++trial) {
        const auto a = random_annotation(rng);
        REQUIRE(validate(a).empty());
        CHECK(parse_page_annotation(serialize_page_annotation(a)) == a);
    }
}

TEST_CASE("each invariant has its own violation code") {
    PageAnnotation base;
    base.page_id = "v";
    base.width = base.height = 100;
    base.panels.push_back({{0, 0, 50, 50}, {}, {}});
    base.characters.push_back({"A", {0, 0, 10, 10}});
    base.texts.push_back({"t", {0, 0, 10, 10}});
    REQUIRE(validate(base).empty());

    std::vector<std::pair<std::string, PageAnnotation>> cases;
    auto add = [&](const std::string& code, auto mutate) {
        PageAnnotation a = base;
        mutate(a);
        cases.push_back({code, a});
    };
    add("page_extent_invalid", [](auto& a) { a.width = 0; });
    add("bbox_inverted_x", [](auto& a) { a.panels[0].box = {30, 0, 10, 20}; });
    add("bbox_inverted_y", [](auto& a) { a.characters[0].box = {0, 30, 10, 20}; });
    add("bbox_out_of_page", [](auto& a) { a.texts[0].box = {90, 0, 110, 10}; });
    add("order_negative", [](auto& a) { a.panels[0].order_index = -1; });
    add("order_partial", [](auto& a) {
        a.panels.push_back({{50, 50, 60, 60}, 0, {}});
    });
    add("order_not_permutation", [](auto& a) {
        a.panels[0].order_index = 0;
        a.panels.push_back({{50, 50, 60, 60}, 0, {}});
    });
    add("link_text_out_of_range", [](auto& a) { a.dialog_links.push_back({4, "A"}); });
    add("link_unknown_character", [](auto& a) { a.dialog_links.push_back({0, "Z"}); });

    std::set<std::string> all;
    for (const auto& [code, a] : cases) {
        CAPTURE(code);
        CHECK(codes(a).count(code) == 1);
        all.insert(code);
    }
    CHECK(all.size() == cases.size());
    CHECK_THROWS_AS(serialize_page_annotation(cases[1].second), ValidationError);
}

TEST_CASE("enriched XML nesting") {
    PageAnnotation a;
    a.page_id = "n";
    a.width = 100;
    a.height = 50;
    a.panels = {{{0, 0, 50, 50}, {}, {}}, {{50, 0, 100, 50}, {}, {}}};

    SUBCASE("character goes under the panel holding its centre") {
        a.characters = {{"A", {60, 10, 80, 30}}};
        const auto e = build_enriched_xml(a, {0, 1});
        REQUIRE(e.panels.size() == 2);
        CHECK(e.panels[0].characters.empty());
        REQUIRE(e.panels[1].characters.size() == 1);
        CHECK(e.panels[1].characters[0].name == "A");
        // reading order [1, 0] puts it first
        CHECK(build_enriched_xml(a, {1, 0}).panels[0].characters.size() == 1);
    }
    SUBCASE("no characters") {
        const auto e = build_enriched_xml(a, {1, 0});
        for (const auto& p : e.panels) {
            CHECK(p.characters.empty());
            CHECK(p.texts.empty());
        }
        CHECK(e.panels[0].source_index == 1);
    }
    SUBCASE("speaker outside the panel: text stays at panel level") {
        a.characters = {{"A", {60, 10, 80, 30}}};
        a.texts = {{"hello", {10, 10, 20, 20}}, {"yo", {62, 12, 70, 20}}};
        a.dialog_links = {{0, "A"}, {1, "A"}};
        const auto e = build_enriched_xml(a, {0, 1});
        REQUIRE(e.panels[0].texts.size() == 1);
        CHECK(e.panels[0].texts[0].content == "hello");
        REQUIRE(e.panels[1].characters[0].texts.size() == 1);
        CHECK(e.panels[1].characters[0].texts[0].content == "yo");
        const std::string x = e.to_xml();
        CHECK(x.find("hello") != std::string::npos);
        const auto root = xml::parse(x);
        CHECK(root.children.size() == 2);
    }
    SUBCASE("items outside every panel are unassigned") {
        PageAnnotation b = a;
        b.width = 200;
        b.characters = {{"B", {150, 0, 190, 40}}};
        b.texts = {{"far", {150, 0, 160, 10}}};
        const auto e = build_enriched_xml(b, {0, 1});
        CHECK(e.unassigned_characters.size() == 1);
        CHECK(e.unassigned_texts.size() == 1);
        CHECK(e.to_xml().find("<unassigned>") != std::string::npos);
    }
    SUBCASE("bad order") {
        CHECK_THROWS_AS(build_enriched_xml(a, {0, 0}), DataError);
        CHECK_THROWS_AS(build_enriched_xml(a, {0}), DataError);
    }
}

TEST_CASE("enriched XML accounts for every item exactly once") {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 200; ++trial) {
        auto a = random_annotation(rng);
        if (a.panels.empty()) continue;
        std::vector<int> order(a.panels.size());
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), rng);
        const auto e = build_enriched_xml(a, order);
        CHECK(e.panels.size() == a.panels.size());
        std::multiset<int> chars, texts;
        for (const auto& p : e.panels) {
            for (const auto& c : p.characters) {
                chars.insert(c.source_index);
                for (const auto& t : c.texts) texts.insert(t.source_index);
            }
            for (const auto& t : p.texts) texts.insert(t.source_index);
        }
        for (const auto& c : e.unassigned_characters) chars.insert(c.source_index);
        for (const auto& t : e.unassigned_texts) texts.insert(t.source_index);
        CHECK(chars.size() == a.characters.size());
        CHECK(std::set<int>(chars.begin(), chars.end()).size() == a.characters.size());
        CHECK(texts.size() == a.texts.size());
        CHECK(std::set<int>(texts.begin(), texts.end()).size() == a.texts.size());
    }
}

TEST_CASE("owning panel tie-break by overlap") {
    const std::vector<BBox> panels = {{0, 0, 50, 50}, {40, 0, 100, 50}};
    CHECK(owning_panel({42, 10, 48, 20}, panels) == 0);  // centre in both; equal areas keep the first
    CHECK(owning_panel({32, 10, 62, 20}, panels) == 1);  // centre 47 in both; more overlap with 1
    CHECK(!owning_panel({200, 200, 210, 210}, panels));
    CHECK(is_permutation_of_range({2, 0, 1}, 3));
    CHECK(!is_permutation_of_range({2, 0, 2}, 3));
}
