#include "doctest.h"

#include "manga/dataset.hpp"
#include "manga/error.hpp"
#include "manga/panelization.hpp"
#include "manga/pipeline.hpp"
#include "manga/synthetic.hpp"
#include "support/mask_oracle.hpp"

#include <filesystem>
#include <random>

using namespace manga;
namespace fs = std::filesystem;

namespace {

PageAnnotation two_rows() {
    PageAnnotation a;
    a.page_id = "two";
    a.width = 48;
    a.height = 64;
    a.panels = {{{0, 0, 48, 32}, {}, {}}, {{0, 32, 48, 64}, {}, {}}};
    a.texts = {{"hello there", {4, 4, 20, 12}}};
    return a;
}

struct FlakyClient : CaptioningClient {
    int failures = 0;
    int calls = 0;
    std::size_t drop = 0;
    MockCaptioningClient inner;
    CaptionResult request(const Image& p, const std::string& x, const std::string& prompt) override {
        if (calls++ < failures) throw TransportError("timed out");
        auto r = inner.request(p, x, prompt);
        r.panel_captions.resize(r.panel_captions.size() - drop);
        return r;
    }
};

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("manga_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

}  // namespace

TEST_CASE("rasterize_bubble_mask") {
    SUBCASE("exactly one cell") {
        const auto m = rasterize_bubble_mask({{16, 16, 32, 32}}, 48, 64, 16, 0.5);
        REQUIRE(m.rows() == 4);
        REQUIRE(m.cols() == 3);
        CHECK(m.count() == 1);
        CHECK(m(1, 1));
    }
    SUBCASE("quarter coverage stays unmasked, exactly half too") {
        CHECK(!rasterize_bubble_mask({{0, 0, 8, 8}}, 16, 16, 16, 0.5).any());
        CHECK(!rasterize_bubble_mask({{0, 0, 8, 16}}, 16, 16, 16, 0.5).any());
        CHECK(rasterize_bubble_mask({{0, 0, 9, 16}}, 16, 16, 16, 0.5).all());
    }
    SUBCASE("overlapping boxes count their union once") {
        // two 8x16 halves overlapping by 4 columns cover 12 of 16 columns
        CHECK(rasterize_bubble_mask({{0, 0, 8, 16}, {4, 0, 12, 16}}, 16, 16, 16, 0.5).all());
        CHECK(!rasterize_bubble_mask({{0, 0, 8, 16}, {0, 0, 8, 16}}, 16, 16, 16, 0.5).any());
    }
    SUBCASE("no boxes") { CHECK(!rasterize_bubble_mask({}, 48, 64).any()); }
    SUBCASE("stride must divide the page") { CHECK_THROWS_AS(rasterize_bubble_mask({}, 50, 64, 16), ConfigError); }
}

TEST_CASE("mask agrees with a pixel count on random boxes") {
    std::mt19937_64 rng(31);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<BBox> b;
        const int n = std::uniform_int_distribution<int>(0, 4)(rng);
        for (int i = 0; i < n; ++i) {
            const int x0 = std::uniform_int_distribution<int>(0, 40)(rng), y0 = std::uniform_int_distribution<int>(0, 56)(rng);
            b.push_back({x0, y0, std::uniform_int_distribution<int>(x0 + 1, 48)(rng),
                         std::uniform_int_distribution<int>(y0 + 1, 64)(rng)});
        }
        const double thr = std::uniform_real_distribution<double>(0.05, 0.95)(rng);
        const auto got = rasterize_bubble_mask(b, 48, 64, 8, thr);
        CHECK((got == testing::pixel_mask(b, {0, 0, 48, 64}, 48, 64, 8, thr)).all());
    }
}

TEST_CASE("two panels padded to four") {
    MockCaptioningClient client;
    const Image page(64, 48, 0.3f);
    const auto pb = build_page(page, two_rows(), {{0, 0, 48, 32}}, client, RecordOptions{4, 16, 0.5}, 3);
    const auto& r = pb.record;
    CHECK(r.num_panels == 2);
    CHECK(r.inter_mask == std::vector<bool>{false, false, true, true});
    CHECK(r.captions == std::vector<std::string>{"hello there", kWordlessCaption, "EMPTY", "EMPTY"});
    CHECK(pb.manifest.story == "hello there a wordless panel");
    CHECK(r.boxes[2].is_sentinel());
    CHECK(check_record(r).empty());

    // the bubble fills panel 0 and is clipped away from panel 1
    CHECK(r.intra_mask[0].topRows(2).all());
    CHECK(!r.intra_mask[0].bottomRows(2).any());
    CHECK(!r.intra_mask[1].any());

    std::vector<Image> real(r.panel_images.begin(), r.panel_images.begin() + 2);
    CHECK(compose_page(real) == whiten_outside(page, two_rows().panel_boxes()));
    CHECK(compose_page(r.panel_images) == page);
}

TEST_CASE("build_record errors") {
    const auto a = two_rows();
    const Image page(64, 48, 0.3f);
    const auto order = order_panels(a.panel_boxes(), 48, 64);
    const CaptionResult two{{"a", "b"}, "a b"};
    CHECK_THROWS_AS(build_record(page, a, order, two, {}, RecordOptions{1, 16, 0.5}), DataError);
    CHECK_THROWS_AS(build_record(page, a, order, CaptionResult{{"a"}, "a"}, {}, RecordOptions{}), DataError);
    CHECK_THROWS_AS(build_record(Image(60, 48), a, order, two, {}, RecordOptions{}), DataError);
    OrderResult bad = order;
    bad.permutation = {0, 0};
    CHECK_THROWS_AS(build_record(page, a, bad, two, {}, RecordOptions{}), DataError);
    PageAnnotation empty = a;
    empty.panels.clear();
    CHECK_THROWS(build_record(page, empty, order, two, {}, RecordOptions{}));
}

TEST_CASE("captioning client contract") {
    const auto a = two_rows();
    const auto enriched = build_enriched_xml(a, {0, 1});
    const Image page(64, 48, 1.0f);
    SUBCASE("retries transport failures") {
        FlakyClient c;
        c.failures = 2;
        CHECK(request_captions(c, page, enriched, 3).panel_captions.size() == 2);
        CHECK(c.calls == 3);
        FlakyClient d;
        d.failures = 3;
        CHECK_THROWS_AS(request_captions(d, page, enriched, 3), TransportError);
    }
    SUBCASE("caption count must match") {
        FlakyClient c;
        c.drop = 1;
        CHECK_THROWS_AS(request_captions(c, page, enriched, 3), ProtocolError);
        CHECK(c.calls == 1);
    }
    SUBCASE("mock client is pure") {
        MockCaptioningClient m;
        const auto x = m.request(page, enriched.to_xml(), "p");
        CHECK(x.panel_captions == m.request(Image(64, 48, 0.0f), enriched.to_xml(), "q").panel_captions);
    }
}

TEST_CASE("synthetic pages match the pixel oracle") {
    MockCaptioningClient client;
    const RecordOptions o{4, 16, 0.5};
    for (int i = 0; i < 20; ++i) {
        const auto sp = synthesize_page(3, i);
        const auto pb = build_page(sp.image, sp.annotation, sp.bubbles, client, o, 3);
        CHECK(testing::record_problems(sp, pb.record, o).empty());
    }
}

TEST_CASE("records and manifest round trip") {
    MockCaptioningClient client;
    const RecordOptions o{4, 16, 0.5};
    std::vector<TrainingRecord> records;
    std::vector<ManifestEntry> manifest;
    for (int i = 0; i < 6; ++i) {
        const auto sp = synthesize_page(9, i);
        auto pb = build_page(sp.image, sp.annotation, sp.bubbles, client, o, 3);
        pb.manifest.image_path = "images/" + sp.annotation.page_id + ".png";
        records.push_back(pb.record);
        manifest.push_back(pb.manifest);
    }
    const fs::path dir = scratch("records");
    write_records(dir, records);
    write_manifest(dir / "manifest.jsonl", manifest);
    const auto back = read_records(dir);
    REQUIRE(back.size() == records.size());
    for (std::size_t i = 0; i < back.size(); ++i) {
        CHECK(back[i].page_id == records[i].page_id);
        CHECK(back[i].num_panels == records[i].num_panels);
        CHECK(back[i].captions == records[i].captions);
        CHECK(back[i].inter_mask == records[i].inter_mask);
        CHECK(back[i].boxes == records[i].boxes);
        for (int k = 0; k < records[i].k_max(); ++k) {
            CHECK(back[i].panel_images[std::size_t(k)] == records[i].panel_images[std::size_t(k)]);
            CHECK((back[i].intra_mask[std::size_t(k)] == records[i].intra_mask[std::size_t(k)]).all());
        }
    }
    CHECK(read_manifest(dir / "manifest.jsonl") == manifest);
    CHECK_THROWS_AS(read_records(dir / "missing"), DataError);
    fs::remove_all(dir);
}

TEST_CASE("build_dataset over a synthetic corpus") {
    const fs::path dir = scratch("corpus");
    write_synthetic_corpus(dir / "src", 5, 4);
    MockCaptioningClient client;
    const auto pages = build_dataset({dir / "src" / "annotations", dir / "src" / "images", dir / "out",
                                      dir / "src" / "bubbles"},
                                     client, RecordOptions{4, 16, 0.5}, 3);
    CHECK(pages.size() == 5);
    CHECK(read_records(dir / "out").size() == 5);
    CHECK(read_manifest(dir / "out" / "manifest.jsonl").size() == 5);
    CHECK(fs::exists(dir / "out" / "enriched"));
    CHECK_THROWS_AS(build_dataset({dir / "nothing", dir / "src" / "images", dir / "out2", {}}, client, RecordOptions{}, 3),
                    DataError);
    fs::remove_all(dir);
}
