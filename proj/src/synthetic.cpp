#include "manga/synthetic.hpp"

#include "json.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <random>

namespace manga {

namespace {

constexpr std::array<const char*, 4> kShapes = {"circle", "square", "bars", "cross"};
constexpr std::array<const char*, 2> kTones = {"dark", "gray"};
constexpr std::array<float, 2> kToneValue = {0.1f, 0.5f};
constexpr std::array<const char*, 3> kNames = {"Aki", "Ben", "Chie"};

void fill_box(Image& img, const BBox& b, float v) {
    for (auto& c : img.channels) c.block(b.ymin, b.xmin, b.height(), b.width()) = v;
}

void draw_shape(Image& img, const BBox& b, int shape, float v) {
    const double cx = 0.5 * (b.xmin + b.xmax), cy = 0.5 * (b.ymin + b.ymax);
    const double r = 0.5 * std::min(b.width(), b.height());
    for (int y = b.ymin; y < b.ymax; ++y)
        for (int x = b.xmin; x < b.xmax; ++x) {
            const double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
            bool on = false;
            switch (shape) {
                case 0: on = dx * dx + dy * dy <= r * r; break;
                case 1: on = true; break;
                case 2: on = ((y - b.ymin) / 3) % 2 == 0; break;
                default: on = std::abs(dx) < 0.25 * r + 0.5 || std::abs(dy) < 0.25 * r + 0.5; break;
            }
            if (on)
                for (auto& c : img.channels) c(y, x) = v;
        }
}

// Splits [lo, hi) into n parts separated by `gutter`.
std::vector<std::pair<int, int>> split_span(int lo, int hi, int n, int gutter, std::mt19937_64& rng) {
    std::vector<std::pair<int, int>> out;
    if (n == 1) return {{lo, hi}};
    const int usable = hi - lo - gutter;
    std::uniform_int_distribution<int> jitter(-usable / 8, usable / 8);
    const int first = usable / 2 + jitter(rng);
    out.push_back({lo, lo + first});
    out.push_back({lo + first + gutter, hi});
    return out;
}

}  // namespace

SyntheticPage synthesize_page(std::uint64_t seed, int index, const SyntheticOptions& o) {
    std::mt19937_64 rng(seed * 0x9e3779b97f4a7c15ull + std::uint64_t(index) + 1);
    const int W = o.width, H = o.height;
    const int margin = std::max(1, W / 24), gutter = std::max(2, W / 16);

    std::uniform_int_distribution<int> pick_count(1, std::max(1, o.max_panels));
    const int count = pick_count(rng);
    // Rows of one or two panels each.
    std::vector<int> row_sizes;
    for (int left = count; left > 0;) {
        const int take = left >= 2 && (left > 2 || rng() % 2 == 0) ? 2 : 1;
        row_sizes.push_back(take);
        left -= take;
    }
    std::vector<BBox> boxes;
    const auto rows = split_span(margin, H - margin, int(std::min<std::size_t>(row_sizes.size(), 2)), gutter, rng);
    // More than two rows would be too thin; fold extra panels into the rows.
    while (row_sizes.size() > rows.size()) {
        row_sizes[0] += row_sizes.back();
        row_sizes.pop_back();
    }
    for (std::size_t r = 0; r < rows.size(); ++r) {
        std::vector<std::pair<int, int>> cols;
        if (row_sizes[r] <= 2) cols = split_span(margin, W - margin, row_sizes[r], gutter, rng);
        else {
            const int step = (W - 2 * margin - (row_sizes[r] - 1) * gutter) / row_sizes[r];
            for (int c = 0; c < row_sizes[r]; ++c) {
                const int x0 = margin + c * (step + gutter);
                cols.push_back({x0, c + 1 == row_sizes[r] ? W - margin : x0 + step});
            }
        }
        for (const auto& [x0, x1] : cols) boxes.push_back({x0, rows[r].first, x1, rows[r].second});
    }
    // Annotation order is shuffled so readers cannot rely on it.
    std::shuffle(boxes.begin(), boxes.end(), rng);

    SyntheticPage page;
    page.image = Image(H, W, 1.0f);
    auto& a = page.annotation;
    a.page_id = "syn" + std::to_string(seed) + "_" + std::to_string(index);
    a.width = W;
    a.height = H;

    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (std::size_t i = 0; i < boxes.size(); ++i) {
        const BBox& b = boxes[i];
        a.panels.push_back({b, std::nullopt, std::nullopt});
        fill_box(page.image, b, 0.0f);
        fill_box(page.image, {b.xmin + 1, b.ymin + 1, b.xmax - 1, b.ymax - 1}, 0.94f);

        const int shape = int(rng() % kShapes.size());
        const int tone = int(rng() % kTones.size());
        const int size = std::max(4, int(0.6 * std::min(b.width(), b.height())));
        std::uniform_int_distribution<int> px(b.xmin + 2, std::max(b.xmin + 2, b.xmax - 2 - size));
        std::uniform_int_distribution<int> py(b.ymin + 2, std::max(b.ymin + 2, b.ymax - 2 - size));
        const int sx = px(rng), sy = py(rng);
        const BBox sbox{sx, sy, std::min(sx + size, b.xmax - 2), std::min(sy + size, b.ymax - 2)};
        draw_shape(page.image, sbox, shape, kToneValue[std::size_t(tone)]);

        const std::string name = kNames[rng() % kNames.size()];
        a.characters.push_back({name, sbox});
        a.faces.push_back({name, {sbox.xmin, sbox.ymin, sbox.xmin + std::max(1, sbox.width() / 2),
                                  sbox.ymin + std::max(1, sbox.height() / 2)}});

        if (unit(rng) < o.wordless_probability) continue;
        // Bubble in a corner of the panel, sized to sometimes dominate a token cell.
        std::uniform_int_distribution<int> bw(std::max(4, b.width() / 3), std::max(5, b.width() * 2 / 3));
        std::uniform_int_distribution<int> bh(std::max(4, b.height() / 4), std::max(5, b.height() / 2));
        const int w = std::min(bw(rng), b.width() - 2), h = std::min(bh(rng), b.height() - 2);
        const bool right = rng() % 2 == 0;
        const int x0 = right ? b.xmax - 1 - w : b.xmin + 1;
        const BBox bubble{x0, b.ymin + 1, x0 + w, b.ymin + 1 + h};
        fill_box(page.image, bubble, 0.0f);
        if (bubble.width() > 2 && bubble.height() > 2)
            fill_box(page.image, {bubble.xmin + 1, bubble.ymin + 1, bubble.xmax - 1, bubble.ymax - 1}, 1.0f);
        page.bubbles.push_back(bubble);
        a.texts.push_back({std::string(kTones[std::size_t(tone)]) + " " + kShapes[std::size_t(shape)], bubble});
        a.dialog_links.push_back({int(a.texts.size()) - 1, name});
    }
    page.image = quantize8(page.image);
    return page;
}

std::vector<SyntheticPage> write_synthetic_corpus(const std::filesystem::path& dir, int count, std::uint64_t seed,
                                                  const SyntheticOptions& options) {
    namespace fs = std::filesystem;
    fs::create_directories(dir / "annotations");
    fs::create_directories(dir / "images");
    fs::create_directories(dir / "bubbles");
    std::vector<SyntheticPage> pages;
    for (int i = 0; i < count; ++i) {
        SyntheticPage p = synthesize_page(seed, i, options);
        const std::string& id = p.annotation.page_id;
        std::ofstream(dir / "annotations" / (id + ".xml")) << serialize_page_annotation(p.annotation);
        write_png(p.image, dir / "images" / (id + ".png"));
        nlohmann::json boxes = nlohmann::json::array();
        for (const auto& b : p.bubbles) boxes.push_back({b.xmin, b.ymin, b.xmax, b.ymax});
        std::ofstream(dir / "bubbles" / (id + ".json")) << boxes.dump() << '\n';
        pages.push_back(std::move(p));
    }
    return pages;
}

}  // namespace manga
