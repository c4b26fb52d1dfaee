#pragma once

#include "manga/annotation.hpp"
#include "manga/image.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace manga {

/// A generated page with its flat annotation and speech-bubble boxes.
struct SyntheticPage {
    Image image;
    PageAnnotation annotation;
    std::vector<BBox> bubbles;
};

struct SyntheticOptions {
    int width = 48;
    int height = 64;
    int max_panels = 4;
    double wordless_probability = 0.15;
};

/// Page `index` of the corpus for `seed`: 1..max_panels panels laid out in
/// rows, each holding one tinted shape. Most panels carry a bubble whose
/// text names the shape and tone ("dark circle"), linked to the panel's
/// character, so captions describe content. Pixel values lie on the 8-bit
/// grid, making PNG round trips exact.
SyntheticPage synthesize_page(std::uint64_t seed, int index, const SyntheticOptions& options = {});

/// Writes `count` pages as annotations/<id>.xml and images/<id>.png under
/// `dir`, plus bubbles/<id>.json holding the bubble boxes.
std::vector<SyntheticPage> write_synthetic_corpus(const std::filesystem::path& dir, int count, std::uint64_t seed,
                                                  const SyntheticOptions& options = {});

}  // namespace manga
