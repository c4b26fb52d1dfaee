#pragma once

#include "manga/bbox.hpp"
#include "manga/image.hpp"

#include <vector>

namespace manga {

/// K full-page images, each white outside its source box.
struct PanelImageStack {
    std::vector<Image> images;
    std::vector<BBox> boxes;

    std::size_t size() const { return images.size(); }
};

/// stack[i] is `page` inside boxes[i] and 1.0 elsewhere.
PanelImageStack split_page(const Image& page, const std::vector<BBox>& boxes);

/// Pixel-wise minimum over the stack, per channel.
Image compose_page(const PanelImageStack& stack);
Image compose_page(const std::vector<Image>& images);

/// `page` with every pixel outside the union of `boxes` set to white.
Image whiten_outside(const Image& page, const std::vector<BBox>& boxes);

}  // namespace manga
