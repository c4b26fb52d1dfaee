#include "manga/panelization.hpp"

#include "manga/error.hpp"

#include <sstream>

namespace manga {

namespace {

void check_inside(const Image& page, const BBox& b, std::size_t i) {
    if (!b.valid() || !b.inside(page.width(), page.height())) {
        std::ostringstream os;
        os << "panel box " << i << " " << b << " is degenerate or outside the " << page.width() << "x"
           << page.height() << " page";
        throw DataError(os.str());
    }
}

}  // namespace

PanelImageStack split_page(const Image& page, const std::vector<BBox>& boxes) {
    PanelImageStack stack;
    stack.boxes = boxes;
    stack.images.reserve(boxes.size());
    for (std::size_t i = 0; i < boxes.size(); ++i) {
        const auto& b = boxes[i];
        check_inside(page, b, i);
        Image panel(page.height(), page.width(), 1.0f);
        for (int c = 0; c < 3; ++c)
            panel.channels[c].block(b.ymin, b.xmin, b.height(), b.width()) =
                page.channels[c].block(b.ymin, b.xmin, b.height(), b.width());
        stack.images.push_back(std::move(panel));
    }
    return stack;
}

Image compose_page(const std::vector<Image>& images) {
    if (images.empty()) throw DataError("compose_page: empty panel stack");
    Image out = images.front();
    for (std::size_t k = 1; k < images.size(); ++k) {
        if (!images[k].same_size(out))
            throw DataError("compose_page: panel " + std::to_string(k) + " has mismatched dimensions");
        for (int c = 0; c < 3; ++c) out.channels[c] = out.channels[c].min(images[k].channels[c]);
    }
    return out;
}

Image compose_page(const PanelImageStack& stack) { return compose_page(stack.images); }

Image whiten_outside(const Image& page, const std::vector<BBox>& boxes) {
    Image out(page.height(), page.width(), 1.0f);
    for (std::size_t i = 0; i < boxes.size(); ++i) {
        const auto& b = boxes[i];
        check_inside(page, b, i);
        for (int c = 0; c < 3; ++c)
            out.channels[c].block(b.ymin, b.xmin, b.height(), b.width()) =
                page.channels[c].block(b.ymin, b.xmin, b.height(), b.width());
    }
    return out;
}

}  // namespace manga
