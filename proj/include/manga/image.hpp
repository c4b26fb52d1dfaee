#pragma once

#include "manga/bbox.hpp"

#include <Eigen/Core>

#include <array>
#include <filesystem>
#include <vector>

namespace manga {

using Plane = Eigen::Array<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// H x W x 3 intensities in [0,1]; white is 1.0.
struct Image {
    std::array<Plane, 3> channels;

    Image() = default;
    Image(int height, int width, float fill = 1.0f) {
        for (auto& c : channels) c = Plane::Constant(height, width, fill);
    }

    int height() const { return int(channels[0].rows()); }
    int width() const { return int(channels[0].cols()); }
    bool same_size(const Image& o) const { return height() == o.height() && width() == o.width(); }

    /// Per-pixel channel mean.
    Plane gray() const { return (channels[0] + channels[1] + channels[2]) / 3.0f; }

    void clamp() {
        for (auto& c : channels) c = c.max(0.0f).min(1.0f);
    }

    friend bool operator==(const Image& a, const Image& b) {
        if (!a.same_size(b)) return false;
        for (int c = 0; c < 3; ++c)
            if (!(a.channels[c] == b.channels[c]).all()) return false;
        return true;
    }
};

/// 8-bit RGB PNG; intensities map linearly, v -> round(255 v).
Image read_png(const std::filesystem::path& path);
void write_png(const Image& img, const std::filesystem::path& path);
std::vector<unsigned char> encode_png(const Image& img);

/// Quantizes to the 8-bit grid so that write/read round trips are exact.
Image quantize8(const Image& img);

}  // namespace manga
