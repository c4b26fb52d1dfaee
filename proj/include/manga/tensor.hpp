#pragma once

#include "manga/error.hpp"

#include <Eigen/Core>

#include <string>
#include <vector>

namespace manga {

template <class Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class Scalar>
using RowVec = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;
template <class Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using MaskGrid = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MaskVec = Eigen::Array<bool, Eigen::Dynamic, 1>;

/// K x C x h x w latent values, stored flat in that order.
template <class Scalar>
struct LatentStack {
    int panels = 0;
    int channels = 0;
    int height = 0;
    int width = 0;
    Vec<Scalar> values;

    static LatentStack zeros(int k, int c, int h, int w) {
        LatentStack s{k, c, h, w, Vec<Scalar>::Zero(Eigen::Index(k) * c * h * w)};
        return s;
    }

    Eigen::Index index(int k, int c, int y, int x) const {
        return ((Eigen::Index(k) * channels + c) * height + y) * width + x;
    }
    Scalar& operator()(int k, int c, int y, int x) { return values[index(k, c, y, x)]; }
    Scalar operator()(int k, int c, int y, int x) const { return values[index(k, c, y, x)]; }

    Eigen::Index panel_size() const { return Eigen::Index(channels) * height * width; }
    auto panel(int k) { return values.segment(k * panel_size(), panel_size()); }
    auto panel(int k) const { return values.segment(k * panel_size(), panel_size()); }

    bool same_shape(const LatentStack& o) const {
        return panels == o.panels && channels == o.channels && height == o.height && width == o.width;
    }

    template <class Other>
    LatentStack<Other> cast() const {
        return {panels, channels, height, width, values.template cast<Other>()};
    }
};

/// Intra-panel mask over tokens (true = excluded) and inter-panel mask over
/// panels (true = padding).
struct MaskSet {
    MaskGrid intra;  ///< K x n
    MaskVec inter;   ///< K

    static MaskSet none(int k, int n) {
        return {MaskGrid::Constant(k, n, false), MaskVec::Constant(k, false)};
    }
    int panels() const { return int(inter.size()); }
    int tokens() const { return int(intra.cols()); }
};

/// Per-panel caption token embeddings with validity flags.
template <class Scalar>
struct CaptionEmbedding {
    int max_tokens = 0;
    int dim = 0;
    std::vector<Mat<Scalar>> tokens;  ///< K entries of max_tokens x dim
    MaskGrid valid;                   ///< K x max_tokens

    int panels() const { return int(tokens.size()); }

    /// The valid rows of panel k, in order.
    Mat<Scalar> valid_tokens(int k) const {
        const int n = int(valid.row(k).count());
        Mat<Scalar> out(n, dim);
        int r = 0;
        for (int i = 0; i < max_tokens; ++i)
            if (valid(k, i)) out.row(r++) = tokens[k].row(i);
        return out;
    }

    template <class Other>
    CaptionEmbedding<Other> cast() const {
        CaptionEmbedding<Other> out{max_tokens, dim, {}, valid};
        for (const auto& t : tokens) out.tokens.push_back(t.template cast<Other>());
        return out;
    }
};

}  // namespace manga
