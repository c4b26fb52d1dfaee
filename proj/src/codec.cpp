#include "manga/codec.hpp"

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>

namespace manga {

LatentStack<float> AvgPoolCodec::encode(const std::vector<Image>& panels) const {
    if (panels.empty()) throw DataError("encode: no panels");
    const int H = panels[0].height(), W = panels[0].width();
    if (H % factor_ || W % factor_)
        throw ConfigError("encode: page " + std::to_string(W) + "x" + std::to_string(H) + " not divisible by " +
                          std::to_string(factor_));
    const int h = H / factor_, w = W / factor_;
    auto z = LatentStack<float>::zeros(int(panels.size()), channels_, h, w);
    const float inv = 1.0f / float(factor_ * factor_);
    for (int k = 0; k < int(panels.size()); ++k) {
        if (panels[k].height() != H || panels[k].width() != W) throw DataError("encode: panel sizes differ");
        const Plane g = panels[k].gray();
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const float m = g.block(y * factor_, x * factor_, factor_, factor_).sum() * inv;
                for (int c = 0; c < channels_; ++c) z(k, c, y, x) = m;
            }
    }
    return z;
}

std::vector<Image> AvgPoolCodec::decode(const LatentStack<float>& z) const {
    std::vector<Image> out;
    for (int k = 0; k < z.panels; ++k) {
        Image img(z.height * factor_, z.width * factor_);
        for (int y = 0; y < z.height; ++y)
            for (int x = 0; x < z.width; ++x) {
                float m = 0;
                for (int c = 0; c < z.channels; ++c) m += z(k, c, y, x);
                m = std::clamp(m / float(z.channels), 0.0f, 1.0f);
                for (auto& ch : img.channels) ch.block(y * factor_, x * factor_, factor_, factor_).setConstant(m);
            }
        out.push_back(std::move(img));
    }
    return out;
}

std::vector<std::string> HashTextEmbedder::tokenize(const std::string& caption) const {
    std::vector<std::string> out;
    std::istringstream is(caption);
    std::string tok;
    while (is >> tok && int(out.size()) < max_tokens_) out.push_back(tok);
    return out;
}

CaptionEmbedding<float> HashTextEmbedder::embed(const std::vector<std::string>& captions) const {
    CaptionEmbedding<float> e{max_tokens_, dim_, {}, MaskGrid::Constant(Eigen::Index(captions.size()), max_tokens_, false)};
    for (std::size_t k = 0; k < captions.size(); ++k) {
        Mat<float> m = Mat<float>::Zero(max_tokens_, dim_);
        const auto toks = tokenize(captions[k]);
        for (std::size_t i = 0; i < toks.size(); ++i) {
            // FNV-1a
            std::uint64_t h = 1469598103934665603ull;
            for (unsigned char c : toks[i]) h = (h ^ c) * 1099511628211ull;
            std::mt19937_64 rng(h);
            std::normal_distribution<float> nd(0.0f, 1.0f);
            for (int j = 0; j < dim_; ++j) {
                const int pair = j / 2;
                const double freq = std::pow(10000.0, -2.0 * pair / std::max(dim_, 2));
                const double pos = (j % 2 == 0) ? std::sin(double(i) * freq) : std::cos(double(i) * freq);
                m(Eigen::Index(i), j) = nd(rng) + 0.1f * float(pos);
            }
            e.valid(Eigen::Index(k), Eigen::Index(i)) = true;
        }
        e.tokens.push_back(std::move(m));
    }
    return e;
}

}  // namespace manga
