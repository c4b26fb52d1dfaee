#pragma once

#include "manga/image.hpp"
#include "manga/tensor.hpp"

#include <string>
#include <vector>

namespace manga {

/// Maps full-page panel images to 4-channel latents at 1/8 resolution and back.
class ImageCodec {
public:
    virtual ~ImageCodec() = default;
    virtual LatentStack<float> encode(const std::vector<Image>& panels) const = 0;
    /// Decoded images are clamped to [0,1].
    virtual std::vector<Image> decode(const LatentStack<float>& latents) const = 0;
    virtual int downsample() const { return 8; }
    virtual int channels() const { return 4; }
};

/// Stand-in codec: 8x8 average pool of the gray level, replicated to every
/// latent channel; decoding upsamples the channel mean by nearest neighbour.
class AvgPoolCodec final : public ImageCodec {
public:
    explicit AvgPoolCodec(int factor = 8, int channels = 4) : factor_(factor), channels_(channels) {}
    LatentStack<float> encode(const std::vector<Image>& panels) const override;
    std::vector<Image> decode(const LatentStack<float>& latents) const override;
    int downsample() const override { return factor_; }
    int channels() const override { return channels_; }

private:
    int factor_;
    int channels_;
};

class TextEmbedder {
public:
    virtual ~TextEmbedder() = default;
    virtual CaptionEmbedding<float> embed(const std::vector<std::string>& captions) const = 0;
    virtual int dim() const = 0;
    virtual int max_tokens() const = 0;
};

/// Deterministic stand-in: whitespace tokens hashed into fixed Gaussian
/// vectors plus a sinusoidal position term. Long captions are truncated.
class HashTextEmbedder final : public TextEmbedder {
public:
    HashTextEmbedder(int dim, int max_tokens) : dim_(dim), max_tokens_(max_tokens) {}
    CaptionEmbedding<float> embed(const std::vector<std::string>& captions) const override;
    int dim() const override { return dim_; }
    int max_tokens() const override { return max_tokens_; }

    std::vector<std::string> tokenize(const std::string& caption) const;

private:
    int dim_;
    int max_tokens_;
};

}  // namespace manga
