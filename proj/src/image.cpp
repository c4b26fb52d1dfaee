#include "manga/image.hpp"

#include "manga/error.hpp"

#include <png.h>

#include <cmath>
#include <fstream>

namespace manga {

namespace {

unsigned char to_byte(float v) {
    float c = std::clamp(v, 0.0f, 1.0f);
    return static_cast<unsigned char>(std::lround(c * 255.0f));
}

std::vector<unsigned char> interleave(const Image& img) {
    const int h = img.height(), w = img.width();
    std::vector<unsigned char> buf(std::size_t(h) * w * 3);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c) buf[(std::size_t(y) * w + x) * 3 + c] = to_byte(img.channels[c](y, x));
    return buf;
}

}  // namespace

Image quantize8(const Image& img) {
    Image out = img;
    for (auto& c : out.channels) c = c.unaryExpr([](float v) { return float(to_byte(v)) / 255.0f; });
    return out;
}

Image read_png(const std::filesystem::path& path) {
    png_image im{};
    im.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&im, path.string().c_str()))
        throw DataError("cannot read PNG '" + path.string() + "': " + im.message);
    im.format = PNG_FORMAT_RGB;
    std::vector<unsigned char> buf(PNG_IMAGE_SIZE(im));
    if (!png_image_finish_read(&im, nullptr, buf.data(), 0, nullptr)) {
        std::string msg = im.message;
        png_image_free(&im);
        throw DataError("cannot decode PNG '" + path.string() + "': " + msg);
    }
    const int h = int(im.height), w = int(im.width);
    Image img(h, w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c) img.channels[c](y, x) = float(buf[(std::size_t(y) * w + x) * 3 + c]) / 255.0f;
    return img;
}

std::vector<unsigned char> encode_png(const Image& img) {
    png_image im{};
    im.version = PNG_IMAGE_VERSION;
    im.width = png_uint_32(img.width());
    im.height = png_uint_32(img.height());
    im.format = PNG_FORMAT_RGB;
    auto pixels = interleave(img);
    png_alloc_size_t size = 0;
    if (!png_image_write_to_memory(&im, nullptr, &size, 0, pixels.data(), 0, nullptr))
        throw RuntimeError(std::string("PNG encode failed: ") + im.message);
    std::vector<unsigned char> out(size);
    if (!png_image_write_to_memory(&im, out.data(), &size, 0, pixels.data(), 0, nullptr))
        throw RuntimeError(std::string("PNG encode failed: ") + im.message);
    out.resize(size);
    return out;
}

void write_png(const Image& img, const std::filesystem::path& path) {
    auto bytes = encode_png(img);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw RuntimeError("cannot open '" + path.string() + "' for writing");
    f.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
    if (!f) throw RuntimeError("short write to '" + path.string() + "'");
}

}  // namespace manga
