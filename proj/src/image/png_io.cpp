#include "bitstain/image/png_io.hpp"

#include <png.h>

#include <cstdio>
#include <memory>

namespace bitstain::image {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] void fail(const std::filesystem::path& path, const std::string& what) {
    throw IoError("png: " + what + ": " + path.string());
}

void write_png(const std::filesystem::path& path, int width, int height, int channels,
               int bit_depth, const png_bytep* rows) {
    FilePtr fp(std::fopen(path.string().c_str(), "wb"));
    if (!fp) fail(path, "cannot open for writing");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) fail(path, "png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        fail(path, "png_create_info_struct failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        fail(path, "write error");
    }
    png_init_io(png, fp.get());
    const int color = channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY;
    png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height),
                 bit_depth, color, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    if (bit_depth == 16) png_set_swap(png);  // buffers are little-endian in memory
    png_write_image(png, const_cast<png_bytep*>(rows));
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

}  // namespace

void write_png8(const std::filesystem::path& path, const Image8& img) {
    if (img.channels != 1 && img.channels != 3) {
        throw ValueError("write_png8: only 1- or 3-channel images supported");
    }
    if (img.empty()) throw ShapeError("write_png8: empty image");
    // interleave planar -> packed rows
    std::vector<std::uint8_t> packed(static_cast<std::size_t>(img.width) * img.height * img.channels);
    const std::size_t plane = img.plane_size();
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < img.channels; ++c)
                packed[(static_cast<std::size_t>(y) * img.width + x) * img.channels + c] =
                    img.data[static_cast<std::size_t>(c) * plane + static_cast<std::size_t>(y) * img.width + x];
    std::vector<png_bytep> rows(static_cast<std::size_t>(img.height));
    for (int y = 0; y < img.height; ++y)
        rows[static_cast<std::size_t>(y)] = packed.data() + static_cast<std::size_t>(y) * img.width * img.channels;
    write_png(path, img.width, img.height, img.channels, 8, rows.data());
}

void write_png16(const std::filesystem::path& path, const Image16& img) {
    if (img.channels != 1) throw ValueError("write_png16: only single-channel images supported");
    if (img.empty()) throw ShapeError("write_png16: empty image");
    std::vector<png_bytep> rows(static_cast<std::size_t>(img.height));
    for (int y = 0; y < img.height; ++y) {
        rows[static_cast<std::size_t>(y)] = reinterpret_cast<png_bytep>(
            const_cast<std::uint16_t*>(img.data.data() + static_cast<std::size_t>(y) * img.width));
    }
    write_png(path, img.width, img.height, 1, 16, rows.data());
}

AnyImage read_png(const std::filesystem::path& path) {
    FilePtr fp(std::fopen(path.string().c_str(), "rb"));
    if (!fp) fail(path, "cannot open");
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) fail(path, "png_create_read_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        fail(path, "png_create_info_struct failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        fail(path, "corrupt or unreadable PNG");
    }
    png_init_io(png, fp.get());
    png_read_info(png, info);
    const int width = static_cast<int>(png_get_image_width(png, info));
    const int height = static_cast<int>(png_get_image_height(png, info));
    const int depth = png_get_bit_depth(png, info);
    const int color = png_get_color_type(png, info);

    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    if (depth == 16) png_set_swap(png);
    png_read_update_info(png, info);

    const int out_channels = static_cast<int>(png_get_channels(png, info));
    const int out_depth = png_get_bit_depth(png, info);
    if (out_channels != 1 && out_channels != 3) {
        png_destroy_read_struct(&png, &info, nullptr);
        fail(path, "unsupported channel layout");
    }
    if (out_depth == 16 && out_channels != 1) {
        png_destroy_read_struct(&png, &info, nullptr);
        fail(path, "16-bit PNG must be single channel");
    }

    const std::size_t row_bytes = png_get_rowbytes(png, info);
    std::vector<std::uint8_t> packed(row_bytes * static_cast<std::size_t>(height));
    std::vector<png_bytep> rows(static_cast<std::size_t>(height));
    for (int y = 0; y < height; ++y) rows[static_cast<std::size_t>(y)] = packed.data() + row_bytes * static_cast<std::size_t>(y);
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    if (out_depth == 16) {
        Image16 img(width, height, 1);
        const auto* src = reinterpret_cast<const std::uint16_t*>(packed.data());
        std::copy_n(src, img.plane_size(), img.data.begin());
        return img;
    }
    Image8 img(width, height, out_channels);
    const std::size_t plane = img.plane_size();
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x)
            for (int c = 0; c < out_channels; ++c)
                img.data[static_cast<std::size_t>(c) * plane + static_cast<std::size_t>(y) * width + x] =
                    packed[static_cast<std::size_t>(y) * row_bytes + (static_cast<std::size_t>(x) * out_channels + c)];
    return img;
}

Image8 read_png8(const std::filesystem::path& path) {
    auto img = read_png(path);
    if (!std::holds_alternative<Image8>(img)) fail(path, "expected 8-bit image");
    return std::get<Image8>(std::move(img));
}

Image16 read_png16(const std::filesystem::path& path) {
    auto img = read_png(path);
    if (!std::holds_alternative<Image16>(img)) fail(path, "expected 16-bit image");
    return std::get<Image16>(std::move(img));
}

}  // namespace bitstain::image
