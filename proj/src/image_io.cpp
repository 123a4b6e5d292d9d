#include "sketchgen/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <vector>

#include "sketchgen/errors.hpp"

namespace sketchgen::io {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

} // namespace

TensorF read_png_gray(const std::filesystem::path& path) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw DataError("cannot open image file: " + path.string());

    png_byte header[8];
    if (std::fread(header, 1, 8, fp.get()) != 8 || png_sig_cmp(header, 0, 8))
        throw DataError("not a PNG file: " + path.string());

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw DataError("libpng init failed reading " + path.string());
    }
    std::vector<png_bytep> row_ptrs;
    std::vector<png_byte> pixels;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw DataError("corrupt PNG: " + path.string());
    }
    png_init_io(png, fp.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);

    // Normalize any input to 8-bit single-channel.
    png_set_strip_16(png);
    png_set_strip_alpha(png);
    const png_byte color = png_get_color_type(png, info);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color & PNG_COLOR_MASK_COLOR) png_set_rgb_to_gray(png, 1, -1, -1);
    if (png_get_bit_depth(png, info) < 8) png_set_expand_gray_1_2_4_to_8(png);
    png_read_update_info(png, info);

    const png_uint_32 h = png_get_image_height(png, info);
    const png_uint_32 w = png_get_image_width(png, info);
    const size_t rowbytes = png_get_rowbytes(png, info);
    pixels.resize(rowbytes * h);
    row_ptrs.resize(h);
    for (png_uint_32 y = 0; y < h; ++y) row_ptrs[y] = pixels.data() + y * rowbytes;
    png_read_image(png, row_ptrs.data());
    png_destroy_read_struct(&png, &info, nullptr);

    TensorF out({static_cast<int64_t>(h), static_cast<int64_t>(w)});
    for (png_uint_32 y = 0; y < h; ++y)
        for (png_uint_32 x = 0; x < w; ++x)
            out.at(y, x) = static_cast<float>(pixels[y * rowbytes + x]) / 255.0f;
    return out;
}

void write_png_gray(const std::filesystem::path& path, const TensorF& image) {
    if (image.rank() != 2) throw DataError("write_png_gray expects a [H,W] tensor");
    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw DataError("cannot create image file: " + path.string());

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw DataError("libpng init failed writing " + path.string());
    }
    const int64_t h = image.dim(0), w = image.dim(1);
    std::vector<png_byte> row(static_cast<size_t>(w));
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw DataError("PNG write failed: " + path.string());
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8,
                 PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int64_t y = 0; y < h; ++y) {
        for (int64_t x = 0; x < w; ++x) {
            const float v = std::clamp(image.at(y, x), 0.0f, 1.0f);
            row[static_cast<size_t>(x)] = static_cast<png_byte>(std::lround(v * 255.0f));
        }
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

TensorF resize_nearest(const TensorF& image, int64_t out_h, int64_t out_w) {
    const int64_t h = image.dim(0), w = image.dim(1);
    if (h == out_h && w == out_w) return image;
    TensorF out({out_h, out_w});
    for (int64_t y = 0; y < out_h; ++y) {
        const int64_t sy = std::min(h - 1, y * h / out_h);
        for (int64_t x = 0; x < out_w; ++x) {
            const int64_t sx = std::min(w - 1, x * w / out_w);
            out.at(y, x) = image.at(sy, sx);
        }
    }
    return out;
}

} // namespace sketchgen::io
