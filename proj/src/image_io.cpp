// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the kanmatch Project.

#include "kanmatch/image_io.hpp"

#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include <png.h>

#include "kanmatch/error.hpp"

namespace kanmatch
{

namespace
{

struct FileCloser
{
    void operator()(std::FILE* f) const noexcept { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

struct PngError
{
    std::string message;
};

void on_error(png_structp png, png_const_charp msg)
{
    auto* err = static_cast<PngError*>(png_get_error_ptr(png));
    err->message = msg ? msg : "unknown libpng error";
    png_longjmp(png, 1);
}

void on_warning(png_structp, png_const_charp) {}

} // namespace

ImageBuf read_png(const std::filesystem::path& path, ColorSpace cs)
{
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp)
        throw IoError("cannot open '" + path.string() + "'");

    unsigned char sig[8];
    if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0)
        throw FormatError("'" + path.string() + "' is not a PNG file");

    PngError err;
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &err, on_error, on_warning);
    if (!png)
        throw FormatError("libpng initialisation failed");
    png_infop info = png_create_info_struct(png);
    if (!info)
    {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw FormatError("libpng initialisation failed");
    }

    // Buffers live on the heap: locals modified after setjmp are
    // indeterminate once libpng longjmps back.
    struct Buffers
    {
        std::vector<unsigned char> pixels;
        std::vector<png_bytep> rows;
    };
    const auto buf = std::make_unique<Buffers>();
    auto& pixels = buf->pixels;
    auto& rows = buf->rows;
    if (setjmp(png_jmpbuf(png)))
    {
        png_destroy_read_struct(&png, &info, nullptr);
        throw FormatError("corrupt PNG '" + path.string() + "': " + err.message);
    }

    png_init_io(png, fp.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);

    const int color = png_get_color_type(png, info);
    const png_uint_32 width = png_get_image_width(png, info);
    const png_uint_32 height = png_get_image_height(png, info);
    int depth = png_get_bit_depth(png, info);

    if (color == PNG_COLOR_TYPE_PALETTE)
        png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8)
        png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS))
        png_set_tRNS_to_alpha(png);
    if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA)
        png_set_gray_to_rgb(png);
    png_set_strip_alpha(png);
    if (depth == 16)
        png_set_swap(png); // native little-endian 16-bit samples on read
    png_read_update_info(png, info);

    depth = png_get_bit_depth(png, info);
    const std::size_t rowbytes = png_get_rowbytes(png, info);
    if (png_get_channels(png, info) != 3 || (depth != 8 && depth != 16))
    {
        png_destroy_read_struct(&png, &info, nullptr);
        throw FormatError("unsupported PNG layout in '" + path.string() + "'");
    }
    pixels.resize(rowbytes * height);
    rows.resize(height);
    for (png_uint_32 y = 0; y < height; ++y)
        rows[y] = pixels.data() + y * rowbytes;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    ImageBuf img(height, width, cs);
    auto out = img.data();
    if (depth == 8)
    {
        for (std::size_t k = 0; k < out.size(); ++k)
            out[k] = pixels[k] / 255.0;
    }
    else
    {
        for (std::size_t k = 0; k < out.size(); ++k)
        {
            const unsigned v = pixels[2 * k] | (static_cast<unsigned>(pixels[2 * k + 1]) << 8);
            out[k] = v / 65535.0;
        }
    }
    return img;
}

void write_png(const std::filesystem::path& path, const ImageBuf& img)
{
    if (img.pixel_count() == 0)
        throw ContractError("write_png: image is empty");
    img.check_finite();

    const std::size_t w = img.width();
    const std::size_t h = img.height();
    std::vector<unsigned char> pixels(h * w * 6);
    const auto in = img.data();
    for (std::size_t k = 0; k < in.size(); ++k)
    {
        const auto v = static_cast<unsigned>(std::lround(clamp01(in[k]) * 65535.0));
        pixels[2 * k] = static_cast<unsigned char>(v >> 8); // PNG is big-endian
        pixels[2 * k + 1] = static_cast<unsigned char>(v & 0xff);
    }
    std::vector<png_bytep> rows(h);
    for (std::size_t y = 0; y < h; ++y)
        rows[y] = pixels.data() + y * w * 6;

    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp)
        throw IoError("cannot open '" + path.string() + "' for writing");

    PngError err;
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &err, on_error, on_warning);
    if (!png)
        throw IoError("libpng initialisation failed");
    png_infop info = png_create_info_struct(png);
    if (!info)
    {
        png_destroy_write_struct(&png, nullptr);
        throw IoError("libpng initialisation failed");
    }
    if (setjmp(png_jmpbuf(png)))
    {
        png_destroy_write_struct(&png, &info);
        throw IoError("failed writing PNG '" + path.string() + "': " + err.message);
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 16,
                 PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    if (std::fflush(fp.get()) != 0)
        throw IoError("failed writing PNG '" + path.string() + "'");
}

} // namespace kanmatch
