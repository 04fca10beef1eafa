#include <png.h>

#include <cstring>
#include <fstream>

#include "reavae/core_data.hpp"

namespace reavae {

namespace {

struct ReadCursor {
    std::span<const std::uint8_t> bytes;
    std::size_t pos = 0;
};

void read_callback(png_structp png, png_bytep out, png_size_t n)
{
    auto* cur = static_cast<ReadCursor*>(png_get_io_ptr(png));
    if (cur->pos + n > cur->bytes.size()) png_error(png, "unexpected end of PNG data");
    std::memcpy(out, cur->bytes.data() + cur->pos, n);
    cur->pos += n;
}

void write_callback(png_structp png, png_bytep in, png_size_t n)
{
    auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
    out->insert(out->end(), in, in + n);
}

void flush_callback(png_structp) {}

[[noreturn]] void error_callback(png_structp png, png_const_charp msg)
{
    auto* text = static_cast<std::string*>(png_get_error_ptr(png));
    *text = msg;
    png_longjmp(png, 1);
}

void warning_callback(png_structp, png_const_charp) {}

} // namespace

RasterImage decode_png(std::span<const std::uint8_t> bytes)
{
    if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) throw std::invalid_argument("not a PNG file");
    std::string error;
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &error, error_callback, warning_callback);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw std::runtime_error("libpng initialisation failed");
    }
    RasterImage img;
    std::vector<png_bytep> rows;
    std::vector<std::uint8_t> raw;
    ReadCursor cursor{bytes};
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw std::invalid_argument("PNG decode failed: " + error);
    }
    png_set_read_fn(png, &cursor, read_callback);
    png_read_info(png, info);
    const int color = png_get_color_type(png, info);
    const int depth = png_get_bit_depth(png, info);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    png_read_update_info(png, info);

    img.width = static_cast<int>(png_get_image_width(png, info));
    img.height = static_cast<int>(png_get_image_height(png, info));
    img.channels = png_get_channels(png, info);
    img.bit_depth = png_get_bit_depth(png, info);
    const std::size_t stride = png_get_rowbytes(png, info);
    raw.resize(stride * img.height);
    rows.resize(img.height);
    for (int i = 0; i < img.height; ++i) rows[i] = raw.data() + stride * i;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    const std::size_t count = static_cast<std::size_t>(img.width) * img.height * img.channels;
    img.samples.resize(count);
    for (int i = 0; i < img.height; ++i) {
        const std::uint8_t* row = raw.data() + stride * i;
        const std::size_t n = static_cast<std::size_t>(img.width) * img.channels;
        for (std::size_t k = 0; k < n; ++k)
            img.samples[i * n + k] =
                img.bit_depth == 16 ? static_cast<std::uint16_t>((row[2 * k] << 8) | row[2 * k + 1]) : row[k];
    }
    // Grey+alpha and RGBA: keep colour channels only.
    if (img.channels == 2 || img.channels == 4) {
        const int keep = img.channels - 1;
        std::vector<std::uint16_t> stripped(static_cast<std::size_t>(img.width) * img.height * keep);
        for (std::size_t p = 0; p < stripped.size() / keep; ++p)
            for (int c = 0; c < keep; ++c) stripped[p * keep + c] = img.samples[p * img.channels + c];
        img.samples = std::move(stripped);
        img.channels = keep;
    }
    return img;
}

RasterImage read_png(const std::filesystem::path& path)
{
    return decode_png(read_file(path));
}

std::vector<std::uint8_t> encode_png(int width, int height, int channels, std::span<const std::uint8_t> data)
{
    if (width <= 0 || height <= 0) throw std::invalid_argument("cannot encode a zero-size image");
    if (channels != 1 && channels != 3) throw std::invalid_argument("encode_png supports 1 or 3 channels");
    if (data.size() != static_cast<std::size_t>(width) * height * channels)
        throw std::invalid_argument("encode_png: data size does not match dimensions");
    std::string error;
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &error, error_callback, warning_callback);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw std::runtime_error("libpng initialisation failed");
    }
    std::vector<std::uint8_t> out;
    std::vector<png_bytep> rows(height);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw std::runtime_error("PNG encode failed: " + error);
    }
    png_set_write_fn(png, &out, write_callback, flush_callback);
    png_set_compression_level(png, 6);
    png_set_filter(png, 0, PNG_FILTER_NONE);
    png_set_IHDR(png, info, width, height, 8, channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int i = 0; i < height; ++i)
        rows[i] = const_cast<png_bytep>(data.data() + static_cast<std::size_t>(i) * width * channels);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    return out;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("write failed for " + path.string());
}

} // namespace reavae
