#include "fdct/png.hpp"

#include <algorithm>
#include <cmath>

#include <png.h>

#include "fdct/error.hpp"

namespace fdct::study {

std::vector<std::uint8_t> to_gray8(const Image2D& unit) {
    std::vector<std::uint8_t> out(unit.size());
    for (std::size_t i = 0; i < unit.size(); ++i) {
        const double u = std::clamp(unit.values[i], 0.0, 1.0);
        out[i] = static_cast<std::uint8_t>(std::floor(u * 255.0 + 0.5));
    }
    return out;
}

namespace {

void append_bytes(png_structp png, png_bytep data, png_size_t length) {
    auto* out = static_cast<std::string*>(png_get_io_ptr(png));
    out->append(reinterpret_cast<const char*>(data), length);
}

void flush_noop(png_structp) {}

}  // namespace

std::string encode_png_gray8(const std::vector<std::uint8_t>& pixels, std::size_t rows, std::size_t cols) {
    if (rows == 0 || cols == 0 || pixels.size() != rows * cols) throw ValidationError("png: pixel count does not match shape");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw IoError("png: cannot create writer");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw IoError("png: cannot create info");
    }
    std::string out;
    std::vector<png_bytep> row_ptrs(rows);
    for (std::size_t r = 0; r < rows; ++r) row_ptrs[r] = const_cast<png_bytep>(pixels.data() + r * cols);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("png: encoding failed");
    }
    png_set_write_fn(png, &out, append_bytes, flush_noop);
    png_set_IHDR(png, info, static_cast<png_uint_32>(cols), static_cast<png_uint_32>(rows), 8, PNG_COLOR_TYPE_GRAY,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    png_write_image(png, row_ptrs.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    return out;
}

}  // namespace fdct::study
