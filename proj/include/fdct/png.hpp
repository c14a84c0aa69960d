#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fdct/volume.hpp"

namespace fdct::study {

/// Unit-interval slice to 8-bit gray: floor(u * 255 + 0.5), u clamped to [0, 1].
std::vector<std::uint8_t> to_gray8(const Image2D& unit);

/// Encodes 8-bit grayscale pixels as a PNG byte string with no ancillary chunks.
std::string encode_png_gray8(const std::vector<std::uint8_t>& pixels, std::size_t rows, std::size_t cols);

}  // namespace fdct::study
