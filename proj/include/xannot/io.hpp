#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "xannot/grid.hpp"

namespace xannot::io {

using Bytes = std::vector<std::uint8_t>;

// PNG codec (8-bit). Gray planes are single-channel; masks are written as 0/255.
Bytes encode_png(const PseudoColorImage& image);
Bytes encode_png(const GrayPlane& plane);
Bytes encode_mask_png(const BinaryMask& mask);

/// Any PNG, converted to 8-bit RGB.
PseudoColorImage decode_png_rgb(std::span<const std::uint8_t> bytes);
/// Any PNG, converted to 8-bit grayscale.
GrayPlane decode_png_gray(std::span<const std::uint8_t> bytes);
/// Any PNG; nonzero gray value means foreground.
BinaryMask decode_mask_png(std::span<const std::uint8_t> bytes);

/// Reads only the header; returns {width, height}.
std::pair<int, int> png_dimensions(std::span<const std::uint8_t> bytes);

Bytes read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_text(const std::filesystem::path& path, std::string_view text);
std::string read_text(const std::filesystem::path& path);

std::string sha256_hex(std::span<const std::uint8_t> bytes);
std::string base64_encode(std::span<const std::uint8_t> bytes);
/// Throws ValidationError on malformed input.
Bytes base64_decode(std::string_view text);

}  // namespace xannot::io
