#pragma once

#include <array>
#include <cstdint>
#include <filesystem>

#include "remake/image.hpp"

namespace remake {

using Rgb8 = std::array<uint8_t, 3>;

void write_png_gray8(const std::filesystem::path& path,
                     const Image<uint8_t>& img);
void write_png_gray16(const std::filesystem::path& path,
                      const Image<uint16_t>& img);
void write_png_rgb8(const std::filesystem::path& path, const Image<Rgb8>& img);

// Readers are strict about bit depth / color type and throw DataError when
// the file is missing or has a different format.
Image<uint8_t> read_png_gray8(const std::filesystem::path& path);
Image<uint16_t> read_png_gray16(const std::filesystem::path& path);
Image<Rgb8> read_png_rgb8(const std::filesystem::path& path);

}  // namespace remake
