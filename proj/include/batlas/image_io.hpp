#pragma once

#include <filesystem>

#include "batlas/image.hpp"
#include "batlas/mask.hpp"

namespace batlas {

// Binary PGM (P5, maxval <= 65535) or grayscale PNG, chosen by file signature.
// 16-bit samples are widened to double as-is.
GrayImage read_image(const std::filesystem::path& path);
// Any nonzero sample is foreground.
BinaryMask read_mask(const std::filesystem::path& path);

// Intensities are rounded and clamped to [0, 255]. PNG when the extension is
// ".png", PGM otherwise.
void write_image(const std::filesystem::path& path, const GrayImage& img);
// Foreground = 255, background = 0.
void write_mask(const std::filesystem::path& path, const BinaryMask& mask);

}  // namespace batlas
