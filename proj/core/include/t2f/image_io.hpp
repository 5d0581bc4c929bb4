#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "t2f/tensor.hpp"

namespace t2f {

/// Images are [3,H,W] tensors with values in [-1,1]. On disk they are 8-bit
/// RGB: PPM (P6, maxval 255) always, PNG (8-bit RGB, non-interlaced) by
/// extension.

Tensor read_image(const std::string& path);
void write_image(const std::string& path, const Tensor& img);

/// Quantizes to interleaved RGB bytes (round to nearest).
std::vector<uint8_t> image_to_bytes(const Tensor& img);
/// Maps bytes back to [-1,1]; exact inverse of image_to_bytes after one
/// quantization.
Tensor image_from_bytes(size_t h, size_t w, const std::vector<uint8_t>& rgb);

/// Single-row grid of equally sized panels separated by white bars.
Tensor make_row_grid(const std::vector<Tensor>& panels, size_t separator = 2);

}  // namespace t2f
