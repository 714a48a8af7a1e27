#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "trajattn/tensor.hpp"

namespace trajattn {

// Interleaved 8-bit RGB image.
struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // row-major, 3 bytes per pixel

  void validate() const;
};

// Converts a channel-major [3, H, W] byte buffer (as produced by the renderer)
// into an interleaved image.
RgbImage image_from_channel_major(const std::vector<std::uint8_t>& data, int height, int width);

// Binary PPM (P6), 8 bits per channel.
void save_ppm(const std::string& path, const RgbImage& image);
RgbImage load_ppm(const std::string& path);

// Alpha-blends an attention mask over an image. The mask is a [h, w] tensor on
// the feature-map grid; it is normalized to peak 1, bilinearly upsampled to the
// image resolution, and blended toward a highlight color with per-pixel alpha
// 0.5 * normalized weight.
RgbImage overlay_mask(const RgbImage& image, const Tensor& mask);

}  // namespace trajattn
