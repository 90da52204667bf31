#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mf/tensor.hpp"

namespace mf {

// Interleaved row-major 8-bit image; 1 (gray) or 3 (RGB) channels.
struct ImageU8 {
  size_t width = 0, height = 0, channels = 0;
  std::vector<uint8_t> pixels;

  size_t size_bytes() const { return width * height * channels; }
};

// 8-bit PNG, color type 0 (gray) or 2 (RGB), no interlace. The reader
// handles all five scanline filters; the writer emits unfiltered scanlines.
// Malformed input raises ParseError with the offending byte offset.
ImageU8 load_png(const std::string& path);
void save_png(const std::string& path, const ImageU8& img);

// Binary PPM (P6) / PGM (P5).
ImageU8 load_ppm(const std::string& path);
void save_ppm(const std::string& path, const ImageU8& img);

// Dispatch on file extension (.png, .ppm, .pgm).
ImageU8 load_image(const std::string& path);
void save_image(const std::string& path, const ImageU8& img);

// [-1,1] float <-> [0,255] by v8 = round((v+1)*127.5). Tensor layout (C,H,W).
template <typename T>
Tensor<T> image_to_tensor(const ImageU8& img);
template <typename T>
ImageU8 tensor_to_image(const Tensor<T>& t);  // clamps to [-1,1]

// [0,1] float <-> [0,255] by v8 = round(v*255). Single channel, (1,H,W).
template <typename T>
Tensor<T> mask_to_tensor(const ImageU8& img);
template <typename T>
ImageU8 tensor_to_mask(const Tensor<T>& t);

}  // namespace mf
