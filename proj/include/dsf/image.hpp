#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dsf/tensor.hpp"

namespace dsf {

// 8-bit interleaved RGB, row-major
struct ImageU8 {
  int height = 0, width = 0;
  std::vector<uint8_t> rgb;  // height * width * 3

  static ImageU8 filled(int height, int width, uint8_t r, uint8_t g, uint8_t b);
  uint8_t* px(int y, int x) { return rgb.data() + (static_cast<size_t>(y) * width + x) * 3; }
  const uint8_t* px(int y, int x) const { return rgb.data() + (static_cast<size_t>(y) * width + x) * 3; }
};

// [3 x H x W] float64 in [0, 1]
Tensor image_to_tensor(const ImageU8& img);
ImageU8 tensor_to_image(const Tensor& t);

// bilinear resize in pixel space (input preprocessing, not differentiable)
ImageU8 resize_bilinear(const ImageU8& img, int out_h, int out_w);

// Minimal PNG codec for the dataset files this project writes: 8-bit RGB,
// single IDAT stream via zlib. The reader accepts any scanline filter.
void write_png(const std::string& path, const ImageU8& img);
ImageU8 read_png(const std::string& path);

}  // namespace dsf
