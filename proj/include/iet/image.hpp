#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "iet/tensor.hpp"

namespace iet::img {

// RGB float image, values in [0, 1], row-major [H x W x 3].
struct Image {
  int32_t height = 0;
  int32_t width = 0;
  std::vector<double> data;  // H * W * 3
  std::string source;

  double& at(int32_t y, int32_t x, int32_t c) {
    return data[(static_cast<size_t>(y) * width + x) * 3 + c];
  }
  double at(int32_t y, int32_t x, int32_t c) const {
    return data[(static_cast<size_t>(y) * width + x) * 3 + c];
  }

  Tensor to_tensor() const;
  static Image from_tensor(const Tensor& t, bool clamp = true);
};

// Dispatches on extension: .ppm -> P6, .png -> 8-bit RGB PNG.
Image load_image(const std::string& path);
void save_image(const Image& img, const std::string& path);

Image decode_ppm(const std::vector<uint8_t>& bytes, const std::string& src);
std::vector<uint8_t> encode_ppm(const Image& img);
Image decode_png(const std::vector<uint8_t>& bytes, const std::string& src);
std::vector<uint8_t> encode_png(const Image& img);

// Catmull-Rom bicubic (a = -0.5), edge clamp, separable two-pass. The output
// size is (H*num)/den x (W*num)/den (integer division, floored at 1). This
// kernel is pinned: every LR synthesis and PSNR in the project flows
// through it.
Image bicubic_resize(const Image& img, int32_t num, int32_t den);

// 10*log10(1 / MSE) against peak 1.0. Identical images return +infinity.
double psnr(const Image& a, const Image& b);

// [0,1]-clamped 8-bit quantization used at save time.
uint8_t quantize(double v);

}  // namespace iet::img
