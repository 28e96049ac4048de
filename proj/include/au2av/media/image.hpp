#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "au2av/autograd/tensor.hpp"

namespace au2av::media {

/// RGB image, row-major HWC, values nominally in [0, 1].
struct Image {
  int height = 0;
  int width = 0;
  std::vector<double> pixels;  // height * width * 3

  Image() = default;
  Image(int h, int w, double fill = 0.0);

  double& at(int y, int x, int c) { return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
  double at(int y, int x, int c) const { return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
  bool same_shape(const Image& o) const { return height == o.height && width == o.width; }

  friend bool operator==(const Image&, const Image&) = default;
};

/// Luma (BT.601) plane, same scale as the input.
std::vector<double> to_gray(const Image& img);

Image read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Image& img);

/// Stacks images into an NCHW tensor; `signed_range` maps [0,1] to [-1,1].
ag::Tensor images_to_tensor(std::span<const Image> images, bool signed_range);
ag::Tensor image_to_tensor(const Image& image, bool signed_range);
/// Extracts batch entry `n` (3 channels); `signed_range` maps [-1,1] back to [0,1].
Image tensor_to_image(const ag::Tensor& t, int n, bool signed_range);

/// Area-average resize (used for fixture preparation, not inside networks).
Image resize_area(const Image& img, int out_h, int out_w);

}  // namespace au2av::media
