#include "au2av/media/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>

#include "au2av/error.hpp"

namespace au2av::media {

Image::Image(int h, int w, double fill)
    : height(h), width(w), pixels(static_cast<std::size_t>(h) * static_cast<std::size_t>(w) * 3, fill) {
  if (h <= 0 || w <= 0) throw ValidationError("image dimensions must be positive");
}

std::vector<double> to_gray(const Image& img) {
  std::vector<double> g(static_cast<std::size_t>(img.height) * img.width);
  for (std::size_t i = 0; i < g.size(); ++i)
    g[i] = 0.299 * img.pixels[3 * i] + 0.587 * img.pixels[3 * i + 1] + 0.114 * img.pixels[3 * i + 2];
  return g;
}

Image read_png(const std::filesystem::path& path) {
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&png, path.c_str()))
    throw IoError("cannot read PNG " + path.string() + ": " + png.message);
  png.format = PNG_FORMAT_RGB;
  std::vector<png_byte> buffer(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, buffer.data(), 0, nullptr)) {
    png_image_free(&png);
    throw IoError("cannot decode PNG " + path.string() + ": " + png.message);
  }
  Image img(static_cast<int>(png.height), static_cast<int>(png.width));
  for (std::size_t i = 0; i < buffer.size(); ++i) img.pixels[i] = buffer[i] / 255.0;
  return img;
}

void write_png(const std::filesystem::path& path, const Image& img) {
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(img.width);
  png.height = static_cast<png_uint_32>(img.height);
  png.format = PNG_FORMAT_RGB;
  std::vector<png_byte> buffer(img.pixels.size());
  for (std::size_t i = 0; i < buffer.size(); ++i)
    buffer[i] = static_cast<png_byte>(std::lround(std::clamp(img.pixels[i], 0.0, 1.0) * 255.0));
  if (!png_image_write_to_file(&png, path.c_str(), 0, buffer.data(), 0, nullptr))
    throw IoError("cannot write PNG " + path.string() + ": " + png.message);
}

ag::Tensor images_to_tensor(std::span<const Image> images, bool signed_range) {
  if (images.empty()) throw ValidationError("no images to stack");
  const int h = images[0].height, w = images[0].width;
  ag::Tensor t({static_cast<int>(images.size()), 3, h, w});
  for (std::size_t n = 0; n < images.size(); ++n) {
    if (!images[n].same_shape(images[0])) throw ValidationError("images to stack differ in size");
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        for (int c = 0; c < 3; ++c) {
          const double v = images[n].at(y, x, c);
          t.at(static_cast<int>(n), c, y, x) = signed_range ? 2.0 * v - 1.0 : v;
        }
  }
  return t;
}

ag::Tensor image_to_tensor(const Image& image, bool signed_range) {
  return images_to_tensor(std::span<const Image>(&image, 1), signed_range);
}

Image tensor_to_image(const ag::Tensor& t, int n, bool signed_range) {
  if (t.rank() != 4 || t.dim(1) != 3) throw ValidationError("expected an N x 3 x H x W tensor");
  Image img(t.dim(2), t.dim(3));
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c) {
        const double v = t.at(n, c, y, x);
        img.at(y, x, c) = signed_range ? 0.5 * (v + 1.0) : v;
      }
  return img;
}

Image resize_area(const Image& img, int out_h, int out_w) {
  Image out(out_h, out_w);
  const double sy = static_cast<double>(img.height) / out_h;
  const double sx = static_cast<double>(img.width) / out_w;
  for (int y = 0; y < out_h; ++y)
    for (int x = 0; x < out_w; ++x) {
      const int y0 = static_cast<int>(std::floor(y * sy));
      const int y1 = std::max(y0 + 1, static_cast<int>(std::floor((y + 1) * sy)));
      const int x0 = static_cast<int>(std::floor(x * sx));
      const int x1 = std::max(x0 + 1, static_cast<int>(std::floor((x + 1) * sx)));
      for (int c = 0; c < 3; ++c) {
        double acc = 0.0;
        int count = 0;
        for (int yy = y0; yy < std::min(y1, img.height); ++yy)
          for (int xx = x0; xx < std::min(x1, img.width); ++xx, ++count) acc += img.at(yy, xx, c);
        out.at(y, x, c) = count ? acc / count : 0.0;
      }
    }
  return out;
}

}  // namespace au2av::media
