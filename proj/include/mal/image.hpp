#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "mal/tensor.hpp"

namespace mal {

/// Three planar channels (R, G, B) of values in [0,1]. Grayscale and sketch
/// images are stored as three identical planes.
struct Image {
  int height = 0;
  int width = 0;
  std::vector<double> pixels;  // [3][height][width]

  Image() = default;
  Image(int h, int w, double fill = 0.0);

  std::size_t plane_size() const { return static_cast<std::size_t>(height) * static_cast<std::size_t>(width); }
  std::size_t index(int c, int y, int x) const {
    return (static_cast<std::size_t>(c) * static_cast<std::size_t>(height) + static_cast<std::size_t>(y)) *
               static_cast<std::size_t>(width) +
           static_cast<std::size_t>(x);
  }
  double& at(int c, int y, int x) { return pixels[index(c, y, x)]; }
  double at(int c, int y, int x) const { return pixels[index(c, y, x)]; }
  std::span<double> plane(int c) { return std::span<double>(pixels).subspan(c * plane_size(), plane_size()); }
  std::span<const double> plane(int c) const {
    return std::span<const double>(pixels).subspan(c * plane_size(), plane_size());
  }
  bool same_size(const Image& other) const { return height == other.height && width == other.width; }

  friend bool operator==(const Image&, const Image&) = default;
};

/// Dataset record. Transforms never change identity or camera.
struct LabeledImage {
  Image image;
  int identity = 0;
  int camera = 0;
};

/// Axis-aligned pixel rectangle.
struct Rect {
  int top = 0;
  int left = 0;
  int height = 0;
  int width = 0;

  int area() const { return height * width; }
  bool contains(int y, int x) const { return y >= top && y < top + height && x >= left && x < left + width; }
  bool inside(int image_h, int image_w) const {
    return top >= 0 && left >= 0 && height >= 1 && width >= 1 && top + height <= image_h &&
           left + width <= image_w;
  }
  friend bool operator==(const Rect&, const Rect&) = default;
};

/// Stacks same-sized images into an [N,3,H,W] tensor.
Tensor images_to_tensor(std::span<const Image> images);
Tensor image_to_tensor(const Image& image);
/// Inverse of image_to_tensor for one [1,3,H,W] (or [3,H,W]) tensor.
Image tensor_to_image(const Tensor& t);

/// Largest per-pixel absolute difference.
double linf_distance(const Image& a, const Image& b);

}  // namespace mal
