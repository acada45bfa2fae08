#include "mal/image.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mal {

Image::Image(int h, int w, double fill) : height(h), width(w) {
  if (h < 0 || w < 0) throw std::invalid_argument("Image: negative size");
  pixels.assign(3 * plane_size(), fill);
}

Tensor images_to_tensor(std::span<const Image> images) {
  if (images.empty()) throw ShapeError("images_to_tensor: empty batch");
  const Image& first = images.front();
  const std::size_t per = first.pixels.size();
  std::vector<double> data;
  data.reserve(per * images.size());
  for (const Image& img : images) {
    if (!img.same_size(first)) {
      throw ShapeError("images_to_tensor: image " + std::to_string(img.height) + "x" +
                       std::to_string(img.width) + " in a batch of " + std::to_string(first.height) +
                       "x" + std::to_string(first.width));
    }
    data.insert(data.end(), img.pixels.begin(), img.pixels.end());
  }
  return Tensor({images.size(), 3, static_cast<std::size_t>(first.height), static_cast<std::size_t>(first.width)},
                std::move(data));
}

Tensor image_to_tensor(const Image& image) { return images_to_tensor(std::span<const Image>(&image, 1)); }

Image tensor_to_image(const Tensor& t) {
  const Shape& s = t.shape();
  const bool batched = s.size() == 4 && s[0] == 1;
  if (!(batched || s.size() == 3) || s[s.size() - 3] != 3) {
    throw ShapeError("tensor_to_image: expected [1,3,H,W] or [3,H,W], got " + shape_str(s));
  }
  Image img(static_cast<int>(s[s.size() - 2]), static_cast<int>(s[s.size() - 1]));
  std::copy(t.data().begin(), t.data().end(), img.pixels.begin());
  return img;
}

double linf_distance(const Image& a, const Image& b) {
  if (!a.same_size(b)) throw std::invalid_argument("linf_distance: size mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.pixels.size(); ++i) m = std::max(m, std::abs(a.pixels[i] - b.pixels[i]));
  return m;
}

}  // namespace mal
