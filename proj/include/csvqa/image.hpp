#pragma once

#include <cstddef>
#include <vector>

#include "csvqa/errors.hpp"

namespace csvqa {

// Dense image, channel-major row-major layout: data[(c*height + y)*width + x].
// Pixel values live in [0, 1]. Stored in doubles like the rest of the
// sensing/reconstruction path; converted to f32 at the network and file
// boundaries.
struct Image {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<double> data;

  Image() = default;
  Image(int c, int h, int w, double fill = 0.0)
      : channels(c), height(h), width(w),
        data(static_cast<std::size_t>(c) * h * w, fill) {}

  std::size_t size() const { return data.size(); }

  double at(int c, int y, int x) const {
    return data[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
  double& at(int c, int y, int x) {
    return data[(static_cast<std::size_t>(c) * height + y) * width + x];
  }

  bool same_shape(const Image& other) const {
    return channels == other.channels && height == other.height && width == other.width;
  }
};

}  // namespace csvqa
