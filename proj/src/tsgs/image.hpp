#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace tsgs {

/// Row-major interleaved H×W×C buffer.
template <class T>
struct Image {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<T> data;

  Image() = default;
  Image(int w, int h, int c = 1, T fill = T{})
      : width(w), height(h), channels(c),
        data(static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * static_cast<std::size_t>(c), fill) {}

  bool empty() const { return data.empty(); }
  std::size_t pixel_count() const { return static_cast<std::size_t>(width) * static_cast<std::size_t>(height); }
  std::size_t index(int x, int y, int c = 0) const {
    return (static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)) *
               static_cast<std::size_t>(channels) +
           static_cast<std::size_t>(c);
  }
  T& at(int x, int y, int c = 0) { return data[index(x, y, c)]; }
  const T& at(int x, int y, int c = 0) const { return data[index(x, y, c)]; }

  std::span<T> pixel(std::size_t p) { return {data.data() + p * channels, static_cast<std::size_t>(channels)}; }
  std::span<const T> pixel(std::size_t p) const {
    return {data.data() + p * channels, static_cast<std::size_t>(channels)};
  }

  template <class U>
  bool same_shape(const Image<U>& o) const {
    return width == o.width && height == o.height;
  }
};

using ImageD = Image<double>;
using LabelImage = Image<std::int32_t>;
using MaskImage = Image<std::uint8_t>;

}  // namespace tsgs
