#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "stereo/error.hpp"

namespace stereo {

// Row-major single-channel raster.
template <typename T>
class Plane {
 public:
  using value_type = T;

  Plane() = default;
  Plane(int height, int width, T fill = T{})
      : height_(height), width_(width), data_(checked_size(height, width), fill) {}
  Plane(int height, int width, std::vector<T> values)
      : height_(height), width_(width), data_(std::move(values)) {
    if (data_.size() != checked_size(height, width)) {
      throw ShapeError("plane data length does not match dimensions");
    }
  }

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T& operator()(int y, int x) { return data_[index(y, x)]; }
  const T& operator()(int y, int x) const { return data_[index(y, x)]; }

  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }

  template <typename U>
  bool same_shape(const Plane<U>& other) const noexcept {
    return height_ == other.height() && width_ == other.width();
  }

  friend bool operator==(const Plane&, const Plane&) = default;

 private:
  static std::size_t checked_size(int height, int width) {
    if (height < 0 || width < 0) throw ShapeError("negative plane dimensions");
    return static_cast<std::size_t>(height) * static_cast<std::size_t>(width);
  }
  std::size_t index(int y, int x) const noexcept {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(x);
  }

  int height_ = 0;
  int width_ = 0;
  std::vector<T> data_;
};

// Per-pixel horizontal disparity in pixels.
using DisparityMap = Plane<float>;

// Binary mask; 1 marks a disoccluded (hole) pixel.
using Mask = Plane<std::uint8_t>;

// RGB image, interleaved, values in [0,1].
class Frame {
 public:
  static constexpr int kChannels = 3;

  Frame() = default;
  Frame(int height, int width, float fill = 0.0f);
  Frame(int height, int width, std::vector<float> rgb);

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  bool same_shape(const Frame& other) const noexcept {
    return height_ == other.height_ && width_ == other.width_;
  }

  float& at(int y, int x, int c) { return data_[index(y, x, c)]; }
  float at(int y, int x, int c) const { return data_[index(y, x, c)]; }

  std::span<float> values() noexcept { return data_; }
  std::span<const float> values() const noexcept { return data_; }

  friend bool operator==(const Frame&, const Frame&) = default;

 private:
  std::size_t index(int y, int x, int c) const noexcept {
    return (static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
            static_cast<std::size_t>(x)) *
               kChannels +
           static_cast<std::size_t>(c);
  }

  int height_ = 0;
  int width_ = 0;
  std::vector<float> data_;
};

// Ordered frame stack with a shared resolution.
class VideoClip {
 public:
  VideoClip() = default;
  VideoClip(std::vector<Frame> frames, double fps = 8.0);

  std::size_t size() const noexcept { return frames_.size(); }
  bool empty() const noexcept { return frames_.empty(); }
  int height() const noexcept { return frames_.empty() ? 0 : frames_.front().height(); }
  int width() const noexcept { return frames_.empty() ? 0 : frames_.front().width(); }
  double fps() const noexcept { return fps_; }

  const Frame& operator[](std::size_t i) const { return frames_[i]; }
  Frame& operator[](std::size_t i) { return frames_[i]; }
  const std::vector<Frame>& frames() const noexcept { return frames_; }

  bool same_shape(const VideoClip& other) const noexcept;

  // Frames [begin, end).
  VideoClip slice(std::size_t begin, std::size_t end) const;

  friend bool operator==(const VideoClip&, const VideoClip&) = default;

 private:
  std::vector<Frame> frames_;
  double fps_ = 8.0;
};

// Strictly positive, finite depth with arbitrary scale.
class DepthMap {
 public:
  DepthMap() = default;
  // Throws ValidationError naming the first offending pixel.
  explicit DepthMap(Plane<float> depth);

  int height() const noexcept { return depth_.height(); }
  int width() const noexcept { return depth_.width(); }
  float operator()(int y, int x) const { return depth_(y, x); }
  const Plane<float>& plane() const noexcept { return depth_; }

 private:
  Plane<float> depth_;
};

// Crop a rectangle out of a frame or plane.
Frame crop(const Frame& frame, int y0, int x0, int height, int width);

template <typename T>
Plane<T> crop(const Plane<T>& plane, int y0, int x0, int height, int width) {
  Plane<T> out(height, width);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) out(y, x) = plane(y0 + y, x0 + x);
  }
  return out;
}

std::size_t count_set(const Mask& mask);

}  // namespace stereo
