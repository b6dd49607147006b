#include "stereo/image.hpp"

#include <cmath>
#include <string>

namespace stereo {

Frame::Frame(int height, int width, float fill) : height_(height), width_(width) {
  if (height < 0 || width < 0) throw ShapeError("negative frame dimensions");
  data_.assign(static_cast<std::size_t>(height) * static_cast<std::size_t>(width) * kChannels,
               fill);
}

Frame::Frame(int height, int width, std::vector<float> rgb)
    : height_(height), width_(width), data_(std::move(rgb)) {
  if (height < 0 || width < 0) throw ShapeError("negative frame dimensions");
  if (data_.size() !=
      static_cast<std::size_t>(height) * static_cast<std::size_t>(width) * kChannels) {
    throw ShapeError("frame data length does not match " + std::to_string(height) + "x" +
                     std::to_string(width) + "x3");
  }
}

VideoClip::VideoClip(std::vector<Frame> frames, double fps)
    : frames_(std::move(frames)), fps_(fps) {
  for (const Frame& f : frames_) {
    if (!f.same_shape(frames_.front())) {
      throw ShapeError("all frames of a clip must share one resolution");
    }
  }
}

bool VideoClip::same_shape(const VideoClip& other) const noexcept {
  return size() == other.size() && height() == other.height() && width() == other.width();
}

VideoClip VideoClip::slice(std::size_t begin, std::size_t end) const {
  if (begin > end || end > frames_.size()) throw ShapeError("clip slice out of range");
  return VideoClip(std::vector<Frame>(frames_.begin() + static_cast<std::ptrdiff_t>(begin),
                                      frames_.begin() + static_cast<std::ptrdiff_t>(end)),
                   fps_);
}

DepthMap::DepthMap(Plane<float> depth) : depth_(std::move(depth)) {
  const auto values = depth_.values();
  for (std::size_t i = 0; i < values.size(); ++i) {
    const float v = values[i];
    if (!std::isfinite(v) || v <= 0.0f) {
      const auto w = static_cast<std::size_t>(depth_.width());
      throw ValidationError("depth must be finite and > 0; pixel index " + std::to_string(i) +
                            " (row " + std::to_string(i / w) + ", col " +
                            std::to_string(i % w) + ") has value " + std::to_string(v));
    }
  }
}

Frame crop(const Frame& frame, int y0, int x0, int height, int width) {
  if (y0 < 0 || x0 < 0 || y0 + height > frame.height() || x0 + width > frame.width()) {
    throw ShapeError("crop rectangle outside frame");
  }
  Frame out(height, width);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      for (int c = 0; c < Frame::kChannels; ++c) out.at(y, x, c) = frame.at(y0 + y, x0 + x, c);
    }
  }
  return out;
}

std::size_t count_set(const Mask& mask) {
  std::size_t n = 0;
  for (auto v : mask.values()) n += v != 0;
  return n;
}

}  // namespace stereo
