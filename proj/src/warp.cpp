#include "stereo/warp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace stereo {

void WarpConfig::validate() const {
  if (!(max_disparity >= 0.0f) || !std::isfinite(max_disparity)) {
    throw ValidationError("max disparity must be finite and >= 0");
  }
  if (closing_kernel < 1 || closing_kernel % 2 == 0) {
    throw ValidationError("closing kernel must be odd and >= 1, got " +
                          std::to_string(closing_kernel));
  }
}

namespace {

struct InverseRange {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();

  void extend(const DepthMap& depth) {
    for (float d : depth.plane().values()) {
      const double inv = 1.0 / static_cast<double>(d);
      lo = std::min(lo, inv);
      hi = std::max(hi, inv);
    }
  }
};

DisparityMap scale_inverse_depth(const DepthMap& depth, float max_disparity,
                                 const InverseRange& range) {
  DisparityMap out(depth.height(), depth.width());
  const auto src = depth.plane().values();
  auto dst = out.values();
  const double span = range.hi - range.lo;
  for (std::size_t i = 0; i < src.size(); ++i) {
    if (span > 0.0) {
      const double t = (1.0 / static_cast<double>(src[i]) - range.lo) / span;
      dst[i] = static_cast<float>(std::clamp(t, 0.0, 1.0) * max_disparity);
    } else {
      dst[i] = max_disparity;
    }
  }
  return out;
}

}  // namespace

DisparityMap depth_to_disparity(const DepthMap& depth, float max_disparity) {
  if (!(max_disparity >= 0.0f)) throw ValidationError("max disparity must be >= 0");
  InverseRange range;
  range.extend(depth);
  return scale_inverse_depth(depth, max_disparity, range);
}

std::vector<DisparityMap> depth_to_disparity(std::span<const DepthMap> depth, float max_disparity,
                                             DisparityNormalization mode) {
  if (!(max_disparity >= 0.0f)) throw ValidationError("max disparity must be >= 0");
  std::vector<DisparityMap> out;
  out.reserve(depth.size());
  if (mode == DisparityNormalization::per_frame) {
    for (const DepthMap& d : depth) out.push_back(depth_to_disparity(d, max_disparity));
    return out;
  }
  InverseRange range;
  for (const DepthMap& d : depth) range.extend(d);
  for (const DepthMap& d : depth) out.push_back(scale_inverse_depth(d, max_disparity, range));
  return out;
}

SplatResult forward_splat(const Frame& left, const DisparityMap& disparity, SplatMode mode) {
  const int height = left.height();
  const int width = left.width();
  if (disparity.height() != height || disparity.width() != width) {
    throw ShapeError("frame and disparity dimensions differ");
  }

  SplatResult r{Frame(height, width), Mask(height, width), Plane<float>(height, width),
                DisparityMap(height, width)};
  // Winning source column per target, -1 when empty.
  std::vector<int> winner(static_cast<std::size_t>(width));

  for (int y = 0; y < height; ++y) {
    std::fill(winner.begin(), winner.end(), -1);
    auto offer = [&](int target, int source, float weight) {
      if (target < 0 || target >= width || !(weight > 0.0f)) return;
      r.weight(y, target) += weight;
      const int current = winner[static_cast<std::size_t>(target)];
      // Sources arrive in increasing x, so ">" keeps the smaller x on ties.
      if (current < 0 || disparity(y, source) > disparity(y, current)) {
        winner[static_cast<std::size_t>(target)] = source;
      }
    };

    for (int x = 0; x < width; ++x) {
      const double target = static_cast<double>(x) - static_cast<double>(disparity(y, x));
      if (mode == SplatMode::nearest) {
        offer(static_cast<int>(std::floor(target + 0.5)), x, 1.0f);
      } else {
        const double base = std::floor(target);
        const double frac = target - base;
        offer(static_cast<int>(base), x, static_cast<float>(1.0 - frac));
        offer(static_cast<int>(base) + 1, x, static_cast<float>(frac));
      }
    }

    for (int x = 0; x < width; ++x) {
      const int src = winner[static_cast<std::size_t>(x)];
      if (src < 0) {
        r.mask(y, x) = 1;
        continue;
      }
      for (int c = 0; c < Frame::kChannels; ++c) r.warped.at(y, x, c) = left.at(y, src, c);
      r.target_disparity(y, x) = disparity(y, src);
    }
  }
  return r;
}

namespace {

// Separable square min/max filter; `outside` is the value assumed beyond the
// border.
Mask box_filter(const Mask& mask, int kernel, bool take_max, std::uint8_t outside) {
  if (kernel < 1 || kernel % 2 == 0) {
    throw ValidationError("structuring element must be odd and >= 1");
  }
  const int r = kernel / 2;
  const int height = mask.height();
  const int width = mask.width();
  auto pick = [take_max](std::uint8_t a, std::uint8_t b) {
    return take_max ? std::max(a, b) : std::min(a, b);
  };

  Mask rows(height, width);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      std::uint8_t acc = mask(y, x);
      for (int k = x - r; k <= x + r; ++k) {
        acc = pick(acc, (k < 0 || k >= width) ? outside : mask(y, k));
      }
      rows(y, x) = acc;
    }
  }
  Mask out(height, width);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      std::uint8_t acc = rows(y, x);
      for (int k = y - r; k <= y + r; ++k) {
        acc = pick(acc, (k < 0 || k >= height) ? outside : rows(k, x));
      }
      out(y, x) = acc;
    }
  }
  return out;
}

}  // namespace

Mask dilate(const Mask& mask, int kernel) { return box_filter(mask, kernel, true, 0); }

Mask erode(const Mask& mask, int kernel) { return box_filter(mask, kernel, false, 1); }

Mask close_mask(const Mask& mask, int kernel) {
  if (kernel == 1) return mask;
  return erode(dilate(mask, kernel), kernel);
}

WarpResult warp_clip(const VideoClip& left, std::span<const DepthMap> depth,
                     const WarpConfig& cfg) {
  cfg.validate();
  if (depth.size() != left.size()) {
    throw ShapeError("expected one depth map per frame: " + std::to_string(left.size()) +
                     " frames, " + std::to_string(depth.size()) + " depth maps");
  }
  for (std::size_t i = 0; i < depth.size(); ++i) {
    if (depth[i].height() != left.height() || depth[i].width() != left.width()) {
      throw ShapeError("depth map " + std::to_string(i) + " is " +
                       std::to_string(depth[i].height()) + "x" + std::to_string(depth[i].width()) +
                       ", frames are " + std::to_string(left.height()) + "x" +
                       std::to_string(left.width()));
    }
  }

  WarpResult result;
  result.disparity = depth_to_disparity(depth, cfg.max_disparity, cfg.normalization);
  std::vector<Frame> warped;
  warped.reserve(left.size());
  for (std::size_t i = 0; i < left.size(); ++i) {
    SplatResult s = forward_splat(left[i], result.disparity[i], cfg.splat_mode);
    result.mask.push_back(close_mask(s.mask, cfg.closing_kernel));
    result.raw_mask.push_back(std::move(s.mask));
    warped.push_back(std::move(s.warped));
  }
  result.warped = VideoClip(std::move(warped), left.fps());
  return result;
}

}  // namespace stereo
