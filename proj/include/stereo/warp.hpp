#pragma once

#include <span>
#include <vector>

#include "stereo/image.hpp"

namespace stereo {

enum class SplatMode { nearest, bilinear };

// How inverse depth is normalized before scaling to [0, D_max].
enum class DisparityNormalization {
  clip_global,  // one min/max over every frame of the clip (no flicker)
  per_frame,
};

struct WarpConfig {
  float max_disparity = 0.0f;
  SplatMode splat_mode = SplatMode::nearest;
  int closing_kernel = 11;
  DisparityNormalization normalization = DisparityNormalization::clip_global;

  // Throws ValidationError on negative D_max or an even/nonpositive kernel.
  void validate() const;
};

// One warped frame.
struct SplatResult {
  Frame warped;                // holes hold 0
  Mask mask;                   // 1 where nothing landed
  Plane<float> weight;         // accumulated splat weight
  DisparityMap target_disparity;  // disparity of the winning source, 0 at holes
};

struct WarpResult {
  VideoClip warped;
  std::vector<Mask> mask;      // after closing; what the refiner sees
  std::vector<Mask> raw_mask;  // straight from splatting
  std::vector<DisparityMap> disparity;
};

// d = D_max * (i - i_min) / (i_max - i_min) with i = 1/depth, min/max taken
// over this map. Constant inverse depth maps to D_max everywhere.
DisparityMap depth_to_disparity(const DepthMap& depth, float max_disparity);

// Same formula with the normalization range chosen by `mode`.
std::vector<DisparityMap> depth_to_disparity(std::span<const DepthMap> depth, float max_disparity,
                                             DisparityNormalization mode);

// Forward-splat the left view to the right camera: source x lands at x - d.
// Conflicts resolve by larger disparity, then smaller source x.
SplatResult forward_splat(const Frame& left, const DisparityMap& disparity, SplatMode mode);

// kernel x kernel square structuring element. Dilation treats out-of-image as
// 0, erosion treats it as 1.
Mask dilate(const Mask& mask, int kernel);
Mask erode(const Mask& mask, int kernel);
Mask close_mask(const Mask& mask, int kernel);

WarpResult warp_clip(const VideoClip& left, std::span<const DepthMap> depth,
                     const WarpConfig& cfg);

}  // namespace stereo
