#include "stereo/synthetic.hpp"

#include <cmath>

namespace stereo {

TwoLayerScene make_two_layer_scene(const TwoLayerSceneConfig& cfg) {
  if (cfg.frames < 1 || cfg.height < 4 || cfg.width < 4) {
    throw ValidationError("scene needs at least one 4x4 frame");
  }
  if (!(cfg.near_depth > 0.0f) || !(cfg.far_depth > cfg.near_depth)) {
    throw ValidationError("scene needs 0 < near_depth < far_depth");
  }
  TwoLayerScene s;
  s.near_depth = cfg.near_depth;
  s.far_depth = cfg.far_depth;
  const int fh = cfg.height / 2;
  const int fw = cfg.width / 4;
  const int fy = cfg.height / 4;
  std::vector<Frame> frames;
  for (int f = 0; f < cfg.frames; ++f) {
    Frame img(cfg.height, cfg.width);
    Plane<float> depth(cfg.height, cfg.width, cfg.far_depth);
    const int fx = cfg.width / 3 + f * cfg.motion;
    for (int y = 0; y < cfg.height; ++y) {
      for (int x = 0; x < cfg.width; ++x) {
        const bool near = y >= fy && y < fy + fh && x >= fx && x < fx + fw;
        if (near) {
          const bool check = ((y - fy) / 4 + (x - fx) / 4) % 2 == 0;
          img.at(y, x, 0) = check ? 0.85f : 0.65f;
          img.at(y, x, 1) = 0.30f;
          img.at(y, x, 2) = check ? 0.20f : 0.35f;
          depth(y, x) = cfg.near_depth;
        } else {
          const double u = static_cast<double>(x) / cfg.width;
          const double v = static_cast<double>(y) / cfg.height;
          img.at(y, x, 0) = static_cast<float>(0.25 + 0.15 * std::sin(12.0 * u));
          img.at(y, x, 1) = static_cast<float>(0.45 + 0.20 * std::sin(9.0 * v + 4.0 * u));
          img.at(y, x, 2) = static_cast<float>(0.60 + 0.25 * std::cos(15.0 * u * v + 1.0));
        }
      }
    }
    frames.push_back(std::move(img));
    s.depth.emplace_back(std::move(depth));
  }
  s.left = VideoClip(std::move(frames), 8.0);
  return s;
}

}  // namespace stereo
