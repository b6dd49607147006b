#pragma once

#include <vector>

#include "stereo/image.hpp"

namespace stereo {

// Textured far plane with a nearer textured rectangle sliding across it.
struct TwoLayerScene {
  VideoClip left;
  std::vector<DepthMap> depth;
  float near_depth = 1.0f;
  float far_depth = 4.0f;
};

struct TwoLayerSceneConfig {
  int frames = 16;
  int height = 64;
  int width = 96;
  int motion = 2;  // foreground pixels per frame
  float near_depth = 1.0f;
  float far_depth = 4.0f;
};

// No pixel of the generated frames is pure black.
TwoLayerScene make_two_layer_scene(const TwoLayerSceneConfig& cfg = {});

}  // namespace stereo
