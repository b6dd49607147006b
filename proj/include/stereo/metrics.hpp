#pragma once

#include <span>
#include <string>
#include <vector>

#include "stereo/image.hpp"

namespace stereo::metrics {

// PSNR of identical inputs is reported as infinite and enters averages at
// this value.
inline constexpr double kPsnrCapDb = 100.0;

struct Psnr {
  double db = 0.0;  // kPsnrCapDb when infinite
  bool infinite = false;
};

// 10 log10(1 / MSE) over every pixel and channel of the clip, values in [0,1].
Psnr psnr(const VideoClip& a, const VideoClip& b);

struct MsSsimConfig {
  int window = 11;
  double sigma = 1.5;
  std::vector<double> weights{0.0448, 0.2856, 0.3001, 0.2363, 0.1333};
  double k1 = 0.01;
  double k2 = 0.03;
};

struct MsSsim {
  double score = 0.0;
  int scales = 0;
  bool reduced = false;  // fewer scales than weights because the frame is small
};

// Largest scale count M with min(H, W) / 2^(M-1) >= window, capped at the
// number of weights.
int feasible_scales(int height, int width, const MsSsimConfig& cfg = {});

// Rec.601 luma, 11x11 Gaussian window, valid-region SSIM maps, 2x2 average
// pooling between scales. Negative contrast terms clamp to 0. Clip score is
// the mean over frames.
MsSsim ms_ssim(const VideoClip& a, const VideoClip& b, const MsSsimConfig& cfg = {});
double ms_ssim_frame(const Frame& a, const Frame& b, const MsSsimConfig& cfg = {});

enum class Region { full, inside_mask, outside_mask };
enum class Metric { psnr, ms_ssim };

std::string to_string(Region r);

// Pixels outside the considered region become white (1.0) in both clips.
VideoClip white_fill(const VideoClip& clip, std::span<const Mask> mask, Region region);

struct MetricReport {
  std::string video_id;
  Region region = Region::full;
  Psnr psnr;
  double ms_ssim = 0.0;
  int ms_ssim_scales = 0;
  int capped_videos = 0;  // infinite PSNRs that entered a mean at the cap
};

// Single metric on white-filled clips; PSNR in dB (capped), MS-SSIM score.
double masked_metric(const VideoClip& a, const VideoClip& b, std::span<const Mask> mask,
                     Region region, Metric metric);

// Both metrics for one video and region.
MetricReport evaluate(const std::string& video_id, const VideoClip& estimate,
                      const VideoClip& reference, std::span<const Mask> mask, Region region);

// Arithmetic mean; infinite PSNRs contribute kPsnrCapDb and are counted in
// capped_videos. The mean is flagged infinite only if every input was.
MetricReport dataset_aggregate(std::span<const MetricReport> reports);

}  // namespace stereo::metrics
