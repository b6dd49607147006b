#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "stereo/attention.hpp"
#include "stereo/image.hpp"
#include "stereo/rectify.hpp"

namespace testing {

namespace fs = std::filesystem;

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag);
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const fs::path& path() const noexcept { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

stereo::Frame random_frame(int height, int width, std::mt19937_64& rng);
stereo::VideoClip random_clip(int frames, int height, int width, std::mt19937_64& rng);
stereo::VideoClip constant_clip(int frames, int height, int width, float value);
std::vector<stereo::Mask> zero_masks(int frames, int height, int width);
std::vector<stereo::Mask> random_masks(int frames, int height, int width, double p,
                                       std::mt19937_64& rng);

// Destination enumeration: for every target pixel, scan all sources of the
// row, keep those that land there, pick the largest disparity (then smallest
// source x). Nearest rounding only.
struct SplatOracle {
  stereo::Frame warped;
  stereo::Mask mask;
};
SplatOracle splat_by_destination(const stereo::Frame& left, const stereo::DisparityMap& d);

// Straight-loop attention over an explicit key predicate.
namespace att = stereo::attention;
att::TokenGrid dense_attention(const att::TokenGrid& x, const att::AttentionParams& p,
                               const std::function<bool(int q, int k)>& allowed);
std::function<bool(int, int)> key_rule(const att::TokenGrid& x, att::Pattern pattern,
                                       const att::AttentionMask* mask);

att::TokenGrid random_tokens(int n, int h, int w, int c, std::mt19937_64& rng);
att::AttentionParams random_params(int c, std::mt19937_64& rng);
att::AttentionMask random_attention_mask(int n, int h, int w, double p, std::mt19937_64& rng);

// Largest |a-n| / max(|a|, |n|, 1e-6) between analytic gradients and central
// differences of sum(upstream .* out).
double gradient_check(const att::TokenGrid& x, const att::AttentionParams& p,
                      att::Pattern pattern, const att::AttentionMask* mask,
                      const att::TokenGrid& upstream, double step = 1e-5);

// Non-separable, scalar MS-SSIM written directly from the definition.
double naive_ms_ssim(const stereo::Frame& a, const stereo::Frame& b);

// Two pinhole cameras looking at random points; F = K^-T [t]x R K^-1.
struct TwoViewScene {
  stereo::Mat3 F;
  stereo::MatchSet matches;
  std::vector<bool> outlier;
};
TwoViewScene make_two_view(int count, double outlier_fraction, std::uint64_t seed,
                           bool rectified = false);
double sampson(const stereo::Mat3& F, const stereo::Match& m);

// std::system wrapper returning the exit status.
int run_command(const std::string& cmd);
std::string read_bytes(const fs::path& p);

}  // namespace testing
