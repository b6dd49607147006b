#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace stereo {

// One left/right correspondence in pixel coordinates.
struct Match {
  double xl = 0, yl = 0, xr = 0, yr = 0;
};

struct MatchSet {
  std::vector<Match> matches;
  int width = 0;
  int height = 0;

  // Throws ValidationError when a coordinate lies outside [0,W]x[0,H].
  void validate_bounds() const;
  MatchSet subset(const std::vector<bool>& keep) const;
};

// CSV with header `xl,yl,xr,yr`.
MatchSet read_matches_csv(const std::filesystem::path& path, int width, int height);
void write_matches_csv(const MatchSet& set, const std::filesystem::path& path);

// Epipolar constraint convention: x_r^T F x_l = 0.
using Mat3 = Eigen::Matrix3d;
using Vec3 = Eigen::Vector3d;

// First-order geometric error in pixels (square root of the Sampson
// approximation).
double sampson_distance(const Mat3& F, const Match& m);

// Normalized 8-point fit on all given matches: Hartley normalization, SVD
// solve, rank-2 enforcement, unit Frobenius norm with a fixed sign.
Mat3 fit_fundamental_8point(const std::vector<Match>& matches);

struct RansacConfig {
  double threshold = 1.0;  // Sampson distance, pixels
  int max_iterations = 2000;
  double confidence = 0.999;
  std::uint64_t seed = 0;
};

struct FundamentalEstimate {
  Mat3 F;
  std::vector<bool> inliers;
  int inlier_count = 0;
  int iterations = 0;
};

// Throws EstimationError with fewer than 8 matches or a final consensus set
// below 8. Deterministic for a given seed.
FundamentalEstimate estimate_fundamental_ransac(const MatchSet& matches, const RansacConfig& cfg);

// Right and left epipoles (homogeneous, unit norm): F^T e_r = 0, F e_l = 0.
Vec3 right_epipole(const Mat3& F);
Vec3 left_epipole(const Mat3& F);

struct RectifyingHomographies {
  Mat3 left;
  Mat3 right;
};

// Uncalibrated rectification: the right transform sends the right epipole to
// infinity along x, the left transform is the matching one whose horizontal
// row best agrees with the right transform at the inlier locations. Throws
// DegenerateGeometryError when an epipole lies inside the image.
RectifyingHomographies compute_rectifying_homographies(const Mat3& F, const MatchSet& inliers);

struct CropRect {
  int x0 = 0, y0 = 0, width = 0, height = 0;
};

struct RectificationResult {
  Mat3 H_left;
  Mat3 H_right;  // includes the horizontal shift
  CropRect crop;
  double shift = 0.0;  // s = -min(x'_l - x'_r); the right view moves by -s in x
  int inlier_count = 0;
  double max_vertical_disparity = 0.0;
  double mean_vertical_disparity = 0.0;
  double min_disparity = 0.0;  // after the shift
  double max_disparity = 0.0;
};

Eigen::Vector2d apply_homography(const Mat3& H, double x, double y);

// Shift so the smallest inlier disparity is zero, then pick the largest
// axis-aligned rectangle of the W x H canvas that both warped images cover.
// Throws CropError when no such rectangle exists.
RectificationResult normalize_shift_and_crop(const Mat3& H_left, const Mat3& H_right,
                                             const MatchSet& inliers);

// True when the clip is kept (max residual vertical disparity <= limit).
bool vertical_disparity_filter(const RectificationResult& result, double limit = 2.0);

// K indices evenly spaced over [0, clip_length-1], rounded, deduplicated.
std::vector<int> sample_frames_uniform(int clip_length, int count = 200);

struct RectifyReport {
  FundamentalEstimate fundamental;
  RectificationResult result;
  bool accepted = false;
};

// estimate -> homographies -> shift/crop -> filter.
RectifyReport rectify_matches(const MatchSet& matches, const RansacConfig& cfg,
                              double vertical_limit = 2.0);

// JSON document with matrices in row-major order.
std::string to_json(const RectifyReport& report);

}  // namespace stereo
