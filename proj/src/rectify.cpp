#include "stereo/rectify.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>

#include <json.hpp>

#include "stereo/error.hpp"

namespace stereo {
namespace fs = std::filesystem;

void MatchSet::validate_bounds() const {
  if (width <= 0 || height <= 0) throw ValidationError("match set needs positive frame dimensions");
  for (std::size_t i = 0; i < matches.size(); ++i) {
    const Match& m = matches[i];
    const bool ok = m.xl >= 0 && m.xl <= width && m.xr >= 0 && m.xr <= width && m.yl >= 0 &&
                    m.yl <= height && m.yr >= 0 && m.yr <= height;
    if (!ok) {
      throw ValidationError("match " + std::to_string(i) + " lies outside the " +
                            std::to_string(width) + "x" + std::to_string(height) + " frame");
    }
  }
}

MatchSet MatchSet::subset(const std::vector<bool>& keep) const {
  MatchSet out{{}, width, height};
  for (std::size_t i = 0; i < matches.size() && i < keep.size(); ++i) {
    if (keep[i]) out.matches.push_back(matches[i]);
  }
  return out;
}

namespace {

double parse_double(std::string_view field, const fs::path& path, std::size_t line) {
  while (!field.empty() && std::isspace(static_cast<unsigned char>(field.front()))) field.remove_prefix(1);
  while (!field.empty() && std::isspace(static_cast<unsigned char>(field.back()))) field.remove_suffix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc{} || ptr != field.data() + field.size() || !std::isfinite(v)) {
    throw FormatError(path.string(),
                      "line " + std::to_string(line) + ": bad number '" + std::string(field) + "'");
  }
  return v;
}

}  // namespace

MatchSet read_matches_csv(const fs::path& path, int width, int height) {
  std::error_code ec;
  if (!fs::is_regular_file(path, ec)) throw IoError(path.string(), "no such file");
  std::ifstream in(path);
  if (!in) throw IoError(path.string(), "cannot open for reading");
  std::string line;
  if (!std::getline(in, line)) throw FormatError(path.string(), "empty file");
  std::erase_if(line, [](char c) { return std::isspace(static_cast<unsigned char>(c)); });
  if (line != "xl,yl,xr,yr") throw FormatError(path.string(), "header must be 'xl,yl,xr,yr'");

  MatchSet set{{}, width, height};
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::array<double, 4> v{};
    std::string_view rest(line);
    for (int k = 0; k < 4; ++k) {
      const auto comma = rest.find(',');
      if ((k < 3) != (comma != std::string_view::npos)) {
        throw FormatError(path.string(), "line " + std::to_string(line_no) + ": expected 4 fields");
      }
      v[static_cast<std::size_t>(k)] = parse_double(rest.substr(0, comma), path, line_no);
      if (comma != std::string_view::npos) rest.remove_prefix(comma + 1);
    }
    set.matches.push_back({v[0], v[1], v[2], v[3]});
  }
  set.validate_bounds();
  return set;
}

void write_matches_csv(const MatchSet& set, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError(path.string(), "cannot open for writing");
  out << "xl,yl,xr,yr\n" << std::setprecision(17);
  for (const Match& m : set.matches) out << m.xl << ',' << m.yl << ',' << m.xr << ',' << m.yr << '\n';
}

double sampson_distance(const Mat3& F, const Match& m) {
  const Vec3 pl(m.xl, m.yl, 1.0);
  const Vec3 pr(m.xr, m.yr, 1.0);
  const Vec3 Fpl = F * pl;
  const Vec3 Ftpr = F.transpose() * pr;
  const double num = pr.dot(Fpl);
  const double den = Fpl(0) * Fpl(0) + Fpl(1) * Fpl(1) + Ftpr(0) * Ftpr(0) + Ftpr(1) * Ftpr(1);
  if (den <= 0.0) return num == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  return std::abs(num) / std::sqrt(den);
}

namespace {

// Similarity moving the centroid to the origin with mean distance sqrt(2).
Mat3 isotropic_normalization(const std::vector<Eigen::Vector2d>& pts) {
  Eigen::Vector2d c = Eigen::Vector2d::Zero();
  for (const auto& p : pts) c += p;
  c /= static_cast<double>(pts.size());
  double mean_dist = 0.0;
  for (const auto& p : pts) mean_dist += (p - c).norm();
  mean_dist /= static_cast<double>(pts.size());
  const double s = mean_dist > 0.0 ? std::numbers::sqrt2 / mean_dist : 1.0;
  Mat3 T;
  T << s, 0, -s * c.x(), 0, s, -s * c.y(), 0, 0, 1;
  return T;
}

// Unit Frobenius norm; the largest-magnitude entry is made positive.
Mat3 canonical_scale(Mat3 F) {
  const double n = F.norm();
  if (n > 0.0) F /= n;
  Eigen::Index r = 0, c = 0;
  F.cwiseAbs().maxCoeff(&r, &c);
  if (F(r, c) < 0.0) F = -F;
  return F;
}

}  // namespace

Mat3 fit_fundamental_8point(const std::vector<Match>& matches) {
  if (matches.size() < 8) {
    throw EstimationError("8-point fit needs at least 8 matches, got " +
                          std::to_string(matches.size()));
  }
  std::vector<Eigen::Vector2d> left, right;
  left.reserve(matches.size());
  right.reserve(matches.size());
  for (const Match& m : matches) {
    left.emplace_back(m.xl, m.yl);
    right.emplace_back(m.xr, m.yr);
  }
  const Mat3 Tl = isotropic_normalization(left);
  const Mat3 Tr = isotropic_normalization(right);

  Eigen::MatrixXd A(static_cast<Eigen::Index>(matches.size()), 9);
  for (std::size_t i = 0; i < matches.size(); ++i) {
    const Vec3 l = Tl * Vec3(left[i].x(), left[i].y(), 1.0);
    const Vec3 r = Tr * Vec3(right[i].x(), right[i].y(), 1.0);
    A.row(static_cast<Eigen::Index>(i)) << r(0) * l(0), r(0) * l(1), r(0), r(1) * l(0),
        r(1) * l(1), r(1), l(0), l(1), 1.0;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeFullV);
  const Eigen::VectorXd f = svd.matrixV().col(8);
  Mat3 Fn;
  Fn << f(0), f(1), f(2), f(3), f(4), f(5), f(6), f(7), f(8);

  Eigen::JacobiSVD<Mat3> rank(Fn, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Vec3 sv = rank.singularValues();
  sv(2) = 0.0;
  Fn = rank.matrixU() * sv.asDiagonal() * rank.matrixV().transpose();
  return canonical_scale(Tr.transpose() * Fn * Tl);
}

namespace {

// Unbiased draw in [0, n) from the raw 64-bit engine, so results do not
// depend on the standard library's distribution implementation.
std::uint64_t draw_below(std::mt19937_64& rng, std::uint64_t n) {
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t v = rng();
  while (v >= limit) v = rng();
  return v % n;
}

std::vector<bool> classify(const Mat3& F, const std::vector<Match>& matches, double threshold,
                           int& count) {
  std::vector<bool> in(matches.size());
  count = 0;
  for (std::size_t i = 0; i < matches.size(); ++i) {
    in[i] = sampson_distance(F, matches[i]) <= threshold;
    count += in[i];
  }
  return in;
}

}  // namespace

FundamentalEstimate estimate_fundamental_ransac(const MatchSet& set, const RansacConfig& cfg) {
  const auto& matches = set.matches;
  const std::size_t n = matches.size();
  if (n < 8) {
    throw EstimationError("fundamental matrix estimation needs at least 8 matches, got " +
                          std::to_string(n));
  }
  if (!(cfg.threshold > 0.0) || cfg.max_iterations < 1 || !(cfg.confidence > 0.0) ||
      !(cfg.confidence < 1.0)) {
    throw ValidationError("invalid RANSAC configuration");
  }

  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;

  int best_count = -1;
  std::vector<bool> best_inliers;
  int limit = cfg.max_iterations;
  int it = 0;
  std::vector<Match> sample(8);
  for (; it < limit; ++it) {
    for (std::size_t k = 0; k < 8; ++k) {
      const std::size_t j = k + static_cast<std::size_t>(draw_below(rng, n - k));
      std::swap(order[k], order[j]);
      sample[k] = matches[order[k]];
    }
    const Mat3 F = fit_fundamental_8point(sample);
    int count = 0;
    auto inliers = classify(F, matches, cfg.threshold, count);
    if (count > best_count) {
      best_count = count;
      best_inliers = std::move(inliers);
      const double w = static_cast<double>(count) / static_cast<double>(n);
      const double p_good = std::pow(w, 8);
      if (p_good >= 1.0) {
        limit = std::min(limit, it + 1);
      } else if (p_good > 0.0) {
        const double needed = std::log(1.0 - cfg.confidence) / std::log(1.0 - p_good);
        if (needed < static_cast<double>(limit)) {
          limit = std::max(it + 1, static_cast<int>(std::ceil(needed)));
        }
      }
    }
  }

  if (best_count < 8) {
    throw EstimationError("RANSAC consensus set has " + std::to_string(std::max(best_count, 0)) +
                          " matches, need 8");
  }

  // Refit on the consensus set until it stops changing.
  FundamentalEstimate est;
  est.iterations = it;
  std::vector<bool> current = best_inliers;
  for (int round = 0; round < 10; ++round) {
    std::vector<Match> consensus;
    for (std::size_t i = 0; i < n; ++i) {
      if (current[i]) consensus.push_back(matches[i]);
    }
    if (consensus.size() < 8) {
      throw EstimationError("RANSAC consensus set has " + std::to_string(consensus.size()) +
                            " matches after refit, need 8");
    }
    est.F = fit_fundamental_8point(consensus);
    int count = 0;
    auto next = classify(est.F, matches, cfg.threshold, count);
    est.inlier_count = count;
    const bool stable = next == current;
    current = std::move(next);
    if (stable) break;
  }
  if (est.inlier_count < 8) {
    throw EstimationError("RANSAC consensus set has " + std::to_string(est.inlier_count) +
                          " matches after refit, need 8");
  }
  est.inliers = std::move(current);
  return est;
}

Vec3 right_epipole(const Mat3& F) {
  Eigen::JacobiSVD<Mat3> svd(F, Eigen::ComputeFullU);
  return svd.matrixU().col(2);
}

Vec3 left_epipole(const Mat3& F) {
  Eigen::JacobiSVD<Mat3> svd(F, Eigen::ComputeFullV);
  return svd.matrixV().col(2);
}

Eigen::Vector2d apply_homography(const Mat3& H, double x, double y) {
  const Vec3 p = H * Vec3(x, y, 1.0);
  return {p(0) / p(2), p(1) / p(2)};
}

namespace {

bool epipole_inside(const Vec3& e, int width, int height) {
  if (std::abs(e(2)) <= 1e-12 * e.norm()) return false;
  const double x = e(0) / e(2);
  const double y = e(1) / e(2);
  return x >= 0.0 && x <= width && y >= 0.0 && y <= height;
}

Mat3 skew(const Vec3& v) {
  Mat3 S;
  S << 0, -v(2), v(1), v(2), 0, -v(0), -v(1), v(0), 0;
  return S;
}

Mat3 translation(double tx, double ty) {
  Mat3 T = Mat3::Identity();
  T(0, 2) = tx;
  T(1, 2) = ty;
  return T;
}

}  // namespace

RectifyingHomographies compute_rectifying_homographies(const Mat3& F, const MatchSet& inliers) {
  if (inliers.matches.size() < 8) {
    throw EstimationError("rectification needs at least 8 inliers");
  }
  const int width = inliers.width;
  const int height = inliers.height;
  const Vec3 er = right_epipole(F);
  const Vec3 el = left_epipole(F);
  if (epipole_inside(er, width, height) || epipole_inside(el, width, height)) {
    throw DegenerateGeometryError("epipole lies inside the image; rectification is unstable");
  }

  // Right view: centre, rotate the epipole onto the x axis by the smaller
  // of the two possible angles, then send it to infinity.
  const double cx = 0.5 * width;
  const double cy = 0.5 * height;
  const Mat3 T = translation(-cx, -cy);
  const Mat3 T_inv = translation(cx, cy);
  const Vec3 ec = T * er;
  double theta = -std::atan2(ec(1), ec(0));
  if (theta > std::numbers::pi / 2) theta -= std::numbers::pi;
  if (theta < -std::numbers::pi / 2) theta += std::numbers::pi;
  Mat3 R = Mat3::Identity();
  R(0, 0) = std::cos(theta);
  R(0, 1) = -std::sin(theta);
  R(1, 0) = std::sin(theta);
  R(1, 1) = std::cos(theta);
  const Vec3 rotated = R * ec;
  Mat3 G = Mat3::Identity();
  if (rotated(2) != 0.0 && rotated(0) != 0.0) G(2, 0) = -rotated(2) / rotated(0);
  const Mat3 H_right = T_inv * G * R * T;

  // Left view: a homography compatible with F, then the horizontal affine
  // correction fitted over the inliers.
  const Vec3 e = er.normalized();
  const Mat3 M = skew(e) * F + e * e.transpose();
  const Mat3 H0 = H_right * M;

  const auto n = static_cast<Eigen::Index>(inliers.matches.size());
  Eigen::MatrixXd A(n, 3);
  Eigen::VectorXd b(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Match& m = inliers.matches[static_cast<std::size_t>(i)];
    const Eigen::Vector2d u = apply_homography(H0, m.xl, m.yl);
    A.row(i) << u.x(), u.y(), 1.0;
    b(i) = apply_homography(H_right, m.xl, m.yl).x();
  }
  const Eigen::Vector3d abc = A.colPivHouseholderQr().solve(b);
  Mat3 HA = Mat3::Identity();
  HA.row(0) = abc.transpose();
  Mat3 H_left = HA * H0;

  // Scale so the image centre keeps homogeneous coordinate 1.
  const auto centre_scale = [cx, cy](const Mat3& H) -> Mat3 {
    const double w = (H * Vec3(cx, cy, 1.0))(2);
    if (!(std::abs(w) > 1e-12)) {
      throw DegenerateGeometryError("rectifying transform sends the image centre to infinity");
    }
    return H / w;
  };
  return {centre_scale(H_left), centre_scale(H_right)};
}

namespace {

// Largest all-true rectangle in a row-major grid (histogram-stack method).
// Returns width 0 when the grid has no true cell.
CropRect largest_rectangle(const std::vector<std::uint8_t>& cells, int width, int height) {
  CropRect best;
  long best_area = 0;
  std::vector<int> heights(static_cast<std::size_t>(width), 0);
  std::vector<int> stack;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const auto idx = static_cast<std::size_t>(y) * static_cast<std::size_t>(width) +
                       static_cast<std::size_t>(x);
      heights[static_cast<std::size_t>(x)] = cells[idx] ? heights[static_cast<std::size_t>(x)] + 1 : 0;
    }
    stack.clear();
    for (int x = 0; x <= width; ++x) {
      const int h = x < width ? heights[static_cast<std::size_t>(x)] : 0;
      while (!stack.empty() && heights[static_cast<std::size_t>(stack.back())] >= h) {
        const int top = stack.back();
        stack.pop_back();
        const int left = stack.empty() ? 0 : stack.back() + 1;
        const int bar = heights[static_cast<std::size_t>(top)];
        const long area = static_cast<long>(bar) * (x - left);
        if (area > best_area) {
          best_area = area;
          best = {left, y - bar + 1, x - left, bar};
        }
      }
      stack.push_back(x);
    }
  }
  return best;
}

// Canvas grid points (x, y) in [0,W]x[0,H] whose preimage under H is inside
// the source image.
std::vector<std::uint8_t> covered_points(const Mat3& H, int width, int height) {
  const Mat3 Hinv = H.inverse();
  std::vector<std::uint8_t> inside(static_cast<std::size_t>(width + 1) *
                                   static_cast<std::size_t>(height + 1));
  constexpr double eps = 1e-9;
  for (int y = 0; y <= height; ++y) {
    for (int x = 0; x <= width; ++x) {
      const Vec3 p = Hinv * Vec3(x, y, 1.0);
      bool ok = p(2) > 0.0;
      if (ok) {
        const double sx = p(0) / p(2);
        const double sy = p(1) / p(2);
        ok = sx >= -eps && sx <= width + eps && sy >= -eps && sy <= height + eps;
      }
      inside[static_cast<std::size_t>(y) * static_cast<std::size_t>(width + 1) +
             static_cast<std::size_t>(x)] = ok;
    }
  }
  return inside;
}

}  // namespace

RectificationResult normalize_shift_and_crop(const Mat3& H_left, const Mat3& H_right,
                                             const MatchSet& inliers) {
  if (inliers.matches.empty()) throw EstimationError("no inlier matches to normalize");
  const int width = inliers.width;
  const int height = inliers.height;
  if (width <= 0 || height <= 0) throw ValidationError("frame dimensions must be positive");

  double min_disp = std::numeric_limits<double>::infinity();
  for (const Match& m : inliers.matches) {
    const double d =
        apply_homography(H_left, m.xl, m.yl).x() - apply_homography(H_right, m.xr, m.yr).x();
    min_disp = std::min(min_disp, d);
  }

  RectificationResult r;
  r.shift = -min_disp;
  r.H_left = H_left;
  r.H_right = translation(-r.shift, 0.0) * H_right;
  r.inlier_count = static_cast<int>(inliers.matches.size());

  double sum_vertical = 0.0;
  r.min_disparity = std::numeric_limits<double>::infinity();
  r.max_disparity = -std::numeric_limits<double>::infinity();
  for (const Match& m : inliers.matches) {
    const auto pl = apply_homography(r.H_left, m.xl, m.yl);
    const auto pr = apply_homography(r.H_right, m.xr, m.yr);
    const double dv = std::abs(pl.y() - pr.y());
    sum_vertical += dv;
    r.max_vertical_disparity = std::max(r.max_vertical_disparity, dv);
    r.min_disparity = std::min(r.min_disparity, pl.x() - pr.x());
    r.max_disparity = std::max(r.max_disparity, pl.x() - pr.x());
  }
  r.mean_vertical_disparity = sum_vertical / static_cast<double>(inliers.matches.size());

  const auto in_left = covered_points(r.H_left, width, height);
  const auto in_right = covered_points(r.H_right, width, height);
  const auto stride = static_cast<std::size_t>(width + 1);
  std::vector<std::uint8_t> cells(static_cast<std::size_t>(width) * static_cast<std::size_t>(height));
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      bool ok = true;
      for (int dy = 0; dy <= 1 && ok; ++dy) {
        for (int dx = 0; dx <= 1 && ok; ++dx) {
          const auto k = static_cast<std::size_t>(y + dy) * stride + static_cast<std::size_t>(x + dx);
          ok = in_left[k] && in_right[k];
        }
      }
      cells[static_cast<std::size_t>(y) * static_cast<std::size_t>(width) +
            static_cast<std::size_t>(x)] = ok;
    }
  }
  r.crop = largest_rectangle(cells, width, height);
  if (r.crop.width == 0 || r.crop.height == 0) {
    throw CropError("rectified views share no valid region inside the frame");
  }
  return r;
}

bool vertical_disparity_filter(const RectificationResult& result, double limit) {
  return !(result.max_vertical_disparity > limit);
}

std::vector<int> sample_frames_uniform(int clip_length, int count) {
  if (clip_length < 1) throw ValidationError("clip length must be >= 1");
  if (count < 1) throw ValidationError("sample count must be >= 1");
  std::vector<int> out;
  if (count == 1) return {0};
  for (int i = 0; i < count; ++i) {
    const double pos = static_cast<double>(i) * (clip_length - 1) / (count - 1);
    const int idx = static_cast<int>(std::floor(pos + 0.5));
    if (out.empty() || out.back() != idx) out.push_back(idx);
  }
  return out;
}

RectifyReport rectify_matches(const MatchSet& matches, const RansacConfig& cfg,
                              double vertical_limit) {
  RectifyReport report;
  report.fundamental = estimate_fundamental_ransac(matches, cfg);
  const MatchSet inliers = matches.subset(report.fundamental.inliers);
  const auto H = compute_rectifying_homographies(report.fundamental.F, inliers);
  report.result = normalize_shift_and_crop(H.left, H.right, inliers);
  report.accepted = vertical_disparity_filter(report.result, vertical_limit);
  return report;
}

namespace {

nlohmann::json matrix_json(const Mat3& M) {
  nlohmann::json rows = nlohmann::json::array();
  for (int r = 0; r < 3; ++r) rows.push_back({M(r, 0), M(r, 1), M(r, 2)});
  return rows;
}

}  // namespace

std::string to_json(const RectifyReport& report) {
  const auto& r = report.result;
  nlohmann::json j;
  j["fundamental_matrix"] = matrix_json(report.fundamental.F);
  j["ransac_iterations"] = report.fundamental.iterations;
  j["inlier_count"] = r.inlier_count;
  j["H_left"] = matrix_json(r.H_left);
  j["H_right"] = matrix_json(r.H_right);
  j["shift"] = r.shift;
  j["crop"] = {{"x0", r.crop.x0}, {"y0", r.crop.y0}, {"width", r.crop.width},
               {"height", r.crop.height}};
  j["vertical_disparity"] = {{"max", r.max_vertical_disparity},
                             {"mean", r.mean_vertical_disparity}};
  j["disparity_range"] = {{"min", r.min_disparity}, {"max", r.max_disparity}};
  j["accepted"] = report.accepted;
  return j.dump(2);
}

}  // namespace stereo
