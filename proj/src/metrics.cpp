#include "stereo/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace stereo::metrics {

namespace {

void require_same(const VideoClip& a, const VideoClip& b) {
  if (!a.same_shape(b)) {
    throw ShapeError("metric inputs differ in shape: " + std::to_string(a.size()) + "x" +
                     std::to_string(a.height()) + "x" + std::to_string(a.width()) + " vs " +
                     std::to_string(b.size()) + "x" + std::to_string(b.height()) + "x" +
                     std::to_string(b.width()));
  }
}

using Image = Plane<double>;

Image luma(const Frame& f) {
  Image y(f.height(), f.width());
  for (int r = 0; r < f.height(); ++r) {
    for (int c = 0; c < f.width(); ++c) {
      y(r, c) = 0.299 * f.at(r, c, 0) + 0.587 * f.at(r, c, 1) + 0.114 * f.at(r, c, 2);
    }
  }
  return y;
}

std::vector<double> gaussian_kernel(int size, double sigma) {
  std::vector<double> k(static_cast<std::size_t>(size));
  const double centre = (size - 1) / 2.0;
  double sum = 0.0;
  for (int i = 0; i < size; ++i) {
    const double d = i - centre;
    k[static_cast<std::size_t>(i)] = std::exp(-d * d / (2.0 * sigma * sigma));
    sum += k[static_cast<std::size_t>(i)];
  }
  for (double& v : k) v /= sum;
  return k;
}

// Separable 'valid' correlation.
Image filter_valid(const Image& in, const std::vector<double>& k) {
  const int n = static_cast<int>(k.size());
  const int oh = in.height() - n + 1;
  const int ow = in.width() - n + 1;
  Image rows(in.height(), ow);
  for (int y = 0; y < in.height(); ++y) {
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int i = 0; i < n; ++i) s += k[static_cast<std::size_t>(i)] * in(y, x + i);
      rows(y, x) = s;
    }
  }
  Image out(oh, ow);
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int i = 0; i < n; ++i) s += k[static_cast<std::size_t>(i)] * rows(y + i, x);
      out(y, x) = s;
    }
  }
  return out;
}

Image product(const Image& a, const Image& b) {
  Image out(a.height(), a.width());
  for (std::size_t i = 0; i < out.size(); ++i) out.values()[i] = a.values()[i] * b.values()[i];
  return out;
}

Image downsample2(const Image& in) {
  Image out(in.height() / 2, in.width() / 2);
  for (int y = 0; y < out.height(); ++y) {
    for (int x = 0; x < out.width(); ++x) {
      out(y, x) = 0.25 * (in(2 * y, 2 * x) + in(2 * y, 2 * x + 1) + in(2 * y + 1, 2 * x) +
                          in(2 * y + 1, 2 * x + 1));
    }
  }
  return out;
}

struct SsimTerms {
  double luminance = 0.0;
  double contrast_structure = 0.0;
};

SsimTerms ssim_terms(const Image& a, const Image& b, const std::vector<double>& k, double c1,
                     double c2) {
  const Image mu_a = filter_valid(a, k);
  const Image mu_b = filter_valid(b, k);
  const Image aa = filter_valid(product(a, a), k);
  const Image bb = filter_valid(product(b, b), k);
  const Image ab = filter_valid(product(a, b), k);
  double lum = 0.0, cs = 0.0;
  const std::size_t n = mu_a.size();
  for (std::size_t i = 0; i < n; ++i) {
    const double ma = mu_a.values()[i];
    const double mb = mu_b.values()[i];
    const double va = aa.values()[i] - ma * ma;
    const double vb = bb.values()[i] - mb * mb;
    const double cov = ab.values()[i] - ma * mb;
    lum += (2.0 * ma * mb + c1) / (ma * ma + mb * mb + c1);
    cs += (2.0 * cov + c2) / (va + vb + c2);
  }
  return {lum / static_cast<double>(n), cs / static_cast<double>(n)};
}

}  // namespace

Psnr psnr(const VideoClip& a, const VideoClip& b) {
  require_same(a, b);
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t f = 0; f < a.size(); ++f) {
    const auto va = a[f].values();
    const auto vb = b[f].values();
    for (std::size_t i = 0; i < va.size(); ++i) {
      const double d = static_cast<double>(va[i]) - static_cast<double>(vb[i]);
      sum += d * d;
    }
    count += va.size();
  }
  if (count == 0 || sum == 0.0) return {kPsnrCapDb, true};
  const double mse = sum / static_cast<double>(count);
  return {std::min(kPsnrCapDb, 10.0 * std::log10(1.0 / mse)), false};
}

int feasible_scales(int height, int width, const MsSsimConfig& cfg) {
  int scales = 0;
  int side = std::min(height, width);
  while (scales < static_cast<int>(cfg.weights.size()) && side >= cfg.window) {
    ++scales;
    side /= 2;
  }
  return scales;
}

double ms_ssim_frame(const Frame& fa, const Frame& fb, const MsSsimConfig& cfg) {
  if (!fa.same_shape(fb)) throw ShapeError("MS-SSIM frames differ in size");
  const int scales = feasible_scales(fa.height(), fa.width(), cfg);
  if (scales < 1) {
    throw ShapeError("frames smaller than the " + std::to_string(cfg.window) +
                     "-pixel MS-SSIM window");
  }
  double weight_sum = 0.0;
  for (int s = 0; s < scales; ++s) weight_sum += cfg.weights[static_cast<std::size_t>(s)];

  const auto kernel = gaussian_kernel(cfg.window, cfg.sigma);
  const double c1 = cfg.k1 * cfg.k1;
  const double c2 = cfg.k2 * cfg.k2;
  Image a = luma(fa);
  Image b = luma(fb);
  double score = 1.0;
  for (int s = 0; s < scales; ++s) {
    const SsimTerms t = ssim_terms(a, b, kernel, c1, c2);
    const double w = cfg.weights[static_cast<std::size_t>(s)] / weight_sum;
    double term = t.contrast_structure;
    if (s == scales - 1) term *= t.luminance;
    score *= std::pow(std::max(term, 0.0), w);
    if (s + 1 < scales) {
      a = downsample2(a);
      b = downsample2(b);
    }
  }
  return std::clamp(score, 0.0, 1.0);
}

MsSsim ms_ssim(const VideoClip& a, const VideoClip& b, const MsSsimConfig& cfg) {
  require_same(a, b);
  MsSsim r;
  r.scales = feasible_scales(a.height(), a.width(), cfg);
  r.reduced = r.scales < static_cast<int>(cfg.weights.size());
  if (a.empty()) return r;
  double sum = 0.0;
  for (std::size_t f = 0; f < a.size(); ++f) sum += ms_ssim_frame(a[f], b[f], cfg);
  r.score = sum / static_cast<double>(a.size());
  return r;
}

std::string to_string(Region r) {
  switch (r) {
    case Region::full: return "full";
    case Region::inside_mask: return "inside";
    case Region::outside_mask: return "outside";
  }
  return "unknown";
}

VideoClip white_fill(const VideoClip& clip, std::span<const Mask> mask, Region region) {
  if (region == Region::full) return clip;
  if (mask.size() != clip.size()) throw ShapeError("one mask per frame required");
  std::vector<Frame> frames = clip.frames();
  for (std::size_t f = 0; f < frames.size(); ++f) {
    const Mask& m = mask[f];
    if (m.height() != clip.height() || m.width() != clip.width()) {
      throw ShapeError("mask size differs from frame size");
    }
    for (int y = 0; y < m.height(); ++y) {
      for (int x = 0; x < m.width(); ++x) {
        const bool in_mask = m(y, x) != 0;
        const bool considered = region == Region::inside_mask ? in_mask : !in_mask;
        if (!considered) {
          for (int c = 0; c < Frame::kChannels; ++c) frames[f].at(y, x, c) = 1.0f;
        }
      }
    }
  }
  return VideoClip(std::move(frames), clip.fps());
}

double masked_metric(const VideoClip& a, const VideoClip& b, std::span<const Mask> mask,
                     Region region, Metric metric) {
  require_same(a, b);
  const VideoClip wa = white_fill(a, mask, region);
  const VideoClip wb = white_fill(b, mask, region);
  return metric == Metric::psnr ? psnr(wa, wb).db : ms_ssim(wa, wb).score;
}

MetricReport evaluate(const std::string& video_id, const VideoClip& estimate,
                      const VideoClip& reference, std::span<const Mask> mask, Region region) {
  require_same(estimate, reference);
  const VideoClip wa = white_fill(estimate, mask, region);
  const VideoClip wb = white_fill(reference, mask, region);
  MetricReport r;
  r.video_id = video_id;
  r.region = region;
  r.psnr = psnr(wa, wb);
  const MsSsim s = ms_ssim(wa, wb);
  r.ms_ssim = s.score;
  r.ms_ssim_scales = s.scales;
  return r;
}

MetricReport dataset_aggregate(std::span<const MetricReport> reports) {
  if (reports.empty()) throw ValidationError("cannot aggregate an empty report list");
  MetricReport out;
  out.video_id = "mean";
  out.region = reports.front().region;
  double psnr_sum = 0.0, ssim_sum = 0.0;
  out.ms_ssim_scales = reports.front().ms_ssim_scales;
  for (const MetricReport& r : reports) {
    if (r.region != out.region) throw ValidationError("cannot aggregate reports of mixed regions");
    psnr_sum += r.psnr.infinite ? kPsnrCapDb : r.psnr.db;
    ssim_sum += r.ms_ssim;
    out.capped_videos += r.psnr.infinite ? 1 : r.capped_videos;
    out.ms_ssim_scales = std::min(out.ms_ssim_scales, r.ms_ssim_scales);
  }
  const auto n = static_cast<double>(reports.size());
  out.psnr.db = psnr_sum / n;
  out.psnr.infinite = out.capped_videos == static_cast<int>(reports.size());
  out.ms_ssim = ssim_sum / n;
  return out;
}

}  // namespace stereo::metrics
