#include "support.hpp"

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace testing {

TempDir::TempDir(const std::string& tag) {
  static std::atomic<int> counter{0};
  path_ = fs::temp_directory_path() /
          ("stereo_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
  fs::remove_all(path_);
  fs::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

stereo::Frame random_frame(int height, int width, std::mt19937_64& rng) {
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  stereo::Frame f(height, width);
  for (float& v : f.values()) v = u(rng);
  return f;
}

stereo::VideoClip random_clip(int frames, int height, int width, std::mt19937_64& rng) {
  std::vector<stereo::Frame> v;
  for (int i = 0; i < frames; ++i) v.push_back(random_frame(height, width, rng));
  return stereo::VideoClip(std::move(v));
}

stereo::VideoClip constant_clip(int frames, int height, int width, float value) {
  return stereo::VideoClip(std::vector<stereo::Frame>(static_cast<std::size_t>(frames),
                                                      stereo::Frame(height, width, value)));
}

std::vector<stereo::Mask> zero_masks(int frames, int height, int width) {
  return std::vector<stereo::Mask>(static_cast<std::size_t>(frames),
                                   stereo::Mask(height, width, std::uint8_t{0}));
}

std::vector<stereo::Mask> random_masks(int frames, int height, int width, double p,
                                       std::mt19937_64& rng) {
  std::bernoulli_distribution b(p);
  auto out = zero_masks(frames, height, width);
  for (auto& m : out) {
    for (auto& v : m.values()) v = b(rng) ? 1 : 0;
  }
  return out;
}

SplatOracle splat_by_destination(const stereo::Frame& left, const stereo::DisparityMap& d) {
  const int H = left.height(), W = left.width();
  SplatOracle o{stereo::Frame(H, W), stereo::Mask(H, W, std::uint8_t{1})};
  for (int y = 0; y < H; ++y) {
    for (int t = 0; t < W; ++t) {
      int best = -1;
      for (int s = 0; s < W; ++s) {
        const double dest = std::floor(s - static_cast<double>(d(y, s)) + 0.5);
        if (static_cast<int>(dest) != t) continue;
        if (best < 0 || d(y, s) > d(y, best)) best = s;
      }
      if (best < 0) continue;
      o.mask(y, t) = 0;
      for (int c = 0; c < 3; ++c) o.warped.at(y, t, c) = left.at(y, best, c);
    }
  }
  return o;
}

att::TokenGrid dense_attention(const att::TokenGrid& x, const att::AttentionParams& p,
                               const std::function<bool(int, int)>& allowed) {
  const int n = x.tokens(), c = x.channels;
  auto project = [&](const Eigen::MatrixXd& w, int t, int i) {
    double s = 0.0;
    for (int j = 0; j < c; ++j) s += w(i, j) * x.at(t, j);
    return s;
  };
  std::vector<double> q(static_cast<std::size_t>(n * c)), k(q.size()), v(q.size());
  for (int t = 0; t < n; ++t) {
    for (int i = 0; i < c; ++i) {
      q[static_cast<std::size_t>(t * c + i)] = project(p.wq, t, i);
      k[static_cast<std::size_t>(t * c + i)] = project(p.wk, t, i);
      v[static_cast<std::size_t>(t * c + i)] = project(p.wv, t, i);
    }
  }
  const double scale = 1.0 / std::sqrt(static_cast<double>(c));
  att::TokenGrid out(x.frames, x.height, x.width, c);
  for (int a = 0; a < n; ++a) {
    std::vector<double> score(static_cast<std::size_t>(n), 0.0);
    double top = -1e300;
    for (int b = 0; b < n; ++b) {
      if (!allowed(a, b)) continue;
      double s = 0.0;
      for (int i = 0; i < c; ++i) {
        s += q[static_cast<std::size_t>(a * c + i)] * k[static_cast<std::size_t>(b * c + i)];
      }
      score[static_cast<std::size_t>(b)] = s * scale;
      top = std::max(top, s * scale);
    }
    double z = 0.0;
    for (int b = 0; b < n; ++b) {
      if (allowed(a, b)) z += std::exp(score[static_cast<std::size_t>(b)] - top);
    }
    for (int b = 0; b < n; ++b) {
      if (!allowed(a, b)) continue;
      const double w = std::exp(score[static_cast<std::size_t>(b)] - top) / z;
      for (int i = 0; i < c; ++i) out.at(a, i) += w * v[static_cast<std::size_t>(b * c + i)];
    }
  }
  return out;
}

std::function<bool(int, int)> key_rule(const att::TokenGrid& x, att::Pattern pattern,
                                       const att::AttentionMask* mask) {
  const int hw = x.height * x.width;
  switch (pattern) {
    case att::Pattern::spatial: return [hw](int a, int b) { return a / hw == b / hw; };
    case att::Pattern::temporal: return [hw](int a, int b) { return a % hw == b % hw; };
    case att::Pattern::full: return [](int, int) { return true; };
    case att::Pattern::masked_full:
      return [hw, mask](int a, int b) {
        return mask->flags[static_cast<std::size_t>(a)] != 0 || a / hw == b / hw;
      };
  }
  return {};
}

att::TokenGrid random_tokens(int n, int h, int w, int c, std::mt19937_64& rng) {
  std::normal_distribution<double> nd(0.0, 1.0);
  att::TokenGrid g(n, h, w, c);
  for (double& v : g.data) v = nd(rng);
  return g;
}

att::AttentionParams random_params(int c, std::mt19937_64& rng) {
  std::normal_distribution<double> nd(0.0, 0.5);
  auto m = [&] {
    Eigen::MatrixXd w(c, c);
    for (int i = 0; i < c; ++i) {
      for (int j = 0; j < c; ++j) w(i, j) = nd(rng);
    }
    return w;
  };
  att::AttentionParams p;
  p.wq = m();
  p.wk = m();
  p.wv = m();
  return p;
}

att::AttentionMask random_attention_mask(int n, int h, int w, double p, std::mt19937_64& rng) {
  std::bernoulli_distribution b(p);
  att::AttentionMask m(n, h, w);
  for (auto& f : m.flags) f = b(rng) ? 1 : 0;
  return m;
}

namespace {

double objective(const att::TokenGrid& x, const att::AttentionParams& p, att::Pattern pattern,
                 const att::AttentionMask* mask, const att::TokenGrid& up) {
  const att::TokenGrid out = att::attend(x, p, pattern, mask).out;
  double s = 0.0;
  for (std::size_t i = 0; i < out.data.size(); ++i) s += out.data[i] * up.data[i];
  return s;
}

double rel(double a, double n) { return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-6}); }

}  // namespace

double gradient_check(const att::TokenGrid& x, const att::AttentionParams& p,
                      att::Pattern pattern, const att::AttentionMask* mask,
                      const att::TokenGrid& up, double h) {
  const att::AttentionGradients g = att::attention_backward(x, p, pattern, mask, up);
  double worst = 0.0;
  att::TokenGrid xp = x;
  for (std::size_t i = 0; i < x.data.size(); ++i) {
    xp.data[i] = x.data[i] + h;
    const double fp = objective(xp, p, pattern, mask, up);
    xp.data[i] = x.data[i] - h;
    const double fm = objective(xp, p, pattern, mask, up);
    xp.data[i] = x.data[i];
    worst = std::max(worst, rel(g.dx.data[i], (fp - fm) / (2 * h)));
  }
  const Eigen::MatrixXd* grads[] = {&g.dwq, &g.dwk, &g.dwv};
  for (int which = 0; which < 3; ++which) {
    att::AttentionParams q = p;
    Eigen::MatrixXd& w = which == 0 ? q.wq : which == 1 ? q.wk : q.wv;
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (Eigen::Index c = 0; c < w.cols(); ++c) {
        const double orig = w(r, c);
        w(r, c) = orig + h;
        const double fp = objective(x, q, pattern, mask, up);
        w(r, c) = orig - h;
        const double fm = objective(x, q, pattern, mask, up);
        w(r, c) = orig;
        worst = std::max(worst, rel((*grads[which])(r, c), (fp - fm) / (2 * h)));
      }
    }
  }
  return worst;
}

namespace {

using Img = std::vector<std::vector<double>>;

Img to_luma(const stereo::Frame& f) {
  Img y(static_cast<std::size_t>(f.height()), std::vector<double>(static_cast<std::size_t>(f.width())));
  for (int r = 0; r < f.height(); ++r) {
    for (int c = 0; c < f.width(); ++c) {
      y[r][c] = 0.299 * f.at(r, c, 0) + 0.587 * f.at(r, c, 1) + 0.114 * f.at(r, c, 2);
    }
  }
  return y;
}

Img halve(const Img& a) {
  const std::size_t h = a.size() / 2, w = a[0].size() / 2;
  Img o(h, std::vector<double>(w));
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      o[r][c] = (a[2 * r][2 * c] + a[2 * r][2 * c + 1] + a[2 * r + 1][2 * c] + a[2 * r + 1][2 * c + 1]) / 4;
    }
  }
  return o;
}

}  // namespace

double naive_ms_ssim(const stereo::Frame& fa, const stereo::Frame& fb) {
  const double weights[5] = {0.0448, 0.2856, 0.3001, 0.2363, 0.1333};
  double g[11][11], gs = 0.0;
  for (int i = 0; i < 11; ++i) {
    for (int j = 0; j < 11; ++j) {
      g[i][j] = std::exp(-((i - 5) * (i - 5) + (j - 5) * (j - 5)) / (2 * 1.5 * 1.5));
      gs += g[i][j];
    }
  }
  int scales = 0;
  for (int side = std::min(fa.height(), fa.width()); scales < 5 && side >= 11; side /= 2) ++scales;
  double wsum = 0.0;
  for (int s = 0; s < scales; ++s) wsum += weights[s];

  Img a = to_luma(fa), b = to_luma(fb);
  const double c1 = 0.0001, c2 = 0.0009;
  double result = 1.0;
  for (int s = 0; s < scales; ++s) {
    const int H = static_cast<int>(a.size()), W = static_cast<int>(a[0].size());
    double lum = 0.0, cs = 0.0;
    int count = 0;
    for (int y = 0; y + 11 <= H; ++y) {
      for (int x = 0; x + 11 <= W; ++x) {
        double ma = 0, mb = 0, aa = 0, bb = 0, ab = 0;
        for (int i = 0; i < 11; ++i) {
          for (int j = 0; j < 11; ++j) {
            const double w = g[i][j] / gs, va = a[y + i][x + j], vb = b[y + i][x + j];
            ma += w * va;
            mb += w * vb;
            aa += w * va * va;
            bb += w * vb * vb;
            ab += w * va * vb;
          }
        }
        lum += (2 * ma * mb + c1) / (ma * ma + mb * mb + c1);
        cs += (2 * (ab - ma * mb) + c2) / ((aa - ma * ma) + (bb - mb * mb) + c2);
        ++count;
      }
    }
    double term = cs / count;
    if (s == scales - 1) term *= lum / count;
    result *= std::pow(std::max(term, 0.0), weights[s] / wsum);
    a = halve(a);
    b = halve(b);
  }
  return std::clamp(result, 0.0, 1.0);
}

double sampson(const stereo::Mat3& F, const stereo::Match& m) {
  const stereo::Vec3 xl(m.xl, m.yl, 1.0), xr(m.xr, m.yr, 1.0);
  const stereo::Vec3 a = F * xl, b = F.transpose() * xr;
  const double r = xr.dot(a);
  return std::abs(r) / std::sqrt(a(0) * a(0) + a(1) * a(1) + b(0) * b(0) + b(1) * b(1));
}

TwoViewScene make_two_view(int count, double outlier_fraction, std::uint64_t seed, bool rectified) {
  constexpr int W = 640, H = 480;
  std::mt19937_64 rng(seed);
  stereo::Mat3 K;
  K << 500, 0, 320, 0, 500, 240, 0, 0, 1;
  stereo::Mat3 R = stereo::Mat3::Identity();
  Eigen::Vector3d t(-1.0, 0.0, 0.0);
  if (!rectified) {
    R = (Eigen::AngleAxisd(0.03, Eigen::Vector3d::UnitZ()) *
         Eigen::AngleAxisd(0.05, Eigen::Vector3d::UnitY()) *
         Eigen::AngleAxisd(0.02, Eigen::Vector3d::UnitX()))
            .toRotationMatrix();
    t = Eigen::Vector3d(-1.0, 0.06, 0.03);
  }
  stereo::Mat3 tx;
  tx << 0, -t(2), t(1), t(2), 0, -t(0), -t(1), t(0), 0;
  TwoViewScene s;
  s.F = K.inverse().transpose() * tx * R * K.inverse();
  s.F /= s.F.norm();
  s.matches.width = W;
  s.matches.height = H;

  std::uniform_real_distribution<double> ux(-2.5, 2.5), uy(-1.8, 1.8), uz(4.0, 12.0);
  std::uniform_real_distribution<double> px(0.0, W), py(0.0, H);
  while (static_cast<int>(s.matches.matches.size()) < count) {
    const Eigen::Vector3d X(ux(rng), uy(rng), uz(rng));
    const Eigen::Vector3d l = K * X, r = K * (R * X + t);
    stereo::Match m{l(0) / l(2), l(1) / l(2), r(0) / r(2), r(1) / r(2)};
    if (m.xl < 0 || m.xl > W || m.yl < 0 || m.yl > H || m.xr < 0 || m.xr > W || m.yr < 0 ||
        m.yr > H) {
      continue;
    }
    // Exactly round(count * fraction) outliers, spread evenly.
    const double i = static_cast<double>(s.matches.matches.size());
    const bool out = std::floor((i + 1) * outlier_fraction) > std::floor(i * outlier_fraction);
    if (out) {
      do {
        m.xr = px(rng);
        m.yr = py(rng);
      } while (sampson(s.F, m) < 5.0);
    }
    s.matches.matches.push_back(m);
    s.outlier.push_back(out);
  }
  return s;
}

int run_command(const std::string& cmd) {
  const int status = std::system(cmd.c_str());
  if (status == -1) return -1;
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string read_bytes(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace testing
