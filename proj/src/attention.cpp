#include "stereo/attention.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "stereo/error.hpp"

namespace stereo::attention {

TokenGrid::TokenGrid(int frames_, int height_, int width_, int channels_, double fill)
    : frames(frames_), height(height_), width(width_), channels(channels_) {
  if (frames < 1 || height < 1 || width < 1 || channels < 1) {
    throw ShapeError("token grid dimensions must be >= 1");
  }
  data.assign(static_cast<std::size_t>(tokens()) * static_cast<std::size_t>(channels), fill);
}

AttentionMask::AttentionMask(int frames_, int height_, int width_, std::uint8_t fill)
    : frames(frames_), height(height_), width(width_),
      flags(static_cast<std::size_t>(frames_) * static_cast<std::size_t>(height_) *
                static_cast<std::size_t>(width_),
            fill) {}

std::size_t AttentionMask::count() const noexcept {
  return static_cast<std::size_t>(std::count_if(flags.begin(), flags.end(),
                                                [](std::uint8_t f) { return f != 0; }));
}

double AttentionParams::scale() const noexcept {
  return 1.0 / std::sqrt(static_cast<double>(channels()));
}

std::string_view to_string(Pattern p) noexcept {
  switch (p) {
    case Pattern::spatial: return "spatial";
    case Pattern::temporal: return "temporal";
    case Pattern::full: return "full";
    case Pattern::masked_full: return "masked_full";
  }
  return "unknown";
}

std::uint64_t predicted_cost(Pattern pattern, std::uint64_t n, std::uint64_t h, std::uint64_t w,
                             std::uint64_t masked) {
  const std::uint64_t hw = h * w;
  switch (pattern) {
    case Pattern::spatial: return n * hw * hw;
    case Pattern::temporal: return n * n * hw;
    case Pattern::full: return n * n * h * h * w * w;
    case Pattern::masked_full: return (n * hw - masked) * hw + masked * n * hw;
  }
  return 0;
}

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

void check_inputs(const TokenGrid& x, const AttentionParams& p, Pattern pattern,
                  const AttentionMask* mask) {
  const int c = x.channels;
  if (x.tokens() < 1 || c < 1) throw ShapeError("empty token grid");
  if (x.data.size() != static_cast<std::size_t>(x.tokens()) * static_cast<std::size_t>(c)) {
    throw ShapeError("token grid data length does not match its dimensions");
  }
  for (const Eigen::MatrixXd* m : {&p.wq, &p.wk, &p.wv}) {
    if (m->rows() != c || m->cols() != c) {
      throw ShapeError("projection matrices must be " + std::to_string(c) + "x" +
                       std::to_string(c));
    }
  }
  if (pattern == Pattern::masked_full) {
    if (mask == nullptr) throw ShapeError("masked_full attention requires a mask");
    if (mask->frames != x.frames || mask->height != x.height || mask->width != x.width ||
        mask->flags.size() != static_cast<std::size_t>(x.tokens())) {
      throw ShapeError("attention mask dimensions do not match the token grid");
    }
  }
  if (pattern == Pattern::full && x.tokens() > kDenseTokenLimit) {
    throw ShapeError("full attention over " + std::to_string(x.tokens()) +
                     " tokens exceeds the dense limit of " + std::to_string(kDenseTokenLimit));
  }
}

// Key indices (ascending) visible to query `q`.
void key_set(const TokenGrid& x, Pattern pattern, const AttentionMask* mask, int q,
             std::vector<int>& keys) {
  keys.clear();
  const int hw = x.height * x.width;
  const int total = x.tokens();
  const bool all = pattern == Pattern::full ||
                   (pattern == Pattern::masked_full && mask->flags[static_cast<std::size_t>(q)]);
  if (all) {
    for (int k = 0; k < total; ++k) keys.push_back(k);
  } else if (pattern == Pattern::temporal) {
    for (int k = q % hw; k < total; k += hw) keys.push_back(k);
  } else {
    const int start = (q / hw) * hw;
    for (int k = start; k < start + hw; ++k) keys.push_back(k);
  }
}

struct Projections {
  RowMatrix q, k, v;
};

Projections project(const TokenGrid& x, const AttentionParams& p) {
  const Eigen::Map<const RowMatrix> X(x.data.data(), x.tokens(), x.channels);
  return {X * p.wq.transpose(), X * p.wk.transpose(), X * p.wv.transpose()};
}

double dot_row(const RowMatrix& a, int i, const RowMatrix& b, int j) {
  double s = 0.0;
  for (Eigen::Index c = 0; c < a.cols(); ++c) s += a(i, c) * b(j, c);
  return s;
}

// Softmax weights of query `q` over `keys`.
void softmax_row(const Projections& pr, double scale, int q, const std::vector<int>& keys,
                 std::vector<double>& prob) {
  prob.resize(keys.size());
  double peak = -INFINITY;
  for (std::size_t j = 0; j < keys.size(); ++j) {
    prob[j] = scale * dot_row(pr.q, q, pr.k, keys[j]);
    peak = std::max(peak, prob[j]);
  }
  double total = 0.0;
  for (double& s : prob) {
    s = std::exp(s - peak);
    total += s;
  }
  for (double& s : prob) s /= total;
}

}  // namespace

AttentionOutput attend(const TokenGrid& x, const AttentionParams& p, Pattern pattern,
                       const AttentionMask* mask) {
  check_inputs(x, p, pattern, mask);
  const Projections pr = project(x, p);
  const double scale = p.scale();
  AttentionOutput result{TokenGrid(x.frames, x.height, x.width, x.channels), {0, pattern}};
  std::vector<int> keys;
  std::vector<double> prob;
  for (int q = 0; q < x.tokens(); ++q) {
    key_set(x, pattern, mask, q, keys);
    result.cost.qk_dot_products += keys.size();
    softmax_row(pr, scale, q, keys, prob);
    for (int c = 0; c < x.channels; ++c) {
      double acc = 0.0;
      for (std::size_t j = 0; j < keys.size(); ++j) acc += prob[j] * pr.v(keys[j], c);
      result.out.at(q, c) = acc;
    }
  }
  return result;
}

AttentionOutput attend_spatial(const TokenGrid& x, const AttentionParams& p) {
  return attend(x, p, Pattern::spatial);
}

AttentionOutput attend_temporal(const TokenGrid& x, const AttentionParams& p) {
  return attend(x, p, Pattern::temporal);
}

AttentionOutput attend_full(const TokenGrid& x, const AttentionParams& p) {
  return attend(x, p, Pattern::full);
}

AttentionOutput attend_masked_full(const TokenGrid& x, const AttentionParams& p,
                                   const AttentionMask& mask) {
  return attend(x, p, Pattern::masked_full, &mask);
}

Eigen::MatrixXd attention_weights(const TokenGrid& x, const AttentionParams& p, Pattern pattern,
                                  const AttentionMask* mask) {
  check_inputs(x, p, pattern, mask);
  const Projections pr = project(x, p);
  Eigen::MatrixXd weights = Eigen::MatrixXd::Zero(x.tokens(), x.tokens());
  std::vector<int> keys;
  std::vector<double> prob;
  for (int q = 0; q < x.tokens(); ++q) {
    key_set(x, pattern, mask, q, keys);
    softmax_row(pr, p.scale(), q, keys, prob);
    for (std::size_t j = 0; j < keys.size(); ++j) weights(q, keys[j]) = prob[j];
  }
  return weights;
}

AttentionGradients attention_backward(const TokenGrid& x, const AttentionParams& p,
                                      Pattern pattern, const AttentionMask* mask,
                                      const TokenGrid& upstream) {
  check_inputs(x, p, pattern, mask);
  if (!upstream.same_shape(x)) throw ShapeError("upstream gradient shape differs from input");

  const Projections pr = project(x, p);
  const double scale = p.scale();
  const int n = x.tokens();
  const int c = x.channels;
  const Eigen::Map<const RowMatrix> G(upstream.data.data(), n, c);
  RowMatrix dq = RowMatrix::Zero(n, c);
  RowMatrix dk = RowMatrix::Zero(n, c);
  RowMatrix dv = RowMatrix::Zero(n, c);

  std::vector<int> keys;
  std::vector<double> prob;
  std::vector<double> dprob;
  for (int q = 0; q < n; ++q) {
    key_set(x, pattern, mask, q, keys);
    softmax_row(pr, scale, q, keys, prob);
    dprob.resize(keys.size());
    double weighted = 0.0;
    for (std::size_t j = 0; j < keys.size(); ++j) {
      double g = 0.0;
      for (int ch = 0; ch < c; ++ch) {
        g += G(q, ch) * pr.v(keys[j], ch);
        dv(keys[j], ch) += prob[j] * G(q, ch);
      }
      dprob[j] = g;
      weighted += prob[j] * g;
    }
    for (std::size_t j = 0; j < keys.size(); ++j) {
      const double ds = prob[j] * (dprob[j] - weighted) * scale;
      for (int ch = 0; ch < c; ++ch) {
        dq(q, ch) += ds * pr.k(keys[j], ch);
        dk(keys[j], ch) += ds * pr.q(q, ch);
      }
    }
  }

  const Eigen::Map<const RowMatrix> X(x.data.data(), n, c);
  AttentionGradients grads;
  grads.dwq = dq.transpose() * X;
  grads.dwk = dk.transpose() * X;
  grads.dwv = dv.transpose() * X;
  grads.dx = TokenGrid(x.frames, x.height, x.width, c);
  Eigen::Map<RowMatrix> dX(grads.dx.data.data(), n, c);
  dX = dq * p.wq + dk * p.wk + dv * p.wv;
  return grads;
}

}  // namespace stereo::attention
