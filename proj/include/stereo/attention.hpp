#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string_view>
#include <vector>

namespace stereo::attention {

// N x h x w tokens of dimension c; token index = frame*h*w + row*w + col.
struct TokenGrid {
  int frames = 0;
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<double> data;  // tokens() x channels, row-major

  TokenGrid() = default;
  TokenGrid(int frames, int height, int width, int channels, double fill = 0.0);

  int tokens() const noexcept { return frames * height * width; }
  int index(int frame, int row, int col) const noexcept {
    return (frame * height + row) * width + col;
  }
  double& at(int token, int channel) {
    return data[static_cast<std::size_t>(token) * static_cast<std::size_t>(channels) +
                static_cast<std::size_t>(channel)];
  }
  double at(int token, int channel) const {
    return data[static_cast<std::size_t>(token) * static_cast<std::size_t>(channels) +
                static_cast<std::size_t>(channel)];
  }
  bool same_shape(const TokenGrid& o) const noexcept {
    return frames == o.frames && height == o.height && width == o.width && channels == o.channels;
  }
  friend bool operator==(const TokenGrid&, const TokenGrid&) = default;
};

// Disoccluded-token flags, same N x h x w layout as the grid.
struct AttentionMask {
  int frames = 0;
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> flags;

  AttentionMask() = default;
  AttentionMask(int frames, int height, int width, std::uint8_t fill = 0);
  std::size_t count() const noexcept;
};

// Single head, no positional encoding, no output projection.
struct AttentionParams {
  Eigen::MatrixXd wq, wk, wv;  // c x c; q = wq * x

  int channels() const noexcept { return static_cast<int>(wq.rows()); }
  double scale() const noexcept;
};

enum class Pattern { spatial, temporal, full, masked_full };

std::string_view to_string(Pattern p) noexcept;

struct CostReport {
  std::uint64_t qk_dot_products = 0;
  Pattern pattern = Pattern::spatial;
};

struct AttentionOutput {
  TokenGrid out;
  CostReport cost;
};

// Largest token count attend_full accepts.
inline constexpr int kDenseTokenLimit = 4096;

AttentionOutput attend_spatial(const TokenGrid& x, const AttentionParams& p);
AttentionOutput attend_temporal(const TokenGrid& x, const AttentionParams& p);
AttentionOutput attend_full(const TokenGrid& x, const AttentionParams& p);
// Masked tokens attend over every token of every frame, the rest over their
// own frame.
AttentionOutput attend_masked_full(const TokenGrid& x, const AttentionParams& p,
                                   const AttentionMask& mask);

// Dispatch; `mask` is required for masked_full and ignored otherwise.
AttentionOutput attend(const TokenGrid& x, const AttentionParams& p, Pattern pattern,
                       const AttentionMask* mask = nullptr);

// Closed-form query-key dot product counts.
std::uint64_t predicted_cost(Pattern pattern, std::uint64_t frames, std::uint64_t height,
                             std::uint64_t width, std::uint64_t masked = 0);

// Dense tokens() x tokens() softmax weights (zeros outside each query's key
// set). Intended for small grids in tests and diagnostics.
Eigen::MatrixXd attention_weights(const TokenGrid& x, const AttentionParams& p, Pattern pattern,
                                  const AttentionMask* mask = nullptr);

struct AttentionGradients {
  TokenGrid dx;
  Eigen::MatrixXd dwq, dwk, dwv;
};

// Gradients of sum(upstream .* forward(x)) with respect to x and the weights.
AttentionGradients attention_backward(const TokenGrid& x, const AttentionParams& p,
                                      Pattern pattern, const AttentionMask* mask,
                                      const TokenGrid& upstream);

}  // namespace stereo::attention
