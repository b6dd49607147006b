#pragma once

#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "stereo/image.hpp"

namespace stereo {

// Noise schedule with 1-based timesteps t = 1..T.
struct DiffusionSchedule {
  int steps = 0;
  std::vector<double> beta;       // beta[t-1]
  std::vector<double> alpha_bar;  // alpha_bar[t-1] = prod_{tau<=t} (1 - beta_tau)

  double alpha_bar_at(int t) const;
  // alpha_bar_T below `tol`: the single-step, zero-noise regime.
  bool reaches_terminal(double tol = 1e-4) const { return !alpha_bar.empty() && alpha_bar.back() < tol; }
};

// Linear beta from beta_start to beta_end over T steps.
DiffusionSchedule make_schedule(int steps, double beta_start, double beta_end);

// N x h x w x c latent array.
struct LatentGrid {
  int frames = 0;
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<double> data;

  LatentGrid() = default;
  LatentGrid(int frames, int height, int width, int channels, double fill = 0.0);

  std::size_t offset(int f, int y, int x, int c) const noexcept {
    return ((static_cast<std::size_t>(f) * static_cast<std::size_t>(height) +
             static_cast<std::size_t>(y)) *
                static_cast<std::size_t>(width) +
            static_cast<std::size_t>(x)) *
               static_cast<std::size_t>(channels) +
           static_cast<std::size_t>(c);
  }
  double& at(int f, int y, int x, int c) { return data[offset(f, y, x, c)]; }
  double at(int f, int y, int x, int c) const { return data[offset(f, y, x, c)]; }
  bool same_shape(const LatentGrid& o) const noexcept {
    return frames == o.frames && height == o.height && width == o.width && channels == o.channels;
  }
  friend bool operator==(const LatentGrid&, const LatentGrid&) = default;
};

// z_t = sqrt(abar) z + sqrt(1 - abar) eps.
LatentGrid forward_diffuse(const LatentGrid& z, const LatentGrid& eps, double alpha_bar);
LatentGrid forward_diffuse(const LatentGrid& z, const LatentGrid& eps, int t,
                           const DiffusionSchedule& s);

// v = sqrt(abar) eps - sqrt(1 - abar) z.
LatentGrid v_target(const LatentGrid& z, const LatentGrid& eps, double alpha_bar);
LatentGrid v_target(const LatentGrid& z, const LatentGrid& eps, int t, const DiffusionSchedule& s);

// Image <-> latent pair standing in for the frozen VAE. Latents always have
// four channels and 1/factor() of the spatial resolution.
class LatentCodec {
 public:
  static constexpr int kChannels = 4;

  virtual ~LatentCodec() = default;
  virtual std::string name() const = 0;
  virtual int factor() const = 0;
  virtual LatentGrid encode(const VideoClip& clip) const = 0;
  virtual VideoClip decode(const LatentGrid& latent, double fps) const = 0;
};

// f = 1; RGB plus a zero channel. decode(encode(x)) == x bit-exactly.
class IdentityCodec final : public LatentCodec {
 public:
  std::string name() const override { return "identity"; }
  int factor() const override { return 1; }
  LatentGrid encode(const VideoClip& clip) const override;
  VideoClip decode(const LatentGrid& latent, double fps) const override;
};

// Non-overlapping f x f block means of R, G, B plus the Rec.601 luminance of
// those means; decoding upsamples the colour channels by repetition.
class PatchCodec final : public LatentCodec {
 public:
  explicit PatchCodec(int factor = 8);
  std::string name() const override { return "patch" + std::to_string(factor_); }
  int factor() const override { return factor_; }
  LatentGrid encode(const VideoClip& clip) const override;
  VideoClip decode(const LatentGrid& latent, double fps) const override;

 private:
  int factor_;
};

// "identity" or "patch8"; throws ValidationError otherwise.
std::unique_ptr<LatentCodec> make_codec(const std::string& name);

// 13-channel model input: initial latent | E(left) | E(warped) | mask.
struct ConditioningTensor {
  static constexpr int kInitial = 0;
  static constexpr int kLeft = 4;
  static constexpr int kWarped = 8;
  static constexpr int kMask = 12;
  static constexpr int kChannels = 13;

  LatentGrid grid;
};

struct ConditioningParts {
  LatentGrid initial;  // 4 channels
  LatentGrid left;     // 4 channels
  LatentGrid warped;   // 4 channels
  LatentGrid mask;     // 1 channel
};

// Area-average each factor x factor block, then 1 where the average >= 0.5.
LatentGrid downsample_mask(std::span<const Mask> masks, int factor);

// The initial-latent block is zero (mean of the noise distribution).
ConditioningTensor assemble_conditioning(const VideoClip& left, const VideoClip& warped,
                                         std::span<const Mask> mask, const LatentCodec& codec);
ConditioningTensor assemble_conditioning(const ConditioningParts& parts);
ConditioningParts disassemble_conditioning(const ConditioningTensor& cond);

// The network being wrapped: v_hat(z_t, t, c).
class RefinerBackend {
 public:
  virtual ~RefinerBackend() = default;
  virtual LatentGrid predict_v(const LatentGrid& z_t, int t, const ConditioningTensor& cond) = 0;
};

// V_hat = decode(-backend(0, T, cond)), clamped to [0,1]. One backend call.
VideoClip predict_single_step(const ConditioningTensor& cond, RefinerBackend& backend,
                              const LatentCodec& codec, int timestep, double fps);

// mean((-z_gt - v_hat)^2).
double loss_latent(const LatentGrid& z_gt, const LatentGrid& v_hat);

// Plug-in perceptual distance (e.g. a learned metric); none ships.
class PerceptualLoss {
 public:
  virtual ~PerceptualLoss() = default;
  virtual double operator()(const VideoClip& reference, const VideoClip& estimate) const = 0;
};

struct LossBreakdown {
  double latent = 0.0;
  double l1 = 0.0;
  double perceptual = 0.0;
  bool perceptual_present = false;
  double total = 0.0;
};

// L1 (mean absolute error) plus the optional perceptual term.
LossBreakdown loss_image(const VideoClip& gt, const VideoClip& estimate,
                         const PerceptualLoss* perceptual = nullptr);

// latent + L1 + perceptual.
LossBreakdown training_loss(const LatentGrid& z_gt, const LatentGrid& v_hat, const VideoClip& gt,
                            const VideoClip& estimate, const PerceptualLoss* perceptual = nullptr);

// Right-view inpainting/refinement stage. Implementations must be callable
// concurrently on disjoint inputs.
class Refiner {
 public:
  virtual ~Refiner() = default;
  virtual std::string name() const = 0;
  virtual VideoClip refine(const VideoClip& left, const VideoClip& warped,
                           std::span<const Mask> mask) const = 0;
};

// Each masked pixel copies the nearest visible pixel to its right in the same
// row, else the nearest to its left; rows with no visible pixel become 0.5.
VideoClip baseline_farplane_refine(const VideoClip& left, const VideoClip& warped,
                                   std::span<const Mask> mask);

class FarplaneRefiner final : public Refiner {
 public:
  std::string name() const override { return "farplane"; }
  VideoClip refine(const VideoClip& left, const VideoClip& warped,
                   std::span<const Mask> mask) const override;
};

// Returns the warped view untouched.
class PassthroughRefiner final : public Refiner {
 public:
  std::string name() const override { return "passthrough"; }
  VideoClip refine(const VideoClip& left, const VideoClip& warped,
                   std::span<const Mask> mask) const override;
};

// Adapts a RefinerBackend to the Refiner contract through the conditioning
// assembly and single-step prediction.
class FeedForwardRefiner final : public Refiner {
 public:
  using BackendFactory = std::function<std::unique_ptr<RefinerBackend>()>;

  FeedForwardRefiner(std::string name, BackendFactory backend, std::shared_ptr<const LatentCodec> codec,
                     int timestep);
  std::string name() const override { return name_; }
  VideoClip refine(const VideoClip& left, const VideoClip& warped,
                   std::span<const Mask> mask) const override;

 private:
  std::string name_;
  BackendFactory backend_;
  std::shared_ptr<const LatentCodec> codec_;
  int timestep_;
};

// Backend returning -E(warped) from the conditioning; its single-step
// prediction reproduces the codec round trip of the warped view.
class WarpEchoBackend final : public RefinerBackend {
 public:
  LatentGrid predict_v(const LatentGrid& z_t, int t, const ConditioningTensor& cond) override;
};

struct RefinerContext {
  std::shared_ptr<const LatentCodec> codec;
  DiffusionSchedule schedule;
};

class RefinerRegistry {
 public:
  using Factory = std::function<std::unique_ptr<Refiner>(const RefinerContext&)>;

  // Pre-populated with farplane, passthrough and echo.
  static RefinerRegistry& instance();

  void add(const std::string& name, Factory factory);
  bool contains(const std::string& name) const;
  std::vector<std::string> names() const;
  // Throws ValidationError for unknown names.
  std::unique_ptr<Refiner> create(const std::string& name, const RefinerContext& ctx) const;

 private:
  RefinerRegistry();
  std::map<std::string, Factory> factories_;
};

}  // namespace stereo
