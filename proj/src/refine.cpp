#include "stereo/refine.hpp"

#include <algorithm>
#include <cmath>

namespace stereo {

double DiffusionSchedule::alpha_bar_at(int t) const {
  if (t < 1 || t > steps) {
    throw ValidationError("timestep " + std::to_string(t) + " outside [1, " +
                          std::to_string(steps) + "]");
  }
  return alpha_bar[static_cast<std::size_t>(t - 1)];
}

DiffusionSchedule make_schedule(int steps, double beta_start, double beta_end) {
  if (steps < 1) throw ValidationError("diffusion.T must be >= 1");
  if (!(beta_start > 0.0) || !(beta_start <= beta_end) || !(beta_end < 1.0)) {
    throw ValidationError("need 0 < beta_start <= beta_end < 1");
  }
  DiffusionSchedule s;
  s.steps = steps;
  s.beta.resize(static_cast<std::size_t>(steps));
  s.alpha_bar.resize(static_cast<std::size_t>(steps));
  double running = 1.0;
  for (int t = 0; t < steps; ++t) {
    const double frac = steps == 1 ? 0.0 : static_cast<double>(t) / (steps - 1);
    const double beta = beta_start + (beta_end - beta_start) * frac;
    running *= 1.0 - beta;
    s.beta[static_cast<std::size_t>(t)] = beta;
    s.alpha_bar[static_cast<std::size_t>(t)] = running;
  }
  return s;
}

LatentGrid::LatentGrid(int frames_, int height_, int width_, int channels_, double fill)
    : frames(frames_), height(height_), width(width_), channels(channels_) {
  if (frames < 0 || height < 0 || width < 0 || channels < 0) {
    throw ShapeError("negative latent dimensions");
  }
  data.assign(static_cast<std::size_t>(frames) * static_cast<std::size_t>(height) *
                  static_cast<std::size_t>(width) * static_cast<std::size_t>(channels),
              fill);
}

namespace {

void require_same(const LatentGrid& a, const LatentGrid& b, const char* what) {
  if (!a.same_shape(b) || a.data.size() != b.data.size()) {
    throw ShapeError(std::string(what) + ": latent shapes differ");
  }
}

void require_alpha_bar(double alpha_bar) {
  if (!(alpha_bar >= 0.0 && alpha_bar <= 1.0)) throw ValidationError("alpha_bar must lie in [0,1]");
}

}  // namespace

LatentGrid forward_diffuse(const LatentGrid& z, const LatentGrid& eps, double alpha_bar) {
  require_same(z, eps, "forward_diffuse");
  require_alpha_bar(alpha_bar);
  const double a = std::sqrt(alpha_bar);
  const double b = std::sqrt(1.0 - alpha_bar);
  LatentGrid out = z;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = a * z.data[i] + b * eps.data[i];
  return out;
}

LatentGrid forward_diffuse(const LatentGrid& z, const LatentGrid& eps, int t,
                           const DiffusionSchedule& s) {
  return forward_diffuse(z, eps, s.alpha_bar_at(t));
}

LatentGrid v_target(const LatentGrid& z, const LatentGrid& eps, double alpha_bar) {
  require_same(z, eps, "v_target");
  require_alpha_bar(alpha_bar);
  const double a = std::sqrt(alpha_bar);
  const double b = std::sqrt(1.0 - alpha_bar);
  LatentGrid out = z;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = a * eps.data[i] - b * z.data[i];
  return out;
}

LatentGrid v_target(const LatentGrid& z, const LatentGrid& eps, int t, const DiffusionSchedule& s) {
  return v_target(z, eps, s.alpha_bar_at(t));
}

LatentGrid IdentityCodec::encode(const VideoClip& clip) const {
  LatentGrid z(static_cast<int>(clip.size()), clip.height(), clip.width(), kChannels);
  for (int f = 0; f < z.frames; ++f) {
    const Frame& frame = clip[static_cast<std::size_t>(f)];
    for (int y = 0; y < z.height; ++y) {
      for (int x = 0; x < z.width; ++x) {
        for (int c = 0; c < Frame::kChannels; ++c) z.at(f, y, x, c) = frame.at(y, x, c);
      }
    }
  }
  return z;
}

VideoClip IdentityCodec::decode(const LatentGrid& z, double fps) const {
  if (z.channels != kChannels) throw ShapeError("identity codec expects 4 latent channels");
  std::vector<Frame> frames;
  frames.reserve(static_cast<std::size_t>(z.frames));
  for (int f = 0; f < z.frames; ++f) {
    Frame frame(z.height, z.width);
    for (int y = 0; y < z.height; ++y) {
      for (int x = 0; x < z.width; ++x) {
        for (int c = 0; c < Frame::kChannels; ++c) {
          frame.at(y, x, c) = static_cast<float>(z.at(f, y, x, c));
        }
      }
    }
    frames.push_back(std::move(frame));
  }
  return VideoClip(std::move(frames), fps);
}

PatchCodec::PatchCodec(int factor) : factor_(factor) {
  if (factor < 1) throw ValidationError("codec factor must be >= 1");
}

LatentGrid PatchCodec::encode(const VideoClip& clip) const {
  if (clip.height() % factor_ != 0 || clip.width() % factor_ != 0) {
    throw ShapeError("frame size " + std::to_string(clip.height()) + "x" +
                     std::to_string(clip.width()) + " is not divisible by codec factor " +
                     std::to_string(factor_));
  }
  LatentGrid z(static_cast<int>(clip.size()), clip.height() / factor_, clip.width() / factor_,
               kChannels);
  const double area = static_cast<double>(factor_) * factor_;
  for (int f = 0; f < z.frames; ++f) {
    const Frame& frame = clip[static_cast<std::size_t>(f)];
    for (int y = 0; y < z.height; ++y) {
      for (int x = 0; x < z.width; ++x) {
        double sum[3] = {0.0, 0.0, 0.0};
        for (int dy = 0; dy < factor_; ++dy) {
          for (int dx = 0; dx < factor_; ++dx) {
            for (int c = 0; c < 3; ++c) sum[c] += frame.at(y * factor_ + dy, x * factor_ + dx, c);
          }
        }
        for (int c = 0; c < 3; ++c) z.at(f, y, x, c) = sum[c] / area;
        z.at(f, y, x, 3) =
            0.299 * z.at(f, y, x, 0) + 0.587 * z.at(f, y, x, 1) + 0.114 * z.at(f, y, x, 2);
      }
    }
  }
  return z;
}

VideoClip PatchCodec::decode(const LatentGrid& z, double fps) const {
  if (z.channels != kChannels) throw ShapeError("patch codec expects 4 latent channels");
  std::vector<Frame> frames;
  frames.reserve(static_cast<std::size_t>(z.frames));
  for (int f = 0; f < z.frames; ++f) {
    Frame frame(z.height * factor_, z.width * factor_);
    for (int y = 0; y < frame.height(); ++y) {
      for (int x = 0; x < frame.width(); ++x) {
        for (int c = 0; c < 3; ++c) {
          frame.at(y, x, c) = static_cast<float>(z.at(f, y / factor_, x / factor_, c));
        }
      }
    }
    frames.push_back(std::move(frame));
  }
  return VideoClip(std::move(frames), fps);
}

std::unique_ptr<LatentCodec> make_codec(const std::string& name) {
  if (name == "identity") return std::make_unique<IdentityCodec>();
  if (name == "patch8") return std::make_unique<PatchCodec>(8);
  throw ValidationError("unknown codec '" + name + "' (expected identity or patch8)");
}

LatentGrid downsample_mask(std::span<const Mask> masks, int factor) {
  if (masks.empty()) return LatentGrid(0, 0, 0, 1);
  const int height = masks.front().height();
  const int width = masks.front().width();
  if (height % factor != 0 || width % factor != 0) {
    throw ShapeError("mask size is not divisible by codec factor " + std::to_string(factor));
  }
  LatentGrid out(static_cast<int>(masks.size()), height / factor, width / factor, 1);
  const int area = factor * factor;
  for (int f = 0; f < out.frames; ++f) {
    const Mask& m = masks[static_cast<std::size_t>(f)];
    if (m.height() != height || m.width() != width) throw ShapeError("mask sizes differ");
    for (int y = 0; y < out.height; ++y) {
      for (int x = 0; x < out.width; ++x) {
        int set = 0;
        for (int dy = 0; dy < factor; ++dy) {
          for (int dx = 0; dx < factor; ++dx) set += m(y * factor + dy, x * factor + dx) != 0;
        }
        // set / area >= 0.5 in integers
        out.at(f, y, x, 0) = 2 * set >= area ? 1.0 : 0.0;
      }
    }
  }
  return out;
}

ConditioningTensor assemble_conditioning(const ConditioningParts& parts) {
  const LatentGrid& l = parts.left;
  auto check = [&l](const LatentGrid& g, int channels, const char* what) {
    if (g.frames != l.frames || g.height != l.height || g.width != l.width ||
        g.channels != channels) {
      throw ShapeError(std::string("conditioning block '") + what + "' has the wrong shape");
    }
  };
  check(parts.initial, LatentCodec::kChannels, "initial");
  check(parts.left, LatentCodec::kChannels, "left");
  check(parts.warped, LatentCodec::kChannels, "warped");
  check(parts.mask, 1, "mask");

  ConditioningTensor cond{LatentGrid(l.frames, l.height, l.width, ConditioningTensor::kChannels)};
  for (int f = 0; f < l.frames; ++f) {
    for (int y = 0; y < l.height; ++y) {
      for (int x = 0; x < l.width; ++x) {
        for (int c = 0; c < LatentCodec::kChannels; ++c) {
          cond.grid.at(f, y, x, ConditioningTensor::kInitial + c) = parts.initial.at(f, y, x, c);
          cond.grid.at(f, y, x, ConditioningTensor::kLeft + c) = parts.left.at(f, y, x, c);
          cond.grid.at(f, y, x, ConditioningTensor::kWarped + c) = parts.warped.at(f, y, x, c);
        }
        cond.grid.at(f, y, x, ConditioningTensor::kMask) = parts.mask.at(f, y, x, 0);
      }
    }
  }
  return cond;
}

ConditioningTensor assemble_conditioning(const VideoClip& left, const VideoClip& warped,
                                         std::span<const Mask> mask, const LatentCodec& codec) {
  if (!left.same_shape(warped) || mask.size() != left.size()) {
    throw ShapeError("left view, warped view and masks must share frame count and size");
  }
  ConditioningParts parts;
  parts.left = codec.encode(left);
  parts.warped = codec.encode(warped);
  parts.mask = downsample_mask(mask, codec.factor());
  parts.initial = LatentGrid(parts.left.frames, parts.left.height, parts.left.width,
                             LatentCodec::kChannels, 0.0);
  return assemble_conditioning(parts);
}

ConditioningParts disassemble_conditioning(const ConditioningTensor& cond) {
  const LatentGrid& g = cond.grid;
  if (g.channels != ConditioningTensor::kChannels) {
    throw ShapeError("conditioning tensor must have 13 channels");
  }
  ConditioningParts parts{LatentGrid(g.frames, g.height, g.width, 4),
                          LatentGrid(g.frames, g.height, g.width, 4),
                          LatentGrid(g.frames, g.height, g.width, 4),
                          LatentGrid(g.frames, g.height, g.width, 1)};
  for (int f = 0; f < g.frames; ++f) {
    for (int y = 0; y < g.height; ++y) {
      for (int x = 0; x < g.width; ++x) {
        for (int c = 0; c < 4; ++c) {
          parts.initial.at(f, y, x, c) = g.at(f, y, x, ConditioningTensor::kInitial + c);
          parts.left.at(f, y, x, c) = g.at(f, y, x, ConditioningTensor::kLeft + c);
          parts.warped.at(f, y, x, c) = g.at(f, y, x, ConditioningTensor::kWarped + c);
        }
        parts.mask.at(f, y, x, 0) = g.at(f, y, x, ConditioningTensor::kMask);
      }
    }
  }
  return parts;
}

VideoClip predict_single_step(const ConditioningTensor& cond, RefinerBackend& backend,
                              const LatentCodec& codec, int timestep, double fps) {
  const LatentGrid& g = cond.grid;
  if (g.channels != ConditioningTensor::kChannels) {
    throw ShapeError("backend input must have 13 channels");
  }
  const LatentGrid z0(g.frames, g.height, g.width, LatentCodec::kChannels, 0.0);
  LatentGrid v;
  try {
    v = backend.predict_v(z0, timestep, cond);
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError("refine/backend", e.what());
  }
  if (!v.same_shape(z0)) throw StageError("refine/backend", "prediction has the wrong shape");
  for (double& value : v.data) value = -value;
  VideoClip out = codec.decode(v, fps);
  std::vector<Frame> frames = out.frames();
  for (Frame& f : frames) {
    for (float& value : f.values()) value = std::clamp(value, 0.0f, 1.0f);
  }
  return VideoClip(std::move(frames), fps);
}

double loss_latent(const LatentGrid& z_gt, const LatentGrid& v_hat) {
  require_same(z_gt, v_hat, "loss_latent");
  if (z_gt.data.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < z_gt.data.size(); ++i) {
    const double d = -z_gt.data[i] - v_hat.data[i];
    sum += d * d;
  }
  return sum / static_cast<double>(z_gt.data.size());
}

LossBreakdown loss_image(const VideoClip& gt, const VideoClip& estimate,
                         const PerceptualLoss* perceptual) {
  if (!gt.same_shape(estimate)) throw ShapeError("loss_image: clip shapes differ");
  LossBreakdown b;
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t f = 0; f < gt.size(); ++f) {
    const auto a = gt[f].values();
    const auto e = estimate[f].values();
    for (std::size_t i = 0; i < a.size(); ++i) {
      sum += std::abs(static_cast<double>(a[i]) - static_cast<double>(e[i]));
    }
    count += a.size();
  }
  b.l1 = count ? sum / static_cast<double>(count) : 0.0;
  if (perceptual != nullptr) {
    b.perceptual = (*perceptual)(gt, estimate);
    b.perceptual_present = true;
  }
  b.total = b.l1 + b.perceptual;
  return b;
}

LossBreakdown training_loss(const LatentGrid& z_gt, const LatentGrid& v_hat, const VideoClip& gt,
                            const VideoClip& estimate, const PerceptualLoss* perceptual) {
  LossBreakdown b = loss_image(gt, estimate, perceptual);
  b.latent = loss_latent(z_gt, v_hat);
  b.total = b.latent + b.l1 + b.perceptual;
  return b;
}

namespace {

void check_refiner_inputs(const VideoClip& left, const VideoClip& warped,
                          std::span<const Mask> mask) {
  if (!left.same_shape(warped) || mask.size() != warped.size()) {
    throw ShapeError("refiner inputs disagree in frame count or size");
  }
  for (const Mask& m : mask) {
    if (m.height() != warped.height() || m.width() != warped.width()) {
      throw ShapeError("mask size differs from frame size");
    }
  }
}

}  // namespace

VideoClip baseline_farplane_refine(const VideoClip& left, const VideoClip& warped,
                                   std::span<const Mask> mask) {
  check_refiner_inputs(left, warped, mask);
  std::vector<Frame> out = warped.frames();
  const int width = warped.width();
  std::vector<int> right_src(static_cast<std::size_t>(width));
  for (std::size_t f = 0; f < out.size(); ++f) {
    const Mask& m = mask[f];
    Frame& frame = out[f];
    for (int y = 0; y < warped.height(); ++y) {
      int next = -1;
      for (int x = width - 1; x >= 0; --x) {
        if (!m(y, x)) next = x;
        right_src[static_cast<std::size_t>(x)] = next;
      }
      int prev = -1;
      for (int x = 0; x < width; ++x) {
        if (!m(y, x)) {
          prev = x;
          continue;
        }
        const int src = right_src[static_cast<std::size_t>(x)] >= 0
                            ? right_src[static_cast<std::size_t>(x)]
                            : prev;
        for (int c = 0; c < Frame::kChannels; ++c) {
          frame.at(y, x, c) = src >= 0 ? frame.at(y, src, c) : 0.5f;
        }
      }
    }
  }
  return VideoClip(std::move(out), warped.fps());
}

VideoClip FarplaneRefiner::refine(const VideoClip& left, const VideoClip& warped,
                                  std::span<const Mask> mask) const {
  return baseline_farplane_refine(left, warped, mask);
}

VideoClip PassthroughRefiner::refine(const VideoClip& left, const VideoClip& warped,
                                     std::span<const Mask> mask) const {
  check_refiner_inputs(left, warped, mask);
  return warped;
}

FeedForwardRefiner::FeedForwardRefiner(std::string name, BackendFactory backend,
                                       std::shared_ptr<const LatentCodec> codec, int timestep)
    : name_(std::move(name)), backend_(std::move(backend)), codec_(std::move(codec)),
      timestep_(timestep) {
  if (!codec_) throw ValidationError("feed-forward refiner needs a codec");
}

VideoClip FeedForwardRefiner::refine(const VideoClip& left, const VideoClip& warped,
                                     std::span<const Mask> mask) const {
  check_refiner_inputs(left, warped, mask);
  const ConditioningTensor cond = assemble_conditioning(left, warped, mask, *codec_);
  // One backend per call keeps concurrent calls independent.
  const auto backend = backend_();
  return predict_single_step(cond, *backend, *codec_, timestep_, warped.fps());
}

LatentGrid WarpEchoBackend::predict_v(const LatentGrid& z_t, int, const ConditioningTensor& cond) {
  const ConditioningParts parts = disassemble_conditioning(cond);
  if (!parts.warped.same_shape(z_t)) throw ShapeError("echo backend: latent shape mismatch");
  LatentGrid v = parts.warped;
  for (double& value : v.data) value = -value;
  return v;
}

RefinerRegistry::RefinerRegistry() {
  add("farplane", [](const RefinerContext&) { return std::make_unique<FarplaneRefiner>(); });
  add("passthrough", [](const RefinerContext&) { return std::make_unique<PassthroughRefiner>(); });
  add("echo", [](const RefinerContext& ctx) -> std::unique_ptr<Refiner> {
    return std::make_unique<FeedForwardRefiner>(
        "echo", [] { return std::make_unique<WarpEchoBackend>(); },
        ctx.codec ? ctx.codec : std::make_shared<IdentityCodec>(), std::max(ctx.schedule.steps, 1));
  });
}

RefinerRegistry& RefinerRegistry::instance() {
  static RefinerRegistry registry;
  return registry;
}

void RefinerRegistry::add(const std::string& name, Factory factory) {
  factories_[name] = std::move(factory);
}

bool RefinerRegistry::contains(const std::string& name) const { return factories_.count(name) > 0; }

std::vector<std::string> RefinerRegistry::names() const {
  std::vector<std::string> out;
  for (const auto& [name, factory] : factories_) out.push_back(name);
  return out;
}

std::unique_ptr<Refiner> RefinerRegistry::create(const std::string& name,
                                                 const RefinerContext& ctx) const {
  const auto it = factories_.find(name);
  if (it == factories_.end()) {
    std::string known;
    for (const auto& n : names()) known += (known.empty() ? "" : ", ") + n;
    throw ValidationError("unknown refiner '" + name + "' (registered: " + known + ")");
  }
  return it->second(ctx);
}

}  // namespace stereo
