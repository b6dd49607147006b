#include <doctest.h>

#include <cmath>

#include "stereo/refine.hpp"
#include "support.hpp"

using namespace stereo;

namespace {

LatentGrid random_latent(int n, int h, int w, int c, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  LatentGrid z(n, h, w, c);
  for (double& v : z.data) v = g(rng);
  return z;
}

double max_abs(const LatentGrid& z) {
  double m = 0.0;
  for (double v : z.data) m = std::max(m, std::abs(v));
  return m;
}

class CountingBackend final : public RefinerBackend {
 public:
  explicit CountingBackend(LatentGrid answer) : answer_(std::move(answer)) {}
  LatentGrid predict_v(const LatentGrid& z_t, int t, const ConditioningTensor& cond) override {
    ++calls;
    last_t = t;
    for (double v : z_t.data) CHECK(v == 0.0);
    CHECK(cond.grid.channels == 13);
    return answer_;
  }
  int calls = 0;
  int last_t = -1;

 private:
  LatentGrid answer_;
};

class ConstantPerceptual final : public PerceptualLoss {
 public:
  double operator()(const VideoClip&, const VideoClip&) const override { return 0.25; }
};

Frame gradient_row(int width) {
  Frame f(1, width);
  for (int x = 0; x < width; ++x) {
    for (int c = 0; c < 3; ++c) f.at(0, x, c) = static_cast<float>(x) / 10.0f;
  }
  return f;
}

}  // namespace

TEST_CASE("schedule examples") {
  const DiffusionSchedule one = make_schedule(1, 0.9999, 0.9999);
  CHECK(one.alpha_bar_at(1) == doctest::Approx(1e-4).epsilon(1e-9));

  const DiffusionSchedule two = make_schedule(2, 0.5, 0.5);
  CHECK(two.alpha_bar[0] == 0.5);
  CHECK(two.alpha_bar[1] == 0.25);
  CHECK_FALSE(two.reaches_terminal());

  const DiffusionSchedule s = make_schedule(1000, 1e-4, 0.02);
  // Independent cumulative product in long double.
  long double prod = 1.0L;
  for (int t = 0; t < 1000; ++t) prod *= 1.0L - (1e-4L + (0.02L - 1e-4L) * t / 999.0L);
  CHECK(s.alpha_bar_at(1000) == doctest::Approx(static_cast<double>(prod)).epsilon(1e-9));
  CHECK(s.alpha_bar_at(1000) < 1e-4);
  CHECK(s.reaches_terminal());
  CHECK(s.beta.front() == 1e-4);
  CHECK(s.beta.back() == doctest::Approx(0.02));
  for (int t = 1; t < 1000; ++t) {
    CHECK(s.alpha_bar[static_cast<std::size_t>(t)] < s.alpha_bar[static_cast<std::size_t>(t - 1)]);
  }
}

TEST_CASE("schedule errors") {
  CHECK_THROWS_AS(make_schedule(0, 1e-4, 0.02), ValidationError);
  CHECK_THROWS_AS(make_schedule(10, 0.0, 0.02), ValidationError);
  CHECK_THROWS_AS(make_schedule(10, 0.1, 1.0), ValidationError);
  CHECK_THROWS_AS(make_schedule(10, 0.3, 0.2), ValidationError);
  CHECK_THROWS_AS(make_schedule(10, 1e-4, 0.02).alpha_bar_at(0), ValidationError);
  CHECK_THROWS_AS(make_schedule(10, 1e-4, 0.02).alpha_bar_at(11), ValidationError);
}

TEST_CASE("forward diffusion and v target arithmetic") {
  const LatentGrid z(1, 1, 1, 1, 1.0), eps(1, 1, 1, 1, 2.0);
  CHECK(forward_diffuse(z, eps, 0.25).data[0] == doctest::Approx(0.5 + std::sqrt(0.75) * 2.0));
  CHECK(forward_diffuse(z, eps, 0.25).data[0] == doctest::Approx(2.2321).epsilon(1e-4));
  CHECK(v_target(z, eps, 0.25).data[0] == doctest::Approx(0.1340).epsilon(1e-3));
  CHECK(forward_diffuse(z, eps, 1.0) == z);
  CHECK(v_target(z, eps, 1.0) == eps);
  CHECK(forward_diffuse(z, LatentGrid(1, 1, 1, 1), 0.0).data[0] == 0.0);
  CHECK(v_target(z, eps, 0.0).data[0] == -1.0);
  CHECK_THROWS_AS(forward_diffuse(z, LatentGrid(1, 1, 2, 1), 0.5), ShapeError);
  CHECK_THROWS_AS(v_target(z, eps, 1.5), ValidationError);
}

TEST_CASE("feed-forward limit at T=1000") {
  const DiffusionSchedule s = make_schedule(1000, 1e-4, 0.02);
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 10; ++trial) {
    const LatentGrid z = random_latent(2, 3, 4, 4, rng);
    const LatentGrid zero(2, 3, 4, 4);
    const LatentGrid zt = forward_diffuse(z, zero, 1000, s);
    CHECK(max_abs(zt) <= 1e-2 * max_abs(z));
    LatentGrid vz = v_target(z, zero, 1000, s);
    for (std::size_t i = 0; i < vz.data.size(); ++i) vz.data[i] += z.data[i];
    CHECK(max_abs(vz) <= 1e-2 * max_abs(z));
  }
}

TEST_CASE("identity codec round trip is exact") {
  std::mt19937_64 rng(2);
  const VideoClip clip = testing::random_clip(3, 5, 7, rng);
  const IdentityCodec codec;
  const LatentGrid z = codec.encode(clip);
  CHECK(z.channels == 4);
  CHECK(z.height == 5);
  CHECK(z.width == 7);
  for (int f = 0; f < 3; ++f) CHECK(z.at(f, 2, 3, 3) == 0.0);
  CHECK(codec.decode(z, clip.fps()) == clip);
}

TEST_CASE("patch codec bookkeeping") {
  std::mt19937_64 rng(3);
  const VideoClip clip = testing::random_clip(2, 16, 24, rng);
  const PatchCodec codec(8);
  const LatentGrid z = codec.encode(clip);
  CHECK(z.height == 2);
  CHECK(z.width == 3);
  CHECK(z.channels == 4);
  double mean = 0.0;
  for (int y = 8; y < 16; ++y) {
    for (int x = 16; x < 24; ++x) mean += clip[1].at(y, x, 1);
  }
  CHECK(z.at(1, 1, 2, 1) == doctest::Approx(mean / 64.0).epsilon(1e-6));
  const VideoClip back = codec.decode(z, clip.fps());
  CHECK(back.height() == 16);
  CHECK(back.width() == 24);
  CHECK(back[1].at(9, 17, 1) == doctest::Approx(mean / 64.0).epsilon(1e-6));
  CHECK_THROWS_AS(codec.encode(testing::random_clip(1, 12, 16, rng)), ShapeError);
  CHECK(make_codec("patch8")->factor() == 8);
  CHECK(make_codec("identity")->factor() == 1);
  CHECK_THROWS_AS(make_codec("vae"), ValidationError);
}

TEST_CASE("conditioning layout with the identity codec") {
  std::mt19937_64 rng(4);
  const VideoClip left = testing::random_clip(2, 4, 5, rng);
  const VideoClip warped = testing::random_clip(2, 4, 5, rng);
  const auto masks = testing::zero_masks(2, 4, 5);
  const ConditioningTensor cond = assemble_conditioning(left, warped, masks, IdentityCodec());
  REQUIRE(cond.grid.channels == 13);
  for (int f = 0; f < 2; ++f) {
    for (int y = 0; y < 4; ++y) {
      for (int x = 0; x < 5; ++x) {
        for (int c = 0; c < 4; ++c) CHECK(cond.grid.at(f, y, x, c) == 0.0);
        for (int c = 0; c < 3; ++c) {
          CHECK(cond.grid.at(f, y, x, 4 + c) == static_cast<double>(left[f].at(y, x, c)));
          CHECK(cond.grid.at(f, y, x, 8 + c) == static_cast<double>(warped[f].at(y, x, c)));
        }
        CHECK(cond.grid.at(f, y, x, 12) == 0.0);
      }
    }
  }
}

TEST_CASE("conditioning disassembly is exact") {
  std::mt19937_64 rng(5);
  ConditioningParts parts{random_latent(2, 3, 3, 4, rng), random_latent(2, 3, 3, 4, rng),
                          random_latent(2, 3, 3, 4, rng), random_latent(2, 3, 3, 1, rng)};
  const ConditioningTensor cond = assemble_conditioning(parts);
  const ConditioningParts back = disassemble_conditioning(cond);
  CHECK(back.initial == parts.initial);
  CHECK(back.left == parts.left);
  CHECK(back.warped == parts.warped);
  CHECK(back.mask == parts.mask);
  CHECK(assemble_conditioning(back).grid == cond.grid);
  parts.mask.channels = 2;
  CHECK_THROWS_AS(assemble_conditioning(parts), ShapeError);
}

TEST_CASE("mask downsampling") {
  Mask m(16, 24, 0);
  for (int y = 8; y < 16; ++y) {
    for (int x = 0; x < 8; ++x) m(y, x) = 1;
  }
  const std::vector<Mask> masks{m};
  const LatentGrid d = downsample_mask(masks, 8);
  REQUIRE(d.height == 2);
  REQUIRE(d.width == 3);
  double total = 0.0;
  for (double v : d.data) total += v;
  CHECK(total == 1.0);
  CHECK(d.at(0, 1, 0, 0) == 1.0);

  // Half-covered block sits exactly on the threshold.
  Mask half(8, 8, 0);
  for (int y = 0; y < 4; ++y) {
    for (int x = 0; x < 8; ++x) half(y, x) = 1;
  }
  CHECK(downsample_mask(std::vector<Mask>{half}, 8).data[0] == 1.0);
  half(0, 0) = 0;
  CHECK(downsample_mask(std::vector<Mask>{half}, 8).data[0] == 0.0);
}

TEST_CASE("single-step prediction calls the backend once") {
  std::mt19937_64 rng(6);
  const VideoClip left = testing::random_clip(2, 8, 8, rng);
  const VideoClip gt = testing::random_clip(2, 8, 8, rng);
  const auto masks = testing::random_masks(2, 8, 8, 0.3, rng);
  for (const char* name : {"identity", "patch8"}) {
    const auto codec = make_codec(name);
    const ConditioningTensor cond = assemble_conditioning(left, left, masks, *codec);
    LatentGrid answer = codec->encode(gt);
    for (double& v : answer.data) v = -v;
    CountingBackend backend(answer);
    const VideoClip out = predict_single_step(cond, backend, *codec, 1000, 8.0);
    CHECK(backend.calls == 1);
    CHECK(backend.last_t == 1000);
    CHECK(out == codec->decode(codec->encode(gt), 8.0));
  }
}

TEST_CASE("echo backend reproduces the warped view") {
  std::mt19937_64 rng(7);
  const VideoClip left = testing::random_clip(3, 6, 5, rng);
  const VideoClip warped = testing::random_clip(3, 6, 5, rng);
  const auto masks = testing::random_masks(3, 6, 5, 0.2, rng);
  const ConditioningTensor cond = assemble_conditioning(left, warped, masks, IdentityCodec());
  WarpEchoBackend echo;
  CHECK(predict_single_step(cond, echo, IdentityCodec(), 1000, warped.fps()) == warped);

  RefinerContext ctx{std::make_shared<IdentityCodec>(), make_schedule(1000, 1e-4, 0.02)};
  const auto refiner = RefinerRegistry::instance().create("echo", ctx);
  CHECK(refiner->refine(left, warped, masks) == warped);
}

TEST_CASE("prediction is clamped and shape checked") {
  const VideoClip clip = testing::constant_clip(1, 2, 2, 0.5f);
  const auto masks = testing::zero_masks(1, 2, 2);
  const ConditioningTensor cond = assemble_conditioning(clip, clip, masks, IdentityCodec());
  CountingBackend big(LatentGrid(1, 2, 2, 4, -3.0));
  const VideoClip clamped = predict_single_step(cond, big, IdentityCodec(), 1, 8.0);
  for (float v : clamped[0].values()) CHECK(v == 1.0f);
  CountingBackend wrong(LatentGrid(1, 2, 3, 4));
  CHECK_THROWS_AS(predict_single_step(cond, wrong, IdentityCodec(), 1, 8.0), StageError);
}

TEST_CASE("latent loss") {
  LatentGrid z(1, 1, 2, 1);
  z.data = {1.0, 2.0};
  CHECK(loss_latent(z, LatentGrid(1, 1, 2, 1)) == 2.5);
  LatentGrid neg = z;
  for (double& v : neg.data) v = -v;
  CHECK(loss_latent(z, neg) == 0.0);
  CHECK(loss_latent(LatentGrid(1, 1, 2, 1), LatentGrid(1, 1, 2, 1, 1.0)) == 1.0);
  std::mt19937_64 rng(8);
  const LatentGrid a = random_latent(1, 2, 2, 4, rng), b = random_latent(1, 2, 2, 4, rng);
  LatentGrid na = a, nb = b;
  for (double& v : na.data) v = -v;
  for (double& v : nb.data) v = -v;
  CHECK(loss_latent(a, b) == doctest::Approx(loss_latent(na, nb)).epsilon(1e-15));
}

TEST_CASE("image loss components") {
  const VideoClip gt = testing::constant_clip(2, 3, 3, 0.4f);
  const LossBreakdown same = loss_image(gt, gt);
  CHECK(same.l1 == 0.0);
  CHECK_FALSE(same.perceptual_present);
  CHECK(same.perceptual == 0.0);
  const LossBreakdown off = loss_image(gt, testing::constant_clip(2, 3, 3, 0.5f));
  CHECK(off.l1 == doctest::Approx(0.1).epsilon(1e-6));
  CHECK(off.total == off.l1);
  const ConstantPerceptual lp;
  const LossBreakdown with = loss_image(gt, gt, &lp);
  CHECK(with.perceptual_present);
  CHECK(with.total == 0.25);

  LatentGrid z(1, 1, 2, 1);
  z.data = {1.0, 2.0};
  const LossBreakdown all = training_loss(z, LatentGrid(1, 1, 2, 1), gt, testing::constant_clip(2, 3, 3, 0.5f), &lp);
  CHECK(all.latent == 2.5);
  CHECK(all.total == doctest::Approx(2.5 + 0.1 + 0.25).epsilon(1e-6));
  CHECK_THROWS_AS(loss_image(gt, testing::constant_clip(1, 3, 3, 0.4f)), ShapeError);
}

TEST_CASE("farplane refiner examples") {
  std::mt19937_64 rng(9);
  const VideoClip left = testing::random_clip(2, 4, 6, rng);
  const VideoClip warped = testing::random_clip(2, 4, 6, rng);
  CHECK(baseline_farplane_refine(left, warped, testing::zero_masks(2, 4, 6)) == warped);

  const VideoClip row({gradient_row(8)});
  Mask m(1, 8, 0);
  m(0, 3) = 1;
  const VideoClip out = baseline_farplane_refine(row, row, std::vector<Mask>{m});
  for (int c = 0; c < 3; ++c) CHECK(out[0].at(0, 3, c) == row[0].at(0, 4, c));

  // No visible pixel to the right: take the left neighbour.
  Mask edge(1, 8, 0);
  edge(0, 6) = edge(0, 7) = 1;
  const VideoClip e = baseline_farplane_refine(row, row, std::vector<Mask>{edge});
  CHECK(e[0].at(0, 7, 0) == row[0].at(0, 5, 0));
  CHECK(e[0].at(0, 6, 0) == row[0].at(0, 5, 0));

  const auto full = std::vector<Mask>{Mask(3, 3, 1)};
  const VideoClip c3 = testing::constant_clip(1, 3, 3, 0.9f);
  const VideoClip gray = baseline_farplane_refine(c3, c3, full);
  for (float v : gray[0].values()) CHECK(v == 0.5f);
}

TEST_CASE("farplane refiner leaves unmasked pixels alone") {
  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 10; ++trial) {
    const VideoClip left = testing::random_clip(2, 5, 9, rng);
    const VideoClip warped = testing::random_clip(2, 5, 9, rng);
    const auto masks = testing::random_masks(2, 5, 9, 0.4, rng);
    const VideoClip out = FarplaneRefiner().refine(left, warped, masks);
    for (int f = 0; f < 2; ++f) {
      for (int y = 0; y < 5; ++y) {
        for (int x = 0; x < 9; ++x) {
          for (int c = 0; c < 3; ++c) {
            if (!masks[static_cast<std::size_t>(f)](y, x)) CHECK(out[f].at(y, x, c) == warped[f].at(y, x, c));
            CHECK(out[f].at(y, x, c) >= 0.0f);
            CHECK(out[f].at(y, x, c) <= 1.0f);
          }
        }
      }
    }
  }
}

TEST_CASE("refiner registry") {
  auto& reg = RefinerRegistry::instance();
  CHECK(reg.contains("farplane"));
  CHECK(reg.contains("passthrough"));
  CHECK(reg.contains("echo"));
  RefinerContext ctx;
  CHECK(reg.create("farplane", ctx)->name() == "farplane");
  CHECK_THROWS_AS(reg.create("lpips-net", ctx), ValidationError);
  reg.add("test-pass", [](const RefinerContext&) { return std::make_unique<PassthroughRefiner>(); });
  CHECK(reg.contains("test-pass"));
  std::mt19937_64 rng(11);
  const VideoClip a = testing::random_clip(1, 2, 2, rng), b = testing::random_clip(1, 2, 2, rng);
  CHECK(reg.create("test-pass", ctx)->refine(a, b, testing::zero_masks(1, 2, 2)) == b);
}
