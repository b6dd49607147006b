#include "commands.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <random>
#include <sstream>

#include <json.hpp>

#include "stereo/attention.hpp"
#include "stereo/image_io.hpp"
#include "stereo/metrics.hpp"
#include "stereo/pipeline.hpp"
#include "stereo/rectify.hpp"
#include "stereo/synthetic.hpp"

namespace stereoconv {

namespace fs = std::filesystem;

namespace {

// Writes to `path`, or stdout when it is empty.
void emit(const std::string& path, const std::string& text) {
  if (path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw stereo::IoError(path, "cannot open for writing");
  os << text;
  if (!os) throw stereo::IoError(path, "write failed");
}

nlohmann::json load_json(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw stereo::IoError(path, "no such file");
  try {
    return nlohmann::json::parse(is);
  } catch (const nlohmann::json::parse_error& e) {
    throw stereo::FormatError(path, e.what());
  }
}

}  // namespace

void add_convert(CLI::App& app, Action& action) {
  struct Opts {
    std::string config, left, depth, out, manifest, splat, normalization, refiner, codec, tile,
        tile_overlap, format;
    float max_disparity = 0.0f;
    int closing_kernel = 11, chunk_len = 16, chunk_overlap = 7, steps = 1000;
    double fps = 8.0, beta_start = 1e-4, beta_end = 0.02;
    std::uint64_t seed = 0;
    bool save_masks = false;
  };
  auto o = std::make_shared<Opts>();
  CLI::App* sub = app.add_subcommand("convert", "Convert a left-view clip and depth into stereo");
  auto* config = sub->add_option("--config", o->config, "JSON config; flags override it");
  auto* left = sub->add_option("--left", o->left, "Left frame directory (%06d.png)");
  auto* depth = sub->add_option("--depth", o->depth, "Depth directory (%06d.pfm)");
  auto* dmax = sub->add_option("--max-disparity", o->max_disparity, "Largest disparity in pixels");
  auto* splat = sub->add_option("--splat-mode", o->splat, "nearest|bilinear");
  auto* kernel = sub->add_option("--closing-kernel", o->closing_kernel, "Odd mask closing size");
  auto* norm = sub->add_option("--normalization", o->normalization, "clip|frame");
  auto* refiner = sub->add_option("--refiner", o->refiner, "Registered refiner name");
  auto* codec = sub->add_option("--codec", o->codec, "identity|patch8");
  auto* chunk = sub->add_option("--chunk-len", o->chunk_len, "Frames per window");
  auto* overlap = sub->add_option("--chunk-overlap", o->chunk_overlap, "Carried-over frames");
  auto* tile = sub->add_option("--tile", o->tile, "Tile size HxW");
  auto* tile_ov = sub->add_option("--tile-overlap", o->tile_overlap, "Tile overlap HxW");
  auto* format = sub->add_option("--format", o->format, "frames|sbs|anaglyph");
  auto* out = sub->add_option("--out", o->out, "Output directory");
  auto* seed = sub->add_option("--seed", o->seed, "Random seed");
  auto* manifest = sub->add_option("--manifest", o->manifest, "Manifest path");
  auto* fps = sub->add_option("--fps", o->fps, "Frame rate passed to the refiner");
  auto* steps = sub->add_option("--diffusion-steps", o->steps, "Schedule length T");
  auto* bs = sub->add_option("--beta-start", o->beta_start, "First beta");
  auto* be = sub->add_option("--beta-end", o->beta_end, "Last beta");
  auto* masks = sub->add_flag("--save-masks", o->save_masks, "Also write masks to <out>/mask");

  sub->callback([=, &action] {
    action = [=] {
      stereo::PipelineConfig cfg;
      if (*config) cfg = stereo::config_from_json(load_json(o->config));
      if (*left) cfg.left_dir = o->left;
      if (*depth) cfg.depth_dir = o->depth;
      if (*dmax) cfg.max_disparity = o->max_disparity;
      if (*splat) cfg.splat_mode = stereo::parse_splat_mode(o->splat);
      if (*kernel) cfg.closing_kernel = o->closing_kernel;
      if (*norm) cfg.normalization = stereo::parse_normalization(o->normalization);
      if (*refiner) cfg.refiner = o->refiner;
      if (*codec) cfg.codec = o->codec;
      if (*chunk) cfg.chunk_length = o->chunk_len;
      if (*overlap) cfg.chunk_overlap = o->chunk_overlap;
      if (*tile) std::tie(cfg.tile.height, cfg.tile.width) = stereo::parse_size(o->tile);
      if (*tile_ov) {
        std::tie(cfg.tile.overlap_y, cfg.tile.overlap_x) = stereo::parse_size(o->tile_overlap);
      }
      if (*format) cfg.format = stereo::parse_output_format(o->format);
      if (*out) cfg.out_dir = o->out;
      if (*seed) cfg.seed = o->seed;
      if (*manifest) cfg.manifest_path = o->manifest;
      if (*fps) cfg.fps = o->fps;
      if (*steps) cfg.diffusion_steps = o->steps;
      if (*bs) cfg.beta_start = o->beta_start;
      if (*be) cfg.beta_end = o->beta_end;
      if (*masks) cfg.save_masks = o->save_masks;

      const nlohmann::json m = stereo::run_convert(cfg);
      std::cout << "wrote " << m["outputs"].size() << " frames to " << cfg.out_dir.string()
                << " (masked fraction " << m["mask"]["masked_fraction"].get<double>() << ")\n";
    };
  });
}

void add_rectify(CLI::App& app, Action& action) {
  struct Opts {
    std::string matches, out;
    int width = 0, height = 0;
    stereo::RansacConfig ransac;
    double limit = 2.0;
  };
  auto o = std::make_shared<Opts>();
  CLI::App* sub = app.add_subcommand("rectify", "Estimate rectifying homographies from matches");
  sub->add_option("--matches", o->matches, "CSV with header xl,yl,xr,yr")->required();
  sub->add_option("--width", o->width, "Image width")->required();
  sub->add_option("--height", o->height, "Image height")->required();
  sub->add_option("--threshold", o->ransac.threshold, "Inlier Sampson distance (px)");
  sub->add_option("--max-iters", o->ransac.max_iterations, "RANSAC iteration cap");
  sub->add_option("--confidence", o->ransac.confidence, "RANSAC stopping confidence");
  sub->add_option("--seed", o->ransac.seed, "RANSAC seed");
  sub->add_option("--limit", o->limit, "Vertical disparity filter limit (px)");
  sub->add_option("--out", o->out, "JSON output path (default stdout)");
  sub->callback([o, &action] {
    action = [o] {
      const stereo::MatchSet set = stereo::read_matches_csv(o->matches, o->width, o->height);
      const stereo::RectifyReport report = stereo::rectify_matches(set, o->ransac, o->limit);
      emit(o->out, stereo::to_json(report) + "\n");
    };
  });
}

void add_metrics(CLI::App& app, Action& action) {
  struct Opts {
    std::string estimate, reference, mask, region = "full", id = "video", out;
  };
  auto o = std::make_shared<Opts>();
  CLI::App* sub = app.add_subcommand("metrics", "PSNR and MS-SSIM of a clip against a reference");
  sub->add_option("--estimate", o->estimate, "Estimated frame directory")->required();
  sub->add_option("--reference", o->reference, "Reference frame directory")->required();
  sub->add_option("--mask", o->mask, "Mask directory (%06d.pgm), needed for inside/outside");
  sub->add_option("--region", o->region, "full|inside|outside|all");
  sub->add_option("--id", o->id, "Video identifier for the CSV");
  sub->add_option("--out", o->out, "CSV output path (default stdout)");
  sub->callback([o, &action] {
    action = [o] {
      using stereo::metrics::Region;
      std::vector<Region> regions;
      if (o->region == "full" || o->region == "all") regions.push_back(Region::full);
      if (o->region == "inside" || o->region == "all") regions.push_back(Region::inside_mask);
      if (o->region == "outside" || o->region == "all") regions.push_back(Region::outside_mask);
      if (regions.empty()) {
        throw stereo::ValidationError("unknown region '" + o->region + "'");
      }
      const stereo::VideoClip est = stereo::read_clip_dir(o->estimate);
      const stereo::VideoClip ref = stereo::read_clip_dir(o->reference);
      std::vector<stereo::Mask> masks;
      const bool need_mask = o->region != "full";
      if (need_mask && o->mask.empty()) throw stereo::ValidationError("--mask required for region");
      if (!o->mask.empty()) masks = stereo::read_mask_dir(o->mask, est.size());

      std::ostringstream csv;
      csv << "video_id,region,psnr_db,ms_ssim\n" << std::fixed;
      for (Region r : regions) {
        const auto rep = stereo::metrics::evaluate(o->id, est, ref, masks, r);
        csv << o->id << ',' << stereo::metrics::to_string(r) << ',';
        if (rep.psnr.infinite) {
          csv << "inf";
        } else {
          csv << std::setprecision(4) << rep.psnr.db;
        }
        csv << ',' << std::setprecision(6) << rep.ms_ssim << '\n';
      }
      emit(o->out, csv.str());
    };
  });
}

namespace {

namespace att = stereo::attention;

att::TokenGrid random_grid(int n, int h, int w, int c, std::mt19937_64& rng) {
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

double objective(const att::TokenGrid& x, const att::AttentionParams& p, att::Pattern pattern,
                 const att::AttentionMask* mask, const att::TokenGrid& up) {
  const att::TokenGrid out = att::attend(x, p, pattern, mask).out;
  double s = 0.0;
  for (std::size_t i = 0; i < out.data.size(); ++i) s += out.data[i] * up.data[i];
  return s;
}

double rel_err(double a, double n) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-6});
}

// Central differences over every input and weight entry.
double max_gradient_error(const att::TokenGrid& x, const att::AttentionParams& p,
                          att::Pattern pattern, const att::AttentionMask* mask,
                          const att::TokenGrid& up) {
  constexpr double h = 1e-5;
  const att::AttentionGradients g = att::attention_backward(x, p, pattern, mask, up);
  double worst = 0.0;
  att::TokenGrid xp = x;
  for (std::size_t i = 0; i < x.data.size(); ++i) {
    xp.data[i] = x.data[i] + h;
    const double fp = objective(xp, p, pattern, mask, up);
    xp.data[i] = x.data[i] - h;
    const double fm = objective(xp, p, pattern, mask, up);
    xp.data[i] = x.data[i];
    worst = std::max(worst, rel_err(g.dx.data[i], (fp - fm) / (2 * h)));
  }
  auto check = [&](Eigen::MatrixXd att::AttentionParams::*member, const Eigen::MatrixXd& grad) {
    att::AttentionParams q = p;
    Eigen::MatrixXd& w = q.*member;
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (Eigen::Index c = 0; c < w.cols(); ++c) {
        const double orig = w(r, c);
        w(r, c) = orig + h;
        const double fp = objective(x, q, pattern, mask, up);
        w(r, c) = orig - h;
        const double fm = objective(x, q, pattern, mask, up);
        w(r, c) = orig;
        worst = std::max(worst, rel_err(grad(r, c), (fp - fm) / (2 * h)));
      }
    }
  };
  check(&att::AttentionParams::wq, g.dwq);
  check(&att::AttentionParams::wk, g.dwk);
  check(&att::AttentionParams::wv, g.dwv);
  return worst;
}

}  // namespace

void add_attn_check(CLI::App& app, Action& action) {
  struct Opts {
    int max_size = 3, channels = 4;
    double masked_fraction = 0.5;
    std::uint64_t seed = 0;
    bool no_grad = false;
    std::string out;
  };
  auto o = std::make_shared<Opts>();
  CLI::App* sub = app.add_subcommand("attn-check", "Measure attention cost and gradient error");
  sub->add_option("--max-size", o->max_size, "N, h, w each range over 1..max-size")
      ->check(CLI::Range(1, 8));
  sub->add_option("--channels", o->channels, "Token dimension")->check(CLI::Range(1, 64));
  sub->add_option("--masked-fraction", o->masked_fraction, "Share of masked tokens")
      ->check(CLI::Range(0.0, 1.0));
  sub->add_option("--seed", o->seed, "Random seed");
  sub->add_flag("--no-grad", o->no_grad, "Skip finite differences (max_grad_rel_err = 0)");
  sub->add_option("--out", o->out, "CSV output path (default stdout)");
  sub->callback([o, &action] {
    action = [o] {
      std::mt19937_64 rng(o->seed);
      std::ostringstream csv;
      csv << "pattern,N,h,w,masked_fraction,predicted_cost,measured_cost,max_grad_rel_err\n";
      const att::Pattern patterns[] = {att::Pattern::spatial, att::Pattern::temporal,
                                       att::Pattern::full, att::Pattern::masked_full};
      for (att::Pattern pattern : patterns) {
        for (int n = 1; n <= o->max_size; ++n) {
          for (int h = 1; h <= o->max_size; ++h) {
            for (int w = 1; w <= o->max_size; ++w) {
              const att::TokenGrid x = random_grid(n, h, w, o->channels, rng);
              const att::TokenGrid up = random_grid(n, h, w, o->channels, rng);
              const att::AttentionParams p = random_params(o->channels, rng);
              att::AttentionMask mask(n, h, w);
              const bool masked = pattern == att::Pattern::masked_full;
              if (masked) {
                const auto k = static_cast<std::size_t>(
                    std::lround(o->masked_fraction * static_cast<double>(mask.flags.size())));
                std::vector<std::size_t> order(mask.flags.size());
                for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
                std::shuffle(order.begin(), order.end(), rng);
                for (std::size_t i = 0; i < k; ++i) mask.flags[order[i]] = 1;
              }
              const att::AttentionMask* mp = masked ? &mask : nullptr;
              const auto measured = att::attend(x, p, pattern, mp).cost.qk_dot_products;
              const auto predicted = att::predicted_cost(
                  pattern, static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(h),
                  static_cast<std::uint64_t>(w), masked ? mask.count() : 0);
              const double err = o->no_grad ? 0.0 : max_gradient_error(x, p, pattern, mp, up);
              const double frac = masked ? static_cast<double>(mask.count()) /
                                               static_cast<double>(mask.flags.size())
                                         : 0.0;
              csv << att::to_string(pattern) << ',' << n << ',' << h << ',' << w << ','
                  << std::setprecision(6) << frac << ',' << predicted << ',' << measured << ','
                  << std::scientific << std::setprecision(3) << err << std::defaultfloat << '\n';
            }
          }
        }
      }
      emit(o->out, csv.str());
    };
  });
}

void add_synth_scene(CLI::App& app, Action& action) {
  struct Opts {
    std::string out;
    stereo::TwoLayerSceneConfig scene;
  };
  auto o = std::make_shared<Opts>();
  CLI::App* sub =
      app.add_subcommand("synth-scene", "Write the two-layer synthetic scene (left/ and depth/)");
  sub->add_option("--out", o->out, "Output directory")->required();
  sub->add_option("--frames", o->scene.frames, "Frame count");
  sub->add_option("--height", o->scene.height, "Frame height");
  sub->add_option("--width", o->scene.width, "Frame width");
  sub->add_option("--motion", o->scene.motion, "Foreground motion per frame (px)");
  sub->callback([o, &action] {
    action = [o] {
      const stereo::TwoLayerScene s = stereo::make_two_layer_scene(o->scene);
      const fs::path root(o->out);
      stereo::write_clip_dir(s.left, root / "left");
      fs::create_directories(root / "depth");
      for (std::size_t i = 0; i < s.depth.size(); ++i) {
        stereo::write_pfm(s.depth[i].plane(), stereo::frame_path(root / "depth", i, "pfm"));
      }
      std::cout << "wrote " << s.left.size() << " frames to " << root.string() << '\n';
    };
  });
}

}  // namespace stereoconv
