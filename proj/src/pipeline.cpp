#include "stereo/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>

#include "stereo/image_io.hpp"

namespace stereo {

namespace fs = std::filesystem;
using nlohmann::json;

ChunkPlan plan_chunks(int total_frames, int chunk_length, int overlap) {
  if (total_frames < 1) throw ValidationError("chunk plan needs at least one frame");
  if (chunk_length < 1) throw ValidationError("chunk length must be positive");
  if (overlap < 0 || overlap >= chunk_length) {
    throw ValidationError("chunk overlap must satisfy 0 <= m < N_c (m=" + std::to_string(overlap) +
                          ", N_c=" + std::to_string(chunk_length) + ")");
  }
  ChunkPlan plan{chunk_length, overlap, {}};
  plan.windows.push_back({0, std::min(chunk_length, total_frames), 0});
  while (plan.windows.back().end < total_frames) {
    const int start = plan.windows.back().end - overlap;
    plan.windows.push_back({start, std::min(start + chunk_length, total_frames), overlap});
  }
  return plan;
}

namespace {

struct Axis {
  std::vector<int> starts;
  std::vector<std::vector<double>> weights;
};

Axis plan_axis(int size, int tile, int overlap, const char* name) {
  if (tile < 1 || tile > size) {
    throw ValidationError(std::string("tile ") + name + " " + std::to_string(tile) +
                          " outside [1, " + std::to_string(size) + "]");
  }
  if (overlap < 0 || overlap >= tile) {
    throw ValidationError(std::string("tile overlap ") + name + " must be in [0, tile)");
  }
  Axis a;
  for (int p = 0;; p = std::min(p + tile - overlap, size - tile)) {
    a.starts.push_back(p);
    if (p + tile >= size) break;
  }
  const std::size_t n = a.starts.size();
  std::vector<double> total(static_cast<std::size_t>(size), 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> w(static_cast<std::size_t>(tile), 1.0);
    if (i > 0) {
      const int ov = a.starts[i - 1] + tile - a.starts[i];
      for (int k = 0; k < ov; ++k) {
        auto& v = w[static_cast<std::size_t>(k)];
        v = std::min(v, (k + 1) / static_cast<double>(ov + 1));
      }
    }
    if (i + 1 < n) {
      const int ov = a.starts[i] + tile - a.starts[i + 1];
      for (int k = tile - ov; k < tile; ++k) {
        auto& v = w[static_cast<std::size_t>(k)];
        v = std::min(v, (tile - k) / static_cast<double>(ov + 1));
      }
    }
    for (int k = 0; k < tile; ++k) {
      total[static_cast<std::size_t>(a.starts[i] + k)] += w[static_cast<std::size_t>(k)];
    }
    a.weights.push_back(std::move(w));
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (int k = 0; k < tile; ++k) {
      a.weights[i][static_cast<std::size_t>(k)] /= total[static_cast<std::size_t>(a.starts[i] + k)];
    }
  }
  return a;
}

}  // namespace

TileRect TilePlan::tile(std::size_t i) const {
  const std::size_t by = i / col_starts.size();
  const std::size_t bx = i % col_starts.size();
  return {row_starts.at(by), col_starts.at(bx), tile_height, tile_width};
}

double TilePlan::weight(std::size_t i, int y, int x) const {
  const TileRect r = tile(i);
  if (y < r.y0 || y >= r.y0 + r.height || x < r.x0 || x >= r.x0 + r.width) return 0.0;
  const std::size_t by = i / col_starts.size();
  const std::size_t bx = i % col_starts.size();
  return row_weights[by][static_cast<std::size_t>(y - r.y0)] *
         col_weights[bx][static_cast<std::size_t>(x - r.x0)];
}

TilePlan plan_tiles(int height, int width, int tile_height, int tile_width, int overlap_y,
                    int overlap_x) {
  Axis rows = plan_axis(height, tile_height, overlap_y, "height");
  Axis cols = plan_axis(width, tile_width, overlap_x, "width");
  TilePlan p;
  p.height = height;
  p.width = width;
  p.tile_height = tile_height;
  p.tile_width = tile_width;
  p.overlap_y = overlap_y;
  p.overlap_x = overlap_x;
  p.row_starts = std::move(rows.starts);
  p.col_starts = std::move(cols.starts);
  p.row_weights = std::move(rows.weights);
  p.col_weights = std::move(cols.weights);
  return p;
}

namespace {

void check_refiner_output(const VideoClip& out, const VideoClip& reference,
                          const std::string& context) {
  if (out.size() != reference.size() || !out.same_shape(reference)) {
    throw StageError("refine", context + ": refiner returned " + std::to_string(out.size()) + "x" +
                                   std::to_string(out.height()) + "x" +
                                   std::to_string(out.width()) + ", expected " +
                                   std::to_string(reference.size()) + "x" +
                                   std::to_string(reference.height()) + "x" +
                                   std::to_string(reference.width()));
  }
  for (const Frame& f : out.frames()) {
    for (float v : f.values()) {
      if (!(v >= 0.0f && v <= 1.0f)) {
        throw StageError("refine", context + ": refiner produced a value outside [0,1]");
      }
    }
  }
}

template <typename Fn>
auto in_stage(const std::string& stage, const std::string& context, Fn&& fn) {
  try {
    return fn();
  } catch (const StageError&) {
    throw;
  } catch (const InputError& e) {
    throw StageError(stage, context.empty() ? e.what() : context + ": " + e.what(), true);
  } catch (const std::exception& e) {
    throw StageError(stage, context.empty() ? e.what() : context + ": " + e.what(), false);
  }
}

void require_inputs(const VideoClip& left, const VideoClip& warped, std::span<const Mask> mask) {
  if (!left.same_shape(warped) || left.size() != warped.size()) {
    throw ShapeError("left and warped clips differ in shape");
  }
  if (mask.size() != left.size()) throw ShapeError("one mask per frame required");
  for (const Mask& m : mask) {
    if (m.height() != left.height() || m.width() != left.width()) {
      throw ShapeError("mask size differs from frame size");
    }
  }
}

}  // namespace

VideoClip run_chunked(const VideoClip& left, const VideoClip& warped, std::span<const Mask> mask,
                      const ChunkPlan& plan, const Refiner& refiner) {
  require_inputs(left, warped, mask);
  if (plan.windows.empty() || plan.windows.front().start != 0 ||
      plan.windows.back().end != static_cast<int>(left.size())) {
    throw ValidationError("chunk plan does not span the clip");
  }
  std::vector<Frame> out;
  out.reserve(left.size());
  for (std::size_t k = 0; k < plan.windows.size(); ++k) {
    const ChunkWindow& w = plan.windows[k];
    if (w.start + w.carryover > static_cast<int>(out.size())) {
      throw ValidationError("chunk window " + std::to_string(k) + " carries ungenerated frames");
    }
    std::vector<Frame> frames;
    std::vector<Mask> masks;
    for (int i = w.start; i < w.end; ++i) {
      const auto idx = static_cast<std::size_t>(i);
      if (i - w.start < w.carryover) {
        frames.push_back(out[idx]);
        masks.emplace_back(left.height(), left.width(), std::uint8_t{0});
      } else {
        frames.push_back(warped[idx]);
        masks.push_back(mask[idx]);
      }
    }
    const std::string context = "window " + std::to_string(k) + " [" + std::to_string(w.start) +
                                "," + std::to_string(w.end) + ")";
    const VideoClip left_w = left.slice(static_cast<std::size_t>(w.start),
                                        static_cast<std::size_t>(w.end));
    const VideoClip warped_w(std::move(frames), warped.fps());
    VideoClip r = in_stage("refine", context,
                           [&] { return refiner.refine(left_w, warped_w, masks); });
    check_refiner_output(r, left_w, context);
    for (int i = w.carryover; i < w.length(); ++i) out.push_back(r[static_cast<std::size_t>(i)]);
  }
  return VideoClip(std::move(out), left.fps());
}

VideoClip run_tiled(const VideoClip& left, const VideoClip& warped, std::span<const Mask> mask,
                    const TileSpec& spec, const Refiner& refiner, const LatentCodec& codec) {
  require_inputs(left, warped, mask);
  const int H = left.height();
  const int W = left.width();
  const int th = spec.height > 0 ? spec.height : H;
  const int tw = spec.width > 0 ? spec.width : W;
  const int f = codec.factor();
  for (int v : {H, W, th, tw, spec.overlap_y, spec.overlap_x}) {
    if (v % f != 0) {
      throw ValidationError("frame and tile geometry must be multiples of the codec factor " +
                            std::to_string(f));
    }
  }
  const TilePlan plan = plan_tiles(H / f, W / f, th / f, tw / f, spec.overlap_y / f,
                                   spec.overlap_x / f);
  const int n = static_cast<int>(left.size());
  constexpr int C = LatentCodec::kChannels;

  // out = v_first + sum_{later} w_i (v_i - v_first); exact when tiles agree.
  LatentGrid base(n, H / f, W / f, C);
  LatentGrid acc(n, H / f, W / f, C);
  Plane<std::uint8_t> seen(H / f, W / f, 0);

  for (std::size_t i = 0; i < plan.tile_count(); ++i) {
    const TileRect r = plan.tile(i);
    const int py = r.y0 * f, px = r.x0 * f, ph = r.height * f, pw = r.width * f;
    std::vector<Frame> lt, wt;
    std::vector<Mask> mt;
    for (std::size_t k = 0; k < left.size(); ++k) {
      lt.push_back(crop(left[k], py, px, ph, pw));
      wt.push_back(crop(warped[k], py, px, ph, pw));
      mt.push_back(crop(mask[k], py, px, ph, pw));
    }
    const VideoClip left_t(std::move(lt), left.fps());
    const VideoClip warped_t(std::move(wt), warped.fps());
    const std::string context = "tile " + std::to_string(i) + " at (" + std::to_string(py) + "," +
                                std::to_string(px) + ")";
    VideoClip out = in_stage("refine", context,
                             [&] { return refiner.refine(left_t, warped_t, mt); });
    check_refiner_output(out, left_t, context);
    const LatentGrid z = codec.encode(out);
    for (int fr = 0; fr < n; ++fr) {
      for (int y = 0; y < r.height; ++y) {
        for (int x = 0; x < r.width; ++x) {
          const int gy = r.y0 + y, gx = r.x0 + x;
          const bool first = seen(gy, gx) == 0;
          const double w = plan.weight(i, gy, gx);
          for (int c = 0; c < C; ++c) {
            const double v = z.at(fr, y, x, c);
            if (first) {
              base.at(fr, gy, gx, c) = v;
            } else {
              acc.at(fr, gy, gx, c) += w * (v - base.at(fr, gy, gx, c));
            }
          }
        }
      }
    }
    for (int y = 0; y < r.height; ++y) {
      for (int x = 0; x < r.width; ++x) seen(r.y0 + y, r.x0 + x) = 1;
    }
  }
  for (std::size_t k = 0; k < base.data.size(); ++k) base.data[k] += acc.data[k];
  VideoClip decoded = codec.decode(base, left.fps());
  std::vector<Frame> frames = decoded.frames();
  for (Frame& fr : frames) {
    for (float& v : fr.values()) v = std::clamp(v, 0.0f, 1.0f);
  }
  return VideoClip(std::move(frames), left.fps());
}

OutputFormat parse_output_format(const std::string& s) {
  if (s == "frames") return OutputFormat::frames;
  if (s == "sbs") return OutputFormat::sbs;
  if (s == "anaglyph") return OutputFormat::anaglyph;
  throw ValidationError("unknown output format '" + s + "' (frames, sbs, anaglyph)");
}

std::string to_string(OutputFormat f) {
  switch (f) {
    case OutputFormat::frames: return "frames";
    case OutputFormat::sbs: return "sbs";
    case OutputFormat::anaglyph: return "anaglyph";
  }
  return "unknown";
}

SplatMode parse_splat_mode(const std::string& s) {
  if (s == "nearest") return SplatMode::nearest;
  if (s == "bilinear") return SplatMode::bilinear;
  throw ValidationError("unknown splat mode '" + s + "' (nearest, bilinear)");
}

std::string to_string(SplatMode m) { return m == SplatMode::nearest ? "nearest" : "bilinear"; }

DisparityNormalization parse_normalization(const std::string& s) {
  if (s == "clip") return DisparityNormalization::clip_global;
  if (s == "frame") return DisparityNormalization::per_frame;
  throw ValidationError("unknown disparity normalization '" + s + "' (clip, frame)");
}

std::string to_string(DisparityNormalization n) {
  return n == DisparityNormalization::clip_global ? "clip" : "frame";
}

std::pair<int, int> parse_size(const std::string& s) {
  const auto x = s.find_first_of("xX");
  auto parse = [&](std::string_view part) {
    int v = -1;
    const auto [ptr, ec] = std::from_chars(part.data(), part.data() + part.size(), v);
    if (ec != std::errc{} || ptr != part.data() + part.size() || part.empty() || v < 0) {
      throw ValidationError("expected HxW with non-negative integers, got '" + s + "'");
    }
    return v;
  };
  if (x == std::string::npos) throw ValidationError("expected HxW, got '" + s + "'");
  const std::string_view sv(s);
  return {parse(sv.substr(0, x)), parse(sv.substr(x + 1))};
}

Frame side_by_side(const Frame& left, const Frame& right) {
  if (!left.same_shape(right)) throw ShapeError("stereo views differ in size");
  const int W = left.width();
  Frame out(left.height(), 2 * W);
  for (int y = 0; y < left.height(); ++y) {
    for (int x = 0; x < W; ++x) {
      for (int c = 0; c < Frame::kChannels; ++c) {
        out.at(y, x, c) = left.at(y, x, c);
        out.at(y, W + x, c) = right.at(y, x, c);
      }
    }
  }
  return out;
}

Frame anaglyph(const Frame& left, const Frame& right) {
  if (!left.same_shape(right)) throw ShapeError("stereo views differ in size");
  Frame out = right;
  for (int y = 0; y < left.height(); ++y) {
    for (int x = 0; x < left.width(); ++x) out.at(y, x, 0) = left.at(y, x, 0);
  }
  return out;
}

std::vector<fs::path> pack_stereo(const VideoClip& left, const VideoClip& right,
                                  OutputFormat format, const fs::path& dir) {
  if (left.size() != right.size() || !left.same_shape(right)) {
    throw ShapeError("left and right clips differ in shape");
  }
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError(dir.string(), "cannot create directory: " + ec.message());
  std::vector<fs::path> written;
  for (std::size_t i = 0; i < right.size(); ++i) {
    const fs::path p = frame_path(dir, i, "png");
    switch (format) {
      case OutputFormat::frames: write_frame_png(right[i], p); break;
      case OutputFormat::sbs: write_frame_png(side_by_side(left[i], right[i]), p); break;
      case OutputFormat::anaglyph: write_frame_png(anaglyph(left[i], right[i]), p); break;
    }
    written.push_back(p);
  }
  return written;
}

void PipelineConfig::validate() const {
  if (left_dir.empty()) throw ValidationError("left frame directory is required");
  if (depth_dir.empty()) throw ValidationError("depth directory is required");
  if (out_dir.empty()) throw ValidationError("output directory is required");
  WarpConfig{max_disparity, splat_mode, closing_kernel, normalization}.validate();
  if (!RefinerRegistry::instance().contains(refiner)) {
    std::string known;
    for (const auto& n : RefinerRegistry::instance().names()) known += (known.empty() ? "" : ", ") + n;
    throw ValidationError("unknown refiner '" + refiner + "' (" + known + ")");
  }
  make_codec(codec);
  if (chunk_length < 1) throw ValidationError("chunk length must be positive");
  if (chunk_overlap < 0 || chunk_overlap >= chunk_length) {
    throw ValidationError("chunk overlap must satisfy 0 <= m < N_c");
  }
  if (tile.height < 0 || tile.width < 0 || tile.overlap_y < 0 || tile.overlap_x < 0) {
    throw ValidationError("tile sizes must be non-negative");
  }
  if ((tile.height == 0) != (tile.width == 0)) {
    throw ValidationError("tile needs both height and width, or neither");
  }
  if (tile.height > 0 && (tile.overlap_y >= tile.height || tile.overlap_x >= tile.width)) {
    throw ValidationError("tile overlap must be smaller than the tile");
  }
  if (!(fps > 0.0) || !std::isfinite(fps)) throw ValidationError("fps must be positive");
  make_schedule(diffusion_steps, beta_start, beta_end);
}

namespace {

std::string size_string(int h, int w) { return std::to_string(h) + "x" + std::to_string(w); }

}  // namespace

PipelineConfig config_from_json(const json& j, PipelineConfig cfg) {
  if (!j.is_object()) throw ValidationError("config must be a JSON object");
  try {
    for (const auto& [raw_key, v] : j.items()) {
      std::string key = raw_key;
      std::replace(key.begin(), key.end(), '-', '_');
      if (key.rfind("diffusion.", 0) == 0) {
        cfg = config_from_json(json{{"diffusion", {{key.substr(10), v}}}}, cfg);
        continue;
      }
      if (key == "left") cfg.left_dir = v.get<std::string>();
      else if (key == "depth") cfg.depth_dir = v.get<std::string>();
      else if (key == "out") cfg.out_dir = v.get<std::string>();
      else if (key == "manifest") cfg.manifest_path = v.get<std::string>();
      else if (key == "max_disparity") cfg.max_disparity = v.get<float>();
      else if (key == "splat_mode") cfg.splat_mode = parse_splat_mode(v.get<std::string>());
      else if (key == "closing_kernel") cfg.closing_kernel = v.get<int>();
      else if (key == "normalization") cfg.normalization = parse_normalization(v.get<std::string>());
      else if (key == "refiner") cfg.refiner = v.get<std::string>();
      else if (key == "codec") cfg.codec = v.get<std::string>();
      else if (key == "chunk_len") cfg.chunk_length = v.get<int>();
      else if (key == "chunk_overlap") cfg.chunk_overlap = v.get<int>();
      else if (key == "tile") {
        std::tie(cfg.tile.height, cfg.tile.width) = parse_size(v.get<std::string>());
      } else if (key == "tile_overlap") {
        std::tie(cfg.tile.overlap_y, cfg.tile.overlap_x) = parse_size(v.get<std::string>());
      } else if (key == "format") cfg.format = parse_output_format(v.get<std::string>());
      else if (key == "seed") cfg.seed = v.get<std::uint64_t>();
      else if (key == "fps") cfg.fps = v.get<double>();
      else if (key == "save_masks") cfg.save_masks = v.get<bool>();
      else if (key == "diffusion") {
        if (!v.is_object()) throw ValidationError("config key 'diffusion' must be an object");
        for (const auto& [dk, dv] : v.items()) {
          if (dk == "T") cfg.diffusion_steps = dv.get<int>();
          else if (dk == "beta_start") cfg.beta_start = dv.get<double>();
          else if (dk == "beta_end") cfg.beta_end = dv.get<double>();
          else throw ValidationError("unknown config key 'diffusion." + dk + "'");
        }
      } else {
        throw ValidationError("unknown config key '" + key + "'");
      }
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
  return cfg;
}

json config_to_json(const PipelineConfig& c) {
  return json{
      {"left", c.left_dir.generic_string()},
      {"depth", c.depth_dir.generic_string()},
      {"out", c.out_dir.generic_string()},
      {"manifest", c.manifest_path.generic_string()},
      {"max_disparity", c.max_disparity},
      {"splat_mode", to_string(c.splat_mode)},
      {"closing_kernel", c.closing_kernel},
      {"normalization", to_string(c.normalization)},
      {"refiner", c.refiner},
      {"codec", c.codec},
      {"chunk_len", c.chunk_length},
      {"chunk_overlap", c.chunk_overlap},
      {"tile", size_string(c.tile.height, c.tile.width)},
      {"tile_overlap", size_string(c.tile.overlap_y, c.tile.overlap_x)},
      {"format", to_string(c.format)},
      {"seed", c.seed},
      {"fps", c.fps},
      {"save_masks", c.save_masks},
      {"diffusion", {{"T", c.diffusion_steps}, {"beta_start", c.beta_start}, {"beta_end", c.beta_end}}},
  };
}

std::size_t count_black_pixels(const Frame& frame) {
  std::size_t n = 0;
  for (int y = 0; y < frame.height(); ++y) {
    for (int x = 0; x < frame.width(); ++x) {
      if (frame.at(y, x, 0) == 0.0f && frame.at(y, x, 1) == 0.0f && frame.at(y, x, 2) == 0.0f) ++n;
    }
  }
  return n;
}

json run_convert(const PipelineConfig& cfg) {
  in_stage("config", "", [&] { cfg.validate(); });
  using clock = std::chrono::steady_clock;
  json timings = json::object();
  auto timed = [&](const std::string& stage, auto&& fn) {
    const auto t0 = clock::now();
    auto result = in_stage(stage, "", fn);
    timings[stage] = std::chrono::duration<double, std::milli>(clock::now() - t0).count();
    return result;
  };

  const VideoClip left = timed("ingest", [&] { return read_clip_dir(cfg.left_dir, cfg.fps); });
  const std::vector<DepthMap> depth =
      timed("ingest_depth", [&] { return read_depth_dir(cfg.depth_dir, left.size()); });

  const WarpResult warp = timed("warp", [&] {
    return warp_clip(left, depth,
                     WarpConfig{cfg.max_disparity, cfg.splat_mode, cfg.closing_kernel,
                                cfg.normalization});
  });

  std::shared_ptr<const LatentCodec> codec = make_codec(cfg.codec);
  const RefinerContext ctx{codec, make_schedule(cfg.diffusion_steps, cfg.beta_start, cfg.beta_end)};
  const std::unique_ptr<Refiner> base = RefinerRegistry::instance().create(cfg.refiner, ctx);
  const ChunkPlan chunks = plan_chunks(static_cast<int>(left.size()),
                                       std::min(cfg.chunk_length, static_cast<int>(left.size())),
                                       std::min(cfg.chunk_overlap,
                                                std::max(0, static_cast<int>(left.size()) - 1)));
  const bool tiled = cfg.tile.height > 0;
  std::size_t tile_count = 1;
  const VideoClip right = timed("refine", [&] {
    if (!tiled) return run_chunked(left, warp.warped, warp.mask, chunks, *base);
    tile_count = plan_tiles(left.height() / codec->factor(), left.width() / codec->factor(),
                            cfg.tile.height / codec->factor(), cfg.tile.width / codec->factor(),
                            cfg.tile.overlap_y / codec->factor(),
                            cfg.tile.overlap_x / codec->factor())
                     .tile_count();
    const TiledRefiner tiled_refiner(*base, *codec, cfg.tile);
    return run_chunked(left, warp.warped, warp.mask, chunks, tiled_refiner);
  });

  const std::vector<fs::path> written =
      timed("pack", [&] { return pack_stereo(left, right, cfg.format, cfg.out_dir); });
  if (cfg.save_masks) {
    timed("masks", [&] {
      write_mask_dir(warp.mask, cfg.out_dir / "mask");
      return 0;
    });
  }

  json per_frame = json::array();
  double masked = 0.0, raw = 0.0;
  const double area = static_cast<double>(left.height()) * left.width();
  for (std::size_t i = 0; i < left.size(); ++i) {
    const double m = count_set(warp.mask[i]) / area;
    const double r = count_set(warp.raw_mask[i]) / area;
    masked += m;
    raw += r;
    per_frame.push_back({{"frame", i}, {"masked_fraction", m}, {"raw_masked_fraction", r}});
  }
  json windows = json::array();
  for (const ChunkWindow& w : chunks.windows) {
    windows.push_back({{"start", w.start}, {"end", w.end}, {"carryover", w.carryover}});
  }
  json outputs = json::array();
  for (const fs::path& p : written) outputs.push_back(p.filename().generic_string());

  json manifest = {
      {"config", config_to_json(cfg)},
      {"input", {{"frames", left.size()}, {"height", left.height()}, {"width", left.width()}}},
      {"refiner", tiled ? "tiled(" + base->name() + ")" : base->name()},
      {"chunks", windows},
      {"tiles", tile_count},
      {"mask",
       {{"masked_fraction", masked / static_cast<double>(left.size())},
        {"raw_masked_fraction", raw / static_cast<double>(left.size())},
        {"per_frame", per_frame}}},
      {"outputs", outputs},
      {"timings_ms", timings},
  };
  const fs::path mpath = cfg.manifest_path.empty() ? cfg.out_dir / "manifest.json"
                                                   : cfg.manifest_path;
  in_stage("manifest", "", [&] {
    if (mpath.has_parent_path()) fs::create_directories(mpath.parent_path());
    std::ofstream os(mpath, std::ios::binary);
    if (!os) throw IoError(mpath.string(), "cannot open for writing");
    os << manifest.dump(2) << '\n';
    if (!os) throw IoError(mpath.string(), "write failed");
  });
  return manifest;
}

}  // namespace stereo
