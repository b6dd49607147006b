#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "stereo/image.hpp"
#include "stereo/refine.hpp"
#include "stereo/warp.hpp"

namespace stereo {

// [start, end) frames; the first `carryover` of them were generated by the
// previous window.
struct ChunkWindow {
  int start = 0;
  int end = 0;
  int carryover = 0;

  int length() const noexcept { return end - start; }
  friend bool operator==(const ChunkWindow&, const ChunkWindow&) = default;
};

struct ChunkPlan {
  int chunk_length = 0;
  int overlap = 0;
  std::vector<ChunkWindow> windows;
};

// Windows advance by chunk_length - overlap; the last one is shortened to end
// at the final frame. Clips no longer than chunk_length get one window.
ChunkPlan plan_chunks(int total_frames, int chunk_length, int overlap);

struct TileRect {
  int y0 = 0, x0 = 0, height = 0, width = 0;
};

// Tiles are the product of row bands and column bands. Blend weights are
// separable: weight(tile) = row_weight[band_y](y) * col_weight[band_x](x).
struct TilePlan {
  int height = 0, width = 0;
  int tile_height = 0, tile_width = 0;
  int overlap_y = 0, overlap_x = 0;
  std::vector<int> row_starts;
  std::vector<int> col_starts;
  std::vector<std::vector<double>> row_weights;  // per row band, tile_height entries
  std::vector<std::vector<double>> col_weights;  // per column band, tile_width entries

  std::size_t tile_count() const noexcept { return row_starts.size() * col_starts.size(); }
  TileRect tile(std::size_t i) const;
  // Blend weight of tile i at absolute pixel (y, x); 0 outside the tile.
  double weight(std::size_t i, int y, int x) const;
};

// Linear ramps of length overlap+1 where neighbouring tiles overlap,
// normalized so the weights covering each pixel sum to one.
TilePlan plan_tiles(int height, int width, int tile_height, int tile_width, int overlap_y,
                    int overlap_x);

// Runs the refiner window by window. Carried-over frames replace the warped
// input and have their mask cleared.
VideoClip run_chunked(const VideoClip& left, const VideoClip& warped, std::span<const Mask> mask,
                      const ChunkPlan& plan, const Refiner& refiner);

struct TileSpec {
  int height = 0;  // 0 = whole frame
  int width = 0;
  int overlap_y = 0;
  int overlap_x = 0;
};

// Refines each tile independently, blends the encoded tiles in latent space
// and decodes once. Tile geometry must be divisible by the codec factor.
VideoClip run_tiled(const VideoClip& left, const VideoClip& warped, std::span<const Mask> mask,
                    const TileSpec& spec, const Refiner& refiner, const LatentCodec& codec);

// Refiner adaptor applying run_tiled around an inner refiner.
class TiledRefiner final : public Refiner {
 public:
  TiledRefiner(const Refiner& inner, const LatentCodec& codec, TileSpec spec)
      : inner_(inner), codec_(codec), spec_(spec) {}
  std::string name() const override { return "tiled(" + inner_.name() + ")"; }
  VideoClip refine(const VideoClip& left, const VideoClip& warped,
                   std::span<const Mask> mask) const override {
    return run_tiled(left, warped, mask, spec_, inner_, codec_);
  }

 private:
  const Refiner& inner_;
  const LatentCodec& codec_;
  TileSpec spec_;
};

enum class OutputFormat { frames, sbs, anaglyph };

OutputFormat parse_output_format(const std::string& s);
std::string to_string(OutputFormat f);
SplatMode parse_splat_mode(const std::string& s);
std::string to_string(SplatMode m);
DisparityNormalization parse_normalization(const std::string& s);
std::string to_string(DisparityNormalization n);

// "HxW" -> {H, W}; ValidationError on anything else.
std::pair<int, int> parse_size(const std::string& s);

// left | right, width 2W.
Frame side_by_side(const Frame& left, const Frame& right);
// R from left, G and B from right.
Frame anaglyph(const Frame& left, const Frame& right);

// Writes one PNG per frame into `dir`; returns the written paths.
std::vector<std::filesystem::path> pack_stereo(const VideoClip& left, const VideoClip& right,
                                               OutputFormat format,
                                               const std::filesystem::path& dir);

struct PipelineConfig {
  std::filesystem::path left_dir;
  std::filesystem::path depth_dir;
  std::filesystem::path out_dir;
  std::filesystem::path manifest_path;  // empty = <out_dir>/manifest.json
  float max_disparity = 0.0f;
  SplatMode splat_mode = SplatMode::nearest;
  int closing_kernel = 11;
  DisparityNormalization normalization = DisparityNormalization::clip_global;
  std::string refiner = "farplane";
  std::string codec = "identity";
  int chunk_length = 16;
  int chunk_overlap = 7;
  TileSpec tile;
  OutputFormat format = OutputFormat::frames;
  std::uint64_t seed = 0;
  double fps = 8.0;
  int diffusion_steps = 1000;
  double beta_start = 1e-4;
  double beta_end = 0.02;
  bool save_masks = false;

  // Throws ValidationError for out-of-range values or unknown names.
  void validate() const;
};

// Keys mirror the CLI flags; see README. Unknown keys are rejected.
PipelineConfig config_from_json(const nlohmann::json& j, PipelineConfig base = {});
nlohmann::json config_to_json(const PipelineConfig& cfg);

// ingest -> warp -> chunk/tile refine -> pack. Returns the manifest that was
// also written to disk. Stage failures surface as StageError.
nlohmann::json run_convert(const PipelineConfig& cfg);

// Number of pixels whose three channels are all exactly zero.
std::size_t count_black_pixels(const Frame& frame);

}  // namespace stereo
