#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "stereo/image.hpp"

namespace stereo {

enum class Endian { little, big };

// round-half-up of v*255, clamped to [0,255].
std::uint8_t quantize_u8(float v) noexcept;

// 8-bit RGB PNG only; anything else is a FormatError.
Frame read_frame_png(const std::filesystem::path& path);
void write_frame_png(const Frame& frame, const std::filesystem::path& path);

// Grayscale PFM ("Pf"). Rows are stored bottom-to-top on disk and top-to-bottom
// in memory.
Plane<float> read_pfm(const std::filesystem::path& path);
void write_pfm(const Plane<float>& plane, const std::filesystem::path& path,
               Endian endian = Endian::little);

// read_pfm followed by depth validation.
DepthMap read_depth_pfm(const std::filesystem::path& path);

// Binary P5, maxval 255: 0 -> 0, 1 -> 255. Reading thresholds at 128.
void write_mask_pgm(const Mask& mask, const std::filesystem::path& path);
Mask read_mask_pgm(const std::filesystem::path& path);

// "<dir>/000007.png" style names.
std::filesystem::path frame_path(const std::filesystem::path& dir, std::size_t index,
                                 const std::string& extension);

// Consecutive %06d files starting at 0; stops at the first gap. Throws IoError
// if the directory is missing or holds no frame 000000.
VideoClip read_clip_dir(const std::filesystem::path& dir, double fps = 8.0);
void write_clip_dir(const VideoClip& clip, const std::filesystem::path& dir);

// Reads exactly `count` depth maps (000000.pfm ...), failing with the path of
// the first missing file.
std::vector<DepthMap> read_depth_dir(const std::filesystem::path& dir, std::size_t count);

void write_mask_dir(const std::vector<Mask>& masks, const std::filesystem::path& dir);
std::vector<Mask> read_mask_dir(const std::filesystem::path& dir, std::size_t count);

}  // namespace stereo
