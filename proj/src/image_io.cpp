#include "stereo/image_io.hpp"

#include <png.h>

#include <bit>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace stereo {
namespace fs = std::filesystem;

namespace {

void require_file(const fs::path& path) {
  std::error_code ec;
  if (!fs::is_regular_file(path, ec)) throw IoError(path.string(), "no such file");
}

std::ifstream open_in(const fs::path& path) {
  require_file(path);
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path.string(), "cannot open for reading");
  return in;
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(path.string(), "cannot open for writing");
  return out;
}

// Reads one whitespace-delimited header token, skipping '#' comments.
std::string header_token(std::istream& in) {
  std::string token;
  int ch = in.get();
  while (ch != EOF) {
    if (ch == '#') {
      while (ch != EOF && ch != '\n') ch = in.get();
    } else if (std::isspace(ch)) {
      if (!token.empty()) break;
    } else {
      token.push_back(static_cast<char>(ch));
    }
    ch = in.get();
  }
  return token;
}

int header_int(std::istream& in, const fs::path& path, const char* what) {
  const std::string tok = header_token(in);
  try {
    std::size_t used = 0;
    const int v = std::stoi(tok, &used);
    if (used != tok.size() || v <= 0) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw FormatError(path.string(), std::string("bad ") + what + " in header: '" + tok + "'");
  }
}

std::uint32_t byteswap32(std::uint32_t v) noexcept {
  return ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
}

}  // namespace

std::uint8_t quantize_u8(float v) noexcept {
  const double scaled = std::floor(static_cast<double>(v) * 255.0 + 0.5);
  if (!(scaled > 0.0)) return 0;
  if (scaled >= 255.0) return 255;
  return static_cast<std::uint8_t>(scaled);
}

Frame read_frame_png(const fs::path& path) {
  require_file(path);
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    throw FormatError(path.string(), std::string("not a readable PNG: ") + image.message);
  }
  const auto format = image.format;
  if (format != PNG_FORMAT_RGB) {
    png_image_free(&image);
    std::string reason = "expected 8-bit RGB PNG";
    if (format & PNG_FORMAT_FLAG_LINEAR) reason += " (file is 16-bit)";
    else if (format & PNG_FORMAT_FLAG_COLORMAP) reason += " (file is palette-based)";
    else if (!(format & PNG_FORMAT_FLAG_COLOR)) reason += " (file is grayscale)";
    else if (format & PNG_FORMAT_FLAG_ALPHA) reason += " (file has an alpha channel)";
    throw FormatError(path.string(), reason);
  }
  const int width = static_cast<int>(image.width);
  const int height = static_cast<int>(image.height);
  std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
    throw FormatError(path.string(), std::string("PNG decode failed: ") + image.message);
  }
  std::vector<float> rgb(buffer.size());
  for (std::size_t i = 0; i < buffer.size(); ++i) rgb[i] = static_cast<float>(buffer[i]) / 255.0f;
  return Frame(height, width, std::move(rgb));
}

void write_frame_png(const Frame& frame, const fs::path& path) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  std::vector<std::uint8_t> buffer(frame.values().size());
  const auto values = frame.values();
  for (std::size_t i = 0; i < values.size(); ++i) buffer[i] = quantize_u8(values[i]);

  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(frame.width());
  image.height = static_cast<png_uint_32>(frame.height());
  image.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&image, path.c_str(), 0, buffer.data(), 0, nullptr)) {
    throw IoError(path.string(), std::string("PNG write failed: ") + image.message);
  }
}

Plane<float> read_pfm(const fs::path& path) {
  std::ifstream in = open_in(path);
  const std::string magic = header_token(in);
  if (magic != "Pf") {
    throw FormatError(path.string(), magic == "PF" ? "colour PFM not supported, expected 'Pf'"
                                                   : "missing 'Pf' magic");
  }
  const int width = header_int(in, path, "width");
  const int height = header_int(in, path, "height");
  const std::string scale_tok = header_token(in);
  double scale = 0.0;
  try {
    scale = std::stod(scale_tok);
  } catch (const std::exception&) {
    throw FormatError(path.string(), "bad scale in header: '" + scale_tok + "'");
  }
  if (scale == 0.0 || !std::isfinite(scale)) {
    throw FormatError(path.string(), "scale must be nonzero");
  }
  // header_token consumed the single whitespace byte after the scale.
  const bool file_little = scale < 0.0;
  const bool host_little = std::endian::native == std::endian::little;

  const auto count = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  std::vector<std::uint32_t> raw(count);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(count * 4));
  if (static_cast<std::size_t>(in.gcount()) != count * 4) {
    throw FormatError(path.string(), "truncated pixel data");
  }
  Plane<float> plane(height, width);
  for (int row = 0; row < height; ++row) {
    const int y = height - 1 - row;
    for (int x = 0; x < width; ++x) {
      std::uint32_t bits = raw[static_cast<std::size_t>(row) * static_cast<std::size_t>(width) +
                               static_cast<std::size_t>(x)];
      if (file_little != host_little) bits = byteswap32(bits);
      plane(y, x) = std::bit_cast<float>(bits);
    }
  }
  return plane;
}

void write_pfm(const Plane<float>& plane, const fs::path& path, Endian endian) {
  std::ofstream out = open_out(path);
  const bool file_little = endian == Endian::little;
  const bool host_little = std::endian::native == std::endian::little;
  out << "Pf\n" << plane.width() << ' ' << plane.height() << '\n'
      << (file_little ? "-1.0" : "1.0") << '\n';
  std::vector<std::uint32_t> raw;
  raw.reserve(plane.size());
  for (int row = 0; row < plane.height(); ++row) {
    const int y = plane.height() - 1 - row;
    for (int x = 0; x < plane.width(); ++x) {
      std::uint32_t bits = std::bit_cast<std::uint32_t>(plane(y, x));
      if (file_little != host_little) bits = byteswap32(bits);
      raw.push_back(bits);
    }
  }
  out.write(reinterpret_cast<const char*>(raw.data()),
            static_cast<std::streamsize>(raw.size() * 4));
  if (!out) throw IoError(path.string(), "write failed");
}

DepthMap read_depth_pfm(const fs::path& path) {
  try {
    return DepthMap(read_pfm(path));
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

void write_mask_pgm(const Mask& mask, const fs::path& path) {
  std::ofstream out = open_out(path);
  out << "P5\n" << mask.width() << ' ' << mask.height() << "\n255\n";
  std::vector<char> bytes(mask.size());
  const auto values = mask.values();
  for (std::size_t i = 0; i < values.size(); ++i) {
    bytes[i] = static_cast<char>(values[i] ? 255 : 0);
  }
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError(path.string(), "write failed");
}

Mask read_mask_pgm(const fs::path& path) {
  std::ifstream in = open_in(path);
  if (header_token(in) != "P5") throw FormatError(path.string(), "missing 'P5' magic");
  const int width = header_int(in, path, "width");
  const int height = header_int(in, path, "height");
  const int maxval = header_int(in, path, "maxval");
  if (maxval != 255) throw FormatError(path.string(), "maxval must be 255");
  std::vector<char> bytes(static_cast<std::size_t>(width) * static_cast<std::size_t>(height));
  in.read(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (static_cast<std::size_t>(in.gcount()) != bytes.size()) {
    throw FormatError(path.string(), "truncated pixel data");
  }
  Mask mask(height, width);
  auto values = mask.values();
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    values[i] = static_cast<unsigned char>(bytes[i]) >= 128 ? 1 : 0;
  }
  return mask;
}

fs::path frame_path(const fs::path& dir, std::size_t index, const std::string& extension) {
  char name[32];
  std::snprintf(name, sizeof name, "%06zu", index);
  const bool dotted = !extension.empty() && extension.front() == '.';
  return dir / (std::string(name) + (dotted ? "" : ".") + extension);
}

VideoClip read_clip_dir(const fs::path& dir, double fps) {
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw IoError(dir.string(), "no such directory");
  std::vector<Frame> frames;
  for (std::size_t i = 0;; ++i) {
    const fs::path p = frame_path(dir, i, ".png");
    if (!fs::exists(p, ec)) break;
    frames.push_back(read_frame_png(p));
  }
  if (frames.empty()) throw IoError(frame_path(dir, 0, ".png").string(), "no such file");
  try {
    return VideoClip(std::move(frames), fps);
  } catch (const ShapeError& e) {
    throw ShapeError(dir.string() + ": " + e.what());
  }
}

void write_clip_dir(const VideoClip& clip, const fs::path& dir) {
  for (std::size_t i = 0; i < clip.size(); ++i) write_frame_png(clip[i], frame_path(dir, i, ".png"));
}

std::vector<DepthMap> read_depth_dir(const fs::path& dir, std::size_t count) {
  std::vector<DepthMap> maps;
  maps.reserve(count);
  for (std::size_t i = 0; i < count; ++i) maps.push_back(read_depth_pfm(frame_path(dir, i, ".pfm")));
  return maps;
}

void write_mask_dir(const std::vector<Mask>& masks, const fs::path& dir) {
  for (std::size_t i = 0; i < masks.size(); ++i) write_mask_pgm(masks[i], frame_path(dir, i, ".pgm"));
}

std::vector<Mask> read_mask_dir(const fs::path& dir, std::size_t count) {
  std::vector<Mask> masks;
  masks.reserve(count);
  for (std::size_t i = 0; i < count; ++i) masks.push_back(read_mask_pgm(frame_path(dir, i, ".pgm")));
  return masks;
}

}  // namespace stereo
