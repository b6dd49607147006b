#include <doctest.h>

#include <fstream>

#include <json.hpp>

#include "stereo/image_io.hpp"
#include "support.hpp"

using namespace stereo;

namespace {

const std::string kExe = STEREOCONV_PATH;
const std::filesystem::path kData = DATA_DIR;

std::string q(const std::filesystem::path& p) { return "'" + p.string() + "'"; }

std::string convert_cmd(const std::filesystem::path& out, const std::string& extra = "") {
  const auto scene = kData / "two_layer";
  return kExe + " convert --config " + q(scene / "convert.json") + " --left " + q(scene / "left") +
         " --depth " + q(scene / "depth") + " --out " + q(out) + " " + extra + " > " +
         q(out.string() + ".log") + " 2>&1";
}

std::string slurp(const std::filesystem::path& p) { return testing::read_bytes(p); }

}  // namespace

TEST_CASE("help and usage errors") {
  testing::TempDir dir("cli_help");
  CHECK(testing::run_command(kExe + " --help > " + q(dir / "h.txt")) == 0);
  CHECK(slurp(dir / "h.txt").find("convert") != std::string::npos);
  CHECK(testing::run_command(kExe + " > /dev/null 2>&1") == 2);
  CHECK(testing::run_command(kExe + " convert --bogus > /dev/null 2>&1") == 2);
}

TEST_CASE("convert on the bundled scene") {
  testing::TempDir dir("cli_convert");
  REQUIRE(testing::run_command(convert_cmd(dir / "out", "--save-masks")) == 0);
  const VideoClip right = read_clip_dir(dir / "out");
  CHECK(right.size() == 16);
  CHECK(right.height() == 64);
  CHECK(right.width() == 96);
  const auto manifest = nlohmann::json::parse(std::ifstream(dir / "out" / "manifest.json"));
  CHECK(manifest["refiner"] == "farplane");
  CHECK(manifest["config"]["max_disparity"] == 8.0);
  CHECK(manifest["mask"]["masked_fraction"].get<double>() > 0.0);
  CHECK(std::filesystem::exists(dir / "out" / "mask" / "000015.pgm"));
  CHECK(slurp(dir / "out.log").find("wrote 16 frames") != std::string::npos);
}

TEST_CASE("flags override the config file") {
  testing::TempDir dir("cli_override");
  REQUIRE(testing::run_command(convert_cmd(dir / "out", "--max-disparity 0 --format sbs")) == 0);
  const auto manifest = nlohmann::json::parse(std::ifstream(dir / "out" / "manifest.json"));
  CHECK(manifest["config"]["max_disparity"] == 0.0);
  CHECK(manifest["mask"]["masked_fraction"] == 0.0);
  const Frame sbs = read_frame_png(dir / "out" / "000003.png");
  const Frame left = read_frame_png(kData / "two_layer" / "left" / "000003.png");
  REQUIRE(sbs.width() == 2 * left.width());
  for (int y = 0; y < left.height(); ++y) {
    for (int x = 0; x < left.width(); ++x) {
      for (int c = 0; c < 3; ++c) CHECK(sbs.at(y, left.width() + x, c) == left.at(y, x, c));
    }
  }
}

TEST_CASE("missing depth exits with code 2 and names the path") {
  testing::TempDir dir("cli_missing");
  const auto scene = kData / "two_layer";
  const std::string cmd = kExe + " convert --left " + q(scene / "left") + " --depth " +
                          q(dir / "nodepth") + " --out " + q(dir / "out") + " 2> " + q(dir / "err.txt");
  CHECK(testing::run_command(cmd) == 2);
  CHECK(slurp(dir / "err.txt").find("nodepth") != std::string::npos);
  CHECK(testing::run_command(convert_cmd(dir / "o2", "--refiner nope")) == 2);
}

TEST_CASE("metrics subcommand") {
  testing::TempDir dir("cli_metrics");
  const auto left = kData / "two_layer" / "left";
  const std::string cmd = kExe + " metrics --estimate " + q(left) + " --reference " + q(left) +
                          " --id same --out " + q(dir / "m.csv");
  REQUIRE(testing::run_command(cmd) == 0);
  const std::string csv = slurp(dir / "m.csv");
  CHECK(csv.rfind("video_id,region,psnr_db,ms_ssim", 0) == 0);
  CHECK(csv.find("same,full,inf,1") != std::string::npos);
}

TEST_CASE("attn-check subcommand") {
  testing::TempDir dir("cli_attn");
  REQUIRE(testing::run_command(kExe + " attn-check --max-size 2 --no-grad --out " + q(dir / "a.csv")) == 0);
  std::istringstream in(slurp(dir / "a.csv"));
  std::string line;
  std::getline(in, line);
  CHECK(line == "pattern,N,h,w,masked_fraction,predicted_cost,measured_cost,max_grad_rel_err");
  int rows = 0;
  while (std::getline(in, line)) {
    std::vector<std::string> cols;
    std::stringstream ss(line);
    for (std::string c; std::getline(ss, c, ',');) cols.push_back(c);
    REQUIRE(cols.size() == 8);
    CHECK(cols[5] == cols[6]);
    ++rows;
  }
  CHECK(rows == 4 * 8);
}

TEST_CASE("rectify subcommand") {
  testing::TempDir dir("cli_rectify");
  const auto scene = testing::make_two_view(100, 0.3, 12);
  write_matches_csv(scene.matches, dir / "m.csv");
  const std::string cmd = kExe + " rectify --matches " + q(dir / "m.csv") +
                          " --width 640 --height 480 --out " + q(dir / "r.json");
  REQUIRE(testing::run_command(cmd) == 0);
  const auto j = nlohmann::json::parse(std::ifstream(dir / "r.json"));
  CHECK(j["accepted"] == true);
  CHECK(j["vertical_disparity"]["max"].get<double>() < 0.1);
  CHECK(testing::run_command(kExe + " rectify --matches " + q(dir / "none.csv") +
                             " --width 640 --height 480 2> /dev/null") == 2);
}

TEST_CASE("synth-scene subcommand") {
  testing::TempDir dir("cli_synth");
  REQUIRE(testing::run_command(kExe + " synth-scene --out " + q(dir / "s") +
                               " --frames 3 --height 16 --width 24 > /dev/null") == 0);
  CHECK(read_clip_dir(dir / "s" / "left").size() == 3);
  CHECK(read_depth_dir(dir / "s" / "depth", 3).size() == 3);
}
