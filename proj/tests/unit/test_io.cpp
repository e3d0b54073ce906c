#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <random>

#include <unistd.h>

#include "oracles.hpp"
#include "rowlane/binary.hpp"
#include "rowlane/error.hpp"
#include "rowlane/io.hpp"

using namespace rowlane;
using namespace rowlane::io;

namespace fs = std::filesystem;

namespace {

std::uint32_t float_bits(float v) {
  std::uint32_t u;
  std::memcpy(&u, &v, sizeof u);
  return u;
}

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("rowlane_io_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_SUITE("lane files") {
  TEST_CASE("parse examples") {
    auto lanes = parse_lane_file("100.0 590 120.5 580\n");
    REQUIRE(lanes.size() == 1);
    CHECK(lanes[0] == Polyline{{100.0, 590.0}, {120.5, 580.0}});

    lanes = parse_lane_file("-2 590 100 580 120 570\n");
    REQUIRE(lanes.size() == 1);
    CHECK(lanes[0] == Polyline{{100.0, 580.0}, {120.0, 570.0}});

    CHECK(parse_lane_file("-2 590 100 580\n\n").empty());
    CHECK(parse_lane_file("").empty());
    CHECK(parse_lane_file("1 2 3 4\r\n5 6 7 8").size() == 2);
  }

  TEST_CASE("parse errors carry the line number") {
    try {
      parse_lane_file("1 2 3\n");
      FAIL("expected a parse error");
    } catch (const ParseError& e) {
      CHECK(e.line() == 1);
      CHECK(std::string(e.what()).find("odd token count") != std::string::npos);
    }
    try {
      parse_lane_file("1 2 3 4\n5 6 abc 8\n");
      FAIL("expected a parse error");
    } catch (const ParseError& e) {
      CHECK(e.line() == 2);
    }
    CHECK_THROWS_AS(parse_lane_file("1 2 nan 4\n"), ParseError);
    CHECK_THROWS_AS(parse_lane_file("1 2 3e999 4\n"), ParseError);
  }

  TEST_CASE("write examples") {
    CHECK(write_lane_file({}).empty());
    CHECK(write_lane_file({{{100.0, 590.0}, {120.5, 580.25}}}) == "100 590 120.5 580.25\n");
  }

  TEST_CASE("100 random lanes round-trip within 1e-3") {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> ux(0.0, 1640.0), uy(0.0, 590.0);
    std::uniform_int_distribution<int> len(2, 40);
    std::vector<Polyline> lanes(100);
    for (auto& lane : lanes)
      for (int n = len(rng); n > 0; --n) lane.push_back({ux(rng), uy(rng)});
    const auto back = parse_lane_file(write_lane_file(lanes));
    REQUIRE(back.size() == lanes.size());
    for (std::size_t l = 0; l < lanes.size(); ++l) {
      REQUIRE(back[l].size() == lanes[l].size());
      for (std::size_t p = 0; p < lanes[l].size(); ++p) {
        CHECK(std::abs(back[l][p].x - lanes[l][p].x) <= 1e-3);
        CHECK(std::abs(back[l][p].y - lanes[l][p].y) <= 1e-3);
      }
    }
  }

  TEST_CASE("directory source maps frames to lane files") {
    const fs::path root = scratch_dir("src");
    CHECK(lane_file_for_frame(root, "/driver_1/05.jpg") == root / "driver_1" / "05.lines.txt");
    fs::create_directories(root / "driver_1");
    write_file_atomic(root / "driver_1" / "05.lines.txt", std::string_view("1 2 3 4\n"));
    write_file_atomic(root / "driver_1" / "06.lines.txt", std::string_view("1 2\n1 2 3\n"));
    const LaneSource src = directory_lane_source(root);
    CHECK(src("/driver_1/05.jpg")->size() == 1);
    CHECK_FALSE(src("/driver_1/07.jpg").has_value());
    try {
      src("/driver_1/06.jpg");
      FAIL("expected a parse error");
    } catch (const ParseError& e) {
      CHECK(e.line() == 2);
      const std::string what = e.what();
      CHECK(what.find("06.lines.txt") != std::string::npos);
      CHECK(what.find("line 2") == what.rfind("line 2"));
    }
    fs::remove_all(root);
  }
}

TEST_SUITE("list files") {
  TEST_CASE("order, blank lines, trailing newline, CRLF") {
    const auto lf = parse_list_file("/a/1.jpg\n\n/a/2.jpg\n", "night");
    REQUIRE(lf.size() == 2);
    CHECK(lf[0].path == "/a/1.jpg");
    CHECK(lf[1].path == "/a/2.jpg");
    CHECK(lf[1].category == "night");
    const auto crlf = parse_list_file("/a/1.jpg\r\n\r\n/a/2.jpg\r\n", "night");
    REQUIRE(crlf.size() == 2);
    CHECK(crlf[0].path == lf[0].path);
    CHECK(crlf[1].path == lf[1].path);
    CHECK(parse_list_file("/x.jpg 1 1 0 0", "normal")[0].path == "/x.jpg");
  }

  TEST_CASE("category from mapping or file name convention") {
    CHECK(category_for_list("lists/test3_shadow.txt") == "shadow");
    CHECK(category_for_list("test8_night.txt") == "night");
    CHECK_FALSE(category_for_list("test9_unknown.txt").has_value());
    CHECK_FALSE(category_for_list("val.txt").has_value());
    CHECK(category_for_list("val.txt", {{"val.txt", "normal"}}) == "normal");
  }
}

TEST_SUITE("score tensors") {
  TEST_CASE("header layout") {
    const ScoreTensor s(1, 2, 3, {1, 2, 3, 4, 5, 6});
    const auto bytes = write_score_tensor(s);
    REQUIRE(bytes.size() == 20 + 6 * 4);
    CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "SWLT");
    binary::Reader r(bytes, "test");
    r.scalar<std::uint32_t>();  // magic
    CHECK(r.scalar<std::uint32_t>() == 1);
    CHECK(r.scalar<std::uint32_t>() == 1);
    CHECK(r.scalar<std::uint32_t>() == 2);
    CHECK(r.scalar<std::uint32_t>() == 3);
    CHECK(r.scalar<float>() == 1.0f);
  }

  TEST_CASE("random 4x36x151 tensor round-trips bit-exactly") {
    std::mt19937_64 rng(2);
    ScoreTensor s = oracle::random_scores(rng, 4, 36, 151, 100.0);
    for (double& v : s.values()) v = static_cast<float>(v);
    const ScoreTensor back = read_score_tensor(write_score_tensor(s));
    REQUIRE(back.lanes() == 4);
    REQUIRE(back.anchors() == 36);
    REQUIRE(back.classes() == 151);
    for (std::size_t n = 0; n < s.size(); ++n) {
      CHECK(float_bits(static_cast<float>(back.values()[n])) == float_bits(static_cast<float>(s.values()[n])));
    }
  }

  TEST_CASE("malformed payloads are format errors") {
    const auto good = write_score_tensor(ScoreTensor(2, 3, 4));
    CHECK_THROWS_AS(read_score_tensor(std::span(good).first(good.size() - 1)), FormatError);
    CHECK_THROWS_AS(read_score_tensor(std::span(good).first(10)), FormatError);
    auto longer = good;
    longer.resize(good.size() + 4);
    CHECK_THROWS_AS(read_score_tensor(longer), FormatError);
    auto bad = good;
    bad[0] = 'X';
    CHECK_THROWS_AS(read_score_tensor(bad), FormatError);
    bad = good;
    bad[4] = 7;
    CHECK_THROWS_AS(read_score_tensor(bad), FormatError);
    bad = good;
    bad[16] = 1;  // one class: no room for the absence class
    CHECK_THROWS_AS(read_score_tensor(bad), FormatError);
    bad = good;
    bad[20] = 0x00, bad[21] = 0x00, bad[22] = 0xc0, bad[23] = 0x7f;  // NaN
    CHECK_THROWS_AS(read_score_tensor(bad), FormatError);
  }
}

TEST_SUITE("images") {
  TEST_CASE("PPM round trip and header comments") {
    std::mt19937_64 rng(3);
    RgbImage img{7, 5, {}};
    for (int i = 0; i < 7 * 5 * 3; ++i) img.pixels.push_back(static_cast<std::uint8_t>(rng()));
    const auto bytes = write_ppm(img);
    CHECK(read_ppm(bytes) == img);

    std::string text = "P6\n# comment\n2 1\n255\n";
    text += std::string("\x01\x02\x03\x04\x05\x06", 6);
    const RgbImage small = read_ppm(std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
    CHECK(small.width == 2);
    CHECK(small.at(1, 0)[2] == 6);
  }

  TEST_CASE("PPM errors") {
    auto as_bytes = [](const std::string& s) { return std::vector<std::uint8_t>(s.begin(), s.end()); };
    CHECK_THROWS_AS(read_ppm(as_bytes("P3\n1 1\n255\n0 0 0")), FormatError);
    CHECK_THROWS_AS(read_ppm(as_bytes("P6\n2 2\n255\nabc")), FormatError);
    CHECK_THROWS_AS(read_ppm(as_bytes("P6\n1 1\n65535\n123456")), FormatError);
  }

  TEST_CASE("resize keeps constant images constant and identity sizes unchanged") {
    RgbImage flat{10, 6, std::vector<std::uint8_t>(10 * 6 * 3, 77)};
    const RgbImage r = resize_bilinear(flat, 23, 4);
    CHECK(r.width == 23);
    for (auto v : r.pixels) CHECK(v == 77);
    std::mt19937_64 rng(4);
    for (auto& v : flat.pixels) v = static_cast<std::uint8_t>(rng());
    CHECK(resize_bilinear(flat, 10, 6) == flat);
  }

  TEST_CASE("tensor conversion normalizes per channel") {
    RgbImage img{1, 1, {255, 0, 124}};
    const nnet::Tensor3 t = image_to_tensor(img);
    CHECK(t.shape() == nnet::Shape3{3, 1, 1});
    CHECK(t.at(0, 0, 0) == doctest::Approx((1.0 - 0.485) / 0.229).epsilon(1e-6));
    CHECK(t.at(1, 0, 0) == doctest::Approx(-0.456 / 0.224).epsilon(1e-6));
  }
}

TEST_CASE("atomic writes replace the file and leave no temporaries") {
  const fs::path dir = scratch_dir("atomic");
  write_file_atomic(dir / "out.txt", std::string_view("first"));
  write_file_atomic(dir / "out.txt", std::string_view("second"));
  CHECK(read_text_file(dir / "out.txt") == "second");
  CHECK(std::distance(fs::directory_iterator(dir), fs::directory_iterator()) == 1);
  CHECK_THROWS(write_file_atomic(dir / "missing" / "out.txt", std::string_view("x")));
  CHECK_THROWS(read_file(dir / "nope.bin"));
  fs::remove_all(dir);
}
