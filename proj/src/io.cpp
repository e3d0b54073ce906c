#include "rowlane/io.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iterator>
#include <random>
#include <regex>
#include <system_error>

#include "rowlane/binary.hpp"
#include "rowlane/error.hpp"

namespace rowlane::io {

namespace {

constexpr std::string_view kTensorMagic = "SWLT";
constexpr std::uint32_t kTensorVersion = 1;

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\v' || c == '\f'; }

std::vector<std::string_view> split_tokens(std::string_view line) {
  std::vector<std::string_view> tokens;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && is_space(line[i])) ++i;
    const std::size_t start = i;
    while (i < line.size() && !is_space(line[i])) ++i;
    if (i > start) tokens.push_back(line.substr(start, i - start));
  }
  return tokens;
}

// Calls fn(line_number, line) for every line, without the trailing '\n'.
template <typename Fn>
void for_each_line(std::string_view text, Fn&& fn) {
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const std::size_t end = std::min(text.find('\n', pos), text.size());
    fn(++line_no, text.substr(pos, end - pos));
    pos = end + 1;
  }
}

double parse_real(std::string_view token, std::size_t line_no) {
  double v = 0.0;
  const auto* first = token.data();
  const auto* last = token.data() + token.size();
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || !std::isfinite(v)) {
    throw ParseError(line_no, "not a finite number: '" + std::string(token) + "'");
  }
  return v;
}

std::string format_coord(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::fixed, 3);
  std::string s(buf, ptr);
  while (!s.empty() && s.back() == '0') s.pop_back();
  if (!s.empty() && s.back() == '.') s.pop_back();
  if (s == "-0") s = "0";
  return s;
}

std::uint8_t clamp_byte(double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)); }

}  // namespace

std::vector<Polyline> parse_lane_file(std::string_view text) {
  std::vector<Polyline> lanes;
  for_each_line(text, [&](std::size_t line_no, std::string_view line) {
    const auto tokens = split_tokens(line);
    if (tokens.empty()) return;
    if (tokens.size() % 2 != 0) {
      throw ParseError(line_no, "odd token count (" + std::to_string(tokens.size()) + ")");
    }
    Polyline lane;
    for (std::size_t i = 0; i < tokens.size(); i += 2) {
      const double x = parse_real(tokens[i], line_no);
      const double y = parse_real(tokens[i + 1], line_no);
      if (x >= 0.0) lane.push_back({x, y});
    }
    if (lane.size() >= 2) lanes.push_back(std::move(lane));
  });
  return lanes;
}

std::string write_lane_file(const std::vector<Polyline>& lanes) {
  std::string out;
  for (const auto& lane : lanes) {
    for (std::size_t i = 0; i < lane.size(); ++i) {
      if (i) out += ' ';
      out += format_coord(lane[i].x);
      out += ' ';
      out += format_coord(lane[i].y);
    }
    out += '\n';
  }
  return out;
}

std::vector<FrameRef> parse_list_file(std::string_view text, const std::string& category) {
  std::vector<FrameRef> frames;
  for_each_line(text, [&](std::size_t, std::string_view line) {
    const auto tokens = split_tokens(line);
    if (!tokens.empty()) frames.push_back({std::string(tokens.front()), category});
  });
  return frames;
}

std::optional<std::string> category_for_list(const std::filesystem::path& list_file,
                                             const std::map<std::string, std::string>& mapping) {
  const std::string name = list_file.filename().string();
  if (auto it = mapping.find(name); it != mapping.end()) return it->second;
  static const std::regex culane(R"(test\d+_([A-Za-z]+)\.txt)");
  std::smatch m;
  if (std::regex_match(name, m, culane)) {
    const std::string cat = m[1].str();
    const auto& known = culane_categories();
    if (std::find(known.begin(), known.end(), cat) != known.end()) return cat;
  }
  return std::nullopt;
}

std::filesystem::path lane_file_for_frame(const std::filesystem::path& root, const std::string& frame) {
  std::string rel = frame;
  while (!rel.empty() && (rel.front() == '/' || rel.front() == '\\')) rel.erase(rel.begin());
  std::filesystem::path p = root / rel;
  p.replace_extension(".lines.txt");
  return p;
}

LaneSource directory_lane_source(std::filesystem::path root) {
  return [root = std::move(root)](const std::string& frame) -> std::optional<std::vector<Polyline>> {
    const auto path = lane_file_for_frame(root, frame);
    std::ifstream in(path, std::ios::binary);
    if (!in) return std::nullopt;
    const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    try {
      return parse_lane_file(text);
    } catch (const ParseError& e) {
      // Keep the detail but not the "line N: " prefix the constructor adds again.
      std::string detail = e.what();
      detail.erase(0, detail.find(": ") + 2);
      throw ParseError(e.line(), path.string() + ": " + detail);
    }
  };
}

std::vector<std::uint8_t> write_score_tensor(const ScoreTensor& scores) {
  binary::Writer w;
  w.bytes(kTensorMagic);
  w.scalar<std::uint32_t>(kTensorVersion);
  w.scalar<std::uint32_t>(static_cast<std::uint32_t>(scores.lanes()));
  w.scalar<std::uint32_t>(static_cast<std::uint32_t>(scores.anchors()));
  w.scalar<std::uint32_t>(static_cast<std::uint32_t>(scores.classes()));
  std::vector<float> narrowed(scores.values().begin(), scores.values().end());
  w.floats(narrowed);
  return std::move(w).take();
}

ScoreTensor read_score_tensor(std::span<const std::uint8_t> bytes) {
  binary::Reader r(bytes, "SWLT");
  if (r.bytes(4) != kTensorMagic) r.fail("bad magic");
  if (const auto v = r.scalar<std::uint32_t>(); v != kTensorVersion) r.fail("unsupported version " + std::to_string(v));
  const auto lanes = r.scalar<std::uint32_t>();
  const auto anchors = r.scalar<std::uint32_t>();
  const auto classes = r.scalar<std::uint32_t>();
  if (lanes == 0 || anchors == 0 || classes < 2 || lanes > 0xffff || anchors > 0xffff || classes > 0xffffff) {
    r.fail("invalid dims");
  }
  const std::size_t n = static_cast<std::size_t>(lanes) * anchors * classes;
  if (r.remaining() != n * sizeof(float)) {
    r.fail("payload of " + std::to_string(r.remaining()) + " bytes does not match dims " + std::to_string(lanes) + "x" +
           std::to_string(anchors) + "x" + std::to_string(classes));
  }
  std::vector<float> values(n);
  r.floats(values);
  for (float v : values) {
    if (!std::isfinite(v)) r.fail("non-finite score");
  }
  return ScoreTensor(static_cast<int>(lanes), static_cast<int>(anchors), static_cast<int>(classes),
                     std::vector<double>(values.begin(), values.end()));
}

RgbImage read_ppm(std::span<const std::uint8_t> bytes) {
  std::size_t pos = 0;
  auto fail = [](const std::string& what) -> void { throw FormatError("PPM: " + what); };
  auto skip_space_and_comments = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto read_int = [&] {
    skip_space_and_comments();
    long v = 0;
    std::size_t digits = 0;
    while (pos < bytes.size() && std::isdigit(bytes[pos]) && digits < 9) {
      v = v * 10 + (bytes[pos++] - '0');
      ++digits;
    }
    if (digits == 0) fail("malformed header");
    return v;
  };
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6') fail("not a binary P6 file");
  pos = 2;
  const long width = read_int();
  const long height = read_int();
  const long maxval = read_int();
  if (width < 1 || height < 1) fail("invalid dimensions");
  if (maxval != 255) fail("only maxval 255 is supported");
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) fail("malformed header");
  ++pos;
  const std::size_t n = static_cast<std::size_t>(width) * height * 3;
  if (bytes.size() - pos < n) fail("truncated pixel data");
  RgbImage img{static_cast<int>(width), static_cast<int>(height), {}};
  img.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                    bytes.begin() + static_cast<std::ptrdiff_t>(pos + n));
  return img;
}

std::vector<std::uint8_t> write_ppm(const RgbImage& image) {
  if (image.pixels.size() != static_cast<std::size_t>(image.width) * image.height * 3) {
    throw InvalidInput("PPM: pixel buffer does not match dimensions");
  }
  const std::string header = "P6\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), image.pixels.begin(), image.pixels.end());
  return out;
}

RgbImage resize_bilinear(const RgbImage& image, int width, int height) {
  if (width < 1 || height < 1 || image.width < 1 || image.height < 1) throw InvalidInput("resize: empty image");
  RgbImage out{width, height, std::vector<std::uint8_t>(static_cast<std::size_t>(width) * height * 3)};
  const double sx = static_cast<double>(image.width) / width;
  const double sy = static_cast<double>(image.height) / height;
  for (int y = 0; y < height; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, image.height - 1.0);
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, image.height - 1);
    const double wy = fy - y0;
    for (int x = 0; x < width; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, image.width - 1.0);
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, image.width - 1);
      const double wx = fx - x0;
      for (int c = 0; c < 3; ++c) {
        const double top = image.at(x0, y0)[c] * (1 - wx) + image.at(x1, y0)[c] * wx;
        const double bottom = image.at(x0, y1)[c] * (1 - wx) + image.at(x1, y1)[c] * wx;
        out.at(x, y)[c] = clamp_byte(top * (1 - wy) + bottom * wy);
      }
    }
  }
  return out;
}

nnet::Tensor3 image_to_tensor(const RgbImage& image) {
  static constexpr float kMean[3] = {0.485f, 0.456f, 0.406f};
  static constexpr float kStd[3] = {0.229f, 0.224f, 0.225f};
  nnet::Tensor3 t({3, image.height, image.width});
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      const auto* px = image.at(x, y);
      for (int c = 0; c < 3; ++c) t.at(c, y, x) = (px[c] / 255.0f - kMean[c]) / kStd[c];
    }
  }
  return t;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::random_device rd;
  auto tmp = path;
  tmp += ".tmp" + std::to_string(rd());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    out.close();
    if (!out) {
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      throw std::runtime_error("failed writing " + path.string());
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw std::runtime_error("cannot move output into place at " + path.string());
  }
}

void write_file_atomic(const std::filesystem::path& path, std::string_view text) {
  write_file_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

}  // namespace rowlane::io
