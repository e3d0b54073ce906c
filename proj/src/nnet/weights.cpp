#include <cmath>
#include <fstream>
#include <iterator>
#include <random>
#include <set>

#include "rowlane/binary.hpp"
#include "rowlane/error.hpp"
#include "rowlane/nnet.hpp"

namespace rowlane::nnet {

namespace {

constexpr std::string_view kMagic = "SWLW";
constexpr std::uint32_t kVersion = 1;

std::string dims_str(const std::vector<std::uint32_t>& d) {
  std::string s = "[";
  for (std::size_t i = 0; i < d.size(); ++i) s += (i ? "," : "") + std::to_string(d[i]);
  return s + "]";
}

std::string role_of(const std::string& name) { return name.substr(name.rfind('.') + 1); }

}  // namespace

std::size_t ParamBlock::element_count() const noexcept {
  std::size_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

const ParamBlock& WeightBundle::get(const std::string& name) const {
  auto it = params.find(name);
  if (it == params.end()) throw ConfigError("weights: missing parameter block '" + name + "'");
  return it->second;
}

void validate_weights(const NetworkSpec& spec, const WeightBundle& weights) {
  std::string problems;
  std::set<std::string> expected;
  for (const auto& req : parameter_layout(spec)) {
    expected.insert(req.name);
    auto it = weights.params.find(req.name);
    if (it == weights.params.end()) {
      problems += "\n  missing " + req.name + " " + dims_str(req.dims);
    } else if (it->second.dims != req.dims || it->second.values.size() != it->second.element_count()) {
      problems += "\n  shape of " + req.name + " is " + dims_str(it->second.dims) + ", expected " + dims_str(req.dims);
    }
  }
  for (const auto& [name, block] : weights.params) {
    if (!expected.contains(name)) problems += "\n  unexpected " + name;
  }
  if (!problems.empty()) throw ConfigError("weights do not match network spec:" + problems);
}

WeightBundle random_weights(const NetworkSpec& spec, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  WeightBundle bundle;
  for (const auto& req : parameter_layout(spec)) {
    ParamBlock block{req.dims, {}};
    block.values.resize(block.element_count());
    const std::string role = role_of(req.name);
    if (role == "kernel" || role == "weight") {
      // fan_in = product of all but the leading (output) dim.
      std::size_t fan_in = 1;
      for (std::size_t d = 1; d < req.dims.size(); ++d) fan_in *= req.dims[d];
      std::normal_distribution<float> dist(0.0f, std::sqrt(2.0f / static_cast<float>(fan_in)));
      for (float& v : block.values) v = dist(rng);
    } else if (role == "gamma" || role == "var") {
      std::uniform_real_distribution<float> dist(0.8f, 1.2f);
      for (float& v : block.values) v = dist(rng);
    } else {
      std::uniform_real_distribution<float> dist(-0.05f, 0.05f);
      for (float& v : block.values) v = dist(rng);
    }
    bundle.params.emplace(req.name, std::move(block));
  }
  return bundle;
}

std::vector<std::uint8_t> write_weights(const WeightBundle& weights) {
  binary::Writer w;
  w.bytes(kMagic);
  w.scalar<std::uint32_t>(kVersion);
  w.scalar<std::uint32_t>(static_cast<std::uint32_t>(weights.params.size()));
  for (const auto& [name, block] : weights.params) {
    if (name.size() > 0xffff) throw InvalidInput("weights: parameter name too long");
    if (block.dims.size() > 0xff) throw InvalidInput("weights: rank too large for " + name);
    if (block.values.size() != block.element_count()) {
      throw InvalidInput("weights: value count of " + name + " does not match its dims");
    }
    w.scalar<std::uint16_t>(static_cast<std::uint16_t>(name.size()));
    w.bytes(name);
    w.scalar<std::uint8_t>(static_cast<std::uint8_t>(block.dims.size()));
    for (auto d : block.dims) w.scalar<std::uint32_t>(d);
    w.floats(block.values);
  }
  return std::move(w).take();
}

WeightBundle read_weights(std::span<const std::uint8_t> bytes) {
  binary::Reader r(bytes, "SWLW");
  if (r.bytes(4) != kMagic) r.fail("bad magic");
  if (const auto v = r.scalar<std::uint32_t>(); v != kVersion) r.fail("unsupported version " + std::to_string(v));
  const auto count = r.scalar<std::uint32_t>();
  WeightBundle bundle;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = r.scalar<std::uint16_t>();
    std::string name = r.bytes(name_len);
    ParamBlock block;
    const auto rank = r.scalar<std::uint8_t>();
    std::size_t n = 1;
    for (std::uint8_t d = 0; d < rank; ++d) {
      block.dims.push_back(r.scalar<std::uint32_t>());
      n *= block.dims.back();
    }
    if (n > r.remaining() / sizeof(float)) r.fail("record '" + name + "' payload exceeds file size");
    block.values.resize(n);
    r.floats(block.values);
    if (!bundle.params.emplace(std::move(name), std::move(block)).second) r.fail("duplicate record name");
  }
  if (r.remaining() != 0) r.fail("trailing bytes after last record");
  return bundle;
}

WeightBundle load_weights(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("weights not found: " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return read_weights(bytes);
}

void save_weights(const WeightBundle& weights, const std::filesystem::path& path) {
  const auto bytes = write_weights(weights);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

}  // namespace rowlane::nnet
