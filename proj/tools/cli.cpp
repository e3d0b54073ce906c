#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <map>
#include <ostream>
#include <random>

#include "bench.hpp"
#include "rowlane/error.hpp"
#include "rowlane/eval.hpp"
#include "rowlane/grid.hpp"
#include "rowlane/io.hpp"
#include "rowlane/nnet.hpp"
#include "rowlane/postproc.hpp"

namespace fs = std::filesystem;

namespace rowlane::cli {

namespace {

// Bad arguments or unusable input files: exit code 2.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct PipelineOptions {
  GridSpec grid = GridSpec::culane();
  SuppressionConfig suppression;
  bool no_suppress_length = false;
  bool no_suppress_linearity = false;
  bool no_curve_fit = false;

  StageToggles toggles() const { return {!no_suppress_length, !no_suppress_linearity, !no_curve_fit}; }
};

void add_grid_options(CLI::App* cmd, GridSpec& g) {
  cmd->add_option("--num-lanes", g.num_lanes, "Lane slots (c)")->capture_default_str();
  cmd->add_option("--num-anchors", g.num_anchors, "Row anchors (h)")->capture_default_str();
  cmd->add_option("--num-cells", g.num_cells, "Gridding cells per anchor (w)")->capture_default_str();
  cmd->add_option("--image-width", g.image_width, "Original image width")->capture_default_str();
  cmd->add_option("--image-height", g.image_height, "Original image height")->capture_default_str();
  cmd->add_option("--crop-top", g.crop_top, "First anchor row")->capture_default_str();
  cmd->add_option("--crop-bottom", g.crop_bottom, "Last anchor row")->capture_default_str();
}

void add_suppression_options(CLI::App* cmd, PipelineOptions& p) {
  cmd->add_option("--min-points", p.suppression.min_points, "Length threshold (points)")->capture_default_str();
  cmd->add_option("--min-abs-r", p.suppression.min_abs_r, "Linearity threshold |r|")->capture_default_str();
  cmd->add_flag("--no-suppress-length", p.no_suppress_length, "Skip length-based suppression");
  cmd->add_flag("--no-suppress-linearity", p.no_suppress_linearity, "Skip linearity-based suppression");
}

void add_pipeline_options(CLI::App* cmd, PipelineOptions& p) {
  add_grid_options(cmd, p.grid);
  add_suppression_options(cmd, p);
  cmd->add_flag("--no-curve-fit", p.no_curve_fit, "Skip quadratic smoothing");
}

void validate(const PipelineOptions& p) {
  try {
    p.grid.validate();
    p.suppression.validate();
  } catch (const InvalidInput& e) {
    throw UsageError(e.what());
  }
}

std::vector<std::uint8_t> read_input(const fs::path& path, const char* what) {
  if (!fs::is_regular_file(path)) throw UsageError(std::string(what) + " not found: " + path.string());
  return io::read_file(path);
}

std::string read_input_text(const fs::path& path, const char* what) {
  const auto bytes = read_input(path, what);
  return {bytes.begin(), bytes.end()};
}

nnet::WeightBundle load_weights_or_random(const std::string& path, std::optional<std::uint64_t> seed,
                                          const nnet::NetworkSpec& spec) {
  if (!path.empty()) {
    if (!fs::is_regular_file(path)) throw UsageError("weights not found: " + path);
    return nnet::load_weights(path);
  }
  if (seed) return nnet::random_weights(spec, *seed);
  throw UsageError("either --weights or --random-weights is required");
}

nnet::Tensor3 load_image_tensor(const fs::path& path, const nnet::Shape3& input) {
  io::RgbImage img = io::read_ppm(read_input(path, "image"));
  if (img.width != input.width || img.height != input.height) {
    img = io::resize_bilinear(img, input.width, input.height);
  }
  return io::image_to_tensor(img);
}

std::vector<Polyline> lanes_to_polylines(const LaneSet& lanes, const GridSpec& grid) {
  std::vector<Polyline> out;
  for (const auto& lane : lanes.lanes) {
    if (lane.size() >= 2) out.push_back(lane_to_pixels(grid, lane));
  }
  return out;
}

LaneSet polylines_to_lanes(const std::vector<Polyline>& lines, const GridSpec& grid) {
  if (lines.size() > static_cast<std::size_t>(grid.num_lanes)) {
    throw UsageError("lane file holds " + std::to_string(lines.size()) + " lanes, grid has " +
                     std::to_string(grid.num_lanes) + " slots");
  }
  LaneSet lanes(static_cast<std::size_t>(grid.num_lanes));
  for (std::size_t i = 0; i < lines.size(); ++i) lanes.lanes[i] = pixels_to_lane(grid, lines[i]);
  return lanes;
}

// Lanes from either a score tensor (decoded) or a lane file (resampled on anchor rows).
LaneSet load_lanes(const std::string& scores_path, const std::string& lanes_path, const GridSpec& grid) {
  if (scores_path.empty() == lanes_path.empty()) throw UsageError("exactly one of --scores or --lanes is required");
  if (!scores_path.empty()) {
    const ScoreTensor scores = io::read_score_tensor(read_input(scores_path, "score tensor"));
    return decode_locations(scores, grid);
  }
  return polylines_to_lanes(io::parse_lane_file(read_input_text(lanes_path, "lane file")), grid);
}

void write_lanes(const fs::path& path, const LaneSet& lanes, const GridSpec& grid) {
  io::write_file_atomic(path, io::write_lane_file(lanes_to_polylines(lanes, grid)));
}

std::map<std::string, std::string> parse_category_map(const std::string& text) {
  std::map<std::string, std::string> mapping;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t end = std::min(text.find('\n', pos), text.size());
    std::string line = text.substr(pos, end - pos);
    ++line_no;
    pos = end + 1;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(line_no, "expected list_name=category");
    mapping[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return mapping;
}

// Rewrites "--config FILE" into "--key=value" arguments placed before the
// user's own arguments, so explicit flags override the file.
std::vector<std::string> expand_config(std::vector<std::string> args) {
  if (args.empty()) return args;
  std::vector<std::string> rest;
  std::string config_path;
  for (std::size_t i = 1; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) {
      config_path = args[++i];
    } else if (args[i].rfind("--config=", 0) == 0) {
      config_path = args[i].substr(9);
    } else {
      rest.push_back(args[i]);
    }
  }
  if (config_path.empty()) return args;
  std::vector<std::string> expanded{args[0]};
  const std::string text = read_input_text(config_path, "config file");
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const std::size_t end = std::min(text.find('\n', pos), text.size());
    std::string line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw UsageError(config_path + ":" + std::to_string(line_no) + ": expected key=value");
    }
    auto trim = [](std::string s) {
      s.erase(0, s.find_first_not_of(" \t"));
      s.erase(s.find_last_not_of(" \t") + 1);
      return s;
    };
    expanded.push_back("--" + trim(line.substr(0, eq)) + "=" + trim(line.substr(eq + 1)));
  }
  expanded.insert(expanded.end(), rest.begin(), rest.end());
  return expanded;
}

CLI::App* subcommand(CLI::App& app, const char* name, const char* description) {
  CLI::App* cmd = app.add_subcommand(name, description);
  cmd->option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  cmd->add_option("--config", "key=value file; command-line flags take precedence");
  return cmd;
}

// Palette indexed by lane slot.
constexpr std::uint8_t kPalette[4][3] = {{255, 0, 0}, {0, 255, 0}, {0, 0, 255}, {255, 255, 0}};

}  // namespace

int run(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Row-anchor lane detection toolkit"};
  app.require_subcommand(1);

  PipelineOptions pipe;
  std::string weights_path, image_path, scores_path, lanes_path, out_path, out_scores, out_lanes;
  std::optional<std::uint64_t> random_seed;

  auto* infer = subcommand(app, "infer", "Run the network and write scores and/or lanes");
  infer->add_option("--weights", weights_path, "SWLW weight file");
  infer->add_option("--random-weights", random_seed, "Use seeded random weights instead of a file");
  infer->add_option("--image", image_path, "Input PPM (resized to the network input if needed)");
  infer->add_option("--scores", scores_path, "Existing SWLT tensor to post-process instead of an image");
  infer->add_option("--out-scores", out_scores, "SWLT output path");
  infer->add_option("--out-lanes", out_lanes, "Lane file output path");
  add_pipeline_options(infer, pipe);

  auto* decode = subcommand(app, "decode", "Decode a score tensor into a lane file");
  decode->add_option("--scores", scores_path, "SWLT tensor")->required();
  decode->add_option("--out", out_path, "Lane file output")->required();
  add_grid_options(decode, pipe.grid);

  auto* suppress = subcommand(app, "suppress", "Drop short and non-linear lanes");
  suppress->add_option("--scores", scores_path, "SWLT tensor input");
  suppress->add_option("--lanes", lanes_path, "Lane file input");
  suppress->add_option("--out", out_path, "Lane file output")->required();
  add_grid_options(suppress, pipe.grid);
  add_suppression_options(suppress, pipe);

  auto* fit = subcommand(app, "fit", "Smooth lanes with a least-squares quadratic");
  fit->add_option("--scores", scores_path, "SWLT tensor input");
  fit->add_option("--lanes", lanes_path, "Lane file input");
  fit->add_option("--out", out_path, "Lane file output")->required();
  add_grid_options(fit, pipe.grid);

  std::string pred_dir, gt_dir, category_map_path, kv_out;
  std::vector<std::string> list_files;
  EvalConfig eval_config;
  auto* eval = subcommand(app, "eval", "Score predictions against ground truth");
  eval->add_option("--pred-dir", pred_dir, "Directory of predicted lane files")->required();
  eval->add_option("--gt-dir", gt_dir, "Directory of ground-truth lane files")->required();
  eval->add_option("--list", list_files, "Split list file (repeatable)")
      ->required()
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  eval->add_option("--category-map", category_map_path, "list_name=category lines");
  eval->add_option("--out", out_path, "Tab-separated report")->required();
  eval->add_option("--kv-out", kv_out, "key=value report");
  eval->add_option("--image-width", eval_config.image_width)->capture_default_str();
  eval->add_option("--image-height", eval_config.image_height)->capture_default_str();
  eval->add_option("--stroke-width", eval_config.stroke_width, "Lane width in pixels")->capture_default_str();
  eval->add_option("--iou", eval_config.iou_threshold, "IoU threshold (strict)")->capture_default_str();

  std::size_t iterations = 1000, warmup = 10;
  auto* bench = subcommand(app, "bench", "Time forward pass plus post-processing");
  bench->add_option("--weights", weights_path, "SWLW weight file");
  bench->add_option("--random-weights", random_seed, "Use seeded random weights instead of a file");
  bench->add_option("--image", image_path, "Input PPM; a seeded random image otherwise");
  bench->add_option("--iterations", iterations, "Timed runs")->capture_default_str();
  bench->add_option("--warmup", warmup, "Untimed runs before timing")->capture_default_str();
  bench->add_option("--out", out_path, "Report file");
  add_pipeline_options(bench, pipe);

  int input_height = 288, input_width = 800;
  auto* macs = subcommand(app, "macs", "Count multiply-accumulates of the network");
  macs->add_option("--input-height", input_height)->capture_default_str();
  macs->add_option("--input-width", input_width)->capture_default_str();
  macs->add_option("--out", out_path, "Report file");
  add_grid_options(macs, pipe.grid);

  double stroke = 10.0;
  auto* render = subcommand(app, "render", "Draw lanes over an image");
  render->add_option("--image", image_path, "Input PPM")->required();
  render->add_option("--lanes", lanes_path, "Lane file")->required();
  render->add_option("--out", out_path, "Output PPM")->required();
  render->add_option("--stroke-width", stroke, "Drawn lane width in pixels")->capture_default_str();

  std::uint64_t seed = 0;
  auto* init = subcommand(app, "init-weights", "Write seeded random weights for the network");
  init->add_option("--out", out_path, "SWLW output")->required();
  init->add_option("--seed", seed)->capture_default_str();
  add_grid_options(init, pipe.grid);

  try {
    args = expand_config(std::move(args));
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    app.exit(e, out, err);
    return kSuccess;
  } catch (const CLI::CallForAllHelp& e) {
    app.exit(e, out, err);
    return kSuccess;
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kUsageError;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kUsageError;
  }

  try {
    validate(pipe);
    if (infer->parsed()) {
      if (out_scores.empty() && out_lanes.empty()) throw UsageError("nothing to do: give --out-scores and/or --out-lanes");
      if (image_path.empty() == scores_path.empty()) throw UsageError("exactly one of --image or --scores is required");
      ScoreTensor scores;
      if (!image_path.empty()) {
        const auto spec = nnet::NetworkSpec::resnet14(pipe.grid);
        const nnet::Network net(spec, load_weights_or_random(weights_path, random_seed, spec));
        scores = net.forward(load_image_tensor(image_path, spec.input));
      } else {
        scores = io::read_score_tensor(read_input(scores_path, "score tensor"));
      }
      if (!out_scores.empty()) io::write_file_atomic(out_scores, io::write_score_tensor(scores));
      if (!out_lanes.empty()) {
        const LaneSet lanes = postprocess(decode_locations(scores, pipe.grid), pipe.grid, pipe.suppression, pipe.toggles());
        write_lanes(out_lanes, lanes, pipe.grid);
      }
    } else if (decode->parsed()) {
      const ScoreTensor scores = io::read_score_tensor(read_input(scores_path, "score tensor"));
      write_lanes(out_path, decode_locations(scores, pipe.grid), pipe.grid);
    } else if (suppress->parsed()) {
      LaneSet lanes = load_lanes(scores_path, lanes_path, pipe.grid);
      StageToggles t = pipe.toggles();
      t.curve_fit = false;
      write_lanes(out_path, postprocess(lanes, pipe.grid, pipe.suppression, t), pipe.grid);
    } else if (fit->parsed()) {
      const LaneSet lanes = load_lanes(scores_path, lanes_path, pipe.grid);
      write_lanes(out_path, smooth_lanes(lanes, pipe.grid), pipe.grid);
    } else if (eval->parsed()) {
      std::map<std::string, std::string> mapping;
      if (!category_map_path.empty()) mapping = parse_category_map(read_input_text(category_map_path, "category map"));
      std::vector<FrameRef> frames;
      for (const auto& list : list_files) {
        auto category = io::category_for_list(list, mapping);
        if (!category) {
          err << "warning: unknown category for list " << list << "; grouping under \"uncategorized\"\n";
          category = "uncategorized";
        }
        auto listed = io::parse_list_file(read_input_text(list, "list file"), *category);
        frames.insert(frames.end(), listed.begin(), listed.end());
      }
      if (!fs::is_directory(gt_dir)) throw UsageError("ground-truth directory not found: " + gt_dir);
      const EvalReport report =
          evaluate_split(frames, io::directory_lane_source(pred_dir), io::directory_lane_source(gt_dir), eval_config);
      for (const auto& f : report.missing_predictions) err << "warning: no prediction for " << f << "; counted as empty\n";
      const std::string table = report_tsv(report);
      io::write_file_atomic(out_path, table);
      if (!kv_out.empty()) io::write_file_atomic(kv_out, report_key_values(report));
      out << table;
    } else if (bench->parsed()) {
      if (iterations < 1) throw UsageError("--iterations must be >= 1");
      const auto spec = nnet::NetworkSpec::resnet14(pipe.grid);
      const nnet::Network net(spec, load_weights_or_random(weights_path, random_seed, spec));
      nnet::Tensor3 input(spec.input);
      if (!image_path.empty()) {
        input = load_image_tensor(image_path, spec.input);
      } else {
        std::mt19937 rng(1);
        std::normal_distribution<float> dist(0.0f, 1.0f);
        for (float& v : input.data()) v = dist(rng);
      }
      BenchConfig config{iterations, warmup, pipe.grid, pipe.suppression, pipe.toggles()};
      const std::string text = run_benchmark(net, input, config).to_text();
      if (!out_path.empty()) io::write_file_atomic(out_path, text);
      out << text;
    } else if (macs->parsed()) {
      const auto spec = nnet::NetworkSpec::resnet14(pipe.grid, {3, input_height, input_width});
      const auto shapes = nnet::infer_shapes(spec);
      const auto per_layer = nnet::layer_macs(spec.layers, spec.input);
      std::string text = "layer\tkind\toutput\tmacs\n";
      std::uint64_t total = 0;
      for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const auto& s = shapes[i];
        text += std::to_string(i) + "\t" + nnet::layer_kind(spec.layers[i]) + "\t" + std::to_string(s.channels) + "x" +
                std::to_string(s.height) + "x" + std::to_string(s.width) + "\t" + std::to_string(per_layer[i]) + "\n";
        total += per_layer[i];
      }
      char gmacs[32];
      std::snprintf(gmacs, sizeof gmacs, "%.4f", static_cast<double>(total) / 1e9);
      text += "total_macs=" + std::to_string(total) + "\ngmacs=" + gmacs + "\n";
      if (!out_path.empty()) io::write_file_atomic(out_path, text);
      out << text;
    } else if (render->parsed()) {
      io::RgbImage img = io::read_ppm(read_input(image_path, "image"));
      const auto lines = io::parse_lane_file(read_input_text(lanes_path, "lane file"));
      for (const auto& line : lines) {
        for (const auto& p : line) {
          if (p.x > img.width || p.y < 0.0 || p.y > img.height) {
            throw UsageError("lane point outside the " + std::to_string(img.width) + "x" + std::to_string(img.height) +
                             " image");
          }
        }
      }
      for (std::size_t i = 0; i < lines.size(); ++i) {
        const RasterMask mask = rasterize_lane(lines[i], img.width, img.height, stroke);
        const auto* color = kPalette[i % 4];
        for (int y = 0; y < img.height; ++y) {
          for (int x = 0; x < img.width; ++x) {
            if (mask.test(x, y)) std::copy(color, color + 3, img.at(x, y));
          }
        }
      }
      io::write_file_atomic(out_path, io::write_ppm(img));
    } else if (init->parsed()) {
      const auto spec = nnet::NetworkSpec::resnet14(pipe.grid);
      io::write_file_atomic(out_path, nnet::write_weights(nnet::random_weights(spec, seed)));
    }
    return kSuccess;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kUsageError;
  } catch (const InvalidInput& e) {
    err << "error: " << e.what() << "\n";
    return kUsageError;
  } catch (const ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kUsageError;
  } catch (const FormatError& e) {
    err << "error: " << e.what() << "\n";
    return kUsageError;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kUsageError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kRuntimeFailure;
  }
}

}  // namespace rowlane::cli
