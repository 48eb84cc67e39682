#pragma once

// Batch command-line front end. `run` returns the process exit code:
// 0 on success, 2 on argument errors (with usage), 1 on runtime failures.

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "synthima/composite.hpp"
#include "synthima/error.hpp"
#include "synthima/image_io.hpp"
#include "synthima/network.hpp"
#include "synthima/style.hpp"
#include "synthima/synthesis.hpp"
#include "synthima/weights_io.hpp"

namespace synthima::cli {

/// Output files are staged next to their destination and renamed into
/// place only after every output of a command has been produced.
class StagedOutputs {
 public:
  StagedOutputs() = default;
  StagedOutputs(const StagedOutputs&) = delete;
  StagedOutputs& operator=(const StagedOutputs&) = delete;
  ~StagedOutputs() {
    for (const auto& [tmp, dest] : staged_) {
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
    }
  }

  void add(const std::filesystem::path& dest, const std::vector<std::uint8_t>& bytes) {
    std::filesystem::path tmp = dest;
    tmp += ".tmp-" + std::to_string(::getpid());
    detail::write_file(tmp, bytes);
    staged_.emplace_back(tmp, dest);
  }

  void add_text(const std::filesystem::path& dest, const std::string& text) {
    add(dest, std::vector<std::uint8_t>(text.begin(), text.end()));
  }

  void commit() {
    for (const auto& [tmp, dest] : staged_) {
      std::error_code ec;
      std::filesystem::rename(tmp, dest, ec);
      if (ec) throw IoError("cannot move output into place at '" + dest.string() + "': " + ec.message());
    }
    staged_.clear();
  }

 private:
  std::vector<std::pair<std::filesystem::path, std::filesystem::path>> staged_;
};

/// Parses "layer[:weight],layer[:weight],..."; missing weights take
/// `default_weight`.
inline std::vector<LayerWeight> parse_layer_list(const std::string& text, double default_weight) {
  std::vector<LayerWeight> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    const auto colon = item.find(':');
    LayerWeight lw{item.substr(0, colon), default_weight};
    if (colon != std::string::npos) {
      try {
        std::size_t used = 0;
        lw.weight = std::stod(item.substr(colon + 1), &used);
        if (used != item.size() - colon - 1) throw std::invalid_argument("trailing");
      } catch (const std::exception&) {
        throw ArgumentError("invalid layer weight in '" + item + "'");
      }
    }
    if (lw.layer.empty()) throw ArgumentError("empty layer name in '" + text + "'");
    out.push_back(lw);
  }
  return out;
}

struct SynthesisOptions {
  std::string weights;
  std::string arch;
  std::string preprocess = "auto";
  std::uint64_t weight_seed = 0;
  std::size_t size = 224;
  std::size_t iters = 300;
  double step = 1.0;
  double alpha = 1.0;
  double beta = 1000.0;
  double tol = 1e-6;
  std::uint64_t seed = 0;
  std::string init = "noise";
  bool no_clamp = false;
  bool no_line_search = false;
  std::string content_layers;
  std::string style_layers;
  std::string out;
  std::string loss_csv;
};

inline void add_synthesis_flags(CLI::App* cmd, SynthesisOptions& o) {
  cmd->add_option("--out", o.out, "Output image (.png or .ppm)")->required();
  cmd->add_option("--loss-csv", o.loss_csv, "Loss history CSV (default: output path with .csv)");
  cmd->add_option("--weights", o.weights, "VGGW weight file; omitted selects a seeded random toy network");
  cmd->add_option("--arch", o.arch, "Network preset the weights bind to (vgg16|toy)")
      ->check(CLI::IsMember({"vgg16", "toy"}));
  cmd->add_option("--preprocess", o.preprocess, "Pixel preprocessing (auto|vgg|identity)")
      ->check(CLI::IsMember({"auto", "vgg", "identity"}));
  cmd->add_option("--weight-seed", o.weight_seed, "Seed of the random toy weights");
  cmd->add_option("--size", o.size, "Square working resolution, rounded up to the network's pooling divisor")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--iters", o.iters, "Maximum descent steps");
  cmd->add_option("--step", o.step, "Initial step size")->check(CLI::PositiveNumber);
  cmd->add_option("--alpha", o.alpha, "Content weight")->check(CLI::NonNegativeNumber);
  cmd->add_option("--beta", o.beta, "Style weight")->check(CLI::NonNegativeNumber);
  cmd->add_option("--tol", o.tol, "Relative improvement threshold over a 25-step window")
      ->check(CLI::NonNegativeNumber);
  cmd->add_option("--seed", o.seed, "Noise seed");
  cmd->add_option("--init", o.init, "Starting image (noise|content)")->check(CLI::IsMember({"noise", "content"}));
  cmd->add_flag("--no-clamp", o.no_clamp, "Do not clamp pixels to the valid range each step");
  cmd->add_flag("--no-line-search", o.no_line_search, "Use a fixed step instead of backtracking");
  cmd->add_option("--content-layers", o.content_layers, "Content layers, e.g. conv4_2:1");
  cmd->add_option("--style-layers", o.style_layers, "Style layers, e.g. conv1_1:0.2,conv2_1:0.2");
}

struct LoadedNetwork {
  NetworkSpec spec;
  WeightStore weights;
  PreprocessSpec preprocess;
};

inline LoadedNetwork load_network(const SynthesisOptions& o, std::ostream& err) {
  LoadedNetwork n;
  bool pretrained = false;
  if (o.weights.empty()) {
    n.spec = NetworkSpec::by_name(o.arch.empty() ? "toy" : o.arch);
    err << "warning: no --weights given; using a random-weight " << (o.arch.empty() ? "toy" : o.arch)
        << " network (weight seed " << o.weight_seed << ")\n";
    n.weights = random_weights(n.spec, o.weight_seed);
  } else {
    n.spec = NetworkSpec::by_name(o.arch.empty() ? "vgg16" : o.arch);
    n.weights = load_weights(o.weights, n.spec);
    pretrained = true;
  }
  if (o.preprocess == "vgg" || (o.preprocess == "auto" && pretrained)) {
    n.preprocess = PreprocessSpec::vgg16();
  } else {
    n.preprocess = PreprocessSpec::identity();
  }
  return n;
}

inline std::filesystem::path default_csv_path(const std::string& out, const std::string& csv) {
  if (!csv.empty()) return csv;
  std::filesystem::path p(out);
  p.replace_extension(".csv");
  return p;
}

/// Shared driver for transfer and reconstruct.
inline void run_synthesis(const SynthesisOptions& o, const std::optional<RgbImage>& content_img,
                          const std::optional<RgbImage>& style_img, std::ostream& out, std::ostream& err) {
  require_image_extension(o.out);

  LoadedNetwork net = load_network(o, err);
  LossConfig cfg = LossConfig::defaults_for(net.spec);
  cfg.alpha = o.alpha;
  cfg.beta = o.beta;
  if (!o.content_layers.empty()) cfg.content_layers = parse_layer_list(o.content_layers, 1.0);
  if (!o.style_layers.empty()) {
    // Unweighted style layers share a total weight of 1.
    cfg.style_layers = parse_layer_list(o.style_layers, std::numeric_limits<double>::quiet_NaN());
    for (auto& lw : cfg.style_layers) {
      if (std::isnan(lw.weight)) lw.weight = 1.0 / static_cast<double>(cfg.style_layers.size());
    }
  }
  if (!content_img) cfg.content_layers.clear();
  if (!style_img) cfg.style_layers.clear();
  for (const auto& name : cfg.all_layers()) net.spec.index_of(name);

  const std::size_t divisor = std::size_t{1} << net.spec.pools_through(net.spec.layers().size() - 1);
  const std::size_t side = round_up_to_multiple(o.size, divisor);
  if (side != o.size) err << "note: working size rounded up to " << side << "\n";
  PreprocessSpec pre = net.preprocess;
  pre.target = Extent2{side, side};

  std::optional<Tensor> content, style;
  if (content_img) content = preprocess(*content_img, pre);
  if (style_img) style = preprocess(*style_img, pre);

  OptimizerParams opt;
  opt.max_iters = o.iters;
  opt.step = o.step;
  opt.tol = o.tol;
  opt.seed = o.seed;
  opt.clamp = !o.no_clamp;
  opt.clamp_range = preprocessed_range(pre);
  opt.line_search = !o.no_line_search;
  opt.init = o.init == "content" ? InitMode::kContent : InitMode::kNoise;

  auto result = synthesize(net.spec, net.weights, content, style, cfg, opt);
  std::ostringstream csv;
  write_loss_csv(csv, result.state);

  StagedOutputs staged;
  staged.add(o.out, encode_for_path(o.out, deprocess(result.image, pre)));
  staged.add_text(default_csv_path(o.out, o.loss_csv), csv.str());
  staged.commit();

  const LossRecord& last = result.state.history.empty() ? result.state.initial : result.state.history.back();
  out << "iterations " << result.state.iteration << " (" << to_string(result.state.stop) << "), loss "
      << result.state.initial.total << " -> " << last.total << "\n";
}

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Image synthesis from pixel composites and deep feature statistics", "synthima"};
  app.require_subcommand(1);

  // transfer
  SynthesisOptions transfer_opts;
  std::string transfer_content, transfer_style;
  auto* transfer = app.add_subcommand("transfer", "Style transfer: content of one image, style of another");
  transfer->add_option("--content", transfer_content, "Content image")->required();
  transfer->add_option("--style", transfer_style, "Style image")->required();
  add_synthesis_flags(transfer, transfer_opts);

  // reconstruct
  SynthesisOptions recon_opts;
  std::string recon_image, recon_loss = "content";
  auto* reconstruct = app.add_subcommand("reconstruct", "Reconstruct an image from its content or style statistics");
  reconstruct->add_option("--image", recon_image, "Target image")->required();
  reconstruct->add_option("--loss", recon_loss, "Loss to match (content|style)")
      ->check(CLI::IsMember({"content", "style"}));
  add_synthesis_flags(reconstruct, recon_opts);

  // composite
  auto* composite = app.add_subcommand("composite", "Pixel compositing operations");
  composite->require_subcommand(1);
  std::string blend_a, blend_b, blend_out;
  double blend_alpha = 0.5;
  auto* blend_cmd = composite->add_subcommand("blend", "alpha * a + (1 - alpha) * b");
  blend_cmd->add_option("--a", blend_a, "First image")->required();
  blend_cmd->add_option("--b", blend_b, "Second image")->required();
  blend_cmd->add_option("--alpha", blend_alpha, "Weight of the first image")->check(CLI::Range(0.0, 1.0));
  blend_cmd->add_option("--out", blend_out, "Output image")->required();

  std::string filter_in, filter_out, filter_kernel = "identity";
  double filter_scale = 1.0, filter_bias = 0.0;
  auto* filter_cmd = composite->add_subcommand("filter", "Classical convolution filter");
  filter_cmd->add_option("--in", filter_in, "Input image")->required();
  filter_cmd->add_option("--kernel", filter_kernel,
                         "identity|box3|box5|blur|sobel-x|sobel-y|sharpen|emboss|invert");
  filter_cmd->add_option("--scale", filter_scale, "Multiplier applied after convolution");
  filter_cmd->add_option("--bias", filter_bias, "Offset applied after scaling");
  filter_cmd->add_option("--out", filter_out, "Output image")->required();

  std::string sketch_in, sketch_out;
  double sketch_radius = 5.0;
  auto* sketch_cmd = composite->add_subcommand("sketch", "Pencil-sketch effect");
  sketch_cmd->add_option("--in", sketch_in, "Input image")->required();
  sketch_cmd->add_option("--radius", sketch_radius, "Blur radius")->check(CLI::NonNegativeNumber);
  sketch_cmd->add_option("--out", sketch_out, "Output image")->required();

  // ca
  int ca_rule = 30;
  std::size_t ca_width = 129, ca_steps = 64;
  std::optional<std::uint64_t> ca_seed;
  std::string ca_out;
  auto* ca = app.add_subcommand("ca", "Elementary cellular automaton");
  ca->add_option("--rule", ca_rule, "Rule number")->check(CLI::Range(0, 255));
  ca->add_option("--width", ca_width, "Cells per row")->check(CLI::Range(std::size_t{3}, std::size_t{1} << 16));
  ca->add_option("--steps", ca_steps, "Rows, seed included")->check(CLI::Range(std::size_t{1}, std::size_t{1} << 16));
  ca->add_option("--seed", ca_seed, "Random first row from this seed (default: single centre cell)");
  ca->add_option("--out", ca_out, "Output image")->required();

  // pattern
  std::string pattern_formula = "interference", pattern_out;
  std::size_t pattern_w = 256, pattern_h = 256;
  std::vector<std::string> pattern_params;
  std::optional<std::uint64_t> pattern_seed;
  auto* pattern = app.add_subcommand("pattern", "Formula-generated pattern");
  pattern->add_option("--formula", pattern_formula, "interference|rings|waves");
  pattern->add_option("--width", pattern_w, "Width")->check(CLI::Range(std::size_t{1}, std::size_t{1} << 15));
  pattern->add_option("--height", pattern_h, "Height")->check(CLI::Range(std::size_t{1}, std::size_t{1} << 15));
  pattern->add_option("--param", pattern_params, "Formula parameter key=value (repeatable)");
  pattern->add_option("--seed", pattern_seed, "Seed for formulas with random components");
  pattern->add_option("--out", pattern_out, "Output image")->required();

  // weights-info
  std::string info_weights, info_arch;
  auto* info = app.add_subcommand("weights-info", "List the tensors of a VGGW file");
  info->add_option("weights", info_weights, "VGGW file")->required();
  info->add_option("--arch", info_arch, "Also check the file binds to this preset (vgg16|toy)")
      ->check(CLI::IsMember({"vgg16", "toy"}));

  std::vector<std::string> args;
  for (int i = argc - 1; i > 0; --i) args.emplace_back(argv[i]);
  try {
    app.parse(args);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  CLI::App* active = app.get_subcommands().front();
  try {
    if (*transfer) {
      run_synthesis(transfer_opts, load_image(transfer_content), load_image(transfer_style), out, err);
    } else if (*reconstruct) {
      const RgbImage target = load_image(recon_image);
      if (recon_loss == "content") {
        run_synthesis(recon_opts, target, std::nullopt, out, err);
      } else {
        run_synthesis(recon_opts, std::nullopt, target, out, err);
      }
    } else if (*composite) {
      StagedOutputs staged;
      if (*blend_cmd) {
        active = blend_cmd;
        staged.add(blend_out, encode_for_path(blend_out, blend(load_image(blend_a), load_image(blend_b), blend_alpha)));
      } else if (*filter_cmd) {
        active = filter_cmd;
        FilterKernel k = FilterKernel::by_name(filter_kernel);
        k.scale *= filter_scale;
        k.bias = k.bias * filter_scale + filter_bias;
        staged.add(filter_out, encode_for_path(filter_out, apply_filter(load_image(filter_in), k)));
      } else {
        active = sketch_cmd;
        staged.add(sketch_out, encode_for_path(sketch_out, pencil_sketch(load_image(sketch_in), sketch_radius)));
      }
      staged.commit();
    } else if (*ca) {
      CaRule rule{ca_rule, ca_width, ca_steps, {}};
      if (ca_seed) {
        std::mt19937_64 rng(*ca_seed);
        rule.seed.resize(ca_width);
        for (auto& c : rule.seed) c = static_cast<std::uint8_t>(rng() & 1u);
      }
      StagedOutputs staged;
      staged.add(ca_out, encode_for_path(ca_out, render_grid(ca_generate(rule))));
      staged.commit();
    } else if (*pattern) {
      PatternParams params;
      for (const auto& kv : pattern_params) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos || eq == 0) throw ArgumentError("--param expects key=value, got '" + kv + "'");
        try {
          params[kv.substr(0, eq)] = std::stod(kv.substr(eq + 1));
        } catch (const std::exception&) {
          throw ArgumentError("--param value is not a number in '" + kv + "'");
        }
      }
      if (pattern_seed) params["seed"] = static_cast<double>(*pattern_seed);
      StagedOutputs staged;
      staged.add(pattern_out, encode_for_path(pattern_out, math_pattern(pattern_w, pattern_h, pattern_formula, params)));
      staged.commit();
    } else if (*info) {
      const auto entries = decode_vggw(detail::read_file(info_weights));
      std::size_t total = 0;
      for (const auto& e : entries) {
        out << e.name << ' ';
        const auto ext = e.tensor.shape().extents();
        for (std::size_t i = 0; i < ext.size(); ++i) out << (i ? "x" : "") << ext[i];
        out << '\n';
        total += e.tensor.size();
      }
      const WeightStore store = from_entries(entries);
      out << "layers " << store.size() << ", parameters " << total << '\n';
      if (!info_arch.empty()) {
        bind_weights(NetworkSpec::by_name(info_arch), store);
        out << "binds to " << info_arch << '\n';
      }
    }
  } catch (const ArgumentError& e) {
    err << "error: " << e.what() << "\n\n" << active->help();
    return 2;
  } catch (const DivergenceError& e) {
    err << "error: " << e.what() << " after " << e.state().iteration << " iterations\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace synthima::cli
