// Command-line front end: architecture transformation, op counting and
// latency analysis, simulator verification, and the training demo.
//
// Exit codes: 0 success, 1 validation failure (fidelity bound missed,
// over-capacity batch, training divergence), 2 input error (unreadable or
// malformed files, bad flags or units).

#include <cmath>
#include <fstream>
#include <iostream>
#include <random>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "fatnet/analysis.hpp"
#include "fatnet/conv.hpp"
#include "fatnet/error.hpp"
#include "fatnet/net.hpp"
#include "fatnet/optics.hpp"
#include "fatnet/train.hpp"
#include "fatnet/transform.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kValidationFailure = 1;
constexpr int kInputError = 2;

// Physical quantities must carry their unit: the defaults mix nanometers and
// millimeters, and a silently misread magnitude is worse than a reparse.
double parse_with_units(const std::string& text,
                        const std::vector<std::pair<std::string, double>>& units,
                        const std::string& what) {
  for (const auto& [suffix, scale] : units) {
    if (text.size() <= suffix.size() ||
        text.compare(text.size() - suffix.size(), suffix.size(), suffix) != 0)
      continue;
    const std::string number = text.substr(0, text.size() - suffix.size());
    try {
      size_t used = 0;
      const double v = std::stod(number, &used);
      if (used != number.size()) break;
      return v * scale;
    } catch (const std::exception&) {
      break;
    }
  }
  fatnet::fail(what + ": expected a number with a unit suffix (" +
               [&units] {
                 std::string s;
                 for (const auto& [suffix, scale] : units) {
                   (void)scale;
                   if (!s.empty()) s += ", ";
                   s += suffix;
                 }
                 return s;
               }() +
               "), got '" + text + "'");
}

double parse_length(const std::string& text, const std::string& what) {
  return parse_with_units(
      text,
      {{"nm", 1e-9}, {"um", 1e-6}, {"mm", 1e-3}, {"cm", 1e-2}, {"m", 1.0}},
      what);
}

double parse_rate(const std::string& text, const std::string& what) {
  return parse_with_units(
      text, {{"kHz", 1e3}, {"MHz", 1e6}, {"GHz", 1e9}, {"Hz", 1.0}}, what);
}

struct OpticsFlags {
  std::string wavelength = "532nm";
  std::string focal_length = "10mm";
  std::string lens_diameter = "5mm";
  int grid = 512;

  void attach(CLI::App* cmd) {
    cmd->add_option("--wavelength", wavelength, "light wavelength, e.g. 532nm");
    cmd->add_option("--focal-length", focal_length, "lens focal length, e.g. 10mm");
    cmd->add_option("--lens-diameter", lens_diameter, "lens diameter, e.g. 5mm");
    cmd->add_option("--grid", grid, "simulation grid pixels per side (even)");
  }

  fatnet::OpticsConfig build() const {
    fatnet::OpticsConfig c;
    c.wavelength = parse_length(wavelength, "--wavelength");
    c.focal_length = parse_length(focal_length, "--focal-length");
    c.lens_diameter = parse_length(lens_diameter, "--lens-diameter");
    c.grid_size = grid;
    c.validate();
    return c;
  }
};

bool same_layer_shapes(const fatnet::NetworkSpec& a, const fatnet::NetworkSpec& b) {
  if (a.layers.size() != b.layers.size()) return false;
  for (size_t i = 0; i < a.layers.size(); ++i) {
    const fatnet::LayerSpec &x = a.layers[i], &y = b.layers[i];
    if (x.kind != y.kind || x.in_channels != y.in_channels ||
        x.out_channels != y.out_channels || x.feature_in != y.feature_in ||
        x.feature_out != y.feature_out)
      return false;
    const bool conv = x.kind == fatnet::LayerKind::conv ||
                      x.kind == fatnet::LayerKind::classifier_head;
    if (conv && x.kernel != y.kernel) return false;
  }
  return true;
}

fatnet::NetworkSpec load_spec_or_builtin(const std::string& name) {
  if (name == "builtin:resnet18") return fatnet::resnet18_cifar100();
  if (name == "builtin:fatnet") return fatnet::fatnet_published();
  return fatnet::load_network(name);
}

int cmd_transform(const std::string& spec_file, int64_t classes_override,
                  const std::string& out_file) {
  fatnet::NetworkSpec net;
  try {
    net = load_spec_or_builtin(spec_file);
  } catch (const fatnet::error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInputError;
  }
  try {
    if (classes_override > 0) {
      net.num_classes = classes_override;
      net.validate();
    }
    const fatnet::TransformResult r = fatnet::to_fatnet(net);
    std::cout << fatnet::format_report(r.report);
    if (same_layer_shapes(r.network, net))
      std::cout << "no shape changes: the network is already in target form\n";
    if (!out_file.empty()) {
      fatnet::save_network(r.network, out_file);
      std::cout << "transformed spec written to " << out_file << "\n";
    }
  } catch (const fatnet::error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kValidationFailure;
  }
  return kOk;
}

int cmd_analyze(const std::vector<std::string>& spec_files,
                const std::vector<int64_t>& batches, const std::string& rate_text,
                int64_t resolution, int64_t input_size, int64_t kernel_size,
                bool allow_over_capacity, const std::string& json_file) {
  std::vector<fatnet::NetworkSpec> nets;
  fatnet::CompareOptions opt;
  try {
    for (const std::string& f : spec_files) nets.push_back(load_spec_or_builtin(f));
    opt.batches = batches;
    opt.frame_rate = parse_rate(rate_text, "--frame-rate");
    opt.allow_over_capacity = allow_over_capacity;
    const bool has_geometry = resolution > 0 || input_size > 0 || kernel_size > 0;
    if (!batches.empty() || has_geometry) {
      fatnet::require(resolution > 0 && input_size > 0 && kernel_size > 0,
                      "latency prediction needs the tiling geometry: pass "
                      "--resolution, --input, and --kernel");
      opt.tiling = fatnet::tiling_plan(resolution, input_size, kernel_size);
    }
  } catch (const fatnet::error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInputError;
  }
  try {
    const fatnet::CompareReport report = fatnet::compare(nets, opt);
    std::cout << fatnet::format_text(report);
    if (!json_file.empty()) {
      std::ofstream f(json_file);
      fatnet::require(f.good(), "cannot open '" + json_file + "' for writing");
      f << fatnet::to_json_text(report);
      fatnet::require(f.good(), "write to '" + json_file + "' failed");
    }
  } catch (const fatnet::error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kValidationFailure;
  }
  return kOk;
}

int cmd_verify(const OpticsFlags& optics_flags, int64_t image_size,
               int64_t kernel_size, int64_t trials, uint64_t seed) {
  fatnet::OpticsConfig config;
  try {
    config = optics_flags.build();
    fatnet::require(image_size >= 1 && kernel_size >= 1 && trials >= 1,
                    "verify: sizes and trials must be >= 1");
    fatnet::require(kernel_size <= image_size,
                    "verify: kernel must not exceed the image");
    fatnet::require(image_size + kernel_size - 1 <= config.grid_size,
                    "verify: image plus kernel padding (" +
                        std::to_string(image_size + kernel_size - 1) +
                        ") exceeds grid size " +
                        std::to_string(config.grid_size));
  } catch (const fatnet::error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInputError;
  }

  try {
    if (const auto warning = fatnet::config_warning(config))
      std::cout << "note: " << *warning << "\n";

    std::mt19937_64 rng(seed);
    auto uniform01 = [&rng] {
      return static_cast<double>(rng() >> 11) * 0x1.0p-53;
    };
    auto random_plane = [&](int64_t side) {
      fatnet::RealTensor t = fatnet::RealTensor::plane(side, side);
      for (double& v : t.data) v = uniform01();
      return t;
    };
    auto rel_rms = [](const fatnet::RealTensor& got,
                      const fatnet::RealTensor& want) {
      double num = 0.0, den = 0.0;
      for (size_t i = 0; i < got.data.size(); ++i) {
        const double d = got.data[i] - want.data[i];
        num += d * d;
        den += want.data[i] * want.data[i];
      }
      return std::sqrt(num / den);
    };

    double worst = 0.0;
    for (int64_t t = 0; t < trials; ++t) {
      const fatnet::RealTensor image = random_plane(image_size);
      const fatnet::RealTensor kernel = random_plane(kernel_size);
      const fatnet::RealTensor want = fatnet::conv2d_direct(image, kernel);
      const fatnet::RealTensor got = fatnet::conv4f_single(image, kernel, config);
      const double err = rel_rms(got, want);
      worst = std::max(worst, err);
      std::cout << "trial " << t << ": relative RMS error " << err << "\n";
    }

    {
      fatnet::RealTensor image = random_plane(image_size);
      fatnet::RealTensor kernel =
          fatnet::RealTensor::plane(kernel_size, kernel_size);
      kernel.data[static_cast<size_t>((kernel_size / 2) * kernel_size +
                                      kernel_size / 2)] = 1.0;
      const fatnet::RealTensor want = fatnet::conv2d_direct(image, kernel);
      const fatnet::RealTensor got = fatnet::conv4f_single(image, kernel, config);
      std::cout << "delta-kernel trial: relative RMS error " << rel_rms(got, want)
                << "\n";
      worst = std::max(worst, rel_rms(got, want));
    }

    std::cout << "grid sweep (same image and kernel):\n";
    const fatnet::RealTensor image = random_plane(image_size);
    const fatnet::RealTensor kernel = random_plane(kernel_size);
    const fatnet::RealTensor want = fatnet::conv2d_direct(image, kernel);
    std::vector<double> sweep;
    for (int n : {128, 256, 512}) {
      fatnet::OpticsConfig c = config;
      c.grid_size = n;
      sweep.push_back(rel_rms(fatnet::conv4f_single(image, kernel, c), want));
      std::cout << "  grid " << n << ": relative RMS error " << sweep.back()
                << "\n";
    }
    const bool decreasing = sweep[0] > sweep[1] && sweep[1] > sweep[2];
    std::cout << "  strictly decreasing with grid size: "
              << (decreasing ? "yes" : "no (errors sit at rounding level)")
              << "\n";

    std::cout << "worst relative RMS error: " << worst << " (bound "
              << config.fidelity_bound << ")\n";
    if (worst >= config.fidelity_bound) {
      std::cout << "FAIL: fidelity bound exceeded\n";
      return kValidationFailure;
    }
    std::cout << "PASS: all trials within the fidelity bound\n";
  } catch (const fatnet::error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kValidationFailure;
  }
  return kOk;
}

int cmd_train_demo(const std::string& backend_name, uint64_t seed, int64_t epochs,
                   const OpticsFlags& optics_flags) {
  fatnet::TrainConfig config;
  try {
    config.backend = fatnet::backend_from(backend_name);
    config.seed = seed;
    config.epochs = epochs;
    config.optics = optics_flags.build();
    config.validate();
  } catch (const fatnet::error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInputError;
  }
  try {
    if (config.backend == fatnet::Backend::physical)
      if (const auto warning = fatnet::config_warning(config.optics))
        std::cout << "note: " << *warning << "\n";
    const fatnet::TrainHistory history = fatnet::train_demo(config);
    for (size_t e = 0; e < history.epochs.size(); ++e)
      std::cout << "epoch " << e << ": loss " << history.epochs[e].loss
                << ", train accuracy " << history.epochs[e].accuracy << "\n";
    std::cout << "final train accuracy: " << history.final_accuracy << "\n";
    if (history.first_epoch_at_90 >= 0)
      std::cout << "reached 90% at epoch " << history.first_epoch_at_90 << "\n";
  } catch (const fatnet::error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kValidationFailure;
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"FatNet transformation, analysis, and 4f-simulation toolkit"};
  app.require_subcommand(1);

  // transform
  std::string t_spec, t_out;
  int64_t t_classes = 0;
  CLI::App* transform =
      app.add_subcommand("transform", "rewrite a classifier's deep section for "
                                      "constant-resolution execution");
  transform->add_option("spec", t_spec,
                        "network spec file (or builtin:resnet18, builtin:fatnet)")
      ->required();
  transform->add_option("--classes", t_classes,
                        "override the class count before transforming");
  transform->add_option("--out", t_out, "write the transformed spec here");

  // analyze
  std::vector<std::string> a_specs;
  std::vector<int64_t> a_batches;
  std::string a_rate = "2MHz", a_json;
  int64_t a_resolution = 0, a_input = 0, a_kernel = 0;
  bool a_over = false;
  CLI::App* analyze = app.add_subcommand(
      "analyze", "conv-op counts, baseline ratios, tiling capacity, latency");
  analyze->add_option("specs", a_specs, "network spec files; first is baseline")
      ->required();
  analyze->add_option("--batch", a_batches, "batch sizes for latency columns");
  analyze->add_option("--frame-rate", a_rate, "optical frame rate, e.g. 2MHz");
  analyze->add_option("--resolution", a_resolution, "frame pixels per side (R)");
  analyze->add_option("--input", a_input, "input image pixels per side (M)");
  analyze->add_option("--kernel", a_kernel, "kernel pixels per side (N)");
  analyze->add_flag("--allow-over-capacity", a_over,
                    "warn instead of refusing batches beyond the tiling capacity");
  analyze->add_option("--json", a_json, "also write the report as JSON here");

  // verify
  OpticsFlags v_optics;
  int64_t v_image = 32, v_kernel = 3, v_trials = 10;
  uint64_t v_seed = 0;
  CLI::App* verify = app.add_subcommand(
      "verify", "compare the physical 4f simulation against the direct oracle");
  v_optics.attach(verify);
  verify->add_option("--image-size", v_image, "test image pixels per side");
  verify->add_option("--kernel-size", v_kernel, "test kernel pixels per side");
  verify->add_option("--trials", v_trials, "number of random trials");
  verify->add_option("--seed", v_seed, "RNG seed");

  // train-demo
  OpticsFlags d_optics;
  d_optics.grid = 32;  // ample for 8x8 features; keeps the physical path quick
  std::string d_backend = "direct";
  uint64_t d_seed = 0;
  int64_t d_epochs = 200;
  CLI::App* train = app.add_subcommand(
      "train-demo", "train the built-in toy classifier on synthetic data");
  train->add_option("--backend", d_backend, "direct | ideal | physical");
  train->add_option("--seed", d_seed, "RNG seed");
  train->add_option("--epochs", d_epochs, "training epochs");
  d_optics.attach(train);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kInputError;
  }

  if (*transform) return cmd_transform(t_spec, t_classes, t_out);
  if (*analyze)
    return cmd_analyze(a_specs, a_batches, a_rate, a_resolution, a_input,
                       a_kernel, a_over, a_json);
  if (*verify) return cmd_verify(v_optics, v_image, v_kernel, v_trials, v_seed);
  if (*train) return cmd_train_demo(d_backend, d_seed, d_epochs, d_optics);
  return kInputError;
}
