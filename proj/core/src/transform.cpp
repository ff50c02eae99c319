#include "fatnet/transform.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "fatnet/error.hpp"

namespace fatnet {

int64_t target_resolution(int64_t num_classes) {
  require(num_classes >= 1, "target_resolution: num_classes must be >= 1");
  int64_t f = static_cast<int64_t>(
      std::floor(std::sqrt(static_cast<double>(num_classes))));
  while (f * f < num_classes) ++f;
  return f;
}

int64_t channels_for(int64_t feature_pixels, int64_t num_classes) {
  require(feature_pixels >= 1 && num_classes >= 1,
          "channels_for: arguments must be >= 1");
  return (feature_pixels + num_classes - 1) / num_classes;
}

int64_t kernel_for(int64_t weights, int64_t c_in, int64_t c_out) {
  require(weights >= 1 && c_in >= 1 && c_out >= 1,
          "kernel_for: arguments must be >= 1");
  const double k = std::sqrt(static_cast<double>(weights) /
                             (static_cast<double>(c_in) * static_cast<double>(c_out)));
  return std::max<int64_t>(1, std::llround(k));
}

int64_t count_params(const LayerSpec& layer) {
  require(layer.kind == LayerKind::conv || layer.kind == LayerKind::classifier_head,
          std::string("count_params: ") + to_string(layer.kind) +
              " layers have no trainable kernel");
  return layer.in_channels * layer.out_channels * layer.kernel * layer.kernel;
}

int64_t count_conv_ops(const NetworkSpec& net) {
  int64_t ops = 0;
  for (const LayerSpec& l : net.layers) {
    const bool is_conv =
        l.kind == LayerKind::conv || l.kind == LayerKind::classifier_head;
    if (is_conv && l.kernel > 1) ops += l.in_channels * l.out_channels;
  }
  return ops;
}

namespace {

// Index of the first convolution whose incoming per-map pixel count is at
// most num_classes; falls back to the last convolution of a net that never
// pools that far down. The head sits behind whichever layer wins, so it is
// always rewritten and never scanned itself.
int64_t find_boundary(const NetworkSpec& net) {
  int64_t last_conv = -1;
  for (size_t i = 0; i < net.layers.size(); ++i) {
    const LayerSpec& l = net.layers[i];
    if (l.kind != LayerKind::conv) continue;
    last_conv = static_cast<int64_t>(i);
    if (l.feature_in * l.feature_in <= net.num_classes)
      return static_cast<int64_t>(i);
  }
  require(last_conv >= 0, "to_fatnet: network has no convolutional layers");
  return last_conv;
}

}  // namespace

TransformResult to_fatnet(const NetworkSpec& net, const TransformOptions& options) {
  net.validate();
  require(net.has_classifier_head(),
          "to_fatnet: network must end in a classifier_head");

  const int64_t f = target_resolution(net.num_classes);
  int64_t begin = find_boundary(net);
  // the boundary convolution drags its enclosing block marker along so the
  // rewritten section starts on a block edge
  while (begin > 0 &&
         net.layers[static_cast<size_t>(begin) - 1].kind == LayerKind::residual_begin)
    --begin;

  TransformResult result;
  // idempotent naming: re-transforming an already-suffixed network keeps it
  result.network.name = net.name.empty() ? "fatnet"
                        : net.name.ends_with("-fatnet")
                            ? net.name
                            : net.name + "-fatnet";
  result.network.input_channels = net.input_channels;
  result.network.input_height = net.input_height;
  result.network.input_width = net.input_width;
  result.network.num_classes = net.num_classes;
  result.report.target = f;
  result.report.region_begin = begin;

  for (int64_t i = 0; i < begin; ++i)
    result.network.layers.push_back(net.layers[static_cast<size_t>(i)]);

  // two channel chains run in parallel: raw_ch feeds the pure rule values
  // reported per row, new_ch feeds the emitted layers (cap re-inflation
  // changes the input count of every following row)
  int64_t raw_ch = net.layers[static_cast<size_t>(begin)].in_channels;
  int64_t new_ch = raw_ch;
  int64_t feature = net.layers[static_cast<size_t>(begin)].feature_in;

  for (size_t i = static_cast<size_t>(begin); i < net.layers.size(); ++i) {
    const LayerSpec& l = net.layers[i];
    switch (l.kind) {
      case LayerKind::maxpool2x2:
        continue;  // the deep section never reduces resolution
      case LayerKind::relu:
      case LayerKind::residual_begin:
      case LayerKind::residual_end: {
        LayerSpec m = l;
        m.in_channels = m.out_channels = new_ch;
        m.feature_in = m.feature_out = feature;
        result.network.layers.push_back(m);
        continue;
      }
      case LayerKind::conv:
      case LayerKind::classifier_head:
        break;
    }

    TransformRow row;
    row.original_layer_index = static_cast<int64_t>(i);
    row.is_head = l.kind == LayerKind::classifier_head;
    row.old_in = l.in_channels;
    row.old_out = l.out_channels;
    row.old_kernel = l.kernel;
    row.old_weights = count_params(l);
    row.feature_pixels = l.out_channels * l.feature_out * l.feature_out;

    row.raw_in = raw_ch;
    row.raw_out = row.is_head ? 1 : channels_for(row.feature_pixels, net.num_classes);
    row.raw_kernel = kernel_for(row.old_weights, row.raw_in, row.raw_out);
    if (auto it = options.kernel_override.find(row.original_layer_index);
        it != options.kernel_override.end()) {
      require(it->second >= 1, "to_fatnet: kernel override must be >= 1");
      row.raw_kernel = it->second;
    }

    row.new_in = new_ch;
    row.new_out = row.is_head ? 1 : channels_for(row.feature_pixels, net.num_classes);
    row.new_kernel = kernel_for(row.old_weights, row.new_in, row.new_out);
    if (auto it = options.kernel_override.find(row.original_layer_index);
        it != options.kernel_override.end())
      row.new_kernel = it->second;
    if (row.new_kernel > f) {
      row.capped = true;
      row.new_kernel = f;
      if (!row.is_head)
        row.new_out = std::max<int64_t>(
            1, std::llround(static_cast<double>(row.old_weights) /
                            (static_cast<double>(row.new_in) * static_cast<double>(f) *
                             static_cast<double>(f))));
    }
    row.new_weights = row.new_in * row.new_out * row.new_kernel * row.new_kernel;
    if (row.is_head && row.capped)
      result.report.head_param_loss = row.old_weights - row.new_weights;

    if (l.published_weights && *l.published_weights != row.old_weights) {
      row.diverges_from_published = true;
      row.divergence_note =
          "published weight count " + std::to_string(*l.published_weights) +
          " != in*out*k^2 = " + std::to_string(row.old_weights);
    }
    if (l.published_kernel && *l.published_kernel != row.raw_kernel) {
      row.diverges_from_published = true;
      if (!row.divergence_note.empty()) row.divergence_note += "; ";
      row.divergence_note += "published transformed kernel " +
                             std::to_string(*l.published_kernel) +
                             " != rule value " + std::to_string(row.raw_kernel);
    }

    LayerSpec out;
    out.kind = l.kind;
    out.in_channels = row.new_in;
    out.out_channels = row.new_out;
    out.kernel = row.new_kernel;
    out.feature_in = feature;
    out.feature_out = f;
    result.network.layers.push_back(out);

    raw_ch = row.raw_out;
    new_ch = row.new_out;
    feature = f;
    result.report.any_capped |= row.capped;
    result.report.any_divergence |= row.diverges_from_published;
    result.report.rows.push_back(std::move(row));
  }

  result.network.validate();
  return result;
}

std::string format_report(const TransformReport& report) {
  std::ostringstream os;
  os << "deep section at " << report.target << "x" << report.target
     << ", rewriting starts at layer " << report.region_begin << "\n";
  os << std::left << std::setw(26) << "original" << std::setw(12) << "weights"
     << std::setw(10) << "pixels" << std::setw(22) << "transformed"
     << "flags\n";
  for (const TransformRow& r : report.rows) {
    std::ostringstream oldcol, newcol;
    oldcol << r.old_in << "x" << r.old_out << ",k=" << r.old_kernel
           << (r.is_head ? " (head)" : "");
    newcol << r.new_in << "x" << r.new_out << ",k=" << r.new_kernel;
    os << std::left << std::setw(26) << oldcol.str() << std::setw(12)
       << r.old_weights << std::setw(10) << r.feature_pixels << std::setw(22)
       << newcol.str();
    std::string flags;
    if (r.capped) flags += "capped";
    if (r.diverges_from_published)
      flags += (flags.empty() ? "" : ", ") + std::string("diverges: ") +
               r.divergence_note;
    os << flags << "\n";
  }
  if (report.head_param_loss > 0)
    os << "head parameter loss from the kernel cap: " << report.head_param_loss
       << "\n";
  return os.str();
}

}  // namespace fatnet
