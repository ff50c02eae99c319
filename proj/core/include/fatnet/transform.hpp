#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "fatnet/net.hpp"

namespace fatnet {

// Smallest F with F*F >= num_classes: the deep feature resolution of the
// transformed network. Class counts that are not perfect squares leave
// F*F - num_classes unused head pixels, which the loss masks out.
int64_t target_resolution(int64_t num_classes);

// Channel count that preserves the total pixel budget of a layer output once
// its feature maps are held at the target resolution: ceil(pixels / classes).
int64_t channels_for(int64_t feature_pixels, int64_t num_classes);

// Kernel side that preserves the per-layer parameter budget at the new
// channel counts: round(sqrt(weights / (c_in * c_out))), at least 1.
int64_t kernel_for(int64_t weights, int64_t c_in, int64_t c_out);

// Trainable parameters of a convolutional layer (bias-free): in*out*k^2.
// Rejects layers that carry no kernel (pooling, activations, markers).
int64_t count_params(const LayerSpec& layer);

// Single-channel 2D convolutions executed in one inference pass: the sum of
// in*out over main-path layers with kernel > 1. A 1x1 head on a 1x1 feature
// map is a plain matrix product and performs no 2D convolution, so it does
// not count; a convolutional head does.
int64_t count_conv_ops(const NetworkSpec& net);

struct TransformOptions {
  // Forces the pre-cap kernel of the row whose original layer index matches,
  // overriding kernel_for. The cap still applies afterwards.
  std::map<int64_t, int64_t> kernel_override;
};

// One deep convolution (or the head) before and after transformation.
// raw_* is the pure rule chain; new_* is the emitted chain after the kernel
// cap, whose re-inflated channel counts feed the following rows.
struct TransformRow {
  int64_t original_layer_index = 0;
  bool is_head = false;

  int64_t old_in = 0, old_out = 0, old_kernel = 0;
  int64_t old_weights = 0;     // count_params of the original layer
  int64_t feature_pixels = 0;  // old_out * old_feature_out^2

  int64_t raw_in = 0, raw_out = 0, raw_kernel = 0;
  int64_t new_in = 0, new_out = 0, new_kernel = 0;
  int64_t new_weights = 0;  // count_params of the emitted layer

  bool capped = false;
  bool diverges_from_published = false;
  std::string divergence_note;
};

struct TransformReport {
  std::vector<TransformRow> rows;  // deep convolutions in order, head last
  int64_t target = 0;              // deep feature resolution F
  int64_t region_begin = 0;        // original layer index where rewriting starts
  int64_t head_param_loss = 0;     // parameters the head cap sacrificed
  bool any_capped = false;
  bool any_divergence = false;
};

struct TransformResult {
  NetworkSpec network;
  TransformReport report;
};

// Rewrites the deep section of a cone-shaped classifier for constant-resolution
// execution. Layers ahead of the first convolution whose per-map pixel count
// is at most num_classes are copied verbatim (the enclosing block marker moves
// with that convolution); deeper convolutions are re-channelled via
// channels_for and re-kernelled via kernel_for, pooling disappears, and the
// dense head becomes a single-channel FxF convolution. Kernels larger than F
// are clamped to F with out_channels re-inflated to round(weights / (in*F^2))
// to keep the parameter budget; the head is never re-inflated (its output must
// stay one channel), so its loss is reported instead.
TransformResult to_fatnet(const NetworkSpec& net,
                          const TransformOptions& options = {});

// Plain-text rendering of the report, one row per transformed layer.
std::string format_report(const TransformReport& report);

}  // namespace fatnet
