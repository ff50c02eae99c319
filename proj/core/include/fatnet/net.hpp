#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace fatnet {

enum class LayerKind {
  conv,
  maxpool2x2,
  relu,
  residual_begin,
  residual_end,
  classifier_head
};

const char* to_string(LayerKind kind);
std::optional<LayerKind> layer_kind_from(const std::string& name);

/// One architecture element. Every layer carries its channel counts and its
/// square feature resolutions (pixels per side) so adjacent layers can be
/// chain-checked. All convolutions are same-padding, stride 1; a conv whose
/// feature_out differs from feature_in is center-padded (growing) before the
/// convolution or center-cropped (shrinking) after it.
struct LayerSpec {
  LayerKind kind = LayerKind::conv;
  int64_t in_channels = 0;
  int64_t out_channels = 0;
  int64_t kernel = 0;       ///< side length; conv and classifier_head only
  int64_t feature_in = 0;   ///< input pixels per side
  int64_t feature_out = 0;  ///< output pixels per side
  /// residual_begin metadata: the original network used a projection on the
  /// skip path. Projection shortcuts are bookkeeping only; they are excluded
  /// from operation counts and refused by the training harness.
  bool shortcut = false;
  /// Published-table annotations. When present, the transformation report
  /// flags any computed value that differs from them.
  std::optional<int64_t> published_weights;
  std::optional<int64_t> published_kernel;

  bool operator==(const LayerSpec&) const = default;
};

/// Ordered architecture description. Invariants enforced by validate():
/// square input, adjacent layers chain (channels and feature resolutions),
/// pools halve even resolutions, the classifier head comes last and its
/// output element count equals num_classes (or, for a padded square head,
/// the smallest square holding num_classes).
struct NetworkSpec {
  std::string name;
  int64_t input_channels = 0;
  int64_t input_height = 0;
  int64_t input_width = 0;
  int64_t num_classes = 0;
  std::vector<LayerSpec> layers;

  bool operator==(const NetworkSpec&) const = default;

  bool has_classifier_head() const;
  void validate() const;
};

/// Parse the line-based network spec format (schema in README):
///   fatnet-spec v1
///   name <text>
///   input channels=C height=H width=W
///   classes <n>
///   layer kind=<kind> in=.. out=.. kernel=.. feature_in=.. feature_out=..
/// Unknown keys are rejected with a line/field diagnostic; a stride key is
/// rejected explicitly since 4f convolutions are stride-free.
NetworkSpec parse_network(const std::string& text);
NetworkSpec load_network(const std::string& path);

/// Canonical text form; parse_network(serialize_network(n)) == n.
std::string serialize_network(const NetworkSpec& net);
void save_network(const NetworkSpec& net, const std::string& path);

/// Stride-free ResNet-18 classifier for 32x32 inputs and 100 classes:
/// 3x3 stem, 2x2 max-pooling between stages instead of strides, identity
/// and projection residual blocks, dense 512->100 head. Deep rows carry
/// published-table annotations.
NetworkSpec resnet18_cifar100();

/// The wide-resolution counterpart of resnet18_cifar100(), loaded from the
/// shipped spec file (data/fatnet_cifar100.net) so its channel plan can be
/// corrected without code changes. The shipped plan is the reconstruction
/// produced by to_fatnet(resnet18_cifar100()); see README for provenance.
NetworkSpec fatnet_published();

}  // namespace fatnet
