#include "fatnet/net.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "fatnet/error.hpp"

namespace fatnet {

// defined in the generated builtin_specs.cpp
const char* builtin_resnet18_spec_text();
const char* builtin_fatnet_spec_text();

const char* to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::conv: return "conv";
    case LayerKind::maxpool2x2: return "maxpool2x2";
    case LayerKind::relu: return "relu";
    case LayerKind::residual_begin: return "residual_begin";
    case LayerKind::residual_end: return "residual_end";
    case LayerKind::classifier_head: return "classifier_head";
  }
  return "?";
}

std::optional<LayerKind> layer_kind_from(const std::string& name) {
  static const std::map<std::string, LayerKind> kinds = {
      {"conv", LayerKind::conv},
      {"maxpool2x2", LayerKind::maxpool2x2},
      {"relu", LayerKind::relu},
      {"residual_begin", LayerKind::residual_begin},
      {"residual_end", LayerKind::residual_end},
      {"classifier_head", LayerKind::classifier_head}};
  auto it = kinds.find(name);
  if (it == kinds.end()) return std::nullopt;
  return it->second;
}

bool NetworkSpec::has_classifier_head() const {
  return !layers.empty() && layers.back().kind == LayerKind::classifier_head;
}

namespace {

int64_t smallest_square_side(int64_t n) {
  int64_t f = static_cast<int64_t>(std::floor(std::sqrt(static_cast<double>(n))));
  while (f * f < n) ++f;
  return f;
}

}  // namespace

void NetworkSpec::validate() const {
  require(input_channels >= 1 && input_height >= 1 && input_width >= 1,
          "NetworkSpec '" + name + "': input dimensions must be >= 1");
  require(input_height == input_width,
          "NetworkSpec '" + name + "': input must be square");
  require(num_classes >= 1, "NetworkSpec '" + name + "': num_classes must be >= 1");
  require(!layers.empty(), "NetworkSpec '" + name + "': no layers");

  int64_t ch = input_channels;
  int64_t feat = input_height;
  int depth = 0;  // residual nesting
  int64_t block_in_ch = 0, block_in_feat = 0;
  bool block_shortcut = false;
  for (size_t i = 0; i < layers.size(); ++i) {
    const LayerSpec& l = layers[i];
    const std::string at =
        "NetworkSpec '" + name + "' layer " + std::to_string(i) + " (" +
        to_string(l.kind) + ")";
    require(l.in_channels == ch,
            at + ": in_channels " + std::to_string(l.in_channels) +
                " does not chain with preceding out_channels " +
                std::to_string(ch));
    require(l.feature_in == feat,
            at + ": feature_in " + std::to_string(l.feature_in) +
                " does not chain with preceding feature_out " +
                std::to_string(feat));
    switch (l.kind) {
      case LayerKind::conv:
      case LayerKind::classifier_head:
        require(l.in_channels >= 1 && l.out_channels >= 1,
                at + ": channel counts must be >= 1");
        // same-padding convs stay well-defined even when the kernel exceeds
        // the feature resolution (deep 3x3 stages run on 2x2 maps); whether a
        // kernel fits an optical grid is checked where the grid is known
        require(l.kernel >= 1, at + ": kernel must be >= 1");
        break;
      case LayerKind::maxpool2x2:
        require(l.out_channels == l.in_channels, at + ": pooling keeps channels");
        require(l.feature_in % 2 == 0, at + ": feature_in must be even");
        require(l.feature_out == l.feature_in / 2,
                at + ": feature_out must be feature_in / 2");
        break;
      case LayerKind::relu:
        require(l.out_channels == l.in_channels && l.feature_out == l.feature_in,
                at + ": activation must preserve shape");
        break;
      case LayerKind::residual_begin:
        require(l.out_channels == l.in_channels && l.feature_out == l.feature_in,
                at + ": marker must preserve shape");
        require(depth == 0, at + ": nested residual blocks are not supported");
        depth = 1;
        block_in_ch = l.in_channels;
        block_in_feat = l.feature_in;
        block_shortcut = l.shortcut;
        break;
      case LayerKind::residual_end:
        require(l.out_channels == l.in_channels && l.feature_out == l.feature_in,
                at + ": marker must preserve shape");
        require(depth == 1, at + ": residual_end without residual_begin");
        depth = 0;
        // identity skip paths demand equal shapes on both branches;
        // projection blocks are exempt (the projection is metadata only)
        if (!block_shortcut)
          require(l.out_channels == block_in_ch && l.feature_out == block_in_feat,
                  at + ": identity residual block changes shape (" +
                      std::to_string(block_in_ch) + "@" +
                      std::to_string(block_in_feat) + " -> " +
                      std::to_string(l.out_channels) + "@" +
                      std::to_string(l.feature_out) +
                      "); mark the block shortcut=1 or fix the body");
        break;
    }
    if (l.kind == LayerKind::classifier_head) {
      require(i + 1 == layers.size(),
              at + ": classifier_head must be the final layer");
      const int64_t elements = l.out_channels * l.feature_out * l.feature_out;
      const int64_t padded =
          smallest_square_side(num_classes) * smallest_square_side(num_classes);
      require(elements == num_classes ||
                  (l.out_channels == 1 && elements == padded),
              at + ": head emits " + std::to_string(elements) +
                  " elements for " + std::to_string(num_classes) + " classes");
    }
    ch = l.out_channels;
    feat = l.feature_out;
  }
  require(depth == 0,
          "NetworkSpec '" + name + "': unterminated residual block");
}

namespace {

struct Diag {
  int line;
  std::string text;
};

[[noreturn]] void parse_fail(int line, const std::string& msg) {
  fail("network spec line " + std::to_string(line) + ": " + msg);
}

int64_t parse_count(const std::string& value, int line, const std::string& key) {
  try {
    size_t used = 0;
    const long long v = std::stoll(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return static_cast<int64_t>(v);
  } catch (const std::exception&) {
    parse_fail(line, "field '" + key + "': expected an integer, got '" + value + "'");
  }
}

std::vector<std::pair<std::string, std::string>> split_fields(
    std::istringstream& rest, int line) {
  std::vector<std::pair<std::string, std::string>> fields;
  std::string tok;
  while (rest >> tok) {
    const size_t eq = tok.find('=');
    if (eq == std::string::npos)
      parse_fail(line, "expected key=value, got '" + tok + "'");
    fields.emplace_back(tok.substr(0, eq), tok.substr(eq + 1));
  }
  return fields;
}

}  // namespace

NetworkSpec parse_network(const std::string& text) {
  NetworkSpec net;
  std::istringstream in(text);
  std::string raw;
  int line = 0;
  bool saw_header = false, saw_input = false, saw_classes = false;
  while (std::getline(in, raw)) {
    ++line;
    std::string s = raw;
    if (const size_t h = s.find('#'); h != std::string::npos) s.resize(h);
    std::istringstream ls(s);
    std::string word;
    if (!(ls >> word)) continue;
    if (!saw_header) {
      std::string version;
      if (word != "fatnet-spec" || !(ls >> version) || version != "v1")
        parse_fail(line, "expected header 'fatnet-spec v1'");
      saw_header = true;
      continue;
    }
    if (word == "name") {
      std::string rest;
      std::getline(ls, rest);
      const size_t b = rest.find_first_not_of(" \t");
      net.name = b == std::string::npos ? "" : rest.substr(b);
      continue;
    }
    if (word == "input") {
      for (auto& [key, value] : split_fields(ls, line)) {
        if (key == "channels") net.input_channels = parse_count(value, line, key);
        else if (key == "height") net.input_height = parse_count(value, line, key);
        else if (key == "width") net.input_width = parse_count(value, line, key);
        else parse_fail(line, "unknown input field '" + key + "'");
      }
      saw_input = true;
      continue;
    }
    if (word == "classes") {
      std::string v;
      if (!(ls >> v)) parse_fail(line, "classes needs a value");
      net.num_classes = parse_count(v, line, "classes");
      saw_classes = true;
      continue;
    }
    if (word == "layer") {
      LayerSpec l;
      bool saw_kind = false;
      for (auto& [key, value] : split_fields(ls, line)) {
        if (key == "kind") {
          const auto k = layer_kind_from(value);
          if (!k) parse_fail(line, "unknown layer kind '" + value + "'");
          l.kind = *k;
          saw_kind = true;
        } else if (key == "in") {
          l.in_channels = parse_count(value, line, key);
        } else if (key == "out") {
          l.out_channels = parse_count(value, line, key);
        } else if (key == "kernel") {
          l.kernel = parse_count(value, line, key);
        } else if (key == "feature_in") {
          l.feature_in = parse_count(value, line, key);
        } else if (key == "feature_out") {
          l.feature_out = parse_count(value, line, key);
        } else if (key == "shortcut") {
          l.shortcut = parse_count(value, line, key) != 0;
        } else if (key == "published_weights") {
          l.published_weights = parse_count(value, line, key);
        } else if (key == "published_kernel") {
          l.published_kernel = parse_count(value, line, key);
        } else if (key == "stride") {
          parse_fail(line,
                     "field 'stride' is not supported: 4f convolutions are "
                     "stride-free; use maxpool2x2 layers for downsampling");
        } else {
          parse_fail(line, "unknown layer field '" + key + "'");
        }
      }
      if (!saw_kind) parse_fail(line, "layer line needs kind=");
      net.layers.push_back(l);
      continue;
    }
    parse_fail(line, "unknown directive '" + word + "'");
  }
  require(saw_header, "network spec: missing 'fatnet-spec v1' header");
  if (!saw_input) fail("network spec: missing 'input' line");
  if (!saw_classes) fail("network spec: missing 'classes' line");
  net.validate();
  return net;
}

NetworkSpec load_network(const std::string& path) {
  std::ifstream f(path);
  require(f.good(), "load_network: cannot open '" + path + "'");
  std::ostringstream body;
  body << f.rdbuf();
  return parse_network(body.str());
}

std::string serialize_network(const NetworkSpec& net) {
  net.validate();
  std::ostringstream os;
  os << "fatnet-spec v1\n";
  if (!net.name.empty()) os << "name " << net.name << "\n";
  os << "input channels=" << net.input_channels << " height=" << net.input_height
     << " width=" << net.input_width << "\n";
  os << "classes " << net.num_classes << "\n";
  for (const LayerSpec& l : net.layers) {
    os << "layer kind=" << to_string(l.kind) << " in=" << l.in_channels
       << " out=" << l.out_channels;
    if (l.kind == LayerKind::conv || l.kind == LayerKind::classifier_head)
      os << " kernel=" << l.kernel;
    os << " feature_in=" << l.feature_in << " feature_out=" << l.feature_out;
    if (l.shortcut) os << " shortcut=1";
    if (l.published_weights) os << " published_weights=" << *l.published_weights;
    if (l.published_kernel) os << " published_kernel=" << *l.published_kernel;
    os << "\n";
  }
  return os.str();
}

void save_network(const NetworkSpec& net, const std::string& path) {
  std::ofstream f(path);
  require(f.good(), "save_network: cannot open '" + path + "' for writing");
  f << serialize_network(net);
  require(f.good(), "save_network: write to '" + path + "' failed");
}

NetworkSpec resnet18_cifar100() {
  static const NetworkSpec net = [] {
    NetworkSpec n = parse_network(builtin_resnet18_spec_text());
    return n;
  }();
  return net;
}

NetworkSpec fatnet_published() {
  static const NetworkSpec net = [] {
    NetworkSpec n = parse_network(builtin_fatnet_spec_text());
    return n;
  }();
  return net;
}

}  // namespace fatnet
