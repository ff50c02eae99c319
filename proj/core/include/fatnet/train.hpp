#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "fatnet/field.hpp"
#include "fatnet/net.hpp"
#include "fatnet/optics.hpp"

namespace fatnet {

enum class Backend { direct, ideal, physical };
const char* to_string(Backend b);
Backend backend_from(const std::string& name);

struct TrainConfig {
  double learning_rate = 0.01;
  double momentum = 0.9;
  int64_t lr_step = 50;   // epochs between learning-rate drops
  double lr_gamma = 0.2;  // multiplicative drop
  double dropout_rate = 0.2;
  int64_t batch_size = 32;
  int64_t epochs = 200;
  uint64_t seed = 0;
  Backend backend = Backend::direct;
  OpticsConfig optics;  // used by the physical backend only

  // learning rate in effect during the given epoch (step schedule)
  double lr_at(int64_t epoch) const;
  void validate() const;
};

// Weights for every conv-like layer of a spec, ordered as the layers appear;
// each tensor is (out_ch, in_ch, k, k).
struct Model {
  NetworkSpec spec;
  std::vector<RealTensor> weights;

  // uniform init in +-sqrt(1 / (in_ch * k^2)), consumed in declaration order
  // so a fixed seed reproduces bit-identical weights everywhere
  static Model init(const NetworkSpec& spec, uint64_t seed);
};

// Everything backward needs, recorded step by step during forward. Conv steps
// store the tensor that was actually convolved (after any seam padding) plus
// the resolution the convolution ran at before any seam crop.
struct TraceStep {
  enum Kind { conv, relu, pool, res_begin, res_end, dropout } kind = conv;
  int64_t layer_index = -1;
  int64_t weight_index = -1;       // conv steps
  int64_t feature_in = 0;          // layer's nominal input resolution
  int64_t ran_at = 0;              // conv executed at this resolution
  int64_t cropped_to = 0;          // output seam crop (0 = none)
  RealTensor input;                // tensor entering the step
  std::vector<int64_t> pool_argmax;  // flat index into each 2x2 window
  RealTensor dropout_mask;         // multiplicative mask (inverted dropout)
};

struct ForwardTrace {
  std::vector<TraceStep> steps;
  RealTensor logits;  // (batch, num_classes)
  bool train_mode = false;
};

// Runs the network on a batch. train_mode enables dropout ahead of the
// classifier head, drawing the mask from dropout_rng (required then). Blocks
// marked shortcut are rejected: the projection weights are metadata only, and
// the residual add is defined for identity skips (equal shapes) alone.
ForwardTrace forward(const Model& model, const RealTensor& x,
                     const TrainConfig& config, bool train_mode,
                     std::mt19937_64* dropout_rng = nullptr);

// Softmax cross-entropy averaged over the batch; grad is d(mean loss)/d(logits).
struct LossGrad {
  double loss = 0.0;
  RealTensor grad;
};
LossGrad softmax_cross_entropy(const RealTensor& logits,
                               const std::vector<int64_t>& labels);
RealTensor softmax(const RealTensor& logits);

// Reverse pass through a recorded trace: analytic convolution gradients
// chained through relu masks, pool routing, residual junctions, and the
// dropout mask. The physical backend reuses these ideal-path gradients
// against its optically computed forward values.
struct Gradients {
  double loss = 0.0;
  std::vector<RealTensor> weight_grads;  // aligned with Model::weights
};
Gradients backward(const Model& model, const ForwardTrace& trace,
                   const std::vector<int64_t>& labels);

// SGD with momentum, v = m*v + g; w -= lr*v.
struct Sgd {
  std::vector<RealTensor> velocity;
  void step(Model& model, const std::vector<RealTensor>& grads, double lr,
            double momentum);
};

// Convenience: backward + SGD step at the schedule's rate for `epoch`.
double backward_and_step(Model& model, Sgd& optimizer, const ForwardTrace& trace,
                         const std::vector<int64_t>& labels,
                         const TrainConfig& config, int64_t epoch);

struct Dataset {
  RealTensor images;  // (n, c, h, w)
  std::vector<int64_t> labels;
};

// The training demo's four-layer classifier: 16 classes read out of a 4x4
// head plane, all deep features at 4x4.
NetworkSpec demo_network();

// Synthetic linearly-nonseparable set: each class has an 8x8 quadrant-sign
// prototype (the 4 low bits of the class pick the quadrant signs); a sample
// is the prototype times a random global sign plus N(0, 0.25^2) noise, so
// class means are zero and no linear readout can separate them.
Dataset demo_dataset(uint64_t seed, int64_t per_class = 32);

struct EpochMetrics {
  double loss = 0.0;      // mean training loss over the epoch
  double accuracy = 0.0;  // training accuracy after the epoch
};

struct TrainHistory {
  std::vector<EpochMetrics> epochs;
  double final_accuracy = 0.0;
  int64_t first_epoch_at_90 = -1;  // 0-based epoch reaching 90%, -1 if never
};

// Trains demo_network on demo_dataset per the config; aborts with
// diagnostics if the loss leaves the reals.
TrainHistory train_demo(const TrainConfig& config);

struct EvalResult {
  double accuracy = 0.0;
  double mean_loss = 0.0;
};
EvalResult evaluate(const Model& model, const Dataset& data,
                    const TrainConfig& config);

// Standard binary image-classification records: one coarse label byte, one
// fine label byte, 32*32*3 pixel bytes. Pixels scale to [0,1]; labels are the
// fine ones. max_records < 0 reads the whole file.
Dataset read_cifar100(const std::string& path, int64_t max_records = -1);

// Optional augmentation for that path: per-image coin-flip horizontal mirror
// and zero-pad-4 random crop. Off unless called.
void augment_flip_crop(RealTensor& images, std::mt19937_64& rng);

// Versioned binary weight dump (magic, spec text, tensor shapes + doubles).
void save_checkpoint(const Model& model, const std::string& path);
Model load_checkpoint(const std::string& path);

}  // namespace fatnet
