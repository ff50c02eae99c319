#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "fatnet/error.hpp"
#include "fatnet/train.hpp"

using namespace fatnet;

namespace {

NetworkSpec toy_net() {
  // conv + head over 9 classes read from a 3x3 plane cropped out of 6x6
  return parse_network(
      "fatnet-spec v1\n"
      "name toy\n"
      "input channels=1 height=6 width=6\n"
      "classes 9\n"
      "layer kind=conv in=1 out=2 kernel=3 feature_in=6 feature_out=6\n"
      "layer kind=relu in=2 out=2 feature_in=6 feature_out=6\n"
      "layer kind=classifier_head in=2 out=1 kernel=3 feature_in=6 "
      "feature_out=3\n");
}

NetworkSpec residual_toy_net() {
  return parse_network(
      "fatnet-spec v1\n"
      "name restoy\n"
      "input channels=2 height=8 width=8\n"
      "classes 4\n"
      "layer kind=conv in=2 out=3 kernel=3 feature_in=8 feature_out=8\n"
      "layer kind=relu in=3 out=3 feature_in=8 feature_out=8\n"
      "layer kind=residual_begin in=3 out=3 feature_in=8 feature_out=8\n"
      "layer kind=conv in=3 out=3 kernel=3 feature_in=8 feature_out=8\n"
      "layer kind=relu in=3 out=3 feature_in=8 feature_out=8\n"
      "layer kind=residual_end in=3 out=3 feature_in=8 feature_out=8\n"
      "layer kind=maxpool2x2 in=3 out=3 feature_in=8 feature_out=4\n"
      "layer kind=classifier_head in=3 out=1 kernel=2 feature_in=4 "
      "feature_out=2\n");
}

RealTensor random_input(const NetworkSpec& spec, int64_t batch,
                        uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  RealTensor x = RealTensor::zeros(batch, spec.input_channels,
                                   spec.input_height, spec.input_width);
  for (double& v : x.data) v = u(rng);
  return x;
}

double max_abs_diff(const RealTensor& a, const RealTensor& b) {
  REQUIRE(a.shape == b.shape);
  double m = 0.0;
  for (size_t i = 0; i < a.data.size(); ++i)
    m = std::max(m, std::abs(a.data[i] - b.data[i]));
  return m;
}

}  // namespace

TEST_CASE("config rates are range-checked and the schedule steps down") {
  TrainConfig c;
  c.validate();
  CHECK(c.lr_at(0) == 0.01);
  CHECK(c.lr_at(49) == 0.01);
  CHECK(c.lr_at(50) == doctest::Approx(0.002));
  CHECK(c.lr_at(99) == doctest::Approx(0.002));
  CHECK(c.lr_at(100) == doctest::Approx(0.0004));
  CHECK_THROWS_AS(c.lr_at(-1), fatnet::error);
  TrainConfig bad = c;
  bad.learning_rate = 0.0;
  CHECK_THROWS_AS(bad.validate(), fatnet::error);
  bad = c;
  bad.momentum = 1.0;
  CHECK_THROWS_AS(bad.validate(), fatnet::error);
  bad = c;
  bad.dropout_rate = 1.0;
  CHECK_THROWS_AS(bad.validate(), fatnet::error);
}

TEST_CASE("backend names round-trip") {
  for (Backend b : {Backend::direct, Backend::ideal, Backend::physical})
    CHECK(backend_from(to_string(b)) == b);
  CHECK_THROWS_AS(backend_from("quantum"), fatnet::error);
}

TEST_CASE("weight init is seeded, bounded, and layer-shaped") {
  NetworkSpec spec = toy_net();
  Model a = Model::init(spec, 42);
  Model b = Model::init(spec, 42);
  Model c = Model::init(spec, 43);
  REQUIRE(a.weights.size() == 2);  // conv + head
  CHECK(a.weights[0].shape == std::array<int64_t, 4>{2, 1, 3, 3});
  CHECK(a.weights[1].shape == std::array<int64_t, 4>{1, 2, 3, 3});
  bool identical = true, differs = false;
  for (size_t w = 0; w < a.weights.size(); ++w)
    for (size_t i = 0; i < a.weights[w].data.size(); ++i) {
      identical &= a.weights[w].data[i] == b.weights[w].data[i];
      differs |= a.weights[w].data[i] != c.weights[w].data[i];
    }
  CHECK(identical);
  CHECK(differs);
  const double bound0 = std::sqrt(1.0 / (1 * 9));
  for (double v : a.weights[0].data) CHECK(std::abs(v) <= bound0);
  const double bound1 = std::sqrt(1.0 / (2 * 9));
  for (double v : a.weights[1].data) CHECK(std::abs(v) <= bound1);
}

TEST_CASE("zero weights map any input to zero logits") {
  NetworkSpec spec = toy_net();
  Model m = Model::init(spec, 1);
  for (RealTensor& w : m.weights)
    for (double& v : w.data) v = 0.0;
  TrainConfig cfg;
  ForwardTrace t = forward(m, random_input(spec, 3, 9), cfg, false);
  CHECK(t.logits.shape == std::array<int64_t, 4>{3, 1, 1, 9});
  for (double v : t.logits.data) CHECK(v == 0.0);
}

TEST_CASE("forward rejects a mis-shaped batch") {
  Model m = Model::init(toy_net(), 1);
  TrainConfig cfg;
  RealTensor wrong = RealTensor::zeros(1, 2, 6, 6);  // channels != 1
  CHECK_THROWS_AS(forward(m, wrong, cfg, false), fatnet::error);
}

TEST_CASE("forward refuses projection-shortcut blocks") {
  NetworkSpec spec = parse_network(
      "fatnet-spec v1\n"
      "name proj\n"
      "input channels=2 height=4 width=4\n"
      "classes 4\n"
      "layer kind=residual_begin in=2 out=2 shortcut=1 feature_in=4 "
      "feature_out=4\n"
      "layer kind=conv in=2 out=4 kernel=3 feature_in=4 feature_out=4\n"
      "layer kind=residual_end in=4 out=4 feature_in=4 feature_out=4\n"
      "layer kind=classifier_head in=4 out=1 kernel=2 feature_in=4 "
      "feature_out=2\n");
  Model m = Model::init(spec, 2);
  TrainConfig cfg;
  CHECK_THROWS_AS(forward(m, random_input(spec, 1, 3), cfg, false),
                  fatnet::error);
}

TEST_CASE("an identity block with a zeroed body passes its input through") {
  NetworkSpec spec = residual_toy_net();
  Model m = Model::init(spec, 5);
  for (double& v : m.weights[1].data) v = 0.0;  // the block's conv
  TrainConfig cfg;
  RealTensor x = random_input(spec, 2, 6);
  ForwardTrace with_block = forward(m, x, cfg, false);

  NetworkSpec flat = parse_network(
      "fatnet-spec v1\n"
      "name flat\n"
      "input channels=2 height=8 width=8\n"
      "classes 4\n"
      "layer kind=conv in=2 out=3 kernel=3 feature_in=8 feature_out=8\n"
      "layer kind=relu in=3 out=3 feature_in=8 feature_out=8\n"
      "layer kind=maxpool2x2 in=3 out=3 feature_in=8 feature_out=4\n"
      "layer kind=classifier_head in=3 out=1 kernel=2 feature_in=4 "
      "feature_out=2\n");
  Model flat_m = Model::init(flat, 99);
  flat_m.weights[0] = m.weights[0];
  flat_m.weights[1] = m.weights[2];
  ForwardTrace without = forward(flat_m, x, cfg, false);
  // relu(x) + 0 == x here because the block body contributes nothing and
  // its input is already non-negative after the leading relu
  CHECK(max_abs_diff(with_block.logits, without.logits) < 1e-12);
}

TEST_CASE("direct and ideal backends agree to fft rounding") {
  NetworkSpec spec = toy_net();
  Model m = Model::init(spec, 11);
  RealTensor x = random_input(spec, 4, 12);
  TrainConfig direct_cfg;
  direct_cfg.backend = Backend::direct;
  TrainConfig ideal_cfg;
  ideal_cfg.backend = Backend::ideal;
  ForwardTrace a = forward(m, x, direct_cfg, false);
  ForwardTrace b = forward(m, x, ideal_cfg, false);
  CHECK(max_abs_diff(a.logits, b.logits) < 1e-9);
}

TEST_CASE("physical backend stays within the fidelity bound of direct") {
  NetworkSpec spec = toy_net();
  Model m = Model::init(spec, 13);
  RealTensor x = random_input(spec, 2, 14);
  TrainConfig direct_cfg;
  TrainConfig phys_cfg;
  phys_cfg.backend = Backend::physical;
  phys_cfg.optics.grid_size = 16;
  ForwardTrace a = forward(m, x, direct_cfg, false);
  ForwardTrace b = forward(m, x, phys_cfg, false);
  double num = 0.0, den = 0.0;
  for (size_t i = 0; i < a.logits.data.size(); ++i) {
    const double d = a.logits.data[i] - b.logits.data[i];
    num += d * d;
    den += a.logits.data[i] * a.logits.data[i];
  }
  CHECK(std::sqrt(num / den) < phys_cfg.optics.fidelity_bound);
}

TEST_CASE("softmax rows sum to one and the loss is non-negative") {
  NetworkSpec spec = toy_net();
  Model m = Model::init(spec, 15);
  TrainConfig cfg;
  ForwardTrace t = forward(m, random_input(spec, 5, 16), cfg, false);
  RealTensor p = softmax(t.logits);
  for (int64_t b = 0; b < 5; ++b) {
    double s = 0.0;
    for (int64_t i = 0; i < 9; ++i) s += p.at(b, 0, 0, i);
    CHECK(s == doctest::Approx(1.0).epsilon(1e-9));
  }
  LossGrad lg = softmax_cross_entropy(t.logits, {0, 1, 2, 3, 4});
  CHECK(lg.loss >= 0.0);
  CHECK_THROWS_AS(softmax_cross_entropy(t.logits, {0, 1, 2, 3, 9}),
                  fatnet::error);
  CHECK_THROWS_AS(softmax_cross_entropy(t.logits, {0}), fatnet::error);
}

TEST_CASE("one SGD step on a tiny head matches the hand computation") {
  // head-only net: logits(i,j) = sum_{di,dj} w(di,dj) x(i+di, j+dj)
  NetworkSpec spec = parse_network(
      "fatnet-spec v1\n"
      "name micro\n"
      "input channels=1 height=2 width=2\n"
      "classes 4\n"
      "layer kind=classifier_head in=1 out=1 kernel=2 feature_in=2 "
      "feature_out=2\n");
  Model m = Model::init(spec, 17);
  RealTensor x = RealTensor::zeros(1, 1, 2, 2);
  x.at(0, 0, 0, 0) = 0.3;
  x.at(0, 0, 0, 1) = -0.7;
  x.at(0, 0, 1, 0) = 0.1;
  x.at(0, 0, 1, 1) = 0.9;

  // forward by hand (anchor (0,0), zero padding right/down)
  double logit[2][2];
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) {
      double acc = 0.0;
      for (int di = 0; di < 2; ++di)
        for (int dj = 0; dj < 2; ++dj) {
          const int si = i + di, sj = j + dj;
          if (si < 2 && sj < 2)
            acc += m.weights[0].at(0, 0, di, dj) * x.at(0, 0, si, sj);
        }
      logit[i][j] = acc;
    }
  double mx = logit[0][0];
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) mx = std::max(mx, logit[i][j]);
  double z = 0.0;
  double p[4];
  for (int i = 0; i < 4; ++i) {
    p[i] = std::exp(logit[i / 2][i % 2] - mx);
    z += p[i];
  }
  for (int i = 0; i < 4; ++i) p[i] /= z;
  const int label = 2;
  double glogit[4];
  for (int i = 0; i < 4; ++i) glogit[i] = p[i] - (i == label ? 1.0 : 0.0);
  double gw[2][2];
  for (int di = 0; di < 2; ++di)
    for (int dj = 0; dj < 2; ++dj) {
      double acc = 0.0;
      for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) {
          const int si = i + di, sj = j + dj;
          if (si < 2 && sj < 2)
            acc += glogit[i * 2 + j] * x.at(0, 0, si, sj);
        }
      gw[di][dj] = acc;
    }

  TrainConfig cfg;
  cfg.learning_rate = 0.1;
  cfg.momentum = 0.9;  // first step: velocity starts at zero
  cfg.dropout_rate = 0.0;
  RealTensor w_before = m.weights[0];
  Sgd opt;
  ForwardTrace t = forward(m, x, cfg, true);
  const double loss = backward_and_step(m, opt, t, {label}, cfg, 0);
  CHECK(loss == doctest::Approx(-std::log(p[label])).epsilon(1e-12));
  for (int di = 0; di < 2; ++di)
    for (int dj = 0; dj < 2; ++dj)
      CHECK(m.weights[0].at(0, 0, di, dj) ==
            doctest::Approx(w_before.at(0, 0, di, dj) - 0.1 * gw[di][dj])
                .epsilon(1e-12));
}

TEST_CASE("momentum accumulates across steps") {
  NetworkSpec spec = toy_net();
  Model m = Model::init(spec, 19);
  for (RealTensor& w : m.weights)
    for (double& v : w.data) v = 0.0;
  std::vector<RealTensor> g;
  for (const RealTensor& w : m.weights) {
    RealTensor one = w;
    for (double& v : one.data) v = 1.0;
    g.push_back(one);
  }
  Sgd opt;
  opt.step(m, g, 1.0, 0.9);  // v = 1,   w = -1
  opt.step(m, g, 1.0, 0.9);  // v = 1.9, w = -2.9
  for (const RealTensor& w : m.weights)
    for (double v : w.data) CHECK(v == doctest::Approx(-2.9).epsilon(1e-12));
}

TEST_CASE("whole-network gradient agrees with central finite differences") {
  NetworkSpec spec = residual_toy_net();
  Model m = Model::init(spec, 23);
  TrainConfig cfg;
  cfg.dropout_rate = 0.0;  // keep the train-mode trace deterministic
  RealTensor x = random_input(spec, 2, 24);
  const std::vector<int64_t> labels = {1, 3};
  ForwardTrace t = forward(m, x, cfg, true);
  Gradients g = backward(m, t, labels);

  auto loss_at = [&](const Model& model) {
    ForwardTrace tt = forward(model, x, cfg, true);
    return softmax_cross_entropy(tt.logits, labels).loss;
  };
  std::mt19937_64 rng(25);
  const double h = 1e-5;
  for (int trial = 0; trial < 10; ++trial) {
    const size_t wi = rng() % m.weights.size();
    const size_t pi = rng() % m.weights[wi].data.size();
    Model up = m, dn = m;
    up.weights[wi].data[pi] += h;
    dn.weights[wi].data[pi] -= h;
    const double fd = (loss_at(up) - loss_at(dn)) / (2 * h);
    const double an = g.weight_grads[wi].data[pi];
    CAPTURE(wi);
    CAPTURE(pi);
    CHECK(an == doctest::Approx(fd).epsilon(1e-3));
  }
}

TEST_CASE("backward rejects an eval-mode trace") {
  NetworkSpec spec = toy_net();
  Model m = Model::init(spec, 27);
  TrainConfig cfg;
  ForwardTrace t = forward(m, random_input(spec, 1, 28), cfg, false);
  Sgd opt;
  CHECK_THROWS_AS(backward_and_step(m, opt, t, {0}, cfg, 0), fatnet::error);
}

TEST_CASE("dropout is identity in eval mode and thins train activations") {
  NetworkSpec spec = demo_network();
  Model m = Model::init(spec, 29);
  TrainConfig cfg;  // dropout 0.2
  RealTensor x = random_input(spec, 20, 30);
  ForwardTrace e1 = forward(m, x, cfg, false);
  ForwardTrace e2 = forward(m, x, cfg, false);
  CHECK(max_abs_diff(e1.logits, e2.logits) == 0.0);
  for (const TraceStep& s : e1.steps) CHECK(s.kind != TraceStep::dropout);

  std::mt19937_64 rng(31);
  ForwardTrace t = forward(m, x, cfg, true, &rng);
  const TraceStep* drop = nullptr;
  for (const TraceStep& s : t.steps)
    if (s.kind == TraceStep::dropout) drop = &s;
  REQUIRE(drop != nullptr);
  const int64_t total = drop->dropout_mask.count();
  REQUIRE(total >= 10000);
  int64_t zeros = 0;
  for (double v : drop->dropout_mask.data) {
    if (v == 0.0)
      ++zeros;
    else
      CHECK(v == doctest::Approx(1.25));  // inverted scaling 1/(1-0.2)
  }
  const double want = 0.2 * static_cast<double>(total);
  const double sigma = std::sqrt(static_cast<double>(total) * 0.2 * 0.8);
  CHECK(std::abs(static_cast<double>(zeros) - want) <= 3.0 * sigma);
}

TEST_CASE("the demo dataset is balanced, seeded, and has centered classes") {
  Dataset d = demo_dataset(123);
  CHECK(d.images.shape == std::array<int64_t, 4>{512, 1, 8, 8});
  REQUIRE(d.labels.size() == 512);
  std::array<int, 16> counts{};
  for (int64_t l : d.labels) {
    REQUIRE(l >= 0);
    REQUIRE(l < 16);
    ++counts[static_cast<size_t>(l)];
  }
  for (int c : counts) CHECK(c == 32);

  Dataset again = demo_dataset(123);
  CHECK(max_abs_diff(d.images, again.images) == 0.0);
  CHECK(again.labels == d.labels);

  // the global sign flip zeroes every class mean: no linear separator exists
  double strongest_mean = 0.0, mean_abs = 0.0;
  for (int64_t cls = 0; cls < 16; ++cls) {
    std::array<double, 64> mean{};
    int n = 0;
    for (int64_t s = 0; s < 512; ++s) {
      if (d.labels[static_cast<size_t>(s)] != cls) continue;
      ++n;
      for (int64_t i = 0; i < 64; ++i)
        mean[static_cast<size_t>(i)] += d.images.data[s * 64 + i];
    }
    for (double v : mean)
      strongest_mean = std::max(strongest_mean, std::abs(v / n));
  }
  for (double v : d.images.data) mean_abs += std::abs(v);
  mean_abs /= static_cast<double>(d.images.count());
  CHECK(mean_abs > 0.7);          // per-sample signal is strong...
  CHECK(strongest_mean < 0.45);   // ...but class averages carry none of it
}

TEST_CASE("an untrained model scores at chance with a log(16) loss") {
  TrainConfig cfg;
  Dataset d = demo_dataset(33);
  Model zero = Model::init(demo_network(), 34);
  for (RealTensor& w : zero.weights)
    for (double& v : w.data) v = 0.0;
  EvalResult r = evaluate(zero, d, cfg);
  // all-equal logits: argmax ties resolve to class 0
  CHECK(r.accuracy == doctest::Approx(1.0 / 16).epsilon(1e-12));
  CHECK(r.mean_loss == doctest::Approx(std::log(16.0)).epsilon(1e-9));
  Model fresh = Model::init(demo_network(), 35);
  CHECK(evaluate(fresh, d, cfg).accuracy <= 0.25);
}

TEST_CASE("two demo runs with one seed produce identical histories") {
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.seed = 77;
  TrainHistory a = train_demo(cfg);
  TrainHistory b = train_demo(cfg);
  REQUIRE(a.epochs.size() == 3);
  for (size_t i = 0; i < 3; ++i) {
    CHECK(a.epochs[i].loss == b.epochs[i].loss);
    CHECK(a.epochs[i].accuracy == b.epochs[i].accuracy);
  }
  TrainConfig other = cfg;
  other.seed = 78;
  TrainHistory c = train_demo(other);
  CHECK(a.epochs[0].loss != c.epochs[0].loss);
}

TEST_CASE("demo loss falls and never explodes epoch over epoch") {
  TrainConfig cfg;
  cfg.epochs = 10;
  cfg.seed = 5;
  TrainHistory h = train_demo(cfg);
  REQUIRE(h.epochs.size() == 10);
  CHECK(h.epochs.back().loss < h.epochs.front().loss);
  for (size_t i = 1; i < h.epochs.size(); ++i)
    CHECK(h.epochs[i].loss <= 1.5 * h.epochs[i - 1].loss);
}

TEST_CASE("checkpoints round-trip bitwise and reject corruption") {
  const auto dir = std::filesystem::temp_directory_path();
  const std::string path = (dir / "fatnet_test_ckpt.bin").string();
  Model m = Model::init(toy_net(), 41);
  save_checkpoint(m, path);
  Model back = load_checkpoint(path);
  CHECK(back.spec == m.spec);
  REQUIRE(back.weights.size() == m.weights.size());
  for (size_t w = 0; w < m.weights.size(); ++w)
    CHECK(max_abs_diff(back.weights[w], m.weights[w]) == 0.0);

  // truncate: drop the last 16 bytes
  const auto size = std::filesystem::file_size(path);
  std::filesystem::resize_file(path, size - 16);
  CHECK_THROWS_AS(load_checkpoint(path), fatnet::error);

  std::ofstream bad(path, std::ios::binary | std::ios::trunc);
  bad << "NOTACKPT and then some";
  bad.close();
  CHECK_THROWS_AS(load_checkpoint(path), fatnet::error);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_checkpoint(path), fatnet::error);
}

TEST_CASE("the image reader decodes records, labels, and scaling") {
  const auto dir = std::filesystem::temp_directory_path();
  const std::string path = (dir / "fatnet_test_records.bin").string();
  // 2 records: coarse byte, fine byte, 3072 pixel bytes
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  for (int rec = 0; rec < 2; ++rec) {
    f.put(static_cast<char>(7));            // coarse, ignored
    f.put(static_cast<char>(rec == 0 ? 3 : 99));  // fine label
    for (int i = 0; i < 3072; ++i)
      f.put(static_cast<char>((i + rec) % 256));
  }
  f.close();
  Dataset d = read_cifar100(path);
  CHECK(d.images.shape == std::array<int64_t, 4>{2, 3, 32, 32});
  REQUIRE(d.labels.size() == 2);
  CHECK(d.labels[0] == 3);
  CHECK(d.labels[1] == 99);
  CHECK(d.images.data[0] == doctest::Approx(0.0));
  CHECK(d.images.data[1] == doctest::Approx(1.0 / 255.0));
  CHECK(d.images.data[255] == doctest::Approx(1.0));

  Dataset first = read_cifar100(path, 1);
  CHECK(first.images.batch() == 1);

  std::filesystem::resize_file(path, 3000);  // not a whole record
  CHECK_THROWS_AS(read_cifar100(path), fatnet::error);
  std::filesystem::remove(path);
}

TEST_CASE("augmentation is seeded and keeps shapes and value bounds") {
  Dataset d = demo_dataset(51, 2);  // 32 small images
  RealTensor a = d.images;
  RealTensor b = d.images;
  std::mt19937_64 r1(9), r2(9), r3(10);
  augment_flip_crop(a, r1);
  RealTensor a2 = d.images;
  augment_flip_crop(a2, r2);
  CHECK(max_abs_diff(a, a2) == 0.0);
  augment_flip_crop(b, r3);
  CHECK(a.shape == d.images.shape);
  double lo = 1e300, hi = -1e300;
  for (double v : d.images.data) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  for (double v : a.data) {
    CHECK(v >= std::min(lo, 0.0));
    CHECK(v <= std::max(hi, 0.0));
  }
}
