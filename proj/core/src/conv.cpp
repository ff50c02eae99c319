#include "fatnet/conv.hpp"

#include <string>

#include "fatnet/error.hpp"

namespace fatnet {

namespace {

void check_conv_shapes(const RealTensor& input, const RealTensor& kernels,
                       const char* who) {
  input.validate(who);
  kernels.validate(who);
  require(kernels.shape[1] == input.shape[1],
          std::string(who) + ": kernel in_channels (" +
              std::to_string(kernels.shape[1]) + ") != input channels (" +
              std::to_string(input.shape[1]) + ")");
  require(kernels.height() == kernels.width(),
          std::string(who) + ": kernels must be square");
  require(kernels.height() >= 1, std::string(who) + ": kernel side must be >= 1");
}

}  // namespace

RealTensor conv2d_direct(const RealTensor& input, const RealTensor& kernels) {
  check_conv_shapes(input, kernels, "conv2d_direct");
  const int64_t B = input.batch(), Cin = input.channels();
  const int64_t H = input.height(), W = input.width();
  const int64_t Cout = kernels.batch(), k = kernels.height();
  const int64_t pt = (k - 1) / 2;  // extra padding goes to the bottom/right
  RealTensor out = RealTensor::zeros(B, Cout, H, W);
  for (int64_t b = 0; b < B; ++b)
    for (int64_t co = 0; co < Cout; ++co)
      for (int64_t i = 0; i < H; ++i)
        for (int64_t j = 0; j < W; ++j) {
          double acc = 0.0;
          for (int64_t ci = 0; ci < Cin; ++ci)
            for (int64_t u = 0; u < k; ++u) {
              const int64_t ii = i + u - pt;
              if (ii < 0 || ii >= H) continue;
              for (int64_t v = 0; v < k; ++v) {
                const int64_t jj = j + v - pt;
                if (jj < 0 || jj >= W) continue;
                acc += input.at(b, ci, ii, jj) * kernels.at(co, ci, u, v);
              }
            }
          out.at(b, co, i, j) = acc;
        }
  return out;
}

RealTensor conv2d_fft(const RealTensor& input, const RealTensor& kernels) {
  check_conv_shapes(input, kernels, "conv2d_fft");
  const int64_t B = input.batch(), Cin = input.channels();
  const int64_t H = input.height(), W = input.width();
  const int64_t Cout = kernels.batch(), k = kernels.height();
  const int64_t pt = (k - 1) / 2;
  // linear-convolution length per side; circular wrap would corrupt edges
  const int Lh = static_cast<int>(H + k - 1);
  const int Lw = static_cast<int>(W + k - 1);
  const int L = std::max(std::max(Lh, Lw), 2);

  auto embed = [&](const RealTensor& t, int64_t a, int64_t c,
                   bool flip) {
    ComplexField f = ComplexField::zeros(L, 1.0);
    const int64_t h = t.height(), w = t.width();
    for (int64_t i = 0; i < h; ++i)
      for (int64_t j = 0; j < w; ++j) {
        const double v = t.at(a, c, i, j);
        if (flip)
          f.at(static_cast<int>(h - 1 - i), static_cast<int>(w - 1 - j)) = v;
        else
          f.at(static_cast<int>(i), static_cast<int>(j)) = v;
      }
    return f;
  };

  // spectra of the 180-degree-rotated kernels: correlation = convolution
  // with the flipped kernel
  std::vector<ComplexField> kspec;
  kspec.reserve(static_cast<size_t>(Cout * Cin));
  for (int64_t co = 0; co < Cout; ++co)
    for (int64_t ci = 0; ci < Cin; ++ci)
      kspec.push_back(fft2(embed(kernels, co, ci, /*flip=*/true)));

  RealTensor out = RealTensor::zeros(B, Cout, H, W);
  for (int64_t b = 0; b < B; ++b) {
    std::vector<ComplexField> xspec;
    xspec.reserve(static_cast<size_t>(Cin));
    for (int64_t ci = 0; ci < Cin; ++ci)
      xspec.push_back(fft2(embed(input, b, ci, /*flip=*/false)));
    for (int64_t co = 0; co < Cout; ++co) {
      ComplexField acc = ComplexField::zeros(L, 1.0);
      for (int64_t ci = 0; ci < Cin; ++ci) {
        const ComplexField& xs = xspec[static_cast<size_t>(ci)];
        const ComplexField& ks = kspec[static_cast<size_t>(co * Cin + ci)];
        for (size_t n = 0; n < acc.data.size(); ++n)
          acc.data[n] += xs.data[n] * ks.data[n];
      }
      const ComplexField full = ifft2(acc);
      // the same-padding window of the full linear convolution starts at
      // k-1-pt (the bottom/right padding amount)
      const int64_t lead = k - 1 - pt;
      for (int64_t i = 0; i < H; ++i)
        for (int64_t j = 0; j < W; ++j)
          out.at(b, co, i, j) =
              full.at(static_cast<int>(i + lead), static_cast<int>(j + lead))
                  .real();
    }
  }
  return out;
}

RealTensor conv2d_grad_input(const RealTensor& grad_out,
                             const RealTensor& kernels) {
  grad_out.validate("conv2d_grad_input");
  kernels.validate("conv2d_grad_input");
  require(grad_out.channels() == kernels.batch(),
          "conv2d_grad_input: grad_out channels != kernel out_channels");
  require(kernels.height() == kernels.width(),
          "conv2d_grad_input: kernels must be square");
  const int64_t B = grad_out.batch(), Cout = grad_out.channels();
  const int64_t H = grad_out.height(), W = grad_out.width();
  const int64_t Cin = kernels.channels(), k = kernels.height();
  const int64_t pt = (k - 1) / 2;
  RealTensor out = RealTensor::zeros(B, Cin, H, W);
  // transpose of the forward accumulation: x(i+u-pt) receives K(u)*g(i)
  for (int64_t b = 0; b < B; ++b)
    for (int64_t ci = 0; ci < Cin; ++ci)
      for (int64_t i = 0; i < H; ++i)
        for (int64_t j = 0; j < W; ++j) {
          double acc = 0.0;
          for (int64_t co = 0; co < Cout; ++co)
            for (int64_t u = 0; u < k; ++u) {
              const int64_t gi = i - u + pt;
              if (gi < 0 || gi >= H) continue;
              for (int64_t v = 0; v < k; ++v) {
                const int64_t gj = j - v + pt;
                if (gj < 0 || gj >= W) continue;
                acc += grad_out.at(b, co, gi, gj) * kernels.at(co, ci, u, v);
              }
            }
          out.at(b, ci, i, j) = acc;
        }
  return out;
}

RealTensor conv2d_grad_kernel(const RealTensor& grad_out,
                              const RealTensor& input, int64_t k) {
  grad_out.validate("conv2d_grad_kernel");
  input.validate("conv2d_grad_kernel");
  require(k >= 1, "conv2d_grad_kernel: kernel side must be >= 1");
  require(grad_out.batch() == input.batch(),
          "conv2d_grad_kernel: batch mismatch");
  require(grad_out.height() == input.height() &&
              grad_out.width() == input.width(),
          "conv2d_grad_kernel: spatial shape mismatch");
  const int64_t B = input.batch(), Cin = input.channels();
  const int64_t H = input.height(), W = input.width();
  const int64_t Cout = grad_out.channels();
  const int64_t pt = (k - 1) / 2;
  RealTensor out = RealTensor::zeros(Cout, Cin, k, k);
  for (int64_t co = 0; co < Cout; ++co)
    for (int64_t ci = 0; ci < Cin; ++ci)
      for (int64_t u = 0; u < k; ++u)
        for (int64_t v = 0; v < k; ++v) {
          double acc = 0.0;
          for (int64_t b = 0; b < B; ++b)
            for (int64_t i = 0; i < H; ++i) {
              const int64_t ii = i + u - pt;
              if (ii < 0 || ii >= H) continue;
              for (int64_t j = 0; j < W; ++j) {
                const int64_t jj = j + v - pt;
                if (jj < 0 || jj >= W) continue;
                acc += grad_out.at(b, co, i, j) * input.at(b, ci, ii, jj);
              }
            }
          out.at(co, ci, u, v) = acc;
        }
  return out;
}

}  // namespace fatnet
