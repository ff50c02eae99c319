#pragma once

#include <array>
#include <complex>
#include <cstdint>
#include <vector>

namespace fatnet {

using cplx = std::complex<double>;

/// Square grid of complex light amplitudes with a physical pixel pitch.
/// Invariants: size >= 2, pixel_scale > 0 and finite, every amplitude finite.
struct ComplexField {
  int size = 0;             ///< pixels per side
  double pixel_scale = 0;   ///< meters per pixel
  std::vector<cplx> data;   ///< row-major size*size amplitudes

  static ComplexField zeros(int size, double pixel_scale);

  cplx& at(int r, int c) { return data[static_cast<size_t>(r) * size + c]; }
  const cplx& at(int r, int c) const {
    return data[static_cast<size_t>(r) * size + c];
  }

  /// Enforce the type invariants; throws fatnet::error naming `who`.
  void validate(const char* who) const;
};

/// Real (batch, channels, height, width) tensor, row-major.
/// Invariants: element count equals the shape product, all values finite.
struct RealTensor {
  std::array<int64_t, 4> shape{0, 0, 0, 0};
  std::vector<double> data;

  static RealTensor zeros(int64_t b, int64_t c, int64_t h, int64_t w);
  /// Single spatial plane (1, 1, h, w); convenient for images and kernels.
  static RealTensor plane(int64_t h, int64_t w);

  int64_t count() const {
    return shape[0] * shape[1] * shape[2] * shape[3];
  }
  int64_t batch() const { return shape[0]; }
  int64_t channels() const { return shape[1]; }
  int64_t height() const { return shape[2]; }
  int64_t width() const { return shape[3]; }

  double& at(int64_t b, int64_t c, int64_t h, int64_t w) {
    return data[((b * shape[1] + c) * shape[2] + h) * shape[3] + w];
  }
  double at(int64_t b, int64_t c, int64_t h, int64_t w) const {
    return data[((b * shape[1] + c) * shape[2] + h) * shape[3] + w];
  }

  void validate(const char* who) const;
};

/// Forward 2D DFT, unscaled; the inverse applies the 1/N^2 factor, so
/// ifft2(fft2(u)) == u to better than 1e-12 relative at 64-bit.
/// Rejects non-finite input with a diagnostic.
ComplexField fft2(const ComplexField& u);
ComplexField ifft2(const ComplexField& u);

/// Move the zero-frequency bin to the grid center (fftshift) and back
/// (ifftshift); exact inverse pair for every size, including odd.
ComplexField fftshift(const ComplexField& u);
ComplexField ifftshift(const ComplexField& u);

/// Zero-pad (or crop) each spatial plane symmetrically about its center;
/// a one-pixel remainder goes to the bottom/right. Padding to smaller
/// dims or cropping to larger dims is rejected.
RealTensor pad_center(const RealTensor& t, int64_t new_h, int64_t new_w);
RealTensor crop_center(const RealTensor& t, int64_t new_h, int64_t new_w);

/// Reverse both spatial axes of every (height, width) plane; involution.
RealTensor rotate180(const RealTensor& t);

}  // namespace fatnet
