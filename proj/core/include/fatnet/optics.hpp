#pragma once

#include <optional>
#include <string>

#include "fatnet/field.hpp"

namespace fatnet {

enum class Precision { float64, float32 };
enum class OpticalBackend { physical, ideal };

/// Geometry and precision of the simulated 4f correlator.
///
/// The pixel pitch is tied to the grid so that one angular-spectrum step of
/// length z = N*dx^2 / lambda equals exactly one focal length: dx =
/// sqrt(f*lambda/N). The grid must be even: the centered lens chirp and the
/// camera derotation are defined about the pixel at N/2, which exists only
/// on even grids (see README).
struct OpticsConfig {
  double wavelength = 532e-9;    ///< meters
  double focal_length = 10e-3;   ///< meters
  double lens_diameter = 5e-3;   ///< meters
  int grid_size = 512;           ///< pixels per side, even, >= 16
  Precision precision = Precision::float64;
  /// Relative RMS error budget of the physical path against the exact
  /// convolution oracle (default 2% at N >= 512; see README).
  double fidelity_bound = 0.02;

  double pixel_scale() const;        ///< sqrt(f*lambda/N)
  bool grid_covers_pupil() const;    ///< N*dx >= lens_diameter
  void validate() const;             ///< throws fatnet::error when invalid
};

/// Warning text when the physical grid extent does not cover the lens pupil
/// (the pupil then never clips the simulated field); nullopt when covered.
std::optional<std::string> config_warning(const OpticsConfig& config);

/// Free-space transfer function H(fx, fy) = exp[j k z - j pi lambda z
/// (fx^2 + fy^2)] on the discrete frequency grid of the config; |H| = 1
/// everywhere. Requires z > 0.
ComplexField free_space_transfer(const OpticsConfig& config, double z);

/// One angular-spectrum step: U2 = ifft2(fft2(U1) * H(z)). Energy Sum|U|^2
/// is conserved to 1e-9 relative. Negative z propagates backwards via the
/// conjugate transfer function; z must be nonzero.
ComplexField propagate(const ComplexField& u, const OpticsConfig& config,
                       double z);

/// Thin-lens transmittance t(x, y) = P(x, y) * exp[-j k/(2f) (x^2 + y^2)]
/// on the spatial grid centered at pixel N/2; P is the binary disk pupil of
/// diameter lens_diameter, exactly 0 outside, unit modulus inside.
ComplexField lens_phase(const OpticsConfig& config);

/// Frequency-domain mask implementing same-padding cross-correlation with
/// `kernel`: the 180-degree-rotated kernel is embedded so its anchor pixel
/// (the correlation center, floor((k-1)/2) before rotation) sits at grid
/// center, zero-padded, and transformed with the centered DFT that the 2f
/// section performs physically. Deterministic for a fixed config.
ComplexField fourier_plane_kernel(const RealTensor& kernel,
                                  const OpticsConfig& config);

/// Scalar g that normalizes the raw 4f pipeline: a unit impulse image run
/// with a unit delta kernel yields peak g. Cached per config; strictly
/// positive; deterministic.
double calibrate_gain(const OpticsConfig& config);

/// Full 4f pass: amplitude-encode -> propagate f -> lens -> propagate f ->
/// Fourier-plane mask -> propagate f -> lens -> propagate f -> camera
/// intensity |U|^2 -> sqrt -> 180-degree derotation -> center crop ->
/// divide by the calibrated gain. Image and kernel must be non-negative
/// (signed operands are handled by optconv) and fit the grid after linear-
/// convolution padding: M + k - 1 <= N. Shapes (1, 1, M, M) and (1, 1, k, k);
/// result approximates the same-padding cross-correlation.
RealTensor conv4f_single(const RealTensor& image, const RealTensor& kernel,
                         const OpticsConfig& config);

/// Multichannel same-padding convolution on the optical backend. Signed
/// kernels are split K = K+ - K- elementwise and the two non-negative passes
/// are subtracted electronically; signed inputs are split the same way, so
/// one (in, out) channel pair costs up to four optical passes. backend ==
/// ideal computes the convolution spectrally without propagation physics
/// (identical to conv2d_fft); backend == physical runs conv4f_single per
/// pass and matches the oracle within config.fidelity_bound. Kernels must
/// not exceed the feature resolution (k <= H).
RealTensor optconv(const RealTensor& input, const RealTensor& kernels,
                   const OpticsConfig& config, OpticalBackend backend);

}  // namespace fatnet
