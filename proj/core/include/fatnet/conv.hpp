#pragma once

#include "fatnet/field.hpp"

namespace fatnet {

/// Same-padding cross-correlation in the deep-learning convention, stride 1.
/// input (batch, in_ch, H, W), kernels (out_ch, in_ch, k, k) -> output
/// (batch, out_ch, H, W), summed over in_ch. Even kernels pad one extra
/// pixel on the bottom/right. Naive nested-loop reference implementation.
RealTensor conv2d_direct(const RealTensor& input, const RealTensor& kernels);

/// Identical contract to conv2d_direct, computed spectrally: both operands
/// zero-padded to (H+k-1, W+k-1) per side so the product is a linear (not
/// circular) convolution, then inverse-transformed and center-extracted.
/// Max abs deviation from conv2d_direct < 1e-9 on unit-bounded inputs.
RealTensor conv2d_fft(const RealTensor& input, const RealTensor& kernels);

/// Reverse-mode partial of the same-padding cross-correlation with respect
/// to the input: full correlation of grad_out with the 180-degree-rotated,
/// channel-transposed kernels. grad_out (batch, out_ch, H, W) -> (batch,
/// in_ch, H, W).
RealTensor conv2d_grad_input(const RealTensor& grad_out,
                             const RealTensor& kernels);

/// Reverse-mode partial with respect to the kernels: windowed correlation
/// of the forward input with grad_out. The kernel side length k cannot be
/// recovered from the other shapes, so it is passed explicitly.
RealTensor conv2d_grad_kernel(const RealTensor& grad_out,
                              const RealTensor& input, int64_t k);

}  // namespace fatnet
