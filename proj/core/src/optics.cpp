#include "fatnet/optics.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <sstream>
#include <tuple>

#include "fatnet/conv.hpp"
#include "fatnet/error.hpp"

namespace fatnet {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Storage rounding of the 32-bit mode: values pass through float at every
// pipeline stage while transforms run in double (see README).
void quantize(ComplexField& u, Precision p) {
  if (p == Precision::float64) return;
  for (cplx& v : u.data)
    v = cplx(static_cast<float>(v.real()), static_cast<float>(v.imag()));
}

// 180-degree rotation about the grid center pixel (N/2, N/2): circular
// index negation r -> (N - r) mod N. Plain axis reversal would rotate about
// the half-pixel point (N-1)/2 and land one pixel off on even grids.
ComplexField derotate(const ComplexField& u) {
  const int n = u.size;
  ComplexField out = u;
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c)
      out.at((n - r) % n, (n - c) % n) = u.at(r, c);
  return out;
}

ComplexField embed_plane(const RealTensor& t, const OpticsConfig& config) {
  const int n = config.grid_size;
  const int64_t h = t.height(), w = t.width();
  // same placement rule as pad_center: offset floor(diff/2)
  const int64_t oh = (n - h) / 2, ow = (n - w) / 2;
  ComplexField f = ComplexField::zeros(n, config.pixel_scale());
  for (int64_t i = 0; i < h; ++i)
    for (int64_t j = 0; j < w; ++j)
      f.at(static_cast<int>(i + oh), static_cast<int>(j + ow)) =
          t.at(0, 0, i, j);
  return f;
}

void check_single_plane(const RealTensor& t, const char* who) {
  t.validate(who);
  require(t.batch() == 1 && t.channels() == 1,
          std::string(who) + ": expected a single (1, 1, h, w) plane");
  require(t.height() == t.width(),
          std::string(who) + ": expected a square plane");
}

// The transfer function and lens phase depend only on the config (and the
// hop distance), not on the data passing through, so the per-pair loops in
// optconv reuse them instead of re-evaluating N^2 complex exponentials per
// call. Map nodes are stable; references stay valid across later inserts.
const ComplexField& cached_transfer(const OpticsConfig& config, double z) {
  using Key = std::tuple<double, double, int, double>;
  static std::mutex mu;
  static std::map<Key, ComplexField> cache;
  const Key key{config.wavelength, config.focal_length, config.grid_size, z};
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(key);
  if (it == cache.end())
    it = cache.emplace(key, free_space_transfer(config, z)).first;
  return it->second;
}

const ComplexField& cached_lens(const OpticsConfig& config) {
  using Key = std::tuple<double, double, double, int>;
  static std::mutex mu;
  static std::map<Key, ComplexField> cache;
  const Key key{config.wavelength, config.focal_length, config.lens_diameter,
                config.grid_size};
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(key);
  if (it == cache.end()) it = cache.emplace(key, lens_phase(config)).first;
  return it->second;
}

// image plane -> lens -> Fourier (or Fourier -> lens -> image) section
ComplexField two_f_section(const ComplexField& u, const ComplexField& lens,
                           const OpticsConfig& config) {
  ComplexField v = propagate(u, config, config.focal_length);
  quantize(v, config.precision);
  for (size_t i = 0; i < v.data.size(); ++i) v.data[i] *= lens.data[i];
  quantize(v, config.precision);
  v = propagate(v, config, config.focal_length);
  quantize(v, config.precision);
  return v;
}

// uncalibrated pipeline shared by conv4f_single and calibrate_gain
RealTensor conv4f_raw(const RealTensor& image, const RealTensor& kernel,
                      const OpticsConfig& config) {
  const int64_t m = image.height(), k = kernel.height();
  require(k <= config.grid_size,
          "conv4f_single: kernel larger than the grid");
  require(m + k - 1 <= config.grid_size,
          "conv4f_single: image plus kernel padding (" +
              std::to_string(m + k - 1) + ") exceeds grid size " +
              std::to_string(config.grid_size));
  for (double v : image.data)
    require(v >= 0.0, "conv4f_single: negative image value");
  for (double v : kernel.data)
    require(v >= 0.0, "conv4f_single: negative kernel value");

  ComplexField u = embed_plane(image, config);
  quantize(u, config.precision);
  const ComplexField& lens = cached_lens(config);
  const ComplexField mask = fourier_plane_kernel(kernel, config);

  u = two_f_section(u, lens, config);          // input -> Fourier plane
  for (size_t i = 0; i < u.data.size(); ++i) u.data[i] *= mask.data[i];
  quantize(u, config.precision);
  u = two_f_section(u, lens, config);          // Fourier plane -> camera

  // camera records intensity; both operands are non-negative so the
  // convolution amplitude is recovered as the square root
  const int n = config.grid_size;
  ComplexField amp = ComplexField::zeros(n, u.pixel_scale);
  for (size_t i = 0; i < u.data.size(); ++i)
    amp.data[i] = std::sqrt(std::norm(u.data[i]));
  amp = derotate(amp);

  RealTensor full = RealTensor::plane(n, n);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) full.at(0, 0, r, c) = amp.at(r, c).real();
  return crop_center(full, m, m);
}

}  // namespace

double OpticsConfig::pixel_scale() const {
  return std::sqrt(focal_length * wavelength / grid_size);
}

bool OpticsConfig::grid_covers_pupil() const {
  return grid_size * pixel_scale() >= lens_diameter;
}

void OpticsConfig::validate() const {
  require(std::isfinite(wavelength) && wavelength > 0,
          "OpticsConfig: wavelength must be positive");
  require(std::isfinite(focal_length) && focal_length > 0,
          "OpticsConfig: focal_length must be positive");
  require(std::isfinite(lens_diameter) && lens_diameter > 0,
          "OpticsConfig: lens_diameter must be positive");
  require(grid_size >= 16, "OpticsConfig: grid_size must be >= 16");
  require(grid_size % 2 == 0, "OpticsConfig: grid_size must be even");
  require(std::isfinite(fidelity_bound) && fidelity_bound > 0,
          "OpticsConfig: fidelity_bound must be positive");
}

std::optional<std::string> config_warning(const OpticsConfig& config) {
  config.validate();
  if (config.grid_covers_pupil()) return std::nullopt;
  std::ostringstream os;
  os << "grid extent " << config.grid_size * config.pixel_scale() * 1e3
     << " mm does not cover the lens pupil (" << config.lens_diameter * 1e3
     << " mm); the pupil never clips the simulated field";
  return os.str();
}

ComplexField free_space_transfer(const OpticsConfig& config, double z) {
  config.validate();
  require(std::isfinite(z) && z > 0,
          "free_space_transfer: propagation distance must be positive");
  const int n = config.grid_size;
  const double dx = config.pixel_scale();
  const double k = 2.0 * kPi / config.wavelength;
  ComplexField h = ComplexField::zeros(n, dx);
  // frequency grid in DFT bin order: f_i = i/(N dx) for i < N/2, negative
  // alias above
  auto freq = [&](int i) {
    const int signed_i = i < (n + 1) / 2 ? i : i - n;
    return signed_i / (n * dx);
  };
  for (int r = 0; r < n; ++r) {
    const double fr = freq(r);
    for (int c = 0; c < n; ++c) {
      const double fc = freq(c);
      const double phase =
          k * z - kPi * config.wavelength * z * (fr * fr + fc * fc);
      h.at(r, c) = std::polar(1.0, phase);
    }
  }
  return h;
}

ComplexField propagate(const ComplexField& u, const OpticsConfig& config,
                       double z) {
  u.validate("propagate");
  require(u.size == config.grid_size,
          "propagate: field size does not match config grid");
  require(std::isfinite(z) && z != 0.0,
          "propagate: propagation distance must be nonzero");
  const ComplexField& h = cached_transfer(config, std::abs(z));
  ComplexField spec = fft2(u);
  if (z > 0)
    for (size_t i = 0; i < spec.data.size(); ++i) spec.data[i] *= h.data[i];
  else  // reverse propagation: conjugate transfer undoes the forward hop
    for (size_t i = 0; i < spec.data.size(); ++i)
      spec.data[i] *= std::conj(h.data[i]);
  return ifft2(spec);
}

ComplexField lens_phase(const OpticsConfig& config) {
  config.validate();
  const int n = config.grid_size;
  const double dx = config.pixel_scale();
  const double k = 2.0 * kPi / config.wavelength;
  const double r2max = config.lens_diameter * config.lens_diameter / 4.0;
  ComplexField t = ComplexField::zeros(n, dx);
  const int c0 = n / 2;
  for (int r = 0; r < n; ++r) {
    const double y = (r - c0) * dx;
    for (int c = 0; c < n; ++c) {
      const double x = (c - c0) * dx;
      const double r2 = x * x + y * y;
      t.at(r, c) = r2 <= r2max
                       ? std::polar(1.0, -k / (2.0 * config.focal_length) * r2)
                       : cplx(0.0, 0.0);
    }
  }
  return t;
}

ComplexField fourier_plane_kernel(const RealTensor& kernel,
                                  const OpticsConfig& config) {
  check_single_plane(kernel, "fourier_plane_kernel");
  config.validate();
  const int n = config.grid_size;
  const int64_t k = kernel.height();
  require(k <= n, "fourier_plane_kernel: kernel larger than the grid");
  const RealTensor flipped = rotate180(kernel);
  // place the flipped kernel so the correlation anchor, pixel
  // floor((k-1)/2) of the unflipped kernel, lands exactly on grid center
  const int64_t anchor = (k - 1) / 2;
  const int64_t off = n / 2 - (k - 1) + anchor;
  require(off >= 0 && off + k <= n,
          "fourier_plane_kernel: kernel does not fit the centered embedding");
  ComplexField emb = ComplexField::zeros(n, config.pixel_scale());
  for (int64_t i = 0; i < k; ++i)
    for (int64_t j = 0; j < k; ++j)
      emb.at(static_cast<int>(i + off), static_cast<int>(j + off)) =
          flipped.at(0, 0, i, j);
  quantize(emb, config.precision);
  // centered DFT: what the first 2f section performs on the image plane
  ComplexField mask = fftshift(fft2(ifftshift(emb)));
  quantize(mask, config.precision);
  return mask;
}

double calibrate_gain(const OpticsConfig& config) {
  config.validate();
  using Key = std::tuple<double, double, double, int, int>;
  static std::mutex mu;
  static std::map<Key, double> cache;
  const Key key{config.wavelength, config.focal_length, config.lens_diameter,
                config.grid_size, static_cast<int>(config.precision)};
  {
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;
  }
  // impulse image with a delta kernel: the raw pipeline peak is the gain
  const int64_t m = 16;
  RealTensor impulse = RealTensor::plane(m, m);
  impulse.at(0, 0, m / 2, m / 2) = 1.0;
  RealTensor delta = RealTensor::plane(1, 1);
  delta.at(0, 0, 0, 0) = 1.0;
  const RealTensor out = conv4f_raw(impulse, delta, config);
  double peak = 0.0;
  for (double v : out.data) peak = std::max(peak, v);
  require(peak > 0.0 && std::isfinite(peak),
          "calibrate_gain: degenerate pipeline produced no output peak");
  std::lock_guard<std::mutex> lock(mu);
  cache.emplace(key, peak);
  return peak;
}

RealTensor conv4f_single(const RealTensor& image, const RealTensor& kernel,
                         const OpticsConfig& config) {
  check_single_plane(image, "conv4f_single");
  check_single_plane(kernel, "conv4f_single");
  config.validate();
  const double gain = calibrate_gain(config);
  RealTensor out = conv4f_raw(image, kernel, config);
  for (double& v : out.data) v /= gain;
  return out;
}

namespace {

// elementwise positive/negative parts of one kernel plane
void split_signs(const RealTensor& t, int64_t a, int64_t c, RealTensor& pos,
                 RealTensor& neg, bool& has_pos, bool& has_neg) {
  const int64_t h = t.height(), w = t.width();
  has_pos = has_neg = false;
  for (int64_t i = 0; i < h; ++i)
    for (int64_t j = 0; j < w; ++j) {
      const double v = t.at(a, c, i, j);
      if (v > 0) {
        pos.at(0, 0, i, j) = v;
        neg.at(0, 0, i, j) = 0.0;
        has_pos = true;
      } else {
        pos.at(0, 0, i, j) = 0.0;
        neg.at(0, 0, i, j) = -v;
        if (v < 0) has_neg = true;
      }
    }
}

}  // namespace

RealTensor optconv(const RealTensor& input, const RealTensor& kernels,
                   const OpticsConfig& config, OpticalBackend backend) {
  input.validate("optconv");
  kernels.validate("optconv");
  config.validate();
  require(kernels.shape[1] == input.shape[1],
          "optconv: kernel in_channels != input channels");
  require(kernels.height() == kernels.width(), "optconv: kernels must be square");
  require(input.height() == input.width(), "optconv: input must be square");
  require(kernels.height() <= input.height(),
          "optconv: kernel " + std::to_string(kernels.height()) +
              " exceeds the feature resolution " +
              std::to_string(input.height()));

  if (backend == OpticalBackend::ideal) {
    // electronic reference: the Fourier-plane product without propagation
    // physics; signed operands need no decomposition
    return conv2d_fft(input, kernels);
  }

  const int64_t B = input.batch(), Cin = input.channels();
  const int64_t H = input.height();
  const int64_t Cout = kernels.batch(), k = kernels.height();
  RealTensor out = RealTensor::zeros(B, Cout, H, H);

  RealTensor xpos = RealTensor::plane(H, H), xneg = RealTensor::plane(H, H);
  RealTensor kpos = RealTensor::plane(k, k), kneg = RealTensor::plane(k, k);
  for (int64_t b = 0; b < B; ++b)
    for (int64_t ci = 0; ci < Cin; ++ci) {
      bool xp = false, xn = false;
      split_signs(input, b, ci, xpos, xneg, xp, xn);
      for (int64_t co = 0; co < Cout; ++co) {
        bool kp = false, kn = false;
        split_signs(kernels, co, ci, kpos, kneg, kp, kn);
        // up to four optical passes per channel pair, combined
        // electronically; all-zero parts contribute nothing and are skipped
        auto accumulate = [&](const RealTensor& img, const RealTensor& ker,
                              double sign) {
          const RealTensor part = conv4f_single(img, ker, config);
          for (int64_t i = 0; i < H; ++i)
            for (int64_t j = 0; j < H; ++j)
              out.at(b, co, i, j) += sign * part.at(0, 0, i, j);
        };
        if (xp && kp) accumulate(xpos, kpos, +1.0);
        if (xp && kn) accumulate(xpos, kneg, -1.0);
        if (xn && kp) accumulate(xneg, kpos, -1.0);
        if (xn && kn) accumulate(xneg, kneg, +1.0);
      }
    }
  return out;
}

}  // namespace fatnet
