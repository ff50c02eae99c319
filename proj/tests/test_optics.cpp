#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <random>

#include "doctest.h"
#include "fatnet/conv.hpp"
#include "fatnet/error.hpp"
#include "fatnet/optics.hpp"

using namespace fatnet;

namespace {

constexpr double kPi = 3.14159265358979323846;

OpticsConfig small_config(int n = 64) {
  OpticsConfig c;
  c.grid_size = n;
  return c;
}

RealTensor random_plane(int64_t h, uint64_t seed, bool non_negative) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(non_negative ? 0.0 : -1.0, 1.0);
  RealTensor t = RealTensor::plane(h, h);
  for (double& v : t.data) v = u(rng);
  return t;
}

double energy(const ComplexField& f) {
  double s = 0.0;
  for (const cplx& v : f.data) s += std::norm(v);
  return s;
}

double rel_rms(const RealTensor& got, const RealTensor& want) {
  REQUIRE(got.shape == want.shape);
  double num = 0.0, den = 0.0;
  for (size_t i = 0; i < got.data.size(); ++i) {
    const double d = got.data[i] - want.data[i];
    num += d * d;
    den += want.data[i] * want.data[i];
  }
  REQUIRE(den > 0.0);
  return std::sqrt(num / den);
}

}  // namespace

TEST_CASE("config invariants: pitch ties one spectral step to one focal hop") {
  OpticsConfig c = small_config(512);
  CHECK(c.pixel_scale() ==
        doctest::Approx(std::sqrt(c.focal_length * c.wavelength / 512)));
  CHECK_THROWS_AS([] { OpticsConfig b; b.grid_size = 17; b.validate(); }(),
                  fatnet::error);
  CHECK_THROWS_AS([] { OpticsConfig b; b.grid_size = 8; b.validate(); }(),
                  fatnet::error);
  CHECK_THROWS_AS([] { OpticsConfig b; b.wavelength = -1; b.validate(); }(),
                  fatnet::error);
}

TEST_CASE("pupil coverage warning fires exactly when the grid is too small") {
  OpticsConfig tight = small_config(32);  // extent ~0.41 mm vs 5 mm pupil
  CHECK(!tight.grid_covers_pupil());
  CHECK(config_warning(tight).has_value());
  OpticsConfig wide = small_config(512);
  wide.lens_diameter = 0.4e-3;  // 1.65 mm extent covers a 0.4 mm pupil
  CHECK(wide.grid_covers_pupil());
  CHECK(!config_warning(wide).has_value());
}

TEST_CASE("free-space transfer has unit modulus and the plane-wave zero bin") {
  OpticsConfig c = small_config(64);
  const double z = 0.01;
  ComplexField h = free_space_transfer(c, z);
  for (const cplx& v : h.data) CHECK(std::abs(std::abs(v) - 1.0) < 1e-12);
  const double k = 2.0 * kPi / c.wavelength;
  CHECK(std::abs(h.at(0, 0) - std::polar(1.0, k * z)) < 1e-12);
}

TEST_CASE("transfer bin (1,0) carries the quadratic frequency phase") {
  OpticsConfig c = small_config(64);
  const double z = 0.01;
  const double fx = 1.0 / (64 * c.pixel_scale());
  const double want =
      2.0 * kPi / c.wavelength * z - kPi * c.wavelength * z * fx * fx;
  ComplexField h = free_space_transfer(c, z);
  CHECK(std::abs(h.at(1, 0) - std::polar(1.0, want)) < 1e-12);
  CHECK(std::abs(h.at(0, 1) - std::polar(1.0, want)) < 1e-12);
  // conjugate-symmetric alias: bin N-1 equals bin -1
  CHECK(std::abs(h.at(63, 0) - h.at(1, 0)) < 1e-12);
}

TEST_CASE("a uniform plane wave only picks up the on-axis phase") {
  OpticsConfig c = small_config(64);
  ComplexField u = ComplexField::zeros(64, c.pixel_scale());
  for (cplx& v : u.data) v = 1.0;
  ComplexField out = propagate(u, c, 0.02);
  const cplx expect = std::polar(1.0, 2.0 * kPi / c.wavelength * 0.02);
  for (const cplx& v : out.data) CHECK(std::abs(v - expect) < 1e-10);
}

TEST_CASE("propagation conserves energy and reverses exactly") {
  OpticsConfig c = small_config(64);
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 10; ++trial) {
    ComplexField f = ComplexField::zeros(64, c.pixel_scale());
    for (cplx& v : f.data) v = cplx(u(rng), u(rng));
    ComplexField fwd = propagate(f, c, c.focal_length);
    CHECK(std::abs(energy(fwd) / energy(f) - 1.0) < 1e-9);
    ComplexField back = propagate(fwd, c, -c.focal_length);
    double worst = 0.0;
    for (size_t i = 0; i < f.data.size(); ++i)
      worst = std::max(worst, std::abs(back.data[i] - f.data[i]));
    CHECK(worst < 1e-10);
  }
}

TEST_CASE("a focused gaussian spreads by the analytic beam-waist law") {
  // waist w0 at the input plane; after z, w(z) = w0 sqrt(1 + (z/zR)^2),
  // zR = pi w0^2 / lambda. Width measured as sqrt(2 <r^2>) of intensity.
  OpticsConfig c = small_config(512);
  const double w0 = 50e-6;
  const double dx = c.pixel_scale();
  const int n = c.grid_size, c0 = n / 2;
  ComplexField u = ComplexField::zeros(n, dx);
  for (int r = 0; r < n; ++r)
    for (int col = 0; col < n; ++col) {
      const double y = (r - c0) * dx, x = (col - c0) * dx;
      u.at(r, col) = std::exp(-(x * x + y * y) / (w0 * w0));
    }
  ComplexField out = propagate(u, c, c.focal_length);
  double m2 = 0.0, tot = 0.0;
  for (int r = 0; r < n; ++r)
    for (int col = 0; col < n; ++col) {
      const double y = (r - c0) * dx, x = (col - c0) * dx;
      const double p = std::norm(out.at(r, col));
      m2 += p * (x * x + y * y);
      tot += p;
    }
  const double measured = std::sqrt(2.0 * m2 / tot);
  const double zr = kPi * w0 * w0 / c.wavelength;
  const double expect =
      w0 * std::sqrt(1.0 + std::pow(c.focal_length / zr, 2.0));
  CHECK(measured == doctest::Approx(expect).epsilon(0.02));
}

TEST_CASE("lens phase is a unit-modulus chirp inside the pupil, dark outside") {
  OpticsConfig c = small_config(64);
  ComplexField t = lens_phase(c);
  const int c0 = 32;
  CHECK(std::abs(t.at(c0, c0) - cplx(1.0, 0.0)) < 1e-12);  // zero phase on axis
  const double dx = c.pixel_scale();
  const double r2 = dx * dx * 25.0;  // pixel (c0+3, c0+4)
  const double want = -2.0 * kPi / c.wavelength / (2.0 * c.focal_length) * r2;
  CHECK(std::abs(t.at(c0 + 3, c0 + 4) - std::polar(1.0, want)) < 1e-12);
  // the 64-grid extent (0.58 mm) is inside the 5 mm pupil: nothing clipped
  for (const cplx& v : t.data) CHECK(std::abs(std::abs(v) - 1.0) < 1e-12);
  // shrink the pupil below the grid extent and the corners go dark
  OpticsConfig clipped = c;
  clipped.lens_diameter = 20 * dx;
  ComplexField tc = lens_phase(clipped);
  CHECK(std::abs(tc.at(0, 0)) == 0.0);
  CHECK(std::abs(std::abs(tc.at(c0, c0 + 9)) - 1.0) < 1e-12);
}

TEST_CASE("fourier mask of a centered delta is flat") {
  OpticsConfig c = small_config(64);
  for (int64_t k : {1, 2, 3, 4, 5}) {
    RealTensor ker = RealTensor::plane(k, k);
    ker.at(0, 0, (k - 1) / 2, (k - 1) / 2) = 1.0;  // the anchor pixel
    ComplexField mask = fourier_plane_kernel(ker, c);
    double worst = 0.0;
    for (const cplx& v : mask.data)
      worst = std::max(worst, std::abs(v - cplx(1.0, 0.0)));
    CHECK(worst < 1e-10);
  }
}

TEST_CASE("fourier mask center bin is the kernel sum") {
  OpticsConfig c = small_config(64);
  RealTensor box = RealTensor::plane(3, 3);
  for (double& v : box.data) v = 1.0;
  ComplexField mask = fourier_plane_kernel(box, c);
  CHECK(std::abs(mask.at(32, 32) - cplx(9.0, 0.0)) < 1e-10);
}

TEST_CASE("fourier mask is linear in the kernel") {
  OpticsConfig c = small_config(64);
  RealTensor a = random_plane(3, 81, true);
  RealTensor b = random_plane(3, 82, true);
  RealTensor sum = a;
  for (size_t i = 0; i < sum.data.size(); ++i) sum.data[i] += 2.0 * b.data[i];
  ComplexField ma = fourier_plane_kernel(a, c);
  ComplexField mb = fourier_plane_kernel(b, c);
  ComplexField ms = fourier_plane_kernel(sum, c);
  double worst = 0.0;
  for (size_t i = 0; i < ms.data.size(); ++i)
    worst = std::max(worst,
                     std::abs(ms.data[i] - (ma.data[i] + 2.0 * mb.data[i])));
  CHECK(worst < 1e-10);
}

TEST_CASE("calibrated gain is positive, unit, and cached deterministically") {
  OpticsConfig c = small_config(128);
  const double g1 = calibrate_gain(c);
  const double g2 = calibrate_gain(c);
  CHECK(g1 == g2);  // cache hit must be bitwise stable
  CHECK(g1 > 0.0);
  // with dx^2 = f lambda / N the two-lens chain is an exact spectral
  // round-trip, so the raw pipeline needs no amplitude correction at all
  CHECK(g1 == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("4f pass reproduces the direct convolution on a small grid") {
  OpticsConfig c = small_config(64);
  RealTensor img = random_plane(8, 301, true);
  RealTensor ker = random_plane(3, 302, true);
  RealTensor got = conv4f_single(img, ker, c);
  RealTensor want = conv2d_direct(img, ker);
  CHECK(rel_rms(got, want) < 1e-9);
}

TEST_CASE("4f pass leaves an off-center impulse in place") {
  // derotation must undo the camera-plane flip about the center pixel
  OpticsConfig c = small_config(64);
  RealTensor img = RealTensor::plane(8, 8);
  img.at(0, 0, 3, 5) = 1.0;
  RealTensor delta = RealTensor::plane(1, 1);
  delta.at(0, 0, 0, 0) = 1.0;
  RealTensor out = conv4f_single(img, delta, c);
  CHECK(out.at(0, 0, 3, 5) == doctest::Approx(1.0).epsilon(1e-9));
  double rest = 0.0;
  for (int64_t i = 0; i < 8; ++i)
    for (int64_t j = 0; j < 8; ++j)
      if (i != 3 || j != 5) rest = std::max(rest, std::abs(out.at(0, 0, i, j)));
  CHECK(rest < 1e-9);
}

TEST_CASE("4f pass reproduces an asymmetric kernel, both parities") {
  OpticsConfig c = small_config(64);
  RealTensor img = random_plane(9, 304, true);
  for (int64_t k : {2, 3, 4}) {
    RealTensor ker = random_plane(k, 400 + k, true);
    CHECK(rel_rms(conv4f_single(img, ker, c), conv2d_direct(img, ker)) <
          1e-9);
  }
}

TEST_CASE("an entirely dark input stays dark") {
  OpticsConfig c = small_config(64);
  RealTensor img = RealTensor::plane(8, 8);
  RealTensor ker = random_plane(3, 305, true);
  RealTensor out = conv4f_single(img, ker, c);
  for (double v : out.data) CHECK(std::abs(v) < 1e-12);
}

TEST_CASE("fidelity holds at the working resolution for kernels up to 11") {
  OpticsConfig c = small_config(512);
  RealTensor img = random_plane(32, 306, true);
  for (int64_t k : {3, 7, 11}) {
    RealTensor ker = random_plane(k, 500 + k, true);
    const double err = rel_rms(conv4f_single(img, ker, c), conv2d_direct(img, ker));
    CHECK(err < c.fidelity_bound);
    CHECK(err < 1e-9);  // chirp algebra cancels exactly at this pitch
  }
}

TEST_CASE("float32 storage stays within the fidelity budget") {
  OpticsConfig c = small_config(128);
  c.precision = Precision::float32;
  RealTensor img = random_plane(16, 307, true);
  RealTensor ker = random_plane(5, 308, true);
  const double err = rel_rms(conv4f_single(img, ker, c), conv2d_direct(img, ker));
  CHECK(err < c.fidelity_bound);
  CHECK(err > 1e-12);  // quantization is visible, unlike the float64 path
}

TEST_CASE("4f pass rejects operands that do not fit the grid") {
  OpticsConfig c;
  c.grid_size = 16;
  RealTensor img = random_plane(14, 309, true);
  RealTensor ker = random_plane(5, 310, true);  // 14 + 5 - 1 > 16
  CHECK_THROWS_AS(conv4f_single(img, ker, c), fatnet::error);
  RealTensor neg = random_plane(4, 311, false);
  CHECK_THROWS_AS(conv4f_single(neg, ker, c), fatnet::error);
}

TEST_CASE("optconv with signed kernels matches the signed convolution") {
  OpticsConfig c = small_config(64);
  RealTensor img = random_plane(8, 312, true);
  RealTensor ker = random_plane(3, 313, false);  // signed
  RealTensor want = conv2d_direct(img, ker);
  CHECK(rel_rms(optconv(img, ker, c, OpticalBackend::ideal), want) < 1e-9);
  CHECK(rel_rms(optconv(img, ker, c, OpticalBackend::physical), want) <
        c.fidelity_bound);
}

TEST_CASE("optconv handles signed inputs via the four-pass split") {
  OpticsConfig c = small_config(64);
  RealTensor img = random_plane(8, 314, false);
  RealTensor ker = random_plane(3, 315, false);
  RealTensor want = conv2d_direct(img, ker);
  CHECK(rel_rms(optconv(img, ker, c, OpticalBackend::physical), want) < 1e-9);
}

TEST_CASE("optconv with a non-negative kernel skips the negative pass") {
  OpticsConfig c = small_config(64);
  RealTensor img = random_plane(8, 316, true);
  RealTensor ker = random_plane(3, 317, true);
  RealTensor want = conv2d_direct(img, ker);
  CHECK(rel_rms(optconv(img, ker, c, OpticalBackend::physical), want) < 1e-9);
}

TEST_CASE("optconv treats batch elements and channels independently") {
  OpticsConfig c = small_config(64);
  std::mt19937_64 rng(318);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  RealTensor batch = RealTensor::zeros(2, 2, 6, 6);
  for (double& v : batch.data) v = u(rng);
  RealTensor ker = RealTensor::zeros(3, 2, 3, 3);
  for (double& v : ker.data) v = u(rng);
  RealTensor all = optconv(batch, ker, c, OpticalBackend::physical);
  for (int64_t b = 0; b < 2; ++b) {
    RealTensor one = RealTensor::zeros(1, 2, 6, 6);
    std::copy_n(batch.data.begin() + b * 72, 72, one.data.begin());
    RealTensor got = optconv(one, ker, c, OpticalBackend::physical);
    for (int64_t co = 0; co < 3; ++co)
      for (int64_t i = 0; i < 6; ++i)
        for (int64_t j = 0; j < 6; ++j)
          CHECK(got.at(0, co, i, j) ==
                doctest::Approx(all.at(b, co, i, j)).epsilon(1e-12));
  }
}

TEST_CASE("optconv ideal backend equals the spectral convolution exactly") {
  OpticsConfig c = small_config(64);
  RealTensor img = random_plane(8, 319, false);
  RealTensor ker = random_plane(3, 320, false);
  RealTensor a = optconv(img, ker, c, OpticalBackend::ideal);
  RealTensor b = conv2d_fft(img, ker);
  for (size_t i = 0; i < a.data.size(); ++i) CHECK(a.data[i] == b.data[i]);
}

TEST_CASE("optconv rejects kernels larger than the feature resolution") {
  OpticsConfig c = small_config(64);
  RealTensor img = random_plane(4, 321, true);
  RealTensor ker = random_plane(5, 322, true);
  CHECK_THROWS_AS(optconv(img, ker, c, OpticalBackend::ideal), fatnet::error);
  CHECK_THROWS_AS(optconv(img, ker, c, OpticalBackend::physical),
                  fatnet::error);
}
