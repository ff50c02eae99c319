#include "fatnet/field.hpp"

#include <fftw3.h>

#include <cmath>
#include <map>
#include <mutex>

#include "fatnet/error.hpp"

namespace fatnet {

ComplexField ComplexField::zeros(int size, double pixel_scale) {
  ComplexField f;
  f.size = size;
  f.pixel_scale = pixel_scale;
  f.data.assign(static_cast<size_t>(size) * size, cplx(0.0, 0.0));
  f.validate("ComplexField::zeros");
  return f;
}

void ComplexField::validate(const char* who) const {
  require(size >= 2, std::string(who) + ": grid size must be >= 2");
  require(std::isfinite(pixel_scale) && pixel_scale > 0,
          std::string(who) + ": pixel_scale must be positive and finite");
  require(data.size() == static_cast<size_t>(size) * size,
          std::string(who) + ": data length does not match size*size");
  for (const cplx& v : data) {
    if (!std::isfinite(v.real()) || !std::isfinite(v.imag()))
      fail(std::string(who) + ": non-finite amplitude in field");
  }
}

RealTensor RealTensor::zeros(int64_t b, int64_t c, int64_t h, int64_t w) {
  require(b >= 0 && c >= 0 && h >= 0 && w >= 0,
          "RealTensor::zeros: negative dimension");
  RealTensor t;
  t.shape = {b, c, h, w};
  t.data.assign(static_cast<size_t>(b * c * h * w), 0.0);
  return t;
}

RealTensor RealTensor::plane(int64_t h, int64_t w) { return zeros(1, 1, h, w); }

void RealTensor::validate(const char* who) const {
  require(data.size() == static_cast<size_t>(count()),
          std::string(who) + ": data length does not match shape product");
  for (double v : data) {
    if (!std::isfinite(v)) fail(std::string(who) + ": non-finite tensor value");
  }
}

namespace {

// One cached FFTW plan per (size, direction). Plan creation is not
// thread-safe, execution on distinct arrays is; the mutex covers the cache.
class PlanCache {
 public:
  static fftw_plan get(int n, int sign) {
    static PlanCache cache;
    std::lock_guard<std::mutex> lock(cache.mu_);
    auto key = std::make_pair(n, sign);
    auto it = cache.plans_.find(key);
    if (it != cache.plans_.end()) return it->second;
    std::vector<cplx> scratch_in(static_cast<size_t>(n) * n);
    std::vector<cplx> scratch_out(static_cast<size_t>(n) * n);
    fftw_plan p = fftw_plan_dft_2d(
        n, n, reinterpret_cast<fftw_complex*>(scratch_in.data()),
        reinterpret_cast<fftw_complex*>(scratch_out.data()), sign,
        FFTW_ESTIMATE | FFTW_UNALIGNED);
    require(p != nullptr, "fft2: FFTW plan creation failed");
    cache.plans_.emplace(key, p);
    return p;
  }

 private:
  PlanCache() = default;
  ~PlanCache() {
    for (auto& [key, plan] : plans_) fftw_destroy_plan(plan);
  }
  std::mutex mu_;
  std::map<std::pair<int, int>, fftw_plan> plans_;
};

ComplexField run_fft(const ComplexField& u, int sign, const char* who) {
  u.validate(who);
  ComplexField out = u;
  fftw_plan p = PlanCache::get(u.size, sign);
  fftw_execute_dft(
      p,
      reinterpret_cast<fftw_complex*>(const_cast<cplx*>(u.data.data())),
      reinterpret_cast<fftw_complex*>(out.data.data()));
  return out;
}

// Circular shift of a field by (dr, dc), non-negative offsets.
ComplexField roll(const ComplexField& u, int dr, int dc) {
  ComplexField out = u;
  const int n = u.size;
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) out.at((r + dr) % n, (c + dc) % n) = u.at(r, c);
  return out;
}

}  // namespace

ComplexField fft2(const ComplexField& u) {
  return run_fft(u, FFTW_FORWARD, "fft2");
}

ComplexField ifft2(const ComplexField& u) {
  ComplexField out = run_fft(u, FFTW_BACKWARD, "ifft2");
  const double scale =
      1.0 / (static_cast<double>(u.size) * static_cast<double>(u.size));
  for (cplx& v : out.data) v *= scale;
  return out;
}

ComplexField fftshift(const ComplexField& u) {
  u.validate("fftshift");
  return roll(u, u.size / 2, u.size / 2);
}

ComplexField ifftshift(const ComplexField& u) {
  u.validate("ifftshift");
  const int d = u.size - u.size / 2;  // inverse of the fftshift offset
  return roll(u, d % u.size, d % u.size);
}

namespace {

RealTensor resize_center(const RealTensor& t, int64_t new_h, int64_t new_w,
                         bool growing, const char* who) {
  t.validate(who);
  require(new_h >= 1 && new_w >= 1, std::string(who) + ": target dims must be >= 1");
  const int64_t h = t.height(), w = t.width();
  if (growing)
    require(new_h >= h && new_w >= w,
            std::string(who) + ": pad target smaller than input");
  else
    require(new_h <= h && new_w <= w,
            std::string(who) + ": crop target larger than input");
  // center placement: offset floor(diff/2), remainder to the bottom/right
  const int64_t off_h = growing ? (new_h - h) / 2 : (h - new_h) / 2;
  const int64_t off_w = growing ? (new_w - w) / 2 : (w - new_w) / 2;
  RealTensor out = RealTensor::zeros(t.batch(), t.channels(), new_h, new_w);
  const int64_t copy_h = growing ? h : new_h;
  const int64_t copy_w = growing ? w : new_w;
  for (int64_t b = 0; b < t.batch(); ++b)
    for (int64_t c = 0; c < t.channels(); ++c)
      for (int64_t i = 0; i < copy_h; ++i)
        for (int64_t j = 0; j < copy_w; ++j) {
          if (growing)
            out.at(b, c, i + off_h, j + off_w) = t.at(b, c, i, j);
          else
            out.at(b, c, i, j) = t.at(b, c, i + off_h, j + off_w);
        }
  return out;
}

}  // namespace

RealTensor pad_center(const RealTensor& t, int64_t new_h, int64_t new_w) {
  return resize_center(t, new_h, new_w, /*growing=*/true, "pad_center");
}

RealTensor crop_center(const RealTensor& t, int64_t new_h, int64_t new_w) {
  return resize_center(t, new_h, new_w, /*growing=*/false, "crop_center");
}

RealTensor rotate180(const RealTensor& t) {
  t.validate("rotate180");
  RealTensor out = t;
  const int64_t h = t.height(), w = t.width();
  for (int64_t b = 0; b < t.batch(); ++b)
    for (int64_t c = 0; c < t.channels(); ++c)
      for (int64_t i = 0; i < h; ++i)
        for (int64_t j = 0; j < w; ++j)
          out.at(b, c, h - 1 - i, w - 1 - j) = t.at(b, c, i, j);
  return out;
}

}  // namespace fatnet
