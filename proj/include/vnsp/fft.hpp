#pragma once

// Centered, unitary 2D DFT over a stack of ny x nz slices.
//
// Forward: X = fftshift(DFT(ifftshift(x))) / sqrt(ny*nz), so the DC bin sits at
// (ny/2, nz/2). The inverse mirrors it. Backed by FFTW; plans are created once
// per (ny, nz, direction) and executed on aligned thread-local scratch so every
// call takes the same code path.

#include <fftw3.h>

#include <cmath>
#include <complex>
#include <cstddef>
#include <map>
#include <mutex>
#include <span>
#include <string>
#include <tuple>

#include "vnsp/errors.hpp"

namespace vnsp {

using cplx = std::complex<double>;

namespace detail {

struct FftwBuffer {
  fftw_complex* ptr = nullptr;
  std::size_t size = 0;

  FftwBuffer() = default;
  FftwBuffer(const FftwBuffer&) = delete;
  FftwBuffer& operator=(const FftwBuffer&) = delete;
  ~FftwBuffer() {
    if (ptr) fftw_free(ptr);
  }

  fftw_complex* reserve(std::size_t n) {
    if (n > size) {
      if (ptr) fftw_free(ptr);
      ptr = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * n));
      if (!ptr) throw std::bad_alloc();
      size = n;
    }
    return ptr;
  }
};

class PlanCache {
 public:
  static PlanCache& instance() {
    static PlanCache cache;
    return cache;
  }

  fftw_plan get(int ny, int nz, int sign) {
    std::lock_guard<std::mutex> lock(mutex_);
    auto key = std::make_tuple(ny, nz, sign);
    auto it = plans_.find(key);
    if (it != plans_.end()) return it->second;
    // Planning scratch; FFTW_ESTIMATE never touches its contents.
    FftwBuffer scratch;
    fftw_complex* buf = scratch.reserve(static_cast<std::size_t>(ny) * nz);
    fftw_plan plan = fftw_plan_dft_2d(ny, nz, buf, buf, sign, FFTW_ESTIMATE);
    if (!plan) throw std::runtime_error("fftw: failed to create plan");
    plans_.emplace(key, plan);
    return plan;
  }

  ~PlanCache() {
    for (auto& [key, plan] : plans_) fftw_destroy_plan(plan);
  }

 private:
  PlanCache() = default;
  std::mutex mutex_;
  std::map<std::tuple<int, int, int>, fftw_plan> plans_;
};

inline void centered_dft_slice(const cplx* in, cplx* out, int ny, int nz, int sign) {
  thread_local FftwBuffer scratch;
  const std::size_t n = static_cast<std::size_t>(ny) * nz;
  fftw_complex* buf = scratch.reserve(n);
  const int hy = ny / 2;
  const int hz = nz / 2;
  // ifftshift on the way in: buf[i] = in[(i + h) mod n]
  for (int y = 0; y < ny; ++y) {
    const int sy = (y + hy) % ny;
    for (int z = 0; z < nz; ++z) {
      const int sz = (z + hz) % nz;
      const cplx v = in[static_cast<std::size_t>(sy) * nz + sz];
      buf[static_cast<std::size_t>(y) * nz + z][0] = v.real();
      buf[static_cast<std::size_t>(y) * nz + z][1] = v.imag();
    }
  }
  fftw_execute_dft(PlanCache::instance().get(ny, nz, sign), buf, buf);
  const double scale = 1.0 / std::sqrt(static_cast<double>(n));
  // fftshift on the way out: out[(i + h) mod n] = buf[i]
  for (int y = 0; y < ny; ++y) {
    const int dy = (y + hy) % ny;
    for (int z = 0; z < nz; ++z) {
      const int dz = (z + hz) % nz;
      const auto& b = buf[static_cast<std::size_t>(y) * nz + z];
      out[static_cast<std::size_t>(dy) * nz + dz] = cplx(b[0] * scale, b[1] * scale);
    }
  }
}

inline void transform_stack(std::span<cplx> data, int ny, int nz, int sign) {
  if (ny < 1 || nz < 1) throw ShapeError("fft2: slice dimensions must be positive");
  const std::size_t slice = static_cast<std::size_t>(ny) * nz;
  if (data.size() % slice != 0) {
    throw ShapeError("fft2: array of " + std::to_string(data.size()) +
                     " elements is not a stack of " + std::to_string(ny) + "x" +
                     std::to_string(nz) + " slices");
  }
  for (std::size_t off = 0; off < data.size(); off += slice) {
    centered_dft_slice(data.data() + off, data.data() + off, ny, nz, sign);
  }
}

}  // namespace detail

/// In-place forward transform of every ny x nz slice in `data`.
inline void fft2_ortho_inplace(std::span<cplx> data, int ny, int nz) {
  detail::transform_stack(data, ny, nz, FFTW_FORWARD);
}

/// In-place inverse transform of every ny x nz slice in `data`.
inline void ifft2_ortho_inplace(std::span<cplx> data, int ny, int nz) {
  detail::transform_stack(data, ny, nz, FFTW_BACKWARD);
}

}  // namespace vnsp
