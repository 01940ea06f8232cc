#pragma once

// Domain types and the multi-coil Cartesian encoding operator.
//
// Memory layouts (row-major, last index fastest):
//   ImageStack      [t][y][z]
//   CoilMap         [coil][y][z]
//   KSpaceData      [coil][t][ky][kz]
//   SamplingPattern [t][ky][kz]
// Point ordering and all tie-breaking use lexicographic (ky, kz, t), which is
// not the memory order; see `lex_index`.

#include <algorithm>
#include <cmath>
#include <compare>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "vnsp/errors.hpp"
#include "vnsp/fft.hpp"

namespace vnsp {

struct GridShape {
  int ny = 1;
  int nz = 1;
  int nt = 1;
  int nc = 1;

  void validate() const {
    if (ny < 1 || nz < 1 || nt < 1 || nc < 1) {
      throw ShapeError("grid shape fields must all be >= 1, got " + str());
    }
  }

  std::size_t frame_size() const { return static_cast<std::size_t>(ny) * nz; }
  /// N = ny * nz * nt
  std::size_t cells() const { return frame_size() * nt; }
  std::size_t kspace_size() const { return cells() * nc; }

  bool same_grid(const GridShape& o) const { return ny == o.ny && nz == o.nz && nt == o.nt; }
  bool operator==(const GridShape&) const = default;

  std::string str() const {
    return std::to_string(ny) + "x" + std::to_string(nz) + "x" + std::to_string(nt) + "x" +
           std::to_string(nc);
  }
};

/// A k-space grid location.
struct Point {
  int ky = 0;
  int kz = 0;
  int t = 0;

  auto operator<=>(const Point&) const = default;
};

inline std::size_t cell_index(const GridShape& g, int ky, int kz, int t) {
  return (static_cast<std::size_t>(t) * g.ny + ky) * g.nz + kz;
}
inline std::size_t cell_index(const GridShape& g, const Point& p) {
  return cell_index(g, p.ky, p.kz, p.t);
}
inline Point cell_point(const GridShape& g, std::size_t idx) {
  const int kz = static_cast<int>(idx % g.nz);
  idx /= g.nz;
  const int ky = static_cast<int>(idx % g.ny);
  const int t = static_cast<int>(idx / g.ny);
  return {ky, kz, t};
}
/// Rank of a cell in lexicographic (ky, kz, t) order.
inline std::size_t lex_index(const GridShape& g, const Point& p) {
  return (static_cast<std::size_t>(p.ky) * g.nz + p.kz) * g.nt + p.t;
}

inline void check_finite(std::span<const cplx> v, const char* what) {
  for (const auto& c : v) {
    if (!std::isfinite(c.real()) || !std::isfinite(c.imag())) {
      throw NumericError(std::string(what) + ": non-finite value");
    }
  }
}

struct ImageStack {
  GridShape shape;  // nc ignored
  std::vector<cplx> data;

  ImageStack() = default;
  explicit ImageStack(const GridShape& g) : shape(g), data(g.cells()) { g.validate(); }
  ImageStack(const GridShape& g, std::vector<cplx> values) : shape(g), data(std::move(values)) {
    g.validate();
    if (data.size() != g.cells()) throw ShapeError("ImageStack: element count does not match grid");
  }

  cplx& at(int y, int z, int t) { return data[cell_index(shape, y, z, t)]; }
  const cplx& at(int y, int z, int t) const { return data[cell_index(shape, y, z, t)]; }
};

/// Coil sensitivities, renormalized at construction so that sum_s |c_s|^2 = 1
/// at every pixel.
class CoilMap {
 public:
  CoilMap() = default;

  /// `raw` in [coil][y][z] layout; the per-frame count of `g` is ignored.
  CoilMap(const GridShape& g, std::vector<cplx> raw) : shape_(g), data_(std::move(raw)) {
    g.validate();
    const std::size_t fs = g.frame_size();
    if (data_.size() != fs * g.nc) throw ShapeError("CoilMap: element count does not match grid");
    check_finite(data_, "CoilMap");
    for (std::size_t p = 0; p < fs; ++p) {
      double sum = 0.0;
      for (int s = 0; s < g.nc; ++s) sum += std::norm(data_[s * fs + p]);
      if (sum <= 0.0) throw NumericError("CoilMap: all coils vanish at pixel " + std::to_string(p));
      const double inv = 1.0 / std::sqrt(sum);
      for (int s = 0; s < g.nc; ++s) data_[s * fs + p] *= inv;
    }
  }

  const GridShape& shape() const { return shape_; }
  const std::vector<cplx>& data() const { return data_; }
  std::span<const cplx> coil(int s) const {
    return {data_.data() + s * shape_.frame_size(), shape_.frame_size()};
  }

 private:
  GridShape shape_;
  std::vector<cplx> data_;
};

struct KSpaceData {
  GridShape shape;
  std::vector<cplx> data;

  KSpaceData() = default;
  explicit KSpaceData(const GridShape& g) : shape(g), data(g.kspace_size()) { g.validate(); }

  std::span<cplx> slice(int s, int t) {
    return {data.data() + (static_cast<std::size_t>(s) * shape.nt + t) * shape.frame_size(),
            shape.frame_size()};
  }
  std::span<const cplx> slice(int s, int t) const {
    return {data.data() + (static_cast<std::size_t>(s) * shape.nt + t) * shape.frame_size(),
            shape.frame_size()};
  }
  cplx& at(int s, int ky, int kz, int t) {
    return data[static_cast<std::size_t>(s) * shape.cells() + cell_index(shape, ky, kz, t)];
  }
  const cplx& at(int s, int ky, int kz, int t) const {
    return data[static_cast<std::size_t>(s) * shape.cells() + cell_index(shape, ky, kz, t)];
  }
};

/// Subset of the Cartesian grid with a protected calibration subset.
class SamplingPattern {
 public:
  enum : std::uint8_t { kEmpty = 0, kSampled = 1, kCalibration = 2 };

  SamplingPattern() = default;
  explicit SamplingPattern(const GridShape& grid) : grid_(grid), mask_(grid.cells(), kEmpty) {
    grid_.nc = 1;
    grid_.validate();
  }

  const GridShape& grid() const { return grid_; }
  std::size_t size() const { return count_; }
  std::size_t calibration_size() const { return cal_count_; }

  bool in_grid(const Point& p) const {
    return p.ky >= 0 && p.ky < grid_.ny && p.kz >= 0 && p.kz < grid_.nz && p.t >= 0 &&
           p.t < grid_.nt;
  }
  bool contains(const Point& p) const { return mask_[cell_index(grid_, p)] != kEmpty; }
  bool contains_cell(std::size_t idx) const { return mask_[idx] != kEmpty; }
  bool is_calibration(const Point& p) const { return mask_[cell_index(grid_, p)] == kCalibration; }
  bool is_calibration_cell(std::size_t idx) const { return mask_[idx] == kCalibration; }
  std::span<const std::uint8_t> mask() const { return mask_; }

  /// Adds a sampled point. Throws on duplicates or out-of-grid points.
  void add(const Point& p, bool calibration = false) {
    if (!in_grid(p)) throw ShapeError("SamplingPattern: point outside grid");
    auto& m = mask_[cell_index(grid_, p)];
    if (m != kEmpty) throw std::invalid_argument("SamplingPattern: duplicate point");
    m = calibration ? kCalibration : kSampled;
    ++count_;
    if (calibration) ++cal_count_;
  }

  /// Adds p to the calibration set, promoting it if already sampled.
  void add_calibration(const Point& p) {
    if (!in_grid(p)) throw ShapeError("SamplingPattern: point outside grid");
    auto& m = mask_[cell_index(grid_, p)];
    if (m == kCalibration) return;
    if (m == kEmpty) ++count_;
    m = kCalibration;
    ++cal_count_;
  }

  /// Removes a non-calibration point.
  void remove(const Point& p) {
    if (!in_grid(p)) throw ShapeError("SamplingPattern: point outside grid");
    auto& m = mask_[cell_index(grid_, p)];
    if (m == kCalibration) throw std::invalid_argument("SamplingPattern: calibration point is protected");
    if (m == kEmpty) throw std::invalid_argument("SamplingPattern: point not in pattern");
    m = kEmpty;
    --count_;
  }

  /// All points in lexicographic (ky, kz, t) order.
  std::vector<Point> points() const {
    std::vector<Point> out;
    out.reserve(count_);
    for (int ky = 0; ky < grid_.ny; ++ky)
      for (int kz = 0; kz < grid_.nz; ++kz)
        for (int t = 0; t < grid_.nt; ++t)
          if (mask_[cell_index(grid_, ky, kz, t)] != kEmpty) out.push_back({ky, kz, t});
    return out;
  }

  bool operator==(const SamplingPattern& o) const {
    return grid_.same_grid(o.grid_) && mask_ == o.mask_;
  }

 private:
  GridShape grid_;
  std::vector<std::uint8_t> mask_;
  std::size_t count_ = 0;
  std::size_t cal_count_ = 0;
};

inline double acceleration_factor(const SamplingPattern& sp) {
  return static_cast<double>(sp.grid().cells()) / static_cast<double>(sp.size());
}

/// M = round(N / AF)
inline std::size_t budget_for_af(const GridShape& g, double af) {
  if (!(af >= 1.0)) throw ConfigError("acceleration factor must be >= 1");
  return static_cast<std::size_t>(std::llround(static_cast<double>(g.cells()) / af));
}

// ---------------------------------------------------------------------------
// Vector helpers

/// <a, b> = sum conj(a) * b
inline cplx inner(std::span<const cplx> a, std::span<const cplx> b) {
  if (a.size() != b.size()) throw ShapeError("inner: length mismatch");
  cplx acc{};
  for (std::size_t i = 0; i < a.size(); ++i) acc += std::conj(a[i]) * b[i];
  return acc;
}

inline double norm_sq(std::span<const cplx> a) {
  double acc = 0.0;
  for (const auto& v : a) acc += std::norm(v);
  return acc;
}

// ---------------------------------------------------------------------------
// Transforms and encoding

inline KSpaceData fft2_ortho(KSpaceData v) {
  if (v.data.size() != v.shape.kspace_size()) throw ShapeError("fft2_ortho: data does not match shape");
  fft2_ortho_inplace(v.data, v.shape.ny, v.shape.nz);
  return v;
}

inline KSpaceData ifft2_ortho(KSpaceData v) {
  if (v.data.size() != v.shape.kspace_size()) throw ShapeError("ifft2_ortho: data does not match shape");
  ifft2_ortho_inplace(v.data, v.shape.ny, v.shape.nz);
  return v;
}

namespace detail {

inline void check_encode_shapes(const GridShape& img, const CoilMap& c) {
  if (img.ny != c.shape().ny || img.nz != c.shape().nz) {
    throw ShapeError("encode: image " + img.str() + " incompatible with coil map " + c.shape().str());
  }
}

inline GridShape kspace_shape(const GridShape& img, const CoilMap& c) {
  GridShape g = img;
  g.nc = c.shape().nc;
  return g;
}

}  // namespace detail

/// m = F C x
inline KSpaceData forward_encode(const ImageStack& x, const CoilMap& c) {
  detail::check_encode_shapes(x.shape, c);
  KSpaceData m(detail::kspace_shape(x.shape, c));
  const std::size_t fs = m.shape.frame_size();
  for (int s = 0; s < m.shape.nc; ++s) {
    auto cs = c.coil(s);
    for (int t = 0; t < m.shape.nt; ++t) {
      auto out = m.slice(s, t);
      const cplx* xt = x.data.data() + t * fs;
      for (std::size_t p = 0; p < fs; ++p) out[p] = cs[p] * xt[p];
    }
  }
  fft2_ortho_inplace(m.data, m.shape.ny, m.shape.nz);
  return m;
}

/// Zeroes every coil's samples outside the pattern (S_Omega as a mask).
inline void apply_sampling_inplace(KSpaceData& m, const SamplingPattern& sp) {
  if (!m.shape.same_grid(sp.grid())) throw ShapeError("apply_sampling: grid mismatch");
  const std::size_t cells = m.shape.cells();
  const auto mask = sp.mask();
  for (int s = 0; s < m.shape.nc; ++s) {
    cplx* d = m.data.data() + s * cells;
    for (std::size_t i = 0; i < cells; ++i)
      if (mask[i] == SamplingPattern::kEmpty) d[i] = cplx{};
  }
}

inline KSpaceData apply_sampling(KSpaceData m, const SamplingPattern& sp) {
  apply_sampling_inplace(m, sp);
  return m;
}

/// m_bar = S_Omega F C x
inline KSpaceData encode_sampled(const ImageStack& x, const CoilMap& c, const SamplingPattern& sp) {
  return apply_sampling(forward_encode(x, c), sp);
}

/// E*_Omega m_bar = sum_s conj(c_s) . ifft2(mask(m_bar_s)); the zero-filled image.
inline ImageStack adjoint_encode(const KSpaceData& mbar, const CoilMap& c, const SamplingPattern& sp) {
  if (!mbar.shape.same_grid(sp.grid())) throw ShapeError("adjoint_encode: grid mismatch with pattern");
  if (mbar.shape.nc != c.shape().nc || mbar.shape.ny != c.shape().ny || mbar.shape.nz != c.shape().nz) {
    throw ShapeError("adjoint_encode: k-space " + mbar.shape.str() + " incompatible with coil map " +
                     c.shape().str());
  }
  KSpaceData tmp = apply_sampling(mbar, sp);
  ifft2_ortho_inplace(tmp.data, tmp.shape.ny, tmp.shape.nz);
  GridShape ig = mbar.shape;
  ig.nc = 1;
  ImageStack x(ig);
  const std::size_t fs = ig.frame_size();
  for (int s = 0; s < tmp.shape.nc; ++s) {
    auto cs = c.coil(s);
    for (int t = 0; t < ig.nt; ++t) {
      auto in = tmp.slice(s, t);
      cplx* xt = x.data.data() + t * fs;
      for (std::size_t p = 0; p < fs; ++p) xt[p] += std::conj(cs[p]) * in[p];
    }
  }
  return x;
}

/// E*_Omega E_Omega x
inline ImageStack normal_encode(const ImageStack& x, const CoilMap& c, const SamplingPattern& sp) {
  return adjoint_encode(encode_sampled(x, c, sp), c, sp);
}

}  // namespace vnsp
