#pragma once

// Synthetic multi-coil dataset: smooth complex ellipse phantoms with optional
// per-region exponential signal decay across frames, Gaussian coil profiles
// with linear phase, and k-space normalized to unit peak magnitude.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include "vnsp/dataset.hpp"
#include "vnsp/errors.hpp"
#include "vnsp/kspace.hpp"
#include "vnsp/random.hpp"

namespace vnsp {

struct PhantomConfig {
  int min_ellipses = 4;
  int max_ellipses = 10;
  double edge_width = 0.05;      // tanh edge width in normalized units
  double phase_strength = 0.6;   // max coefficient of the smooth background phase (rad)
  double min_decay = 0.05;       // per-frame decay rates
  double max_decay = 0.5;
  double coil_sigma = 0.9;       // Gaussian coil width in normalized units
  double coil_radius = 1.2;      // coil centres lie on this circle

  void validate() const {
    if (min_ellipses < 1 || max_ellipses < min_ellipses) throw ConfigError("phantom: need 1 <= min_ellipses <= max_ellipses");
    if (!(edge_width > 0.0)) throw ConfigError("phantom: edge_width must be > 0");
    if (!(min_decay >= 0.0 && max_decay >= min_decay)) throw ConfigError("phantom: need 0 <= min_decay <= max_decay");
    if (!(coil_sigma > 0.0)) throw ConfigError("phantom: coil_sigma must be > 0");
  }
};

/// Divides by the largest coil-wise magnitude; throws on all-zero input.
inline KSpaceData normalize_kspace(KSpaceData m) {
  double peak = 0.0;
  for (const auto& v : m.data) peak = std::max(peak, std::abs(v));
  if (!(peak > 0.0)) throw NumericError("normalize_kspace: all-zero data");
  for (auto& v : m.data) v /= peak;
  return m;
}

namespace detail {

inline double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * open_unit(rng); }

inline ImageStack make_phantom(const GridShape& g, const PhantomConfig& pc, Rng& rng) {
  struct Ellipse {
    double cu, cv, a, b, cos_t, sin_t, decay;
    cplx amp;
  };
  const int count = pc.min_ellipses + static_cast<int>(uniform_index(rng, pc.max_ellipses - pc.min_ellipses + 1));
  std::vector<Ellipse> es;
  for (int e = 0; e < count; ++e) {
    Ellipse el;
    const bool body = e == 0;
    el.cu = body ? uniform(rng, -0.08, 0.08) : uniform(rng, -0.45, 0.45);
    el.cv = body ? uniform(rng, -0.08, 0.08) : uniform(rng, -0.45, 0.45);
    el.a = body ? uniform(rng, 0.6, 0.85) : uniform(rng, 0.08, 0.4);
    el.b = body ? uniform(rng, 0.6, 0.85) : uniform(rng, 0.08, 0.4);
    const double th = uniform(rng, 0.0, std::numbers::pi);
    el.cos_t = std::cos(th);
    el.sin_t = std::sin(th);
    el.decay = uniform(rng, pc.min_decay, pc.max_decay);
    const double mag = body ? uniform(rng, 0.5, 1.0) : uniform(rng, -0.5, 0.8);
    el.amp = std::polar(1.0, uniform(rng, -0.4, 0.4)) * mag;
    es.push_back(el);
  }
  const double p1 = uniform(rng, -pc.phase_strength, pc.phase_strength);
  const double p2 = uniform(rng, -pc.phase_strength, pc.phase_strength);
  const double p3 = uniform(rng, -pc.phase_strength, pc.phase_strength);

  ImageStack x(g);
  for (int y = 0; y < g.ny; ++y) {
    const double u = 2.0 * (y + 0.5) / g.ny - 1.0;
    for (int z = 0; z < g.nz; ++z) {
      const double v = 2.0 * (z + 0.5) / g.nz - 1.0;
      const cplx phase = std::polar(1.0, p1 * u + p2 * v + p3 * u * v);
      for (int t = 0; t < g.nt; ++t) {
        cplx acc{};
        for (const auto& el : es) {
          const double du = u - el.cu, dv = v - el.cv;
          const double ru = (du * el.cos_t + dv * el.sin_t) / el.a;
          const double rv = (-du * el.sin_t + dv * el.cos_t) / el.b;
          const double rho = std::sqrt(ru * ru + rv * rv);
          const double w = 0.5 * (1.0 - std::tanh((rho - 1.0) / pc.edge_width));
          acc += el.amp * w * std::exp(-el.decay * t);
        }
        x.at(y, z, t) = acc * phase;
      }
    }
  }
  return x;
}

inline CoilMap make_coils(const GridShape& g, const PhantomConfig& pc, Rng& rng) {
  const std::size_t fs = g.frame_size();
  std::vector<cplx> raw(fs * g.nc);
  const double offset = uniform(rng, 0.0, 2.0 * std::numbers::pi);
  for (int s = 0; s < g.nc; ++s) {
    const double ang = offset + 2.0 * std::numbers::pi * s / g.nc + uniform(rng, -0.2, 0.2);
    const double cu = pc.coil_radius * std::cos(ang), cv = pc.coil_radius * std::sin(ang);
    const double ku = uniform(rng, -1.5, 1.5), kv = uniform(rng, -1.5, 1.5), ph0 = uniform(rng, -3.0, 3.0);
    for (int y = 0; y < g.ny; ++y) {
      const double u = 2.0 * (y + 0.5) / g.ny - 1.0;
      for (int z = 0; z < g.nz; ++z) {
        const double v = 2.0 * (z + 0.5) / g.nz - 1.0;
        const double d2 = (u - cu) * (u - cu) + (v - cv) * (v - cv);
        raw[s * fs + y * g.nz + z] =
            std::polar(std::exp(-d2 / (2.0 * pc.coil_sigma * pc.coil_sigma)), ph0 + ku * u + kv * v);
      }
    }
  }
  return CoilMap(g, std::move(raw));
}

}  // namespace detail

/// `count` items on grid `g` (nc = coil count). Images are scaled so that the
/// fully sampled k-space of every item has unit peak magnitude.
inline Dataset generate_phantom_dataset(const GridShape& g, int count, Dataset::Split split,
                                        const PhantomConfig& pc, std::uint64_t seed) {
  g.validate();
  pc.validate();
  if (count < 1) throw ConfigError("phantom dataset: item count must be >= 1");
  Dataset d;
  d.grid = g;
  d.split = split;
  d.seed = seed;
  const std::uint64_t stream = split == Dataset::Split::kTrain ? 100 : 200;
  for (int i = 0; i < count; ++i) {
    Rng rng(derive_seed(seed, stream, static_cast<std::uint64_t>(i)));
    ImageStack x = detail::make_phantom(g, pc, rng);
    CoilMap c = detail::make_coils(g, pc, rng);
    double peak = 0.0;
    for (const auto& v : forward_encode(x, c).data) peak = std::max(peak, std::abs(v));
    for (auto& v : x.data) v /= peak;
    d.items.push_back({std::move(x), std::move(c)});
  }
  return d;
}

}  // namespace vnsp
