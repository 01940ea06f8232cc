#pragma once

// Bias-accelerated subset selection over the sampling pattern with the network
// parameters held fixed.
//
// Each iteration removes up to K points chosen by the r-map and adds up to K
// points chosen by the epsilon-map. While |Omega| differs from the budget M the
// candidate is always taken (growth or shrink phase, one-sided moves only).
// At the budget, adds and removes are balanced and the candidate is accepted
// iff it does not raise the cost (monotone) or unconditionally (non-monotone);
// each rejection shrinks K to floor((K - 1) * alpha) + 1.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <ostream>
#include <span>
#include <sstream>
#include <vector>

#include "vnsp/dataset.hpp"
#include "vnsp/errors.hpp"
#include "vnsp/kspace.hpp"
#include "vnsp/random.hpp"
#include "vnsp/varnet.hpp"

namespace vnsp {

/// Extra restrictions on which cells may be added.
struct PositionalConstraints {
  /// Cells farther than this from the k-space centre are never added; <= 0 disables.
  double max_radius = 0.0;

  bool allows(const GridShape& g, const Point& p) const {
    if (max_radius <= 0.0) return true;
    return std::hypot(p.ky - g.ny / 2, p.kz - g.nz / 2) <= max_radius;
  }
};

struct BassConfig {
  int k_init = 64;
  double alpha = 0.5;
  int max_iters = 200;  // L
  double rho_add = 0.25;
  double rho_remove = 0.25;
  double delta = 1e-12;
  bool monotone = true;
  bool stop_at_k1 = true;
  PositionalConstraints pc;

  void validate() const {
    if (k_init < 1) throw ConfigError("bass: k_init must be >= 1");
    if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("bass: alpha must be in (0, 1)");
    if (max_iters < 1) throw ConfigError("bass: max_iters must be >= 1");
    if (!(rho_add > 0.0 && rho_add <= 1.0) || !(rho_remove > 0.0 && rho_remove <= 1.0)) {
      throw ConfigError("bass: rho_add and rho_remove must be in (0, 1]");
    }
    if (!(delta > 0.0)) throw ConfigError("bass: delta must be > 0");
  }
};

/// K <- floor((K - 1) * alpha) + 1
inline int shrink_k(int k, double alpha) {
  return static_cast<int>(std::floor((k - 1) * alpha)) + 1;
}

/// Per-cell measures of importance, [t][ky][kz] layout.
struct ErrorMaps {
  GridShape grid;
  std::vector<double> eps_map;  // mean k-space error energy per coil
  std::vector<double> r_map;    // mean error-to-data energy ratio
};

struct Evaluation {
  double cost = 0.0;
  ErrorMaps maps;
};

/// F(Omega) together with the epsilon- and r-maps of the same reconstructions.
/// The cost is accumulated exactly as cost_over_dataset does, so both agree bitwise.
inline Evaluation evaluate(const VnParams& params, const SamplingPattern& sp, const Dataset& data, double delta) {
  data.check_nonempty("compute_error_maps");
  const GridShape& g = data.grid;
  const std::size_t cells = sp.grid().cells();
  Evaluation ev;
  ev.maps.grid = sp.grid();
  ev.maps.eps_map.assign(cells, 0.0);
  ev.maps.r_map.assign(cells, 0.0);
  std::vector<double> err(cells), ref(cells);
  double acc = 0.0;
  for (const auto& item : data.items) {
    const ImageStack x_hat = reconstruct(params, sp, item);
    acc += loss(item.image, x_hat);
    ImageStack diff = item.image;
    for (std::size_t i = 0; i < diff.data.size(); ++i) diff.data[i] -= x_hat.data[i];
    const KSpaceData e = forward_encode(diff, item.coils);
    const KSpaceData m = forward_encode(item.image, item.coils);
    std::fill(err.begin(), err.end(), 0.0);
    std::fill(ref.begin(), ref.end(), 0.0);
    for (int s = 0; s < e.shape.nc; ++s)
      for (std::size_t i = 0; i < cells; ++i) {
        err[i] += std::norm(e.data[s * cells + i]);
        ref[i] += std::norm(m.data[s * cells + i]);
      }
    for (std::size_t i = 0; i < cells; ++i) {
      ev.maps.eps_map[i] += err[i];
      ev.maps.r_map[i] += (err[i] + delta) / (ref[i] + delta);
    }
  }
  const double ni = static_cast<double>(data.size());
  ev.cost = acc / ni;
  const double eps_norm = 1.0 / (ni * g.nc);
  for (auto& v : ev.maps.eps_map) v *= eps_norm;
  for (auto& v : ev.maps.r_map) v /= ni;
  return ev;
}

inline ErrorMaps compute_error_maps(const VnParams& params, const SamplingPattern& sp, const Dataset& data,
                                    double delta) {
  return evaluate(params, sp, data, delta).maps;
}

namespace detail {

/// Uniform pool of max(ceil(rho * |cand|), min(K, |cand|)) candidates, then the
/// K pool members with the largest measure (ties: lexicographic order).
inline std::vector<Point> biased_select(const GridShape& g, std::vector<Point> cand, std::size_t k, double rho,
                                        std::span<const double> measure, Rng& rng) {
  if (k == 0 || cand.empty()) return {};
  std::size_t pool = static_cast<std::size_t>(std::ceil(rho * static_cast<double>(cand.size())));
  pool = std::min(cand.size(), std::max(pool, std::min(k, cand.size())));
  for (std::size_t i = 0; i < pool; ++i) {
    std::swap(cand[i], cand[i + uniform_index(rng, cand.size() - i)]);
  }
  cand.resize(pool);
  std::sort(cand.begin(), cand.end(), [&](const Point& a, const Point& b) {
    const double ma = measure[cell_index(g, a)], mb = measure[cell_index(g, b)];
    return ma != mb ? ma > mb : a < b;
  });
  if (cand.size() > k) cand.resize(k);
  std::sort(cand.begin(), cand.end());
  return cand;
}

}  // namespace detail

/// Up to K cells of Gamma \ Omega (restricted by `pc`) biased towards large epsilon.
inline std::vector<Point> select_add(const SamplingPattern& sp, std::size_t k, double rho_add,
                                     std::span<const double> eps_map, const PositionalConstraints& pc, Rng& rng) {
  const GridShape& g = sp.grid();
  if (eps_map.size() != g.cells()) throw ShapeError("select_add: measure does not match grid");
  std::vector<Point> cand;
  for (int ky = 0; ky < g.ny; ++ky)
    for (int kz = 0; kz < g.nz; ++kz)
      for (int t = 0; t < g.nt; ++t) {
        const Point p{ky, kz, t};
        if (!sp.contains(p) && pc.allows(g, p)) cand.push_back(p);
      }
  return detail::biased_select(g, std::move(cand), k, rho_add, eps_map, rng);
}

/// Up to K cells of Omega \ calibration biased towards large r.
inline std::vector<Point> select_remove(const SamplingPattern& sp, std::size_t k, double rho_remove,
                                        std::span<const double> r_map, Rng& rng) {
  const GridShape& g = sp.grid();
  if (r_map.size() != g.cells()) throw ShapeError("select_remove: measure does not match grid");
  std::vector<Point> cand;
  for (const Point& p : sp.points())
    if (!sp.is_calibration(p)) cand.push_back(p);
  return detail::biased_select(g, std::move(cand), k, rho_remove, r_map, rng);
}

struct BassStep {
  int iter = 0;
  int k = 0;  // K in effect for this iteration
  bool accepted = false;
  double cost = 0.0;  // F of the current pattern after the decision
  std::size_t points = 0;
};

struct BassResult {
  SamplingPattern sp;
  double cost = 0.0;
  int final_k = 0;
  std::vector<BassStep> trace;  // entry 0 is the initial pattern
};

inline BassResult bass_run(const BassConfig& config, const SamplingPattern& sp_init, std::size_t budget,
                           const VnParams& params, const Dataset& data, Rng& rng) {
  config.validate();
  data.check_nonempty("bass_run");
  if (budget < sp_init.calibration_size() || budget > sp_init.grid().cells()) {
    throw ConfigError("bass: budget M = " + std::to_string(budget) + " infeasible (calibration " +
                      std::to_string(sp_init.calibration_size()) + ", grid " +
                      std::to_string(sp_init.grid().cells()) + ")");
  }
  SamplingPattern sp = sp_init;
  Evaluation cur = evaluate(params, sp, data, config.delta);
  int k = config.k_init;
  BassResult out;
  out.trace.push_back({0, k, true, cur.cost, sp.size()});

  for (int l = 1; l <= config.max_iters; ++l) {
    const std::size_t size = sp.size();
    const bool at_budget = size == budget;
    std::size_t k_add = 0, k_remove = 0;
    if (size < budget) {
      k_add = std::min<std::size_t>(k, budget - size);
    } else if (size > budget) {
      k_remove = std::min<std::size_t>(k, size - budget);
    } else {
      const std::size_t removable = sp.size() - sp.calibration_size();
      std::size_t addable = 0;
      for (std::size_t i = 0; i < sp.grid().cells(); ++i)
        if (!sp.contains_cell(i) && config.pc.allows(sp.grid(), cell_point(sp.grid(), i))) ++addable;
      k_add = k_remove = std::min({static_cast<std::size_t>(k), removable, addable});
    }
    const auto removed = select_remove(sp, k_remove, config.rho_remove, cur.maps.r_map, rng);
    const auto added = select_add(sp, k_add, config.rho_add, cur.maps.eps_map, config.pc, rng);

    SamplingPattern cand = sp;
    for (const Point& p : removed) cand.remove(p);
    for (const Point& p : added) cand.add(p);
    Evaluation next = evaluate(params, cand, data, config.delta);

    const bool accept = !at_budget || !config.monotone || next.cost <= cur.cost;
    const int k_used = k;
    bool stop = false;
    if (accept) {
      sp = std::move(cand);
      cur = std::move(next);
    } else if (config.stop_at_k1 && k == 1) {
      stop = true;
    } else {
      k = shrink_k(k, config.alpha);
    }
    out.trace.push_back({l, k_used, accept, cur.cost, sp.size()});
    if (stop) break;
  }
  out.sp = std::move(sp);
  out.cost = cur.cost;
  out.final_k = k;
  return out;
}

/// CSV with header `iter,K,accepted,cost`.
inline void write_bass_trace_csv(std::ostream& os, const std::vector<BassStep>& trace) {
  os << "iter,K,accepted,cost\n";
  for (const auto& s : trace) {
    std::ostringstream cost;
    cost << std::setprecision(17) << s.cost;
    os << s.iter << ',' << s.k << ',' << (s.accepted ? 1 : 0) << ',' << cost.str() << '\n';
  }
}

}  // namespace vnsp
