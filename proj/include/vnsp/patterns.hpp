#pragma once

// Baseline sampling-pattern generators and the text SP file format.
//
// Every generator returns exactly M points, includes the calibration block and
// is a pure function of its arguments and seed. The non-calibration points are
// chosen by walking one weighted random ordering of the candidate cells
// (Efraimidis-Spirakis keys); uniform, variable density and Poisson-disc only
// differ in the weights and in the acceptance test applied along that walk. As
// a consequence a zero disc radius reproduces the plain density sampler
// exactly, and a zero exponent reproduces the uniform sampler exactly.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "vnsp/errors.hpp"
#include "vnsp/kspace.hpp"
#include "vnsp/random.hpp"

namespace vnsp {

struct CalibrationSpec {
  enum class Frames { kAll, kFirstOnly };

  int half_width_y = 4;
  int half_width_z = 4;
  Frames frames = Frames::kAll;
};

struct DensityProfile {
  enum class Kind { kUniform, kPolynomial };

  Kind kind = Kind::kPolynomial;
  double exponent = 2.0;
  /// k-space centre in grid indices; negative means the DC bin (ny/2, nz/2).
  double center_y = -1.0;
  double center_z = -1.0;
  /// Radius (fraction of the half diagonal) at which the density has halved
  /// for exponent 1.
  double knee = 0.05;
};

/// Generator output with Poisson-disc bookkeeping.
struct GeneratedPattern {
  SamplingPattern sp;
  double final_min_dist = 0.0;
  int relaxations = 0;
};

namespace detail {

inline double center_y(const GridShape& g) { return g.ny / 2; }
inline double center_z(const GridShape& g) { return g.nz / 2; }

inline double half_diagonal(const GridShape& g) {
  return 0.5 * std::sqrt(static_cast<double>(g.ny) * g.ny + static_cast<double>(g.nz) * g.nz);
}

inline double radius_from_center(const GridShape& g, int ky, int kz) {
  const double dy = ky - center_y(g);
  const double dz = kz - center_z(g);
  return std::sqrt(dy * dy + dz * dz);
}

}  // namespace detail

/// Sampling density at (ky, kz); strictly positive.
inline double density_at(const DensityProfile& prof, const GridShape& g, int ky, int kz) {
  if (prof.kind == DensityProfile::Kind::kUniform || prof.exponent == 0.0) return 1.0;
  const double cy = prof.center_y < 0 ? detail::center_y(g) : prof.center_y;
  const double cz = prof.center_z < 0 ? detail::center_z(g) : prof.center_z;
  const double r = std::hypot(ky - cy, kz - cz) / detail::half_diagonal(g);
  return std::pow(1.0 + r / prof.knee, -prof.exponent);
}

inline void validate(const DensityProfile& prof) {
  if (!(prof.exponent >= 0.0)) throw ConfigError("density exponent must be >= 0");
  if (!(prof.knee > 0.0)) throw ConfigError("density knee must be > 0");
}

inline SamplingPattern empty_with_calibration(const GridShape& grid, const CalibrationSpec& cal) {
  SamplingPattern sp(grid);
  const GridShape& g = sp.grid();
  const int cy = g.ny / 2;
  const int cz = g.nz / 2;
  if (cal.half_width_y < 0 || cal.half_width_z < 0 || cy - cal.half_width_y < 0 ||
      cy + cal.half_width_y > g.ny - 1 || cz - cal.half_width_z < 0 || cz + cal.half_width_z > g.nz - 1) {
    throw ConfigError("calibration region " + std::to_string(2 * cal.half_width_y + 1) + "x" +
                      std::to_string(2 * cal.half_width_z + 1) + " does not fit grid " + g.str());
  }
  const int frames = cal.frames == CalibrationSpec::Frames::kAll ? g.nt : 1;
  for (int t = 0; t < frames; ++t)
    for (int ky = cy - cal.half_width_y; ky <= cy + cal.half_width_y; ++ky)
      for (int kz = cz - cal.half_width_z; kz <= cz + cal.half_width_z; ++kz) sp.add({ky, kz, t}, true);
  return sp;
}

inline std::size_t calibration_size(const GridShape& grid, const CalibrationSpec& cal) {
  return empty_with_calibration(grid, cal).size();
}

/// Expected inclusion count per cell for a density sampler at budget M:
/// calibration cells get 1, the rest share M - |cal| in proportion to density.
inline std::vector<double> normalized_density(const GridShape& grid, std::size_t M, const DensityProfile& prof,
                                              const CalibrationSpec& cal) {
  const SamplingPattern base = empty_with_calibration(grid, cal);
  const GridShape& g = base.grid();
  std::vector<double> w(g.cells(), 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (base.contains_cell(i)) continue;
    const Point p = cell_point(g, i);
    w[i] = density_at(prof, g, p.ky, p.kz);
    total += w[i];
  }
  const double remaining = static_cast<double>(M) - static_cast<double>(base.size());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = base.contains_cell(i) ? 1.0 : w[i] * remaining / total;
  return w;
}

namespace detail {

inline void check_budget(const SamplingPattern& base, std::size_t M) {
  if (M < base.size() || M > base.grid().cells()) {
    throw ConfigError("budget M = " + std::to_string(M) + " outside [" + std::to_string(base.size()) + ", " +
                      std::to_string(base.grid().cells()) + "]");
  }
}

/// Non-calibration cells ordered by Efraimidis-Spirakis keys log(u)/w,
/// largest first. Ties fall back to lexicographic order.
inline std::vector<Point> weighted_order(const SamplingPattern& base, const DensityProfile& prof, Rng& rng) {
  const GridShape& g = base.grid();
  struct Keyed {
    double key;
    std::size_t lex;
    Point p;
  };
  std::vector<Keyed> cand;
  cand.reserve(g.cells() - base.size());
  // Draw in lexicographic order so the stream does not depend on memory layout.
  for (int ky = 0; ky < g.ny; ++ky)
    for (int kz = 0; kz < g.nz; ++kz)
      for (int t = 0; t < g.nt; ++t) {
        const Point p{ky, kz, t};
        if (base.contains(p)) continue;
        const double u = open_unit(rng);
        const double w = density_at(prof, g, ky, kz);
        cand.push_back({std::log(u) / w, lex_index(g, p), p});
      }
  std::sort(cand.begin(), cand.end(), [](const Keyed& a, const Keyed& b) {
    return a.key != b.key ? a.key > b.key : a.lex < b.lex;
  });
  std::vector<Point> out;
  out.reserve(cand.size());
  for (const auto& c : cand) out.push_back(c.p);
  return out;
}

/// Dart throwing along `order` with a per-point exclusion radius
/// radius(p) = min_dist * scale(p); two points conflict when their distance is
/// below the mean of their radii. Relaxes min_dist by 0.9 on exhaustion.
template <class ScaleFn>
GeneratedPattern dart_throw(SamplingPattern sp, std::size_t M, const std::vector<Point>& order, double min_dist,
                            ScaleFn scale) {
  const GridShape g = sp.grid();
  GeneratedPattern result;
  result.final_min_dist = min_dist;
  std::vector<std::vector<Point>> accepted(g.nt);
  std::vector<char> taken(order.size(), 0);

  auto conflicts = [&](const Point& c, double d0) {
    if (d0 <= 0.0) return false;
    const double sc = scale(c);
    for (const Point& p : accepted[c.t]) {
      const double need = 0.5 * d0 * (sc + scale(p));
      const double dy = c.ky - p.ky;
      const double dz = c.kz - p.kz;
      if (dy * dy + dz * dz < need * need) return true;
    }
    return false;
  };

  while (sp.size() < M) {
    for (std::size_t i = 0; i < order.size() && sp.size() < M; ++i) {
      if (taken[i]) continue;
      const Point& c = order[i];
      if (conflicts(c, result.final_min_dist)) continue;
      sp.add(c);
      accepted[c.t].push_back(c);
      taken[i] = 1;
    }
    if (sp.size() < M) {
      result.final_min_dist *= 0.9;
      ++result.relaxations;
    }
  }
  result.sp = std::move(sp);
  return result;
}

}  // namespace detail

inline SamplingPattern generate_variable_density(const GridShape& grid, std::size_t M, const DensityProfile& prof,
                                                 const CalibrationSpec& cal, std::uint64_t seed) {
  validate(prof);
  SamplingPattern sp = empty_with_calibration(grid, cal);
  detail::check_budget(sp, M);
  Rng rng(seed);
  const auto order = detail::weighted_order(sp, prof, rng);
  for (std::size_t i = 0; sp.size() < M; ++i) sp.add(order[i]);
  return sp;
}

inline SamplingPattern generate_uniform(const GridShape& grid, std::size_t M, const CalibrationSpec& cal,
                                        std::uint64_t seed) {
  DensityProfile flat;
  flat.kind = DensityProfile::Kind::kUniform;
  return generate_variable_density(grid, M, flat, cal, seed);
}

inline GeneratedPattern generate_poisson_disc(const GridShape& grid, std::size_t M, double min_dist,
                                              const CalibrationSpec& cal, std::uint64_t seed) {
  if (!(min_dist >= 0.0)) throw ConfigError("min_dist must be >= 0");
  SamplingPattern sp = empty_with_calibration(grid, cal);
  detail::check_budget(sp, M);
  DensityProfile flat;
  flat.kind = DensityProfile::Kind::kUniform;
  Rng rng(seed);
  const auto order = detail::weighted_order(sp, flat, rng);
  return detail::dart_throw(std::move(sp), M, order, min_dist, [](const Point&) { return 1.0; });
}

/// Variable-density Poisson disc: candidates are proposed in density order and
/// the exclusion radius grows as min_dist_at_center * (1 + r / r_scale).
/// r_scale <= 0 selects a quarter of the grid diagonal.
inline GeneratedPattern generate_vd_pd(const GridShape& grid, std::size_t M, const DensityProfile& prof,
                                       double min_dist_at_center, const CalibrationSpec& cal, std::uint64_t seed,
                                       double r_scale = 0.0) {
  validate(prof);
  if (!(min_dist_at_center >= 0.0)) throw ConfigError("min_dist_at_center must be >= 0");
  SamplingPattern sp = empty_with_calibration(grid, cal);
  detail::check_budget(sp, M);
  const GridShape g = sp.grid();
  if (r_scale <= 0.0) r_scale = 0.5 * detail::half_diagonal(g);
  Rng rng(seed);
  const auto order = detail::weighted_order(sp, prof, rng);
  return detail::dart_throw(std::move(sp), M, order, min_dist_at_center, [&](const Point& p) {
    return 1.0 + detail::radius_from_center(g, p.ky, p.kz) / r_scale;
  });
}

// ---------------------------------------------------------------------------
// SP file: "sp v1 ny nz nt m", then "ky kz t" per point in lexicographic order,
// calibration points carry a trailing " c".

inline std::string format_sp(const SamplingPattern& sp) {
  const GridShape& g = sp.grid();
  std::ostringstream os;
  os << "sp v1 " << g.ny << ' ' << g.nz << ' ' << g.nt << ' ' << sp.size() << '\n';
  for (const Point& p : sp.points()) {
    os << p.ky << ' ' << p.kz << ' ' << p.t;
    if (sp.is_calibration(p)) os << " c";
    os << '\n';
  }
  return os.str();
}

inline SamplingPattern parse_sp(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  std::size_t lineno = 0;
  auto fail = [&](const std::string& msg) { throw ParseError(msg, lineno); };

  if (!std::getline(is, line)) throw ParseError("empty SP file", 1);
  ++lineno;
  std::istringstream hs(line);
  std::string magic, version;
  long long ny = 0, nz = 0, nt = 0, m = 0;
  if (!(hs >> magic >> version >> ny >> nz >> nt >> m) || magic != "sp" || version != "v1") {
    fail("expected header 'sp v1 ny nz nt m'");
  }
  std::string extra;
  if (hs >> extra) fail("trailing tokens in header");
  if (ny < 1 || nz < 1 || nt < 1 || m < 0) fail("invalid header dimensions");

  SamplingPattern sp(GridShape{static_cast<int>(ny), static_cast<int>(nz), static_cast<int>(nt), 1});
  bool have_prev = false;
  Point prev;
  while (std::getline(is, line)) {
    ++lineno;
    std::istringstream ls(line);
    long long ky, kz, t;
    if (!(ls >> ky >> kz >> t)) fail("expected 'ky kz t [c]'");
    bool cal = false;
    std::string flag;
    if (ls >> flag) {
      if (flag != "c") fail("unknown flag '" + flag + "'");
      cal = true;
      if (ls >> extra) fail("trailing tokens");
    }
    const Point p{static_cast<int>(ky), static_cast<int>(kz), static_cast<int>(t)};
    if (ky < 0 || kz < 0 || t < 0 || !sp.in_grid(p)) fail("point outside grid");
    if (have_prev && p == prev) fail("duplicate point");
    if (have_prev && p < prev) fail("points not in ascending lexicographic order");
    sp.add(p, cal);
    prev = p;
    have_prev = true;
  }
  if (static_cast<long long>(sp.size()) != m) {
    throw ParseError("header declares " + std::to_string(m) + " points, file has " + std::to_string(sp.size()));
  }
  return sp;
}

inline void write_sp(const SamplingPattern& sp, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  const std::string text = format_sp(sp);
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

inline SamplingPattern read_sp(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return parse_sp(ss.str());
}

/// Reads a pattern and checks it against the grid it will be used with.
inline SamplingPattern read_sp(const std::filesystem::path& path, const GridShape& expected) {
  SamplingPattern sp = read_sp(path);
  if (!sp.grid().same_grid(expected)) {
    throw ShapeError("SP file " + path.string() + " has grid " + sp.grid().str() + ", expected " + expected.str());
  }
  return sp;
}

}  // namespace vnsp

namespace vnsp {

enum class PatternKind { kEmpty, kUniform, kVariableDensity, kPoissonDisc, kVdPd };

/// Generator parameters shared by every pattern family.
struct PatternSettings {
  CalibrationSpec cal;
  DensityProfile profile;
  double pd_min_dist = 1.5;
  double vdpd_min_dist = 1.0;
};

inline const char* pattern_kind_name(PatternKind k) {
  switch (k) {
    case PatternKind::kEmpty: return "empty";
    case PatternKind::kUniform: return "uniform";
    case PatternKind::kVariableDensity: return "vd";
    case PatternKind::kPoissonDisc: return "poisson";
    case PatternKind::kVdPd: return "vdpd";
  }
  return "?";
}

inline PatternKind parse_pattern_kind(const std::string& s) {
  for (auto k : {PatternKind::kEmpty, PatternKind::kUniform, PatternKind::kVariableDensity,
                 PatternKind::kPoissonDisc, PatternKind::kVdPd}) {
    if (s == pattern_kind_name(k)) return k;
  }
  throw ConfigError("unknown pattern kind '" + s + "' (expected empty|uniform|vd|poisson|vdpd)");
}

/// Pattern of the given family at budget M. `kEmpty` ignores M and returns
/// the calibration block alone.
inline SamplingPattern make_pattern(PatternKind kind, const GridShape& grid, std::size_t M,
                                    const PatternSettings& s, std::uint64_t seed) {
  switch (kind) {
    case PatternKind::kEmpty: return empty_with_calibration(grid, s.cal);
    case PatternKind::kUniform: return generate_uniform(grid, M, s.cal, seed);
    case PatternKind::kVariableDensity: return generate_variable_density(grid, M, s.profile, s.cal, seed);
    case PatternKind::kPoissonDisc: return generate_poisson_disc(grid, M, s.pd_min_dist, s.cal, seed).sp;
    case PatternKind::kVdPd: return generate_vd_pd(grid, M, s.profile, s.vdpd_min_dist, s.cal, seed).sp;
  }
  throw ConfigError("unknown pattern kind");
}

}  // namespace vnsp
