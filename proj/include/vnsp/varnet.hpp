#pragma once

// Unrolled variational network
//
//   x_1     = E*_Omega m_bar
//   x_{j+1} = x_j - alpha_j E*_Omega (E_Omega x_j - m_bar)
//                 - sum_f Kb_{j,f} * relu(K_{j,f} * x_j)
//
// with images carried as two real channels (re, im) through the filters and
// '*' a zero-padded spatio-temporal correlation whose temporal extent equals
// the number of frames. Gradients are obtained by hand-written reverse mode.

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "vnsp/dataset.hpp"
#include "vnsp/errors.hpp"
#include "vnsp/kspace.hpp"
#include "vnsp/random.hpp"

namespace vnsp {

struct VnConfig {
  int layers = 3;   // J
  int filters = 4;  // N_f
  int kernel = 5;   // spatial size, odd
  int frames = 1;   // temporal extent, equals N_t

  void validate() const {
    if (layers < 1) throw ConfigError("VnConfig: layers must be >= 1");
    if (filters < 1) throw ConfigError("VnConfig: filters must be >= 1");
    if (kernel < 1 || kernel % 2 == 0) throw ConfigError("VnConfig: kernel size must be odd and positive");
    if (frames < 1) throw ConfigError("VnConfig: frames must be >= 1");
  }

  /// Entries in one filter: 2 channels x frames x kernel x kernel.
  std::size_t kernel_len() const { return 2u * frames * kernel * kernel; }
  std::size_t layer_len() const { return 2u * filters * kernel_len() + 1; }
  std::size_t total() const { return layers * layer_len(); }

  std::size_t k_offset(int j, int f) const { return j * layer_len() + f * kernel_len(); }
  std::size_t kb_offset(int j, int f) const { return j * layer_len() + (filters + f) * kernel_len(); }
  std::size_t alpha_offset(int j) const { return j * layer_len() + 2u * filters * kernel_len(); }

  bool operator==(const VnConfig&) const = default;
};

namespace detail {

template <class Tag>
struct ParamVector {
  VnConfig config;
  std::vector<double> values;

  ParamVector() = default;
  explicit ParamVector(const VnConfig& c) : config(c), values(c.total(), 0.0) { c.validate(); }

  /// Filter f of layer j, channel ch: frames x kernel x kernel entries.
  std::span<double> k(int j, int f, int ch) {
    return {values.data() + config.k_offset(j, f) + ch * channel_len(), channel_len()};
  }
  std::span<const double> k(int j, int f, int ch) const {
    return {values.data() + config.k_offset(j, f) + ch * channel_len(), channel_len()};
  }
  std::span<double> kb(int j, int f, int ch) {
    return {values.data() + config.kb_offset(j, f) + ch * channel_len(), channel_len()};
  }
  std::span<const double> kb(int j, int f, int ch) const {
    return {values.data() + config.kb_offset(j, f) + ch * channel_len(), channel_len()};
  }
  double& alpha(int j) { return values[config.alpha_offset(j)]; }
  double alpha(int j) const { return values[config.alpha_offset(j)]; }

  std::size_t channel_len() const { return config.kernel_len() / 2; }

  bool operator==(const ParamVector&) const = default;
};

struct ParamsTag {};
struct GradientsTag {};

}  // namespace detail

/// Network parameters theta, stored flat in layer-major order: for each layer
/// the N_f filters K, the N_f filters Kb, then alpha.
using VnParams = detail::ParamVector<detail::ParamsTag>;
/// dF/dtheta, congruent with VnParams.
using Gradients = detail::ParamVector<detail::GradientsTag>;

/// Zero-mean uniform filters with scale 1/sqrt(k*k*Nt*N_f); alpha_j = 0.1.
inline VnParams init_params(const VnConfig& config, std::uint64_t seed) {
  VnParams p(config);
  Rng rng(seed);
  const double scale = 1.0 / std::sqrt(static_cast<double>(config.kernel) * config.kernel * config.frames *
                                       config.filters);
  for (int j = 0; j < config.layers; ++j) {
    for (std::size_t i = 0; i < 2u * config.filters * config.kernel_len(); ++i) {
      p.values[j * config.layer_len() + i] = scale * (2.0 * open_unit(rng) - 1.0);
    }
    p.alpha(j) = 0.1;
  }
  return p;
}

namespace detail {

struct PlaneDims {
  int nt, ny, nz;
  std::size_t size() const { return static_cast<std::size_t>(nt) * ny * nz; }
};

/// Calls fn(w_index, out_offset, in_offset, run_length) for every contiguous
/// row where out(p) pairs with in(p + d - center), zero padding excluded.
template <class Fn>
void for_each_tap(const PlaneDims& dims, int kernel, Fn&& fn) {
  const int c = kernel / 2;
  const int ct = (dims.nt - 1) / 2;
  std::size_t w = 0;
  for (int dt = 0; dt < dims.nt; ++dt) {
    const int ot = dt - ct;
    const int t0 = std::max(0, -ot), t1 = std::min(dims.nt, dims.nt - ot);
    for (int dy = 0; dy < kernel; ++dy) {
      const int oy = dy - c;
      const int y0 = std::max(0, -oy), y1 = std::min(dims.ny, dims.ny - oy);
      for (int dz = 0; dz < kernel; ++dz, ++w) {
        const int oz = dz - c;
        const int z0 = std::max(0, -oz), z1 = std::min(dims.nz, dims.nz - oz);
        if (z1 <= z0) continue;
        const std::size_t len = static_cast<std::size_t>(z1 - z0);
        for (int t = t0; t < t1; ++t)
          for (int y = y0; y < y1; ++y) {
            const std::size_t o = (static_cast<std::size_t>(t) * dims.ny + y) * dims.nz + z0;
            const std::size_t i = (static_cast<std::size_t>(t + ot) * dims.ny + (y + oy)) * dims.nz + (z0 + oz);
            fn(w, o, i, len);
          }
      }
    }
  }
}

/// out(p) += sum_d w(d) in(p + d - center)
inline void correlate_acc(std::span<double> out, std::span<const double> in, std::span<const double> w,
                          const PlaneDims& dims, int kernel) {
  for_each_tap(dims, kernel, [&](std::size_t wi, std::size_t o, std::size_t i, std::size_t len) {
    const double wv = w[wi];
    if (wv == 0.0) return;
    double* op = out.data() + o;
    const double* ip = in.data() + i;
    for (std::size_t n = 0; n < len; ++n) op[n] += wv * ip[n];
  });
}

/// Adjoint of correlate_acc with respect to `in`.
inline void correlate_adjoint_acc(std::span<double> in_grad, std::span<const double> out_grad,
                                  std::span<const double> w, const PlaneDims& dims, int kernel) {
  for_each_tap(dims, kernel, [&](std::size_t wi, std::size_t o, std::size_t i, std::size_t len) {
    const double wv = w[wi];
    if (wv == 0.0) return;
    double* ip = in_grad.data() + i;
    const double* op = out_grad.data() + o;
    for (std::size_t n = 0; n < len; ++n) ip[n] += wv * op[n];
  });
}

/// Gradient of correlate_acc with respect to the weights.
inline void kernel_grad_acc(std::span<double> w_grad, std::span<const double> out_grad, std::span<const double> in,
                            const PlaneDims& dims, int kernel) {
  for_each_tap(dims, kernel, [&](std::size_t wi, std::size_t o, std::size_t i, std::size_t len) {
    const double* op = out_grad.data() + o;
    const double* ip = in.data() + i;
    double acc = 0.0;
    for (std::size_t n = 0; n < len; ++n) acc += op[n] * ip[n];
    w_grad[wi] += acc;
  });
}

inline void split(std::span<const cplx> x, std::vector<double>& re, std::vector<double>& im) {
  re.resize(x.size());
  im.resize(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    re[i] = x[i].real();
    im[i] = x[i].imag();
  }
}

struct ForwardTrace {
  std::vector<ImageStack> x;                    // x_1 .. x_{J+1}
  std::vector<std::vector<cplx>> residual;      // A x_j - b per layer
  std::vector<std::vector<double>> pre;         // K_{j,f} * x_j, index j*N_f + f
};

inline void check_config(const VnParams& params, const GridShape& g) {
  params.config.validate();
  if (params.values.size() != params.config.total()) throw ShapeError("VnParams: payload size mismatch");
  if (params.config.frames != g.nt) {
    throw ShapeError("VnParams temporal extent " + std::to_string(params.config.frames) + " != grid frames " +
                     std::to_string(g.nt));
  }
}

inline ImageStack run_forward(const VnParams& params, const ImageStack& zero_filled, const CoilMap& coils,
                              const SamplingPattern& sp, ForwardTrace* trace) {
  const VnConfig& cfg = params.config;
  const GridShape& g = zero_filled.shape;
  const PlaneDims dims{g.nt, g.ny, g.nz};
  const std::size_t n = g.cells();

  ImageStack x = zero_filled;
  std::vector<double> re, im, u(n), reg_re(n), reg_im(n);
  if (trace) {
    trace->x.assign(1, x);
    trace->residual.clear();
    trace->pre.clear();
  }
  for (int j = 0; j < cfg.layers; ++j) {
    // data consistency: A x_j - b
    ImageStack ax = normal_encode(x, coils, sp);
    std::vector<cplx> r(n);
    for (std::size_t i = 0; i < n; ++i) r[i] = ax.data[i] - zero_filled.data[i];

    split(x.data, re, im);
    std::fill(reg_re.begin(), reg_re.end(), 0.0);
    std::fill(reg_im.begin(), reg_im.end(), 0.0);
    for (int f = 0; f < cfg.filters; ++f) {
      std::fill(u.begin(), u.end(), 0.0);
      correlate_acc(u, re, params.k(j, f, 0), dims, cfg.kernel);
      correlate_acc(u, im, params.k(j, f, 1), dims, cfg.kernel);
      if (trace) trace->pre.push_back(u);
      for (auto& v : u) v = v > 0.0 ? v : 0.0;
      correlate_acc(reg_re, u, params.kb(j, f, 0), dims, cfg.kernel);
      correlate_acc(reg_im, u, params.kb(j, f, 1), dims, cfg.kernel);
    }
    const double alpha = params.alpha(j);
    for (std::size_t i = 0; i < n; ++i) x.data[i] -= alpha * r[i] + cplx(reg_re[i], reg_im[i]);

    for (const auto& v : x.data) {
      if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) {
        throw NumericError("vn_forward: non-finite values after layer " + std::to_string(j + 1));
      }
    }
    if (trace) {
      trace->residual.push_back(std::move(r));
      trace->x.push_back(x);
    }
  }
  return x;
}

}  // namespace detail

/// x_hat = R_theta(m_bar, Omega)
inline ImageStack vn_forward(const VnParams& params, const KSpaceData& mbar, const SamplingPattern& sp,
                             const CoilMap& coils) {
  detail::check_config(params, mbar.shape);
  const ImageStack zf = adjoint_encode(mbar, coils, sp);
  return detail::run_forward(params, zf, coils, sp, nullptr);
}

/// ||x_ref - x_hat||^2
inline double loss(const ImageStack& x_ref, const ImageStack& x_hat) {
  if (!x_ref.shape.same_grid(x_hat.shape) || x_ref.data.size() != x_hat.data.size()) {
    throw ShapeError("loss: image shapes differ");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < x_ref.data.size(); ++i) acc += std::norm(x_ref.data[i] - x_hat.data[i]);
  return acc;
}

/// Reconstruction of a dataset item from its own simulated undersampled data.
inline ImageStack reconstruct(const VnParams& params, const SamplingPattern& sp, const DataItem& item) {
  return vn_forward(params, encode_sampled(item.image, item.coils, sp), sp, item.coils);
}

struct LossAndGradients {
  double loss = 0.0;
  Gradients grads;
};

/// Loss and exact gradients for one reference image with m_bar = E_Omega x_ref.
inline LossAndGradients vn_backward(const VnParams& params, const ImageStack& x_ref, const SamplingPattern& sp,
                                    const CoilMap& coils) {
  detail::check_config(params, x_ref.shape);
  const VnConfig& cfg = params.config;
  const GridShape& g = x_ref.shape;
  const detail::PlaneDims dims{g.nt, g.ny, g.nz};
  const std::size_t n = g.cells();

  const ImageStack zf = adjoint_encode(encode_sampled(x_ref, coils, sp), coils, sp);
  detail::ForwardTrace trace;
  const ImageStack x_hat = detail::run_forward(params, zf, coils, sp, &trace);

  LossAndGradients out{loss(x_ref, x_hat), Gradients(cfg)};
  Gradients& grads = out.grads;

  // dL/dx_hat as a complex carrier of the (re, im) gradient pair.
  ImageStack gx(g);
  for (std::size_t i = 0; i < n; ++i) gx.data[i] = 2.0 * (x_hat.data[i] - x_ref.data[i]);

  std::vector<double> gre, gim, xre, xim, a(n), da(n), in_re(n), in_im(n);
  for (int j = cfg.layers - 1; j >= 0; --j) {
    const auto& r = trace.residual[j];
    double ga = 0.0;
    for (std::size_t i = 0; i < n; ++i) ga -= gx.data[i].real() * r[i].real() + gx.data[i].imag() * r[i].imag();
    grads.alpha(j) = ga;

    // regularizer branch sees -g
    detail::split(gx.data, gre, gim);
    for (auto& v : gre) v = -v;
    for (auto& v : gim) v = -v;
    detail::split(trace.x[j].data, xre, xim);
    std::fill(in_re.begin(), in_re.end(), 0.0);
    std::fill(in_im.begin(), in_im.end(), 0.0);
    for (int f = 0; f < cfg.filters; ++f) {
      const auto& u = trace.pre[j * cfg.filters + f];
      for (std::size_t i = 0; i < n; ++i) a[i] = u[i] > 0.0 ? u[i] : 0.0;
      detail::kernel_grad_acc(grads.kb(j, f, 0), gre, a, dims, cfg.kernel);
      detail::kernel_grad_acc(grads.kb(j, f, 1), gim, a, dims, cfg.kernel);
      std::fill(da.begin(), da.end(), 0.0);
      detail::correlate_adjoint_acc(da, gre, params.kb(j, f, 0), dims, cfg.kernel);
      detail::correlate_adjoint_acc(da, gim, params.kb(j, f, 1), dims, cfg.kernel);
      for (std::size_t i = 0; i < n; ++i)
        if (!(u[i] > 0.0)) da[i] = 0.0;
      detail::kernel_grad_acc(grads.k(j, f, 0), da, xre, dims, cfg.kernel);
      detail::kernel_grad_acc(grads.k(j, f, 1), da, xim, dims, cfg.kernel);
      detail::correlate_adjoint_acc(in_re, da, params.k(j, f, 0), dims, cfg.kernel);
      detail::correlate_adjoint_acc(in_im, da, params.k(j, f, 1), dims, cfg.kernel);
    }

    // identity path, data-term path (A is self-adjoint) and filter path
    const ImageStack ag = normal_encode(gx, coils, sp);
    const double alpha = params.alpha(j);
    for (std::size_t i = 0; i < n; ++i) gx.data[i] += -alpha * ag.data[i] + cplx(in_re[i], in_im[i]);
  }

  for (double v : grads.values) {
    if (!std::isfinite(v)) throw NumericError("vn_backward: non-finite gradient");
  }
  return out;
}

/// (1/N_i) sum_i ||x_i - R_theta(E_Omega x_i, Omega)||^2
inline double cost_over_dataset(const VnParams& params, const SamplingPattern& sp, const Dataset& data) {
  data.check_nonempty("cost_over_dataset");
  double acc = 0.0;
  for (const auto& item : data.items) acc += loss(item.image, reconstruct(params, sp, item));
  return acc / static_cast<double>(data.size());
}

// ---------------------------------------------------------------------------
// Parameter file: "vnp1", then layers, filters, kernel, frames as uint32 LE,
// then the flat payload as IEEE-754 binary64 LE.

namespace detail {

inline void put_u32(std::string& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_f64(std::string& buf, double d) {
  const auto v = std::bit_cast<std::uint64_t>(d);
  for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline std::uint64_t get_le(const std::string& buf, std::size_t pos, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
  return v;
}

}  // namespace detail

inline std::string encode_params(const VnParams& p) {
  std::string buf = "vnp1";
  detail::put_u32(buf, static_cast<std::uint32_t>(p.config.layers));
  detail::put_u32(buf, static_cast<std::uint32_t>(p.config.filters));
  detail::put_u32(buf, static_cast<std::uint32_t>(p.config.kernel));
  detail::put_u32(buf, static_cast<std::uint32_t>(p.config.frames));
  for (double v : p.values) detail::put_f64(buf, v);
  return buf;
}

inline VnParams decode_params(const std::string& buf) {
  if (buf.size() < 20 || buf.compare(0, 4, "vnp1") != 0) throw ParseError("parameter file: bad header");
  VnConfig cfg;
  cfg.layers = static_cast<int>(detail::get_le(buf, 4, 4));
  cfg.filters = static_cast<int>(detail::get_le(buf, 8, 4));
  cfg.kernel = static_cast<int>(detail::get_le(buf, 12, 4));
  cfg.frames = static_cast<int>(detail::get_le(buf, 16, 4));
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    throw ParseError(std::string("parameter file: ") + e.what());
  }
  if (buf.size() != 20 + 8 * cfg.total()) throw ParseError("parameter file: payload length mismatch");
  VnParams p(cfg);
  for (std::size_t i = 0; i < p.values.size(); ++i) {
    p.values[i] = std::bit_cast<double>(detail::get_le(buf, 20 + 8 * i, 8));
  }
  return p;
}

inline void write_params(const VnParams& p, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  const std::string buf = encode_params(p);
  os.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

inline VnParams read_params(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  std::string buf((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return decode_params(buf);
}

}  // namespace vnsp
