#pragma once

#include <cmath>
#include <span>

#include "vnsp/errors.hpp"
#include "vnsp/kspace.hpp"

namespace vnsp {

/// sqrt( sum_i ||x_i - x_hat_i||^2 / (N_t * N_i) ), N_i = number of items.
inline double rmse(std::span<const ImageStack> refs, std::span<const ImageStack> recons) {
  if (refs.empty()) throw ShapeError("rmse: empty input");
  if (refs.size() != recons.size()) throw ShapeError("rmse: sequence lengths differ");
  double acc = 0.0;
  for (std::size_t i = 0; i < refs.size(); ++i) {
    if (!refs[i].shape.same_grid(recons[i].shape) || refs[i].data.size() != recons[i].data.size()) {
      throw ShapeError("rmse: item " + std::to_string(i) + " shape mismatch");
    }
    for (std::size_t k = 0; k < refs[i].data.size(); ++k) acc += std::norm(refs[i].data[k] - recons[i].data[k]);
  }
  const double nt = refs.front().shape.nt;
  return std::sqrt(acc / (nt * static_cast<double>(refs.size())));
}

}  // namespace vnsp
