#pragma once

#include <cstdint>
#include <vector>

#include "vnsp/errors.hpp"
#include "vnsp/kspace.hpp"

namespace vnsp {

/// One training/test example: reference image and its coil sensitivities.
struct DataItem {
  ImageStack image;
  CoilMap coils;
};

struct Dataset {
  enum class Split { kTrain, kTest };

  GridShape grid;
  Split split = Split::kTrain;
  std::uint64_t seed = 0;
  std::vector<DataItem> items;

  std::size_t size() const { return items.size(); }
  bool empty() const { return items.empty(); }

  void check_nonempty(const char* who) const {
    if (items.empty()) throw std::invalid_argument(std::string(who) + ": empty dataset");
  }
};

}  // namespace vnsp
