#pragma once

// Alternating minimization of the joint criterion: each cycle runs BASS over
// the pattern with the network fixed, then a short guarded ADAM run over the
// network with the new pattern fixed. Also hosts the pre-training protocol and
// the fixed-pattern retraining baseline.

#include <cstdint>
#include <functional>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <vector>

#include "vnsp/bass.hpp"
#include "vnsp/dataset.hpp"
#include "vnsp/optim.hpp"
#include "vnsp/patterns.hpp"
#include "vnsp/random.hpp"
#include "vnsp/varnet.hpp"

namespace vnsp {

struct AlternatingConfig {
  BassConfig bass;
  AdamConfig adam;
  int stall_cycles = 5;
  int max_cycles = 40;
  bool monotone = true;
  /// A cycle counts as a stall unless its end cost drops by more than this fraction.
  double stall_rel_tol = 1e-6;

  void validate() const {
    bass.validate();
    adam.validate();
    if (stall_cycles < 1) throw ConfigError("alternating: stall_cycles must be >= 1");
    if (max_cycles < 1) throw ConfigError("alternating: max_cycles must be >= 1");
    if (!(stall_rel_tol >= 0.0)) throw ConfigError("alternating: stall_rel_tol must be >= 0");
  }
};

enum class Phase { kBass, kAdam };

inline const char* phase_name(Phase p) { return p == Phase::kBass ? "bass" : "adam"; }

struct CostRecord {
  int cycle = 0;
  Phase phase = Phase::kBass;
  bool accepted = true;
  double cost = 0.0;
  std::size_t points = 0;
  int bass_iters = 0;  // BASS iterations accumulated up to this record
};

struct TrainState {
  int cycle = 0;
  SamplingPattern sp;
  VnParams params;
  std::vector<CostRecord> cost_history;
  int stall_count = 0;
};

struct AlternatingResult {
  TrainState state;
  double initial_cost = 0.0;
  std::vector<std::vector<BassStep>> bass_traces;  // one per cycle
};

/// Called after every completed cycle.
using CycleObserver = std::function<void(const TrainState&, const BassResult&)>;

inline AlternatingResult alternate(const AlternatingConfig& config, TrainState state, std::size_t budget,
                                   const Dataset& data, std::uint64_t seed, const CycleObserver& observer = {}) {
  config.validate();
  data.check_nonempty("alternate");
  BassConfig bass_cfg = config.bass;
  bass_cfg.monotone = config.monotone;

  AlternatingResult out;
  out.initial_cost = cost_over_dataset(state.params, state.sp, data);
  double prev_end = out.initial_cost;
  int bass_iters = 0;
  while (state.cycle < config.max_cycles && state.stall_count < config.stall_cycles) {
    const int m = state.cycle + 1;

    Rng rng(derive_seed(seed, 1, static_cast<std::uint64_t>(m)));
    BassResult bass = bass_run(bass_cfg, state.sp, budget, state.params, data, rng);
    bass_iters += static_cast<int>(bass.trace.size()) - 1;
    const bool sp_changed = !(bass.sp == state.sp);
    state.sp = bass.sp;
    state.cost_history.push_back({m, Phase::kBass, sp_changed, bass.cost, state.sp.size(), bass_iters});

    GuardedResult adam = guarded_train(config.adam, state.params, state.sp, data,
                                       derive_seed(seed, 2, static_cast<std::uint64_t>(m)), config.monotone,
                                       bass.cost);
    state.params = std::move(adam.params);
    state.cost_history.push_back({m, Phase::kAdam, adam.accepted, adam.cost, state.sp.size(), bass_iters});

    state.cycle = m;
    if (adam.cost < prev_end * (1.0 - config.stall_rel_tol)) {
      state.stall_count = 0;
    } else {
      ++state.stall_count;
    }
    prev_end = adam.cost;
    out.bass_traces.push_back(bass.trace);
    if (observer) observer(state, bass);
  }
  out.state = std::move(state);
  return out;
}

/// CSV with header `cycle,phase,accepted,cost,af,m_points`.
inline void write_alternating_trace_csv(std::ostream& os, const std::vector<CostRecord>& history,
                                        std::size_t grid_cells) {
  os << "cycle,phase,accepted,cost,af,m_points\n";
  for (const auto& r : history) {
    std::ostringstream cost, af;
    cost << std::setprecision(17) << r.cost;
    af << std::setprecision(6) << static_cast<double>(grid_cells) / static_cast<double>(r.points);
    os << r.cycle << ',' << phase_name(r.phase) << ',' << (r.accepted ? 1 : 0) << ',' << cost.str() << ','
       << af.str() << ',' << r.points << '\n';
  }
}

// ---------------------------------------------------------------------------

/// Random pattern families used during pre-training.
struct PretrainSampling {
  std::vector<PatternKind> families{PatternKind::kPoissonDisc, PatternKind::kVariableDensity,
                                    PatternKind::kUniform, PatternKind::kVdPd};
  double af_min = 3.0;
  double af_max = 10.0;
  PatternSettings settings;

  void validate() const {
    if (families.empty()) throw ConfigError("pretrain: pattern family list is empty");
    if (!(af_min >= 1.0 && af_max >= af_min)) throw ConfigError("pretrain: need 1 <= af_min <= af_max");
  }
};

/// Trains from a seeded initialization, drawing a family and a fresh pattern
/// for every mini-batch.
inline VnParams pretrain(const VnConfig& vn_config, const AdamConfig& adam_config, const Dataset& data,
                         const PretrainSampling& sampling, std::uint64_t seed) {
  sampling.validate();
  data.check_nonempty("pretrain");
  const VnParams init = init_params(vn_config, derive_seed(seed, 10));
  const GridShape grid = data.grid;
  const std::size_t min_budget = calibration_size(grid, sampling.settings.cal);
  SamplingPattern current;
  std::size_t draw = 0;
  auto source = [&](int, std::size_t) -> const SamplingPattern& {
    Rng rng(derive_seed(seed, 11, draw++));
    const auto kind = sampling.families[uniform_index(rng, sampling.families.size())];
    const double af = sampling.af_min + (sampling.af_max - sampling.af_min) * open_unit(rng);
    const std::size_t budget = std::max(min_budget, budget_for_af(grid, af));
    current = make_pattern(kind, grid, budget, sampling.settings, rng());
    return current;
  };
  return train_with_patterns(adam_config, init, data, derive_seed(seed, 12), source);
}

/// Fixed-pattern retraining from `params_init`, guarded at the end.
inline VnParams retrain_fixed_sp(const AdamConfig& adam_config, const VnParams& params_init,
                                 const SamplingPattern& sp, const Dataset& data, std::uint64_t seed) {
  return guarded_train(adam_config, params_init, sp, data, seed).params;
}

}  // namespace vnsp
