#pragma once

// End-to-end protocol per acceleration: pretrained network with a VD+PD
// pattern, the same network retrained on that pattern, and the jointly learned
// (pattern, network) pair. Writes patterns, parameters, traces, PGM masks and
// `summary.csv` (af,method,rmse) under the output directory.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <string>
#include <vector>

#include "vnsp/alternating.hpp"
#include "vnsp/harness/config.hpp"
#include "vnsp/harness/io.hpp"
#include "vnsp/harness/metrics.hpp"
#include "vnsp/harness/phantom.hpp"
#include "vnsp/patterns.hpp"
#include "vnsp/varnet.hpp"

namespace vnsp {

struct ExperimentData {
  Dataset train;
  Dataset test;
};

inline ExperimentData make_experiment_data(const ExperimentConfig& cfg) {
  return {generate_phantom_dataset(cfg.grid, cfg.train_items, Dataset::Split::kTrain, cfg.phantom, cfg.data_seed),
          generate_phantom_dataset(cfg.grid, cfg.test_items, Dataset::Split::kTest, cfg.phantom, cfg.data_seed)};
}

/// Reconstructions of every item of `data`.
inline std::vector<ImageStack> reconstruct_all(const VnParams& params, const SamplingPattern& sp,
                                               const Dataset& data) {
  std::vector<ImageStack> out;
  out.reserve(data.size());
  for (const auto& item : data.items) out.push_back(reconstruct(params, sp, item));
  return out;
}

inline double dataset_rmse(const VnParams& params, const SamplingPattern& sp, const Dataset& data) {
  data.check_nonempty("dataset_rmse");
  std::vector<ImageStack> refs;
  refs.reserve(data.size());
  for (const auto& item : data.items) refs.push_back(item.image);
  return rmse(refs, reconstruct_all(params, sp, data));
}

/// Initial pattern for the alternation as named by `init_sp`.
inline SamplingPattern initial_pattern(const ExperimentConfig& cfg, std::size_t budget, std::uint64_t seed) {
  const InitSpec spec = parse_init_sp(cfg.init_sp);
  if (!spec.file.empty()) {
    SamplingPattern sp = read_sp(spec.file, cfg.grid);
    const SamplingPattern cal = empty_with_calibration(cfg.grid, cfg.patterns.cal);
    for (const Point& p : cal.points()) {
      if (!sp.is_calibration(p)) throw ConfigError("init_sp file lacks calibration point or flag");
    }
    return sp;
  }
  return make_pattern(spec.kind, cfg.grid, budget, cfg.patterns, seed);
}

inline std::string af_tag(double af) { return "af" + detail::fmt(af); }

/// Observer writing cycle_NNN.sp / .vnp / _bass.csv into `dir` after every cycle.
inline CycleObserver checkpoint_writer(const fs::path& dir) {
  fs::create_directories(dir);
  return [dir](const TrainState& st, const BassResult& bass) {
    char name[32];
    std::snprintf(name, sizeof name, "cycle_%04d", st.cycle);
    write_sp(st.sp, dir / (std::string(name) + ".sp"));
    write_params(st.params, dir / (std::string(name) + ".vnp"));
    std::ostringstream trace;
    write_bass_trace_csv(trace, bass.trace);
    write_file(dir / (std::string(name) + "_bass.csv"), trace.str());
  };
}

struct SummaryRow {
  double af = 0.0;
  std::string method;
  double rmse = 0.0;
};

struct AfOutcome {
  double af = 0.0;
  std::size_t budget = 0;
  SamplingPattern vdpd;
  VnParams retrained;
  AlternatingResult proposed;
  double rmse_pretrained = 0.0;
  double rmse_retrained = 0.0;
  double rmse_proposed = 0.0;
  double seconds_proposed = 0.0;  // wall time of the alternation
};

struct ExperimentResult {
  ExperimentData data;
  VnParams pretrained;
  std::vector<AfOutcome> per_af;
  std::vector<SummaryRow> rows;
};

/// Seed streams derived from `cfg.seed`.
namespace seeds {
inline std::uint64_t pretrain(const ExperimentConfig& c) { return derive_seed(c.seed, 20); }
inline std::uint64_t vdpd(const ExperimentConfig& c, std::size_t a) { return derive_seed(c.seed, 21, a); }
inline std::uint64_t retrain(const ExperimentConfig& c, std::size_t a) { return derive_seed(c.seed, 22, a); }
inline std::uint64_t init_sp(const ExperimentConfig& c, std::size_t a) { return derive_seed(c.seed, 23, a); }
inline std::uint64_t alternate(const ExperimentConfig& c, std::size_t a) { return derive_seed(c.seed, 24, a); }
}  // namespace seeds

inline std::string summary_line(const SummaryRow& r) {
  return detail::fmt(r.af) + "," + r.method + "," + format_double(r.rmse) + "\n";
}

inline ExperimentResult run_experiment(const ExperimentConfig& cfg, std::ostream* log = nullptr) {
  cfg.validate();
  const fs::path out = cfg.out;
  fs::create_directories(out);
  write_file(out / "config.txt", format_config(cfg));
  auto note = [&](const std::string& s) {
    if (log) *log << s << std::endl;
  };

  ExperimentResult res;
  res.data = make_experiment_data(cfg);
  const ExperimentData& data = res.data;
  note("data: " + std::to_string(data.train.size()) + " train, " + std::to_string(data.test.size()) + " test, grid " +
       cfg.grid.str());

  res.pretrained = pretrain(cfg.vn_config(), cfg.pretrain_adam, data.train, cfg.pretrain_sampling_resolved(),
                            seeds::pretrain(cfg));
  write_params(res.pretrained, out / "pretrained.vnp");
  note("pretrained");

  std::ofstream summary(out / "summary.csv", std::ios::binary);
  if (!summary) throw std::runtime_error("cannot open " + (out / "summary.csv").string());
  summary << "af,method,rmse\n" << std::flush;
  auto emit = [&](const SummaryRow& r) {
    res.rows.push_back(r);
    summary << summary_line(r) << std::flush;
    note("  " + summary_line(r).substr(0, summary_line(r).size() - 1));
  };

  for (std::size_t a = 0; a < cfg.af_list.size(); ++a) {
    AfOutcome o;
    o.af = cfg.af_list[a];
    o.budget = budget_for_af(cfg.grid, o.af);
    const fs::path dir = out / af_tag(o.af);
    fs::create_directories(dir);

    o.vdpd = make_pattern(PatternKind::kVdPd, cfg.grid, o.budget, cfg.patterns, seeds::vdpd(cfg, a));
    write_sp(o.vdpd, dir / "vdpd.sp");
    write_file(dir / "vdpd.pgm", encode_pgm(o.vdpd));
    o.rmse_pretrained = dataset_rmse(res.pretrained, o.vdpd, data.test);
    emit({o.af, "pretrained_vdpd", o.rmse_pretrained});

    o.retrained = retrain_fixed_sp(cfg.retrain_adam, res.pretrained, o.vdpd, data.train, seeds::retrain(cfg, a));
    write_params(o.retrained, dir / "retrained.vnp");
    o.rmse_retrained = dataset_rmse(o.retrained, o.vdpd, data.test);
    emit({o.af, "retrained_vdpd", o.rmse_retrained});

    const SamplingPattern init = initial_pattern(cfg, o.budget, seeds::init_sp(cfg, a));
    write_sp(init, dir / "init.sp");
    const auto t0 = std::chrono::steady_clock::now();
    o.proposed = alternate(cfg.alt, TrainState{0, init, res.pretrained, {}, 0}, o.budget, data.train,
                           seeds::alternate(cfg, a), checkpoint_writer(dir / "checkpoints"));
    o.seconds_proposed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const TrainState& st = o.proposed.state;
    write_sp(st.sp, dir / "proposed.sp");
    write_file(dir / "proposed.pgm", encode_pgm(st.sp));
    write_params(st.params, dir / "proposed.vnp");
    std::ostringstream trace;
    write_alternating_trace_csv(trace, st.cost_history, cfg.grid.cells());
    write_file(dir / "trace.csv", trace.str());
    o.rmse_proposed = dataset_rmse(st.params, st.sp, data.test);
    emit({o.af, "proposed", o.rmse_proposed});
    res.per_af.push_back(std::move(o));
  }
  return res;
}

}  // namespace vnsp
