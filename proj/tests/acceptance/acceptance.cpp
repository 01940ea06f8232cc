// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.
// Usage: acceptance <work-dir>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <random>
#include <string>
#include <vector>

#include "../test_support.hpp"
#include "../varnet_oracle.hpp"
#include "vnsp/harness/experiment.hpp"

using namespace vnsp;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string num(double v, int prec = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", prec, v);
  return buf;
}

int failures = 0;
std::ostringstream report_log;

void report(int id, const std::string& name, bool ok, const std::string& detail) {
  if (!ok) ++failures;
  std::ostringstream line;
  line << (ok ? "PASS" : "FAIL") << "  criterion " << id << "  " << name << ": " << detail;
  std::cout << line.str() << std::endl;
  report_log << line.str() << '\n';
}

// Relative error with a 1e-8 floor on the denominator.
double rel_err(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8}); }

void criterion_operator() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(101);
  const GridShape g{8, 8, 1, 2};
  double worst_adj = 0.0, worst_id = 0.0;
  for (int i = 0; i < 100; ++i) {
    const CoilMap c = testing::random_coils(g, rng);
    const SamplingPattern sp = testing::random_pattern(g, 0.4, rng);
    const ImageStack x = testing::random_image(g, rng);
    KSpaceData m;
    m.shape = g;
    m.data = testing::random_complex(g.kspace_size(), rng);
    const cplx lhs = inner(encode_sampled(x, c, sp).data, m.data);
    const cplx rhs = inner(x.data, adjoint_encode(m, c, sp).data);
    worst_adj = std::max(worst_adj, std::abs(lhs - rhs) / std::sqrt(norm_sq(x.data) * norm_sq(m.data)));
    const SamplingPattern full = testing::full_pattern(g);
    worst_id = std::max(worst_id, testing::max_abs_diff(normal_encode(x, c, full).data, x.data));
  }
  const double secs = seconds_since(t0);
  report(1, "operator correctness", worst_adj < 1e-10 && worst_id < 1e-10 && secs < 1.0,
         "adjoint rel err " + num(worst_adj) + " (< 1e-10), identity err " + num(worst_id) + " (< 1e-10), " +
             num(secs, 3) + " s (< 1 s)");
}

void criterion_gradient() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(202);
  const GridShape g{8, 8, 1, 2};
  VnParams p(VnConfig{2, 2, 3, 1});
  std::uniform_real_distribution<double> u(-0.3, 0.3);
  for (auto& v : p.values) v = u(rng);
  for (int j = 0; j < 2; ++j) p.alpha(j) = 0.2 + std::abs(u(rng));
  const CoilMap c = testing::random_coils(g, rng);
  const SamplingPattern sp = testing::random_pattern(g, 0.4, rng);
  const ImageStack x = testing::random_image(g, rng);
  const KSpaceData mbar = encode_sampled(x, c, sp);
  const auto res = vn_backward(p, x, sp, c);
  const double h = 1e-5;
  double worst = 0.0;
  for (std::size_t i = 0; i < p.values.size(); ++i) {
    VnParams plus = p, minus = p;
    plus.values[i] += h;
    minus.values[i] -= h;
    const double fd = (loss(x, vn_forward(plus, mbar, sp, c)) - loss(x, vn_forward(minus, mbar, sp, c))) / (2 * h);
    worst = std::max(worst, rel_err(fd, res.grads.values[i]));
  }
  const double secs = seconds_since(t0);
  report(2, "gradient correctness", worst < 1e-5 && secs < 30.0,
         std::to_string(p.values.size()) + " parameters, worst rel err " + num(worst) + " (< 1e-5), " + num(secs, 3) +
             " s (< 30 s)");
}

void criterion_forward_oracle() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(303);
  double worst = 0.0;
  for (int i = 0; i < 20; ++i) {
    const GridShape g = i % 2 == 0 ? GridShape{8, 8, 1, 2} : GridShape{6, 5, 3, 2};
    VnParams p(VnConfig{2, 2, 3, g.nt});
    std::uniform_real_distribution<double> u(-0.3, 0.3);
    for (auto& v : p.values) v = u(rng);
    for (int j = 0; j < 2; ++j) p.alpha(j) = 0.2 + std::abs(u(rng));
    const CoilMap c = testing::random_coils(g, rng);
    const SamplingPattern sp = testing::random_pattern(g, 0.5, rng);
    const KSpaceData mbar = encode_sampled(testing::random_image(g, rng), c, sp);
    worst = std::max(worst, testing::max_abs_diff(vn_forward(p, mbar, sp, c).data,
                                                  testing::NaiveNet{p, c, sp, g}.run(mbar.data)));
  }
  const double secs = seconds_since(t0);
  report(3, "network forward oracle", worst < 1e-12 && secs < 5.0,
         "20 instances, max abs diff " + num(worst) + " (< 1e-12), " + num(secs, 3) + " s (< 5 s)");
}

bool check_pattern(const SamplingPattern& sp, std::size_t m, const CalibrationSpec& cal) {
  if (sp.size() != m) return false;
  for (const Point& p : empty_with_calibration(sp.grid(), cal).points())
    if (!sp.is_calibration(p)) return false;
  return true;
}

void criterion_generators() {
  const auto t0 = Clock::now();
  bool pd_ok = true, annulus_ok = true, exact_ok = true;
  const CalibrationSpec cal{4, 4};
  const GridShape g48{48, 48, 1, 1};
  PatternSettings st;
  st.cal = cal;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const GeneratedPattern pd = generate_poisson_disc(g48, budget_for_af(g48, 8.0), st.pd_min_dist, cal, seed);
    std::vector<Point> free;
    for (const Point& p : pd.sp.points())
      if (!pd.sp.is_calibration(p)) free.push_back(p);
    for (std::size_t i = 0; i < free.size(); ++i)
      for (std::size_t j = i + 1; j < free.size(); ++j)
        if (free[i].t == free[j].t &&
            std::hypot(free[i].ky - free[j].ky, free[i].kz - free[j].kz) < pd.final_min_dist - 1e-12) {
          pd_ok = false;
        }
    for (auto kind : {PatternKind::kUniform, PatternKind::kVariableDensity, PatternKind::kPoissonDisc,
                      PatternKind::kVdPd}) {
      for (double af : {3.0, 4.0, 8.0, 10.0}) {
        const std::size_t m = budget_for_af(g48, af);
        exact_ok = exact_ok && check_pattern(make_pattern(kind, g48, m, st, seed), m, cal);
      }
    }
  }
  const GridShape g64{64, 64, 1, 1};
  std::vector<double> hits(8, 0.0), area(8, 0.0);
  for (int y = 0; y < 64; ++y)
    for (int z = 0; z < 64; ++z)
      if (const int b = static_cast<int>(std::hypot(y - 32, z - 32)) / 4; b < 8) area[b] += 1.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto res = generate_vd_pd(g64, 512, st.profile, st.vdpd_min_dist, cal, seed);
    exact_ok = exact_ok && check_pattern(res.sp, 512, cal);
    for (const Point& p : res.sp.points())
      if (const int b = static_cast<int>(std::hypot(p.ky - 32, p.kz - 32)) / 4; b < 8) hits[b] += 1.0;
  }
  std::string dens;
  for (int b = 0; b < 8; ++b) {
    dens += (b ? " " : "") + num(hits[b] / area[b] / 20.0, 3);
    if (b > 0 && hits[b] / area[b] > hits[b - 1] / area[b - 1]) annulus_ok = false;
  }
  const double secs = seconds_since(t0);
  report(8, "generator properties", pd_ok && annulus_ok && exact_ok && secs < 60.0,
         std::string("poisson-disc distances ") + (pd_ok ? "ok" : "violated") + " (20 seeds), VD+PD annulus density [" +
             dens + "] " + (annulus_ok ? "non-increasing" : "NOT non-increasing") + ", exact-M with calibration " +
             (exact_ok ? "ok" : "violated") + ", " + num(secs, 3) + " s (< 60 s)");
}

void criterion_unit_checks() {
  std::mt19937_64 rng(404);
  const GridShape g{6, 5, 2, 1};
  std::vector<ImageStack> refs, recs;
  for (int i = 0; i < 5; ++i) {
    refs.push_back(testing::random_image(g, rng));
    recs.push_back(testing::random_image(g, rng));
  }
  long double acc = 0.0L;
  for (int i = 0; i < 5; ++i)
    for (std::size_t k = 0; k < refs[i].data.size(); ++k) {
      const long double dr = refs[i].data[k].real() - recs[i].data[k].real();
      const long double di = refs[i].data[k].imag() - recs[i].data[k].imag();
      acc += dr * dr + di * di;
    }
  const double oracle = static_cast<double>(std::sqrt(acc / (2.0L * 5.0L)));
  const double rmse_err = std::abs(rmse(refs, recs) - oracle);

  const VnConfig cfg{1, 1, 1, 1};
  AdamConfig ac;
  ac.lr0 = 3e-3;
  VnParams p(cfg);
  Gradients gr(cfg);
  gr.values = {0.7, -1.3, 2e-4, -5.0, 0.25};
  AdamState state(ac, p.values.size());
  adam_step(state, p, gr);
  double adam_err = 0.0;
  for (std::size_t i = 0; i < p.values.size(); ++i) {
    adam_err = std::max(adam_err, std::abs(p.values[i] + ac.lr0 * gr.values[i] / (std::abs(gr.values[i]) + ac.eps)));
  }

  bool sched_ok = true;
  for (double f : {0.5, 0.25}) {
    for (int period : {2, 5}) {
      AdamConfig s;
      s.lr0 = 2e-4;
      s.drop_factor = f;
      s.drop_every_epochs = period;
      for (int e = 1; e <= 80; ++e) {
        double expected = s.lr0;
        for (int k = 0; k < (e - 1) / period; ++k) expected *= f;
        sched_ok = sched_ok && s.lr_at_epoch(e) == expected;
      }
    }
  }
  report(10, "rmse / adam unit checks", rmse_err < 1e-12 && adam_err < 1e-12 && sched_ok,
         "rmse oracle diff " + num(rmse_err) + " (< 1e-12), adam first-step diff " + num(adam_err) +
             " (< 1e-12), schedule " + (sched_ok ? "exact" : "MISMATCH"));
}

// Cost of every at-budget state along an alternation, in run order.
std::vector<double> full_trace(const AlternatingResult& r, std::size_t budget) {
  std::vector<double> out;
  for (std::size_t c = 0; c < r.bass_traces.size(); ++c) {
    for (const auto& s : r.bass_traces[c])
      if (s.points == budget) out.push_back(s.cost);
    out.push_back(r.state.cost_history[2 * c + 1].cost);
  }
  return out;
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) files[fs::relative(e.path(), dir).string()] = read_file(e.path());
  return files;
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path work = argc > 1 ? fs::path(argv[1]) : fs::path("acceptance_out");
  fs::remove_all(work);
  fs::create_directories(work);
  const auto t_all = Clock::now();

  criterion_operator();
  criterion_gradient();
  criterion_forward_oracle();
  criterion_unit_checks();
  criterion_generators();

  // Desk-scale experiment shared by criteria 4-7.
  ExperimentConfig cfg;
  cfg.out = (work / "experiment").string();
  cfg.af_list = {4.0, 8.0};
  cfg.init_sp = "empty";
  std::cout << "running desk experiment (grid " << cfg.grid.str() << ", " << cfg.train_items << " train / "
            << cfg.test_items << " test)" << std::endl;
  const auto t_exp = Clock::now();
  const ExperimentResult exp = run_experiment(cfg, &std::cout);
  const double exp_secs = seconds_since(t_exp);
  const ExperimentData& data = exp.data;
  const AfOutcome& af8 = exp.per_af[1];

  {
    bool ok7 = true;
    std::string detail;
    for (const auto& o : exp.per_af) {
      const bool ok = o.rmse_proposed <= 0.95 * o.rmse_retrained && o.rmse_retrained < o.rmse_pretrained &&
                      o.rmse_proposed < o.rmse_pretrained;
      ok7 = ok7 && ok;
      detail += "AF " + num(o.af) + ": pretrained " + num(o.rmse_pretrained) + ", retrained " +
                num(o.rmse_retrained) + ", proposed " + num(o.rmse_proposed) + " (ratio " +
                num(o.rmse_proposed / o.rmse_retrained) + " <= 0.95); ";
    }
    report(7, "improvement over fixed VD+PD", ok7 && exp_secs < 3600.0, detail + num(exp_secs, 4) + " s (< 3600 s)");
  }

  {
    const auto t0 = Clock::now();
    Rng rng(derive_seed(cfg.seed, 30));
    const BassResult b = bass_run(cfg.alt.bass, empty_with_calibration(cfg.grid, cfg.patterns.cal), af8.budget,
                                  exp.pretrained, data.train, rng);
    bool mono = true, k_ok = true, at_budget = false;
    double last = 0.0;
    int last_k = cfg.alt.bass.k_init;
    for (const auto& s : b.trace) {
      if (s.k > last_k || s.k < 1) k_ok = false;
      last_k = s.k;
      if (s.points != af8.budget) continue;
      if (at_budget && s.cost > last) mono = false;
      at_budget = true;
      last = s.cost;
    }
    const double secs = seconds_since(t0);
    report(4, "BASS monotonicity", mono && k_ok && b.final_k == 1 && secs < 600.0,
           std::to_string(b.trace.size() - 1) + " iterations, at-budget costs " +
               (mono ? "non-increasing" : "INCREASE") + ", K " + (k_ok ? "non-increasing" : "INCREASED") +
               ", final K " + std::to_string(b.final_k) + ", cost " + num(b.trace.front().cost) + " -> " +
               num(b.cost) + ", " + num(secs, 3) + " s (< 600 s)");
  }

  {
    const auto& h = af8.proposed.state.cost_history;
    bool mono = true;
    for (std::size_t i = 3; i < h.size(); i += 2)
      if (h[i].cost > h[i - 2].cost) mono = false;
    ExperimentConfig nm = cfg;
    nm.alt.monotone = false;
    nm.alt.max_cycles = 10;
    const auto t0 = Clock::now();
    const AlternatingResult r =
        alternate(nm.alt, TrainState{0, initial_pattern(nm, af8.budget, seeds::init_sp(nm, 1)), exp.pretrained, {}, 0},
                  af8.budget, data.train, seeds::alternate(nm, 1));
    const double secs = seconds_since(t0) + af8.seconds_proposed;
    const auto tr = full_trace(r, af8.budget);
    const double mn = *std::min_element(tr.begin(), tr.end());
    const double fin = r.state.cost_history.back().cost;
    std::ostringstream trace;
    write_alternating_trace_csv(trace, r.state.cost_history, cfg.grid.cells());
    write_file(work / "nonmonotone_trace.csv", trace.str());
    report(5, "alternation monotonicity / non-monotone ablation", mono && fin >= 1.05 * mn && secs < 1800.0,
           "monotone: " + std::to_string(af8.proposed.state.cycle) + " cycles, cycle-end costs " +
               (mono ? "non-increasing" : "INCREASE") + " (" + num(h.front().cost) + " -> " + num(h.back().cost) +
               "); non-monotone: " + std::to_string(r.state.cycle) + " cycles, final " + num(fin) + " vs min " +
               num(mn) + " (ratio " + num(fin / mn) + " >= 1.05), " + num(secs, 4) + " s (< 1800 s)");
  }

  {
    ExperimentConfig pc = cfg;
    pc.init_sp = "poisson";
    const auto t0 = Clock::now();
    const AlternatingResult r =
        alternate(pc.alt, TrainState{0, initial_pattern(pc, af8.budget, seeds::init_sp(pc, 1)), exp.pretrained, {}, 0},
                  af8.budget, data.train, seeds::alternate(pc, 1));
    const double secs = seconds_since(t0) + af8.seconds_proposed;
    const double a = af8.rmse_proposed;
    const double b = dataset_rmse(r.state.params, r.state.sp, data.test);
    const double rel = std::abs(a - b) / std::min(a, b);
    report(6, "stability across initial patterns", rel <= 0.05 && secs < 1800.0,
           "AF 8 test RMSE from empty " + num(a) + " (" + std::to_string(af8.proposed.state.cycle) +
               " cycles), from poisson-disc " + num(b) + " (" + std::to_string(r.state.cycle) + " cycles), rel diff " +
               num(rel) + " (<= 0.05), " + num(secs, 4) + " s (< 1800 s)");
  }

  {
    ExperimentConfig small = parse_config(
        "grid.ny = 24\ngrid.nz = 24\ngrid.nc = 2\ndata.train = 6\ndata.test = 3\n"
        "af_list = 4, 6\ncal.half_y = 2\ncal.half_z = 2\n"
        "vn.layers = 2\nvn.filters = 2\nvn.kernel = 3\n"
        "pretrain.epochs = 2\nretrain.epochs = 2\nadam.epochs = 1\n"
        "bass.k_init = 16\nbass.max_iters = 20\nalt.max_cycles = 3\ninit_sp = poisson\n");
    small.out = (work / "repeat").string();
    run_experiment(small);
    const auto first = snapshot(small.out);
    fs::remove_all(small.out);
    run_experiment(small);
    const auto second = snapshot(small.out);
    std::string diff;
    for (const auto& [name, bytes] : first) {
      const auto it = second.find(name);
      if (it == second.end() || it->second != bytes) {
        diff = name;
        break;
      }
    }
    if (diff.empty() && first.size() != second.size()) diff = "file lists differ";
    const bool same = diff.empty();
    const std::size_t count = first.size();
    report(9, "determinism", same,
           std::to_string(count) + " output files per run, " + (same ? "all bit-identical" : "differs: " + diff));
  }

  const std::string verdict = (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") +
                              " in " + num(seconds_since(t_all), 4) + " s";
  std::cout << verdict << std::endl;
  report_log << verdict << '\n';
  write_file(work / "acceptance_report.txt", report_log.str());
  return failures == 0 ? 0 : 1;
}
