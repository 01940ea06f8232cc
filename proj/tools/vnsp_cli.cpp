// vnsp command-line front end.
//
//   vnsp gen-data   --config F [--out DIR]
//   vnsp gen-sp     --config F --kind vdpd --af 8 [--out DIR]
//   vnsp pretrain   --config F [--data DIR] [--out DIR]
//   vnsp learn      --config F --params P [--af X] [--init-sp S] [--no-monotone]
//   vnsp retrain    --config F --params P [--sp FILE | --af X]
//   vnsp eval       --ref DIR --recon DIR | --config F --params P --sp FILE [--data DIR]
//   vnsp experiment --config F [--af X] [--init-sp S]
//
// Every subcommand validates the full configuration before writing anything.

#include <cstdio>
#include <sstream>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "vnsp/harness/experiment.hpp"

using namespace vnsp;
namespace fs = std::filesystem;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<double> af;
  int monotone = -1;  // -1 unset, 0 off, 1 on
  std::string init_sp;
  std::vector<std::string> sets;
  std::string data;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config, "experiment config file (key = value)");
  sub->add_option("--seed", c.seed, "base seed (overrides 'seed')");
  sub->add_option("--out", c.out, "output directory (overrides 'out')");
  sub->add_option("--af", c.af, "acceleration factor N/M");
  sub->add_flag_function(
      "--monotone,!--no-monotone", [&c](std::int64_t n) { c.monotone = n > 0 ? 1 : 0; },
      "forced monotonicity in BASS and ADAM (default on)");
  sub->add_option("--init-sp", c.init_sp, "initial pattern: empty|poisson|vdpd|uniform|vd|file:PATH");
  sub->add_option("--set", c.sets, "extra 'key=value' override, repeatable");
}

ExperimentConfig resolve(const Common& c) {
  ExperimentConfig cfg = c.config.empty() ? ExperimentConfig{} : load_config(c.config);
  for (const auto& kv : c.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    set_config_value(cfg, detail::trim(kv.substr(0, eq)), detail::trim(kv.substr(eq + 1)));
  }
  if (c.seed) cfg.seed = *c.seed;
  if (!c.out.empty()) cfg.out = c.out;
  if (c.af) cfg.af_list = {*c.af};
  if (c.monotone >= 0) cfg.alt.monotone = c.monotone == 1;
  if (!c.init_sp.empty()) cfg.init_sp = c.init_sp;
  cfg.validate();
  return cfg;
}

double first_af(const ExperimentConfig& cfg) { return cfg.af_list.front(); }

Dataset load_or_generate(const Common& c, const ExperimentConfig& cfg, Dataset::Split split) {
  if (!c.data.empty()) {
    Dataset d = read_dataset(c.data);
    if (!d.grid.same_grid(cfg.grid) || d.grid.nc != cfg.grid.nc) {
      throw ShapeError("dataset " + c.data + " has grid " + d.grid.str() + ", config expects " + cfg.grid.str());
    }
    return d;
  }
  return split == Dataset::Split::kTrain ? make_experiment_data(cfg).train : make_experiment_data(cfg).test;
}

VnParams load_params(const std::string& path, const ExperimentConfig& cfg) {
  VnParams p = read_params(path);
  const VnConfig want = cfg.vn_config();
  if (p.config.layers != want.layers || p.config.filters != want.filters || p.config.kernel != want.kernel ||
      p.config.frames != want.frames)
    throw ConfigError("parameter file " + path + " does not match vn.* config");
  return p;
}

void say(const std::string& s) { std::cout << s << std::endl; }

int run_gen_data(const Common& c) {
  const ExperimentConfig cfg = resolve(c);
  const ExperimentData d = make_experiment_data(cfg);
  write_dataset(d.train, fs::path(cfg.out) / "train");
  write_dataset(d.test, fs::path(cfg.out) / "test");
  say("wrote " + std::to_string(d.train.size()) + " train and " + std::to_string(d.test.size()) +
      " test items to " + cfg.out);
  return 0;
}

int run_gen_sp(const Common& c, const std::string& kind_name) {
  const ExperimentConfig cfg = resolve(c);
  const PatternKind kind = parse_pattern_kind(kind_name);
  const std::size_t m = budget_for_af(cfg.grid, first_af(cfg));
  const SamplingPattern sp = make_pattern(kind, cfg.grid, m, cfg.patterns, derive_seed(cfg.seed, 25));
  const fs::path out = cfg.out;
  fs::create_directories(out);
  write_sp(sp, out / (kind_name + ".sp"));
  write_file(out / (kind_name + ".pgm"), encode_pgm(sp));
  say(kind_name + ": " + std::to_string(sp.size()) + " points (AF " + detail::fmt(acceleration_factor(sp)) +
      ") -> " + (out / (kind_name + ".sp")).string());
  return 0;
}

int run_pretrain(const Common& c) {
  const ExperimentConfig cfg = resolve(c);
  const Dataset train = load_or_generate(c, cfg, Dataset::Split::kTrain);
  const VnParams p = pretrain(cfg.vn_config(), cfg.pretrain_adam, train, cfg.pretrain_sampling_resolved(),
                              seeds::pretrain(cfg));
  fs::create_directories(cfg.out);
  write_params(p, fs::path(cfg.out) / "pretrained.vnp");
  say("wrote " + (fs::path(cfg.out) / "pretrained.vnp").string());
  return 0;
}

int run_learn(const Common& c, const std::string& params_path) {
  const ExperimentConfig cfg = resolve(c);
  const VnParams start = load_params(params_path, cfg);
  const Dataset train = load_or_generate(c, cfg, Dataset::Split::kTrain);
  const std::size_t m = budget_for_af(cfg.grid, first_af(cfg));
  const SamplingPattern sp0 = initial_pattern(cfg, m, seeds::init_sp(cfg, 0));
  const fs::path out = cfg.out;
  fs::create_directories(out);
  write_sp(sp0, out / "init.sp");
  const CycleObserver save = checkpoint_writer(out / "checkpoints");
  const AlternatingResult r = alternate(cfg.alt, TrainState{0, sp0, start, {}, 0}, m, train,
                                        seeds::alternate(cfg, 0), [&](const TrainState& st, const BassResult& b) {
                                          save(st, b);
                                          say("cycle " + std::to_string(st.cycle) + " cost " +
                                              format_double(st.cost_history.back().cost));
                                        });
  write_sp(r.state.sp, out / "learned.sp");
  write_file(out / "learned.pgm", encode_pgm(r.state.sp));
  write_params(r.state.params, out / "learned.vnp");
  std::ostringstream trace;
  write_alternating_trace_csv(trace, r.state.cost_history, cfg.grid.cells());
  write_file(out / "trace.csv", trace.str());
  say("learned pattern with " + std::to_string(r.state.sp.size()) + " points after " +
      std::to_string(r.state.cycle) + " cycles -> " + out.string());
  return 0;
}

int run_retrain(const Common& c, const std::string& params_path, const std::string& sp_path) {
  const ExperimentConfig cfg = resolve(c);
  const VnParams init = load_params(params_path, cfg);
  const SamplingPattern sp =
      sp_path.empty() ? make_pattern(PatternKind::kVdPd, cfg.grid, budget_for_af(cfg.grid, first_af(cfg)),
                                     cfg.patterns, seeds::vdpd(cfg, 0))
                      : read_sp(sp_path, cfg.grid);
  const Dataset train = load_or_generate(c, cfg, Dataset::Split::kTrain);
  const VnParams p = retrain_fixed_sp(cfg.retrain_adam, init, sp, train, seeds::retrain(cfg, 0));
  const fs::path out = cfg.out;
  fs::create_directories(out);
  write_sp(sp, out / "retrain.sp");
  write_params(p, out / "retrained.vnp");
  say("wrote " + (out / "retrained.vnp").string());
  return 0;
}

int run_eval(const Common& c, const std::string& ref, const std::string& recon, const std::string& params_path,
             const std::string& sp_path) {
  if (!ref.empty() || !recon.empty()) {
    if (ref.empty() || recon.empty()) throw ConfigError("eval: --ref and --recon go together");
    const auto names = list_images(ref);
    if (names.empty()) throw ConfigError("eval: no .img files in " + ref);
    std::vector<ImageStack> refs, recs;
    for (const auto& n : names) {
      refs.push_back(read_image(fs::path(ref) / n));
      recs.push_back(read_image(fs::path(recon) / n));
    }
    say("rmse " + format_double(rmse(refs, recs)) + " over " + std::to_string(names.size()) + " images");
    return 0;
  }
  if (params_path.empty() || sp_path.empty()) throw ConfigError("eval: need --ref/--recon or --params/--sp");
  const ExperimentConfig cfg = resolve(c);
  const VnParams p = load_params(params_path, cfg);
  const SamplingPattern sp = read_sp(sp_path, cfg.grid);
  const Dataset test = load_or_generate(c, cfg, Dataset::Split::kTest);
  const auto recs = reconstruct_all(p, sp, test);
  std::vector<ImageStack> refs;
  for (const auto& item : test.items) refs.push_back(item.image);
  if (!c.out.empty()) {
    for (std::size_t i = 0; i < recs.size(); ++i) write_image(recs[i], fs::path(c.out) / (item_name(i) + ".img"));
  }
  say("rmse " + format_double(rmse(refs, recs)) + " over " + std::to_string(recs.size()) + " images");
  return 0;
}

int run_experiment_cmd(const Common& c) {
  const ExperimentConfig cfg = resolve(c);
  run_experiment(cfg, &std::cout);
  say("summary -> " + (fs::path(cfg.out) / "summary.csv").string());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Joint learning of k-space sampling patterns and variational network reconstructions"};
  app.require_subcommand(1);

  Common gen_data, gen_sp, pre, learn, retrain, eval, experiment;
  std::string kind = "vdpd", learn_params, retrain_params, retrain_sp, eval_ref, eval_recon, eval_params, eval_sp;

  auto* s_data = app.add_subcommand("gen-data", "generate the synthetic train/test datasets");
  add_common(s_data, gen_data);
  auto* s_sp = app.add_subcommand("gen-sp", "generate a baseline sampling pattern");
  add_common(s_sp, gen_sp);
  s_sp->add_option("--kind", kind, "empty|uniform|vd|poisson|vdpd")->capture_default_str();
  auto* s_pre = app.add_subcommand("pretrain", "pre-train the network on random pattern families");
  add_common(s_pre, pre);
  s_pre->add_option("--data", pre.data, "training dataset directory (default: generate from config)");
  auto* s_learn = app.add_subcommand("learn", "alternate BASS and ADAM from a parameter file");
  add_common(s_learn, learn);
  s_learn->add_option("--params", learn_params, "initial parameter file")->required();
  s_learn->add_option("--data", learn.data, "training dataset directory");
  auto* s_re = app.add_subcommand("retrain", "retrain the network on one fixed pattern");
  add_common(s_re, retrain);
  s_re->add_option("--params", retrain_params, "initial parameter file")->required();
  s_re->add_option("--sp", retrain_sp, "pattern file (default: VD+PD at --af)");
  s_re->add_option("--data", retrain.data, "training dataset directory");
  auto* s_eval = app.add_subcommand("eval", "test RMSE of image directories or of a (pattern, network) pair");
  add_common(s_eval, eval);
  s_eval->add_option("--ref", eval_ref, "directory of reference .img files");
  s_eval->add_option("--recon", eval_recon, "directory of reconstructed .img files");
  s_eval->add_option("--params", eval_params, "parameter file");
  s_eval->add_option("--sp", eval_sp, "pattern file");
  s_eval->add_option("--data", eval.data, "test dataset directory (default: generate from config)");
  auto* s_exp = app.add_subcommand("experiment", "full protocol: pretrained, retrained and proposed per AF");
  add_common(s_exp, experiment);

  CLI11_PARSE(app, argc, argv);

  try {
    if (s_data->parsed()) return run_gen_data(gen_data);
    if (s_sp->parsed()) return run_gen_sp(gen_sp, kind);
    if (s_pre->parsed()) return run_pretrain(pre);
    if (s_learn->parsed()) return run_learn(learn, learn_params);
    if (s_re->parsed()) return run_retrain(retrain, retrain_params, retrain_sp);
    if (s_eval->parsed()) return run_eval(eval, eval_ref, eval_recon, eval_params, eval_sp);
    if (s_exp->parsed()) return run_experiment_cmd(experiment);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 1;
  }
  return 1;
}
