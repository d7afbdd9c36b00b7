#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "biscotti/experiment.hpp"
#include "biscotti/krum.hpp"

#ifndef BISCOTTI_BUILD_ID
#define BISCOTTI_BUILD_ID "unknown"
#endif

namespace fs = std::filesystem;
using namespace biscotti;

namespace {

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error("cannot write " + p.string());
  out << text;
}

/// The preset named by --experiment, then the --config file (or preset
/// name) on top of it.
json load_config(const std::string& config, const std::string& experiment) {
  json j = preset(experiment.empty() ? "defaults" : experiment);
  if (config.empty()) return j;
  json overlay;
  if (fs::exists(config)) {
    overlay = parse_config_text(read_file(config));
    // metadata sidecars carry the resolved config under "config"
    if (overlay.is_object() && overlay.contains("config") && overlay.contains("build_id")) overlay = overlay["config"];
  } else if (is_preset(config)) {
    overlay = preset(config);
  } else {
    throw ConfigError("config '" + config + "' is neither a file nor a preset name");
  }
  // a sweep in the overlay replaces the preset's sweep rather than merging
  if (overlay.is_object() && overlay.contains("sweep")) j.erase("sweep");
  j.merge_patch(overlay);
  return j;
}

struct GridPoint {
  std::string label;
  ExperimentSpec spec;
};

std::string fmt_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

std::vector<GridPoint> expand_sweep(const json& cfg, const ExperimentSpec& base) {
  std::vector<GridPoint> points{{"", base}};
  if (!cfg.contains("sweep") || cfg["sweep"].is_null()) return points;
  const json& sweep = cfg["sweep"];
  if (!sweep.is_object()) throw ConfigError("field 'sweep': expected an object");
  for (auto it = sweep.begin(); it != sweep.end(); ++it) {
    const std::string key = it.key();
    if (!it->is_array() || it->empty()) throw ConfigError("field 'sweep." + key + "': expected a non-empty array");
    std::vector<GridPoint> next;
    for (const auto& gp : points) {
      for (const auto& v : *it) {
        GridPoint p = gp;
        std::string val;
        if (key == "system") {
          if (!v.is_string()) throw ConfigError("field 'sweep.system': expected strings");
          p.spec.system = v.get<std::string>();
          val = p.spec.system;
        } else {
          if (!v.is_number()) throw ConfigError("field 'sweep." + key + "': expected numbers");
          double x = v.get<double>();
          val = fmt_num(x);
          if (key == "privacy_budget_epsilon") p.spec.epsilon = x;
          else if (key == "poison_fraction") p.spec.adversary.fraction = x;
          else if (key == "sample_fraction") {
            p.spec.sample_fraction = x;
            p.spec.samples_R.reset();
            p.spec.adversary_f.reset();
            p.spec.updates_u.reset();
          } else if (key == "seed") p.spec.seed = uint64_t(v.get<int64_t>());
          else if (key == "churn_per_minute") p.spec.sim.churn_per_minute = x;
          else throw ConfigError("field 'sweep." + key + "': not a sweepable parameter");
        }
        p.label += (p.label.empty() ? "" : "_") + key + "=" + val;
        next.push_back(std::move(p));
      }
    }
    points = std::move(next);
  }
  return points;
}

constexpr const char* kSummaryHeader =
    "point,system,backend,seed,privacy_budget_epsilon,poison_fraction,sample_fraction,number_of_samples_R,"
    "number_of_updates_per_block_u,blocks,forks,void_rounds,churn_events,final_validation_error,final_attack_rate,"
    "max_attack_rate,replay_ok,agreement,sim_time";

std::string summary_line(const GridPoint& p, const RunOutcome& r) {
  char buf[512];
  auto attack = [](double v) { return std::isnan(v) ? std::string() : fmt_num(v); };
  std::snprintf(buf, sizeof buf, "%s,%s,%s,%llu,%g,%g,%g,%zu,%zu,%llu,%llu,%llu,%llu,%.6f,%s,%s,%d,%d,%.3f\n",
                p.label.empty() ? p.spec.name.c_str() : p.label.c_str(), r.system.c_str(), r.backend.c_str(),
                (unsigned long long)p.spec.seed, p.spec.epsilon, p.spec.adversary.fraction, p.spec.sample_fraction,
                p.spec.R(), p.spec.u(), (unsigned long long)r.blocks, (unsigned long long)r.forks,
                (unsigned long long)r.void_rounds, (unsigned long long)r.churn_events, r.final_validation_error(),
                attack(r.final_attack_rate()).c_str(), attack(r.max_attack_rate()).c_str(), int(r.replay_ok),
                int(r.agreement), r.sim_time);
  return buf;
}

json metadata(const ExperimentSpec& s) {
  return json{{"build_id", BISCOTTI_BUILD_ID}, {"config", to_json(s)}};
}

void write_run(const fs::path& dir, const ExperimentSpec& s, const RunOutcome& r) {
  fs::create_directories(dir);
  write_file(dir / "metrics.csv", r.metrics.to_csv());
  write_file(dir / "metrics.csv.meta.json", metadata(s).dump(2) + "\n");
  if (!r.chain.empty()) {
    write_chain_bytes((dir / "chain.bin").string(), r.chain);
    write_file(dir / "chain.bin.meta.json", metadata(s).dump(2) + "\n");
  }
}

int cmd_run(const std::string& config, const std::string& experiment, std::optional<uint64_t> seed,
            const std::string& out, unsigned jobs) {
  json cfg = load_config(config, experiment);
  ExperimentSpec base;
  apply_json(cfg, base);
  if (!experiment.empty()) base.name = experiment;
  if (seed) base.seed = *seed;
  auto points = expand_sweep(cfg, base);
  for (const auto& p : points) p.spec.validate();

  if (jobs == 0) jobs = std::max(1u, std::thread::hardware_concurrency());
  std::vector<RunOutcome> results(points.size());
  for (std::size_t lo = 0; lo < points.size(); lo += jobs) {
    std::vector<std::future<RunOutcome>> fs;
    for (std::size_t i = lo; i < std::min(points.size(), lo + jobs); ++i)
      fs.push_back(std::async(std::launch::async, [&, i] { return run_experiment(points[i].spec); }));
    for (std::size_t i = lo; i < std::min(points.size(), lo + jobs); ++i) results[i] = fs[i - lo].get();
  }

  fs::path root(out);
  fs::create_directories(root);
  std::string summary = std::string(kSummaryHeader) + "\n";
  bool ok = true;
  for (std::size_t i = 0; i < points.size(); ++i) {
    write_run(points[i].label.empty() ? root : root / points[i].label, points[i].spec, results[i]);
    summary += summary_line(points[i], results[i]);
    ok = ok && results[i].replay_ok && results[i].agreement;
  }
  write_file(root / "summary.csv", summary);
  write_file(root / "summary.csv.meta.json", metadata(base).dump(2) + "\n");
  std::cout << summary;
  if (!ok) std::cerr << "ledger integrity check failed\n";
  return ok ? 0 : 3;
}

template <class B>
int verify_chain_with(const ExperimentSpec& s, const fs::path& path) {
  auto data = prepare_data(s);
  auto g = build_genesis<B>(genesis_params(s, data), genesis_seed(s));
  std::vector<Block<B>> blocks;
  try {
    blocks = read_chain_file<B>(path.string());
  } catch (const ParseError& e) {
    std::cerr << path.string() << ": " << e.what() << "\n";
    return 1;
  }
  Rejection why = Rejection::None;
  uint64_t bad = replay_chain<B>(g, blocks, nullptr, &why);
  if (bad) {
    std::cerr << path.string() << ": block " << bad << " rejected (" << to_string(why) << ")\n";
    return 1;
  }
  std::cout << path.string() << ": " << blocks.size() << " blocks verified\n";
  return 0;
}

int cmd_verify(const std::string& chain, std::string config, std::optional<uint64_t> seed) {
  fs::path path(chain);
  if (fs::is_directory(path)) path /= "chain.bin";
  if (config.empty()) config = path.string() + ".meta.json";
  json cfg = load_config(config, "");
  ExperimentSpec s;
  apply_json(cfg, s);
  if (seed) s.seed = *seed;
  s.validate();
  if (s.backend == "bn254") return verify_chain_with<crypto::Bn254Backend>(s, path);
  return verify_chain_with<crypto::DebugBackend>(s, path);
}

int cmd_invert(const std::string& out, uint64_t seed, const std::vector<std::size_t>& batches, std::size_t side) {
  fs::create_directories(out);
  auto rows = inversion_study(batches, side, seed);
  std::string csv = "batch,class,cosine_similarity,image\n";
  for (const auto& r : rows) {
    std::string name = "inverted_b" + std::to_string(r.batch) + ".pgm";
    write_pgm((fs::path(out) / name).string(), r.image);
    char buf[160];
    std::snprintf(buf, sizeof buf, "%zu,%d,%.6f,%s\n", r.batch, r.target_class, r.similarity, name.c_str());
    csv += buf;
  }
  write_file(fs::path(out) / "inversion.csv", csv);
  std::cout << csv;
  return 0;
}

int cmd_collusion(const std::vector<double>& fractions, const std::vector<std::size_t>& noisers, std::size_t trials,
                  uint64_t seed) {
  std::printf("malicious_stake,noisers,trials,violations,probability,exact\n");
  for (double f : fractions)
    for (std::size_t k : noisers) {
      auto r = collusion_trials(f, k, trials, seed);
      std::printf("%g,%zu,%zu,%zu,%.6g,%.6g\n", f, k, r.trials, r.violations, r.probability(),
                  collusion_violation_exact(f, k));
    }
  return 0;
}

int cmd_krum_bench(std::size_t R, std::size_t dim, std::size_t reps, uint64_t seed) {
  auto cfg = KrumConfig::for_sample(R);
  Rng rng(seed);
  std::vector<std::vector<double>> updates(R, std::vector<double>(dim));
  for (auto& u : updates)
    for (auto& x : u) x = rng.gaussian(0, 1);
  auto t0 = std::chrono::steady_clock::now();
  std::size_t chosen = 0;
  for (std::size_t i = 0; i < reps; ++i) chosen += multi_krum_select(updates, cfg).size();
  double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::printf("R,f,dim,reps,accepted,mean_ms\n%zu,%zu,%zu,%zu,%zu,%.4f\n", R, cfg.f, dim, reps, chosen / reps,
              1e3 * secs / double(reps));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"biscotti: peer-to-peer ML ledger simulator"};
  app.require_subcommand(1);

  std::string config, experiment, out = "out";
  uint64_t seed_value = 0;
  unsigned jobs = 0;
  auto* run = app.add_subcommand("run", "run an experiment (or sweep) and write metrics, summary and chain");
  run->add_option("--config", config, "JSON config file or preset name");
  run->add_option("--experiment", experiment, "preset to start from")->check(CLI::IsMember(preset_names()));
  auto* run_seed = run->add_option("--seed", seed_value, "override the experiment seed");
  run->add_option("--out", out, "output directory");
  run->add_option("--jobs", jobs, "concurrent grid points (0 = all cores)");

  std::string chain, vconfig;
  auto* verify = app.add_subcommand("verify-chain", "re-validate a persisted chain from genesis");
  verify->add_option("chain", chain, "chain file or run directory")->required();
  verify->add_option("--config", vconfig, "config used for the run (default: the chain's sidecar)");
  auto* verify_seed = verify->add_option("--seed", seed_value, "override the experiment seed");

  std::vector<std::size_t> batches{1, 5, 15, 35};
  std::size_t side = 12;
  uint64_t inv_seed = 1;
  auto* invert = app.add_subcommand("invert", "invert aggregated softmax gradients into images");
  invert->add_option("--out", out, "output directory");
  invert->add_option("--seed", inv_seed, "seed");
  invert->add_option("--batches", batches, "aggregate sizes")->delimiter(',');
  invert->add_option("--side", side, "image side length");

  std::vector<double> fractions{0.1, 0.15, 0.2, 0.3, 0.5};
  std::vector<std::size_t> noisers{3, 5, 10};
  std::size_t trials = 10000;
  uint64_t col_seed = 1;
  auto* coll = app.add_subcommand("collusion-prob", "Monte Carlo privacy violation probability");
  coll->add_option("--stake", fractions, "malicious stake fractions")->delimiter(',');
  coll->add_option("--noisers", noisers, "noiser counts")->delimiter(',');
  coll->add_option("--trials", trials, "trials per grid point");
  coll->add_option("--seed", col_seed, "seed");

  std::size_t R = 70, dim = 25, reps = 100;
  uint64_t krum_seed = 1;
  auto* bench = app.add_subcommand("krum-bench", "time Multi-KRUM selection");
  bench->add_option("--R", R, "sample size");
  bench->add_option("--dim", dim, "update dimension");
  bench->add_option("--reps", reps, "repetitions");
  bench->add_option("--seed", krum_seed, "seed");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*run) {
      std::optional<uint64_t> s;
      if (*run_seed) s = seed_value;
      return cmd_run(config, experiment, s, out, jobs);
    }
    if (*verify) {
      std::optional<uint64_t> s;
      if (*verify_seed) s = seed_value;
      return cmd_verify(chain, vconfig, s);
    }
    if (*invert) return cmd_invert(out, inv_seed, batches, side);
    if (*coll) return cmd_collusion(fractions, noisers, trials, col_seed);
    if (*bench) return cmd_krum_bench(R, dim, reps, krum_seed);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
