#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "safl/convergence.hpp"
#include "safl/errors.hpp"
#include "safl/report.hpp"
#include "safl/run_config.hpp"
#include "safl/runner.hpp"
#include "safl/synthdata.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitDivergence = 2;
constexpr int kExitIo = 3;

struct CommonFlags {
  std::string config_path;
  std::optional<std::string> strategy, out_dir, task_tokens;
  std::optional<int> rounds, clients, k, batch_size, threads, warmup_steps, bottom_frozen;
  std::optional<std::uint64_t> seed;
  std::optional<double> lr, alpha, prune_fraction, noise_multiplier;
  std::optional<bool> privacy;
};

void add_common_flags(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config_path, "INI config file; flags override its values");
  cmd->add_option("--strategy", f.strategy, "safl | fedavg | static_skip | random_k");
  cmd->add_option("--rounds", f.rounds, "federated rounds");
  cmd->add_option("--clients", f.clients, "number of clients");
  cmd->add_option("--k", f.k, "layers selected per round");
  cmd->add_option("--batch-size", f.batch_size, "per-client batch size");
  cmd->add_option("--lr", f.lr, "learning rate");
  cmd->add_option("--warmup-steps", f.warmup_steps, "linear warmup steps");
  cmd->add_option("--bottom-frozen", f.bottom_frozen, "frozen bottom layers for static_skip");
  cmd->add_option("--seed", f.seed, "master seed");
  cmd->add_option("--threads", f.threads, "client worker threads");
  cmd->add_option("--alpha", f.alpha, "Dirichlet concentration for the partition");
  cmd->add_option("--task-tokens", f.task_tokens, "cls | entities | ids:... | positions:...");
  cmd->add_option("--prune-fraction", f.prune_fraction, "delta pruning fraction in [0,1)");
  cmd->add_option("--noise-multiplier", f.noise_multiplier, "DP noise multiplier sigma");
  cmd->add_option("--privacy", f.privacy, "enable DP-SGD");
  cmd->add_option("--out", f.out_dir, "output directory");
}

safl::RunConfig build_config(const CommonFlags& f) {
  safl::RunConfig rc;
  if (!f.config_path.empty()) rc = safl::RunConfig::from_ini_file(f.config_path);
  if (f.strategy) rc.strategy_name = *f.strategy;
  if (f.rounds) rc.rounds = *f.rounds;
  if (f.clients) rc.clients = *f.clients;
  if (f.k) rc.k = *f.k;
  if (f.batch_size) rc.batch_size = *f.batch_size;
  if (f.lr) rc.lr = *f.lr;
  if (f.warmup_steps) rc.warmup_steps = *f.warmup_steps;
  if (f.bottom_frozen) rc.bottom_frozen = *f.bottom_frozen;
  if (f.seed) rc.seed = *f.seed;
  if (f.threads) rc.threads = *f.threads;
  if (f.alpha) rc.dirichlet_alpha = *f.alpha;
  if (f.task_tokens) rc.task_tokens = *f.task_tokens;
  if (f.prune_fraction) rc.prune_fraction = *f.prune_fraction;
  if (f.noise_multiplier) rc.noise_multiplier = *f.noise_multiplier;
  if (f.privacy) rc.privacy_enabled = *f.privacy;
  // Output dir: flag > environment > config value.
  if (f.out_dir) {
    rc.out_dir = *f.out_dir;
  } else if (const char* env = std::getenv("SAFL_OUT_DIR")) {
    rc.out_dir = env;
  }
  return rc;
}

int run_guarded(const std::function<int()>& body) {
  try {
    return body();
  } catch (const safl::DivergenceError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitDivergence;
  } catch (const safl::IoError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitIo;
  } catch (const fs::filesystem_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitIo;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitConfig;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Selective-attention federated learning simulator"};
  app.require_subcommand(1);

  // run
  CommonFlags run_flags;
  bool run_force = false, run_save_model = false, run_quiet = false;
  CLI::App* cmd_run = app.add_subcommand("run", "execute one federated training run");
  add_common_flags(cmd_run, run_flags);
  cmd_run->add_flag("--force", run_force, "allow writing into a nonempty output directory");
  cmd_run->add_flag("--save-model", run_save_model, "write final model checkpoint");
  cmd_run->add_flag("--quiet", run_quiet, "suppress per-round output");

  // sweep
  CommonFlags sweep_flags;
  std::string sweep_axis;
  std::vector<double> sweep_values;
  bool sweep_force = false;
  CLI::App* cmd_sweep = app.add_subcommand("sweep", "run one configuration per axis value");
  add_common_flags(cmd_sweep, sweep_flags);
  cmd_sweep->add_option("--axis", sweep_axis, "k | sigma | alpha")->required();
  cmd_sweep->add_option("--values", sweep_values, "axis values")->required()->delimiter(',');
  cmd_sweep->add_flag("--force", sweep_force, "allow writing into nonempty output directories");

  // report
  std::string report_dir;
  CLI::App* cmd_report = app.add_subcommand("report", "layer-frequency table for a finished run");
  cmd_report->add_option("run_dir", report_dir, "run output directory")->required();

  // gen-data
  CommonFlags gen_flags;
  CLI::App* cmd_gen = app.add_subcommand("gen-data", "generate corpus and partition files");
  add_common_flags(cmd_gen, gen_flags);

  // bound
  safl::ConvergenceParams bound_params;
  int bound_seeds = 0;
  int bound_dim_per_layer = 4;
  std::string bound_csv;
  CLI::App* cmd_bound = app.add_subcommand("bound", "convergence-bound calculator");
  cmd_bound->add_option("--eta", bound_params.eta, "learning rate");
  cmd_bound->add_option("--mu", bound_params.mu, "strong-convexity constant");
  cmd_bound->add_option("--smooth", bound_params.smooth_l, "smoothness constant");
  cmd_bound->add_option("--layers", bound_params.num_layers, "layer count");
  cmd_bound->add_option("--k", bound_params.k, "layers updated per round");
  cmd_bound->add_option("--rounds", bound_params.rounds, "rounds");
  cmd_bound->add_option("--gap", bound_params.initial_gap, "initial objective gap");
  cmd_bound->add_option("--simulate", bound_seeds, "run the quadratic harness over N seeds");
  cmd_bound->add_option("--dim-per-layer", bound_dim_per_layer, "harness coordinates per layer");
  cmd_bound->add_option("--csv", bound_csv, "write round,bound,empirical,stderr CSV");

  CLI11_PARSE(app, argc, argv);

  if (cmd_run->parsed()) {
    return run_guarded([&]() {
      safl::RunConfig rc = build_config(run_flags);
      safl::RunResult r = safl::execute_run(rc, run_force, run_save_model, run_quiet);
      std::printf("%s", safl::summary_csv(r).c_str());
      return kExitOk;
    });
  }

  if (cmd_sweep->parsed()) {
    return run_guarded([&]() {
      safl::RunConfig base = build_config(sweep_flags);
      if (sweep_axis != "k" && sweep_axis != "sigma" && sweep_axis != "alpha") {
        throw std::invalid_argument("sweep: axis must be k, sigma or alpha");
      }
      const fs::path root(base.out_dir);
      std::string csv = "axis,value,best_f1,final_f1,total_bytes_up,eps_total\n";
      for (double v : sweep_values) {
        safl::RunConfig rc = base;
        std::string tag;
        if (sweep_axis == "k") {
          rc.k = static_cast<int>(v);
          tag = std::to_string(rc.k);
        } else if (sweep_axis == "sigma") {
          rc.noise_multiplier = v;
          rc.privacy_enabled = true;
          tag = safl::format_double(v);
        } else {
          rc.dirichlet_alpha = v;
          tag = safl::format_double(v);
        }
        rc.out_dir = (root / ("sweep_" + sweep_axis + "_" + tag)).string();
        safl::RunResult r = safl::execute_run(rc, sweep_force, false, true);
        csv += sweep_axis + "," + tag + "," + safl::format_double(r.best_f1) + "," +
               safl::format_double(r.final_f1) + "," + std::to_string(r.total_bytes_up) + "," +
               (std::isinf(r.eps_total) ? "inf" : safl::format_double(r.eps_total)) + "\n";
      }
      fs::create_directories(root);
      std::ofstream os(root / ("sweep_" + sweep_axis + ".csv"));
      os << csv;
      if (!os) throw safl::IoError("sweep: write failed");
      std::printf("%s", csv.c_str());
      return kExitOk;
    });
  }

  if (cmd_report->parsed()) {
    return run_guarded([&]() {
      const fs::path dir(report_dir);
      auto rows = safl::load_trace_jsonl((dir / "selection_trace.jsonl").string());
      auto bands = safl::layer_frequency_bands(rows, safl::infer_num_layers(rows));
      std::printf("%s", safl::render_band_table(bands).c_str());
      safl::write_band_csv((dir / "layer_frequency.csv").string(), bands);
      std::ifstream summary(dir / "summary.csv");
      if (summary) {
        std::string line;
        std::printf("\nsummary:\n");
        while (std::getline(summary, line)) std::printf("%s\n", line.c_str());
      }
      return kExitOk;
    });
  }

  if (cmd_gen->parsed()) {
    return run_guarded([&]() {
      safl::RunConfig rc = build_config(gen_flags);
      safl::RunBundle bundle = safl::assemble(rc);
      fs::create_directories(rc.out_dir);
      const fs::path dir(rc.out_dir);
      safl::save_corpus_jsonl((dir / "corpus.jsonl").string(), bundle.corpus);
      safl::save_partition_json((dir / "partition.json").string(), bundle.shards);
      std::printf("wrote %zu sequences, %zu shards to %s\n", bundle.corpus.sequences.size(),
                  bundle.shards.size(), rc.out_dir.c_str());
      return kExitOk;
    });
  }

  if (cmd_bound->parsed()) {
    return run_guarded([&]() {
      safl::BoundResult b = safl::bound(bound_params);
      safl::SimulationResult s;
      if (bound_seeds > 0) {
        safl::QuadraticProblem q;
        q.dim_per_layer = bound_dim_per_layer;
        s = safl::simulate_quadratic(bound_params, q, bound_seeds);
      } else {
        s.mean_gap.assign(b.gap.size(), 0.0);
        s.stderr_gap.assign(b.gap.size(), 0.0);
      }
      if (!b.contractive) std::printf("note: parameters are not contractive\n");
      std::printf("round,bound%s\n", bound_seeds > 0 ? ",empirical_mean,stderr" : "");
      for (std::size_t t = 0; t < b.gap.size(); ++t) {
        if (bound_seeds > 0) {
          std::printf("%zu,%.12g,%.12g,%.12g\n", t, b.gap[t], s.mean_gap[t], s.stderr_gap[t]);
        } else {
          std::printf("%zu,%.12g\n", t, b.gap[t]);
        }
      }
      if (!bound_csv.empty()) safl::write_convergence_csv(bound_csv, b, s);
      return kExitOk;
    });
  }

  return kExitConfig;
}
