#include "safl/runner.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "safl/errors.hpp"

namespace safl {

namespace fs = std::filesystem;

std::string summary_csv(const RunResult& r) {
  std::string s = "strategy,rounds,best_f1,final_f1,total_bytes_up,reduction_percent,eps_total,seed\n";
  s += r.strategy + "," + std::to_string(r.rounds) + "," + format_double(r.best_f1) + "," +
       format_double(r.final_f1) + "," + std::to_string(r.total_bytes_up) + "," +
       format_double(r.reduction_percent) + "," +
       (std::isinf(r.eps_total) ? "inf" : format_double(r.eps_total)) + "," +
       std::to_string(r.seed) + "\n";
  return s;
}

RunResult execute_run(const RunConfig& rc, bool force, bool save_model_flag, bool quiet) {
  const fs::path out(rc.out_dir);
  std::error_code ec;
  if (fs::exists(out, ec)) {
    if (!fs::is_directory(out, ec)) throw IoError("run: output path is not a directory: " + rc.out_dir);
    if (!fs::is_empty(out, ec) && !force) {
      throw IoError("run: output directory not empty (use --force): " + rc.out_dir);
    }
  } else if (!fs::create_directories(out, ec)) {
    throw IoError("run: cannot create output directory: " + rc.out_dir);
  }

  RunBundle bundle = assemble(rc);
  FederatedRun run(bundle.fed, std::move(bundle.corpus), std::move(bundle.shards),
                   std::move(bundle.eval_indices));

  std::ofstream rounds_os(out / "rounds.jsonl");
  std::ofstream trace_os(out / "selection_trace.jsonl");
  if (!rounds_os || !trace_os) throw IoError("run: cannot open artifact files in " + rc.out_dir);

  RunResult result;
  result.strategy = bundle.fed.strategy.name();
  result.seed = rc.seed;

  const EvalMetrics initial = run.evaluate_global();
  double best = initial.micro_f1;
  double final_f1 = initial.micro_f1;

  std::size_t trace_written = 0;
  for (int r = 0; r < rc.rounds; ++r) {
    RoundReport report = run.run_round();
    rounds_os << to_json_line(report) << "\n";
    for (; trace_written < run.selection_trace().size(); ++trace_written) {
      trace_os << to_json_line(run.selection_trace()[trace_written]) << "\n";
    }
    best = std::max(best, report.eval.micro_f1);
    final_f1 = report.eval.micro_f1;
    if (!quiet) {
      std::printf("round %d  f1=%.4f  loss=%.4f  up=%llu bytes\n", report.round,
                  report.eval.micro_f1, report.eval.loss,
                  static_cast<unsigned long long>(report.comm.bytes_up_total));
    }
  }

  result.rounds = rc.rounds;
  result.best_f1 = best;
  result.final_f1 = final_f1;
  result.total_bytes_up = run.comm().cumulative_up;
  result.reduction_percent = run.comm().cumulative_reduction();
  result.eps_total = run.privacy_ledger().eps_total;

  {
    std::ofstream os(out / "summary.csv");
    os << summary_csv(result);
    if (!os) throw IoError("run: write failed for summary.csv");
  }
  {
    std::ofstream os(out / "privacy_ledger.json");
    os << run.privacy_ledger().to_json() << "\n";
    if (!os) throw IoError("run: write failed for privacy_ledger.json");
  }
  {
    std::ofstream os(out / "resolved_config.ini");
    os << rc.to_ini();
    if (!os) throw IoError("run: write failed for resolved_config.ini");
  }
  if (save_model_flag) save_model((out / "model.ckpt").string(), run.global_model());

  if (!quiet) {
    std::printf("seed %llu  strategy %s  best_f1=%.4f  final_f1=%.4f  reduction=%.2f%%\n",
                static_cast<unsigned long long>(result.seed), result.strategy.c_str(),
                result.best_f1, result.final_f1, 100.0 * result.reduction_percent);
  }
  return result;
}

}  // namespace safl
