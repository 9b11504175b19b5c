#pragma once

#include <cstdint>
#include <string>

#include "safl/run_config.hpp"

namespace safl {

struct RunResult {
  std::string strategy;
  int rounds = 0;
  double best_f1 = 0.0;
  double final_f1 = 0.0;
  std::uint64_t total_bytes_up = 0;
  double reduction_percent = 0.0;
  double eps_total = 0.0;
  std::uint64_t seed = 0;
};

std::string summary_csv(const RunResult& r);

// Executes the configured strategy and writes rounds.jsonl, summary.csv,
// selection_trace.jsonl, privacy_ledger.json and resolved_config.ini into
// rc.out_dir. Refuses an existing nonempty out_dir unless force.
RunResult execute_run(const RunConfig& rc, bool force = false, bool save_model = false,
                      bool quiet = false);

}  // namespace safl
