#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "safl/fedsim.hpp"
#include "safl/synthdata.hpp"

namespace safl {

// Resolved run configuration: one human-editable INI with sections, every
// field overridable from the command line (flags win). The resolved form is
// echoed next to the outputs and reproduces the run bitwise.
struct RunConfig {
  // [run]
  std::string strategy_name = "safl";
  int rounds = 100;
  int clients = 10;
  int batch_size = 32;
  int local_epochs = 1;
  double lr = 2e-5;
  int warmup_steps = 0;
  int k = 8;
  int bottom_frozen = 0;
  std::uint64_t seed = 42;
  int threads = 1;
  std::string out_dir = "runs/out";
  double eval_fraction = 0.2;

  // [encoder]; vocab is shared with the corpus, num_labels derived from it
  EncoderConfig encoder;

  // [corpus]
  CorpusSpec corpus;

  // [partition]
  double dirichlet_alpha = 1.0;

  // [selector]
  std::string task_tokens = "cls";  // cls | entities | ids:a,b,... | positions:p,...
  int profile_examples = 32;
  bool query_side = false;
  bool global_consensus = false;
  bool train_embedding = true;
  bool train_classifier = true;

  // [privacy]
  bool privacy_enabled = false;
  double clip_norm = 1.0;
  double noise_multiplier = 1.0;
  double dp_delta = 1e-5;
  double eps_target = 4.0;  // reporting context only

  // [transmit]
  double prune_fraction = 0.0;
  int wire_bits = 64;

  static RunConfig from_ini_file(const std::string& path);
  void apply_ini(const std::string& text);
  std::string to_ini() const;
  void validate() const;
};

struct RunBundle {
  FedConfig fed;
  LabeledCorpus corpus;
  std::vector<std::vector<int>> shards;
  std::vector<int> eval_indices;
};

// Generates the corpus, splits off the eval tail, partitions the training
// prefix, and resolves the task-token spec.
RunBundle assemble(const RunConfig& rc);

TaskTokenSpec resolve_task_tokens(const std::string& spec_text, const VocabLayout& vocab);

std::string format_double(double v);  // round-trip exact

}  // namespace safl
