#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "safl/delta.hpp"
#include "safl/encoder.hpp"
#include "safl/privacy.hpp"
#include "safl/selector.hpp"
#include "safl/synthdata.hpp"

namespace safl {

enum class StrategyKind { SAFL, FedAvgFull, StaticLayerSkip, RandomK };

struct Strategy {
  StrategyKind kind = StrategyKind::SAFL;
  int k = 8;              // SAFL and RandomK
  int bottom_frozen = 0;  // StaticLayerSkip

  static Strategy safl(int k) { return {StrategyKind::SAFL, k, 0}; }
  static Strategy fedavg_full() { return {StrategyKind::FedAvgFull, 0, 0}; }
  static Strategy static_skip(int bottom_frozen) {
    return {StrategyKind::StaticLayerSkip, 0, bottom_frozen};
  }
  static Strategy random_k(int k) { return {StrategyKind::RandomK, k, 0}; }
  std::string name() const;
};

Strategy strategy_from_name(const std::string& name, int k, int bottom_frozen);

struct EvalMetrics {
  double micro_f1 = 0.0;
  double seq_accuracy = 0.0;
  double loss = 0.0;
};

struct ClientState {
  int id = 0;
  std::vector<int> shard;  // indices into the training corpus
  ModelState model;
  std::int64_t opt_steps = 0;  // cumulative, drives warmup

  int samples() const { return static_cast<int>(shard.size()); }
};

struct FedConfig {
  EncoderConfig encoder;
  Strategy strategy;
  int rounds = 100;
  int batch_size = 32;
  int local_epochs = 1;
  double lr = 2e-5;
  int warmup_steps = 0;
  TaskTokenSpec task_tokens;
  int profile_examples = 32;
  bool query_side_scores = false;
  bool global_consensus = false;  // server-side score union instead of per-client masks
  bool train_embedding = true;
  bool train_classifier = true;
  PrivacyParams privacy;
  double prune_fraction = 0.0;
  WirePrecision wire = WirePrecision::F64;
  std::uint64_t master_seed = 42;
  int threads = 1;

  void validate() const;
};

struct RoundComm {
  int round = 0;
  std::vector<std::uint64_t> bytes_up_per_client;
  std::uint64_t bytes_up_total = 0;
  std::uint64_t layer_bytes_up_total = 0;
  std::uint64_t bytes_down_total = 0;
  std::uint64_t baseline_full_bytes = 0;   // what FedAvgFull uplink would cost this round
  std::uint64_t baseline_layer_bytes = 0;  // layer blocks only
  double reduction_percent = 0.0;          // 1 - up/baseline, uplink over all trainable blocks
  double layer_reduction_percent = 0.0;    // same over layer blocks only
};

struct CommLedger {
  std::vector<RoundComm> rounds;
  std::uint64_t cumulative_up = 0;
  std::uint64_t cumulative_down = 0;
  std::uint64_t cumulative_baseline = 0;

  double cumulative_reduction() const;
};

struct SelectionTraceEntry {
  int round = 0;
  int client = 0;
  LayerScore scores;
  SelectionMask mask;
  bool tie = false;
};

struct RoundReport {
  int round = 0;
  std::vector<double> client_loss;
  EvalMetrics eval;
  std::vector<SelectionMask> masks;  // per client
  std::vector<int> layers_untouched;
  RoundComm comm;
  double eps_total = 0.0;
};

std::string to_json_line(const RoundReport& report);
std::string to_json_line(const SelectionTraceEntry& entry);

// Weighted mean over the clients that transmitted each layer, weights
// renormalized over those senders; summation follows ascending client order.
struct AggregateResult {
  std::map<int, std::vector<double>> layer_mean;
  std::map<int, int> senders;
};

AggregateResult aggregate(const std::vector<std::vector<LayerDelta>>& per_client,
                          const std::vector<double>& weights);

std::vector<double> weighted_mean(const std::vector<std::vector<double>>& vecs,
                                  const std::vector<double>& weights);

EvalMetrics evaluate(const ModelState& model, const std::vector<const LabeledSequence*>& eval_set);

class FederatedRun {
 public:
  FederatedRun(FedConfig cfg, LabeledCorpus corpus, std::vector<std::vector<int>> shards,
               std::vector<int> eval_indices);

  RoundReport run_round();

  const FedConfig& config() const { return cfg_; }
  const ModelState& global_model() const { return global_; }
  const CommLedger& comm() const { return comm_; }
  const PrivacyLedger& privacy_ledger() const { return privacy_; }
  const std::vector<SelectionTraceEntry>& selection_trace() const { return trace_; }
  const std::vector<ClientState>& clients() const { return clients_; }
  int rounds_completed() const { return round_; }

  EvalMetrics evaluate_global() const;

 private:
  struct ClientRoundResult {
    double mean_loss = 0.0;
    LayerScore scores;
    SelectionMask mask;
    std::vector<LayerDelta> layer_deltas;
    std::vector<double> embedding_delta;
    std::vector<double> classifier_delta;
    std::uint64_t bytes_up = 0;
    std::uint64_t layer_bytes_up = 0;
    int noisy_steps = 0;
  };

  SelectionMask mask_for_client(const ClientState& client, int round,
                                const LayerScore& scores) const;
  LayerScore profile_client(const ClientState& client, int round) const;
  void local_train(ClientState& client, const FreezeMask& mask, int round,
                   ClientRoundResult& out) const;
  ClientRoundResult client_round(ClientState& client, int round,
                                 const std::optional<SelectionMask>& forced_mask) const;

  FedConfig cfg_;
  LabeledCorpus corpus_;
  std::vector<ClientState> clients_;
  std::vector<int> eval_indices_;
  ModelState global_;
  CommLedger comm_;
  PrivacyLedger privacy_;
  std::vector<SelectionTraceEntry> trace_;
  int round_ = 0;
  std::uint64_t pending_down_bytes_ = 0;  // per-client broadcast cost of the next round
};

}  // namespace safl
