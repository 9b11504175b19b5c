#include "safl/fedsim.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <thread>

#include <json.hpp>

#include "safl/errors.hpp"

namespace safl {

std::string Strategy::name() const {
  switch (kind) {
    case StrategyKind::SAFL: return "safl";
    case StrategyKind::FedAvgFull: return "fedavg";
    case StrategyKind::StaticLayerSkip: return "static_skip";
    case StrategyKind::RandomK: return "random_k";
  }
  return "?";
}

Strategy strategy_from_name(const std::string& name, int k, int bottom_frozen) {
  if (name == "safl") return Strategy::safl(k);
  if (name == "fedavg") return Strategy::fedavg_full();
  if (name == "static_skip") return Strategy::static_skip(bottom_frozen);
  if (name == "random_k") return Strategy::random_k(k);
  throw std::invalid_argument("strategy: unknown name '" + name +
                              "' (expected safl|fedavg|static_skip|random_k)");
}

void FedConfig::validate() const {
  encoder.validate();
  if (rounds < 0) throw std::invalid_argument("FedConfig: rounds must be >= 0");
  if (batch_size < 1) throw std::invalid_argument("FedConfig: batch_size must be >= 1");
  if (local_epochs < 1) throw std::invalid_argument("FedConfig: local_epochs must be >= 1");
  if (lr <= 0.0) throw std::invalid_argument("FedConfig: lr must be positive");
  if (threads < 1) throw std::invalid_argument("FedConfig: threads must be >= 1");
  if (prune_fraction < 0.0 || prune_fraction >= 1.0) {
    throw std::invalid_argument("FedConfig: prune_fraction must be in [0,1)");
  }
  if (profile_examples < 1) throw std::invalid_argument("FedConfig: profile_examples must be >= 1");
  switch (strategy.kind) {
    case StrategyKind::SAFL:
    case StrategyKind::RandomK:
      if (strategy.k < 1) throw std::invalid_argument("FedConfig: k must be >= 1");
      break;
    case StrategyKind::StaticLayerSkip:
      if (strategy.bottom_frozen < 0 || strategy.bottom_frozen >= encoder.num_layers) {
        throw std::invalid_argument("FedConfig: bottom_frozen must be in [0, num_layers)");
      }
      break;
    case StrategyKind::FedAvgFull:
      break;
  }
  if (privacy.enabled) privacy.validate();
}

double CommLedger::cumulative_reduction() const {
  if (cumulative_baseline == 0) return 0.0;
  return 1.0 - static_cast<double>(cumulative_up) / static_cast<double>(cumulative_baseline);
}

// ---------------------------------------------------------------------------
// aggregate / evaluate
// ---------------------------------------------------------------------------

std::vector<double> weighted_mean(const std::vector<std::vector<double>>& vecs,
                                  const std::vector<double>& weights) {
  if (vecs.empty()) throw std::invalid_argument("weighted_mean: no vectors");
  if (vecs.size() != weights.size()) {
    throw std::invalid_argument("weighted_mean: weight count mismatch");
  }
  std::vector<double> acc(vecs[0].size(), 0.0);
  double total = 0.0;
  for (std::size_t c = 0; c < vecs.size(); ++c) {
    if (weights[c] <= 0.0) throw std::invalid_argument("weighted_mean: weights must be positive");
    if (vecs[c].size() != acc.size()) {
      throw std::invalid_argument("weighted_mean: vector length mismatch");
    }
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += weights[c] * vecs[c][i];
    total += weights[c];
  }
  for (double& v : acc) v /= total;
  return acc;
}

AggregateResult aggregate(const std::vector<std::vector<LayerDelta>>& per_client,
                          const std::vector<double>& weights) {
  if (per_client.size() != weights.size()) {
    throw std::invalid_argument("aggregate: weight count mismatch");
  }
  AggregateResult out;
  // First pass: which layers have senders. Second: weighted mean in
  // ascending client order.
  std::map<int, double> weight_sum;
  for (std::size_t c = 0; c < per_client.size(); ++c) {
    for (const LayerDelta& d : per_client[c]) {
      if (d.layer_id < 1) throw std::invalid_argument("aggregate: invalid layer id");
      if (weights[c] <= 0.0) throw std::invalid_argument("aggregate: weights must be positive");
      weight_sum[d.layer_id] += weights[c];
      out.senders[d.layer_id] += 1;
    }
  }
  for (std::size_t c = 0; c < per_client.size(); ++c) {
    for (const LayerDelta& d : per_client[c]) {
      auto& acc = out.layer_mean[d.layer_id];
      if (acc.empty()) acc.assign(d.values.size(), 0.0);
      if (acc.size() != d.values.size()) {
        throw std::invalid_argument("aggregate: delta length mismatch for layer " +
                                    std::to_string(d.layer_id));
      }
      const double w = weights[c] / weight_sum[d.layer_id];
      for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += w * d.values[i];
    }
  }
  return out;
}

EvalMetrics evaluate(const ModelState& model, const std::vector<const LabeledSequence*>& eval_set) {
  if (eval_set.empty()) throw std::invalid_argument("evaluate: empty eval set");
  std::uint64_t tp = 0, fp = 0, fn = 0;
  int exact = 0;
  double loss = 0.0;
  for (const LabeledSequence* seq : eval_set) {
    ForwardResult fwd = forward(model, seq->tokens, false);
    loss += cross_entropy_with_logits(fwd.logits, seq->labels).value();
    const int n = static_cast<int>(seq->tokens.size());
    const int labels = fwd.logits.cols();
    bool all_match = true;
    for (int i = 0; i < n; ++i) {
      int pred = 0;
      double best = fwd.logits.at(i, 0);
      for (int c = 1; c < labels; ++c) {
        if (fwd.logits.at(i, c) > best) {
          best = fwd.logits.at(i, c);
          pred = c;
        }
      }
      const int truth = seq->labels[i];
      if (pred != truth) all_match = false;
      if (pred == truth) {
        if (truth > 0) ++tp;
      } else {
        if (pred > 0) ++fp;
        if (truth > 0) ++fn;
      }
    }
    if (all_match) ++exact;
  }
  EvalMetrics m;
  const std::uint64_t denom = 2 * tp + fp + fn;
  // No positives anywhere and none predicted counts as perfect.
  m.micro_f1 = denom == 0 ? 1.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
  m.seq_accuracy = static_cast<double>(exact) / static_cast<double>(eval_set.size());
  m.loss = loss / static_cast<double>(eval_set.size());
  return m;
}

// ---------------------------------------------------------------------------
// FederatedRun
// ---------------------------------------------------------------------------

namespace {

std::string stream_name(int client, int round, const char* what) {
  return "client:" + std::to_string(client) + ":round:" + std::to_string(round) + ":" + what;
}

// Deterministic regardless of which thread runs which client: results land
// in per-client slots and any exception is rethrown in client order.
void parallel_for_clients(int threads, int n, const std::function<void(int)>& fn) {
  if (threads <= 1 || n <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::exception_ptr> errors(n);
  std::vector<std::thread> pool;
  const int workers = std::min(threads, n);
  pool.reserve(workers);
  for (int t = 0; t < workers; ++t) {
    pool.emplace_back([&]() {
      for (;;) {
        const int i = next.fetch_add(1);
        if (i >= n) return;
        try {
          fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  for (int i = 0; i < n; ++i) {
    if (errors[i]) std::rethrow_exception(errors[i]);
  }
}

void quantize_f32(std::vector<double>& v) {
  for (double& x : v) x = static_cast<double>(static_cast<float>(x));
}

std::uint64_t trainable_dense_bytes(const FedConfig& cfg, bool layers_only) {
  const std::uint64_t lp = layer_param_count(cfg.encoder);
  std::uint64_t count = lp * static_cast<std::uint64_t>(cfg.encoder.num_layers);
  if (!layers_only) {
    if (cfg.train_embedding) count += embedding_param_count(cfg.encoder);
    if (cfg.train_classifier) count += classifier_param_count(cfg.encoder);
  }
  return count * value_bytes(cfg.wire);
}

}  // namespace

FederatedRun::FederatedRun(FedConfig cfg, LabeledCorpus corpus,
                           std::vector<std::vector<int>> shards, std::vector<int> eval_indices)
    : cfg_(std::move(cfg)), corpus_(std::move(corpus)), eval_indices_(std::move(eval_indices)) {
  cfg_.validate();
  if (shards.empty()) throw std::invalid_argument("FederatedRun: need at least one client");
  if (eval_indices_.empty()) throw std::invalid_argument("FederatedRun: empty eval set");

  RngStream init_rng(cfg_.master_seed, "model:init");
  global_ = ModelState::init(cfg_.encoder, init_rng);

  clients_.reserve(shards.size());
  for (std::size_t c = 0; c < shards.size(); ++c) {
    if (shards[c].empty()) {
      throw std::invalid_argument("FederatedRun: empty shard for client " + std::to_string(c));
    }
    ClientState cs;
    cs.id = static_cast<int>(c);
    cs.shard = std::move(shards[c]);
    clients_.push_back(std::move(cs));
  }
  // Initial broadcast: every block, dense.
  pending_down_bytes_ = global_.total_param_count() * value_bytes(cfg_.wire);
}

LayerScore FederatedRun::profile_client(const ClientState& client, int round) const {
  RngStream rng(cfg_.master_seed, stream_name(client.id, round, "profile"));
  std::vector<int> pool = client.shard;
  const int take = std::min<int>(cfg_.profile_examples, static_cast<int>(pool.size()));
  for (int i = 0; i < take; ++i) {
    const int j = i + rng.next_below(static_cast<int>(pool.size()) - i);
    std::swap(pool[i], pool[j]);
  }
  std::vector<AttentionRecord> records;
  records.reserve(take);
  for (int i = 0; i < take; ++i) {
    ForwardResult fwd = forward(client.model, corpus_.sequences[pool[i]].tokens, true);
    records.push_back(std::move(*fwd.attention));
  }
  ScoreOptions opts;
  opts.query_side = cfg_.query_side_scores;
  return layer_scores(records, cfg_.task_tokens, opts);
}

SelectionMask FederatedRun::mask_for_client(const ClientState& client, int round,
                                            const LayerScore& scores) const {
  const int layers = cfg_.encoder.num_layers;
  SelectionMask mask;
  mask.round = round;
  switch (cfg_.strategy.kind) {
    case StrategyKind::SAFL:
      mask = select_top_k(scores, cfg_.strategy.k);
      mask.round = round;
      break;
    case StrategyKind::FedAvgFull:
      for (int l = 1; l <= layers; ++l) mask.selected.push_back(l);
      break;
    case StrategyKind::StaticLayerSkip:
      for (int l = cfg_.strategy.bottom_frozen + 1; l <= layers; ++l) mask.selected.push_back(l);
      break;
    case StrategyKind::RandomK: {
      RngStream rng(cfg_.master_seed, stream_name(client.id, round, "select"));
      std::vector<int> ids(layers);
      std::iota(ids.begin(), ids.end(), 1);
      const int take = std::min(cfg_.strategy.k, layers);
      for (int i = 0; i < take; ++i) {
        const int j = i + rng.next_below(layers - i);
        std::swap(ids[i], ids[j]);
      }
      mask.selected.assign(ids.begin(), ids.begin() + take);
      std::sort(mask.selected.begin(), mask.selected.end());
      break;
    }
  }
  return mask;
}

void FederatedRun::local_train(ClientState& client, const FreezeMask& mask, int round,
                               ClientRoundResult& out) const {
  const bool dp = cfg_.privacy.enabled;
  RngStream dp_rng(cfg_.master_seed, stream_name(client.id, round, "dp"));

  double loss_sum = 0.0;
  int batches = 0;
  int step_in_round = 0;
  for (int epoch = 0; epoch < cfg_.local_epochs; ++epoch) {
    std::vector<int> order = client.shard;
    RngStream shuffle_rng(cfg_.master_seed,
                          stream_name(client.id, round, "epoch") + ":" + std::to_string(epoch) +
                              ":shuffle");
    for (std::size_t i = order.size(); i > 1; --i) {
      const int j = shuffle_rng.next_below(static_cast<int>(i));
      std::swap(order[i - 1], order[j]);
    }

    for (std::size_t at = 0; at < order.size(); at += cfg_.batch_size) {
      const std::size_t end = std::min(order.size(), at + cfg_.batch_size);
      std::vector<const LabeledSequence*> batch;
      batch.reserve(end - at);
      for (std::size_t i = at; i < end; ++i) batch.push_back(&corpus_.sequences[order[i]]);

      double batch_mean_loss = 0.0;
      BlockGrads grads;
      if (dp) {
        std::vector<double> clipped_sum;
        for (const LabeledSequence* seq : batch) {
          LossAndGrads eg = example_grads(client.model, *seq, mask);
          batch_mean_loss += eg.loss;
          std::vector<double> flat =
              clip_per_example(concat_trainable(eg.grads, mask), cfg_.privacy.clip_norm);
          if (clipped_sum.empty()) {
            clipped_sum = std::move(flat);
          } else {
            for (std::size_t i = 0; i < flat.size(); ++i) clipped_sum[i] += flat[i];
          }
        }
        batch_mean_loss /= static_cast<double>(batch.size());
        std::vector<double> priv = privatize_update(std::move(clipped_sum),
                                                    static_cast<int>(batch.size()), cfg_.privacy,
                                                    dp_rng);
        grads = split_trainable(priv, mask, cfg_.encoder);
        ++out.noisy_steps;
      } else {
        LossAndGrads lg = loss_and_grads(client.model, batch, mask);
        batch_mean_loss = lg.loss;
        grads = std::move(lg.grads);
      }

      ++step_in_round;
      if (!std::isfinite(batch_mean_loss)) {
        throw DivergenceError(client.id, round, step_in_round);
      }
      loss_sum += batch_mean_loss;
      ++batches;

      const double lr = warmup_lr(cfg_.lr, ++client.opt_steps, cfg_.warmup_steps);
      sgd_step(client.model, grads, lr);
    }
  }
  out.mean_loss = batches > 0 ? loss_sum / batches : 0.0;
}

FederatedRun::ClientRoundResult FederatedRun::client_round(
    ClientState& client, int round, const std::optional<SelectionMask>& forced_mask) const {
  ClientRoundResult out;

  if (forced_mask.has_value()) {
    out.mask = *forced_mask;
  } else {
    if (cfg_.strategy.kind == StrategyKind::SAFL) out.scores = profile_client(client, round);
    out.mask = mask_for_client(client, round, out.scores);
  }

  const ModelState broadcast = client.model;  // pre-training snapshot
  const FreezeMask mask = freeze_from_selection(out.mask, cfg_.encoder.num_layers,
                                                cfg_.train_embedding, cfg_.train_classifier);
  local_train(client, mask, round, out);

  // Deltas for transmission.
  for (int id : out.mask.selected) {
    LayerDelta d;
    d.layer_id = id;
    d.wire = cfg_.wire;
    const auto& now = client.model.layers[id - 1];
    const auto& was = broadcast.layers[id - 1];
    d.values.resize(now.size());
    for (std::size_t i = 0; i < now.size(); ++i) d.values[i] = now[i] - was[i];
    if (cfg_.wire == WirePrecision::F32) quantize_f32(d.values);
    if (cfg_.prune_fraction > 0.0) d = prune_update(d, cfg_.prune_fraction);
    out.layer_bytes_up += d.byte_size();
    out.layer_deltas.push_back(std::move(d));
  }
  out.bytes_up = out.layer_bytes_up;
  if (cfg_.train_embedding) {
    out.embedding_delta.resize(client.model.embedding.size());
    for (std::size_t i = 0; i < out.embedding_delta.size(); ++i) {
      out.embedding_delta[i] = client.model.embedding[i] - broadcast.embedding[i];
    }
    if (cfg_.wire == WirePrecision::F32) quantize_f32(out.embedding_delta);
    out.bytes_up += dense_block_bytes(out.embedding_delta.size(), cfg_.wire);
  }
  if (cfg_.train_classifier) {
    out.classifier_delta.resize(client.model.classifier.size());
    for (std::size_t i = 0; i < out.classifier_delta.size(); ++i) {
      out.classifier_delta[i] = client.model.classifier[i] - broadcast.classifier[i];
    }
    if (cfg_.wire == WirePrecision::F32) quantize_f32(out.classifier_delta);
    out.bytes_up += dense_block_bytes(out.classifier_delta.size(), cfg_.wire);
  }
  return out;
}

RoundReport FederatedRun::run_round() {
  const int round = ++round_;
  const int n = static_cast<int>(clients_.size());

  // Broadcast the global model.
  for (ClientState& c : clients_) c.model = global_;

  // Global-consensus mode profiles everyone first and selects one mask.
  std::optional<SelectionMask> consensus;
  std::vector<LayerScore> consensus_scores(n);
  if (cfg_.strategy.kind == StrategyKind::SAFL && cfg_.global_consensus) {
    parallel_for_clients(cfg_.threads, n, [&](int i) {
      consensus_scores[i] = profile_client(clients_[i], round);
    });
    LayerScore combined;
    combined.raw.assign(cfg_.encoder.num_layers, 0.0);
    combined.normalized.assign(cfg_.encoder.num_layers, 0.0);
    for (const LayerScore& s : consensus_scores) {
      combined.num_examples += s.num_examples;
      combined.contributing_triples += s.contributing_triples;
      for (int l = 0; l < cfg_.encoder.num_layers; ++l) combined.raw[l] += s.raw[l];
    }
    if (combined.contributing_triples > 0) {
      for (int l = 0; l < cfg_.encoder.num_layers; ++l) {
        combined.normalized[l] = combined.raw[l] / static_cast<double>(combined.contributing_triples);
      }
    } else {
      combined.status = ScoreStatus::NoMatch;
    }
    consensus = select_top_k(combined, cfg_.strategy.k);
    consensus->round = round;
    consensus->per_client = false;
  }

  std::vector<ClientRoundResult> results(n);
  parallel_for_clients(cfg_.threads, n, [&](int i) {
    results[i] = client_round(clients_[i], round, consensus);
    if (consensus.has_value()) results[i].scores = consensus_scores[i];
  });

  // Aggregate: layers over their senders, embedding/classifier over all.
  std::vector<std::vector<LayerDelta>> per_client_deltas;
  std::vector<double> weights;
  per_client_deltas.reserve(n);
  weights.reserve(n);
  for (int i = 0; i < n; ++i) {
    per_client_deltas.push_back(results[i].layer_deltas);
    weights.push_back(static_cast<double>(clients_[i].samples()));
  }
  AggregateResult agg = aggregate(per_client_deltas, weights);
  for (const auto& [layer_id, mean] : agg.layer_mean) {
    auto& blk = global_.layers[layer_id - 1];
    for (std::size_t i = 0; i < blk.size(); ++i) blk[i] += mean[i];
  }
  if (cfg_.train_embedding) {
    std::vector<std::vector<double>> vecs;
    vecs.reserve(n);
    for (int i = 0; i < n; ++i) vecs.push_back(std::move(results[i].embedding_delta));
    std::vector<double> mean = weighted_mean(vecs, weights);
    for (std::size_t i = 0; i < mean.size(); ++i) global_.embedding[i] += mean[i];
  }
  if (cfg_.train_classifier) {
    std::vector<std::vector<double>> vecs;
    vecs.reserve(n);
    for (int i = 0; i < n; ++i) vecs.push_back(std::move(results[i].classifier_delta));
    std::vector<double> mean = weighted_mean(vecs, weights);
    for (std::size_t i = 0; i < mean.size(); ++i) global_.classifier[i] += mean[i];
  }

  // Communication accounting.
  RoundComm comm;
  comm.round = round;
  comm.bytes_down_total = pending_down_bytes_ * static_cast<std::uint64_t>(n);
  for (int i = 0; i < n; ++i) {
    comm.bytes_up_per_client.push_back(results[i].bytes_up);
    comm.bytes_up_total += results[i].bytes_up;
    comm.layer_bytes_up_total += results[i].layer_bytes_up;
  }
  comm.baseline_full_bytes = trainable_dense_bytes(cfg_, false) * static_cast<std::uint64_t>(n);
  comm.baseline_layer_bytes = trainable_dense_bytes(cfg_, true) * static_cast<std::uint64_t>(n);
  comm.reduction_percent =
      1.0 - static_cast<double>(comm.bytes_up_total) / static_cast<double>(comm.baseline_full_bytes);
  comm.layer_reduction_percent = 1.0 - static_cast<double>(comm.layer_bytes_up_total) /
                                           static_cast<double>(comm.baseline_layer_bytes);
  comm_.rounds.push_back(comm);
  comm_.cumulative_up += comm.bytes_up_total;
  comm_.cumulative_down += comm.bytes_down_total;
  comm_.cumulative_baseline += comm.baseline_full_bytes;

  // Next round's broadcast: blocks that changed in this aggregation.
  {
    std::uint64_t changed = 0;
    changed += agg.layer_mean.size() * layer_param_count(cfg_.encoder);
    if (cfg_.train_embedding) changed += embedding_param_count(cfg_.encoder);
    if (cfg_.train_classifier) changed += classifier_param_count(cfg_.encoder);
    pending_down_bytes_ = changed * value_bytes(cfg_.wire);
  }

  // Privacy accounting: one ledger entry per round when enabled.
  if (cfg_.privacy.enabled) {
    int steps = 0;
    for (const auto& r : results) steps = std::max(steps, r.noisy_steps);
    account(privacy_, cfg_.privacy, round, steps);
  }

  // Report.
  RoundReport report;
  report.round = round;
  report.eval = evaluate_global();
  report.comm = comm;
  report.eps_total = privacy_.eps_total;
  for (int i = 0; i < n; ++i) {
    report.client_loss.push_back(results[i].mean_loss);
    report.masks.push_back(results[i].mask);
    SelectionTraceEntry entry;
    entry.round = round;
    entry.client = i;
    entry.scores = results[i].scores;
    entry.mask = results[i].mask;
    entry.tie = cfg_.strategy.kind == StrategyKind::SAFL &&
                selection_had_tie(results[i].scores, cfg_.strategy.k);
    trace_.push_back(std::move(entry));
  }
  for (int l = 1; l <= cfg_.encoder.num_layers; ++l) {
    if (agg.layer_mean.find(l) == agg.layer_mean.end()) report.layers_untouched.push_back(l);
  }
  return report;
}

EvalMetrics FederatedRun::evaluate_global() const {
  std::vector<const LabeledSequence*> eval_set;
  eval_set.reserve(eval_indices_.size());
  for (int i : eval_indices_) eval_set.push_back(&corpus_.sequences[i]);
  return evaluate(global_, eval_set);
}

// ---------------------------------------------------------------------------
// json
// ---------------------------------------------------------------------------

namespace {

nlohmann::json mask_json(const SelectionMask& m) {
  nlohmann::json j;
  j["selected"] = m.selected;
  j["round"] = m.round;
  j["per_client"] = m.per_client;
  return j;
}

}  // namespace

std::string to_json_line(const RoundReport& report) {
  nlohmann::json j;
  j["round"] = report.round;
  j["client_loss"] = report.client_loss;
  j["eval"] = {{"micro_f1", report.eval.micro_f1},
               {"seq_accuracy", report.eval.seq_accuracy},
               {"loss", report.eval.loss}};
  auto& masks = j["masks"] = nlohmann::json::array();
  for (const auto& m : report.masks) masks.push_back(m.selected);
  j["layers_untouched"] = report.layers_untouched;
  j["comm"] = {{"bytes_up_total", report.comm.bytes_up_total},
               {"layer_bytes_up_total", report.comm.layer_bytes_up_total},
               {"bytes_down_total", report.comm.bytes_down_total},
               {"baseline_full_bytes", report.comm.baseline_full_bytes},
               {"baseline_layer_bytes", report.comm.baseline_layer_bytes},
               {"reduction_percent", report.comm.reduction_percent},
               {"layer_reduction_percent", report.comm.layer_reduction_percent},
               {"bytes_up_per_client", report.comm.bytes_up_per_client}};
  j["eps_total"] = std::isinf(report.eps_total) ? nlohmann::json("inf")
                                                : nlohmann::json(report.eps_total);
  return j.dump();
}

std::string to_json_line(const SelectionTraceEntry& entry) {
  nlohmann::json j;
  j["round"] = entry.round;
  j["client"] = entry.client;
  j["raw_scores"] = entry.scores.raw;
  j["normalized_scores"] = entry.scores.normalized;
  j["num_examples"] = entry.scores.num_examples;
  j["mask"] = mask_json(entry.mask);
  j["tie"] = entry.tie;
  return j.dump();
}

}  // namespace safl
