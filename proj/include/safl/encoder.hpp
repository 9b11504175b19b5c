#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "safl/rng.hpp"
#include "safl/tensor.hpp"

namespace safl {

struct EncoderConfig {
  int num_layers = 12;
  int num_heads = 4;
  int d_model = 64;
  int d_ff = 128;
  int vocab_size = 256;
  int max_seq_len = 64;
  int num_labels = 7;

  void validate() const;
  int head_dim() const { return d_model / num_heads; }
};

// Per-block parameter counts; the comm ledger derives all byte accounting
// from these.
std::size_t layer_param_count(const EncoderConfig& cfg);
std::size_t embedding_param_count(const EncoderConfig& cfg);
std::size_t classifier_param_count(const EncoderConfig& cfg);

// Flat per-block parameters. Layer blocks hold, in order: Wq, bq, Wk, bk,
// Wv, bv, Wo, bo, ln1 gain, ln1 bias, W1, b1, W2, b2, ln2 gain, ln2 bias.
// The embedding block is the token table followed by the position table.
struct ModelState {
  EncoderConfig config;
  std::vector<std::vector<double>> layers;  // [num_layers] blocks
  std::vector<double> embedding;
  std::vector<double> classifier;

  static ModelState init(const EncoderConfig& cfg, RngStream& rng);

  std::vector<double> flatten() const;
  static ModelState unflatten(const EncoderConfig& cfg, std::span<const double> flat);
  std::size_t total_param_count() const;
};

// Layer ids are 1-based in every public surface; true = trainable.
struct FreezeMask {
  std::vector<bool> layer;
  bool embedding = true;
  bool classifier = true;

  static FreezeMask all_trainable(int num_layers);
  bool layer_trainable(int layer_id) const { return layer[layer_id - 1]; }
  bool any_trainable() const;
};

// Attention weights captured from one forward pass: per layer a (H, N, N)
// tensor whose rows each sum to 1.
struct AttentionRecord {
  int seq_len = 0;
  std::vector<int> token_ids;
  std::vector<Tensor> per_layer;  // [num_layers], shape (H, N, N)
};

struct ForwardResult {
  Tensor logits;  // (N, num_labels)
  std::optional<AttentionRecord> attention;
};

struct LabeledSequence {
  std::vector<int> tokens;
  std::vector<int> labels;
};

// Gradients mirror ModelState's blocks; frozen blocks are zero-size.
struct BlockGrads {
  std::vector<std::vector<double>> layers;
  std::vector<double> embedding;
  std::vector<double> classifier;
};

struct LossAndGrads {
  double loss = 0.0;
  BlockGrads grads;
};

ForwardResult forward(const ModelState& model, const std::vector<int>& tokens, bool capture);

// Mean token cross-entropy of one sequence plus gradients for trainable
// blocks only.
LossAndGrads example_grads(const ModelState& model, const LabeledSequence& seq,
                           const FreezeMask& mask);

// Batch loss = mean over sequences of per-sequence mean token loss.
LossAndGrads loss_and_grads(const ModelState& model,
                            const std::vector<const LabeledSequence*>& batch,
                            const FreezeMask& mask);

double batch_loss(const ModelState& model, const std::vector<const LabeledSequence*>& batch);

// p <- p - lr * g on blocks with non-empty gradients.
void sgd_step(ModelState& model, const BlockGrads& grads, double lr);

// Linear warmup: step t of W scales the base rate by t/W, full rate from t = W on.
double warmup_lr(double base_lr, std::int64_t step, int warmup_steps);

// Flat trainable-block vector in fixed order (layers ascending, embedding,
// classifier); the DP path clips and noises this concatenation.
std::vector<double> concat_trainable(const BlockGrads& grads, const FreezeMask& mask);
BlockGrads split_trainable(std::span<const double> flat, const FreezeMask& mask,
                           const EncoderConfig& cfg);

void save_model(const std::string& path, const ModelState& model);
ModelState load_model(const std::string& path);

}  // namespace safl
