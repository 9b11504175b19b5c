#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "safl/encoder.hpp"
#include "safl/rng.hpp"

namespace safl {

// Synthetic token-tagging corpus. Token id 0 is the [CLS] marker; the rest
// of the vocabulary is split into a background pool and one pool per entity
// type. Labels follow the BIO scheme: 0 = background, then (B, I) pairs per
// entity type. Each type pool has an opener half and a continuation half:
// span-opening tokens come from the opener half with probability
// (1 + begin_bias) / 2, continuations from the other half likewise. At
// begin_bias 1 the B/I split is fully token-determined; below that, the
// residue is decidable only from the left neighbor, so part of the task
// needs context rather than token identity.
struct CorpusSpec {
  int vocab_size = 256;
  int num_sequences = 500;
  int seq_len_min = 12;
  int seq_len_max = 24;  // includes the [CLS] slot
  int num_entity_types = 3;
  double entity_density = 0.3;
  int max_span_len = 3;
  double begin_bias = 0.7;
  std::uint64_t seed = 1;

  void validate() const;
  int num_labels() const { return 1 + 2 * num_entity_types; }
};

struct VocabLayout {
  int cls_id = 0;
  std::pair<int, int> background;               // half-open id range
  std::vector<std::pair<int, int>> entity;      // one half-open range per type

  std::vector<int> entity_token_ids() const;
};

struct LabeledCorpus {
  CorpusSpec spec;
  VocabLayout vocab;
  std::vector<LabeledSequence> sequences;

  // Dominant entity type of a sequence, num_entity_types when it has none.
  int dominant_type(int seq_index) const;
};

struct PartitionSpec {
  int num_clients = 10;
  double dirichlet_alpha = 1.0;
  std::uint64_t seed = 1;
  int max_resamples = 100;

  void validate() const;
};

LabeledCorpus generate(const CorpusSpec& spec);

// Sequence-level Dirichlet label skew over dominant entity types. Shards are
// disjoint, exhaustive, and every client is nonempty (resampled on
// violation, error after max_resamples).
std::vector<std::vector<int>> partition(const LabeledCorpus& corpus, const PartitionSpec& spec);

double dirichlet_gamma(RngStream& rng, double alpha);  // Gamma(alpha, 1) draw

void save_corpus_jsonl(const std::string& path, const LabeledCorpus& corpus);
LabeledCorpus load_corpus_jsonl(const std::string& path);
void save_partition_json(const std::string& path, const std::vector<std::vector<int>>& shards);
std::vector<std::vector<int>> load_partition_json(const std::string& path);

}  // namespace safl
