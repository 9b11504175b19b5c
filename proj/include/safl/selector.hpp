#pragma once

#include <set>
#include <vector>

#include "safl/delta.hpp"
#include "safl/encoder.hpp"

namespace safl {

// Task-relevant token set: matched either by token identity or by sequence
// position.
struct TaskTokenSpec {
  enum class Mode { TokenIds, Positions };
  Mode mode = Mode::TokenIds;
  std::set<int> values;

  void validate() const;
};

enum class ScoreStatus { Ok, NoMatch };

// Cumulative attention mass per layer. `raw` is the sum over profiled
// examples of all (head, query, key) attention weights landing on matched
// keys; `normalized` divides by the number of contributing triples.
struct LayerScore {
  std::vector<double> raw;         // [num_layers]
  std::vector<double> normalized;  // [num_layers]
  int num_examples = 0;
  std::uint64_t contributing_triples = 0;
  ScoreStatus status = ScoreStatus::Ok;

  int num_layers() const { return static_cast<int>(raw.size()); }
};

// Chosen layer ids, 1-based, strictly increasing.
struct SelectionMask {
  std::vector<int> selected;
  int round = 0;
  bool per_client = true;

  bool contains(int layer_id) const;
};

// By default attention is summed over keys that match the task set. The
// query-side variant sums over matching query positions instead and exists
// as an experiment flag, not a default.
struct ScoreOptions {
  bool query_side = false;
};

LayerScore layer_scores(const std::vector<AttentionRecord>& records, const TaskTokenSpec& spec,
                        const ScoreOptions& opts = {});

SelectionMask select_top_k(const LayerScore& scores, int k);

// True when the k-th kept score ties the first dropped one.
bool selection_had_tie(const LayerScore& scores, int k);

// Keeps the floor((1-fraction)*n) largest-magnitude entries and zeroes the
// rest; ties broken toward keeping the lower index.
LayerDelta prune_update(const LayerDelta& delta, double fraction);

FreezeMask freeze_from_selection(const SelectionMask& mask, int num_layers,
                                 bool embedding_trainable, bool classifier_trainable);

}  // namespace safl
