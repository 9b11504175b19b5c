#include "safl/selector.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace safl {

void TaskTokenSpec::validate() const {
  if (values.empty()) throw std::invalid_argument("TaskTokenSpec: empty token set");
  if (mode == Mode::Positions) {
    for (int p : values) {
      if (p < 0) throw std::invalid_argument("TaskTokenSpec: negative position");
    }
  }
}

bool SelectionMask::contains(int layer_id) const {
  return std::binary_search(selected.begin(), selected.end(), layer_id);
}

LayerScore layer_scores(const std::vector<AttentionRecord>& records, const TaskTokenSpec& spec,
                        const ScoreOptions& opts) {
  if (records.empty()) throw std::invalid_argument("layer_scores: empty record list");
  spec.validate();
  const int num_layers = static_cast<int>(records[0].per_layer.size());
  for (const auto& rec : records) {
    if (static_cast<int>(rec.per_layer.size()) != num_layers) {
      throw std::invalid_argument("layer_scores: records disagree on layer count");
    }
  }

  LayerScore out;
  out.raw.assign(num_layers, 0.0);
  out.normalized.assign(num_layers, 0.0);
  out.num_examples = static_cast<int>(records.size());

  for (const auto& rec : records) {
    const int n = rec.seq_len;
    // Which index (key or query position) counts toward the task set.
    std::vector<char> match(n, 0);
    int matched = 0;
    for (int j = 0; j < n; ++j) {
      const bool m = spec.mode == TaskTokenSpec::Mode::TokenIds
                         ? spec.values.count(rec.token_ids[j]) > 0
                         : spec.values.count(j) > 0;
      match[j] = m ? 1 : 0;
      if (m) ++matched;
    }
    if (matched == 0) continue;

    for (int l = 0; l < num_layers; ++l) {
      const Tensor& a = rec.per_layer[l];
      const int heads = a.shape()[0];
      auto vals = a.data();
      double acc = 0.0;
      for (int h = 0; h < heads; ++h) {
        const double* base = vals.data() + static_cast<std::size_t>(h) * n * n;
        for (int i = 0; i < n; ++i) {
          const double* row = base + static_cast<std::size_t>(i) * n;
          if (opts.query_side) {
            if (!match[i]) continue;
            for (int j = 0; j < n; ++j) acc += row[j];
          } else {
            for (int j = 0; j < n; ++j) {
              if (match[j]) acc += row[j];
            }
          }
        }
      }
      out.raw[l] += acc;
      if (l == 0) {
        out.contributing_triples +=
            static_cast<std::uint64_t>(heads) * static_cast<std::uint64_t>(n) * matched;
      }
    }
  }

  if (out.contributing_triples == 0) {
    out.status = ScoreStatus::NoMatch;
    return out;
  }
  for (int l = 0; l < num_layers; ++l) {
    out.normalized[l] = out.raw[l] / static_cast<double>(out.contributing_triples);
  }
  return out;
}

SelectionMask select_top_k(const LayerScore& scores, int k) {
  if (k < 1) throw std::invalid_argument("select_top_k: k must be >= 1");
  const int num_layers = scores.num_layers();
  if (num_layers == 0) throw std::invalid_argument("select_top_k: scores cover no layers");

  std::vector<int> order(num_layers);
  std::iota(order.begin(), order.end(), 0);
  // Highest score first; equal scores keep the lower layer id.
  std::stable_sort(order.begin(), order.end(), [&scores](int a, int b) {
    if (scores.raw[a] != scores.raw[b]) return scores.raw[a] > scores.raw[b];
    return a < b;
  });

  const int take = std::min(k, num_layers);
  SelectionMask mask;
  mask.selected.reserve(take);
  for (int i = 0; i < take; ++i) mask.selected.push_back(order[i] + 1);
  std::sort(mask.selected.begin(), mask.selected.end());
  return mask;
}

bool selection_had_tie(const LayerScore& scores, int k) {
  const int num_layers = scores.num_layers();
  if (k >= num_layers || k < 1) return false;
  std::vector<double> sorted = scores.raw;
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  return sorted[k - 1] == sorted[k];
}

LayerDelta prune_update(const LayerDelta& delta, double fraction) {
  if (fraction < 0.0 || fraction >= 1.0) {
    throw std::invalid_argument("prune_update: fraction must be in [0,1)");
  }
  if (fraction == 0.0) return delta;

  const std::size_t n = delta.values.size();
  const std::size_t keep = static_cast<std::size_t>(std::floor((1.0 - fraction) * static_cast<double>(n)));

  std::vector<std::uint32_t> order(n);
  std::iota(order.begin(), order.end(), 0u);
  // Largest magnitude first; magnitude ties keep the lower index.
  std::stable_sort(order.begin(), order.end(), [&delta](std::uint32_t a, std::uint32_t b) {
    const double ma = std::abs(delta.values[a]);
    const double mb = std::abs(delta.values[b]);
    if (ma != mb) return ma > mb;
    return a < b;
  });

  LayerDelta out;
  out.layer_id = delta.layer_id;
  out.wire = delta.wire;
  out.sparse = true;
  out.kept.assign(order.begin(), order.begin() + keep);
  std::sort(out.kept.begin(), out.kept.end());
  out.values.assign(n, 0.0);
  for (std::uint32_t idx : out.kept) out.values[idx] = delta.values[idx];
  return out;
}

FreezeMask freeze_from_selection(const SelectionMask& mask, int num_layers,
                                 bool embedding_trainable, bool classifier_trainable) {
  FreezeMask fm;
  fm.layer.assign(num_layers, false);
  for (int id : mask.selected) {
    if (id < 1 || id > num_layers) {
      throw std::invalid_argument("freeze_from_selection: layer id " + std::to_string(id) +
                                  " outside 1.." + std::to_string(num_layers));
    }
    fm.layer[id - 1] = true;
  }
  fm.embedding = embedding_trainable;
  fm.classifier = classifier_trainable;
  return fm;
}

}  // namespace safl
