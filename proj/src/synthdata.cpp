#include "safl/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "safl/errors.hpp"

namespace safl {

void CorpusSpec::validate() const {
  if (vocab_size < 2 + num_entity_types) {
    throw std::invalid_argument("CorpusSpec: vocab too small for [CLS] + background + entity pools");
  }
  if (num_sequences < 1) throw std::invalid_argument("CorpusSpec: num_sequences must be >= 1");
  if (seq_len_min < 2 || seq_len_max < seq_len_min) {
    throw std::invalid_argument("CorpusSpec: need 2 <= seq_len_min <= seq_len_max");
  }
  if (num_entity_types < 1) throw std::invalid_argument("CorpusSpec: num_entity_types must be >= 1");
  if (entity_density < 0.0 || entity_density > 1.0) {
    throw std::invalid_argument("CorpusSpec: entity_density must be in [0,1]");
  }
  if (max_span_len < 1) throw std::invalid_argument("CorpusSpec: max_span_len must be >= 1");
  if (begin_bias < 0.0 || begin_bias > 1.0) {
    throw std::invalid_argument("CorpusSpec: begin_bias must be in [0,1]");
  }
  // A span plus its separating background token must fit after [CLS].
  if (entity_density > 0.0 && seq_len_min - 1 < 1) {
    throw std::invalid_argument("CorpusSpec: sequences too short to hold an entity span");
  }
}

void PartitionSpec::validate() const {
  if (num_clients < 1) throw std::invalid_argument("PartitionSpec: num_clients must be >= 1");
  if (dirichlet_alpha <= 0.0) {
    throw std::invalid_argument("PartitionSpec: dirichlet_alpha must be positive");
  }
}

std::vector<int> VocabLayout::entity_token_ids() const {
  std::vector<int> ids;
  for (const auto& [lo, hi] : entity) {
    for (int t = lo; t < hi; ++t) ids.push_back(t);
  }
  return ids;
}

namespace {

VocabLayout make_layout(const CorpusSpec& spec) {
  VocabLayout v;
  v.cls_id = 0;
  const int body = spec.vocab_size - 1;
  const int background_count = std::max(1, body / 2);
  const int per_type = std::max(1, (body - background_count) / spec.num_entity_types);
  v.background = {1, 1 + background_count};
  int at = 1 + background_count;
  for (int e = 0; e < spec.num_entity_types; ++e) {
    int hi = (e == spec.num_entity_types - 1) ? spec.vocab_size : at + per_type;
    v.entity.emplace_back(at, hi);
    at = hi;
  }
  return v;
}

int draw_in_range(RngStream& rng, std::pair<int, int> range) {
  return range.first + rng.next_below(range.second - range.first);
}

// Opener half for span starts, continuation half otherwise, leaning with
// strength begin_bias; a one-token pool degenerates to the whole range.
int draw_entity_token(RngStream& rng, std::pair<int, int> pool, bool is_begin, double bias) {
  const int mid = pool.first + (pool.second - pool.first) / 2;
  if (mid == pool.first || mid == pool.second) return draw_in_range(rng, pool);
  const bool leaned = rng.next_uniform() < (1.0 + bias) / 2.0;
  const std::pair<int, int> opener{pool.first, mid};
  const std::pair<int, int> continuation{mid, pool.second};
  if (is_begin) return draw_in_range(rng, leaned ? opener : continuation);
  return draw_in_range(rng, leaned ? continuation : opener);
}

}  // namespace

int LabeledCorpus::dominant_type(int seq_index) const {
  const auto& labels = sequences[seq_index].labels;
  std::vector<int> counts(spec.num_entity_types, 0);
  for (int l : labels) {
    if (l > 0) ++counts[(l - 1) / 2];
  }
  int best = spec.num_entity_types;  // "no entity" class
  int best_count = 0;
  for (int e = 0; e < spec.num_entity_types; ++e) {
    if (counts[e] > best_count) {
      best = e;
      best_count = counts[e];
    }
  }
  return best;
}

LabeledCorpus generate(const CorpusSpec& spec) {
  spec.validate();
  LabeledCorpus corpus;
  corpus.spec = spec;
  corpus.vocab = make_layout(spec);
  corpus.sequences.reserve(spec.num_sequences);

  RngStream rng(spec.seed, "corpus");
  for (int s = 0; s < spec.num_sequences; ++s) {
    const int len = spec.seq_len_min + rng.next_below(spec.seq_len_max - spec.seq_len_min + 1);
    LabeledSequence seq;
    seq.tokens.reserve(len);
    seq.labels.reserve(len);
    seq.tokens.push_back(corpus.vocab.cls_id);
    seq.labels.push_back(0);

    int i = 1;
    while (i < len) {
      if (spec.entity_density > 0.0 && rng.next_uniform() < spec.entity_density) {
        const int type = rng.next_below(spec.num_entity_types);
        const int want = 1 + rng.next_below(spec.max_span_len);
        const int span = std::min(want, len - i);
        for (int t = 0; t < span; ++t) {
          seq.tokens.push_back(
              draw_entity_token(rng, corpus.vocab.entity[type], t == 0, spec.begin_bias));
          seq.labels.push_back(t == 0 ? 1 + 2 * type : 2 + 2 * type);
        }
        i += span;
        // Separator keeps span starts recoverable from the left neighbor.
        if (i < len) {
          seq.tokens.push_back(draw_in_range(rng, corpus.vocab.background));
          seq.labels.push_back(0);
          ++i;
        }
      } else {
        seq.tokens.push_back(draw_in_range(rng, corpus.vocab.background));
        seq.labels.push_back(0);
        ++i;
      }
    }
    corpus.sequences.push_back(std::move(seq));
  }
  return corpus;
}

double dirichlet_gamma(RngStream& rng, double alpha) {
  if (alpha <= 0.0) throw std::invalid_argument("dirichlet_gamma: alpha must be positive");
  if (alpha < 1.0) {
    // Boost to alpha+1 and scale back.
    const double u = rng.next_uniform();
    return dirichlet_gamma(rng, alpha + 1.0) * std::pow(u, 1.0 / alpha);
  }
  // Marsaglia-Tsang squeeze.
  const double d = alpha - 1.0 / 3.0;
  const double c = 1.0 / (3.0 * std::sqrt(d));
  for (;;) {
    double x = rng.next_gaussian();
    double v = 1.0 + c * x;
    if (v <= 0.0) continue;
    v = v * v * v;
    const double u = rng.next_uniform();
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
    if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
  }
}

std::vector<std::vector<int>> partition(const LabeledCorpus& corpus, const PartitionSpec& spec) {
  spec.validate();
  const int n = static_cast<int>(corpus.sequences.size());
  if (spec.num_clients > n) {
    throw std::invalid_argument("partition: more clients than sequences");
  }

  const int num_classes = corpus.spec.num_entity_types + 1;
  std::vector<int> seq_class(n);
  for (int s = 0; s < n; ++s) seq_class[s] = corpus.dominant_type(s);

  for (int attempt = 0; attempt < spec.max_resamples; ++attempt) {
    RngStream rng(spec.seed, "partition:attempt:" + std::to_string(attempt));
    // Per-class client proportions drawn from Dirichlet(alpha).
    std::vector<std::vector<double>> props(num_classes, std::vector<double>(spec.num_clients));
    for (int c = 0; c < num_classes; ++c) {
      double total = 0.0;
      for (int k = 0; k < spec.num_clients; ++k) {
        props[c][k] = dirichlet_gamma(rng, spec.dirichlet_alpha);
        total += props[c][k];
      }
      for (int k = 0; k < spec.num_clients; ++k) props[c][k] /= total;
    }

    std::vector<std::vector<int>> shards(spec.num_clients);
    for (int s = 0; s < n; ++s) {
      const auto& p = props[seq_class[s]];
      double u = rng.next_uniform();
      int pick = spec.num_clients - 1;
      for (int k = 0; k < spec.num_clients; ++k) {
        u -= p[k];
        if (u < 0.0) {
          pick = k;
          break;
        }
      }
      shards[pick].push_back(s);
    }

    const bool all_nonempty =
        std::all_of(shards.begin(), shards.end(), [](const auto& s) { return !s.empty(); });
    if (all_nonempty) return shards;
  }
  throw std::runtime_error("partition: could not produce nonempty shards after " +
                           std::to_string(spec.max_resamples) + " attempts");
}

// ---------------------------------------------------------------------------
// files
// ---------------------------------------------------------------------------

void save_corpus_jsonl(const std::string& path, const LabeledCorpus& corpus) {
  std::ofstream os(path);
  if (!os) throw IoError("save_corpus_jsonl: cannot open " + path);
  for (const auto& seq : corpus.sequences) {
    nlohmann::json j;
    j["tokens"] = seq.tokens;
    j["labels"] = seq.labels;
    os << j.dump() << "\n";
  }
  if (!os) throw IoError("save_corpus_jsonl: write failed for " + path);
}

LabeledCorpus load_corpus_jsonl(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("load_corpus_jsonl: cannot open " + path);
  LabeledCorpus corpus;
  int max_token = 0, max_label = 0;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line);
    LabeledSequence seq;
    seq.tokens = j.at("tokens").get<std::vector<int>>();
    seq.labels = j.at("labels").get<std::vector<int>>();
    if (seq.tokens.size() != seq.labels.size()) {
      throw IoError("load_corpus_jsonl: token/label length mismatch in " + path);
    }
    for (int t : seq.tokens) max_token = std::max(max_token, t);
    for (int l : seq.labels) max_label = std::max(max_label, l);
    corpus.sequences.push_back(std::move(seq));
  }
  // Spec fields are inferred; the generator's layout is not stored in the file.
  corpus.spec.vocab_size = max_token + 1;
  corpus.spec.num_sequences = static_cast<int>(corpus.sequences.size());
  corpus.spec.num_entity_types = std::max(1, max_label / 2);
  return corpus;
}

void save_partition_json(const std::string& path, const std::vector<std::vector<int>>& shards) {
  std::ofstream os(path);
  if (!os) throw IoError("save_partition_json: cannot open " + path);
  nlohmann::json j;
  for (std::size_t c = 0; c < shards.size(); ++c) j[std::to_string(c)] = shards[c];
  os << j.dump(2) << "\n";
  if (!os) throw IoError("save_partition_json: write failed for " + path);
}

std::vector<std::vector<int>> load_partition_json(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("load_partition_json: cannot open " + path);
  nlohmann::json j;
  is >> j;
  std::vector<std::vector<int>> shards(j.size());
  for (std::size_t c = 0; c < shards.size(); ++c) {
    shards[c] = j.at(std::to_string(c)).get<std::vector<int>>();
  }
  return shards;
}

}  // namespace safl
