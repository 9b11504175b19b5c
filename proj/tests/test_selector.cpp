#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "safl/selector.hpp"
#include "testutil.hpp"

using namespace safl;

namespace {

AttentionRecord make_record(int layers, int heads, int n, const std::vector<int>& tokens,
                            const std::function<double(int, int, int, int)>& alpha) {
  AttentionRecord rec;
  rec.seq_len = n;
  rec.token_ids = tokens;
  for (int l = 0; l < layers; ++l) {
    std::vector<double> vals(static_cast<std::size_t>(heads) * n * n);
    for (int h = 0; h < heads; ++h) {
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
          vals[(static_cast<std::size_t>(h) * n + i) * n + j] = alpha(l, h, i, j);
        }
      }
    }
    rec.per_layer.push_back(Tensor::from_data({heads, n, n}, std::move(vals)));
  }
  return rec;
}

AttentionRecord random_record(RngStream& rng, int layers, int heads, int n, int vocab) {
  std::vector<int> tokens(n);
  for (int& t : tokens) t = rng.next_below(vocab);
  AttentionRecord rec;
  rec.seq_len = n;
  rec.token_ids = tokens;
  for (int l = 0; l < layers; ++l) {
    std::vector<double> vals(static_cast<std::size_t>(heads) * n * n);
    for (double& v : vals) v = rng.next_uniform();
    rec.per_layer.push_back(Tensor::from_data({heads, n, n}, std::move(vals)));
  }
  return rec;
}

// Independent triple-nested-loop realization of the cumulative score.
std::vector<double> score_oracle(const std::vector<AttentionRecord>& records,
                                 const TaskTokenSpec& spec) {
  const int layers = static_cast<int>(records[0].per_layer.size());
  std::vector<double> out(layers, 0.0);
  for (const auto& rec : records) {
    const int n = rec.seq_len;
    for (int l = 0; l < layers; ++l) {
      const int heads = rec.per_layer[l].shape()[0];
      auto vals = rec.per_layer[l].data();
      for (int h = 0; h < heads; ++h) {
        for (int i = 0; i < n; ++i) {
          for (int j = 0; j < n; ++j) {
            const bool in_set = spec.mode == TaskTokenSpec::Mode::TokenIds
                                    ? spec.values.count(rec.token_ids[j]) > 0
                                    : spec.values.count(j) > 0;
            if (in_set) out[l] += vals[(static_cast<std::size_t>(h) * n + i) * n + j];
          }
        }
      }
    }
  }
  return out;
}

}  // namespace

TEST_CASE("layer_scores hand examples") {
  SUBCASE("uniform attention with one matched position gives 1.0") {
    // H=1, N=2, all alpha = 0.5; the task set matches only position 0.
    AttentionRecord rec = make_record(3, 1, 2, {5, 7}, [](int, int, int, int) { return 0.5; });
    TaskTokenSpec spec;
    spec.mode = TaskTokenSpec::Mode::Positions;
    spec.values = {0};
    LayerScore s = layer_scores({rec}, spec);
    for (double a : s.raw) CHECK(a == doctest::Approx(1.0).epsilon(1e-12));
  }

  SUBCASE("matching every position gives H*N for row-normalized attention") {
    const int heads = 3, n = 4;
    AttentionRecord rec =
        make_record(2, heads, n, {1, 2, 3, 4}, [n](int, int, int, int) { return 1.0 / n; });
    TaskTokenSpec spec;
    spec.mode = TaskTokenSpec::Mode::Positions;
    spec.values = {0, 1, 2, 3};
    LayerScore s = layer_scores({rec}, spec);
    for (double a : s.raw) CHECK(a == doctest::Approx(heads * n).epsilon(1e-12));
  }

  SUBCASE("empty record list is an input error") {
    TaskTokenSpec spec;
    spec.values = {0};
    CHECK_THROWS_AS(layer_scores({}, spec), std::invalid_argument);
  }

  SUBCASE("no matching token reports a warning status with zero scores") {
    AttentionRecord rec = make_record(2, 1, 2, {5, 7}, [](int, int, int, int) { return 0.5; });
    TaskTokenSpec spec;
    spec.values = {42};  // token id absent from the example
    LayerScore s = layer_scores({rec}, spec);
    CHECK(s.status == ScoreStatus::NoMatch);
    for (double a : s.raw) CHECK(a == 0.0);
    for (double a : s.normalized) CHECK(a == 0.0);
  }

  SUBCASE("empty task set is invalid") {
    AttentionRecord rec = make_record(1, 1, 2, {5, 7}, [](int, int, int, int) { return 0.5; });
    TaskTokenSpec spec;
    CHECK_THROWS_AS(layer_scores({rec}, spec), std::invalid_argument);
  }
}

TEST_CASE("layer_scores matches the brute-force oracle on random tensors") {
  RngStream rng(101, "selector-oracle");
  for (int it = 0; it < 100; ++it) {
    const int layers = 1 + rng.next_below(6);
    const int heads = 1 + rng.next_below(4);
    const int n = 1 + rng.next_below(16);
    const int vocab = 6;
    std::vector<AttentionRecord> records;
    const int num_records = 1 + rng.next_below(3);
    for (int r = 0; r < num_records; ++r) {
      records.push_back(random_record(rng, layers, heads, n, vocab));
    }
    TaskTokenSpec spec;
    if (rng.next_below(2) == 0) {
      spec.mode = TaskTokenSpec::Mode::TokenIds;
      spec.values = {rng.next_below(vocab), rng.next_below(vocab)};
    } else {
      spec.mode = TaskTokenSpec::Mode::Positions;
      spec.values = {rng.next_below(n)};
    }
    LayerScore s = layer_scores(records, spec);
    const std::vector<double> oracle = score_oracle(records, spec);
    for (int l = 0; l < layers; ++l) CHECK(std::abs(s.raw[l] - oracle[l]) < 1e-9);
  }
}

TEST_CASE("layer_scores invariants") {
  RngStream rng(77, "selector-props");
  TaskTokenSpec spec;
  spec.mode = TaskTokenSpec::Mode::TokenIds;
  spec.values = {1, 3};

  SUBCASE("scale equivariance keeps the selection unchanged") {
    for (int it = 0; it < 100; ++it) {
      AttentionRecord rec = random_record(rng, 5, 2, 6, 6);
      const double c = rng.next_uniform() * 3.0;
      AttentionRecord scaled;
      scaled.seq_len = rec.seq_len;
      scaled.token_ids = rec.token_ids;
      for (const Tensor& t : rec.per_layer) {
        std::vector<double> vals(t.data().begin(), t.data().end());
        for (double& v : vals) v *= c;
        scaled.per_layer.push_back(Tensor::from_data(t.shape(), std::move(vals)));
      }
      LayerScore a = layer_scores({rec}, spec);
      LayerScore b = layer_scores({scaled}, spec);
      for (int l = 0; l < 5; ++l) {
        CHECK(b.raw[l] == doctest::Approx(c * a.raw[l]).epsilon(1e-12));
      }
      const int k = 1 + rng.next_below(5);
      if (c > 0.0) CHECK(select_top_k(a, k).selected == select_top_k(b, k).selected);
    }
  }

  SUBCASE("permuting layers permutes scores identically") {
    AttentionRecord rec = random_record(rng, 6, 2, 5, 6);
    std::vector<int> perm = {3, 0, 5, 1, 4, 2};
    AttentionRecord permuted;
    permuted.seq_len = rec.seq_len;
    permuted.token_ids = rec.token_ids;
    for (int l = 0; l < 6; ++l) permuted.per_layer.push_back(rec.per_layer[perm[l]]);
    LayerScore a = layer_scores({rec}, spec);
    LayerScore b = layer_scores({permuted}, spec);
    for (int l = 0; l < 6; ++l) CHECK(b.raw[l] == a.raw[perm[l]]);
  }

  SUBCASE("adding mass onto matching tokens never decreases the score") {
    AttentionRecord rec = random_record(rng, 4, 2, 6, 6);
    LayerScore before = layer_scores({rec}, spec);
    // Bump attention toward every position holding a matching token in layer 2.
    AttentionRecord bumped;
    bumped.seq_len = rec.seq_len;
    bumped.token_ids = rec.token_ids;
    for (int l = 0; l < 4; ++l) {
      std::vector<double> vals(rec.per_layer[l].data().begin(), rec.per_layer[l].data().end());
      if (l == 2) {
        const int n = rec.seq_len;
        for (int h = 0; h < 2; ++h) {
          for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j) {
              if (spec.values.count(rec.token_ids[j]) > 0) {
                vals[(static_cast<std::size_t>(h) * n + i) * n + j] += 0.25;
              }
            }
          }
        }
      }
      bumped.per_layer.push_back(Tensor::from_data(rec.per_layer[l].shape(), std::move(vals)));
    }
    LayerScore after = layer_scores({bumped}, spec);
    CHECK(after.raw[2] >= before.raw[2]);
    for (int l = 0; l < 4; ++l) {
      if (l != 2) CHECK(after.raw[l] == before.raw[l]);
    }
  }

  SUBCASE("record order does not change the selection") {
    std::vector<AttentionRecord> records;
    for (int r = 0; r < 4; ++r) records.push_back(random_record(rng, 5, 2, 6, 6));
    LayerScore fwd = layer_scores(records, spec);
    std::reverse(records.begin(), records.end());
    LayerScore rev = layer_scores(records, spec);
    CHECK(select_top_k(fwd, 2).selected == select_top_k(rev, 2).selected);
  }
}

TEST_CASE("select_top_k") {
  auto scores_of = [](std::vector<double> raw) {
    LayerScore s;
    s.normalized.assign(raw.size(), 0.0);
    s.raw = std::move(raw);
    return s;
  };

  SUBCASE("argmax case") {
    CHECK(select_top_k(scores_of({0.3, 0.1, 0.5}), 1).selected == std::vector<int>{3});
  }
  SUBCASE("k = L selects everything") {
    CHECK(select_top_k(scores_of({0.3, 0.1, 0.5}), 3).selected == std::vector<int>{1, 2, 3});
    CHECK(select_top_k(scores_of({0.3, 0.1, 0.5}), 9).selected == std::vector<int>{1, 2, 3});
  }
  SUBCASE("ties break toward the lower layer id") {
    LayerScore s = scores_of({0.5, 0.5, 0.5, 0.1});
    CHECK(select_top_k(s, 2).selected == std::vector<int>{1, 2});
    CHECK(selection_had_tie(s, 2));
    CHECK_FALSE(selection_had_tie(s, 3));
  }
  SUBCASE("k < 1 is an input error") {
    CHECK_THROWS_AS(select_top_k(scores_of({0.1}), 0), std::invalid_argument);
  }

  SUBCASE("matches a full-sort oracle on random scores, L=24 k=8") {
    RngStream rng(55, "topk-oracle");
    for (int it = 0; it < 100; ++it) {
      std::vector<double> raw(24);
      for (double& v : raw) v = rng.next_uniform();
      SelectionMask mask = select_top_k(scores_of(raw), 8);

      std::vector<int> order(24);
      std::iota(order.begin(), order.end(), 0);
      std::sort(order.begin(), order.end(), [&raw](int a, int b) {
        if (raw[a] != raw[b]) return raw[a] > raw[b];
        return a < b;
      });
      std::vector<int> expect(order.begin(), order.begin() + 8);
      for (int& id : expect) ++id;
      std::sort(expect.begin(), expect.end());
      CHECK(mask.selected == expect);
      CHECK(std::is_sorted(mask.selected.begin(), mask.selected.end()));
    }
  }
}

TEST_CASE("prune_update") {
  SUBCASE("fraction 0 is a no-op") {
    LayerDelta d;
    d.layer_id = 1;
    d.values = {1.0, -2.0};
    LayerDelta out = prune_update(d, 0.0);
    CHECK(out.values == d.values);
    CHECK_FALSE(out.sparse);
  }

  SUBCASE("hand example: two smallest magnitudes zeroed") {
    LayerDelta d;
    d.layer_id = 3;
    d.values = {3.0, -1.0, 0.5, 2.0};
    LayerDelta out = prune_update(d, 0.5);
    CHECK(out.values == std::vector<double>{3.0, 0.0, 0.0, 2.0});
    CHECK(out.sparse);
    CHECK(out.kept == std::vector<std::uint32_t>{0, 3});
    CHECK(out.layer_id == 3);
  }

  SUBCASE("kept count is exact") {
    RngStream rng(31, "prune");
    // n a multiple of 20: zeroed count equals floor(0.15 n) and the kept
    // count equals floor(0.85 n) simultaneously.
    for (int n : {20, 100, 240}) {
      LayerDelta d;
      d.layer_id = 1;
      d.values = testutil::random_vec(rng, n);
      LayerDelta out = prune_update(d, 0.15);
      const auto zeros = static_cast<std::size_t>(
          std::count(out.values.begin(), out.values.end(), 0.0));
      CHECK(zeros == static_cast<std::size_t>(n) * 15 / 100);
      CHECK(out.kept.size() == static_cast<std::size_t>(n) * 85 / 100);
      CHECK(out.byte_size() == out.kept.size() * 8 + LayerDelta::sparse_overhead_bytes(n));
      CHECK(out.byte_size() < d.byte_size());
    }
    // Odd sizes keep exactly floor(0.85 n).
    for (int n : {7, 33, 101}) {
      LayerDelta d;
      d.layer_id = 1;
      d.values = testutil::random_vec(rng, n);
      LayerDelta out = prune_update(d, 0.15);
      CHECK(out.kept.size() == static_cast<std::size_t>(std::floor(0.85 * n)));
    }
  }

  SUBCASE("kept values are the largest magnitudes") {
    LayerDelta d;
    d.layer_id = 1;
    d.values = {0.1, -5.0, 0.2, 4.0, -0.3, 3.0};
    LayerDelta out = prune_update(d, 0.5);
    CHECK(out.values == std::vector<double>{0.0, -5.0, 0.0, 4.0, 0.0, 3.0});
  }

  SUBCASE("invalid fraction") {
    LayerDelta d;
    d.values = {1.0};
    CHECK_THROWS_AS(prune_update(d, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(prune_update(d, -0.1), std::invalid_argument);
  }
}

TEST_CASE("freeze_from_selection") {
  SelectionMask mask;
  mask.selected = {2, 4};
  FreezeMask fm = freeze_from_selection(mask, 4, true, false);
  CHECK(fm.layer == std::vector<bool>{false, true, false, true});
  CHECK(fm.embedding);
  CHECK_FALSE(fm.classifier);
  CHECK(fm.layer_trainable(2));
  CHECK_FALSE(fm.layer_trainable(1));

  SelectionMask bad;
  bad.selected = {5};
  CHECK_THROWS_AS(freeze_from_selection(bad, 4, true, true), std::invalid_argument);
}
