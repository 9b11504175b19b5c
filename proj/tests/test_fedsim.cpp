#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "safl/fedsim.hpp"
#include "testutil.hpp"

using namespace safl;

namespace {

FedConfig small_fed(Strategy strategy, std::uint64_t seed = 42) {
  FedConfig fed;
  fed.encoder.num_layers = 3;
  fed.encoder.num_heads = 2;
  fed.encoder.d_model = 8;
  fed.encoder.d_ff = 16;
  fed.encoder.vocab_size = 32;
  fed.encoder.max_seq_len = 12;
  fed.encoder.num_labels = 7;
  fed.strategy = strategy;
  fed.batch_size = 4;
  fed.lr = 0.02;
  fed.task_tokens.mode = TaskTokenSpec::Mode::TokenIds;
  fed.task_tokens.values = {0};
  fed.profile_examples = 4;
  fed.master_seed = seed;
  return fed;
}

struct Setup {
  LabeledCorpus corpus;
  std::vector<std::vector<int>> shards;
  std::vector<int> eval_indices;
};

Setup small_setup(int clients = 4, std::uint64_t seed = 42) {
  CorpusSpec cs;
  cs.vocab_size = 32;
  cs.num_sequences = 60;
  cs.seq_len_min = 6;
  cs.seq_len_max = 10;
  cs.num_entity_types = 3;
  cs.entity_density = 0.3;
  cs.seed = seed;
  Setup s;
  s.corpus = generate(cs);
  LabeledCorpus train = s.corpus;
  train.sequences.resize(48);
  train.spec.num_sequences = 48;
  PartitionSpec ps;
  ps.num_clients = clients;
  ps.dirichlet_alpha = 1.0;
  ps.seed = seed;
  s.shards = partition(train, ps);
  for (int i = 48; i < 60; ++i) s.eval_indices.push_back(i);
  return s;
}

}  // namespace

TEST_CASE("weighted_mean and aggregate") {
  SUBCASE("identical deltas aggregate to themselves") {
    LayerDelta d;
    d.layer_id = 1;
    d.values = {1.0, -2.0, 3.0};
    std::vector<std::vector<LayerDelta>> per_client = {{d}, {d}, {d}};
    AggregateResult r = aggregate(per_client, {1.0, 2.0, 3.0});
    REQUIRE(r.layer_mean.count(1) == 1);
    for (std::size_t i = 0; i < d.values.size(); ++i) {
      CHECK(r.layer_mean[1][i] == doctest::Approx(d.values[i]).epsilon(1e-15));
    }
    CHECK(r.senders[1] == 3);
  }

  SUBCASE("two clients, n=1 and n=3, deltas 0 and 4 give 3") {
    LayerDelta a, b;
    a.layer_id = 2;
    a.values = {0.0};
    b.layer_id = 2;
    b.values = {4.0};
    AggregateResult r = aggregate({{a}, {b}}, {1.0, 3.0});
    CHECK(r.layer_mean[2][0] == doctest::Approx(3.0).epsilon(1e-15));
  }

  SUBCASE("random deltas match an independent weighted-mean oracle") {
    RngStream rng(9, "agg-oracle");
    for (int it = 0; it < 50; ++it) {
      const int clients = 2 + rng.next_below(5);
      const int dim = 1 + rng.next_below(20);
      std::vector<std::vector<LayerDelta>> per_client(clients);
      std::vector<double> weights;
      for (int c = 0; c < clients; ++c) {
        LayerDelta d;
        d.layer_id = 1;
        d.values = testutil::random_vec(rng, dim);
        per_client[c] = {d};
        weights.push_back(1.0 + rng.next_below(10));
      }
      AggregateResult r = aggregate(per_client, weights);
      for (int i = 0; i < dim; ++i) {
        double num = 0.0, den = 0.0;
        for (int c = 0; c < clients; ++c) {
          num += weights[c] * per_client[c][0].values[i];
          den += weights[c];
        }
        CHECK(std::abs(r.layer_mean[1][i] - num / den) < 1e-12);
      }
    }
  }

  SUBCASE("client order invariance and split-client property") {
    RngStream rng(10, "agg-props");
    LayerDelta d1, d2;
    d1.layer_id = 1;
    d1.values = testutil::random_vec(rng, 8);
    d2.layer_id = 1;
    d2.values = testutil::random_vec(rng, 8);
    AggregateResult fwd = aggregate({{d1}, {d2}}, {2.0, 5.0});
    AggregateResult rev = aggregate({{d2}, {d1}}, {5.0, 2.0});
    for (int i = 0; i < 8; ++i) {
      CHECK(std::abs(fwd.layer_mean[1][i] - rev.layer_mean[1][i]) < 1e-12);
    }
    // Splitting one client into two with halved weight and the same delta.
    AggregateResult split = aggregate({{d1}, {d2}, {d2}}, {2.0, 2.5, 2.5});
    for (int i = 0; i < 8; ++i) {
      CHECK(std::abs(fwd.layer_mean[1][i] - split.layer_mean[1][i]) < 1e-12);
    }
  }

  SUBCASE("missing layers are absent from the result") {
    LayerDelta d;
    d.layer_id = 5;
    d.values = {1.0};
    AggregateResult r = aggregate({{d}, {}}, {1.0, 1.0});
    CHECK(r.layer_mean.count(5) == 1);
    CHECK(r.layer_mean.size() == 1);
    CHECK(r.senders[5] == 1);
  }

  SUBCASE("bad inputs") {
    LayerDelta d;
    d.layer_id = 0;
    d.values = {1.0};
    CHECK_THROWS_AS(aggregate({{d}}, {1.0}), std::invalid_argument);
    CHECK_THROWS_AS(weighted_mean({{1.0}, {2.0}}, {1.0, -1.0}), std::invalid_argument);
    CHECK_THROWS_AS(weighted_mean({}, {}), std::invalid_argument);
  }
}

TEST_CASE("evaluate metrics") {
  // A model with a handcrafted classifier cannot be built directly, so the
  // oracle cases use degenerate corpora instead: metrics on predictions are
  // checked through a hand confusion matrix below.
  SUBCASE("confusion-matrix oracle on 20 tokens") {
    // Build sequences whose logits are forced by a zeroed model with only a
    // classifier bias: prediction is then constant argmax(bias).
    EncoderConfig cfg;
    cfg.num_layers = 1;
    cfg.num_heads = 1;
    cfg.d_model = 4;
    cfg.d_ff = 8;
    cfg.vocab_size = 8;
    cfg.max_seq_len = 24;
    cfg.num_labels = 3;
    RngStream rng(1, "m");
    ModelState m = ModelState::init(cfg, rng);
    for (auto& blk : m.layers) std::fill(blk.begin(), blk.end(), 0.0);
    std::fill(m.embedding.begin(), m.embedding.end(), 0.0);
    std::fill(m.classifier.begin(), m.classifier.end(), 0.0);
    // Restore layer-norm gains so the forward pass stays well defined.
    RngStream rng2(1, "m2");
    ModelState fresh = ModelState::init(cfg, rng2);
    for (int l = 0; l < cfg.num_layers; ++l) m.layers[l] = fresh.layers[l];
    m.classifier.back() = 0.0;
    // Bias toward label 1.
    m.classifier[static_cast<std::size_t>(cfg.d_model) * cfg.num_labels + 1] = 5.0;

    // 20 tokens: labels alternate 0,1,2,0,1,2,...; prediction is always 1.
    LabeledSequence seq;
    for (int i = 0; i < 20; ++i) {
      seq.tokens.push_back(1);
      seq.labels.push_back(i % 3);
    }
    EvalMetrics metrics = evaluate(m, {&seq});
    // Hand confusion matrix: 7 tokens with label 1 are TP; 13 predictions of
    // 1 on other labels are FP; labels 2 (6 tokens) missed are FN; label 0 is
    // background and adds no FN.
    const double tp = 7, fp = 13, fn = 6;
    CHECK(metrics.micro_f1 == doctest::Approx(2 * tp / (2 * tp + fp + fn)).epsilon(1e-12));
    CHECK(metrics.seq_accuracy == 0.0);
  }

  SUBCASE("zero-division rule: no predicted positives while positives exist") {
    std::uint64_t tp = 0, fp = 0, fn = 5;
    const std::uint64_t denom = 2 * tp + fp + fn;
    CHECK(2.0 * tp / denom == 0.0);
  }

  SUBCASE("empty eval set is an error") {
    EncoderConfig cfg;
    RngStream rng(1, "m");
    ModelState m = ModelState::init(cfg, rng);
    CHECK_THROWS_AS(evaluate(m, {}), std::invalid_argument);
  }
}

TEST_CASE("SAFL with K=L, sigma=0, prune=0 is bitwise FedAvgFull") {
  Setup s1 = small_setup();
  Setup s2 = small_setup();

  FedConfig safl_cfg = small_fed(Strategy::safl(3));
  FedConfig fedavg_cfg = small_fed(Strategy::fedavg_full());

  FederatedRun a(safl_cfg, s1.corpus, s1.shards, s1.eval_indices);
  FederatedRun b(fedavg_cfg, s2.corpus, s2.shards, s2.eval_indices);
  for (int r = 0; r < 3; ++r) {
    RoundReport ra = a.run_round();
    RoundReport rb = b.run_round();
    CHECK(ra.eval.micro_f1 == rb.eval.micro_f1);
  }
  CHECK(a.global_model().flatten() == b.global_model().flatten());
}

TEST_CASE("static layer skip arithmetic: frozen bottom 2 of 3") {
  Setup s = small_setup();
  FedConfig cfg = small_fed(Strategy::static_skip(2));
  cfg.train_embedding = false;
  cfg.train_classifier = true;
  FederatedRun run(cfg, s.corpus, s.shards, s.eval_indices);
  RoundReport r = run.run_round();
  // One of three layer blocks moves: layer reduction is exactly 2/3.
  CHECK(r.comm.layer_reduction_percent == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  for (const auto& mask : r.masks) CHECK(mask.selected == std::vector<int>{3});
}

TEST_CASE("ledger exactness: bytes re-derivable from masks") {
  Setup s = small_setup();
  FedConfig cfg = small_fed(Strategy::safl(2));
  FederatedRun run(cfg, s.corpus, s.shards, s.eval_indices);
  RoundReport r = run.run_round();

  const std::uint64_t lp = layer_param_count(cfg.encoder);
  const std::uint64_t ep = embedding_param_count(cfg.encoder);
  const std::uint64_t cp = classifier_param_count(cfg.encoder);
  std::uint64_t expect_total = 0;
  for (std::size_t c = 0; c < r.masks.size(); ++c) {
    const std::uint64_t from_mask = r.masks[c].selected.size() * lp * 8 + ep * 8 + cp * 8;
    CHECK(r.comm.bytes_up_per_client[c] == from_mask);
    expect_total += from_mask;
  }
  CHECK(r.comm.bytes_up_total == expect_total);
  CHECK(r.comm.baseline_layer_bytes == 4ull * 3ull * lp * 8);
  CHECK(r.comm.reduction_percent >= 0.0);
  CHECK(r.comm.reduction_percent < 1.0);
}

TEST_CASE("unselected layers are bitwise unchanged by a round") {
  Setup s = small_setup();
  FedConfig cfg = small_fed(Strategy::safl(1));
  FederatedRun run(cfg, s.corpus, s.shards, s.eval_indices);
  const ModelState before = run.global_model();
  RoundReport r = run.run_round();

  std::set<int> touched;
  for (const auto& mask : r.masks) {
    for (int id : mask.selected) touched.insert(id);
  }
  for (int l = 1; l <= cfg.encoder.num_layers; ++l) {
    if (touched.count(l) == 0) {
      CHECK(run.global_model().layers[l - 1] == before.layers[l - 1]);
      CHECK(std::find(r.layers_untouched.begin(), r.layers_untouched.end(), l) !=
            r.layers_untouched.end());
    } else {
      CHECK(run.global_model().layers[l - 1] != before.layers[l - 1]);
    }
  }
}

TEST_CASE("pruned uplink stores the exact kept count") {
  Setup s = small_setup();
  FedConfig cfg = small_fed(Strategy::safl(2));
  cfg.prune_fraction = 0.15;
  FederatedRun run(cfg, s.corpus, s.shards, s.eval_indices);
  RoundReport r = run.run_round();

  const std::uint64_t lp = layer_param_count(cfg.encoder);
  const std::uint64_t kept = static_cast<std::uint64_t>(std::floor(0.85 * static_cast<double>(lp)));
  const std::uint64_t per_layer = kept * 8 + LayerDelta::sparse_overhead_bytes(lp);
  for (std::size_t c = 0; c < r.masks.size(); ++c) {
    const std::uint64_t expect =
        r.masks[c].selected.size() * per_layer +
        (embedding_param_count(cfg.encoder) + classifier_param_count(cfg.encoder)) * 8;
    CHECK(r.comm.bytes_up_per_client[c] == expect);
  }
}

TEST_CASE("reduction is monotone in K") {
  Setup s = small_setup();
  std::uint64_t prev_bytes = 0;
  for (int k = 1; k <= 3; ++k) {
    Setup fresh = small_setup();
    FedConfig cfg = small_fed(Strategy::safl(k));
    FederatedRun run(cfg, fresh.corpus, fresh.shards, fresh.eval_indices);
    RoundReport r = run.run_round();
    CHECK(r.comm.bytes_up_total > prev_bytes);
    prev_bytes = r.comm.bytes_up_total;
  }
}

TEST_CASE("thread schedules do not change results") {
  auto run_with_threads = [](int threads) {
    Setup s = small_setup(4, 7);
    FedConfig cfg = small_fed(Strategy::safl(2), 7);
    cfg.threads = threads;
    FederatedRun run(cfg, s.corpus, s.shards, s.eval_indices);
    for (int r = 0; r < 2; ++r) run.run_round();
    return run.global_model().flatten();
  };
  const auto serial = run_with_threads(1);
  CHECK(run_with_threads(3) == serial);
  CHECK(run_with_threads(8) == serial);
}

TEST_CASE("privacy-enabled run accounts one entry per round") {
  Setup s = small_setup();
  FedConfig cfg = small_fed(Strategy::safl(2));
  cfg.privacy.enabled = true;
  cfg.privacy.clip_norm = 0.5;
  cfg.privacy.noise_multiplier = 2.0;
  cfg.privacy.delta = 1e-5;
  FederatedRun run(cfg, s.corpus, s.shards, s.eval_indices);
  run.run_round();
  run.run_round();
  const PrivacyLedger& ledger = run.privacy_ledger();
  CHECK(ledger.rounds_elapsed() == 2);
  CHECK(ledger.eps_total ==
        doctest::Approx(2.0 * gaussian_mechanism_eps(2.0, 1e-5)).epsilon(1e-12));
  CHECK(ledger.entries[0].noisy_steps > 0);
}

TEST_CASE("DP with sigma=0 and a loose clip equals the plain path exactly") {
  auto run_once = [](bool dp) {
    Setup s = small_setup(3, 21);
    FedConfig cfg = small_fed(Strategy::safl(2), 21);
    cfg.privacy.enabled = dp;
    cfg.privacy.noise_multiplier = 0.0;
    cfg.privacy.clip_norm = 1e12;  // above any gradient norm here
    FederatedRun run(cfg, s.corpus, s.shards, s.eval_indices);
    for (int r = 0; r < 2; ++r) run.run_round();
    return run.global_model().flatten();
  };
  const auto plain = run_once(false);
  const auto dp = run_once(true);
  REQUIRE(plain.size() == dp.size());
  for (std::size_t i = 0; i < plain.size(); ++i) CHECK(plain[i] == dp[i]);
}

TEST_CASE("divergence aborts the round naming client and step") {
  Setup s = small_setup();
  FedConfig cfg = small_fed(Strategy::fedavg_full());
  cfg.lr = 1e300;
  FederatedRun run(cfg, s.corpus, s.shards, s.eval_indices);
  CHECK_THROWS_AS(
      [&] {
        for (int r = 0; r < 5; ++r) run.run_round();
      }(),
      DivergenceError);
}

TEST_CASE("random_k strategy selects k distinct layers per client per round") {
  Setup s = small_setup();
  FedConfig cfg = small_fed(Strategy::random_k(2));
  FederatedRun run(cfg, s.corpus, s.shards, s.eval_indices);
  RoundReport r1 = run.run_round();
  RoundReport r2 = run.run_round();
  bool any_difference = false;
  for (const auto& mask : r1.masks) {
    CHECK(mask.selected.size() == 2);
    CHECK(std::is_sorted(mask.selected.begin(), mask.selected.end()));
    CHECK(mask.selected[0] != mask.selected[1]);
  }
  for (std::size_t c = 0; c < r1.masks.size(); ++c) {
    if (r1.masks[c].selected != r2.masks[c].selected) any_difference = true;
  }
  CHECK(any_difference);  // churn across rounds
}

TEST_CASE("run reports serialize to json lines") {
  Setup s = small_setup();
  FedConfig cfg = small_fed(Strategy::safl(2));
  FederatedRun run(cfg, s.corpus, s.shards, s.eval_indices);
  RoundReport r = run.run_round();
  const std::string line = to_json_line(r);
  CHECK(line.find("\"round\":1") != std::string::npos);
  CHECK(line.find("micro_f1") != std::string::npos);
  CHECK(line.find("\n") == std::string::npos);
  REQUIRE_FALSE(run.selection_trace().empty());
  const std::string trace = to_json_line(run.selection_trace()[0]);
  CHECK(trace.find("raw_scores") != std::string::npos);
}
