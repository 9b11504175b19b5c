#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>

#include "safl/privacy.hpp"
#include "safl/tensor.hpp"
#include "testutil.hpp"

using namespace safl;

TEST_CASE("clip_per_example") {
  SUBCASE("norm 10 against C=1 scales by 0.1") {
    std::vector<double> g = {6.0, 8.0};  // norm 10
    std::vector<double> out = clip_per_example(g, 1.0);
    CHECK(out[0] == doctest::Approx(0.6));
    CHECK(out[1] == doctest::Approx(0.8));
    CHECK(l2_norm(std::span<const double>(out)) == doctest::Approx(1.0));
  }
  SUBCASE("under the bound is the identity") {
    std::vector<double> g = {0.3, 0.4};  // norm 0.5
    CHECK(clip_per_example(g, 1.0) == g);
  }
  SUBCASE("property: clipped norm never exceeds C, identity below it") {
    RngStream rng(3, "clip-prop");
    for (int it = 0; it < 100; ++it) {
      const double c = 0.1 + rng.next_uniform() * 5.0;
      std::vector<double> g = testutil::random_vec(rng, 1 + rng.next_below(64), 2.0);
      const double norm_before = l2_norm(std::span<const double>(g));
      std::vector<double> out = clip_per_example(g, c);
      // Independent norm recomputation.
      double nsq = 0.0;
      for (double v : out) nsq += v * v;
      CHECK(std::sqrt(nsq) <= c + 1e-12);
      if (norm_before <= c) CHECK(out == g);
    }
  }
  SUBCASE("nonpositive clip norm is invalid") {
    std::vector<double> g = {1.0};
    CHECK_THROWS_AS(clip_per_example(g, 0.0), std::invalid_argument);
  }
}

TEST_CASE("privatize_update") {
  PrivacyParams params;
  params.enabled = true;
  params.clip_norm = 1.0;
  params.delta = 1e-5;

  SUBCASE("sigma = 0 returns the exact mean of clipped gradients") {
    params.noise_multiplier = 0.0;
    RngStream data_rng(4, "data"), dp_rng(4, "dp");
    const int batch = 8, dim = 32;
    std::vector<std::vector<double>> grads;
    for (int b = 0; b < batch; ++b) grads.push_back(testutil::random_vec(data_rng, dim, 0.05));

    std::vector<double> sum(dim, 0.0);
    for (const auto& g : grads) {
      std::vector<double> clipped = clip_per_example(g, params.clip_norm);
      for (int i = 0; i < dim; ++i) sum[i] += clipped[i];
    }
    std::vector<double> out = privatize_update(sum, batch, params, dp_rng);

    for (int i = 0; i < dim; ++i) {
      double acc = 0.0;
      for (const auto& g : grads) acc += g[i];  // all norms are below C here
      CHECK(out[i] == acc / batch);
    }
  }

  SUBCASE("empirical noise std matches sigma*C over 1e5 draws") {
    params.noise_multiplier = 1.0;
    RngStream rng(5, "noise");
    const int n = 100000;
    std::vector<double> zeros(n, 0.0);
    std::vector<double> out = privatize_update(zeros, 1, params, rng);
    double var = 0.0;
    for (double v : out) var += v * v;
    const double std_hat = std::sqrt(var / n);
    CHECK(std_hat > 0.98);
    CHECK(std_hat < 1.02);
  }

  SUBCASE("halving the coordinate count halves the injected noise energy") {
    params.noise_multiplier = 1.5;
    params.clip_norm = 0.5;
    const int dim = 4000, trials = 64;
    auto energy = [&](int coords, const char* tag) {
      RngStream rng(6, tag);
      double total = 0.0;
      for (int t = 0; t < trials; ++t) {
        std::vector<double> zeros(coords, 0.0);
        std::vector<double> out = privatize_update(zeros, 1, params, rng);
        for (double v : out) total += v * v;
      }
      return total / trials;
    };
    const double full = energy(dim, "full");
    const double half = energy(dim / 2, "half");
    CHECK(half / full == doctest::Approx(0.5).epsilon(0.03));
  }

  SUBCASE("disabled params are rejected") {
    params.enabled = false;
    RngStream rng(1, "x");
    std::vector<double> v = {1.0};
    CHECK_THROWS_AS(privatize_update(v, 1, params, rng), std::invalid_argument);
  }
}

TEST_CASE("privacy accounting") {
  PrivacyParams params;
  params.enabled = true;
  params.clip_norm = 1.0;
  params.delta = 1e-5;

  SUBCASE("plug-in oracle: sigma = sqrt(2 ln(1.25/delta)) gives eps 1") {
    const double sigma = std::sqrt(2.0 * std::log(1.25 / params.delta));
    CHECK(gaussian_mechanism_eps(sigma, params.delta) == doctest::Approx(1.0).epsilon(1e-12));
  }

  SUBCASE("two identical rounds compose to twice the per-round cost") {
    params.noise_multiplier = 2.0;
    PrivacyLedger ledger;
    account(ledger, params, 1);
    const double per_round = ledger.eps_total;
    account(ledger, params, 2);
    CHECK(ledger.eps_total == doctest::Approx(2.0 * per_round).epsilon(1e-12));
    CHECK(ledger.delta_total == doctest::Approx(2.0 * params.delta).epsilon(1e-12));
    CHECK(ledger.rounds_elapsed() == 2);
  }

  SUBCASE("eps vanishes as sigma grows") {
    CHECK(gaussian_mechanism_eps(1e9, 1e-5) < 1e-8);
    CHECK(gaussian_mechanism_eps(1e9, 1e-5) > 0.0);
  }

  SUBCASE("sigma = 0 reports infinite eps explicitly, not NaN") {
    params.noise_multiplier = 0.0;
    PrivacyLedger ledger;
    account(ledger, params, 1);
    CHECK(std::isinf(ledger.eps_total));
    CHECK_FALSE(std::isnan(ledger.eps_total));
    CHECK(ledger.infinite());
    CHECK(ledger.to_json().find("inf") != std::string::npos);
  }

  SUBCASE("eps_total strictly increases per round with finite sigma") {
    params.noise_multiplier = 1.0;
    PrivacyLedger ledger;
    double prev = 0.0;
    for (int r = 1; r <= 10; ++r) {
      account(ledger, params, r);
      CHECK(ledger.eps_total > prev);
      prev = ledger.eps_total;
    }
  }

  SUBCASE("invalid params are rejected") {
    PrivacyParams bad = params;
    bad.noise_multiplier = -1.0;
    PrivacyLedger ledger;
    CHECK_THROWS_AS(account(ledger, bad, 1), std::invalid_argument);
    bad = params;
    bad.delta = 0.0;
    CHECK_THROWS_AS(account(ledger, bad, 1), std::invalid_argument);
    bad = params;
    bad.clip_norm = 0.0;
    CHECK_THROWS_AS(account(ledger, bad, 1), std::invalid_argument);
  }
}
