#pragma once

#include <string>
#include <vector>

#include "safl/rng.hpp"

namespace safl {

struct PrivacyParams {
  double clip_norm = 1.0;        // L2 sensitivity bound C
  double noise_multiplier = 1.0; // sigma; noise std is sigma * C
  double delta = 1e-5;
  bool enabled = false;

  void validate() const;
};

struct PrivacyEntry {
  int round = 0;
  double eps = 0.0;  // +inf when sigma == 0
  double delta = 0.0;
  int noisy_steps = 0;  // mechanism invocations this round, for external accountants
};

// Basic-composition ledger: per-round Gaussian-mechanism costs and their
// running totals. Append-only.
struct PrivacyLedger {
  std::vector<PrivacyEntry> entries;
  double eps_total = 0.0;
  double delta_total = 0.0;

  int rounds_elapsed() const { return static_cast<int>(entries.size()); }
  bool infinite() const;
  std::string to_json() const;
};

// Per-example L2 clipping: grad * min(1, C / ||grad||).
std::vector<double> clip_per_example(std::vector<double> grad, double clip_norm);

// (sum + N(0, (sigma*C)^2) per coordinate) / batch_size.
std::vector<double> privatize_update(std::vector<double> sum_of_clipped, int batch_size,
                                     const PrivacyParams& params, RngStream& rng);

// Classical Gaussian-mechanism bound for one release with sensitivity C and
// noise std sigma*C: eps = sqrt(2 ln(1.25/delta)) / sigma.
double gaussian_mechanism_eps(double noise_multiplier, double delta);

// Appends this round's (eps, delta); totals compose additively.
void account(PrivacyLedger& ledger, const PrivacyParams& params, int round, int noisy_steps = 1);

}  // namespace safl
