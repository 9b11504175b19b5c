#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace safl {

struct ConvergenceParams {
  double eta = 0.5;       // learning rate
  double mu = 1.0;        // strong-convexity constant
  double smooth_l = 1.0;  // smoothness constant (unused by the bound itself)
  int num_layers = 4;
  int k = 2;              // blocks updated per round
  int rounds = 50;
  double initial_gap = 1.0;

  void validate() const;
  double contraction_factor() const;  // 1 - eta * mu * k / num_layers
  bool contractive() const;
};

struct BoundResult {
  std::vector<double> gap;  // [rounds + 1], gap[0] == initial_gap
  bool contractive = true;
};

// Separable quadratic F(w) = 1/2 sum c_i (w_i - w*_i)^2 with coordinates
// grouped into layer blocks; curvatures lie in [mu, smooth_l].
struct QuadraticProblem {
  int dim_per_layer = 4;
  std::vector<double> curvatures;  // per coordinate; empty = isotropic mu
  std::vector<double> optimum;     // empty = origin
};

struct SimulationResult {
  std::vector<double> mean_gap;      // [rounds + 1]
  std::vector<double> stderr_gap;    // [rounds + 1], 0 at round 0
  // Per-round gap ratio gap_t / gap_{t-1}; bounded in [(1-eta*mu)^2, 1] so
  // its Monte-Carlo mean stays well behaved at any depth, unlike the gap
  // itself whose distribution grows heavy-tailed with t.
  std::vector<double> mean_factor;   // [rounds + 1], unused slot 0
  std::vector<double> stderr_factor; // [rounds + 1]
  bool diverged = false;
};

BoundResult bound(const ConvergenceParams& p);

// Uniform-random k-of-L block selection per round, exact gradient steps on
// selected blocks, mean gap over seeds.
SimulationResult simulate_quadratic(const ConvergenceParams& p, const QuadraticProblem& q,
                                    int num_seeds, std::uint64_t master_seed = 7);

// Closed-form per-round expected gap factor for the isotropic problem under
// uniform block selection: 1 - (k/L) * (1 - (1 - eta*mu)^2).
double isotropic_expected_factor(const ConvergenceParams& p);

void write_convergence_csv(const std::string& path, const BoundResult& b,
                           const SimulationResult& s);

}  // namespace safl
