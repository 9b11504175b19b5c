#include "safl/convergence.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "safl/errors.hpp"
#include "safl/rng.hpp"

namespace safl {

void ConvergenceParams::validate() const {
  if (eta <= 0.0) throw std::invalid_argument("ConvergenceParams: eta must be positive");
  if (mu <= 0.0) throw std::invalid_argument("ConvergenceParams: mu must be positive");
  if (num_layers < 1 || k < 1 || k > num_layers) {
    throw std::invalid_argument("ConvergenceParams: need 1 <= k <= num_layers");
  }
  if (rounds < 0) throw std::invalid_argument("ConvergenceParams: rounds must be >= 0");
  if (initial_gap < 0.0) throw std::invalid_argument("ConvergenceParams: initial_gap must be >= 0");
  if (smooth_l < mu) throw std::invalid_argument("ConvergenceParams: smoothness below mu");
}

double ConvergenceParams::contraction_factor() const {
  return 1.0 - eta * mu * static_cast<double>(k) / static_cast<double>(num_layers);
}

bool ConvergenceParams::contractive() const {
  const double f = contraction_factor();
  return f > 0.0 && f < 1.0;
}

BoundResult bound(const ConvergenceParams& p) {
  p.validate();
  BoundResult out;
  out.contractive = p.contractive();
  const double factor = p.contraction_factor();
  out.gap.resize(p.rounds + 1);
  out.gap[0] = p.initial_gap;
  for (int t = 1; t <= p.rounds; ++t) out.gap[t] = out.gap[t - 1] * factor;
  return out;
}

double isotropic_expected_factor(const ConvergenceParams& p) {
  const double step = 1.0 - p.eta * p.mu;
  return 1.0 - (static_cast<double>(p.k) / p.num_layers) * (1.0 - step * step);
}

SimulationResult simulate_quadratic(const ConvergenceParams& p, const QuadraticProblem& q,
                                    int num_seeds, std::uint64_t master_seed) {
  p.validate();
  if (num_seeds < 1) throw std::invalid_argument("simulate_quadratic: need at least one seed");
  if (q.dim_per_layer < 1) throw std::invalid_argument("simulate_quadratic: dim_per_layer must be >= 1");

  const int dim = p.num_layers * q.dim_per_layer;
  std::vector<double> curv = q.curvatures;
  if (curv.empty()) curv.assign(dim, p.mu);
  if (static_cast<int>(curv.size()) != dim) {
    throw std::invalid_argument("simulate_quadratic: curvature count does not match dimension");
  }
  for (double c : curv) {
    if (c < p.mu || c > p.smooth_l) {
      throw std::invalid_argument("simulate_quadratic: curvature outside [mu, smooth_l]");
    }
  }
  std::vector<double> opt = q.optimum;
  if (opt.empty()) opt.assign(dim, 0.0);

  // Start point with F(w0) - F(w*) == initial_gap, spread evenly.
  std::vector<double> w0(dim);
  {
    double unit_gap = 0.0;
    for (double c : curv) unit_gap += 0.5 * c;
    const double s = unit_gap > 0.0 ? std::sqrt(p.initial_gap / unit_gap) : 0.0;
    for (int i = 0; i < dim; ++i) w0[i] = opt[i] + s;
  }

  auto gap_of = [&](const std::vector<double>& w) {
    double g = 0.0;
    for (int i = 0; i < dim; ++i) g += 0.5 * curv[i] * (w[i] - opt[i]) * (w[i] - opt[i]);
    return g;
  };

  SimulationResult out;
  out.mean_gap.assign(p.rounds + 1, 0.0);
  out.stderr_gap.assign(p.rounds + 1, 0.0);
  out.mean_factor.assign(p.rounds + 1, 0.0);
  out.stderr_factor.assign(p.rounds + 1, 0.0);
  std::vector<double> gap_sumsq(p.rounds + 1, 0.0);
  std::vector<double> factor_sumsq(p.rounds + 1, 0.0);

  std::vector<int> blocks(p.num_layers);
  for (int seed = 0; seed < num_seeds; ++seed) {
    RngStream rng(master_seed, "quadratic:seed:" + std::to_string(seed));
    std::vector<double> w = w0;
    double g = gap_of(w);
    out.mean_gap[0] += g;
    gap_sumsq[0] += g * g;
    for (int t = 1; t <= p.rounds; ++t) {
      // Uniform k-of-L subset via partial Fisher-Yates.
      std::iota(blocks.begin(), blocks.end(), 0);
      for (int i = 0; i < p.k; ++i) {
        const int j = i + rng.next_below(p.num_layers - i);
        std::swap(blocks[i], blocks[j]);
      }
      for (int i = 0; i < p.k; ++i) {
        const int b = blocks[i];
        for (int d = 0; d < q.dim_per_layer; ++d) {
          const int idx = b * q.dim_per_layer + d;
          w[idx] -= p.eta * curv[idx] * (w[idx] - opt[idx]);
        }
      }
      const double prev = g;
      g = gap_of(w);
      if (!std::isfinite(g)) out.diverged = true;
      out.mean_gap[t] += g;
      gap_sumsq[t] += g * g;
      const double factor = prev > 0.0 ? g / prev : 0.0;
      out.mean_factor[t] += factor;
      factor_sumsq[t] += factor * factor;
    }
  }

  const double n = static_cast<double>(num_seeds);
  auto finish = [&](std::vector<double>& mean, std::vector<double>& se,
                    const std::vector<double>& sumsq, int t) {
    mean[t] /= n;
    if (num_seeds > 1) {
      const double var = std::max(0.0, sumsq[t] / n - mean[t] * mean[t]);
      se[t] = std::sqrt(var / (n - 1.0));
    }
  };
  finish(out.mean_gap, out.stderr_gap, gap_sumsq, 0);
  for (int t = 1; t <= p.rounds; ++t) {
    finish(out.mean_gap, out.stderr_gap, gap_sumsq, t);
    finish(out.mean_factor, out.stderr_factor, factor_sumsq, t);
  }
  return out;
}

void write_convergence_csv(const std::string& path, const BoundResult& b,
                           const SimulationResult& s) {
  std::ofstream os(path);
  if (!os) throw IoError("write_convergence_csv: cannot open " + path);
  os << "round,bound,empirical_mean,stderr\n";
  os.precision(17);
  const std::size_t rounds = std::min(b.gap.size(), s.mean_gap.size());
  for (std::size_t t = 0; t < rounds; ++t) {
    os << t << "," << b.gap[t] << "," << s.mean_gap[t] << "," << s.stderr_gap[t] << "\n";
  }
  if (!os) throw IoError("write_convergence_csv: write failed for " + path);
}

}  // namespace safl
