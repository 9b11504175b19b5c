#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "safl/rng.hpp"

namespace testutil {

// Central finite differences on a flat parameter vector.
inline std::vector<double> finite_diff(const std::function<double(const std::vector<double>&)>& f,
                                       std::vector<double> x, double h = 1e-5) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double up = f(x);
    x[i] = keep - h;
    const double down = f(x);
    x[i] = keep;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

// Symmetric relative error; ~0 when both are ~0.
inline double rel_err(double a, double b) {
  const double denom = std::abs(a) + std::abs(b);
  if (denom < 1e-10) return 0.0;
  return std::abs(a - b) / denom;
}

// atol masks the absolute noise floor of central differences
// (~eps * |f| / h); pairs closer than it count as equal.
inline double max_rel_err(const std::vector<double>& a, const std::vector<double>& b,
                          double atol = 0.0) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (std::abs(a[i] - b[i]) <= atol) continue;
    worst = std::max(worst, rel_err(a[i], b[i]));
  }
  return worst;
}

inline std::vector<double> random_vec(safl::RngStream& rng, std::size_t n, double scale = 1.0) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.next_gaussian() * scale;
  return v;
}

}  // namespace testutil
