#include "safl/privacy.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include <json.hpp>

#include "safl/tensor.hpp"

namespace safl {

void PrivacyParams::validate() const {
  if (clip_norm <= 0.0) throw std::invalid_argument("PrivacyParams: clip_norm must be positive");
  if (noise_multiplier < 0.0) {
    throw std::invalid_argument("PrivacyParams: noise_multiplier must be nonnegative");
  }
  if (delta <= 0.0 || delta >= 1.0) {
    throw std::invalid_argument("PrivacyParams: delta must be in (0,1)");
  }
}

bool PrivacyLedger::infinite() const { return std::isinf(eps_total); }

std::string PrivacyLedger::to_json() const {
  nlohmann::json j;
  j["rounds_elapsed"] = rounds_elapsed();
  j["eps_total"] = infinite() ? nlohmann::json("inf") : nlohmann::json(eps_total);
  j["delta_total"] = delta_total;
  j["composition"] = "basic";
  auto& rounds = j["rounds"] = nlohmann::json::array();
  for (const auto& e : entries) {
    nlohmann::json je;
    je["round"] = e.round;
    je["eps"] = std::isinf(e.eps) ? nlohmann::json("inf") : nlohmann::json(e.eps);
    je["delta"] = e.delta;
    je["noisy_steps"] = e.noisy_steps;
    rounds.push_back(std::move(je));
  }
  return j.dump(2);
}

std::vector<double> clip_per_example(std::vector<double> grad, double clip_norm) {
  if (clip_norm <= 0.0) throw std::invalid_argument("clip_per_example: clip_norm must be positive");
  const double norm = l2_norm(grad);
  if (norm > clip_norm) {
    const double s = clip_norm / norm;
    for (double& v : grad) v *= s;
  }
  return grad;
}

std::vector<double> privatize_update(std::vector<double> sum_of_clipped, int batch_size,
                                     const PrivacyParams& params, RngStream& rng) {
  params.validate();
  if (!params.enabled) throw std::invalid_argument("privatize_update: privacy not enabled");
  if (batch_size < 1) throw std::invalid_argument("privatize_update: batch_size must be >= 1");
  const double noise_std = params.noise_multiplier * params.clip_norm;
  const double inv_b = 1.0 / static_cast<double>(batch_size);
  for (double& v : sum_of_clipped) {
    if (noise_std > 0.0) v += rng.next_gaussian() * noise_std;
    v *= inv_b;
  }
  return sum_of_clipped;
}

double gaussian_mechanism_eps(double noise_multiplier, double delta) {
  if (noise_multiplier == 0.0) return std::numeric_limits<double>::infinity();
  return std::sqrt(2.0 * std::log(1.25 / delta)) / noise_multiplier;
}

void account(PrivacyLedger& ledger, const PrivacyParams& params, int round, int noisy_steps) {
  params.validate();
  PrivacyEntry e;
  e.round = round;
  e.eps = gaussian_mechanism_eps(params.noise_multiplier, params.delta);
  e.delta = params.delta;
  e.noisy_steps = noisy_steps;
  ledger.entries.push_back(e);
  ledger.eps_total += e.eps;
  ledger.delta_total += e.delta;
}

}  // namespace safl
