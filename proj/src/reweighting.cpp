#include "boostdet/reweighting.hpp"

#include <cmath>

#include "boostdet/errors.hpp"

namespace boostdet {

void BrConfig::validate() const {
  if (omega < 0.0) throw ConfigError("br.omega must be >= 0");
}

double raw_weight(double prior, bool is_foreground, const BrConfig& cfg) {
  cfg.validate();
  if (prior < 0.0 || prior > 1.0) throw InputError("raw_weight: prior must lie in [0,1]");
  if (cfg.omega == 0.0) return 1.0;
  const double base = is_foreground ? 1.0 - prior : prior;
  return std::pow(base, cfg.omega);
}

std::vector<double> normalize_weights(const std::vector<double>& weights,
                                      const std::vector<double>& per_sample_losses) {
  if (weights.size() != per_sample_losses.size()) {
    throw InputError("normalize_weights: weights and losses must have equal length");
  }
  double loss_sum = 0.0;
  double weighted_sum = 0.0;
  for (std::size_t k = 0; k < weights.size(); ++k) {
    if (per_sample_losses[k] < 0.0) {
      throw InputError("normalize_weights: losses must be non-negative");
    }
    loss_sum += per_sample_losses[k];
    weighted_sum += weights[k] * per_sample_losses[k];
  }
  std::vector<double> out(weights.size(), 1.0);
  if (weighted_sum == 0.0) return out;  // degenerate batch, loss is 0 anyway
  const double scale = loss_sum / weighted_sum;
  for (std::size_t k = 0; k < weights.size(); ++k) out[k] = weights[k] * scale;
  return out;
}

std::vector<double> br_weights(const std::vector<BrSample>& samples, const BrConfig& cfg) {
  cfg.validate();
  std::vector<double> raw(samples.size(), 1.0);
  if (!cfg.enabled) return raw;
  for (std::size_t k = 0; k < samples.size(); ++k) {
    raw[k] = raw_weight(samples[k].prior, samples[k].is_foreground, cfg);
  }
  if (!cfg.normalize) return raw;
  std::vector<double> losses(samples.size());
  for (std::size_t k = 0; k < samples.size(); ++k) losses[k] = samples[k].ce_loss;
  return normalize_weights(raw, losses);
}

}  // namespace boostdet
