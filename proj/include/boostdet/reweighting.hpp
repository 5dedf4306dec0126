#pragma once

#include <vector>

namespace boostdet {

struct BrConfig {
  double omega = 0.5;     // boosting exponent
  bool normalize = true;  // norm-preserving renormalization
  bool enabled = true;
  void validate() const;
};

// Raw boosting weight from the RPN prior: (1-prior)^omega for foreground,
// prior^omega for background; 0^0 defined as 1.
double raw_weight(double prior, bool is_foreground, const BrConfig& cfg);

// w'_k = w_k * sum(L) / sum(w*L), so that sum(w'*L) = sum(L). Falls back to
// all-ones when sum(w*L) is zero.
std::vector<double> normalize_weights(const std::vector<double>& weights,
                                      const std::vector<double>& per_sample_losses);

struct BrSample {
  double prior = 0.0;
  bool is_foreground = false;
  double ce_loss = 0.0;
};

// Full reweighting pipeline: raw weights then (if enabled) normalization.
// Priors are constants; no gradient flows back to the RPN through weights.
std::vector<double> br_weights(const std::vector<BrSample>& samples, const BrConfig& cfg);

}  // namespace boostdet
