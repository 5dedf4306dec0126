#pragma once

#include <string>
#include <vector>

#include "boostdet/grid.hpp"
#include "boostdet/rng.hpp"

namespace boostdet {

struct SgdConfig {
  double learning_rate = 0.01;
  double momentum = 0.9;
  double weight_decay = 1e-4;

  void validate() const;
};

// Parameter tensor pair (weights, biases) with mirrored gradient accumulators
// and momentum buffers. Shape interpretation belongs to the owning layer.
struct LayerParams {
  std::string name;
  std::vector<double> weights;
  std::vector<double> biases;
  std::vector<double> grad_weights;
  std::vector<double> grad_biases;
  std::vector<double> vel_weights;
  std::vector<double> vel_biases;

  LayerParams() = default;
  LayerParams(std::string name, std::size_t n_weights, std::size_t n_biases);

  void zero_grad();
  void clear_velocity();
  bool grads_finite() const;
  bool params_finite() const;
};

// One momentum-SGD update: v = momentum*v + (grad + wd*param); param -= lr*v.
// Clears the gradient accumulators. Throws TrainingError on non-finite grads.
void sgd_step(LayerParams& params, const SgdConfig& cfg);

// Glorot-uniform fill of weights in +-sqrt(6/(fan_in+fan_out)); biases zero.
void init_glorot(LayerParams& params, int fan_in, int fan_out, Rng& rng);

struct LinearCache {
  Grid input;
  bool valid = false;
};

// Per-cell linear map: out[h,w,:] = W * in[h,w,:] + b, with W stored row-major
// (out_channels x in_channels). Spatial dims preserved.
//
// The explicit-cache overloads let one parameter set serve several
// applications in flight (the RPN head is shared across pyramid levels).
class LinearLayer {
 public:
  LinearLayer(std::string name, int in_channels, int out_channels);

  void init(Rng& rng) { init_glorot(params_, in_channels_, out_channels_, rng); }

  Grid forward(const Grid& input);
  // Returns d(loss)/d(input); accumulates parameter gradients.
  Grid backward(const Grid& upstream);

  Grid forward(const Grid& input, LinearCache& cache) const;
  Grid backward(const Grid& upstream, const LinearCache& cache);

  // Stateless apply, shared by forward() and reference users.
  Grid apply(const Grid& input) const;

  LayerParams& params() { return params_; }
  const LayerParams& params() const { return params_; }
  int in_channels() const { return in_channels_; }
  int out_channels() const { return out_channels_; }

 private:
  int in_channels_;
  int out_channels_;
  LayerParams params_;
  LinearCache own_cache_;
};

struct NormCache {
  Grid normalized;
  std::vector<double> inv_std;  // per (cell, group)
  bool valid = false;
};

// Per-cell group normalization over channel groups, then per-channel affine.
// Statistics are taken over the group's channels within a single cell.
class ChannelNormLayer {
 public:
  static constexpr double kEpsilon = 1e-5;

  ChannelNormLayer(std::string name, int channels, int groups);

  Grid forward(const Grid& input);
  Grid backward(const Grid& upstream);

  Grid forward(const Grid& input, NormCache& cache) const;
  Grid backward(const Grid& upstream, const NormCache& cache);

  LayerParams& params() { return params_; }
  const LayerParams& params() const { return params_; }
  int groups() const { return groups_; }

 private:
  int channels_;
  int groups_;
  LayerParams params_;  // weights = per-channel scale, biases = per-channel shift
  NormCache own_cache_;
};

struct ReluCache {
  Grid input;
  bool valid = false;
};

class ReluLayer {
 public:
  Grid forward(const Grid& input);
  Grid backward(const Grid& upstream);

  static Grid forward_static(const Grid& input, ReluCache& cache);
  static Grid backward_static(const Grid& upstream, const ReluCache& cache);

 private:
  ReluCache own_cache_;
};

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace boostdet
