#include "boostdet/layers.hpp"

#include <cmath>

#include "boostdet/errors.hpp"

namespace boostdet {

void SgdConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("sgd.learning_rate must be > 0");
  if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("sgd.momentum must be in [0,1)");
  if (weight_decay < 0.0) throw ConfigError("sgd.weight_decay must be >= 0");
}

LayerParams::LayerParams(std::string layer_name, std::size_t n_weights, std::size_t n_biases)
    : name(std::move(layer_name)),
      weights(n_weights, 0.0),
      biases(n_biases, 0.0),
      grad_weights(n_weights, 0.0),
      grad_biases(n_biases, 0.0),
      vel_weights(n_weights, 0.0),
      vel_biases(n_biases, 0.0) {}

void LayerParams::zero_grad() {
  std::fill(grad_weights.begin(), grad_weights.end(), 0.0);
  std::fill(grad_biases.begin(), grad_biases.end(), 0.0);
}

void LayerParams::clear_velocity() {
  std::fill(vel_weights.begin(), vel_weights.end(), 0.0);
  std::fill(vel_biases.begin(), vel_biases.end(), 0.0);
}

bool LayerParams::grads_finite() const {
  for (double g : grad_weights) {
    if (!std::isfinite(g)) return false;
  }
  for (double g : grad_biases) {
    if (!std::isfinite(g)) return false;
  }
  return true;
}

bool LayerParams::params_finite() const {
  for (double w : weights) {
    if (!std::isfinite(w)) return false;
  }
  for (double b : biases) {
    if (!std::isfinite(b)) return false;
  }
  return true;
}

namespace {

void sgd_update(std::vector<double>& param, std::vector<double>& grad,
                std::vector<double>& vel, const SgdConfig& cfg) {
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i] + cfg.weight_decay * param[i];
    vel[i] = cfg.momentum * vel[i] + g;
    param[i] -= cfg.learning_rate * vel[i];
    grad[i] = 0.0;
  }
}

}  // namespace

void sgd_step(LayerParams& params, const SgdConfig& cfg) {
  cfg.validate();
  if (!params.grads_finite()) {
    throw TrainingError("non-finite gradient in layer '" + params.name + "'");
  }
  sgd_update(params.weights, params.grad_weights, params.vel_weights, cfg);
  sgd_update(params.biases, params.grad_biases, params.vel_biases, cfg);
}

void init_glorot(LayerParams& params, int fan_in, int fan_out, Rng& rng) {
  const double bound = std::sqrt(6.0 / (fan_in + fan_out));
  for (double& w : params.weights) w = rng.uniform(-bound, bound);
  std::fill(params.biases.begin(), params.biases.end(), 0.0);
}

LinearLayer::LinearLayer(std::string name, int in_channels, int out_channels)
    : in_channels_(in_channels),
      out_channels_(out_channels),
      params_(std::move(name),
              static_cast<std::size_t>(in_channels) * out_channels,
              static_cast<std::size_t>(out_channels)) {
  if (in_channels <= 0 || out_channels <= 0) {
    throw ConfigError("linear layer channel counts must be positive");
  }
}

Grid LinearLayer::apply(const Grid& input) const {
  if (input.channels() != in_channels_) {
    throw ConfigError("linear layer '" + params_.name + "': input has " +
                      std::to_string(input.channels()) + " channels, expected " +
                      std::to_string(in_channels_));
  }
  Grid out(input.height(), input.width(), out_channels_);
  const double* w = params_.weights.data();
  const double* b = params_.biases.data();
  for (int h = 0; h < input.height(); ++h) {
    for (int x = 0; x < input.width(); ++x) {
      const double* in_cell = input.cell(h, x);
      double* out_cell = out.cell(h, x);
      for (int oc = 0; oc < out_channels_; ++oc) {
        const double* row = w + static_cast<std::size_t>(oc) * in_channels_;
        double acc = b[oc];
        for (int ic = 0; ic < in_channels_; ++ic) acc += row[ic] * in_cell[ic];
        out_cell[oc] = acc;
      }
    }
  }
  return out;
}

Grid LinearLayer::forward(const Grid& input, LinearCache& cache) const {
  Grid out = apply(input);
  cache.input = input;
  cache.valid = true;
  return out;
}

Grid LinearLayer::backward(const Grid& upstream, const LinearCache& cache) {
  if (!cache.valid) {
    throw StateError("linear layer '" + params_.name + "': backward before forward");
  }
  const Grid& input = cache.input;
  if (upstream.height() != input.height() || upstream.width() != input.width() ||
      upstream.channels() != out_channels_) {
    throw ConfigError("linear layer '" + params_.name + "': upstream shape mismatch");
  }
  Grid dinput(input.height(), input.width(), in_channels_);
  double* gw = params_.grad_weights.data();
  double* gb = params_.grad_biases.data();
  const double* w = params_.weights.data();
  for (int h = 0; h < upstream.height(); ++h) {
    for (int x = 0; x < upstream.width(); ++x) {
      const double* up_cell = upstream.cell(h, x);
      const double* in_cell = input.cell(h, x);
      double* din_cell = dinput.cell(h, x);
      for (int oc = 0; oc < out_channels_; ++oc) {
        const double u = up_cell[oc];
        if (u == 0.0) continue;
        const double* row = w + static_cast<std::size_t>(oc) * in_channels_;
        double* grow = gw + static_cast<std::size_t>(oc) * in_channels_;
        gb[oc] += u;
        for (int ic = 0; ic < in_channels_; ++ic) {
          grow[ic] += u * in_cell[ic];
          din_cell[ic] += u * row[ic];
        }
      }
    }
  }
  return dinput;
}

Grid LinearLayer::forward(const Grid& input) { return forward(input, own_cache_); }
Grid LinearLayer::backward(const Grid& upstream) { return backward(upstream, own_cache_); }

ChannelNormLayer::ChannelNormLayer(std::string name, int channels, int groups)
    : channels_(channels),
      groups_(groups),
      params_(std::move(name), static_cast<std::size_t>(channels),
              static_cast<std::size_t>(channels)) {
  if (groups <= 0 || channels <= 0 || channels % groups != 0) {
    throw ConfigError("channel norm '" + params_.name + "': channels (" +
                      std::to_string(channels) + ") not divisible by groups (" +
                      std::to_string(groups) + ")");
  }
  std::fill(params_.weights.begin(), params_.weights.end(), 1.0);  // scale
  std::fill(params_.biases.begin(), params_.biases.end(), 0.0);    // shift
}

Grid ChannelNormLayer::forward(const Grid& input, NormCache& cache) const {
  if (input.channels() != channels_) {
    throw ConfigError("channel norm '" + params_.name + "': channel mismatch");
  }
  const int group_size = channels_ / groups_;
  Grid out(input.height(), input.width(), channels_);
  cache.normalized = Grid(input.height(), input.width(), channels_);
  cache.inv_std.assign(static_cast<std::size_t>(input.height()) * input.width() * groups_, 0.0);

  std::size_t stat_idx = 0;
  for (int h = 0; h < input.height(); ++h) {
    for (int x = 0; x < input.width(); ++x) {
      const double* in_cell = input.cell(h, x);
      double* norm_cell = cache.normalized.cell(h, x);
      double* out_cell = out.cell(h, x);
      for (int g = 0; g < groups_; ++g, ++stat_idx) {
        const int c0 = g * group_size;
        double mean = 0.0;
        for (int c = 0; c < group_size; ++c) mean += in_cell[c0 + c];
        mean /= group_size;
        double var = 0.0;
        for (int c = 0; c < group_size; ++c) {
          const double d = in_cell[c0 + c] - mean;
          var += d * d;
        }
        var /= group_size;
        const double inv_std = 1.0 / std::sqrt(var + kEpsilon);
        cache.inv_std[stat_idx] = inv_std;
        for (int c = 0; c < group_size; ++c) {
          const double normalized = (in_cell[c0 + c] - mean) * inv_std;
          norm_cell[c0 + c] = normalized;
          out_cell[c0 + c] = params_.weights[c0 + c] * normalized + params_.biases[c0 + c];
        }
      }
    }
  }
  cache.valid = true;
  return out;
}

Grid ChannelNormLayer::backward(const Grid& upstream, const NormCache& cache) {
  if (!cache.valid) {
    throw StateError("channel norm '" + params_.name + "': backward before forward");
  }
  if (!upstream.same_shape(cache.normalized)) {
    throw ConfigError("channel norm '" + params_.name + "': upstream shape mismatch");
  }
  const int group_size = channels_ / groups_;
  Grid dinput(upstream.height(), upstream.width(), channels_);

  std::size_t stat_idx = 0;
  for (int h = 0; h < upstream.height(); ++h) {
    for (int x = 0; x < upstream.width(); ++x) {
      const double* up_cell = upstream.cell(h, x);
      const double* norm_cell = cache.normalized.cell(h, x);
      double* din_cell = dinput.cell(h, x);
      for (int g = 0; g < groups_; ++g, ++stat_idx) {
        const int c0 = g * group_size;
        const double inv_std = cache.inv_std[stat_idx];
        double sum_dn = 0.0;
        double sum_dn_n = 0.0;
        for (int c = 0; c < group_size; ++c) {
          const int ch = c0 + c;
          const double dn = up_cell[ch] * params_.weights[ch];
          params_.grad_weights[ch] += up_cell[ch] * norm_cell[ch];
          params_.grad_biases[ch] += up_cell[ch];
          sum_dn += dn;
          sum_dn_n += dn * norm_cell[ch];
        }
        const double inv_n = 1.0 / group_size;
        for (int c = 0; c < group_size; ++c) {
          const int ch = c0 + c;
          const double dn = up_cell[ch] * params_.weights[ch];
          din_cell[ch] = inv_std * (dn - inv_n * sum_dn - norm_cell[ch] * inv_n * sum_dn_n);
        }
      }
    }
  }
  return dinput;
}

Grid ChannelNormLayer::forward(const Grid& input) { return forward(input, own_cache_); }
Grid ChannelNormLayer::backward(const Grid& upstream) { return backward(upstream, own_cache_); }

Grid ReluLayer::forward_static(const Grid& input, ReluCache& cache) {
  Grid out = input;
  for (double& v : out.values()) {
    if (v < 0.0) v = 0.0;
  }
  cache.input = input;
  cache.valid = true;
  return out;
}

Grid ReluLayer::backward_static(const Grid& upstream, const ReluCache& cache) {
  if (!cache.valid) throw StateError("relu: backward before forward");
  if (!upstream.same_shape(cache.input)) {
    throw ConfigError("relu: upstream shape mismatch");
  }
  Grid dinput = upstream;
  const std::vector<double>& in = cache.input.values();
  std::vector<double>& din = dinput.values();
  for (std::size_t i = 0; i < din.size(); ++i) {
    if (in[i] <= 0.0) din[i] = 0.0;
  }
  return dinput;
}

Grid ReluLayer::forward(const Grid& input) { return forward_static(input, own_cache_); }
Grid ReluLayer::backward(const Grid& upstream) { return backward_static(upstream, own_cache_); }

}  // namespace boostdet
