#include <algorithm>
#include <cmath>
#include <functional>

#include "json.hpp"

#include "boostdet/gradcheck.hpp"
#include "boostdet/layers.hpp"
#include "boostdet/losses.hpp"
#include "boostdet/rng.hpp"
#include "boostdet/runner.hpp"

namespace boostdet {

using nlohmann::json;

namespace {

constexpr double kStep = 1e-5;

struct CheckAccumulator {
  double worst = 0.0;
  int points = 0;

  void add(double error, int n_points) {
    worst = std::max(worst, error);
    points += n_points;
  }
};

// random box with positive extents
Box random_box(Rng& rng, double center_span, double min_size, double max_size) {
  const double w = rng.uniform(min_size, max_size);
  const double h = rng.uniform(min_size, max_size);
  const double cx = rng.uniform(-center_span, center_span);
  const double cy = rng.uniform(-center_span, center_span);
  return Box::from_center(cx, cy, w, h);
}

// interior configuration for IoU losses: overlap away from boundary switches
struct IouCase {
  Box anchor;
  Box gt;
  Delta delta;
};

IouCase sample_iou_case(Rng& rng) {
  while (true) {
    IouCase c;
    c.anchor = random_box(rng, 10.0, 4.0, 20.0);
    const double jitter = 0.25;
    c.gt = Box::from_center(c.anchor.cx() + rng.uniform(-jitter, jitter) * c.anchor.width(),
                            c.anchor.cy() + rng.uniform(-jitter, jitter) * c.anchor.height(),
                            c.anchor.width() * std::exp(rng.uniform(-0.3, 0.3)),
                            c.anchor.height() * std::exp(rng.uniform(-0.3, 0.3)));
    c.delta.tx = rng.uniform(-0.2, 0.2);
    c.delta.ty = rng.uniform(-0.2, 0.2);
    c.delta.tw = rng.uniform(-0.2, 0.2);
    c.delta.th = rng.uniform(-0.2, 0.2);
    const Box pred = decode(c.delta, c.anchor);
    const double g = iou(pred, c.gt);
    if (g < 0.05 || g > 0.95) continue;
    // keep clear of intersection-owner switches
    const double margin = 5e-3 * std::max(pred.width(), pred.height());
    if (std::fabs(pred.x1 - c.gt.x1) < margin || std::fabs(pred.x2 - c.gt.x2) < margin ||
        std::fabs(pred.y1 - c.gt.y1) < margin || std::fabs(pred.y2 - c.gt.y2) < margin) {
      continue;
    }
    return c;
  }
}

std::vector<double> delta_to_vec(const Delta& d) { return {d.tx, d.ty, d.tw, d.th}; }
Delta vec_to_delta(const std::vector<double>& v) { return Delta{v[0], v[1], v[2], v[3]}; }

GradCheckEntry finish(const std::string& name, const CheckAccumulator& acc, double tolerance) {
  GradCheckEntry entry;
  entry.name = name;
  entry.points = acc.points;
  entry.worst_rel_error = acc.worst;
  entry.pass = acc.worst <= tolerance;
  return entry;
}

}  // namespace

GradCheckReport run_grad_check(std::uint64_t seed, int points_per_check) {
  GradCheckReport report;
  report.tolerance = 1e-4;
  Rng rng(seed);

  {  // focal loss, gradient w.r.t. the probability
    CheckAccumulator acc;
    const double gammas[] = {0.0, 0.5, 1.0, 2.0, 3.0};
    for (int i = 0; i < points_per_check; ++i) {
      FocalConfig cfg;
      cfg.alpha = rng.uniform(0.1, 0.9);
      cfg.gamma = gammas[rng.uniform_index(5)];
      const int y = static_cast<int>(rng.uniform_index(2));
      const std::vector<double> point{rng.uniform(0.05, 0.95)};
      const ScalarLoss loss = focal_loss(point[0], y, cfg);
      const double err = finite_diff_check(
          [&](const std::vector<double>& p) { return focal_loss(p[0], y, cfg).value; }, point,
          {loss.grad}, kStep);
      acc.add(err, 1);
    }
    report.entries.push_back(finish("focal_loss", acc, report.tolerance));
  }

  {  // objectness loss over anchor batches, both normalizations
    CheckAccumulator acc;
    FocalConfig cfg;
    for (int i = 0; acc.points < 2 * points_per_check; ++i) {
      const int n = 25;
      std::vector<double> point(n);
      std::vector<int> labels(n);
      for (int k = 0; k < n; ++k) {
        point[k] = rng.uniform(0.05, 0.95);
        labels[k] = static_cast<int>(rng.uniform_index(2));
      }
      for (ObjectnessNormalization norm :
           {ObjectnessNormalization::all_anchors, ObjectnessNormalization::positives}) {
        const VectorLoss loss = objectness_loss(point, labels, cfg, norm);
        const double err = finite_diff_check(
            [&](const std::vector<double>& p) {
              return objectness_loss(p, labels, cfg, norm).value;
            },
            point, loss.grads, kStep);
        acc.add(err, n);
      }
    }
    report.entries.push_back(finish("objectness_loss", acc, report.tolerance));
  }

  {  // improved IoU loss, gradient w.r.t. the predicted encoding
    CheckAccumulator acc;
    for (int i = 0; i < points_per_check; ++i) {
      const IouCase c = sample_iou_case(rng);
      const BoxDeltaLoss loss = improved_iou_loss(c.delta, c.gt, c.anchor);
      const double err = finite_diff_check(
          [&](const std::vector<double>& p) {
            return improved_iou_loss(vec_to_delta(p), c.gt, c.anchor).value;
          },
          delta_to_vec(c.delta), delta_to_vec(loss.grad), kStep);
      acc.add(err, 4);
    }
    report.entries.push_back(finish("improved_iou_loss", acc, report.tolerance));
  }

  {  // fast IoU loss: the IoU^eta weight is stop-gradient, so differencing
     // runs against the frozen-weight objective
    CheckAccumulator acc;
    FiouConfig cfg;
    cfg.eta = 2.0;
    for (int i = 0; i < points_per_check; ++i) {
      const IouCase c = sample_iou_case(rng);
      const double frozen_weight =
          std::pow(iou(decode(c.delta, c.anchor), c.gt), cfg.eta);
      const BoxDeltaLoss loss = fast_iou_loss(c.delta, c.gt, c.anchor, cfg);
      const double err = finite_diff_check(
          [&](const std::vector<double>& p) {
            return frozen_weight * improved_iou_loss(vec_to_delta(p), c.gt, c.anchor).value;
          },
          delta_to_vec(c.delta), delta_to_vec(loss.grad), kStep);
      acc.add(err, 4);
    }
    report.entries.push_back(finish("fast_iou_loss", acc, report.tolerance));
  }

  {  // IoU-prediction cross entropy
    CheckAccumulator acc;
    for (int i = 0; i < points_per_check; ++i) {
      const double target = rng.uniform(0.0, 1.0);
      const std::vector<double> point{rng.uniform(0.05, 0.95)};
      const ScalarLoss loss = iou_pred_loss(point[0], target);
      const double err = finite_diff_check(
          [&](const std::vector<double>& p) { return iou_pred_loss(p[0], target).value; },
          point, {loss.grad}, kStep);
      acc.add(err, 1);
    }
    report.entries.push_back(finish("iou_pred_loss", acc, report.tolerance));
  }

  {  // R-CNN L1 regression, off the kinks
    CheckAccumulator acc;
    for (int i = 0; acc.points < points_per_check; ++i) {
      const int k = 2;
      std::vector<Delta> preds(k), targets(k);
      std::vector<double> point;
      for (int j = 0; j < k; ++j) {
        targets[j] = Delta{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1),
                           rng.uniform(-1, 1)};
        auto off = [&] {
          const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
          return sign * rng.uniform(0.01, 0.5);
        };
        preds[j] = Delta{targets[j].tx + off(), targets[j].ty + off(), targets[j].tw + off(),
                         targets[j].th + off()};
        for (double v : delta_to_vec(preds[j])) point.push_back(v);
      }
      const BoxDeltaBatchLoss loss = rcnn_reg_loss(preds, targets);
      std::vector<double> grads;
      for (const Delta& g : loss.grads) {
        for (double v : delta_to_vec(g)) grads.push_back(v);
      }
      const double err = finite_diff_check(
          [&](const std::vector<double>& p) {
            std::vector<Delta> probe(k);
            for (int j = 0; j < k; ++j) {
              probe[j] = Delta{p[4 * j], p[4 * j + 1], p[4 * j + 2], p[4 * j + 3]};
            }
            return rcnn_reg_loss(probe, targets).value;
          },
          point, grads, kStep);
      acc.add(err, 4 * k);
    }
    report.entries.push_back(finish("rcnn_reg_loss", acc, report.tolerance));
  }

  // weighted classification losses, gradient w.r.t. the logits
  for (const bool focal : {false, true}) {
    CheckAccumulator acc;
    FocalConfig focal_cfg;
    for (int i = 0; acc.points < points_per_check; ++i) {
      const int k = 3;
      const int classes = 4;
      std::vector<double> logits(k * classes);
      std::vector<int> labels(k);
      std::vector<double> weights(k);
      for (int j = 0; j < k; ++j) {
        labels[j] = static_cast<int>(rng.uniform_index(classes));
        weights[j] = rng.uniform(0.2, 2.0);
        for (int c = 0; c < classes; ++c) logits[j * classes + c] = rng.normal();
      }
      auto probs_of = [&](const std::vector<double>& z) {
        std::vector<std::vector<double>> rows(k, std::vector<double>(classes));
        for (int j = 0; j < k; ++j) {
          double mx = z[j * classes];
          for (int c = 1; c < classes; ++c) mx = std::max(mx, z[j * classes + c]);
          double sum = 0.0;
          for (int c = 0; c < classes; ++c) {
            rows[j][c] = std::exp(z[j * classes + c] - mx);
            sum += rows[j][c];
          }
          for (int c = 0; c < classes; ++c) rows[j][c] /= sum;
        }
        return rows;
      };
      auto value_of = [&](const std::vector<double>& z) {
        const auto rows = probs_of(z);
        return focal ? weighted_softmax_focal_loss(rows, labels, weights, focal_cfg).value
                     : weighted_ce_loss(rows, labels, weights).value;
      };
      const auto rows = probs_of(logits);
      const CeLoss loss = focal
                              ? weighted_softmax_focal_loss(rows, labels, weights, focal_cfg)
                              : weighted_ce_loss(rows, labels, weights);
      std::vector<double> grads;
      for (const std::vector<double>& g : loss.logit_grads) {
        grads.insert(grads.end(), g.begin(), g.end());
      }
      const double err = finite_diff_check(
          [&](const std::vector<double>& z) { return value_of(z); }, logits, grads, kStep);
      acc.add(err, k * classes);
    }
    report.entries.push_back(
        finish(focal ? "weighted_softmax_focal_loss" : "weighted_ce_loss", acc,
               report.tolerance));
  }

  {  // linear layer: inputs and parameters against a random projection loss
    CheckAccumulator acc;
    for (int i = 0; i < 20 && acc.points < 4 * points_per_check; ++i) {
      const int in_ch = 1 + static_cast<int>(rng.uniform_index(4));
      const int out_ch = 1 + static_cast<int>(rng.uniform_index(4));
      const int h = 1 + static_cast<int>(rng.uniform_index(2));
      const int w = 1 + static_cast<int>(rng.uniform_index(2));
      const std::size_t n_w = static_cast<std::size_t>(in_ch) * out_ch;
      const std::size_t n_in = static_cast<std::size_t>(h) * w * in_ch;
      std::vector<double> point(n_w + out_ch + n_in);
      for (double& v : point) v = rng.normal();
      Grid proj(h, w, out_ch);
      for (double& v : proj.values()) v = rng.normal();

      auto eval = [&](const std::vector<double>& p) {
        LinearLayer layer("check", in_ch, out_ch);
        std::copy(p.begin(), p.begin() + n_w, layer.params().weights.begin());
        std::copy(p.begin() + n_w, p.begin() + n_w + out_ch, layer.params().biases.begin());
        Grid input(h, w, in_ch);
        std::copy(p.begin() + n_w + out_ch, p.end(), input.values().begin());
        const Grid out = layer.apply(input);
        double loss = 0.0;
        for (std::size_t j = 0; j < out.values().size(); ++j) {
          loss += out.values()[j] * proj.values()[j];
        }
        return loss;
      };

      LinearLayer layer("check", in_ch, out_ch);
      std::copy(point.begin(), point.begin() + n_w, layer.params().weights.begin());
      std::copy(point.begin() + n_w, point.begin() + n_w + out_ch,
                layer.params().biases.begin());
      Grid input(h, w, in_ch);
      std::copy(point.begin() + n_w + out_ch, point.end(), input.values().begin());
      LinearCache cache;
      layer.forward(input, cache);
      const Grid dinput = layer.backward(proj, cache);
      std::vector<double> grads;
      grads.insert(grads.end(), layer.params().grad_weights.begin(),
                   layer.params().grad_weights.end());
      grads.insert(grads.end(), layer.params().grad_biases.begin(),
                   layer.params().grad_biases.end());
      grads.insert(grads.end(), dinput.values().begin(), dinput.values().end());

      const double err = finite_diff_check(eval, point, grads, kStep);
      acc.add(err, static_cast<int>(point.size()));
    }
    report.entries.push_back(finish("linear_layer", acc, report.tolerance));
  }

  {  // channel norm layer
    CheckAccumulator acc;
    for (int i = 0; i < 20 && acc.points < 4 * points_per_check; ++i) {
      const int group_size = 2 + static_cast<int>(rng.uniform_index(3));
      const int groups = 1 + static_cast<int>(rng.uniform_index(2));
      const int channels = group_size * groups;
      const int h = 1 + static_cast<int>(rng.uniform_index(2));
      const int w = 1;
      const std::size_t n_in = static_cast<std::size_t>(h) * w * channels;
      std::vector<double> point(2 * channels + n_in);
      for (std::size_t j = 0; j < point.size(); ++j) point[j] = rng.normal();
      Grid proj(h, w, channels);
      for (double& v : proj.values()) v = rng.normal();

      auto eval = [&](const std::vector<double>& p) {
        ChannelNormLayer layer("check", channels, groups);
        std::copy(p.begin(), p.begin() + channels, layer.params().weights.begin());
        std::copy(p.begin() + channels, p.begin() + 2 * channels,
                  layer.params().biases.begin());
        Grid input(h, w, channels);
        std::copy(p.begin() + 2 * channels, p.end(), input.values().begin());
        NormCache cache;
        const Grid out = layer.forward(input, cache);
        double loss = 0.0;
        for (std::size_t j = 0; j < out.values().size(); ++j) {
          loss += out.values()[j] * proj.values()[j];
        }
        return loss;
      };

      ChannelNormLayer layer("check", channels, groups);
      std::copy(point.begin(), point.begin() + channels, layer.params().weights.begin());
      std::copy(point.begin() + channels, point.begin() + 2 * channels,
                layer.params().biases.begin());
      Grid input(h, w, channels);
      std::copy(point.begin() + 2 * channels, point.end(), input.values().begin());
      NormCache cache;
      layer.forward(input, cache);
      const Grid dinput = layer.backward(proj, cache);
      std::vector<double> grads;
      grads.insert(grads.end(), layer.params().grad_weights.begin(),
                   layer.params().grad_weights.end());
      grads.insert(grads.end(), layer.params().grad_biases.begin(),
                   layer.params().grad_biases.end());
      grads.insert(grads.end(), dinput.values().begin(), dinput.values().end());

      const double err = finite_diff_check(eval, point, grads, kStep);
      acc.add(err, static_cast<int>(point.size()));
    }
    report.entries.push_back(finish("channel_norm_layer", acc, report.tolerance));
  }

  {  // relu, off the kink
    CheckAccumulator acc;
    for (int i = 0; acc.points < points_per_check; ++i) {
      const int n = 8;
      std::vector<double> point(n);
      for (double& v : point) {
        const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
        v = sign * rng.uniform(0.01, 2.0);
      }
      std::vector<double> proj(n);
      for (double& v : proj) v = rng.normal();
      auto eval = [&](const std::vector<double>& p) {
        double loss = 0.0;
        for (int j = 0; j < n; ++j) loss += std::max(p[j], 0.0) * proj[j];
        return loss;
      };
      std::vector<double> grads(n);
      for (int j = 0; j < n; ++j) grads[j] = point[j] > 0.0 ? proj[j] : 0.0;
      const double err = finite_diff_check(eval, point, grads, kStep);
      acc.add(err, n);
    }
    report.entries.push_back(finish("relu", acc, report.tolerance));
  }

  report.all_pass = std::all_of(report.entries.begin(), report.entries.end(),
                                [](const GradCheckEntry& e) { return e.pass; });
  return report;
}

std::string grad_check_report_json(const GradCheckReport& report) {
  json checks = json::array();
  for (const GradCheckEntry& e : report.entries) {
    checks.push_back(json{{"name", e.name},
                          {"points", e.points},
                          {"worst_rel_error", e.worst_rel_error},
                          {"pass", e.pass}});
  }
  return json{{"tolerance", report.tolerance},
              {"all_pass", report.all_pass},
              {"checks", checks}}
      .dump(2);
}

}  // namespace boostdet
