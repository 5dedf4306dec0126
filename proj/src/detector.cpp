#include "boostdet/detector.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "json.hpp"

#include "boostdet/base64.hpp"
#include "boostdet/errors.hpp"
#include "boostdet/fusion.hpp"
#include "boostdet/rng.hpp"

namespace boostdet {

using nlohmann::json;

void PyramidConfig::validate() const {
  if (levels < 1) throw ConfigError("pyramid.levels must be >= 1");
  if (channels < 1) throw ConfigError("pyramid.channels must be >= 1");
  if (head_depth < 1) throw ConfigError("pyramid.head_depth must be >= 1");
  if (extra_levels < 0) throw ConfigError("pyramid.extra_levels must be >= 0");
  if (norm_groups < 1 || channels % norm_groups != 0) {
    throw ConfigError("pyramid.channels must be divisible by norm_groups");
  }
  if (rcnn_hidden < 1) throw ConfigError("pyramid.rcnn_hidden must be >= 1");
}

void RoiSampleConfig::validate() const {
  if (rois_per_scene < 1) throw ConfigError("roi.rois_per_scene must be >= 1");
  if (!(positive_fraction > 0.0) || positive_fraction > 1.0) {
    throw ConfigError("roi.positive_fraction must lie in (0,1]");
  }
  if (fg_iou_threshold < 0.0 || fg_iou_threshold > 1.0) {
    throw ConfigError("roi.fg_iou_threshold must lie in [0,1]");
  }
}

void RpnConfig::validate() const {
  if (objectness_sample_count < 1) {
    throw ConfigError("rpn.objectness_sample_count must be >= 1");
  }
  if (objectness_positive_fraction < 0.0 || objectness_positive_fraction > 1.0) {
    throw ConfigError("rpn.objectness_positive_fraction must lie in [0,1]");
  }
}

void ProposalCaps::validate() const {
  if (train_pre_nms_per_level < 1 || train_post_nms < 1 || infer_pre_nms_per_level < 1 ||
      infer_post_nms < 1) {
    throw ConfigError("proposal caps must be positive");
  }
  if (proposal_nms_threshold < 0.0 || proposal_nms_threshold > 1.0) {
    throw ConfigError("proposal NMS threshold must lie in [0,1]");
  }
}

void DetectionConfig::validate() const {
  if (nms_threshold < 0.0 || nms_threshold > 1.0) {
    throw ConfigError("detection.nms_threshold must lie in [0,1]");
  }
  if (score_floor < 0.0 || score_floor > 1.0) {
    throw ConfigError("detection.score_floor must lie in [0,1]");
  }
  if (max_keep_per_class < 1) throw ConfigError("detection.max_keep_per_class must be >= 1");
}

void DetectorConfig::validate() const {
  if (scene_channels < 1) throw ConfigError("scene_channels must be >= 1");
  if (num_classes < 1) throw ConfigError("num_classes must be >= 1");
  if (image_size < 1) throw ConfigError("image_size must be >= 1");
  pyramid.validate();
  anchors.validate();
  rpn.validate();
  roi.validate();
  focal.validate();
  fiou.validate();
  br.validate();
  loss_weights.validate();
  sgd.validate();
  proposals.validate();
  detection.validate();
  rcnn_focal.validate();

  const int total_levels = pyramid.levels + pyramid.extra_levels;
  if (static_cast<int>(anchors.strides.size()) < total_levels) {
    throw ConfigError("anchor strides must cover every pyramid level");
  }
  for (int l = 0; l + 1 < total_levels; ++l) {
    if (anchors.strides[l + 1] != 2.0 * anchors.strides[l]) {
      throw ConfigError("pyramid strides must double per level (2x-nested dims)");
    }
  }
  for (int l = 0; l < total_levels; ++l) {
    const double cells = image_size / anchors.strides[l];
    if (cells < 1.0 || cells != std::floor(cells)) {
      throw ConfigError("image_size must be divisible by every level stride");
    }
  }
}

Grid upsample2x(const Grid& input) {
  Grid out(input.height() * 2, input.width() * 2, input.channels());
  for (int h = 0; h < out.height(); ++h) {
    for (int w = 0; w < out.width(); ++w) {
      const double* src = input.cell(h / 2, w / 2);
      double* dst = out.cell(h, w);
      for (int c = 0; c < input.channels(); ++c) dst[c] = src[c];
    }
  }
  return out;
}

Grid upsample2x_backward(const Grid& upstream) {
  if (upstream.height() % 2 != 0 || upstream.width() % 2 != 0) {
    throw ConfigError("upsample2x_backward: dims must be even");
  }
  Grid out(upstream.height() / 2, upstream.width() / 2, upstream.channels());
  for (int h = 0; h < upstream.height(); ++h) {
    for (int w = 0; w < upstream.width(); ++w) {
      const double* src = upstream.cell(h, w);
      double* dst = out.cell(h / 2, w / 2);
      for (int c = 0; c < upstream.channels(); ++c) dst[c] += src[c];
    }
  }
  return out;
}

Grid downsample2x(const Grid& input) {
  if (input.height() % 2 != 0 || input.width() % 2 != 0) {
    throw ConfigError("downsample2x: dims must be even");
  }
  Grid out(input.height() / 2, input.width() / 2, input.channels());
  for (int h = 0; h < input.height(); ++h) {
    for (int w = 0; w < input.width(); ++w) {
      const double* src = input.cell(h, w);
      double* dst = out.cell(h / 2, w / 2);
      for (int c = 0; c < input.channels(); ++c) dst[c] += 0.25 * src[c];
    }
  }
  return out;
}

Grid downsample2x_backward(const Grid& upstream, int src_height, int src_width) {
  if (src_height != upstream.height() * 2 || src_width != upstream.width() * 2) {
    throw ConfigError("downsample2x_backward: source dims must be twice the upstream dims");
  }
  Grid out(src_height, src_width, upstream.channels());
  for (int h = 0; h < src_height; ++h) {
    for (int w = 0; w < src_width; ++w) {
      const double* src = upstream.cell(h / 2, w / 2);
      double* dst = out.cell(h, w);
      for (int c = 0; c < upstream.channels(); ++c) dst[c] = 0.25 * src[c];
    }
  }
  return out;
}

namespace {

std::vector<LevelShape> make_level_shapes(const DetectorConfig& cfg) {
  std::vector<LevelShape> shapes;
  const int total = cfg.pyramid.levels + cfg.pyramid.extra_levels;
  for (int l = 0; l < total; ++l) {
    LevelShape s;
    s.stride = cfg.anchors.strides[l];
    s.height = static_cast<int>(cfg.image_size / s.stride);
    s.width = s.height;
    shapes.push_back(s);
  }
  return shapes;
}

std::vector<LinearLayer> make_per_level(const std::string& prefix, int count, int channels) {
  std::vector<LinearLayer> layers;
  layers.reserve(count);
  for (int i = 0; i < count; ++i) {
    layers.emplace_back(prefix + std::to_string(i), channels, channels);
  }
  return layers;
}

}  // namespace

Detector::Detector(const DetectorConfig& config)
    : config_(config),
      level_shapes_((config.validate(), make_level_shapes(config))),
      anchor_grid_(generate_anchors(level_shapes_, config.anchors)),
      stem_("backbone.stem", config.scene_channels, config.pyramid.channels),
      lateral_(make_per_level("neck.lateral", config.pyramid.levels, config.pyramid.channels)),
      bottom_up_(make_per_level("neck.bottom_up", config.pyramid.levels, config.pyramid.channels)),
      extra_(make_per_level("neck.extra", config.pyramid.extra_levels, config.pyramid.channels)),
      obj_head_("rpn.obj", config.pyramid.channels, config.anchors.anchors_per_cell()),
      iou_head_("rpn.iou", config.pyramid.channels, config.anchors.anchors_per_cell()),
      reg_head_("rpn.reg", config.pyramid.channels, 4 * config.anchors.anchors_per_cell()),
      rcnn_fc1_("rcnn.fc1", 4 * config.pyramid.channels, config.pyramid.rcnn_hidden),
      rcnn_fc2_("rcnn.fc2", config.pyramid.rcnn_hidden, config.pyramid.rcnn_hidden),
      rcnn_cls_("rcnn.cls", config.pyramid.rcnn_hidden, config.num_classes + 1),
      rcnn_reg_("rcnn.reg", config.pyramid.rcnn_hidden, 4) {
  for (int d = 0; d < config.pyramid.head_depth; ++d) {
    trunk_linear_.emplace_back("rpn.trunk.linear" + std::to_string(d),
                               config.pyramid.channels, config.pyramid.channels);
    trunk_norm_.emplace_back("rpn.trunk.norm" + std::to_string(d),
                             config.pyramid.channels, config.pyramid.norm_groups);
  }
}

std::vector<LayerParams*> Detector::all_params() {
  std::vector<LayerParams*> out;
  out.push_back(&stem_.params());
  for (LinearLayer& l : lateral_) out.push_back(&l.params());
  for (LinearLayer& l : bottom_up_) out.push_back(&l.params());
  for (LinearLayer& l : extra_) out.push_back(&l.params());
  for (LinearLayer& l : trunk_linear_) out.push_back(&l.params());
  for (ChannelNormLayer& l : trunk_norm_) out.push_back(&l.params());
  out.push_back(&obj_head_.params());
  out.push_back(&iou_head_.params());
  out.push_back(&reg_head_.params());
  out.push_back(&rcnn_fc1_.params());
  out.push_back(&rcnn_fc2_.params());
  out.push_back(&rcnn_cls_.params());
  out.push_back(&rcnn_reg_.params());
  return out;
}

std::vector<const LayerParams*> Detector::all_params() const {
  std::vector<const LayerParams*> out;
  for (LayerParams* p : const_cast<Detector*>(this)->all_params()) out.push_back(p);
  return out;
}

void Detector::zero_grads() {
  for (LayerParams* p : all_params()) p->zero_grad();
}

void Detector::init_params(Rng& rng) {
  stem_.init(rng);
  for (LinearLayer& l : lateral_) l.init(rng);
  for (LinearLayer& l : bottom_up_) l.init(rng);
  for (LinearLayer& l : extra_) l.init(rng);
  for (LinearLayer& l : trunk_linear_) l.init(rng);
  obj_head_.init(rng);
  iou_head_.init(rng);
  reg_head_.init(rng);
  rcnn_fc1_.init(rng);
  rcnn_fc2_.init(rng);
  rcnn_cls_.init(rng);
  rcnn_reg_.init(rng);
  // focal-head bias trick: early objectness ~= 0.01 everywhere
  const double pi = 0.01;
  const double bias = -std::log((1.0 - pi) / pi);
  std::fill(obj_head_.params().biases.begin(), obj_head_.params().biases.end(), bias);
}

struct Detector::ForwardPass {
  LinearCache stem_cache;
  std::vector<Grid> pool_chain;  // stem output plus every pooled grid down to level 0
  std::vector<Grid> backbone;    // per base level

  std::vector<LinearCache> lateral_cache;
  std::vector<LinearCache> bottom_up_cache;
  std::vector<LinearCache> extra_cache;
  std::vector<Grid> p_levels;
  std::vector<Grid> extra_pre_pool;
  std::vector<Grid> q_levels;  // base + extra levels

  std::vector<std::vector<LinearCache>> trunk_lin_cache;
  std::vector<std::vector<NormCache>> trunk_norm_cache;
  std::vector<std::vector<ReluCache>> trunk_relu_cache;
  std::vector<LinearCache> obj_cache;
  std::vector<LinearCache> iou_cache;
  std::vector<LinearCache> reg_cache;
  std::vector<Grid> obj_maps;
  std::vector<Grid> iou_maps;
  std::vector<Grid> reg_maps;
};

void Detector::run_forward(const Grid& features, ForwardPass& pass) const {
  if (features.height() != config_.image_size || features.width() != config_.image_size ||
      features.channels() != config_.scene_channels) {
    throw ConfigError("detector: scene grid does not match the configured shape");
  }
  const int levels = config_.pyramid.levels;
  const int total_levels = levels + config_.pyramid.extra_levels;

  // stem, then average-pool chain down to the first pyramid level
  Grid current = stem_.forward(features, pass.stem_cache);
  pass.pool_chain.clear();
  pass.pool_chain.push_back(current);
  while (current.height() > level_shapes_[0].height) {
    current = downsample2x(current);
    pass.pool_chain.push_back(current);
  }
  pass.backbone.clear();
  pass.backbone.push_back(current);
  for (int l = 1; l < levels; ++l) {
    pass.backbone.push_back(downsample2x(pass.backbone.back()));
  }

  // top-down path
  pass.lateral_cache.assign(levels, LinearCache{});
  pass.p_levels.assign(levels, Grid{});
  for (int l = levels - 1; l >= 0; --l) {
    Grid p = lateral_[l].forward(pass.backbone[l], pass.lateral_cache[l]);
    if (l + 1 < levels) {
      const Grid up = upsample2x(pass.p_levels[l + 1]);
      for (std::size_t i = 0; i < p.values().size(); ++i) p.values()[i] += up.values()[i];
    }
    pass.p_levels[l] = std::move(p);
  }

  // bottom-up path
  pass.bottom_up_cache.assign(levels, LinearCache{});
  pass.q_levels.assign(total_levels, Grid{});
  for (int l = 0; l < levels; ++l) {
    Grid q = bottom_up_[l].forward(pass.p_levels[l], pass.bottom_up_cache[l]);
    if (l > 0) {
      const Grid down = downsample2x(pass.q_levels[l - 1]);
      for (std::size_t i = 0; i < q.values().size(); ++i) q.values()[i] += down.values()[i];
    }
    pass.q_levels[l] = std::move(q);
  }

  // strided maps for the extra top levels
  pass.extra_cache.assign(extra_.size(), LinearCache{});
  pass.extra_pre_pool.assign(extra_.size(), Grid{});
  for (std::size_t e = 0; e < extra_.size(); ++e) {
    const Grid& source = pass.q_levels[levels + static_cast<int>(e) - 1];
    pass.extra_pre_pool[e] = extra_[e].forward(source, pass.extra_cache[e]);
    pass.q_levels[levels + e] = downsample2x(pass.extra_pre_pool[e]);
  }

  // shared RPN trunk + heads per level
  const int depth = config_.pyramid.head_depth;
  pass.trunk_lin_cache.assign(total_levels, std::vector<LinearCache>(depth));
  pass.trunk_norm_cache.assign(total_levels, std::vector<NormCache>(depth));
  pass.trunk_relu_cache.assign(total_levels, std::vector<ReluCache>(depth));
  pass.obj_cache.assign(total_levels, LinearCache{});
  pass.iou_cache.assign(total_levels, LinearCache{});
  pass.reg_cache.assign(total_levels, LinearCache{});
  pass.obj_maps.assign(total_levels, Grid{});
  pass.iou_maps.assign(total_levels, Grid{});
  pass.reg_maps.assign(total_levels, Grid{});
  for (int l = 0; l < total_levels; ++l) {
    Grid t = pass.q_levels[l];
    for (int d = 0; d < depth; ++d) {
      t = trunk_linear_[d].forward(t, pass.trunk_lin_cache[l][d]);
      t = trunk_norm_[d].forward(t, pass.trunk_norm_cache[l][d]);
      t = ReluLayer::forward_static(t, pass.trunk_relu_cache[l][d]);
    }
    pass.obj_maps[l] = obj_head_.forward(t, pass.obj_cache[l]);
    pass.iou_maps[l] = iou_head_.forward(t, pass.iou_cache[l]);
    pass.reg_maps[l] = reg_head_.forward(t, pass.reg_cache[l]);
  }
}

std::vector<ScoredAnchor> Detector::score_anchors(const ForwardPass& pass) const {
  std::vector<ScoredAnchor> out;
  out.reserve(anchor_grid_.size());
  for (std::size_t i = 0; i < anchor_grid_.size(); ++i) {
    const Anchor& a = anchor_grid_[i];
    ScoredAnchor s;
    s.anchor = a.box;
    s.level = a.level;
    s.anchor_index = static_cast<int>(i);
    s.objectness = sigmoid(pass.obj_maps[a.level].at(a.row, a.col, a.shape_index));
    if (config_.rpn.use_iou_prior) {
      s.iou_pred = sigmoid(pass.iou_maps[a.level].at(a.row, a.col, a.shape_index));
      s.prior = object_prior(s.objectness, s.iou_pred);
    } else {
      s.iou_pred = 0.0;
      s.prior = s.objectness;
    }
    const Grid& reg = pass.reg_maps[a.level];
    s.delta.tx = reg.at(a.row, a.col, 4 * a.shape_index + 0);
    s.delta.ty = reg.at(a.row, a.col, 4 * a.shape_index + 1);
    s.delta.tw = reg.at(a.row, a.col, 4 * a.shape_index + 2);
    s.delta.th = reg.at(a.row, a.col, 4 * a.shape_index + 3);
    out.push_back(s);
  }
  return out;
}

std::vector<double> Detector::extract_roi(const std::vector<Grid>& q_levels, const Box& box,
                                          RoiPool* pool) const {
  const int total_levels = static_cast<int>(q_levels.size());
  const double base0 = config_.anchors.base_sizes[0];
  const double scale = std::sqrt(std::max(box.area(), 1e-12));
  int level = static_cast<int>(std::floor(std::log2(scale / base0)));
  level = std::clamp(level, 0, total_levels - 1);
  const double stride = config_.anchors.strides[level];
  const Grid& g = q_levels[level];
  const int channels = g.channels();

  const double lx1 = box.x1 / stride;
  const double ly1 = box.y1 / stride;
  const double lw = (box.x2 - box.x1) / stride;
  const double lh = (box.y2 - box.y1) / stride;

  std::vector<double> out(4 * channels, 0.0);
  if (pool) {
    pool->level = level;
    pool->taps.clear();
  }
  for (int bi = 0; bi < 2; ++bi) {
    for (int bj = 0; bj < 2; ++bj) {
      const int bin = bi * 2 + bj;
      const double by1 = ly1 + bi * lh / 2.0;
      const double by2 = ly1 + (bi + 1) * lh / 2.0;
      const double bx1 = lx1 + bj * lw / 2.0;
      const double bx2 = lx1 + (bj + 1) * lw / 2.0;
      const int r0 = std::clamp(static_cast<int>(std::floor(by1)), 0, g.height() - 1);
      const int r1 = std::clamp(static_cast<int>(std::ceil(by2)), 1, g.height());
      const int c0 = std::clamp(static_cast<int>(std::floor(bx1)), 0, g.width() - 1);
      const int c1 = std::clamp(static_cast<int>(std::ceil(bx2)), 1, g.width());
      double total = 0.0;
      std::vector<std::pair<std::pair<int, int>, double>> covered;
      for (int r = r0; r < r1; ++r) {
        const double oy = std::min<double>(r + 1, by2) - std::max<double>(r, by1);
        if (oy <= 0.0) continue;
        for (int c = c0; c < c1; ++c) {
          const double ox = std::min<double>(c + 1, bx2) - std::max<double>(c, bx1);
          if (ox <= 0.0) continue;
          covered.push_back({{r, c}, oy * ox});
          total += oy * ox;
        }
      }
      if (covered.empty() || total <= 0.0) {
        throw InputError("extract_roi: box does not cover any level cell");
      }
      for (const auto& [rc, area] : covered) {
        const double weight = area / total;
        const double* cell = g.cell(rc.first, rc.second);
        for (int ch = 0; ch < channels; ++ch) out[bin * channels + ch] += weight * cell[ch];
        if (pool) pool->taps.push_back(RoiTap{rc.first, rc.second, bin, weight});
      }
    }
  }
  return out;
}

namespace {

struct RoiSample {
  std::vector<Box> boxes;
  std::vector<int> labels;  // 0..C-1 fg, C bg
  std::vector<bool> is_fg;
  std::vector<Delta> reg_targets;
  std::vector<double> priors;
};

// Deterministic Fisher-Yates shuffle.
void shuffle_indices(std::vector<int>& idx, Rng& rng) {
  for (std::size_t i = idx.size(); i > 1; --i) {
    std::swap(idx[i - 1], idx[rng.uniform_index(i)]);
  }
}

RoiSample sample_rois(const std::vector<Proposal>& proposals, const Scene& scene,
                      const RoiSampleConfig& cfg, int num_classes, Rng& rng) {
  std::vector<int> fg_candidates;
  std::vector<int> bg_candidates;
  std::vector<int> matched(proposals.size(), -1);
  for (std::size_t i = 0; i < proposals.size(); ++i) {
    double best = 0.0;
    int best_gt = -1;
    for (std::size_t g = 0; g < scene.spec.objects.size(); ++g) {
      const double v = iou(proposals[i].box, scene.spec.objects[g].box);
      if (v > best) {
        best = v;
        best_gt = static_cast<int>(g);
      }
    }
    if (best_gt >= 0 && best >= cfg.fg_iou_threshold) {
      matched[i] = best_gt;
      fg_candidates.push_back(static_cast<int>(i));
    } else {
      bg_candidates.push_back(static_cast<int>(i));
    }
  }
  shuffle_indices(fg_candidates, rng);
  shuffle_indices(bg_candidates, rng);

  const int want_fg = static_cast<int>(std::lround(cfg.rois_per_scene * cfg.positive_fraction));
  const int n_fg = std::min<int>(want_fg, static_cast<int>(fg_candidates.size()));
  const int n_bg = std::min<int>(cfg.rois_per_scene - n_fg, static_cast<int>(bg_candidates.size()));

  RoiSample out;
  for (int i = 0; i < n_fg; ++i) {
    const int p = fg_candidates[i];
    const SceneObject& obj = scene.spec.objects[matched[p]];
    out.boxes.push_back(proposals[p].box);
    out.labels.push_back(obj.class_id);
    out.is_fg.push_back(true);
    out.reg_targets.push_back(encode(obj.box, proposals[p].box));
    out.priors.push_back(proposals[p].prior);
  }
  for (int i = 0; i < n_bg; ++i) {
    const int p = bg_candidates[i];
    out.boxes.push_back(proposals[p].box);
    out.labels.push_back(num_classes);  // background class
    out.is_fg.push_back(false);
    out.reg_targets.push_back(Delta{});
    out.priors.push_back(proposals[p].prior);
  }
  return out;
}

std::vector<std::vector<double>> softmax_rows(const Grid& logits) {
  std::vector<std::vector<double>> rows(logits.height());
  for (int k = 0; k < logits.height(); ++k) {
    const double* cell = logits.cell(k, 0);
    double max_logit = cell[0];
    for (int c = 1; c < logits.channels(); ++c) max_logit = std::max(max_logit, cell[c]);
    double sum = 0.0;
    std::vector<double> row(logits.channels());
    for (int c = 0; c < logits.channels(); ++c) {
      row[c] = std::exp(cell[c] - max_logit);
      sum += row[c];
    }
    for (double& v : row) v /= sum;
    rows[k] = std::move(row);
  }
  return rows;
}

}  // namespace

TrainStepResult Detector::evaluate_losses(const Scene& scene, std::uint64_t step_seed,
                                          StepStructure* capture) {
  zero_grads();
  ForwardPass pass;
  run_forward(scene.features, pass);
  const std::vector<ScoredAnchor> scored = score_anchors(pass);

  std::vector<Box> gt_boxes;
  for (const SceneObject& obj : scene.spec.objects) gt_boxes.push_back(obj.box);
  const Assignment assignment = assign_anchors(anchor_grid_, gt_boxes, config_.anchors);

  Rng rng(derive_seed(step_seed, 7));

  StepStructure structure;
  structure.iou_branch_enabled = config_.rpn.use_iou_prior;

  // objectness participants
  std::vector<int> positives;
  for (std::size_t i = 0; i < anchor_grid_.size(); ++i) {
    if (assignment.labels[i] == AnchorLabel::positive) positives.push_back(static_cast<int>(i));
  }
  if (config_.rpn.focal_objectness) {
    structure.obj_indices.resize(anchor_grid_.size());
    std::iota(structure.obj_indices.begin(), structure.obj_indices.end(), 0);
    for (std::size_t i = 0; i < anchor_grid_.size(); ++i) {
      structure.obj_labels.push_back(assignment.labels[i] == AnchorLabel::positive ? 1 : 0);
    }
    structure.obj_denominator =
        config_.rpn.normalization == ObjectnessNormalization::positives
            ? static_cast<double>(std::max<std::size_t>(positives.size(), 1))
            : static_cast<double>(anchor_grid_.size());
  } else {
    std::vector<int> pos_pool = positives;
    std::vector<int> neg_pool;
    for (std::size_t i = 0; i < anchor_grid_.size(); ++i) {
      if (assignment.labels[i] == AnchorLabel::negative) neg_pool.push_back(static_cast<int>(i));
    }
    shuffle_indices(pos_pool, rng);
    shuffle_indices(neg_pool, rng);
    const int want_pos = static_cast<int>(
        std::lround(config_.rpn.objectness_sample_count * config_.rpn.objectness_positive_fraction));
    const int n_pos = std::min<int>(want_pos, static_cast<int>(pos_pool.size()));
    const int n_neg = std::min<int>(config_.rpn.objectness_sample_count - n_pos,
                                    static_cast<int>(neg_pool.size()));
    for (int i = 0; i < n_pos; ++i) {
      structure.obj_indices.push_back(pos_pool[i]);
      structure.obj_labels.push_back(1);
    }
    for (int i = 0; i < n_neg; ++i) {
      structure.obj_indices.push_back(neg_pool[i]);
      structure.obj_labels.push_back(0);
    }
    structure.obj_denominator = std::max<double>(structure.obj_indices.size(), 1.0);
  }

  // frozen per-positive targets and FIoU weights
  structure.pos_indices = positives;
  for (int i : positives) {
    const Box& gt = gt_boxes[assignment.matched_gt[i]];
    structure.pos_gt_boxes.push_back(gt);
    const Box decoded = decode(scored[i].delta, anchor_grid_[i].box);
    const double g = iou(decoded, gt);
    structure.fiou_weights.push_back(config_.fiou.eta == 0.0 ? 1.0
                                                             : std::pow(g, config_.fiou.eta));
    structure.iou_targets.push_back(g);
  }

  // proposals (training caps), then RoI sampling
  ProposalSelectConfig select_cfg;
  select_cfg.pre_nms_top_n_per_level = config_.proposals.train_pre_nms_per_level;
  select_cfg.nms_threshold = config_.proposals.proposal_nms_threshold;
  select_cfg.post_nms_top_n = config_.proposals.train_post_nms;
  select_cfg.image_w = scene.spec.grid_w;
  select_cfg.image_h = scene.spec.grid_h;
  const std::vector<Proposal> proposals = select_proposals(scored, select_cfg);
  const RoiSample rois =
      sample_rois(proposals, scene, config_.roi, config_.num_classes, rng);
  structure.roi_boxes = rois.boxes;
  structure.roi_labels = rois.labels;
  structure.roi_is_fg = rois.is_fg;
  structure.roi_reg_targets = rois.reg_targets;

  // R-CNN forward over the sampled RoIs
  const std::size_t k_total = rois.boxes.size();
  std::vector<RoiPool> roi_pools(k_total);
  Grid cls_probs_logits;
  LinearCache fc1_cache, fc2_cache, cls_cache, reg_cache;
  ReluCache relu1_cache, relu2_cache;
  std::vector<std::vector<double>> probs;
  Grid reg_out;
  if (k_total > 0) {
    Grid roi_grid(static_cast<int>(k_total), 1, 4 * config_.pyramid.channels);
    for (std::size_t k = 0; k < k_total; ++k) {
      const std::vector<double> feat = extract_roi(pass.q_levels, rois.boxes[k], &roi_pools[k]);
      std::copy(feat.begin(), feat.end(), roi_grid.cell(static_cast<int>(k), 0));
    }
    Grid h1 = ReluLayer::forward_static(rcnn_fc1_.forward(roi_grid, fc1_cache), relu1_cache);
    Grid h2 = ReluLayer::forward_static(rcnn_fc2_.forward(h1, fc2_cache), relu2_cache);
    cls_probs_logits = rcnn_cls_.forward(h2, cls_cache);
    reg_out = rcnn_reg_.forward(h2, reg_cache);
    probs = softmax_rows(cls_probs_logits);
  }

  // boosting weights from the current per-sample classification losses
  std::vector<double> ones(k_total, 1.0);
  CeLoss unweighted;
  if (k_total > 0) {
    unweighted = config_.rcnn_cls_loss == RcnnClsLossKind::cross_entropy
                     ? weighted_ce_loss(probs, rois.labels, ones)
                     : weighted_softmax_focal_loss(probs, rois.labels, ones, config_.rcnn_focal);
  }
  std::vector<BrSample> br_samples(k_total);
  for (std::size_t k = 0; k < k_total; ++k) {
    br_samples[k].prior = rois.priors[k];
    br_samples[k].is_foreground = rois.is_fg[k];
    br_samples[k].ce_loss = unweighted.per_sample_ce[k];
  }
  structure.roi_weights = br_weights(br_samples, config_.br);

  // ---- losses ----
  TrainStepResult result;
  result.positive_anchors = positives.size();
  result.sampled_rois = k_total;
  for (bool fg : rois.is_fg) {
    if (fg) ++result.foreground_rois;
  }

  // objectness
  std::vector<double> obj_grads(structure.obj_indices.size(), 0.0);
  {
    double sum = 0.0;
    for (std::size_t j = 0; j < structure.obj_indices.size(); ++j) {
      const ScalarLoss l =
          focal_loss(scored[structure.obj_indices[j]].objectness, structure.obj_labels[j],
                     config_.focal);
      sum += l.value;
      obj_grads[j] = l.grad / structure.obj_denominator;
    }
    result.components.obj_rpn =
        structure.obj_indices.empty() ? 0.0 : sum / structure.obj_denominator;
  }

  // localization + IoU prediction over positive anchors
  std::vector<Delta> loc_grads(positives.size());
  std::vector<double> iou_grads(positives.size(), 0.0);
  if (!positives.empty()) {
    const double inv_m = 1.0 / static_cast<double>(positives.size());
    double loc_sum = 0.0;
    double iou_sum = 0.0;
    for (std::size_t j = 0; j < positives.size(); ++j) {
      const int i = positives[j];
      const BoxDeltaLoss base =
          improved_iou_loss(scored[i].delta, structure.pos_gt_boxes[j], anchor_grid_[i].box);
      const double w = structure.fiou_weights[j];
      loc_sum += w * base.value;
      loc_grads[j].tx = w * base.grad.tx * inv_m;
      loc_grads[j].ty = w * base.grad.ty * inv_m;
      loc_grads[j].tw = w * base.grad.tw * inv_m;
      loc_grads[j].th = w * base.grad.th * inv_m;
      if (structure.iou_branch_enabled) {
        const ScalarLoss l = iou_pred_loss(scored[i].iou_pred, structure.iou_targets[j]);
        iou_sum += l.value;
        iou_grads[j] = l.grad * inv_m;
      }
    }
    result.components.loc_rpn = loc_sum * inv_m;
    result.components.iou_rpn = structure.iou_branch_enabled ? iou_sum * inv_m : 0.0;
  }

  // R-CNN classification and regression
  CeLoss cls_loss;
  BoxDeltaBatchLoss reg_loss;
  std::vector<int> fg_rows;
  if (k_total > 0) {
    cls_loss = config_.rcnn_cls_loss == RcnnClsLossKind::cross_entropy
                   ? weighted_ce_loss(probs, rois.labels, structure.roi_weights)
                   : weighted_softmax_focal_loss(probs, rois.labels, structure.roi_weights,
                                                 config_.rcnn_focal);
    result.components.cls = cls_loss.value;

    std::vector<Delta> fg_pred;
    std::vector<Delta> fg_target;
    for (std::size_t k = 0; k < k_total; ++k) {
      if (!rois.is_fg[k]) continue;
      fg_rows.push_back(static_cast<int>(k));
      const double* row = reg_out.cell(static_cast<int>(k), 0);
      fg_pred.push_back(Delta{row[0], row[1], row[2], row[3]});
      fg_target.push_back(rois.reg_targets[k]);
    }
    reg_loss = rcnn_reg_loss(fg_pred, fg_target);
    result.components.reg = reg_loss.value;
  }

  result.total = total_loss(result.components, config_.loss_weights);

  // ---- backward ----
  const int total_levels = config_.pyramid.levels + config_.pyramid.extra_levels;
  const double lambda_obj = config_.loss_weights.obj_rpn;
  const double lambda_loc = config_.loss_weights.loc_rpn;
  const double lambda_iou = config_.loss_weights.iou_rpn;
  const double lambda_reg = config_.loss_weights.reg;
  const double lambda_cls = config_.loss_weights.cls;

  std::vector<Grid> d_q(total_levels);
  for (int l = 0; l < total_levels; ++l) {
    d_q[l] = Grid(pass.q_levels[l].height(), pass.q_levels[l].width(),
                  pass.q_levels[l].channels());
  }

  // head output gradients as per-level maps
  std::vector<Grid> d_obj(total_levels), d_iou(total_levels), d_reg(total_levels);
  const int per_cell = config_.anchors.anchors_per_cell();
  for (int l = 0; l < total_levels; ++l) {
    d_obj[l] = Grid(level_shapes_[l].height, level_shapes_[l].width, per_cell);
    d_iou[l] = Grid(level_shapes_[l].height, level_shapes_[l].width, per_cell);
    d_reg[l] = Grid(level_shapes_[l].height, level_shapes_[l].width, 4 * per_cell);
  }
  for (std::size_t j = 0; j < structure.obj_indices.size(); ++j) {
    const Anchor& a = anchor_grid_[structure.obj_indices[j]];
    const double p = scored[structure.obj_indices[j]].objectness;
    d_obj[a.level].at(a.row, a.col, a.shape_index) += lambda_obj * obj_grads[j] * p * (1.0 - p);
  }
  for (std::size_t j = 0; j < positives.size(); ++j) {
    const Anchor& a = anchor_grid_[positives[j]];
    d_reg[a.level].at(a.row, a.col, 4 * a.shape_index + 0) += lambda_loc * loc_grads[j].tx;
    d_reg[a.level].at(a.row, a.col, 4 * a.shape_index + 1) += lambda_loc * loc_grads[j].ty;
    d_reg[a.level].at(a.row, a.col, 4 * a.shape_index + 2) += lambda_loc * loc_grads[j].tw;
    d_reg[a.level].at(a.row, a.col, 4 * a.shape_index + 3) += lambda_loc * loc_grads[j].th;
    if (structure.iou_branch_enabled) {
      const double g_hat = scored[positives[j]].iou_pred;
      d_iou[a.level].at(a.row, a.col, a.shape_index) +=
          lambda_iou * iou_grads[j] * g_hat * (1.0 - g_hat);
    }
  }

  // R-CNN backward into the q-levels
  if (k_total > 0) {
    Grid d_cls(static_cast<int>(k_total), 1, config_.num_classes + 1);
    for (std::size_t k = 0; k < k_total; ++k) {
      double* cell = d_cls.cell(static_cast<int>(k), 0);
      for (int c = 0; c <= config_.num_classes; ++c) {
        cell[c] = lambda_cls * cls_loss.logit_grads[k][c];
      }
    }
    Grid d_regout(static_cast<int>(k_total), 1, 4);
    for (std::size_t j = 0; j < fg_rows.size(); ++j) {
      double* cell = d_regout.cell(fg_rows[j], 0);
      cell[0] = lambda_reg * reg_loss.grads[j].tx;
      cell[1] = lambda_reg * reg_loss.grads[j].ty;
      cell[2] = lambda_reg * reg_loss.grads[j].tw;
      cell[3] = lambda_reg * reg_loss.grads[j].th;
    }
    Grid d_h2 = rcnn_cls_.backward(d_cls, cls_cache);
    {
      const Grid d_h2_reg = rcnn_reg_.backward(d_regout, reg_cache);
      for (std::size_t i = 0; i < d_h2.values().size(); ++i) {
        d_h2.values()[i] += d_h2_reg.values()[i];
      }
    }
    const Grid d_fc2_in = rcnn_fc2_.backward(ReluLayer::backward_static(d_h2, relu2_cache),
                                             fc2_cache);
    const Grid d_roi = rcnn_fc1_.backward(ReluLayer::backward_static(d_fc2_in, relu1_cache),
                                          fc1_cache);
    const int channels = config_.pyramid.channels;
    for (std::size_t k = 0; k < k_total; ++k) {
      const double* row = d_roi.cell(static_cast<int>(k), 0);
      Grid& target = d_q[roi_pools[k].level];
      for (const RoiTap& tap : roi_pools[k].taps) {
        double* cell = target.cell(tap.row, tap.col);
        const double* bin_grad = row + tap.bin * channels;
        for (int c = 0; c < channels; ++c) cell[c] += tap.weight * bin_grad[c];
      }
    }
  }

  // RPN trunk backward per level
  for (int l = 0; l < total_levels; ++l) {
    Grid d_t = obj_head_.backward(d_obj[l], pass.obj_cache[l]);
    {
      const Grid d_from_iou = iou_head_.backward(d_iou[l], pass.iou_cache[l]);
      const Grid d_from_reg = reg_head_.backward(d_reg[l], pass.reg_cache[l]);
      for (std::size_t i = 0; i < d_t.values().size(); ++i) {
        d_t.values()[i] += d_from_iou.values()[i] + d_from_reg.values()[i];
      }
    }
    for (int d = config_.pyramid.head_depth - 1; d >= 0; --d) {
      d_t = ReluLayer::backward_static(d_t, pass.trunk_relu_cache[l][d]);
      d_t = trunk_norm_[d].backward(d_t, pass.trunk_norm_cache[l][d]);
      d_t = trunk_linear_[d].backward(d_t, pass.trunk_lin_cache[l][d]);
    }
    for (std::size_t i = 0; i < d_q[l].values().size(); ++i) {
      d_q[l].values()[i] += d_t.values()[i];
    }
  }

  // extra strided levels, highest first
  const int levels = config_.pyramid.levels;
  for (int e = static_cast<int>(extra_.size()) - 1; e >= 0; --e) {
    const Grid d_pre = downsample2x_backward(d_q[levels + e], pass.extra_pre_pool[e].height(),
                                             pass.extra_pre_pool[e].width());
    const Grid d_src = extra_[e].backward(d_pre, pass.extra_cache[e]);
    for (std::size_t i = 0; i < d_src.values().size(); ++i) {
      d_q[levels + e - 1].values()[i] += d_src.values()[i];
    }
  }

  // bottom-up backward: q[l] = bottom_up[l](p[l]) + down(q[l-1])
  std::vector<Grid> d_p(levels);
  for (int l = levels - 1; l >= 0; --l) {
    if (l > 0) {
      const Grid d_down = downsample2x_backward(d_q[l], pass.q_levels[l - 1].height(),
                                                pass.q_levels[l - 1].width());
      for (std::size_t i = 0; i < d_q[l - 1].values().size(); ++i) {
        d_q[l - 1].values()[i] += d_down.values()[i];
      }
    }
    d_p[l] = bottom_up_[l].backward(d_q[l], pass.bottom_up_cache[l]);
  }

  // top-down backward: p[l] = lateral[l](x[l]) + up(p[l+1])
  std::vector<Grid> d_backbone(levels);
  for (int l = 0; l < levels; ++l) {
    if (l > 0) {
      const Grid d_up = upsample2x_backward(d_p[l - 1]);
      for (std::size_t i = 0; i < d_p[l].values().size(); ++i) {
        d_p[l].values()[i] += d_up.values()[i];
      }
    }
    d_backbone[l] = lateral_[l].backward(d_p[l], pass.lateral_cache[l]);
  }

  // backbone pooling chain backward
  for (int l = levels - 1; l > 0; --l) {
    const Grid d_prev = downsample2x_backward(d_backbone[l], pass.backbone[l - 1].height(),
                                              pass.backbone[l - 1].width());
    for (std::size_t i = 0; i < d_backbone[l - 1].values().size(); ++i) {
      d_backbone[l - 1].values()[i] += d_prev.values()[i];
    }
  }
  Grid d_chain = d_backbone[0];
  for (int i = static_cast<int>(pass.pool_chain.size()) - 2; i >= 0; --i) {
    d_chain = downsample2x_backward(d_chain, pass.pool_chain[i].height(),
                                    pass.pool_chain[i].width());
  }
  stem_.backward(d_chain, pass.stem_cache);

  if (capture) *capture = std::move(structure);
  return result;
}

double Detector::loss_given_structure(const Scene& scene,
                                      const StepStructure& structure) const {
  ForwardPass pass;
  run_forward(scene.features, pass);
  const std::vector<ScoredAnchor> scored = score_anchors(pass);

  LossComponents components;

  double obj_sum = 0.0;
  for (std::size_t j = 0; j < structure.obj_indices.size(); ++j) {
    obj_sum += focal_loss(scored[structure.obj_indices[j]].objectness,
                          structure.obj_labels[j], config_.focal)
                   .value;
  }
  components.obj_rpn = structure.obj_indices.empty() ? 0.0 : obj_sum / structure.obj_denominator;

  if (!structure.pos_indices.empty()) {
    const double inv_m = 1.0 / static_cast<double>(structure.pos_indices.size());
    double loc_sum = 0.0;
    double iou_sum = 0.0;
    for (std::size_t j = 0; j < structure.pos_indices.size(); ++j) {
      const int i = structure.pos_indices[j];
      const BoxDeltaLoss base =
          improved_iou_loss(scored[i].delta, structure.pos_gt_boxes[j], anchor_grid_[i].box);
      loc_sum += structure.fiou_weights[j] * base.value;
      if (structure.iou_branch_enabled) {
        iou_sum += iou_pred_loss(scored[i].iou_pred, structure.iou_targets[j]).value;
      }
    }
    components.loc_rpn = loc_sum * inv_m;
    components.iou_rpn = structure.iou_branch_enabled ? iou_sum * inv_m : 0.0;
  }

  const std::size_t k_total = structure.roi_boxes.size();
  if (k_total > 0) {
    Grid roi_grid(static_cast<int>(k_total), 1, 4 * config_.pyramid.channels);
    for (std::size_t k = 0; k < k_total; ++k) {
      const std::vector<double> feat = extract_roi(pass.q_levels, structure.roi_boxes[k], nullptr);
      std::copy(feat.begin(), feat.end(), roi_grid.cell(static_cast<int>(k), 0));
    }
    const Grid h1 = [&] {
      Grid g = rcnn_fc1_.apply(roi_grid);
      for (double& v : g.values()) v = std::max(v, 0.0);
      return g;
    }();
    const Grid h2 = [&] {
      Grid g = rcnn_fc2_.apply(h1);
      for (double& v : g.values()) v = std::max(v, 0.0);
      return g;
    }();
    const Grid cls_logits = rcnn_cls_.apply(h2);
    const Grid reg_out = rcnn_reg_.apply(h2);
    const std::vector<std::vector<double>> probs = softmax_rows(cls_logits);

    const CeLoss cls_loss =
        config_.rcnn_cls_loss == RcnnClsLossKind::cross_entropy
            ? weighted_ce_loss(probs, structure.roi_labels, structure.roi_weights)
            : weighted_softmax_focal_loss(probs, structure.roi_labels, structure.roi_weights,
                                          config_.rcnn_focal);
    components.cls = cls_loss.value;

    std::vector<Delta> fg_pred;
    std::vector<Delta> fg_target;
    for (std::size_t k = 0; k < k_total; ++k) {
      if (!structure.roi_is_fg[k]) continue;
      const double* row = reg_out.cell(static_cast<int>(k), 0);
      fg_pred.push_back(Delta{row[0], row[1], row[2], row[3]});
      fg_target.push_back(structure.roi_reg_targets[k]);
    }
    components.reg = rcnn_reg_loss(fg_pred, fg_target).value;
  }

  return total_loss(components, config_.loss_weights);
}

TrainStepResult Detector::train_step(const Scene& scene, std::uint64_t step_seed,
                                     double learning_rate) {
  const TrainStepResult result = evaluate_losses(scene, step_seed, nullptr);
  SgdConfig cfg = config_.sgd;
  cfg.learning_rate = learning_rate;
  for (LayerParams* p : all_params()) sgd_step(*p, cfg);
  return result;
}

std::vector<Proposal> Detector::propose(const Scene& scene) const {
  ForwardPass pass;
  run_forward(scene.features, pass);
  ProposalSelectConfig select_cfg;
  select_cfg.pre_nms_top_n_per_level = config_.proposals.infer_pre_nms_per_level;
  select_cfg.nms_threshold = config_.proposals.proposal_nms_threshold;
  select_cfg.post_nms_top_n = config_.proposals.infer_post_nms;
  select_cfg.image_w = scene.spec.grid_w;
  select_cfg.image_h = scene.spec.grid_h;
  return select_proposals(score_anchors(pass), select_cfg);
}

std::vector<Detection> Detector::infer(const Scene& scene) const {
  ForwardPass pass;
  run_forward(scene.features, pass);
  ProposalSelectConfig select_cfg;
  select_cfg.pre_nms_top_n_per_level = config_.proposals.infer_pre_nms_per_level;
  select_cfg.nms_threshold = config_.proposals.proposal_nms_threshold;
  select_cfg.post_nms_top_n = config_.proposals.infer_post_nms;
  select_cfg.image_w = scene.spec.grid_w;
  select_cfg.image_h = scene.spec.grid_h;
  const std::vector<Proposal> proposals = select_proposals(score_anchors(pass), select_cfg);
  if (proposals.empty()) return {};

  Grid roi_grid(static_cast<int>(proposals.size()), 1, 4 * config_.pyramid.channels);
  for (std::size_t k = 0; k < proposals.size(); ++k) {
    const std::vector<double> feat = extract_roi(pass.q_levels, proposals[k].box, nullptr);
    std::copy(feat.begin(), feat.end(), roi_grid.cell(static_cast<int>(k), 0));
  }
  Grid h1 = rcnn_fc1_.apply(roi_grid);
  for (double& v : h1.values()) v = std::max(v, 0.0);
  Grid h2 = rcnn_fc2_.apply(h1);
  for (double& v : h2.values()) v = std::max(v, 0.0);
  const std::vector<std::vector<double>> probs = softmax_rows(rcnn_cls_.apply(h2));
  const Grid reg_out = rcnn_reg_.apply(h2);

  std::vector<Detection> candidates;
  for (std::size_t k = 0; k < proposals.size(); ++k) {
    const Proposal& p = proposals[k];
    const std::vector<double>& row = probs[k];
    // class-agnostic refinement of the proposal box
    const double* reg_row = reg_out.cell(static_cast<int>(k), 0);
    const Box refined =
        clip(decode(Delta{reg_row[0], reg_row[1], reg_row[2], reg_row[3]}, p.box),
             scene.spec.grid_w, scene.spec.grid_h);
    if (refined.degenerate()) continue;
    if (config_.fusion == FusionMode::prior_only) {
      int best_class = 0;
      for (int c = 1; c < config_.num_classes; ++c) {
        if (row[c] > row[best_class]) best_class = c;
      }
      Detection det;
      det.box = refined;
      det.class_id = best_class;
      det.score = ScoreTriple{p.prior, row[best_class], p.prior};
      if (det.score.fused >= config_.detection.score_floor) candidates.push_back(det);
      continue;
    }
    for (int c = 0; c < config_.num_classes; ++c) {
      const double cls_score = row[c];
      const double fused = config_.fusion == FusionMode::full
                               ? fuse_scores(p.prior, cls_score)
                               : cls_score;
      if (fused < config_.detection.score_floor) continue;
      Detection det;
      det.box = refined;
      det.class_id = c;
      det.score = ScoreTriple{p.prior, cls_score, fused};
      candidates.push_back(det);
    }
  }

  NmsConfig nms_cfg;
  nms_cfg.iou_threshold = config_.detection.nms_threshold;
  nms_cfg.max_keep = config_.detection.max_keep_per_class;
  std::vector<Detection> out;
  for (int idx : nms(candidates, nms_cfg)) out.push_back(candidates[idx]);
  return out;
}

void Detector::save_checkpoint(const std::string& path, const std::string& manifest_json) const {
  json manifest = manifest_json.empty() ? json::object() : json::parse(manifest_json);
  json params = json::array();
  for (const LayerParams* p : all_params()) {
    params.push_back(json{{"name", p->name},
                          {"weights_b64", doubles_to_base64(p->weights)},
                          {"biases_b64", doubles_to_base64(p->biases)},
                          {"vel_weights_b64", doubles_to_base64(p->vel_weights)},
                          {"vel_biases_b64", doubles_to_base64(p->vel_biases)}});
  }
  json doc{{"format", "boostdet-checkpoint-v1"},
           {"manifest", manifest},
           {"params", params}};
  std::ofstream out(path);
  if (!out) throw IoError("save_checkpoint: cannot open '" + path + "' for writing");
  out << doc.dump() << "\n";
  if (!out) throw IoError("save_checkpoint: write to '" + path + "' failed");
}

std::string Detector::load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("load_checkpoint: cannot open '" + path + "'");
  json doc;
  in >> doc;
  if (doc.value("format", "") != "boostdet-checkpoint-v1") {
    throw IoError("load_checkpoint: unrecognized format");
  }
  std::vector<LayerParams*> params = all_params();
  const json& stored = doc.at("params");
  if (stored.size() != params.size()) {
    throw ConfigError("load_checkpoint: parameter section count mismatch (" +
                      std::to_string(stored.size()) + " stored vs " +
                      std::to_string(params.size()) + " expected)");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const json& rec = stored.at(i);
    if (rec.at("name").get<std::string>() != params[i]->name) {
      throw ConfigError("load_checkpoint: section '" + rec.at("name").get<std::string>() +
                        "' does not match expected '" + params[i]->name + "'");
    }
    auto restore = [&](const char* key, std::vector<double>& into) {
      std::vector<double> values = base64_to_doubles(rec.at(key).get<std::string>());
      if (values.size() != into.size()) {
        throw ConfigError("load_checkpoint: size mismatch in section '" + params[i]->name + "'");
      }
      into = std::move(values);
    };
    restore("weights_b64", params[i]->weights);
    restore("biases_b64", params[i]->biases);
    restore("vel_weights_b64", params[i]->vel_weights);
    restore("vel_biases_b64", params[i]->vel_biases);
  }
  return doc.at("manifest").dump();
}

}  // namespace boostdet
