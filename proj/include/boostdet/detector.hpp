#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "boostdet/anchors.hpp"
#include "boostdet/layers.hpp"
#include "boostdet/losses.hpp"
#include "boostdet/postprocess.hpp"
#include "boostdet/reweighting.hpp"
#include "boostdet/synthdata.hpp"

namespace boostdet {

struct PyramidConfig {
  int levels = 3;       // strides 8/16/32 over 64x64 scenes
  int channels = 16;
  int head_depth = 4;   // linear + norm + relu stages in the RPN trunk
  int extra_levels = 0; // strided maps stacked on the last bottom-up level
  int norm_groups = 4;
  int rcnn_hidden = 64;
  void validate() const;
};

struct RoiSampleConfig {
  int rois_per_scene = 256;
  double positive_fraction = 0.25;
  double fg_iou_threshold = 0.5;
  void validate() const;
};

struct RpnConfig {
  // focal objectness over all anchors; false selects the sampled-subset
  // cross-entropy baseline (focal with gamma=0, alpha=0.5)
  bool focal_objectness = true;
  int objectness_sample_count = 256;
  double objectness_positive_fraction = 0.5;
  // positives normalization keeps the focal gradient from washing out over
  // the dense anchor grid; all_anchors takes the plain mean instead
  ObjectnessNormalization normalization = ObjectnessNormalization::positives;
  // prior = sqrt(iou_pred * objectness); false disables the IoU branch
  // entirely (prior = objectness, branch untrained)
  bool use_iou_prior = true;
  void validate() const;
};

enum class FusionMode { full, no_fusion, prior_only };

struct ProposalCaps {
  int train_pre_nms_per_level = 1000;
  int train_post_nms = 512;
  int infer_pre_nms_per_level = 1000;
  int infer_post_nms = 256;
  double proposal_nms_threshold = 0.7;
  void validate() const;
};

struct DetectionConfig {
  double nms_threshold = 0.5;  // per-class, on fused scores
  double score_floor = 0.05;
  int max_keep_per_class = 100;
  void validate() const;
};

enum class RcnnClsLossKind { cross_entropy, focal };

struct DetectorConfig {
  int scene_channels = 8;
  int num_classes = 3;
  int image_size = 64;

  PyramidConfig pyramid;
  AnchorConfig anchors;
  RpnConfig rpn;
  RoiSampleConfig roi;
  FocalConfig focal;  // RPN objectness
  FiouConfig fiou;
  BrConfig br;
  LossWeights loss_weights;
  SgdConfig sgd;
  ProposalCaps proposals;
  DetectionConfig detection;
  FusionMode fusion = FusionMode::full;
  RcnnClsLossKind rcnn_cls_loss = RcnnClsLossKind::cross_entropy;
  FocalConfig rcnn_focal{0.25, 2.0};

  void validate() const;
};

// 2x nearest-neighbor upsample / 2x average-pool downsample and their
// adjoints; the PAFPN u(.) and d(.) operators.
Grid upsample2x(const Grid& input);
Grid upsample2x_backward(const Grid& upstream);
Grid downsample2x(const Grid& input);
Grid downsample2x_backward(const Grid& upstream, int src_height, int src_width);

// Discrete structure of one training step, frozen for gradient checking:
// anchor assignment, sampled indices, detached targets and weights.
struct StepStructure {
  std::vector<int> obj_indices;   // anchors in the objectness loss
  std::vector<int> obj_labels;    // {0,1}, aligned with obj_indices
  double obj_denominator = 1.0;
  std::vector<int> pos_indices;   // positive anchors (loc + iou-pred losses)
  std::vector<Box> pos_gt_boxes;
  std::vector<double> fiou_weights;  // frozen IoU^eta per positive
  std::vector<double> iou_targets;   // frozen IoU targets per positive
  bool iou_branch_enabled = true;
  std::vector<Box> roi_boxes;     // sampled proposal boxes, detached
  std::vector<int> roi_labels;    // 0..C-1 foreground, C background
  std::vector<bool> roi_is_fg;
  std::vector<Delta> roi_reg_targets;  // valid on foreground rows
  std::vector<double> roi_weights;     // frozen boosting weights
};

struct TrainStepResult {
  LossComponents components;
  double total = 0.0;
  std::size_t positive_anchors = 0;
  std::size_t sampled_rois = 0;
  std::size_t foreground_rois = 0;
};

class Detector {
 public:
  explicit Detector(const DetectorConfig& config);

  void init_params(Rng& rng);

  const DetectorConfig& config() const { return config_; }
  // mutable for inference-time variant switching on a trained model
  void set_fusion_mode(FusionMode mode) { config_.fusion = mode; }

  // One optimization step on a scene: forward, loss, backward, SGD update.
  // Deterministic given (scene, parameters, step_seed).
  TrainStepResult train_step(const Scene& scene, std::uint64_t step_seed,
                             double learning_rate);

  // Forward + backward without the parameter update; used by gradient checks
  // and divergence diagnostics. Captures the frozen step structure on demand.
  TrainStepResult evaluate_losses(const Scene& scene, std::uint64_t step_seed,
                                  StepStructure* capture = nullptr);

  // Recompute the total loss for a frozen structure; a pure function of the
  // parameters, suitable for finite differencing.
  double loss_given_structure(const Scene& scene, const StepStructure& structure) const;

  std::vector<Detection> infer(const Scene& scene) const;
  std::vector<Proposal> propose(const Scene& scene) const;

  std::vector<LayerParams*> all_params();
  std::vector<const LayerParams*> all_params() const;
  void zero_grads();

  void save_checkpoint(const std::string& path, const std::string& manifest_json) const;
  // Restores parameters into this detector; returns the stored manifest.
  std::string load_checkpoint(const std::string& path);

  struct RoiTap {
    int row = 0;
    int col = 0;
    int bin = 0;
    double weight = 0.0;
  };
  struct RoiPool {
    int level = 0;
    std::vector<RoiTap> taps;
  };

  // Area-weighted 2x2 average pooling of a box on its pyramid level,
  // concatenated to a fixed 4*channels vector.
  std::vector<double> extract_roi(const std::vector<Grid>& q_levels, const Box& box,
                                  RoiPool* pool) const;

 private:
  struct ForwardPass;
  void run_forward(const Grid& features, ForwardPass& pass) const;
  std::vector<ScoredAnchor> score_anchors(const ForwardPass& pass) const;

  DetectorConfig config_;
  std::vector<LevelShape> level_shapes_;
  std::vector<Anchor> anchor_grid_;

  // backbone + neck
  LinearLayer stem_;
  std::vector<LinearLayer> lateral_;   // top-down per-level maps
  std::vector<LinearLayer> bottom_up_; // bottom-up per-level maps
  std::vector<LinearLayer> extra_;     // strided maps for extra top levels

  // shared RPN trunk and output heads
  std::vector<LinearLayer> trunk_linear_;
  std::vector<ChannelNormLayer> trunk_norm_;
  LinearLayer obj_head_;
  LinearLayer iou_head_;
  LinearLayer reg_head_;

  // R-CNN head
  LinearLayer rcnn_fc1_;
  LinearLayer rcnn_fc2_;
  LinearLayer rcnn_cls_;
  LinearLayer rcnn_reg_;
};

}  // namespace boostdet
