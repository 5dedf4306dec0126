#include "boostdet/config.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

#include "boostdet/errors.hpp"

namespace boostdet {

using nlohmann::json;

void SchedulePlan::validate() const {
  if (epochs < 1) throw ConfigError("schedule.epochs must be >= 1");
  if (!(base_learning_rate > 0.0)) throw ConfigError("schedule.base_learning_rate must be > 0");
  if (!(decay_factor > 0.0) || decay_factor > 1.0) {
    throw ConfigError("schedule.decay_factor must lie in (0,1]");
  }
  for (int e : decay_epochs) {
    if (e < 1) throw ConfigError("schedule.decay_epochs entries must be >= 1");
  }
}

double SchedulePlan::learning_rate_for_epoch(int epoch) const {
  double rate = base_learning_rate;
  for (int decay : decay_epochs) {
    if (epoch >= decay) rate *= decay_factor;
  }
  return rate;
}

void AblateConfig::validate() const {
  if (num_seeds < 1) throw ConfigError("ablate.num_seeds must be >= 1");
  if (epochs < 0) throw ConfigError("ablate.epochs must be >= 0");
  if (eta_values.empty() || omega_values.empty()) {
    throw ConfigError("ablate sweep value lists must be non-empty");
  }
}

void RunConfig::validate() const {
  dataset.validate();
  detector.validate();
  schedule.validate();
  ablate.validate();
  static const std::set<std::string> variants{"full", "no-br", "no-fusion", "prior-only",
                                              "baseline"};
  if (variants.find(variant) == variants.end()) {
    throw ConfigError("unknown variant '" + variant +
                      "' (expected full|no-br|no-fusion|prior-only|baseline)");
  }
  if (out_dir.empty()) throw ConfigError("out_dir must be non-empty");
  if (detector.scene_channels != dataset.channels) {
    throw ConfigError("detector.scene_channels must match dataset.channels");
  }
  if (detector.num_classes != dataset.num_classes) {
    throw ConfigError("detector.num_classes must match dataset.num_classes");
  }
  if (detector.image_size != dataset.grid_size) {
    throw ConfigError("detector.image_size must match dataset.grid_size");
  }
}

void apply_variant(DetectorConfig& config, const std::string& variant) {
  if (variant == "full") return;
  if (variant == "no-br") {
    config.br.enabled = false;
    return;
  }
  if (variant == "no-fusion") {
    config.br.enabled = false;
    config.fusion = FusionMode::no_fusion;
    return;
  }
  if (variant == "prior-only") {
    config.fusion = FusionMode::prior_only;
    return;
  }
  if (variant == "baseline") {
    config.br.enabled = false;
    config.fusion = FusionMode::no_fusion;
    config.rpn.focal_objectness = false;
    config.rpn.use_iou_prior = false;
    config.fiou.eta = 0.0;
    return;
  }
  throw ConfigError("unknown variant '" + variant + "'");
}

DetectorConfig RunConfig::detector_for_variant() const {
  DetectorConfig out = detector;
  apply_variant(out, variant);
  return out;
}

namespace {

std::string joined(const std::string& dir, const std::string& name) {
  if (dir.empty()) return name;
  return dir.back() == '/' ? dir + name : dir + "/" + name;
}

}  // namespace

std::string RunConfig::dataset_path() const {
  return paths.dataset.empty() ? joined(out_dir, "dataset.jsonl") : paths.dataset;
}
std::string RunConfig::checkpoint_path() const {
  return paths.checkpoint.empty() ? joined(out_dir, "checkpoint.json") : paths.checkpoint;
}
std::string RunConfig::metrics_path() const {
  return paths.metrics.empty() ? joined(out_dir, "metrics.json") : paths.metrics;
}
std::string RunConfig::detections_path() const {
  return paths.detections.empty() ? joined(out_dir, "detections.jsonl") : paths.detections;
}
std::string RunConfig::gt_path() const {
  return paths.gt.empty() ? joined(out_dir, "gt.jsonl") : paths.gt;
}
std::string RunConfig::train_log_path() const {
  return paths.train_log.empty() ? joined(out_dir, "train_log.jsonl") : paths.train_log;
}
std::string RunConfig::ablation_path() const {
  return paths.ablation.empty() ? joined(out_dir, "ablation.csv") : paths.ablation;
}

namespace {

void check_keys(const json& obj, const std::set<std::string>& allowed,
                const std::string& context) {
  if (!obj.is_object()) throw ConfigError("config: '" + context + "' must be an object");
  for (const auto& item : obj.items()) {
    if (allowed.find(item.key()) == allowed.end()) {
      throw ConfigError("config: unknown key '" + context + "." + item.key() + "'");
    }
  }
}

template <typename T>
void read(const json& obj, const char* key, T& into) {
  if (obj.contains(key)) into = obj.at(key).get<T>();
}

void parse_dataset(const json& j, SynthConfig& cfg) {
  check_keys(j, {"n_scenes", "grid_size", "channels", "num_classes", "vagueness_mix",
                 "min_objects", "max_objects", "noise_sigma", "occluder_fraction", "min_side",
                 "max_side"},
             "dataset");
  read(j, "n_scenes", cfg.n_scenes);
  read(j, "grid_size", cfg.grid_size);
  read(j, "channels", cfg.channels);
  read(j, "num_classes", cfg.num_classes);
  read(j, "vagueness_mix", cfg.vagueness_mix);
  read(j, "min_objects", cfg.min_objects);
  read(j, "max_objects", cfg.max_objects);
  read(j, "noise_sigma", cfg.noise_sigma);
  read(j, "occluder_fraction", cfg.occluder_fraction);
  read(j, "min_side", cfg.min_side);
  read(j, "max_side", cfg.max_side);
}

json dataset_to_json(const SynthConfig& cfg) {
  return json{{"n_scenes", cfg.n_scenes},
              {"grid_size", cfg.grid_size},
              {"channels", cfg.channels},
              {"num_classes", cfg.num_classes},
              {"vagueness_mix", cfg.vagueness_mix},
              {"min_objects", cfg.min_objects},
              {"max_objects", cfg.max_objects},
              {"noise_sigma", cfg.noise_sigma},
              {"occluder_fraction", cfg.occluder_fraction},
              {"min_side", cfg.min_side},
              {"max_side", cfg.max_side}};
}

void parse_anchors(const json& j, AnchorConfig& cfg) {
  check_keys(j, {"aspect_ratios", "scale_multipliers", "base_sizes", "strides",
                 "positive_iou_threshold", "negative_iou_threshold", "force_match"},
             "detector.anchors");
  read(j, "aspect_ratios", cfg.aspect_ratios);
  read(j, "scale_multipliers", cfg.scale_multipliers);
  read(j, "base_sizes", cfg.base_sizes);
  read(j, "strides", cfg.strides);
  read(j, "positive_iou_threshold", cfg.positive_iou_threshold);
  read(j, "negative_iou_threshold", cfg.negative_iou_threshold);
  read(j, "force_match", cfg.force_match);
}

json anchors_to_json(const AnchorConfig& cfg) {
  return json{{"aspect_ratios", cfg.aspect_ratios},
              {"scale_multipliers", cfg.scale_multipliers},
              {"base_sizes", cfg.base_sizes},
              {"strides", cfg.strides},
              {"positive_iou_threshold", cfg.positive_iou_threshold},
              {"negative_iou_threshold", cfg.negative_iou_threshold},
              {"force_match", cfg.force_match}};
}

void parse_detector(const json& j, DetectorConfig& cfg) {
  check_keys(j,
             {"scene_channels", "num_classes", "image_size", "pyramid", "anchors", "rpn", "roi",
              "focal", "fiou", "br", "loss_weights", "sgd", "proposals", "detection", "fusion",
              "rcnn_cls_loss", "rcnn_focal"},
             "detector");
  read(j, "scene_channels", cfg.scene_channels);
  read(j, "num_classes", cfg.num_classes);
  read(j, "image_size", cfg.image_size);
  if (j.contains("pyramid")) {
    const json& p = j.at("pyramid");
    check_keys(p, {"levels", "channels", "head_depth", "extra_levels", "norm_groups",
                   "rcnn_hidden"},
               "detector.pyramid");
    read(p, "levels", cfg.pyramid.levels);
    read(p, "channels", cfg.pyramid.channels);
    read(p, "head_depth", cfg.pyramid.head_depth);
    read(p, "extra_levels", cfg.pyramid.extra_levels);
    read(p, "norm_groups", cfg.pyramid.norm_groups);
    read(p, "rcnn_hidden", cfg.pyramid.rcnn_hidden);
  }
  if (j.contains("anchors")) parse_anchors(j.at("anchors"), cfg.anchors);
  if (j.contains("rpn")) {
    const json& p = j.at("rpn");
    check_keys(p, {"focal_objectness", "objectness_sample_count", "objectness_positive_fraction",
                   "objectness_normalization", "use_iou_prior"},
               "detector.rpn");
    read(p, "focal_objectness", cfg.rpn.focal_objectness);
    read(p, "objectness_sample_count", cfg.rpn.objectness_sample_count);
    read(p, "objectness_positive_fraction", cfg.rpn.objectness_positive_fraction);
    if (p.contains("objectness_normalization")) {
      const std::string mode = p.at("objectness_normalization").get<std::string>();
      if (mode == "all_anchors") {
        cfg.rpn.normalization = ObjectnessNormalization::all_anchors;
      } else if (mode == "positives") {
        cfg.rpn.normalization = ObjectnessNormalization::positives;
      } else {
        throw ConfigError("detector.rpn.objectness_normalization must be all_anchors|positives");
      }
    }
    read(p, "use_iou_prior", cfg.rpn.use_iou_prior);
  }
  if (j.contains("roi")) {
    const json& p = j.at("roi");
    check_keys(p, {"rois_per_scene", "positive_fraction", "fg_iou_threshold"}, "detector.roi");
    read(p, "rois_per_scene", cfg.roi.rois_per_scene);
    read(p, "positive_fraction", cfg.roi.positive_fraction);
    read(p, "fg_iou_threshold", cfg.roi.fg_iou_threshold);
  }
  if (j.contains("focal")) {
    const json& p = j.at("focal");
    check_keys(p, {"alpha", "gamma"}, "detector.focal");
    read(p, "alpha", cfg.focal.alpha);
    read(p, "gamma", cfg.focal.gamma);
  }
  if (j.contains("fiou")) {
    const json& p = j.at("fiou");
    check_keys(p, {"eta"}, "detector.fiou");
    read(p, "eta", cfg.fiou.eta);
  }
  if (j.contains("br")) {
    const json& p = j.at("br");
    check_keys(p, {"omega", "normalize", "enabled"}, "detector.br");
    read(p, "omega", cfg.br.omega);
    read(p, "normalize", cfg.br.normalize);
    read(p, "enabled", cfg.br.enabled);
  }
  if (j.contains("loss_weights")) {
    const json& p = j.at("loss_weights");
    check_keys(p, {"obj_rpn", "loc_rpn", "iou_rpn", "reg", "cls"}, "detector.loss_weights");
    read(p, "obj_rpn", cfg.loss_weights.obj_rpn);
    read(p, "loc_rpn", cfg.loss_weights.loc_rpn);
    read(p, "iou_rpn", cfg.loss_weights.iou_rpn);
    read(p, "reg", cfg.loss_weights.reg);
    read(p, "cls", cfg.loss_weights.cls);
  }
  if (j.contains("sgd")) {
    const json& p = j.at("sgd");
    check_keys(p, {"learning_rate", "momentum", "weight_decay"}, "detector.sgd");
    read(p, "learning_rate", cfg.sgd.learning_rate);
    read(p, "momentum", cfg.sgd.momentum);
    read(p, "weight_decay", cfg.sgd.weight_decay);
  }
  if (j.contains("proposals")) {
    const json& p = j.at("proposals");
    check_keys(p, {"train_pre_nms_per_level", "train_post_nms", "infer_pre_nms_per_level",
                   "infer_post_nms", "proposal_nms_threshold"},
               "detector.proposals");
    read(p, "train_pre_nms_per_level", cfg.proposals.train_pre_nms_per_level);
    read(p, "train_post_nms", cfg.proposals.train_post_nms);
    read(p, "infer_pre_nms_per_level", cfg.proposals.infer_pre_nms_per_level);
    read(p, "infer_post_nms", cfg.proposals.infer_post_nms);
    read(p, "proposal_nms_threshold", cfg.proposals.proposal_nms_threshold);
  }
  if (j.contains("detection")) {
    const json& p = j.at("detection");
    check_keys(p, {"nms_threshold", "score_floor", "max_keep_per_class"}, "detector.detection");
    read(p, "nms_threshold", cfg.detection.nms_threshold);
    read(p, "score_floor", cfg.detection.score_floor);
    read(p, "max_keep_per_class", cfg.detection.max_keep_per_class);
  }
  if (j.contains("fusion")) {
    const std::string mode = j.at("fusion").get<std::string>();
    if (mode == "full") {
      cfg.fusion = FusionMode::full;
    } else if (mode == "no_fusion") {
      cfg.fusion = FusionMode::no_fusion;
    } else if (mode == "prior_only") {
      cfg.fusion = FusionMode::prior_only;
    } else {
      throw ConfigError("detector.fusion must be full|no_fusion|prior_only");
    }
  }
  if (j.contains("rcnn_cls_loss")) {
    const std::string kind = j.at("rcnn_cls_loss").get<std::string>();
    if (kind == "ce") {
      cfg.rcnn_cls_loss = RcnnClsLossKind::cross_entropy;
    } else if (kind == "focal") {
      cfg.rcnn_cls_loss = RcnnClsLossKind::focal;
    } else {
      throw ConfigError("detector.rcnn_cls_loss must be ce|focal");
    }
  }
  if (j.contains("rcnn_focal")) {
    const json& p = j.at("rcnn_focal");
    check_keys(p, {"alpha", "gamma"}, "detector.rcnn_focal");
    read(p, "alpha", cfg.rcnn_focal.alpha);
    read(p, "gamma", cfg.rcnn_focal.gamma);
  }
}

json detector_to_json(const DetectorConfig& cfg) {
  const char* fusion = cfg.fusion == FusionMode::full
                           ? "full"
                           : (cfg.fusion == FusionMode::no_fusion ? "no_fusion" : "prior_only");
  return json{
      {"scene_channels", cfg.scene_channels},
      {"num_classes", cfg.num_classes},
      {"image_size", cfg.image_size},
      {"pyramid", json{{"levels", cfg.pyramid.levels},
                       {"channels", cfg.pyramid.channels},
                       {"head_depth", cfg.pyramid.head_depth},
                       {"extra_levels", cfg.pyramid.extra_levels},
                       {"norm_groups", cfg.pyramid.norm_groups},
                       {"rcnn_hidden", cfg.pyramid.rcnn_hidden}}},
      {"anchors", anchors_to_json(cfg.anchors)},
      {"rpn", json{{"focal_objectness", cfg.rpn.focal_objectness},
                   {"objectness_sample_count", cfg.rpn.objectness_sample_count},
                   {"objectness_positive_fraction", cfg.rpn.objectness_positive_fraction},
                   {"objectness_normalization",
                    cfg.rpn.normalization == ObjectnessNormalization::all_anchors ? "all_anchors"
                                                                                  : "positives"},
                   {"use_iou_prior", cfg.rpn.use_iou_prior}}},
      {"roi", json{{"rois_per_scene", cfg.roi.rois_per_scene},
                   {"positive_fraction", cfg.roi.positive_fraction},
                   {"fg_iou_threshold", cfg.roi.fg_iou_threshold}}},
      {"focal", json{{"alpha", cfg.focal.alpha}, {"gamma", cfg.focal.gamma}}},
      {"fiou", json{{"eta", cfg.fiou.eta}}},
      {"br", json{{"omega", cfg.br.omega},
                  {"normalize", cfg.br.normalize},
                  {"enabled", cfg.br.enabled}}},
      {"loss_weights", json{{"obj_rpn", cfg.loss_weights.obj_rpn},
                            {"loc_rpn", cfg.loss_weights.loc_rpn},
                            {"iou_rpn", cfg.loss_weights.iou_rpn},
                            {"reg", cfg.loss_weights.reg},
                            {"cls", cfg.loss_weights.cls}}},
      {"sgd", json{{"learning_rate", cfg.sgd.learning_rate},
                   {"momentum", cfg.sgd.momentum},
                   {"weight_decay", cfg.sgd.weight_decay}}},
      {"proposals", json{{"train_pre_nms_per_level", cfg.proposals.train_pre_nms_per_level},
                         {"train_post_nms", cfg.proposals.train_post_nms},
                         {"infer_pre_nms_per_level", cfg.proposals.infer_pre_nms_per_level},
                         {"infer_post_nms", cfg.proposals.infer_post_nms},
                         {"proposal_nms_threshold", cfg.proposals.proposal_nms_threshold}}},
      {"detection", json{{"nms_threshold", cfg.detection.nms_threshold},
                         {"score_floor", cfg.detection.score_floor},
                         {"max_keep_per_class", cfg.detection.max_keep_per_class}}},
      {"fusion", fusion},
      {"rcnn_cls_loss",
       cfg.rcnn_cls_loss == RcnnClsLossKind::cross_entropy ? "ce" : "focal"},
      {"rcnn_focal", json{{"alpha", cfg.rcnn_focal.alpha}, {"gamma", cfg.rcnn_focal.gamma}}}};
}

RunConfig parse_run_config_json(const json& doc) {
  check_keys(doc,
             {"seed", "out_dir", "variant", "eval_all_variants", "paths", "dataset", "detector",
              "schedule", "ablate"},
             "config");
  RunConfig cfg;
  read(doc, "seed", cfg.seed);
  read(doc, "out_dir", cfg.out_dir);
  read(doc, "variant", cfg.variant);
  read(doc, "eval_all_variants", cfg.eval_all_variants);
  if (doc.contains("paths")) {
    const json& p = doc.at("paths");
    check_keys(p, {"dataset", "checkpoint", "metrics", "detections", "gt", "train_log",
                   "ablation", "resume"},
               "paths");
    read(p, "dataset", cfg.paths.dataset);
    read(p, "checkpoint", cfg.paths.checkpoint);
    read(p, "metrics", cfg.paths.metrics);
    read(p, "detections", cfg.paths.detections);
    read(p, "gt", cfg.paths.gt);
    read(p, "train_log", cfg.paths.train_log);
    read(p, "ablation", cfg.paths.ablation);
    read(p, "resume", cfg.paths.resume);
  }
  if (doc.contains("dataset")) parse_dataset(doc.at("dataset"), cfg.dataset);
  if (doc.contains("detector")) parse_detector(doc.at("detector"), cfg.detector);
  if (doc.contains("schedule")) {
    const json& p = doc.at("schedule");
    check_keys(p, {"epochs", "base_learning_rate", "decay_epochs", "decay_factor"}, "schedule");
    read(p, "epochs", cfg.schedule.epochs);
    read(p, "base_learning_rate", cfg.schedule.base_learning_rate);
    read(p, "decay_epochs", cfg.schedule.decay_epochs);
    read(p, "decay_factor", cfg.schedule.decay_factor);
  }
  if (doc.contains("ablate")) {
    const json& p = doc.at("ablate");
    check_keys(p, {"mode", "num_seeds", "epochs", "eta_values", "omega_values"}, "ablate");
    if (p.contains("mode")) {
      const std::string mode = p.at("mode").get<std::string>();
      if (mode == "ladder") {
        cfg.ablate.mode = AblateMode::ladder;
      } else if (mode == "eta_sweep") {
        cfg.ablate.mode = AblateMode::eta_sweep;
      } else if (mode == "omega_sweep") {
        cfg.ablate.mode = AblateMode::omega_sweep;
      } else {
        throw ConfigError("ablate.mode must be ladder|eta_sweep|omega_sweep");
      }
    }
    read(p, "num_seeds", cfg.ablate.num_seeds);
    read(p, "epochs", cfg.ablate.epochs);
    read(p, "eta_values", cfg.ablate.eta_values);
    read(p, "omega_values", cfg.ablate.omega_values);
  }
  cfg.validate();
  return cfg;
}

}  // namespace

RunConfig parse_run_config(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }
  try {
    return parse_run_config_json(doc);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("config: cannot open '" + path + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_run_config(buffer.str());
}

std::string run_config_to_json(const RunConfig& cfg) {
  const char* mode = cfg.ablate.mode == AblateMode::ladder
                         ? "ladder"
                         : (cfg.ablate.mode == AblateMode::eta_sweep ? "eta_sweep"
                                                                     : "omega_sweep");
  json doc{{"seed", cfg.seed},
           {"out_dir", cfg.out_dir},
           {"variant", cfg.variant},
           {"eval_all_variants", cfg.eval_all_variants},
           {"paths", json{{"dataset", cfg.paths.dataset},
                          {"checkpoint", cfg.paths.checkpoint},
                          {"metrics", cfg.paths.metrics},
                          {"detections", cfg.paths.detections},
                          {"gt", cfg.paths.gt},
                          {"train_log", cfg.paths.train_log},
                          {"ablation", cfg.paths.ablation},
                          {"resume", cfg.paths.resume}}},
           {"dataset", dataset_to_json(cfg.dataset)},
           {"detector", detector_to_json(cfg.detector)},
           {"schedule", json{{"epochs", cfg.schedule.epochs},
                             {"base_learning_rate", cfg.schedule.base_learning_rate},
                             {"decay_epochs", cfg.schedule.decay_epochs},
                             {"decay_factor", cfg.schedule.decay_factor}}},
           {"ablate", json{{"mode", mode},
                           {"num_seeds", cfg.ablate.num_seeds},
                           {"epochs", cfg.ablate.epochs},
                           {"eta_values", cfg.ablate.eta_values},
                           {"omega_values", cfg.ablate.omega_values}}}};
  return doc.dump(2);
}

RunConfig apply_config_override(const RunConfig& base, const std::string& key,
                                const std::string& value) {
  if (key.empty()) throw ConfigError("config override: empty key");
  json doc = json::parse(run_config_to_json(base));
  json parsed_value;
  try {
    parsed_value = json::parse(value);
  } catch (const json::parse_error&) {
    parsed_value = value;  // plain string
  }
  json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const std::size_t dot = key.find('.', start);
    const std::string part = key.substr(start, dot - start);
    if (part.empty()) throw ConfigError("config override: malformed key '" + key + "'");
    if (dot == std::string::npos) {
      (*node)[part] = parsed_value;
      break;
    }
    node = &(*node)[part];
    start = dot + 1;
  }
  return parse_run_config(doc.dump());
}

}  // namespace boostdet
