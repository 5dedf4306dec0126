#include "boostdet/runner.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <thread>

#include "json.hpp"

#include "boostdet/detector.hpp"
#include "boostdet/errors.hpp"
#include "boostdet/rng.hpp"

namespace boostdet {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory '" + dir + "': " + ec.message());
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << text;
  if (!out) throw IoError("write to '" + path + "' failed");
}

void echo_config(const RunConfig& cfg) {
  ensure_dir(cfg.out_dir);
  write_text(cfg.out_dir + "/config.json", run_config_to_json(cfg) + "\n");
}

json manifest_json(const RunConfig& cfg, int epoch, bool diverged) {
  return json{{"run_config", json::parse(run_config_to_json(cfg))},
              {"variant", cfg.variant},
              {"seed", cfg.seed},
              {"epoch", epoch},
              {"diverged", diverged}};
}

// architecture fields that must agree between a checkpoint and the current run
json arch_subset(const json& detector_json) {
  json out;
  for (const char* key : {"scene_channels", "num_classes", "image_size", "pyramid", "anchors"}) {
    out[key] = detector_json.at(key);
  }
  return out;
}

std::string arch_diff(const json& a, const json& b) {
  std::string diff;
  for (const auto& item : a.items()) {
    if (b.at(item.key()) != item.value()) {
      diff += item.key() + ": checkpoint=" + b.at(item.key()).dump() +
              " config=" + item.value().dump() + "; ";
    }
  }
  return diff;
}

SchedulePlan effective_schedule(const RunConfig& cfg, int override_epochs) {
  SchedulePlan plan = cfg.schedule;
  if (override_epochs > 0 && override_epochs != plan.epochs) {
    std::vector<int> scaled;
    for (int e : plan.decay_epochs) {
      const double fraction = static_cast<double>(e) / plan.epochs;
      scaled.push_back(std::max(1, static_cast<int>(std::lround(fraction * override_epochs))));
    }
    plan.epochs = override_epochs;
    plan.decay_epochs = scaled;
  }
  return plan;
}

}  // namespace

int thread_budget(int jobs) {
  int budget = 0;
  if (const char* env = std::getenv("BOOSTDET_THREADS")) {
    budget = std::atoi(env);
  }
  if (budget <= 0) {
    budget = static_cast<int>(std::thread::hardware_concurrency());
    if (budget <= 0) budget = 1;
  }
  return std::max(1, std::min(jobs, budget));
}

GenDataOutcome run_gen_data(const RunConfig& cfg) {
  echo_config(cfg);
  const Dataset dataset = generate_dataset(cfg.seed, cfg.dataset);
  const std::string path = cfg.dataset_path();
  ensure_dir(fs::path(path).parent_path().string().empty()
                 ? "."
                 : fs::path(path).parent_path().string());
  save_dataset(dataset, path);

  GenDataOutcome out;
  out.path = path;
  out.n_scenes = static_cast<int>(dataset.specs.size());
  out.n_train = static_cast<int>(dataset.train_ids.size());
  out.n_val = static_cast<int>(dataset.val_ids.size());
  for (const SceneSpec& spec : dataset.specs) out.n_objects += spec.objects.size();
  return out;
}

namespace {

struct TrainArtifacts {
  TrainOutcome outcome;
  Detector detector;
};

TrainArtifacts train_impl(const RunConfig& cfg, const LoadedDataset& data,
                          int override_epochs) {
  const DetectorConfig det_cfg = cfg.detector_for_variant();
  const SchedulePlan plan = effective_schedule(cfg, override_epochs);

  TrainArtifacts art{TrainOutcome{}, Detector(det_cfg)};
  Detector& det = art.detector;
  Rng init_rng(derive_seed(cfg.seed, 0xD37));
  det.init_params(init_rng);

  int start_epoch = 1;
  if (!cfg.paths.resume.empty()) {
    Detector loaded(det_cfg);
    const std::string manifest_text = loaded.load_checkpoint(cfg.paths.resume);
    const json manifest = json::parse(manifest_text);
    const json stored_detector = manifest.at("run_config").at("detector");
    const json current_detector =
        json::parse(run_config_to_json(cfg)).at("detector");
    const std::string diff = arch_diff(arch_subset(current_detector), arch_subset(stored_detector));
    if (!diff.empty()) {
      throw ConfigError("resume: checkpoint architecture mismatch: " + diff);
    }
    det = std::move(loaded);
    start_epoch = manifest.at("epoch").get<int>() + 1;
  }

  std::string log_text;
  Detector snapshot = det;  // last-good state for divergence aborts
  int snapshot_epoch = start_epoch - 1;

  for (int epoch = start_epoch; epoch <= plan.epochs; ++epoch) {
    const double lr = plan.learning_rate_for_epoch(epoch);
    std::vector<int> order = data.meta.train_ids;
    Rng shuffle_rng(derive_seed(cfg.seed, 0xE0C, static_cast<std::uint64_t>(epoch)));
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[shuffle_rng.uniform_index(i)]);
    }

    LossComponents sums;
    double total_sum = 0.0;
    bool diverged = false;
    try {
      for (int scene_id : order) {
        const Scene& scene = data.scenes.at(scene_id);
        const std::uint64_t step_seed =
            derive_seed(cfg.seed, static_cast<std::uint64_t>(epoch),
                        static_cast<std::uint64_t>(scene_id));
        const TrainStepResult result = det.train_step(scene, step_seed, lr);
        sums.obj_rpn += result.components.obj_rpn;
        sums.loc_rpn += result.components.loc_rpn;
        sums.iou_rpn += result.components.iou_rpn;
        sums.reg += result.components.reg;
        sums.cls += result.components.cls;
        total_sum += result.total;
      }
    } catch (const TrainingError&) {
      diverged = true;
    }

    if (diverged) {
      art.outcome.diverged = true;
      art.outcome.last_epoch = snapshot_epoch;
      det = snapshot;
      break;
    }

    const double inv_n = order.empty() ? 0.0 : 1.0 / static_cast<double>(order.size());
    EpochStats stats;
    stats.epoch = epoch;
    stats.learning_rate = lr;
    stats.weighted_mean.obj_rpn = det.config().loss_weights.obj_rpn * sums.obj_rpn * inv_n;
    stats.weighted_mean.loc_rpn = det.config().loss_weights.loc_rpn * sums.loc_rpn * inv_n;
    stats.weighted_mean.iou_rpn = det.config().loss_weights.iou_rpn * sums.iou_rpn * inv_n;
    stats.weighted_mean.reg = det.config().loss_weights.reg * sums.reg * inv_n;
    stats.weighted_mean.cls = det.config().loss_weights.cls * sums.cls * inv_n;
    stats.total = total_sum * inv_n;
    art.outcome.epochs.push_back(stats);
    art.outcome.last_epoch = epoch;

    json line{{"epoch", stats.epoch},
              {"learning_rate", stats.learning_rate},
              {"loss_obj_rpn", stats.weighted_mean.obj_rpn},
              {"loss_loc_rpn", stats.weighted_mean.loc_rpn},
              {"loss_iou_rpn", stats.weighted_mean.iou_rpn},
              {"loss_reg", stats.weighted_mean.reg},
              {"loss_cls", stats.weighted_mean.cls},
              {"loss_total", stats.total},
              {"scenes", static_cast<int>(order.size())}};
    log_text += line.dump() + "\n";

    snapshot = det;
    snapshot_epoch = epoch;
  }

  art.outcome.log_path = cfg.train_log_path();
  write_text(art.outcome.log_path, log_text);
  art.outcome.checkpoint_path = cfg.checkpoint_path();
  det.save_checkpoint(art.outcome.checkpoint_path,
                      manifest_json(cfg, art.outcome.last_epoch, art.outcome.diverged).dump());
  return art;
}

}  // namespace

TrainOutcome run_train(const RunConfig& cfg) {
  echo_config(cfg);
  const LoadedDataset data = load_dataset(cfg.dataset_path());
  return train_impl(cfg, data, 0).outcome;
}

namespace {

json ap_to_json(const ApResult& metrics) {
  json per_class = json::object();
  for (const auto& [cls, ap] : metrics.per_class_ap) {
    per_class[std::to_string(cls)] = ap;
  }
  return json{{"ap", metrics.ap},
              {"ap50", metrics.ap50},
              {"ap75", metrics.ap75},
              {"per_class_ap", per_class}};
}

struct SceneEval {
  std::vector<int> scene_ids;
  std::vector<std::vector<Detection>> detections;
  std::vector<std::vector<EvalGt>> gts;
};

SceneEval infer_val_scenes(const Detector& det, const LoadedDataset& data) {
  SceneEval out;
  for (int scene_id : data.meta.val_ids) {
    const Scene& scene = data.scenes.at(scene_id);
    out.scene_ids.push_back(scene_id);
    out.detections.push_back(det.infer(scene));
    std::vector<EvalGt> gts;
    for (const SceneObject& obj : scene.spec.objects) {
      gts.push_back(EvalGt{scene_id, obj.box, obj.class_id});
    }
    out.gts.push_back(std::move(gts));
  }
  return out;
}

ApResult metrics_from_eval(const SceneEval& eval) {
  std::vector<EvalDetection> dets;
  std::vector<EvalGt> gts;
  for (std::size_t i = 0; i < eval.scene_ids.size(); ++i) {
    for (const Detection& d : eval.detections[i]) {
      dets.push_back(EvalDetection{eval.scene_ids[i], d.box, d.class_id, d.score.fused});
    }
    gts.insert(gts.end(), eval.gts[i].begin(), eval.gts[i].end());
  }
  return coco_ap(dets, gts);
}

ApResult eval_detector_on(const Detector& det, const LoadedDataset& data) {
  return metrics_from_eval(infer_val_scenes(det, data));
}

FusionMode fusion_for_variant(const DetectorConfig& base, const std::string& variant) {
  DetectorConfig probe = base;
  apply_variant(probe, variant);
  return probe.fusion;
}

}  // namespace

EvalOutcome run_eval(const RunConfig& cfg) {
  echo_config(cfg);
  EvalOutcome out;
  out.metrics_path = cfg.metrics_path();

  const std::string checkpoint = cfg.checkpoint_path();
  if (!fs::exists(checkpoint)) {
    // file mode: metrics straight from detection/gt dumps
    const std::string det_path = cfg.detections_path();
    const std::string gt_path = cfg.gt_path();
    if (!fs::exists(det_path) || !fs::exists(gt_path)) {
      throw InputError("eval: need either a checkpoint or detection + gt dumps");
    }
    const std::vector<EvalDetection> dets = read_detection_dump(det_path);
    const std::vector<EvalGt> gts = read_gt_dump(gt_path);
    out.metrics = coco_ap(dets, gts);
    out.detections_path = det_path;
    out.gt_path = gt_path;
    json doc{{"variant", "from-dumps"}, {"metrics", ap_to_json(out.metrics)}};
    write_text(out.metrics_path, doc.dump(2) + "\n");
    return out;
  }

  const json manifest = json::parse(read_checkpoint_manifest(checkpoint));
  const RunConfig stored_cfg =
      parse_run_config(manifest.at("run_config").dump());
  const json stored_detector = json::parse(run_config_to_json(stored_cfg)).at("detector");
  const json current_detector = json::parse(run_config_to_json(cfg)).at("detector");
  const std::string diff =
      arch_diff(arch_subset(current_detector), arch_subset(stored_detector));
  if (!diff.empty()) {
    throw ConfigError("eval: checkpoint/config architecture mismatch: " + diff);
  }

  DetectorConfig det_cfg = stored_cfg.detector_for_variant();
  det_cfg.fusion = fusion_for_variant(det_cfg, cfg.variant);
  Detector det(det_cfg);
  det.load_checkpoint(checkpoint);

  const LoadedDataset data = load_dataset(cfg.dataset_path());
  const SceneEval eval = infer_val_scenes(det, data);
  out.metrics = metrics_from_eval(eval);
  out.n_scenes = static_cast<int>(eval.scene_ids.size());

  out.detections_path = cfg.detections_path();
  out.gt_path = cfg.gt_path();
  write_detection_dump(out.detections_path, eval.scene_ids, eval.detections);
  write_gt_dump(out.gt_path, eval.scene_ids, eval.gts);

  json doc{{"variant", cfg.variant},
           {"n_scenes", out.n_scenes},
           {"metrics", ap_to_json(out.metrics)}};
  if (cfg.eval_all_variants) {
    json variants = json::object();
    for (const char* name : {"full", "no-fusion", "prior-only"}) {
      Detector variant_det = det;
      DetectorConfig vc = det_cfg;
      vc.fusion = fusion_for_variant(det_cfg, name);
      variant_det.set_fusion_mode(vc.fusion);
      const ApResult metrics = eval_detector_on(variant_det, data);
      variants[name] = ap_to_json(metrics);
      out.extra_variants.push_back(VariantMetrics{name, metrics});
    }
    doc["variants"] = variants;
  }
  write_text(out.metrics_path, doc.dump(2) + "\n");
  return out;
}

namespace {

struct AblateJob {
  std::string label;
  std::string variant;
  double parameter = 0.0;
  bool normalize = true;
  std::uint64_t seed = 0;
  double eta_override = -1.0;    // < 0: keep config value
  double omega_override = -1.0;
  bool override_normalize = false;
};

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

}  // namespace

AblateOutcome run_ablate(const RunConfig& cfg) {
  echo_config(cfg);
  const LoadedDataset data = load_dataset(cfg.dataset_path());

  std::vector<AblateJob> jobs;
  if (cfg.ablate.mode == AblateMode::ladder) {
    const std::pair<const char*, const char*> rungs[] = {
        {"baseline", "baseline"}, {"prior", "no-fusion"}, {"fusion", "no-br"}, {"br", "full"}};
    int rung_index = 0;
    for (const auto& [label, variant] : rungs) {
      for (int s = 0; s < cfg.ablate.num_seeds; ++s) {
        AblateJob job;
        job.label = label;
        job.variant = variant;
        job.parameter = rung_index;
        job.seed = cfg.seed + static_cast<std::uint64_t>(s);
        jobs.push_back(job);
      }
      ++rung_index;
    }
  } else if (cfg.ablate.mode == AblateMode::eta_sweep) {
    for (double eta : cfg.ablate.eta_values) {
      for (int s = 0; s < cfg.ablate.num_seeds; ++s) {
        AblateJob job;
        job.label = "eta=" + format_double(eta);
        job.variant = "full";
        job.parameter = eta;
        job.seed = cfg.seed + static_cast<std::uint64_t>(s);
        job.eta_override = eta;
        jobs.push_back(job);
      }
    }
  } else {
    for (bool normalize : {true, false}) {
      for (double omega : cfg.ablate.omega_values) {
        for (int s = 0; s < cfg.ablate.num_seeds; ++s) {
          AblateJob job;
          job.label = "omega=" + format_double(omega) +
                      (normalize ? ",norm" : ",raw");
          job.variant = "full";
          job.parameter = omega;
          job.normalize = normalize;
          job.override_normalize = true;
          job.omega_override = omega;
          job.seed = cfg.seed + static_cast<std::uint64_t>(s);
          jobs.push_back(job);
        }
      }
    }
  }

  std::vector<AblateRow> rows(jobs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    while (true) {
      const std::size_t idx = next.fetch_add(1);
      if (idx >= jobs.size()) break;
      const AblateJob& job = jobs[idx];
      RunConfig job_cfg = cfg;
      job_cfg.variant = job.variant;
      job_cfg.seed = job.seed;
      job_cfg.out_dir = cfg.out_dir + "/ablate/" + job.label + "_seed" +
                        std::to_string(job.seed);
      job_cfg.paths = PathConfig{};
      job_cfg.paths.dataset = cfg.dataset_path();
      if (job.eta_override >= 0.0) job_cfg.detector.fiou.eta = job.eta_override;
      if (job.omega_override >= 0.0) job_cfg.detector.br.omega = job.omega_override;
      if (job.override_normalize) job_cfg.detector.br.normalize = job.normalize;
      ensure_dir(job_cfg.out_dir);
      write_text(job_cfg.out_dir + "/config.json", run_config_to_json(job_cfg) + "\n");

      const TrainArtifacts art = train_impl(job_cfg, data, cfg.ablate.epochs);
      const ApResult metrics = eval_detector_on(art.detector, data);

      AblateRow row;
      row.variant = job.label;
      row.parameter = job.parameter;
      row.normalize = job.normalize;
      row.seed = job.seed;
      row.metrics = metrics;
      rows[idx] = row;
    }
  };

  const int n_threads = thread_budget(static_cast<int>(jobs.size()));
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }

  AblateOutcome out;
  out.rows = rows;
  out.csv_path = cfg.ablation_path();

  std::string csv = "variant,parameter,normalize,seed,ap,ap50,ap75\n";
  for (const AblateRow& row : rows) {
    csv += row.variant + "," + format_double(row.parameter) + "," +
           (row.normalize ? "1" : "0") + "," + std::to_string(row.seed) + "," +
           format_double(row.metrics.ap) + "," + format_double(row.metrics.ap50) + "," +
           format_double(row.metrics.ap75) + "\n";
  }
  write_text(out.csv_path, csv);

  // mean +- range per variant label, in first-seen order
  std::vector<std::string> labels;
  for (const AblateRow& row : rows) {
    if (std::find(labels.begin(), labels.end(), row.variant) == labels.end()) {
      labels.push_back(row.variant);
    }
  }
  std::string summary = "variant,n_seeds,ap_mean,ap_min,ap_max,ap50_mean,ap75_mean\n";
  for (const std::string& label : labels) {
    double sum = 0.0, lo = 1.0, hi = 0.0, sum50 = 0.0, sum75 = 0.0;
    int n = 0;
    for (const AblateRow& row : rows) {
      if (row.variant != label) continue;
      sum += row.metrics.ap;
      sum50 += row.metrics.ap50;
      sum75 += row.metrics.ap75;
      lo = std::min(lo, row.metrics.ap);
      hi = std::max(hi, row.metrics.ap);
      ++n;
    }
    summary += label + "," + std::to_string(n) + "," + format_double(sum / n) + "," +
               format_double(lo) + "," + format_double(hi) + "," + format_double(sum50 / n) +
               "," + format_double(sum75 / n) + "\n";
  }
  out.summary_path = cfg.out_dir + "/ablation_summary.csv";
  write_text(out.summary_path, summary);
  return out;
}

void write_detection_dump(const std::string& path, const std::vector<int>& scene_ids,
                          const std::vector<std::vector<Detection>>& per_scene) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  for (std::size_t i = 0; i < scene_ids.size(); ++i) {
    json dets = json::array();
    for (const Detection& d : per_scene[i]) {
      dets.push_back(json{{"box", {d.box.x1, d.box.y1, d.box.x2, d.box.y2}},
                          {"class_id", d.class_id},
                          {"prior", d.score.prior},
                          {"cls", d.score.cls},
                          {"fused", d.score.fused}});
    }
    out << json{{"scene_id", scene_ids[i]}, {"detections", dets}}.dump() << "\n";
  }
}

void write_gt_dump(const std::string& path, const std::vector<int>& scene_ids,
                   const std::vector<std::vector<EvalGt>>& per_scene) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  for (std::size_t i = 0; i < scene_ids.size(); ++i) {
    json objects = json::array();
    for (const EvalGt& gt : per_scene[i]) {
      objects.push_back(json{{"box", {gt.box.x1, gt.box.y1, gt.box.x2, gt.box.y2}},
                             {"class_id", gt.class_id}});
    }
    out << json{{"scene_id", scene_ids[i]}, {"objects", objects}}.dump() << "\n";
  }
}

std::vector<EvalDetection> read_detection_dump(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::vector<EvalDetection> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const json record = json::parse(line);
    const int scene_id = record.at("scene_id").get<int>();
    for (const json& d : record.at("detections")) {
      const auto& b = d.at("box");
      out.push_back(EvalDetection{
          scene_id,
          Box(b.at(0).get<double>(), b.at(1).get<double>(), b.at(2).get<double>(),
              b.at(3).get<double>()),
          d.at("class_id").get<int>(), d.at("fused").get<double>()});
    }
  }
  return out;
}

std::vector<EvalGt> read_gt_dump(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::vector<EvalGt> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const json record = json::parse(line);
    const int scene_id = record.at("scene_id").get<int>();
    for (const json& g : record.at("objects")) {
      const auto& b = g.at("box");
      out.push_back(EvalGt{scene_id,
                           Box(b.at(0).get<double>(), b.at(1).get<double>(),
                               b.at(2).get<double>(), b.at(3).get<double>()),
                           g.at("class_id").get<int>()});
    }
  }
  return out;
}

std::string read_checkpoint_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open checkpoint '" + path + "'");
  json doc;
  in >> doc;
  return doc.at("manifest").dump();
}

}  // namespace boostdet
