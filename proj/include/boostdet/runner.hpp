#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "boostdet/config.hpp"
#include "boostdet/losses.hpp"
#include "boostdet/postprocess.hpp"

namespace boostdet {

struct GenDataOutcome {
  std::string path;
  int n_scenes = 0;
  int n_train = 0;
  int n_val = 0;
  std::size_t n_objects = 0;
};

GenDataOutcome run_gen_data(const RunConfig& cfg);

struct EpochStats {
  int epoch = 0;
  double learning_rate = 0.0;
  LossComponents weighted_mean;  // lambda-weighted component means
  double total = 0.0;
};

struct TrainOutcome {
  std::vector<EpochStats> epochs;
  std::string checkpoint_path;
  std::string log_path;
  bool diverged = false;
  int last_epoch = 0;
};

TrainOutcome run_train(const RunConfig& cfg);

struct VariantMetrics {
  std::string variant;
  ApResult metrics;
};

struct EvalOutcome {
  ApResult metrics;
  std::vector<VariantMetrics> extra_variants;
  std::string metrics_path;
  std::string detections_path;
  std::string gt_path;
  int n_scenes = 0;
};

EvalOutcome run_eval(const RunConfig& cfg);

struct AblateRow {
  std::string variant;   // ladder rung or sweep label
  double parameter = 0.0;  // eta / omega for sweeps, rung index for the ladder
  bool normalize = true;   // omega sweep only
  std::uint64_t seed = 0;
  ApResult metrics;
};

struct AblateOutcome {
  std::vector<AblateRow> rows;
  std::string csv_path;
  std::string summary_path;
};

AblateOutcome run_ablate(const RunConfig& cfg);

struct GradCheckEntry {
  std::string name;
  int points = 0;
  double worst_rel_error = 0.0;
  bool pass = false;
};

struct GradCheckReport {
  double tolerance = 1e-4;
  bool all_pass = false;
  std::vector<GradCheckEntry> entries;
};

GradCheckReport run_grad_check(std::uint64_t seed = 1234, int points_per_check = 200);
std::string grad_check_report_json(const GradCheckReport& report);

struct PlotOutcome {
  std::vector<std::string> files;
};

// Renders whatever inputs the config points at: ablation/sweep CSVs become
// bar/line charts, detection + gt dumps become PR curves (SVG + CSV).
// Throws InputError when nothing is available to plot.
PlotOutcome run_plot(const RunConfig& cfg);

// Detection dump helpers (line-delimited JSON, one record per scene).
void write_detection_dump(const std::string& path,
                          const std::vector<int>& scene_ids,
                          const std::vector<std::vector<Detection>>& per_scene);
void write_gt_dump(const std::string& path, const std::vector<int>& scene_ids,
                   const std::vector<std::vector<EvalGt>>& per_scene);
std::vector<EvalDetection> read_detection_dump(const std::string& path);
std::vector<EvalGt> read_gt_dump(const std::string& path);

// Reads the manifest JSON out of a checkpoint without loading parameters.
std::string read_checkpoint_manifest(const std::string& path);

int thread_budget(int jobs);  // BOOSTDET_THREADS cap, else hardware concurrency

}  // namespace boostdet
