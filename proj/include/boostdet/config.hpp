#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "boostdet/detector.hpp"
#include "boostdet/synthdata.hpp"

namespace boostdet {

struct SchedulePlan {
  int epochs = 12;
  double base_learning_rate = 0.01;
  std::vector<int> decay_epochs{8, 11};  // 1-indexed; rate divides by the factor from here on
  double decay_factor = 0.1;
  void validate() const;
  double learning_rate_for_epoch(int epoch) const;  // epoch is 1-indexed
};

enum class AblateMode { ladder, eta_sweep, omega_sweep };

struct AblateConfig {
  AblateMode mode = AblateMode::ladder;
  int num_seeds = 3;
  int epochs = 0;  // 0: use the schedule's epoch count
  std::vector<double> eta_values{0.0, 0.5, 1.0, 2.0, 3.0};
  std::vector<double> omega_values{0.0, 0.25, 0.5, 0.75, 1.0};
  void validate() const;
};

struct PathConfig {
  std::string dataset;
  std::string checkpoint;
  std::string metrics;
  std::string detections;
  std::string gt;
  std::string train_log;
  std::string ablation;
  std::string resume;  // checkpoint to resume training from
};

// The full run configuration: every module config plus seed, paths and the
// requested variant. JSON round-trips with strict unknown-key rejection.
struct RunConfig {
  std::uint64_t seed = 1;
  std::string out_dir = "runs/default";
  std::string variant = "full";  // full | no-br | no-fusion | prior-only | baseline
  bool eval_all_variants = false;
  PathConfig paths;
  SynthConfig dataset;
  DetectorConfig detector;
  SchedulePlan schedule;
  AblateConfig ablate;

  void validate() const;

  // detector config with the variant toggles applied
  DetectorConfig detector_for_variant() const;

  // resolved file locations (explicit path wins, else derived from out_dir)
  std::string dataset_path() const;
  std::string checkpoint_path() const;
  std::string metrics_path() const;
  std::string detections_path() const;
  std::string gt_path() const;
  std::string train_log_path() const;
  std::string ablation_path() const;
};

RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::string& path);
std::string run_config_to_json(const RunConfig& config);  // full echo, all defaults explicit

// Applies a dotted-path override ("detector.fiou.eta" = "2.0") onto a config
// JSON document and reparses with validation.
RunConfig apply_config_override(const RunConfig& base, const std::string& key,
                                const std::string& value);

void apply_variant(DetectorConfig& config, const std::string& variant);

}  // namespace boostdet
