#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "boostdet/box.hpp"
#include "boostdet/grid.hpp"

namespace boostdet {

struct SceneObject {
  Box box;
  int class_id = 0;
  double vagueness = 0.0;  // 0 = pure class signature, 1 = background mimicry
  bool occluder = false;   // rendered on top of non-occluders
};

struct SceneSpec {
  std::uint64_t seed = 0;
  int grid_h = 64;
  int grid_w = 64;
  int channels = 8;
  int num_classes = 3;
  double noise_sigma = 0.1;
  std::vector<SceneObject> objects;

  void validate() const;
};

struct Scene {
  int scene_id = 0;
  SceneSpec spec;
  Grid features;
};

struct SynthConfig {
  int n_scenes = 625;
  int grid_size = 64;
  int channels = 8;
  int num_classes = 3;
  double vagueness_mix = 0.5;  // fraction of hard (v >= 0.5) objects
  int min_objects = 1;
  int max_objects = 4;
  double noise_sigma = 0.1;
  double occluder_fraction = 0.2;  // chance a scene gains an overlapping occluder
  double min_side = 6.0;
  double max_side = 28.0;

  void validate() const;
};

struct Dataset {
  std::uint64_t seed = 0;
  SynthConfig config;
  std::vector<SceneSpec> specs;
  std::vector<int> train_ids;
  std::vector<int> val_ids;
};

// Class signatures are pairwise orthogonal unit vectors in channel space;
// index num_classes is the background signature.
std::vector<double> class_signature(int class_id, int channels, int num_classes);
std::vector<double> background_signature(int channels, int num_classes);

// Render a scene from its spec. Background cells carry the background
// signature plus Gaussian noise; object cells blend
// (1-v)*class + v*background plus noise, later objects overwriting earlier
// ones (occluders always on top). Bitwise deterministic given the spec.
Scene generate_scene(const SceneSpec& spec, int scene_id = 0);

// Deterministic dataset of scene specs plus an 80/20 train/val split by scene
// index hash. Every generated box has IoU >= 0.5 with at least one anchor of
// the default toy anchor grid.
Dataset generate_dataset(std::uint64_t seed, const SynthConfig& cfg);

// JSON-lines persistence: a header line (seed, config, split) followed by one
// scene record per line with base64-packed float64 features.
void save_dataset(const Dataset& dataset, const std::string& path);

struct LoadedDataset {
  Dataset meta;
  std::vector<Scene> scenes;
};

LoadedDataset load_dataset(const std::string& path);

}  // namespace boostdet
