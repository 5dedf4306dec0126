#include "boostdet/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "json.hpp"

#include "boostdet/anchors.hpp"
#include "boostdet/base64.hpp"
#include "boostdet/errors.hpp"
#include "boostdet/rng.hpp"

namespace boostdet {

using nlohmann::json;

void SceneSpec::validate() const {
  if (grid_h <= 0 || grid_w <= 0 || channels <= 0) {
    throw ConfigError("scene spec: grid dimensions must be positive");
  }
  if (channels < num_classes + 1) {
    throw ConfigError("scene spec: channels must be >= num_classes + 1 for orthogonal signatures");
  }
  for (const SceneObject& obj : objects) {
    if (obj.class_id < 0 || obj.class_id >= num_classes) {
      throw ConfigError("scene spec: object class out of range");
    }
    if (obj.vagueness < 0.0 || obj.vagueness > 1.0) {
      throw ConfigError("scene spec: vagueness must lie in [0,1]");
    }
    if (obj.box.x1 < 0.0 || obj.box.y1 < 0.0 || obj.box.x2 > grid_w || obj.box.y2 > grid_h ||
        obj.box.degenerate()) {
      throw ConfigError("scene spec: object box must be non-degenerate and inside the grid");
    }
  }
}

void SynthConfig::validate() const {
  if (n_scenes < 1) throw ConfigError("dataset.n_scenes must be >= 1");
  if (grid_size <= 0) throw ConfigError("dataset.grid_size must be positive");
  if (channels < num_classes + 1) {
    throw ConfigError("dataset.channels must be >= num_classes + 1");
  }
  if (num_classes < 1) throw ConfigError("dataset.num_classes must be >= 1");
  if (vagueness_mix < 0.0 || vagueness_mix > 1.0) {
    throw ConfigError("dataset.vagueness_mix must lie in [0,1]");
  }
  if (min_objects < 0 || max_objects < min_objects) {
    throw ConfigError("dataset object count range invalid");
  }
  if (noise_sigma < 0.0) throw ConfigError("dataset.noise_sigma must be >= 0");
  if (occluder_fraction < 0.0 || occluder_fraction > 1.0) {
    throw ConfigError("dataset.occluder_fraction must lie in [0,1]");
  }
  if (!(min_side > 0.0) || max_side < min_side || max_side > grid_size) {
    throw ConfigError("dataset object side range invalid");
  }
}

std::vector<double> class_signature(int class_id, int channels, int num_classes) {
  if (class_id < 0 || class_id >= num_classes || channels < num_classes + 1) {
    throw ConfigError("class_signature: invalid class or channel count");
  }
  std::vector<double> sig(channels, 0.0);
  sig[class_id] = 1.0;
  return sig;
}

std::vector<double> background_signature(int channels, int num_classes) {
  if (channels < num_classes + 1) {
    throw ConfigError("background_signature: channels must exceed num_classes");
  }
  std::vector<double> sig(channels, 0.0);
  sig[num_classes] = 1.0;
  return sig;
}

Scene generate_scene(const SceneSpec& spec, int scene_id) {
  spec.validate();
  Scene scene;
  scene.scene_id = scene_id;
  scene.spec = spec;
  scene.features = Grid(spec.grid_h, spec.grid_w, spec.channels);

  Rng rng(derive_seed(spec.seed, 22));
  const std::vector<double> bg = background_signature(spec.channels, spec.num_classes);

  Grid& g = scene.features;
  for (int h = 0; h < spec.grid_h; ++h) {
    for (int w = 0; w < spec.grid_w; ++w) {
      double* cell = g.cell(h, w);
      for (int c = 0; c < spec.channels; ++c) {
        cell[c] = bg[c] + spec.noise_sigma * rng.normal();
      }
    }
  }

  // non-occluders in list order, then occluders on top
  std::vector<const SceneObject*> render_order;
  for (const SceneObject& obj : spec.objects) {
    if (!obj.occluder) render_order.push_back(&obj);
  }
  for (const SceneObject& obj : spec.objects) {
    if (obj.occluder) render_order.push_back(&obj);
  }

  for (const SceneObject* obj : render_order) {
    const std::vector<double> sig =
        class_signature(obj->class_id, spec.channels, spec.num_classes);
    const double v = obj->vagueness;
    for (int h = 0; h < spec.grid_h; ++h) {
      const double cy = h + 0.5;
      if (cy < obj->box.y1 || cy > obj->box.y2) continue;
      for (int w = 0; w < spec.grid_w; ++w) {
        const double cx = w + 0.5;
        if (cx < obj->box.x1 || cx > obj->box.x2) continue;
        double* cell = g.cell(h, w);
        for (int c = 0; c < spec.channels; ++c) {
          cell[c] = (1.0 - v) * sig[c] + v * bg[c] + spec.noise_sigma * rng.normal();
        }
      }
    }
  }
  return scene;
}

namespace {

std::vector<LevelShape> toy_pyramid_shapes(int grid_size, const AnchorConfig& cfg) {
  std::vector<LevelShape> shapes;
  for (double stride : cfg.strides) {
    LevelShape s;
    s.stride = stride;
    s.height = std::max(1, static_cast<int>(grid_size / stride));
    s.width = s.height;
    shapes.push_back(s);
  }
  return shapes;
}

double best_anchor_iou(const Box& box, const std::vector<Anchor>& anchors) {
  double best = 0.0;
  for (const Anchor& a : anchors) best = std::max(best, iou(box, a.box));
  return best;
}

Box draw_box(Rng& rng, const SynthConfig& cfg) {
  const double size = cfg.grid_size;
  const double w = rng.uniform(cfg.min_side, std::min(cfg.max_side, size));
  const double lo_h = std::max(cfg.min_side, 0.5 * w);
  const double hi_h = std::min(std::min(cfg.max_side, size), 2.0 * w);
  const double h = rng.uniform(lo_h, std::max(lo_h, hi_h));
  const double cx = rng.uniform(0.5 * w, size - 0.5 * w);
  const double cy = rng.uniform(0.5 * h, size - 0.5 * h);
  return Box::from_center(cx, cy, w, h);
}

// Pick an object box with anchor coverage: rejection sample, then fall back to
// the best fully-inside anchor box so the trainability invariant always holds.
Box draw_trainable_box(Rng& rng, const SynthConfig& cfg, const std::vector<Anchor>& anchors,
                       const std::vector<const Anchor*>& inside_anchors) {
  Box candidate;
  for (int attempt = 0; attempt < 200; ++attempt) {
    candidate = draw_box(rng, cfg);
    if (best_anchor_iou(candidate, anchors) >= 0.5) return candidate;
  }
  const Anchor* best = inside_anchors.front();
  double best_iou_value = -1.0;
  for (const Anchor* a : inside_anchors) {
    const double v = iou(candidate, a->box);
    if (v > best_iou_value) {
      best_iou_value = v;
      best = a;
    }
  }
  return best->box;
}

}  // namespace

Dataset generate_dataset(std::uint64_t seed, const SynthConfig& cfg) {
  cfg.validate();
  Dataset dataset;
  dataset.seed = seed;
  dataset.config = cfg;

  const AnchorConfig anchor_cfg;  // default toy anchors
  const std::vector<Anchor> anchors =
      generate_anchors(toy_pyramid_shapes(cfg.grid_size, anchor_cfg), anchor_cfg);
  std::vector<const Anchor*> inside;
  for (const Anchor& a : anchors) {
    if (a.box.x1 >= 0.0 && a.box.y1 >= 0.0 && a.box.x2 <= cfg.grid_size &&
        a.box.y2 <= cfg.grid_size) {
      inside.push_back(&a);
    }
  }
  if (inside.empty()) throw ConfigError("generate_dataset: no anchor fits inside the grid");

  dataset.specs.reserve(cfg.n_scenes);
  for (int i = 0; i < cfg.n_scenes; ++i) {
    SceneSpec spec;
    spec.seed = derive_seed(seed, static_cast<std::uint64_t>(i), 1);
    spec.grid_h = cfg.grid_size;
    spec.grid_w = cfg.grid_size;
    spec.channels = cfg.channels;
    spec.num_classes = cfg.num_classes;
    spec.noise_sigma = cfg.noise_sigma;

    Rng rng(derive_seed(spec.seed, 11));
    const int n_objects =
        cfg.min_objects +
        (cfg.max_objects > cfg.min_objects
             ? static_cast<int>(rng.uniform_index(cfg.max_objects - cfg.min_objects + 1))
             : 0);
    for (int k = 0; k < n_objects; ++k) {
      SceneObject obj;
      obj.class_id = static_cast<int>(rng.uniform_index(cfg.num_classes));
      const bool hard = rng.uniform() < cfg.vagueness_mix;
      obj.vagueness = hard ? rng.uniform(0.5, 0.9) : rng.uniform(0.0, 0.3);
      obj.box = draw_trainable_box(rng, cfg, anchors, inside);
      spec.objects.push_back(obj);
    }

    // occasionally stack an occluding object on an existing one
    if (!spec.objects.empty() && rng.uniform() < cfg.occluder_fraction) {
      const SceneObject& target =
          spec.objects[rng.uniform_index(spec.objects.size())];
      for (int attempt = 0; attempt < 50; ++attempt) {
        Box candidate = draw_box(rng, cfg);
        const double dx = target.box.cx() - candidate.cx();
        const double dy = target.box.cy() - candidate.cy();
        candidate = clip(Box(candidate.x1 + dx * 0.7, candidate.y1 + dy * 0.7,
                             candidate.x2 + dx * 0.7, candidate.y2 + dy * 0.7),
                         cfg.grid_size, cfg.grid_size);
        if (candidate.degenerate()) continue;
        if (iou(candidate, target.box) <= 0.1) continue;
        if (best_anchor_iou(candidate, anchors) < 0.5) continue;
        SceneObject obj;
        obj.class_id = static_cast<int>(rng.uniform_index(cfg.num_classes));
        const bool hard = rng.uniform() < cfg.vagueness_mix;
        obj.vagueness = hard ? rng.uniform(0.5, 0.9) : rng.uniform(0.0, 0.3);
        obj.box = candidate;
        obj.occluder = true;
        spec.objects.push_back(obj);
        break;
      }
    }
    dataset.specs.push_back(std::move(spec));
  }

  // 80/20 split: the scenes with the largest index hashes become validation
  const int n_val = cfg.n_scenes / 5;
  std::vector<int> order(cfg.n_scenes);
  std::iota(order.begin(), order.end(), 0);
  std::vector<std::uint64_t> hashes(cfg.n_scenes);
  for (int i = 0; i < cfg.n_scenes; ++i) {
    hashes[i] = derive_seed(seed, static_cast<std::uint64_t>(i), 0x5f17);
  }
  std::sort(order.begin(), order.end(), [&hashes](int a, int b) {
    if (hashes[a] != hashes[b]) return hashes[a] > hashes[b];
    return a < b;
  });
  dataset.val_ids.assign(order.begin(), order.begin() + n_val);
  dataset.train_ids.assign(order.begin() + n_val, order.end());
  std::sort(dataset.val_ids.begin(), dataset.val_ids.end());
  std::sort(dataset.train_ids.begin(), dataset.train_ids.end());
  return dataset;
}

namespace {

json config_to_json(const SynthConfig& cfg) {
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

SynthConfig config_from_json(const json& j) {
  SynthConfig cfg;
  cfg.n_scenes = j.at("n_scenes").get<int>();
  cfg.grid_size = j.at("grid_size").get<int>();
  cfg.channels = j.at("channels").get<int>();
  cfg.num_classes = j.at("num_classes").get<int>();
  cfg.vagueness_mix = j.at("vagueness_mix").get<double>();
  cfg.min_objects = j.at("min_objects").get<int>();
  cfg.max_objects = j.at("max_objects").get<int>();
  cfg.noise_sigma = j.at("noise_sigma").get<double>();
  cfg.occluder_fraction = j.at("occluder_fraction").get<double>();
  cfg.min_side = j.at("min_side").get<double>();
  cfg.max_side = j.at("max_side").get<double>();
  return cfg;
}

json objects_to_json(const std::vector<SceneObject>& objects) {
  json arr = json::array();
  for (const SceneObject& obj : objects) {
    arr.push_back(json{{"box", {obj.box.x1, obj.box.y1, obj.box.x2, obj.box.y2}},
                       {"class_id", obj.class_id},
                       {"vagueness", obj.vagueness},
                       {"occluder", obj.occluder}});
  }
  return arr;
}

std::vector<SceneObject> objects_from_json(const json& arr) {
  std::vector<SceneObject> out;
  for (const json& j : arr) {
    SceneObject obj;
    const auto& b = j.at("box");
    obj.box = Box(b.at(0).get<double>(), b.at(1).get<double>(), b.at(2).get<double>(),
                  b.at(3).get<double>());
    obj.class_id = j.at("class_id").get<int>();
    obj.vagueness = j.at("vagueness").get<double>();
    obj.occluder = j.at("occluder").get<bool>();
    out.push_back(obj);
  }
  return out;
}

}  // namespace

void save_dataset(const Dataset& dataset, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("save_dataset: cannot open '" + path + "' for writing");

  json header{{"format", "boostdet-scenes-v1"},
              {"seed", dataset.seed},
              {"n_scenes", static_cast<int>(dataset.specs.size())},
              {"config", config_to_json(dataset.config)},
              {"train_ids", dataset.train_ids},
              {"val_ids", dataset.val_ids}};
  out << header.dump() << "\n";

  for (std::size_t i = 0; i < dataset.specs.size(); ++i) {
    const SceneSpec& spec = dataset.specs[i];
    const Scene scene = generate_scene(spec, static_cast<int>(i));
    json record{{"scene_id", static_cast<int>(i)},
                {"seed", spec.seed},
                {"objects", objects_to_json(spec.objects)},
                {"features",
                 json{{"height", spec.grid_h},
                      {"width", spec.grid_w},
                      {"channels", spec.channels},
                      {"data_b64", doubles_to_base64(scene.features.values())}}}};
    out << record.dump() << "\n";
  }
  if (!out) throw IoError("save_dataset: write to '" + path + "' failed");
}

LoadedDataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("load_dataset: cannot open '" + path + "'");

  std::string line;
  if (!std::getline(in, line)) throw IoError("load_dataset: empty file");
  json header = json::parse(line);
  if (header.value("format", "") != "boostdet-scenes-v1") {
    throw IoError("load_dataset: unrecognized format");
  }

  LoadedDataset out;
  out.meta.seed = header.at("seed").get<std::uint64_t>();
  out.meta.config = config_from_json(header.at("config"));
  out.meta.train_ids = header.at("train_ids").get<std::vector<int>>();
  out.meta.val_ids = header.at("val_ids").get<std::vector<int>>();

  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json record = json::parse(line);
    Scene scene;
    scene.scene_id = record.at("scene_id").get<int>();
    SceneSpec spec;
    spec.seed = record.at("seed").get<std::uint64_t>();
    spec.grid_h = record.at("features").at("height").get<int>();
    spec.grid_w = record.at("features").at("width").get<int>();
    spec.channels = record.at("features").at("channels").get<int>();
    spec.num_classes = out.meta.config.num_classes;
    spec.noise_sigma = out.meta.config.noise_sigma;
    spec.objects = objects_from_json(record.at("objects"));
    scene.spec = spec;
    scene.features = Grid(spec.grid_h, spec.grid_w, spec.channels);
    scene.features.values() = base64_to_doubles(record.at("features").at("data_b64").get<std::string>());
    if (scene.features.values().size() !=
        static_cast<std::size_t>(spec.grid_h) * spec.grid_w * spec.channels) {
      throw IoError("load_dataset: feature payload size mismatch");
    }
    out.meta.specs.push_back(spec);
    out.scenes.push_back(std::move(scene));
  }
  return out;
}

}  // namespace boostdet
