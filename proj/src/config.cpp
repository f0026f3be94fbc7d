#include "xgen/config.hpp"

#include <fstream>

#include <json.hpp>

#include "xgen/util.hpp"

namespace xgen {

using json = nlohmann::json;  // std::map-backed: keys serialize sorted

void PipelineConfig::validate() const {
  if (normalize.margin < 0 || normalize.margin >= 0.5) throw Error("config: bad normalize.margin");
  if (grid.resolution < 4) throw Error("config: grid.resolution too small");
  if (tsdf.resolution < 4) throw Error("config: tsdf.resolution too small");
  if (tsdf.truncation <= 0) throw Error("config: tsdf.truncation must be positive");
  if (tsdf.shell_epsilon <= 0 || tsdf.shell_epsilon > tsdf.truncation)
    throw Error("config: tsdf.shell_epsilon must be in (0, truncation]");
  if (tsdf.shell_count < 1) throw Error("config: tsdf.shell_count must be positive");
  if (gt_field.iterations < 0) throw Error("config: gt_field.iterations negative");
  if (gt_field.smooth_weight < 0) throw Error("config: gt_field.smooth_weight negative");
  if (train.lr <= 0) throw Error("config: train.lr must be positive");
  if (train.batch_size < 1) throw Error("config: train.batch_size must be positive");
  if (train.epochs < 0) throw Error("config: train.epochs negative");
  if (train.point_drop_max < 0 || train.point_drop_max > 1)
    throw Error("config: train.point_drop_max must be in [0,1]");
  if (metrics.chamfer_samples < 1) throw Error("config: metrics.chamfer_samples must be positive");
  if (dataset.augmentations < 1) throw Error("config: dataset.augmentations must be positive");
  if (dataset.surface_samples < 1) throw Error("config: dataset.surface_samples must be positive");
  network.validate();
}

std::string PipelineConfig::to_canonical_json() const {
  json j;
  j["seed"] = seed;
  j["workers"] = workers;
  j["normalize"]["margin"] = normalize.margin;
  j["grid"]["resolution"] = grid.resolution;
  j["tsdf"]["resolution"] = tsdf.resolution;
  j["tsdf"]["truncation"] = tsdf.truncation;
  j["tsdf"]["shell_epsilon"] = tsdf.shell_epsilon;
  j["tsdf"]["shell_count"] = tsdf.shell_count;
  j["tsdf"]["shell_include_surface"] = tsdf.shell_include_surface;
  j["gt_field"]["iterations"] = gt_field.iterations;
  j["gt_field"]["smooth_weight"] = gt_field.smooth_weight;
  j["network"] = json::parse(network_config_to_json(network));
  j["train"]["lr"] = train.lr;
  j["train"]["batch_size"] = train.batch_size;
  j["train"]["epochs"] = train.epochs;
  j["train"]["checkpoint_every_epochs"] = train.checkpoint_every_epochs;
  j["train"]["augment_rotations"] = train.augment_rotations;
  j["train"]["augment_point_drop"] = train.augment_point_drop;
  j["train"]["point_drop_max"] = train.point_drop_max;
  j["train"]["jitter_sigma"] = train.jitter_sigma;
  j["train"]["points_per_step"] = train.points_per_step;
  j["train"]["queries_per_step"] = train.queries_per_step;
  j["train"]["resample_shell_per_epoch"] = train.resample_shell_per_epoch;
  j["train"]["weight_occupancy"] = train.weight_occupancy;
  j["train"]["weight_crossfield"] = train.weight_crossfield;
  j["train"]["weight_sdf"] = train.weight_sdf;
  j["train"]["weight_kl"] = train.weight_kl;
  j["metrics"]["anisotropy_mask"] = metrics.anisotropy_mask;
  j["metrics"]["chamfer_samples"] = metrics.chamfer_samples;
  j["dataset"]["augmentations"] = dataset.augmentations;
  j["dataset"]["surface_samples"] = dataset.surface_samples;
  return j.dump();
}

uint64_t PipelineConfig::hash() const { return fnv1a64(to_canonical_json()); }

TrainConfig PipelineConfig::train_config() const {
  TrainConfig t;
  t.adam.lr = train.lr;
  t.batch_size = train.batch_size;
  t.epochs = train.epochs;
  t.checkpoint_every_epochs = train.checkpoint_every_epochs;
  t.augment_rotations = train.augment_rotations;
  t.augment_point_drop = train.augment_point_drop;
  t.point_drop_max = train.point_drop_max;
  t.jitter_sigma = train.jitter_sigma;
  t.points_per_step = train.points_per_step;
  t.queries_per_step = train.queries_per_step;
  t.seed = seed;
  t.workers = workers;
  t.weights.occupancy = train.weight_occupancy;
  t.weights.crossfield = train.weight_crossfield;
  t.weights.sdf = train.weight_sdf;
  t.weights.kl = train.weight_kl;
  return t;
}

namespace {

void reject_unknown(const json& j, const std::vector<std::string>& known,
                    const std::string& where) {
  if (!j.is_object()) throw Error("config: " + where + " must be an object");
  for (auto& [key, value] : j.items())
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw Error("config: unknown key '" + where + (where.empty() ? "" : ".") + key + "'");
}

template <typename T>
void get_if(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j[key].get<T>();
}

}  // namespace

PipelineConfig PipelineConfig::from_json_text(const std::string& text) {
  json j = json::parse(text);
  PipelineConfig cfg;
  reject_unknown(j, {"seed", "workers", "normalize", "grid", "tsdf", "gt_field", "network",
                     "train", "metrics", "dataset"},
                 "");
  get_if(j, "seed", cfg.seed);
  get_if(j, "workers", cfg.workers);
  if (j.contains("normalize")) {
    reject_unknown(j["normalize"], {"margin"}, "normalize");
    get_if(j["normalize"], "margin", cfg.normalize.margin);
  }
  if (j.contains("grid")) {
    reject_unknown(j["grid"], {"resolution"}, "grid");
    get_if(j["grid"], "resolution", cfg.grid.resolution);
  }
  if (j.contains("tsdf")) {
    reject_unknown(j["tsdf"],
                   {"resolution", "truncation", "shell_epsilon", "shell_count",
                    "shell_include_surface"},
                   "tsdf");
    get_if(j["tsdf"], "resolution", cfg.tsdf.resolution);
    get_if(j["tsdf"], "truncation", cfg.tsdf.truncation);
    get_if(j["tsdf"], "shell_epsilon", cfg.tsdf.shell_epsilon);
    get_if(j["tsdf"], "shell_count", cfg.tsdf.shell_count);
    get_if(j["tsdf"], "shell_include_surface", cfg.tsdf.shell_include_surface);
  }
  if (j.contains("gt_field")) {
    reject_unknown(j["gt_field"], {"iterations", "smooth_weight"}, "gt_field");
    get_if(j["gt_field"], "iterations", cfg.gt_field.iterations);
    get_if(j["gt_field"], "smooth_weight", cfg.gt_field.smooth_weight);
  }
  if (j.contains("network")) cfg.network = network_config_from_json(j["network"].dump());
  if (j.contains("train")) {
    reject_unknown(j["train"],
                   {"lr", "batch_size", "epochs", "checkpoint_every_epochs", "augment_rotations",
                    "augment_point_drop", "point_drop_max", "jitter_sigma", "points_per_step",
                    "queries_per_step", "resample_shell_per_epoch", "weight_occupancy",
                    "weight_crossfield", "weight_sdf", "weight_kl"},
                   "train");
    const json& t = j["train"];
    get_if(t, "lr", cfg.train.lr);
    get_if(t, "batch_size", cfg.train.batch_size);
    get_if(t, "epochs", cfg.train.epochs);
    get_if(t, "checkpoint_every_epochs", cfg.train.checkpoint_every_epochs);
    get_if(t, "augment_rotations", cfg.train.augment_rotations);
    get_if(t, "augment_point_drop", cfg.train.augment_point_drop);
    get_if(t, "point_drop_max", cfg.train.point_drop_max);
    get_if(t, "jitter_sigma", cfg.train.jitter_sigma);
    get_if(t, "points_per_step", cfg.train.points_per_step);
    get_if(t, "queries_per_step", cfg.train.queries_per_step);
    get_if(t, "resample_shell_per_epoch", cfg.train.resample_shell_per_epoch);
    get_if(t, "weight_occupancy", cfg.train.weight_occupancy);
    get_if(t, "weight_crossfield", cfg.train.weight_crossfield);
    get_if(t, "weight_sdf", cfg.train.weight_sdf);
    get_if(t, "weight_kl", cfg.train.weight_kl);
  }
  if (j.contains("metrics")) {
    reject_unknown(j["metrics"], {"anisotropy_mask", "chamfer_samples"}, "metrics");
    get_if(j["metrics"], "anisotropy_mask", cfg.metrics.anisotropy_mask);
    get_if(j["metrics"], "chamfer_samples", cfg.metrics.chamfer_samples);
  }
  if (j.contains("dataset")) {
    reject_unknown(j["dataset"], {"augmentations", "surface_samples"}, "dataset");
    get_if(j["dataset"], "augmentations", cfg.dataset.augmentations);
    get_if(j["dataset"], "surface_samples", cfg.dataset.surface_samples);
  }
  cfg.validate();
  return cfg;
}

PipelineConfig PipelineConfig::load(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot open config: " + path.string());
  std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return from_json_text(text);
}

}  // namespace xgen
