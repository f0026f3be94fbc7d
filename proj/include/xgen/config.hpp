#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "xgen/network.hpp"

namespace xgen {

// Canonical pipeline configuration. Serialized with sorted keys so the hash
// is stable; unknown keys anywhere are rejected.
struct PipelineConfig {
  uint64_t seed = 12345;
  int workers = 0;

  struct Normalize {
    double margin = 0.02;
  } normalize;

  struct Grid {
    int resolution = 64;  // quantization resolution for the network input
  } grid;

  struct Tsdf {
    int resolution = 64;
    double truncation = 0.1;
    double shell_epsilon = 0.02;
    int shell_count = 4096;
    bool shell_include_surface = true;  // append P to Q
  } tsdf;

  struct GtField {
    int iterations = 50;
    double smooth_weight = 1.0;
  } gt_field;

  NetworkConfig network;

  struct Train {
    double lr = 1e-4;
    int batch_size = 16;
    int epochs = 100;
    int checkpoint_every_epochs = 50;
    bool augment_rotations = true;
    bool augment_point_drop = true;
    double point_drop_max = 0.5;
    double jitter_sigma = 0.0;
    int points_per_step = 2048;
    int queries_per_step = 2048;
    bool resample_shell_per_epoch = false;
    double weight_occupancy = 1.0;
    double weight_crossfield = 1.0;
    double weight_sdf = 1.0;
    double weight_kl = 1e-6;
  } train;

  struct Metrics {
    double anisotropy_mask = 0.05;
    int chamfer_samples = 100000;
  } metrics;

  struct Dataset {
    int augmentations = 6;
    int surface_samples = 150000;
  } dataset;

  void validate() const;
  std::string to_canonical_json() const;
  uint64_t hash() const;
  TrainConfig train_config() const;

  static PipelineConfig from_json_text(const std::string& text);
  static PipelineConfig load(const std::filesystem::path& path);
};

}  // namespace xgen
