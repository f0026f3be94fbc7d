#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "xgen/autodiff.hpp"
#include "xgen/crossfield.hpp"
#include "xgen/sparse_grid.hpp"
#include "xgen/tsdf.hpp"

namespace xgen {

struct NetworkConfig {
  int input_resolution = 64;
  // channel per encoder resolution level, finest first; one stride-2 conv
  // between consecutive levels
  std::vector<int> encoder_channels = {8, 16, 32, 64, 64};
  // channels per decoder level, coarsest first; one upsampling per level
  std::vector<int> decoder_channels = {64, 32, 16};
  int latent_dim = 64;
  int head_hidden = 64;
  int decoder_convs_per_level = 2;
  int residual_blocks_per_level = 1;
  enum class FieldHead { direction, rotation_angle };
  FieldHead field_head = FieldHead::direction;
  bool concat_normal = false;
  double leaky_slope = 0.01;
  double logvar_clamp = 10.0;
  double shell_epsilon = 0.02;  // drives ground-truth occupancy labels

  void validate() const;
  int encoder_steps() const { return int(encoder_channels.size()) - 1; }
  int latent_resolution() const { return input_resolution >> encoder_steps(); }
  int final_resolution() const { return latent_resolution() << int(decoder_channels.size()); }
  int feature_dim() const { return decoder_channels.back(); }
  int head_input_dim() const { return feature_dim() + (concat_normal ? 3 : 0); }
};

struct LossWeights {
  double occupancy = 1.0, crossfield = 1.0, sdf = 1.0, kl = 1e-6;
};

struct LossBreakdown {
  double total = 0, occupancy = 0, crossfield = 0, sdf = 0, kl = 0;
};

// Named trainable tensors plus Adam state, iterated in creation order.
struct Parameters {
  struct Entry {
    std::string name;
    int rows = 0, cols = 0;
    std::vector<double> value, m, v;
  };
  std::vector<Entry> entries;
  std::unordered_map<std::string, int> index;

  Entry& create(const std::string& name, int rows, int cols);
  const Entry& at(const std::string& name) const;
  Entry& at(const std::string& name);
  size_t total_values() const;
};

// deterministic fan-in uniform init of all tensors for the given config
Parameters init_parameters(const NetworkConfig& cfg, uint64_t seed);

struct AdamSettings {
  double lr = 1e-4, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
};

// Ground-truth occupancy for decoder gating: label per candidate vertex.
using OccupancyOracle = std::function<std::vector<double>(const SparseVoxelGrid& candidates)>;

// Vertex v is occupied when |sdf| at v is within shell_epsilon plus one cell
// diagonal, evaluated in the un-augmented frame via inverse-rotating the
// query. `rotation` may be identity.
OccupancyOracle shell_occupancy_oracle(const DenseSdfGrid& sdf, double shell_epsilon,
                                       const Eigen::Matrix3d& rotation);

struct EncodeResult {
  SparseVoxelGrid latent_keys;              // keys only
  ad::Tape::Index mean = -1, logvar = -1;   // latent_count x latent_dim
  std::vector<SparseVoxelGrid> level_keys;  // occupancy per encoder level, finest first
};

struct DecodeResult {
  struct Level {
    SparseVoxelGrid candidates;  // keys only
    ad::Tape::Index logits = -1;
    std::vector<double> labels;  // teacher-forcing labels; empty at inference
    size_t kept = 0;
  };
  std::vector<Level> levels;
  SparseVoxelGrid final_keys;         // kept sites of the last level
  ad::Tape::Index features = -1;      // kept x feature_dim
};

// One differentiable forward pass; parameter tensors are materialized as tape
// leaves on first use (gradients flow into them when trainable).
class ModelRun {
 public:
  ModelRun(const NetworkConfig& cfg, const Parameters& params, bool trainable);

  ad::Tape& tape() { return tape_; }
  ad::Tape::Index param(const std::string& name);
  const std::vector<double>& param_gradient(const std::string& name) const;

  EncodeResult encode(const SparseVoxelGrid& input_grid);
  // stochastic: mean + sigma*eta with counter-based noise; otherwise mean
  ad::Tape::Index latent_sample(const EncodeResult& enc, bool stochastic, uint64_t noise_seed);
  // gt == nullptr -> inference gating via sigmoid(logit) > 0.5
  DecodeResult decode(ad::Tape::Index latent, const SparseVoxelGrid& latent_keys,
                      const OccupancyOracle* gt);
  // trilinear features of the final grid at the given points
  ad::Tape::Index features_at(const DecodeResult& dec, const std::vector<Vec3>& points);
  ad::Tape::Index sdf_head(ad::Tape::Index features);
  // alpha via the configured head; normals are row-wise unit vectors
  ad::Tape::Index field_head(ad::Tape::Index features, const std::vector<Vec3>& normals);

  struct LossInputs {
    ad::Tape::Index alpha = -1;                 // P x 3
    std::vector<double> mu, nu;                 // 3P
    ad::Tape::Index sdf_pred = -1;              // Q x 1
    std::vector<double> sdf_target;             // Q
    const DecodeResult* decode = nullptr;       // occupancy logits + labels
    const EncodeResult* encode = nullptr;       // KL
  };
  ad::Tape::Index total_loss(const LossInputs& in, const LossWeights& weights,
                             LossBreakdown* breakdown = nullptr);

 private:
  ad::Tape::Index conv_block(ad::Tape::Index x, const SparseVoxelGrid& grid,
                             const std::vector<int32_t>& nb, const std::string& prefix,
                             int channels);

  const NetworkConfig& cfg_;
  const Parameters& params_;
  bool trainable_;
  ad::Tape tape_;
  std::unordered_map<std::string, ad::Tape::Index> param_nodes_;
};

// neighbor tables (27 entries per output site, -1 when absent)
std::vector<int32_t> stride1_neighbors(const SparseVoxelGrid& grid);
std::vector<int32_t> stride2_neighbors(const SparseVoxelGrid& out_keys,
                                       const SparseVoxelGrid& in_grid);
// all 8 children of each key, sorted, with parent row indices
SparseVoxelGrid children_keys(const SparseVoxelGrid& coarse, std::vector<int>* parent_index);

// --- training ------------------------------------------------------------

struct ShapeRecord {
  std::string id;
  OrientedPointCloud cloud;        // surface point set P with normals
  std::vector<Vec3> gt_mu, gt_nu;  // ground-truth cross per cloud point
  DenseSdfGrid sdf;
  SdfSamples shell;  // query set Q (includes P when built by the dataset op)
};

struct TrainConfig {
  AdamSettings adam;
  LossWeights weights;
  int batch_size = 16;
  int epochs = 100;
  int checkpoint_every_epochs = 50;
  bool augment_rotations = true;
  bool augment_point_drop = true;
  double point_drop_max = 0.5;
  double jitter_sigma = 0.0;  // optional Gaussian point jitter
  int points_per_step = 2048;   // cross-field supervision minibatch
  int queries_per_step = 2048;  // SDF supervision minibatch
  uint64_t seed = 0;
  int workers = 0;  // batch members processed in parallel
  std::filesystem::path nan_dump_path;  // diagnostic dump on NaN loss
};

class Trainer {
 public:
  Trainer(const NetworkConfig& cfg, const TrainConfig& tcfg, std::vector<ShapeRecord> shapes);

  LossBreakdown step();  // one Adam update over the next batch
  int steps_per_epoch() const;
  uint64_t adam_steps() const { return adam_step_; }
  const Parameters& params() const { return params_; }
  Parameters& params() { return params_; }
  const NetworkConfig& config() const { return cfg_; }
  const std::vector<ShapeRecord>& shapes() const { return shapes_; }

 private:
  LossBreakdown member_pass(size_t shape_idx, uint64_t step_seed,
                            std::vector<std::vector<double>>& grads);

  NetworkConfig cfg_;
  TrainConfig tcfg_;
  std::vector<ShapeRecord> shapes_;
  Parameters params_;
  uint64_t adam_step_ = 0;
  uint64_t sample_counter_ = 0;
  std::vector<int> order_;
  size_t order_pos_ = 0;
  int epoch_ = 0;
};

// --- checkpoints & inference --------------------------------------------

struct Checkpoint {
  NetworkConfig config;
  std::string config_json;  // canonical blob embedded in the file
  Parameters params;
  uint64_t adam_step = 0;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);
NetworkConfig network_config_from_json(const std::string& json_text);
std::string network_config_to_json(const NetworkConfig& cfg);

// Eval-mode (deterministic) decoded shape: encode with latent mean, decode
// with thresholded occupancy gating. Field/SDF queries append to the tape.
class DecodedShape {
 public:
  DecodedShape(const OrientedPointCloud& cloud, const Checkpoint& ckpt, int quantize_resolution);

  // one cross sample per site; normals define the tangent projection
  CrossField field_at(const std::vector<Vec3>& points, const std::vector<Vec3>& normals,
                      FieldSite site);
  std::vector<double> sdf_at(const std::vector<Vec3>& points);
  // dense SDF on the final decoder grid: head values on occupied vertices,
  // +-truncation elsewhere with the sign resolved by flood fill from the
  // domain boundary
  DenseSdfGrid dense_sdf(double truncation);
  const SparseVoxelGrid& final_keys() const { return dec_.final_keys; }

 private:
  const Checkpoint& ckpt_;
  ModelRun run_;
  DecodeResult dec_;
};

struct InferenceResult {
  CrossField field;
  std::optional<DenseSdfGrid> sdf;
  std::optional<TriangleMesh> surface;
  double seconds = 0.0;
};

// Mesh path: sample the surface, encode/decode, query the field at face
// centers (or vertices).
InferenceResult infer_mesh(const TriangleMesh& mesh, const Checkpoint& ckpt, FieldSite sites,
                           size_t sample_count, uint64_t seed);
// Cloud path: reconstruct the surface from the SDF head via marching cubes,
// then query the field at its face centers.
InferenceResult infer_cloud(const OrientedPointCloud& cloud, const Checkpoint& ckpt,
                            double truncation);

}  // namespace xgen
