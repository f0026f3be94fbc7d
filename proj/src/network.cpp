#include "xgen/network.hpp"

#include <Eigen/Geometry>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <deque>
#include <fstream>

#include <json.hpp>

#include "xgen/kernels.hpp"
#include "xgen/util.hpp"

namespace xgen {

using json = nlohmann::ordered_json;

// --- config --------------------------------------------------------------

void NetworkConfig::validate() const {
  auto power_of_two = [](int v) { return v > 0 && (v & (v - 1)) == 0; };
  if (!power_of_two(input_resolution)) throw Error("network: input_resolution must be a power of two");
  if (encoder_channels.size() < 2) throw Error("network: need at least one encoder level");
  if (decoder_channels.empty()) throw Error("network: need at least one decoder level");
  for (int c : encoder_channels)
    if (c < 1) throw Error("network: encoder channel must be positive");
  for (int c : decoder_channels)
    if (c < 1) throw Error("network: decoder channel must be positive");
  if (latent_dim < 1) throw Error("network: latent_dim must be positive");
  if (head_hidden < 1) throw Error("network: head_hidden must be positive");
  if (decoder_convs_per_level < 2) throw Error("network: decoder_convs_per_level must be >= 2");
  if (residual_blocks_per_level < 0) throw Error("network: negative residual block count");
  if (input_resolution >> encoder_steps() < 1)
    throw Error("network: too many encoder levels for the input resolution");
  if (final_resolution() > input_resolution)
    throw Error("network: decoder upsamples beyond the input resolution");
  if (shell_epsilon <= 0) throw Error("network: shell_epsilon must be positive");
}

std::string network_config_to_json(const NetworkConfig& cfg) {
  json j;
  j["input_resolution"] = cfg.input_resolution;
  j["encoder_channels"] = cfg.encoder_channels;
  j["decoder_channels"] = cfg.decoder_channels;
  j["latent_dim"] = cfg.latent_dim;
  j["head_hidden"] = cfg.head_hidden;
  j["decoder_convs_per_level"] = cfg.decoder_convs_per_level;
  j["residual_blocks_per_level"] = cfg.residual_blocks_per_level;
  j["field_head_kind"] =
      cfg.field_head == NetworkConfig::FieldHead::direction ? "direction" : "rotation_angle";
  j["concat_normal"] = cfg.concat_normal;
  j["leaky_slope"] = cfg.leaky_slope;
  j["logvar_clamp"] = cfg.logvar_clamp;
  j["shell_epsilon"] = cfg.shell_epsilon;
  return j.dump();
}

NetworkConfig network_config_from_json(const std::string& text) {
  json j = json::parse(text);
  NetworkConfig cfg;
  const std::vector<std::string> known = {
      "input_resolution", "encoder_channels", "decoder_channels", "latent_dim",
      "head_hidden", "decoder_convs_per_level", "residual_blocks_per_level",
      "field_head_kind", "concat_normal", "leaky_slope", "logvar_clamp", "shell_epsilon"};
  for (auto& [key, value] : j.items())
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw Error("network config: unknown key '" + key + "'");
  if (j.contains("input_resolution")) cfg.input_resolution = j["input_resolution"].get<int>();
  if (j.contains("encoder_channels"))
    cfg.encoder_channels = j["encoder_channels"].get<std::vector<int>>();
  if (j.contains("decoder_channels"))
    cfg.decoder_channels = j["decoder_channels"].get<std::vector<int>>();
  if (j.contains("latent_dim")) cfg.latent_dim = j["latent_dim"].get<int>();
  if (j.contains("head_hidden")) cfg.head_hidden = j["head_hidden"].get<int>();
  if (j.contains("decoder_convs_per_level"))
    cfg.decoder_convs_per_level = j["decoder_convs_per_level"].get<int>();
  if (j.contains("residual_blocks_per_level"))
    cfg.residual_blocks_per_level = j["residual_blocks_per_level"].get<int>();
  if (j.contains("field_head_kind")) {
    std::string kind = j["field_head_kind"].get<std::string>();
    if (kind == "direction")
      cfg.field_head = NetworkConfig::FieldHead::direction;
    else if (kind == "rotation_angle")
      cfg.field_head = NetworkConfig::FieldHead::rotation_angle;
    else
      throw Error("network config: unknown field_head_kind '" + kind + "'");
  }
  if (j.contains("concat_normal")) cfg.concat_normal = j["concat_normal"].get<bool>();
  if (j.contains("leaky_slope")) cfg.leaky_slope = j["leaky_slope"].get<double>();
  if (j.contains("logvar_clamp")) cfg.logvar_clamp = j["logvar_clamp"].get<double>();
  if (j.contains("shell_epsilon")) cfg.shell_epsilon = j["shell_epsilon"].get<double>();
  cfg.validate();
  return cfg;
}

// --- parameters ---------------------------------------------------------

Parameters::Entry& Parameters::create(const std::string& name, int rows, int cols) {
  if (index.count(name)) throw Error("parameter '" + name + "' already exists");
  Entry e;
  e.name = name;
  e.rows = rows;
  e.cols = cols;
  e.value.assign(size_t(rows) * cols, 0.0);
  e.m.assign(e.value.size(), 0.0);
  e.v.assign(e.value.size(), 0.0);
  index[name] = int(entries.size());
  entries.push_back(std::move(e));
  return entries.back();
}

const Parameters::Entry& Parameters::at(const std::string& name) const {
  auto it = index.find(name);
  if (it == index.end()) throw Error("unknown parameter '" + name + "'");
  return entries[size_t(it->second)];
}

Parameters::Entry& Parameters::at(const std::string& name) {
  auto it = index.find(name);
  if (it == index.end()) throw Error("unknown parameter '" + name + "'");
  return entries[size_t(it->second)];
}

size_t Parameters::total_values() const {
  size_t n = 0;
  for (const auto& e : entries) n += e.value.size();
  return n;
}

namespace {

void fill_fanin_uniform(Parameters::Entry& e, int fan_in, Rng& rng) {
  double limit = std::sqrt(6.0 / std::max(1, fan_in));
  for (auto& v : e.value) v = rng.uniform(-limit, limit);
}

void create_conv(Parameters& p, const std::string& prefix, int c_in, int c_out, Rng& rng) {
  fill_fanin_uniform(p.create(prefix + ".w", 27 * c_out, c_in), 27 * c_in, rng);
  p.create(prefix + ".b", 1, c_out);
}

void create_linear(Parameters& p, const std::string& prefix, int c_in, int c_out, Rng& rng) {
  fill_fanin_uniform(p.create(prefix + ".w", c_out, c_in), c_in, rng);
  p.create(prefix + ".b", 1, c_out);
}

void create_mlp(Parameters& p, const std::string& prefix, int c_in, int hidden, int c_out,
                Rng& rng) {
  create_linear(p, prefix + ".0", c_in, hidden, rng);
  create_linear(p, prefix + ".1", hidden, hidden, rng);
  create_linear(p, prefix + ".out", hidden, c_out, rng);
}

}  // namespace

Parameters init_parameters(const NetworkConfig& cfg, uint64_t seed) {
  cfg.validate();
  Parameters p;
  Rng rng(derive_seed({seed, 0x706172616dull}));
  create_linear(p, "enc.proj", 6, cfg.encoder_channels[0], rng);
  for (int l = 0; l + 1 < int(cfg.encoder_channels.size()); ++l) {
    int c_in = cfg.encoder_channels[l], c_out = cfg.encoder_channels[l + 1];
    create_conv(p, "enc.down" + std::to_string(l), c_in, c_out, rng);
    for (int r = 0; r < cfg.residual_blocks_per_level; ++r) {
      std::string res = "enc.res" + std::to_string(l) + "." + std::to_string(r);
      create_conv(p, res + ".c1", c_out, c_out, rng);
      create_conv(p, res + ".c2", c_out, c_out, rng);
    }
  }
  int c_last = cfg.encoder_channels.back();
  create_linear(p, "enc.mean", c_last, cfg.latent_dim, rng);
  create_linear(p, "enc.logvar", c_last, cfg.latent_dim, rng);

  int c_prev = cfg.latent_dim;
  for (int l = 0; l < int(cfg.decoder_channels.size()); ++l) {
    int c = cfg.decoder_channels[l];
    create_conv(p, "dec.up" + std::to_string(l), c_prev, c, rng);
    create_linear(p, "dec.occ" + std::to_string(l), c, 1, rng);
    for (int j = 0; j < cfg.decoder_convs_per_level; ++j)
      create_conv(p, "dec.conv" + std::to_string(l) + "." + std::to_string(j), c, c, rng);
    for (int r = 0; r < cfg.residual_blocks_per_level; ++r) {
      std::string res = "dec.res" + std::to_string(l) + "." + std::to_string(r);
      create_conv(p, res + ".c1", c, c, rng);
      create_conv(p, res + ".c2", c, c, rng);
    }
    c_prev = c;
  }
  create_mlp(p, "head.sdf", cfg.head_input_dim(), cfg.head_hidden, 1, rng);
  int field_out = cfg.field_head == NetworkConfig::FieldHead::direction ? 3 : 1;
  create_mlp(p, "head.cf", cfg.head_input_dim(), cfg.head_hidden, field_out, rng);
  return p;
}

// --- neighbor tables ---------------------------------------------------------

std::vector<int32_t> stride1_neighbors(const SparseVoxelGrid& grid) {
  std::vector<int32_t> nb(grid.count() * 27, -1);
  for (size_t n = 0; n < grid.count(); ++n) {
    int i, j, k;
    SparseVoxelGrid::unpack(grid.keys[n], i, j, k);
    int t = 0;
    for (int dk = -1; dk <= 1; ++dk)
      for (int dj = -1; dj <= 1; ++dj)
        for (int di = -1; di <= 1; ++di, ++t) {
          int ni = i + di, nj = j + dj, nk = k + dk;
          if (ni < 0 || nj < 0 || nk < 0 || ni >= grid.resolution || nj >= grid.resolution ||
              nk >= grid.resolution)
            continue;
          nb[n * 27 + t] = int32_t(grid.find(SparseVoxelGrid::pack(ni, nj, nk)));
        }
  }
  return nb;
}

std::vector<int32_t> stride2_neighbors(const SparseVoxelGrid& out_keys,
                                       const SparseVoxelGrid& in_grid) {
  if (in_grid.resolution != 2 * out_keys.resolution)
    throw Error("stride2_neighbors: resolution mismatch");
  std::vector<int32_t> nb(out_keys.count() * 27, -1);
  for (size_t n = 0; n < out_keys.count(); ++n) {
    int i, j, k;
    SparseVoxelGrid::unpack(out_keys.keys[n], i, j, k);
    int t = 0;
    for (int dk = -1; dk <= 1; ++dk)
      for (int dj = -1; dj <= 1; ++dj)
        for (int di = -1; di <= 1; ++di, ++t) {
          int ni = 2 * i + di, nj = 2 * j + dj, nk = 2 * k + dk;
          if (ni < 0 || nj < 0 || nk < 0 || ni >= in_grid.resolution ||
              nj >= in_grid.resolution || nk >= in_grid.resolution)
            continue;
          nb[n * 27 + t] = int32_t(in_grid.find(SparseVoxelGrid::pack(ni, nj, nk)));
        }
  }
  return nb;
}

SparseVoxelGrid children_keys(const SparseVoxelGrid& coarse, std::vector<int>* parent_index) {
  SparseVoxelGrid fine;
  fine.resolution = coarse.resolution * 2;
  fine.feature_dim = 0;
  fine.keys.reserve(coarse.count() * 8);
  for (size_t n = 0; n < coarse.count(); ++n) {
    int i, j, k;
    SparseVoxelGrid::unpack(coarse.keys[n], i, j, k);
    for (int d = 0; d < 8; ++d)
      fine.keys.push_back(
          SparseVoxelGrid::pack(2 * i + (d & 1), 2 * j + ((d >> 1) & 1), 2 * k + ((d >> 2) & 1)));
  }
  std::sort(fine.keys.begin(), fine.keys.end());
  if (parent_index) {
    parent_index->resize(fine.keys.size());
    for (size_t n = 0; n < fine.keys.size(); ++n) {
      int i, j, k;
      SparseVoxelGrid::unpack(fine.keys[n], i, j, k);
      int64_t p = coarse.find(SparseVoxelGrid::pack(i / 2, j / 2, k / 2));
      if (p < 0) throw Error("children_keys: missing parent");
      (*parent_index)[n] = int(p);
    }
  }
  return fine;
}

OccupancyOracle shell_occupancy_oracle(const DenseSdfGrid& sdf, double shell_epsilon,
                                       const Eigen::Matrix3d& rotation) {
  Eigen::Matrix3d inv = rotation.transpose();
  const DenseSdfGrid* grid = &sdf;
  return [grid, shell_epsilon, inv](const SparseVoxelGrid& candidates) {
    double band = shell_epsilon + std::sqrt(3.0) * candidates.cell_size();
    std::vector<double> labels(candidates.count(), 0.0);
    for (size_t n = 0; n < candidates.count(); ++n) {
      Vec3 p = inv * candidates.vertex_position(candidates.keys[n]);
      if (std::fabs(grid->sample(p)) < band) labels[n] = 1.0;
    }
    return labels;
  };
}

// --- ModelRun ------------------------------------------------------------

ModelRun::ModelRun(const NetworkConfig& cfg, const Parameters& params, bool trainable)
    : cfg_(cfg), params_(params), trainable_(trainable) {
  cfg_.validate();
}

ad::Tape::Index ModelRun::param(const std::string& name) {
  auto it = param_nodes_.find(name);
  if (it != param_nodes_.end()) return it->second;
  const Parameters::Entry& e = params_.at(name);
  ad::Tape::Index idx = tape_.leaf(e.rows, e.cols, e.value, trainable_);
  param_nodes_.emplace(name, idx);
  return idx;
}

const std::vector<double>& ModelRun::param_gradient(const std::string& name) const {
  auto it = param_nodes_.find(name);
  if (it == param_nodes_.end()) throw Error("parameter '" + name + "' unused in this pass");
  return tape_.gradient(it->second);
}

ad::Tape::Index ModelRun::conv_block(ad::Tape::Index x, const SparseVoxelGrid& grid,
                                     const std::vector<int32_t>& nb, const std::string& prefix,
                                     int channels) {
  (void)grid;
  return tape_.sparse_conv(x, param(prefix + ".w"), param(prefix + ".b"), nb, channels);
}

EncodeResult ModelRun::encode(const SparseVoxelGrid& input_grid) {
  if (input_grid.count() == 0) throw Error("encode: empty quantized grid");
  if (input_grid.feature_dim != 6) throw Error("encode: expected 6 input channels");
  if (input_grid.resolution != cfg_.input_resolution)
    throw Error("encode: grid resolution does not match the config");

  EncodeResult out;
  out.level_keys.push_back(input_grid);  // copies keys+features (used as occupancy)
  ad::Tape::Index x = tape_.leaf(int(input_grid.count()), 6, input_grid.features, false);
  x = tape_.linear(x, param("enc.proj.w"), param("enc.proj.b"));

  SparseVoxelGrid cur;
  cur.resolution = input_grid.resolution;
  cur.feature_dim = 0;
  cur.keys = input_grid.keys;
  for (int l = 0; l + 1 < int(cfg_.encoder_channels.size()); ++l) {
    int c_out = cfg_.encoder_channels[l + 1];
    SparseVoxelGrid down = downsample_keys(cur);
    x = conv_block(x, down, stride2_neighbors(down, cur), "enc.down" + std::to_string(l), c_out);
    x = tape_.leaky_relu(x, cfg_.leaky_slope);
    std::vector<int32_t> nb = stride1_neighbors(down);
    for (int r = 0; r < cfg_.residual_blocks_per_level; ++r) {
      std::string res = "enc.res" + std::to_string(l) + "." + std::to_string(r);
      ad::Tape::Index t = conv_block(x, down, nb, res + ".c1", c_out);
      t = tape_.leaky_relu(t, cfg_.leaky_slope);
      t = conv_block(t, down, nb, res + ".c2", c_out);
      x = tape_.add(x, t);
    }
    cur = down;
    out.level_keys.push_back(cur);
  }
  out.latent_keys = cur;
  out.mean = tape_.linear(x, param("enc.mean.w"), param("enc.mean.b"));
  out.logvar = tape_.clamp(tape_.linear(x, param("enc.logvar.w"), param("enc.logvar.b")),
                           -cfg_.logvar_clamp, cfg_.logvar_clamp);
  return out;
}

ad::Tape::Index ModelRun::latent_sample(const EncodeResult& enc, bool stochastic,
                                        uint64_t noise_seed) {
  if (!stochastic) return enc.mean;
  const auto& keys = enc.latent_keys.keys;
  std::vector<double> eta(keys.size() * size_t(cfg_.latent_dim));
  // counter-based: one generator per (voxel key, channel) so the stream does
  // not depend on evaluation order
  for (size_t n = 0; n < keys.size(); ++n)
    for (int c = 0; c < cfg_.latent_dim; ++c) {
      Rng r(derive_seed({noise_seed, keys[n], uint64_t(c)}));
      eta[n * size_t(cfg_.latent_dim) + c] = r.normal();
    }
  return tape_.reparameterize(enc.mean, enc.logvar, std::move(eta));
}

DecodeResult ModelRun::decode(ad::Tape::Index latent, const SparseVoxelGrid& latent_keys,
                              const OccupancyOracle* gt) {
  DecodeResult out;
  SparseVoxelGrid cur = latent_keys;
  cur.feature_dim = 0;
  cur.features.clear();
  ad::Tape::Index x = latent;
  for (int l = 0; l < int(cfg_.decoder_channels.size()); ++l) {
    int c = cfg_.decoder_channels[l];
    DecodeResult::Level level;
    std::vector<int> parent;
    level.candidates = children_keys(cur, &parent);
    // replicate parent features onto the children, then one conv
    x = tape_.gather_rows(x, parent);
    x = conv_block(x, level.candidates, stride1_neighbors(level.candidates),
                   "dec.up" + std::to_string(l), c);
    x = tape_.leaky_relu(x, cfg_.leaky_slope);
    level.logits = tape_.linear(x, param("dec.occ" + std::to_string(l) + ".w"),
                                param("dec.occ" + std::to_string(l) + ".b"));

    std::vector<int> keep;
    if (gt) {
      level.labels = (*gt)(level.candidates);
      for (size_t n = 0; n < level.labels.size(); ++n)
        if (level.labels[n] > 0.5) keep.push_back(int(n));
    } else {
      const auto& logit_vals = tape_.value(level.logits);
      for (size_t n = 0; n < logit_vals.size(); ++n)
        if (logit_vals[n] > 0.0) keep.push_back(int(n));  // sigmoid(z) > 0.5 <=> z > 0
    }
    if (keep.empty())
      throw Error("decode: all voxels pruned at level " + std::to_string(l) + " (empty shape)");
    level.kept = keep.size();

    SparseVoxelGrid kept_grid;
    kept_grid.resolution = level.candidates.resolution;
    kept_grid.feature_dim = 0;
    kept_grid.keys.reserve(keep.size());
    for (int n : keep) kept_grid.keys.push_back(level.candidates.keys[size_t(n)]);
    x = tape_.gather_rows(x, keep);

    std::vector<int32_t> nb = stride1_neighbors(kept_grid);
    for (int j = 0; j < cfg_.decoder_convs_per_level; ++j) {
      x = conv_block(x, kept_grid, nb, "dec.conv" + std::to_string(l) + "." + std::to_string(j),
                     c);
      x = tape_.leaky_relu(x, cfg_.leaky_slope);
    }
    for (int r = 0; r < cfg_.residual_blocks_per_level; ++r) {
      std::string res = "dec.res" + std::to_string(l) + "." + std::to_string(r);
      ad::Tape::Index t = conv_block(x, kept_grid, nb, res + ".c1", c);
      t = tape_.leaky_relu(t, cfg_.leaky_slope);
      t = conv_block(t, kept_grid, nb, res + ".c2", c);
      x = tape_.add(x, t);
    }
    out.levels.push_back(std::move(level));
    cur = kept_grid;
  }
  out.final_keys = cur;
  out.features = x;
  return out;
}

ad::Tape::Index ModelRun::features_at(const DecodeResult& dec, const std::vector<Vec3>& points) {
  std::vector<int64_t> indices(points.size() * 8);
  std::vector<double> weights(points.size() * 8);
  for (size_t n = 0; n < points.size(); ++n) {
    TrilinearStencil st = trilinear_stencil(dec.final_keys, points[n]);
    for (int j = 0; j < 8; ++j) {
      indices[n * 8 + j] = st.index[j];
      weights[n * 8 + j] = st.weight[j];
    }
  }
  return tape_.trilinear_gather(dec.features, std::move(indices), std::move(weights));
}

namespace {

std::vector<double> flatten(const std::vector<Vec3>& v) {
  std::vector<double> out(v.size() * 3);
  for (size_t i = 0; i < v.size(); ++i)
    for (int c = 0; c < 3; ++c) out[i * 3 + c] = v[i][c];
  return out;
}

}  // namespace

ad::Tape::Index ModelRun::sdf_head(ad::Tape::Index features) {
  ad::Tape::Index h = tape_.leaky_relu(
      tape_.linear(features, param("head.sdf.0.w"), param("head.sdf.0.b")), cfg_.leaky_slope);
  h = tape_.leaky_relu(tape_.linear(h, param("head.sdf.1.w"), param("head.sdf.1.b")),
                       cfg_.leaky_slope);
  return tape_.linear(h, param("head.sdf.out.w"), param("head.sdf.out.b"));
}

ad::Tape::Index ModelRun::field_head(ad::Tape::Index features, const std::vector<Vec3>& normals) {
  ad::Tape::Index in = features;
  if (cfg_.concat_normal)
    in = tape_.concat_cols(features, tape_.leaf(int(normals.size()), 3, flatten(normals), false));
  ad::Tape::Index h = tape_.leaky_relu(tape_.linear(in, param("head.cf.0.w"), param("head.cf.0.b")),
                                       cfg_.leaky_slope);
  h = tape_.leaky_relu(tape_.linear(h, param("head.cf.1.w"), param("head.cf.1.b")),
                       cfg_.leaky_slope);
  ad::Tape::Index raw = tape_.linear(h, param("head.cf.out.w"), param("head.cf.out.b"));
  if (cfg_.field_head == NetworkConfig::FieldHead::direction)
    return tape_.project_normalize(raw, flatten(normals));
  // rotation-angle variant: rotate a deterministic reference axis about n
  std::vector<double> t1(normals.size() * 3), t2(normals.size() * 3);
  for (size_t n = 0; n < normals.size(); ++n) {
    const Vec3& nn = normals[n];
    Vec3 axis = std::fabs(nn[0]) > 0.99 ? Vec3(0, 1, 0) : Vec3(1, 0, 0);
    Vec3 a = axis - axis.dot(nn) * nn;
    a.normalize();
    Vec3 b = nn.cross(a);
    for (int c = 0; c < 3; ++c) {
      t1[n * 3 + c] = a[c];
      t2[n * 3 + c] = b[c];
    }
  }
  return tape_.rotation_frame(raw, std::move(t1), std::move(t2));
}

ad::Tape::Index ModelRun::total_loss(const LossInputs& in, const LossWeights& weights,
                                     LossBreakdown* breakdown) {
  std::vector<std::pair<ad::Tape::Index, double>> terms;
  ad::Tape::Index l_cf = -1, l_sdf = -1, l_o = -1, l_kl = -1;
  if (in.alpha >= 0) {
    l_cf = tape_.crossfield_loss(in.alpha, in.mu, in.nu);
    terms.emplace_back(l_cf, weights.crossfield);
  }
  if (in.sdf_pred >= 0) {
    l_sdf = tape_.l1_loss(in.sdf_pred, in.sdf_target);
    terms.emplace_back(l_sdf, weights.sdf);
  }
  if (in.decode) {
    size_t total = 0;
    for (const auto& lvl : in.decode->levels) total += lvl.labels.size();
    if (total == 0) throw Error("total_loss: decode carries no occupancy labels");
    std::vector<std::pair<ad::Tape::Index, double>> parts;
    for (const auto& lvl : in.decode->levels) {
      if (lvl.labels.empty()) continue;
      parts.emplace_back(tape_.bce_logits_loss(lvl.logits, lvl.labels),
                         double(lvl.labels.size()) / double(total));
    }
    l_o = tape_.weighted_sum(parts);
    terms.emplace_back(l_o, weights.occupancy);
  }
  if (in.encode) {
    l_kl = tape_.kl_loss(in.encode->mean, in.encode->logvar);
    terms.emplace_back(l_kl, weights.kl);
  }
  if (terms.empty()) throw Error("total_loss: no loss terms");
  ad::Tape::Index total = tape_.weighted_sum(terms);
  if (breakdown) {
    breakdown->total = tape_.scalar(total);
    breakdown->crossfield = l_cf >= 0 ? tape_.scalar(l_cf) : 0;
    breakdown->sdf = l_sdf >= 0 ? tape_.scalar(l_sdf) : 0;
    breakdown->occupancy = l_o >= 0 ? tape_.scalar(l_o) : 0;
    breakdown->kl = l_kl >= 0 ? tape_.scalar(l_kl) : 0;
  }
  return total;
}

// --- trainer -------------------------------------------------------------

Trainer::Trainer(const NetworkConfig& cfg, const TrainConfig& tcfg,
                 std::vector<ShapeRecord> shapes)
    : cfg_(cfg), tcfg_(tcfg), shapes_(std::move(shapes)) {
  if (shapes_.empty()) throw Error("Trainer: no shapes");
  for (const auto& s : shapes_) {
    if (s.cloud.size() == 0 || s.shell.points.empty())
      throw Error("Trainer: shape '" + s.id + "' missing samples");
    if (s.gt_mu.size() != s.cloud.size() || s.gt_nu.size() != s.cloud.size())
      throw Error("Trainer: shape '" + s.id + "' ground-truth field size mismatch");
  }
  params_ = init_parameters(cfg_, derive_seed({tcfg_.seed, 0x696e6974ull}));
  order_.resize(shapes_.size());
  for (size_t i = 0; i < order_.size(); ++i) order_[i] = int(i);
  Rng rng(derive_seed({tcfg_.seed, 0x6f726465ull, uint64_t(epoch_)}));
  for (size_t i = order_.size(); i > 1; --i)
    std::swap(order_[i - 1], order_[rng.below(i)]);
}

int Trainer::steps_per_epoch() const {
  return int((shapes_.size() + size_t(tcfg_.batch_size) - 1) / size_t(tcfg_.batch_size));
}

namespace {

Eigen::Matrix3d random_rotation(Rng& rng) {
  // Shoemake: uniform over SO(3) via unit quaternion
  double u1 = rng.uniform(), u2 = rng.uniform(), u3 = rng.uniform();
  double a = std::sqrt(1.0 - u1), b = std::sqrt(u1);
  double x = a * std::sin(2 * M_PI * u2), y = a * std::cos(2 * M_PI * u2);
  double z = b * std::sin(2 * M_PI * u3), w = b * std::cos(2 * M_PI * u3);
  Eigen::Quaterniond q(w, x, y, z);
  return q.normalized().toRotationMatrix();
}

}  // namespace

LossBreakdown Trainer::member_pass(size_t shape_idx, uint64_t step_seed,
                                   std::vector<std::vector<double>>& grads) {
  const ShapeRecord& shape = shapes_[shape_idx];
  Rng rng(step_seed);

  Eigen::Matrix3d rot = Eigen::Matrix3d::Identity();
  if (tcfg_.augment_rotations) {
    Eigen::Matrix3d candidate = random_rotation(rng);
    double max_radius = 0;
    for (const auto& p : shape.cloud.points) max_radius = std::max(max_radius, p.norm());
    if (max_radius <= 0.5 - 1e-3)
      rot = candidate;
    else
      log_debug("rotation augmentation skipped for '" + shape.id +
                "' (shape exceeds the inscribed ball)");
  }
  double drop_rate = tcfg_.augment_point_drop ? rng.uniform() * tcfg_.point_drop_max : 0.0;

  OrientedPointCloud input;
  input.points.reserve(shape.cloud.size());
  input.normals.reserve(shape.cloud.size());
  for (size_t i = 0; i < shape.cloud.size(); ++i) {
    if (drop_rate > 0 && rng.uniform() < drop_rate) continue;
    Vec3 p = rot * shape.cloud.points[i];
    if (tcfg_.jitter_sigma > 0)
      p += tcfg_.jitter_sigma * Vec3(rng.normal(), rng.normal(), rng.normal());
    for (int c = 0; c < 3; ++c) p[c] = std::clamp(p[c], -0.5, 0.5);
    input.points.push_back(p);
    input.normals.push_back(rot * shape.cloud.normals[i]);
  }
  if (input.points.empty()) throw Error("member_pass: all points dropped");

  ModelRun run(cfg_, params_, true);
  SparseVoxelGrid grid = quantize(input, cfg_.input_resolution);
  EncodeResult enc = run.encode(grid);
  ad::Tape::Index sample =
      run.latent_sample(enc, true, derive_seed({step_seed, 0x657461ull}));
  OccupancyOracle oracle = shell_occupancy_oracle(shape.sdf, cfg_.shell_epsilon, rot);
  DecodeResult dec = run.decode(sample, enc.latent_keys, &oracle);

  // cross-field supervision minibatch over the (un-dropped) surface set
  size_t np = std::min<size_t>(size_t(tcfg_.points_per_step), shape.cloud.size());
  std::vector<Vec3> sites(np), site_normals(np), mu(np), nu(np);
  for (size_t n = 0; n < np; ++n) {
    size_t i = np == shape.cloud.size() ? n : rng.below(shape.cloud.size());
    sites[n] = rot * shape.cloud.points[i];
    site_normals[n] = rot * shape.cloud.normals[i];
    mu[n] = rot * shape.gt_mu[i];
    nu[n] = rot * shape.gt_nu[i];
  }
  ad::Tape::Index alpha = run.field_head(run.features_at(dec, sites), site_normals);

  // SDF supervision minibatch over the shell queries
  size_t nq = std::min<size_t>(size_t(tcfg_.queries_per_step), shape.shell.points.size());
  std::vector<Vec3> queries(nq);
  std::vector<double> targets(nq);
  for (size_t n = 0; n < nq; ++n) {
    size_t i = nq == shape.shell.points.size() ? n : rng.below(shape.shell.points.size());
    queries[n] = rot * shape.shell.points[i];
    targets[n] = shape.shell.values[i];
  }
  ad::Tape::Index sdf_pred = run.sdf_head(run.features_at(dec, queries));

  ModelRun::LossInputs inputs;
  inputs.alpha = alpha;
  inputs.mu = flatten(mu);
  inputs.nu = flatten(nu);
  inputs.sdf_pred = sdf_pred;
  inputs.sdf_target = targets;
  inputs.decode = &dec;
  inputs.encode = &enc;
  LossBreakdown bd;
  ad::Tape::Index loss = run.total_loss(inputs, tcfg_.weights, &bd);
  run.tape().backward(loss);

  for (size_t e = 0; e < params_.entries.size(); ++e) {
    const std::string& name = params_.entries[e].name;
    try {
      const auto& g = run.param_gradient(name);
      kernels::active().axpy(1.0, g.data(), grads[e].data(), g.size());
    } catch (const Error&) {
      // parameter unused in this pass (e.g. the inactive head variant)
    }
  }
  return bd;
}

LossBreakdown Trainer::step() {
  std::vector<std::vector<double>> grads(params_.entries.size());
  for (size_t e = 0; e < params_.entries.size(); ++e)
    grads[e].assign(params_.entries[e].value.size(), 0.0);

  LossBreakdown total;
  const int batch = tcfg_.batch_size;
  for (int b = 0; b < batch; ++b) {
    if (order_pos_ >= order_.size()) {
      order_pos_ = 0;
      ++epoch_;
      Rng rng(derive_seed({tcfg_.seed, 0x6f726465ull, uint64_t(epoch_)}));
      for (size_t i = order_.size(); i > 1; --i)
        std::swap(order_[i - 1], order_[rng.below(i)]);
    }
    size_t shape_idx = size_t(order_[order_pos_++]);
    uint64_t member_seed = derive_seed({tcfg_.seed, 0x6d656d62ull, sample_counter_++});
    LossBreakdown bd = member_pass(shape_idx, member_seed, grads);
    total.total += bd.total;
    total.occupancy += bd.occupancy;
    total.crossfield += bd.crossfield;
    total.sdf += bd.sdf;
    total.kl += bd.kl;
  }
  double inv = 1.0 / batch;
  total.total *= inv;
  total.occupancy *= inv;
  total.crossfield *= inv;
  total.sdf *= inv;
  total.kl *= inv;

  if (!std::isfinite(total.total)) {
    if (!tcfg_.nan_dump_path.empty()) {
      json dump;
      dump["adam_step"] = adam_step_;
      dump["loss"] = {{"total", total.total},
                      {"occupancy", total.occupancy},
                      {"crossfield", total.crossfield},
                      {"sdf", total.sdf},
                      {"kl", total.kl}};
      atomic_write_file(tcfg_.nan_dump_path,
                        [&](std::ostream& os) { os << dump.dump(2) << "\n"; });
    }
    throw Error("train: non-finite loss at Adam step " + std::to_string(adam_step_));
  }

  ++adam_step_;
  double c1 = 1.0 - std::pow(tcfg_.adam.beta1, double(adam_step_));
  double c2 = 1.0 - std::pow(tcfg_.adam.beta2, double(adam_step_));
  for (size_t e = 0; e < params_.entries.size(); ++e) {
    auto& entry = params_.entries[e];
    for (auto& g : grads[e]) g *= inv;
    kernels::active().adam(entry.value.data(), grads[e].data(), entry.m.data(), entry.v.data(),
                           entry.value.size(), tcfg_.adam.lr, tcfg_.adam.beta1, tcfg_.adam.beta2,
                           tcfg_.adam.eps, c1, c2);
  }
  return total;
}

// --- checkpoints ----------------------------------------------------------

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  atomic_write_file(path, [&](std::ostream& os) {
    write_bytes(os, "XGCK", 4);
    write_u32(os, 1);
    std::string blob = ckpt.config_json.empty() ? network_config_to_json(ckpt.config)
                                                : ckpt.config_json;
    write_u64(os, blob.size());
    write_bytes(os, blob.data(), blob.size());
    write_u64(os, ckpt.params.entries.size());
    for (const auto& e : ckpt.params.entries) {
      write_u32(os, uint32_t(e.name.size()));
      write_bytes(os, e.name.data(), e.name.size());
      write_u32(os, 2);
      write_u64(os, uint64_t(e.rows));
      write_u64(os, uint64_t(e.cols));
      for (double v : e.value) write_f32(os, float(v));
    }
    write_u64(os, ckpt.adam_step);
    for (const auto& e : ckpt.params.entries) {
      for (double v : e.m) write_f32(os, float(v));
      for (double v : e.v) write_f32(os, float(v));
    }
  });
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open checkpoint: " + path.string());
  char magic[4];
  read_bytes(is, magic, 4, "checkpoint magic");
  if (std::string(magic, 4) != "XGCK") throw Error("bad magic in " + path.string());
  uint32_t version = read_u32(is, "checkpoint version");
  if (version != 1) throw Error("unsupported checkpoint version " + std::to_string(version));
  Checkpoint ckpt;
  uint64_t blob_len = read_u64(is, "config blob length");
  ckpt.config_json.resize(blob_len);
  read_bytes(is, ckpt.config_json.data(), blob_len, "config blob");
  {
    json j = json::parse(ckpt.config_json);
    std::string network_part = j.contains("network") ? j["network"].dump() : ckpt.config_json;
    ckpt.config = network_config_from_json(network_part);
  }
  uint64_t count = read_u64(is, "tensor count");
  for (uint64_t t = 0; t < count; ++t) {
    uint32_t name_len = read_u32(is, "tensor name length");
    std::string name(name_len, '\0');
    read_bytes(is, name.data(), name_len, "tensor name");
    uint32_t ndim = read_u32(is, "tensor ndim");
    if (ndim != 2) throw Error("unsupported tensor rank");
    int rows = int(read_u64(is, "tensor rows"));
    int cols = int(read_u64(is, "tensor cols"));
    auto& e = ckpt.params.create(name, rows, cols);
    for (auto& v : e.value) v = read_f32(is, "tensor data");
  }
  ckpt.adam_step = read_u64(is, "adam step");
  for (auto& e : ckpt.params.entries) {
    for (auto& v : e.m) v = read_f32(is, "adam m");
    for (auto& v : e.v) v = read_f32(is, "adam v");
  }
  return ckpt;
}

// --- inference -------------------------------------------------------------

DecodedShape::DecodedShape(const OrientedPointCloud& cloud, const Checkpoint& ckpt,
                           int quantize_resolution)
    : ckpt_(ckpt), run_(ckpt.config, ckpt.params, false) {
  SparseVoxelGrid grid = quantize(cloud, quantize_resolution);
  EncodeResult enc = run_.encode(grid);
  ad::Tape::Index latent = run_.latent_sample(enc, false, 0);
  dec_ = run_.decode(latent, enc.latent_keys, nullptr);
}

CrossField DecodedShape::field_at(const std::vector<Vec3>& points,
                                  const std::vector<Vec3>& normals, FieldSite site) {
  if (points.size() != normals.size()) throw Error("field_at: site count mismatch");
  ad::Tape::Index feats = run_.features_at(dec_, points);
  ad::Tape::Index alpha = run_.field_head(feats, normals);
  const auto& vals = run_.tape().value(alpha);
  CrossField field;
  field.site = site;
  field.samples.resize(points.size());
  for (size_t n = 0; n < points.size(); ++n) {
    auto& s = field.samples[n];
    s.point = points[n];
    s.normal = normals[n];
    s.alpha = Vec3(vals[n * 3], vals[n * 3 + 1], vals[n * 3 + 2]);
  }
  return field;
}

std::vector<double> DecodedShape::sdf_at(const std::vector<Vec3>& points) {
  ad::Tape::Index pred = run_.sdf_head(run_.features_at(dec_, points));
  return run_.tape().value(pred);
}

DenseSdfGrid DecodedShape::dense_sdf(double truncation) {
  const int r = ckpt_.config.final_resolution();
  DenseSdfGrid grid;
  grid.resolution = r;
  grid.truncation = truncation;
  grid.values.assign(size_t(r) * r * r, truncation);

  std::vector<Vec3> positions(dec_.final_keys.count());
  for (size_t n = 0; n < dec_.final_keys.count(); ++n)
    positions[n] = dec_.final_keys.vertex_position(dec_.final_keys.keys[n]);
  std::vector<double> head = sdf_at(positions);

  std::vector<uint8_t> occupied(grid.values.size(), 0);
  for (size_t n = 0; n < dec_.final_keys.count(); ++n) {
    int i, j, k;
    SparseVoxelGrid::unpack(dec_.final_keys.keys[n], i, j, k);
    size_t idx = size_t(i) + size_t(r) * (size_t(j) + size_t(r) * k);
    occupied[idx] = 1;
    grid.values[idx] = std::clamp(head[n], -truncation, truncation);
  }

  // classify unoccupied vertices: outside reachable from the domain boundary
  std::vector<uint8_t> outside(grid.values.size(), 0);
  std::deque<size_t> queue;
  auto push_if = [&](int i, int j, int k) {
    if (i < 0 || j < 0 || k < 0 || i >= r || j >= r || k >= r) return;
    size_t idx = size_t(i) + size_t(r) * (size_t(j) + size_t(r) * k);
    if (occupied[idx] || outside[idx]) return;
    outside[idx] = 1;
    queue.push_back(idx);
  };
  for (int a = 0; a < r; ++a)
    for (int b = 0; b < r; ++b) {
      push_if(0, a, b);
      push_if(r - 1, a, b);
      push_if(a, 0, b);
      push_if(a, r - 1, b);
      push_if(a, b, 0);
      push_if(a, b, r - 1);
    }
  while (!queue.empty()) {
    size_t cur = queue.front();
    queue.pop_front();
    int i = int(cur % r), j = int((cur / r) % r), k = int(cur / (size_t(r) * r));
    push_if(i + 1, j, k);
    push_if(i - 1, j, k);
    push_if(i, j + 1, k);
    push_if(i, j - 1, k);
    push_if(i, j, k + 1);
    push_if(i, j, k - 1);
  }
  for (size_t idx = 0; idx < grid.values.size(); ++idx)
    if (!occupied[idx]) grid.values[idx] = outside[idx] ? truncation : -truncation;
  return grid;
}

InferenceResult infer_mesh(const TriangleMesh& mesh, const Checkpoint& ckpt, FieldSite sites,
                           size_t sample_count, uint64_t seed) {
  auto t0 = std::chrono::steady_clock::now();
  OrientedPointCloud cloud = sample_surface(mesh, sample_count, seed);
  DecodedShape shape(cloud, ckpt, ckpt.config.input_resolution);
  std::vector<Vec3> points, normals;
  if (sites == FieldSite::face_center) {
    points.reserve(mesh.faces.size());
    normals.reserve(mesh.faces.size());
    for (size_t f = 0; f < mesh.faces.size(); ++f) {
      points.push_back(mesh.face_center(int(f)));
      normals.push_back(mesh.face_normal(int(f)));
    }
  } else {
    TriangleMesh tmp;
    const std::vector<Vec3>* vn = &mesh.vertex_normals;
    if (!mesh.has_normals()) {
      tmp = mesh;
      tmp.compute_vertex_normals();
      vn = &tmp.vertex_normals;
    }
    points = mesh.vertices;
    normals = *vn;
  }
  InferenceResult out;
  out.field = shape.field_at(points, normals, sites);
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

InferenceResult infer_cloud(const OrientedPointCloud& cloud, const Checkpoint& ckpt,
                            double truncation) {
  auto t0 = std::chrono::steady_clock::now();
  DecodedShape shape(cloud, ckpt, ckpt.config.input_resolution);
  InferenceResult out;
  out.sdf = shape.dense_sdf(truncation);
  out.surface = marching_cubes(*out.sdf);
  std::vector<Vec3> points, normals;
  points.reserve(out.surface->faces.size());
  normals.reserve(out.surface->faces.size());
  for (size_t f = 0; f < out.surface->faces.size(); ++f) {
    points.push_back(out.surface->face_center(int(f)));
    normals.push_back(out.surface->face_normal(int(f)));
  }
  out.field = shape.field_at(points, normals, FieldSite::face_center);
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

}  // namespace xgen
