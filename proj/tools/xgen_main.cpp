// xgen: dataset building, GT cross fields, training, inference, evaluation.
// Every command prints one machine-readable JSON result line on stdout and
// exits 0 (ok), 1 (partial failures), or 2 (fatal).

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <iostream>

#include "xgen/config.hpp"
#include "xgen/dataset.hpp"
#include "xgen/metrics.hpp"
#include "xgen/network.hpp"
#include "xgen/shapes.hpp"
#include "xgen/tsdf.hpp"
#include "xgen/util.hpp"

using json = nlohmann::json;
using namespace xgen;

namespace {

struct CommonOpts {
  std::string config_path;
  uint64_t seed = 0;
  bool seed_set = false;
  int workers = -1;
  int resolution = 0;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("--config", opts.config_path, "pipeline config JSON path");
  cmd->add_option("--seed", opts.seed, "override config seed")->each([&](const std::string&) {
    opts.seed_set = true;
  });
  cmd->add_option("--workers", opts.workers, "worker thread count (0 = hardware)");
  cmd->add_option("--resolution", opts.resolution, "override grid/network resolution");
}

PipelineConfig resolve_config(const CommonOpts& opts) {
  PipelineConfig cfg;
  if (!opts.config_path.empty()) cfg = PipelineConfig::load(opts.config_path);
  if (opts.seed_set) cfg.seed = opts.seed;
  if (opts.workers >= 0) cfg.workers = opts.workers;
  if (opts.resolution > 0) {
    cfg.grid.resolution = opts.resolution;
    cfg.tsdf.resolution = opts.resolution;
    cfg.network.input_resolution = opts.resolution;
  }
  cfg.validate();
  return cfg;
}

void emit(const json& j) { std::cout << j.dump() << "\n"; }

json base_result(const std::string& cmd, const PipelineConfig& cfg) {
  json j;
  j["cmd"] = cmd;
  j["ok"] = true;
  j["config_hash"] = hex64(cfg.hash());
  return j;
}

TriangleMesh load_normalized_mesh(const std::string& path, const PipelineConfig& cfg,
                                  bool* renormalized = nullptr) {
  TriangleMesh mesh = load_mesh(path);
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity()), hi = -lo;
  for (const auto& v : mesh.vertices) {
    lo = lo.cwiseMin(v);
    hi = hi.cwiseMax(v);
  }
  bool inside = lo.minCoeff() >= -0.5 && hi.maxCoeff() <= 0.5;
  if (renormalized) *renormalized = !inside;
  if (!inside) {
    log_info("input mesh exceeds [-0.5,0.5]^3; normalizing");
    mesh = normalize_to_unit_cube(mesh, cfg.normalize.margin).first;
  }
  return mesh;
}

int cmd_dataset(const CommonOpts& common, const std::string& in_dir, const std::string& out_dir) {
  PipelineConfig cfg = resolve_config(common);
  DatasetBuildResult result = build_dataset(in_dir, out_dir, cfg);
  std::filesystem::path manifest = std::filesystem::path(out_dir) / "manifest.jsonl";
  save_manifest(manifest, result.entries);
  size_t train_count = 0, test_count = 0;
  for (const auto& e : result.entries) (e.split == "train" ? train_count : test_count) += 1;
  json j = base_result("dataset", cfg);
  j["manifest"] = manifest.string();
  j["manifest_hash"] = hex64(file_hash(manifest));
  j["entries"] = result.entries.size();
  j["train"] = train_count;
  j["test"] = test_count;
  j["failures"] = result.failures;
  j["ok"] = result.failures.empty();
  emit(j);
  return result.failures.empty() ? 0 : 1;
}

int cmd_train(const CommonOpts& common, const std::string& manifest_path,
              const std::string& out_path) {
  PipelineConfig cfg = resolve_config(common);
  std::vector<ManifestEntry> manifest = load_manifest(manifest_path);
  std::vector<ShapeRecord> shapes;
  for (const auto& e : manifest)
    if (e.split == "train") shapes.push_back(load_shape_record(e));
  if (shapes.empty()) throw Error("train: manifest has no train-split entries");

  Trainer trainer(cfg.network, cfg.train_config(), std::move(shapes));
  const int steps_per_epoch = trainer.steps_per_epoch();
  auto save = [&](const std::filesystem::path& path) {
    Checkpoint ckpt;
    ckpt.config = cfg.network;
    ckpt.config_json = cfg.to_canonical_json();
    ckpt.params = trainer.params();
    ckpt.adam_step = trainer.adam_steps();
    save_checkpoint(path, ckpt);
  };
  LossBreakdown last{};
  for (int epoch = 0; epoch < cfg.train.epochs; ++epoch) {
    for (int s = 0; s < steps_per_epoch; ++s) last = trainer.step();
    log_info("epoch " + std::to_string(epoch + 1) + "/" + std::to_string(cfg.train.epochs) +
             " loss=" + std::to_string(last.total) + " cf=" + std::to_string(last.crossfield) +
             " sdf=" + std::to_string(last.sdf) + " occ=" + std::to_string(last.occupancy));
    if (cfg.train.checkpoint_every_epochs > 0 &&
        (epoch + 1) % cfg.train.checkpoint_every_epochs == 0)
      save(out_path);
  }
  save(out_path);
  json j = base_result("train", cfg);
  j["checkpoint"] = out_path;
  j["checkpoint_hash"] = hex64(file_hash(out_path));
  j["adam_steps"] = trainer.adam_steps();
  j["loss"] = {{"total", last.total},
               {"occupancy", last.occupancy},
               {"crossfield", last.crossfield},
               {"sdf", last.sdf},
               {"kl", last.kl}};
  emit(j);
  return 0;
}

int cmd_infer(const CommonOpts& common, const std::string& input, const std::string& ckpt_path,
              const std::string& out_path, const std::string& sites_name,
              const std::string& sdf_out, const std::string& mesh_out) {
  PipelineConfig cfg = resolve_config(common);
  Checkpoint ckpt = load_checkpoint(ckpt_path);
  InferenceResult result;
  std::string ext = std::filesystem::path(input).extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
  if (ext == ".obj") {
    TriangleMesh mesh = load_normalized_mesh(input, cfg);
    FieldSite sites = sites_name == "vertices" ? FieldSite::vertex : FieldSite::face_center;
    result = infer_mesh(mesh, ckpt, sites, size_t(cfg.dataset.surface_samples), cfg.seed);
  } else if (ext == ".ply") {
    OrientedPointCloud cloud = load_point_cloud(input);
    result = infer_cloud(cloud, ckpt, cfg.tsdf.truncation);
  } else {
    throw Error("infer: input must be .obj (mesh) or .ply (point cloud)");
  }
  save_field(out_path, result.field);
  json j = base_result("infer", cfg);
  j["field"] = out_path;
  j["sites"] = result.field.samples.size();
  j["seconds"] = result.seconds;
  if (result.sdf && !sdf_out.empty()) {
    save_tsdf(sdf_out, *result.sdf);
    j["sdf"] = sdf_out;
  }
  if (result.surface && !mesh_out.empty()) {
    save_mesh(mesh_out, *result.surface);
    j["mesh"] = mesh_out;
  }
  emit(j);
  return 0;
}

int cmd_eval_field(const CommonOpts& common, const std::string& field_path,
                   const std::string& mesh_path) {
  PipelineConfig cfg = resolve_config(common);
  CrossField field = load_field(field_path);
  TriangleMesh mesh = load_mesh(mesh_path);
  std::vector<CurvatureFrame> frames = principal_curvatures(mesh);
  if (field.site == FieldSite::face_center)
    frames = frames_at_face_centers(mesh, frames);
  else if (field.site != FieldSite::vertex)
    throw Error("eval-field: field sites must be vertices or face centers");
  double ae = angular_error(field, frames, cfg.metrics.anisotropy_mask);
  json j = base_result("eval-field", cfg);
  j["angular_error"] = ae;
  j["sites"] = field.samples.size();
  j["anisotropy_mask"] = cfg.metrics.anisotropy_mask;
  emit(j);
  return 0;
}

int cmd_eval_quad(const CommonOpts& common, const std::string& quad_path,
                  const std::string& reference_path) {
  PipelineConfig cfg = resolve_config(common);
  QuadMesh quad = load_quad_mesh(quad_path);
  TriangleMesh reference;
  bool has_ref = !reference_path.empty();
  if (has_ref) reference = load_mesh(reference_path);
  QuadQualityReport report = evaluate_quad_mesh(quad, has_ref ? &reference : nullptr,
                                                size_t(cfg.metrics.chamfer_samples), cfg.seed);
  std::cerr << report_table(report);
  json j = base_result("eval-quad", cfg);
  j["area"] = report.area_distortion;
  j["angle"] = report.angle_distortion;
  j["singularities"] = report.singularity_count;
  if (report.chamfer_l1 >= 0) j["chamfer"] = report.chamfer_l1;
  j["jacobian_ratio"] = report.jacobian_ratio_mean;
  j["faces"] = quad.faces.size();
  emit(j);
  return 0;
}

int cmd_mc(const CommonOpts& common, const std::string& tsdf_path, const std::string& out_path) {
  PipelineConfig cfg = resolve_config(common);
  DenseSdfGrid grid = load_tsdf(tsdf_path);
  TriangleMesh mesh = marching_cubes(grid);
  save_mesh(out_path, mesh);
  json j = base_result("mc", cfg);
  j["mesh"] = out_path;
  j["vertices"] = mesh.vertices.size();
  j["faces"] = mesh.faces.size();
  emit(j);
  return 0;
}

int cmd_gt_field(const CommonOpts& common, const std::string& mesh_path,
                 const std::string& out_path) {
  PipelineConfig cfg = resolve_config(common);
  TriangleMesh mesh = load_mesh(mesh_path);
  mesh.compute_vertex_normals();
  std::vector<CurvatureFrame> frames = principal_curvatures(mesh);
  GtFieldResult gt = generate_gt_field(mesh, frames, cfg.gt_field.iterations,
                                       cfg.gt_field.smooth_weight);
  save_field(out_path, gt.field);
  json j = base_result("gt-field", cfg);
  j["field"] = out_path;
  j["vertices"] = gt.field.samples.size();
  j["energy_initial"] = gt.energy_history.front();
  j["energy_final"] = gt.energy_history.back();
  emit(j);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cross-field generation toolkit"};
  app.require_subcommand(1);

  CommonOpts common;
  std::string in_dir, out_dir, manifest, out_path, input, ckpt, field_path, mesh_path, quad_path,
      reference_path, tsdf_path, sites = "face-centers", sdf_out, mesh_out;

  auto* dataset = app.add_subcommand("dataset", "build paired TSDF + cross-field data");
  dataset->add_option("--in", in_dir, "directory of .obj meshes")->required();
  dataset->add_option("--out", out_dir, "output directory")->required();
  add_common(dataset, common);

  auto* train = app.add_subcommand("train", "train the autoencoder from a manifest");
  train->add_option("--manifest", manifest, "dataset manifest.jsonl")->required();
  train->add_option("--out", out_path, "checkpoint path")->required();
  add_common(train, common);

  auto* infer = app.add_subcommand("infer", "predict a cross field (and SDF for clouds)");
  infer->add_option("--input", input, "mesh .obj or point cloud .ply")->required();
  infer->add_option("--checkpoint", ckpt, "trained checkpoint")->required();
  infer->add_option("--out", out_path, "output field (.xfld)")->required();
  infer->add_option("--sites", sites, "face-centers | vertices");
  infer->add_option("--sdf-out", sdf_out, "write predicted TSDF here (cloud input)");
  infer->add_option("--mesh-out", mesh_out, "write reconstructed mesh here (cloud input)");
  add_common(infer, common);

  auto* eval_field = app.add_subcommand("eval-field", "angular error of a field on a mesh");
  eval_field->add_option("--field", field_path, "field .xfld")->required();
  eval_field->add_option("--mesh", mesh_path, "mesh .obj")->required();
  add_common(eval_field, common);

  auto* eval_quad = app.add_subcommand("eval-quad", "quad mesh quality report");
  eval_quad->add_option("--quad", quad_path, "quad mesh .obj")->required();
  eval_quad->add_option("--reference", reference_path, "reference mesh for chamfer");
  add_common(eval_quad, common);

  auto* mc = app.add_subcommand("mc", "marching cubes on a TSDF file");
  mc->add_option("--tsdf", tsdf_path, "input .tsdf")->required();
  mc->add_option("--out", out_path, "output mesh .obj")->required();
  add_common(mc, common);

  auto* gt_field = app.add_subcommand("gt-field", "curvature-aligned smoothed cross field");
  gt_field->add_option("--mesh", mesh_path, "mesh .obj")->required();
  gt_field->add_option("--out", out_path, "output field .xfld")->required();
  add_common(gt_field, common);

  CLI11_PARSE(app, argc, argv);

  try {
    if (dataset->parsed()) return cmd_dataset(common, in_dir, out_dir);
    if (train->parsed()) return cmd_train(common, manifest, out_path);
    if (infer->parsed()) return cmd_infer(common, input, ckpt, out_path, sites, sdf_out, mesh_out);
    if (eval_field->parsed()) return cmd_eval_field(common, field_path, mesh_path);
    if (eval_quad->parsed()) return cmd_eval_quad(common, quad_path, reference_path);
    if (mc->parsed()) return cmd_mc(common, tsdf_path, out_path);
    if (gt_field->parsed()) return cmd_gt_field(common, mesh_path, out_path);
  } catch (const std::exception& ex) {
    json j;
    j["ok"] = false;
    j["error"] = ex.what();
    std::cout << j.dump() << "\n";
    return 2;
  }
  return 2;
}
