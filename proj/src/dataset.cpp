#include "xgen/dataset.hpp"

#include <Eigen/Geometry>
#include <algorithm>
#include <fstream>

#include <json.hpp>

#include "xgen/tsdf.hpp"
#include "xgen/util.hpp"

namespace xgen {

using json = nlohmann::json;

void save_shell_samples(const std::filesystem::path& path, const SdfSamples& samples) {
  atomic_write_file(path, [&](std::ostream& os) {
    write_bytes(os, "XSHL", 4);
    write_u32(os, 1);
    write_f32(os, float(samples.shell_epsilon));
    write_u64(os, samples.points.size());
    for (size_t i = 0; i < samples.points.size(); ++i) {
      for (int c = 0; c < 3; ++c) write_f32(os, float(samples.points[i][c]));
      write_f32(os, float(samples.values[i]));
    }
  });
}

SdfSamples load_shell_samples(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open shell samples: " + path.string());
  char magic[4];
  read_bytes(is, magic, 4, "shell magic");
  if (std::string(magic, 4) != "XSHL") throw Error("bad magic in " + path.string());
  uint32_t version = read_u32(is, "shell version");
  if (version != 1) throw Error("unsupported shell version " + std::to_string(version));
  SdfSamples out;
  out.shell_epsilon = read_f32(is, "shell epsilon");
  uint64_t count = read_u64(is, "shell count");
  out.points.resize(count);
  out.values.resize(count);
  for (uint64_t i = 0; i < count; ++i) {
    for (int c = 0; c < 3; ++c) out.points[i][c] = read_f32(is, "shell point");
    out.values[i] = read_f32(is, "shell value");
  }
  return out;
}

void save_manifest(const std::filesystem::path& path, const std::vector<ManifestEntry>& entries) {
  atomic_write_file(path, [&](std::ostream& os) {
    for (const auto& e : entries) {
      json j;
      j["id"] = e.id;
      j["base"] = e.base;
      j["aug"] = e.aug;
      j["split"] = e.split;
      j["files"] = e.files;
      j["config_hash"] = hex64(e.config_hash);
      j["seed"] = e.seed;
      os << j.dump() << "\n";
    }
  });
}

std::vector<ManifestEntry> load_manifest(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot open manifest: " + path.string());
  std::vector<ManifestEntry> entries;
  std::string line;
  size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded())
      throw Error("manifest parse error at line " + std::to_string(line_no));
    ManifestEntry e;
    e.id = j.at("id").get<std::string>();
    e.base = j.at("base").get<std::string>();
    e.aug = j.at("aug").get<int>();
    e.split = j.at("split").get<std::string>();
    e.files = j.at("files").get<std::map<std::string, std::string>>();
    e.config_hash = std::stoull(j.at("config_hash").get<std::string>(), nullptr, 16);
    e.seed = j.at("seed").get<uint64_t>();
    entries.push_back(std::move(e));
  }
  return entries;
}

std::vector<Vec3> field_at_samples(const TriangleMesh& mesh, const CrossField& vertex_field,
                                   const std::vector<SurfaceSample>& provenance,
                                   const std::vector<Vec3>& sample_normals) {
  if (vertex_field.samples.size() != mesh.vertices.size())
    throw Error("field_at_samples: field must be per-vertex");
  std::vector<Vec3> mu(provenance.size());
  for (size_t s = 0; s < provenance.size(); ++s) {
    const auto& t = mesh.faces[size_t(provenance[s].face)];
    const Vec3& n = sample_normals[s];
    auto tangent = [&](const Vec3& d) {
      Vec3 td = d - d.dot(n) * n;
      double len = td.norm();
      return len > 1e-12 ? Vec3(td / len) : Vec3(Vec3::Zero());
    };
    Vec3 ref = tangent(vertex_field.samples[t[0]].alpha);
    if (ref.norm() < 0.5)
      ref = tangent(vertex_field.samples[t[1]].alpha);
    if (ref.norm() < 0.5)
      throw Error("field_at_samples: degenerate corner directions at sample " + std::to_string(s));
    Vec3 acc = Vec3::Zero();
    for (int c = 0; c < 3; ++c) {
      Vec3 d = tangent(vertex_field.samples[t[c]].alpha);
      if (d.norm() < 0.5) continue;
      // match to ref under the quarter-turn symmetry
      Vec3 perp = n.cross(d);
      Vec3 best = d;
      double best_dot = d.dot(ref);
      for (const Vec3& cand : {Vec3(-d), perp, Vec3(-perp)})
        if (cand.dot(ref) > best_dot) {
          best_dot = cand.dot(ref);
          best = cand;
        }
      acc += provenance[s].bary[c] * best;
    }
    Vec3 m = tangent(acc);
    mu[s] = m.norm() > 0.5 ? m : ref;
  }
  return mu;
}

namespace {

std::string entry_id(const std::string& base, int aug) {
  return base + "_aug" + std::to_string(aug);
}

ManifestEntry build_one(const std::filesystem::path& mesh_path,
                        const std::filesystem::path& out_dir, const PipelineConfig& cfg,
                        const std::string& base, int aug) {
  ManifestEntry entry;
  entry.base = base;
  entry.aug = aug;
  entry.id = entry_id(base, aug);
  entry.config_hash = cfg.hash();
  entry.seed = derive_seed({cfg.seed, fnv1a64(base), uint64_t(aug)});
  entry.split = fnv1a64(base) % 10 == 9 ? "test" : "train";

  TriangleMesh mesh = load_mesh(mesh_path);
  if (aug > 0) {
    Rng rng(derive_seed({entry.seed, 0x726f74ull}));
    double u1 = rng.uniform(), u2 = rng.uniform(), u3 = rng.uniform();
    double a = std::sqrt(1.0 - u1), b = std::sqrt(u1);
    Eigen::Quaterniond q(b * std::cos(2 * M_PI * u3), a * std::sin(2 * M_PI * u2),
                         a * std::cos(2 * M_PI * u2), b * std::sin(2 * M_PI * u3));
    Eigen::Matrix3d rot = q.normalized().toRotationMatrix();
    for (auto& v : mesh.vertices) v = rot * v;
    if (mesh.has_normals())
      for (auto& n : mesh.vertex_normals) n = rot * n;
  }
  auto [normalized, transform] = normalize_to_unit_cube(mesh, cfg.normalize.margin);
  normalized.compute_vertex_normals();

  const std::filesystem::path dir = out_dir / entry.id;
  std::filesystem::create_directories(dir);

  save_mesh(dir / "mesh.obj", normalized);
  entry.files["mesh"] = (dir / "mesh.obj").string();

  DenseSdfGrid sdf = compute_tsdf(normalized, cfg.tsdf.resolution, cfg.tsdf.truncation,
                                  cfg.workers > 0 ? 1 : 1);  // shape-level parallelism outside
  save_tsdf(dir / "sdf.tsdf", sdf);
  entry.files["tsdf"] = (dir / "sdf.tsdf").string();

  std::vector<SurfaceSample> provenance;
  OrientedPointCloud cloud = sample_surface(normalized, size_t(cfg.dataset.surface_samples),
                                            derive_seed({entry.seed, 0x73616d70ull}), &provenance);
  save_point_cloud(dir / "cloud.ply", cloud, true);
  entry.files["cloud"] = (dir / "cloud.ply").string();

  SdfSamples shell = sample_thin_shell(sdf, cfg.tsdf.shell_epsilon, size_t(cfg.tsdf.shell_count),
                                       derive_seed({entry.seed, 0x7368656cull}),
                                       cfg.tsdf.shell_include_surface ? &cloud : nullptr);
  save_shell_samples(dir / "shell.xshl", shell);
  entry.files["shell"] = (dir / "shell.xshl").string();

  std::vector<CurvatureFrame> frames = principal_curvatures(normalized);
  GtFieldResult gt = generate_gt_field(normalized, frames, cfg.gt_field.iterations,
                                       cfg.gt_field.smooth_weight);
  save_field(dir / "field_vertices.xfld", gt.field);
  entry.files["field_vertices"] = (dir / "field_vertices.xfld").string();

  std::vector<Vec3> mu = field_at_samples(normalized, gt.field, provenance, cloud.normals);
  CrossField sample_field;
  sample_field.site = FieldSite::point_sample;
  sample_field.has_gt = true;
  sample_field.samples.resize(cloud.size());
  for (size_t i = 0; i < cloud.size(); ++i) {
    auto& s = sample_field.samples[i];
    s.point = cloud.points[i];
    s.normal = cloud.normals[i];
    s.alpha = mu[i];
    s.mu = mu[i];
    s.nu = beta_of(mu[i], cloud.normals[i]);
  }
  save_field(dir / "field_samples.xfld", sample_field);
  entry.files["field_samples"] = (dir / "field_samples.xfld").string();
  return entry;
}

}  // namespace

DatasetBuildResult build_dataset(const std::filesystem::path& in_dir,
                                 const std::filesystem::path& out_dir,
                                 const PipelineConfig& cfg) {
  cfg.validate();
  std::vector<std::filesystem::path> meshes;
  for (const auto& e : std::filesystem::directory_iterator(in_dir)) {
    if (!e.is_regular_file()) continue;
    std::string ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
    if (ext == ".obj") meshes.push_back(e.path());
  }
  std::sort(meshes.begin(), meshes.end());
  if (meshes.empty()) throw Error("build_dataset: no .obj meshes in " + in_dir.string());

  struct Job {
    std::filesystem::path path;
    std::string base;
    int aug;
  };
  std::vector<Job> jobs;
  for (const auto& p : meshes)
    for (int a = 0; a < cfg.dataset.augmentations; ++a)
      jobs.push_back({p, p.stem().string(), a});

  std::vector<ManifestEntry> slots(jobs.size());
  std::vector<std::string> failures(jobs.size());
  parallel_chunks(jobs.size(), cfg.workers, [&](size_t lo, size_t hi) {
    for (size_t i = lo; i < hi; ++i) {
      const Job& job = jobs[i];
      try {
        slots[i] = build_one(job.path, out_dir, cfg, job.base, job.aug);
        log_info("dataset: built " + slots[i].id + " (" + slots[i].split + ")");
      } catch (const std::exception& ex) {
        failures[i] = entry_id(job.base, job.aug) + ": " + ex.what();
        log_error("dataset: skipped " + entry_id(job.base, job.aug) + ": " + ex.what());
      }
    }
  });

  DatasetBuildResult result;
  for (size_t i = 0; i < jobs.size(); ++i) {
    if (!failures[i].empty())
      result.failures.push_back(failures[i]);
    else
      result.entries.push_back(std::move(slots[i]));
  }
  return result;
}

ShapeRecord load_shape_record(const ManifestEntry& entry) {
  ShapeRecord rec;
  rec.id = entry.id;
  rec.cloud = load_point_cloud(entry.files.at("cloud"));
  rec.sdf = load_tsdf(entry.files.at("tsdf"));
  rec.shell = load_shell_samples(entry.files.at("shell"));
  CrossField field = load_field(entry.files.at("field_samples"));
  if (!field.has_gt || field.samples.size() != rec.cloud.size())
    throw Error("shape '" + entry.id + "': sample field does not match the cloud");
  rec.gt_mu.resize(field.samples.size());
  rec.gt_nu.resize(field.samples.size());
  for (size_t i = 0; i < field.samples.size(); ++i) {
    rec.gt_mu[i] = field.samples[i].mu;
    rec.gt_nu[i] = field.samples[i].nu;
    // the PLY cloud is f32; keep supervision sites consistent with it
    rec.gt_mu[i].normalize();
    rec.gt_nu[i].normalize();
  }
  return rec;
}

}  // namespace xgen
