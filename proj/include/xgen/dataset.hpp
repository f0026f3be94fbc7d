#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "xgen/config.hpp"
#include "xgen/network.hpp"

namespace xgen {

struct ManifestEntry {
  std::string id;    // "<base>_aug<k>"
  std::string base;  // source mesh stem
  int aug = 0;
  std::string split;  // "train" | "test"
  std::map<std::string, std::string> files;  // mesh, tsdf, cloud, shell, field_vertices, field_samples
  uint64_t config_hash = 0;
  uint64_t seed = 0;
};

// shell query samples, "XSHL" binary (artifact plumbing; see README)
void save_shell_samples(const std::filesystem::path& path, const SdfSamples& samples);
SdfSamples load_shell_samples(const std::filesystem::path& path);

void save_manifest(const std::filesystem::path& path, const std::vector<ManifestEntry>& entries);
std::vector<ManifestEntry> load_manifest(const std::filesystem::path& path);

struct DatasetBuildResult {
  std::vector<ManifestEntry> entries;
  std::vector<std::string> failures;  // "<id>: <error>"
};

// Per mesh and augmentation copy: rotate, normalize, TSDF, thin-shell
// samples, surface samples, curvature frames, GT field (vertices and at the
// samples), all written under out_dir. Deterministic for a fixed config/seed;
// per-shape failures are logged and skipped.
DatasetBuildResult build_dataset(const std::filesystem::path& in_dir,
                                 const std::filesystem::path& out_dir,
                                 const PipelineConfig& config);

// Materialize one manifest entry for training.
ShapeRecord load_shape_record(const ManifestEntry& entry);

// Interpolate a per-vertex field to arbitrary surface samples (4-RoSy-aware
// corner blend); returns mu (nu = mu x n).
std::vector<Vec3> field_at_samples(const TriangleMesh& mesh, const CrossField& vertex_field,
                                   const std::vector<SurfaceSample>& provenance,
                                   const std::vector<Vec3>& sample_normals);

}  // namespace xgen
