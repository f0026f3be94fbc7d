#pragma once

#include <filesystem>
#include <memory>
#include <vector>

#include "xgen/mesh_io.hpp"

namespace xgen {

// Signed-distance queries sampled in the thin shell |sdf| < shell_epsilon.
struct SdfSamples {
  std::vector<Vec3> points;
  std::vector<double> values;
  double shell_epsilon = 0.0;
};

// Dense truncated SDF on the same vertex lattice as SparseVoxelGrid: vertex
// (i,j,k) at -0.5 + i/R, values clamped to [-truncation, truncation],
// negative inside. x-fastest storage.
struct DenseSdfGrid {
  int resolution = 0;
  double truncation = 0.0;
  std::vector<double> values;  // R^3
  bool degraded = false;       // input was not watertight

  double& at(int i, int j, int k) {
    return values[size_t(i) + size_t(resolution) * (size_t(j) + size_t(resolution) * k)];
  }
  double at(int i, int j, int k) const {
    return values[size_t(i) + size_t(resolution) * (size_t(j) + size_t(resolution) * k)];
  }
  Vec3 vertex_position(int i, int j, int k) const {
    double h = 1.0 / resolution;
    return {-0.5 + i * h, -0.5 + j * h, -0.5 + k * h};
  }
  // trilinear interpolation; queries are clamped to the lattice hull
  double sample(const Vec3& p) const;
};

// BVH over mesh triangles: closest-point queries and winding numbers (exact
// per-leaf solid angles, far-field dipole approximation).
class MeshBvh {
 public:
  explicit MeshBvh(const TriangleMesh& mesh);
  ~MeshBvh();
  MeshBvh(MeshBvh&&) noexcept;

  double distance(const Vec3& p) const;
  Vec3 closest_point(const Vec3& p) const;
  double fast_winding(const Vec3& p, double beta = 2.0) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// Exact generalized winding number (direct solid-angle sum over all faces).
double winding_number(const TriangleMesh& mesh, const Vec3& p);

// Every edge shared by exactly two faces with opposite direction.
bool is_watertight(const TriangleMesh& mesh);

// Exact point-triangle distance magnitude, sign by generalized winding number
// (inside iff winding > 0.5), clamped to +-truncation. Non-watertight input
// degrades to the same winding threshold and sets the `degraded` flag.
DenseSdfGrid compute_tsdf(const TriangleMesh& mesh, int resolution, double truncation,
                          int workers = 0);

// Rejection-sample points uniformly within cells that can intersect the shell
// |sdf| < epsilon; values come from trilinear interpolation. When `surface` is
// given, its points are appended with their interpolated values (so the input
// set P is a subset of the query set Q).
SdfSamples sample_thin_shell(const DenseSdfGrid& grid, double epsilon, size_t count,
                             uint64_t seed, const OrientedPointCloud* surface = nullptr);

// 256-case marching cubes with linear edge interpolation; triangles oriented
// so normals point toward positive SDF. Throws if the grid has no sign change.
TriangleMesh marching_cubes(const DenseSdfGrid& grid);

// versioned "TSDF" binary, little-endian f32
void save_tsdf(const std::filesystem::path& path, const DenseSdfGrid& grid);
DenseSdfGrid load_tsdf(const std::filesystem::path& path);

}  // namespace xgen
