#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace xgen {

using Vec3 = Eigen::Vector3d;

struct TriangleMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> faces;
  std::vector<Vec3> vertex_normals;  // empty or one per vertex, unit length

  bool has_normals() const { return !vertex_normals.empty(); }
  // Throws on out-of-range indices, degenerate faces (area < 1e-12), or
  // non-unit normals (1e-6 tolerance).
  void validate() const;

  Vec3 face_normal(int f) const;
  double face_area(int f) const;
  double total_area() const;
  Vec3 face_center(int f) const;
  void compute_vertex_normals();  // area-weighted from faces
};

struct QuadMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 4>> faces;
  void validate() const;  // index range + 4 distinct vertices per face
};

struct OrientedPointCloud {
  std::vector<Vec3> points;
  std::vector<Vec3> normals;
  void validate(bool require_unit_cube = false) const;
  size_t size() const { return points.size(); }
};

struct CurvatureFrame {
  Vec3 point;
  Vec3 normal;
  Vec3 dir_min, dir_max;  // principal directions, unit, tangent
  double k_min = 0.0, k_max = 0.0;
  double anisotropy = 0.0;  // |k_max-k_min| / (|k_max|+|k_min|+delta), in [0,1]
};

// Similarity transform p' = scale * p + offset, invertible.
struct NormalizeTransform {
  double scale = 1.0;
  Vec3 offset = Vec3::Zero();
  Vec3 apply(const Vec3& p) const { return scale * p + offset; }
  Vec3 invert(const Vec3& p) const { return (p - offset) / scale; }
};

// --- file IO -------------------------------------------------------------

// OBJ v/f records. Quads are triangulated along the shorter diagonal; larger
// polygons are fan-triangulated. `vn` records are attached when they align
// one-to-one with vertices.
TriangleMesh load_mesh(const std::filesystem::path& path);
// Same parser, but quad faces are preserved; triangles are rejected.
QuadMesh load_quad_mesh(const std::filesystem::path& path);
void save_mesh(const std::filesystem::path& path, const TriangleMesh& mesh);
void save_quad_mesh(const std::filesystem::path& path, const QuadMesh& mesh);

// PLY point clouds, properties x y z nx ny nz; ascii and
// binary_little_endian on read, format chosen by flag on write.
OrientedPointCloud load_point_cloud(const std::filesystem::path& path);
void save_point_cloud(const std::filesystem::path& path, const OrientedPointCloud& cloud,
                      bool binary = true);

// --- geometry ops ----------------------------------------------------------

// Uniform scale + translation putting the longest bbox axis exactly on
// [-0.5+margin, 0.5-margin], centered. Throws if the bbox has zero extent on
// all axes.
std::pair<TriangleMesh, NormalizeTransform> normalize_to_unit_cube(const TriangleMesh& mesh,
                                                                   double margin = 0.02);

struct SurfaceSample {
  int face = 0;
  Vec3 bary = Vec3::Zero();  // barycentric coords in that face
};

// Area-weighted uniform surface sampling; deterministic per seed. Normals are
// barycentric-interpolated vertex normals when present, face normals
// otherwise. `provenance` (optional) receives face id + barycentrics per
// sample so callers can interpolate other per-vertex data at the samples.
OrientedPointCloud sample_surface(const TriangleMesh& mesh, size_t count, uint64_t seed,
                                  std::vector<SurfaceSample>* provenance = nullptr);

// k-NN PCA normals with sign propagation along a minimum spanning tree of the
// k-NN graph; the root (farthest point from the centroid) is oriented
// outward. Throws for k < 3 or rank-deficient neighborhoods.
OrientedPointCloud estimate_normals(const std::vector<Vec3>& points, int k = 16,
                                    uint64_t seed = 0);

// Per-vertex principal curvature frames via quadric fit over the 2-ring.
// Requires a consistently oriented mesh; throws on isolated vertices.
std::vector<CurvatureFrame> principal_curvatures(const TriangleMesh& mesh);

// Curvature frames averaged onto triangle face centers (4-RoSy-aware blend of
// the corner directions); used to evaluate face-center fields.
std::vector<CurvatureFrame> frames_at_face_centers(const TriangleMesh& mesh,
                                                   const std::vector<CurvatureFrame>& vertex_frames);

}  // namespace xgen
