#pragma once

#include <filesystem>
#include <vector>

#include "xgen/mesh_io.hpp"

namespace xgen {

// A 4-RoSy cross at a surface point, represented by one unit tangent
// direction alpha; the full cross is {alpha, beta, -alpha, -beta} with
// beta = alpha x n. mu/nu hold the ground-truth pair when present.
struct CrossFieldSample {
  Vec3 point = Vec3::Zero();
  Vec3 normal = Vec3::Zero();
  Vec3 alpha = Vec3::Zero();
  Vec3 mu = Vec3::Zero();
  Vec3 nu = Vec3::Zero();
};

enum class FieldSite : uint8_t { vertex = 0, face_center = 1, point_sample = 2 };

struct CrossField {
  FieldSite site = FieldSite::vertex;
  bool has_gt = false;
  std::vector<CrossFieldSample> samples;
  void validate() const;  // tangency/orthogonality invariants
};

inline Vec3 beta_of(const Vec3& alpha, const Vec3& n) { return alpha.cross(n); }

// alpha = normalize((I - n n^T) raw); throws when raw is parallel to n
// (projection magnitude < 1e-8).
Vec3 project_to_tangent(const Vec3& raw, const Vec3& n);

// |alpha.mu| + |alpha.nu| - 1, clamped at 0 against floating-point underflow;
// 0 iff alpha is one of the four rotations of mu about n, at most sqrt(2)-1.
double alignment_deviation(const Vec3& alpha, const Vec3& mu, const Vec3& nu);

// Residual of d modulo the quarter-turn symmetry, in [-pi/4, pi/4]; ties at
// exactly pi/4 resolve toward the smaller rotation count. k_out receives the
// removed multiple of pi/2.
double wrap_quarter(double d, long* k_out = nullptr);

// Minimal rotation carrying unit vector `from` onto `to` applied to v;
// throws for antipodal from/to.
Vec3 rotate_between(const Vec3& from, const Vec3& to, const Vec3& v);

// Ordered one-ring neighborhoods (counterclockwise per face winding).
struct VertexRing {
  std::vector<int> ring;
  bool boundary = false;
};
// Throws on non-manifold input, listing the offending edges.
std::vector<VertexRing> build_vertex_rings(const TriangleMesh& mesh);

struct GtFieldResult {
  CrossField field;                    // per-vertex, alpha only
  std::vector<double> energy_history;  // energy after init and per iteration
};

// Anisotropy-weighted 4-RoSy smoothing: per-vertex angles initialized from
// dir_max, Jacobi sweeps averaging parallel-transported neighbor directions
// snapped to the nearest quarter rotation, blended with the curvature
// direction weighted by anisotropy. The energy
//   smooth_weight * sum_edges wrap(theta_v - theta_u - transport)^2
//   + sum_v anisotropy_v * wrap(theta_v - theta_curv)^2
// is non-increasing across iterations (a step that would raise it is damped
// toward the previous state, or skipped once converged).
GtFieldResult generate_gt_field(const TriangleMesh& mesh,
                                const std::vector<CurvatureFrame>& frames, int iterations,
                                double smooth_weight = 1.0);

struct SingularityReport {
  std::vector<std::pair<int, double>> indices;  // (vertex, quarter-integer index != 0)
  std::vector<int> boundary_vertices;           // skipped sites
  double index_sum = 0.0;                       // over interior vertices
};

// Per-vertex field index: walk the one-ring, accumulate quarter-wrapped
// transported angle differences plus the loop holonomy; each index is an
// exact multiple of 1/4 and the interior sum equals the Euler characteristic
// on closed meshes.
SingularityReport singularity_indices(const TriangleMesh& mesh, const CrossField& field);

// versioned "XFLD" binary (f32); beta is reconstructed as alpha x n on load
void save_field(const std::filesystem::path& path, const CrossField& field);
CrossField load_field(const std::filesystem::path& path);

}  // namespace xgen
