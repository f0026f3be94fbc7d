#pragma once

#include <vector>

#include "xgen/crossfield.hpp"
#include "xgen/mesh_io.hpp"

namespace xgen {

struct QuadQualityReport {
  double area_distortion = 0.0;      // 1e4 x stddev of face areas
  double angle_distortion = 0.0;     // RMS corner deviation from pi/2, radians
  long singularity_count = 0;        // irregular vertices
  double chamfer_l1 = -1.0;          // 1e4 x symmetric L1 chamfer, -1 when not computed
  double jacobian_ratio_mean = 0.0;  // mean per-face min/max corner Jacobian
  std::vector<double> jacobian_per_face;
};

// Mean alignment deviation of the field against principal-curvature frames,
// skipping near-umbilic sites (anisotropy < mask). Field and frames must share
// sites (same count/order). Throws when every site is masked.
double angular_error(const CrossField& field, const std::vector<CurvatureFrame>& frames,
                     double anisotropy_mask = 0.05);

// 1e4 x population standard deviation of quad areas; each quad's area is the
// average of its two diagonal triangulations.
double area_distortion(const QuadMesh& quad);

// sqrt(mean over all 4|F| corners of (angle - pi/2)^2)
double angle_distortion(const QuadMesh& quad);

// Irregular vertices: interior valence != 4 plus boundary valence != 3.
// Throws on non-manifold edges.
long quad_singularities(const QuadMesh& quad);

// 1e4 x symmetric mean nearest-neighbor L1 distance between area-uniform
// surface samplings of the two meshes.
double chamfer_l1(const TriangleMesh& a, const TriangleMesh& b, size_t samples = 100000,
                  uint64_t seed = 0);
TriangleMesh quad_to_triangles(const QuadMesh& quad);

// Per-face min/max of the signed corner Jacobians (edge cross products
// projected onto the face best-fit plane); 0 when signs differ or the face is
// degenerate. Returns the mean and fills `per_face` when given.
double jacobian_ratio(const QuadMesh& quad, std::vector<double>* per_face = nullptr);

QuadQualityReport evaluate_quad_mesh(const QuadMesh& quad, const TriangleMesh* reference,
                                     size_t chamfer_samples = 100000, uint64_t seed = 0);

// aligned-column text table in Table-2 metric order
std::string report_table(const QuadQualityReport& report);

}  // namespace xgen
