#include "xgen/metrics.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <map>
#include <sstream>

#include "xgen/kdtree.hpp"
#include "xgen/util.hpp"

namespace xgen {

double angular_error(const CrossField& field, const std::vector<CurvatureFrame>& frames,
                     double anisotropy_mask) {
  if (field.samples.size() != frames.size())
    throw Error("angular_error: field and frames must share sites");
  double acc = 0;
  size_t used = 0;
  for (size_t i = 0; i < frames.size(); ++i) {
    if (frames[i].anisotropy < anisotropy_mask) continue;
    acc += alignment_deviation(field.samples[i].alpha, frames[i].dir_max, frames[i].dir_min);
    ++used;
  }
  if (used == 0) throw Error("angular_error: all sites masked as umbilic");
  return acc / double(used);
}

namespace {

double quad_area(const QuadMesh& q, size_t f) {
  const auto& t = q.faces[f];
  const Vec3 &a = q.vertices[t[0]], &b = q.vertices[t[1]], &c = q.vertices[t[2]],
             &d = q.vertices[t[3]];
  double split1 = 0.5 * ((b - a).cross(c - a).norm() + (c - a).cross(d - a).norm());
  double split2 = 0.5 * ((b - a).cross(d - a).norm() + (c - b).cross(d - b).norm());
  return 0.5 * (split1 + split2);
}

}  // namespace

double area_distortion(const QuadMesh& quad) {
  if (quad.faces.empty()) throw Error("area_distortion: empty quad mesh");
  std::vector<double> areas(quad.faces.size());
  double mean = 0;
  for (size_t f = 0; f < quad.faces.size(); ++f) {
    areas[f] = quad_area(quad, f);
    mean += areas[f];
  }
  mean /= double(areas.size());
  double var = 0;
  for (double a : areas) var += (a - mean) * (a - mean);
  var /= double(areas.size());  // population variance
  return 1e4 * std::sqrt(var);
}

double angle_distortion(const QuadMesh& quad) {
  if (quad.faces.empty()) throw Error("angle_distortion: empty quad mesh");
  double acc = 0;
  size_t n = 0;
  for (size_t f = 0; f < quad.faces.size(); ++f) {
    const auto& t = quad.faces[f];
    for (int c = 0; c < 4; ++c) {
      const Vec3& cur = quad.vertices[t[c]];
      Vec3 e1 = quad.vertices[t[(c + 1) % 4]] - cur;
      Vec3 e2 = quad.vertices[t[(c + 3) % 4]] - cur;
      double l1 = e1.norm(), l2 = e2.norm();
      if (l1 < 1e-15 || l2 < 1e-15)
        throw Error("angle_distortion: degenerate corner at face " + std::to_string(f));
      double cosang = std::clamp(e1.dot(e2) / (l1 * l2), -1.0, 1.0);
      double d = std::acos(cosang) - M_PI_2;
      acc += d * d;
      ++n;
    }
  }
  return std::sqrt(acc / double(n));
}

long quad_singularities(const QuadMesh& quad) {
  std::map<std::pair<int, int>, int> edge_count;
  std::vector<int> valence(quad.vertices.size(), 0);
  for (const auto& f : quad.faces)
    for (int c = 0; c < 4; ++c) {
      int a = f[c], b = f[(c + 1) % 4];
      ++edge_count[std::minmax(a, b)];
    }
  std::vector<char> on_boundary(quad.vertices.size(), 0);
  for (const auto& [edge, n] : edge_count) {
    if (n > 2)
      throw Error("quad_singularities: non-manifold edge (" + std::to_string(edge.first) + "," +
                  std::to_string(edge.second) + ")");
    ++valence[edge.first];
    ++valence[edge.second];
    if (n == 1) {
      on_boundary[edge.first] = 1;
      on_boundary[edge.second] = 1;
    }
  }
  long count = 0;
  for (size_t v = 0; v < quad.vertices.size(); ++v) {
    if (valence[v] == 0) continue;  // unreferenced vertex
    int regular = on_boundary[v] ? 3 : 4;
    if (valence[v] != regular) ++count;
  }
  return count;
}

TriangleMesh quad_to_triangles(const QuadMesh& quad) {
  TriangleMesh tri;
  tri.vertices = quad.vertices;
  tri.faces.reserve(quad.faces.size() * 2);
  for (const auto& f : quad.faces) {
    tri.faces.push_back({f[0], f[1], f[2]});
    tri.faces.push_back({f[0], f[2], f[3]});
  }
  return tri;
}

double chamfer_l1(const TriangleMesh& a, const TriangleMesh& b, size_t samples, uint64_t seed) {
  if (a.faces.empty() || b.faces.empty()) throw Error("chamfer_l1: empty mesh");
  OrientedPointCloud pa = sample_surface(a, samples, derive_seed({seed, 1}));
  OrientedPointCloud pb = sample_surface(b, samples, derive_seed({seed, 2}));
  KdTree3 ta(pa.points), tb(pb.points);
  double ab = 0, ba = 0;
  for (const auto& p : pa.points) ab += tb.nearest_l1(p).distance;
  for (const auto& p : pb.points) ba += ta.nearest_l1(p).distance;
  return 1e4 * 0.5 * (ab / double(pa.points.size()) + ba / double(pb.points.size()));
}

double jacobian_ratio(const QuadMesh& quad, std::vector<double>* per_face) {
  if (quad.faces.empty()) throw Error("jacobian_ratio: empty quad mesh");
  if (per_face) per_face->assign(quad.faces.size(), 0.0);
  double acc = 0;
  for (size_t f = 0; f < quad.faces.size(); ++f) {
    const auto& t = quad.faces[f];
    Vec3 corners[4] = {quad.vertices[t[0]], quad.vertices[t[1]], quad.vertices[t[2]],
                       quad.vertices[t[3]]};
    // best-fit plane through the corners, oriented with the bilinear normal
    Vec3 centroid = 0.25 * (corners[0] + corners[1] + corners[2] + corners[3]);
    Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
    for (const Vec3& c : corners) {
      Vec3 d = c - centroid;
      cov += d * d.transpose();
    }
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov);
    Vec3 n = eig.eigenvectors().col(0);
    Vec3 bilinear = (corners[2] - corners[0]).cross(corners[3] - corners[1]);
    if (n.dot(bilinear) < 0) n = -n;
    Vec3 proj[4];
    for (int c = 0; c < 4; ++c)
      proj[c] = corners[c] - (corners[c] - centroid).dot(n) * n;
    double jmin = std::numeric_limits<double>::infinity(), jmax = -jmin;
    for (int c = 0; c < 4; ++c) {
      Vec3 e_next = proj[(c + 1) % 4] - proj[c];
      Vec3 e_prev = proj[(c + 3) % 4] - proj[c];
      double jac = e_next.cross(e_prev).dot(n);
      jmin = std::min(jmin, jac);
      jmax = std::max(jmax, jac);
    }
    double ratio;
    if (jmax <= 0 || jmin <= 0)
      ratio = 0.0;  // degenerate or inverted corner
    else
      ratio = jmin / jmax;
    if (per_face) (*per_face)[f] = ratio;
    acc += ratio;
  }
  return acc / double(quad.faces.size());
}

QuadQualityReport evaluate_quad_mesh(const QuadMesh& quad, const TriangleMesh* reference,
                                     size_t chamfer_samples, uint64_t seed) {
  quad.validate();
  QuadQualityReport report;
  report.area_distortion = area_distortion(quad);
  report.angle_distortion = angle_distortion(quad);
  report.singularity_count = quad_singularities(quad);
  report.jacobian_ratio_mean = jacobian_ratio(quad, &report.jacobian_per_face);
  if (reference)
    report.chamfer_l1 = chamfer_l1(quad_to_triangles(quad), *reference, chamfer_samples, seed);
  return report;
}

std::string report_table(const QuadQualityReport& report) {
  std::ostringstream os;
  os.precision(4);
  os << std::fixed;
  os << "Area      Angle     #Sings    CD        JR\n";
  auto cell = [&](double v) {
    std::ostringstream c;
    c.precision(4);
    c << std::fixed << v;
    std::string s = c.str();
    s.resize(10, ' ');
    return s;
  };
  os << cell(report.area_distortion) << cell(report.angle_distortion);
  std::string sing = std::to_string(report.singularity_count);
  sing.resize(10, ' ');
  os << sing;
  if (report.chamfer_l1 >= 0)
    os << cell(report.chamfer_l1);
  else
    os << "-         ";
  os << cell(report.jacobian_ratio_mean) << "\n";
  return os.str();
}

}  // namespace xgen
