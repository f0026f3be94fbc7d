#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "xgen/metrics.hpp"
#include "xgen/shapes.hpp"
#include "xgen/util.hpp"

using namespace xgen;

namespace {

// independent brute-force reimplementations used as oracles

double oracle_area(const QuadMesh& q) {
  std::vector<double> areas;
  for (const auto& f : q.faces) {
    const Vec3 &a = q.vertices[f[0]], &b = q.vertices[f[1]], &c = q.vertices[f[2]],
               &d = q.vertices[f[3]];
    double s1 = 0.5 * ((b - a).cross(c - a)).norm() + 0.5 * ((c - a).cross(d - a)).norm();
    double s2 = 0.5 * ((b - a).cross(d - a)).norm() + 0.5 * ((c - b).cross(d - b)).norm();
    areas.push_back(0.5 * (s1 + s2));
  }
  double mean = 0;
  for (double a : areas) mean += a;
  mean /= double(areas.size());
  double var = 0;
  for (double a : areas) var += (a - mean) * (a - mean);
  return 1e4 * std::sqrt(var / double(areas.size()));
}

double oracle_angle(const QuadMesh& q) {
  double acc = 0;
  size_t n = 0;
  for (const auto& f : q.faces)
    for (int c = 0; c < 4; ++c) {
      Vec3 e1 = q.vertices[f[(c + 1) % 4]] - q.vertices[f[c]];
      Vec3 e2 = q.vertices[f[(c + 3) % 4]] - q.vertices[f[c]];
      double phi = std::acos(std::clamp(e1.dot(e2) / (e1.norm() * e2.norm()), -1.0, 1.0));
      acc += (phi - M_PI_2) * (phi - M_PI_2);
      ++n;
    }
  return std::sqrt(acc / double(n));
}

double oracle_jr(const QuadMesh& q) {
  double acc = 0;
  for (const auto& f : q.faces) {
    Vec3 corners[4] = {q.vertices[f[0]], q.vertices[f[1]], q.vertices[f[2]], q.vertices[f[3]]};
    Vec3 centroid = 0.25 * (corners[0] + corners[1] + corners[2] + corners[3]);
    Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
    for (auto& c : corners) cov += (c - centroid) * (c - centroid).transpose();
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov);
    Vec3 n = eig.eigenvectors().col(0);
    if (n.dot((corners[2] - corners[0]).cross(corners[3] - corners[1])) < 0) n = -n;
    double jmin = 1e300, jmax = -1e300;
    for (int c = 0; c < 4; ++c) {
      Vec3 pc = corners[c] - (corners[c] - centroid).dot(n) * n;
      Vec3 pn = corners[(c + 1) % 4] - (corners[(c + 1) % 4] - centroid).dot(n) * n;
      Vec3 pp = corners[(c + 3) % 4] - (corners[(c + 3) % 4] - centroid).dot(n) * n;
      double jac = (pn - pc).cross(pp - pc).dot(n);
      jmin = std::min(jmin, jac);
      jmax = std::max(jmax, jac);
    }
    acc += (jmin <= 0 || jmax <= 0) ? 0.0 : jmin / jmax;
  }
  return acc / double(q.faces.size());
}

QuadMesh random_quad_mesh(Rng& rng) {
  // perturbed planar grid: valid, mildly non-planar quads
  int nx = 2 + int(rng.below(4)), ny = 2 + int(rng.below(4));
  QuadMesh q = shapes::quad_grid(1.0, 1.0, nx, ny);
  for (auto& v : q.vertices) {
    v[0] += rng.uniform(-0.1, 0.1) / nx;
    v[1] += rng.uniform(-0.1, 0.1) / ny;
    v[2] += rng.uniform(-0.05, 0.05);
  }
  return q;
}

QuadMesh single_quad(std::initializer_list<Vec3> corners) {
  QuadMesh q;
  q.vertices = corners;
  q.faces = {{0, 1, 2, 3}};
  return q;
}

}  // namespace

TEST_CASE("area_distortion") {
  QuadMesh grid = shapes::quad_grid(1.0, 1.0, 4, 4);
  CHECK(area_distortion(grid) == doctest::Approx(0.0).epsilon(1e-9));

  // two faces with areas a and 3a -> sigma = a
  QuadMesh two;
  two.vertices = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(1, 1, 0), Vec3(0, 1, 0),
                  Vec3(2, 0, 0), Vec3(5, 0, 0), Vec3(5, 1, 0), Vec3(2, 1, 0)};
  two.faces = {{0, 1, 2, 3}, {4, 5, 6, 7}};
  CHECK(area_distortion(two) == doctest::Approx(1e4 * 1.0).epsilon(1e-12));
}

TEST_CASE("angle_distortion") {
  QuadMesh grid = shapes::quad_grid(2.0, 1.0, 5, 3);
  CHECK(angle_distortion(grid) == doctest::Approx(0.0).epsilon(1e-9));

  // rhombus with angles 60/120 everywhere -> rms deviation pi/6
  QuadMesh rhombus = single_quad({Vec3(0, 0, 0), Vec3(1, 0, 0),
                                  Vec3(1 + std::cos(M_PI / 3), std::sin(M_PI / 3), 0),
                                  Vec3(std::cos(M_PI / 3), std::sin(M_PI / 3), 0)});
  CHECK(angle_distortion(rhombus) == doctest::Approx(M_PI / 6).epsilon(1e-12));
}

TEST_CASE("quad_singularities") {
  SUBCASE("regular torus grid has none") {
    CHECK(quad_singularities(shapes::quad_torus(0.4, 0.15, 12, 8)) == 0);
  }
  SUBCASE("quadrangulated cube: 8 corners of valence 3") {
    CHECK(quad_singularities(shapes::quad_box(1.0, 4)) == 8);
  }
  SUBCASE("planar grid: the 4 corners (valence 2 != 3)") {
    CHECK(quad_singularities(shapes::quad_grid(1.0, 1.0, 6, 4)) == 4);
  }
  SUBCASE("non-manifold edge throws") {
    QuadMesh bad = shapes::quad_grid(1.0, 1.0, 1, 1);
    bad.vertices.push_back(Vec3(0, 0, 1));
    bad.vertices.push_back(Vec3(1, 0, 1));
    bad.faces.push_back({0, 1, 5, 4});
    bad.faces.push_back({0, 1, 4, 5});  // edge (0,1) now on 3 faces
    CHECK_THROWS_WITH_AS(quad_singularities(bad), doctest::Contains("non-manifold"), Error);
  }
}

TEST_CASE("jacobian_ratio") {
  CHECK(jacobian_ratio(single_quad({Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(1, 1, 0), Vec3(0, 1, 0)})) ==
        doctest::Approx(1.0).epsilon(1e-12));
  // non-rectangular parallelogram is still 1
  CHECK(jacobian_ratio(single_quad({Vec3(0, 0, 0), Vec3(2, 0, 0), Vec3(3, 1, 0), Vec3(1, 1, 0)})) ==
        doctest::Approx(1.0).epsilon(1e-12));
  // right trapezoid, parallel sides 1 and 2, height 1 -> 0.5
  CHECK(jacobian_ratio(single_quad({Vec3(0, 0, 0), Vec3(2, 0, 0), Vec3(1, 1, 0), Vec3(0, 1, 0)})) ==
        doctest::Approx(0.5).epsilon(1e-12));
  // inverted (bowtie) face clamps to 0
  std::vector<double> per_face;
  double r = jacobian_ratio(single_quad({Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(1, 1, 0)}),
                            &per_face);
  CHECK(r == doctest::Approx(0.0));
  CHECK(per_face[0] == 0.0);
}

TEST_CASE("metric oracle equivalence on 100 random quad meshes") {
  Rng rng(2024);
  for (int t = 0; t < 100; ++t) {
    QuadMesh q = random_quad_mesh(rng);
    CHECK(area_distortion(q) == doctest::Approx(oracle_area(q)).epsilon(1e-9));
    CHECK(angle_distortion(q) == doctest::Approx(oracle_angle(q)).epsilon(1e-9));
    CHECK(jacobian_ratio(q) == doctest::Approx(oracle_jr(q)).epsilon(1e-9));
  }
}

TEST_CASE("rigid-motion invariance of quad metrics") {
  Rng rng(77);
  QuadMesh q = random_quad_mesh(rng);
  Eigen::Quaterniond rot =
      Eigen::Quaterniond(0.3, 0.5, -0.2, 0.78).normalized();
  Vec3 shift(0.3, -1.2, 2.0);
  QuadMesh moved = q;
  for (auto& v : moved.vertices) v = rot * v + shift;
  CHECK(area_distortion(moved) == doctest::Approx(area_distortion(q)).epsilon(1e-9));
  CHECK(angle_distortion(moved) == doctest::Approx(angle_distortion(q)).epsilon(1e-9));
  CHECK(jacobian_ratio(moved) == doctest::Approx(jacobian_ratio(q)).epsilon(1e-9));
  CHECK(quad_singularities(moved) == quad_singularities(q));
}

TEST_CASE("scaling behavior: area quadratic, chamfer linear") {
  Rng rng(78);
  QuadMesh q = random_quad_mesh(rng);
  QuadMesh scaled = q;
  for (auto& v : scaled.vertices) v *= 2.0;
  CHECK(area_distortion(scaled) == doctest::Approx(4.0 * area_distortion(q)).epsilon(1e-9));

  TriangleMesh a = shapes::icosphere(0.2, 2);
  TriangleMesh b = shapes::icosphere(0.25, 2);
  TriangleMesh a2 = a, b2 = b;
  for (auto& v : a2.vertices) v *= 2.0;
  for (auto& v : b2.vertices) v *= 2.0;
  double c1 = chamfer_l1(a, b, 20000, 5);
  double c2 = chamfer_l1(a2, b2, 20000, 5);
  CHECK(c2 == doctest::Approx(2.0 * c1).epsilon(0.02));
}

TEST_CASE("chamfer_l1: identical meshes, offset spheres, determinism") {
  TriangleMesh sphere = shapes::icosphere(0.4, 3);
  double self = chamfer_l1(sphere, sphere, 100000, 9);
  CHECK(self < 1e2 * 1e-2);  // sampling noise only

  // radii 0.4 vs 0.41: 1e4-scaled L1 distance lands in [0.7, 1.3] * 1e2
  TriangleMesh bigger = shapes::icosphere(0.41, 3);
  double off = chamfer_l1(sphere, bigger, 10000, 9);
  CHECK(off > 0.7e2);
  CHECK(off < 1.3e2);

  CHECK(chamfer_l1(sphere, bigger, 5000, 42) == chamfer_l1(sphere, bigger, 5000, 42));
}

TEST_CASE("chamfer brute-force oracle at small sample count") {
  TriangleMesh a = shapes::icosphere(0.3, 2);
  TriangleMesh b = shapes::box(0.5, 0.5, 0.5, 3);
  const size_t n = 2000;
  OrientedPointCloud pa = sample_surface(a, n, derive_seed({31, 1}));
  OrientedPointCloud pb = sample_surface(b, n, derive_seed({31, 2}));
  double ab = 0, ba = 0;
  for (const auto& p : pa.points) {
    double best = 1e300;
    for (const auto& r : pb.points) best = std::min(best, (p - r).cwiseAbs().sum());
    ab += best;
  }
  for (const auto& p : pb.points) {
    double best = 1e300;
    for (const auto& r : pa.points) best = std::min(best, (p - r).cwiseAbs().sum());
    ba += best;
  }
  double oracle = 1e4 * 0.5 * (ab + ba) / double(n);
  CHECK(chamfer_l1(a, b, n, 31) == doctest::Approx(oracle).epsilon(1e-9));
}

TEST_CASE("angular_error") {
  TriangleMesh cyl = shapes::cylinder(0.5, 2.0, 48, 24);
  auto frames = principal_curvatures(cyl);
  CrossField field;
  field.site = FieldSite::vertex;
  field.samples.resize(cyl.vertices.size());
  for (size_t v = 0; v < cyl.vertices.size(); ++v) {
    field.samples[v].point = cyl.vertices[v];
    field.samples[v].normal = frames[v].normal;
    field.samples[v].alpha = frames[v].dir_max;
  }
  SUBCASE("field equal to the frames scores 0") {
    CHECK(angular_error(field, frames) == doctest::Approx(0.0).epsilon(1e-12));
  }
  SUBCASE("45-degree rotation scores sqrt(2)-1") {
    for (size_t v = 0; v < field.samples.size(); ++v) {
      Vec3 d = (frames[v].dir_max + frames[v].dir_min).normalized();
      field.samples[v].alpha = d;
    }
    CHECK(angular_error(field, frames) == doctest::Approx(std::sqrt(2.0) - 1.0).epsilon(1e-9));
  }
  SUBCASE("masking everything is an error") {
    CHECK_THROWS_WITH_AS(angular_error(field, frames, 2.0), doctest::Contains("masked"), Error);
  }
  SUBCASE("swap and 4-RoSy invariance") {
    double base = angular_error(field, frames);
    auto swapped = frames;
    for (auto& f : swapped) std::swap(f.dir_max, f.dir_min);
    CHECK(angular_error(field, swapped) == doctest::Approx(base).epsilon(1e-10));
    CrossField rotated = field;
    for (auto& s : rotated.samples) s.alpha = beta_of(s.alpha, s.normal);
    CHECK(angular_error(rotated, frames) == doctest::Approx(base).epsilon(1e-10));
  }
}

TEST_CASE("report table mirrors the metric order") {
  QuadQualityReport rep;
  rep.area_distortion = 4.32;
  rep.angle_distortion = 1.6;
  rep.singularity_count = 80;
  rep.chamfer_l1 = 8.45;
  rep.jacobian_ratio_mean = 0.83;
  std::string table = report_table(rep);
  CHECK(table.find("Area") < table.find("Angle"));
  CHECK(table.find("Angle") < table.find("#Sings"));
  CHECK(table.find("#Sings") < table.find("CD"));
  CHECK(table.find("CD") < table.find("JR"));
}
