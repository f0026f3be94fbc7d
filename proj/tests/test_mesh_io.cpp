#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "xgen/mesh_io.hpp"
#include "xgen/shapes.hpp"
#include "xgen/util.hpp"

using namespace xgen;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
  fs::path dir = fs::temp_directory_path() / "xgen_mesh_io_tests";
  fs::create_directories(dir);
  return dir;
}

fs::path write_text(const std::string& name, const std::string& text) {
  fs::path p = temp_dir() / name;
  std::ofstream os(p);
  os << text;
  return p;
}

}  // namespace

TEST_CASE("load_mesh: minimal OBJ") {
  fs::path p = write_text("tri.obj", "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n");
  TriangleMesh m = load_mesh(p);
  CHECK(m.vertices.size() == 3);
  CHECK(m.faces.size() == 1);
}

TEST_CASE("load_mesh: quad triangulated along the shorter diagonal") {
  // rectangle 2x1: diagonal (0,0)-(2,1) vs (2,0)-(0,1) have equal length, so
  // stretch one corner to force the choice
  fs::path p = write_text("quad.obj", "v 0 0 0\nv 2 0 0\nv 2 1 0\nv 0 1 0\nf 1 2 3 4\n");
  TriangleMesh m = load_mesh(p);
  CHECK(m.faces.size() == 2);
  // diag 0-2 has length sqrt(5), diag 1-3 sqrt(5): tie goes to 0-2 (<=)
  CHECK(m.faces[0] == std::array<int, 3>{0, 1, 2});
  CHECK(m.faces[1] == std::array<int, 3>{0, 2, 3});

  fs::path p2 = write_text("quad2.obj", "v 0 0 0\nv 2 0 0\nv 2 0.2 0\nv 0 1 0\nf 1 2 3 4\n");
  TriangleMesh m2 = load_mesh(p2);
  // now diag 1-3 = |(2,0.2)-(0,1)| ~ 2.15 > diag 0-2 ~ 2.01: split 0-2
  double d02 = (m2.vertices[0] - m2.vertices[2]).norm();
  double d13 = (m2.vertices[1] - m2.vertices[3]).norm();
  CHECK(d02 < d13);
  CHECK(m2.faces[0] == std::array<int, 3>{0, 1, 2});
}

TEST_CASE("load_mesh: index 0 is a parse error with a line number") {
  fs::path p = write_text("bad.obj", "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 0 1 2\n");
  CHECK_THROWS_WITH_AS(load_mesh(p), doctest::Contains("line 4"), Error);
}

TEST_CASE("load_mesh: unsupported extension") {
  fs::path p = write_text("mesh.stl", "solid x\n");
  CHECK_THROWS_WITH_AS(load_mesh(p), doctest::Contains("unsupported"), Error);
}

TEST_CASE("quad mesh load preserves quads; triangle input rejected") {
  fs::path p = write_text("q.obj", "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n");
  QuadMesh q = load_quad_mesh(p);
  CHECK(q.faces.size() == 1);
  fs::path p2 = write_text("t.obj", "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n");
  CHECK_THROWS_AS(load_quad_mesh(p2), Error);
}

TEST_CASE("normalize_to_unit_cube") {
  TriangleMesh sphere = shapes::icosphere(1.0, 2);
  for (auto& v : sphere.vertices) v += Vec3(10, 10, 10);
  auto [normalized, transform] = normalize_to_unit_cube(sphere);

  Vec3 lo = Vec3::Constant(1e300), hi = -lo;
  for (const auto& v : normalized.vertices) {
    lo = lo.cwiseMin(v);
    hi = hi.cwiseMax(v);
  }
  CHECK((hi - lo).maxCoeff() == doctest::Approx(0.96).epsilon(1e-12));
  CHECK((lo + hi).norm() < 1e-9);  // centered
  CHECK(hi.maxCoeff() == doctest::Approx(0.48).epsilon(1e-9));

  SUBCASE("inverse transform recovers input within 1e-9 relative") {
    for (size_t i = 0; i < sphere.vertices.size(); ++i) {
      Vec3 back = transform.invert(normalized.vertices[i]);
      CHECK((back - sphere.vertices[i]).norm() <= 1e-9 * (1.0 + sphere.vertices[i].norm()));
    }
  }
  SUBCASE("already-normalized mesh: identity up to margin rescale") {
    auto [again, t2] = normalize_to_unit_cube(normalized);
    CHECK(t2.scale == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(t2.offset.norm() < 1e-12);
  }
}

TEST_CASE("normalize: degenerate bounding box") {
  TriangleMesh point;
  point.vertices = {Vec3(1, 1, 1), Vec3(1, 1, 1), Vec3(1, 1, 1)};
  point.faces = {};
  CHECK_THROWS_WITH_AS(normalize_to_unit_cube(point), doctest::Contains("degenerate"), Error);
}

TEST_CASE("sample_surface: count, determinism, area weighting") {
  TriangleMesh two;
  // area ratio 9:1: right triangles with legs (3,3)/sqrt(2)... use legs 3,3 and 1,1
  two.vertices = {Vec3(0, 0, 0), Vec3(3, 0, 0), Vec3(0, 3, 0),
                  Vec3(10, 0, 0), Vec3(11, 0, 0), Vec3(10, 1, 0)};
  two.faces = {{0, 1, 2}, {3, 4, 5}};

  const size_t n = 100000;
  OrientedPointCloud a = sample_surface(two, n, 1234);
  OrientedPointCloud b = sample_surface(two, n, 1234);
  CHECK(a.points.size() == n);
  REQUIRE(a.points.size() == b.points.size());
  bool identical = true;
  for (size_t i = 0; i < n; ++i)
    identical = identical && a.points[i] == b.points[i] && a.normals[i] == b.normals[i];
  CHECK(identical);  // bit-for-bit determinism

  size_t big = 0;
  for (const auto& p : a.points)
    if (p[0] < 5) ++big;
  double frac = double(big) / double(n);
  // 3 sigma binomial bound around p=0.9
  double sigma = std::sqrt(0.9 * 0.1 / double(n));
  CHECK(std::fabs(frac - 0.9) < 3 * sigma);

  SUBCASE("chi-square across the two faces at p > 0.01") {
    double expected_big = 0.9 * double(n), expected_small = 0.1 * double(n);
    double chi2 = (double(big) - expected_big) * (double(big) - expected_big) / expected_big +
                  (double(n - big) - expected_small) * (double(n - big) - expected_small) /
                      expected_small;
    CHECK(chi2 < 6.635);  // chi-square 1 dof at p=0.01
  }
}

TEST_CASE("sample_surface: count=150000 supported") {
  TriangleMesh tri = shapes::icosphere(0.4, 1);
  OrientedPointCloud c = sample_surface(tri, 150000, 7);
  CHECK(c.points.size() == 150000);
}

TEST_CASE("estimate_normals: plane is consistently signed") {
  std::vector<Vec3> pts;
  Rng rng(5);
  for (int i = 0; i < 400; ++i) pts.emplace_back(rng.uniform(-1, 1), rng.uniform(-1, 1), 0.0);
  OrientedPointCloud cloud = estimate_normals(pts, 8);
  int plus = 0;
  for (const auto& n : cloud.normals) {
    CHECK(std::fabs(std::fabs(n[2]) - 1.0) < 1e-9);
    if (n[2] > 0) ++plus;
  }
  // propagation makes the sign globally consistent
  CHECK((plus == 0 || plus == int(pts.size())));
}

TEST_CASE("estimate_normals: sphere radial accuracy < 5 degrees") {
  TriangleMesh sphere = shapes::icosphere(0.4, 3);
  OrientedPointCloud samples = sample_surface(sphere, 10000, 99);
  OrientedPointCloud est = estimate_normals(samples.points, 16);
  double total_angle = 0;
  size_t outward = 0;
  for (size_t i = 0; i < est.points.size(); ++i) {
    Vec3 radial = est.points[i].normalized();
    double c = std::clamp(std::fabs(est.normals[i].dot(radial)), -1.0, 1.0);
    total_angle += std::acos(c);
    if (est.normals[i].dot(radial) > 0) ++outward;
  }
  double mean_deg = total_angle / double(est.points.size()) * 180.0 / M_PI;
  CHECK(mean_deg < 5.0);
  // orientation propagates outward from the centroid
  CHECK(outward == est.points.size());
}

TEST_CASE("estimate_normals: collinear points are rejected") {
  std::vector<Vec3> pts = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(2, 0, 0), Vec3(3, 0, 0)};
  CHECK_THROWS_WITH_AS(estimate_normals(pts, 3), doctest::Contains("rank-deficient"), Error);
  CHECK_THROWS_AS(estimate_normals(pts, 2), Error);  // k < 3
}

TEST_CASE("principal_curvatures: cylinder") {
  TriangleMesh cyl = shapes::cylinder(0.5, 2.0, 96, 48);
  auto frames = principal_curvatures(cyl);
  double k_err = 0, dir_err = 0;
  size_t used = 0;
  for (size_t v = 0; v < cyl.vertices.size(); ++v) {
    const Vec3& p = cyl.vertices[v];
    // skip caps and rim: interior side vertices only
    if (std::fabs(std::fabs(p[2]) - 1.0) < 0.2) continue;
    if (p.head<2>().norm() < 0.49) continue;
    Vec3 circumferential = Vec3(-p[1], p[0], 0).normalized();
    k_err += std::fabs(frames[v].k_max - 2.0);  // 1/r = 2
    dir_err += 1.0 - std::fabs(frames[v].dir_max.dot(circumferential));
    CHECK(std::fabs(frames[v].k_min) < 0.2);
    ++used;
  }
  REQUIRE(used > 100);
  CHECK(k_err / double(used) < 0.1);     // < 5% relative on k_max = 2
  CHECK(dir_err / double(used) < 5e-3);  // circumferential alignment
}

TEST_CASE("principal_curvatures: plane and sphere are umbilic") {
  TriangleMesh pl = shapes::plane(2.0, 2.0, 24, 24);
  auto pf = principal_curvatures(pl);
  for (const auto& f : pf) CHECK(f.anisotropy < 1e-3);

  TriangleMesh sph = shapes::icosphere(0.4, 3);
  auto sf = principal_curvatures(sph);
  double mean_aniso = 0;
  for (const auto& f : sf) mean_aniso += f.anisotropy;
  CHECK(mean_aniso / double(sf.size()) < 0.05);
}

TEST_CASE("principal_curvatures: frame orthogonality invariant") {
  TriangleMesh torus = shapes::torus(0.3, 0.12, 48, 24);
  auto frames = principal_curvatures(torus);
  for (const auto& f : frames) {
    CHECK(std::fabs(f.dir_min.dot(f.dir_max)) < 1e-4);
    CHECK(std::fabs(f.dir_min.dot(f.normal)) < 1e-4);
    CHECK(std::fabs(f.dir_max.dot(f.normal)) < 1e-4);
    CHECK(f.anisotropy >= 0.0);
    CHECK(f.anisotropy <= 1.0);
  }
}

TEST_CASE("principal_curvatures: isolated vertex") {
  TriangleMesh m;
  m.vertices = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(5, 5, 5)};
  m.faces = {{0, 1, 2}};
  CHECK_THROWS_WITH_AS(principal_curvatures(m), doctest::Contains("isolated"), Error);
}

TEST_CASE("PLY round trip, ascii and binary") {
  OrientedPointCloud cloud;
  Rng rng(3);
  for (int i = 0; i < 257; ++i) {
    cloud.points.emplace_back(rng.uniform(-0.4, 0.4), rng.uniform(-0.4, 0.4),
                              rng.uniform(-0.4, 0.4));
    cloud.normals.push_back(
        Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)).normalized());
  }
  for (bool binary : {false, true}) {
    fs::path p = temp_dir() / (binary ? "c.bin.ply" : "c.ascii.ply");
    save_point_cloud(p, cloud, binary);
    OrientedPointCloud back = load_point_cloud(p);
    REQUIRE(back.points.size() == cloud.points.size());
    for (size_t i = 0; i < cloud.points.size(); ++i) {
      CHECK((back.points[i] - cloud.points[i]).norm() < 1e-6);
      CHECK((back.normals[i] - cloud.normals[i]).norm() < 1e-5);
    }
  }
}

TEST_CASE("mesh save/load round trip") {
  TriangleMesh box = shapes::box(0.5, 0.7, 0.9, 3);
  fs::path p = temp_dir() / "box.obj";
  save_mesh(p, box);
  TriangleMesh back = load_mesh(p);
  REQUIRE(back.vertices.size() == box.vertices.size());
  REQUIRE(back.faces.size() == box.faces.size());
  for (size_t i = 0; i < box.vertices.size(); ++i)
    CHECK((back.vertices[i] - box.vertices[i]).norm() < 1e-15);
}
