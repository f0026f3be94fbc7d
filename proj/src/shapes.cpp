#include "xgen/shapes.hpp"

#include <cmath>
#include <map>

#include "xgen/util.hpp"

namespace xgen::shapes {

namespace {

// grid helper: index of (i,j) in an (nu+1)x(nv+1) vertex lattice
inline int gi(int i, int j, int nv1) { return i * nv1 + j; }

}  // namespace

TriangleMesh icosphere(double radius, int subdivisions) {
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  TriangleMesh m;
  m.vertices = {
      {-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t},  {0, 1, t},
      {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1},
  };
  m.faces = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
             {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
             {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
             {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};
  for (auto& v : m.vertices) v.normalize();

  for (int s = 0; s < subdivisions; ++s) {
    std::map<std::pair<int, int>, int> midpoint;
    auto mid = [&](int a, int b) {
      auto key = std::minmax(a, b);
      auto it = midpoint.find(key);
      if (it != midpoint.end()) return it->second;
      Vec3 p = (m.vertices[a] + m.vertices[b]).normalized();
      m.vertices.push_back(p);
      int idx = int(m.vertices.size()) - 1;
      midpoint[key] = idx;
      return idx;
    };
    std::vector<std::array<int, 3>> next;
    next.reserve(m.faces.size() * 4);
    for (const auto& f : m.faces) {
      int ab = mid(f[0], f[1]), bc = mid(f[1], f[2]), ca = mid(f[2], f[0]);
      next.push_back({f[0], ab, ca});
      next.push_back({f[1], bc, ab});
      next.push_back({f[2], ca, bc});
      next.push_back({ab, bc, ca});
    }
    m.faces = std::move(next);
  }
  m.vertex_normals.resize(m.vertices.size());
  for (size_t i = 0; i < m.vertices.size(); ++i) {
    m.vertex_normals[i] = m.vertices[i];
    m.vertices[i] *= radius;
  }
  return m;
}

TriangleMesh cylinder(double radius, double height, int radial_segments, int height_segments) {
  if (radial_segments < 3 || height_segments < 1) throw Error("cylinder: bad segment counts");
  TriangleMesh m;
  const double h0 = -height / 2;
  // side lattice: rows 0..height_segments, radial_segments columns (wrapping)
  for (int r = 0; r <= height_segments; ++r)
    for (int c = 0; c < radial_segments; ++c) {
      double phi = 2.0 * M_PI * c / radial_segments;
      m.vertices.emplace_back(radius * std::cos(phi), radius * std::sin(phi),
                              h0 + height * r / height_segments);
    }
  auto side = [&](int r, int c) { return r * radial_segments + (c % radial_segments); };
  for (int r = 0; r < height_segments; ++r)
    for (int c = 0; c < radial_segments; ++c) {
      int a = side(r, c), b = side(r, c + 1), d = side(r + 1, c), e = side(r + 1, c + 1);
      m.faces.push_back({a, b, e});
      m.faces.push_back({a, e, d});
    }
  // caps as fans around center vertices
  int cb = int(m.vertices.size());
  m.vertices.emplace_back(0, 0, h0);
  int ct = int(m.vertices.size());
  m.vertices.emplace_back(0, 0, h0 + height);
  for (int c = 0; c < radial_segments; ++c) {
    m.faces.push_back({cb, side(0, c + 1), side(0, c)});
    m.faces.push_back({ct, side(height_segments, c), side(height_segments, c + 1)});
  }
  return m;
}

TriangleMesh box(double sx, double sy, double sz, int segments) {
  if (segments < 1) throw Error("box: segments must be >= 1");
  TriangleMesh m;
  std::map<std::array<long, 3>, int> dedup;  // lattice coordinates scaled by 2*segments
  auto vertex = [&](const Vec3& p) {
    std::array<long, 3> key = {std::lround(p[0] * 2e6), std::lround(p[1] * 2e6),
                               std::lround(p[2] * 2e6)};
    auto it = dedup.find(key);
    if (it != dedup.end()) return it->second;
    m.vertices.push_back(p);
    dedup[key] = int(m.vertices.size()) - 1;
    return int(m.vertices.size()) - 1;
  };
  const Vec3 half(sx / 2, sy / 2, sz / 2);
  // each face: origin corner + two edge vectors, oriented outward
  struct Face {
    Vec3 origin, du, dv;
  };
  const std::vector<Face> sides = {
      {{-half[0], -half[1], half[2]}, {sx, 0, 0}, {0, sy, 0}},    // +z
      {{-half[0], half[1], -half[2]}, {sx, 0, 0}, {0, -sy, 0}},   // -z
      {{half[0], -half[1], -half[2]}, {0, sy, 0}, {0, 0, sz}},    // +x
      {{-half[0], -half[1], sz / 2 - sz}, {0, 0, sz}, {0, sy, 0}},  // -x
      {{-half[0], half[1], -half[2]}, {0, 0, sz}, {sx, 0, 0}},    // +y
      {{-half[0], -half[1], -half[2]}, {sx, 0, 0}, {0, 0, sz}},   // -y
  };
  for (const auto& s : sides) {
    std::vector<int> lattice((segments + 1) * (segments + 1));
    for (int i = 0; i <= segments; ++i)
      for (int j = 0; j <= segments; ++j)
        lattice[gi(i, j, segments + 1)] =
            vertex(s.origin + s.du * (double(i) / segments) + s.dv * (double(j) / segments));
    for (int i = 0; i < segments; ++i)
      for (int j = 0; j < segments; ++j) {
        int a = lattice[gi(i, j, segments + 1)], b = lattice[gi(i + 1, j, segments + 1)];
        int c = lattice[gi(i + 1, j + 1, segments + 1)], d = lattice[gi(i, j + 1, segments + 1)];
        m.faces.push_back({a, b, c});
        m.faces.push_back({a, c, d});
      }
  }
  return m;
}

TriangleMesh torus(double major_radius, double minor_radius, int major_segments,
                   int minor_segments) {
  if (major_segments < 3 || minor_segments < 3) throw Error("torus: bad segment counts");
  TriangleMesh m;
  for (int i = 0; i < major_segments; ++i) {
    double u = 2.0 * M_PI * i / major_segments;
    for (int j = 0; j < minor_segments; ++j) {
      double v = 2.0 * M_PI * j / minor_segments;
      double r = major_radius + minor_radius * std::cos(v);
      m.vertices.emplace_back(r * std::cos(u), r * std::sin(u), minor_radius * std::sin(v));
      Vec3 center(major_radius * std::cos(u), major_radius * std::sin(u), 0);
      m.vertex_normals.push_back((m.vertices.back() - center).normalized());
    }
  }
  auto at = [&](int i, int j) {
    return (i % major_segments) * minor_segments + (j % minor_segments);
  };
  for (int i = 0; i < major_segments; ++i)
    for (int j = 0; j < minor_segments; ++j) {
      int a = at(i, j), b = at(i + 1, j), c = at(i + 1, j + 1), d = at(i, j + 1);
      m.faces.push_back({a, b, c});
      m.faces.push_back({a, c, d});
    }
  return m;
}

TriangleMesh plane(double size_x, double size_y, int nx, int ny) {
  if (nx < 1 || ny < 1) throw Error("plane: bad segment counts");
  TriangleMesh m;
  for (int i = 0; i <= nx; ++i)
    for (int j = 0; j <= ny; ++j)
      m.vertices.emplace_back(size_x * (double(i) / nx - 0.5), size_y * (double(j) / ny - 0.5), 0);
  for (int i = 0; i < nx; ++i)
    for (int j = 0; j < ny; ++j) {
      int a = gi(i, j, ny + 1), b = gi(i + 1, j, ny + 1);
      int c = gi(i + 1, j + 1, ny + 1), d = gi(i, j + 1, ny + 1);
      m.faces.push_back({a, b, c});
      m.faces.push_back({a, c, d});
    }
  return m;
}

QuadMesh quad_grid(double size_x, double size_y, int nx, int ny) {
  if (nx < 1 || ny < 1) throw Error("quad_grid: bad segment counts");
  QuadMesh m;
  for (int i = 0; i <= nx; ++i)
    for (int j = 0; j <= ny; ++j)
      m.vertices.emplace_back(size_x * (double(i) / nx - 0.5), size_y * (double(j) / ny - 0.5), 0);
  for (int i = 0; i < nx; ++i)
    for (int j = 0; j < ny; ++j)
      m.faces.push_back({gi(i, j, ny + 1), gi(i + 1, j, ny + 1), gi(i + 1, j + 1, ny + 1),
                         gi(i, j + 1, ny + 1)});
  return m;
}

QuadMesh quad_torus(double major_radius, double minor_radius, int major_segments,
                    int minor_segments) {
  TriangleMesh t = torus(major_radius, minor_radius, major_segments, minor_segments);
  QuadMesh m;
  m.vertices = t.vertices;
  auto at = [&](int i, int j) {
    return (i % major_segments) * minor_segments + (j % minor_segments);
  };
  for (int i = 0; i < major_segments; ++i)
    for (int j = 0; j < minor_segments; ++j)
      m.faces.push_back({at(i, j), at(i + 1, j), at(i + 1, j + 1), at(i, j + 1)});
  return m;
}

QuadMesh quad_box(double size, int segments) {
  TriangleMesh t = box(size, size, size, segments);
  // rebuild as quads: pair up the two triangles emitted per cell
  QuadMesh m;
  m.vertices = t.vertices;
  for (size_t f = 0; f + 1 < t.faces.size(); f += 2) {
    const auto& f0 = t.faces[f];
    const auto& f1 = t.faces[f + 1];
    // faces were emitted as (a,b,c) + (a,c,d)
    m.faces.push_back({f0[0], f0[1], f0[2], f1[2]});
  }
  return m;
}

}  // namespace xgen::shapes
