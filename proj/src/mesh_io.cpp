#include "xgen/mesh_io.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <queue>
#include <set>
#include <sstream>

#include "xgen/kdtree.hpp"
#include "xgen/util.hpp"

namespace xgen {

// --- type invariants ---------------------------------------------------------

void TriangleMesh::validate() const {
  const int nv = int(vertices.size());
  for (size_t f = 0; f < faces.size(); ++f) {
    for (int c : faces[f])
      if (c < 0 || c >= nv)
        throw Error("face " + std::to_string(f) + " references vertex " + std::to_string(c) +
                    " out of range");
    if (face_area(int(f)) < 1e-12)
      throw Error("degenerate face " + std::to_string(f) + " (area below 1e-12)");
  }
  if (!vertex_normals.empty()) {
    if (vertex_normals.size() != vertices.size())
      throw Error("vertex_normals count does not match vertices");
    for (size_t i = 0; i < vertex_normals.size(); ++i)
      if (std::fabs(vertex_normals[i].norm() - 1.0) > 1e-6)
        throw Error("vertex normal " + std::to_string(i) + " is not unit length");
  }
}

Vec3 TriangleMesh::face_normal(int f) const {
  const auto& t = faces[f];
  Vec3 n = (vertices[t[1]] - vertices[t[0]]).cross(vertices[t[2]] - vertices[t[0]]);
  double len = n.norm();
  return len > 0 ? Vec3(n / len) : Vec3(0, 0, 1);
}

double TriangleMesh::face_area(int f) const {
  const auto& t = faces[f];
  return 0.5 * (vertices[t[1]] - vertices[t[0]]).cross(vertices[t[2]] - vertices[t[0]]).norm();
}

double TriangleMesh::total_area() const {
  double a = 0;
  for (size_t f = 0; f < faces.size(); ++f) a += face_area(int(f));
  return a;
}

Vec3 TriangleMesh::face_center(int f) const {
  const auto& t = faces[f];
  return (vertices[t[0]] + vertices[t[1]] + vertices[t[2]]) / 3.0;
}

void TriangleMesh::compute_vertex_normals() {
  vertex_normals.assign(vertices.size(), Vec3::Zero());
  for (size_t f = 0; f < faces.size(); ++f) {
    const auto& t = faces[f];
    // cross product length = 2*area, so this is area weighting
    Vec3 n = (vertices[t[1]] - vertices[t[0]]).cross(vertices[t[2]] - vertices[t[0]]);
    for (int c : t) vertex_normals[c] += n;
  }
  for (auto& n : vertex_normals) {
    double len = n.norm();
    n = len > 1e-20 ? Vec3(n / len) : Vec3(0, 0, 1);
  }
}

void QuadMesh::validate() const {
  const int nv = int(vertices.size());
  for (size_t f = 0; f < faces.size(); ++f) {
    const auto& q = faces[f];
    for (int c : q)
      if (c < 0 || c >= nv)
        throw Error("quad " + std::to_string(f) + " references vertex out of range");
    for (int i = 0; i < 4; ++i)
      for (int j = i + 1; j < 4; ++j)
        if (q[i] == q[j])
          throw Error("quad " + std::to_string(f) + " has repeated vertices");
  }
}

void OrientedPointCloud::validate(bool require_unit_cube) const {
  if (points.size() != normals.size()) throw Error("point/normal count mismatch");
  for (size_t i = 0; i < points.size(); ++i) {
    if (std::fabs(normals[i].norm() - 1.0) > 1e-6)
      throw Error("normal " + std::to_string(i) + " is not unit length");
    if (require_unit_cube && (points[i].cwiseAbs().maxCoeff() > 0.5 + 1e-12))
      throw Error("point " + std::to_string(i) + " outside [-0.5,0.5]^3");
  }
}

// --- OBJ -----------------------------------------------------------------

namespace {

struct ObjData {
  std::vector<Vec3> vertices;
  std::vector<Vec3> normals;
  std::vector<std::vector<int>> polygons;  // resolved 0-based indices
};

int resolve_index(long idx, size_t count, int line_no) {
  if (idx == 0)
    throw Error("OBJ indices are 1-based, got 0 at line " + std::to_string(line_no));
  long r = idx > 0 ? idx - 1 : long(count) + idx;
  if (r < 0 || r >= long(count))
    throw Error("vertex index " + std::to_string(idx) + " out of range at line " +
                std::to_string(line_no));
  return int(r);
}

ObjData parse_obj(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot open mesh file: " + path.string());
  ObjData data;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    // strip comments and CR
    if (auto h = line.find('#'); h != std::string::npos) line.resize(h);
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    std::istringstream ss(line);
    std::string tag;
    if (!(ss >> tag)) continue;
    if (tag == "v") {
      Vec3 p;
      if (!(ss >> p[0] >> p[1] >> p[2]))
        throw Error("malformed vertex at line " + std::to_string(line_no));
      data.vertices.push_back(p);
    } else if (tag == "vn") {
      Vec3 n;
      if (!(ss >> n[0] >> n[1] >> n[2]))
        throw Error("malformed normal at line " + std::to_string(line_no));
      data.normals.push_back(n);
    } else if (tag == "f") {
      std::vector<int> poly;
      std::string item;
      while (ss >> item) {
        // forms: i, i/t, i/t/n, i//n — only the position index matters here
        size_t slash = item.find('/');
        std::string head = slash == std::string::npos ? item : item.substr(0, slash);
        long idx = 0;
        auto [p, ec] = std::from_chars(head.data(), head.data() + head.size(), idx);
        if (ec != std::errc() || p != head.data() + head.size())
          throw Error("malformed face index '" + item + "' at line " + std::to_string(line_no));
        poly.push_back(resolve_index(idx, data.vertices.size(), line_no));
      }
      if (poly.size() < 3)
        throw Error("face with fewer than 3 vertices at line " + std::to_string(line_no));
      data.polygons.push_back(std::move(poly));
    }
    // other records (vt, o, g, s, mtllib, usemtl) ignored
  }
  return data;
}

void check_extension(const std::filesystem::path& path, const char* want) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
  if (ext != want)
    throw Error("unsupported format '" + ext + "' (expected " + want + "): " + path.string());
}

}  // namespace

TriangleMesh load_mesh(const std::filesystem::path& path) {
  check_extension(path, ".obj");
  ObjData data = parse_obj(path);
  TriangleMesh mesh;
  mesh.vertices = std::move(data.vertices);
  for (const auto& poly : data.polygons) {
    if (poly.size() == 3) {
      mesh.faces.push_back({poly[0], poly[1], poly[2]});
    } else if (poly.size() == 4) {
      // split along the shorter diagonal
      double d02 = (mesh.vertices[poly[0]] - mesh.vertices[poly[2]]).norm();
      double d13 = (mesh.vertices[poly[1]] - mesh.vertices[poly[3]]).norm();
      if (d02 <= d13) {
        mesh.faces.push_back({poly[0], poly[1], poly[2]});
        mesh.faces.push_back({poly[0], poly[2], poly[3]});
      } else {
        mesh.faces.push_back({poly[0], poly[1], poly[3]});
        mesh.faces.push_back({poly[1], poly[2], poly[3]});
      }
    } else {
      for (size_t i = 1; i + 1 < poly.size(); ++i)
        mesh.faces.push_back({poly[0], poly[int(i)], poly[int(i) + 1]});
    }
  }
  if (data.normals.size() == mesh.vertices.size()) {
    mesh.vertex_normals = std::move(data.normals);
    for (auto& n : mesh.vertex_normals) {
      double len = n.norm();
      if (len < 1e-12) throw Error("zero-length vn record in " + path.string());
      n /= len;
    }
  }
  mesh.validate();
  return mesh;
}

QuadMesh load_quad_mesh(const std::filesystem::path& path) {
  check_extension(path, ".obj");
  ObjData data = parse_obj(path);
  QuadMesh mesh;
  mesh.vertices = std::move(data.vertices);
  for (const auto& poly : data.polygons) {
    if (poly.size() != 4)
      throw Error("quad mesh contains a face with " + std::to_string(poly.size()) +
                  " vertices: " + path.string());
    mesh.faces.push_back({poly[0], poly[1], poly[2], poly[3]});
  }
  mesh.validate();
  return mesh;
}

void save_mesh(const std::filesystem::path& path, const TriangleMesh& mesh) {
  atomic_write_file(path, [&](std::ostream& os) {
    os.precision(17);
    for (const auto& v : mesh.vertices) os << "v " << v[0] << " " << v[1] << " " << v[2] << "\n";
    for (const auto& f : mesh.faces)
      os << "f " << f[0] + 1 << " " << f[1] + 1 << " " << f[2] + 1 << "\n";
  });
}

void save_quad_mesh(const std::filesystem::path& path, const QuadMesh& mesh) {
  atomic_write_file(path, [&](std::ostream& os) {
    os.precision(17);
    for (const auto& v : mesh.vertices) os << "v " << v[0] << " " << v[1] << " " << v[2] << "\n";
    for (const auto& f : mesh.faces)
      os << "f " << f[0] + 1 << " " << f[1] + 1 << " " << f[2] + 1 << " " << f[3] + 1 << "\n";
  });
}

// --- PLY -----------------------------------------------------------------

namespace {

struct PlyHeader {
  bool binary = false;
  size_t count = 0;
  std::vector<std::pair<std::string, bool>> props;  // name, is_double
  size_t header_bytes = 0;
};

PlyHeader parse_ply_header(std::istream& is, const std::string& name) {
  PlyHeader h;
  std::string line;
  if (!std::getline(is, line)) throw Error("empty PLY: " + name);
  if (line == "ply\r") line = "ply";
  if (line != "ply") throw Error("not a PLY file: " + name);
  bool in_vertex = false;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ss(line);
    std::string tag;
    ss >> tag;
    if (tag == "format") {
      std::string fmt;
      ss >> fmt;
      if (fmt == "ascii")
        h.binary = false;
      else if (fmt == "binary_little_endian")
        h.binary = true;
      else
        throw Error("unsupported PLY format '" + fmt + "': " + name);
    } else if (tag == "element") {
      std::string el;
      size_t n;
      ss >> el >> n;
      if (el == "vertex") {
        h.count = n;
        in_vertex = true;
      } else {
        if (n != 0) throw Error("unsupported PLY element '" + el + "': " + name);
        in_vertex = false;
      }
    } else if (tag == "property" && in_vertex) {
      std::string type, pname;
      ss >> type >> pname;
      bool is_double = (type == "double" || type == "float64");
      if (!is_double && type != "float" && type != "float32")
        throw Error("unsupported PLY property type '" + type + "': " + name);
      h.props.emplace_back(pname, is_double);
    } else if (tag == "end_header") {
      return h;
    } else if (tag == "comment" || tag == "obj_info") {
      continue;
    } else if (tag == "property") {
      throw Error("unsupported PLY layout (properties outside vertex element): " + name);
    }
  }
  throw Error("PLY missing end_header: " + name);
}

}  // namespace

OrientedPointCloud load_point_cloud(const std::filesystem::path& path) {
  check_extension(path, ".ply");
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open point cloud: " + path.string());
  PlyHeader h = parse_ply_header(is, path.string());
  const std::vector<std::string> want = {"x", "y", "z", "nx", "ny", "nz"};
  if (h.props.size() != 6)
    throw Error("PLY must have exactly properties x y z nx ny nz: " + path.string());
  for (int i = 0; i < 6; ++i)
    if (h.props[i].first != want[i])
      throw Error("PLY property " + std::to_string(i) + " is '" + h.props[i].first +
                  "', expected '" + want[i] + "': " + path.string());
  OrientedPointCloud cloud;
  cloud.points.reserve(h.count);
  cloud.normals.reserve(h.count);
  for (size_t i = 0; i < h.count; ++i) {
    double vals[6];
    if (h.binary) {
      for (int c = 0; c < 6; ++c)
        vals[c] = h.props[c].second ? [&] {
          double d;
          read_bytes(is, &d, 8, "PLY data");
          return d;
        }()
                                    : double(read_f32(is, "PLY data"));
    } else {
      for (int c = 0; c < 6; ++c)
        if (!(is >> vals[c])) throw Error("truncated PLY data at record " + std::to_string(i));
    }
    cloud.points.emplace_back(vals[0], vals[1], vals[2]);
    Vec3 n(vals[3], vals[4], vals[5]);
    double len = n.norm();
    if (len < 1e-12) throw Error("zero normal at PLY record " + std::to_string(i));
    cloud.normals.push_back(n / len);
  }
  return cloud;
}

void save_point_cloud(const std::filesystem::path& path, const OrientedPointCloud& cloud,
                      bool binary) {
  cloud.validate();
  atomic_write_file(path, [&](std::ostream& os) {
    os << "ply\nformat " << (binary ? "binary_little_endian" : "ascii") << " 1.0\n"
       << "element vertex " << cloud.points.size() << "\n";
    for (const char* p : {"x", "y", "z", "nx", "ny", "nz"})
      os << "property float " << p << "\n";
    os << "end_header\n";
    if (binary) {
      for (size_t i = 0; i < cloud.points.size(); ++i) {
        for (int c = 0; c < 3; ++c) write_f32(os, float(cloud.points[i][c]));
        for (int c = 0; c < 3; ++c) write_f32(os, float(cloud.normals[i][c]));
      }
    } else {
      os.precision(9);
      for (size_t i = 0; i < cloud.points.size(); ++i) {
        os << float(cloud.points[i][0]) << " " << float(cloud.points[i][1]) << " "
           << float(cloud.points[i][2]) << " " << float(cloud.normals[i][0]) << " "
           << float(cloud.normals[i][1]) << " " << float(cloud.normals[i][2]) << "\n";
      }
    }
  });
}

// --- normalize ---------------------------------------------------------------

std::pair<TriangleMesh, NormalizeTransform> normalize_to_unit_cube(const TriangleMesh& mesh,
                                                                   double margin) {
  if (mesh.vertices.empty()) throw Error("normalize: empty mesh");
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = -lo;
  for (const auto& v : mesh.vertices) {
    lo = lo.cwiseMin(v);
    hi = hi.cwiseMax(v);
  }
  double max_ext = (hi - lo).maxCoeff();
  if (max_ext < 1e-12) throw Error("normalize: degenerate bounding box (zero extent)");
  NormalizeTransform t;
  t.scale = (1.0 - 2.0 * margin) / max_ext;
  t.offset = -t.scale * 0.5 * (lo + hi);
  TriangleMesh out = mesh;
  for (auto& v : out.vertices) v = t.apply(v);
  return {std::move(out), t};
}

// --- surface sampling ----------------------------------------------------

OrientedPointCloud sample_surface(const TriangleMesh& mesh, size_t count, uint64_t seed,
                                  std::vector<SurfaceSample>* provenance) {
  if (count < 1) throw Error("sample_surface: count must be >= 1");
  if (mesh.faces.empty()) throw Error("sample_surface: mesh has no faces");
  std::vector<double> cum(mesh.faces.size());
  double acc = 0;
  for (size_t f = 0; f < mesh.faces.size(); ++f) {
    acc += mesh.face_area(int(f));
    cum[f] = acc;
  }
  Rng rng(derive_seed({seed, 0x5a6d7165ull, mesh.faces.size()}));
  OrientedPointCloud cloud;
  cloud.points.reserve(count);
  cloud.normals.reserve(count);
  if (provenance) provenance->reserve(count);
  const bool smooth = mesh.has_normals();
  for (size_t i = 0; i < count; ++i) {
    double r = rng.uniform() * acc;
    size_t f = size_t(std::lower_bound(cum.begin(), cum.end(), r) - cum.begin());
    if (f >= cum.size()) f = cum.size() - 1;
    double u = rng.uniform(), v = rng.uniform();
    if (u + v > 1.0) {
      u = 1.0 - u;
      v = 1.0 - v;
    }
    const auto& t = mesh.faces[f];
    Vec3 p = mesh.vertices[t[0]] * (1 - u - v) + mesh.vertices[t[1]] * u + mesh.vertices[t[2]] * v;
    Vec3 n;
    if (smooth) {
      n = mesh.vertex_normals[t[0]] * (1 - u - v) + mesh.vertex_normals[t[1]] * u +
          mesh.vertex_normals[t[2]] * v;
      double len = n.norm();
      n = len > 1e-12 ? Vec3(n / len) : mesh.face_normal(int(f));
    } else {
      n = mesh.face_normal(int(f));
    }
    cloud.points.push_back(p);
    cloud.normals.push_back(n);
    if (provenance) provenance->push_back({int(f), Vec3(1 - u - v, u, v)});
  }
  return cloud;
}

// --- normal estimation -----------------------------------------------------

OrientedPointCloud estimate_normals(const std::vector<Vec3>& points, int k,
                                    [[maybe_unused]] uint64_t seed) {
  if (k < 3) throw Error("estimate_normals: k must be >= 3");
  if (points.size() < size_t(k) + 1)
    throw Error("estimate_normals: need at least k+1 points");
  KdTree3 tree(points);
  const size_t n = points.size();
  std::vector<Vec3> normals(n);
  std::vector<std::vector<int>> knn(n);

  for (size_t i = 0; i < n; ++i) {
    auto ids = tree.knn(points[i], k + 1);  // includes the point itself
    Vec3 mean = Vec3::Zero();
    for (int j : ids) mean += points[j];
    mean /= double(ids.size());
    Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
    for (int j : ids) {
      Vec3 d = points[j] - mean;
      cov += d * d.transpose();
    }
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov);
    double trace = cov.trace();
    if (eig.eigenvalues()[1] <= 1e-12 * std::max(trace, 1e-300))
      throw Error("estimate_normals: rank-deficient neighborhood at point " + std::to_string(i) +
                  " (collinear points)");
    normals[i] = eig.eigenvectors().col(0).normalized();
    knn[i].assign(ids.begin(), ids.end());
  }

  // Orientation: MST over the k-NN graph with weight 1-|n_i.n_j|, sign
  // propagated from a root oriented away from the centroid.
  Vec3 centroid = Vec3::Zero();
  for (const auto& p : points) centroid += p;
  centroid /= double(n);

  std::vector<char> visited(n, 0);
  using QEntry = std::tuple<double, int, int>;  // weight, to, from
  std::priority_queue<QEntry, std::vector<QEntry>, std::greater<>> heap;

  size_t done = 0;
  while (done < n) {
    // root of the next component: unvisited point farthest from centroid
    int root = -1;
    double best = -1;
    for (size_t i = 0; i < n; ++i)
      if (!visited[i]) {
        double d = (points[i] - centroid).squaredNorm();
        if (d > best) {
          best = d;
          root = int(i);
        }
      }
    if (normals[root].dot(points[root] - centroid) < 0) normals[root] = -normals[root];
    visited[root] = 1;
    ++done;
    for (int j : knn[root])
      if (!visited[j]) heap.emplace(1.0 - std::fabs(normals[root].dot(normals[j])), j, root);
    while (!heap.empty()) {
      auto [w, to, from] = heap.top();
      heap.pop();
      if (visited[to]) continue;
      if (normals[from].dot(normals[to]) < 0) normals[to] = -normals[to];
      visited[to] = 1;
      ++done;
      for (int j : knn[to])
        if (!visited[j]) heap.emplace(1.0 - std::fabs(normals[to].dot(normals[j])), j, to);
    }
  }

  OrientedPointCloud cloud;
  cloud.points = points;
  cloud.normals = std::move(normals);
  return cloud;
}

// --- principal curvature ---------------------------------------------------

std::vector<CurvatureFrame> principal_curvatures(const TriangleMesh& mesh) {
  const size_t nv = mesh.vertices.size();
  std::vector<std::set<int>> ring1(nv);
  for (const auto& f : mesh.faces)
    for (int c = 0; c < 3; ++c) {
      ring1[f[c]].insert(f[(c + 1) % 3]);
      ring1[f[c]].insert(f[(c + 2) % 3]);
    }

  TriangleMesh tmp;
  const std::vector<Vec3>* vnorm = &mesh.vertex_normals;
  if (!mesh.has_normals()) {
    tmp = mesh;
    tmp.compute_vertex_normals();
    vnorm = &tmp.vertex_normals;
  }

  std::vector<CurvatureFrame> frames(nv);
  for (size_t v = 0; v < nv; ++v) {
    if (ring1[v].empty())
      throw Error("principal_curvatures: isolated vertex " + std::to_string(v));
    // 2-ring neighborhood
    std::set<int> nbrs = ring1[v];
    for (int u : ring1[v]) nbrs.insert(ring1[u].begin(), ring1[u].end());
    nbrs.erase(int(v));

    const Vec3& p = mesh.vertices[v];
    const Vec3& n = (*vnorm)[v];
    Vec3 e1 = std::fabs(n[0]) > 0.9 ? Vec3(0, 1, 0).cross(n) : Vec3(1, 0, 0).cross(n);
    e1.normalize();
    Vec3 e2 = n.cross(e1);

    // fit h(u,w) = a/2 u^2 + b u w + c/2 w^2 + d u + e w over the 2-ring
    Eigen::MatrixXd A(nbrs.size(), 5);
    Eigen::VectorXd rhs(nbrs.size());
    int row = 0;
    for (int u : nbrs) {
      Vec3 d = mesh.vertices[u] - p;
      double x = d.dot(e1), y = d.dot(e2), h = d.dot(n);
      A.row(row) << 0.5 * x * x, x * y, 0.5 * y * y, x, y;
      rhs[row] = h;
      ++row;
    }
    Eigen::VectorXd sol = A.colPivHouseholderQr().solve(rhs);
    // height is measured along the outward normal, so convex regions have
    // negative second derivatives; negate to get the usual curvature sign
    Eigen::Matrix2d shape;
    shape << -sol[0], -sol[1], -sol[1], -sol[2];
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(shape);

    CurvatureFrame& fr = frames[v];
    fr.point = p;
    fr.normal = n;
    fr.k_min = eig.eigenvalues()[0];
    fr.k_max = eig.eigenvalues()[1];
    Eigen::Vector2d vmin = eig.eigenvectors().col(0);
    Eigen::Vector2d vmax = eig.eigenvectors().col(1);
    fr.dir_min = (vmin[0] * e1 + vmin[1] * e2).normalized();
    fr.dir_max = (vmax[0] * e1 + vmax[1] * e2).normalized();
    fr.anisotropy = std::fabs(fr.k_max - fr.k_min) /
                    (std::fabs(fr.k_max) + std::fabs(fr.k_min) + 1e-9);
  }
  return frames;
}

namespace {

// match a tangent direction to a reference under the 4 quarter-turn rotations
Vec3 rosy_match(const Vec3& d, const Vec3& ref, const Vec3& n) {
  Vec3 perp = n.cross(d);
  Vec3 best = d;
  double best_dot = d.dot(ref);
  for (const Vec3& c : {Vec3(-d), perp, Vec3(-perp)}) {
    double dd = c.dot(ref);
    if (dd > best_dot) {
      best_dot = dd;
      best = c;
    }
  }
  return best;
}

}  // namespace

std::vector<CurvatureFrame> frames_at_face_centers(const TriangleMesh& mesh,
                                                   const std::vector<CurvatureFrame>& vertex_frames) {
  if (vertex_frames.size() != mesh.vertices.size())
    throw Error("frames_at_face_centers: frame count mismatch");
  std::vector<CurvatureFrame> out(mesh.faces.size());
  for (size_t f = 0; f < mesh.faces.size(); ++f) {
    const auto& t = mesh.faces[f];
    Vec3 n = mesh.face_normal(int(f));
    auto project = [&](const Vec3& d) {
      Vec3 td = d - d.dot(n) * n;
      double len = td.norm();
      return len > 1e-12 ? Vec3(td / len) : Vec3(Vec3::Zero());
    };
    Vec3 ref = project(vertex_frames[t[0]].dir_max);
    if (ref.norm() < 0.5) ref = n.cross(std::fabs(n[0]) > 0.9 ? Vec3(0, 1, 0) : Vec3(1, 0, 0)).normalized();
    Vec3 sum = ref;
    double aniso = vertex_frames[t[0]].anisotropy;
    double kmin = vertex_frames[t[0]].k_min, kmax = vertex_frames[t[0]].k_max;
    for (int c = 1; c < 3; ++c) {
      Vec3 d = project(vertex_frames[t[c]].dir_max);
      if (d.norm() > 0.5) sum += rosy_match(d, ref, n);
      aniso += vertex_frames[t[c]].anisotropy;
      kmin += vertex_frames[t[c]].k_min;
      kmax += vertex_frames[t[c]].k_max;
    }
    CurvatureFrame& fr = out[f];
    fr.point = mesh.face_center(int(f));
    fr.normal = n;
    Vec3 dmax = project(sum);
    if (dmax.norm() < 0.5) dmax = ref;
    fr.dir_max = dmax;
    fr.dir_min = n.cross(dmax).normalized();
    fr.anisotropy = aniso / 3.0;
    fr.k_min = kmin / 3.0;
    fr.k_max = kmax / 3.0;
  }
  return out;
}

}  // namespace xgen
