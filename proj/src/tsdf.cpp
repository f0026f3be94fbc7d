#include "xgen/tsdf.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <map>
#include <unordered_map>

#include "xgen/util.hpp"

namespace xgen {

// --- dense grid ----------------------------------------------------------

double DenseSdfGrid::sample(const Vec3& p) const {
  const int r = resolution;
  double f[3];
  int base[3];
  for (int a = 0; a < 3; ++a) {
    double g = (p[a] + 0.5) * r;
    int i0 = int(std::floor(g));
    i0 = std::clamp(i0, 0, r - 2);
    base[a] = i0;
    f[a] = std::clamp(g - i0, 0.0, 1.0);
  }
  double acc = 0;
  for (int dk = 0; dk < 2; ++dk)
    for (int dj = 0; dj < 2; ++dj)
      for (int di = 0; di < 2; ++di) {
        double w = (di ? f[0] : 1 - f[0]) * (dj ? f[1] : 1 - f[1]) * (dk ? f[2] : 1 - f[2]);
        acc += w * at(base[0] + di, base[1] + dj, base[2] + dk);
      }
  return acc;
}

// --- watertightness ---------------------------------------------------------

bool is_watertight(const TriangleMesh& mesh) {
  // directed edge (a,b) must be matched by exactly one (b,a)
  std::map<std::pair<int, int>, int> count;
  for (const auto& f : mesh.faces)
    for (int c = 0; c < 3; ++c) {
      int a = f[c], b = f[(c + 1) % 3];
      if (a == b) return false;
      ++count[{a, b}];
    }
  for (const auto& [edge, n] : count) {
    if (n != 1) return false;
    auto it = count.find({edge.second, edge.first});
    if (it == count.end() || it->second != 1) return false;
  }
  return !mesh.faces.empty();
}

// --- winding numbers ---------------------------------------------------------

namespace {

// solid angle of triangle (a,b,c) as seen from the origin (Van Oosterom &
// Strackee)
inline double solid_angle(const Vec3& a, const Vec3& b, const Vec3& c) {
  double la = a.norm(), lb = b.norm(), lc = c.norm();
  double num = a.dot(b.cross(c));
  double den = la * lb * lc + a.dot(b) * lc + b.dot(c) * la + c.dot(a) * lb;
  return 2.0 * std::atan2(num, den);
}

}  // namespace

double winding_number(const TriangleMesh& mesh, const Vec3& p) {
  double total = 0;
  for (const auto& f : mesh.faces)
    total += solid_angle(mesh.vertices[f[0]] - p, mesh.vertices[f[1]] - p,
                         mesh.vertices[f[2]] - p);
  return total / (4.0 * M_PI);
}

// --- BVH ---------------------------------------------------------------------

namespace {

Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  // Ericson, Real-Time Collision Detection
  Vec3 ab = b - a, ac = c - a, ap = p - a;
  double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0 && d2 <= 0) return a;
  Vec3 bp = p - b;
  double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0 && d4 <= d3) return b;
  double vc = d1 * d4 - d3 * d2;
  if (vc <= 0 && d1 >= 0 && d3 <= 0) return a + ab * (d1 / (d1 - d3));
  Vec3 cp = p - c;
  double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0 && d5 <= d6) return c;
  double vb = d5 * d2 - d1 * d6;
  if (vb <= 0 && d2 >= 0 && d6 <= 0) return a + ac * (d2 / (d2 - d6));
  double va = d3 * d6 - d5 * d4;
  if (va <= 0 && (d4 - d3) >= 0 && (d5 - d6) >= 0)
    return b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)));
  double denom = 1.0 / (va + vb + vc);
  return a + ab * (vb * denom) + ac * (vc * denom);
}

}  // namespace

struct MeshBvh::Impl {
  struct Node {
    Vec3 lo, hi;
    int left = -1, right = -1;
    int begin = 0, end = 0;
    // far-field winding approximation
    Vec3 dipole = Vec3::Zero();    // area-weighted normal sum
    Vec3 centroid = Vec3::Zero();  // area-weighted
    double radius = 0;
  };

  std::vector<std::array<Vec3, 3>> tris;
  std::vector<int> order;
  std::vector<Node> nodes;
  int root = -1;

  static constexpr int kLeaf = 8;

  int build(int begin, int end) {
    Node n;
    n.lo = Vec3::Constant(std::numeric_limits<double>::infinity());
    n.hi = -n.lo;
    double area_sum = 0;
    for (int i = begin; i < end; ++i) {
      const auto& t = tris[order[i]];
      for (const Vec3& v : t) {
        n.lo = n.lo.cwiseMin(v);
        n.hi = n.hi.cwiseMax(v);
      }
      Vec3 an = 0.5 * (t[1] - t[0]).cross(t[2] - t[0]);
      double area = an.norm();
      n.dipole += an;
      n.centroid += area * (t[0] + t[1] + t[2]) / 3.0;
      area_sum += area;
    }
    n.centroid = area_sum > 0 ? Vec3(n.centroid / area_sum) : Vec3(0.5 * (n.lo + n.hi));
    for (int i = begin; i < end; ++i)
      for (const Vec3& v : tris[order[i]])
        n.radius = std::max(n.radius, (v - n.centroid).norm());
    if (end - begin <= kLeaf) {
      n.begin = begin;
      n.end = end;
      nodes.push_back(n);
      return int(nodes.size()) - 1;
    }
    Vec3 ext = n.hi - n.lo;
    int axis = 0;
    if (ext[1] > ext[axis]) axis = 1;
    if (ext[2] > ext[axis]) axis = 2;
    int mid = (begin + end) / 2;
    std::nth_element(order.begin() + begin, order.begin() + mid, order.begin() + end,
                     [&](int a, int b) {
                       return tris[a][0][axis] + tris[a][1][axis] + tris[a][2][axis] <
                              tris[b][0][axis] + tris[b][1][axis] + tris[b][2][axis];
                     });
    int self = int(nodes.size());
    nodes.push_back(n);
    int l = build(begin, mid);
    int r = build(mid, end);
    nodes[self].left = l;
    nodes[self].right = r;
    nodes[self].begin = begin;
    nodes[self].end = end;
    return self;
  }

  static double box_dist2(const Node& n, const Vec3& q) {
    Vec3 d = (n.lo - q).cwiseMax(q - n.hi).cwiseMax(0.0);
    return d.squaredNorm();
  }

  void closest_rec(int ni, const Vec3& q, double& best2, Vec3& best_point) const {
    const Node& n = nodes[ni];
    if (box_dist2(n, q) >= best2) return;
    if (n.left < 0) {
      for (int i = n.begin; i < n.end; ++i) {
        const auto& t = tris[order[i]];
        Vec3 cp = closest_point_on_triangle(q, t[0], t[1], t[2]);
        double d2 = (cp - q).squaredNorm();
        if (d2 < best2) {
          best2 = d2;
          best_point = cp;
        }
      }
      return;
    }
    double dl = box_dist2(nodes[n.left], q), dr = box_dist2(nodes[n.right], q);
    if (dl < dr) {
      closest_rec(n.left, q, best2, best_point);
      closest_rec(n.right, q, best2, best_point);
    } else {
      closest_rec(n.right, q, best2, best_point);
      closest_rec(n.left, q, best2, best_point);
    }
  }

  double winding_rec(int ni, const Vec3& q, double beta) const {
    const Node& n = nodes[ni];
    double d = (q - n.centroid).norm();
    if (d > beta * n.radius && d > 0) {
      // first-order (dipole) far-field term
      return n.dipole.dot(n.centroid - q) / (4.0 * M_PI * d * d * d);
    }
    if (n.left < 0) {
      double acc = 0;
      for (int i = n.begin; i < n.end; ++i) {
        const auto& t = tris[order[i]];
        acc += solid_angle(t[0] - q, t[1] - q, t[2] - q) / (4.0 * M_PI);
      }
      return acc;
    }
    return winding_rec(n.left, q, beta) + winding_rec(n.right, q, beta);
  }
};

MeshBvh::MeshBvh(const TriangleMesh& mesh) : impl_(std::make_unique<Impl>()) {
  if (mesh.faces.empty()) throw Error("MeshBvh: empty mesh");
  impl_->tris.reserve(mesh.faces.size());
  for (const auto& f : mesh.faces)
    impl_->tris.push_back({mesh.vertices[f[0]], mesh.vertices[f[1]], mesh.vertices[f[2]]});
  impl_->order.resize(impl_->tris.size());
  for (size_t i = 0; i < impl_->order.size(); ++i) impl_->order[i] = int(i);
  impl_->nodes.reserve(2 * impl_->tris.size());
  impl_->root = impl_->build(0, int(impl_->tris.size()));
}

MeshBvh::~MeshBvh() = default;
MeshBvh::MeshBvh(MeshBvh&&) noexcept = default;

double MeshBvh::distance(const Vec3& p) const { return (closest_point(p) - p).norm(); }

Vec3 MeshBvh::closest_point(const Vec3& p) const {
  double best2 = std::numeric_limits<double>::infinity();
  Vec3 bp = Vec3::Zero();
  impl_->closest_rec(impl_->root, p, best2, bp);
  return bp;
}

double MeshBvh::fast_winding(const Vec3& p, double beta) const {
  return impl_->winding_rec(impl_->root, p, beta);
}

// --- TSDF ----------------------------------------------------------------

DenseSdfGrid compute_tsdf(const TriangleMesh& mesh, int resolution, double truncation,
                          int workers) {
  if (resolution < 4) throw Error("compute_tsdf: resolution too small");
  if (truncation <= 0) throw Error("compute_tsdf: truncation must be positive");
  mesh.validate();

  DenseSdfGrid grid;
  grid.resolution = resolution;
  grid.truncation = truncation;
  grid.values.assign(size_t(resolution) * resolution * resolution, 0.0);
  grid.degraded = !is_watertight(mesh);
  if (grid.degraded)
    log_warn("compute_tsdf: mesh is not watertight; signs from winding threshold may be "
             "unreliable");

  MeshBvh bvh(mesh);
  const int r = resolution;
  const double h = 1.0 / r;

  // Pass 1: unsigned distance everywhere, winding-based sign in the band
  // |d| < truncation. Far vertices get filled by component sign afterwards.
  std::vector<uint8_t> far(grid.values.size(), 0);
  const bool flood_ok = h < truncation;
  parallel_chunks(size_t(r), workers, [&](size_t k0, size_t k1) {
    for (size_t k = k0; k < k1; ++k)
      for (int j = 0; j < r; ++j)
        for (int i = 0; i < r; ++i) {
          Vec3 p = grid.vertex_position(i, j, int(k));
          double d = bvh.distance(p);
          size_t idx = size_t(i) + size_t(r) * (size_t(j) + size_t(r) * k);
          if (d >= truncation && flood_ok) {
            far[idx] = 1;
            grid.values[idx] = d;  // placeholder magnitude
          } else {
            double w = bvh.fast_winding(p);
            grid.values[idx] = (w > 0.5 ? -1.0 : 1.0) * std::min(d, truncation);
          }
        }
  });

  // Pass 2: flood-fill far components, one winding evaluation per component.
  std::vector<uint8_t> visited(grid.values.size(), 0);
  std::deque<size_t> queue;
  auto index_of = [&](int i, int j, int k) {
    return size_t(i) + size_t(r) * (size_t(j) + size_t(r) * size_t(k));
  };
  for (size_t start = 0; start < grid.values.size(); ++start) {
    if (!far[start] || visited[start]) continue;
    int si = int(start % r), sj = int((start / r) % r), sk = int(start / (size_t(r) * r));
    double w = bvh.fast_winding(grid.vertex_position(si, sj, sk));
    double sign = w > 0.5 ? -1.0 : 1.0;
    queue.clear();
    queue.push_back(start);
    visited[start] = 1;
    while (!queue.empty()) {
      size_t cur = queue.front();
      queue.pop_front();
      grid.values[cur] = sign * truncation;
      int i = int(cur % r), j = int((cur / r) % r), k = int(cur / (size_t(r) * r));
      const int di[6] = {1, -1, 0, 0, 0, 0};
      const int dj[6] = {0, 0, 1, -1, 0, 0};
      const int dk[6] = {0, 0, 0, 0, 1, -1};
      for (int n = 0; n < 6; ++n) {
        int ni = i + di[n], nj = j + dj[n], nk = k + dk[n];
        if (ni < 0 || nj < 0 || nk < 0 || ni >= r || nj >= r || nk >= r) continue;
        size_t nidx = index_of(ni, nj, nk);
        if (far[nidx] && !visited[nidx]) {
          visited[nidx] = 1;
          queue.push_back(nidx);
        }
      }
    }
  }
  return grid;
}

// --- thin shell sampling ---------------------------------------------------

SdfSamples sample_thin_shell(const DenseSdfGrid& grid, double epsilon, size_t count,
                             uint64_t seed, const OrientedPointCloud* surface) {
  if (epsilon > grid.truncation + 1e-12)
    throw Error("sample_thin_shell: epsilon exceeds truncation");
  const int r = grid.resolution;
  // a cell can contain |sdf| < eps iff its corner-value interval intersects
  // (-eps, eps); the trilinear extremes sit at the corners
  std::vector<size_t> candidates;
  for (int k = 0; k + 1 < r; ++k)
    for (int j = 0; j + 1 < r; ++j)
      for (int i = 0; i + 1 < r; ++i) {
        double lo = std::numeric_limits<double>::infinity(), hi = -lo;
        for (int d = 0; d < 8; ++d) {
          double v = grid.at(i + (d & 1), j + ((d >> 1) & 1), k + ((d >> 2) & 1));
          lo = std::min(lo, v);
          hi = std::max(hi, v);
        }
        if (lo < epsilon && hi > -epsilon)
          candidates.push_back(size_t(i) + size_t(r) * (size_t(j) + size_t(r) * k));
      }
  if (candidates.empty()) throw Error("sample_thin_shell: no cell intersects the shell");

  Rng rng(derive_seed({seed, 0x7368656cull, uint64_t(r)}));
  SdfSamples out;
  out.shell_epsilon = epsilon;
  out.points.reserve(count);
  out.values.reserve(count);
  const double h = 1.0 / r;
  size_t attempts = 0, max_attempts = std::max<size_t>(100000, count * 10000);
  while (out.points.size() < count) {
    if (++attempts > max_attempts)
      throw Error("sample_thin_shell: acceptance rate too low");
    size_t cell = candidates[rng.below(candidates.size())];
    int i = int(cell % r), j = int((cell / r) % r), k = int(cell / (size_t(r) * r));
    Vec3 p = grid.vertex_position(i, j, k) +
             Vec3(rng.uniform() * h, rng.uniform() * h, rng.uniform() * h);
    double v = grid.sample(p);
    if (std::fabs(v) < epsilon) {
      out.points.push_back(p);
      out.values.push_back(v);
    }
  }
  if (surface) {
    for (const Vec3& p : surface->points) {
      out.points.push_back(p);
      out.values.push_back(grid.sample(p));
    }
  }
  return out;
}

// --- marching cubes ----------------------------------------------------------

namespace {

// corner c of the unit cube sits at ((c&1), (c>>1)&1, (c>>2)&1)
constexpr int kEdgeCorners[12][2] = {
    {0, 1}, {2, 3}, {4, 5}, {6, 7},  // x-aligned
    {0, 2}, {1, 3}, {4, 6}, {5, 7},  // y-aligned
    {0, 4}, {1, 5}, {2, 6}, {3, 7},  // z-aligned
};

// faces with corner lists in CCW order seen from outside the cube
constexpr int kFaceCorners[6][4] = {
    {0, 4, 6, 2},  // -x
    {1, 3, 7, 5},  // +x
    {0, 1, 5, 4},  // -y
    {2, 6, 7, 3},  // +y
    {0, 2, 3, 1},  // -z
    {4, 5, 7, 6},  // +z
};

int edge_between(int a, int b) {
  for (int e = 0; e < 12; ++e)
    if ((kEdgeCorners[e][0] == a && kEdgeCorners[e][1] == b) ||
        (kEdgeCorners[e][0] == b && kEdgeCorners[e][1] == a))
      return e;
  throw Error("marching cubes table: not an edge");
}

// Case table: per sign configuration, triangles as triples of cube edge ids.
// Generated by chaining per-face marching-squares segments into closed loops.
// Ambiguous faces (diagonal inside corners) keep the inside corners separated;
// both cells sharing a face see the same corner signs, so the choice is
// consistent and the surface is closed.
std::vector<std::vector<std::array<int, 3>>> build_case_table() {
  std::vector<std::vector<std::array<int, 3>>> table(256);
  for (int config = 1; config < 255; ++config) {
    auto inside = [&](int c) { return (config >> c) & 1; };
    // directed segments (from-edge, to-edge), inside region on the left when
    // the face is viewed from outside
    std::vector<std::pair<int, int>> segments;
    for (const auto& face : kFaceCorners) {
      int fc[4] = {face[0], face[1], face[2], face[3]};
      auto emit = [&](int ca, int cb, int cc, int cd) {
        // segment from the edge (ca,cb) to the edge (cc,cd)
        segments.emplace_back(edge_between(ca, cb), edge_between(cc, cd));
      };
      // marching squares on the face (inside region kept on the right of each
      // directed segment): a corner cut whenever a corner's inside flag
      // differs from both neighbors — this also covers the ambiguous diagonal
      // configuration by cutting both inside corners separately
      for (int c = 0; c < 4; ++c) {
        int prev = fc[(c + 3) % 4], cur = fc[c], next = fc[(c + 1) % 4];
        int diag = fc[(c + 2) % 4];
        if (inside(cur) && !inside(prev) && !inside(next)) emit(cur, prev, cur, next);
        if (!inside(cur) && inside(prev) && inside(next) && inside(diag))
          emit(cur, next, cur, prev);
      }
      // two adjacent inside corners: one segment across the face
      for (int c = 0; c < 4; ++c) {
        int cur = fc[c], next = fc[(c + 1) % 4];
        int prev = fc[(c + 3) % 4], nnext = fc[(c + 2) % 4];
        if (inside(cur) && inside(next) && !inside(prev) && !inside(nnext))
          emit(cur, prev, next, nnext);
      }
    }
    // chain segments into loops; every cut cube edge must have exactly one
    // outgoing and one incoming segment or the table rules are inconsistent
    std::map<int, std::pair<int, bool>> from;  // start edge -> (segment idx, used)
    std::map<int, int> ends;
    for (size_t s = 0; s < segments.size(); ++s) {
      if (!from.emplace(segments[s].first, std::make_pair(int(s), false)).second)
        throw Error("marching cubes table: duplicate segment start");
      ++ends[segments[s].second];
    }
    for (const auto& [edge, n] : ends)
      if (n != 1 || !from.count(edge))
        throw Error("marching cubes table: unbalanced segment ends");
    for (size_t s = 0; s < segments.size(); ++s) {
      if (from[segments[s].first].second) continue;
      std::vector<int> loop;
      int start = segments[s].first;
      int cur = start;
      do {
        auto& entry = from.at(cur);
        if (entry.second) throw Error("marching cubes table: segment reuse");
        entry.second = true;
        loop.push_back(cur);
        cur = segments[entry.first].second;
      } while (cur != start);
      for (size_t i = 1; i + 1 < loop.size(); ++i)
        table[config].push_back({loop[0], loop[int(i)], loop[int(i) + 1]});
    }
  }
  return table;
}

}  // namespace

TriangleMesh marching_cubes(const DenseSdfGrid& grid) {
  static const auto kTable = build_case_table();
  const int r = grid.resolution;
  if (r < 2) throw Error("marching_cubes: grid too small");
  bool has_neg = false, has_pos = false;
  for (double v : grid.values) {
    has_neg |= v < 0;
    has_pos |= v >= 0;
  }
  if (!has_neg || !has_pos) throw Error("marching_cubes: no zero crossing in grid");

  TriangleMesh mesh;
  const double h = 1.0 / r;
  // weld vertices through global edge keys: (axis, lattice coords)
  std::unordered_map<uint64_t, int> edge_vertex;
  auto edge_key = [&](int axis, int i, int j, int k) {
    return (uint64_t(i) | uint64_t(j) << 20 | uint64_t(k) << 40) << 2 | uint64_t(axis);
  };
  auto value = [&](int i, int j, int k) {
    double v = grid.at(i, j, k);
    return v == 0.0 ? 1e-300 : v;  // exact zeros count as outside, strictly
  };

  for (int k = 0; k + 1 < r; ++k)
    for (int j = 0; j + 1 < r; ++j)
      for (int i = 0; i + 1 < r; ++i) {
        double v[8];
        int config = 0;
        for (int c = 0; c < 8; ++c) {
          v[c] = value(i + (c & 1), j + ((c >> 1) & 1), k + ((c >> 2) & 1));
          if (v[c] < 0) config |= 1 << c;
        }
        const auto& tris = kTable[config];
        if (tris.empty()) continue;
        auto vertex_on_edge = [&](int e) {
          int c0 = kEdgeCorners[e][0], c1 = kEdgeCorners[e][1];
          int axis = e < 4 ? 0 : e < 8 ? 1 : 2;
          int oi = i + (c0 & 1), oj = j + ((c0 >> 1) & 1), ok = k + ((c0 >> 2) & 1);
          uint64_t key = edge_key(axis, oi, oj, ok);
          auto it = edge_vertex.find(key);
          if (it != edge_vertex.end()) return it->second;
          double t = v[c0] / (v[c0] - v[c1]);
          Vec3 p0 = grid.vertex_position(oi, oj, ok);
          Vec3 p = p0;
          p[axis] += t * h;
          mesh.vertices.push_back(p);
          int idx = int(mesh.vertices.size()) - 1;
          edge_vertex.emplace(key, idx);
          return idx;
        };
        for (const auto& t : tris) {
          int a = vertex_on_edge(t[0]), b = vertex_on_edge(t[1]), c = vertex_on_edge(t[2]);
          if (a == b || b == c || a == c) continue;
          // orient toward positive SDF using the local trilinear gradient
          Vec3 centroid = (mesh.vertices[a] + mesh.vertices[b] + mesh.vertices[c]) / 3.0;
          Vec3 base = grid.vertex_position(i, j, k);
          Vec3 f = (centroid - base) / h;
          Vec3 gradient = Vec3::Zero();
          for (int c8 = 0; c8 < 8; ++c8) {
            double wx = (c8 & 1) ? f[0] : 1 - f[0];
            double wy = (c8 >> 1 & 1) ? f[1] : 1 - f[1];
            double wz = (c8 >> 2 & 1) ? f[2] : 1 - f[2];
            double sx = (c8 & 1) ? 1.0 : -1.0;
            double sy = (c8 >> 1 & 1) ? 1.0 : -1.0;
            double sz = (c8 >> 2 & 1) ? 1.0 : -1.0;
            gradient += v[c8] * Vec3(sx * wy * wz, sy * wx * wz, sz * wx * wy);
          }
          Vec3 n = (mesh.vertices[b] - mesh.vertices[a]).cross(mesh.vertices[c] - mesh.vertices[a]);
          if (n.dot(gradient) < 0) std::swap(b, c);
          mesh.faces.push_back({a, b, c});
        }
      }
  return mesh;
}

// --- file IO -------------------------------------------------------------

void save_tsdf(const std::filesystem::path& path, const DenseSdfGrid& grid) {
  atomic_write_file(path, [&](std::ostream& os) {
    write_bytes(os, "TSDF", 4);
    write_u32(os, 1);
    write_u32(os, uint32_t(grid.resolution));
    write_f32(os, float(grid.truncation));
    for (double v : grid.values) write_f32(os, float(v));
  });
}

DenseSdfGrid load_tsdf(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open TSDF file: " + path.string());
  char magic[4];
  read_bytes(is, magic, 4, "TSDF magic");
  if (std::string(magic, 4) != "TSDF") throw Error("bad magic in " + path.string());
  uint32_t version = read_u32(is, "TSDF version");
  if (version != 1) throw Error("unsupported TSDF version " + std::to_string(version));
  DenseSdfGrid grid;
  grid.resolution = int(read_u32(is, "TSDF resolution"));
  grid.truncation = read_f32(is, "TSDF truncation");
  size_t n = size_t(grid.resolution) * grid.resolution * grid.resolution;
  grid.values.resize(n);
  for (size_t i = 0; i < n; ++i) grid.values[i] = read_f32(is, "TSDF value");
  return grid;
}

}  // namespace xgen
