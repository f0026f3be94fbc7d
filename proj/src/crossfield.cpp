#include "xgen/crossfield.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "xgen/util.hpp"

namespace xgen {

void CrossField::validate() const {
  for (size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    if (std::fabs(s.normal.norm() - 1.0) > 1e-6)
      throw Error("field sample " + std::to_string(i) + ": normal not unit");
    if (std::fabs(s.alpha.norm() - 1.0) > 1e-5 || std::fabs(s.alpha.dot(s.normal)) > 1e-5)
      throw Error("field sample " + std::to_string(i) + ": alpha not unit tangent");
    if (has_gt) {
      if (std::fabs(s.mu.dot(s.normal)) > 1e-4 || std::fabs(s.nu.dot(s.normal)) > 1e-4 ||
          std::fabs(s.mu.dot(s.nu)) > 1e-4)
        throw Error("field sample " + std::to_string(i) + ": gt frame not orthogonal");
    }
  }
}

Vec3 project_to_tangent(const Vec3& raw, const Vec3& n) {
  Vec3 t = raw - raw.dot(n) * n;
  double len = t.norm();
  if (len < 1e-8) throw Error("project_to_tangent: direction parallel to normal");
  return t / len;
}

double alignment_deviation(const Vec3& alpha, const Vec3& mu, const Vec3& nu) {
  return std::max(0.0, std::fabs(alpha.dot(mu)) + std::fabs(alpha.dot(nu)) - 1.0);
}

double wrap_quarter(double d, long* k_out) {
  double x = d / M_PI_2;
  double k = std::round(x);  // ties away from zero
  if (std::fabs(x - std::trunc(x)) == 0.5) k = std::trunc(x);  // ties toward zero rotation
  if (k_out) *k_out = long(k);
  return d - k * M_PI_2;
}

Vec3 rotate_between(const Vec3& from, const Vec3& to, const Vec3& v) {
  double c = from.dot(to);
  if (c < -1.0 + 1e-9) throw Error("rotate_between: antipodal normals");
  Vec3 k = from.cross(to);
  return v + k.cross(v) + k.cross(k.cross(v)) / (1.0 + c);
}

// --- adjacency ---------------------------------------------------------------

std::vector<VertexRing> build_vertex_rings(const TriangleMesh& mesh) {
  const size_t nv = mesh.vertices.size();
  // per vertex: successor map a -> b for each incident face (v, a, b)
  std::vector<std::map<int, int>> next(nv);
  std::vector<std::pair<int, int>> bad_edges;
  for (const auto& f : mesh.faces) {
    for (int c = 0; c < 3; ++c) {
      int v = f[c], a = f[(c + 1) % 3], b = f[(c + 2) % 3];
      if (!next[v].emplace(a, b).second) bad_edges.emplace_back(v, a);
    }
  }
  if (!bad_edges.empty()) {
    std::ostringstream os;
    os << "non-manifold or inconsistently oriented edges:";
    for (size_t i = 0; i < bad_edges.size() && i < 8; ++i)
      os << " (" << bad_edges[i].first << "," << bad_edges[i].second << ")";
    if (bad_edges.size() > 8) os << " ...";
    throw Error(os.str());
  }

  std::vector<VertexRing> rings(nv);
  for (size_t v = 0; v < nv; ++v) {
    const auto& succ = next[v];
    if (succ.empty()) continue;  // isolated vertex: empty ring
    // boundary rings start at the neighbor that is nobody's successor
    std::map<int, int> indegree;
    for (const auto& [a, b] : succ) ++indegree[b];
    int start = -1;
    for (const auto& [a, b] : succ)
      if (indegree.find(a) == indegree.end()) {
        if (start >= 0) throw Error("non-manifold fan at vertex " + std::to_string(v));
        start = a;
      }
    bool boundary = start >= 0;
    if (!boundary) start = succ.begin()->first;
    std::vector<int> ring;
    int cur = start;
    for (size_t guard = 0; guard <= succ.size(); ++guard) {
      ring.push_back(cur);
      auto it = succ.find(cur);
      if (it == succ.end()) break;  // boundary ring ends
      cur = it->second;
      if (cur == start) break;  // interior ring closed
    }
    size_t expected = succ.size() + (boundary ? 1 : 0);
    if (ring.size() != expected)
      throw Error("non-manifold fan at vertex " + std::to_string(v));
    rings[v].ring = std::move(ring);
    rings[v].boundary = boundary;
  }
  return rings;
}

// --- GT field generation -----------------------------------------------------

namespace {

// deterministic tangent basis for a unit normal
void tangent_basis(const Vec3& n, Vec3& e1, Vec3& e2) {
  e1 = std::fabs(n[0]) > 0.9 ? Vec3(0, 1, 0).cross(n) : Vec3(1, 0, 0).cross(n);
  e1.normalize();
  e2 = n.cross(e1);
}

struct FieldWorkspace {
  std::vector<Vec3> normal, e1, e2;
  std::vector<double> theta_curv, curv_weight;
  std::vector<VertexRing> rings;
  // per vertex, per ring slot: transport offset of the neighbor frame into
  // this vertex's frame
  std::vector<std::vector<double>> delta;

  double edge_energy(const std::vector<double>& theta, int v, size_t slot, int u) const {
    double d = wrap_quarter(theta[v] - theta[u] - delta[v][slot]);
    return d * d;
  }

  double energy(const std::vector<double>& theta, double smooth_weight) const {
    double e = 0;
    for (size_t v = 0; v < rings.size(); ++v) {
      for (size_t s = 0; s < rings[v].ring.size(); ++s)
        e += 0.5 * smooth_weight * edge_energy(theta, int(v), s, rings[v].ring[s]);
      double dc = wrap_quarter(theta[v] - theta_curv[v]);
      e += curv_weight[v] * dc * dc;
    }
    return e;
  }
};

}  // namespace

GtFieldResult generate_gt_field(const TriangleMesh& mesh,
                                const std::vector<CurvatureFrame>& frames, int iterations,
                                double smooth_weight) {
  const size_t nv = mesh.vertices.size();
  if (frames.size() != nv) throw Error("generate_gt_field: frame count mismatch");
  if (iterations < 0) throw Error("generate_gt_field: negative iteration count");

  FieldWorkspace ws;
  ws.rings = build_vertex_rings(mesh);
  ws.normal.resize(nv);
  ws.e1.resize(nv);
  ws.e2.resize(nv);
  ws.theta_curv.resize(nv);
  ws.curv_weight.resize(nv);
  std::vector<double> theta(nv);
  for (size_t v = 0; v < nv; ++v) {
    ws.normal[v] = frames[v].normal;
    tangent_basis(ws.normal[v], ws.e1[v], ws.e2[v]);
    Vec3 d = frames[v].dir_max - frames[v].dir_max.dot(ws.normal[v]) * ws.normal[v];
    double len = d.norm();
    if (len < 1e-10) d = ws.e1[v]; else d /= len;
    ws.theta_curv[v] = std::atan2(d.dot(ws.e2[v]), d.dot(ws.e1[v]));
    ws.curv_weight[v] = std::clamp(frames[v].anisotropy, 0.0, 1.0);
    theta[v] = ws.theta_curv[v];
  }
  ws.delta.resize(nv);
  for (size_t v = 0; v < nv; ++v) {
    ws.delta[v].resize(ws.rings[v].ring.size());
    for (size_t s = 0; s < ws.rings[v].ring.size(); ++s) {
      int u = ws.rings[v].ring[s];
      Vec3 te = rotate_between(ws.normal[u], ws.normal[v], ws.e1[u]);
      ws.delta[v][s] = std::atan2(te.dot(ws.e2[v]), te.dot(ws.e1[v]));
    }
  }

  GtFieldResult out;
  out.energy_history.push_back(ws.energy(theta, smooth_weight));
  std::vector<double> proposal(nv), candidate(nv);
  for (int it = 0; it < iterations; ++it) {
    // Jacobi sweep: move each angle to the weighted mean of transported,
    // quarter-snapped neighbor angles and the curvature target
    parallel_chunks(nv, 0, [&](size_t lo, size_t hi) {
      for (size_t v = lo; v < hi; ++v) {
        double wsum = 0, acc = 0;
        for (size_t s = 0; s < ws.rings[v].ring.size(); ++s) {
          int u = ws.rings[v].ring[s];
          double r = wrap_quarter(theta[u] + ws.delta[v][s] - theta[v]);
          acc += smooth_weight * r;
          wsum += smooth_weight;
        }
        double rc = wrap_quarter(ws.theta_curv[v] - theta[v]);
        acc += ws.curv_weight[v] * rc;
        wsum += ws.curv_weight[v];
        proposal[v] = wsum > 0 ? theta[v] + acc / wsum : theta[v];
      }
    });
    double prev_energy = out.energy_history.back();
    double step = 1.0;
    double accepted = prev_energy;
    bool improved = false;
    for (int attempt = 0; attempt < 16; ++attempt) {
      for (size_t v = 0; v < nv; ++v)
        candidate[v] = theta[v] + step * (proposal[v] - theta[v]);
      double e = ws.energy(candidate, smooth_weight);
      if (e <= prev_energy + 1e-12) {
        theta = candidate;
        accepted = e;
        improved = true;
        break;
      }
      step *= 0.5;
    }
    if (!improved) accepted = prev_energy;  // converged; keep state
    out.energy_history.push_back(accepted);
  }

  out.field.site = FieldSite::vertex;
  out.field.has_gt = false;
  out.field.samples.resize(nv);
  for (size_t v = 0; v < nv; ++v) {
    auto& s = out.field.samples[v];
    s.point = mesh.vertices[v];
    s.normal = ws.normal[v];
    s.alpha = std::cos(theta[v]) * ws.e1[v] + std::sin(theta[v]) * ws.e2[v];
  }
  return out;
}

// --- singularities -----------------------------------------------------------

SingularityReport singularity_indices(const TriangleMesh& mesh, const CrossField& field) {
  if (field.site != FieldSite::vertex || field.samples.size() != mesh.vertices.size())
    throw Error("singularity_indices: field must live on mesh vertices");
  auto rings = build_vertex_rings(mesh);

  const size_t nv = mesh.vertices.size();
  std::vector<Vec3> e1(nv), e2(nv);
  std::vector<double> theta(nv);
  for (size_t v = 0; v < nv; ++v) {
    tangent_basis(field.samples[v].normal, e1[v], e2[v]);
    const Vec3& a = field.samples[v].alpha;
    theta[v] = std::atan2(a.dot(e2[v]), a.dot(e1[v]));
  }

  auto transport_angle = [&](int u, int v) {
    Vec3 te = rotate_between(field.samples[u].normal, field.samples[v].normal, e1[u]);
    return std::atan2(te.dot(e2[v]), te.dot(e1[v]));
  };

  SingularityReport report;
  for (size_t v = 0; v < nv; ++v) {
    if (rings[v].ring.empty()) continue;
    if (rings[v].boundary) {
      report.boundary_vertices.push_back(int(v));
      continue;
    }
    const auto& ring = rings[v].ring;
    const size_t m = ring.size();
    double wrapped_sum = 0;
    Vec3 carried = e1[ring[0]];
    for (size_t s = 0; s < m; ++s) {
      int a = ring[s], b = ring[(s + 1) % m];
      wrapped_sum += wrap_quarter(theta[b] - theta[a] - transport_angle(a, b));
      carried = rotate_between(field.samples[a].normal, field.samples[b].normal, carried);
    }
    // loop holonomy: rotation of the carried frame relative to the start frame
    double holonomy = std::atan2(carried.dot(e2[ring[0]]), carried.dot(e1[ring[0]]));
    double index = (wrapped_sum + holonomy) / (2.0 * M_PI);
    double quarters = std::round(index * 4.0);
    if (std::fabs(index * 4.0 - quarters) > 1e-4)
      throw Error("singularity index at vertex " + std::to_string(v) +
                  " is not a quarter integer: " + std::to_string(index));
    double snapped = quarters / 4.0;
    report.index_sum += snapped;
    if (snapped != 0.0) report.indices.emplace_back(int(v), snapped);
  }
  return report;
}

// --- file IO -------------------------------------------------------------

void save_field(const std::filesystem::path& path, const CrossField& field) {
  atomic_write_file(path, [&](std::ostream& os) {
    write_bytes(os, "XFLD", 4);
    write_u32(os, 1);
    write_u8(os, uint8_t(field.site));
    write_u8(os, field.has_gt ? 1 : 0);
    write_u64(os, field.samples.size());
    auto put3 = [&](const Vec3& v) {
      for (int c = 0; c < 3; ++c) write_f32(os, float(v[c]));
    };
    for (const auto& s : field.samples) {
      put3(s.point);
      put3(s.normal);
      put3(s.alpha);
      if (field.has_gt) {
        put3(s.mu);
        put3(s.nu);
      }
    }
  });
}

CrossField load_field(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open field file: " + path.string());
  char magic[4];
  read_bytes(is, magic, 4, "field magic");
  if (std::string(magic, 4) != "XFLD") throw Error("bad magic in " + path.string());
  uint32_t version = read_u32(is, "field version");
  if (version != 1) throw Error("unsupported field version " + std::to_string(version));
  CrossField field;
  uint8_t site = read_u8(is, "field site tag");
  if (site > 2) throw Error("unknown field site tag " + std::to_string(site));
  field.site = FieldSite(site);
  field.has_gt = read_u8(is, "field gt flag") != 0;
  uint64_t count = read_u64(is, "field count");
  field.samples.resize(count);
  auto get3 = [&](Vec3& v) {
    for (int c = 0; c < 3; ++c) v[c] = read_f32(is, "field data");
  };
  for (auto& s : field.samples) {
    get3(s.point);
    get3(s.normal);
    get3(s.alpha);
    if (field.has_gt) {
      get3(s.mu);
      get3(s.nu);
    }
  }
  return field;
}

}  // namespace xgen
