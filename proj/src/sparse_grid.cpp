#include "xgen/sparse_grid.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <unordered_map>

#include "xgen/util.hpp"

namespace xgen {

int64_t SparseVoxelGrid::find(uint64_t key) const {
  auto it = std::lower_bound(keys.begin(), keys.end(), key);
  if (it == keys.end() || *it != key) return -1;
  return it - keys.begin();
}

void SparseVoxelGrid::validate() const {
  if (resolution <= 0) throw Error("grid: resolution must be positive");
  if (feature_dim < 0) throw Error("grid: negative feature dim");
  if (features.size() != keys.size() * size_t(feature_dim))
    throw Error("grid: feature buffer size mismatch");
  uint64_t prev = 0;
  for (size_t n = 0; n < keys.size(); ++n) {
    if (n > 0 && keys[n] <= prev) throw Error("grid: keys not strictly sorted");
    prev = keys[n];
    int i, j, k;
    unpack(keys[n], i, j, k);
    if (i >= resolution || j >= resolution || k >= resolution)
      throw Error("grid: key out of range");
  }
  for (double f : features)
    if (!std::isfinite(f)) throw Error("grid: non-finite feature value");
}

SparseVoxelGrid SparseVoxelGrid::from_entries(
    int resolution, int feature_dim,
    std::vector<std::pair<uint64_t, std::vector<double>>> entries) {
  std::sort(entries.begin(), entries.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  SparseVoxelGrid g;
  g.resolution = resolution;
  g.feature_dim = feature_dim;
  g.keys.reserve(entries.size());
  g.features.reserve(entries.size() * feature_dim);
  for (auto& [key, feat] : entries) {
    if (!g.keys.empty() && g.keys.back() == key) throw Error("grid: duplicate key");
    if (int(feat.size()) != feature_dim) throw Error("grid: feature dim mismatch");
    g.keys.push_back(key);
    g.features.insert(g.features.end(), feat.begin(), feat.end());
  }
  g.validate();
  return g;
}

void GridPyramid::validate() const {
  for (size_t l = 0; l + 1 < levels.size(); ++l) {
    if (levels[l].resolution != 2 * levels[l + 1].resolution)
      throw Error("pyramid: resolutions must halve per level");
    // every coarse key must be the floor-halving of some fine key
    for (uint64_t ck : levels[l + 1].keys) {
      int i, j, k;
      SparseVoxelGrid::unpack(ck, i, j, k);
      bool found = false;
      for (int di = 0; di < 2 && !found; ++di)
        for (int dj = 0; dj < 2 && !found; ++dj)
          for (int dk = 0; dk < 2 && !found; ++dk)
            found = levels[l].find(SparseVoxelGrid::pack(2 * i + di, 2 * j + dj, 2 * k + dk)) >= 0;
      if (!found) throw Error("pyramid: coarse key with no occupied child");
    }
  }
}

SparseVoxelGrid quantize(const OrientedPointCloud& cloud, int resolution) {
  if (cloud.points.empty()) throw Error("quantize: empty cloud");
  if (resolution < 2 || resolution > (1 << 21)) throw Error("quantize: bad resolution");
  cloud.validate(true);

  struct Acc {
    Vec3 pos_sum = Vec3::Zero();
    Vec3 normal_sum = Vec3::Zero();
    size_t count = 0;
    size_t first = 0;  // index of first point snapped here
  };
  std::unordered_map<uint64_t, Acc> cells;
  cells.reserve(cloud.points.size());
  const double r = resolution;
  for (size_t p = 0; p < cloud.points.size(); ++p) {
    const Vec3& x = cloud.points[p];
    int c[3];
    for (int a = 0; a < 3; ++a) {
      long v = std::lround((x[a] + 0.5) * r);
      c[a] = int(std::clamp(v, 0l, long(resolution - 1)));
    }
    uint64_t key = SparseVoxelGrid::pack(c[0], c[1], c[2]);
    auto [it, fresh] = cells.try_emplace(key);
    if (fresh) it->second.first = p;
    it->second.pos_sum += x;
    it->second.normal_sum += cloud.normals[p];
    it->second.count += 1;
  }

  std::vector<std::pair<uint64_t, std::vector<double>>> entries;
  entries.reserve(cells.size());
  SparseVoxelGrid proto;
  proto.resolution = resolution;
  const double h = 1.0 / r;
  for (auto& [key, acc] : cells) {
    Vec3 mean = acc.pos_sum / double(acc.count);
    Vec3 vpos = proto.vertex_position(key);
    Vec3 offset = (mean - vpos) / h;
    Vec3 normal = acc.normal_sum / double(acc.count);
    double len = normal.norm();
    if (len < 1e-3) {
      // opposing normals cancelled out; keep the first point's
      normal = cloud.normals[acc.first];
    } else {
      normal /= len;
    }
    entries.emplace_back(key, std::vector<double>{offset[0], offset[1], offset[2], normal[0],
                                                  normal[1], normal[2]});
  }
  return SparseVoxelGrid::from_entries(resolution, 6, std::move(entries));
}

SparseVoxelGrid downsample_keys(const SparseVoxelGrid& grid) {
  if (grid.resolution % 2 != 0) throw Error("downsample_keys: resolution must be even");
  SparseVoxelGrid out;
  out.resolution = grid.resolution / 2;
  out.feature_dim = 0;
  out.keys.reserve(grid.keys.size() / 4 + 1);
  for (uint64_t key : grid.keys) {
    int i, j, k;
    SparseVoxelGrid::unpack(key, i, j, k);
    out.keys.push_back(SparseVoxelGrid::pack(i / 2, j / 2, k / 2));
  }
  std::sort(out.keys.begin(), out.keys.end());
  out.keys.erase(std::unique(out.keys.begin(), out.keys.end()), out.keys.end());
  return out;
}

TrilinearStencil trilinear_stencil(const SparseVoxelGrid& grid, const Vec3& point) {
  const int r = grid.resolution;
  double f[3];
  int base[3];
  for (int a = 0; a < 3; ++a) {
    double g = (point[a] + 0.5) * r;
    int i0 = int(std::floor(g));
    i0 = std::clamp(i0, 0, r - 2);
    base[a] = i0;
    f[a] = g - i0;
  }
  TrilinearStencil st;
  int n = 0;
  for (int dk = 0; dk < 2; ++dk)
    for (int dj = 0; dj < 2; ++dj)
      for (int di = 0; di < 2; ++di) {
        double w = (di ? f[0] : 1 - f[0]) * (dj ? f[1] : 1 - f[1]) * (dk ? f[2] : 1 - f[2]);
        st.index[n] = grid.find(SparseVoxelGrid::pack(base[0] + di, base[1] + dj, base[2] + dk));
        st.weight[n] = w;
        ++n;
      }
  return st;
}

std::vector<double> trilinear_query(const SparseVoxelGrid& grid, const Vec3& point) {
  TrilinearStencil st = trilinear_stencil(grid, point);
  std::vector<double> out(grid.feature_dim, 0.0);
  for (int n = 0; n < 8; ++n) {
    if (st.index[n] < 0) continue;
    const double* f = grid.features.data() + st.index[n] * grid.feature_dim;
    for (int c = 0; c < grid.feature_dim; ++c) out[c] += st.weight[n] * f[c];
  }
  return out;
}

void save_grid(const std::filesystem::path& path, const SparseVoxelGrid& grid) {
  grid.validate();
  atomic_write_file(path, [&](std::ostream& os) {
    write_bytes(os, "SVXG", 4);
    write_u32(os, 1);
    write_u32(os, uint32_t(grid.resolution));
    write_u32(os, uint32_t(grid.feature_dim));
    write_u64(os, grid.keys.size());
    for (size_t n = 0; n < grid.keys.size(); ++n) {
      write_u64(os, grid.keys[n]);
      for (int c = 0; c < grid.feature_dim; ++c)
        write_f32(os, float(grid.features[n * grid.feature_dim + c]));
    }
  });
}

SparseVoxelGrid load_grid(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open grid file: " + path.string());
  char magic[4];
  read_bytes(is, magic, 4, "grid magic");
  if (std::string(magic, 4) != "SVXG") throw Error("bad magic in " + path.string());
  uint32_t version = read_u32(is, "grid version");
  if (version != 1) throw Error("unsupported grid version " + std::to_string(version));
  SparseVoxelGrid g;
  g.resolution = int(read_u32(is, "grid resolution"));
  g.feature_dim = int(read_u32(is, "grid feature_dim"));
  uint64_t count = read_u64(is, "grid count");
  g.keys.resize(count);
  g.features.resize(count * g.feature_dim);
  for (uint64_t n = 0; n < count; ++n) {
    g.keys[n] = read_u64(is, "grid key");
    for (int c = 0; c < g.feature_dim; ++c)
      g.features[n * g.feature_dim + c] = read_f32(is, "grid feature");
  }
  g.validate();
  return g;
}

}  // namespace xgen
