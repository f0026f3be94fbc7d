#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "xgen/mesh_io.hpp"

namespace xgen {

// Vertex-centered sparse voxel grid: keys (i,j,k) in [0,R)^3 address grid
// vertices at position -0.5 + i/R per axis; cell size is 1/R. Entries are kept
// sorted by packed key so iteration order (and therefore training) is
// deterministic. feature_dim == 0 means a key-only occupancy set.
struct SparseVoxelGrid {
  int resolution = 0;
  int feature_dim = 0;
  std::vector<uint64_t> keys;     // sorted, packed 3x21 bit
  std::vector<double> features;   // count * feature_dim, row per key

  static uint64_t pack(int i, int j, int k) {
    return (uint64_t(i) & 0x1fffff) | (uint64_t(j) & 0x1fffff) << 21 |
           (uint64_t(k) & 0x1fffff) << 42;
  }
  static void unpack(uint64_t key, int& i, int& j, int& k) {
    i = int(key & 0x1fffff);
    j = int((key >> 21) & 0x1fffff);
    k = int((key >> 42) & 0x1fffff);
  }

  double cell_size() const { return 1.0 / resolution; }
  size_t count() const { return keys.size(); }
  Vec3 vertex_position(uint64_t key) const {
    int i, j, k;
    unpack(key, i, j, k);
    double h = cell_size();
    return {-0.5 + i * h, -0.5 + j * h, -0.5 + k * h};
  }

  // index of key, or -1
  int64_t find(uint64_t key) const;
  std::span<const double> feature(size_t index) const {
    return {features.data() + index * feature_dim, size_t(feature_dim)};
  }
  bool contains(int i, int j, int k) const {
    if (i < 0 || j < 0 || k < 0 || i >= resolution || j >= resolution || k >= resolution)
      return false;
    return find(pack(i, j, k)) >= 0;
  }
  void validate() const;  // key range, sortedness, feature size

  // Build from unsorted (key, feature) pairs; duplicate keys rejected.
  static SparseVoxelGrid from_entries(int resolution, int feature_dim,
                                      std::vector<std::pair<uint64_t, std::vector<double>>> entries);
};

struct GridPyramid {
  std::vector<SparseVoxelGrid> levels;  // finest first, resolutions halving
  void validate() const;
};

// Snap points to their containing grid vertex. Points sharing a vertex are
// averaged; features are 6 channels: offset from the vertex in cell units
// (each component in [-0.5, 0.5]) followed by the averaged unit normal. When
// averaging cancels the normals (norm < 1e-3), the voxel keeps the normal of
// its first point (lowest input index).
SparseVoxelGrid quantize(const OrientedPointCloud& cloud, int resolution);

// Key-only parent grid: parent occupied iff any of its 8 children is.
SparseVoxelGrid downsample_keys(const SparseVoxelGrid& grid);

// Trilinear blend of the 8 surrounding vertex features. Unoccupied vertices
// contribute zero with their weights retained (no renormalization).
std::vector<double> trilinear_query(const SparseVoxelGrid& grid, const Vec3& point);

// Precomputed stencil for differentiable gathering: indices into the grid's
// entry array (-1 when unoccupied) and the 8 trilinear weights.
struct TrilinearStencil {
  int64_t index[8];
  double weight[8];
};
TrilinearStencil trilinear_stencil(const SparseVoxelGrid& grid, const Vec3& point);

// versioned "SVXG" binary, little-endian, f32 features
void save_grid(const std::filesystem::path& path, const SparseVoxelGrid& grid);
SparseVoxelGrid load_grid(const std::filesystem::path& path);

}  // namespace xgen
