#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace podminn {

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

/// Uniform triangulation of the square (-1,1)^2 built from a
/// cells_per_side x cells_per_side grid. Nodes are ordered row-major by
/// (y, x) grid index: node(ix, iy) = iy*(cells_per_side+1) + ix. Every grid
/// cell is split along the lower-left to upper-right diagonal, giving two
/// counterclockwise triangles per cell. Meshes are immutable after
/// construction and safe to share across threads.
struct StructuredTriMesh {
  int cells_per_side = 0;
  std::vector<Point2> nodes;
  std::vector<std::array<int, 3>> triangles;
  std::vector<std::uint8_t> boundary_mask;
  std::array<double, 4> domain_bounds{-1.0, 1.0, -1.0, 1.0};  // xmin,xmax,ymin,ymax

  int node_count() const { return static_cast<int>(nodes.size()); }
  int nodes_per_side() const { return cells_per_side + 1; }
  int node_index(int ix, int iy) const { return iy * nodes_per_side() + ix; }
};

inline StructuredTriMesh build_unit_square_mesh(int cells_per_side) {
  if (cells_per_side < 1)
    throw std::invalid_argument("build_unit_square_mesh: cells_per_side must be >= 1");

  StructuredTriMesh mesh;
  mesh.cells_per_side = cells_per_side;
  const int n = cells_per_side + 1;
  const double xmin = mesh.domain_bounds[0];
  const double ymin = mesh.domain_bounds[2];
  const double hx = (mesh.domain_bounds[1] - xmin) / cells_per_side;
  const double hy = (mesh.domain_bounds[3] - ymin) / cells_per_side;

  mesh.nodes.resize(static_cast<std::size_t>(n) * n);
  mesh.boundary_mask.resize(mesh.nodes.size());
  for (int iy = 0; iy < n; ++iy) {
    for (int ix = 0; ix < n; ++ix) {
      const int id = mesh.node_index(ix, iy);
      mesh.nodes[id] = {xmin + ix * hx, ymin + iy * hy};
      mesh.boundary_mask[id] =
          (ix == 0 || ix == cells_per_side || iy == 0 || iy == cells_per_side) ? 1 : 0;
    }
  }

  mesh.triangles.reserve(2u * cells_per_side * cells_per_side);
  for (int iy = 0; iy < cells_per_side; ++iy) {
    for (int ix = 0; ix < cells_per_side; ++ix) {
      const int a = mesh.node_index(ix, iy);
      const int b = mesh.node_index(ix + 1, iy);
      const int c = mesh.node_index(ix, iy + 1);
      const int d = mesh.node_index(ix + 1, iy + 1);
      mesh.triangles.push_back({a, b, d});
      mesh.triangles.push_back({a, d, c});
    }
  }
  return mesh;
}

/// Node coordinates in mesh order (row-major by (y, x) grid index).
inline const std::vector<Point2>& node_coordinates(const StructuredTriMesh& mesh) {
  return mesh.nodes;
}

inline double triangle_signed_area(const StructuredTriMesh& mesh, int t) {
  const auto& tri = mesh.triangles[t];
  const Point2& p0 = mesh.nodes[tri[0]];
  const Point2& p1 = mesh.nodes[tri[1]];
  const Point2& p2 = mesh.nodes[tri[2]];
  return 0.5 * ((p1.x - p0.x) * (p2.y - p0.y) - (p2.x - p0.x) * (p1.y - p0.y));
}

}  // namespace podminn
