#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <utility>
#include <vector>

namespace evdm {

struct Point2 {
  double x = 0.0;
  double y = 0.0;

  friend constexpr Point2 operator+(Point2 a, Point2 b) { return {a.x + b.x, a.y + b.y}; }
  friend constexpr Point2 operator-(Point2 a, Point2 b) { return {a.x - b.x, a.y - b.y}; }
  friend constexpr Point2 operator*(double s, Point2 a) { return {s * a.x, s * a.y}; }
  friend constexpr Point2 operator*(Point2 a, double s) { return {s * a.x, s * a.y}; }
  Point2& operator+=(Point2 o) {
    x += o.x;
    y += o.y;
    return *this;
  }
  Point2& operator-=(Point2 o) {
    x -= o.x;
    y -= o.y;
    return *this;
  }
  friend constexpr bool operator==(Point2, Point2) = default;
};

constexpr double cross(Point2 a, Point2 b) { return a.x * b.y - a.y * b.x; }
constexpr double dot(Point2 a, Point2 b) { return a.x * b.x + a.y * b.y; }
double norm(Point2 a);

using TriangleVertices = std::array<Point2, 3>;

struct Triangle {
  std::array<int, 3> v{};
};

struct BarycentricCoords {
  double l1 = 0.0;
  double l2 = 0.0;
  double l3 = 0.0;

  double operator[](std::size_t i) const { return i == 0 ? l1 : (i == 1 ? l2 : l3); }
};

// x -> A x + b
struct AffineMap {
  std::array<std::array<double, 2>, 2> A{{{1.0, 0.0}, {0.0, 1.0}}};
  Point2 b{};

  Point2 apply(Point2 p) const {
    return {A[0][0] * p.x + A[0][1] * p.y + b.x, A[1][0] * p.x + A[1][1] * p.y + b.y};
  }
};

// Axis-aligned region of interest in pixel coordinates, [x0, x1] x [y0, y1].
struct Roi {
  double x0 = 0.0;
  double y0 = 0.0;
  double x1 = 0.0;
  double y1 = 0.0;

  double width() const { return x1 - x0; }
  double height() const { return y1 - y0; }
  Point2 center() const { return {0.5 * (x0 + x1), 0.5 * (y0 + y1)}; }
};

inline constexpr double kDegenerateArea = 1e-9;

/// Conforming triangulation of the ROI. Anchors are rest positions; anchors
/// created by subdivision remember the edge they split so that any per-anchor
/// quantity can be prolonged from a coarser level.
struct SimplicialMesh {
  std::vector<Point2> anchors;
  std::vector<Triangle> triangles;
  int level = 0;
  /// parent_map[child] = index of the parent triangle in the previous level,
  /// -1 for triangles of the initial mesh.
  std::vector<int> parent_map;
  /// Subdivision level at which each anchor was created.
  std::vector<int> anchor_level;
  /// Edge endpoints for anchors created as midpoints, {-1, -1} otherwise.
  std::vector<std::pair<int, int>> anchor_parents;

  std::size_t num_anchors() const { return anchors.size(); }
  std::size_t num_triangles() const { return triangles.size(); }
  TriangleVertices rest_vertices(std::size_t tri) const;
};

/// Determinant (b - a) x (p - a). Positive when p lies left of the directed
/// edge a -> b (counter-clockwise sense).
double signed_side(Point2 a, Point2 b, Point2 p);

double signed_area(const TriangleVertices& tri);

/// Same-side test. Points on an edge or vertex count as inside.
bool point_in_triangle(Point2 p, const TriangleVertices& tri);

BarycentricCoords barycentric_of(Point2 p, const TriangleVertices& tri);

Point2 from_barycentric(const BarycentricCoords& w, const TriangleVertices& tri);

/// Unique affine map taking each rest vertex onto its deformed counterpart.
AffineMap affine_from_triangles(const TriangleVertices& rest, const TriangleVertices& deformed);

/// Regular right-triangle grid over `roi` with `cols` x `rows` cells, two
/// counter-clockwise triangles per cell.
SimplicialMesh make_grid_mesh(const Roi& roi, int cols, int rows);

/// 1 -> 4 midpoint subdivision with shared midpoints deduplicated.
SimplicialMesh subdivide(const SimplicialMesh& mesh);

/// Unique undirected edges, each as (smaller index, larger index), sorted.
std::vector<std::pair<int, int>> mesh_edges(const SimplicialMesh& mesh);

/// For every anchor, the triangles that use it.
std::vector<std::vector<int>> incident_triangles(const SimplicialMesh& mesh);

/// Points (x0 + i h, y0 + j h) inside the ROI, row by row.
std::vector<Point2> grid_points(const Roi& roi, double spacing);

}  // namespace evdm
