#include "evdm/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "evdm/error.hpp"

namespace evdm {

double norm(Point2 a) { return std::hypot(a.x, a.y); }

TriangleVertices SimplicialMesh::rest_vertices(std::size_t tri) const {
  const auto& t = triangles[tri];
  return {anchors[t.v[0]], anchors[t.v[1]], anchors[t.v[2]]};
}

double signed_side(Point2 a, Point2 b, Point2 p) { return cross(b - a, p - a); }

double signed_area(const TriangleVertices& tri) {
  return 0.5 * cross(tri[1] - tri[0], tri[2] - tri[0]);
}

namespace {

void require_non_degenerate(const TriangleVertices& tri) {
  if (!(std::abs(signed_area(tri)) > kDegenerateArea)) {
    throw Error(ErrorKind::DegenerateTriangle, "triangle area below 1e-9 px^2");
  }
}

}  // namespace

bool point_in_triangle(Point2 p, const TriangleVertices& tri) {
  require_non_degenerate(tri);
  const double c1 = signed_side(tri[0], tri[1], p);
  const double c2 = signed_side(tri[1], tri[2], p);
  const double c3 = signed_side(tri[2], tri[0], p);
  const bool any_neg = c1 < 0.0 || c2 < 0.0 || c3 < 0.0;
  const bool any_pos = c1 > 0.0 || c2 > 0.0 || c3 > 0.0;
  return !(any_neg && any_pos);
}

BarycentricCoords barycentric_of(Point2 p, const TriangleVertices& tri) {
  require_non_degenerate(tri);
  // Cramer's rule on p - V1 = l2 (V2 - V1) + l3 (V3 - V1).
  const Point2 e1 = tri[1] - tri[0];
  const Point2 e2 = tri[2] - tri[0];
  const Point2 r = p - tri[0];
  const double det = cross(e1, e2);
  const double l2 = cross(r, e2) / det;
  const double l3 = cross(e1, r) / det;
  return {1.0 - l2 - l3, l2, l3};
}

Point2 from_barycentric(const BarycentricCoords& w, const TriangleVertices& tri) {
  return {w.l1 * tri[0].x + w.l2 * tri[1].x + w.l3 * tri[2].x,
          w.l1 * tri[0].y + w.l2 * tri[1].y + w.l3 * tri[2].y};
}

AffineMap affine_from_triangles(const TriangleVertices& rest, const TriangleVertices& deformed) {
  require_non_degenerate(rest);
  // A = D_def * D_rest^-1 with edge matrices D = [V2 - V1, V3 - V1].
  const Point2 r1 = rest[1] - rest[0];
  const Point2 r2 = rest[2] - rest[0];
  const Point2 d1 = deformed[1] - deformed[0];
  const Point2 d2 = deformed[2] - deformed[0];
  const double det = cross(r1, r2);
  const double inv[2][2] = {{r2.y / det, -r2.x / det}, {-r1.y / det, r1.x / det}};
  AffineMap m;
  m.A[0][0] = d1.x * inv[0][0] + d2.x * inv[1][0];
  m.A[0][1] = d1.x * inv[0][1] + d2.x * inv[1][1];
  m.A[1][0] = d1.y * inv[0][0] + d2.y * inv[1][0];
  m.A[1][1] = d1.y * inv[0][1] + d2.y * inv[1][1];
  m.b = {deformed[0].x - (m.A[0][0] * rest[0].x + m.A[0][1] * rest[0].y),
         deformed[0].y - (m.A[1][0] * rest[0].x + m.A[1][1] * rest[0].y)};
  return m;
}

SimplicialMesh make_grid_mesh(const Roi& roi, int cols, int rows) {
  if (cols < 1 || rows < 1 || !(roi.width() > 0.0) || !(roi.height() > 0.0)) {
    throw Error(ErrorKind::InvalidConfig, "grid mesh needs a non-empty ROI and at least 1x1 cells");
  }
  SimplicialMesh mesh;
  const double dx = roi.width() / cols;
  const double dy = roi.height() / rows;
  for (int j = 0; j <= rows; ++j) {
    for (int i = 0; i <= cols; ++i) {
      mesh.anchors.push_back({roi.x0 + i * dx, roi.y0 + j * dy});
    }
  }
  auto id = [cols](int i, int j) { return j * (cols + 1) + i; };
  for (int j = 0; j < rows; ++j) {
    for (int i = 0; i < cols; ++i) {
      mesh.triangles.push_back({{id(i, j), id(i + 1, j), id(i + 1, j + 1)}});
      mesh.triangles.push_back({{id(i, j), id(i + 1, j + 1), id(i, j + 1)}});
    }
  }
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    if (signed_area(mesh.rest_vertices(t)) < 0.0) {
      std::swap(mesh.triangles[t].v[1], mesh.triangles[t].v[2]);
    }
  }
  mesh.parent_map.assign(mesh.triangles.size(), -1);
  mesh.anchor_level.assign(mesh.anchors.size(), 0);
  mesh.anchor_parents.assign(mesh.anchors.size(), {-1, -1});
  return mesh;
}

SimplicialMesh subdivide(const SimplicialMesh& mesh) {
  SimplicialMesh out;
  out.anchors = mesh.anchors;
  out.anchor_level = mesh.anchor_level;
  out.anchor_parents = mesh.anchor_parents;
  out.level = mesh.level + 1;

  std::map<std::pair<int, int>, int> midpoint_of;
  auto midpoint = [&](int a, int b) {
    const std::pair<int, int> key = std::minmax(a, b);
    auto it = midpoint_of.find(key);
    if (it != midpoint_of.end()) return it->second;
    const int idx = static_cast<int>(out.anchors.size());
    out.anchors.push_back(0.5 * (mesh.anchors[a] + mesh.anchors[b]));
    out.anchor_level.push_back(out.level);
    out.anchor_parents.push_back(key);
    midpoint_of.emplace(key, idx);
    return idx;
  };

  out.triangles.reserve(4 * mesh.triangles.size());
  out.parent_map.reserve(4 * mesh.triangles.size());
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    const auto [v1, v2, v3] = mesh.triangles[t].v;
    const int m1 = midpoint(v1, v2);
    const int m2 = midpoint(v2, v3);
    const int m3 = midpoint(v3, v1);
    const int parent = static_cast<int>(t);
    for (const Triangle& child : {Triangle{{v1, m1, m3}}, Triangle{{v2, m2, m1}},
                                  Triangle{{v3, m3, m2}}, Triangle{{m1, m2, m3}}}) {
      out.triangles.push_back(child);
      out.parent_map.push_back(parent);
    }
  }
  return out;
}

std::vector<std::pair<int, int>> mesh_edges(const SimplicialMesh& mesh) {
  std::vector<std::pair<int, int>> edges;
  edges.reserve(3 * mesh.triangles.size());
  for (const auto& t : mesh.triangles) {
    for (int k = 0; k < 3; ++k) {
      edges.push_back(std::minmax(t.v[k], t.v[(k + 1) % 3]));
    }
  }
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  return edges;
}

std::vector<std::vector<int>> incident_triangles(const SimplicialMesh& mesh) {
  std::vector<std::vector<int>> inc(mesh.anchors.size());
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    for (int v : mesh.triangles[t].v) inc[v].push_back(static_cast<int>(t));
  }
  return inc;
}

std::vector<Point2> grid_points(const Roi& roi, double spacing) {
  std::vector<Point2> pts;
  const int nx = static_cast<int>(std::floor(roi.width() / spacing + 1e-9));
  const int ny = static_cast<int>(std::floor(roi.height() / spacing + 1e-9));
  for (int j = 0; j <= ny; ++j) {
    for (int i = 0; i <= nx; ++i) pts.push_back({roi.x0 + i * spacing, roi.y0 + j * spacing});
  }
  return pts;
}

}  // namespace evdm
