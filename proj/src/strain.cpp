#include "evdm/strain.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "evdm/io.hpp"

namespace evdm {

GreenStrain green_strain(const Mat2& F) {
  // C = F^T F
  const double c11 = F[0][0] * F[0][0] + F[1][0] * F[1][0];
  const double c22 = F[0][1] * F[0][1] + F[1][1] * F[1][1];
  const double c12 = F[0][0] * F[0][1] + F[1][0] * F[1][1];
  return {0.5 * (c11 - 1.0), 0.5 * (c22 - 1.0), 0.5 * c12};
}

double von_mises(const GreenStrain& e) {
  const double v = e.exx * e.exx - e.exx * e.eyy + e.eyy * e.eyy + 3.0 * e.exy * e.exy;
  return std::sqrt(std::max(v, 0.0));
}

namespace {

struct TriangleStrain {
  Mat2 F{};
  Mat2 rest_inv{};  // D_rest^{-1}
  GreenStrain e;
  double vm = 0.0;
  bool capped = false;
};

TriangleStrain triangle_strain(const TriangleVertices& rest, const TriangleVertices& cur) {
  TriangleStrain s;
  const Point2 r1 = rest[1] - rest[0], r2 = rest[2] - rest[0];
  const Point2 d1 = cur[1] - cur[0], d2 = cur[2] - cur[0];
  const double det_r = cross(r1, r2);
  const double det_d = cross(d1, d2);
  if (std::abs(det_r) < kDegenerateArea || std::abs(det_d) < kDegenerateArea) {
    s.vm = kStrainCap;
    s.capped = true;
    return s;
  }
  s.rest_inv = {{{r2.y / det_r, -r2.x / det_r}, {-r1.y / det_r, r1.x / det_r}}};
  // F = D_def * D_rest^{-1}, columns of D are edge vectors.
  const Mat2 D{{{d1.x, d2.x}, {d1.y, d2.y}}};
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) s.F[i][j] = D[i][0] * s.rest_inv[0][j] + D[i][1] * s.rest_inv[1][j];
  }
  s.e = green_strain(s.F);
  s.vm = von_mises(s.e);
  if (!(s.vm <= kStrainCap)) {
    s.vm = kStrainCap;
    s.capped = true;
  }
  return s;
}

double rest_area(const SimplicialMesh& mesh, std::size_t tri) { return std::abs(signed_area(mesh.rest_vertices(tri))); }

}  // namespace

StrainField anchor_strain(const TrajectoryField& tf, double t) {
  const auto& mesh = tf.mesh();
  StrainField f;
  f.t = t;
  f.anchor.assign(mesh.num_anchors(), 0.0);
  f.triangle.resize(mesh.num_triangles());
  f.triangle_vm.resize(mesh.num_triangles());
  std::vector<double> weight(mesh.num_anchors(), 0.0);
  const auto pos = tf.anchor_positions_at(t);
  for (std::size_t j = 0; j < mesh.num_triangles(); ++j) {
    const auto& v = mesh.triangles[j].v;
    const auto s = triangle_strain(mesh.rest_vertices(j), {pos[v[0]], pos[v[1]], pos[v[2]]});
    f.triangle[j] = s.e;
    f.triangle_vm[j] = s.vm;
    f.capped += s.capped ? 1 : 0;
    const double a = rest_area(mesh, j);
    for (int k = 0; k < 3; ++k) {
      f.anchor[v[k]] += a * s.vm;
      weight[v[k]] += a;
    }
  }
  for (std::size_t i = 0; i < f.anchor.size(); ++i) {
    if (weight[i] > 0.0) f.anchor[i] /= weight[i];
  }
  return f;
}

double strain_continuity(const SimplicialMesh& mesh, std::span<const double> S) {
  const auto edges = mesh_edges(mesh);
  if (edges.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& [i, j] : edges) {
    const double d = S[i] - S[j];
    sum += d * d;
  }
  return sum / static_cast<double>(edges.size());
}

double strain_continuity(const TrajectoryField& tf, double t) {
  return strain_continuity(tf.mesh(), anchor_strain(tf, t).anchor);
}

double strain_continuity_grad(const TrajectoryField& tf, double t, std::span<Point2> grad, double scale) {
  const auto& mesh = tf.mesh();
  const std::size_t nt = mesh.num_triangles();
  const auto pos = tf.anchor_positions_at(t);
  std::vector<TriangleStrain> ts(nt);
  std::vector<double> area(nt);
  std::vector<double> S(mesh.num_anchors(), 0.0), W(mesh.num_anchors(), 0.0);
  for (std::size_t j = 0; j < nt; ++j) {
    const auto& v = mesh.triangles[j].v;
    ts[j] = triangle_strain(mesh.rest_vertices(j), {pos[v[0]], pos[v[1]], pos[v[2]]});
    area[j] = rest_area(mesh, j);
    for (int k = 0; k < 3; ++k) {
      S[v[k]] += area[j] * ts[j].vm;
      W[v[k]] += area[j];
    }
  }
  for (std::size_t i = 0; i < S.size(); ++i) {
    if (W[i] > 0.0) S[i] /= W[i];
  }
  const auto edges = mesh_edges(mesh);
  if (edges.empty()) return 0.0;
  const double inv_e = 1.0 / static_cast<double>(edges.size());
  double value = 0.0;
  std::vector<double> dS(S.size(), 0.0);
  for (const auto& [i, j] : edges) {
    const double d = S[i] - S[j];
    value += d * d;
    dS[i] += 2.0 * d * inv_e;
    dS[j] -= 2.0 * d * inv_e;
  }
  value *= inv_e;
  if (grad.empty()) return value;

  const auto [seg, alpha] = tf.grid().segment(t);
  const std::size_t K = tf.num_knots();
  for (std::size_t j = 0; j < nt; ++j) {
    const auto& s = ts[j];
    if (s.capped || s.vm == 0.0) continue;
    const auto& v = mesh.triangles[j].v;
    double dvm = 0.0;
    for (int k = 0; k < 3; ++k) dvm += dS[v[k]] * area[j] / W[v[k]];
    if (dvm == 0.0) continue;
    const double gxx = dvm * (2.0 * s.e.exx - s.e.eyy) / (2.0 * s.vm);
    const double gyy = dvm * (2.0 * s.e.eyy - s.e.exx) / (2.0 * s.vm);
    const double gxy = dvm * 3.0 * s.e.exy / s.vm;
    const Mat2 H{{{gxx, 0.5 * gxy}, {0.5 * gxy, gyy}}};
    Mat2 dF{};
    for (int a = 0; a < 2; ++a) {
      for (int b = 0; b < 2; ++b) dF[a][b] = s.F[a][0] * H[0][b] + s.F[a][1] * H[1][b];
    }
    // dL/dD_def = dL/dF * D_rest^{-T}
    Mat2 dD{};
    for (int a = 0; a < 2; ++a) {
      for (int b = 0; b < 2; ++b) dD[a][b] = dF[a][0] * s.rest_inv[b][0] + dF[a][1] * s.rest_inv[b][1];
    }
    const Point2 gb{dD[0][0], dD[1][0]};
    const Point2 gc{dD[0][1], dD[1][1]};
    const Point2 g[3] = {-1.0 * (gb + gc), gb, gc};
    for (int k = 0; k < 3; ++k) {
      if (alpha != 1.0) grad[v[k] * K + seg] += ((1.0 - alpha) * scale) * g[k];
      if (alpha != 0.0) grad[v[k] * K + seg + 1] += (alpha * scale) * g[k];
    }
  }
  return value;
}

void write_strain_rows(std::ostream& os, const StrainField& field) {
  const std::string t = format_double(field.t);
  for (std::size_t i = 0; i < field.anchor.size(); ++i) {
    os << i << ',' << t << ',' << format_double(field.anchor[i]) << '\n';
  }
}

std::vector<double> rasterize_strain(const TrajectoryField& tf, const StrainField& field, int width, int height) {
  std::vector<double> img(static_cast<std::size_t>(width) * height, 0.0);
  const auto& mesh = tf.mesh();
  const auto pos = tf.anchor_positions_at(field.t);
  for (std::size_t j = 0; j < mesh.num_triangles(); ++j) {
    const auto& v = mesh.triangles[j].v;
    const TriangleVertices tri{pos[v[0]], pos[v[1]], pos[v[2]]};
    if (std::abs(signed_area(tri)) < kDegenerateArea) continue;
    const double xmin = std::min({tri[0].x, tri[1].x, tri[2].x});
    const double xmax = std::max({tri[0].x, tri[1].x, tri[2].x});
    const double ymin = std::min({tri[0].y, tri[1].y, tri[2].y});
    const double ymax = std::max({tri[0].y, tri[1].y, tri[2].y});
    const int x0 = std::max(0, static_cast<int>(std::ceil(xmin)));
    const int x1 = std::min(width - 1, static_cast<int>(std::floor(xmax)));
    const int y0 = std::max(0, static_cast<int>(std::ceil(ymin)));
    const int y1 = std::min(height - 1, static_cast<int>(std::floor(ymax)));
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const Point2 p{static_cast<double>(x), static_cast<double>(y)};
        if (!point_in_triangle(p, tri)) continue;
        const auto w = barycentric_of(p, tri);
        img[static_cast<std::size_t>(y) * width + x] =
            w.l1 * field.anchor[v[0]] + w.l2 * field.anchor[v[1]] + w.l3 * field.anchor[v[2]];
      }
    }
  }
  return img;
}

}  // namespace evdm
