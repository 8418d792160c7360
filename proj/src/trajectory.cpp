#include "evdm/trajectory.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "evdm/error.hpp"
#include "evdm/io.hpp"

namespace evdm {

TimeGrid::TimeGrid(std::vector<double> knots) : knots_(std::move(knots)) {
  if (knots_.size() < 2) throw Error(ErrorKind::InvalidConfig, "time grid needs at least two knots");
  for (std::size_t i = 1; i < knots_.size(); ++i) {
    if (!(knots_[i] > knots_[i - 1])) {
      throw Error(ErrorKind::InvalidConfig, "time grid knots must be strictly increasing");
    }
  }
}

std::pair<std::size_t, double> TimeGrid::segment(double t) const {
  if (!contains(t)) throw Error(ErrorKind::TimeOutOfWindow, "t=" + format_double(t));
  if (t == knots_.back()) return {knots_.size() - 2, 1.0};
  const auto it = std::upper_bound(knots_.begin(), knots_.end(), t);
  const std::size_t i = static_cast<std::size_t>(it - knots_.begin()) - 1;
  if (t == knots_[i]) return {i, 0.0};
  return {i, (t - knots_[i]) / (knots_[i + 1] - knots_[i])};
}

TrajectoryField::TrajectoryField(SimplicialMesh mesh, TimeGrid grid)
    : mesh_(std::move(mesh)), grid_(std::move(grid)) {
  positions_.resize(mesh_.anchors.size() * grid_.size());
  for (std::size_t a = 0; a < mesh_.anchors.size(); ++a) {
    for (std::size_t k = 0; k < grid_.size(); ++k) at(a, k) = mesh_.anchors[a];
  }
}

TrajectoryField::TrajectoryField(SimplicialMesh mesh, TimeGrid grid, std::vector<Point2> positions)
    : mesh_(std::move(mesh)), grid_(std::move(grid)), positions_(std::move(positions)) {
  if (positions_.size() != mesh_.anchors.size() * grid_.size()) {
    throw Error(ErrorKind::InvalidConfig, "trajectory positions do not match anchors x knots");
  }
}

Point2 TrajectoryField::position_at(std::size_t anchor, double t) const {
  const auto [i, a] = grid_.segment(t);
  if (a == 0.0) return at(anchor, i);
  if (a == 1.0) return at(anchor, i + 1);
  return (1.0 - a) * at(anchor, i) + a * at(anchor, i + 1);
}

std::vector<Point2> TrajectoryField::anchor_positions_at(double t) const {
  std::vector<Point2> out(num_anchors());
  for (std::size_t a = 0; a < out.size(); ++a) out[a] = position_at(a, t);
  return out;
}

std::vector<Point2> TrajectoryField::knot_positions(std::size_t knot) const {
  std::vector<Point2> out(num_anchors());
  for (std::size_t a = 0; a < out.size(); ++a) out[a] = at(a, knot);
  return out;
}

TriangleVertices TrajectoryField::vertices_at(std::size_t tri, double t) const {
  const auto& v = mesh_.triangles[tri].v;
  return {position_at(v[0], t), position_at(v[1], t), position_at(v[2], t)};
}

std::optional<Association> locate(const SimplicialMesh& mesh, std::span<const Point2> vertex_positions,
                                  Point2 p) {
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    const auto& v = mesh.triangles[t].v;
    const TriangleVertices tri{vertex_positions[v[0]], vertex_positions[v[1]], vertex_positions[v[2]]};
    if (!(std::abs(signed_area(tri)) > kDegenerateArea)) continue;
    if (point_in_triangle(p, tri)) return Association{static_cast<int>(t), barycentric_of(p, tri)};
  }
  return std::nullopt;
}

Association locate_and_weights(const TrajectoryField& tf, Point2 p, double t) {
  const auto pos = tf.anchor_positions_at(t);
  auto found = locate(tf.mesh(), pos, p);
  if (!found) {
    throw Error(ErrorKind::OutsideMesh, "(" + format_double(p.x) + ", " + format_double(p.y) + ")");
  }
  return *found;
}

Point2 warp_point(const TrajectoryField& tf, int tri, const BarycentricCoords& w, double t_ref) {
  return from_barycentric(w, tf.vertices_at(static_cast<std::size_t>(tri), t_ref));
}

std::vector<Point2> displacement_field(const TrajectoryField& tf, std::span<const Point2> query, double t) {
  const auto pos = tf.anchor_positions_at(t);
  std::vector<Point2> out;
  out.reserve(query.size());
  for (const Point2& X : query) {
    auto found = locate(tf.mesh(), tf.mesh().anchors, X);
    if (!found) {
      throw Error(ErrorKind::OutsideMesh, "(" + format_double(X.x) + ", " + format_double(X.y) + ")");
    }
    const auto& v = tf.mesh().triangles[found->triangle].v;
    const Point2 x = from_barycentric(found->weights, {pos[v[0]], pos[v[1]], pos[v[2]]});
    out.push_back(x - X);
  }
  return out;
}

TrajectoryField static_field(SimplicialMesh mesh, TimeGrid grid) {
  return TrajectoryField(std::move(mesh), std::move(grid));
}

TrajectoryField handoff(const TrajectoryField& prev, TimeGrid grid, bool extrapolate) {
  const std::size_t last = prev.num_knots() - 1;
  const double span = prev.grid().back() - prev.grid().front();
  TrajectoryField next(prev.mesh(), std::move(grid));
  const double t0 = next.grid().front();
  for (std::size_t a = 0; a < prev.num_anchors(); ++a) {
    const Point2 start = prev.at(a, last);
    const Point2 velocity = extrapolate ? (1.0 / span) * (prev.at(a, last) - prev.at(a, 0)) : Point2{};
    next.at(a, 0) = start;
    for (std::size_t k = 1; k < next.num_knots(); ++k) {
      next.at(a, k) = start + (next.grid()[k] - t0) * velocity;
    }
  }
  return next;
}

TrajectoryField subdivide_field(const TrajectoryField& tf) {
  SimplicialMesh fine = subdivide(tf.mesh());
  const std::size_t knots = tf.num_knots();
  std::vector<Point2> pos(fine.anchors.size() * knots);
  for (std::size_t a = 0; a < tf.num_anchors(); ++a) {
    for (std::size_t k = 0; k < knots; ++k) pos[a * knots + k] = tf.at(a, k);
  }
  for (std::size_t a = tf.num_anchors(); a < fine.anchors.size(); ++a) {
    const auto [p, q] = fine.anchor_parents[a];
    for (std::size_t k = 0; k < knots; ++k) {
      pos[a * knots + k] = 0.5 * (pos[p * knots + k] + pos[q * knots + k]);
    }
  }
  return TrajectoryField(std::move(fine), tf.grid(), std::move(pos));
}

void prolongate(const SimplicialMesh& mesh, int level, std::span<Point2> per_anchor) {
  for (std::size_t a = 0; a < mesh.anchors.size(); ++a) {
    if (mesh.anchor_level[a] <= level) continue;
    const auto [p, q] = mesh.anchor_parents[a];
    per_anchor[a] = 0.5 * (per_anchor[p] + per_anchor[q]);
  }
}

void restrict_to_level(const SimplicialMesh& mesh, int level, std::span<Point2> per_anchor) {
  for (std::size_t a = mesh.anchors.size(); a-- > 0;) {
    if (mesh.anchor_level[a] <= level) continue;
    const auto [p, q] = mesh.anchor_parents[a];
    per_anchor[p] += 0.5 * per_anchor[a];
    per_anchor[q] += 0.5 * per_anchor[a];
    per_anchor[a] = {};
  }
}

void write_trajectory_rows(std::ostream& os, int window, const TrajectoryField& tf) {
  for (std::size_t a = 0; a < tf.num_anchors(); ++a) {
    for (std::size_t k = 0; k < tf.num_knots(); ++k) {
      const Point2 p = tf.at(a, k);
      os << window << ',' << a << ',' << k << ',' << format_double(tf.grid()[k]) << ','
         << format_double(p.x) << ',' << format_double(p.y) << '\n';
    }
  }
}

}  // namespace evdm
