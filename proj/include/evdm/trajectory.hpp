#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "evdm/geometry.hpp"

namespace evdm {

/// Strictly increasing knot timestamps (seconds) of one window.
class TimeGrid {
 public:
  TimeGrid() = default;
  explicit TimeGrid(std::vector<double> knots);

  const std::vector<double>& knots() const { return knots_; }
  std::size_t size() const { return knots_.size(); }
  double front() const { return knots_.front(); }
  double back() const { return knots_.back(); }
  double operator[](std::size_t i) const { return knots_[i]; }
  bool contains(double t) const { return !knots_.empty() && t >= knots_.front() && t <= knots_.back(); }

  /// Segment index i and fraction a so that t = (1 - a) knot_i + a knot_{i+1}.
  /// Knot times map to a = 0 except the last knot, which maps to the final
  /// segment with a = 1.
  std::pair<std::size_t, double> segment(double t) const;

 private:
  std::vector<double> knots_;
};

struct Association {
  int triangle = -1;
  BarycentricCoords weights{};
};

/// Piecewise-linear anchor trajectories over a window. Positions are stored
/// anchor-major: position(anchor, knot) = positions[anchor * knots + knot].
class TrajectoryField {
 public:
  TrajectoryField() = default;
  TrajectoryField(SimplicialMesh mesh, TimeGrid grid);
  TrajectoryField(SimplicialMesh mesh, TimeGrid grid, std::vector<Point2> positions);

  const SimplicialMesh& mesh() const { return mesh_; }
  const TimeGrid& grid() const { return grid_; }
  std::size_t num_anchors() const { return mesh_.anchors.size(); }
  std::size_t num_knots() const { return grid_.size(); }

  Point2& at(std::size_t anchor, std::size_t knot) { return positions_[anchor * grid_.size() + knot]; }
  Point2 at(std::size_t anchor, std::size_t knot) const { return positions_[anchor * grid_.size() + knot]; }
  std::span<Point2> positions() { return positions_; }
  std::span<const Point2> positions() const { return positions_; }

  /// Linear interpolation between bracketing knots; exact at knots.
  Point2 position_at(std::size_t anchor, double t) const;
  std::vector<Point2> anchor_positions_at(double t) const;
  std::vector<Point2> knot_positions(std::size_t knot) const;
  TriangleVertices vertices_at(std::size_t tri, double t) const;

 private:
  SimplicialMesh mesh_;
  TimeGrid grid_;
  std::vector<Point2> positions_;
};

/// First triangle in index order that contains p given per-anchor vertex
/// positions; degenerate triangles are skipped.
std::optional<Association> locate(const SimplicialMesh& mesh, std::span<const Point2> vertex_positions,
                                  Point2 p);

Association locate_and_weights(const TrajectoryField& tf, Point2 p, double t);

Point2 warp_point(const TrajectoryField& tf, int tri, const BarycentricCoords& w, double t_ref);

/// u(X, t) for rest-frame query points, associated against the rest mesh.
std::vector<Point2> displacement_field(const TrajectoryField& tf, std::span<const Point2> query, double t);

/// Field with every anchor parked at its rest position for all knots.
TrajectoryField static_field(SimplicialMesh mesh, TimeGrid grid);

/// Field starting where `prev` ended. Knot 0 copies the last knot of `prev`
/// bit-exactly; later knots extrapolate each anchor's mean velocity over
/// `prev` when `extrapolate` is set, and hold still otherwise.
TrajectoryField handoff(const TrajectoryField& prev, TimeGrid grid, bool extrapolate);

/// Subdivides the mesh and places new anchors on edge midpoints at every knot.
TrajectoryField subdivide_field(const TrajectoryField& tf);

/// Copies values of anchors created after `level` from their parent edge
/// midpoints, in creation order. Works on any per-anchor array.
void prolongate(const SimplicialMesh& mesh, int level, std::span<Point2> per_anchor);

/// Adjoint of `prolongate`: folds values of anchors created after `level`
/// onto their parents and zeroes them.
void restrict_to_level(const SimplicialMesh& mesh, int level, std::span<Point2> per_anchor);

/// Writes rows of `window,anchor,knot,t,x,y` (no header).
void write_trajectory_rows(std::ostream& os, int window, const TrajectoryField& tf);
inline constexpr const char* kTrajectoryHeader = "window,anchor,knot,t,x,y";

}  // namespace evdm
