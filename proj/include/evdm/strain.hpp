#pragma once

#include <array>
#include <iosfwd>
#include <span>
#include <vector>

#include "evdm/trajectory.hpp"

namespace evdm {

using Mat2 = std::array<std::array<double, 2>, 2>;

struct GreenStrain {
  double exx = 0.0;
  double eyy = 0.0;
  double exy = 0.0;
};

/// E = 1/2 (F^T F - I).
GreenStrain green_strain(const Mat2& F);

/// sqrt(exx^2 - exx eyy + eyy^2 + 3 exy^2).
double von_mises(const GreenStrain& e);

inline constexpr double kStrainCap = 10.0;

struct StrainField {
  double t = 0.0;
  std::vector<double> anchor;          // S_i
  std::vector<GreenStrain> triangle;   // per-triangle tensor
  std::vector<double> triangle_vm;     // per-triangle von Mises, capped
  int capped = 0;                      // triangles clamped to kStrainCap
};

/// Per-triangle strain of the deformation rest -> positions at t; anchor
/// values are rest-area weighted means over incident triangles.
StrainField anchor_strain(const TrajectoryField& tf, double t);

/// Mean over unique mesh edges of (S_i - S_j)^2.
double strain_continuity(const SimplicialMesh& mesh, std::span<const double> anchor_strain);
double strain_continuity(const TrajectoryField& tf, double t);

/// strain_continuity(tf, t), accumulating scale * d/d(positions) into grad.
/// Capped triangles contribute no gradient.
double strain_continuity_grad(const TrajectoryField& tf, double t, std::span<Point2> grad, double scale);

inline constexpr const char* kStrainHeader = "anchor,t,S";
/// Rows of `anchor,t,S` (no header).
void write_strain_rows(std::ostream& os, const StrainField& field);

/// Heat map of S interpolated barycentrically over the mesh deformed to t.
/// Pixels outside the mesh are 0.
std::vector<double> rasterize_strain(const TrajectoryField& tf, const StrainField& field, int width, int height);

}  // namespace evdm
