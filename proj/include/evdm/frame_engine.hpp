#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <vector>

#include "evdm/trajectory.hpp"

namespace evdm {

/// Grayscale frame, intensities in [0, 1], row-major.
struct Frame {
  int width = 0;
  int height = 0;
  std::vector<double> pixels;
  double t = 0.0;

  double at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
  bool contains(Point2 p) const { return p.x >= 0.0 && p.y >= 0.0 && p.x <= width - 1 && p.y <= height - 1; }
};

/// Uniform barycentric samples (i/n, j/n, 1 - (i+j)/n), i + j <= n,
/// ordered lexicographically by (i, j).
struct SampleGrid {
  int n = 0;
  std::vector<std::array<double, 3>> bary;
};

SampleGrid sample_grid(int n);

double bilinear_sample(const Frame& frame, Point2 p);

/// Zero-mean normalized cross-correlation of two equally sized vectors.
double zncc(std::span<const double> s1, std::span<const double> s2);

inline constexpr double kZeroVarianceSigma = 1e-12;
inline constexpr std::size_t kMinValidSamples = 6;

/// Sample coordinates u*V1 + v*V2 + w*V3 for every grid triple.
std::vector<Point2> sample_points(const TriangleVertices& tri, const SampleGrid& grid);

/// The three frames one window is matched against.
struct FrameSet {
  const Frame* initial = nullptr;   // I_0, sampled at rest anchors
  const Frame* previous = nullptr;  // I_{i-1}
  const Frame* current = nullptr;   // I_i
};

struct FrameObjectiveValue {
  double value = 0.0;
  int valid_triangles = 0;
  int textureless = 0;  // excluded because a sample vector had zero variance
  int undersampled = 0; // excluded because fewer than 6 samples were inside
};

/// Mean over usable triangles of zncc(cur, prev) + zncc(cur, init). When
/// `grad` is non-empty, accumulates scale * d(value)/d(positions).
/// Throws NoTexture when no triangle is usable.
FrameObjectiveValue frame_objective(const TrajectoryField& tf, const FrameSet& frames, const SampleGrid& grid,
                                    std::span<Point2> grad = {}, double scale = 1.0);

Frame load_frame_pgm(const std::filesystem::path& path, double t);
void save_frame_pgm(const std::filesystem::path& path, const Frame& frame);

struct ManifestEntry {
  int frame_index = 0;
  double t = 0.0;
  std::filesystem::path path;  // resolved against the manifest directory
};

inline constexpr const char* kManifestHeader = "frame_index,t,path";
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);

}  // namespace evdm
