#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "evdm/event_engine.hpp"
#include "evdm/frame_engine.hpp"
#include "evdm/io.hpp"

namespace evdm {

enum class DeformationFamily { Translate, Rotate, AffineStretch, SinusoidalBend, RadialSqueeze };

std::string_view to_string(DeformationFamily f);
DeformationFamily parse_family(std::string_view s);

/// Synthetic scene: a speckle-textured plane deformed by an analytic field
/// that ramps linearly from zero at t = 0 to full amplitude at `duration`.
struct SceneSpec {
  int width = 128;
  int height = 128;
  double speckle_density = 0.08;  // blobs per px^2
  double speckle_radius = 1.5;    // px
  DeformationFamily family = DeformationFamily::Translate;
  double amplitude = 10.0;        // px, peak displacement of the family
  double direction_deg = 0.0;     // translate direction
  double rotation_deg = 0.0;      // rotate family, total angle
  double drift_x = 0.0;           // extra translation added to any family, px
  double drift_y = 0.0;
  double duration = 2.0;          // s
  double frame_rate = 5.0;        // Hz
  double threshold = 0.2;         // log units
  double refractory = 1e-3;       // s
  double noise_rate = 0.0;        // events / px / s
  int fine_factor = 20;           // event time steps per frame interval
  std::uint64_t seed = 1;
  Roi roi{};                      // defaults to the central half of the image
  double gt_spacing = 4.0;        // px between ground-truth query points

  /// Fills the default ROI and checks invariants; throws InvalidConfig.
  void validate();
  int num_frames() const;
  double frame_time(int i) const;
};

SceneSpec scene_from_config(const FlatConfig& cfg);
FlatConfig scene_to_config(const SceneSpec& spec);

/// Rest-frame speckle texture rasterized on an oversampled grid.
class SpeckleTexture {
 public:
  explicit SpeckleTexture(const SceneSpec& spec);
  /// Intensity at rest-frame point X; 0.5 outside the textured plane.
  double sample(Point2 X) const;

 private:
  int width_ = 0, height_ = 0, over_ = 4;
  int tw_ = 0, th_ = 0;
  std::vector<double> texels_;
};

/// u_gt(X, t) for the rest-frame point X.
Point2 gt_displacement(const SceneSpec& spec, Point2 X, double t);
/// Rest point X with X + u_gt(X, t) = x.
Point2 gt_inverse(const SceneSpec& spec, Point2 x, double t);

Frame render_frame(const SceneSpec& spec, const SpeckleTexture& texture, double t);
Frame render_frame(const SceneSpec& spec, double t);

/// Events of the log-brightness threshold model, time sorted.
std::vector<Event> generate_events(const SceneSpec& spec, const SpeckleTexture& texture);
std::vector<Event> generate_events(const SceneSpec& spec);

/// Uniform query grid inside the ROI.
std::vector<Point2> gt_query_points(const SceneSpec& spec);

struct SequencePaths {
  std::filesystem::path manifest, events, ground_truth, spec, tracker_config;
};

/// Writes frames/*.pgm, frames.csv, events.csv, gt.csv, spec.cfg and a
/// tracker.cfg carrying the ROI.
SequencePaths make_sequence(SceneSpec spec, const std::filesystem::path& out_dir);

}  // namespace evdm
