#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "evdm/event_engine.hpp"
#include "evdm/frame_engine.hpp"
#include "evdm/io.hpp"

namespace evdm {

/// Tracker settings. Every field can be set from a flat config file whose
/// keys are exactly the field names below.
struct TrackerConfig {
  int M = 4;  // bins per window
  int max_levels = 1;
  double lambda1_rigid = 1.0, lambda2_rigid = 0.2;
  double lambda1_coarse = 1.0, lambda2_coarse = 0.5;
  double lambda1_fine = 0.5, lambda2_fine = 1.0;
  double lambda3_greedy = 1.0;
  double step = 0.1;        // anchor stages
  double step_rigid = 0.5;  // rigid parameters
  double step_final = 0.1;  // fraction of `step` reached at the end of a stage
  double beta1 = 0.9, beta2 = 0.999;
  int iters_rigid = 150, iters_level = 200, iters_greedy = 100;
  double k = 3.0;
  double tau = 0.5;
  int greedy_max_rounds = 3;
  int R = 10;  // association refresh period
  int samples = 8;  // sample grid density per triangle edge
  double search_radius = 8.0;  // rigid translation search, px
  double search_step = 2.0;
  bool extrapolate = true;  // constant-velocity initialization of each window
  int grid_cols = 2, grid_rows = 2;  // initial mesh cells
  Roi roi{};
  double query_spacing = 4.0;

  void validate() const;
};

TrackerConfig tracker_config_from(const FlatConfig& cfg);
FlatConfig to_flat_config(const TrackerConfig& cfg);

enum class Stage { Rigid, Coarse, Fine, Greedy };

struct Lambdas {
  double l1 = 0.0, l2 = 0.0, l3 = 0.0;
};
Lambdas stage_lambdas(const TrackerConfig& cfg, Stage stage);

/// Everything one window is scored against.
class WindowProblem {
 public:
  WindowProblem(EventWindow window, FrameSet frames, const TrackerConfig& cfg);

  const EventWindow& window() const { return window_; }
  const FrameSet& frames() const { return frames_; }
  const SampleGrid& samples() const { return grid_; }
  SensorSize sensor() const { return sensor_; }

  void refresh_association(const TrajectoryField& tf) { events_.refresh_association(tf); }
  std::size_t associated_events() const { return events_.associated_events(); }

  struct Breakdown {
    double loss = 0.0, warp1 = 0.0, warp2 = 0.0, f_cc = 0.0, f_s = 0.0;
    bool textureless = false;
  };

  /// loss = l1 (warp1 + warp2) - l2 f_CC + l3 f_S with the association of
  /// the last refresh; accumulates d(loss)/d(positions) into grad if set.
  Breakdown evaluate(const TrajectoryField& tf, Lambdas lambdas, std::span<Point2> grad = {});

 private:
  EventWindow window_;
  FrameSet frames_;
  SampleGrid grid_;
  SensorSize sensor_;
  EventObjective events_;
};

/// Convenience wrapper: refreshes the association and evaluates.
double total_objective(WindowProblem& problem, const TrajectoryField& tf, Lambdas lambdas);

struct StageTrace {
  std::string name;
  std::vector<std::pair<int, double>> curve;  // (iteration, loss) at refresh points
  double initial_loss = 0.0;
  double final_loss = 0.0;
  bool reverted = false;
};

struct ConvergenceReport {
  std::vector<double> P;                  // per triangle
  std::vector<char> converged;
  std::vector<char> no_texture;
  std::vector<char> fixed_anchor;         // anchors frozen by greedy rounds
  int rounds = 0;
  bool greedy_stalled = false;

  std::size_t num_converged() const;
};

/// Per-knot rotation and translation about the knot centroid, seeded by a
/// coarse search over constant-velocity translations. Knot 0 stays put.
/// Throws RigidStageDiverged when the loss rises 50 iterations in a row.
TrajectoryField rigid_stage(const TrajectoryField& tf, WindowProblem& problem, const TrackerConfig& cfg,
                            std::vector<StageTrace>* trace = nullptr);

/// Optimizes anchors of level <= `level` (finer anchors follow by
/// prolongation of the update) at every knot but the first.
TrajectoryField optimize_level(const TrajectoryField& tf, WindowProblem& problem, const TrackerConfig& cfg, int level,
                               Lambdas lambdas, int iters, std::span<const char> frozen = {},
                               StageTrace* trace = nullptr);

/// Optimizes level by level up to cfg.max_levels, subdividing while the mesh
/// is coarser than the level being optimized.
std::pair<TrajectoryField, ConvergenceReport> coarse_to_fine(const TrajectoryField& tf, WindowProblem& problem,
                                                             const TrackerConfig& cfg,
                                                             std::vector<StageTrace>* trace = nullptr);

/// Per-triangle outlier fraction of z-scored current vs initial samples,
/// thresholded against k times the mean squared error over all samples.
ConvergenceReport assess_convergence(const TrajectoryField& tf, const FrameSet& frames, const SampleGrid& grid,
                                     double k, double tau);

/// Freezes anchors whose incident triangles all converged, optimizes the
/// rest with strain continuity active and re-assesses.
std::pair<TrajectoryField, ConvergenceReport> greedy_round(const TrajectoryField& tf, WindowProblem& problem,
                                                           const TrackerConfig& cfg, const ConvergenceReport& report,
                                                           StageTrace* trace = nullptr);

struct WindowResult {
  TrajectoryField field;
  ConvergenceReport report;
  std::vector<StageTrace> trace;
  std::string failure;  // empty on success
};

/// Rigid stage, coarse-to-fine, then greedy rounds until every triangle has
/// converged or the round budget is spent.
WindowResult track_window(const TrajectoryField& init, std::vector<Event> events, double t_prev, double t_cur,
                          const FrameSet& frames, const TrackerConfig& cfg);

struct SequenceResult {
  std::vector<WindowResult> windows;
  std::vector<Point2> query;
};

struct SequenceInput {
  std::vector<Event> events;
  std::vector<Frame> frames;
  std::vector<int> frame_index;
  std::optional<std::vector<Point2>> query;  // defaults to a grid inside the ROI
};

SequenceInput load_sequence(const std::filesystem::path& events_csv, const std::filesystem::path& manifest);

SequenceResult track_sequence(const SequenceInput& input, const TrackerConfig& cfg);

/// Writes trajectories.csv, displacements.csv, strain.csv, convergence.csv,
/// diagnostics.csv, mesh_anchors.csv, mesh_triangles.csv and run.cfg.
void write_sequence_outputs(const std::filesystem::path& out_dir, const SequenceInput& input,
                            const SequenceResult& result, const TrackerConfig& cfg);

}  // namespace evdm
