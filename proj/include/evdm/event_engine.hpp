#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "evdm/trajectory.hpp"

namespace evdm {

struct Event {
  double x = 0.0;
  double y = 0.0;
  double t = 0.0;
  int p = 1;  // +1 or -1
};

struct SensorSize {
  int width = 0;
  int height = 0;
};

/// Time-sorted events of one window split into M bins of (near) equal count.
/// Bin j holds events [bin_offsets[j], bin_offsets[j+1]) and spans
/// [bin_edges[j], bin_edges[j+1]].
struct EventWindow {
  std::vector<Event> events;
  double t_start = 0.0;
  double t_end = 0.0;
  std::vector<double> bin_edges;
  std::vector<std::size_t> bin_offsets;

  std::size_t num_bins() const { return bin_edges.empty() ? 0 : bin_edges.size() - 1; }
  TimeGrid grid() const { return TimeGrid(bin_edges); }
};

/// Per-polarity image of warped events at t_ref.
struct Iwe {
  int width = 0;
  int height = 0;
  double t_ref = 0.0;
  std::vector<double> pos;             // T_{+1}
  std::vector<double> neg;             // T_{-1}
  std::vector<std::int32_t> count;     // events touching each pixel
  std::vector<double> density;         // sum of splat weights, both polarities
};

inline constexpr double kIweEpsilon = 1e-9;

/// Splits events into M bins whose counts differ by at most one; the
/// remainder goes to the earliest bins. Inner edges sit midway between the
/// last event of one bin and the first of the next.
EventWindow partition_bins(std::vector<Event> events, double t_start, double t_end, int M);

/// Bins [first_bin, last_bin) of the window, as used by build_iwe.
struct BinRange {
  std::size_t first_bin = 0;
  std::size_t last_bin = 0;
};

/// Reference IWE: each event is associated at its trigger time, warped to
/// t_ref and splatted bilinearly with the time weight w(t_j).
Iwe build_iwe(const EventWindow& window, const TrajectoryField& tf, SensorSize sensor, double t_ref,
              BinRange bins);

/// sum_x (T+^2 + T-^2) / (#{x : n(x) > 0} + eps); 0 for an empty IWE.
double contrast(const Iwe& iwe);

struct ContrastValue {
  double value = 0.0;
  int empty_iwes = 0;  // IWEs without a single associated event, counted as 0
};

/// Mean contrast over knots, each knot using events of its two adjacent bins.
ContrastValue warp1_objective(const EventWindow& window, const TrajectoryField& tf, SensorSize sensor);

/// Mean contrast of all window events warped to each frame time.
ContrastValue warp2_objective(const EventWindow& window, const TrajectoryField& tf, SensorSize sensor,
                              double t_frame_a, double t_frame_b);

/// Warp1 + Warp2 with cached event-to-triangle association and an analytic
/// gradient with respect to every anchor position at every knot.
///
/// Between refreshes each event keeps its triangle; its barycentric weights
/// are recomputed from the current vertex positions at the trigger time, so
/// the gradient flows through both the trigger-time and reference-time knots.
class EventObjective {
 public:
  EventObjective(const EventWindow& window, SensorSize sensor);

  /// Associates every event against `tf` at its trigger time. Events outside
  /// the deformed mesh are skipped until the next refresh.
  void refresh_association(const TrajectoryField& tf);

  std::size_t associated_events() const { return associated_; }
  std::span<const int> triangles() const { return tri_; }

  struct Terms {
    double warp1 = 0.0;
    double warp2 = 0.0;
    int empty_iwes = 0;
  };

  /// Evaluates both terms. When `grad` is non-empty it receives
  /// d(scale1 * warp1 + scale2 * warp2)/d(positions), accumulated in place.
  Terms evaluate(const TrajectoryField& tf, std::span<Point2> grad, double scale1, double scale2);

 private:
  // One IWE: members warped to knot `ref_knot`; returns its contrast and,
  // when `grad` is set, accumulates scale * d(contrast).
  double splat_pass(const TrajectoryField& tf, std::size_t ref_knot, std::span<const std::uint32_t> members,
                    double max_dt, double scale, std::span<Point2> grad, int& empty);

  SensorSize sensor_;
  std::size_t num_bins_ = 0;
  std::vector<double> knots_;
  std::vector<std::size_t> bin_offsets_;
  // Event data, structure of arrays.
  std::vector<double> x_, y_, t_;
  std::vector<int> p_;
  std::vector<std::uint32_t> bin_;
  std::vector<std::uint32_t> segment_;
  std::vector<double> alpha_;
  std::vector<int> tri_;
  std::size_t associated_ = 0;
  std::vector<std::uint32_t> assoc_;  // indices of associated events
  // Per-evaluation state.
  std::vector<double> l1_, l2_, l3_;
  std::vector<double> dl1_, dl2_, dl3_;
  std::vector<double> wx_, wy_;
  std::vector<double> image_;  // 4 planes: num+, den+, num-, den-
  std::vector<std::int32_t> count_;
  std::vector<std::uint32_t> members_all_;
  std::vector<std::vector<std::uint32_t>> members_knot_;
  std::vector<double> soa_;
};

std::vector<Event> read_events_csv(const std::filesystem::path& path);
void write_events_csv(const std::filesystem::path& path, std::span<const Event> events);
inline constexpr const char* kEventsHeader = "t,x,y,p";

/// Events with t in [t0, t1] from a time-sorted stream.
std::vector<Event> events_between(std::span<const Event> events, double t0, double t1);

}  // namespace evdm
