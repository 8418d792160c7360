#pragma once

#include <filesystem>
#include <iosfwd>
#include <vector>

namespace evdm {

/// One row of a displacement table: point `point_id` with rest position
/// (x0, y0) has displacement (ux, uy) at frame `frame`.
struct DisplacementRow {
  int frame = 0;
  double t = 0.0;
  int point_id = 0;
  double x0 = 0.0;
  double y0 = 0.0;
  double ux = 0.0;
  double uy = 0.0;
};

using DisplacementTable = std::vector<DisplacementRow>;

inline constexpr const char* kDisplacementHeader = "frame,t,point_id,x0,y0,ux,uy";
DisplacementTable read_displacements(const std::filesystem::path& path);
void write_displacements(const std::filesystem::path& path, const DisplacementTable& table);
void write_displacement_rows(std::ostream& os, const DisplacementTable& table);

inline constexpr double kFailFraction = 0.2;
inline constexpr double kFailDistance = 5.0;

/// Mean L2 error over all (point, frame) pairs. Throws TableMismatch when the
/// tables do not cover the same pairs.
double epe(const DisplacementTable& pred, const DisplacementTable& gt);

/// Index of the first frame where more than `fail_fraction` of the points
/// err by more than `fail_dist`, divided by the frame count; 1 if none.
double survival(const DisplacementTable& pred, const DisplacementTable& gt, double fail_fraction = kFailFraction,
                double fail_dist = kFailDistance);

/// EPE over pairs with error <= 5 px in frames before the failure frame.
/// Throws NoSurvivors when no pair qualifies.
double sepe(const DisplacementTable& pred, const DisplacementTable& gt);

struct FrameMetric {
  int frame = 0;
  double t = 0.0;
  double epe = 0.0;
  double outlier_fraction = 0.0;  // share of points with error > 5 px
};

struct MetricReport {
  double epe = 0.0;
  double sepe = 0.0;
  bool sepe_defined = true;
  double survival = 0.0;
  int failure_frame = -1;  // -1 when tracking never failed
  std::size_t points = 0;
  std::vector<FrameMetric> per_frame;
};

MetricReport evaluate(const DisplacementTable& pred, const DisplacementTable& gt);
void write_report_text(std::ostream& os, const MetricReport& r);
void write_report_csv(std::ostream& os, const MetricReport& r);

}  // namespace evdm
