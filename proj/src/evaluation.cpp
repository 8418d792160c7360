#include "evdm/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <ostream>

#include "evdm/error.hpp"
#include "evdm/io.hpp"

namespace evdm {

DisplacementTable read_displacements(const std::filesystem::path& path) {
  const auto rows = read_csv(path, kDisplacementHeader);
  DisplacementTable out;
  out.reserve(rows.size());
  for (const auto& r : rows) {
    out.push_back({static_cast<int>(parse_int(r[0], "frame")), parse_double(r[1], "t"),
                   static_cast<int>(parse_int(r[2], "point_id")), parse_double(r[3], "x0"), parse_double(r[4], "y0"),
                   parse_double(r[5], "ux"), parse_double(r[6], "uy")});
  }
  return out;
}

void write_displacement_rows(std::ostream& os, const DisplacementTable& table) {
  for (const auto& r : table) {
    os << r.frame << ',' << format_double(r.t) << ',' << r.point_id << ',' << format_double(r.x0) << ','
       << format_double(r.y0) << ',' << format_double(r.ux) << ',' << format_double(r.uy) << '\n';
  }
}

void write_displacements(const std::filesystem::path& path, const DisplacementTable& table) {
  auto os = open_for_write(path);
  os << kDisplacementHeader << '\n';
  write_displacement_rows(os, table);
}

namespace {

// Per-frame errors, aligned on (frame, point_id).
struct Aligned {
  std::vector<int> frames;
  std::vector<double> times;
  std::vector<std::vector<double>> err;  // [frame][point]
};

Aligned align(const DisplacementTable& pred, const DisplacementTable& gt) {
  if (pred.size() != gt.size()) {
    throw Error(ErrorKind::TableMismatch,
                "row counts differ: " + std::to_string(pred.size()) + " vs " + std::to_string(gt.size()));
  }
  if (gt.empty()) throw Error(ErrorKind::TableMismatch, "tables are empty");
  auto key = [](const DisplacementRow& r) { return std::pair{r.frame, r.point_id}; };
  std::map<std::pair<int, int>, const DisplacementRow*> g;
  for (const auto& r : gt) {
    if (!g.emplace(key(r), &r).second) {
      throw Error(ErrorKind::TableMismatch, "duplicate ground-truth row for frame " + std::to_string(r.frame) +
                                                " point " + std::to_string(r.point_id));
    }
  }
  std::map<int, std::pair<double, std::vector<std::pair<int, double>>>> by_frame;
  for (const auto& r : pred) {
    const auto it = g.find(key(r));
    if (it == g.end()) {
      throw Error(ErrorKind::TableMismatch,
                  "no ground truth for frame " + std::to_string(r.frame) + " point " + std::to_string(r.point_id));
    }
    const double e = std::hypot(r.ux - it->second->ux, r.uy - it->second->uy);
    auto& slot = by_frame[r.frame];
    slot.first = it->second->t;
    slot.second.emplace_back(r.point_id, e);
    g.erase(it);
  }
  if (!g.empty()) throw Error(ErrorKind::TableMismatch, "prediction misses ground-truth rows");
  Aligned a;
  std::size_t points = 0;
  for (auto& [frame, slot] : by_frame) {
    std::sort(slot.second.begin(), slot.second.end());
    if (a.frames.empty()) points = slot.second.size();
    if (slot.second.size() != points) {
      throw Error(ErrorKind::TableMismatch, "frame " + std::to_string(frame) + " has a different point count");
    }
    a.frames.push_back(frame);
    a.times.push_back(slot.first);
    std::vector<double> e;
    e.reserve(points);
    for (const auto& [id, v] : slot.second) e.push_back(v);
    a.err.push_back(std::move(e));
  }
  return a;
}

int failure_index(const Aligned& a, double fail_fraction, double fail_dist) {
  for (std::size_t f = 0; f < a.err.size(); ++f) {
    const auto bad = std::count_if(a.err[f].begin(), a.err[f].end(), [&](double e) { return e > fail_dist; });
    if (static_cast<double>(bad) > fail_fraction * static_cast<double>(a.err[f].size())) return static_cast<int>(f);
  }
  return -1;
}

double mean_all(const Aligned& a) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& row : a.err) {
    for (double e : row) sum += e;
    n += row.size();
  }
  return sum / static_cast<double>(n);
}

double sepe_of(const Aligned& a, int fail) {
  const std::size_t end = fail < 0 ? a.err.size() : static_cast<std::size_t>(fail);
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t f = 0; f < end; ++f) {
    for (double e : a.err[f]) {
      if (e <= kFailDistance) {
        sum += e;
        ++n;
      }
    }
  }
  if (n == 0) throw Error(ErrorKind::NoSurvivors, "no (point, frame) pair survived");
  return sum / static_cast<double>(n);
}

}  // namespace

double epe(const DisplacementTable& pred, const DisplacementTable& gt) { return mean_all(align(pred, gt)); }

double survival(const DisplacementTable& pred, const DisplacementTable& gt, double fail_fraction, double fail_dist) {
  const auto a = align(pred, gt);
  const int f = failure_index(a, fail_fraction, fail_dist);
  return f < 0 ? 1.0 : static_cast<double>(f) / static_cast<double>(a.err.size());
}

double sepe(const DisplacementTable& pred, const DisplacementTable& gt) {
  const auto a = align(pred, gt);
  return sepe_of(a, failure_index(a, kFailFraction, kFailDistance));
}

MetricReport evaluate(const DisplacementTable& pred, const DisplacementTable& gt) {
  const auto a = align(pred, gt);
  MetricReport r;
  r.epe = mean_all(a);
  r.failure_frame = failure_index(a, kFailFraction, kFailDistance);
  r.survival = r.failure_frame < 0 ? 1.0 : static_cast<double>(r.failure_frame) / static_cast<double>(a.err.size());
  if (r.failure_frame >= 0) r.failure_frame = a.frames[r.failure_frame];
  try {
    r.sepe = sepe_of(a, failure_index(a, kFailFraction, kFailDistance));
  } catch (const Error&) {
    r.sepe_defined = false;
    r.sepe = 0.0;
  }
  r.points = a.err.front().size();
  for (std::size_t f = 0; f < a.err.size(); ++f) {
    FrameMetric m{a.frames[f], a.times[f], 0.0, 0.0};
    std::size_t bad = 0;
    for (double e : a.err[f]) {
      m.epe += e;
      bad += e > kFailDistance ? 1 : 0;
    }
    m.epe /= static_cast<double>(a.err[f].size());
    m.outlier_fraction = static_cast<double>(bad) / static_cast<double>(a.err[f].size());
    r.per_frame.push_back(m);
  }
  return r;
}

void write_report_text(std::ostream& os, const MetricReport& r) {
  os << "points: " << r.points << '\n';
  os << "frames: " << r.per_frame.size() << '\n';
  os << "epe: " << format_double(r.epe) << '\n';
  os << "sepe: " << (r.sepe_defined ? format_double(r.sepe) : std::string("undefined (no survivors)")) << '\n';
  os << "survival: " << format_double(r.survival) << '\n';
  os << "failure_frame: " << (r.failure_frame < 0 ? std::string("none") : std::to_string(r.failure_frame)) << '\n';
}

void write_report_csv(std::ostream& os, const MetricReport& r) {
  os << "frame,t,epe,outlier_fraction\n";
  for (const auto& m : r.per_frame) {
    os << m.frame << ',' << format_double(m.t) << ',' << format_double(m.epe) << ','
       << format_double(m.outlier_fraction) << '\n';
  }
  os << "all,," << format_double(r.epe) << ",\n";
}

}  // namespace evdm
