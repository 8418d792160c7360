#include "evdm/event_engine.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "evdm/error.hpp"
#include "evdm/io.hpp"
#include "evdm/kernels.hpp"

namespace evdm {

EventWindow partition_bins(std::vector<Event> events, double t_start, double t_end, int M) {
  if (M < 1) throw Error(ErrorKind::InvalidConfig, "M must be at least 1");
  if (!(t_end > t_start)) throw Error(ErrorKind::InvalidConfig, "window end must follow its start");
  const std::size_t n = events.size();
  if (n < static_cast<std::size_t>(M)) {
    throw Error(ErrorKind::TooFewEvents, std::to_string(n) + " events for " + std::to_string(M) + " bins");
  }
  EventWindow w;
  w.t_start = t_start;
  w.t_end = t_end;
  const std::size_t base = n / M;
  const std::size_t extra = n % M;
  w.bin_offsets.push_back(0);
  for (int j = 0; j < M; ++j) {
    w.bin_offsets.push_back(w.bin_offsets.back() + base + (static_cast<std::size_t>(j) < extra ? 1 : 0));
  }
  w.bin_edges.push_back(t_start);
  const double min_gap = 1e-9 * (t_end - t_start);
  for (int j = 1; j < M; ++j) {
    const std::size_t k = w.bin_offsets[j];
    double edge = 0.5 * (events[k - 1].t + events[k].t);
    // Keep knots strictly increasing even when timestamps repeat.
    edge = std::max(edge, w.bin_edges.back() + min_gap);
    edge = std::min(edge, t_end - (M - j) * min_gap);
    w.bin_edges.push_back(edge);
  }
  w.bin_edges.push_back(t_end);
  w.events = std::move(events);
  return w;
}

namespace {

double time_weight(double t_ref, double t, double max_dt) {
  if (!(max_dt > 0.0)) return 1.0;
  return 1.0 - std::abs(t_ref - t) / max_dt;
}

// Largest |t_ref - t| over the time-sorted events [first, last).
double max_time_offset(const std::vector<Event>& events, std::size_t first, std::size_t last, double t_ref) {
  if (first >= last) return 0.0;
  return std::max(std::abs(t_ref - events[first].t), std::abs(t_ref - events[last - 1].t));
}

struct SplatCorners {
  long x0, y0;
  double fx, fy;
};

// Positions within this distance of a pixel centre splat onto it alone, so
// barycentric round-off cannot light up neighbouring pixels.
constexpr double kSnap = 1e-9;

double snapped(double v) {
  const double r = std::round(v);
  return std::abs(v - r) < kSnap ? r : v;
}

SplatCorners corners_of(double x, double y) {
  x = snapped(x);
  y = snapped(y);
  const double fx0 = std::floor(x);
  const double fy0 = std::floor(y);
  return {static_cast<long>(fx0), static_cast<long>(fy0), x - fx0, y - fy0};
}

}  // namespace

Iwe build_iwe(const EventWindow& window, const TrajectoryField& tf, SensorSize sensor, double t_ref,
              BinRange bins) {
  if (!tf.grid().contains(t_ref)) throw Error(ErrorKind::TimeOutOfWindow, "t_ref outside trajectory grid");
  const std::size_t first = window.bin_offsets.at(bins.first_bin);
  const std::size_t last = window.bin_offsets.at(bins.last_bin);
  const std::size_t npx = static_cast<std::size_t>(sensor.width) * sensor.height;
  Iwe iwe{sensor.width, sensor.height, t_ref, std::vector<double>(npx), std::vector<double>(npx),
          std::vector<std::int32_t>(npx), std::vector<double>(npx)};
  std::vector<double> num_pos(npx), den_pos(npx), num_neg(npx), den_neg(npx);
  const double max_dt = max_time_offset(window.events, first, last, t_ref);
  std::size_t associated = 0;
  for (std::size_t i = first; i < last; ++i) {
    const Event& e = window.events[i];
    const auto at_trigger = tf.anchor_positions_at(e.t);
    const auto assoc = locate(tf.mesh(), at_trigger, {e.x, e.y});
    if (!assoc) continue;
    ++associated;
    const Point2 xw = warp_point(tf, assoc->triangle, assoc->weights, t_ref);
    const double w = time_weight(t_ref, e.t, max_dt);
    const auto c = corners_of(xw.x, xw.y);
    const double kx[2] = {1.0 - c.fx, c.fx};
    const double ky[2] = {1.0 - c.fy, c.fy};
    for (int dy = 0; dy < 2; ++dy) {
      for (int dx = 0; dx < 2; ++dx) {
        const long px = c.x0 + dx;
        const long py = c.y0 + dy;
        const double k = kx[dx] * ky[dy];
        if (k <= 0.0 || px < 0 || py < 0 || px >= sensor.width || py >= sensor.height) continue;
        const std::size_t idx = static_cast<std::size_t>(py) * sensor.width + static_cast<std::size_t>(px);
        if (e.p > 0) {
          num_pos[idx] += k * w;
          den_pos[idx] += k;
        } else {
          num_neg[idx] += k * w;
          den_neg[idx] += k;
        }
        iwe.count[idx] += 1;
        iwe.density[idx] += k;
      }
    }
  }
  if (associated == 0 && last > first) {
    throw Error(ErrorKind::NoAssociatedEvents, "no event of the subset lies inside the mesh");
  }
  for (std::size_t i = 0; i < npx; ++i) {
    iwe.pos[i] = num_pos[i] / (den_pos[i] + kIweEpsilon);
    iwe.neg[i] = num_neg[i] / (den_neg[i] + kIweEpsilon);
  }
  return iwe;
}

double contrast(const Iwe& iwe) {
  double s = 0.0;
  std::size_t active = 0;
  for (std::size_t i = 0; i < iwe.count.size(); ++i) {
    s += iwe.pos[i] * iwe.pos[i] + iwe.neg[i] * iwe.neg[i];
    active += iwe.count[i] > 0 ? 1 : 0;
  }
  if (active == 0) return 0.0;
  return s / (static_cast<double>(active) + kIweEpsilon);
}

namespace {

double contrast_or_zero(const EventWindow& window, const TrajectoryField& tf, SensorSize sensor, double t_ref,
                        BinRange bins, int& empty) {
  try {
    return contrast(build_iwe(window, tf, sensor, t_ref, bins));
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::NoAssociatedEvents) throw;
    ++empty;
    return 0.0;
  }
}

}  // namespace

ContrastValue warp1_objective(const EventWindow& window, const TrajectoryField& tf, SensorSize sensor) {
  const std::size_t M = window.num_bins();
  ContrastValue out;
  double sum = 0.0;
  for (std::size_t k = 0; k <= M; ++k) {
    const BinRange bins{k == 0 ? 0 : k - 1, std::min(k + 1, M)};
    sum += contrast_or_zero(window, tf, sensor, window.bin_edges[k], bins, out.empty_iwes);
  }
  out.value = sum / static_cast<double>(M + 1);
  return out;
}

ContrastValue warp2_objective(const EventWindow& window, const TrajectoryField& tf, SensorSize sensor,
                              double t_frame_a, double t_frame_b) {
  ContrastValue out;
  if (window.events.empty()) return out;
  const BinRange all{0, window.num_bins()};
  out.value = 0.5 * (contrast_or_zero(window, tf, sensor, t_frame_a, all, out.empty_iwes) +
                     contrast_or_zero(window, tf, sensor, t_frame_b, all, out.empty_iwes));
  return out;
}

// ---------------------------------------------------------------------------

EventObjective::EventObjective(const EventWindow& window, SensorSize sensor)
    : sensor_(sensor), num_bins_(window.num_bins()), knots_(window.bin_edges), bin_offsets_(window.bin_offsets) {
  const std::size_t n = window.events.size();
  x_.resize(n);
  y_.resize(n);
  t_.resize(n);
  p_.resize(n);
  bin_.resize(n);
  segment_.resize(n);
  alpha_.resize(n);
  tri_.assign(n, -1);
  const TimeGrid grid(knots_);
  for (std::size_t b = 0; b < num_bins_; ++b) {
    for (std::size_t i = window.bin_offsets[b]; i < window.bin_offsets[b + 1]; ++i) {
      const Event& e = window.events[i];
      x_[i] = e.x;
      y_[i] = e.y;
      t_[i] = e.t;
      p_[i] = e.p;
      bin_[i] = static_cast<std::uint32_t>(b);
      const auto [seg, a] = grid.segment(std::clamp(e.t, grid.front(), grid.back()));
      segment_[i] = static_cast<std::uint32_t>(seg);
      alpha_[i] = a;
    }
  }
  const std::size_t npx = static_cast<std::size_t>(sensor.width) * sensor.height;
  image_.assign(4 * npx, 0.0);
  count_.assign(npx, 0);
  members_knot_.resize(num_bins_ + 1);
}

void EventObjective::refresh_association(const TrajectoryField& tf) {
  const std::size_t n = x_.size();
  assoc_.clear();
  std::vector<Point2> positions(tf.num_anchors());
  // Events are time-sorted: anchor positions only change between distinct
  // (segment, alpha) pairs.
  std::uint32_t cur_seg = ~0u;
  double cur_alpha = -1.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (segment_[i] != cur_seg || alpha_[i] != cur_alpha) {
      cur_seg = segment_[i];
      cur_alpha = alpha_[i];
      for (std::size_t a = 0; a < positions.size(); ++a) {
        const Point2 p0 = tf.at(a, cur_seg);
        const Point2 p1 = tf.at(a, cur_seg + 1);
        positions[a] = cur_alpha == 0.0 ? p0 : (cur_alpha == 1.0 ? p1 : (1.0 - cur_alpha) * p0 + cur_alpha * p1);
      }
    }
    const auto found = locate(tf.mesh(), positions, {x_[i], y_[i]});
    tri_[i] = found ? found->triangle : -1;
    if (found) assoc_.push_back(static_cast<std::uint32_t>(i));
  }
  associated_ = assoc_.size();

  members_all_.resize(assoc_.size());
  for (auto& m : members_knot_) m.clear();
  for (std::uint32_t j = 0; j < assoc_.size(); ++j) {
    members_all_[j] = j;
    const std::uint32_t b = bin_[assoc_[j]];
    members_knot_[b].push_back(j);      // knot b is the start of bin b
    members_knot_[b + 1].push_back(j);  // knot b+1 is its end
  }
  const std::size_t m = assoc_.size();
  l1_.resize(m);
  l2_.resize(m);
  l3_.resize(m);
  dl1_.resize(m);
  dl2_.resize(m);
  dl3_.resize(m);
  wx_.resize(m);
  wy_.resize(m);
  soa_.resize(8 * m);
}

EventObjective::Terms EventObjective::evaluate(const TrajectoryField& tf, std::span<Point2> grad, double scale1,
                                               double scale2) {
  Terms terms;
  const std::size_t m = assoc_.size();
  const std::size_t K = tf.num_knots();
  const auto& tris = tf.mesh().triangles;
  const bool want_grad = !grad.empty();

  // Barycentric weights at trigger time.
  {
    double* px = soa_.data();
    double* py = px + m;
    double* ax = py + m;
    double* ay = ax + m;
    double* bx = ay + m;
    double* by = bx + m;
    double* cx = by + m;
    double* cy = cx + m;
    for (std::size_t j = 0; j < m; ++j) {
      const std::uint32_t e = assoc_[j];
      const auto& v = tris[tri_[e]].v;
      const std::size_t s = segment_[e];
      const double a = alpha_[e];
      Point2 V[3];
      for (int k = 0; k < 3; ++k) {
        const Point2 p0 = tf.at(v[k], s);
        const Point2 p1 = tf.at(v[k], s + 1);
        V[k] = (1.0 - a) * p0 + a * p1;
      }
      px[j] = x_[e];
      py[j] = y_[e];
      ax[j] = V[0].x;
      ay[j] = V[0].y;
      bx[j] = V[1].x;
      by[j] = V[1].y;
      cx[j] = V[2].x;
      cy[j] = V[2].y;
    }
    kernels::barycentric({px, m}, {py, m},
                         {{ax, m}, {ay, m}, {bx, m}, {by, m}, {cx, m}, {cy, m}},
                         {l1_, l2_, l3_});
  }
  if (want_grad) {
    std::fill(dl1_.begin(), dl1_.end(), 0.0);
    std::fill(dl2_.begin(), dl2_.end(), 0.0);
    std::fill(dl3_.begin(), dl3_.end(), 0.0);
  }

  // The time weight is normalized over every event of the bins feeding an
  // IWE, associated or not.
  auto span_dt = [&](std::size_t first_bin, std::size_t last_bin, double t_ref) {
    const std::size_t lo = bin_offsets_[first_bin];
    const std::size_t hi = bin_offsets_[last_bin];
    if (lo >= hi) return 0.0;
    return std::max(std::abs(t_ref - t_[lo]), std::abs(t_ref - t_[hi - 1]));
  };
  const std::size_t M = num_bins_;

  double w1 = 0.0;
  for (std::size_t k = 0; k < K; ++k) {
    const auto& members = members_knot_[k];
    w1 += splat_pass(tf, k, members, span_dt(k == 0 ? 0 : k - 1, std::min(k + 1, M), knots_[k]),
                     scale1 / static_cast<double>(K), grad, terms.empty_iwes);
  }
  terms.warp1 = w1 / static_cast<double>(K);

  if (!x_.empty()) {
    double w2 = 0.0;
    for (std::size_t k : {std::size_t{0}, K - 1}) {
      w2 += splat_pass(tf, k, members_all_, span_dt(0, M, knots_[k]), 0.5 * scale2, grad, terms.empty_iwes);
    }
    terms.warp2 = 0.5 * w2;
  }

  if (want_grad) {
    // Chain dL/dlambda through lambda(V(t_e)): moving vertex j by d changes
    // lambda_k by -lambda_j * grad_x(lambda_k) . d.
    for (std::size_t j = 0; j < m; ++j) {
      const std::uint32_t e = assoc_[j];
      const auto& v = tris[tri_[e]].v;
      const std::size_t s = segment_[e];
      const double a = alpha_[e];
      Point2 V[3];
      for (int k = 0; k < 3; ++k) V[k] = (1.0 - a) * tf.at(v[k], s) + a * tf.at(v[k], s + 1);
      const double det = cross(V[1] - V[0], V[2] - V[0]);
      const Point2 g1{(V[1].y - V[2].y) / det, (V[2].x - V[1].x) / det};
      const Point2 g2{(V[2].y - V[0].y) / det, (V[0].x - V[2].x) / det};
      const Point2 g3{(V[0].y - V[1].y) / det, (V[1].x - V[0].x) / det};
      const Point2 h = dl1_[j] * g1 + dl2_[j] * g2 + dl3_[j] * g3;
      const double lam[3] = {l1_[j], l2_[j], l3_[j]};
      for (int k = 0; k < 3; ++k) {
        const Point2 dV = -lam[k] * h;
        if (a != 1.0) grad[v[k] * K + s] += (1.0 - a) * dV;
        if (a != 0.0) grad[v[k] * K + s + 1] += a * dV;
      }
    }
  }
  return terms;
}

double EventObjective::splat_pass(const TrajectoryField& tf, std::size_t ref_knot,
                                  std::span<const std::uint32_t> members, double max_dt, double scale,
                                  std::span<Point2> grad, int& empty) {
  if (members.empty()) {
    ++empty;
    return 0.0;
  }
  const std::size_t n = members.size();
  const std::size_t K = tf.num_knots();
  const auto& tris = tf.mesh().triangles;
  const double t_ref = knots_[ref_knot];
  const int W = sensor_.width;
  const int H = sensor_.height;
  const std::size_t npx = static_cast<std::size_t>(W) * H;

  // Warp to the reference knot.
  if (soa_.size() < 9 * n) soa_.resize(9 * n);
  double* ml1 = soa_.data();
  double* ml2 = ml1 + n;
  double* ml3 = ml2 + n;
  double* ax = ml3 + n;
  double* ay = ax + n;
  double* bx = ay + n;
  double* by = bx + n;
  double* cx = by + n;
  double* cy = cx + n;
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint32_t j = members[i];
    const auto& v = tris[tri_[assoc_[j]]].v;
    ml1[i] = l1_[j];
    ml2[i] = l2_[j];
    ml3[i] = l3_[j];
    const Point2 A = tf.at(v[0], ref_knot), B = tf.at(v[1], ref_knot), C = tf.at(v[2], ref_knot);
    ax[i] = A.x;
    ay[i] = A.y;
    bx[i] = B.x;
    by[i] = B.y;
    cx[i] = C.x;
    cy[i] = C.y;
  }
  double* wx = wx_.data();
  double* wy = wy_.data();
  kernels::affine_combine({{ml1, n}, {ml2, n}, {ml3, n}}, {{ax, n}, {ay, n}, {bx, n}, {by, n}, {cx, n}, {cy, n}},
                          {wx, n}, {wy, n});

  double* num_pos = image_.data();
  double* den_pos = num_pos + npx;
  double* num_neg = den_pos + npx;
  double* den_neg = num_neg + npx;
  std::fill(image_.begin(), image_.end(), 0.0);
  std::fill(count_.begin(), count_.end(), 0);

  for (std::size_t i = 0; i < n; ++i) {
    const std::uint32_t e = assoc_[members[i]];
    const double w = time_weight(t_ref, t_[e], max_dt);
    const auto c = corners_of(wx[i], wy[i]);
    const double kx[2] = {1.0 - c.fx, c.fx};
    const double ky[2] = {1.0 - c.fy, c.fy};
    double* num = p_[e] > 0 ? num_pos : num_neg;
    double* den = p_[e] > 0 ? den_pos : den_neg;
    for (int dy = 0; dy < 2; ++dy) {
      const long py = c.y0 + dy;
      if (py < 0 || py >= H) continue;
      for (int dx = 0; dx < 2; ++dx) {
        const long px = c.x0 + dx;
        const double k = kx[dx] * ky[dy];
        if (k <= 0.0 || px < 0 || px >= W) continue;
        const std::size_t idx = static_cast<std::size_t>(py) * W + static_cast<std::size_t>(px);
        num[idx] += k * w;
        den[idx] += k;
        count_[idx] += 1;
      }
    }
  }

  const std::size_t active = kernels::count_positive(count_);
  if (active == 0) return 0.0;
  const double inv_active = 1.0 / (static_cast<double>(active) + kIweEpsilon);
  const double sum_sq = kernels::ratio_square_sum({num_pos, npx}, {den_pos, npx}, kIweEpsilon) +
                        kernels::ratio_square_sum({num_neg, npx}, {den_neg, npx}, kIweEpsilon);
  const double value = sum_sq * inv_active;

  if (!grad.empty() && scale != 0.0) {
    for (std::size_t i = 0; i < n; ++i) {
      const std::uint32_t j = members[i];
      const std::uint32_t e = assoc_[j];
      const double w = time_weight(t_ref, t_[e], max_dt);
      const auto c = corners_of(wx[i], wy[i]);
      const double* num = p_[e] > 0 ? num_pos : num_neg;
      const double* den = p_[e] > 0 ? den_pos : den_neg;
      // d(k)/dx and d(k)/dy for the four bilinear corners.
      const double kx[2] = {1.0 - c.fx, c.fx};
      const double ky[2] = {1.0 - c.fy, c.fy};
      const double dkx[2] = {-1.0, 1.0};
      Point2 g{};
      for (int dy = 0; dy < 2; ++dy) {
        const long py = c.y0 + dy;
        if (py < 0 || py >= H) continue;
        const double dky = dy == 0 ? -1.0 : 1.0;
        for (int dx = 0; dx < 2; ++dx) {
          const long px = c.x0 + dx;
          if (px < 0 || px >= W) continue;
          const std::size_t idx = static_cast<std::size_t>(py) * W + static_cast<std::size_t>(px);
          const double d = den[idx] + kIweEpsilon;
          const double T = num[idx] / d;
          const double coef = 2.0 * T * (w - T) / d;
          g.x += coef * dkx[dx] * ky[dy];
          g.y += coef * kx[dx] * dky;
        }
      }
      g = (scale * inv_active) * g;
      const auto& v = tris[tri_[e]].v;
      const double lam[3] = {l1_[j], l2_[j], l3_[j]};
      double* dl[3] = {&dl1_[j], &dl2_[j], &dl3_[j]};
      for (int k = 0; k < 3; ++k) {
        grad[v[k] * K + ref_knot] += lam[k] * g;
        *dl[k] += dot(g, tf.at(v[k], ref_knot));
      }
    }
  }
  return value;
}

// ---------------------------------------------------------------------------

std::vector<Event> read_events_csv(const std::filesystem::path& path) {
  const auto rows = read_csv(path, kEventsHeader);
  std::vector<Event> events;
  events.reserve(rows.size());
  for (const auto& r : rows) {
    Event e{parse_double(r[1], "event x"), parse_double(r[2], "event y"), parse_double(r[0], "event t"),
            static_cast<int>(parse_int(r[3], "event polarity"))};
    if (e.p != 1 && e.p != -1) throw Error(ErrorKind::Io, path.string() + ": polarity must be 1 or -1");
    if (!events.empty() && e.t < events.back().t) {
      throw Error(ErrorKind::Io, path.string() + ": events are not time-sorted");
    }
    events.push_back(e);
  }
  return events;
}

void write_events_csv(const std::filesystem::path& path, std::span<const Event> events) {
  auto out = open_for_write(path);
  out << kEventsHeader << '\n';
  for (const Event& e : events) {
    out << format_double(e.t) << ',' << format_double(e.x) << ',' << format_double(e.y) << ',' << e.p << '\n';
  }
}

std::vector<Event> events_between(std::span<const Event> events, double t0, double t1) {
  auto lo = std::lower_bound(events.begin(), events.end(), t0, [](const Event& e, double t) { return e.t < t; });
  auto hi = std::upper_bound(events.begin(), events.end(), t1, [](double t, const Event& e) { return t < e.t; });
  return {lo, hi};
}

}  // namespace evdm
