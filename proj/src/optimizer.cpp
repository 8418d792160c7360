#include "evdm/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>

#include "evdm/error.hpp"
#include "evdm/evaluation.hpp"
#include "evdm/strain.hpp"

namespace evdm {

void TrackerConfig::validate() const {
  auto fail = [](const std::string& m) { throw Error(ErrorKind::InvalidConfig, m); };
  if (M < 1) fail("M must be >= 1");
  if (max_levels < 0) fail("max_levels must be >= 0");
  if (!(k > 1.0)) fail("k must be > 1");
  if (!(tau > 0.0 && tau < 1.0)) fail("tau must lie in (0, 1)");
  for (double l : {lambda1_rigid, lambda2_rigid, lambda1_coarse, lambda2_coarse, lambda1_fine, lambda2_fine,
                   lambda3_greedy}) {
    if (!(l >= 0.0)) fail("objective weights must be >= 0");
  }
  if (!(step > 0.0) || !(step_rigid > 0.0) || !(step_final > 0.0)) fail("step, step_rigid and step_final must be > 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) fail("beta1, beta2 must lie in [0, 1)");
  if (iters_rigid < 0 || iters_level < 0 || iters_greedy < 0) fail("iteration counts must be >= 0");
  if (greedy_max_rounds < 0) fail("greedy_max_rounds must be >= 0");
  if (R < 1) fail("R must be >= 1");
  if (samples < 1) throw Error(ErrorKind::InvalidSampleDensity, "samples must be >= 1");
  if (search_radius < 0.0 || !(search_step > 0.0)) fail("search_radius >= 0 and search_step > 0 required");
  if (grid_cols < 1 || grid_rows < 1) fail("grid_cols and grid_rows must be >= 1");
  if (!(query_spacing > 0.0)) fail("query_spacing must be > 0");
}

namespace {

struct Field {
  const char* key;
  double TrackerConfig::*d = nullptr;
  int TrackerConfig::*i = nullptr;
};

const std::vector<Field>& fields() {
  static const std::vector<Field> f = {
      {"M", nullptr, &TrackerConfig::M},
      {"max_levels", nullptr, &TrackerConfig::max_levels},
      {"lambda1_rigid", &TrackerConfig::lambda1_rigid},
      {"lambda2_rigid", &TrackerConfig::lambda2_rigid},
      {"lambda1_coarse", &TrackerConfig::lambda1_coarse},
      {"lambda2_coarse", &TrackerConfig::lambda2_coarse},
      {"lambda1_fine", &TrackerConfig::lambda1_fine},
      {"lambda2_fine", &TrackerConfig::lambda2_fine},
      {"lambda3_greedy", &TrackerConfig::lambda3_greedy},
      {"step", &TrackerConfig::step},
      {"step_rigid", &TrackerConfig::step_rigid},
      {"step_final", &TrackerConfig::step_final},
      {"beta1", &TrackerConfig::beta1},
      {"beta2", &TrackerConfig::beta2},
      {"iters_rigid", nullptr, &TrackerConfig::iters_rigid},
      {"iters_level", nullptr, &TrackerConfig::iters_level},
      {"iters_greedy", nullptr, &TrackerConfig::iters_greedy},
      {"k", &TrackerConfig::k},
      {"tau", &TrackerConfig::tau},
      {"greedy_max_rounds", nullptr, &TrackerConfig::greedy_max_rounds},
      {"R", nullptr, &TrackerConfig::R},
      {"samples", nullptr, &TrackerConfig::samples},
      {"search_radius", &TrackerConfig::search_radius},
      {"search_step", &TrackerConfig::search_step},
      {"grid_cols", nullptr, &TrackerConfig::grid_cols},
      {"grid_rows", nullptr, &TrackerConfig::grid_rows},
      {"query_spacing", &TrackerConfig::query_spacing},
  };
  return f;
}

}  // namespace

TrackerConfig tracker_config_from(const FlatConfig& cfg) {
  TrackerConfig c;
  for (const auto& [key, value] : cfg) {
    if (key == "extrapolate") {
      if (value != "0" && value != "1" && value != "true" && value != "false") {
        throw Error(ErrorKind::InvalidConfig, "extrapolate must be true/false");
      }
      c.extrapolate = value == "1" || value == "true";
      continue;
    }
    if (key == "roi_x0") { c.roi.x0 = parse_double(value, key); continue; }
    if (key == "roi_y0") { c.roi.y0 = parse_double(value, key); continue; }
    if (key == "roi_x1") { c.roi.x1 = parse_double(value, key); continue; }
    if (key == "roi_y1") { c.roi.y1 = parse_double(value, key); continue; }
    const auto& fs = fields();
    const auto it = std::find_if(fs.begin(), fs.end(), [&](const Field& f) { return key == f.key; });
    if (it == fs.end()) throw Error(ErrorKind::InvalidConfig, "unknown tracker key '" + key + "'");
    if (it->d != nullptr) {
      c.*(it->d) = parse_double(value, key);
    } else {
      c.*(it->i) = static_cast<int>(parse_int(value, key));
    }
  }
  c.validate();
  return c;
}

FlatConfig to_flat_config(const TrackerConfig& c) {
  FlatConfig out;
  for (const auto& f : fields()) {
    out[f.key] = f.d != nullptr ? format_double(c.*(f.d)) : std::to_string(c.*(f.i));
  }
  out["extrapolate"] = c.extrapolate ? "true" : "false";
  out["roi_x0"] = format_double(c.roi.x0);
  out["roi_y0"] = format_double(c.roi.y0);
  out["roi_x1"] = format_double(c.roi.x1);
  out["roi_y1"] = format_double(c.roi.y1);
  return out;
}

Lambdas stage_lambdas(const TrackerConfig& c, Stage stage) {
  switch (stage) {
    case Stage::Rigid: return {c.lambda1_rigid, c.lambda2_rigid, 0.0};
    case Stage::Coarse: return {c.lambda1_coarse, c.lambda2_coarse, 0.0};
    case Stage::Fine: return {c.lambda1_fine, c.lambda2_fine, 0.0};
    case Stage::Greedy: return {c.lambda1_fine, c.lambda2_fine, c.lambda3_greedy};
  }
  return {};
}

// ---------------------------------------------------------------------------

WindowProblem::WindowProblem(EventWindow window, FrameSet frames, const TrackerConfig& cfg)
    : window_(std::move(window)),
      frames_(frames),
      grid_(sample_grid(cfg.samples)),
      sensor_{frames.current->width, frames.current->height},
      events_(window_, sensor_) {}

WindowProblem::Breakdown WindowProblem::evaluate(const TrajectoryField& tf, Lambdas lam, std::span<Point2> grad) {
  Breakdown b;
  if (lam.l1 != 0.0) {
    const auto terms = events_.evaluate(tf, grad, lam.l1, lam.l1);
    b.warp1 = terms.warp1;
    b.warp2 = terms.warp2;
  }
  if (lam.l2 != 0.0) {
    try {
      b.f_cc = frame_objective(tf, frames_, grid_, grad, -lam.l2).value;
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::NoTexture) throw;
      b.textureless = true;
    }
  }
  if (lam.l3 != 0.0) b.f_s = strain_continuity_grad(tf, tf.grid().back(), grad, lam.l3);
  b.loss = lam.l1 * (b.warp1 + b.warp2) - lam.l2 * b.f_cc + lam.l3 * b.f_s;
  return b;
}

double total_objective(WindowProblem& problem, const TrajectoryField& tf, Lambdas lambdas) {
  problem.refresh_association(tf);
  return problem.evaluate(tf, lambdas).loss;
}

std::size_t ConvergenceReport::num_converged() const {
  return static_cast<std::size_t>(std::count(converged.begin(), converged.end(), 1));
}

// ---------------------------------------------------------------------------

namespace {

class Adam {
 public:
  Adam(std::size_t n, double beta1, double beta2) : m_(n, 0.0), v_(n, 0.0), b1_(beta1), b2_(beta2) {}

  void step(std::span<double> x, std::span<const double> g, double lr) {
    ++t_;
    const double c1 = 1.0 - std::pow(b1_, t_);
    const double c2 = 1.0 - std::pow(b2_, t_);
    for (std::size_t i = 0; i < x.size(); ++i) {
      m_[i] = b1_ * m_[i] + (1.0 - b1_) * g[i];
      v_[i] = b2_ * v_[i] + (1.0 - b2_) * g[i] * g[i];
      x[i] -= lr * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + 1e-12);
    }
  }

 private:
  std::vector<double> m_, v_;
  double b1_, b2_;
  int t_ = 0;
};

using ApplyFn = std::function<void(std::span<const double>, TrajectoryField&)>;
using PullbackFn = std::function<void(std::span<const Point2>, std::span<double>)>;

// Adam over a parameter vector; the association is refreshed every R
// iterations and the best state seen at a refresh point is kept.
void run_stage(TrajectoryField& tf, WindowProblem& problem, std::vector<double>& theta, const ApplyFn& apply,
               const PullbackFn& pullback, Lambdas lam, int iters, double step, const TrackerConfig& cfg,
               StageTrace& trace, bool watch_divergence) {
  std::vector<double> best_theta = theta;
  double best = std::numeric_limits<double>::infinity();
  std::vector<Point2> grad(tf.positions().size());
  std::vector<double> gtheta(theta.size());
  Adam adam(theta.size(), cfg.beta1, cfg.beta2);
  double prev = std::numeric_limits<double>::infinity();
  int rising = 0;
  for (int it = 0; it <= iters; ++it) {
    apply(theta, tf);
    const bool refresh = it % cfg.R == 0 || it == iters;
    if (refresh) problem.refresh_association(tf);
    std::fill(grad.begin(), grad.end(), Point2{});
    const bool last = it == iters;
    const auto b = problem.evaluate(tf, lam, last ? std::span<Point2>{} : std::span<Point2>(grad));
    if (it == 0) trace.initial_loss = b.loss;
    if (refresh) {
      trace.curve.emplace_back(it, b.loss);
      if (b.loss < best) {
        best = b.loss;
        best_theta = theta;
      }
    }
    if (watch_divergence) {
      rising = b.loss > prev ? rising + 1 : 0;
      if (rising >= 50) {
        throw Error(ErrorKind::RigidStageDiverged, "loss rose for 50 consecutive iterations");
      }
    }
    prev = b.loss;
    if (last) break;
    pullback(grad, gtheta);
    const double lr = step * std::pow(cfg.step_final, static_cast<double>(it) / std::max(1, iters));
    adam.step(theta, gtheta, lr);
  }
  theta = best_theta;
  apply(theta, tf);
  trace.final_loss = best;
  trace.reverted = !(best < trace.initial_loss);
}

Point2 rotate(Point2 p, double c, double s) { return {c * p.x - s * p.y, s * p.x + c * p.y}; }

std::vector<Point2> knot_centroids(const TrajectoryField& tf) {
  const std::size_t K = tf.num_knots(), n = tf.num_anchors();
  std::vector<Point2> c(K);
  for (std::size_t k = 0; k < K; ++k) {
    for (std::size_t a = 0; a < n; ++a) c[k] += tf.at(a, k);
    c[k] = (1.0 / static_cast<double>(n)) * c[k];
  }
  return c;
}

// Moves knot k >= 1 by d * (t_k - t_0) / (t_K - t_0).
TrajectoryField shifted(const TrajectoryField& base, Point2 d) {
  TrajectoryField tf = base;
  const auto& g = base.grid();
  const double span = g.back() - g.front();
  for (std::size_t a = 0; a < tf.num_anchors(); ++a) {
    for (std::size_t k = 1; k < tf.num_knots(); ++k) tf.at(a, k) += ((g[k] - g.front()) / span) * d;
  }
  return tf;
}

}  // namespace

TrajectoryField rigid_stage(const TrajectoryField& tf, WindowProblem& problem, const TrackerConfig& cfg,
                            std::vector<StageTrace>* trace) {
  const Lambdas lam = stage_lambdas(cfg, Stage::Rigid);
  const std::size_t K = tf.num_knots(), n = tf.num_anchors();

  // Coarse search over constant-velocity translations, then a finer one
  // around the winner.
  Point2 best_d{};
  double best = total_objective(problem, tf, lam);
  StageTrace search{"rigid_search", {}, best, best, false};
  if (cfg.search_radius > 0.0) {
    auto scan = [&](Point2 center, double radius, double step) {
      const int r = static_cast<int>(std::floor(radius / step + 1e-9));
      Point2 win = best_d;
      for (int j = -r; j <= r; ++j) {
        for (int i = -r; i <= r; ++i) {
          const Point2 d = center + Point2{i * step, j * step};
          if (d == Point2{}) continue;
          const double l = total_objective(problem, shifted(tf, d), lam);
          if (l < best) {
            best = l;
            win = d;
          }
        }
      }
      best_d = win;
    };
    scan({}, cfg.search_radius, cfg.search_step);
    scan(best_d, cfg.search_step, 0.5 * cfg.search_step);
  }
  search.final_loss = best;
  if (trace) trace->push_back(search);

  const TrajectoryField base = tf;
  const auto centroid = knot_centroids(base);
  double radius = 0.0;
  for (std::size_t a = 0; a < n; ++a) radius += norm(base.at(a, 0) - centroid[0]);
  radius = std::max(1.0, radius / static_cast<double>(n));
  const auto& g = base.grid();
  std::vector<double> theta(3 * (K - 1), 0.0);
  for (std::size_t k = 1; k < K; ++k) {
    const double f = (g[k] - g.front()) / (g.back() - g.front());
    theta[3 * (k - 1) + 1] = f * best_d.x;
    theta[3 * (k - 1) + 2] = f * best_d.y;
  }
  const ApplyFn apply = [&](std::span<const double> th, TrajectoryField& out) {
    for (std::size_t k = 1; k < K; ++k) {
      const double ang = th[3 * (k - 1)] / radius;
      const double c = std::cos(ang), s = std::sin(ang);
      const Point2 t{th[3 * (k - 1) + 1], th[3 * (k - 1) + 2]};
      for (std::size_t a = 0; a < n; ++a) {
        out.at(a, k) = centroid[k] + rotate(base.at(a, k) - centroid[k], c, s) + t;
      }
    }
  };
  TrajectoryField cur = base;
  const PullbackFn pullback = [&](std::span<const Point2> gp, std::span<double> gt) {
    for (std::size_t k = 1; k < K; ++k) {
      const double ang = theta[3 * (k - 1)] / radius;
      const double c = std::cos(ang), s = std::sin(ang);
      double gang = 0.0;
      Point2 gtr{};
      for (std::size_t a = 0; a < n; ++a) {
        const Point2 ga = gp[a * K + k];
        const Point2 d = base.at(a, k) - centroid[k];
        gang += dot(ga, Point2{-s * d.x - c * d.y, c * d.x - s * d.y});
        gtr += ga;
      }
      gt[3 * (k - 1)] = gang / radius;
      gt[3 * (k - 1) + 1] = gtr.x;
      gt[3 * (k - 1) + 2] = gtr.y;
    }
  };
  StageTrace st{"rigid", {}, 0.0, 0.0, false};
  run_stage(cur, problem, theta, apply, pullback, lam, cfg.iters_rigid, cfg.step_rigid, cfg, st, true);
  if (trace) trace->push_back(st);
  return cur;
}

TrajectoryField optimize_level(const TrajectoryField& tf, WindowProblem& problem, const TrackerConfig& cfg, int level,
                               Lambdas lam, int iters, std::span<const char> frozen, StageTrace* trace) {
  const auto& mesh = tf.mesh();
  const std::size_t K = tf.num_knots(), n = tf.num_anchors();
  const bool prolong = level < mesh.level;
  std::vector<std::size_t> free_anchors;
  for (std::size_t a = 0; a < n; ++a) {
    if (mesh.anchor_level[a] > level) continue;
    if (!frozen.empty() && frozen[a]) continue;
    free_anchors.push_back(a);
  }
  const TrajectoryField base = tf;
  TrajectoryField cur = tf;
  std::vector<double> theta(2 * free_anchors.size() * (K - 1), 0.0);
  std::vector<Point2> column(n);
  const ApplyFn apply = [&](std::span<const double> th, TrajectoryField& out) {
    for (std::size_t k = 1; k < K; ++k) {
      std::fill(column.begin(), column.end(), Point2{});
      for (std::size_t f = 0; f < free_anchors.size(); ++f) {
        const std::size_t o = 2 * (f * (K - 1) + (k - 1));
        column[free_anchors[f]] = {th[o], th[o + 1]};
      }
      if (prolong) prolongate(mesh, level, column);
      for (std::size_t a = 0; a < n; ++a) {
        if (!frozen.empty() && frozen[a]) continue;
        out.at(a, k) = base.at(a, k) + column[a];
      }
    }
  };
  const PullbackFn pullback = [&](std::span<const Point2> gp, std::span<double> gt) {
    for (std::size_t k = 1; k < K; ++k) {
      for (std::size_t a = 0; a < n; ++a) {
        column[a] = (!frozen.empty() && frozen[a]) ? Point2{} : gp[a * K + k];
      }
      if (prolong) restrict_to_level(mesh, level, column);
      for (std::size_t f = 0; f < free_anchors.size(); ++f) {
        const std::size_t o = 2 * (f * (K - 1) + (k - 1));
        gt[o] = column[free_anchors[f]].x;
        gt[o + 1] = column[free_anchors[f]].y;
      }
    }
  };
  StageTrace st{"level" + std::to_string(level), {}, 0.0, 0.0, false};
  if (!theta.empty()) run_stage(cur, problem, theta, apply, pullback, lam, iters, cfg.step, cfg, st, false);
  if (trace) *trace = std::move(st);
  return cur;
}

ConvergenceReport assess_convergence(const TrajectoryField& tf, const FrameSet& frames, const SampleGrid& grid,
                                     double k, double tau) {
  const auto& mesh = tf.mesh();
  const std::size_t nt = mesh.num_triangles();
  const Frame& cur = *frames.current;
  const Frame& init = *frames.initial;
  ConvergenceReport r;
  r.P.assign(nt, 1.0);
  r.converged.assign(nt, 0);
  r.no_texture.assign(nt, 0);
  r.fixed_anchor.assign(mesh.num_anchors(), 0);
  std::vector<std::vector<double>> se(nt);
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t j = 0; j < nt; ++j) {
    const auto pc = sample_points(tf.vertices_at(j, cur.t), grid);
    const auto pi = sample_points(mesh.rest_vertices(j), grid);
    std::vector<double> a, b;
    for (std::size_t i = 0; i < pc.size(); ++i) {
      if (!cur.contains(pc[i]) || !init.contains(pi[i])) continue;
      a.push_back(bilinear_sample(cur, pc[i]));
      b.push_back(bilinear_sample(init, pi[i]));
    }
    if (a.size() < kMinValidSamples) continue;
    auto zscore = [](std::vector<double>& v) {
      double mean = 0.0;
      for (double x : v) mean += x;
      mean /= static_cast<double>(v.size());
      double var = 0.0;
      for (double x : v) var += (x - mean) * (x - mean);
      const double sd = std::sqrt(var / static_cast<double>(v.size()));
      if (sd < kZeroVarianceSigma) return false;
      for (double& x : v) x = (x - mean) / sd;
      return true;
    };
    if (!zscore(a) || !zscore(b)) {
      r.no_texture[j] = 1;
      continue;
    }
    se[j].resize(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      se[j][i] = (a[i] - b[i]) * (a[i] - b[i]);
      sum += se[j][i];
    }
    count += a.size();
  }
  const double mse = count > 0 ? sum / static_cast<double>(count) : 0.0;
  for (std::size_t j = 0; j < nt; ++j) {
    if (se[j].empty()) continue;
    const auto out = std::count_if(se[j].begin(), se[j].end(), [&](double e) { return e > k * mse; });
    r.P[j] = static_cast<double>(out) / static_cast<double>(se[j].size());
    r.converged[j] = r.P[j] <= tau ? 1 : 0;
  }
  return r;
}

std::pair<TrajectoryField, ConvergenceReport> coarse_to_fine(const TrajectoryField& tf, WindowProblem& problem,
                                                             const TrackerConfig& cfg,
                                                             std::vector<StageTrace>* trace) {
  TrajectoryField cur = tf;
  for (int level = 0; level <= cfg.max_levels; ++level) {
    while (cur.mesh().level < level) cur = subdivide_field(cur);
    const Stage stage = level == cfg.max_levels ? Stage::Fine : Stage::Coarse;
    StageTrace st;
    cur = optimize_level(cur, problem, cfg, level, stage_lambdas(cfg, stage), cfg.iters_level, {}, &st);
    if (trace) trace->push_back(std::move(st));
  }
  auto report = assess_convergence(cur, problem.frames(), problem.samples(), cfg.k, cfg.tau);
  return {std::move(cur), std::move(report)};
}

std::pair<TrajectoryField, ConvergenceReport> greedy_round(const TrajectoryField& tf, WindowProblem& problem,
                                                           const TrackerConfig& cfg, const ConvergenceReport& report,
                                                           StageTrace* trace) {
  if (report.num_converged() == report.converged.size()) return {tf, report};
  const auto& mesh = tf.mesh();
  std::vector<char> fixed = report.fixed_anchor;
  fixed.resize(mesh.num_anchors(), 0);
  const auto inc = incident_triangles(mesh);
  for (std::size_t a = 0; a < mesh.num_anchors(); ++a) {
    if (inc[a].empty()) continue;
    const bool all = std::all_of(inc[a].begin(), inc[a].end(), [&](int t) { return report.converged[t] != 0; });
    if (all) fixed[a] = 1;
  }
  StageTrace st;
  auto cur = optimize_level(tf, problem, cfg, mesh.level, stage_lambdas(cfg, Stage::Greedy), cfg.iters_greedy, fixed,
                            &st);
  st.name = "greedy" + std::to_string(report.rounds + 1);
  if (trace) *trace = std::move(st);
  auto next = assess_convergence(cur, problem.frames(), problem.samples(), cfg.k, cfg.tau);
  next.fixed_anchor = std::move(fixed);
  next.rounds = report.rounds + 1;
  return {std::move(cur), std::move(next)};
}

WindowResult track_window(const TrajectoryField& init, std::vector<Event> events, double t_prev, double t_cur,
                          const FrameSet& frames, const TrackerConfig& cfg) {
  auto window = partition_bins(std::move(events), t_prev, t_cur, cfg.M);
  WindowResult res;
  TrajectoryField tf = handoff(init, window.grid(), cfg.extrapolate);
  WindowProblem problem(std::move(window), frames, cfg);
  try {
    tf = rigid_stage(tf, problem, cfg, &res.trace);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::RigidStageDiverged) throw;
    res.failure = e.what();
  }
  auto [field, report] = coarse_to_fine(tf, problem, cfg, &res.trace);
  while (report.rounds < cfg.greedy_max_rounds && report.num_converged() < report.converged.size()) {
    StageTrace st;
    std::tie(field, report) = greedy_round(field, problem, cfg, report, &st);
    res.trace.push_back(std::move(st));
  }
  report.greedy_stalled = report.num_converged() < report.converged.size() && report.rounds > 0;
  res.field = std::move(field);
  res.report = std::move(report);
  return res;
}

// ---------------------------------------------------------------------------

SequenceInput load_sequence(const std::filesystem::path& events_csv, const std::filesystem::path& manifest) {
  SequenceInput in;
  in.events = read_events_csv(events_csv);
  for (const auto& m : read_manifest(manifest)) {
    in.frames.push_back(load_frame_pgm(m.path, m.t));
    in.frame_index.push_back(m.frame_index);
  }
  if (in.frames.size() < 2) throw Error(ErrorKind::Io, manifest.string() + ": need at least two frames");
  for (const auto& f : in.frames) {
    if (f.width != in.frames.front().width || f.height != in.frames.front().height) {
      throw Error(ErrorKind::Io, manifest.string() + ": frames differ in size");
    }
  }
  return in;
}

namespace {

Roi effective_roi(const TrackerConfig& cfg, const Frame& f) {
  if (cfg.roi.width() > 0.0 && cfg.roi.height() > 0.0) return cfg.roi;
  return {0.25 * f.width, 0.25 * f.height, 0.75 * f.width, 0.75 * f.height};
}

}  // namespace

SequenceResult track_sequence(const SequenceInput& input, const TrackerConfig& cfg) {
  cfg.validate();
  SequenceResult out;
  const auto& frames = input.frames;
  const Roi roi = effective_roi(cfg, frames.front());
  out.query = input.query ? *input.query : grid_points(roi, cfg.query_spacing);
  TrajectoryField prev = static_field(make_grid_mesh(roi, cfg.grid_cols, cfg.grid_rows),
                                      TimeGrid({frames[0].t, frames[1].t}));
  for (std::size_t i = 1; i < frames.size(); ++i) {
    const double t0 = frames[i - 1].t, t1 = frames[i].t;
    const bool last = i + 1 == frames.size();
    auto ev = events_between(input.events, t0, t1);
    if (!last) {
      while (!ev.empty() && ev.back().t >= t1) ev.pop_back();
    }
    const FrameSet fs{&frames.front(), &frames[i - 1], &frames[i]};
    WindowResult res;
    try {
      res = track_window(prev, std::move(ev), t0, t1, fs, cfg);
    } catch (const Error& e) {
      res.field = handoff(prev, TimeGrid({t0, t1}), cfg.extrapolate);
      res.failure = e.what();
    }
    prev = res.field;
    out.windows.push_back(std::move(res));
  }
  return out;
}

namespace {

std::string csv_safe(std::string s) {
  std::replace(s.begin(), s.end(), ',', ';');
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}

}  // namespace

void write_sequence_outputs(const std::filesystem::path& out_dir, const SequenceInput& input,
                            const SequenceResult& result, const TrackerConfig& cfg) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw Error(ErrorKind::Io, "cannot create " + out_dir.string() + ": " + ec.message());
  {
    auto os = open_for_write(out_dir / "trajectories.csv");
    os << kTrajectoryHeader << '\n';
    for (std::size_t w = 0; w < result.windows.size(); ++w) {
      write_trajectory_rows(os, static_cast<int>(w + 1), result.windows[w].field);
    }
  }
  {
    DisplacementTable table;
    const auto& q = result.query;
    for (std::size_t f = 0; f < input.frames.size(); ++f) {
      std::vector<Point2> u(q.size());
      if (f > 0) u = displacement_field(result.windows[f - 1].field, q, input.frames[f].t);
      for (std::size_t p = 0; p < q.size(); ++p) {
        table.push_back({input.frame_index[f], input.frames[f].t, static_cast<int>(p), q[p].x, q[p].y, u[p].x,
                         u[p].y});
      }
    }
    write_displacements(out_dir / "displacements.csv", table);
  }
  {
    auto os = open_for_write(out_dir / "strain.csv");
    os << kStrainHeader << '\n';
    for (const auto& w : result.windows) write_strain_rows(os, anchor_strain(w.field, w.field.grid().back()));
  }
  {
    auto os = open_for_write(out_dir / "convergence.csv");
    os << "window,triangle,P,converged,no_texture\n";
    for (std::size_t w = 0; w < result.windows.size(); ++w) {
      const auto& r = result.windows[w].report;
      for (std::size_t j = 0; j < r.P.size(); ++j) {
        os << w + 1 << ',' << j << ',' << format_double(r.P[j]) << ',' << int(r.converged[j]) << ','
           << int(r.no_texture[j]) << '\n';
      }
    }
  }
  {
    auto os = open_for_write(out_dir / "diagnostics.csv");
    os << "window,stage,iteration,loss\n";
    for (std::size_t w = 0; w < result.windows.size(); ++w) {
      for (const auto& st : result.windows[w].trace) {
        for (const auto& [it, loss] : st.curve) {
          os << w + 1 << ',' << st.name << ',' << it << ',' << format_double(loss) << '\n';
        }
      }
    }
  }
  {
    auto os = open_for_write(out_dir / "windows.csv");
    os << "window,t_start,t_end,triangles,converged,greedy_rounds,greedy_stalled,failure\n";
    for (std::size_t w = 0; w < result.windows.size(); ++w) {
      const auto& r = result.windows[w];
      const auto& g = r.field.grid();
      os << w + 1 << ',' << format_double(g.front()) << ',' << format_double(g.back()) << ','
         << r.field.mesh().num_triangles() << ',' << r.report.num_converged() << ',' << r.report.rounds << ','
         << int(r.report.greedy_stalled) << ',' << csv_safe(r.failure) << '\n';
    }
  }
  if (!result.windows.empty()) {
    const auto& mesh = result.windows.back().field.mesh();
    auto os = open_for_write(out_dir / "mesh_anchors.csv");
    os << "anchor,x,y,level\n";
    for (std::size_t a = 0; a < mesh.num_anchors(); ++a) {
      os << a << ',' << format_double(mesh.anchors[a].x) << ',' << format_double(mesh.anchors[a].y) << ','
         << mesh.anchor_level[a] << '\n';
    }
    auto ot = open_for_write(out_dir / "mesh_triangles.csv");
    ot << "triangle,a,b,c\n";
    for (std::size_t j = 0; j < mesh.num_triangles(); ++j) {
      const auto& v = mesh.triangles[j].v;
      ot << j << ',' << v[0] << ',' << v[1] << ',' << v[2] << '\n';
    }
  }
  {
    auto os = open_for_write(out_dir / "run.cfg");
    write_flat_config(os, to_flat_config(cfg));
  }
}

}  // namespace evdm
