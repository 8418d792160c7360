// Prints one PASS/FAIL line per acceptance criterion. Exits non-zero when any
// criterion fails. Usage: acceptance [work_dir]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "evdm/cli.hpp"
#include "evdm/evaluation.hpp"
#include "evdm/optimizer.hpp"
#include "evdm/simulator.hpp"
#include "metric_tables.hpp"

using namespace evdm;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

fs::path g_work;

// ---------------------------------------------------------------------------

Outcome affine_reproduction() {
  SceneSpec s;
  s.validate();
  auto mesh = subdivide(make_grid_mesh(s.roi, 4, 4));
  TimeGrid grid({0.0, 0.05, 0.1, 0.15, 0.2});
  std::mt19937_64 rng(101);
  std::uniform_real_distribution<double> a(-0.15, 0.15), b(-8.0, 8.0), qx(s.roi.x0, s.roi.x1), qy(s.roi.y0, s.roi.y1);
  double worst = 0.0;
  for (int n = 0; n < 5; ++n) {
    AffineMap f;
    f.A = {{{1.0 + a(rng), a(rng)}, {a(rng), 1.0 + a(rng)}}};
    f.b = {b(rng), b(rng)};
    TrajectoryField tf(mesh, grid);
    for (std::size_t i = 0; i < tf.num_anchors(); ++i)
      for (std::size_t k = 0; k < tf.num_knots(); ++k) {
        const double r = grid[k] / grid.back();
        const Point2 X = mesh.anchors[i];
        tf.at(i, k) = X + r * (f.apply(X) - X);
      }
    std::vector<Point2> q;
    for (int i = 0; i < 2000; ++i) q.push_back({qx(rng), qy(rng)});
    for (std::size_t k = 0; k < grid.size(); ++k) {
      const double r = grid[k] / grid.back();
      auto u = displacement_field(tf, q, grid[k]);
      for (std::size_t i = 0; i < q.size(); ++i) {
        const Point2 want = r * (f.apply(q[i]) - q[i]);
        worst = std::max(worst, norm(u[i] - want));
      }
    }
  }
  return {worst < 1e-9, "max error " + fmt("%.3g", worst) + " px"};
}

Outcome oracle_equivalence() {
  auto mesh = make_grid_mesh({0, 0, 128, 128}, 4, 4);
  std::mt19937_64 rng(202);
  std::uniform_real_distribution<double> jit(-6.0, 6.0), pos(-10.0, 138.0);
  std::vector<Point2> verts = mesh.anchors;
  for (auto& v : verts) v += Point2{jit(rng), jit(rng)};
  int agree = 0, inside = 0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    const Point2 p{pos(rng), pos(rng)};
    int want = -1;
    for (std::size_t t = 0; t < mesh.num_triangles() && want < 0; ++t) {
      const auto& v = mesh.triangles[t].v;
      const TriangleVertices tri{verts[v[0]], verts[v[1]], verts[v[2]]};
      if (std::abs(signed_area(tri)) < kDegenerateArea) continue;
      if (point_in_triangle(p, tri)) want = static_cast<int>(t);
    }
    const auto got = locate(mesh, verts, p);
    const int g = got ? got->triangle : -1;
    agree += g == want ? 1 : 0;
    inside += want >= 0 ? 1 : 0;
  }
  return {agree == n && mesh.num_triangles() == 32,
          std::to_string(agree) + "/" + std::to_string(n) + " agree (" + std::to_string(inside) + " inside)"};
}

// Distance of v to the nearest integer.
double kink_distance(double v) { return std::abs(v - std::round(v)); }

Outcome gradient_check() {
  SceneSpec s;
  s.family = DeformationFamily::AffineStretch;
  s.amplitude = 10.0;
  s.duration = 1.0;
  s.validate();
  SpeckleTexture tex(s);
  const double t0 = 0.4, t1 = 0.6;
  Frame f0 = render_frame(s, tex, 0.0), fa = render_frame(s, tex, t0), fb = render_frame(s, tex, t1);
  TrackerConfig cfg;
  cfg.roi = s.roi;
  const auto all = generate_events(s, tex);
  const auto full = partition_bins(events_between(all, t0, t1), t0, t1, cfg.M);
  const TimeGrid grid = full.grid();

  auto mesh = subdivide(make_grid_mesh(s.roi, 2, 2));
  TrajectoryField tf(mesh, grid);
  std::mt19937_64 rng(303);
  std::uniform_real_distribution<double> j(-0.3, 0.3);
  for (std::size_t a = 0; a < tf.num_anchors(); ++a)
    for (std::size_t k = 0; k < tf.num_knots(); ++k) {
      const Point2 X = mesh.anchors[a];
      tf.at(a, k) = X + gt_displacement(s, X, grid[k]) + (k > 0 ? Point2{j(rng), j(rng)} : Point2{});
    }

  // Keep events whose warped positions stay clear of the splat kernel kinks
  // at every reference knot they are splatted to.
  const double clear = 0.05;
  const std::size_t M = full.num_bins();
  EventWindow w;
  w.t_start = t0;
  w.t_end = t1;
  w.bin_edges = full.bin_edges;
  w.bin_offsets.push_back(0);
  std::size_t dropped = 0;
  for (std::size_t b = 0; b < M; ++b) {
    for (std::size_t i = full.bin_offsets[b]; i < full.bin_offsets[b + 1]; ++i) {
      const Event& e = full.events[i];
      const auto as = locate(mesh, tf.anchor_positions_at(e.t), {e.x, e.y});
      bool ok = true;
      if (as) {
        for (std::size_t k : {b, b + 1, std::size_t{0}, M}) {
          const Point2 p = warp_point(tf, as->triangle, as->weights, grid[k]);
          ok &= kink_distance(p.x) >= clear && kink_distance(p.y) >= clear;
        }
      }
      if (ok) {
        w.events.push_back(e);
      } else {
        ++dropped;
      }
    }
    w.bin_offsets.push_back(w.events.size());
  }

  WindowProblem problem(w, {&f0, &fa, &fb}, cfg);
  problem.refresh_association(tf);
  const Lambdas lam{1.0, 0.5, 1.0};
  std::vector<Point2> g(tf.positions().size());
  problem.evaluate(tf, lam, g);

  const double h = 1e-3;
  const std::size_t K = tf.num_knots();
  const auto samples = sample_grid(cfg.samples);
  const auto inc = incident_triangles(mesh);
  // Frame samples of the last knot must not cross a pixel line within the
  // finite-difference step either.
  auto frame_clear = [&](std::size_t anchor, std::size_t knot) {
    if (knot != K - 1) return true;
    for (int t : inc[anchor]) {
      const auto& v = mesh.triangles[t].v;
      const TriangleVertices tri{tf.at(v[0], knot), tf.at(v[1], knot), tf.at(v[2], knot)};
      for (const Point2 p : sample_points(tri, samples))
        if (kink_distance(p.x) < 2 * h || kink_distance(p.y) < 2 * h) return false;
    }
    return true;
  };

  std::uniform_int_distribution<std::size_t> pick_a(0, tf.num_anchors() - 1), pick_k(1, K - 1);
  double worst = 0.0;
  int checked = 0, tries = 0;
  while (checked < 20 && tries < 10000) {
    ++tries;
    const std::size_t a = pick_a(rng), k = pick_k(rng);
    if (!frame_clear(a, k)) continue;
    const int c = checked % 2;
    const std::size_t i = a * K + k;
    auto plus = tf, minus = tf;
    (c ? plus.positions()[i].y : plus.positions()[i].x) += h;
    (c ? minus.positions()[i].y : minus.positions()[i].x) -= h;
    const double fd = (problem.evaluate(plus, lam).loss - problem.evaluate(minus, lam).loss) / (2 * h);
    const double an = c ? g[i].y : g[i].x;
    const double rel = std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-12});
    worst = std::max(worst, rel);
    ++checked;
  }
  return {checked == 20 && worst < 1e-3,
          "max relative error " + fmt("%.3g", worst) + " over " + std::to_string(checked) + " coordinates, " +
              std::to_string(w.events.size()) + " events kept, " + std::to_string(dropped) + " near kinks dropped"};
}

Outcome cm_landmark() {
  SceneSpec s;
  s.family = DeformationFamily::Translate;
  s.amplitude = 5.0;
  s.direction_deg = -30.0;
  s.duration = 1.0;
  s.validate();
  SpeckleTexture tex(s);
  const double t0 = 0.4, t1 = 0.6;
  const auto ev = events_between(generate_events(s, tex), t0, t1);
  const auto w = partition_bins(ev, t0, t1, 4);
  const SensorSize sensor{s.width, s.height};
  auto mesh = make_grid_mesh({0, 0, double(s.width - 1), double(s.height - 1)}, 2, 2);
  const auto grid = w.grid();
  // Homotopy from identity (alpha = 0) to ground truth (alpha = 1); knot 0
  // sits on the ground truth in both.
  auto field = [&](double alpha) {
    TrajectoryField tf(mesh, grid);
    for (std::size_t a = 0; a < tf.num_anchors(); ++a) {
      const Point2 X = mesh.anchors[a];
      const Point2 start = X + gt_displacement(s, X, grid.front());
      for (std::size_t k = 0; k < tf.num_knots(); ++k) {
        const Point2 truth = X + gt_displacement(s, X, grid[k]);
        tf.at(a, k) = start + alpha * (truth - start);
      }
    }
    return tf;
  };
  auto cm = [&](const TrajectoryField& tf) {
    return warp1_objective(w, tf, sensor).value + warp2_objective(w, tf, sensor, t0, t1).value;
  };
  std::vector<double> curve;
  for (int i = 0; i <= 10; ++i) curve.push_back(cm(field(i / 10.0)));
  const double at_id = curve.front(), at_gt = curve.back();
  const bool is_max = std::all_of(curve.begin(), curve.end(), [&](double v) { return v <= at_gt; });
  const double gain = at_gt / at_id - 1.0;
  std::ostringstream d;
  d << ev.size() << " events, contrast identity " << fmt("%.4f", at_id) << " vs ground truth " << fmt("%.4f", at_gt)
    << " (" << fmt("%+.1f", 100 * gain) << "%), ground truth is " << (is_max ? "" : "not ") << "the homotopy max";
  return {gain >= 0.2 && is_max, d.str()};
}

// Simulates `spec`, tracks it and scores the displacements.
MetricReport track_and_score(const SceneSpec& spec, const fs::path& dir, const FlatConfig& overrides = {}) {
  fs::remove_all(dir);
  const auto paths = make_sequence(spec, dir / "seq");
  auto input = load_sequence(paths.events, paths.manifest);
  auto flat = read_flat_config(paths.tracker_config);
  for (const auto& [k, v] : overrides) flat[k] = v;
  const auto cfg = tracker_config_from(flat);
  const auto gt = read_displacements(paths.ground_truth);
  std::vector<Point2> q;
  for (const auto& r : gt) {
    if (r.frame != gt.front().frame) break;
    q.push_back({r.x0, r.y0});
  }
  input.query = q;
  const auto result = track_sequence(input, cfg);
  write_sequence_outputs(dir / "run", input, result, cfg);
  return evaluate(read_displacements(dir / "run" / "displacements.csv"), gt);
}

Outcome small_deformation() {
  SceneSpec s;
  s.family = DeformationFamily::AffineStretch;
  s.amplitude = 15.0;
  s.duration = 2.0;
  s.frame_rate = 5.0;
  s.validate();
  const auto r = track_and_score(s, g_work / "small_deformation");
  return {r.epe < 1.0 && r.survival == 1.0 && r.per_frame.size() == 11,
          "EPE " + fmt("%.3f", r.epe) + " px, survival " + fmt("%.2f", r.survival) + " over " +
              std::to_string(r.per_frame.size() - 1) + " windows"};
}

Outcome large_motion() {
  SceneSpec s;
  s.width = 256;
  s.height = 128;
  s.family = DeformationFamily::AffineStretch;
  s.amplitude = 10.0;
  s.drift_x = 100.0;
  s.duration = 4.0;
  s.frame_rate = 5.0;
  s.roi = {24, 32, 88, 96};
  s.seed = 7;
  s.validate();
  const auto r = track_and_score(s, g_work / "large_motion");
  double max_u = 0.0;
  for (const auto& q : gt_query_points(s)) max_u = std::max(max_u, norm(gt_displacement(s, q, s.duration)));
  return {r.survival >= 0.6 && r.sepe_defined && r.sepe < 2.0,
          "max displacement " + fmt("%.1f", max_u) + " px, survival " + fmt("%.2f", r.survival) + ", SEPE " +
              (r.sepe_defined ? fmt("%.3f", r.sepe) : std::string("undefined")) + " px, EPE " + fmt("%.3f", r.epe) +
              " px"};
}

Outcome greedy_vs_vanilla() {
  SceneSpec s;
  s.family = DeformationFamily::AffineStretch;
  s.amplitude = 15.0;
  s.validate();
  SpeckleTexture tex(s);
  const double t1 = s.frame_time(1);
  Frame f0 = render_frame(s, tex, 0.0), f1 = render_frame(s, tex, t1);
  const FrameSet fs{&f0, &f0, &f1};
  TrackerConfig cfg;
  cfg.roi = s.roi;
  cfg.grid_cols = cfg.grid_rows = 4;
  const auto ev = events_between(generate_events(s, tex), 0.0, t1);

  // Converged state of the first window.
  const auto init = static_field(make_grid_mesh(s.roi, cfg.grid_cols, cfg.grid_rows), TimeGrid({0.0, t1}));
  const auto base = track_window(init, ev, 0.0, t1, fs, cfg);
  const auto& mesh = base.field.mesh();

  // Perturb the anchors of the triangle nearest the ROI center by 8 px at the
  // end knot, ramping in from the start knot.
  std::size_t victim = 0;
  double best = 1e300;
  for (std::size_t j = 0; j < mesh.num_triangles(); ++j) {
    const auto v = mesh.rest_vertices(j);
    const double d = norm((1.0 / 3) * (v[0] + v[1] + v[2]) - s.roi.center());
    if (d < best) {
      best = d;
      victim = j;
    }
  }
  const std::set<int> moved(mesh.triangles[victim].v.begin(), mesh.triangles[victim].v.end());
  auto perturbed = base.field;
  const std::size_t K = perturbed.num_knots();
  for (int a : moved)
    for (std::size_t k = 1; k < K; ++k) perturbed.at(a, k) += (double(k) / (K - 1)) * Point2{8 * 0.6, 8 * 0.8};

  // Score on query points inside the triangles touching a moved anchor.
  const auto inc = incident_triangles(mesh);
  std::set<int> region;
  for (int a : moved) region.insert(inc[a].begin(), inc[a].end());
  std::vector<Point2> q;
  for (const auto& p : grid_points(s.roi, 2.0)) {
    const auto as = locate(mesh, mesh.anchors, p);
    if (as && region.count(as->triangle)) q.push_back(p);
  }
  auto epe_of = [&](const TrajectoryField& tf) {
    const auto u = displacement_field(tf, q, t1);
    double e = 0.0;
    for (std::size_t i = 0; i < q.size(); ++i) e += norm(u[i] - gt_displacement(s, q[i], t1));
    return e / q.size();
  };

  WindowProblem problem(partition_bins(ev, 0.0, t1, cfg.M), fs, cfg);
  auto report = assess_convergence(perturbed, fs, problem.samples(), cfg.k, cfg.tau);
  const std::size_t flagged = report.converged.size() - report.num_converged();
  auto greedy = perturbed;
  const auto g0 = std::chrono::steady_clock::now();
  while (report.rounds < 3 && report.num_converged() < report.converged.size())
    std::tie(greedy, report) = greedy_round(greedy, problem, cfg, report);
  const double greedy_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - g0).count();

  // Vanilla: every anchor free, no strain term, the full greedy budget.
  const int budget = 3 * cfg.iters_greedy;
  const auto v0 = std::chrono::steady_clock::now();
  const auto vanilla =
      optimize_level(perturbed, problem, cfg, mesh.level, stage_lambdas(cfg, Stage::Fine), budget);
  const double vanilla_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - v0).count();

  const double e_base = epe_of(base.field), e_pert = epe_of(perturbed);
  const double e_greedy = epe_of(greedy), e_vanilla = epe_of(vanilla);
  std::ostringstream d;
  d << mesh.num_triangles() << " triangles, " << flagged << " flagged after the 8 px error; EPE converged "
    << fmt("%.3f", e_base) << ", perturbed " << fmt("%.3f", e_pert) << ", greedy " << fmt("%.3f", e_greedy) << " in "
    << report.rounds << " rounds (" << fmt("%.1f", greedy_s) << " s), vanilla " << fmt("%.3f", e_vanilla) << " ("
    << budget << " iterations, " << fmt("%.1f", vanilla_s) << " s)";
  return {e_greedy < 1.0 && report.rounds <= 3 && e_vanilla >= 2.0 * e_greedy, d.str()};
}

Outcome metric_units() {
  int ok = 0, n = 0;
  std::string failed;
  for (const auto& c : evdm::testing::metric_examples()) {
    ++n;
    if (c.ok) {
      ++ok;
    } else {
      failed += std::string(failed.empty() ? "; failed: " : ", ") + c.name;
    }
  }
  return {ok == n, std::to_string(ok) + "/" + std::to_string(n) + " examples exact" + failed};
}

Outcome zncc_invariance() {
  std::mt19937_64 rng(909);
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> ua(0.1, 10.0), ub(-1.0, 1.0);
  std::uniform_int_distribution<int> len(6, 100);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    std::vector<double> s(len(rng)), t(s.size());
    for (auto& v : s) v = g(rng);
    const double a = ua(rng), b = ub(rng);
    for (std::size_t k = 0; k < s.size(); ++k) t[k] = a * s[k] + b;
    worst = std::max(worst, std::abs(zncc(s, t) - 1.0));
  }
  return {worst < 1e-9, "max |zncc - 1| = " + fmt("%.3g", worst)};
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

int cli(std::vector<std::string> args) {
  args.insert(args.begin(), "evdm");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  if (code != kExitOk) std::fprintf(stderr, "%s", err.str().c_str());
  return code;
}

Outcome determinism() {
  const fs::path root = g_work / "determinism";
  fs::remove_all(root);
  fs::create_directories(root);
  std::ofstream(root / "spec.cfg") << "family = sinusoidal_bend\namplitude = 6\nduration = 0.6\nseed = 11\n";
  for (const char* run : {"a", "b"}) {
    const fs::path d = root / run;
    const std::string seq = (d / "seq").string();
    if (cli({"simulate", "--spec", (root / "spec.cfg").string(), "--out", seq}) != kExitOk ||
        cli({"track", "--events", seq + "/events.csv", "--frames", seq + "/frames.csv", "--config",
             seq + "/tracker.cfg", "--out", (d / "run").string()}) != kExitOk ||
        cli({"eval", "--pred", (d / "run/displacements.csv").string(), "--gt", seq + "/gt.csv", "--report",
             (d / "report.txt").string()}) != kExitOk) {
      return {false, std::string("pipeline failed in run ") + run};
    }
  }
  std::vector<std::string> differ;
  for (const char* f : {"seq/events.csv", "seq/gt.csv", "run/trajectories.csv", "run/displacements.csv",
                        "run/strain.csv", "report.txt", "report.txt.csv"}) {
    if (slurp(root / "a" / f) != slurp(root / "b" / f) || slurp(root / "a" / f).empty()) differ.push_back(f);
  }
  std::string d = differ.empty() ? "trajectories, displacements, strain and reports byte-identical" : "differ:";
  for (const auto& f : differ) d += " " + f;
  return {differ.empty(), d};
}

struct Criterion {
  int id;
  const char* name;
  double limit_s;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  g_work = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "evdm_acceptance";
  fs::create_directories(g_work);

  const std::vector<Criterion> criteria = {
      {1, "affine reproduction", 1.0, affine_reproduction},
      {2, "association vs brute force", 5.0, oracle_equivalence},
      {3, "gradient check", 30.0, gradient_check},
      {4, "contrast landmark", 10.0, cm_landmark},
      {5, "small deformation tracking", 600.0, small_deformation},
      {6, "large motion tracking", 1200.0, large_motion},
      {7, "greedy vs vanilla", 300.0, greedy_vs_vanilla},
      {8, "metric examples", 1e9, metric_units},
      {9, "zncc invariance", 1e9, zncc_invariance},
      {10, "determinism", 1e9, determinism},
  };

  int failures = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = secs < c.limit_s;
    const bool pass = o.pass && in_time;
    failures += pass ? 0 : 1;
    const std::string limit = c.limit_s < 1e8 ? " / " + fmt("%.0f", c.limit_s) + " s" : "";
    std::printf("%s criterion %d (%s): %s [%.2f s%s%s]\n", pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(),
                secs, limit.c_str(), in_time ? "" : ", over time limit");
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
