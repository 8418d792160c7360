#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "evdm/error.hpp"
#include "evdm/frame_engine.hpp"
#include "evdm/simulator.hpp"

using namespace evdm;

namespace {

std::vector<double> random_vec(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = g(rng);
  return v;
}

SceneSpec translate_scene() {
  SceneSpec s;
  s.family = DeformationFamily::Translate;
  s.amplitude = 6.0;
  s.direction_deg = 30.0;
  s.duration = 1.0;
  s.validate();
  return s;
}

// Anchors follow the analytic field at every knot.
TrajectoryField truth_field(const SceneSpec& s, const SimplicialMesh& mesh, const TimeGrid& grid) {
  TrajectoryField tf(mesh, grid);
  for (std::size_t a = 0; a < tf.num_anchors(); ++a)
    for (std::size_t k = 0; k < tf.num_knots(); ++k)
      tf.at(a, k) = mesh.anchors[a] + gt_displacement(s, mesh.anchors[a], grid[k]);
  return tf;
}

}  // namespace

TEST_CASE("sample_grid") {
  auto g1 = sample_grid(1);
  REQUIRE(g1.bary.size() == 3);
  int vertices = 0;
  for (auto b : g1.bary) vertices += (b[0] == 1.0 || b[1] == 1.0 || b[2] == 1.0) ? 1 : 0;
  CHECK(vertices == 3);

  auto g2 = sample_grid(2);
  CHECK(g2.bary.size() == 6);
  bool has_half = false;
  for (auto b : g2.bary) has_half |= (b[0] == 0.5 && b[1] == 0.5 && b[2] == 0.0);
  CHECK(has_half);

  auto g10 = sample_grid(10);
  CHECK(g10.bary.size() == 66);
  for (auto b : g10.bary) CHECK(std::abs(b[0] + b[1] + b[2] - 1.0) < 1e-12);

  CHECK_THROWS_AS(sample_grid(0), Error);
}

TEST_CASE("bilinear_sample") {
  Frame f{2, 2, {0.0, 1.0, 0.25, 0.75}, 0.0};
  CHECK(bilinear_sample(f, {1, 0}) == 1.0);
  CHECK(bilinear_sample(f, {0, 1}) == 0.25);
  CHECK(bilinear_sample(f, {0.5, 0}) == doctest::Approx(0.5));
  CHECK_THROWS_AS(bilinear_sample(f, {1.5, 0}), Error);

  Frame c{5, 4, std::vector<double>(20, 0.3), 0.0};
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> ux(0, 4), uy(0, 3);
  for (int i = 0; i < 50; ++i) CHECK(bilinear_sample(c, {ux(rng), uy(rng)}) == doctest::Approx(0.3));
}

TEST_CASE("zncc") {
  std::mt19937_64 rng(2);
  auto s = random_vec(30, rng);
  CHECK(zncc(s, s) == doctest::Approx(1.0));
  std::vector<double> lin(s.size()), neg(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    lin[i] = 3.5 * s[i] - 0.7;
    neg[i] = -s[i];
  }
  CHECK(zncc(s, lin) == doctest::Approx(1.0));
  CHECK(zncc(s, neg) == doctest::Approx(-1.0));

  std::vector<double> flat(5, 1.0), other{1, 2, 3, 4, 5};
  CHECK_THROWS_AS(zncc(flat, other), Error);
  CHECK_THROWS_AS(zncc(std::vector<double>{1.0}, std::vector<double>{1.0}), Error);
}

TEST_CASE("zncc is symmetric and bounded") {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 200; ++i) {
    auto a = random_vec(2 + i % 40, rng), b = random_vec(2 + i % 40, rng);
    double ab = zncc(a, b), ba = zncc(b, a);
    CHECK(std::abs(ab - ba) < 1e-12);
    CHECK(std::abs(ab) <= 1.0 + 1e-12);
  }
}

TEST_CASE("zncc against an independent Pearson computation") {
  std::mt19937_64 rng(4);
  for (int i = 0; i < 50; ++i) {
    auto a = random_vec(17, rng), b = random_vec(17, rng);
    long double ma = 0, mb = 0;
    for (std::size_t j = 0; j < a.size(); ++j) {
      ma += a[j];
      mb += b[j];
    }
    ma /= a.size();
    mb /= b.size();
    long double sab = 0, saa = 0, sbb = 0;
    for (std::size_t j = 0; j < a.size(); ++j) {
      sab += (a[j] - ma) * (b[j] - mb);
      saa += (a[j] - ma) * (a[j] - ma);
      sbb += (b[j] - mb) * (b[j] - mb);
    }
    CHECK(zncc(a, b) == doctest::Approx(static_cast<double>(sab / std::sqrt(saa * sbb))).epsilon(1e-12));
  }
}

TEST_CASE("frame_objective on a static scene") {
  SceneSpec s = translate_scene();
  Frame f0 = render_frame(s, 0.0);
  auto tf = static_field(make_grid_mesh(s.roi, 2, 2), TimeGrid({0.0, 0.2}));
  auto v = frame_objective(tf, {&f0, &f0, &f0}, sample_grid(8));
  CHECK(v.value == doctest::Approx(2.0));
  CHECK(v.valid_triangles == 8);
}

TEST_CASE("frame_objective on a translating speckle scene") {
  SceneSpec s = translate_scene();
  SpeckleTexture tex(s);
  Frame f0 = render_frame(s, tex, 0.0), fa = render_frame(s, tex, 0.4), fb = render_frame(s, tex, 0.6);
  auto mesh = subdivide(make_grid_mesh(s.roi, 2, 2));
  TimeGrid grid({0.4, 0.5, 0.6});
  auto truth = truth_field(s, mesh, grid);
  auto grid8 = sample_grid(8);
  double at_truth = frame_objective(truth, {&f0, &fa, &fb}, grid8).value;
  CHECK(at_truth > 1.95);

  auto off = truth;
  for (std::size_t a = 0; a < off.num_anchors(); ++a) off.at(a, 2) += Point2{5, 0};
  CHECK(frame_objective(off, {&f0, &fa, &fb}, grid8).value < at_truth);
}

TEST_CASE("frame_objective gradient matches finite differences") {
  SceneSpec s = translate_scene();
  SpeckleTexture tex(s);
  Frame f0 = render_frame(s, tex, 0.0), fa = render_frame(s, tex, 0.4), fb = render_frame(s, tex, 0.6);
  auto mesh = make_grid_mesh(s.roi, 2, 2);
  auto tf = truth_field(s, mesh, TimeGrid({0.4, 0.6}));
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> j(-0.8, 0.8);
  for (std::size_t a = 0; a < tf.num_anchors(); ++a) tf.at(a, 1) += Point2{j(rng), j(rng)};
  auto grid = sample_grid(6);
  FrameSet fs{&f0, &fa, &fb};
  std::vector<Point2> g(tf.positions().size());
  frame_objective(tf, fs, grid, g, 1.0);
  const double h = 1e-6;
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (i % tf.num_knots() == 0) continue;  // knot 0 does not enter
    for (int c = 0; c < 2; ++c) {
      auto p = tf, m = tf;
      (c == 0 ? p.positions()[i].x : p.positions()[i].y) += h;
      (c == 0 ? m.positions()[i].x : m.positions()[i].y) -= h;
      double fd = (frame_objective(p, fs, grid).value - frame_objective(m, fs, grid).value) / (2 * h);
      double an = c == 0 ? g[i].x : g[i].y;
      CHECK(std::abs(fd - an) <= 1e-4 * std::max(1.0, std::abs(fd)) + 1e-6);
    }
  }
}

TEST_CASE("frame_objective without texture") {
  Frame flat{64, 64, std::vector<double>(64 * 64, 0.5), 0.0};
  auto tf = static_field(make_grid_mesh({8, 8, 56, 56}, 1, 1), TimeGrid({0.0, 1.0}));
  try {
    frame_objective(tf, {&flat, &flat, &flat}, sample_grid(4));
    FAIL("expected NoTexture");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::NoTexture);
  }
}

TEST_CASE("pgm and manifest round trip") {
  auto dir = std::filesystem::temp_directory_path() / "evdm_frame_test";
  std::filesystem::create_directories(dir);
  Frame f{3, 2, {0.0, 1.0, 0.5, 0.25, 0.75, 1.0}, 0.0};
  save_frame_pgm(dir / "a.pgm", f);
  Frame g = load_frame_pgm(dir / "a.pgm", 0.2);
  CHECK(g.width == 3);
  CHECK(g.height == 2);
  CHECK(g.t == 0.2);
  for (std::size_t i = 0; i < f.pixels.size(); ++i) CHECK(std::abs(g.pixels[i] - f.pixels[i]) <= 0.5 / 255 + 1e-12);

  {
    std::ofstream m(dir / "frames.csv");
    m << "frame_index,t,path\n0,0,a.pgm\n1,0.2,a.pgm\n";
  }
  auto entries = read_manifest(dir / "frames.csv");
  REQUIRE(entries.size() == 2);
  CHECK(entries[1].t == 0.2);
  CHECK(entries[1].path == dir / "a.pgm");
  {
    std::ofstream m(dir / "bad.csv");
    m << "frame_index,t,path\n0,0.2,a.pgm\n1,0.2,a.pgm\n";
  }
  CHECK_THROWS_AS(read_manifest(dir / "bad.csv"), Error);
  std::filesystem::remove_all(dir);
}
