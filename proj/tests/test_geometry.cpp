#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "evdm/error.hpp"
#include "evdm/geometry.hpp"

using namespace evdm;

namespace {

const TriangleVertices kUnit{Point2{0, 0}, Point2{1, 0}, Point2{0, 1}};

double area_sum(const SimplicialMesh& m) {
  double s = 0.0;
  for (std::size_t t = 0; t < m.num_triangles(); ++t) s += signed_area(m.rest_vertices(t));
  return s;
}

// Solves [V1 V2 V3; 1 1 1] l = [p; 1] with a dense LU.
Eigen::Vector3d bary_oracle(Point2 p, const TriangleVertices& v) {
  Eigen::Matrix3d A;
  A << v[0].x, v[1].x, v[2].x, v[0].y, v[1].y, v[2].y, 1, 1, 1;
  return A.fullPivLu().solve(Eigen::Vector3d(p.x, p.y, 1.0));
}

TriangleVertices random_triangle(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-50.0, 50.0);
  for (;;) {
    TriangleVertices t{Point2{u(rng), u(rng)}, Point2{u(rng), u(rng)}, Point2{u(rng), u(rng)}};
    if (std::abs(signed_area(t)) > 10.0) return t;
  }
}

Point2 random_interior(std::mt19937_64& rng, const TriangleVertices& t) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double a = u(rng), b = u(rng);
  if (a + b > 1.0) {
    a = 1.0 - a;
    b = 1.0 - b;
  }
  return from_barycentric({1.0 - a - b, a, b}, t);
}

}  // namespace

TEST_CASE("signed_side") {
  CHECK(signed_side({0, 0}, {1, 0}, {0, 1}) == doctest::Approx(1.0));
  CHECK(signed_side({0, 0}, {1, 0}, {0.5, 0}) == 0.0);
  // (5-2)(0-1) - (3-1)(4-2)
  CHECK(signed_side({2, 1}, {5, 3}, {4, 0}) == doctest::Approx(-7.0));
}

TEST_CASE("point_in_triangle") {
  CHECK(point_in_triangle({0.25, 0.25}, kUnit));
  CHECK_FALSE(point_in_triangle({1, 1}, kUnit));
  CHECK(point_in_triangle({0.5, 0}, kUnit));
  CHECK(point_in_triangle({0, 0}, kUnit));
  CHECK_FALSE(point_in_triangle({-1e-9, 0.5}, kUnit));

  // Orientation does not matter.
  TriangleVertices cw{kUnit[0], kUnit[2], kUnit[1]};
  CHECK(point_in_triangle({0.25, 0.25}, cw));
  CHECK_FALSE(point_in_triangle({1, 1}, cw));
}

TEST_CASE("barycentric_of") {
  auto c = barycentric_of({1.0 / 3, 1.0 / 3}, kUnit);
  CHECK(c.l1 == doctest::Approx(1.0 / 3));
  CHECK(c.l2 == doctest::Approx(1.0 / 3));
  CHECK(c.l3 == doctest::Approx(1.0 / 3));

  auto v = barycentric_of(kUnit[0], kUnit);
  CHECK(v.l1 == 1.0);
  CHECK(v.l2 == 0.0);
  CHECK(v.l3 == 0.0);

  auto w = barycentric_of({0.2, 0.3}, kUnit);
  auto o = bary_oracle({0.2, 0.3}, kUnit);
  CHECK(w.l1 == doctest::Approx(o[0]).epsilon(1e-12));
  CHECK(w.l2 == doctest::Approx(o[1]).epsilon(1e-12));
  CHECK(w.l3 == doctest::Approx(o[2]).epsilon(1e-12));
  CHECK(w.l1 == doctest::Approx(0.5));

  TriangleVertices flat{Point2{0, 0}, Point2{1, 1}, Point2{2, 2}};
  CHECK_THROWS_AS(barycentric_of({0.5, 0.5}, flat), Error);
}

TEST_CASE("barycentric agrees with a linear solve on random triangles") {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 200; ++i) {
    auto t = random_triangle(rng);
    auto p = random_interior(rng, t);
    auto w = barycentric_of(p, t);
    auto o = bary_oracle(p, t);
    CHECK(std::abs(w.l1 - o[0]) < 1e-9);
    CHECK(std::abs(w.l2 - o[1]) < 1e-9);
    CHECK(std::abs(w.l3 - o[2]) < 1e-9);
  }
}

TEST_CASE("barycentric round trip on 1000 interior points") {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 1000; ++i) {
    auto t = random_triangle(rng);
    auto p = random_interior(rng, t);
    auto q = from_barycentric(barycentric_of(p, t), t);
    CHECK(norm(q - p) < 1e-9);
    auto w = barycentric_of(p, t);
    CHECK(std::abs(w.l1 + w.l2 + w.l3 - 1.0) < 1e-12);
  }
}

TEST_CASE("affine reproduction") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (int i = 0; i < 100; ++i) {
    AffineMap f;
    f.A = {{{u(rng), u(rng)}, {u(rng), u(rng)}}};
    f.b = {10 * u(rng), 10 * u(rng)};
    auto t = random_triangle(rng);
    auto p = random_interior(rng, t);
    auto w = barycentric_of(p, t);
    Point2 fp = w.l1 * f.apply(t[0]) + w.l2 * f.apply(t[1]) + w.l3 * f.apply(t[2]);
    CHECK(norm(fp - f.apply(p)) < 1e-9);
  }
}

TEST_CASE("affine_from_triangles") {
  auto id = affine_from_triangles(kUnit, kUnit);
  CHECK(id.A[0][0] == doctest::Approx(1.0));
  CHECK(id.A[0][1] == doctest::Approx(0.0));
  CHECK(id.A[1][0] == doctest::Approx(0.0));
  CHECK(id.A[1][1] == doctest::Approx(1.0));
  CHECK(id.b.x == doctest::Approx(0.0));
  CHECK(id.b.y == doctest::Approx(0.0));

  TriangleVertices moved{};
  for (int k = 0; k < 3; ++k) moved[k] = kUnit[k] + Point2{3, -2};
  auto tr = affine_from_triangles(kUnit, moved);
  CHECK(tr.A[0][0] == doctest::Approx(1.0));
  CHECK(tr.A[1][1] == doctest::Approx(1.0));
  CHECK(tr.b.x == doctest::Approx(3.0));
  CHECK(tr.b.y == doctest::Approx(-2.0));

  auto st = affine_from_triangles(kUnit, {Point2{0, 0}, Point2{2, 0}, Point2{0, 1}});
  CHECK(st.A[0][0] == doctest::Approx(2.0));
  CHECK(st.A[0][1] == doctest::Approx(0.0));
  CHECK(st.A[1][0] == doctest::Approx(0.0));
  CHECK(st.A[1][1] == doctest::Approx(1.0));
  CHECK(norm(st.b) == doctest::Approx(0.0));

  std::mt19937_64 rng(9);
  for (int i = 0; i < 50; ++i) {
    auto r = random_triangle(rng);
    auto d = random_triangle(rng);
    auto m = affine_from_triangles(r, d);
    for (int k = 0; k < 3; ++k) CHECK(norm(m.apply(r[k]) - d[k]) < 1e-9);
  }
}

TEST_CASE("subdivide counts and area") {
  SimplicialMesh one;
  one.anchors = {{0, 0}, {1, 0}, {0, 1}};
  one.triangles = {Triangle{{0, 1, 2}}};
  one.parent_map = {-1};
  one.anchor_level = {0, 0, 0};
  one.anchor_parents = {{-1, -1}, {-1, -1}, {-1, -1}};
  auto s1 = subdivide(one);
  CHECK(s1.num_triangles() == 4);
  CHECK(s1.num_anchors() == 6);
  CHECK(s1.level == 1);
  CHECK(area_sum(s1) == doctest::Approx(area_sum(one)).epsilon(1e-12));

  auto two = make_grid_mesh({0, 0, 10, 10}, 1, 1);
  REQUIRE(two.num_triangles() == 2);
  auto s2 = subdivide(two);
  CHECK(s2.num_triangles() == 8);
  CHECK(s2.num_anchors() == 9);
  CHECK(std::abs(area_sum(s2) - area_sum(two)) < 1e-9);

  // Brute-force midpoint dedup.
  std::set<std::pair<double, double>> pts;
  for (auto p : two.anchors) pts.insert({p.x, p.y});
  for (const auto& t : two.triangles)
    for (int k = 0; k < 3; ++k) {
      Point2 m = 0.5 * (two.anchors[t.v[k]] + two.anchors[t.v[(k + 1) % 3]]);
      pts.insert({m.x, m.y});
    }
  CHECK(pts.size() == s2.num_anchors());
}

TEST_CASE("subdivision bookkeeping") {
  auto m = make_grid_mesh({8, 8, 40, 24}, 2, 1);
  CHECK(m.num_triangles() == 4);
  CHECK(m.num_anchors() == 6);
  for (std::size_t t = 0; t < m.num_triangles(); ++t) CHECK(signed_area(m.rest_vertices(t)) > 0.0);

  auto s = subdivide(subdivide(m));
  CHECK(s.level == 2);
  CHECK(s.num_triangles() == 64);
  CHECK(std::abs(area_sum(s) - 32.0 * 16.0) < 1e-9);
  for (std::size_t t = 0; t < s.num_triangles(); ++t) CHECK(signed_area(s.rest_vertices(t)) > 0.0);
  for (std::size_t a = 0; a < s.num_anchors(); ++a) {
    auto [p, q] = s.anchor_parents[a];
    if (s.anchor_level[a] == 0) {
      CHECK(p == -1);
      continue;
    }
    CHECK(s.anchor_level[p] < s.anchor_level[a]);
    CHECK(s.anchor_level[q] < s.anchor_level[a]);
    CHECK(norm(s.anchors[a] - 0.5 * (s.anchors[p] + s.anchors[q])) < 1e-12);
  }

  // Euler: V - E + F = 1 for a disc.
  auto e = mesh_edges(s);
  CHECK(static_cast<long>(s.num_anchors()) - static_cast<long>(e.size()) + static_cast<long>(s.num_triangles()) ==
        1);
  CHECK(std::is_sorted(e.begin(), e.end()));

  auto inc = incident_triangles(s);
  std::size_t uses = 0;
  for (const auto& v : inc) uses += v.size();
  CHECK(uses == 3 * s.num_triangles());
}

TEST_CASE("grid_points") {
  auto p = grid_points({0, 0, 8, 4}, 4);
  REQUIRE(p.size() == 6);
  CHECK(p[0] == Point2{0, 0});
  CHECK(p[2] == Point2{8, 0});
  CHECK(p[5] == Point2{8, 4});
}
