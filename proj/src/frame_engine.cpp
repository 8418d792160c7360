#include "evdm/frame_engine.hpp"

#include <algorithm>
#include <cmath>

#include "evdm/error.hpp"
#include "evdm/io.hpp"
#include "evdm/kernels.hpp"

namespace evdm {

SampleGrid sample_grid(int n) {
  if (n < 1) throw Error(ErrorKind::InvalidSampleDensity, "samples per edge must be >= 1, got " + std::to_string(n));
  SampleGrid g;
  g.n = n;
  g.bary.reserve(static_cast<std::size_t>(n + 1) * (n + 2) / 2);
  for (int i = 0; i <= n; ++i) {
    for (int j = 0; i + j <= n; ++j) {
      const double u = static_cast<double>(i) / n;
      const double v = static_cast<double>(j) / n;
      g.bary.push_back({u, v, static_cast<double>(n - i - j) / n});
    }
  }
  return g;
}

double bilinear_sample(const Frame& frame, Point2 p) {
  if (!frame.contains(p)) {
    throw Error(ErrorKind::OutOfImage, "(" + format_double(p.x) + ", " + format_double(p.y) + ")");
  }
  double out = 0.0;
  kernels::bilinear(frame.pixels, frame.width, frame.height, std::span<const double>(&p.x, 1),
                    std::span<const double>(&p.y, 1), std::span<double>(&out, 1), {}, {});
  return out;
}

double zncc(std::span<const double> s1, std::span<const double> s2) {
  if (s1.size() != s2.size() || s1.size() < 2) {
    throw Error(ErrorKind::InvalidConfig, "zncc needs two vectors of equal length >= 2");
  }
  const auto m = kernels::centered_moments(s1, s2);
  const double n = static_cast<double>(s1.size());
  if (std::sqrt(m.saa / n) < kZeroVarianceSigma || std::sqrt(m.sbb / n) < kZeroVarianceSigma) {
    throw Error(ErrorKind::ZeroVariance, "sample vector is constant");
  }
  return std::clamp(m.sab / std::sqrt(m.saa * m.sbb), -1.0, 1.0);
}

std::vector<Point2> sample_points(const TriangleVertices& tri, const SampleGrid& grid) {
  std::vector<Point2> pts;
  pts.reserve(grid.bary.size());
  for (const auto& b : grid.bary) pts.push_back(b[0] * tri[0] + b[1] * tri[1] + b[2] * tri[2]);
  return pts;
}

namespace {

struct Sampled {
  std::vector<double> value, gx, gy;
};

// Bilinear samples at pts; entries outside the frame are left at 0.
Sampled sample_frame(const Frame& f, const std::vector<Point2>& pts, const std::vector<char>& inside, bool grad) {
  const std::size_t n = pts.size();
  std::vector<double> xs, ys;
  xs.reserve(n);
  ys.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!inside[i]) continue;
    xs.push_back(pts[i].x);
    ys.push_back(pts[i].y);
  }
  std::vector<double> v(xs.size()), gx(grad ? xs.size() : 0), gy(grad ? xs.size() : 0);
  kernels::bilinear(f.pixels, f.width, f.height, xs, ys, v, gx, gy);
  Sampled out{std::vector<double>(n, 0.0), std::vector<double>(n, 0.0), std::vector<double>(n, 0.0)};
  std::size_t k = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!inside[i]) continue;
    out.value[i] = v[k];
    if (grad) {
      out.gx[i] = gx[k];
      out.gy[i] = gy[k];
    }
    ++k;
  }
  return out;
}

std::vector<char> inside_mask(const Frame& f, const std::vector<Point2>& pts) {
  std::vector<char> m(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) m[i] = f.contains(pts[i]) ? 1 : 0;
  return m;
}

// zncc of the masked pair and d(zncc)/d(each element of a and b).
struct PairScore {
  bool usable = false;
  bool textureless = false;
  double r = 0.0;
  std::vector<double> da, db;  // indexed like the full sample vector
};

PairScore score_pair(const std::vector<double>& a, const std::vector<double>& b, const std::vector<char>& mask) {
  PairScore s;
  std::vector<double> va, vb;
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (!mask[i]) continue;
    va.push_back(a[i]);
    vb.push_back(b[i]);
    idx.push_back(i);
  }
  if (va.size() < kMinValidSamples) return s;
  const auto m = kernels::centered_moments(va, vb);
  const double n = static_cast<double>(va.size());
  if (std::sqrt(m.saa / n) < kZeroVarianceSigma || std::sqrt(m.sbb / n) < kZeroVarianceSigma) {
    s.textureless = true;
    return s;
  }
  const double denom = std::sqrt(m.saa * m.sbb);
  s.usable = true;
  s.r = m.sab / denom;
  s.da.assign(a.size(), 0.0);
  s.db.assign(a.size(), 0.0);
  for (std::size_t k = 0; k < idx.size(); ++k) {
    const double ca = va[k] - m.mean_a;
    const double cb = vb[k] - m.mean_b;
    s.da[idx[k]] = cb / denom - s.r * ca / m.saa;
    s.db[idx[k]] = ca / denom - s.r * cb / m.sbb;
  }
  return s;
}

// Scatters d(loss)/d(sample point) onto the knots bracketing time t.
void scatter_sample_grad(const TrajectoryField& tf, std::size_t tri, double t, const SampleGrid& grid,
                         const std::vector<double>& d_value, const Sampled& s, double scale, std::span<Point2> grad) {
  const auto& v = tf.mesh().triangles[tri].v;
  Point2 per_vertex[3]{};
  for (std::size_t i = 0; i < grid.bary.size(); ++i) {
    if (d_value[i] == 0.0) continue;
    const Point2 g{d_value[i] * s.gx[i], d_value[i] * s.gy[i]};
    for (int k = 0; k < 3; ++k) per_vertex[k] += grid.bary[i][k] * g;
  }
  const auto [seg, a] = tf.grid().segment(t);
  const std::size_t K = tf.num_knots();
  for (int k = 0; k < 3; ++k) {
    if (a != 1.0) grad[v[k] * K + seg] += ((1.0 - a) * scale) * per_vertex[k];
    if (a != 0.0) grad[v[k] * K + seg + 1] += (a * scale) * per_vertex[k];
  }
}

}  // namespace

FrameObjectiveValue frame_objective(const TrajectoryField& tf, const FrameSet& frames, const SampleGrid& grid,
                                    std::span<Point2> grad, double scale) {
  const Frame& cur = *frames.current;
  const Frame& prev = *frames.previous;
  const Frame& init = *frames.initial;
  const bool want_grad = !grad.empty();
  FrameObjectiveValue out;
  double sum = 0.0;
  std::vector<Point2> local_grad(want_grad ? grad.size() : 0);

  for (std::size_t t = 0; t < tf.mesh().triangles.size(); ++t) {
    const auto cur_pts = sample_points(tf.vertices_at(t, cur.t), grid);
    const auto prev_pts = sample_points(tf.vertices_at(t, prev.t), grid);
    const auto init_pts = sample_points(tf.mesh().rest_vertices(t), grid);
    const auto in_cur = inside_mask(cur, cur_pts);
    const auto in_prev = inside_mask(prev, prev_pts);
    const auto in_init = inside_mask(init, init_pts);
    std::vector<char> pair_prev(cur_pts.size()), pair_init(cur_pts.size());
    for (std::size_t i = 0; i < cur_pts.size(); ++i) {
      pair_prev[i] = in_cur[i] && in_prev[i];
      pair_init[i] = in_cur[i] && in_init[i];
    }
    const auto sc = sample_frame(cur, cur_pts, in_cur, want_grad);
    const auto sp = sample_frame(prev, prev_pts, in_prev, want_grad);
    const auto si = sample_frame(init, init_pts, in_init, false);
    const auto a = score_pair(sc.value, sp.value, pair_prev);
    const auto b = score_pair(sc.value, si.value, pair_init);
    if (a.textureless || b.textureless) {
      ++out.textureless;
      continue;
    }
    if (!a.usable || !b.usable) {
      ++out.undersampled;
      continue;
    }
    ++out.valid_triangles;
    sum += a.r + b.r;
    if (want_grad) {
      std::vector<double> d_cur(cur_pts.size());
      for (std::size_t i = 0; i < d_cur.size(); ++i) d_cur[i] = a.da[i] + b.da[i];
      scatter_sample_grad(tf, t, cur.t, grid, d_cur, sc, 1.0, local_grad);
      scatter_sample_grad(tf, t, prev.t, grid, a.db, sp, 1.0, local_grad);
    }
  }
  if (out.valid_triangles == 0) {
    throw Error(ErrorKind::NoTexture, "no triangle has enough textured samples");
  }
  out.value = sum / out.valid_triangles;
  if (want_grad) {
    const double s = scale / out.valid_triangles;
    for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += s * local_grad[i];
  }
  return out;
}

Frame load_frame_pgm(const std::filesystem::path& path, double t) {
  const Gray8 img = read_pgm(path);
  Frame f{img.width, img.height, std::vector<double>(img.pixels.size()), t};
  for (std::size_t i = 0; i < img.pixels.size(); ++i) f.pixels[i] = img.pixels[i] / 255.0;
  return f;
}

void save_frame_pgm(const std::filesystem::path& path, const Frame& frame) {
  Gray8 img{frame.width, frame.height, std::vector<std::uint8_t>(frame.pixels.size())};
  for (std::size_t i = 0; i < frame.pixels.size(); ++i) {
    img.pixels[i] = static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(frame.pixels[i], 0.0, 1.0)));
  }
  write_pgm(path, img);
}

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path) {
  const auto rows = read_csv(path, kManifestHeader);
  std::vector<ManifestEntry> out;
  const auto dir = path.parent_path();
  for (const auto& r : rows) {
    ManifestEntry e{static_cast<int>(parse_int(r[0], "frame_index")), parse_double(r[1], "frame t"),
                    std::filesystem::path(r[2])};
    if (e.path.is_relative()) e.path = dir / e.path;
    if (!out.empty() && !(e.t > out.back().t)) {
      throw Error(ErrorKind::Io, path.string() + ": frame timestamps must increase");
    }
    out.push_back(std::move(e));
  }
  if (out.empty()) throw Error(ErrorKind::Io, path.string() + ": manifest lists no frames");
  return out;
}

}  // namespace evdm
