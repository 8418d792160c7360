#include <algorithm>
#include <cmath>

#include "evdm/kernels.hpp"

namespace evdm::kernels::scalar {

void barycentric(std::span<const double> px, std::span<const double> py, const TriangleSoA& tri,
                 const BarycentricSoA& out) {
  const std::size_t n = px.size();
  for (std::size_t i = 0; i < n; ++i) {
    const double e1x = tri.bx[i] - tri.ax[i];
    const double e1y = tri.by[i] - tri.ay[i];
    const double e2x = tri.cx[i] - tri.ax[i];
    const double e2y = tri.cy[i] - tri.ay[i];
    const double rx = px[i] - tri.ax[i];
    const double ry = py[i] - tri.ay[i];
    const double det = e1x * e2y - e1y * e2x;
    const double l2 = (rx * e2y - ry * e2x) / det;
    const double l3 = (e1x * ry - e1y * rx) / det;
    out.l1[i] = 1.0 - l2 - l3;
    out.l2[i] = l2;
    out.l3[i] = l3;
  }
}

void affine_combine(const BarycentricConstSoA& w, const TriangleSoA& tri, std::span<double> out_x,
                    std::span<double> out_y) {
  const std::size_t n = out_x.size();
  for (std::size_t i = 0; i < n; ++i) {
    out_x[i] = w.l1[i] * tri.ax[i] + w.l2[i] * tri.bx[i] + w.l3[i] * tri.cx[i];
    out_y[i] = w.l1[i] * tri.ay[i] + w.l2[i] * tri.by[i] + w.l3[i] * tri.cy[i];
  }
}

void bilinear(std::span<const double> image, int width, int height, std::span<const double> xs,
              std::span<const double> ys, std::span<double> out, std::span<double> grad_x,
              std::span<double> grad_y) {
  const bool want_grad = !grad_x.empty();
  const double max_x0 = width - 2;
  const double max_y0 = height - 2;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double x0 = std::min(std::floor(xs[i]), max_x0);
    const double y0 = std::min(std::floor(ys[i]), max_y0);
    const double fx = xs[i] - x0;
    const double fy = ys[i] - y0;
    const std::size_t base = static_cast<std::size_t>(y0) * width + static_cast<std::size_t>(x0);
    const double v00 = image[base];
    const double v10 = image[base + 1];
    const double v01 = image[base + width];
    const double v11 = image[base + width + 1];
    const double top = v00 + fx * (v10 - v00);
    const double bottom = v01 + fx * (v11 - v01);
    out[i] = top + fy * (bottom - top);
    if (want_grad) {
      grad_x[i] = (v10 - v00) + fy * ((v11 - v01) - (v10 - v00));
      grad_y[i] = bottom - top;
    }
  }
}

CenteredMoments centered_moments(std::span<const double> a, std::span<const double> b) {
  CenteredMoments m;
  const std::size_t n = a.size();
  if (n == 0) return m;
  double sa = 0.0, sb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sa += a[i];
    sb += b[i];
  }
  m.mean_a = sa / static_cast<double>(n);
  m.mean_b = sb / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double da = a[i] - m.mean_a;
    const double db = b[i] - m.mean_b;
    m.saa += da * da;
    m.sbb += db * db;
    m.sab += da * db;
  }
  return m;
}

double ratio_square_sum(std::span<const double> num, std::span<const double> den, double eps) {
  double s = 0.0;
  for (std::size_t i = 0; i < num.size(); ++i) {
    const double r = num[i] / (den[i] + eps);
    s += r * r;
  }
  return s;
}

std::size_t count_positive(std::span<const std::int32_t> counts) {
  std::size_t c = 0;
  for (auto v : counts) c += v > 0 ? 1 : 0;
  return c;
}

}  // namespace evdm::kernels::scalar
