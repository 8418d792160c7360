// Compiled with -mavx2 -mfma; only reached through the dispatcher after a
// CPU feature check.

#include <immintrin.h>

#include <cmath>

#include "evdm/kernels.hpp"

namespace evdm::kernels::avx2 {

namespace {

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

}  // namespace

void barycentric(std::span<const double> px, std::span<const double> py, const TriangleSoA& tri,
                 const BarycentricSoA& out) {
  const std::size_t n = px.size();
  const __m256d one = _mm256_set1_pd(1.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d ax = _mm256_loadu_pd(&tri.ax[i]);
    const __m256d ay = _mm256_loadu_pd(&tri.ay[i]);
    const __m256d e1x = _mm256_sub_pd(_mm256_loadu_pd(&tri.bx[i]), ax);
    const __m256d e1y = _mm256_sub_pd(_mm256_loadu_pd(&tri.by[i]), ay);
    const __m256d e2x = _mm256_sub_pd(_mm256_loadu_pd(&tri.cx[i]), ax);
    const __m256d e2y = _mm256_sub_pd(_mm256_loadu_pd(&tri.cy[i]), ay);
    const __m256d rx = _mm256_sub_pd(_mm256_loadu_pd(&px[i]), ax);
    const __m256d ry = _mm256_sub_pd(_mm256_loadu_pd(&py[i]), ay);
    const __m256d det = _mm256_fmsub_pd(e1x, e2y, _mm256_mul_pd(e1y, e2x));
    const __m256d l2 = _mm256_div_pd(_mm256_fmsub_pd(rx, e2y, _mm256_mul_pd(ry, e2x)), det);
    const __m256d l3 = _mm256_div_pd(_mm256_fmsub_pd(e1x, ry, _mm256_mul_pd(e1y, rx)), det);
    _mm256_storeu_pd(&out.l1[i], _mm256_sub_pd(_mm256_sub_pd(one, l2), l3));
    _mm256_storeu_pd(&out.l2[i], l2);
    _mm256_storeu_pd(&out.l3[i], l3);
  }
  if (i < n) {
    const std::size_t r = n - i;
    scalar::barycentric(px.subspan(i, r), py.subspan(i, r),
                        {tri.ax.subspan(i, r), tri.ay.subspan(i, r), tri.bx.subspan(i, r), tri.by.subspan(i, r),
                         tri.cx.subspan(i, r), tri.cy.subspan(i, r)},
                        {out.l1.subspan(i, r), out.l2.subspan(i, r), out.l3.subspan(i, r)});
  }
}

void affine_combine(const BarycentricConstSoA& w, const TriangleSoA& tri, std::span<double> out_x,
                    std::span<double> out_y) {
  const std::size_t n = out_x.size();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d l1 = _mm256_loadu_pd(&w.l1[i]);
    const __m256d l2 = _mm256_loadu_pd(&w.l2[i]);
    const __m256d l3 = _mm256_loadu_pd(&w.l3[i]);
    __m256d x = _mm256_mul_pd(l1, _mm256_loadu_pd(&tri.ax[i]));
    x = _mm256_fmadd_pd(l2, _mm256_loadu_pd(&tri.bx[i]), x);
    x = _mm256_fmadd_pd(l3, _mm256_loadu_pd(&tri.cx[i]), x);
    __m256d y = _mm256_mul_pd(l1, _mm256_loadu_pd(&tri.ay[i]));
    y = _mm256_fmadd_pd(l2, _mm256_loadu_pd(&tri.by[i]), y);
    y = _mm256_fmadd_pd(l3, _mm256_loadu_pd(&tri.cy[i]), y);
    _mm256_storeu_pd(&out_x[i], x);
    _mm256_storeu_pd(&out_y[i], y);
  }
  if (i < n) {
    const std::size_t r = n - i;
    scalar::affine_combine({w.l1.subspan(i, r), w.l2.subspan(i, r), w.l3.subspan(i, r)},
                           {tri.ax.subspan(i, r), tri.ay.subspan(i, r), tri.bx.subspan(i, r), tri.by.subspan(i, r),
                            tri.cx.subspan(i, r), tri.cy.subspan(i, r)},
                           out_x.subspan(i, r), out_y.subspan(i, r));
  }
}

void bilinear(std::span<const double> image, int width, int height, std::span<const double> xs,
              std::span<const double> ys, std::span<double> out, std::span<double> grad_x,
              std::span<double> grad_y) {
  const bool want_grad = !grad_x.empty();
  const std::size_t n = xs.size();
  const double* img = image.data();
  const __m256d max_x0 = _mm256_set1_pd(width - 2);
  const __m256d max_y0 = _mm256_set1_pd(height - 2);
  const __m256d w = _mm256_set1_pd(width);
  const __m128i one = _mm_set1_epi32(1);
  const __m128i stride = _mm_set1_epi32(width);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d x = _mm256_loadu_pd(&xs[i]);
    const __m256d y = _mm256_loadu_pd(&ys[i]);
    const __m256d x0 = _mm256_min_pd(_mm256_floor_pd(x), max_x0);
    const __m256d y0 = _mm256_min_pd(_mm256_floor_pd(y), max_y0);
    const __m256d fx = _mm256_sub_pd(x, x0);
    const __m256d fy = _mm256_sub_pd(y, y0);
    const __m128i base = _mm256_cvtpd_epi32(_mm256_fmadd_pd(y0, w, x0));
    const __m256d v00 = _mm256_i32gather_pd(img, base, 8);
    const __m256d v10 = _mm256_i32gather_pd(img, _mm_add_epi32(base, one), 8);
    const __m128i below = _mm_add_epi32(base, stride);
    const __m256d v01 = _mm256_i32gather_pd(img, below, 8);
    const __m256d v11 = _mm256_i32gather_pd(img, _mm_add_epi32(below, one), 8);
    const __m256d dtop = _mm256_sub_pd(v10, v00);
    const __m256d dbot = _mm256_sub_pd(v11, v01);
    const __m256d top = _mm256_fmadd_pd(fx, dtop, v00);
    const __m256d bottom = _mm256_fmadd_pd(fx, dbot, v01);
    const __m256d vert = _mm256_sub_pd(bottom, top);
    _mm256_storeu_pd(&out[i], _mm256_fmadd_pd(fy, vert, top));
    if (want_grad) {
      _mm256_storeu_pd(&grad_x[i], _mm256_fmadd_pd(fy, _mm256_sub_pd(dbot, dtop), dtop));
      _mm256_storeu_pd(&grad_y[i], vert);
    }
  }
  if (i < n) {
    const std::size_t r = n - i;
    scalar::bilinear(image, width, height, xs.subspan(i, r), ys.subspan(i, r), out.subspan(i, r),
                     want_grad ? grad_x.subspan(i, r) : std::span<double>{},
                     want_grad ? grad_y.subspan(i, r) : std::span<double>{});
  }
}

CenteredMoments centered_moments(std::span<const double> a, std::span<const double> b) {
  CenteredMoments m;
  const std::size_t n = a.size();
  if (n == 0) return m;
  __m256d sa = _mm256_setzero_pd();
  __m256d sb = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    sa = _mm256_add_pd(sa, _mm256_loadu_pd(&a[i]));
    sb = _mm256_add_pd(sb, _mm256_loadu_pd(&b[i]));
  }
  double ta = hsum(sa), tb = hsum(sb);
  for (std::size_t j = i; j < n; ++j) {
    ta += a[j];
    tb += b[j];
  }
  m.mean_a = ta / static_cast<double>(n);
  m.mean_b = tb / static_cast<double>(n);
  const __m256d ma = _mm256_set1_pd(m.mean_a);
  const __m256d mb = _mm256_set1_pd(m.mean_b);
  __m256d saa = _mm256_setzero_pd(), sbb = _mm256_setzero_pd(), sab = _mm256_setzero_pd();
  for (i = 0; i + 4 <= n; i += 4) {
    const __m256d da = _mm256_sub_pd(_mm256_loadu_pd(&a[i]), ma);
    const __m256d db = _mm256_sub_pd(_mm256_loadu_pd(&b[i]), mb);
    saa = _mm256_fmadd_pd(da, da, saa);
    sbb = _mm256_fmadd_pd(db, db, sbb);
    sab = _mm256_fmadd_pd(da, db, sab);
  }
  m.saa = hsum(saa);
  m.sbb = hsum(sbb);
  m.sab = hsum(sab);
  for (std::size_t j = i; j < n; ++j) {
    const double da = a[j] - m.mean_a;
    const double db = b[j] - m.mean_b;
    m.saa += da * da;
    m.sbb += db * db;
    m.sab += da * db;
  }
  return m;
}

double ratio_square_sum(std::span<const double> num, std::span<const double> den, double eps) {
  const std::size_t n = num.size();
  const __m256d e = _mm256_set1_pd(eps);
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d r = _mm256_div_pd(_mm256_loadu_pd(&num[i]), _mm256_add_pd(_mm256_loadu_pd(&den[i]), e));
    acc = _mm256_fmadd_pd(r, r, acc);
  }
  double s = hsum(acc);
  for (; i < n; ++i) {
    const double r = num[i] / (den[i] + eps);
    s += r * r;
  }
  return s;
}

std::size_t count_positive(std::span<const std::int32_t> counts) {
  const std::size_t n = counts.size();
  const __m256i zero = _mm256_setzero_si256();
  std::size_t c = 0;
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256i v = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(&counts[i]));
    const int mask = _mm256_movemask_ps(_mm256_castsi256_ps(_mm256_cmpgt_epi32(v, zero)));
    c += static_cast<std::size_t>(__builtin_popcount(static_cast<unsigned>(mask)));
  }
  for (; i < n; ++i) c += counts[i] > 0 ? 1 : 0;
  return c;
}

}  // namespace evdm::kernels::avx2
