#pragma once

// Data-parallel inner loops behind the objectives and the simulator. Every
// kernel has a portable scalar reference; an AVX2 variant is chosen at run
// time when the CPU supports it. Tests pin the two against each other.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>

namespace evdm::kernels {

enum class Isa { Scalar, Avx2 };

std::string_view to_string(Isa isa);

/// Best ISA supported by this CPU and build.
Isa detected_isa();
/// ISA used by the dispatching entry points. Starts at detected_isa()
/// unless the EVDM_ISA environment variable says `scalar`.
Isa active_isa();
/// Forces an ISA; requesting one the CPU lacks falls back to scalar.
void set_active_isa(Isa isa);

/// Structure-of-arrays view over triangles, one triangle per lane.
struct TriangleSoA {
  std::span<const double> ax, ay, bx, by, cx, cy;
};

struct BarycentricSoA {
  std::span<double> l1, l2, l3;
};

struct BarycentricConstSoA {
  std::span<const double> l1, l2, l3;
};

/// Barycentric coordinates of (px[i], py[i]) in triangle i (Cramer's rule).
/// Degenerate triangles yield non-finite weights; callers filter them.
void barycentric(std::span<const double> px, std::span<const double> py, const TriangleSoA& tri,
                 const BarycentricSoA& out);

/// out[i] = l1[i] * A[i] + l2[i] * B[i] + l3[i] * C[i].
void affine_combine(const BarycentricConstSoA& w, const TriangleSoA& tri, std::span<double> out_x,
                    std::span<double> out_y);

/// Bilinear lookup into a row-major width x height image. Points must lie in
/// [0, width-1] x [0, height-1]. Optional gradient outputs (may be empty)
/// receive the one-sided derivative of the sampled cell.
void bilinear(std::span<const double> image, int width, int height, std::span<const double> xs,
              std::span<const double> ys, std::span<double> out, std::span<double> grad_x,
              std::span<double> grad_y);

struct CenteredMoments {
  double mean_a = 0.0;
  double mean_b = 0.0;
  double saa = 0.0;  // sum (a - mean_a)^2
  double sbb = 0.0;
  double sab = 0.0;
};

/// Two-pass centered second moments of equally sized vectors.
CenteredMoments centered_moments(std::span<const double> a, std::span<const double> b);

/// sum_i (num[i] / (den[i] + eps))^2
double ratio_square_sum(std::span<const double> num, std::span<const double> den, double eps);

/// Number of strictly positive entries.
std::size_t count_positive(std::span<const std::int32_t> counts);

// Direct access to each implementation, for equivalence tests and benchmarks.
namespace scalar {
void barycentric(std::span<const double> px, std::span<const double> py, const TriangleSoA& tri,
                 const BarycentricSoA& out);
void affine_combine(const BarycentricConstSoA& w, const TriangleSoA& tri, std::span<double> out_x,
                    std::span<double> out_y);
void bilinear(std::span<const double> image, int width, int height, std::span<const double> xs,
              std::span<const double> ys, std::span<double> out, std::span<double> grad_x,
              std::span<double> grad_y);
CenteredMoments centered_moments(std::span<const double> a, std::span<const double> b);
double ratio_square_sum(std::span<const double> num, std::span<const double> den, double eps);
std::size_t count_positive(std::span<const std::int32_t> counts);
}  // namespace scalar

#if defined(__x86_64__) || defined(_M_X64)
#define EVDM_HAVE_AVX2_KERNELS 1
namespace avx2 {
void barycentric(std::span<const double> px, std::span<const double> py, const TriangleSoA& tri,
                 const BarycentricSoA& out);
void affine_combine(const BarycentricConstSoA& w, const TriangleSoA& tri, std::span<double> out_x,
                    std::span<double> out_y);
void bilinear(std::span<const double> image, int width, int height, std::span<const double> xs,
              std::span<const double> ys, std::span<double> out, std::span<double> grad_x,
              std::span<double> grad_y);
CenteredMoments centered_moments(std::span<const double> a, std::span<const double> b);
double ratio_square_sum(std::span<const double> num, std::span<const double> den, double eps);
std::size_t count_positive(std::span<const std::int32_t> counts);
}  // namespace avx2
#endif

}  // namespace evdm::kernels
