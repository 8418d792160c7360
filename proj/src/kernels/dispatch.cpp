#include <atomic>
#include <cstdlib>
#include <string_view>

#include "evdm/kernels.hpp"

namespace evdm::kernels {

std::string_view to_string(Isa isa) { return isa == Isa::Avx2 ? "avx2" : "scalar"; }

Isa detected_isa() {
#ifdef EVDM_HAVE_AVX2_KERNELS
  static const bool ok = __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  if (ok) return Isa::Avx2;
#endif
  return Isa::Scalar;
}

namespace {

Isa initial_isa() {
  const char* env = std::getenv("EVDM_ISA");
  if (env != nullptr && std::string_view(env) == "scalar") return Isa::Scalar;
  return detected_isa();
}

std::atomic<Isa>& current() {
  static std::atomic<Isa> isa{initial_isa()};
  return isa;
}

bool use_avx2() { return current().load(std::memory_order_relaxed) == Isa::Avx2; }

}  // namespace

Isa active_isa() { return current().load(); }

void set_active_isa(Isa isa) {
  if (isa == Isa::Avx2 && detected_isa() != Isa::Avx2) isa = Isa::Scalar;
  current().store(isa);
}

#ifdef EVDM_HAVE_AVX2_KERNELS
#define EVDM_DISPATCH(fn, ...) return use_avx2() ? avx2::fn(__VA_ARGS__) : scalar::fn(__VA_ARGS__)
#else
#define EVDM_DISPATCH(fn, ...) return scalar::fn(__VA_ARGS__)
#endif

void barycentric(std::span<const double> px, std::span<const double> py, const TriangleSoA& tri,
                 const BarycentricSoA& out) {
  EVDM_DISPATCH(barycentric, px, py, tri, out);
}

void affine_combine(const BarycentricConstSoA& w, const TriangleSoA& tri, std::span<double> out_x,
                    std::span<double> out_y) {
  EVDM_DISPATCH(affine_combine, w, tri, out_x, out_y);
}

void bilinear(std::span<const double> image, int width, int height, std::span<const double> xs,
              std::span<const double> ys, std::span<double> out, std::span<double> grad_x,
              std::span<double> grad_y) {
  EVDM_DISPATCH(bilinear, image, width, height, xs, ys, out, grad_x, grad_y);
}

CenteredMoments centered_moments(std::span<const double> a, std::span<const double> b) {
  EVDM_DISPATCH(centered_moments, a, b);
}

double ratio_square_sum(std::span<const double> num, std::span<const double> den, double eps) {
  EVDM_DISPATCH(ratio_square_sum, num, den, eps);
}

std::size_t count_positive(std::span<const std::int32_t> counts) { EVDM_DISPATCH(count_positive, counts); }

#undef EVDM_DISPATCH

}  // namespace evdm::kernels
