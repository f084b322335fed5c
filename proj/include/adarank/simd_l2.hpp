#pragma once

#include <cstddef>
#include <cstdint>

// Squared-L2 kernels for the k-means assignment step. Inputs are float
// vectors; accumulation is in double so the scalar and AVX2 paths agree to
// summation-order rounding only (the float->double widening and the diff are
// exact, each product rounds once). The AVX2 variant is picked at runtime
// when the CPU supports it; force_scalar() pins the scalar path for
// equivalence tests.

namespace adarank::simd {

double squared_l2(const float* a, const float* b, std::size_t d);

// For each of n points (row-major, stride d), finds the nearest of k
// centroids. Ties go to the lowest centroid index.
void nearest_centroid(const float* points, std::size_t n, std::size_t d,
                      const float* centroids, std::size_t k,
                      std::uint32_t* out_index, double* out_dist2);

const char* active_kernel();  // "avx2" or "scalar"
void force_scalar(bool on);

namespace detail {
double squared_l2_scalar(const float* a, const float* b, std::size_t d);
#if defined(__x86_64__) || defined(_M_X64)
double squared_l2_avx2(const float* a, const float* b, std::size_t d);
#endif
}  // namespace detail

}  // namespace adarank::simd
