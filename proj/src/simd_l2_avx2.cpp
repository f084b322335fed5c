// AVX2 variant of the squared-L2 kernel. Compiled with -mavx2 in its own
// translation unit; only reached after the runtime CPU check in simd_l2.cpp.

#include "adarank/simd_l2.hpp"

#if defined(__x86_64__) || defined(_M_X64)

#include <immintrin.h>

namespace adarank::simd::detail {

double squared_l2_avx2(const float* a, const float* b, std::size_t d) {
    __m256d acc0 = _mm256_setzero_pd();
    __m256d acc1 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 8 <= d; i += 8) {
        __m256 va = _mm256_loadu_ps(a + i);
        __m256 vb = _mm256_loadu_ps(b + i);
        // Widen to double before subtracting: diff and widening are exact,
        // so only the product and the accumulation round.
        __m256d alo = _mm256_cvtps_pd(_mm256_castps256_ps128(va));
        __m256d ahi = _mm256_cvtps_pd(_mm256_extractf128_ps(va, 1));
        __m256d blo = _mm256_cvtps_pd(_mm256_castps256_ps128(vb));
        __m256d bhi = _mm256_cvtps_pd(_mm256_extractf128_ps(vb, 1));
        __m256d dlo = _mm256_sub_pd(alo, blo);
        __m256d dhi = _mm256_sub_pd(ahi, bhi);
        acc0 = _mm256_add_pd(acc0, _mm256_mul_pd(dlo, dlo));
        acc1 = _mm256_add_pd(acc1, _mm256_mul_pd(dhi, dhi));
    }
    __m256d acc = _mm256_add_pd(acc0, acc1);
    alignas(32) double lanes[4];
    _mm256_store_pd(lanes, acc);
    double total = (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
    for (; i < d; ++i) {
        double diff = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        total += diff * diff;
    }
    return total;
}

}  // namespace adarank::simd::detail

#endif
