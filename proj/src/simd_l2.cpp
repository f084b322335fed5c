#include "adarank/simd_l2.hpp"

#include <atomic>
#include <limits>

namespace adarank::simd {

namespace detail {

double squared_l2_scalar(const float* a, const float* b, std::size_t d) {
    double acc = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        double diff = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        acc += diff * diff;
    }
    return acc;
}

}  // namespace detail

namespace {

using Kernel = double (*)(const float*, const float*, std::size_t);

std::atomic<bool> g_force_scalar{false};

Kernel best_supported() {
#if defined(__x86_64__) || defined(_M_X64)
    __builtin_cpu_init();
    if (__builtin_cpu_supports("avx2")) return detail::squared_l2_avx2;
#endif
    return detail::squared_l2_scalar;
}

Kernel active() {
    if (g_force_scalar.load(std::memory_order_relaxed)) return detail::squared_l2_scalar;
    static Kernel best = best_supported();
    return best;
}

}  // namespace

void force_scalar(bool on) { g_force_scalar.store(on, std::memory_order_relaxed); }

const char* active_kernel() {
    return active() == detail::squared_l2_scalar ? "scalar" : "avx2";
}

double squared_l2(const float* a, const float* b, std::size_t d) {
    return active()(a, b, d);
}

void nearest_centroid(const float* points, std::size_t n, std::size_t d,
                      const float* centroids, std::size_t k,
                      std::uint32_t* out_index, double* out_dist2) {
    Kernel kern = active();
    for (std::size_t i = 0; i < n; ++i) {
        const float* p = points + i * d;
        double best = std::numeric_limits<double>::infinity();
        std::uint32_t best_c = 0;
        for (std::size_t c = 0; c < k; ++c) {
            double d2 = kern(p, centroids + c * d, d);
            if (d2 < best) {
                best = d2;
                best_c = static_cast<std::uint32_t>(c);
            }
        }
        out_index[i] = best_c;
        out_dist2[i] = best;
    }
}

}  // namespace adarank::simd
