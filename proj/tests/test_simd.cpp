#include <doctest.h>

#include <cmath>
#include <cstring>
#include <string>
#include <vector>

#include "adarank/rng.hpp"
#include "adarank/simd_l2.hpp"

using namespace adarank;

namespace {

std::vector<float> random_vec(DetRng& rng, std::size_t d) {
    std::vector<float> v(d);
    for (auto& x : v) x = static_cast<float>(rng.uniform01() * 20.0 - 10.0);
    return v;
}

}  // namespace

TEST_CASE("squared_l2 matches hand values") {
    const float a[] = {0.f, 0.f};
    const float b[] = {3.f, 4.f};
    CHECK(simd::squared_l2(a, b, 2) == doctest::Approx(25.0).epsilon(1e-12));
    CHECK(simd::squared_l2(a, a, 2) == 0.0);
}

TEST_CASE("force_scalar pins the scalar kernel") {
    simd::force_scalar(true);
    CHECK(std::string(simd::active_kernel()) == "scalar");
    simd::force_scalar(false);
}

TEST_CASE("scalar and vector kernels agree") {
#if defined(__x86_64__) || defined(_M_X64)
    simd::force_scalar(false);
    if (std::string(simd::active_kernel()) != "avx2") return;  // no AVX2 on this host

    DetRng rng(77);
    for (std::size_t d : {1u, 2u, 3u, 4u, 5u, 7u, 8u, 9u, 15u, 16u, 17u, 31u, 64u, 67u}) {
        for (int rep = 0; rep < 20; ++rep) {
            auto a = random_vec(rng, d);
            auto b = random_vec(rng, d);
            double s = simd::detail::squared_l2_scalar(a.data(), b.data(), d);
            double v = simd::detail::squared_l2_avx2(a.data(), b.data(), d);
            if (d < 8) {
                // Tail-only path: identical arithmetic, identical result.
                CHECK(s == v);
            } else {
                // Same once-rounded products, different summation order.
                CHECK(v == doctest::Approx(s).epsilon(1e-12));
            }
        }
    }
#endif
}

TEST_CASE("nearest_centroid picks the argmin with low-index ties") {
    // Point equidistant from both centroids.
    const float points[] = {0.f};
    const float centroids[] = {1.f, -1.f};
    std::uint32_t idx = 99;
    double d2 = -1.0;
    simd::nearest_centroid(points, 1, 1, centroids, 2, &idx, &d2);
    CHECK(idx == 0);
    CHECK(d2 == doctest::Approx(1.0));
}

TEST_CASE("nearest_centroid matches a naive scan") {
    simd::force_scalar(true);
    DetRng rng(31);
    const std::size_t n = 64, d = 9, k = 5;
    std::vector<float> points, centroids;
    for (std::size_t i = 0; i < n; ++i) {
        auto v = random_vec(rng, d);
        points.insert(points.end(), v.begin(), v.end());
    }
    for (std::size_t c = 0; c < k; ++c) {
        auto v = random_vec(rng, d);
        centroids.insert(centroids.end(), v.begin(), v.end());
    }
    std::vector<std::uint32_t> idx(n);
    std::vector<double> d2(n);
    simd::nearest_centroid(points.data(), n, d, centroids.data(), k, idx.data(), d2.data());
    for (std::size_t i = 0; i < n; ++i) {
        double best = 1e300;
        std::uint32_t best_c = 0;
        for (std::size_t c = 0; c < k; ++c) {
            double acc = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
                double diff = static_cast<double>(points[i * d + j]) -
                              static_cast<double>(centroids[c * d + j]);
                acc += diff * diff;
            }
            if (acc < best) {
                best = acc;
                best_c = static_cast<std::uint32_t>(c);
            }
        }
        CHECK(idx[i] == best_c);
        CHECK(d2[i] == best);
    }
    simd::force_scalar(false);
}
