#include "doctest.h"
#include "mtlkit/common.hpp"
#include "mtlkit/kernels.hpp"

#include <vector>

using namespace mtlkit;
namespace k = mtlkit::kernels;

namespace {

std::vector<double> random_vec(Rng& rng, long n) {
    std::vector<double> v(static_cast<size_t>(n));
    for (auto& x : v) x = rng.normal();
    return v;
}

// Textbook triple loop, jki order on purpose so it is an independent route.
std::vector<double> naive_nn(const std::vector<double>& a, const std::vector<double>& b, long m,
                             long kk, long n) {
    std::vector<double> c(static_cast<size_t>(m * n), 0.0);
    for (long j = 0; j < n; ++j)
        for (long l = 0; l < kk; ++l)
            for (long i = 0; i < m; ++i) c[i * n + j] += a[i * kk + l] * b[l * n + j];
    return c;
}

}  // namespace

TEST_CASE("gemm_nn matches a naive oracle") {
    Rng rng(1);
    const long dims1[][3] = {{3, 4, 2}, {7, 5, 9}, {16, 16, 16}};
    for (auto [m, kk, n] : dims1) {
        auto a = random_vec(rng, m * kk);
        auto b = random_vec(rng, kk * n);
        std::vector<double> c(static_cast<size_t>(m * n));
        k::gemm_nn_serial(a.data(), b.data(), c.data(), m, kk, n, false);
        auto ref = naive_nn(a, b, m, kk, n);
        for (size_t i = 0; i < c.size(); ++i) CHECK(c[i] == doctest::Approx(ref[i]).epsilon(1e-12));
    }
}

TEST_CASE("serial and omp gemm variants are bit-identical") {
    Rng rng(2);
    const long dims2[][3] = {{5, 3, 7}, {33, 65, 17}, {128, 64, 96}};
    for (auto [m, kk, n] : dims2) {
        auto a = random_vec(rng, m * kk);
        auto b = random_vec(rng, kk * n);
        std::vector<double> c1(static_cast<size_t>(m * n)), c2(static_cast<size_t>(m * n));

        k::gemm_nn_serial(a.data(), b.data(), c1.data(), m, kk, n, false);
        k::gemm_nn_omp(a.data(), b.data(), c2.data(), m, kk, n, false);
        CHECK(c1 == c2);

        auto bt = random_vec(rng, n * kk);
        k::gemm_nt_serial(a.data(), bt.data(), c1.data(), m, kk, n, false);
        k::gemm_nt_omp(a.data(), bt.data(), c2.data(), m, kk, n, false);
        CHECK(c1 == c2);

        auto at = random_vec(rng, kk * m);
        auto bb = random_vec(rng, kk * n);
        k::gemm_tn_serial(at.data(), bb.data(), c1.data(), m, kk, n, false);
        k::gemm_tn_omp(at.data(), bb.data(), c2.data(), m, kk, n, false);
        CHECK(c1 == c2);
    }
}

TEST_CASE("gemm transpose variants agree with explicit transposition") {
    Rng rng(3);
    long m = 6, kk = 5, n = 4;
    auto a = random_vec(rng, m * kk);
    auto b = random_vec(rng, kk * n);
    auto ref = naive_nn(a, b, m, kk, n);

    // B stored row-major as [n x kk] holding B^T.
    std::vector<double> bt(static_cast<size_t>(n * kk));
    for (long i = 0; i < kk; ++i)
        for (long j = 0; j < n; ++j) bt[j * kk + i] = b[i * n + j];
    std::vector<double> c(static_cast<size_t>(m * n));
    k::gemm_nt(a.data(), bt.data(), c.data(), m, kk, n, false);
    for (size_t i = 0; i < c.size(); ++i) CHECK(c[i] == doctest::Approx(ref[i]));

    std::vector<double> at(static_cast<size_t>(kk * m));
    for (long i = 0; i < m; ++i)
        for (long l = 0; l < kk; ++l) at[l * m + i] = a[i * kk + l];
    k::gemm_tn(at.data(), b.data(), c.data(), m, kk, n, false);
    for (size_t i = 0; i < c.size(); ++i) CHECK(c[i] == doctest::Approx(ref[i]));
}

TEST_CASE("accumulate flag adds instead of overwriting") {
    Rng rng(4);
    long m = 4, kk = 3, n = 5;
    auto a = random_vec(rng, m * kk);
    auto b = random_vec(rng, kk * n);
    std::vector<double> once(static_cast<size_t>(m * n)), twice(static_cast<size_t>(m * n));
    k::gemm_nn(a.data(), b.data(), once.data(), m, kk, n, false);
    k::gemm_nn(a.data(), b.data(), twice.data(), m, kk, n, false);
    k::gemm_nn(a.data(), b.data(), twice.data(), m, kk, n, true);
    for (size_t i = 0; i < once.size(); ++i)
        CHECK(twice[i] == doctest::Approx(2.0 * once[i]).epsilon(1e-13));

    // gemm_nt adds each completed dot product in one shot, so doubling is exact.
    auto bt = random_vec(rng, n * kk);
    k::gemm_nt(a.data(), bt.data(), once.data(), m, kk, n, false);
    k::gemm_nt(a.data(), bt.data(), twice.data(), m, kk, n, false);
    k::gemm_nt(a.data(), bt.data(), twice.data(), m, kk, n, true);
    for (size_t i = 0; i < once.size(); ++i) CHECK(twice[i] == 2.0 * once[i]);
}

TEST_CASE("batched gemm equals per-entry gemm and is serial/omp stable") {
    Rng rng(5);
    long batch = 6, m = 4, kk = 3, n = 5;
    auto a = random_vec(rng, batch * m * kk);
    auto b = random_vec(rng, batch * kk * n);
    std::vector<double> c(static_cast<size_t>(batch * m * n));
    k::bgemm_nn(a.data(), b.data(), c.data(), batch, m, kk, n, false);
    for (long e = 0; e < batch; ++e) {
        std::vector<double> ref(static_cast<size_t>(m * n));
        k::gemm_nn_serial(a.data() + e * m * kk, b.data() + e * kk * n, ref.data(), m, kk, n,
                          false);
        for (long i = 0; i < m * n; ++i) CHECK(c[e * m * n + i] == ref[static_cast<size_t>(i)]);
    }
}

TEST_CASE("softmax rows: normalized, stable, serial==omp") {
    Rng rng(6);
    long rows = 40, cols = 9;
    auto x = random_vec(rng, rows * cols);
    x[0] = 1e4;  // saturation guard
    x[1] = -1e4;
    std::vector<double> s1(x.size()), s2(x.size());
    k::softmax_rows_serial(x.data(), s1.data(), rows, cols);
    k::softmax_rows_omp(x.data(), s2.data(), rows, cols);
    CHECK(s1 == s2);
    for (long r = 0; r < rows; ++r) {
        double sum = 0.0;
        for (long j = 0; j < cols; ++j) {
            CHECK(std::isfinite(s1[static_cast<size_t>(r * cols + j)]));
            sum += s1[static_cast<size_t>(r * cols + j)];
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("dispatch honors force_serial") {
    k::set_force_serial(true);
    CHECK(k::force_serial());
    k::set_force_serial(false);
    CHECK_FALSE(k::force_serial());
}
