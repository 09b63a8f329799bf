#include "mtlkit/kernels.hpp"

#include <algorithm>
#include <cmath>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace mtlkit::kernels {

namespace {
thread_local bool g_force_serial = false;

// Below this many flops the fork/join overhead dominates.
constexpr long kParallelFlopThreshold = 1L << 15;

inline bool go_parallel(long flops) {
    return parallel_available() && !g_force_serial && flops >= kParallelFlopThreshold;
}
}  // namespace

void set_force_serial(bool v) { g_force_serial = v; }
bool force_serial() { return g_force_serial; }

bool parallel_available() {
#ifdef _OPENMP
    return omp_get_max_threads() > 1;
#else
    return false;
#endif
}

// One output row per iteration; the per-row accumulation order is identical
// in the serial and parallel variants, which is what makes them bit-identical.
namespace {
inline void gemm_nn_row(const double* a, const double* b, double* c, long i, long k, long n,
                        bool accumulate) {
    double* crow = c + i * n;
    if (!accumulate) std::fill(crow, crow + n, 0.0);
    const double* arow = a + i * k;
    for (long l = 0; l < k; ++l) {
        const double ail = arow[l];
        const double* brow = b + l * n;
        for (long j = 0; j < n; ++j) crow[j] += ail * brow[j];
    }
}

inline void gemm_nt_row(const double* a, const double* b, double* c, long i, long k, long n,
                        bool accumulate) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    for (long j = 0; j < n; ++j) {
        const double* brow = b + j * k;
        double acc = 0.0;
        for (long l = 0; l < k; ++l) acc += arow[l] * brow[l];
        crow[j] = accumulate ? crow[j] + acc : acc;
    }
}

inline void gemm_tn_row(const double* a, const double* b, double* c, long i, long k, long m,
                        long n, bool accumulate) {
    double* crow = c + i * n;
    if (!accumulate) std::fill(crow, crow + n, 0.0);
    for (long l = 0; l < k; ++l) {
        const double ali = a[l * m + i];
        const double* brow = b + l * n;
        for (long j = 0; j < n; ++j) crow[j] += ali * brow[j];
    }
}

inline void softmax_row(const double* x, double* out, long cols) {
    const double* row = x;
    double mx = row[0];
    for (long j = 1; j < cols; ++j) mx = std::max(mx, row[j]);
    double sum = 0.0;
    for (long j = 0; j < cols; ++j) {
        double e = std::exp(row[j] - mx);
        out[j] = e;
        sum += e;
    }
    double inv = 1.0 / sum;
    for (long j = 0; j < cols; ++j) out[j] *= inv;
}
}  // namespace

void gemm_nn_serial(const double* a, const double* b, double* c, long m, long k, long n,
                    bool accumulate) {
    for (long i = 0; i < m; ++i) gemm_nn_row(a, b, c, i, k, n, accumulate);
}

void gemm_nn_omp(const double* a, const double* b, double* c, long m, long k, long n,
                 bool accumulate) {
#pragma omp parallel for schedule(static)
    for (long i = 0; i < m; ++i) gemm_nn_row(a, b, c, i, k, n, accumulate);
}

void gemm_nn(const double* a, const double* b, double* c, long m, long k, long n,
             bool accumulate) {
    if (go_parallel(2 * m * k * n))
        gemm_nn_omp(a, b, c, m, k, n, accumulate);
    else
        gemm_nn_serial(a, b, c, m, k, n, accumulate);
}

void gemm_nt_serial(const double* a, const double* b, double* c, long m, long k, long n,
                    bool accumulate) {
    for (long i = 0; i < m; ++i) gemm_nt_row(a, b, c, i, k, n, accumulate);
}

void gemm_nt_omp(const double* a, const double* b, double* c, long m, long k, long n,
                 bool accumulate) {
#pragma omp parallel for schedule(static)
    for (long i = 0; i < m; ++i) gemm_nt_row(a, b, c, i, k, n, accumulate);
}

void gemm_nt(const double* a, const double* b, double* c, long m, long k, long n,
             bool accumulate) {
    if (go_parallel(2 * m * k * n))
        gemm_nt_omp(a, b, c, m, k, n, accumulate);
    else
        gemm_nt_serial(a, b, c, m, k, n, accumulate);
}

void gemm_tn_serial(const double* a, const double* b, double* c, long m, long k, long n,
                    bool accumulate) {
    for (long i = 0; i < m; ++i) gemm_tn_row(a, b, c, i, k, m, n, accumulate);
}

void gemm_tn_omp(const double* a, const double* b, double* c, long m, long k, long n,
                 bool accumulate) {
#pragma omp parallel for schedule(static)
    for (long i = 0; i < m; ++i) gemm_tn_row(a, b, c, i, k, m, n, accumulate);
}

void gemm_tn(const double* a, const double* b, double* c, long m, long k, long n,
             bool accumulate) {
    if (go_parallel(2 * m * k * n))
        gemm_tn_omp(a, b, c, m, k, n, accumulate);
    else
        gemm_tn_serial(a, b, c, m, k, n, accumulate);
}

namespace {
template <typename RowGemm>
void bgemm_impl(long batch, long m, long flops_per_entry, RowGemm&& one) {
    if (go_parallel(batch * flops_per_entry)) {
#pragma omp parallel for schedule(static)
        for (long e = 0; e < batch; ++e) one(e);
    } else {
        for (long e = 0; e < batch; ++e) one(e);
    }
    (void)m;
}
}  // namespace

void bgemm_nn(const double* a, const double* b, double* c, long batch, long m, long k, long n,
              bool accumulate) {
    bgemm_impl(batch, m, 2 * m * k * n, [&](long e) {
        gemm_nn_serial(a + e * m * k, b + e * k * n, c + e * m * n, m, k, n, accumulate);
    });
}

void bgemm_nt(const double* a, const double* b, double* c, long batch, long m, long k, long n,
              bool accumulate) {
    bgemm_impl(batch, m, 2 * m * k * n, [&](long e) {
        gemm_nt_serial(a + e * m * k, b + e * n * k, c + e * m * n, m, k, n, accumulate);
    });
}

void bgemm_tn(const double* a, const double* b, double* c, long batch, long m, long k, long n,
              bool accumulate) {
    bgemm_impl(batch, m, 2 * m * k * n, [&](long e) {
        gemm_tn_serial(a + e * k * m, b + e * k * n, c + e * m * n, m, k, n, accumulate);
    });
}

void softmax_rows_serial(const double* x, double* out, long rows, long cols) {
    for (long i = 0; i < rows; ++i) softmax_row(x + i * cols, out + i * cols, cols);
}

void softmax_rows_omp(const double* x, double* out, long rows, long cols) {
#pragma omp parallel for schedule(static)
    for (long i = 0; i < rows; ++i) softmax_row(x + i * cols, out + i * cols, cols);
}

void softmax_rows(const double* x, double* out, long rows, long cols) {
    if (go_parallel(8 * rows * cols))
        softmax_rows_omp(x, out, rows, cols);
    else
        softmax_rows_serial(x, out, rows, cols);
}

}  // namespace mtlkit::kernels
