#pragma once

#include <cstddef>

// Dense f64 kernels behind the autodiff ops. Every kernel has a serial
// reference and an OpenMP variant; the OpenMP variants parallelize over
// independent output rows (or batch entries) only, so for any thread count
// they produce bit-identical results to the serial reference. Dispatch
// picks the parallel path above a flop threshold.

namespace mtlkit::kernels {

// C[m x n] = A[m x k] * B[k x n]; accumulate adds into C instead of overwriting.
void gemm_nn_serial(const double* a, const double* b, double* c, long m, long k, long n,
                    bool accumulate);
void gemm_nn_omp(const double* a, const double* b, double* c, long m, long k, long n,
                 bool accumulate);
void gemm_nn(const double* a, const double* b, double* c, long m, long k, long n,
             bool accumulate);

// C[m x n] = A[m x k] * B[n x k]^T
void gemm_nt_serial(const double* a, const double* b, double* c, long m, long k, long n,
                    bool accumulate);
void gemm_nt_omp(const double* a, const double* b, double* c, long m, long k, long n,
                 bool accumulate);
void gemm_nt(const double* a, const double* b, double* c, long m, long k, long n,
             bool accumulate);

// C[m x n] = A[k x m]^T * B[k x n]
void gemm_tn_serial(const double* a, const double* b, double* c, long m, long k, long n,
                    bool accumulate);
void gemm_tn_omp(const double* a, const double* b, double* c, long m, long k, long n,
                 bool accumulate);
void gemm_tn(const double* a, const double* b, double* c, long m, long k, long n,
             bool accumulate);

// Batched variants; each batch entry is an independent gemm with contiguous
// strides m*k / k*n / m*n.
void bgemm_nn(const double* a, const double* b, double* c, long batch, long m, long k, long n,
              bool accumulate);
void bgemm_nt(const double* a, const double* b, double* c, long batch, long m, long k, long n,
              bool accumulate);
void bgemm_tn(const double* a, const double* b, double* c, long batch, long m, long k, long n,
              bool accumulate);

// Row-wise softmax with max-subtraction; rows of width `cols`.
void softmax_rows_serial(const double* x, double* out, long rows, long cols);
void softmax_rows_omp(const double* x, double* out, long rows, long cols);
void softmax_rows(const double* x, double* out, long rows, long cols);

// When true, dispatch always takes the serial path (used when several runs
// share the machine); thread-local so worker threads can set it independently.
void set_force_serial(bool v);
bool force_serial();

// True when compiled with OpenMP and more than one thread is available.
bool parallel_available();

}  // namespace mtlkit::kernels
