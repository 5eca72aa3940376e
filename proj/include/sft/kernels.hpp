#pragma once

#include <cstdint>

namespace sft::kernels {

// Dense kernels behind every tape operation. Each has a serial twin in
// kernels::serial with the identical per-element accumulation order, so the
// parallel versions are bit-for-bit reproducible and directly comparable in
// tests and benchmarks. Parallelism is over independent output elements only;
// no cross-thread reductions.

enum class Unary { Relu, Gelu, Sigmoid, Softplus, Exp, Log, Atan, Abs };

// C (m x n) = A (m x k) * B (k x n); accumulate adds into C instead.
void gemm_nn(int m, int n, int k, const double* a, const double* b, double* c, bool accumulate);
// C (m x n) = A (m x k) * B^T where B is (n x k).
void gemm_nt(int m, int n, int k, const double* a, const double* b, double* c, bool accumulate);
// C (m x n) = A^T * B where A is (k x m), B is (k x n).
void gemm_tn(int m, int n, int k, const double* a, const double* b, double* c, bool accumulate);

// Row-wise softmax with per-row max subtraction.
void softmax_rows(int m, int n, const double* x, double* y);
// dx = y .* (dy - rowdot(dy, y)), accumulated into dx.
void softmax_rows_backward(int m, int n, const double* y, const double* dy, double* dx);

void unary_map(Unary op, std::int64_t count, const double* x, double* y);
// dx += dy .* f'(x) expressed through x and y = f(x).
void unary_backward(Unary op, std::int64_t count, const double* x, const double* y,
                    const double* dy, double* dx);

namespace serial {

void gemm_nn(int m, int n, int k, const double* a, const double* b, double* c, bool accumulate);
void gemm_nt(int m, int n, int k, const double* a, const double* b, double* c, bool accumulate);
void gemm_tn(int m, int n, int k, const double* a, const double* b, double* c, bool accumulate);
void softmax_rows(int m, int n, const double* x, double* y);
void softmax_rows_backward(int m, int n, const double* y, const double* dy, double* dx);
void unary_map(Unary op, std::int64_t count, const double* x, double* y);
void unary_backward(Unary op, std::int64_t count, const double* x, const double* y,
                    const double* dy, double* dx);

}  // namespace serial

}  // namespace sft::kernels
