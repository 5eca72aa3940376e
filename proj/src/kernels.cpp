#include "sft/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace sft::kernels {

namespace {

// Work below this size is not worth a thread team on small desk-scale ops.
constexpr std::int64_t kParallelCutoff = 16 * 1024;

inline double unary_eval(Unary op, double x) {
    switch (op) {
        case Unary::Relu: return x > 0.0 ? x : 0.0;
        case Unary::Gelu: return 0.5 * x * (1.0 + std::erf(x * 0.7071067811865475));
        case Unary::Sigmoid: {
            if (x >= 0.0) {
                double e = std::exp(-x);
                return 1.0 / (1.0 + e);
            }
            double e = std::exp(x);
            return e / (1.0 + e);
        }
        case Unary::Softplus: {
            // log(1 + e^x) without overflow for large |x|.
            if (x > 30.0) return x;
            if (x < -30.0) return std::exp(x);
            return std::log1p(std::exp(x));
        }
        case Unary::Exp: return std::exp(x);
        case Unary::Log:
            if (x <= 0.0) throw std::domain_error("log requires strictly positive input");
            return std::log(x);
        case Unary::Atan: return std::atan(x);
        case Unary::Abs: return std::fabs(x);
    }
    return 0.0;
}

inline double unary_deriv(Unary op, double x, double y) {
    switch (op) {
        case Unary::Relu: return x > 0.0 ? 1.0 : 0.0;
        case Unary::Gelu: {
            double phi = std::exp(-0.5 * x * x) * 0.3989422804014327;  // standard normal pdf
            double cdf = 0.5 * (1.0 + std::erf(x * 0.7071067811865475));
            return cdf + x * phi;
        }
        case Unary::Sigmoid: return y * (1.0 - y);
        case Unary::Softplus: return unary_eval(Unary::Sigmoid, x);
        case Unary::Exp: return y;
        case Unary::Log: return 1.0 / x;
        case Unary::Atan: return 1.0 / (1.0 + x * x);
        case Unary::Abs: return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0);
    }
    return 0.0;
}

inline void gemm_nn_row(int i, int n, int k, const double* a, const double* b, double* c,
                        bool accumulate) {
    double* crow = c + static_cast<std::size_t>(i) * n;
    if (!accumulate) std::fill(crow, crow + n, 0.0);
    const double* arow = a + static_cast<std::size_t>(i) * k;
    for (int t = 0; t < k; ++t) {
        double av = arow[t];
        if (av == 0.0) continue;
        const double* brow = b + static_cast<std::size_t>(t) * n;
        for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
}

inline void gemm_nt_row(int i, int n, int k, const double* a, const double* b, double* c,
                        bool accumulate) {
    const double* arow = a + static_cast<std::size_t>(i) * k;
    double* crow = c + static_cast<std::size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
        const double* brow = b + static_cast<std::size_t>(j) * k;
        double sum = 0.0;
        for (int t = 0; t < k; ++t) sum += arow[t] * brow[t];
        crow[j] = accumulate ? crow[j] + sum : sum;
    }
}

inline void softmax_row(int i, int n, const double* x, double* y) {
    const double* xr = x + static_cast<std::size_t>(i) * n;
    double* yr = y + static_cast<std::size_t>(i) * n;
    double mx = xr[0];
    for (int j = 1; j < n; ++j) mx = std::max(mx, xr[j]);
    double sum = 0.0;
    for (int j = 0; j < n; ++j) {
        yr[j] = std::exp(xr[j] - mx);
        sum += yr[j];
    }
    double inv = 1.0 / sum;
    for (int j = 0; j < n; ++j) yr[j] *= inv;
}

inline void softmax_backward_row(int i, int n, const double* y, const double* dy, double* dx) {
    const double* yr = y + static_cast<std::size_t>(i) * n;
    const double* dyr = dy + static_cast<std::size_t>(i) * n;
    double* dxr = dx + static_cast<std::size_t>(i) * n;
    double dot = 0.0;
    for (int j = 0; j < n; ++j) dot += dyr[j] * yr[j];
    for (int j = 0; j < n; ++j) dxr[j] += yr[j] * (dyr[j] - dot);
}

}  // namespace

void gemm_nn(int m, int n, int k, const double* a, const double* b, double* c, bool accumulate) {
    std::int64_t work = static_cast<std::int64_t>(m) * n * k;
#pragma omp parallel for schedule(static) if (work > kParallelCutoff)
    for (int i = 0; i < m; ++i) gemm_nn_row(i, n, k, a, b, c, accumulate);
}

void gemm_nt(int m, int n, int k, const double* a, const double* b, double* c, bool accumulate) {
    std::int64_t work = static_cast<std::int64_t>(m) * n * k;
#pragma omp parallel for schedule(static) if (work > kParallelCutoff)
    for (int i = 0; i < m; ++i) gemm_nt_row(i, n, k, a, b, c, accumulate);
}

void gemm_tn(int m, int n, int k, const double* a, const double* b, double* c, bool accumulate) {
    // C[i, j] = sum_t A[t, i] * B[t, j]; strided reads on A, streamed rows of B.
    std::int64_t work = static_cast<std::int64_t>(m) * n * k;
#pragma omp parallel for schedule(static) if (work > kParallelCutoff)
    for (int i = 0; i < m; ++i) {
        double* crow = c + static_cast<std::size_t>(i) * n;
        if (!accumulate) std::fill(crow, crow + n, 0.0);
        for (int t = 0; t < k; ++t) {
            double av = a[static_cast<std::size_t>(t) * m + i];
            if (av == 0.0) continue;
            const double* brow = b + static_cast<std::size_t>(t) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

void softmax_rows(int m, int n, const double* x, double* y) {
    std::int64_t work = static_cast<std::int64_t>(m) * n;
#pragma omp parallel for schedule(static) if (work > kParallelCutoff)
    for (int i = 0; i < m; ++i) softmax_row(i, n, x, y);
}

void softmax_rows_backward(int m, int n, const double* y, const double* dy, double* dx) {
    std::int64_t work = static_cast<std::int64_t>(m) * n;
#pragma omp parallel for schedule(static) if (work > kParallelCutoff)
    for (int i = 0; i < m; ++i) softmax_backward_row(i, n, y, dy, dx);
}

void unary_map(Unary op, std::int64_t count, const double* x, double* y) {
    if (op == Unary::Log) {
        // Domain check must not race with exceptions inside a parallel region.
        for (std::int64_t i = 0; i < count; ++i) {
            if (x[i] <= 0.0) throw std::domain_error("log requires strictly positive input");
        }
    }
#pragma omp parallel for schedule(static) if (count > kParallelCutoff)
    for (std::int64_t i = 0; i < count; ++i) y[i] = unary_eval(op, x[i]);
}

void unary_backward(Unary op, std::int64_t count, const double* x, const double* y,
                    const double* dy, double* dx) {
#pragma omp parallel for schedule(static) if (count > kParallelCutoff)
    for (std::int64_t i = 0; i < count; ++i) dx[i] += dy[i] * unary_deriv(op, x[i], y[i]);
}

namespace serial {

void gemm_nn(int m, int n, int k, const double* a, const double* b, double* c, bool accumulate) {
    for (int i = 0; i < m; ++i) gemm_nn_row(i, n, k, a, b, c, accumulate);
}

void gemm_nt(int m, int n, int k, const double* a, const double* b, double* c, bool accumulate) {
    for (int i = 0; i < m; ++i) gemm_nt_row(i, n, k, a, b, c, accumulate);
}

void gemm_tn(int m, int n, int k, const double* a, const double* b, double* c, bool accumulate) {
    for (int i = 0; i < m; ++i) {
        double* crow = c + static_cast<std::size_t>(i) * n;
        if (!accumulate) std::fill(crow, crow + n, 0.0);
        for (int t = 0; t < k; ++t) {
            double av = a[static_cast<std::size_t>(t) * m + i];
            if (av == 0.0) continue;
            const double* brow = b + static_cast<std::size_t>(t) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

void softmax_rows(int m, int n, const double* x, double* y) {
    for (int i = 0; i < m; ++i) softmax_row(i, n, x, y);
}

void softmax_rows_backward(int m, int n, const double* y, const double* dy, double* dx) {
    for (int i = 0; i < m; ++i) softmax_backward_row(i, n, y, dy, dx);
}

void unary_map(Unary op, std::int64_t count, const double* x, double* y) {
    for (std::int64_t i = 0; i < count; ++i) y[i] = unary_eval(op, x[i]);
}

void unary_backward(Unary op, std::int64_t count, const double* x, const double* y,
                    const double* dy, double* dx) {
    for (std::int64_t i = 0; i < count; ++i) dx[i] += dy[i] * unary_deriv(op, x[i], y[i]);
}

}  // namespace serial

}  // namespace sft::kernels
