#include "bdlm/kernels.hpp"

#include <cassert>
#include <cmath>

// Every output element accumulates over k in ascending order starting from
// 0.0 (or from the prior value when accumulating), in both the reference and
// the OpenMP variant, so the two produce identical bits and the results do
// not depend on thread count. The loop nests differ only in how they stream
// memory: c-row accumulation vectorizes without reassociation because each
// c[j] is its own accumulator.

namespace bdlm {

namespace {

inline void row_mac(double* __restrict c, double a, const double* __restrict b, int64_t n) {
    for (int64_t j = 0; j < n; ++j) c[j] += a * b[j];
}

// four fixed partial sums, combined in a fixed order
inline double dot_unrolled(const double* __restrict a, const double* __restrict b, int64_t n) {
    double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
    int64_t k = 0;
    for (; k + 4 <= n; k += 4) {
        s0 += a[k] * b[k];
        s1 += a[k + 1] * b[k + 1];
        s2 += a[k + 2] * b[k + 2];
        s3 += a[k + 3] * b[k + 3];
    }
    double s = (s0 + s1) + (s2 + s3);
    for (; k < n; ++k) s += a[k] * b[k];
    return s;
}

inline void matmul_row(const Mat& a, const Mat& b, Mat& c, bool accumulate, int64_t i) {
    const double* ar = a.row(i);
    double* cr = c.row(i);
    if (!accumulate) {
        for (int64_t j = 0; j < b.cols; ++j) cr[j] = 0.0;
    }
    for (int64_t k = 0; k < a.cols; ++k) row_mac(cr, ar[k], b.row(k), b.cols);
}

inline void matmul_atb_row(const Mat& a, const Mat& b, Mat& c, bool accumulate, int64_t i) {
    double* cr = c.row(i);
    if (!accumulate) {
        for (int64_t j = 0; j < b.cols; ++j) cr[j] = 0.0;
    }
    for (int64_t k = 0; k < a.rows; ++k) row_mac(cr, a(k, i), b.row(k), b.cols);
}

inline void softmax_row(Mat& x, int64_t i) {
    double* r = x.row(i);
    double mx = r[0];
    for (int64_t j = 1; j < x.cols; ++j) mx = std::max(mx, r[j]);
    double sum = 0.0;
    for (int64_t j = 0; j < x.cols; ++j) {
        r[j] = std::exp(r[j] - mx);
        sum += r[j];
    }
    double inv = 1.0 / sum;
    for (int64_t j = 0; j < x.cols; ++j) r[j] *= inv;
}

constexpr int64_t kParallelCutoff = 1 << 15;

}  // namespace

namespace refk {

void matmul(const Mat& a, const Mat& b, Mat& c, bool accumulate) {
    assert(a.cols == b.rows && c.rows == a.rows && c.cols == b.cols);
    for (int64_t i = 0; i < a.rows; ++i) matmul_row(a, b, c, accumulate, i);
}

void matmul_abt(const Mat& a, const Mat& b, Mat& c, bool accumulate) {
    assert(a.cols == b.cols && c.rows == a.rows && c.cols == b.rows);
    for (int64_t i = 0; i < a.rows; ++i) {
        const double* ar = a.row(i);
        double* cr = c.row(i);
        for (int64_t j = 0; j < b.rows; ++j) {
            double acc = dot_unrolled(ar, b.row(j), a.cols);
            cr[j] = accumulate ? cr[j] + acc : acc;
        }
    }
}

void matmul_atb(const Mat& a, const Mat& b, Mat& c, bool accumulate) {
    assert(a.rows == b.rows && c.rows == a.cols && c.cols == b.cols);
    for (int64_t i = 0; i < a.cols; ++i) matmul_atb_row(a, b, c, accumulate, i);
}

void softmax_rows(Mat& x) {
    for (int64_t i = 0; i < x.rows; ++i) softmax_row(x, i);
}

}  // namespace refk

namespace kern {

void matmul(const Mat& a, const Mat& b, Mat& c, bool accumulate) {
    assert(a.cols == b.rows && c.rows == a.rows && c.cols == b.cols);
    if (a.rows * b.cols * a.cols < kParallelCutoff || a.rows == 1) {
        refk::matmul(a, b, c, accumulate);
        return;
    }
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < a.rows; ++i) matmul_row(a, b, c, accumulate, i);
}

void matmul_abt(const Mat& a, const Mat& b, Mat& c, bool accumulate) {
    assert(a.cols == b.cols && c.rows == a.rows && c.cols == b.rows);
    if (a.rows * b.rows * a.cols < kParallelCutoff) {
        refk::matmul_abt(a, b, c, accumulate);
        return;
    }
    if (a.rows == 1) {
        const double* ar = a.row(0);
        double* cr = c.row(0);
#pragma omp parallel for schedule(static)
        for (int64_t j = 0; j < b.rows; ++j) {
            double acc = dot_unrolled(ar, b.row(j), a.cols);
            cr[j] = accumulate ? cr[j] + acc : acc;
        }
        return;
    }
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < a.rows; ++i) {
        const double* ar = a.row(i);
        double* cr = c.row(i);
        for (int64_t j = 0; j < b.rows; ++j) {
            double acc = dot_unrolled(ar, b.row(j), a.cols);
            cr[j] = accumulate ? cr[j] + acc : acc;
        }
    }
}

void matmul_atb(const Mat& a, const Mat& b, Mat& c, bool accumulate) {
    assert(a.rows == b.rows && c.rows == a.cols && c.cols == b.cols);
    if (a.cols * b.cols * a.rows < kParallelCutoff || a.cols == 1) {
        refk::matmul_atb(a, b, c, accumulate);
        return;
    }
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < a.cols; ++i) matmul_atb_row(a, b, c, accumulate, i);
}

void softmax_rows(Mat& x) {
    if (x.rows * x.cols < kParallelCutoff) {
        refk::softmax_rows(x);
        return;
    }
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < x.rows; ++i) softmax_row(x, i);
}

void axpy(std::span<double> y, double alpha, std::span<const double> x) {
    assert(y.size() == x.size());
    for (size_t i = 0; i < y.size(); ++i) y[i] += alpha * x[i];
}

double dot(std::span<const double> x, std::span<const double> y) {
    assert(x.size() == y.size());
    return dot_unrolled(x.data(), y.data(), static_cast<int64_t>(x.size()));
}

}  // namespace kern

}  // namespace bdlm
