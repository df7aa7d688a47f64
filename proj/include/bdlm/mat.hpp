#pragma once

#include <algorithm>
#include <cstdint>
#include <span>
#include <vector>

namespace bdlm {

using Vec = std::vector<double>;

// Dense row-major matrix of doubles. All model math runs in double; float32
// only appears at the serialization boundary.
struct Mat {
    int64_t rows = 0;
    int64_t cols = 0;
    std::vector<double> a;

    Mat() = default;
    Mat(int64_t r, int64_t c) : rows(r), cols(c), a(static_cast<size_t>(r * c), 0.0) {}

    double* row(int64_t r) { return a.data() + r * cols; }
    const double* row(int64_t r) const { return a.data() + r * cols; }
    std::span<double> row_span(int64_t r) { return {row(r), static_cast<size_t>(cols)}; }
    std::span<const double> row_span(int64_t r) const { return {row(r), static_cast<size_t>(cols)}; }

    double& operator()(int64_t r, int64_t c) { return a[r * cols + c]; }
    double operator()(int64_t r, int64_t c) const { return a[r * cols + c]; }

    void zero() { std::fill(a.begin(), a.end(), 0.0); }
    void resize(int64_t r, int64_t c) {
        rows = r;
        cols = c;
        a.assign(static_cast<size_t>(r * c), 0.0);
    }
    // shape fit without zero-fill; contents are stale until overwritten
    void ensure(int64_t r, int64_t c) {
        rows = r;
        cols = c;
        a.resize(static_cast<size_t>(r * c));
    }
    bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }
    int64_t size() const { return rows * cols; }
};

inline bool bitwise_equal(const Mat& x, const Mat& y) {
    if (!x.same_shape(y)) return false;
    return std::equal(x.a.begin(), x.a.end(), y.a.begin());
}

}  // namespace bdlm
