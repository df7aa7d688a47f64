#pragma once

#include "bdlm/mat.hpp"

// Dense kernels used by the model forward/backward passes. Two builds of the
// same arithmetic:
//   refk::  - serial reference, kept for testing
//   kern::  - OpenMP over independent output rows/elements
// Each output element accumulates in the same fixed index order in both
// variants, so results are bitwise identical to the reference regardless of
// thread count.

namespace bdlm::refk {

// c = a * b (or c += a * b when accumulate)
void matmul(const Mat& a, const Mat& b, Mat& c, bool accumulate = false);
// c = a * b^T
void matmul_abt(const Mat& a, const Mat& b, Mat& c, bool accumulate = false);
// c = a^T * b
void matmul_atb(const Mat& a, const Mat& b, Mat& c, bool accumulate = false);
// in-place row-wise softmax with max subtraction
void softmax_rows(Mat& x);

}  // namespace bdlm::refk

namespace bdlm::kern {

void matmul(const Mat& a, const Mat& b, Mat& c, bool accumulate = false);
void matmul_abt(const Mat& a, const Mat& b, Mat& c, bool accumulate = false);
void matmul_atb(const Mat& a, const Mat& b, Mat& c, bool accumulate = false);
void softmax_rows(Mat& x);

// y += alpha * x
void axpy(std::span<double> y, double alpha, std::span<const double> x);
double dot(std::span<const double> x, std::span<const double> y);

}  // namespace bdlm::kern
