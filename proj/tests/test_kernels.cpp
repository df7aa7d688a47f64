#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "bdlm/kernels.hpp"
#include "bdlm/rng.hpp"

using namespace bdlm;

namespace {

Mat random_mat(int64_t r, int64_t c, uint64_t seed) {
    Rng rng(seed);
    Mat m(r, c);
    for (auto& v : m.a) v = rng.normal();
    return m;
}

}  // namespace

TEST_CASE("matmul matches a hand-computed 2x2 product") {
    Mat a(2, 2), b(2, 2), c(2, 2);
    a(0, 0) = 1; a(0, 1) = 2; a(1, 0) = 3; a(1, 1) = 4;
    b(0, 0) = 5; b(0, 1) = 6; b(1, 0) = 7; b(1, 1) = 8;
    kern::matmul(a, b, c);
    CHECK(c(0, 0) == 19);
    CHECK(c(0, 1) == 22);
    CHECK(c(1, 0) == 43);
    CHECK(c(1, 1) == 50);
}

TEST_CASE("omp kernels are bitwise identical to the serial reference") {
    // shapes straddle the parallel cutoff on purpose
    for (auto [n, m, k] : {std::tuple<int64_t, int64_t, int64_t>{3, 4, 5},
                           {40, 48, 56},
                           {1, 64, 3000}}) {
        Mat a = random_mat(n, k, 1000 + n);
        Mat b = random_mat(k, m, 2000 + m);
        Mat c_ref(n, m), c_omp(n, m);
        refk::matmul(a, b, c_ref);
        kern::matmul(a, b, c_omp);
        CHECK(bitwise_equal(c_ref, c_omp));

        Mat bt = random_mat(m, k, 3000 + m);
        Mat d_ref(n, m), d_omp(n, m);
        refk::matmul_abt(a, bt, d_ref);
        kern::matmul_abt(a, bt, d_omp);
        CHECK(bitwise_equal(d_ref, d_omp));

        Mat at = random_mat(k, n, 4000 + n);
        Mat e_ref(n, m), e_omp(n, m);
        Mat bb = random_mat(k, m, 5000 + m);
        refk::matmul_atb(at, bb, e_ref);
        kern::matmul_atb(at, bb, e_omp);
        CHECK(bitwise_equal(e_ref, e_omp));
    }
}

TEST_CASE("accumulating matmul adds onto the destination") {
    Mat a = random_mat(4, 6, 1);
    Mat b = random_mat(6, 5, 2);
    Mat c(4, 5);
    for (auto& v : c.a) v = 1.0;
    Mat expect = c;
    refk::matmul(a, b, expect, false);
    for (int64_t i = 0; i < expect.size(); ++i) expect.a[i] += 1.0;
    kern::matmul(a, b, c, true);
    CHECK(bitwise_equal(expect, c));
}

TEST_CASE("softmax rows are normalized and match the reference") {
    Mat x = random_mat(37, 129, 9);
    Mat y = x;
    refk::softmax_rows(x);
    kern::softmax_rows(y);
    CHECK(bitwise_equal(x, y));
    for (int64_t r = 0; r < x.rows; ++r) {
        double sum = 0.0;
        for (int64_t c = 0; c < x.cols; ++c) {
            CHECK(x(r, c) >= 0.0);
            sum += x(r, c);
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("rng streams are deterministic and sub-seed derivation separates names") {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) CHECK(a.next() == b.next());
    CHECK(derive_seed(1, "split") != derive_seed(1, "shuffle"));
    CHECK(derive_seed(1, "split") != derive_seed(2, "split"));
    CHECK(derive_seed(1, "split", 0) != derive_seed(1, "split", 1));
    CHECK(derive_seed(1, "split") == derive_seed(1, "split"));
}

TEST_CASE("uniform_int covers the range without bias artifacts at the edges") {
    Rng rng(7);
    std::vector<int64_t> counts(10, 0);
    for (int i = 0; i < 100000; ++i) ++counts[rng.uniform_int(10)];
    for (int64_t c : counts) {
        CHECK(c > 9000);
        CHECK(c < 11000);
    }
}
