#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "flan/matrix.hpp"
#include "flan/rng.hpp"

using namespace flan;

TEST_CASE("matmul identity") {
    const Matrix eye(2, 2, {1, 0, 0, 1});
    const Matrix v(2, 1, {3, 4});
    const Matrix out = matmul(eye, v);
    CHECK(out.rows == 2);
    CHECK(out.cols == 1);
    CHECK(out.data[0] == 3.0);
    CHECK(out.data[1] == 4.0);
}

TEST_CASE("matmul hand dot product") {
    const Matrix a(1, 2, {1, 2});
    const Matrix b(2, 1, {3, 4});
    const Matrix out = matmul(a, b);
    CHECK(out.rows == 1);
    CHECK(out.cols == 1);
    CHECK(out.data[0] == 11.0);
}

TEST_CASE("matmul matches a naive triple loop") {
    Rng rng(8);
    const Matrix a = Matrix::random_uniform(5, 4, -2, 2, rng);
    const Matrix b = Matrix::random_uniform(4, 3, -2, 2, rng);
    const Matrix got = matmul(a, b);
    for (int i = 0; i < 5; ++i) {
        for (int j = 0; j < 3; ++j) {
            double acc = 0.0;
            for (int k = 0; k < 4; ++k) acc += a.at(i, k) * b.at(k, j);
            CHECK(std::abs(got.at(i, j) - acc) < 1e-12);
        }
    }
}

TEST_CASE("matmul shape error names both shapes") {
    const Matrix a(2, 3);
    const Matrix b(2, 3);
    try {
        matmul(a, b);
        FAIL("expected a shape error");
    } catch (const std::invalid_argument& e) {
        const std::string msg = e.what();
        CHECK(msg.find("2x3") != std::string::npos);
    }
}

TEST_CASE("elementwise ops and their shape checks") {
    const Matrix a(1, 3, {1, 2, 3});
    const Matrix b(1, 3, {4, 5, 6});
    CHECK(add(a, b).data == std::vector<double>{5, 7, 9});
    CHECK(sub(b, a).data == std::vector<double>{3, 3, 3});
    CHECK(hadamard(a, b).data == std::vector<double>{4, 10, 18});
    CHECK(scale(a, 2.0).data == std::vector<double>{2, 4, 6});
    CHECK_THROWS_AS(add(a, Matrix(3, 1)), std::invalid_argument);
    CHECK_THROWS_AS(hadamard(a, Matrix(1, 2)), std::invalid_argument);
}

TEST_CASE("transpose and concat_cols") {
    const Matrix a(2, 3, {1, 2, 3, 4, 5, 6});
    const Matrix t = transpose(a);
    CHECK(t.rows == 3);
    CHECK(t.cols == 2);
    CHECK(t.at(2, 1) == 6.0);
    CHECK(t.at(0, 1) == 4.0);

    const Matrix left(1, 2, {1, 2});
    const Matrix right(1, 1, {9});
    const Matrix cat = concat_cols(left, right);
    CHECK(cat.cols == 3);
    CHECK(cat.data == std::vector<double>{1, 2, 9});
    CHECK_THROWS_AS(concat_cols(left, Matrix(2, 1)), std::invalid_argument);
}

TEST_CASE("extract_row copies one row") {
    const Matrix a(2, 3, {1, 2, 3, 4, 5, 6});
    const Matrix r = extract_row(a, 1);
    CHECK(r.rows == 1);
    CHECK(r.data == std::vector<double>{4, 5, 6});
    CHECK_THROWS_AS(extract_row(a, 2), std::invalid_argument);
}

TEST_CASE("reductions and norms") {
    const Matrix a(1, 2, {3, 4});
    CHECK(sum(a) == 7.0);
    CHECK(l2_norm(a) == 5.0);  // 3-4-5 triangle
    CHECK(dot(a, a) == 25.0);
    CHECK(frobenius_norm(Matrix(2, 2, {1, 1, 1, 1})) == 2.0);
    CHECK(max_abs_diff(a, Matrix(1, 2, {3, 6})) == 2.0);
}

TEST_CASE("softmax rows are normalized and stable") {
    const Matrix logits(2, 3, {0, 0, 0, 1000, 1000, 999});
    const Matrix p = softmax_rows(logits);
    for (int r = 0; r < 2; ++r) {
        double s = 0.0;
        for (int c = 0; c < 3; ++c) {
            CHECK(p.at(r, c) >= 0.0);
            CHECK(std::isfinite(p.at(r, c)));
            s += p.at(r, c);
        }
        CHECK(std::abs(s - 1.0) <= 1e-12);
    }
    CHECK(p.at(0, 0) == doctest::Approx(1.0 / 3.0));
    CHECK(p.at(1, 0) > p.at(1, 2));
}

TEST_CASE("argmax_row picks the first maximum") {
    const Matrix a(1, 4, {1, 7, 7, 3});
    CHECK(argmax_row(a, 0) == 1);
}

TEST_CASE("check_finite rejects NaN and Inf") {
    Matrix a(1, 2, {1, 2});
    a.data[1] = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(a.check_finite("test"), std::runtime_error);
    a.data[1] = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(a.check_finite("test"), std::runtime_error);
    a.data[1] = 2.0;
    CHECK_NOTHROW(a.check_finite("test"));
}

TEST_CASE("matmul refuses to emit non-finite values") {
    Matrix a(1, 1, {1e308});
    Matrix b(1, 1, {1e308});
    CHECK_THROWS_AS(matmul(a, b), std::runtime_error);
}

TEST_CASE("bit_equal distinguishes signed zero") {
    const Matrix pos(1, 1, {0.0});
    const Matrix neg(1, 1, {-0.0});
    CHECK(bit_equal(pos, pos));
    CHECK_FALSE(bit_equal(pos, neg));
    CHECK_FALSE(bit_equal(pos, Matrix(2, 1)));
}

TEST_CASE("random_uniform respects bounds and seed") {
    Rng r1(4), r2(4);
    const Matrix a = Matrix::random_uniform(3, 3, -0.5, 0.5, r1);
    const Matrix b = Matrix::random_uniform(3, 3, -0.5, 0.5, r2);
    CHECK(bit_equal(a, b));
    for (double v : a.data) {
        CHECK(v >= -0.5);
        CHECK(v < 0.5);
    }
}
