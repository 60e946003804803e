#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "flan/rng.hpp"

namespace flan {

// Dense row-major matrix of 64-bit floats. All vectors in the library are
// 1 x n matrices. Public operations reject non-finite results so NaN/Inf
// never propagate silently.
struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;  // rows * cols, row-major

    Matrix() = default;
    Matrix(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, 0.0) {}
    Matrix(int r, int c, std::vector<double> d);

    static Matrix zeros(int r, int c) { return Matrix(r, c); }
    static Matrix row(std::vector<double> d);
    static Matrix scalar(double v);
    static Matrix random_uniform(int r, int c, double lo, double hi, Rng& rng);

    double& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
    double at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }

    std::size_t size() const { return data.size(); }
    bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
    std::string shape_str() const;

    void fill(double v) { for (auto& x : data) x = v; }
    void check_finite(const char* where) const;
};

// Shape-checked arithmetic. Dimension mismatches throw std::invalid_argument
// naming both shapes; non-finite results throw std::runtime_error.
Matrix matmul(const Matrix& a, const Matrix& b);
Matrix add(const Matrix& a, const Matrix& b);
Matrix sub(const Matrix& a, const Matrix& b);
Matrix hadamard(const Matrix& a, const Matrix& b);
Matrix scale(const Matrix& a, double c);
Matrix transpose(const Matrix& a);
Matrix concat_cols(const Matrix& a, const Matrix& b);  // row counts must match

// Copies row r of `a` into a 1 x cols matrix.
Matrix extract_row(const Matrix& a, int r);

double sum(const Matrix& a);
double dot(const Matrix& a, const Matrix& b);     // flattened, shapes must match
double l2_norm(const Matrix& a);                  // Frobenius / Euclidean
double frobenius_norm(const Matrix& a);
double max_abs_diff(const Matrix& a, const Matrix& b);
bool bit_equal(const Matrix& a, const Matrix& b);

// Row-wise stable softmax; every output row is nonnegative and sums to 1.
Matrix softmax_rows(const Matrix& logits);
int argmax_row(const Matrix& a, int row);

}  // namespace flan
