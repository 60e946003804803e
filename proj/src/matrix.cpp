#include "flan/matrix.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace flan {

namespace {

[[noreturn]] void shape_error(const char* op, const Matrix& a, const Matrix& b) {
    std::ostringstream os;
    os << op << ": incompatible shapes " << a.shape_str() << " and " << b.shape_str();
    throw std::invalid_argument(os.str());
}

}  // namespace

Matrix::Matrix(int r, int c, std::vector<double> d) : rows(r), cols(c), data(std::move(d)) {
    if (data.size() != static_cast<std::size_t>(r) * c) {
        throw std::invalid_argument("Matrix: data length does not match rows*cols");
    }
}

Matrix Matrix::row(std::vector<double> d) {
    const int n = static_cast<int>(d.size());
    return Matrix(1, n, std::move(d));
}

Matrix Matrix::scalar(double v) { return Matrix(1, 1, {v}); }

Matrix Matrix::random_uniform(int r, int c, double lo, double hi, Rng& rng) {
    Matrix m(r, c);
    for (auto& x : m.data) x = rng.uniform(lo, hi);
    return m;
}

std::string Matrix::shape_str() const {
    std::ostringstream os;
    os << rows << "x" << cols;
    return os.str();
}

void Matrix::check_finite(const char* where) const {
    for (double x : data) {
        if (!std::isfinite(x)) {
            std::ostringstream os;
            os << where << ": non-finite entry in " << shape_str() << " result";
            throw std::runtime_error(os.str());
        }
    }
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols != b.rows) shape_error("matmul", a, b);
    Matrix c(a.rows, b.cols);
    for (int i = 0; i < a.rows; ++i) {
        const double* arow = a.data.data() + static_cast<std::size_t>(i) * a.cols;
        double* crow = c.data.data() + static_cast<std::size_t>(i) * c.cols;
        for (int k = 0; k < a.cols; ++k) {
            const double aik = arow[k];
            const double* brow = b.data.data() + static_cast<std::size_t>(k) * b.cols;
            for (int j = 0; j < b.cols; ++j) crow[j] += aik * brow[j];
        }
    }
    c.check_finite("matmul");
    return c;
}

Matrix add(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) shape_error("add", a, b);
    Matrix c = a;
    for (std::size_t i = 0; i < c.data.size(); ++i) c.data[i] += b.data[i];
    c.check_finite("add");
    return c;
}

Matrix sub(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) shape_error("sub", a, b);
    Matrix c = a;
    for (std::size_t i = 0; i < c.data.size(); ++i) c.data[i] -= b.data[i];
    c.check_finite("sub");
    return c;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) shape_error("hadamard", a, b);
    Matrix c = a;
    for (std::size_t i = 0; i < c.data.size(); ++i) c.data[i] *= b.data[i];
    c.check_finite("hadamard");
    return c;
}

Matrix scale(const Matrix& a, double c) {
    Matrix r = a;
    for (auto& x : r.data) x *= c;
    r.check_finite("scale");
    return r;
}

Matrix transpose(const Matrix& a) {
    Matrix t(a.cols, a.rows);
    for (int i = 0; i < a.rows; ++i)
        for (int j = 0; j < a.cols; ++j) t.at(j, i) = a.at(i, j);
    return t;
}

Matrix concat_cols(const Matrix& a, const Matrix& b) {
    if (a.rows != b.rows) shape_error("concat_cols", a, b);
    Matrix c(a.rows, a.cols + b.cols);
    for (int i = 0; i < a.rows; ++i) {
        for (int j = 0; j < a.cols; ++j) c.at(i, j) = a.at(i, j);
        for (int j = 0; j < b.cols; ++j) c.at(i, a.cols + j) = b.at(i, j);
    }
    return c;
}

Matrix extract_row(const Matrix& a, int r) {
    if (r < 0 || r >= a.rows) {
        std::ostringstream os;
        os << "extract_row: row " << r << " out of range for " << a.shape_str();
        throw std::invalid_argument(os.str());
    }
    Matrix out(1, a.cols);
    for (int j = 0; j < a.cols; ++j) out.data[j] = a.at(r, j);
    return out;
}

double sum(const Matrix& a) {
    double s = 0.0;
    for (double x : a.data) s += x;
    return s;
}

double dot(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) shape_error("dot", a, b);
    double s = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) s += a.data[i] * b.data[i];
    return s;
}

double l2_norm(const Matrix& a) {
    double s = 0.0;
    for (double x : a.data) s += x * x;
    return std::sqrt(s);
}

double frobenius_norm(const Matrix& a) { return l2_norm(a); }

double max_abs_diff(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) shape_error("max_abs_diff", a, b);
    double m = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const double d = std::fabs(a.data[i] - b.data[i]);
        if (d > m) m = d;
    }
    return m;
}

bool bit_equal(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) return false;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        if (a.data[i] != b.data[i]) return false;
        // distinguish +0.0 from -0.0
        if (std::signbit(a.data[i]) != std::signbit(b.data[i])) return false;
    }
    return true;
}

Matrix softmax_rows(const Matrix& logits) {
    Matrix p(logits.rows, logits.cols);
    for (int i = 0; i < logits.rows; ++i) {
        double mx = logits.at(i, 0);
        for (int j = 1; j < logits.cols; ++j) mx = std::max(mx, logits.at(i, j));
        double denom = 0.0;
        for (int j = 0; j < logits.cols; ++j) {
            const double e = std::exp(logits.at(i, j) - mx);
            p.at(i, j) = e;
            denom += e;
        }
        for (int j = 0; j < logits.cols; ++j) p.at(i, j) /= denom;
    }
    p.check_finite("softmax_rows");
    return p;
}

int argmax_row(const Matrix& a, int row) {
    int best = 0;
    for (int j = 1; j < a.cols; ++j) {
        if (a.at(row, j) > a.at(row, best)) best = j;
    }
    return best;
}

}  // namespace flan
