#pragma once

#include <cassert>
#include <cstddef>
#include <vector>

namespace zorro {

// Dense row-major matrix of doubles. Small helper, not a linear algebra
// library; the GNN kernels index rows directly.
struct Matrix {
    size_t rows = 0;
    size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(size_t r, size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

    double& operator()(size_t i, size_t j) {
        assert(i < rows && j < cols);
        return data[i * cols + j];
    }
    double operator()(size_t i, size_t j) const {
        assert(i < rows && j < cols);
        return data[i * cols + j];
    }

    double* row(size_t i) { return data.data() + i * cols; }
    const double* row(size_t i) const { return data.data() + i * cols; }

    void fill(double v) { data.assign(rows * cols, v); }

    bool same_shape(const Matrix& other) const {
        return rows == other.rows && cols == other.cols;
    }

    bool operator==(const Matrix& other) const {
        return rows == other.rows && cols == other.cols && data == other.data;
    }
};

}  // namespace zorro
