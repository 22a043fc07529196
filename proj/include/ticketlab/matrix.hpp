#pragma once

#include <cstddef>
#include <vector>

namespace ticketlab {

// Dense row-major matrix of doubles. The whole engine is 64-bit: it keeps
// gradient checks tight and desk scale makes the memory cost irrelevant.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> v;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), v(r * c, 0.0) {}

    double& operator()(std::size_t i, std::size_t j) { return v[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return v[i * cols + j]; }

    double* row(std::size_t i) { return v.data() + i * cols; }
    const double* row(std::size_t i) const { return v.data() + i * cols; }
};

}  // namespace ticketlab
