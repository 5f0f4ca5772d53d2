#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace mmsb {

// Thrown for malformed user inputs (files, flags, out-of-range values).
struct InputError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Thrown when a computation leaves the numeric domain (non-finite bound,
// underflowed normalization) in a way that indicates a bug or bad model.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Dense row-major matrix of doubles. Deliberately minimal: the kernels in
// this project index flat arrays directly and only need shape bookkeeping.
class Matrix {
public:
    Matrix() = default;
    Matrix(int rows, int cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(static_cast<std::size_t>(rows) * cols, fill) {}

    int rows() const { return rows_; }
    int cols() const { return cols_; }

    double& operator()(int r, int c) { return data_[static_cast<std::size_t>(r) * cols_ + c]; }
    double operator()(int r, int c) const { return data_[static_cast<std::size_t>(r) * cols_ + c]; }

    double* row(int r) { return data_.data() + static_cast<std::size_t>(r) * cols_; }
    const double* row(int r) const { return data_.data() + static_cast<std::size_t>(r) * cols_; }

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    void fill(double v) { data_.assign(data_.size(), v); }

    bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

private:
    int rows_ = 0;
    int cols_ = 0;
    std::vector<double> data_;
};

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw InputError(msg);
}

}  // namespace mmsb
