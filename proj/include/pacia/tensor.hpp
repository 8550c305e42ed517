#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace pacia {

struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string shape_str(const std::vector<std::size_t>& shape);

// Dense f64 array, row-major, rank 1 or 2. Plain data; autodiff bookkeeping
// lives on the Tape.
class Tensor {
  public:
    Tensor() = default;

    static Tensor zeros(std::vector<std::size_t> shape);
    static Tensor full(std::vector<std::size_t> shape, double value);
    static Tensor scalar(double value);  // shape [1]

    // Entry points for external data: reject non-finite values and validate
    // the shape/value-count agreement.
    static Tensor from(std::vector<std::size_t> shape, std::vector<double> values);
    static Tensor vec(std::vector<double> values);
    static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

    // Internal constructor without data checks (op outputs).
    static Tensor uninit(std::vector<std::size_t> shape);

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return values_.size(); }
    bool empty() const { return values_.empty(); }

    std::size_t rows() const;
    std::size_t cols() const;

    double* data() { return values_.data(); }
    const double* data() const { return values_.data(); }
    std::vector<double>& values() { return values_; }
    const std::vector<double>& values() const { return values_; }

    double& operator[](std::size_t i) { return values_[i]; }
    double operator[](std::size_t i) const { return values_[i]; }
    double& at(std::size_t r, std::size_t c);
    double at(std::size_t r, std::size_t c) const;

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
    bool all_finite() const;
    void fill(double v);

  private:
    Tensor(std::vector<std::size_t> shape, std::vector<double> values)
        : shape_(std::move(shape)), values_(std::move(values)) {}

    std::vector<std::size_t> shape_;
    std::vector<double> values_;
};

}  // namespace pacia
