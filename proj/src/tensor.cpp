#include "pacia/tensor.hpp"

#include <fmt/format.h>

#include <cmath>

namespace pacia {

std::string shape_str(const std::vector<std::size_t>& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

namespace {

std::size_t checked_count(const std::vector<std::size_t>& shape) {
    if (shape.empty() || shape.size() > 2) {
        throw ShapeError(fmt::format("tensor rank must be 1 or 2, got shape {}", shape_str(shape)));
    }
    std::size_t n = 1;
    for (std::size_t d : shape) {
        if (d == 0) throw ShapeError(fmt::format("tensor dims must be >= 1, got {}", shape_str(shape)));
        n *= d;
    }
    return n;
}

}  // namespace

Tensor Tensor::zeros(std::vector<std::size_t> shape) {
    const std::size_t n = checked_count(shape);
    return Tensor(std::move(shape), std::vector<double>(n, 0.0));
}

Tensor Tensor::full(std::vector<std::size_t> shape, double value) {
    const std::size_t n = checked_count(shape);
    return Tensor(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::scalar(double value) { return Tensor({1}, {value}); }

Tensor Tensor::uninit(std::vector<std::size_t> shape) {
    const std::size_t n = checked_count(shape);
    std::vector<double> v;
    v.resize(n);
    return Tensor(std::move(shape), std::move(v));
}

Tensor Tensor::from(std::vector<std::size_t> shape, std::vector<double> values) {
    const std::size_t n = checked_count(shape);
    if (n != values.size()) {
        throw ShapeError(fmt::format("shape {} needs {} values, got {}", shape_str(shape), n,
                                     values.size()));
    }
    for (double v : values) {
        if (!std::isfinite(v)) {
            throw std::runtime_error("tensor values must be finite");
        }
    }
    return Tensor(std::move(shape), std::move(values));
}

Tensor Tensor::vec(std::vector<double> values) {
    const std::size_t n = values.size();
    return from({n}, std::move(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
    return from({rows, cols}, std::move(values));
}

std::size_t Tensor::rows() const {
    if (rank() != 2) throw ShapeError(fmt::format("rows() on rank-{} tensor", rank()));
    return shape_[0];
}

std::size_t Tensor::cols() const {
    if (rank() != 2) throw ShapeError(fmt::format("cols() on rank-{} tensor", rank()));
    return shape_[1];
}

double& Tensor::at(std::size_t r, std::size_t c) { return values_[r * cols() + c]; }
double Tensor::at(std::size_t r, std::size_t c) const { return values_[r * cols() + c]; }

bool Tensor::all_finite() const {
    for (double v : values_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

void Tensor::fill(double v) {
    for (double& x : values_) x = v;
}

}  // namespace pacia
