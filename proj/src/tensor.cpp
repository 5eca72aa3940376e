#include "sft/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace sft {

std::int64_t shape_product(const std::vector<int>& shape) {
    std::int64_t n = 1;
    for (int e : shape) n *= e;
    return n;
}

namespace {

void check_shape(const std::vector<int>& shape) {
    if (shape.empty()) throw std::invalid_argument("tensor shape must have at least one extent");
    for (int e : shape) {
        if (e <= 0) throw std::invalid_argument("tensor extents must be positive");
    }
}

void check_finite(const std::vector<double>& values) {
    for (double v : values) {
        if (!std::isfinite(v)) throw std::invalid_argument("tensor values must be finite");
    }
}

}  // namespace

Tensor::Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
    check_shape(shape_);
    data_.assign(static_cast<std::size_t>(shape_product(shape_)), 0.0);
}

Tensor::Tensor(std::vector<int> shape, std::vector<double> values)
    : shape_(std::move(shape)), data_(std::move(values)) {
    check_shape(shape_);
    if (static_cast<std::int64_t>(data_.size()) != shape_product(shape_)) {
        throw std::invalid_argument("tensor value count does not match shape");
    }
    check_finite(data_);
}

Tensor Tensor::full(std::vector<int> shape, double v) {
    Tensor t(std::move(shape));
    t.fill(v);
    return t;
}

Tensor Tensor::row(std::vector<double> values) {
    int n = static_cast<int>(values.size());
    return Tensor({1, n}, std::move(values));
}

int Tensor::rows() const {
    if (rank() != 2) throw std::invalid_argument("rows(): tensor is not 2-D: " + shape_str());
    return shape_[0];
}

int Tensor::cols() const {
    if (rank() != 2) throw std::invalid_argument("cols(): tensor is not 2-D: " + shape_str());
    return shape_[1];
}

double& Tensor::at(int r, int c) {
    return data_[static_cast<std::size_t>(r) * shape_[1] + c];
}

double Tensor::at(int r, int c) const {
    return data_[static_cast<std::size_t>(r) * shape_[1] + c];
}

double& Tensor::at3(int a, int r, int c) {
    return data_[(static_cast<std::size_t>(a) * shape_[1] + r) * shape_[2] + c];
}

double Tensor::at3(int a, int r, int c) const {
    return data_[(static_cast<std::size_t>(a) * shape_[1] + r) * shape_[2] + c];
}

void Tensor::fill(double v) {
    if (!std::isfinite(v)) throw std::invalid_argument("tensor fill value must be finite");
    for (double& x : data_) x = v;
}

Tensor Tensor::reshaped(std::vector<int> new_shape) const {
    check_shape(new_shape);
    if (shape_product(new_shape) != size()) {
        throw std::invalid_argument("reshape changes element count");
    }
    Tensor t;
    t.shape_ = std::move(new_shape);
    t.data_ = data_;
    return t;
}

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape_.size(); ++i) {
        if (i) os << 'x';
        os << shape_[i];
    }
    os << ']';
    return os.str();
}

Parameter::Parameter(Tensor v) : value(std::move(v)), grad(value.shape()) {}

}  // namespace sft
