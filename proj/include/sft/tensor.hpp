#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

namespace sft {

// Dense row-major tensor of doubles. Shape extents are positive and the
// element count always equals the product of extents. Construction rejects
// NaN/Inf values so downstream numerics never have to re-check.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<int> shape);  // zero-filled
    Tensor(std::vector<int> shape, std::vector<double> values);

    static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }
    static Tensor full(std::vector<int> shape, double v);
    static Tensor scalar(double v) { return Tensor({1, 1}, {v}); }
    static Tensor row(std::vector<double> values);  // 1 x n

    const std::vector<int>& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    int extent(int axis) const { return shape_[static_cast<std::size_t>(axis)]; }
    std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }
    bool empty() const { return data_.empty(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& values() { return data_; }
    const std::vector<double>& values() const { return data_; }

    double& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
    double operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

    // 2-D accessors (the tape works almost exclusively on matrices).
    int rows() const;
    int cols() const;
    double& at(int r, int c);
    double at(int r, int c) const;

    // 3-D accessor for channel-major feature maps and stacked attention weights.
    double& at3(int a, int r, int c);
    double at3(int a, int r, int c) const;

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
    bool is_scalar() const { return size() == 1; }

    void fill(double v);
    Tensor reshaped(std::vector<int> new_shape) const;

    std::string shape_str() const;

private:
    std::vector<int> shape_;
    std::vector<double> data_;
};

// A learnable value paired with its accumulated gradient. Gradients are
// zero until a backward pass deposits into them; callers reset between
// optimizer steps with zero_grad().
struct Parameter {
    Tensor value;
    Tensor grad;

    Parameter() = default;
    explicit Parameter(Tensor v);

    void zero_grad() { grad.fill(0.0); }
};

std::int64_t shape_product(const std::vector<int>& shape);

}  // namespace sft
