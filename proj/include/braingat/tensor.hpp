#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace braingat {

/// Dense row-major tensor of doubles. Rank 1 and 2 cover the whole
/// pipeline; a scalar is any tensor with a single element.
class Tensor {
 public:
    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> shape);
    Tensor(std::vector<std::size_t> shape, std::vector<double> data);

    static Tensor scalar(double v);
    static Tensor vector(std::vector<double> v);
    static Tensor matrix(std::size_t rows, std::size_t cols);
    static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
    static Tensor filled(std::vector<std::size_t> shape, double v);

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }
    bool is_scalar() const { return size() == 1; }

    std::size_t rows() const;
    std::size_t cols() const;

    double item() const;
    double& at(std::size_t i) { return data_[i]; }
    double at(std::size_t i) const { return data_[i]; }
    double& at(std::size_t r, std::size_t c) { return data_[r * cols_cached_ + c]; }
    double at(std::size_t r, std::size_t c) const { return data_[r * cols_cached_ + c]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& raw() { return data_; }
    const std::vector<double>& raw() const { return data_; }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
    bool all_finite() const;
    std::string shape_str() const;

 private:
    std::vector<std::size_t> shape_;
    std::vector<double> data_;
    std::size_t cols_cached_ = 0;  // shape_.back() for rank >= 1
};

}  // namespace braingat
