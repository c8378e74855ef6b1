#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace derivgen::numeric {

using Shape = std::vector<size_t>;

std::string shape_string(const Shape& shape);
size_t shape_size(const Shape& shape);

/// Dense row-major float64 array. The gradient buffer is allocated on demand
/// and always matches the value shape.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor scalar(double v) { return Tensor({}, {v}); }
  static Tensor vector(std::vector<double> v) {
    Shape s{v.size()};
    return Tensor(std::move(s), std::move(v));
  }

  const Shape& shape() const { return shape_; }
  size_t size() const { return values_.size(); }
  size_t rank() const { return shape_.size(); }
  size_t rows() const { return shape_.at(0); }
  size_t cols() const { return shape_.at(1); }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  double& operator[](size_t i) { return values_[i]; }
  double operator[](size_t i) const { return values_[i]; }
  double& at(size_t r, size_t c) { return values_[r * shape_[1] + c]; }
  double at(size_t r, size_t c) const { return values_[r * shape_[1] + c]; }

  bool has_grad() const { return grad_.size() == values_.size(); }
  void enable_grad() {
    if (grad_.size() != values_.size()) grad_.assign(values_.size(), 0.0);
  }
  void zero_grad() { std::fill(grad_.begin(), grad_.end(), 0.0); }
  std::span<double> grad() { return grad_; }
  std::span<const double> grad() const { return grad_; }

 private:
  Shape shape_;
  std::vector<double> values_;
  std::vector<double> grad_;
};

}  // namespace derivgen::numeric
