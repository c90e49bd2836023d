#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "formlink/error.hpp"

namespace formlink::tc {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>{});
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << ']';
  return os.str();
}

/// Dense row-major array of doubles. Plain value type; differentiation lives on the Tape.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape, double fill = 0.0) : shape_(std::move(shape)) {
    check_shape();
    data_.assign(shape_numel(shape_), fill);
  }

  Tensor(Shape shape, std::vector<double> values) : shape_(std::move(shape)), data_(std::move(values)) {
    check_shape();
    if (data_.size() != shape_numel(shape_)) {
      throw ContractError("Tensor: " + std::to_string(data_.size()) + " values for shape " + shape_str(shape_));
    }
  }

  static Tensor scalar(double v) { return Tensor({1}, std::vector<double>{v}); }
  static Tensor row(std::vector<double> v) {
    const std::size_t n = v.size();
    return Tensor({1, n}, std::move(v));
  }
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> v) {
    return Tensor({rows, cols}, std::move(v));
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  /// Size of the last axis.
  std::size_t last() const noexcept { return shape_.empty() ? 0 : shape_.back(); }
  /// Product of all axes but the last.
  std::size_t outer() const noexcept { return last() == 0 ? 0 : size() / last(); }

  std::size_t rows() const { return require_2d(), shape_[0]; }
  std::size_t cols() const { return require_2d(), shape_[1]; }

  double& operator[](std::size_t i) noexcept { return data_[i]; }
  double operator[](std::size_t i) const noexcept { return data_[i]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  std::vector<double>& storage() noexcept { return data_; }
  const std::vector<double>& storage() const noexcept { return data_; }

  std::span<const double> row_span(std::size_t r) const { return {data_.data() + r * last(), last()}; }
  std::span<double> row_span(std::size_t r) { return {data_.data() + r * last(), last()}; }

  double item() const {
    if (data_.size() != 1) throw ContractError("Tensor::item on shape " + shape_str(shape_));
    return data_[0];
  }

  bool all_finite() const noexcept {
    for (double v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  Tensor reshaped(Shape s) const { return Tensor(std::move(s), data_); }

  bool operator==(const Tensor& o) const = default;

 private:
  void check_shape() const {
    for (auto d : shape_)
      if (d == 0) throw ContractError("Tensor: zero-sized axis in shape " + shape_str(shape_));
  }
  void require_2d() const {
    if (shape_.size() != 2) throw ContractError("Tensor: expected a matrix, got shape " + shape_str(shape_));
  }

  Shape shape_;
  std::vector<double> data_;
};

}  // namespace formlink::tc
