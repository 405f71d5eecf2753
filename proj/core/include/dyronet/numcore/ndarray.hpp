#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace dyronet::num {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

// Dense row-major array of doubles. The element count always equals the
// product of the extents.
class NdArray {
 public:
  NdArray() = default;
  explicit NdArray(Shape shape, double fill = 0.0);
  NdArray(Shape shape, std::vector<double> data);

  static NdArray vector(std::initializer_list<double> values);
  static NdArray zeros_like(const NdArray& other) { return NdArray(other.shape_); }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  std::size_t extent(std::size_t axis) const;
  bool empty() const noexcept { return data_.empty(); }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  double* raw() noexcept { return data_.data(); }
  const double* raw() const noexcept { return data_.data(); }

  double& operator[](std::size_t i) noexcept { return data_[i]; }
  double operator[](std::size_t i) const noexcept { return data_[i]; }

  // Rank-checked element access.
  double& at(std::size_t i, std::size_t j);
  double at(std::size_t i, std::size_t j) const;
  double& at(std::size_t c, std::size_t i, std::size_t j);
  double at(std::size_t c, std::size_t i, std::size_t j) const;

  // Same data, new extents; throws DimensionError if the sizes differ.
  NdArray reshaped(Shape shape) const;

  void fill(double value);
  NdArray& operator+=(const NdArray& other);
  NdArray& operator-=(const NdArray& other);
  NdArray& operator*=(double scale);

  double sum() const;
  double mean() const;
  double max_abs() const;
  bool all_finite() const;

  friend bool operator==(const NdArray& a, const NdArray& b) = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

NdArray operator+(NdArray a, const NdArray& b);
NdArray operator-(NdArray a, const NdArray& b);
NdArray operator*(NdArray a, double s);

void require_same_shape(const NdArray& a, const NdArray& b, const char* what);
// Throws NumericError when any element is NaN or infinite.
void require_finite(const NdArray& a, const char* what);

}  // namespace dyronet::num
