#include "dyronet/numcore/ndarray.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "dyronet/error.hpp"

namespace dyronet::num {

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         [](std::size_t a, std::size_t b) { return a * b; });
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

NdArray::NdArray(Shape shape, double fill)
    : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

NdArray::NdArray(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != shape_size(shape_)) {
    throw DimensionError("data length " + std::to_string(data_.size()) +
                         " does not match shape " + shape_string(shape_));
  }
}

NdArray NdArray::vector(std::initializer_list<double> values) {
  return NdArray({values.size()}, std::vector<double>(values));
}

std::size_t NdArray::extent(std::size_t axis) const {
  if (axis >= shape_.size()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for " +
                         shape_string(shape_));
  }
  return shape_[axis];
}

double& NdArray::at(std::size_t i, std::size_t j) {
  if (rank() != 2 || i >= shape_[0] || j >= shape_[1]) {
    throw DimensionError("bad 2-d index into " + shape_string(shape_));
  }
  return data_[i * shape_[1] + j];
}

double NdArray::at(std::size_t i, std::size_t j) const {
  return const_cast<NdArray*>(this)->at(i, j);
}

double& NdArray::at(std::size_t c, std::size_t i, std::size_t j) {
  if (rank() != 3 || c >= shape_[0] || i >= shape_[1] || j >= shape_[2]) {
    throw DimensionError("bad 3-d index into " + shape_string(shape_));
  }
  return data_[(c * shape_[1] + i) * shape_[2] + j];
}

double NdArray::at(std::size_t c, std::size_t i, std::size_t j) const {
  return const_cast<NdArray*>(this)->at(c, i, j);
}

NdArray NdArray::reshaped(Shape shape) const {
  if (shape_size(shape) != data_.size()) {
    throw DimensionError("cannot reshape " + shape_string(shape_) + " to " +
                         shape_string(shape));
  }
  return NdArray(std::move(shape), data_);
}

void NdArray::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

NdArray& NdArray::operator+=(const NdArray& other) {
  require_same_shape(*this, other, "add");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

NdArray& NdArray::operator-=(const NdArray& other) {
  require_same_shape(*this, other, "subtract");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
  return *this;
}

NdArray& NdArray::operator*=(double scale) {
  for (double& v : data_) v *= scale;
  return *this;
}

double NdArray::sum() const { return std::accumulate(data_.begin(), data_.end(), 0.0); }

double NdArray::mean() const {
  if (data_.empty()) throw DimensionError("mean of empty array");
  return sum() / static_cast<double>(data_.size());
}

double NdArray::max_abs() const {
  double m = 0.0;
  for (double v : data_) m = std::max(m, std::abs(v));
  return m;
}

bool NdArray::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

NdArray operator+(NdArray a, const NdArray& b) { return a += b; }
NdArray operator-(NdArray a, const NdArray& b) { return a -= b; }
NdArray operator*(NdArray a, double s) { return a *= s; }

void require_same_shape(const NdArray& a, const NdArray& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(what) + ": shape mismatch " + shape_string(a.shape()) +
                         " vs " + shape_string(b.shape()));
  }
}

void require_finite(const NdArray& a, const char* what) {
  if (!a.all_finite()) throw NumericError(std::string(what) + ": non-finite value");
}

}  // namespace dyronet::num
