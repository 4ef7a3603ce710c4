#include "objcomp/nn/tensor.hpp"

#include <algorithm>
#include <sstream>

#include "objcomp/errors.hpp"

namespace objcomp::nn {

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ')';
  return os.str();
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d < 0) throw ShapeError("negative dimension in shape " + shape_string(shape));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

void check_shape(const Shape& actual, const Shape& expected, const std::string& what) {
  if (actual != expected) {
    throw ShapeError(what + ": expected shape " + shape_string(expected) + ", got " +
                     shape_string(actual));
  }
}

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill) : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

template <typename T>
Tensor<T>::Tensor(Shape shape, const std::vector<T>& data)
    : Tensor(std::move(shape), Buffer<T>(data.begin(), data.end())) {}

template <typename T>
Tensor<T>::Tensor(Shape shape, Buffer<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != shape_numel(shape_)) {
    throw ShapeError("tensor data size " + std::to_string(data_.size()) +
                     " does not match shape " + shape_string(shape_));
  }
}

template <typename T>
std::size_t Tensor<T>::offset(std::initializer_list<int> index) const {
  if (index.size() != shape_.size()) {
    throw ShapeError("index rank mismatch for shape " + shape_string(shape_));
  }
  std::size_t off = 0;
  std::size_t i = 0;
  for (int v : index) {
    if (v < 0 || v >= shape_[i]) throw ShapeError("index out of range for shape " + shape_string(shape_));
    off = off * shape_[i] + v;
    ++i;
  }
  return off;
}

template <typename T>
T& Tensor<T>::at(std::initializer_list<int> index) {
  return data_[offset(index)];
}

template <typename T>
const T& Tensor<T>::at(std::initializer_list<int> index) const {
  return data_[offset(index)];
}

template <typename T>
Tensor<T> Tensor<T>::reshaped(Shape shape) const {
  if (shape_numel(shape) != data_.size()) {
    throw ShapeError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  }
  return Tensor(std::move(shape), data_);
}

template <typename T>
void Tensor<T>::fill(T value) {
  std::fill(data_.begin(), data_.end(), value);
}

template <typename T>
Tensor<T>& Tensor<T>::operator+=(const Tensor& other) {
  check_shape(other.shape_, shape_, "tensor +=");
  T* a = data_.data();
  const T* b = other.data_.data();
  const std::size_t n = data_.size();
  for (std::size_t i = 0; i < n; ++i) a[i] += b[i];
  return *this;
}

template class Tensor<float>;
template class Tensor<double>;

}  // namespace objcomp::nn
