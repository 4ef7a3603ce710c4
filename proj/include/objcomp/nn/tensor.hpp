#pragma once

#include <cstddef>
#include <initializer_list>
#include <new>
#include <span>
#include <string>
#include <vector>

namespace objcomp::nn {

using Shape = std::vector<int>;

/// 64-byte aligned so vectorised kernels split every buffer the same way.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};

  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) { ::operator delete(p, kAlign); }

  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const {
    return true;
  }
};

template <typename T>
using Buffer = std::vector<T, AlignedAllocator<T>>;

std::string shape_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

/// Dense row-major tensor. Owns its storage.
template <typename T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T(0));
  Tensor(Shape shape, const std::vector<T>& data);
  Tensor(Shape shape, Buffer<T> data);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor full(Shape shape, T value) { return Tensor(std::move(shape), value); }

  const Shape& shape() const { return shape_; }
  int dim(int i) const { return shape_[i < 0 ? shape_.size() + i : i]; }
  int rank() const { return static_cast<int>(shape_.size()); }
  std::size_t numel() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }
  Buffer<T>& storage() { return data_; }
  const Buffer<T>& storage() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  T& at(std::initializer_list<int> index);
  const T& at(std::initializer_list<int> index) const;

  /// Same storage, new shape with equal element count.
  Tensor reshaped(Shape shape) const;

  void fill(T value);
  Tensor& operator+=(const Tensor& other);

  template <typename U>
  Tensor<U> cast() const {
    Buffer<U> out(data_.begin(), data_.end());
    return Tensor<U>(shape_, std::move(out));
  }

 private:
  std::size_t offset(std::initializer_list<int> index) const;

  Shape shape_;
  Buffer<T> data_;
};

/// Throws ShapeError unless `actual` equals `expected`.
void check_shape(const Shape& actual, const Shape& expected, const std::string& what);

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace objcomp::nn
