#pragma once

#include <array>
#include <cassert>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>

namespace nhtrack {

// Largest shape dimension n supported by the compile-time recursions
// (chained-form transform, reference jets, backstepping stages).
inline constexpr int kMaxShapeDim = 6;

// Fixed-capacity vector with value semantics. Used for shape-sized data so
// the hot paths never allocate.
template <class T, std::size_t Capacity>
class SmallVec {
 public:
  SmallVec() = default;
  explicit SmallVec(std::size_t n) : size_(check(n)) {
    for (std::size_t i = 0; i < n; ++i) data_[i] = T{};
  }
  SmallVec(std::size_t n, const T& fill) : size_(check(n)) {
    for (std::size_t i = 0; i < n; ++i) data_[i] = fill;
  }
  SmallVec(std::initializer_list<T> init) : size_(check(init.size())) {
    std::size_t i = 0;
    for (const auto& v : init) data_[i++] = v;
  }
  explicit SmallVec(std::span<const T> s) : size_(check(s.size())) {
    for (std::size_t i = 0; i < s.size(); ++i) data_[i] = s[i];
  }

  std::size_t size() const { return size_; }
  bool empty() const { return size_ == 0; }
  static constexpr std::size_t capacity() { return Capacity; }

  T& operator[](std::size_t i) {
    assert(i < size_);
    return data_[i];
  }
  const T& operator[](std::size_t i) const {
    assert(i < size_);
    return data_[i];
  }
  T& back() { return data_[size_ - 1]; }
  const T& back() const { return data_[size_ - 1]; }

  void push_back(const T& v) {
    check(size_ + 1);
    data_[size_++] = v;
  }
  void resize(std::size_t n) {
    check(n);
    for (std::size_t i = size_; i < n; ++i) data_[i] = T{};
    size_ = n;
  }

  T* begin() { return data_.data(); }
  T* end() { return data_.data() + size_; }
  const T* begin() const { return data_.data(); }
  const T* end() const { return data_.data() + size_; }
  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }

  operator std::span<T>() { return {data_.data(), size_}; }              // NOLINT
  operator std::span<const T>() const { return {data_.data(), size_}; }  // NOLINT
  std::span<const T> span() const { return {data_.data(), size_}; }

  friend bool operator==(const SmallVec& a, const SmallVec& b) {
    if (a.size_ != b.size_) return false;
    for (std::size_t i = 0; i < a.size_; ++i) {
      if (!(a.data_[i] == b.data_[i])) return false;
    }
    return true;
  }

 private:
  static std::size_t check(std::size_t n) {
    if (n > Capacity) throw std::length_error("SmallVec capacity exceeded");
    return n;
  }

  std::array<T, Capacity> data_;
  std::size_t size_ = 0;
};

// Shape-sized vector (y, s).
template <class T>
using ShapeVec = SmallVec<T, kMaxShapeDim>;

// Full configuration-sized vector (x, y).
template <class T>
using StateVec = SmallVec<T, kMaxShapeDim + 2>;

}  // namespace nhtrack
