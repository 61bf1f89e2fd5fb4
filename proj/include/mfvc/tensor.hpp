/* Copyright 2026 The MFVC Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "mfvc/error.hpp"

namespace mfvc {

// Extents of a dense (batch, channel, height, width) array.
struct Shape {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;

  std::size_t size() const {
    return static_cast<std::size_t>(n) * c * h * w;
  }
  std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
  bool operator==(const Shape&) const = default;
  std::string str() const {
    return "(" + std::to_string(n) + ", " + std::to_string(c) + ", " +
           std::to_string(h) + ", " + std::to_string(w) + ")";
  }
};

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Dense NCHW array, row-major. Storage is Eigen-aligned so that every
// buffer of the same shape takes the same vectorized code path.
template <typename T>
class Tensor {
 public:
  using Scalar = T;
  using Storage = std::vector<T, Eigen::aligned_allocator<T>>;
  using Vector = Eigen::Matrix<T, Eigen::Dynamic, 1>;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T(0)) : shape_(shape), data_(shape.size(), fill) {
    if (shape.n < 0 || shape.c < 0 || shape.h < 0 || shape.w < 0) {
      throw ShapeError("negative tensor extent " + shape.str());
    }
  }

  const Shape& shape() const { return shape_; }
  int batch() const { return shape_.n; }
  int channels() const { return shape_.c; }
  int height() const { return shape_.h; }
  int width() const { return shape_.w; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  std::size_t index(int n, int c, int y, int x) const {
    return ((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + y) * shape_.w + x;
  }
  T& operator()(int n, int c, int y, int x) { return data_[index(n, c, y, x)]; }
  const T& operator()(int n, int c, int y, int x) const { return data_[index(n, c, y, x)]; }

  Eigen::Map<Vector> flat() { return {data_.data(), static_cast<Eigen::Index>(size())}; }
  Eigen::Map<const Vector> flat() const {
    return {data_.data(), static_cast<Eigen::Index>(size())};
  }

  // Image n viewed as a channels x (height*width) matrix.
  Eigen::Map<RowMatrix<T>> image(int n) {
    return {data_.data() + static_cast<std::size_t>(n) * shape_.c * shape_.plane(), shape_.c,
            static_cast<Eigen::Index>(shape_.plane())};
  }
  Eigen::Map<const RowMatrix<T>> image(int n) const {
    return {data_.data() + static_cast<std::size_t>(n) * shape_.c * shape_.plane(), shape_.c,
            static_cast<Eigen::Index>(shape_.plane())};
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out(shape_);
    for (std::size_t i = 0; i < size(); ++i) out[i] = static_cast<U>(data_[i]);
    return out;
  }

  bool operator==(const Tensor& o) const { return shape_ == o.shape_ && data_ == o.data_; }

 private:
  Shape shape_;
  Storage data_;
};

// Integer-valued quantized latent of one frame (channels x height x width).
struct LatentPlane {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<std::int32_t> values;

  LatentPlane() = default;
  LatentPlane(int c, int h, int w, std::int32_t fill = 0)
      : channels(c), height(h), width(w), values(static_cast<std::size_t>(c) * h * w, fill) {}

  std::size_t size() const { return values.size(); }
  std::int32_t& at(int c, int y, int x) {
    return values[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
  std::int32_t at(int c, int y, int x) const {
    return values[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
  Shape shape() const { return {1, channels, height, width}; }
  bool operator==(const LatentPlane&) const = default;
};

template <typename T>
Tensor<T> to_tensor(const LatentPlane& plane) {
  Tensor<T> out(plane.shape());
  for (std::size_t i = 0; i < plane.size(); ++i) out[i] = static_cast<T>(plane.values[i]);
  return out;
}

inline void check_same_shape(const Shape& a, const Shape& b, const char* what) {
  if (!(a == b)) {
    throw ShapeError(std::string(what) + ": shape mismatch " + a.str() + " vs " + b.str());
  }
}

}  // namespace mfvc
