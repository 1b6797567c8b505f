// include/asrkit/tensor.hpp

// Copyright 2026  asrkit authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#ifndef ASRKIT_TENSOR_HPP_
#define ASRKIT_TENSOR_HPP_

#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <vector>

#include "asrkit/common.hpp"

namespace asrkit {

// Dense row-major tensor. Rank is dynamic; almost everything in the library
// is rank 1 or 2, with rank 3 appearing only around the convolutional
// frontend. Deliberately a plain value type: the autodiff tape owns the
// graph structure, tensors just hold numbers.
template <typename Real>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<int64_t> shape)
      : shape_(std::move(shape)), data_(CheckedNumel(shape_), Real(0)) {}

  Tensor(std::vector<int64_t> shape, std::vector<Real> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    ASRKIT_CHECK(static_cast<int64_t>(data_.size()) == CheckedNumel(shape_),
                 ShapeError,
                 "Tensor: data size " << data_.size()
                                      << " does not match shape");
  }

  static Tensor Scalar(Real v) { return Tensor({1}, {v}); }

  static Tensor Full(std::vector<int64_t> shape, Real v) {
    Tensor t(std::move(shape));
    std::fill(t.data_.begin(), t.data_.end(), v);
    return t;
  }

  const std::vector<int64_t> &shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int64_t dim(int i) const { return shape_[static_cast<size_t>(i)]; }

  int64_t numel() const {
    return std::accumulate(shape_.begin(), shape_.end(), int64_t(1),
                           std::multiplies<int64_t>());
  }

  Real *data() { return data_.data(); }
  const Real *data() const { return data_.data(); }

  Real &operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
  Real operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

  // 2-D accessors; bounds are the caller's responsibility on the hot path.
  Real &at(int64_t r, int64_t c) {
    return data_[static_cast<size_t>(r * shape_[1] + c)];
  }
  Real at(int64_t r, int64_t c) const {
    return data_[static_cast<size_t>(r * shape_[1] + c)];
  }

  bool SameShape(const Tensor &o) const { return shape_ == o.shape_; }

  void Fill(Real v) { std::fill(data_.begin(), data_.end(), v); }

  bool AllFinite() const {
    for (Real v : data_) {
      if (!std::isfinite(static_cast<double>(v))) return false;
    }
    return true;
  }

  std::vector<Real> &storage() { return data_; }
  const std::vector<Real> &storage() const { return data_; }

  static std::string ShapeString(const std::vector<int64_t> &shape) {
    return "[" + Join(shape.begin(), shape.end(), ", ") + "]";
  }

 private:
  static int64_t CheckedNumel(const std::vector<int64_t> &shape) {
    int64_t n = 1;
    for (int64_t d : shape) {
      ASRKIT_CHECK(d >= 0, ShapeError, "Tensor: negative dimension " << d);
      n *= d;
    }
    return n;
  }

  std::vector<int64_t> shape_;
  std::vector<Real> data_;
};

}  // namespace asrkit

#endif  // ASRKIT_TENSOR_HPP_
