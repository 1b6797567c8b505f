// include/asrkit/optimizer.hpp

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

#ifndef ASRKIT_OPTIMIZER_HPP_
#define ASRKIT_OPTIMIZER_HPP_

#include <cmath>
#include <map>
#include <string>
#include <utility>

#include "asrkit/common.hpp"
#include "asrkit/nn.hpp"
#include "asrkit/tensor.hpp"

namespace asrkit {

// Per-parameter gradients keyed by parameter name. std::map keeps iteration
// order fixed so updates are reduction-order deterministic.
template <typename Real>
using GradMap = std::map<std::string, Tensor<Real>>;

// Scales every gradient by max_norm/norm when the global L2 norm exceeds
// max_norm. Returns the pre-clip norm.
template <typename Real>
double ClipGlobalNorm(GradMap<Real> *grads, double max_norm) {
  ASRKIT_CHECK(max_norm > 0.0, ConfigError,
               "clip norm must be positive, got " << max_norm);
  double sq = 0.0;
  for (const auto &kv : *grads) {
    for (int64_t i = 0; i < kv.second.numel(); ++i) {
      double g = static_cast<double>(kv.second[i]);
      sq += g * g;
    }
  }
  double norm = std::sqrt(sq);
  if (norm > max_norm) {
    Real s = static_cast<Real>(max_norm / norm);
    for (auto &kv : *grads) {
      for (int64_t i = 0; i < kv.second.numel(); ++i) kv.second[i] *= s;
    }
  }
  return norm;
}

template <typename Real>
class Adam {
 public:
  Adam(double lr, double beta1, double beta2, double eps)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    ASRKIT_CHECK(lr > 0.0 && beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 &&
                     beta2 < 1.0 && eps > 0.0,
                 ConfigError, "bad Adam hyperparameters");
  }

  void Step(ParamStore<Real> *params, const GradMap<Real> &grads) {
    ++t_;
    double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (const auto &kv : grads) {
      Tensor<Real> *p = params->Find(kv.first);
      ASRKIT_CHECK(p != nullptr, ContractError,
                   "Adam: gradient for unknown parameter " << kv.first);
      ASRKIT_CHECK(p->shape() == kv.second.shape(), ShapeError,
                   "Adam: gradient shape mismatch for " << kv.first);
      Tensor<Real> &m = Slot(&m_, kv.first, *p);
      Tensor<Real> &v = Slot(&v_, kv.first, *p);
      for (int64_t i = 0; i < p->numel(); ++i) {
        double g = static_cast<double>(kv.second[i]);
        double mi = beta1_ * static_cast<double>(m[i]) + (1.0 - beta1_) * g;
        double vi =
            beta2_ * static_cast<double>(v[i]) + (1.0 - beta2_) * g * g;
        m[i] = static_cast<Real>(mi);
        v[i] = static_cast<Real>(vi);
        (*p)[i] -= static_cast<Real>(lr_ * (mi / bc1) /
                                     (std::sqrt(vi / bc2) + eps_));
      }
    }
  }

  int64_t steps() const { return t_; }

 private:
  static Tensor<Real> &Slot(std::map<std::string, Tensor<Real>> *slots,
                            const std::string &name, const Tensor<Real> &like) {
    auto it = slots->find(name);
    if (it == slots->end()) {
      it = slots->emplace(name, Tensor<Real>(like.shape())).first;
    }
    return it->second;
  }

  double lr_, beta1_, beta2_, eps_;
  int64_t t_ = 0;
  std::map<std::string, Tensor<Real>> m_, v_;
};

}  // namespace asrkit

#endif  // ASRKIT_OPTIMIZER_HPP_
