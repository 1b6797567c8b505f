// include/asrkit/grad_check.hpp

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

#ifndef ASRKIT_GRAD_CHECK_HPP_
#define ASRKIT_GRAD_CHECK_HPP_

#include <cmath>
#include <functional>

#include "asrkit/autograd.hpp"
#include "asrkit/common.hpp"
#include "asrkit/tensor.hpp"

namespace asrkit {

// Builds a scalar loss from one leaf variable. The builder must be pure:
// it is re-invoked on fresh tapes for every finite-difference probe.
using LossBuilder =
    std::function<Var<double>(Tape<double> &, Var<double>)>;

// Compares the tape gradient of build() at `point` against central finite
// differences. Returns max over coordinates of
//   |analytic - fd| / max(|analytic|, |fd|, 1e-8).
inline double GradCheck(const LossBuilder &build, const Tensor<double> &point,
                        double eps = 1e-5) {
  Tape<double> tape;
  Var<double> x = tape.Leaf(point, true);
  Var<double> loss = build(tape, x);
  ASRKIT_CHECK(loss.value().numel() == 1, ContractError,
               "GradCheck: builder must return a scalar");
  ASRKIT_CHECK(std::isfinite(static_cast<double>(loss.value()[0])),
               NumericError, "GradCheck: non-finite loss at the test point");
  tape.Backward(loss);
  Tensor<double> analytic = x.grad();

  auto eval = [&](const Tensor<double> &p) {
    Tape<double> t;
    Var<double> v = t.Leaf(p, false);
    Var<double> l = build(t, v);
    return static_cast<double>(l.value()[0]);
  };

  double worst = 0.0;
  Tensor<double> probe = point;
  for (int64_t i = 0; i < point.numel(); ++i) {
    double orig = probe[i];
    probe[i] = orig + eps;
    double fplus = eval(probe);
    probe[i] = orig - eps;
    double fminus = eval(probe);
    probe[i] = orig;
    double fd = (fplus - fminus) / (2.0 * eps);
    double an = analytic[i];
    double err = std::abs(an - fd) /
                 std::max({std::abs(an), std::abs(fd), 1e-8});
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace asrkit

#endif  // ASRKIT_GRAD_CHECK_HPP_
