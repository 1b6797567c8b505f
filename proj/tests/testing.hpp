// tests/testing.hpp

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

#ifndef ASRKIT_TESTS_TESTING_HPP_
#define ASRKIT_TESTS_TESTING_HPP_

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "asrkit/common.hpp"
#include "asrkit/nn.hpp"
#include "asrkit/tensor.hpp"

namespace asrkit {
namespace testing {

inline Tensor<double> RandT(std::vector<int64_t> shape, Rng *rng,
                            double lo = -1.0, double hi = 1.0) {
  Tensor<double> t(std::move(shape));
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng->Uniform(lo, hi);
  return t;
}

// Random values bounded away from zero; for ops with a kink at 0 (relu)
// finite differences need the probe to stay on one side.
inline Tensor<double> RandAwayFromZero(std::vector<int64_t> shape, Rng *rng,
                                       double lo = 0.2, double hi = 1.2) {
  Tensor<double> t(std::move(shape));
  for (int64_t i = 0; i < t.numel(); ++i) {
    double mag = rng->Uniform(lo, hi);
    t[i] = rng->Uniform() < 0.5 ? -mag : mag;
  }
  return t;
}

inline std::string TestDataDir() { return ASRKIT_TEST_DATA; }

inline std::filesystem::path TempDir(const std::string &tag) {
  auto p = std::filesystem::temp_directory_path() /
           ("asrkit_test_" + tag + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

inline void WriteFile(const std::filesystem::path &p, const std::string &s) {
  std::ofstream os(p, std::ios::binary);
  os << s;
}

inline std::string ReadFile(const std::filesystem::path &p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

// Up to `per` random coordinates from each named parameter, for use with
// MaxParamGradError on models too large for full-tensor probing.
inline std::vector<std::pair<std::string, int64_t>> SampleCoords(
    ParamStore<double> *store, const std::vector<std::string> &names, int per,
    Rng *rng) {
  std::vector<std::pair<std::string, int64_t>> out;
  for (const std::string &name : names) {
    Tensor<double> *p = store->Find(name);
    ASRKIT_CHECK(p != nullptr, ContractError, "no parameter " << name);
    for (int k = 0; k < per && k < p->numel(); ++k) {
      out.emplace_back(name,
                       static_cast<int64_t>(rng->RandInt(
                           static_cast<uint64_t>(p->numel()))));
    }
  }
  return out;
}

// Central-difference check of d(loss)/d(param) at sampled coordinates.
// `build` must construct the scalar loss from scratch through the given
// binder, reading parameter values live. The error denominator is floored
// at 1e-4: coordinates with near-zero true gradients are held to absolute
// agreement, which keeps finite-difference roundoff from dominating.
template <typename BuildLoss>
double MaxParamGradError(ParamStore<double> *store, BuildLoss build,
                         const std::vector<std::pair<std::string, int64_t>>
                             &coords,
                         double eps = 1e-4) {
  Tape<double> tape;
  Binder<double> bind(&tape, true);
  Var<double> loss = build(bind);
  tape.Backward(loss);
  std::vector<double> analytic;
  for (const auto &nc : coords) {
    analytic.push_back(bind.GradOf(store->Find(nc.first))[nc.second]);
  }
  double worst = 0.0;
  for (size_t i = 0; i < coords.size(); ++i) {
    Tensor<double> *p = store->Find(coords[i].first);
    double save = (*p)[coords[i].second];
    (*p)[coords[i].second] = save + eps;
    Tape<double> tp;
    Binder<double> bp(&tp, false);
    double lp = build(bp).value()[0];
    (*p)[coords[i].second] = save - eps;
    Tape<double> tm;
    Binder<double> bm(&tm, false);
    double lm = build(bm).value()[0];
    (*p)[coords[i].second] = save;
    double fd = (lp - lm) / (2.0 * eps);
    double rel = std::abs(analytic[i] - fd) /
                 std::max({std::abs(analytic[i]), std::abs(fd), 1e-4});
    worst = std::max(worst, rel);
  }
  return worst;
}

}  // namespace testing
}  // namespace asrkit

#endif  // ASRKIT_TESTS_TESTING_HPP_
