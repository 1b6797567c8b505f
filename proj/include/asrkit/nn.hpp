// include/asrkit/nn.hpp

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

#ifndef ASRKIT_NN_HPP_
#define ASRKIT_NN_HPP_

#include <map>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "asrkit/autograd.hpp"
#include "asrkit/common.hpp"
#include "asrkit/tensor.hpp"

namespace asrkit {

// Owns every learnable tensor of a model, keyed by a unique name. Iteration
// is name-sorted so optimizers and checkpoints see one deterministic order.
template <typename Real>
class ParamStore {
 public:
  Tensor<Real> *Add(const std::string &name, std::vector<int64_t> shape) {
    ASRKIT_CHECK(params_.find(name) == params_.end(), ContractError,
                 "ParamStore: duplicate parameter name " << name);
    auto t = std::make_unique<Tensor<Real>>(std::move(shape));
    Tensor<Real> *p = t.get();
    params_.emplace(name, std::move(t));
    return p;
  }

  Tensor<Real> *Find(const std::string &name) {
    auto it = params_.find(name);
    return it == params_.end() ? nullptr : it->second.get();
  }

  template <typename F>
  void ForEach(F fn) {
    for (auto &kv : params_) fn(kv.first, *kv.second);
  }

  template <typename F>
  void ForEach(F fn) const {
    for (const auto &kv : params_) fn(kv.first, *kv.second);
  }

  size_t size() const { return params_.size(); }

  int64_t TotalElements() const {
    int64_t n = 0;
    for (const auto &kv : params_) n += kv.second->numel();
    return n;
  }

  // Uniform(-0.1, 0.1) for every element, in name-sorted order so the draw
  // sequence is independent of registration order.
  void InitUniform(uint64_t seed, double lo = -0.1, double hi = 0.1) {
    Rng rng(seed);
    for (auto &kv : params_) {
      Tensor<Real> &t = *kv.second;
      for (int64_t i = 0; i < t.numel(); ++i) {
        t[i] = static_cast<Real>(rng.Uniform(lo, hi));
      }
    }
  }

 private:
  std::map<std::string, std::unique_ptr<Tensor<Real>>> params_;
};

// Per-tape bridge from parameter storage to tape variables. Each parameter
// becomes one external leaf per tape, created on first use.
template <typename Real>
class Binder {
 public:
  Binder(Tape<Real> *tape, bool train) : tape_(tape), train_(train) {}

  Var<Real> operator()(const Tensor<Real> *param) {
    auto it = bound_.find(param);
    if (it != bound_.end()) return it->second;
    Var<Real> v = tape_->ExternalLeaf(param, train_);
    bound_.emplace(param, v);
    return v;
  }

  Tape<Real> &tape() { return *tape_; }
  bool train() const { return train_; }

  // Gradient of a bound parameter after Backward; zero tensor if the
  // parameter never entered this tape's graph.
  Tensor<Real> GradOf(const Tensor<Real> *param) const {
    auto it = bound_.find(param);
    if (it == bound_.end() || !train_) return Tensor<Real>(param->shape());
    return it->second.grad();
  }

  bool Bound(const Tensor<Real> *param) const {
    return bound_.find(param) != bound_.end();
  }

  // Borrowed view of a bound parameter's gradient; null when the parameter
  // did not participate in this tape.
  const Tensor<Real> *GradPtr(const Tensor<Real> *param) const {
    auto it = bound_.find(param);
    if (it == bound_.end() || !train_) return nullptr;
    return &it->second.grad();
  }

 private:
  Tape<Real> *tape_;
  bool train_;
  std::unordered_map<const Tensor<Real> *, Var<Real>> bound_;
};

// y = x W + b.
template <typename Real>
struct Linear {
  Tensor<Real> *w = nullptr;
  Tensor<Real> *b = nullptr;

  Linear() = default;
  Linear(ParamStore<Real> *store, const std::string &prefix, int64_t in,
         int64_t out) {
    w = store->Add(prefix + ".w", {in, out});
    b = store->Add(prefix + ".b", {out});
  }

  Var<Real> Apply(Binder<Real> &bind, Var<Real> x) const {
    return Add(Matmul(x, bind(w)), bind(b));
  }
};

// One LSTM direction's weights. Gate order along the 4H axis is
// input, forget, cell, output; SetForgetBias nudges the forget block.
template <typename Real>
struct LstmParams {
  Tensor<Real> *wx = nullptr;
  Tensor<Real> *wh = nullptr;
  Tensor<Real> *b = nullptr;
  int hidden = 0;

  LstmParams() = default;
  LstmParams(ParamStore<Real> *store, const std::string &prefix, int64_t in,
             int h)
      : hidden(h) {
    wx = store->Add(prefix + ".wx", {in, 4 * static_cast<int64_t>(h)});
    wh = store->Add(prefix + ".wh",
                    {static_cast<int64_t>(h), 4 * static_cast<int64_t>(h)});
    b = store->Add(prefix + ".b", {4 * static_cast<int64_t>(h)});
  }

  void SetForgetBias(Real v) {
    for (int j = 0; j < hidden; ++j) (*b)[hidden + j] += v;
  }

  // Full sequence, zero initial state; h states in original time order.
  Var<Real> Seq(Binder<Real> &bind, Var<Real> x, bool reverse) const {
    return LstmSeq(x, bind(wx), bind(wh), bind(b), hidden, reverse);
  }

  // Single step; returns (new h, new c).
  std::pair<Var<Real>, Var<Real>> Step(Binder<Real> &bind, Var<Real> x,
                                       Var<Real> h, Var<Real> c) const {
    Var<Real> hc = LstmCell(x, h, c, bind(wx), bind(wh), bind(b), hidden);
    return {Slice(hc, 1, 0, hidden), Slice(hc, 1, hidden, 2 * hidden)};
  }
};

template <typename Real>
struct Embedding {
  Tensor<Real> *table = nullptr;

  Embedding() = default;
  Embedding(ParamStore<Real> *store, const std::string &prefix, int64_t v,
            int64_t d) {
    table = store->Add(prefix + ".table", {v, d});
  }

  Var<Real> Apply(Binder<Real> &bind, const std::vector<int64_t> &ids) const {
    return EmbeddingLookup(bind(table), ids);
  }
};

}  // namespace asrkit

#endif  // ASRKIT_NN_HPP_
