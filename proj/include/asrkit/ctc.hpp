// include/asrkit/ctc.hpp

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

// CTC negative log-likelihood via the log-domain forward recursion over the
// blank-interleaved label sequence, built from tape ops so gradients flow
// through the recursion itself. Also the label-synchronous prefix scorer
// used for joint decoding; the scorer runs off tape in double precision.

#ifndef ASRKIT_CTC_HPP_
#define ASRKIT_CTC_HPP_

#include <map>
#include <vector>

#include "asrkit/autograd.hpp"
#include "asrkit/common.hpp"
#include "asrkit/tensor.hpp"

namespace asrkit {

// Frames needed for a target: one per label plus one separating blank per
// adjacent repeat.
inline int64_t CtcMinFrames(const std::vector<int64_t> &target) {
  int64_t need = static_cast<int64_t>(target.size());
  for (size_t i = 1; i < target.size(); ++i) {
    if (target[i] == target[i - 1]) ++need;
  }
  return need;
}

// logits: [T', V] pre-softmax frame scores; blank id 0. Returns the scalar
// negative log-likelihood of the target labeling.
template <typename Real>
Var<Real> CtcLoss(Var<Real> logits, const std::vector<int64_t> &target) {
  ASRKIT_CHECK(logits.shape().size() == 2, ShapeError,
               "ctc_loss: logits must be [T', V]");
  int64_t t_len = logits.shape()[0];
  int64_t v = logits.shape()[1];
  ASRKIT_CHECK(v >= 2, ShapeError, "ctc_loss: need at least blank plus one");
  for (int64_t y : target) {
    ASRKIT_CHECK(y != 0, ContractError, "ctc_loss: target contains blank");
    ASRKIT_CHECK(0 < y && y < v, ContractError,
                 "ctc_loss: target id " << y << " outside vocabulary " << v);
  }
  int64_t need = CtcMinFrames(target);
  ASRKIT_CHECK(t_len >= need, InfeasibleError,
               "ctc_loss: target needs " << need << " frames, got " << t_len);

  Tape<Real> &tape = *logits.tape;
  Var<Real> logprobs = LogSoftmax(logits);
  int64_t l = static_cast<int64_t>(target.size());
  int64_t s = 2 * l + 1;
  std::vector<int64_t> expanded(static_cast<size_t>(s), 0);
  for (int64_t i = 0; i < l; ++i) {
    expanded[static_cast<size_t>(2 * i + 1)] = target[static_cast<size_t>(i)];
  }
  // g[s][t] = log p(symbol expanded[s] at frame t).
  Var<Real> g = EmbeddingLookup(Transpose(logprobs), expanded);

  Tensor<Real> init_mask({s, 1});
  for (int64_t i = 0; i < s; ++i) {
    init_mask[i] = i < 2 ? Real(0) : kLogZero<Real>;
  }
  Var<Real> alpha = Add(Slice(g, 1, 0, 1), tape.Constant(init_mask));

  Tensor<Real> skip_mask({s, 1});
  for (int64_t i = 0; i < s; ++i) {
    bool ok = i >= 2 && expanded[static_cast<size_t>(i)] != 0 &&
              expanded[static_cast<size_t>(i)] !=
                  expanded[static_cast<size_t>(i - 2)];
    skip_mask[i] = ok ? Real(0) : kLogZero<Real>;
  }
  Var<Real> skip = tape.Constant(skip_mask);
  Var<Real> pad1 = tape.Constant(Tensor<Real>::Full({1, 1}, kLogZero<Real>));
  Var<Real> pad2 = tape.Constant(Tensor<Real>::Full({2, 1}, kLogZero<Real>));

  for (int64_t t = 1; t < t_len; ++t) {
    Var<Real> emit = Slice(g, 1, t, t + 1);
    if (s == 1) {
      alpha = Add(alpha, emit);
      continue;
    }
    Var<Real> a1 = Concat(pad1, Slice(alpha, 0, 0, s - 1), 0);
    Var<Real> a2 =
        Add(Concat(pad2, Slice(alpha, 0, 0, s - 2), 0), skip);
    Var<Real> stacked = Concat(Concat(alpha, a1, 1), a2, 1);
    alpha = Add(ReduceLogsumexp(stacked, 1), emit);
  }
  Var<Real> tail = s == 1 ? alpha : Slice(alpha, 0, s - 2, s);
  return Scale(ReduceLogsumexp(tail, -1), -1.0);
}

// Incremental CTC prefix probabilities for the one-pass beam search: for a
// cached prefix g and symbol c, the score of g·c is the log mass of every
// complete labeling whose collapsed form starts with g·c; eos scores g as a
// complete labeling. Blank-ending and symbol-ending path masses are kept per
// frame so each extension costs O(T').
class CtcPrefixScorer {
 public:
  explicit CtcPrefixScorer(Tensor<double> logprobs)
      : lp_(std::move(logprobs)) {
    ASRKIT_CHECK(lp_.rank() == 2, ShapeError,
                 "prefix scorer: logprobs must be [T', V]");
    t_ = lp_.dim(0);
    v_ = lp_.dim(1);
    ASRKIT_CHECK(t_ >= 1 && v_ >= 2, ShapeError,
                 "prefix scorer: need T' >= 1 and V >= 2");
    for (int64_t t = 0; t < t_; ++t) {
      std::vector<double> row(lp_.data() + t * v_, lp_.data() + (t + 1) * v_);
      double z = LogSumExp(row);
      ASRKIT_CHECK(std::abs(z) <= 1e-6, ContractError,
                   "prefix scorer: row " << t << " has logsumexp " << z
                                         << ", expected 0");
    }
    State empty;
    empty.n.assign(static_cast<size_t>(t_), kNegInf);
    empty.b.resize(static_cast<size_t>(t_));
    double acc = 0.0;
    for (int64_t t = 0; t < t_; ++t) {
      acc += lp_.at(t, 0);
      empty.b[static_cast<size_t>(t)] = acc;
    }
    empty.psi = 0.0;
    cache_.emplace(std::vector<int64_t>{}, std::move(empty));
  }

  int64_t frames() const { return t_; }
  int64_t vocab() const { return v_; }

  bool Cached(const std::vector<int64_t> &prefix) const {
    return cache_.find(prefix) != cache_.end();
  }

  // Log prefix probability of a cached prefix (0 for the empty prefix).
  double PrefixScore(const std::vector<int64_t> &prefix) const {
    return Lookup(prefix).psi;
  }

  // Log mass of the cached prefix as a complete labeling (the eos rule).
  double ScoreEos(const std::vector<int64_t> &prefix) const {
    const State &st = Lookup(prefix);
    return LogAdd(st.n.back(), st.b.back());
  }

  // Extends a cached prefix by symbol c, caching the result; returns the
  // prefix score of prefix·c.
  double ScoreExtension(const std::vector<int64_t> &prefix, int64_t c) {
    ASRKIT_CHECK(c != 0, ContractError,
                 "prefix scorer: cannot extend by blank");
    ASRKIT_CHECK(0 < c && c < v_, ContractError,
                 "prefix scorer: symbol " << c << " outside vocabulary "
                                          << v_);
    const State &g = Lookup(prefix);
    std::vector<int64_t> ext(prefix);
    ext.push_back(c);
    auto hit = cache_.find(ext);
    if (hit != cache_.end()) return hit->second.psi;

    int64_t last = prefix.empty() ? -1 : prefix.back();
    State h;
    h.n.resize(static_cast<size_t>(t_));
    h.b.assign(static_cast<size_t>(t_), kNegInf);
    h.n[0] = prefix.empty() ? lp_.at(0, c) : kNegInf;
    double psi = h.n[0];
    for (int64_t t = 1; t < t_; ++t) {
      size_t tt = static_cast<size_t>(t);
      double phi = c == last ? g.b[tt - 1] : LogAdd(g.b[tt - 1], g.n[tt - 1]);
      h.n[tt] = LogAdd(h.n[tt - 1], phi) + lp_.at(t, c);
      h.b[tt] = LogAdd(h.b[tt - 1], h.n[tt - 1]) + lp_.at(t, 0);
      psi = LogAdd(psi, phi + lp_.at(t, c));
    }
    h.psi = psi;
    cache_.emplace(std::move(ext), std::move(h));
    return psi;
  }

 private:
  struct State {
    std::vector<double> n, b;
    double psi = kNegInf;
  };

  const State &Lookup(const std::vector<int64_t> &prefix) const {
    auto it = cache_.find(prefix);
    ASRKIT_CHECK(it != cache_.end(), ContractError,
                 "prefix scorer: prefix of length " << prefix.size()
                                                    << " was never scored");
    return it->second;
  }

  Tensor<double> lp_;
  int64_t t_ = 0, v_ = 0;
  std::map<std::vector<int64_t>, State> cache_;
};

}  // namespace asrkit

#endif  // ASRKIT_CTC_HPP_
