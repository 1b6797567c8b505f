// include/asrkit/lm.hpp

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

#ifndef ASRKIT_LM_HPP_
#define ASRKIT_LM_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "asrkit/autograd.hpp"
#include "asrkit/common.hpp"
#include "asrkit/nn.hpp"
#include "asrkit/optimizer.hpp"
#include "asrkit/tensor.hpp"

namespace asrkit {

struct LmConfig {
  int64_t vocab = 0;
  int64_t embed = 128;
  int64_t layers = 2;
  int64_t units = 650;

  void Validate() const {
    ASRKIT_CHECK(vocab >= 2, ConfigError, "lm: vocab must be >= 2");
    ASRKIT_CHECK(embed >= 1 && layers >= 1 && units >= 1, ConfigError,
                 "lm: embed, layers and units must be positive");
  }
};

template <typename Real>
class CharRnnLm {
 public:
  explicit CharRnnLm(const LmConfig &cfg) : cfg_(cfg) {
    cfg_.Validate();
    embed_ = Embedding<Real>(&params_, "embed", cfg_.vocab, cfg_.embed);
    int64_t in = cfg_.embed;
    for (int64_t l = 0; l < cfg_.layers; ++l) {
      lstm_.push_back(LstmParams<Real>(&params_, "l" + std::to_string(l), in,
                                       cfg_.units));
      in = cfg_.units;
    }
    out_ = Linear<Real>(&params_, "out", cfg_.units, cfg_.vocab);
  }

  void InitParams(uint64_t seed) {
    params_.InitUniform(seed);
    for (LstmParams<Real> &l : lstm_) l.SetForgetBias(Real(1));
  }

  ParamStore<Real> &params() { return params_; }
  const LmConfig &config() const { return cfg_; }
  int64_t sos() const { return cfg_.vocab - 1; }
  int64_t eos() const { return cfg_.vocab - 1; }

  struct State {
    std::vector<Var<Real>> h, c;
  };

  State InitState(Binder<Real> &bind) const {
    State st;
    for (int64_t l = 0; l < cfg_.layers; ++l) {
      st.h.push_back(bind.tape().Constant(Tensor<Real>({1, cfg_.units})));
      st.c.push_back(bind.tape().Constant(Tensor<Real>({1, cfg_.units})));
    }
    return st;
  }

  Var<Real> StepLogits(Binder<Real> &bind, State *state, int64_t token) const {
    ASRKIT_CHECK(token >= 0 && token < cfg_.vocab, ContractError,
                 "lm_step: token " << token << " outside vocabulary of "
                                   << cfg_.vocab);
    ASRKIT_CHECK(static_cast<int64_t>(state->h.size()) == cfg_.layers,
                 ContractError, "lm_step: state layer count mismatch");
    Var<Real> x = embed_.Apply(bind, {token});
    for (int64_t l = 0; l < cfg_.layers; ++l) {
      auto hc = lstm_[l].Step(bind, x, state->h[l], state->c[l]);
      state->h[l] = hc.first;
      state->c[l] = hc.second;
      x = hc.first;
    }
    return out_.Apply(bind, x);
  }

  // Advances the state and returns log p(next | history) as [1, V].
  Var<Real> Step(Binder<Real> &bind, State *state, int64_t token) const {
    return LogSoftmax(StepLogits(bind, state, token));
  }

  // Mean cross-entropy of predicting tokens + eos from sos + tokens.
  Var<Real> SequenceLoss(Binder<Real> &bind,
                         const std::vector<int64_t> &tokens) const {
    State st = InitState(bind);
    return WindowLoss(bind, &st, tokens, 0, static_cast<int64_t>(tokens.size()) + 1,
                      /*mean=*/true);
  }

  // Cross-entropy summed over prediction steps [begin, end) of the padded
  // stream sos + tokens -> tokens + eos. Used for truncated backprop windows.
  Var<Real> WindowLoss(Binder<Real> &bind, State *state,
                       const std::vector<int64_t> &tokens, int64_t begin,
                       int64_t end, bool mean = false) const {
    int64_t steps = static_cast<int64_t>(tokens.size()) + 1;
    ASRKIT_CHECK(begin >= 0 && begin < end && end <= steps, ContractError,
                 "lm window [" << begin << ", " << end
                               << ") outside " << steps << " steps");
    Var<Real> total;
    for (int64_t n = begin; n < end; ++n) {
      int64_t prev = n == 0 ? sos() : tokens[n - 1];
      int64_t want = n + 1 == steps ? eos() : tokens[n];
      ASRKIT_CHECK(want > 0 && want < eos() + (n + 1 == steps ? 1 : 0),
                   ContractError,
                   "lm sequence token " << want << " outside (0, eos)");
      Var<Real> logp = Step(bind, state, prev);
      Tensor<Real> onehot({int64_t(1), cfg_.vocab});
      onehot[want] = Real(1);
      Var<Real> ce = Scale(
          ReduceSum(Mul(logp, bind.tape().Constant(onehot))), Real(-1));
      total = n == begin ? ce : Add(total, ce);
    }
    if (mean) {
      total = Scale(total, Real(1) / static_cast<Real>(end - begin));
    }
    return total;
  }

 private:
  LmConfig cfg_;
  ParamStore<Real> params_;
  Embedding<Real> embed_;
  std::vector<LstmParams<Real>> lstm_;
  Linear<Real> out_;
};

struct LmExample {
  std::string id;
  std::vector<int64_t> tokens;
};

struct LmTrainConfig {
  int64_t epochs = 10;
  int64_t batch_size = 32;
  int64_t bptt = 64;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double clip = 5.0;
  double val_fraction = 0.05;
  uint64_t seed = 1;

  void Validate() const {
    ASRKIT_CHECK(epochs >= 1 && batch_size >= 1 && bptt >= 1, ConfigError,
                 "lm train: epochs, batch_size and bptt must be positive");
    ASRKIT_CHECK(clip > 0.0, ConfigError, "lm train: clip must be positive");
    ASRKIT_CHECK(val_fraction >= 0.0 && val_fraction < 1.0, ConfigError,
                 "lm train: val_fraction must be in [0, 1)");
  }
};

struct LmEpochRecord {
  double train_ppl = 0.0;
  double val_ppl = 0.0;
};

struct LmTrainResult {
  std::vector<LmEpochRecord> epochs;
  int64_t train_sequences = 0;
  int64_t val_sequences = 0;
};

namespace detail {

// Walks one sequence in truncated windows, accumulating summed cross-entropy.
// When `grads` is given, runs backward per window and adds parameter
// gradients into it.
template <typename Real>
double LmSequencePass(CharRnnLm<Real> *lm, const std::vector<int64_t> &tokens,
                      int64_t bptt, GradMap<Real> *grads) {
  int64_t steps = static_cast<int64_t>(tokens.size()) + 1;
  double ce = 0.0;
  std::vector<Tensor<Real>> hv, cv;
  for (int64_t begin = 0; begin < steps; begin += bptt) {
    int64_t end = std::min(begin + bptt, steps);
    Tape<Real> tape;
    Binder<Real> bind(&tape, grads != nullptr);
    typename CharRnnLm<Real>::State st;
    if (begin == 0) {
      st = lm->InitState(bind);
    } else {
      for (size_t l = 0; l < hv.size(); ++l) {
        st.h.push_back(tape.Constant(hv[l]));
        st.c.push_back(tape.Constant(cv[l]));
      }
    }
    Var<Real> loss = lm->WindowLoss(bind, &st, tokens, begin, end);
    ce += static_cast<double>(loss.value()[0]);
    if (grads != nullptr) {
      tape.Backward(loss);
      lm->params().ForEach([&](const std::string &name,
                               const Tensor<Real> &p) {
        Tensor<Real> g = bind.GradOf(&p);
        auto it = grads->find(name);
        if (it == grads->end()) {
          grads->emplace(name, std::move(g));
        } else {
          for (int64_t i = 0; i < g.numel(); ++i) it->second[i] += g[i];
        }
      });
    }
    hv.clear();
    cv.clear();
    for (size_t l = 0; l < st.h.size(); ++l) {
      hv.push_back(st.h[l].value());
      cv.push_back(st.c[l].value());
    }
  }
  return ce;
}

}  // namespace detail

// Trains the model in place on the corpus. Sequences are length-sorted into
// fixed batches whose order is reshuffled each epoch; each optimizer step
// averages gradients over the batch's prediction steps. Returns per-epoch
// train and held-out perplexities (held-out = hash split of ids; falls back
// to the train split when the split is empty).
template <typename Real>
LmTrainResult LmTrain(CharRnnLm<Real> *lm, const std::vector<LmExample> &corpus,
                      const LmTrainConfig &cfg) {
  cfg.Validate();
  ASRKIT_CHECK(!corpus.empty(), DataError, "lm corpus is empty");
  int64_t eos = lm->eos();
  for (const LmExample &ex : corpus) {
    for (int64_t t : ex.tokens) {
      ASRKIT_CHECK(t > 0 && t < eos, DataError,
                   "lm corpus sequence " << ex.id << ": token " << t
                                         << " outside (0, eos)");
    }
  }

  uint64_t cut =
      static_cast<uint64_t>(cfg.val_fraction * 10000.0);
  std::vector<const LmExample *> train, val;
  for (const LmExample &ex : corpus) {
    (Fnv1a64(ex.id) % 10000 < cut ? val : train).push_back(&ex);
  }
  ASRKIT_CHECK(!train.empty(), DataError,
               "lm corpus has no sequences left after the validation split");
  const std::vector<const LmExample *> &eval = val.empty() ? train : val;

  std::sort(train.begin(), train.end(),
            [](const LmExample *a, const LmExample *b) {
              if (a->tokens.size() != b->tokens.size()) {
                return a->tokens.size() < b->tokens.size();
              }
              return a->id < b->id;
            });
  std::vector<std::vector<const LmExample *>> batches;
  for (size_t i = 0; i < train.size();
       i += static_cast<size_t>(cfg.batch_size)) {
    size_t end = std::min(train.size(),
                          i + static_cast<size_t>(cfg.batch_size));
    batches.emplace_back(train.begin() + i, train.begin() + end);
  }

  Adam<Real> adam(cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps);
  LmTrainResult result;
  result.train_sequences = static_cast<int64_t>(train.size());
  result.val_sequences = static_cast<int64_t>(val.size());
  for (int64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<size_t> order(batches.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(cfg.seed + static_cast<uint64_t>(epoch));
    rng.Shuffle(&order);

    double epoch_ce = 0.0;
    int64_t epoch_steps = 0;
    int64_t batch_no = 0;
    for (size_t bi : order) {
      ++batch_no;
      GradMap<Real> grads;
      double batch_ce = 0.0;
      int64_t batch_steps = 0;
      for (const LmExample *ex : batches[bi]) {
        batch_ce += detail::LmSequencePass(lm, ex->tokens, cfg.bptt, &grads);
        batch_steps += static_cast<int64_t>(ex->tokens.size()) + 1;
      }
      ASRKIT_CHECK(std::isfinite(batch_ce), NumericError,
                   "lm training diverged at epoch " << epoch + 1 << " batch "
                                                    << batch_no);
      for (auto &kv : grads) {
        for (int64_t i = 0; i < kv.second.numel(); ++i) {
          kv.second[i] /= static_cast<Real>(batch_steps);
        }
      }
      ClipGlobalNorm(&grads, cfg.clip);
      adam.Step(&lm->params(), grads);
      epoch_ce += batch_ce;
      epoch_steps += batch_steps;
    }

    double eval_ce = 0.0;
    int64_t eval_steps = 0;
    for (const LmExample *ex : eval) {
      eval_ce += detail::LmSequencePass<Real>(lm, ex->tokens, cfg.bptt,
                                              nullptr);
      eval_steps += static_cast<int64_t>(ex->tokens.size()) + 1;
    }
    LmEpochRecord rec;
    rec.train_ppl = std::exp(epoch_ce / static_cast<double>(epoch_steps));
    rec.val_ppl = std::exp(eval_ce / static_cast<double>(eval_steps));
    result.epochs.push_back(rec);
  }
  return result;
}

}  // namespace asrkit

#endif  // ASRKIT_LM_HPP_
