// include/asrkit/train.hpp

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

#ifndef ASRKIT_TRAIN_HPP_
#define ASRKIT_TRAIN_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "asrkit/checkpoint.hpp"
#include "asrkit/common.hpp"
#include "asrkit/ctc.hpp"
#include "asrkit/dataio.hpp"
#include "asrkit/model.hpp"
#include "asrkit/optimizer.hpp"

namespace asrkit {

struct TrainConfig {
  double alpha = 0.5;
  int64_t epochs = 15;
  int64_t batch_size = 16;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double clip = 5.0;
  double smoothing = 0.05;
  double val_fraction = 0.05;
  uint64_t seed = 1;

  void Validate() const {
    ASRKIT_CHECK(alpha >= 0.0 && alpha <= 1.0, ConfigError,
                 "train: alpha must be in [0, 1], got " << alpha);
    ASRKIT_CHECK(epochs >= 1 && batch_size >= 1, ConfigError,
                 "train: epochs and batch_size must be positive");
    ASRKIT_CHECK(clip > 0.0, ConfigError, "train: clip must be positive");
    ASRKIT_CHECK(smoothing >= 0.0 && smoothing <= 1.0, ConfigError,
                 "train: smoothing must be in [0, 1]");
    ASRKIT_CHECK(val_fraction >= 0.0 && val_fraction < 1.0, ConfigError,
                 "train: val_fraction must be in [0, 1)");
  }
};

// Token-weighted loss means over a set of utterances. The total always comes
// from the single expression alpha*L_ctc + (1-alpha)*L_att so the identity
// holds bitwise wherever it is recomputed.
struct LossBreakdown {
  double L = 0.0;
  double L_ctc = 0.0;
  double L_att = 0.0;
  int64_t tokens = 0;
};

struct FitResult {
  int64_t excluded = 0;
  int64_t train_utts = 0;
  int64_t val_utts = 0;
  int64_t batches_per_epoch = 0;
  int64_t optimizer_steps = 0;
  std::vector<LossBreakdown> train_metrics;
  std::vector<LossBreakdown> val_metrics;  // empty when there is no val split
  double best_val = std::numeric_limits<double>::infinity();
  int64_t best_epoch = 0;  // 1-based
  std::string checkpoint_path;
  std::string metrics_path;
};

template <typename Real>
struct TrainableUtt {
  const UttRecord *utt = nullptr;
  Tensor<Real> feats;
};

// Reads every feature matrix referenced by the dataset, one archive pass per
// distinct file.
template <typename Real>
std::vector<TrainableUtt<Real>> LoadUtterances(const Dataset &ds) {
  std::map<std::string, std::vector<const UttRecord *>> by_ark;
  for (const UttRecord &u : ds.utts) by_ark[u.feat_path].push_back(&u);
  std::vector<TrainableUtt<Real>> out;
  for (const auto &kv : by_ark) {
    std::map<std::string, Tensor<double>> ark = ReadTextArk(kv.first);
    for (const UttRecord *u : kv.second) {
      auto it = ark.find(u->id);
      ASRKIT_CHECK(it != ark.end(), DataError,
                   kv.first << ": no feature matrix for " << u->id);
      const Tensor<double> &m = it->second;
      ASRKIT_CHECK(m.shape()[0] == u->frames && m.shape()[1] == u->dim,
                   DataError,
                   kv.first << ": " << u->id << " has shape "
                            << Tensor<double>::ShapeString(m.shape())
                            << ", dataset says ["
                            << u->frames << ", " << u->dim << "]");
      TrainableUtt<Real> tu;
      tu.utt = u;
      tu.feats = Tensor<Real>(m.shape());
      for (int64_t i = 0; i < m.numel(); ++i) {
        tu.feats[i] = static_cast<Real>(m[i]);
      }
      out.push_back(std::move(tu));
    }
  }
  std::sort(out.begin(), out.end(),
            [](const TrainableUtt<Real> &a, const TrainableUtt<Real> &b) {
              return a.utt->id < b.utt->id;
            });
  return out;
}

// Unigram label distribution of the given utterances: token counts plus one
// eos per utterance, normalized. Blank keeps zero mass.
template <typename Real>
Tensor<Real> UnigramOf(const std::vector<const TrainableUtt<Real> *> &utts,
                       int64_t vocab) {
  Tensor<double> counts({vocab});
  double total = 0.0;
  for (const TrainableUtt<Real> *tu : utts) {
    for (int64_t t : tu->utt->tokenids) {
      counts[t] += 1.0;
      total += 1.0;
    }
    counts[vocab - 1] += 1.0;
    total += 1.0;
  }
  Tensor<Real> u({vocab});
  for (int64_t i = 0; i < vocab; ++i) {
    u[i] = static_cast<Real>(counts[i] / total);
  }
  return u;
}

namespace detail {

template <typename Real>
struct UttLoss {
  Var<Real> total, ctc, att;
  int64_t weight = 0;
};

// One utterance's multiobjective loss on the given tape.
template <typename Real>
UttLoss<Real> BuildUttLoss(const AsrModel<Real> &model, Binder<Real> &bind,
                           const TrainableUtt<Real> &tu, double alpha,
                           double smoothing, const Tensor<Real> &unigram) {
  UttLoss<Real> out;
  Var<Real> h = model.Encode(bind, bind.tape().Constant(tu.feats));
  out.att = model.AttentionLoss(bind, h, tu.utt->tokenids,
                                static_cast<Real>(smoothing), unigram);
  out.ctc = CtcLoss(model.CtcLogits(bind, h), tu.utt->tokenids);
  out.total = Add(Scale(out.ctc, static_cast<Real>(alpha)),
                  Scale(out.att, static_cast<Real>(1.0 - alpha)));
  out.weight = static_cast<int64_t>(tu.utt->tokenids.size()) + 1;
  return out;
}

}  // namespace detail

// Token-weighted mean losses of `utts` under the current parameters, no
// gradients.
template <typename Real>
LossBreakdown EvalBreakdown(const AsrModel<Real> &model,
                            const std::vector<const TrainableUtt<Real> *> &utts,
                            double alpha, double smoothing,
                            const Tensor<Real> &unigram) {
  ASRKIT_CHECK(!utts.empty(), ContractError,
               "EvalBreakdown: empty utterance list");
  double ctc_sum = 0.0, att_sum = 0.0;
  int64_t weight_sum = 0;
  for (const TrainableUtt<Real> *tu : utts) {
    Tape<Real> tape;
    Binder<Real> bind(&tape, false);
    detail::UttLoss<Real> l =
        detail::BuildUttLoss(model, bind, *tu, alpha, smoothing, unigram);
    double w = static_cast<double>(l.weight);
    ctc_sum += w * static_cast<double>(l.ctc.value()[0]);
    att_sum += w * static_cast<double>(l.att.value()[0]);
    weight_sum += l.weight;
  }
  LossBreakdown bd;
  bd.tokens = weight_sum;
  bd.L_ctc = ctc_sum / static_cast<double>(weight_sum);
  bd.L_att = att_sum / static_cast<double>(weight_sum);
  bd.L = alpha * bd.L_ctc + (1.0 - alpha) * bd.L_att;
  return bd;
}

// Initializes the model from cfg.seed and trains it on the dataset.
// Writes metrics.jsonl (one {"epoch","split","L","L_ctc","L_att"} object per
// line) and keeps the best-validation checkpoint as model.bin under out_dir.
// CTC-infeasible, empty, or out-of-vocabulary targets are excluded from
// batching and counted in the result.
template <typename Real>
FitResult Fit(AsrModel<Real> *model, const Dataset &ds, const TrainConfig &cfg,
              const std::filesystem::path &out_dir, uint64_t token_checksum) {
  cfg.Validate();
  ASRKIT_CHECK(!ds.utts.empty(), DataError, "training dataset is empty");
  ASRKIT_CHECK(model->config().vocab == ds.vocab_size, ConfigError,
               "model vocabulary " << model->config().vocab
                                   << " != dataset vocabulary "
                                   << ds.vocab_size);
  std::filesystem::create_directories(out_dir);
  model->InitParams(cfg.seed);

  std::vector<TrainableUtt<Real>> utts = LoadUtterances<Real>(ds);
  const EncoderConfig &enc = model->config().encoder;
  FitResult res;
  std::vector<const TrainableUtt<Real> *> usable;
  for (const TrainableUtt<Real> &tu : utts) {
    const std::vector<int64_t> &y = tu.utt->tokenids;
    bool ok = !y.empty();
    for (int64_t t : y) ok = ok && t > 0 && t < model->eos();
    ok = ok && tu.feats.shape()[0] >= enc.TotalFactor() &&
         enc.OutputLength(tu.feats.shape()[0]) >= CtcMinFrames(y);
    if (ok) {
      usable.push_back(&tu);
    } else {
      ++res.excluded;
    }
  }
  ASRKIT_CHECK(!usable.empty(), DataError,
               "no trainable utterances (" << res.excluded
                                           << " excluded as infeasible)");

  uint64_t cut = static_cast<uint64_t>(cfg.val_fraction * 10000.0);
  std::vector<const TrainableUtt<Real> *> train, val;
  for (const TrainableUtt<Real> *tu : usable) {
    (Fnv1a64(tu->utt->id) % 10000 < cut ? val : train).push_back(tu);
  }
  ASRKIT_CHECK(!train.empty(), DataError,
               "no training utterances left after the validation split");
  res.train_utts = static_cast<int64_t>(train.size());
  res.val_utts = static_cast<int64_t>(val.size());

  Tensor<Real> unigram = UnigramOf(train, model->config().vocab);

  std::sort(train.begin(), train.end(),
            [](const TrainableUtt<Real> *a, const TrainableUtt<Real> *b) {
              if (a->feats.shape()[0] != b->feats.shape()[0]) {
                return a->feats.shape()[0] < b->feats.shape()[0];
              }
              return a->utt->id < b->utt->id;
            });
  std::vector<std::vector<const TrainableUtt<Real> *>> batches;
  for (size_t i = 0; i < train.size();
       i += static_cast<size_t>(cfg.batch_size)) {
    size_t end =
        std::min(train.size(), i + static_cast<size_t>(cfg.batch_size));
    batches.emplace_back(train.begin() + i, train.begin() + end);
  }
  res.batches_per_epoch = static_cast<int64_t>(batches.size());

  std::filesystem::path metrics_path = out_dir / "metrics.jsonl";
  std::filesystem::path ckpt_path = out_dir / "model.bin";
  std::ofstream metrics(metrics_path, std::ios::binary);
  ASRKIT_CHECK(metrics.good(), DataError,
               "cannot write " << metrics_path.string());
  auto write_line = [&](int64_t epoch, const char *split,
                        const LossBreakdown &bd) {
    char buf[256];
    std::snprintf(buf, sizeof buf,
                  "{\"epoch\":%lld,\"split\":\"%s\",\"L\":%.17g,"
                  "\"L_ctc\":%.17g,\"L_att\":%.17g}\n",
                  static_cast<long long>(epoch), split, bd.L, bd.L_ctc,
                  bd.L_att);
    metrics << buf;
  };

  Adam<Real> adam(cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps);
  std::vector<const Tensor<Real> *> param_ptrs;
  std::vector<std::string> param_names;
  model->params().ForEach(
      [&](const std::string &name, const Tensor<Real> &p) {
        param_names.push_back(name);
        param_ptrs.push_back(&p);
      });

  for (int64_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::vector<size_t> order(batches.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(cfg.seed + static_cast<uint64_t>(epoch));
    rng.Shuffle(&order);

    double ctc_sum = 0.0, att_sum = 0.0;
    int64_t weight_sum = 0;
    int64_t batch_no = 0;
    for (size_t bi : order) {
      ++batch_no;
      GradMap<Real> grads;
      for (size_t pi = 0; pi < param_names.size(); ++pi) {
        grads.emplace(param_names[pi], Tensor<Real>(param_ptrs[pi]->shape()));
      }
      int64_t batch_weight = 0;
      for (const TrainableUtt<Real> *tu : batches[bi]) {
        Tape<Real> tape;
        Binder<Real> bind(&tape, true);
        detail::UttLoss<Real> l = detail::BuildUttLoss(
            *model, bind, *tu, cfg.alpha, cfg.smoothing, unigram);
        ASRKIT_CHECK(
            std::isfinite(static_cast<double>(l.total.value()[0])),
            NumericError,
            "training diverged at epoch " << epoch << " batch " << batch_no
                                          << " (" << tu->utt->id << ")");
        tape.Backward(l.total);
        Real w = static_cast<Real>(l.weight);
        for (size_t pi = 0; pi < param_names.size(); ++pi) {
          const Tensor<Real> *g = bind.GradPtr(param_ptrs[pi]);
          if (g == nullptr) continue;
          Tensor<Real> &acc = grads[param_names[pi]];
          for (int64_t i = 0; i < acc.numel(); ++i) acc[i] += w * (*g)[i];
        }
        double wd = static_cast<double>(l.weight);
        ctc_sum += wd * static_cast<double>(l.ctc.value()[0]);
        att_sum += wd * static_cast<double>(l.att.value()[0]);
        batch_weight += l.weight;
        weight_sum += l.weight;
      }
      for (auto &kv : grads) {
        for (int64_t i = 0; i < kv.second.numel(); ++i) {
          kv.second[i] /= static_cast<Real>(batch_weight);
        }
      }
      ClipGlobalNorm(&grads, cfg.clip);
      adam.Step(&model->params(), grads);
      ++res.optimizer_steps;
    }

    LossBreakdown tr;
    tr.tokens = weight_sum;
    tr.L_ctc = ctc_sum / static_cast<double>(weight_sum);
    tr.L_att = att_sum / static_cast<double>(weight_sum);
    tr.L = cfg.alpha * tr.L_ctc + (1.0 - cfg.alpha) * tr.L_att;
    res.train_metrics.push_back(tr);
    write_line(epoch, "train", tr);

    double selection = tr.L;
    if (!val.empty()) {
      LossBreakdown vb =
          EvalBreakdown(*model, val, cfg.alpha, cfg.smoothing, unigram);
      res.val_metrics.push_back(vb);
      write_line(epoch, "val", vb);
      selection = vb.L;
    }
    if (selection < res.best_val) {
      res.best_val = selection;
      res.best_epoch = epoch;
      SaveCheckpoint(model->params(), ckpt_path, "asr", token_checksum);
    }
    metrics.flush();
  }

  res.checkpoint_path = ckpt_path.string();
  res.metrics_path = metrics_path.string();
  return res;
}

}  // namespace asrkit

#endif  // ASRKIT_TRAIN_HPP_
