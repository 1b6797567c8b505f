// include/asrkit/decode.hpp

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

#ifndef ASRKIT_DECODE_HPP_
#define ASRKIT_DECODE_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "asrkit/common.hpp"
#include "asrkit/ctc.hpp"
#include "asrkit/dataio.hpp"
#include "asrkit/lm.hpp"
#include "asrkit/model.hpp"
#include "asrkit/train.hpp"

namespace asrkit {

struct DecodeConfig {
  int64_t beam = 20;
  double ctc_weight = 0.3;
  double lm_weight = 0.3;
  double max_len_ratio = 1.0;
  double min_len_ratio = 0.0;
  int64_t nbest = 1;

  void Validate() const {
    ASRKIT_CHECK(beam >= 1, ConfigError, "decode: beam must be >= 1");
    ASRKIT_CHECK(ctc_weight >= 0.0 && ctc_weight <= 1.0, ConfigError,
                 "decode: ctc_weight must be in [0, 1]");
    ASRKIT_CHECK(lm_weight >= 0.0, ConfigError,
                 "decode: lm_weight must be >= 0");
    ASRKIT_CHECK(min_len_ratio >= 0.0 && min_len_ratio <= max_len_ratio,
                 ConfigError,
                 "decode: need 0 <= min_len_ratio <= max_len_ratio");
    ASRKIT_CHECK(nbest >= 1, ConfigError, "decode: nbest must be >= 1");
  }
};

// A finished (or truncation-fallback) hypothesis. tokens excludes eos; the
// component sums are the unweighted log-probability totals of each scorer,
// so score = ctc_weight*ctc + (1-ctc_weight)*att + lm_weight*lm.
struct DecodeHyp {
  std::vector<int64_t> tokens;
  double score = 0.0;
  double att = 0.0;
  double ctc = 0.0;
  double lm = 0.0;
  bool truncated = false;
};

namespace detail {

template <typename Real>
struct BeamHyp {
  std::vector<int64_t> tokens;
  double score = 0.0, att = 0.0, ctc = 0.0, lm = 0.0;
  bool finished = false;
  typename AsrModel<Real>::DecState st;
  typename CharRnnLm<Real>::State lm_st;
};

// Ordering: higher score first; ties by token sequence (eos spelled out so a
// finished hypothesis compares after a live one extending the same prefix
// with a smaller symbol).
template <typename Real>
bool HypBefore(const BeamHyp<Real> &a, const BeamHyp<Real> &b, int64_t eos) {
  if (a.score != b.score) return a.score > b.score;
  std::vector<int64_t> ka = a.tokens, kb = b.tokens;
  if (a.finished) ka.push_back(eos);
  if (b.finished) kb.push_back(eos);
  return ka < kb;
}

}  // namespace detail

// Label-synchronous beam search over one encoded utterance. Every live
// hypothesis is extended by all non-blank symbols (plus eos once the minimum
// length is reached); each extension adds
//   ctc_weight * (prefix-score difference) + (1-ctc_weight) * log p_att
//   + lm_weight * log p_lm
// with the LM renormalized over the vocabulary without blank. The CTC scorer
// is skipped entirely at ctc_weight = 0 and the LM at lm_weight = 0, so those
// endpoints are bitwise identical to decoding without the component.
template <typename Real>
std::vector<DecodeHyp> BeamSearch(const AsrModel<Real> &model,
                                  const CharRnnLm<Real> *lm,
                                  const Tensor<Real> &feats,
                                  const DecodeConfig &cfg) {
  cfg.Validate();
  if (lm != nullptr) {
    ASRKIT_CHECK(lm->config().vocab == model.config().vocab, ConfigError,
                 "decode: LM and ASR vocabulary sizes differ");
  }
  Tape<Real> tape;
  Binder<Real> bind(&tape, false);
  Var<Real> h = model.Encode(bind, tape.Constant(feats));
  auto cache = model.PrepareAttention(bind, h);
  int64_t frames = h.shape()[0];
  int64_t vocab = model.config().vocab;
  int64_t eos = model.eos();
  int64_t max_len =
      static_cast<int64_t>(cfg.max_len_ratio * static_cast<double>(frames));
  int64_t min_len =
      static_cast<int64_t>(cfg.min_len_ratio * static_cast<double>(frames));

  bool use_ctc = cfg.ctc_weight > 0.0;
  bool use_lm = lm != nullptr && cfg.lm_weight > 0.0;
  std::unique_ptr<CtcPrefixScorer> scorer;
  if (use_ctc) {
    Tensor<Real> lp = LogSoftmax(model.CtcLogits(bind, h)).value();
    Tensor<double> lpd(lp.shape());
    for (int64_t i = 0; i < lp.numel(); ++i) {
      lpd[i] = static_cast<double>(lp[i]);
    }
    scorer = std::make_unique<CtcPrefixScorer>(std::move(lpd));
  }

  using Hyp = detail::BeamHyp<Real>;
  Hyp root;
  root.st = model.InitState(bind, cache);
  if (use_lm) root.lm_st = lm->InitState(bind);
  std::vector<Hyp> live = {root};
  std::vector<Hyp> finished;
  std::vector<Hyp> last_live = live;

  while (!live.empty()) {
    last_live = live;
    std::vector<Hyp> cands;
    for (const Hyp &hyp : live) {
      int64_t prev = hyp.tokens.empty() ? model.sos() : hyp.tokens.back();
      int64_t len = static_cast<int64_t>(hyp.tokens.size());
      typename AsrModel<Real>::DecState st = hyp.st;
      Tensor<Real> att_row =
          LogSoftmax(model.DecoderStep(bind, cache, prev, &st)).value();
      typename CharRnnLm<Real>::State lm_st = hyp.lm_st;
      Tensor<Real> lm_row;
      double lm_blank = 0.0;
      if (use_lm) {
        lm_row = lm->Step(bind, &lm_st, prev).value();
        lm_blank = std::log1p(-std::exp(static_cast<double>(lm_row[0])));
      }
      auto lm_term = [&](int64_t c) {
        return static_cast<double>(lm_row[c]) - lm_blank;
      };
      double base = use_ctc ? scorer->PrefixScore(hyp.tokens) : 0.0;

      if (len < max_len) {
        for (int64_t c = 1; c < vocab - 1; ++c) {
          Hyp next = hyp;
          next.st = st;
          next.tokens.push_back(c);
          double inc_att = static_cast<double>(att_row[c]);
          double inc_ctc =
              use_ctc ? scorer->ScoreExtension(hyp.tokens, c) - base : 0.0;
          double inc_lm = use_lm ? lm_term(c) : 0.0;
          if (use_lm) next.lm_st = lm_st;
          next.att += inc_att;
          next.ctc += inc_ctc;
          next.lm += inc_lm;
          next.score += cfg.ctc_weight * inc_ctc +
                        (1.0 - cfg.ctc_weight) * inc_att +
                        cfg.lm_weight * inc_lm;
          if (std::isfinite(next.score)) cands.push_back(std::move(next));
        }
      }
      if (len >= min_len) {
        Hyp done = hyp;
        done.st = st;
        done.finished = true;
        double inc_att = static_cast<double>(att_row[eos]);
        double inc_ctc = use_ctc ? scorer->ScoreEos(hyp.tokens) - base : 0.0;
        double inc_lm = use_lm ? lm_term(eos) : 0.0;
        if (use_lm) done.lm_st = lm_st;
        done.att += inc_att;
        done.ctc += inc_ctc;
        done.lm += inc_lm;
        done.score += cfg.ctc_weight * inc_ctc +
                      (1.0 - cfg.ctc_weight) * inc_att +
                      cfg.lm_weight * inc_lm;
        if (std::isfinite(done.score)) cands.push_back(std::move(done));
      }
    }
    std::sort(cands.begin(), cands.end(), [&](const Hyp &a, const Hyp &b) {
      return detail::HypBefore(a, b, eos);
    });
    if (static_cast<int64_t>(cands.size()) > cfg.beam) {
      cands.resize(static_cast<size_t>(cfg.beam));
    }
    live.clear();
    for (Hyp &c : cands) {
      (c.finished ? finished : live).push_back(std::move(c));
    }
  }

  std::vector<Hyp> *pool = &finished;
  bool truncated = false;
  if (finished.empty()) {
    pool = &last_live;
    truncated = true;
    std::sort(pool->begin(), pool->end(), [&](const Hyp &a, const Hyp &b) {
      return detail::HypBefore(a, b, eos);
    });
  } else {
    std::sort(pool->begin(), pool->end(), [&](const Hyp &a, const Hyp &b) {
      return detail::HypBefore(a, b, eos);
    });
  }
  std::vector<DecodeHyp> out;
  for (const Hyp &h2 : *pool) {
    if (static_cast<int64_t>(out.size()) >= cfg.nbest) break;
    DecodeHyp d;
    d.tokens = h2.tokens;
    d.score = h2.score;
    d.att = h2.att;
    d.ctc = h2.ctc;
    d.lm = h2.lm;
    d.truncated = truncated;
    out.push_back(std::move(d));
  }
  return out;
}

struct DecodeSetResult {
  int64_t decoded = 0;
  std::vector<std::pair<std::string, std::string>> failures;  // id, reason
  std::string hyp_path;
  std::string nbest_path;
};

// Decodes every utterance of the dataset. Writes `hyp.txt` (utt_id <tab>
// text, sorted by id) and `nbest.json` ({utt_id: [{text, score, att, ctc,
// lm}]}) under out_dir. Both token-table checksums must match the table the
// dataset was encoded with; pass lm = nullptr when decoding without fusion.
template <typename Real>
DecodeSetResult DecodeSet(const AsrModel<Real> &model, uint64_t asr_checksum,
                          const CharRnnLm<Real> *lm, uint64_t lm_checksum,
                          const Dataset &ds, const TokenTable &table,
                          const DecodeConfig &cfg,
                          const std::filesystem::path &out_dir) {
  cfg.Validate();
  ASRKIT_CHECK(model.config().vocab == table.size(), ConfigError,
               "decode: model vocabulary " << model.config().vocab
                                           << " != token table "
                                           << table.size());
  ASRKIT_CHECK(asr_checksum == table.Checksum(), ConfigError,
               "decode: ASR checkpoint token checksum " << asr_checksum
                                                        << " != table "
                                                        << table.Checksum());
  if (lm != nullptr) {
    ASRKIT_CHECK(lm_checksum == table.Checksum(), ConfigError,
                 "decode: LM checkpoint token checksum " << lm_checksum
                                                         << " != table "
                                                         << table.Checksum());
  }
  std::filesystem::create_directories(out_dir);
  std::vector<TrainableUtt<Real>> utts = LoadUtterances<Real>(ds);

  DecodeSetResult res;
  std::ofstream hyp(out_dir / "hyp.txt", std::ios::binary);
  ASRKIT_CHECK(hyp.good(), DataError,
               "cannot write " << (out_dir / "hyp.txt").string());
  nlohmann::json nbest = nlohmann::json::object();
  for (const TrainableUtt<Real> &tu : utts) {
    std::vector<DecodeHyp> hyps;
    try {
      hyps = BeamSearch(model, lm, tu.feats, cfg);
      ASRKIT_CHECK(!hyps.empty(), NumericError,
                   "beam search returned no hypotheses");
    } catch (const Error &e) {
      res.failures.emplace_back(tu.utt->id, e.what());
      continue;
    }
    hyp << tu.utt->id << "\t" << table.Decode(hyps[0].tokens) << "\n";
    nlohmann::json list = nlohmann::json::array();
    for (const DecodeHyp &h : hyps) {
      list.push_back({{"text", table.Decode(h.tokens)},
                      {"score", h.score},
                      {"att", h.att},
                      {"ctc", h.ctc},
                      {"lm", h.lm}});
    }
    nbest[tu.utt->id] = list;
    ++res.decoded;
  }
  std::ofstream nb(out_dir / "nbest.json", std::ios::binary);
  nb << SerializeJson(nbest);
  res.hyp_path = (out_dir / "hyp.txt").string();
  res.nbest_path = (out_dir / "nbest.json").string();
  return res;
}

}  // namespace asrkit

#endif  // ASRKIT_DECODE_HPP_
