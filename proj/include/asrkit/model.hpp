// include/asrkit/model.hpp

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

// Attention-based encoder-decoder with a CTC projection head. The encoder is
// a projected BLSTM stack with frame subsampling, optionally preceded by two
// VGG convolution blocks. The decoder is a single LSTM with location-aware
// or dot-product attention, scored by teacher-forced cross entropy with
// unigram label smoothing.

#ifndef ASRKIT_MODEL_HPP_
#define ASRKIT_MODEL_HPP_

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "asrkit/autograd.hpp"
#include "asrkit/common.hpp"
#include "asrkit/nn.hpp"
#include "asrkit/tensor.hpp"

namespace asrkit {

struct EncoderConfig {
  std::string kind = "blstmp";
  int num_layers = 4;
  int units = 320;
  int projection = 320;
  std::vector<int64_t> subsample = {1, 2, 2, 1};
  int64_t input_dim = 80;

  void Validate() const {
    ASRKIT_CHECK(kind == "blstmp" || kind == "vggblstm", ConfigError,
                 "encoder: unknown kind `" << kind << "`");
    ASRKIT_CHECK(num_layers >= 1 && units >= 1 && projection >= 1, ConfigError,
                 "encoder: layers, units and projection must be positive");
    ASRKIT_CHECK(static_cast<int>(subsample.size()) == num_layers, ConfigError,
                 "encoder: subsample schedule has " << subsample.size()
                                                    << " entries for "
                                                    << num_layers
                                                    << " layers");
    for (int64_t s : subsample) {
      ASRKIT_CHECK(s >= 1, ConfigError, "encoder: subsample factors must be >=1");
    }
    if (kind == "vggblstm") {
      for (int64_t s : subsample) {
        ASRKIT_CHECK(s == 1, ConfigError,
                     "encoder: vggblstm subsamples via its pools only; "
                     "schedule must be all ones");
      }
      ASRKIT_CHECK(input_dim >= 4, ConfigError,
                   "encoder: vggblstm needs input_dim >= 4");
    }
    ASRKIT_CHECK(input_dim >= 1, ConfigError, "encoder: bad input_dim");
  }

  int64_t TotalFactor() const {
    if (kind == "vggblstm") return 4;
    int64_t f = 1;
    for (int64_t s : subsample) f *= s;
    return f;
  }

  // Frame count after the full stack: each pool halves with floor, each
  // subsampling layer keeps indices 0, s, 2s, ... (ceil division).
  int64_t OutputLength(int64_t t) const {
    if (kind == "vggblstm") return t / 2 / 2;
    for (int64_t s : subsample) t = (t + s - 1) / s;
    return t;
  }

  int64_t OutputDim() const { return projection; }

  // Feature width handed to the first BLSTM layer.
  int64_t LstmInputDim() const {
    if (kind == "vggblstm") return 128 * (input_dim / 2 / 2);
    return input_dim;
  }
};

struct AttentionConfig {
  std::string kind = "location";
  int dim = 320;
  int conv_filters = 10;
  int conv_width = 100;

  void Validate() const {
    ASRKIT_CHECK(kind == "location" || kind == "dot", ConfigError,
                 "attention: unknown kind `" << kind << "`");
    ASRKIT_CHECK(dim >= 1, ConfigError, "attention: dim must be positive");
    if (kind == "location") {
      ASRKIT_CHECK(conv_filters >= 1 && conv_width >= 1, ConfigError,
                   "attention: conv_filters and conv_width must be positive");
    }
  }
};

struct ModelConfig {
  EncoderConfig encoder;
  AttentionConfig attention;
  int dec_units = 320;
  int dec_embed = 320;
  int64_t vocab = 0;

  void Validate() const {
    encoder.Validate();
    attention.Validate();
    ASRKIT_CHECK(dec_units >= 1 && dec_embed >= 1, ConfigError,
                 "decoder: units and embed must be positive");
    ASRKIT_CHECK(vocab >= 2, ConfigError, "model: vocab must be >= 2");
  }
};

template <typename Real>
class AsrModel {
 public:
  explicit AsrModel(const ModelConfig &cfg) : cfg_(cfg) {
    cfg_.Validate();
    int64_t e = cfg_.encoder.OutputDim();
    if (cfg_.encoder.kind == "vggblstm") {
      conv_[0].w = params_.Add("enc.vgg.conv1_1.w", {64, 1, 3, 3});
      conv_[0].b = params_.Add("enc.vgg.conv1_1.b", {64});
      conv_[1].w = params_.Add("enc.vgg.conv1_2.w", {64, 64, 3, 3});
      conv_[1].b = params_.Add("enc.vgg.conv1_2.b", {64});
      conv_[2].w = params_.Add("enc.vgg.conv2_1.w", {128, 64, 3, 3});
      conv_[2].b = params_.Add("enc.vgg.conv2_1.b", {128});
      conv_[3].w = params_.Add("enc.vgg.conv2_2.w", {128, 128, 3, 3});
      conv_[3].b = params_.Add("enc.vgg.conv2_2.b", {128});
    }
    int64_t in = cfg_.encoder.LstmInputDim();
    for (int l = 0; l < cfg_.encoder.num_layers; ++l) {
      std::string p = "enc.l" + std::to_string(l);
      EncLayer layer;
      layer.fwd = LstmParams<Real>(&params_, p + ".fwd", in,
                                   cfg_.encoder.units);
      layer.bwd = LstmParams<Real>(&params_, p + ".bwd", in,
                                   cfg_.encoder.units);
      layer.proj = Linear<Real>(&params_, p + ".proj",
                                2 * static_cast<int64_t>(cfg_.encoder.units),
                                cfg_.encoder.projection);
      enc_layers_.push_back(layer);
      in = cfg_.encoder.projection;
    }
    int64_t a = cfg_.attention.dim;
    if (cfg_.attention.kind == "location") {
      att_enc_w_ = params_.Add("att.enc.w", {e, a});
      att_dec_w_ = params_.Add("att.dec.w", {cfg_.dec_units, a});
      att_conv_w_ = params_.Add(
          "att.conv.w",
          {cfg_.attention.conv_filters, 1, 1, cfg_.attention.conv_width});
      att_conv_b_ = params_.Add("att.conv.b", {cfg_.attention.conv_filters});
      att_conv_proj_w_ =
          params_.Add("att.conv.proj.w", {cfg_.attention.conv_filters, a});
      att_bias_ = params_.Add("att.bias", {a});
      att_g_ = params_.Add("att.g", {a, 1});
    } else {
      att_q_w_ = params_.Add("att.q.w", {cfg_.dec_units, a});
      att_h_w_ = params_.Add("att.h.w", {e, a});
    }
    embed_ = Embedding<Real>(&params_, "dec.embed", cfg_.vocab, cfg_.dec_embed);
    dec_lstm_ = LstmParams<Real>(&params_, "dec.lstm", cfg_.dec_embed + e,
                                 cfg_.dec_units);
    out_ = Linear<Real>(&params_, "dec.out", cfg_.dec_units + e, cfg_.vocab);
    ctc_ = Linear<Real>(&params_, "ctc", e, cfg_.vocab);
  }

  void InitParams(uint64_t seed) {
    params_.InitUniform(seed);
    for (EncLayer &l : enc_layers_) {
      l.fwd.SetForgetBias(Real(1));
      l.bwd.SetForgetBias(Real(1));
    }
    dec_lstm_.SetForgetBias(Real(1));
  }

  ParamStore<Real> &params() { return params_; }
  const ModelConfig &config() const { return cfg_; }
  int64_t eos() const { return cfg_.vocab - 1; }
  int64_t sos() const { return cfg_.vocab - 1; }

  // x: [T, D] -> [T', E].
  Var<Real> Encode(Binder<Real> &bind, Var<Real> x) const {
    ASRKIT_CHECK(x.shape().size() == 2 &&
                     x.shape()[1] == cfg_.encoder.input_dim,
                 ShapeError, "encode: input must be [T, " <<
                     cfg_.encoder.input_dim << "]");
    int64_t t = x.shape()[0];
    ASRKIT_CHECK(t >= cfg_.encoder.TotalFactor(), DataError,
                 "encode: " << t << " frames, need at least "
                            << cfg_.encoder.TotalFactor()
                            << " for the subsampling stack");
    if (cfg_.encoder.kind == "vggblstm") {
      int64_t d = cfg_.encoder.input_dim;
      Var<Real> img = Reshape(x, {1, t, d});
      img = Relu(Conv2d(img, bind(conv_[0].w), bind(conv_[0].b),
                        1, 1, 1, 1, 1, 1));
      img = Relu(Conv2d(img, bind(conv_[1].w), bind(conv_[1].b),
                        1, 1, 1, 1, 1, 1));
      img = Maxpool2d(img, 2, 2, 2, 2);
      img = Relu(Conv2d(img, bind(conv_[2].w), bind(conv_[2].b),
                        1, 1, 1, 1, 1, 1));
      img = Relu(Conv2d(img, bind(conv_[3].w), bind(conv_[3].b),
                        1, 1, 1, 1, 1, 1));
      img = Maxpool2d(img, 2, 2, 2, 2);
      int64_t t2 = t / 2 / 2, d2 = d / 2 / 2;
      img = Reshape(img, {128, t2 * d2});
      img = Transpose(img);
      x = Reshape(img, {t2, d2 * 128});
      t = t2;
    }
    for (size_t l = 0; l < enc_layers_.size(); ++l) {
      Var<Real> fwd = enc_layers_[l].fwd.Seq(bind, x, false);
      Var<Real> bwd = enc_layers_[l].bwd.Seq(bind, x, true);
      Var<Real> proj =
          Tanh(enc_layers_[l].proj.Apply(bind, Concat(fwd, bwd, 1)));
      int64_t s = cfg_.encoder.subsample[l];
      if (s > 1) {
        std::vector<int64_t> keep;
        for (int64_t i = 0; i < t; i += s) keep.push_back(i);
        proj = EmbeddingLookup(proj, keep);
        t = static_cast<int64_t>(keep.size());
      }
      x = proj;
    }
    return x;
  }

  // Per-utterance attention precomputation: the projected encoder states are
  // shared by every decoder step.
  struct AttCache {
    Var<Real> h;
    Var<Real> enc_proj;
    int64_t frames = 0;
  };

  AttCache PrepareAttention(Binder<Real> &bind, Var<Real> h) const {
    ASRKIT_CHECK(h.shape().size() == 2 &&
                     h.shape()[1] == cfg_.encoder.OutputDim(),
                 ShapeError, "attend: encoder output must be [T', E]");
    AttCache c;
    c.h = h;
    c.frames = h.shape()[0];
    const Tensor<Real> *w =
        cfg_.attention.kind == "location" ? att_enc_w_ : att_h_w_;
    c.enc_proj = Matmul(h, bind(w));
    return c;
  }

  // query: [1, dec_units]; prev_w: [1, T'] -> (context [1, E], weights
  // [1, T']). The location kind convolves prev_w with K learned filters and
  // feeds the result into the score MLP; the dot kind ignores prev_w.
  std::pair<Var<Real>, Var<Real>> Attend(Binder<Real> &bind,
                                         const AttCache &cache,
                                         Var<Real> query,
                                         Var<Real> prev_w) const {
    int64_t tq = cache.frames;
    Var<Real> weights;
    if (cfg_.attention.kind == "location") {
      ASRKIT_CHECK(prev_w.shape() == std::vector<int64_t>({1, tq}),
                   ShapeError, "attend: prev weights must be [1, T']");
      const Tensor<Real> &pw = prev_w.value();
      Real sum = Real(0);
      for (int64_t i = 0; i < tq; ++i) {
        ASRKIT_CHECK(pw[i] >= Real(-1e-6), ContractError,
                     "attend: previous weights must be nonnegative");
        sum += pw[i];
      }
      ASRKIT_CHECK(std::abs(static_cast<double>(sum) - 1.0) <= 1e-5,
                   ContractError,
                   "attend: previous weights sum to " << sum << ", not 1");
      int64_t w = cfg_.attention.conv_width;
      Var<Real> a_img = Reshape(prev_w, {1, 1, tq});
      Var<Real> conv = Conv2d(a_img, bind(att_conv_w_), bind(att_conv_b_), 1,
                              1, 0, 0, (w - 1) / 2, w / 2);
      Var<Real> f = Transpose(
          Reshape(conv, {cfg_.attention.conv_filters, tq}));
      Var<Real> pre = Add(cache.enc_proj, Matmul(f, bind(att_conv_proj_w_)));
      Var<Real> dproj = Reshape(Matmul(query, bind(att_dec_w_)),
                                {cfg_.attention.dim});
      pre = Add(Add(pre, dproj), bind(att_bias_));
      Var<Real> scores = Matmul(Tanh(pre), bind(att_g_));
      weights = Softmax(Transpose(scores));
    } else {
      Var<Real> qproj = Matmul(query, bind(att_q_w_));
      weights = Softmax(Matmul(qproj, Transpose(cache.enc_proj)));
    }
    Var<Real> context = Matmul(weights, cache.h);
    return {context, weights};
  }

  struct DecState {
    Var<Real> h, c, context, att_w;
  };

  DecState InitState(Binder<Real> &bind, const AttCache &cache) const {
    Tape<Real> &tape = bind.tape();
    DecState s;
    s.h = tape.Constant(Tensor<Real>({1, cfg_.dec_units}));
    s.c = tape.Constant(Tensor<Real>({1, cfg_.dec_units}));
    s.context = tape.Constant(Tensor<Real>({1, cfg_.encoder.OutputDim()}));
    s.att_w = tape.Constant(Tensor<Real>::Full(
        {1, cache.frames}, Real(1) / static_cast<Real>(cache.frames)));
    return s;
  }

  // One teacher-forced or search step: logits [1, V] for the next symbol.
  Var<Real> DecoderStep(Binder<Real> &bind, const AttCache &cache,
                        int64_t prev_token, DecState *state) const {
    ASRKIT_CHECK(0 <= prev_token && prev_token < cfg_.vocab, ContractError,
                 "decoder_step: token " << prev_token << " outside vocabulary "
                                        << cfg_.vocab);
    Var<Real> emb = embed_.Apply(bind, {prev_token});
    Var<Real> xin = Concat(emb, state->context, 1);
    auto hc = dec_lstm_.Step(bind, xin, state->h, state->c);
    auto cw = Attend(bind, cache, hc.first, state->att_w);
    Var<Real> logits = out_.Apply(bind, Concat(hc.first, cw.first, 1));
    state->h = hc.first;
    state->c = hc.second;
    state->context = cw.first;
    state->att_w = cw.second;
    return logits;
  }

  // Teacher-forced mean cross entropy over the L+1 steps (targets then eos)
  // against (1-w)*onehot + w*unigram.
  Var<Real> AttentionLoss(Binder<Real> &bind, Var<Real> henc,
                          const std::vector<int64_t> &target, Real smoothing,
                          const Tensor<Real> &unigram) const {
    ASRKIT_CHECK(!target.empty(), ContractError,
                 "attention loss: empty target");
    for (int64_t y : target) {
      ASRKIT_CHECK(0 < y && y < eos(), ContractError,
                   "attention loss: target id " << y
                                                << " is blank, eos or out of "
                                                   "range");
    }
    ASRKIT_CHECK(unigram.rank() == 1 && unigram.dim(0) == cfg_.vocab,
                 ShapeError, "attention loss: unigram must be [V]");
    Real usum = Real(0);
    for (int64_t v = 0; v < cfg_.vocab; ++v) {
      ASRKIT_CHECK(unigram[v] >= Real(0), ContractError,
                   "attention loss: unigram has negative mass");
      usum += unigram[v];
    }
    ASRKIT_CHECK(std::abs(static_cast<double>(usum) - 1.0) <= 1e-6,
                 ContractError,
                 "attention loss: unigram sums to " << usum << ", not 1");
    AttCache cache = PrepareAttention(bind, henc);
    DecState st = InitState(bind, cache);
    int64_t steps = static_cast<int64_t>(target.size()) + 1;
    Var<Real> total;
    for (int64_t n = 0; n < steps; ++n) {
      int64_t prev = n == 0 ? sos() : target[static_cast<size_t>(n - 1)];
      int64_t want = n < steps - 1 ? target[static_cast<size_t>(n)] : eos();
      Var<Real> logp = LogSoftmax(DecoderStep(bind, cache, prev, &st));
      Tensor<Real> q({1, cfg_.vocab});
      for (int64_t v = 0; v < cfg_.vocab; ++v) q[v] = smoothing * unigram[v];
      q[want] += Real(1) - smoothing;
      Var<Real> ce =
          Scale(ReduceSum(Mul(logp, bind.tape().Constant(q))), -1.0);
      total = n == 0 ? ce : Add(total, ce);
    }
    return Scale(total, 1.0 / static_cast<double>(steps));
  }

  // [T', E] -> [T', V] pre-softmax frame logits for the CTC branch.
  Var<Real> CtcLogits(Binder<Real> &bind, Var<Real> henc) const {
    return ctc_.Apply(bind, henc);
  }

 private:
  struct EncLayer {
    LstmParams<Real> fwd, bwd;
    Linear<Real> proj;
  };
  struct ConvPair {
    Tensor<Real> *w = nullptr;
    Tensor<Real> *b = nullptr;
  };

  ModelConfig cfg_;
  ParamStore<Real> params_;
  ConvPair conv_[4];
  std::vector<EncLayer> enc_layers_;
  Tensor<Real> *att_enc_w_ = nullptr;
  Tensor<Real> *att_dec_w_ = nullptr;
  Tensor<Real> *att_conv_w_ = nullptr;
  Tensor<Real> *att_conv_b_ = nullptr;
  Tensor<Real> *att_conv_proj_w_ = nullptr;
  Tensor<Real> *att_bias_ = nullptr;
  Tensor<Real> *att_g_ = nullptr;
  Tensor<Real> *att_q_w_ = nullptr;
  Tensor<Real> *att_h_w_ = nullptr;
  Embedding<Real> embed_;
  LstmParams<Real> dec_lstm_;
  Linear<Real> out_;
  Linear<Real> ctc_;
};

}  // namespace asrkit

#endif  // ASRKIT_MODEL_HPP_
