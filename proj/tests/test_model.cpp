// tests/test_model.cpp

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

#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <filesystem>

#include "asrkit/checkpoint.hpp"
#include "asrkit/ctc.hpp"
#include "asrkit/grad_check.hpp"
#include "asrkit/model.hpp"
#include "testing.hpp"

using namespace asrkit;
namespace fs = std::filesystem;
using asrkit::testing::MaxParamGradError;
using asrkit::testing::RandT;
using asrkit::testing::SampleCoords;
using asrkit::testing::TempDir;

namespace {

ModelConfig TinyConfig(const std::string &enc_kind = "blstmp",
                       const std::string &att_kind = "location") {
  ModelConfig cfg;
  cfg.encoder.kind = enc_kind;
  cfg.encoder.num_layers = 2;
  cfg.encoder.units = 5;
  cfg.encoder.projection = 6;
  cfg.encoder.subsample = enc_kind == "blstmp" ? std::vector<int64_t>{1, 2}
                                               : std::vector<int64_t>{1, 1};
  cfg.encoder.input_dim = 7;
  cfg.attention.kind = att_kind;
  cfg.attention.dim = 4;
  cfg.attention.conv_filters = 3;
  cfg.attention.conv_width = 5;
  cfg.dec_units = 5;
  cfg.dec_embed = 4;
  cfg.vocab = 6;
  return cfg;
}

Tensor<double> UniformNonBlank(int64_t v) {
  Tensor<double> u({v});
  for (int64_t i = 1; i < v; ++i) u[i] = 1.0 / static_cast<double>(v - 1);
  return u;
}

}  // namespace

TEST_CASE("encoder output length follows the per-layer keep-every-s rule") {
  EncoderConfig e;
  REQUIRE(e.OutputLength(16) == 4);
  REQUIRE(e.OutputLength(17) == 5);
  REQUIRE(e.TotalFactor() == 4);

  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    EncoderConfig c;
    c.num_layers = 1 + static_cast<int>(rng.RandInt(4));
    c.subsample.clear();
    for (int l = 0; l < c.num_layers; ++l) {
      c.subsample.push_back(1 + static_cast<int64_t>(rng.RandInt(3)));
    }
    int64_t t = 1 + static_cast<int64_t>(rng.RandInt(50));
    int64_t expect = t;
    for (int64_t s : c.subsample) {
      int64_t kept = 0;
      for (int64_t i = 0; i < expect; i += s) ++kept;
      expect = kept;
    }
    REQUIRE(c.OutputLength(t) == expect);
  }
}

TEST_CASE("encode matches the schedule on a real model") {
  ModelConfig cfg = TinyConfig();
  cfg.encoder.num_layers = 4;
  cfg.encoder.subsample = {1, 2, 2, 1};
  cfg.encoder.units = 3;
  cfg.encoder.projection = 3;
  AsrModel<double> model(cfg);
  model.InitParams(11);
  Rng rng(2);
  for (int64_t t : {16, 17, 23}) {
    Tape<double> tape;
    Binder<double> bind(&tape, false);
    Var<double> h = model.Encode(
        bind, tape.Constant(RandT({t, cfg.encoder.input_dim}, &rng)));
    REQUIRE(h.shape()[0] == cfg.encoder.OutputLength(t));
    REQUIRE(h.shape()[1] == cfg.encoder.OutputDim());
    REQUIRE(h.value().AllFinite());
  }
  SECTION("too few frames for the stack") {
    Tape<double> tape;
    Binder<double> bind(&tape, false);
    REQUIRE_THROWS_AS(
        model.Encode(bind,
                     tape.Constant(RandT({3, cfg.encoder.input_dim}, &rng))),
        DataError);
  }
}

TEST_CASE("zero parameters and zero input give a zero encoder output") {
  ModelConfig cfg = TinyConfig();
  AsrModel<double> model(cfg);
  Tape<double> tape;
  Binder<double> bind(&tape, false);
  Var<double> h =
      model.Encode(bind, tape.Constant(Tensor<double>({10, 7})));
  for (int64_t i = 0; i < h.value().numel(); ++i) {
    REQUIRE(h.value()[i] == 0.0);
  }
}

TEST_CASE("vgg front end pools twice and feeds the recurrent stack") {
  ModelConfig cfg = TinyConfig("vggblstm");
  REQUIRE(cfg.encoder.LstmInputDim() == 128 * (7 / 4));
  AsrModel<double> model(cfg);
  model.InitParams(7);
  Rng rng(3);
  Tape<double> tape;
  Binder<double> bind(&tape, false);
  Var<double> h = model.Encode(bind, tape.Constant(RandT({9, 7}, &rng)));
  REQUIRE(h.shape() == std::vector<int64_t>{2, 6});
  REQUIRE(h.value().AllFinite());
  REQUIRE(cfg.encoder.OutputLength(9) == 2);
}

TEST_CASE("attention over a single frame is the identity") {
  for (const char *kind : {"location", "dot"}) {
    ModelConfig cfg = TinyConfig("blstmp", kind);
    AsrModel<double> model(cfg);
    model.InitParams(13);
    Rng rng(4);
    Tape<double> tape;
    Binder<double> bind(&tape, false);
    Var<double> h = tape.Constant(RandT({1, 6}, &rng));
    auto cache = model.PrepareAttention(bind, h);
    Var<double> q = tape.Constant(RandT({1, 5}, &rng));
    Var<double> w0 = tape.Constant(Tensor<double>::Full({1, 1}, 1.0));
    auto cw = model.Attend(bind, cache, q, w0);
    REQUIRE(cw.second.value()[0] == Catch::Approx(1.0).margin(1e-12));
    for (int64_t i = 0; i < 6; ++i) {
      REQUIRE(cw.first.value()[i] ==
              Catch::Approx(h.value()[i]).margin(1e-12));
    }
  }
}

TEST_CASE("dot attention with equal scores is uniform") {
  ModelConfig cfg = TinyConfig("blstmp", "dot");
  AsrModel<double> model(cfg);
  model.InitParams(17);
  Rng rng(6);
  Tape<double> tape;
  Binder<double> bind(&tape, false);
  int64_t tq = 7;
  auto cache = model.PrepareAttention(bind, tape.Constant(RandT({tq, 6},
                                                                &rng)));
  Var<double> q = tape.Constant(Tensor<double>({1, 5}));
  Var<double> w0 =
      tape.Constant(Tensor<double>::Full({1, tq}, 1.0 / tq));
  auto cw = model.Attend(bind, cache, q, w0);
  for (int64_t i = 0; i < tq; ++i) {
    REQUIRE(cw.second.value()[i] ==
            Catch::Approx(1.0 / tq).margin(1e-12));
  }
}

TEST_CASE("location attention rejects a non-distribution history") {
  ModelConfig cfg = TinyConfig();
  AsrModel<double> model(cfg);
  model.InitParams(19);
  Rng rng(8);
  Tape<double> tape;
  Binder<double> bind(&tape, false);
  auto cache = model.PrepareAttention(bind, tape.Constant(RandT({4, 6},
                                                                &rng)));
  Var<double> q = tape.Constant(RandT({1, 5}, &rng));
  Var<double> bad = tape.Constant(Tensor<double>::Full({1, 4}, 0.5));
  REQUIRE_THROWS_AS(model.Attend(bind, cache, q, bad), ContractError);
}

TEST_CASE("attention gradients match finite differences") {
  for (const char *kind : {"location", "dot"}) {
    ModelConfig cfg = TinyConfig("blstmp", kind);
    AsrModel<double> model(cfg);
    model.InitParams(23);
    Rng rng(9);
    int64_t tq = 5;
    Tensor<double> query = RandT({1, 5}, &rng);
    Tensor<double> h0 = RandT({tq, 6}, &rng);
    Tensor<double> cw_ctx = RandT({1, 6}, &rng, 0.5, 1.5);
    Tensor<double> cw_w = RandT({1, tq}, &rng, 0.5, 1.5);
    auto build = [&](Tape<double> &tape, Var<double> x) {
      Binder<double> bind(&tape, false);
      auto cache = model.PrepareAttention(bind, x);
      Var<double> q = tape.Constant(query);
      Var<double> w0 =
          tape.Constant(Tensor<double>::Full({1, tq}, 1.0 / tq));
      auto cw = model.Attend(bind, cache, q, w0);
      return Add(ReduceSum(Mul(cw.first, tape.Constant(cw_ctx))),
                 ReduceSum(Mul(cw.second, tape.Constant(cw_w))));
    };
    REQUIRE(GradCheck(build, h0) <= 1e-6);

    Tensor<double> feats = RandT({tq, 6}, &rng);
    std::vector<std::string> names =
        std::string(kind) == "location"
            ? std::vector<std::string>{"att.enc.w", "att.dec.w", "att.conv.w",
                                       "att.conv.b", "att.conv.proj.w",
                                       "att.bias", "att.g"}
            : std::vector<std::string>{"att.q.w", "att.h.w"};
    auto coords = SampleCoords(&model.params(), names, 5, &rng);
    auto pbuild = [&](Binder<double> &bind) {
      Tape<double> &tape = bind.tape();
      auto cache = model.PrepareAttention(bind, tape.Constant(feats));
      Var<double> q = tape.Constant(query);
      Var<double> w0 =
          tape.Constant(Tensor<double>::Full({1, tq}, 1.0 / tq));
      auto cw = model.Attend(bind, cache, q, w0);
      return Add(ReduceSum(Mul(cw.first, tape.Constant(cw_ctx))),
                 ReduceSum(Mul(cw.second, tape.Constant(cw_w))));
    };
    REQUIRE(MaxParamGradError(&model.params(), pbuild, coords) <= 1e-6);
  }
}

TEST_CASE("decoder step emits a distribution and is deterministic") {
  ModelConfig cfg = TinyConfig();
  AsrModel<double> model(cfg);
  model.InitParams(29);
  Rng rng(10);
  Tape<double> tape;
  Binder<double> bind(&tape, false);
  auto cache = model.PrepareAttention(
      bind, model.Encode(bind, tape.Constant(RandT({8, 7}, &rng))));

  auto st1 = model.InitState(bind, cache);
  Var<double> logits1 = model.DecoderStep(bind, cache, model.sos(), &st1);
  Var<double> p = Softmax(logits1);
  double sum = 0.0;
  for (int64_t i = 0; i < cfg.vocab; ++i) sum += p.value()[i];
  REQUIRE(std::abs(sum - 1.0) <= 1e-12);

  auto st2 = model.InitState(bind, cache);
  Var<double> logits2 = model.DecoderStep(bind, cache, model.sos(), &st2);
  REQUIRE(logits1.value().storage() == logits2.value().storage());

  auto st3 = model.InitState(bind, cache);
  REQUIRE_THROWS_AS(model.DecoderStep(bind, cache, cfg.vocab, &st3),
                    ContractError);
  REQUIRE_THROWS_AS(model.DecoderStep(bind, cache, -1, &st3), ContractError);
}

TEST_CASE("attention weights stay distributions across decode steps") {
  ModelConfig cfg = TinyConfig();
  AsrModel<double> model(cfg);
  model.InitParams(31);
  Rng rng(12);
  Tape<double> tape;
  Binder<double> bind(&tape, false);
  Var<double> h = model.Encode(bind, tape.Constant(RandT({10, 7}, &rng)));
  auto cache = model.PrepareAttention(bind, h);
  auto st = model.InitState(bind, cache);
  int64_t tq = h.shape()[0];
  int64_t prev = model.sos();
  for (int step = 0; step < 4; ++step) {
    model.DecoderStep(bind, cache, prev, &st);
    const Tensor<double> &w = st.att_w.value();
    REQUIRE(w.shape() == std::vector<int64_t>{1, tq});
    double sum = 0.0;
    for (int64_t i = 0; i < tq; ++i) {
      REQUIRE(w[i] >= 0.0);
      sum += w[i];
    }
    REQUIRE(std::abs(sum - 1.0) <= 1e-6);
    prev = 1 + static_cast<int64_t>(step % (cfg.vocab - 2));
  }
}

TEST_CASE("teacher-forced probabilities reproduce the unsmoothed loss") {
  ModelConfig cfg = TinyConfig();
  AsrModel<double> model(cfg);
  model.InitParams(37);
  Rng rng(14);
  Tensor<double> feats = RandT({8, 7}, &rng);
  std::vector<int64_t> target = {2, 4, 3};

  Tape<double> tape;
  Binder<double> bind(&tape, false);
  Var<double> h = model.Encode(bind, tape.Constant(feats));
  Var<double> loss = model.AttentionLoss(bind, h, target, 0.0,
                                         UniformNonBlank(cfg.vocab));

  Tape<double> tape2;
  Binder<double> bind2(&tape2, false);
  Var<double> h2 = model.Encode(bind2, tape2.Constant(feats));
  auto cache = model.PrepareAttention(bind2, h2);
  auto st = model.InitState(bind2, cache);
  double log_prod = 0.0;
  for (size_t n = 0; n <= target.size(); ++n) {
    int64_t prev = n == 0 ? model.sos() : target[n - 1];
    int64_t want = n < target.size() ? target[n] : model.eos();
    Var<double> logp =
        LogSoftmax(model.DecoderStep(bind2, cache, prev, &st));
    log_prod += logp.value()[want];
  }
  double steps = static_cast<double>(target.size()) + 1.0;
  REQUIRE(std::exp(log_prod) ==
          Catch::Approx(std::exp(-loss.value()[0] * steps)).epsilon(1e-9));
}

TEST_CASE("full smoothing with uniform logits costs log V") {
  ModelConfig cfg = TinyConfig();
  AsrModel<double> model(cfg);
  Rng rng(15);
  Tape<double> tape;
  Binder<double> bind(&tape, false);
  Var<double> h = model.Encode(bind, tape.Constant(RandT({8, 7}, &rng)));
  Var<double> loss = model.AttentionLoss(bind, h, {2, 3}, 1.0,
                                         UniformNonBlank(cfg.vocab));
  REQUIRE(loss.value()[0] ==
          Catch::Approx(std::log(static_cast<double>(cfg.vocab)))
              .margin(1e-12));
}

TEST_CASE("attention loss rejects broken inputs") {
  ModelConfig cfg = TinyConfig();
  AsrModel<double> model(cfg);
  model.InitParams(41);
  Rng rng(16);
  Tape<double> tape;
  Binder<double> bind(&tape, false);
  Var<double> h = model.Encode(bind, tape.Constant(RandT({8, 7}, &rng)));
  Tensor<double> uni = UniformNonBlank(cfg.vocab);
  REQUIRE_THROWS_AS(model.AttentionLoss(bind, h, {}, 0.0, uni),
                    ContractError);
  REQUIRE_THROWS_AS(model.AttentionLoss(bind, h, {0, 2}, 0.0, uni),
                    ContractError);
  REQUIRE_THROWS_AS(model.AttentionLoss(bind, h, {2, model.eos()}, 0.0, uni),
                    ContractError);
  Tensor<double> bad = UniformNonBlank(cfg.vocab);
  bad[2] += 0.5;
  REQUIRE_THROWS_AS(model.AttentionLoss(bind, h, {2}, 0.05, bad),
                    ContractError);
}

TEST_CASE("encoder and decoder gradients match finite differences") {
  Rng rng(18);
  SECTION("recurrent encoder, input side") {
    ModelConfig cfg = TinyConfig();
    AsrModel<double> model(cfg);
    model.InitParams(43);
    Tensor<double> w = RandT({4, 6}, &rng, 0.5, 1.5);
    auto build = [&](Tape<double> &tape, Var<double> x) {
      Binder<double> bind(&tape, false);
      return ReduceSum(Mul(model.Encode(bind, x), tape.Constant(w)));
    };
    REQUIRE(GradCheck(build, RandT({7, 7}, &rng)) <= 1e-6);
  }
  SECTION("recurrent encoder, parameter side") {
    ModelConfig cfg = TinyConfig();
    AsrModel<double> model(cfg);
    model.InitParams(47);
    Tensor<double> feats = RandT({7, 7}, &rng);
    Tensor<double> w = RandT({4, 6}, &rng, 0.5, 1.5);
    auto coords = SampleCoords(
        &model.params(),
        {"enc.l0.fwd.wx", "enc.l0.bwd.wh", "enc.l0.proj.w", "enc.l1.fwd.b",
         "enc.l1.proj.b"},
        5, &rng);
    auto build = [&](Binder<double> &bind) {
      Tape<double> &tape = bind.tape();
      return ReduceSum(
          Mul(model.Encode(bind, tape.Constant(feats)), tape.Constant(w)));
    };
    REQUIRE(MaxParamGradError(&model.params(), build, coords) <= 1e-6);
  }
  SECTION("vgg encoder, parameter side") {
    ModelConfig cfg = TinyConfig("vggblstm");
    cfg.encoder.input_dim = 4;
    AsrModel<double> model(cfg);
    model.InitParams(53);
    Tensor<double> feats = RandT({8, 4}, &rng);
    Tensor<double> w = RandT({2, 6}, &rng, 0.5, 1.5);
    auto coords = SampleCoords(
        &model.params(),
        {"enc.vgg.conv1_1.w", "enc.vgg.conv1_2.b", "enc.vgg.conv2_1.w",
         "enc.vgg.conv2_2.w", "enc.l0.fwd.wx"},
        4, &rng);
    auto build = [&](Binder<double> &bind) {
      Tape<double> &tape = bind.tape();
      return ReduceSum(
          Mul(model.Encode(bind, tape.Constant(feats)), tape.Constant(w)));
    };
    // Small step: the relu/maxpool path is piecewise linear and a wide
    // finite-difference interval can straddle a kink.
    REQUIRE(MaxParamGradError(&model.params(), build, coords, 1e-5) <= 1e-6);
  }
  SECTION("teacher-forced decoder, with and without smoothing") {
    for (double smooth : {0.0, 0.05}) {
      for (const char *kind : {"location", "dot"}) {
        ModelConfig cfg = TinyConfig("blstmp", kind);
        AsrModel<double> model(cfg);
        model.InitParams(59);
        Tensor<double> feats = RandT({7, 7}, &rng);
        Tensor<double> uni = UniformNonBlank(cfg.vocab);
        std::vector<int64_t> target = {2, 4};
        auto coords = SampleCoords(
            &model.params(),
            {"dec.embed.table", "dec.lstm.wx", "dec.lstm.wh", "dec.out.w",
             "dec.out.b", "enc.l0.fwd.wx"},
            4, &rng);
        auto build = [&](Binder<double> &bind) {
          Var<double> h = model.Encode(bind, bind.tape().Constant(feats));
          return model.AttentionLoss(bind, h, target, smooth, uni);
        };
        REQUIRE(MaxParamGradError(&model.params(), build, coords) <= 1e-6);
      }
    }
  }
}

TEST_CASE("losses stay finite on random inputs") {
  ModelConfig cfg = TinyConfig();
  AsrModel<double> model(cfg);
  model.InitParams(61);
  Rng rng(20);
  for (int trial = 0; trial < 5; ++trial) {
    int64_t t = 6 + static_cast<int64_t>(rng.RandInt(10));
    Tape<double> tape;
    Binder<double> bind(&tape, false);
    Var<double> h = model.Encode(bind, tape.Constant(RandT({t, 7}, &rng)));
    Var<double> att = model.AttentionLoss(bind, h, {2, 3, 4}, 0.05,
                                          UniformNonBlank(cfg.vocab));
    Var<double> ctc = CtcLoss(model.CtcLogits(bind, h), {2, 3, 4});
    REQUIRE(std::isfinite(att.value()[0]));
    REQUIRE(std::isfinite(ctc.value()[0]));
  }
}

TEST_CASE("checkpoints round-trip tensors bitwise") {
  fs::path d = TempDir("ckpt");
  ModelConfig cfg = TinyConfig();
  AsrModel<double> model(cfg);
  model.InitParams(67);
  SaveCheckpoint(model.params(), d / "m.bin", "asr", 12345u);

  CheckpointInfo peek = PeekCheckpoint(d / "m.bin");
  REQUIRE(peek.model_type == "asr");
  REQUIRE(peek.precision == "double");
  REQUIRE(peek.token_checksum == 12345u);

  AsrModel<double> other(cfg);
  CheckpointInfo info = LoadCheckpoint(d / "m.bin", &other.params());
  REQUIRE(info.model_type == "asr");
  model.params().ForEach([&](const std::string &name,
                             const Tensor<double> &t) {
    Tensor<double> *o = other.params().Find(name);
    REQUIRE(o != nullptr);
    REQUIRE(o->storage() == t.storage());
  });

  SECTION("precision mismatch") {
    ParamStore<float> fstore;
    REQUIRE_THROWS_AS(LoadCheckpoint(d / "m.bin", &fstore), DataError);
  }
  SECTION("shape mismatch") {
    ModelConfig big = cfg;
    big.dec_units = 9;
    AsrModel<double> wrong(big);
    REQUIRE_THROWS_AS(LoadCheckpoint(d / "m.bin", &wrong.params()),
                      DataError);
  }
  SECTION("bad magic") {
    asrkit::testing::WriteFile(d / "junk.bin", "NOTACKPTxxxxxxxxxxxx");
    ParamStore<double> s;
    REQUIRE_THROWS_AS(LoadCheckpoint(d / "junk.bin", &s), DataError);
  }
  SECTION("truncated buffers") {
    std::string whole = asrkit::testing::ReadFile(d / "m.bin");
    asrkit::testing::WriteFile(d / "cut.bin",
                               whole.substr(0, whole.size() - 17));
    ParamStore<double> s;
    REQUIRE_THROWS_AS(LoadCheckpoint(d / "cut.bin", &s), DataError);
  }
  fs::remove_all(d);
}
