// tests/test_train.cpp

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
#include <cstdio>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "asrkit/train.hpp"
#include "json.hpp"
#include "testing.hpp"

using namespace asrkit;
using asrkit::testing::ReadFile;
using asrkit::testing::TempDir;

namespace {

// Vocabulary: blank, a, b, c, eos.
constexpr int64_t kVocab = 5;

ModelConfig ToyModel() {
  ModelConfig cfg;
  cfg.encoder.kind = "blstmp";
  cfg.encoder.num_layers = 1;
  cfg.encoder.units = 3;
  cfg.encoder.projection = 3;
  cfg.encoder.subsample = {1};
  cfg.encoder.input_dim = 3;
  cfg.attention.kind = "dot";
  cfg.attention.dim = 3;
  cfg.dec_units = 3;
  cfg.dec_embed = 3;
  cfg.vocab = kVocab;
  return cfg;
}

// Writes a feature archive and builds the matching dataset records.
// Utterance u gets 4 + u % 3 frames and a 1- or 2-token transcript.
Dataset ToyDataset(const std::filesystem::path &dir, int64_t n_utts,
                   uint64_t seed) {
  Rng rng(seed);
  std::map<std::string, Tensor<double>> ark;
  Dataset ds;
  ds.vocab_size = kVocab;
  for (int64_t u = 0; u < n_utts; ++u) {
    char id[32];
    std::snprintf(id, sizeof(id), "utt%05lld", static_cast<long long>(u));
    int64_t frames = 4 + u % 3;
    Tensor<double> feats({frames, 3});
    for (auto &v : feats.storage()) v = rng.Uniform(-1.0, 1.0);
    ark.emplace(id, feats);
    UttRecord rec;
    rec.id = id;
    rec.feat_path = (dir / "feats.ark").string();
    rec.frames = frames;
    rec.dim = 3;
    rec.tokenids = {1 + static_cast<int64_t>(rng.RandInt(3))};
    if (u % 2 == 0) rec.tokenids.push_back(1 + static_cast<int64_t>(rng.RandInt(3)));
    rec.text = "x";
    ds.utts.push_back(std::move(rec));
  }
  WriteTextArk(ark, dir / "feats.ark");
  return ds;
}

std::vector<const TrainableUtt<double> *> Ptrs(
    const std::vector<TrainableUtt<double>> &utts) {
  std::vector<const TrainableUtt<double> *> out;
  for (const auto &tu : utts) out.push_back(&tu);
  return out;
}

}  // namespace

TEST_CASE("loss endpoints collapse to a single branch") {
  std::filesystem::path dir = TempDir("train_endpoints");
  Dataset ds = ToyDataset(dir, 6, 1);
  AsrModel<double> model(ToyModel());
  model.InitParams(3);
  auto utts = LoadUtterances<double>(ds);
  auto ptrs = Ptrs(utts);
  Tensor<double> unigram = UnigramOf<double>(ptrs, kVocab);

  LossBreakdown att_only = EvalBreakdown(model, ptrs, 0.0, 0.05, unigram);
  REQUIRE(att_only.L == att_only.L_att);
  LossBreakdown ctc_only = EvalBreakdown(model, ptrs, 1.0, 0.05, unigram);
  REQUIRE(ctc_only.L == ctc_only.L_ctc);
  LossBreakdown mixed = EvalBreakdown(model, ptrs, 0.5, 0.05, unigram);
  REQUIRE(mixed.L == 0.5 * mixed.L_ctc + 0.5 * mixed.L_att);
  REQUIRE(mixed.L_ctc == ctc_only.L_ctc);
  REQUIRE(mixed.L_att == att_only.L_att);
}

TEST_CASE("interpolation arithmetic") {
  LossBreakdown bd;
  bd.L_ctc = 2.0;
  bd.L_att = 4.0;
  double alpha = 0.5;
  REQUIRE(alpha * bd.L_ctc + (1.0 - alpha) * bd.L_att == 3.0);
}

TEST_CASE("batch loss equals the token-weighted mean of utterance losses") {
  std::filesystem::path dir = TempDir("train_batching");
  Dataset ds = ToyDataset(dir, 5, 2);
  AsrModel<double> model(ToyModel());
  model.InitParams(5);
  auto utts = LoadUtterances<double>(ds);
  auto ptrs = Ptrs(utts);
  Tensor<double> unigram = UnigramOf<double>(ptrs, kVocab);

  LossBreakdown whole = EvalBreakdown(model, ptrs, 0.4, 0.05, unigram);
  double num = 0.0;
  int64_t den = 0;
  for (const TrainableUtt<double> *tu : ptrs) {
    LossBreakdown one = EvalBreakdown(model, {tu}, 0.4, 0.05, unigram);
    num += one.L * static_cast<double>(one.tokens);
    den += one.tokens;
  }
  REQUIRE(whole.tokens == den);
  REQUIRE(whole.L == Catch::Approx(num / static_cast<double>(den))
                         .epsilon(1e-5));
}

TEST_CASE("gradient clipping caps the global norm") {
  GradMap<double> g;
  g.emplace("a", Tensor<double>::Full({2, 2}, 3.0));
  g.emplace("b", Tensor<double>::Full({3}, -4.0));
  double norm2 = 4.0 * 9.0 + 3.0 * 16.0;
  double pre = ClipGlobalNorm(&g, 1.0);
  REQUIRE(pre == Catch::Approx(std::sqrt(norm2)).epsilon(1e-12));
  double after = 0.0;
  for (const auto &kv : g) {
    for (double v : kv.second.storage()) after += v * v;
  }
  REQUIRE(std::sqrt(after) <= 1.0 + 1e-6);
  REQUIRE(std::sqrt(after) == Catch::Approx(1.0).epsilon(1e-9));

  GradMap<double> small;
  small.emplace("a", Tensor<double>::Full({2}, 0.01));
  Tensor<double> before = small.at("a");
  double pre2 = ClipGlobalNorm(&small, 1.0);
  REQUIRE(pre2 == Catch::Approx(std::sqrt(2.0) * 0.01).epsilon(1e-12));
  REQUIRE(small.at("a").storage() == before.storage());

  REQUIRE_THROWS_AS(ClipGlobalNorm(&small, 0.0), ConfigError);
}

TEST_CASE("adam step matches the hand computation") {
  ParamStore<double> store;
  Tensor<double> *p = store.Add("w", {1});
  (*p)[0] = 1.0;
  GradMap<double> g;
  g.emplace("w", Tensor<double>::Full({1}, 0.5));
  Adam<double> adam(0.1, 0.9, 0.999, 1e-8);
  adam.Step(&store, g);

  double m = 0.1 * 0.5;
  double v = 0.001 * 0.25;
  double mhat = m / (1.0 - 0.9);
  double vhat = v / (1.0 - 0.999);
  double want = 1.0 - 0.1 * mhat / (std::sqrt(vhat) + 1e-8);
  REQUIRE((*store.Find("w"))[0] == Catch::Approx(want).epsilon(1e-15));
  REQUIRE(adam.steps() == 1);

  GradMap<double> bad;
  bad.emplace("nope", Tensor<double>::Full({1}, 1.0));
  REQUIRE_THROWS_AS(adam.Step(&store, bad), ContractError);
  GradMap<double> wrong;
  wrong.emplace("w", Tensor<double>::Full({2}, 1.0));
  REQUIRE_THROWS_AS(adam.Step(&store, wrong), ShapeError);
}

TEST_CASE("optimizer step count follows the batch layout") {
  std::filesystem::path dir = TempDir("train_steps");
  Dataset ds = ToyDataset(dir, 500, 4);
  AsrModel<double> model(ToyModel());
  TrainConfig tc;
  tc.epochs = 1;
  tc.batch_size = 16;
  tc.val_fraction = 0.0;
  tc.seed = 2;
  FitResult res = Fit(&model, ds, tc, dir / "exp", 77);
  REQUIRE(res.train_utts == 500);
  REQUIRE(res.excluded == 0);
  REQUIRE(res.batches_per_epoch == 32);
  REQUIRE(res.optimizer_steps == 32);
  REQUIRE(res.val_metrics.empty());
  REQUIRE(std::filesystem::exists(res.checkpoint_path));
  CheckpointInfo info = PeekCheckpoint(res.checkpoint_path);
  REQUIRE(info.model_type == "asr");
  REQUIRE(info.token_checksum == 77);
}

TEST_CASE("training runs are reproducible") {
  std::filesystem::path dir = TempDir("train_repro");
  Dataset ds = ToyDataset(dir, 20, 6);
  TrainConfig tc;
  tc.epochs = 2;
  tc.batch_size = 4;
  tc.val_fraction = 0.2;
  tc.seed = 3;

  AsrModel<double> m1(ToyModel());
  FitResult r1 = Fit(&m1, ds, tc, dir / "exp1", 9);
  AsrModel<double> m2(ToyModel());
  FitResult r2 = Fit(&m2, ds, tc, dir / "exp2", 9);

  REQUIRE(ReadFile(r1.metrics_path) == ReadFile(r2.metrics_path));
  REQUIRE(ReadFile(r1.checkpoint_path) == ReadFile(r2.checkpoint_path));
  REQUIRE(r1.best_epoch == r2.best_epoch);
  REQUIRE(r1.val_utts >= 1);

  // Every metrics line satisfies the interpolation identity bitwise, and the
  // printed doubles round-trip exactly at 17 significant digits.
  std::istringstream lines(ReadFile(r1.metrics_path));
  std::string line;
  int64_t n_lines = 0;
  while (std::getline(lines, line)) {
    nlohmann::json j = nlohmann::json::parse(line);
    double L = j.at("L").get<double>();
    double ctc = j.at("L_ctc").get<double>();
    double att = j.at("L_att").get<double>();
    REQUIRE(L == tc.alpha * ctc + (1.0 - tc.alpha) * att);
    REQUIRE(j.at("epoch").get<int64_t>() >= 1);
    std::string split = j.at("split").get<std::string>();
    REQUIRE((split == "train" || split == "val"));
    ++n_lines;
  }
  REQUIRE(n_lines == 2 * tc.epochs);
}

TEST_CASE("non-finite losses abort training with a located error") {
  std::filesystem::path dir = TempDir("train_diverge");
  Dataset ds = ToyDataset(dir, 3, 8);
  // Poison one utterance's features.
  auto ark = ReadTextArk(dir / "feats.ark");
  ark.at("utt00001").storage()[0] = std::nan("");
  WriteTextArk(ark, dir / "feats.ark");

  AsrModel<double> model(ToyModel());
  TrainConfig tc;
  tc.epochs = 1;
  tc.batch_size = 3;
  tc.val_fraction = 0.0;
  REQUIRE_THROWS_MATCHES(
      Fit(&model, ds, tc, dir / "exp", 1), NumericError,
      Catch::Matchers::MessageMatches(
          Catch::Matchers::ContainsSubstring("epoch 1 batch 1") &&
          Catch::Matchers::ContainsSubstring("utt00001")));
}

TEST_CASE("infeasible utterances are excluded and counted") {
  std::filesystem::path dir = TempDir("train_excluded");
  Dataset ds = ToyDataset(dir, 6, 10);
  auto ark = ReadTextArk(dir / "feats.ark");

  // utt00000: target longer than CTC allows after subsampling.
  ds.utts[0].tokenids = {1, 1, 1, 1, 1, 1, 1, 1, 1, 1};
  // utt00001: empty target.
  ds.utts[1].tokenids.clear();
  // utt00002: out-of-vocabulary token.
  ds.utts[2].tokenids = {kVocab - 1};
  WriteTextArk(ark, dir / "feats.ark");

  AsrModel<double> model(ToyModel());
  TrainConfig tc;
  tc.epochs = 1;
  tc.batch_size = 4;
  tc.val_fraction = 0.0;
  FitResult res = Fit(&model, ds, tc, dir / "exp", 1);
  REQUIRE(res.excluded == 3);
  REQUIRE(res.train_utts == 3);
}

TEST_CASE("vocabulary mismatches are rejected") {
  std::filesystem::path dir = TempDir("train_vocab");
  Dataset ds = ToyDataset(dir, 2, 12);
  ds.vocab_size = kVocab + 1;
  AsrModel<double> model(ToyModel());
  TrainConfig tc;
  REQUIRE_THROWS_AS(Fit(&model, ds, tc, dir / "exp", 1), ConfigError);
}

TEST_CASE("utterance loading validates shapes against the manifest") {
  std::filesystem::path dir = TempDir("train_load");
  Dataset ds = ToyDataset(dir, 3, 14);
  ds.utts[1].frames += 1;
  REQUIRE_THROWS_AS(LoadUtterances<double>(ds), DataError);
  ds.utts[1].frames -= 1;
  ds.utts[2].dim = 9;
  REQUIRE_THROWS_AS(LoadUtterances<double>(ds), DataError);
  ds.utts[2].dim = 3;
  ds.utts[0].id = "missing";
  ds.utts[0].feat_path = (dir / "feats.ark").string();
  REQUIRE_THROWS_AS(LoadUtterances<double>(ds), DataError);
}

TEST_CASE("unigram smoothing distribution reflects token counts") {
  std::filesystem::path dir = TempDir("train_unigram");
  Dataset ds = ToyDataset(dir, 4, 16);
  ds.utts[0].tokenids = {1, 1, 2};
  ds.utts[1].tokenids = {1};
  ds.utts[2].tokenids = {3};
  ds.utts[3].tokenids = {2};
  auto utts = LoadUtterances<double>(ds);
  auto ptrs = Ptrs(utts);
  Tensor<double> u = UnigramOf<double>(ptrs, kVocab);
  // Counts: a=3, b=2, c=1, eos=4 (one per utterance), blank=0.
  double total = 10.0;
  REQUIRE(u[0] == 0.0);
  REQUIRE(u[1] == Catch::Approx(3.0 / total).epsilon(1e-12));
  REQUIRE(u[2] == Catch::Approx(2.0 / total).epsilon(1e-12));
  REQUIRE(u[3] == Catch::Approx(1.0 / total).epsilon(1e-12));
  REQUIRE(u[4] == Catch::Approx(4.0 / total).epsilon(1e-12));
}
