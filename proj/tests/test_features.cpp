// tests/test_features.cpp

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

#include "asrkit/features.hpp"
#include "asrkit/wav.hpp"
#include "testing.hpp"

using namespace asrkit;
namespace fs = std::filesystem;
using asrkit::testing::TempDir;
using asrkit::testing::WriteFile;

namespace {

std::vector<double> Sine(double freq_hz, int sample_rate, int num_samples,
                         double amp = 0.5) {
  std::vector<double> s(static_cast<size_t>(num_samples));
  for (int i = 0; i < num_samples; ++i) {
    s[static_cast<size_t>(i)] =
        amp * std::sin(2.0 * M_PI * freq_hz * i / sample_rate);
  }
  return s;
}

}  // namespace

TEST_CASE("all-zero frame hits the log floor exactly") {
  FbankConfig cfg;
  Tensor<double> m = Logmel(std::vector<double>(400, 0.0), cfg);
  REQUIRE(m.shape() == std::vector<int64_t>{1, 80});
  for (int64_t i = 0; i < m.numel(); ++i) {
    REQUIRE(m[i] == std::log(1e-10));
  }
}

TEST_CASE("frame count follows the shift formula") {
  FbankConfig cfg;
  REQUIRE(cfg.NumFrames(399) == 0);
  REQUIRE(cfg.NumFrames(400) == 1);
  REQUIRE(cfg.NumFrames(559) == 1);
  REQUIRE(cfg.NumFrames(560) == 2);
  Tensor<double> m = Logmel(std::vector<double>(560, 0.0), cfg);
  REQUIRE(m.dim(0) == 2);

  Rng rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    int64_t n = 400 + static_cast<int64_t>(rng.RandInt(39601));
    int64_t expected = 1 + (n - 400) / 160;
    REQUIRE(cfg.NumFrames(n) == expected);
  }
  REQUIRE_THROWS_AS(Logmel(std::vector<double>(399, 0.0), cfg), DataError);
}

TEST_CASE("a pure tone peaks in the filter nearest its frequency") {
  FbankConfig cfg;
  double tone = 1000.0;
  Tensor<double> m = Logmel(Sine(tone, cfg.sample_rate, 1600), cfg);
  // Recompute the expected filter independently from the mel formulas.
  auto hz_to_mel = [](double hz) {
    return 2595.0 * std::log10(1.0 + hz / 700.0);
  };
  auto mel_to_hz = [](double mel) {
    return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
  };
  double lo = hz_to_mel(20.0);
  double hi = hz_to_mel(8000.0);
  int expected = 0;
  double best = 1e300;
  for (int i = 0; i < 80; ++i) {
    double center = mel_to_hz(lo + (hi - lo) * (i + 1) / 81.0);
    double d = std::abs(center - tone);
    if (d < best) {
      best = d;
      expected = i;
    }
  }
  MelFilterbank fb(cfg);
  REQUIRE(fb.centers_hz().size() == 80);
  int nearest = 0;
  double bestc = 1e300;
  for (int i = 0; i < 80; ++i) {
    double d = std::abs(fb.centers_hz()[static_cast<size_t>(i)] - tone);
    if (d < bestc) {
      bestc = d;
      nearest = i;
    }
  }
  REQUIRE(nearest == expected);
  for (int64_t fr = 0; fr < m.dim(0); ++fr) {
    int argmax = 0;
    for (int i = 1; i < 80; ++i) {
      if (m.at(fr, i) > m.at(fr, argmax)) argmax = i;
    }
    REQUIRE(std::abs(argmax - expected) <= 1);
  }
}

TEST_CASE("scaling the waveform shifts log energies additively") {
  FbankConfig cfg;
  Rng rng(11);
  std::vector<double> s(1600);
  for (double &v : s) v = rng.Uniform() - 0.5;
  double c = 3.0;
  std::vector<double> scaled(s);
  for (double &v : scaled) v *= c;
  Tensor<double> a = Logmel(s, cfg);
  Tensor<double> b = Logmel(scaled, cfg);
  REQUIRE(a.shape() == b.shape());
  for (int64_t i = 0; i < a.numel(); ++i) {
    if (a[i] > std::log(1e-10) + 1.0) {
      REQUIRE(std::abs(b[i] - (a[i] + 2.0 * std::log(c))) < 1e-9);
    }
  }
}

TEST_CASE("mel filters are nonnegative, nonempty and cover the band") {
  FbankConfig cfg;
  MelFilterbank fb(cfg);
  const Tensor<double> &w = fb.weights();
  REQUIRE(w.shape() == std::vector<int64_t>{80, 257});
  int bins = 257;
  double bin_hz = 16000.0 / 512.0;
  std::vector<double> colsum(static_cast<size_t>(bins), 0.0);
  for (int i = 0; i < 80; ++i) {
    double rowsum = 0.0;
    for (int k = 0; k < bins; ++k) {
      REQUIRE(w.at(i, k) >= 0.0);
      rowsum += w.at(i, k);
      colsum[static_cast<size_t>(k)] += w.at(i, k);
    }
    REQUIRE(rowsum > 0.0);
  }
  // Every bin strictly inside (edge_0, edge_last) gets nonzero total weight.
  double first_center = fb.centers_hz().front();
  double last_center = fb.centers_hz().back();
  for (int k = 0; k < bins; ++k) {
    double f = k * bin_hz;
    if (f > first_center && f < last_center) {
      REQUIRE(colsum[static_cast<size_t>(k)] > 0.0);
    }
  }
}

TEST_CASE("config validation rejects inconsistent settings") {
  FbankConfig cfg;
  cfg.fft_size = 300;
  REQUIRE_THROWS_AS(cfg.Validate(), ConfigError);
  cfg = FbankConfig();
  cfg.frame_shift = 500;
  REQUIRE_THROWS_AS(cfg.Validate(), ConfigError);
  cfg = FbankConfig();
  cfg.fmin = 9000.0;
  REQUIRE_THROWS_AS(cfg.Validate(), ConfigError);
}

TEST_CASE("extract_dir writes one archive row set per utterance") {
  fs::path d = TempDir("extract");
  fs::create_directories(d / "wavs");
  WriteWav(d / "wavs" / "a.wav", Sine(440, 16000, 800), 16000);
  WriteWav(d / "wavs" / "b.wav", Sine(880, 16000, 1200), 16000);
  WriteWav(d / "wavs" / "c.wav", Sine(220, 16000, 560), 16000);
  WriteFile(d / "text", "a HI\nb LO\nc MID\n");
  WriteFile(d / "utt2spk", "a s1\nb s1\nc s2\n");
  WriteFile(d / "wav.scp", "a " + (d / "wavs" / "a.wav").string() + "\n" +
                               "b " + (d / "wavs" / "b.wav").string() + "\n" +
                               "c " + (d / "wavs" / "c.wav").string() + "\n");
  DataDir dir = ParseDataDir(d);
  FbankConfig cfg;
  ExtractResult res = ExtractDir(dir, cfg, d / "feats.ark");
  REQUIRE(res.failures.empty());
  REQUIRE(res.index.size() == 3);
  REQUIRE(res.index.at("a").rows == cfg.NumFrames(800));
  REQUIRE(res.index.at("b").rows == cfg.NumFrames(1200));
  REQUIRE(res.index.at("c").rows == 2);
  auto ark = ReadTextArk(d / "feats.ark");
  REQUIRE(ark.size() == 3);
  for (const auto &kv : ark) {
    REQUIRE(kv.second.dim(1) == 80);
    REQUIRE(kv.second.AllFinite());
  }
  fs::remove_all(d);
}

TEST_CASE("extract_dir reports bad files per utterance and continues") {
  fs::path d = TempDir("extract_bad");
  fs::create_directories(d / "wavs");
  WriteWav(d / "wavs" / "good.wav", Sine(440, 16000, 800), 16000);
  WriteWav(d / "wavs" / "stereo.wav", Sine(440, 16000, 800), 16000,
           /*channels=*/2);
  WriteFile(d / "text", "good HI\nstereo LO\n");
  WriteFile(d / "utt2spk", "good s1\nstereo s1\n");
  WriteFile(d / "wav.scp",
            "good " + (d / "wavs" / "good.wav").string() + "\n" + "stereo " +
                (d / "wavs" / "stereo.wav").string() + "\n");
  DataDir dir = ParseDataDir(d);
  ExtractResult res = ExtractDir(dir, FbankConfig(), d / "feats.ark");
  REQUIRE(res.failures.size() == 1);
  REQUIRE(res.failures[0].utt_id == "stereo");
  REQUIRE(res.index.size() == 1);
  REQUIRE(res.index.count("good") == 1);
  fs::remove_all(d);
}

TEST_CASE("extract_dir requires a wav-backed directory") {
  fs::path d = TempDir("extract_feats_only");
  WriteFile(d / "text", "u1 A\n");
  WriteFile(d / "utt2spk", "u1 s\n");
  WriteFile(d / "feats.scp", "u1 x.ark\n");
  DataDir dir = ParseDataDir(d);
  REQUIRE_THROWS_AS(ExtractDir(dir, FbankConfig(), d / "f.ark"),
                    ContractError);
  fs::remove_all(d);
}
