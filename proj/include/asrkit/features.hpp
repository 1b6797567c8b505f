// include/asrkit/features.hpp

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

#ifndef ASRKIT_FEATURES_HPP_
#define ASRKIT_FEATURES_HPP_

#include <cmath>
#include <complex>
#include <filesystem>
#include <string>
#include <vector>

#include "asrkit/common.hpp"
#include "asrkit/dataio.hpp"
#include "asrkit/tensor.hpp"
#include "asrkit/wav.hpp"

namespace asrkit {

// Log-Mel filterbank settings. The defaults are the 16 kHz / 25 ms / 10 ms
// convention with 80 filters; there is no pre-emphasis and no dither, the
// window is Hamming, and the log is natural with an absolute floor.
struct FbankConfig {
  int sample_rate = 16000;
  int frame_length = 400;
  int frame_shift = 160;
  int fft_size = 512;
  int num_mels = 80;
  double fmin = 20.0;
  double fmax = 0.0;  // 0 means sample_rate / 2
  double log_floor = 1e-10;

  double EffectiveFmax() const {
    return fmax > 0.0 ? fmax : sample_rate / 2.0;
  }

  void Validate() const {
    ASRKIT_CHECK(sample_rate > 0, ConfigError, "fbank: bad sample_rate");
    ASRKIT_CHECK(frame_shift > 0 && frame_shift <= frame_length &&
                     frame_length <= fft_size,
                 ConfigError,
                 "fbank: need frame_shift <= frame_length <= fft_size");
    ASRKIT_CHECK((fft_size & (fft_size - 1)) == 0, ConfigError,
                 "fbank: fft_size must be a power of two");
    ASRKIT_CHECK(num_mels >= 1, ConfigError, "fbank: num_mels must be >= 1");
    ASRKIT_CHECK(0.0 <= fmin && fmin < EffectiveFmax() &&
                     EffectiveFmax() <= sample_rate / 2.0,
                 ConfigError, "fbank: need 0 <= fmin < fmax <= nyquist");
    ASRKIT_CHECK(log_floor > 0.0, ConfigError, "fbank: log_floor must be >0");
  }

  int64_t NumFrames(int64_t num_samples) const {
    if (num_samples < frame_length) return 0;
    return 1 + (num_samples - frame_length) / frame_shift;
  }
};

namespace detail {

inline double HzToMel(double hz) {
  return 2595.0 * std::log10(1.0 + hz / 700.0);
}

inline double MelToHz(double mel) {
  return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
}

// In-place iterative radix-2 FFT.
inline void Fft(std::vector<std::complex<double>> *a) {
  size_t n = a->size();
  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap((*a)[i], (*a)[j]);
  }
  for (size_t len = 2; len <= n; len <<= 1) {
    double ang = -2.0 * M_PI / static_cast<double>(len);
    std::complex<double> wl(std::cos(ang), std::sin(ang));
    for (size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0);
      for (size_t k = 0; k < len / 2; ++k) {
        std::complex<double> u = (*a)[i + k];
        std::complex<double> v = (*a)[i + k + len / 2] * w;
        (*a)[i + k] = u + v;
        (*a)[i + k + len / 2] = u - v;
        w *= wl;
      }
    }
  }
}

}  // namespace detail

// Triangular Mel filterbank over FFT bin center frequencies, HTK scale.
// Row i of the returned matrix holds filter i's weight per bin 0..fft/2.
class MelFilterbank {
 public:
  explicit MelFilterbank(const FbankConfig &cfg)
      : weights_({cfg.num_mels, cfg.fft_size / 2 + 1}) {
    cfg.Validate();
    int m = cfg.num_mels;
    double mel_lo = detail::HzToMel(cfg.fmin);
    double mel_hi = detail::HzToMel(cfg.EffectiveFmax());
    std::vector<double> edges(static_cast<size_t>(m) + 2);
    for (int i = 0; i < m + 2; ++i) {
      edges[static_cast<size_t>(i)] = detail::MelToHz(
          mel_lo + (mel_hi - mel_lo) * i / static_cast<double>(m + 1));
    }
    centers_.assign(edges.begin() + 1, edges.end() - 1);
    int bins = cfg.fft_size / 2 + 1;
    double bin_hz = static_cast<double>(cfg.sample_rate) / cfg.fft_size;
    for (int i = 0; i < m; ++i) {
      double lo = edges[static_cast<size_t>(i)];
      double c = edges[static_cast<size_t>(i) + 1];
      double hi = edges[static_cast<size_t>(i) + 2];
      for (int k = 0; k < bins; ++k) {
        double f = k * bin_hz;
        double w = 0.0;
        if (f >= lo && f <= c && c > lo) {
          w = (f - lo) / (c - lo);
        } else if (f > c && f <= hi && hi > c) {
          w = (hi - f) / (hi - c);
        }
        weights_.at(i, k) = w;
      }
    }
  }

  const Tensor<double> &weights() const { return weights_; }
  const std::vector<double> &centers_hz() const { return centers_; }

 private:
  Tensor<double> weights_;
  std::vector<double> centers_;
};

// waveform -> [T, num_mels] natural-log Mel energies.
inline Tensor<double> Logmel(const std::vector<double> &samples,
                             const FbankConfig &cfg) {
  cfg.Validate();
  int64_t t = cfg.NumFrames(static_cast<int64_t>(samples.size()));
  ASRKIT_CHECK(t >= 1, DataError,
               "logmel: waveform has " << samples.size()
                                       << " samples, shorter than one frame ("
                                       << cfg.frame_length << ")");
  MelFilterbank fb(cfg);
  int bins = cfg.fft_size / 2 + 1;
  std::vector<double> window(static_cast<size_t>(cfg.frame_length));
  for (int i = 0; i < cfg.frame_length; ++i) {
    window[static_cast<size_t>(i)] =
        0.54 - 0.46 * std::cos(2.0 * M_PI * i / (cfg.frame_length - 1));
  }
  Tensor<double> out({t, cfg.num_mels});
  std::vector<std::complex<double>> buf(static_cast<size_t>(cfg.fft_size));
  std::vector<double> power(static_cast<size_t>(bins));
  for (int64_t fr = 0; fr < t; ++fr) {
    int64_t off = fr * cfg.frame_shift;
    for (int i = 0; i < cfg.frame_length; ++i) {
      buf[static_cast<size_t>(i)] = samples[static_cast<size_t>(off + i)] *
                                    window[static_cast<size_t>(i)];
    }
    std::fill(buf.begin() + cfg.frame_length, buf.end(),
              std::complex<double>(0.0));
    detail::Fft(&buf);
    for (int k = 0; k < bins; ++k) {
      power[static_cast<size_t>(k)] = std::norm(buf[static_cast<size_t>(k)]);
    }
    for (int mi = 0; mi < cfg.num_mels; ++mi) {
      double e = 0.0;
      const double *w = fb.weights().data() + mi * bins;
      for (int k = 0; k < bins; ++k) e += w[k] * power[static_cast<size_t>(k)];
      out.at(fr, mi) = std::log(std::max(e, cfg.log_floor));
    }
  }
  return out;
}

struct ExtractFailure {
  std::string utt_id;
  std::string message;
};

struct ExtractResult {
  FeatsIndex index;
  std::vector<ExtractFailure> failures;
};

// Stage-1 worker over a wav-backed data dir: per-utterance log-Mel into one
// text archive. Bad files are reported per utterance and skipped.
inline ExtractResult ExtractDir(const DataDir &dir, const FbankConfig &cfg,
                                const std::filesystem::path &ark_path) {
  ASRKIT_CHECK(!dir.utt_ids.empty(), DataError,
               dir.path.string() << ": no utterances to extract");
  ASRKIT_CHECK(dir.has_wav(), ContractError,
               dir.path.string()
                   << ": extract needs wav.scp (found feats.scp)");
  ExtractResult res;
  std::map<std::string, Tensor<double>> entries;
  for (const std::string &id : dir.utt_ids) {
    try {
      Waveform w = ReadWav(dir.wav.at(id));
      ASRKIT_CHECK(w.sample_rate == cfg.sample_rate, DataError,
                   dir.wav.at(id) << ": sample rate " << w.sample_rate
                                  << ", expected " << cfg.sample_rate);
      Tensor<double> m = Logmel(w.samples, cfg);
      res.index[id] = FeatsEntry{ark_path.string(), m.dim(0), m.dim(1)};
      entries.emplace(id, std::move(m));
    } catch (const Error &e) {
      res.failures.push_back({id, e.what()});
    }
  }
  if (!entries.empty()) WriteTextArk(entries, ark_path);
  return res;
}

}  // namespace asrkit

#endif  // ASRKIT_FEATURES_HPP_
