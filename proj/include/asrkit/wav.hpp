// include/asrkit/wav.hpp

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

#ifndef ASRKIT_WAV_HPP_
#define ASRKIT_WAV_HPP_

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "asrkit/common.hpp"

namespace asrkit {

struct Waveform {
  std::vector<double> samples;  // scaled to [-1, 1)
  int sample_rate = 0;
};

namespace detail {

inline uint32_t ReadLe32(const unsigned char *p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) |
         (static_cast<uint32_t>(p[3]) << 24);
}

inline uint16_t ReadLe16(const unsigned char *p) {
  return static_cast<uint16_t>(p[0]) | (static_cast<uint16_t>(p[1]) << 8);
}

}  // namespace detail

// RIFF/WAVE, PCM, 16-bit, mono. Anything else is a data error; the caller
// decides whether one bad file fails the batch.
inline Waveform ReadWav(const std::filesystem::path &file) {
  std::ifstream is(file, std::ios::binary);
  ASRKIT_CHECK(is.good(), DataError, "cannot open " << file.string());
  std::vector<unsigned char> raw((std::istreambuf_iterator<char>(is)),
                                 std::istreambuf_iterator<char>());
  ASRKIT_CHECK(raw.size() >= 44, DataError,
               file.string() << ": too short for a WAV header");
  ASRKIT_CHECK(std::memcmp(raw.data(), "RIFF", 4) == 0 &&
                   std::memcmp(raw.data() + 8, "WAVE", 4) == 0,
               DataError, file.string() << ": not a RIFF/WAVE file");
  Waveform w;
  bool have_fmt = false, have_data = false;
  uint16_t channels = 0, bits = 0, format = 0;
  size_t pos = 12;
  while (pos + 8 <= raw.size()) {
    uint32_t chunk_size = detail::ReadLe32(raw.data() + pos + 4);
    const unsigned char *body = raw.data() + pos + 8;
    size_t avail = raw.size() - pos - 8;
    ASRKIT_CHECK(chunk_size <= avail, DataError,
                 file.string() << ": truncated chunk at offset " << pos);
    if (std::memcmp(raw.data() + pos, "fmt ", 4) == 0) {
      ASRKIT_CHECK(chunk_size >= 16, DataError,
                   file.string() << ": fmt chunk too small");
      format = detail::ReadLe16(body);
      channels = detail::ReadLe16(body + 2);
      w.sample_rate = static_cast<int>(detail::ReadLe32(body + 4));
      bits = detail::ReadLe16(body + 14);
      have_fmt = true;
    } else if (std::memcmp(raw.data() + pos, "data", 4) == 0) {
      ASRKIT_CHECK(have_fmt, DataError,
                   file.string() << ": data chunk before fmt chunk");
      ASRKIT_CHECK(format == 1, DataError,
                   file.string() << ": compressed WAV (format " << format
                                 << "), only PCM is supported");
      ASRKIT_CHECK(bits == 16, DataError,
                   file.string() << ": " << bits
                                 << "-bit samples, only 16-bit is supported");
      ASRKIT_CHECK(channels == 1, DataError,
                   file.string() << ": " << channels
                                 << " channels, only mono is supported");
      size_t n = chunk_size / 2;
      w.samples.resize(n);
      for (size_t i = 0; i < n; ++i) {
        int16_t s =
            static_cast<int16_t>(detail::ReadLe16(body + 2 * i));
        w.samples[i] = static_cast<double>(s) / 32768.0;
      }
      have_data = true;
    }
    pos += 8 + chunk_size + (chunk_size & 1);
  }
  ASRKIT_CHECK(have_fmt && have_data, DataError,
               file.string() << ": missing fmt or data chunk");
  return w;
}

// Minimal writer for fixtures and synthetic audio.
inline void WriteWav(const std::filesystem::path &file,
                     const std::vector<double> &samples, int sample_rate,
                     int channels = 1) {
  std::ofstream os(file, std::ios::binary);
  ASRKIT_CHECK(os.good(), DataError, "cannot write " << file.string());
  auto le16 = [&](uint16_t v) {
    char b[2] = {static_cast<char>(v & 0xff), static_cast<char>(v >> 8)};
    os.write(b, 2);
  };
  auto le32 = [&](uint32_t v) {
    char b[4] = {static_cast<char>(v & 0xff),
                 static_cast<char>((v >> 8) & 0xff),
                 static_cast<char>((v >> 16) & 0xff),
                 static_cast<char>((v >> 24) & 0xff)};
    os.write(b, 4);
  };
  uint32_t data_bytes = static_cast<uint32_t>(samples.size() * 2);
  os.write("RIFF", 4);
  le32(36 + data_bytes);
  os.write("WAVE", 4);
  os.write("fmt ", 4);
  le32(16);
  le16(1);
  le16(static_cast<uint16_t>(channels));
  le32(static_cast<uint32_t>(sample_rate));
  le32(static_cast<uint32_t>(sample_rate * channels * 2));
  le16(static_cast<uint16_t>(channels * 2));
  le16(16);
  os.write("data", 4);
  le32(data_bytes);
  for (double v : samples) {
    double clamped = std::max(-1.0, std::min(1.0 - 1.0 / 32768.0, v));
    int16_t s = static_cast<int16_t>(std::lround(clamped * 32768.0));
    le16(static_cast<uint16_t>(s));
  }
}

}  // namespace asrkit

#endif  // ASRKIT_WAV_HPP_
