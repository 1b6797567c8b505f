// include/asrkit/common.hpp

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

#ifndef ASRKIT_COMMON_HPP_
#define ASRKIT_COMMON_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace asrkit {

// Error hierarchy. Every failure the library reports goes through one of
// these so the CLI can map categories onto exit codes.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string &msg) : std::runtime_error(msg) {}
};

// Malformed or inconsistent input data (bad WAV, bad scp line, bad json).
class DataError : public Error {
 public:
  explicit DataError(const std::string &msg) : Error(msg) {}
};

// Unparseable or semantically invalid configuration.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string &msg) : Error(msg) {}
};

// A stage was asked to run before the stage it depends on produced output.
class PrereqError : public Error {
 public:
  explicit PrereqError(const std::string &msg) : Error(msg) {}
};

// Shape or rank mismatch between tensors.
class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string &msg) : Error(msg) {}
};

// Numeric breakdown: divergence, non-finite loss, domain violations.
class NumericError : public Error {
 public:
  explicit NumericError(const std::string &msg) : Error(msg) {}
};

// An API was used against its documented contract (caller bug, not data).
class ContractError : public Error {
 public:
  explicit ContractError(const std::string &msg) : Error(msg) {}
};

// A label sequence cannot be aligned to the available frames.
class InfeasibleError : public Error {
 public:
  explicit InfeasibleError(const std::string &msg) : Error(msg) {}
};

#define ASRKIT_CHECK(cond, etype, msg)            \
  do {                                            \
    if (!(cond)) {                                \
      std::ostringstream os__;                    \
      os__ << msg;                                \
      throw etype(os__.str());                    \
    }                                             \
  } while (0)

// Log-domain zero. Kept finite so tensors on the autodiff tape never hold
// infinities; exp() of it underflows to exactly 0 in both float and double,
// which is what makes masked log-space arithmetic differentiable.
template <typename Real>
constexpr Real kLogZero = static_cast<Real>(-1e30);

// True -inf for plain (non-tape) log-space code such as the prefix scorer.
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

inline double LogAdd(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  double hi = std::max(a, b), lo = std::min(a, b);
  return hi + std::log1p(std::exp(lo - hi));
}

inline double LogSumExp(const std::vector<double> &xs) {
  double hi = kNegInf;
  for (double x : xs) hi = std::max(hi, x);
  if (hi == kNegInf) return kNegInf;
  double acc = 0.0;
  for (double x : xs) acc += std::exp(x - hi);
  return hi + std::log(acc);
}

// Deterministic random source. mt19937_64 has a bit-exact contract across
// platforms; the normal draws use an explicit Box-Muller transform because
// std::normal_distribution's output sequence is implementation-defined.
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  // Uniform in [0, 1).
  double Uniform() {
    return (gen_() >> 11) * (1.0 / 9007199254740992.0);
  }

  double Uniform(double lo, double hi) { return lo + (hi - lo) * Uniform(); }

  // Standard normal via Box-Muller; caches the second draw.
  double Normal() {
    if (have_cached_) {
      have_cached_ = false;
      return cached_;
    }
    double u1 = 0.0;
    do {
      u1 = Uniform();
    } while (u1 <= 0.0);
    double u2 = Uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * M_PI * u2;
    cached_ = r * std::sin(theta);
    have_cached_ = true;
    return r * std::cos(theta);
  }

  // Uniform integer in [0, n).
  uint64_t RandInt(uint64_t n) {
    ASRKIT_CHECK(n > 0, ContractError, "RandInt: n must be positive");
    // Rejection sampling keeps the draw unbiased.
    uint64_t limit = std::numeric_limits<uint64_t>::max() -
                     std::numeric_limits<uint64_t>::max() % n;
    uint64_t v;
    do {
      v = gen_();
    } while (v >= limit);
    return v % n;
  }

  template <typename T>
  void Shuffle(std::vector<T> *v) {
    for (size_t i = v->size(); i > 1; --i) {
      size_t j = static_cast<size_t>(RandInt(i));
      std::swap((*v)[i - 1], (*v)[j]);
    }
  }

  uint64_t Raw() { return gen_(); }

 private:
  std::mt19937_64 gen_;
  bool have_cached_ = false;
  double cached_ = 0.0;
};

// FNV-1a, 64 bit. Used to fingerprint token tables so a decoder can refuse
// a checkpoint trained against a different vocabulary.
inline uint64_t Fnv1a64(const void *data, size_t n) {
  const auto *p = static_cast<const unsigned char *>(data);
  uint64_t h = 1469598103934665603ull;
  for (size_t i = 0; i < n; ++i) {
    h ^= static_cast<uint64_t>(p[i]);
    h *= 1099511628211ull;
  }
  return h;
}

inline uint64_t Fnv1a64(const std::string &s) {
  return Fnv1a64(s.data(), s.size());
}

// Splits a UTF-8 string into codepoint-sized substrings. Invalid bytes are
// passed through as single-byte units rather than rejected; transcripts are
// expected to be valid UTF-8 but scoring should not crash on stray bytes.
inline std::vector<std::string> Utf8Chars(const std::string &s) {
  std::vector<std::string> out;
  size_t i = 0;
  while (i < s.size()) {
    unsigned char c = static_cast<unsigned char>(s[i]);
    size_t len = 1;
    if ((c & 0x80u) == 0x00u) len = 1;
    else if ((c & 0xE0u) == 0xC0u) len = 2;
    else if ((c & 0xF0u) == 0xE0u) len = 3;
    else if ((c & 0xF8u) == 0xF0u) len = 4;
    if (i + len > s.size()) len = 1;
    for (size_t k = 1; k < len; ++k) {
      if ((static_cast<unsigned char>(s[i + k]) & 0xC0u) != 0x80u) {
        len = 1;
        break;
      }
    }
    out.push_back(s.substr(i, len));
    i += len;
  }
  return out;
}

inline std::vector<std::string> SplitWhitespace(const std::string &s) {
  std::vector<std::string> out;
  std::istringstream is(s);
  std::string tok;
  while (is >> tok) out.push_back(tok);
  return out;
}

inline std::string Trim(const std::string &s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

template <typename Iter>
std::string Join(Iter begin, Iter end, const std::string &sep) {
  std::ostringstream os;
  for (Iter it = begin; it != end; ++it) {
    if (it != begin) os << sep;
    os << *it;
  }
  return os.str();
}

inline int HardwareWorkers() {
  unsigned n = std::thread::hardware_concurrency();
  return n == 0 ? 1 : static_cast<int>(n);
}

}  // namespace asrkit

#endif  // ASRKIT_COMMON_HPP_
