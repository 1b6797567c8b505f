// include/asrkit/score.hpp

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

#ifndef ASRKIT_SCORE_HPP_
#define ASRKIT_SCORE_HPP_

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "asrkit/common.hpp"
#include "asrkit/dataio.hpp"

namespace asrkit {

struct ErrorCounts {
  int64_t sub = 0;
  int64_t ins = 0;
  int64_t del = 0;
  int64_t ref_len = 0;

  int64_t errors() const { return sub + ins + del; }

  double RatePercent() const {
    if (ref_len == 0) {
      return errors() == 0 ? 0.0 : std::numeric_limits<double>::infinity();
    }
    return 100.0 * static_cast<double>(errors()) /
           static_cast<double>(ref_len);
  }

  void Add(const ErrorCounts &o) {
    sub += o.sub;
    ins += o.ins;
    del += o.del;
    ref_len += o.ref_len;
  }
};

// Levenshtein alignment with unit costs. Among equal-cost alignments the one
// with fewer insertions wins, then fewer deletions; ties are resolved in the
// DP by minimizing the (cost, ins, del) triple lexicographically, which is
// sound because every transition adds the same triple to all competitors.
inline ErrorCounts EditDistance(const std::vector<std::string> &ref,
                                const std::vector<std::string> &hyp) {
  struct Cell {
    int64_t cost = 0, ins = 0, del = 0;
    bool operator<(const Cell &o) const {
      if (cost != o.cost) return cost < o.cost;
      if (ins != o.ins) return ins < o.ins;
      return del < o.del;
    }
    Cell Plus(int64_t c, int64_t i, int64_t d) const {
      return Cell{cost + c, ins + i, del + d};
    }
  };
  size_t m = ref.size(), n = hyp.size();
  std::vector<Cell> prev(n + 1), cur(n + 1);
  for (size_t j = 1; j <= n; ++j) {
    prev[j] = Cell{static_cast<int64_t>(j), static_cast<int64_t>(j), 0};
  }
  for (size_t i = 1; i <= m; ++i) {
    cur[0] = Cell{static_cast<int64_t>(i), 0, static_cast<int64_t>(i)};
    for (size_t j = 1; j <= n; ++j) {
      Cell best = prev[j - 1].Plus(ref[i - 1] == hyp[j - 1] ? 0 : 1, 0, 0);
      Cell del = prev[j].Plus(1, 0, 1);
      if (del < best) best = del;
      Cell ins = cur[j - 1].Plus(1, 1, 0);
      if (ins < best) best = ins;
      cur[j] = best;
    }
    std::swap(prev, cur);
  }
  const Cell &c = prev[n];
  ErrorCounts out;
  out.ins = c.ins;
  out.del = c.del;
  out.sub = c.cost - c.ins - c.del;
  out.ref_len = static_cast<int64_t>(m);
  return out;
}

enum class ScoreUnit { kChar, kWord };

// char: every UTF-8 character is a unit, spaces included. word: whitespace
// separated.
inline std::vector<std::string> ScoreUnits(const std::string &text,
                                           ScoreUnit unit) {
  if (unit == ScoreUnit::kWord) return SplitWhitespace(text);
  return Utf8Chars(text);
}

struct ScorePair {
  std::string id;
  std::string ref;
  std::string hyp;
};

struct UttScore {
  std::string id;
  ErrorCounts counts;
};

struct CorpusScore {
  std::vector<UttScore> utts;  // sorted by id
  ErrorCounts total;
};

// Joins reference and hypothesis maps by utterance id; any id present on one
// side only is an error listing the differences.
inline std::vector<ScorePair> PairById(
    const std::map<std::string, std::string> &refs,
    const std::map<std::string, std::string> &hyps) {
  std::vector<std::string> only_ref, only_hyp;
  for (const auto &kv : refs) {
    if (hyps.find(kv.first) == hyps.end()) only_ref.push_back(kv.first);
  }
  for (const auto &kv : hyps) {
    if (refs.find(kv.first) == refs.end()) only_hyp.push_back(kv.first);
  }
  ASRKIT_CHECK(only_ref.empty() && only_hyp.empty(), DataError,
               "utterance sets differ; reference only: ["
                   << Join(only_ref.begin(), only_ref.end(), " ")
                   << "], hypothesis only: ["
                   << Join(only_hyp.begin(), only_hyp.end(), " ") << "]");
  std::vector<ScorePair> out;
  for (const auto &kv : refs) {
    out.push_back({kv.first, kv.second, hyps.at(kv.first)});
  }
  return out;
}

inline CorpusScore ScoreCorpus(const std::vector<ScorePair> &pairs,
                               ScoreUnit unit) {
  CorpusScore cs;
  for (const ScorePair &p : pairs) {
    UttScore u;
    u.id = p.id;
    u.counts = EditDistance(ScoreUnits(p.ref, unit), ScoreUnits(p.hyp, unit));
    cs.total.Add(u.counts);
    cs.utts.push_back(std::move(u));
  }
  std::sort(cs.utts.begin(), cs.utts.end(),
            [](const UttScore &a, const UttScore &b) { return a.id < b.id; });
  return cs;
}

// Text report: per-utt `utt_id S I D ref_len rate`, final TOTAL line. The
// JSON twin carries the same counts and exact rates.
inline void WriteScoreReport(const CorpusScore &cs,
                             const std::filesystem::path &text_path,
                             const std::filesystem::path &json_path) {
  std::ofstream os(text_path, std::ios::binary);
  ASRKIT_CHECK(os.good(), DataError, "cannot write " << text_path.string());
  auto line = [&](const std::string &id, const ErrorCounts &c) {
    char buf[192];
    std::snprintf(buf, sizeof buf, "%s %lld %lld %lld %lld %.2f%%\n",
                  id.c_str(), static_cast<long long>(c.sub),
                  static_cast<long long>(c.ins), static_cast<long long>(c.del),
                  static_cast<long long>(c.ref_len), c.RatePercent());
    os << buf;
  };
  for (const UttScore &u : cs.utts) line(u.id, u.counts);
  line("TOTAL", cs.total);

  nlohmann::json j;
  auto jc = [](const ErrorCounts &c) {
    return nlohmann::json{{"S", c.sub},
                          {"I", c.ins},
                          {"D", c.del},
                          {"ref_len", c.ref_len},
                          {"rate", c.RatePercent()}};
  };
  j["utts"] = nlohmann::json::object();
  for (const UttScore &u : cs.utts) j["utts"][u.id] = jc(u.counts);
  j["total"] = jc(cs.total);
  std::ofstream js(json_path, std::ios::binary);
  ASRKIT_CHECK(js.good(), DataError, "cannot write " << json_path.string());
  js << SerializeJson(j);
}

}  // namespace asrkit

#endif  // ASRKIT_SCORE_HPP_
