// tests/test_score.cpp

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
#include <array>
#include <map>
#include <string>
#include <vector>

#include "asrkit/score.hpp"
#include "json.hpp"
#include "testing.hpp"

using namespace asrkit;
using asrkit::testing::ReadFile;
using asrkit::testing::TempDir;

namespace {

struct Triple {
  int64_t cost = 0, ins = 0, del = 0;
  bool operator<(const Triple &o) const {
    if (cost != o.cost) return cost < o.cost;
    if (ins != o.ins) return ins < o.ins;
    return del < o.del;
  }
  Triple Plus(int64_t c, int64_t i, int64_t d) const {
    return Triple{cost + c, ins + i, del + d};
  }
};

// Reference implementation: memoized recursion over alignment suffixes,
// minimizing (cost, ins, del) lexicographically.
Triple OracleAt(const std::vector<std::string> &ref,
                const std::vector<std::string> &hyp, size_t i, size_t j,
                std::map<std::pair<size_t, size_t>, Triple> *memo) {
  if (i == ref.size() && j == hyp.size()) return Triple{};
  auto key = std::make_pair(i, j);
  auto it = memo->find(key);
  if (it != memo->end()) return it->second;
  bool have = false;
  Triple best;
  auto consider = [&](Triple t) {
    if (!have || t < best) {
      best = t;
      have = true;
    }
  };
  if (i < ref.size() && j < hyp.size()) {
    consider(OracleAt(ref, hyp, i + 1, j + 1, memo)
                 .Plus(ref[i] == hyp[j] ? 0 : 1, 0, 0));
  }
  if (i < ref.size()) {
    consider(OracleAt(ref, hyp, i + 1, j, memo).Plus(1, 0, 1));
  }
  if (j < hyp.size()) {
    consider(OracleAt(ref, hyp, i, j + 1, memo).Plus(1, 1, 0));
  }
  memo->emplace(key, best);
  return best;
}

ErrorCounts Oracle(const std::vector<std::string> &ref,
                   const std::vector<std::string> &hyp) {
  std::map<std::pair<size_t, size_t>, Triple> memo;
  Triple t = OracleAt(ref, hyp, 0, 0, &memo);
  ErrorCounts out;
  out.ins = t.ins;
  out.del = t.del;
  out.sub = t.cost - t.ins - t.del;
  out.ref_len = static_cast<int64_t>(ref.size());
  return out;
}

std::vector<std::string> RandomUnits(Rng *rng, int64_t max_len) {
  static const std::array<const char *, 4> alphabet = {"a", "b", "c", "d"};
  std::vector<std::string> out;
  int64_t len = static_cast<int64_t>(rng->RandInt(max_len + 1));
  for (int64_t i = 0; i < len; ++i) {
    out.push_back(alphabet[rng->RandInt(alphabet.size())]);
  }
  return out;
}

bool SameCounts(const ErrorCounts &a, const ErrorCounts &b) {
  return a.sub == b.sub && a.ins == b.ins && a.del == b.del &&
         a.ref_len == b.ref_len;
}

// Five-pair fixture with hand-checked character and word alignments.
std::vector<ScorePair> GoldenPairs() {
  return {{"p1", "AB C", "AB C"},
          {"p2", "ABC", "ABD"},
          {"p3", "AB", "BB"},
          {"p4", "A B", "AB"},
          {"p5", "AAAA", "AA"}};
}

}  // namespace

TEST_CASE("edit distance matches the exhaustive oracle") {
  Rng rng(11);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<std::string> ref = RandomUnits(&rng, 10);
    std::vector<std::string> hyp = RandomUnits(&rng, 10);
    ErrorCounts got = EditDistance(ref, hyp);
    ErrorCounts want = Oracle(ref, hyp);
    REQUIRE(SameCounts(got, want));
  }
}

TEST_CASE("edit distance handles the boundary alignments") {
  ErrorCounts same = EditDistance({"a", "b", "c"}, {"a", "b", "c"});
  REQUIRE(same.errors() == 0);
  REQUIRE(same.RatePercent() == 0.0);

  ErrorCounts deleted = EditDistance({"a", "b", "c"}, {});
  REQUIRE(deleted.sub == 0);
  REQUIRE(deleted.ins == 0);
  REQUIRE(deleted.del == 3);
  REQUIRE(deleted.RatePercent() == 100.0);

  ErrorCounts inserted = EditDistance({}, {"a", "b"});
  REQUIRE(inserted.ins == 2);
  REQUIRE(inserted.ref_len == 0);
  REQUIRE(inserted.RatePercent() ==
          std::numeric_limits<double>::infinity());

  ErrorCounts empty = EditDistance({}, {});
  REQUIRE(empty.errors() == 0);
  REQUIRE(empty.RatePercent() == 0.0);

  ErrorCounts sub = EditDistance({"a", "b"}, {"a", "c"});
  REQUIRE(sub.sub == 1);
  REQUIRE(sub.RatePercent() == 50.0);
}

TEST_CASE("equal-cost ties prefer fewer insertions then fewer deletions") {
  // Two substitutions beat an insertion plus a deletion at the same cost.
  ErrorCounts swapped = EditDistance({"a", "b"}, {"b", "a"});
  REQUIRE(swapped.sub == 2);
  REQUIRE(swapped.ins == 0);
  REQUIRE(swapped.del == 0);

  ErrorCounts grown = EditDistance({"a"}, {"a", "b"});
  REQUIRE(grown.sub == 0);
  REQUIRE(grown.ins == 1);
  REQUIRE(grown.del == 0);
}

TEST_CASE("swapping reference and hypothesis swaps insertions and deletions") {
  Rng rng(13);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::string> a = RandomUnits(&rng, 8);
    std::vector<std::string> b = RandomUnits(&rng, 8);
    ErrorCounts fwd = EditDistance(a, b);
    ErrorCounts rev = EditDistance(b, a);
    REQUIRE(fwd.errors() == rev.errors());
    REQUIRE(fwd.ins == rev.del);
    REQUIRE(fwd.del == rev.ins);
    REQUIRE(fwd.sub == rev.sub);
    if (a == b) {
      REQUIRE(fwd.errors() == 0);
    } else {
      REQUIRE(fwd.errors() > 0);
    }
  }
}

TEST_CASE("edit distance obeys the triangle inequality") {
  Rng rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::string> a = RandomUnits(&rng, 6);
    std::vector<std::string> b = RandomUnits(&rng, 6);
    std::vector<std::string> c = RandomUnits(&rng, 6);
    REQUIRE(EditDistance(a, c).errors() <=
            EditDistance(a, b).errors() + EditDistance(b, c).errors());
  }
}

TEST_CASE("unit splitting differs between char and word modes") {
  std::vector<std::string> chars = ScoreUnits("A B", ScoreUnit::kChar);
  REQUIRE(chars == std::vector<std::string>{"A", " ", "B"});
  std::vector<std::string> words = ScoreUnits("A  B", ScoreUnit::kWord);
  REQUIRE(words == std::vector<std::string>{"A", "B"});
  std::vector<std::string> utf8 = ScoreUnits("é1", ScoreUnit::kChar);
  REQUIRE(utf8.size() == 2);
}

TEST_CASE("golden corpus rates") {
  std::vector<ScorePair> pairs = GoldenPairs();

  CorpusScore cer = ScoreCorpus(pairs, ScoreUnit::kChar);
  REQUIRE(cer.utts.size() == 5);
  REQUIRE(cer.utts[0].counts.errors() == 0);
  REQUIRE(cer.utts[1].counts.sub == 1);
  REQUIRE(cer.utts[2].counts.sub == 1);
  REQUIRE(cer.utts[3].counts.del == 1);
  REQUIRE(cer.utts[3].counts.ref_len == 3);
  REQUIRE(cer.utts[4].counts.del == 2);
  REQUIRE(cer.total.errors() == 5);
  REQUIRE(cer.total.ref_len == 16);
  REQUIRE(cer.total.RatePercent() == Catch::Approx(31.25).epsilon(1e-12));

  CorpusScore wer = ScoreCorpus(pairs, ScoreUnit::kWord);
  REQUIRE(wer.utts[0].counts.errors() == 0);
  REQUIRE(wer.utts[3].counts.sub == 1);
  REQUIRE(wer.utts[3].counts.del == 1);
  REQUIRE(wer.total.errors() == 5);
  REQUIRE(wer.total.ref_len == 7);
  REQUIRE(wer.total.RatePercent() ==
          Catch::Approx(100.0 * 5.0 / 7.0).epsilon(1e-12));
}

TEST_CASE("corpus rate is the reference-weighted mean of utterance rates") {
  Rng rng(19);
  std::vector<ScorePair> pairs;
  for (int i = 0; i < 20; ++i) {
    auto ref = RandomUnits(&rng, 8);
    auto hyp = RandomUnits(&rng, 8);
    if (ref.empty()) ref.push_back("a");
    std::string rtext, htext;
    for (const auto &u : ref) rtext += u;
    for (const auto &u : hyp) htext += u;
    pairs.push_back({"u" + std::to_string(i), rtext, htext});
  }
  CorpusScore cs = ScoreCorpus(pairs, ScoreUnit::kChar);
  double num = 0.0, den = 0.0;
  for (const UttScore &u : cs.utts) {
    num += static_cast<double>(u.counts.ref_len) * u.counts.RatePercent();
    den += static_cast<double>(u.counts.ref_len);
  }
  REQUIRE(cs.total.RatePercent() == Catch::Approx(num / den).epsilon(1e-12));
}

TEST_CASE("pairing requires identical id sets") {
  std::map<std::string, std::string> refs = {{"a", "x"}, {"b", "y"}};
  std::map<std::string, std::string> hyps = {{"b", "y"}, {"c", "z"}};
  REQUIRE_THROWS_MATCHES(
      PairById(refs, hyps), DataError,
      Catch::Matchers::MessageMatches(
          Catch::Matchers::ContainsSubstring("a") &&
          Catch::Matchers::ContainsSubstring("c")));

  std::map<std::string, std::string> hyps_ok = {{"a", "x"}, {"b", "q"}};
  std::vector<ScorePair> pairs = PairById(refs, hyps_ok);
  REQUIRE(pairs.size() == 2);
  REQUIRE(pairs[0].id == "a");
  REQUIRE(pairs[1].hyp == "q");
}

TEST_CASE("score report bytes") {
  std::filesystem::path dir = TempDir("score_report");
  CorpusScore cs = ScoreCorpus(GoldenPairs(), ScoreUnit::kChar);
  WriteScoreReport(cs, dir / "score.txt", dir / "score.json");

  std::string want =
      "p1 0 0 0 4 0.00%\n"
      "p2 1 0 0 3 33.33%\n"
      "p3 1 0 0 2 50.00%\n"
      "p4 0 0 1 3 33.33%\n"
      "p5 0 0 2 4 50.00%\n"
      "TOTAL 2 0 3 16 31.25%\n";
  REQUIRE(ReadFile(dir / "score.txt") == want);

  nlohmann::json j =
      nlohmann::json::parse(ReadFile(dir / "score.json"));
  REQUIRE(j.at("total").at("S").get<int64_t>() == 2);
  REQUIRE(j.at("total").at("I").get<int64_t>() == 0);
  REQUIRE(j.at("total").at("D").get<int64_t>() == 3);
  REQUIRE(j.at("total").at("ref_len").get<int64_t>() == 16);
  REQUIRE(j.at("total").at("rate").get<double>() == 31.25);
  REQUIRE(j.at("utts").size() == 5);
  REQUIRE(j.at("utts").at("p3").at("rate").get<double>() == 50.0);
}
