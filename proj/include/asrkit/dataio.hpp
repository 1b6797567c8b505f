// include/asrkit/dataio.hpp

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

#ifndef ASRKIT_DATAIO_HPP_
#define ASRKIT_DATAIO_HPP_

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "asrkit/common.hpp"
#include "asrkit/tensor.hpp"

namespace asrkit {

// Kaldi-style data directory: `text`, `utt2spk`, and one of `wav.scp` /
// `feats.scp`, each holding `utt_id <payload>` lines.
struct DataDir {
  std::filesystem::path path;
  // Sorted by utt_id; the parser enforces identical id sets across files.
  std::vector<std::string> utt_ids;
  std::map<std::string, std::string> transcripts;
  std::map<std::string, std::string> utt2spk;
  std::map<std::string, std::string> wav;    // empty when feats.scp present
  std::map<std::string, std::string> feats;  // empty when wav.scp present

  bool has_wav() const { return !wav.empty(); }
};

namespace detail {

inline std::map<std::string, std::string> ParseScpLike(
    const std::filesystem::path &file, bool allow_empty_payload) {
  std::ifstream is(file);
  ASRKIT_CHECK(is.good(), DataError,
               "cannot open " << file.string() << " for reading");
  std::map<std::string, std::string> out;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    std::string t = Trim(line);
    if (t.empty()) continue;
    size_t sp = t.find_first_of(" \t");
    std::string id = sp == std::string::npos ? t : t.substr(0, sp);
    std::string payload =
        sp == std::string::npos ? "" : Trim(t.substr(sp + 1));
    ASRKIT_CHECK(!id.empty(), DataError,
                 file.string() << ":" << lineno << ": missing utt_id");
    ASRKIT_CHECK(allow_empty_payload || !payload.empty(), DataError,
                 file.string() << ":" << lineno << ": missing payload for "
                               << id);
    ASRKIT_CHECK(out.find(id) == out.end(), DataError,
                 file.string() << ":" << lineno << ": duplicate utt_id "
                               << id);
    out.emplace(std::move(id), std::move(payload));
  }
  return out;
}

inline void CheckSameIds(const std::filesystem::path &dir,
                         const std::map<std::string, std::string> &ref,
                         const char *ref_name,
                         const std::map<std::string, std::string> &other,
                         const char *other_name) {
  std::vector<std::string> missing, extra;
  for (const auto &kv : ref) {
    if (other.find(kv.first) == other.end()) missing.push_back(kv.first);
  }
  for (const auto &kv : other) {
    if (ref.find(kv.first) == ref.end()) extra.push_back(kv.first);
  }
  ASRKIT_CHECK(missing.empty() && extra.empty(), DataError,
               dir.string() << ": utt_id mismatch between " << ref_name
                            << " and " << other_name << "; only in "
                            << ref_name << ": ["
                            << Join(missing.begin(), missing.end(), " ")
                            << "], only in " << other_name << ": ["
                            << Join(extra.begin(), extra.end(), " ") << "]");
}

}  // namespace detail

inline DataDir ParseDataDir(const std::filesystem::path &path) {
  namespace fs = std::filesystem;
  for (const char *required : {"text", "utt2spk"}) {
    ASRKIT_CHECK(fs::exists(path / required), DataError,
                 path.string() << ": missing required file " << required);
  }
  bool have_wav = fs::exists(path / "wav.scp");
  bool have_feats = fs::exists(path / "feats.scp");
  ASRKIT_CHECK(have_wav || have_feats, DataError,
               path.string() << ": need wav.scp or feats.scp");
  DataDir d;
  d.path = path;
  d.transcripts = detail::ParseScpLike(path / "text", true);
  d.utt2spk = detail::ParseScpLike(path / "utt2spk", false);
  detail::CheckSameIds(path, d.transcripts, "text", d.utt2spk, "utt2spk");
  if (have_wav) {
    d.wav = detail::ParseScpLike(path / "wav.scp", false);
    detail::CheckSameIds(path, d.transcripts, "text", d.wav, "wav.scp");
  } else {
    d.feats = detail::ParseScpLike(path / "feats.scp", false);
    detail::CheckSameIds(path, d.transcripts, "text", d.feats, "feats.scp");
  }
  for (const auto &kv : d.transcripts) d.utt_ids.push_back(kv.first);
  return d;
}

// Character-level vocabulary with reserved ids: blank 0, unk 1, eos V-1
// (eos doubles as sos). Regular characters sit at 2..V-2 in lexicographic
// order; a literal space is the visible token `<space>`.
class TokenTable {
 public:
  static constexpr int64_t kBlank = 0;
  static constexpr int64_t kUnk = 1;
  static const char *BlankToken() { return "<blank>"; }
  static const char *UnkToken() { return "<unk>"; }
  static const char *EosToken() { return "<eos>"; }
  static const char *SpaceToken() { return "<space>"; }

  static TokenTable Build(const std::vector<std::string> &transcripts) {
    ASRKIT_CHECK(!transcripts.empty(), DataError,
                 "token table: empty transcript corpus");
    std::set<std::string> chars;
    for (const std::string &line : transcripts) {
      for (std::string &cp : Utf8Chars(line)) {
        chars.insert(cp == " " ? SpaceToken() : cp);
      }
    }
    TokenTable t;
    t.tokens_.push_back(BlankToken());
    t.tokens_.push_back(UnkToken());
    t.tokens_.insert(t.tokens_.end(), chars.begin(), chars.end());
    t.tokens_.push_back(EosToken());
    t.Reindex();
    return t;
  }

  int64_t size() const { return static_cast<int64_t>(tokens_.size()); }
  int64_t eos() const { return size() - 1; }

  const std::string &TokenOf(int64_t id) const {
    ASRKIT_CHECK(0 <= id && id < size(), ContractError,
                 "token id " << id << " out of range [0, " << size() << ")");
    return tokens_[static_cast<size_t>(id)];
  }

  int64_t IdOf(const std::string &token) const {
    auto it = ids_.find(token);
    return it == ids_.end() ? kUnk : it->second;
  }

  bool Contains(const std::string &token) const {
    return ids_.find(token) != ids_.end();
  }

  // Maps a transcript to token ids. Characters outside the table map to
  // unk; *unk_count (optional) accumulates how many.
  std::vector<int64_t> Encode(const std::string &text,
                              int64_t *unk_count = nullptr) const {
    std::vector<int64_t> out;
    for (std::string &cp : Utf8Chars(text)) {
      const std::string &tok = cp == " " ? SpaceToken() : cp;
      int64_t id = IdOf(tok);
      if (id == kUnk && tok != UnkToken() && unk_count != nullptr) {
        ++*unk_count;
      }
      out.push_back(id);
    }
    return out;
  }

  std::string Decode(const std::vector<int64_t> &ids) const {
    std::string out;
    for (int64_t id : ids) {
      if (id == kBlank || id == eos()) continue;
      const std::string &tok = TokenOf(id);
      out += tok == SpaceToken() ? " " : tok;
    }
    return out;
  }

  // Space-joined token spelling (unk/eos and friends appear literally).
  std::string Spell(const std::vector<int64_t> &ids) const {
    std::vector<std::string> parts;
    for (int64_t id : ids) parts.push_back(TokenOf(id));
    return Join(parts.begin(), parts.end(), " ");
  }

  uint64_t Checksum() const {
    std::string canon;
    for (size_t i = 0; i < tokens_.size(); ++i) {
      canon += tokens_[i];
      canon += '\t';
      canon += std::to_string(i);
      canon += '\n';
    }
    return Fnv1a64(canon);
  }

  void Save(const std::filesystem::path &file) const {
    std::ofstream os(file, std::ios::binary);
    ASRKIT_CHECK(os.good(), DataError, "cannot write " << file.string());
    for (size_t i = 0; i < tokens_.size(); ++i) {
      os << tokens_[i] << " " << i << "\n";
    }
  }

  static TokenTable Load(const std::filesystem::path &file) {
    std::ifstream is(file);
    ASRKIT_CHECK(is.good(), DataError, "cannot open " << file.string());
    std::vector<std::pair<int64_t, std::string>> entries;
    std::string tok;
    int64_t id;
    while (is >> tok >> id) entries.emplace_back(id, tok);
    ASRKIT_CHECK(!entries.empty(), DataError,
                 file.string() << ": empty token table");
    std::sort(entries.begin(), entries.end());
    TokenTable t;
    for (size_t i = 0; i < entries.size(); ++i) {
      ASRKIT_CHECK(entries[i].first == static_cast<int64_t>(i), DataError,
                   file.string() << ": token ids are not contiguous at "
                                 << entries[i].first);
      t.tokens_.push_back(entries[i].second);
    }
    ASRKIT_CHECK(t.tokens_.front() == BlankToken(), DataError,
                 file.string() << ": id 0 must be " << BlankToken());
    ASRKIT_CHECK(t.tokens_[1] == UnkToken(), DataError,
                 file.string() << ": id 1 must be " << UnkToken());
    ASRKIT_CHECK(t.tokens_.back() == EosToken(), DataError,
                 file.string() << ": last id must be " << EosToken());
    t.Reindex();
    return t;
  }

 private:
  void Reindex() {
    ids_.clear();
    for (size_t i = 0; i < tokens_.size(); ++i) {
      ASRKIT_CHECK(ids_.emplace(tokens_[i], static_cast<int64_t>(i)).second,
                   DataError, "token table: duplicate token " << tokens_[i]);
    }
  }

  std::vector<std::string> tokens_;
  std::map<std::string, int64_t> ids_;
};

// Kaldi text archive of real matrices:
//   utt1  [
//     1.0 2.0
//     3.0 4.0 ]
// Values are written with 9 significant digits.
inline void WriteTextArk(
    const std::map<std::string, Tensor<double>> &entries,
    const std::filesystem::path &file) {
  std::ofstream os(file, std::ios::binary);
  ASRKIT_CHECK(os.good(), DataError, "cannot write " << file.string());
  char buf[64];
  for (const auto &kv : entries) {
    const Tensor<double> &m = kv.second;
    ASRKIT_CHECK(m.rank() == 2, ShapeError,
                 "text ark: " << kv.first << " is not a matrix");
    os << kv.first << "  [\n";
    for (int64_t r = 0; r < m.dim(0); ++r) {
      os << " ";
      for (int64_t c = 0; c < m.dim(1); ++c) {
        std::snprintf(buf, sizeof(buf), " %.9g", m.at(r, c));
        os << buf;
      }
      if (r + 1 == m.dim(0)) os << " ]";
      os << "\n";
    }
  }
}

inline std::map<std::string, Tensor<double>> ReadTextArk(
    const std::filesystem::path &file) {
  std::ifstream is(file);
  ASRKIT_CHECK(is.good(), DataError, "cannot open " << file.string());
  std::map<std::string, Tensor<double>> out;
  std::string line;
  int lineno = 0;
  std::string cur_id;
  bool in_matrix = false;
  std::vector<std::vector<double>> rows;
  auto finish = [&](int at_line) {
    ASRKIT_CHECK(!rows.empty(), DataError,
                 file.string() << ":" << at_line << ": empty matrix for "
                               << cur_id);
    size_t cols = rows[0].size();
    for (size_t r = 0; r < rows.size(); ++r) {
      ASRKIT_CHECK(rows[r].size() == cols, ShapeError,
                   file.string() << ": ragged row " << r << " for " << cur_id
                                 << " (" << rows[r].size() << " vs " << cols
                                 << " columns)");
    }
    Tensor<double> m({static_cast<int64_t>(rows.size()),
                      static_cast<int64_t>(cols)});
    for (size_t r = 0; r < rows.size(); ++r) {
      std::copy(rows[r].begin(), rows[r].end(),
                m.data() + static_cast<int64_t>(r * cols));
    }
    ASRKIT_CHECK(out.emplace(cur_id, std::move(m)).second, DataError,
                 file.string() << ": duplicate entry " << cur_id);
    rows.clear();
    in_matrix = false;
  };
  while (std::getline(is, line)) {
    ++lineno;
    std::string t = Trim(line);
    if (t.empty()) continue;
    if (!in_matrix) {
      size_t sp = t.find_first_of(" \t");
      ASRKIT_CHECK(sp != std::string::npos, DataError,
                   file.string() << ":" << lineno
                                 << ": expected `utt_id  [`");
      cur_id = t.substr(0, sp);
      std::string rest = Trim(t.substr(sp + 1));
      ASRKIT_CHECK(rest == "[", DataError,
                   file.string() << ":" << lineno
                                 << ": expected `[` after utt_id, got `"
                                 << rest << "`");
      in_matrix = true;
      continue;
    }
    bool closes = false;
    if (!t.empty() && t.back() == ']') {
      closes = true;
      t = Trim(t.substr(0, t.size() - 1));
    }
    if (!t.empty()) {
      std::vector<double> row;
      std::istringstream rs(t);
      std::string cell;
      while (rs >> cell) {
        try {
          size_t used = 0;
          double v = std::stod(cell, &used);
          ASRKIT_CHECK(used == cell.size(), DataError,
                       file.string() << ":" << lineno
                                     << ": bad numeric value `" << cell
                                     << "`");
          row.push_back(v);
        } catch (const std::invalid_argument &) {
          throw DataError(file.string() + ":" + std::to_string(lineno) +
                          ": bad numeric value `" + cell + "`");
        } catch (const std::out_of_range &) {
          throw DataError(file.string() + ":" + std::to_string(lineno) +
                          ": numeric value out of range `" + cell + "`");
        }
      }
      rows.push_back(std::move(row));
    }
    if (closes) finish(lineno);
  }
  ASRKIT_CHECK(!in_matrix, DataError,
               file.string() << ":" << lineno << ": unterminated matrix for "
                             << cur_id);
  return out;
}

// Location and shape of one utterance's stored features.
struct FeatsEntry {
  std::string path;
  int64_t rows = 0;
  int64_t cols = 0;
};

using FeatsIndex = std::map<std::string, FeatsEntry>;

struct MakeJsonResult {
  nlohmann::json json;
  int64_t unk_count = 0;
};

// Builds the stage-2 dataset index. Schema (keys serialize sorted):
//   {"utts": {id: {"input":  [{"feat", "name": "input1", "shape": [T, D]}],
//                  "output": [{"name": "target1", "shape": [L, V],
//                              "text", "token", "tokenid"}],
//                  "utt2spk": spk}}}
inline MakeJsonResult MakeJson(const DataDir &dir, const FeatsIndex &feats,
                               const TokenTable &table) {
  MakeJsonResult res;
  nlohmann::json utts = nlohmann::json::object();
  for (const std::string &id : dir.utt_ids) {
    auto fit = feats.find(id);
    ASRKIT_CHECK(fit != feats.end(), DataError,
                 "make_json: no features for utterance " << id);
    const std::string &text = dir.transcripts.at(id);
    std::vector<int64_t> ids = table.Encode(text, &res.unk_count);
    nlohmann::json input = nlohmann::json::array();
    input.push_back({{"feat", fit->second.path},
                     {"name", "input1"},
                     {"shape", {fit->second.rows, fit->second.cols}}});
    std::vector<std::string> idstr;
    for (int64_t v : ids) idstr.push_back(std::to_string(v));
    nlohmann::json output = nlohmann::json::array();
    output.push_back({{"name", "target1"},
                      {"shape", {static_cast<int64_t>(ids.size()),
                                 table.size()}},
                      {"text", text},
                      {"token", table.Spell(ids)},
                      {"tokenid", Join(idstr.begin(), idstr.end(), " ")}});
    utts[id] = {{"input", input},
                {"output", output},
                {"utt2spk", dir.utt2spk.at(id)}};
  }
  res.json = {{"utts", utts}};
  return res;
}

inline std::string SerializeJson(const nlohmann::json &j) {
  return j.dump(4) + "\n";
}

// One utterance as read back from data.json.
struct UttRecord {
  std::string id;
  std::string feat_path;
  int64_t frames = 0;
  int64_t dim = 0;
  std::string text;
  std::vector<int64_t> tokenids;
  std::string speaker;
};

struct Dataset {
  std::vector<UttRecord> utts;  // sorted by id
  int64_t vocab_size = 0;
};

inline Dataset LoadDataJson(const std::filesystem::path &file) {
  std::ifstream is(file);
  ASRKIT_CHECK(is.good(), DataError, "cannot open " << file.string());
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception &e) {
    throw DataError(file.string() + ": invalid JSON: " + e.what());
  }
  ASRKIT_CHECK(j.contains("utts") && j["utts"].is_object(), DataError,
               file.string() << ": missing `utts` object");
  Dataset ds;
  std::filesystem::path base = file.parent_path();
  for (const auto &kv : j["utts"].items()) {
    UttRecord u;
    u.id = kv.key();
    try {
      const auto &input = kv.value().at("input").at(0);
      std::string feat = input.at("feat").get<std::string>();
      std::filesystem::path fp(feat);
      u.feat_path = fp.is_absolute() ? fp.string() : (base / fp).string();
      u.frames = input.at("shape").at(0).get<int64_t>();
      u.dim = input.at("shape").at(1).get<int64_t>();
      const auto &output = kv.value().at("output").at(0);
      u.text = output.at("text").get<std::string>();
      for (const std::string &tok :
           SplitWhitespace(output.at("tokenid").get<std::string>())) {
        try {
          u.tokenids.push_back(std::stoll(tok));
        } catch (const std::exception &) {
          throw DataError(file.string() + ": " + u.id +
                          ": bad tokenid `" + tok + "`");
        }
      }
      int64_t l = output.at("shape").at(0).get<int64_t>();
      int64_t v = output.at("shape").at(1).get<int64_t>();
      ASRKIT_CHECK(l == static_cast<int64_t>(u.tokenids.size()), DataError,
                   file.string() << ": " << u.id
                                 << ": output shape L=" << l
                                 << " does not match tokenid count "
                                 << u.tokenids.size());
      ASRKIT_CHECK(ds.vocab_size == 0 || ds.vocab_size == v, DataError,
                   file.string() << ": inconsistent vocabulary size at "
                                 << u.id);
      ds.vocab_size = v;
      u.speaker = kv.value().at("utt2spk").get<std::string>();
    } catch (const nlohmann::json::exception &e) {
      throw DataError(file.string() + ": utterance " + u.id +
                      ": bad record: " + e.what());
    }
    ds.utts.push_back(std::move(u));
  }
  std::sort(ds.utts.begin(), ds.utts.end(),
            [](const UttRecord &a, const UttRecord &b) { return a.id < b.id; });
  ASRKIT_CHECK(!ds.utts.empty(), DataError,
               file.string() << ": dataset has no utterances");
  return ds;
}

}  // namespace asrkit

#endif  // ASRKIT_DATAIO_HPP_
