// include/asrkit/recipe.hpp

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

#ifndef ASRKIT_RECIPE_HPP_
#define ASRKIT_RECIPE_HPP_

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <yaml-cpp/yaml.h>

#include "asrkit/checkpoint.hpp"
#include "asrkit/common.hpp"
#include "asrkit/dataio.hpp"
#include "asrkit/decode.hpp"
#include "asrkit/features.hpp"
#include "asrkit/lm.hpp"
#include "asrkit/model.hpp"
#include "asrkit/score.hpp"
#include "asrkit/train.hpp"

namespace asrkit {

// Synthetic wav-free corpus: every symbol owns a fixed random 80-dim
// template row, and an utterance of L symbols (L uniform in [3, 10]) becomes
// L * frames_per_symbol frames of its templates plus Gaussian noise. A single
// seeded generator drives templates, transcripts and noise in a fixed order,
// so the output is byte-identical for a given config.
struct SynthConfig {
  uint64_t seed = 17;
  int64_t num_train = 500;
  int64_t num_test = 100;
  int64_t vocab_size = 10;  // symbols 'A'.., at most 26
  int64_t frames_per_symbol = 8;
  double noise_sigma = 0.1;

  void Validate() const {
    ASRKIT_CHECK(num_train >= 1 && num_test >= 1, ConfigError,
                 "synth: num_train and num_test must be positive");
    ASRKIT_CHECK(vocab_size >= 2 && vocab_size <= 26, ConfigError,
                 "synth: vocab_size must be in [2, 26]");
    ASRKIT_CHECK(frames_per_symbol >= 1, ConfigError,
                 "synth: frames_per_symbol must be positive");
    ASRKIT_CHECK(noise_sigma >= 0.0, ConfigError,
                 "synth: noise_sigma must be >= 0");
  }
};

namespace detail {

inline void WriteWholeFile(const std::filesystem::path &file,
                           const std::string &content) {
  std::ofstream os(file, std::ios::binary);
  ASRKIT_CHECK(os.good(), DataError, "cannot write " << file.string());
  os << content;
  os.flush();
  ASRKIT_CHECK(os.good(), DataError, "cannot write " << file.string());
}

inline std::string ReadWholeFile(const std::filesystem::path &file) {
  std::ifstream is(file, std::ios::binary);
  ASRKIT_CHECK(is.good(), DataError,
               "cannot open " << file.string() << " for reading");
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace detail

inline void SynthCorpus(const SynthConfig &cfg,
                        const std::filesystem::path &out_dir) {
  cfg.Validate();
  const int64_t dim = 80;
  Rng rng(cfg.seed);
  std::vector<std::vector<double>> templates(
      static_cast<size_t>(cfg.vocab_size));
  for (auto &row : templates) {
    row.resize(static_cast<size_t>(dim));
    for (double &v : row) v = rng.Normal();
  }

  auto write_split = [&](const std::string &split, int64_t n) {
    std::filesystem::path dir = out_dir / split;
    std::filesystem::create_directories(dir);
    std::map<std::string, Tensor<double>> feats;
    std::ostringstream text, utt2spk, scp;
    for (int64_t u = 0; u < n; ++u) {
      char idbuf[64];
      std::snprintf(idbuf, sizeof idbuf, "%s_%05lld", split.c_str(),
                    static_cast<long long>(u));
      std::string id = idbuf;
      int64_t len = 3 + static_cast<int64_t>(rng.RandInt(8));
      std::string sent;
      std::vector<int64_t> syms;
      for (int64_t i = 0; i < len; ++i) {
        int64_t s = static_cast<int64_t>(
            rng.RandInt(static_cast<uint64_t>(cfg.vocab_size)));
        syms.push_back(s);
        sent += static_cast<char>('A' + s);
      }
      Tensor<double> m({len * cfg.frames_per_symbol, dim});
      int64_t r = 0;
      for (int64_t i = 0; i < len; ++i) {
        const std::vector<double> &tpl = templates[static_cast<size_t>(syms[i])];
        for (int64_t f = 0; f < cfg.frames_per_symbol; ++f, ++r) {
          for (int64_t d = 0; d < dim; ++d) {
            m.at(r, d) =
                tpl[static_cast<size_t>(d)] + cfg.noise_sigma * rng.Normal();
          }
        }
      }
      feats[id] = std::move(m);
      char spk[16];
      std::snprintf(spk, sizeof spk, "spk%02lld", static_cast<long long>(u % 10));
      text << id << " " << sent << "\n";
      utt2spk << id << " " << spk << "\n";
      scp << id << " feats.ark\n";
    }
    detail::WriteWholeFile(dir / "text", text.str());
    detail::WriteWholeFile(dir / "utt2spk", utt2spk.str());
    detail::WriteWholeFile(dir / "feats.scp", scp.str());
    WriteTextArk(feats, dir / "feats.ark");
  };
  write_split("train", cfg.num_train);
  write_split("test", cfg.num_test);
}

namespace detail {

inline void CheckYamlKeys(const YAML::Node &node, const std::string &where,
                          std::initializer_list<const char *> allowed) {
  if (!node.IsDefined() || node.IsNull()) return;
  ASRKIT_CHECK(node.IsMap(), ConfigError, where << ": expected a map");
  for (const auto &kv : node) {
    std::string key;
    try {
      key = kv.first.as<std::string>();
    } catch (const YAML::Exception &) {
      throw ConfigError(where + ": non-scalar key");
    }
    bool ok = false;
    for (const char *a : allowed) {
      if (key == a) {
        ok = true;
        break;
      }
    }
    ASRKIT_CHECK(ok, ConfigError, where << ": unknown key `" << key << "`");
  }
}

template <typename T>
T YamlScalar(const YAML::Node &node, const std::string &where, const char *key,
             T fallback) {
  if (!node.IsDefined() || node.IsNull() || !node[key]) return fallback;
  try {
    return node[key].template as<T>();
  } catch (const YAML::Exception &) {
    throw ConfigError(where + "." + key + ": bad value");
  }
}

inline std::vector<int64_t> YamlIntList(const YAML::Node &node,
                                        const std::string &where,
                                        const char *key,
                                        std::vector<int64_t> fallback) {
  if (!node.IsDefined() || node.IsNull() || !node[key]) return fallback;
  const YAML::Node &v = node[key];
  ASRKIT_CHECK(v.IsSequence(), ConfigError,
               where << "." << key << ": expected a list");
  std::vector<int64_t> out;
  for (const auto &e : v) {
    try {
      out.push_back(e.as<int64_t>());
    } catch (const YAML::Exception &) {
      throw ConfigError(where + "." + std::string(key) + ": bad value");
    }
  }
  return out;
}

}  // namespace detail

// Experiment configuration, one YAML file. Unknown keys are rejected at every
// level. Relative paths resolve against the config file's directory; the
// experiment root can be overridden with the ASRKIT_EXP_ROOT environment
// variable. The hash of the raw config bytes is stamped into stage markers,
// so any edit to the file invalidates all completed stages.
struct RecipeConfig {
  std::filesystem::path config_path;
  uint64_t config_hash = 0;

  std::filesystem::path exp_dir;
  std::filesystem::path train_dir;
  std::vector<std::filesystem::path> decode_dirs;  // dev then eval sets
  std::string precision = "double";

  FbankConfig fbank;
  EncoderConfig encoder;  // input_dim is taken from the data at stage 4
  AttentionConfig attention;
  int dec_units = 320;
  int dec_embed = 320;
  TrainConfig train;
  bool lm_enabled = false;
  LmConfig lm;  // vocab is taken from the token table at stage 3
  LmTrainConfig lm_train;
  DecodeConfig decode;

  // name -> data dir, train set first; names are dir basenames.
  std::vector<std::pair<std::string, std::filesystem::path>> sets;
  std::vector<std::pair<std::string, std::filesystem::path>> decode_sets;
  std::string train_name;

  ModelConfig Model(int64_t input_dim, int64_t vocab) const {
    ModelConfig mc;
    mc.encoder = encoder;
    mc.encoder.input_dim = input_dim;
    mc.attention = attention;
    mc.dec_units = dec_units;
    mc.dec_embed = dec_embed;
    mc.vocab = vocab;
    return mc;
  }

  static RecipeConfig Load(const std::filesystem::path &path) {
    RecipeConfig c;
    c.config_path = std::filesystem::absolute(path).lexically_normal();
    ASRKIT_CHECK(std::filesystem::exists(c.config_path), ConfigError,
                 "cannot open " << c.config_path.string() << " for reading");
    std::string bytes = detail::ReadWholeFile(c.config_path);
    c.config_hash = Fnv1a64(bytes);
    std::filesystem::path base = c.config_path.parent_path();
    auto resolve = [&base](const std::string &p) {
      std::filesystem::path fp(p);
      if (!fp.is_absolute()) fp = base / fp;
      return fp.lexically_normal();
    };

    YAML::Node root;
    try {
      root = YAML::Load(bytes);
    } catch (const YAML::Exception &e) {
      throw ConfigError(c.config_path.string() + ": " + e.what());
    }
    if (!root.IsDefined() || root.IsNull()) {
      root = YAML::Node(YAML::NodeType::Map);
    }
    ASRKIT_CHECK(root.IsMap(), ConfigError,
                 c.config_path.string() << ": top level must be a map");
    detail::CheckYamlKeys(root, "config",
                          {"data", "exp", "precision", "fbank", "model",
                           "train", "lm", "decode"});

    const YAML::Node data = root["data"];
    detail::CheckYamlKeys(data, "data", {"train", "dev", "eval"});
    ASRKIT_CHECK(data.IsDefined() && !data.IsNull() && data["train"],
                 ConfigError, "config: data.train is required");
    c.train_dir = resolve(detail::YamlScalar<std::string>(data, "data", "train",
                                                          ""));
    std::vector<std::filesystem::path> dirs;
    if (data["dev"]) {
      dirs.push_back(
          resolve(detail::YamlScalar<std::string>(data, "data", "dev", "")));
    }
    if (data["eval"]) {
      const YAML::Node ev = data["eval"];
      if (ev.IsSequence()) {
        for (const auto &e : ev) {
          try {
            dirs.push_back(resolve(e.as<std::string>()));
          } catch (const YAML::Exception &) {
            throw ConfigError("data.eval: bad value");
          }
        }
      } else {
        dirs.push_back(
            resolve(detail::YamlScalar<std::string>(data, "data", "eval", "")));
      }
    }
    c.decode_dirs = dirs;

    const char *env = std::getenv("ASRKIT_EXP_ROOT");
    if (env != nullptr && env[0] != '\0') {
      c.exp_dir = std::filesystem::absolute(env).lexically_normal();
    } else {
      c.exp_dir =
          resolve(detail::YamlScalar<std::string>(root, "config", "exp", "exp"));
    }

    c.precision =
        detail::YamlScalar<std::string>(root, "config", "precision", "double");
    ASRKIT_CHECK(c.precision == "float" || c.precision == "double", ConfigError,
                 "config: precision must be `float` or `double`, got `"
                     << c.precision << "`");

    const YAML::Node fb = root["fbank"];
    detail::CheckYamlKeys(fb, "fbank",
                          {"sample_rate", "frame_length", "frame_shift",
                           "fft_size", "num_mels", "fmin", "fmax",
                           "log_floor"});
    c.fbank.sample_rate = detail::YamlScalar<int64_t>(fb, "fbank", "sample_rate",
                                                      c.fbank.sample_rate);
    c.fbank.frame_length = detail::YamlScalar<int64_t>(
        fb, "fbank", "frame_length", c.fbank.frame_length);
    c.fbank.frame_shift = detail::YamlScalar<int64_t>(fb, "fbank", "frame_shift",
                                                      c.fbank.frame_shift);
    c.fbank.fft_size =
        detail::YamlScalar<int64_t>(fb, "fbank", "fft_size", c.fbank.fft_size);
    c.fbank.num_mels =
        detail::YamlScalar<int64_t>(fb, "fbank", "num_mels", c.fbank.num_mels);
    c.fbank.fmin = detail::YamlScalar<double>(fb, "fbank", "fmin", c.fbank.fmin);
    c.fbank.fmax = detail::YamlScalar<double>(fb, "fbank", "fmax", c.fbank.fmax);
    c.fbank.log_floor =
        detail::YamlScalar<double>(fb, "fbank", "log_floor", c.fbank.log_floor);
    c.fbank.Validate();

    const YAML::Node model = root["model"];
    detail::CheckYamlKeys(model, "model", {"encoder", "attention", "decoder"});
    const YAML::Node enc =
        model.IsDefined() && !model.IsNull() ? model["encoder"] : YAML::Node();
    detail::CheckYamlKeys(enc, "model.encoder",
                          {"kind", "layers", "units", "projection",
                           "subsample"});
    c.encoder.kind = detail::YamlScalar<std::string>(enc, "model.encoder",
                                                     "kind", c.encoder.kind);
    c.encoder.num_layers = detail::YamlScalar<int>(enc, "model.encoder",
                                                   "layers",
                                                   c.encoder.num_layers);
    c.encoder.units =
        detail::YamlScalar<int>(enc, "model.encoder", "units", c.encoder.units);
    c.encoder.projection = detail::YamlScalar<int>(enc, "model.encoder",
                                                   "projection",
                                                   c.encoder.projection);
    c.encoder.subsample = detail::YamlIntList(enc, "model.encoder", "subsample",
                                              c.encoder.subsample);
    c.encoder.Validate();

    const YAML::Node att = model.IsDefined() && !model.IsNull()
                               ? model["attention"]
                               : YAML::Node();
    detail::CheckYamlKeys(att, "model.attention",
                          {"kind", "dim", "conv_filters", "conv_width"});
    c.attention.kind = detail::YamlScalar<std::string>(att, "model.attention",
                                                       "kind",
                                                       c.attention.kind);
    c.attention.dim =
        detail::YamlScalar<int>(att, "model.attention", "dim", c.attention.dim);
    c.attention.conv_filters = detail::YamlScalar<int>(
        att, "model.attention", "conv_filters", c.attention.conv_filters);
    c.attention.conv_width = detail::YamlScalar<int>(
        att, "model.attention", "conv_width", c.attention.conv_width);
    c.attention.Validate();

    const YAML::Node dec =
        model.IsDefined() && !model.IsNull() ? model["decoder"] : YAML::Node();
    detail::CheckYamlKeys(dec, "model.decoder", {"units", "embed"});
    c.dec_units =
        detail::YamlScalar<int>(dec, "model.decoder", "units", c.dec_units);
    c.dec_embed =
        detail::YamlScalar<int>(dec, "model.decoder", "embed", c.dec_embed);

    const YAML::Node tr = root["train"];
    detail::CheckYamlKeys(tr, "train",
                          {"alpha", "epochs", "batch_size", "lr", "beta1",
                           "beta2", "adam_eps", "clip", "smoothing",
                           "val_fraction", "seed"});
    c.train.alpha =
        detail::YamlScalar<double>(tr, "train", "alpha", c.train.alpha);
    c.train.epochs =
        detail::YamlScalar<int64_t>(tr, "train", "epochs", c.train.epochs);
    c.train.batch_size = detail::YamlScalar<int64_t>(tr, "train", "batch_size",
                                                     c.train.batch_size);
    c.train.lr = detail::YamlScalar<double>(tr, "train", "lr", c.train.lr);
    c.train.beta1 =
        detail::YamlScalar<double>(tr, "train", "beta1", c.train.beta1);
    c.train.beta2 =
        detail::YamlScalar<double>(tr, "train", "beta2", c.train.beta2);
    c.train.adam_eps =
        detail::YamlScalar<double>(tr, "train", "adam_eps", c.train.adam_eps);
    c.train.clip = detail::YamlScalar<double>(tr, "train", "clip", c.train.clip);
    c.train.smoothing =
        detail::YamlScalar<double>(tr, "train", "smoothing", c.train.smoothing);
    c.train.val_fraction = detail::YamlScalar<double>(tr, "train",
                                                      "val_fraction",
                                                      c.train.val_fraction);
    c.train.seed =
        detail::YamlScalar<uint64_t>(tr, "train", "seed", c.train.seed);
    c.train.Validate();

    const YAML::Node lm = root["lm"];
    detail::CheckYamlKeys(lm, "lm",
                          {"enabled", "embed", "layers", "units", "epochs",
                           "batch_size", "bptt", "lr", "beta1", "beta2",
                           "adam_eps", "clip", "val_fraction", "seed"});
    c.lm_enabled = detail::YamlScalar<bool>(lm, "lm", "enabled", false);
    c.lm.embed = detail::YamlScalar<int64_t>(lm, "lm", "embed", c.lm.embed);
    c.lm.layers = detail::YamlScalar<int64_t>(lm, "lm", "layers", c.lm.layers);
    c.lm.units = detail::YamlScalar<int64_t>(lm, "lm", "units", c.lm.units);
    ASRKIT_CHECK(c.lm.embed >= 1 && c.lm.layers >= 1 && c.lm.units >= 1,
                 ConfigError, "lm: embed, layers and units must be positive");
    c.lm_train.epochs =
        detail::YamlScalar<int64_t>(lm, "lm", "epochs", c.lm_train.epochs);
    c.lm_train.batch_size = detail::YamlScalar<int64_t>(lm, "lm", "batch_size",
                                                        c.lm_train.batch_size);
    c.lm_train.bptt =
        detail::YamlScalar<int64_t>(lm, "lm", "bptt", c.lm_train.bptt);
    c.lm_train.lr = detail::YamlScalar<double>(lm, "lm", "lr", c.lm_train.lr);
    c.lm_train.beta1 =
        detail::YamlScalar<double>(lm, "lm", "beta1", c.lm_train.beta1);
    c.lm_train.beta2 =
        detail::YamlScalar<double>(lm, "lm", "beta2", c.lm_train.beta2);
    c.lm_train.adam_eps =
        detail::YamlScalar<double>(lm, "lm", "adam_eps", c.lm_train.adam_eps);
    c.lm_train.clip =
        detail::YamlScalar<double>(lm, "lm", "clip", c.lm_train.clip);
    c.lm_train.val_fraction = detail::YamlScalar<double>(
        lm, "lm", "val_fraction", c.lm_train.val_fraction);
    c.lm_train.seed =
        detail::YamlScalar<uint64_t>(lm, "lm", "seed", c.lm_train.seed);
    c.lm_train.Validate();

    const YAML::Node de = root["decode"];
    detail::CheckYamlKeys(de, "decode",
                          {"beam", "ctc_weight", "lm_weight", "max_len_ratio",
                           "min_len_ratio", "nbest"});
    c.decode.beam =
        detail::YamlScalar<int64_t>(de, "decode", "beam", c.decode.beam);
    c.decode.ctc_weight = detail::YamlScalar<double>(de, "decode", "ctc_weight",
                                                     c.decode.ctc_weight);
    c.decode.lm_weight = detail::YamlScalar<double>(de, "decode", "lm_weight",
                                                    c.decode.lm_weight);
    c.decode.max_len_ratio = detail::YamlScalar<double>(
        de, "decode", "max_len_ratio", c.decode.max_len_ratio);
    c.decode.min_len_ratio = detail::YamlScalar<double>(
        de, "decode", "min_len_ratio", c.decode.min_len_ratio);
    c.decode.nbest =
        detail::YamlScalar<int64_t>(de, "decode", "nbest", c.decode.nbest);
    c.decode.Validate();

    auto set_name = [](const std::filesystem::path &dir) {
      std::string name = dir.filename().string();
      ASRKIT_CHECK(!name.empty(), ConfigError,
                   "config: data dir " << dir.string()
                                       << " has no usable basename");
      return name;
    };
    c.train_name = set_name(c.train_dir);
    c.sets.emplace_back(c.train_name, c.train_dir);
    std::set<std::string> seen{c.train_name};
    for (const std::filesystem::path &d : c.decode_dirs) {
      std::string name = set_name(d);
      ASRKIT_CHECK(seen.insert(name).second, ConfigError,
                   "config: two data dirs share the basename `" << name
                                                                << "`");
      c.sets.emplace_back(name, d);
      c.decode_sets.emplace_back(name, d);
    }
    return c;
  }
};

// Sequential six-stage driver: 0 prep, 1 feats, 2 json, 3 lmtrain (optional),
// 4 asrtrain, 5 decode+score. Run() skips a stage whose `.done.<k>` marker
// carries the current config hash and whose artifacts still exist;
// stage methods called directly always execute and check only that the
// artifacts they consume are present.
class Recipe {
 public:
  explicit Recipe(const RecipeConfig &cfg, std::ostream *log = nullptr)
      : cfg_(cfg), log_(log) {}

  static const char *StageName(int64_t k) {
    static const char *names[6] = {"prep",     "feats",  "json",
                                   "lmtrain",  "asrtrain", "decode"};
    ASRKIT_CHECK(k >= 0 && k <= 5, ContractError,
                 "stage number " << k << " outside [0, 5]");
    return names[k];
  }

  const RecipeConfig &config() const { return cfg_; }

  void Run(int64_t stage, int64_t stop_stage, bool force) {
    ASRKIT_CHECK(stage >= 0 && stage <= stop_stage && stop_stage <= 5,
                 ConfigError, "run: need 0 <= stage <= stop_stage <= 5");
    std::filesystem::create_directories(cfg_.exp_dir);
    for (int64_t k = 0; k < stage; ++k) {
      ASRKIT_CHECK(MarkerFresh(k), PrereqError,
                   "stage " << k << " (" << StageName(k)
                            << ") has not completed with this config: run it "
                               "first");
    }
    for (int64_t k = stage; k <= stop_stage; ++k) {
      if (!force && MarkerFresh(k)) {
        Log("stage " + std::to_string(k) + " (" + StageName(k) +
            "): up to date, skipping");
        continue;
      }
      std::filesystem::remove(MarkerPath(k));
      RunStage(k);
      WriteMarker(k);
      Log("stage " + std::to_string(k) + " (" + StageName(k) + "): done");
    }
  }

  // Stage 0: validate the data dirs and write per-set summaries.
  void Prep() {
    std::filesystem::path out = cfg_.exp_dir / "prep";
    std::filesystem::create_directories(out);
    for (const auto &[name, dir] : cfg_.sets) {
      DataDir d = ParseDataDir(dir);
      std::set<std::string> spk;
      for (const auto &kv : d.utt2spk) spk.insert(kv.second);
      std::ostringstream os;
      os << "utts " << d.utt_ids.size() << "\n"
         << "speakers " << spk.size() << "\n";
      detail::WriteWholeFile(out / (name + ".txt"), os.str());
      Log("stage 0 (prep): " + name + ": " + std::to_string(d.utt_ids.size()) +
          " utterances, " + std::to_string(spk.size()) + " speakers");
    }
  }

  // Stage 1: log-mel extraction for wav-backed sets; for feature-backed sets,
  // resolve and validate the referenced archives. Either way writes
  // feats/<set>.scp mapping every utterance to its archive.
  void Feats() {
    std::filesystem::path out = cfg_.exp_dir / "feats";
    std::filesystem::create_directories(out);
    for (const auto &[name, dir] : cfg_.sets) {
      DataDir d = ParseDataDir(dir);
      std::map<std::string, std::string> scp;
      if (d.has_wav()) {
        std::filesystem::path ark = out / (name + ".ark");
        ExtractResult res = ExtractDir(d, cfg_.fbank, ark);
        ASRKIT_CHECK(res.failures.empty(), DataError,
                     "feats: " << name << ": " << res.failures.size()
                               << " utterances failed, first "
                               << res.failures[0].utt_id << ": "
                               << res.failures[0].message);
        for (const auto &kv : res.index) scp[kv.first] = ark.string();
      } else {
        std::map<std::string, std::vector<std::string>> by_ark;
        for (const auto &kv : d.feats) {
          std::filesystem::path p(kv.second);
          if (!p.is_absolute()) p = dir / p;
          by_ark[p.lexically_normal().string()].push_back(kv.first);
        }
        for (const auto &[ark, ids] : by_ark) {
          auto entries = ReadTextArk(ark);
          for (const std::string &id : ids) {
            ASRKIT_CHECK(entries.find(id) != entries.end(), DataError,
                         ark << ": no feature matrix for " << id);
            scp[id] = ark;
          }
        }
      }
      std::ostringstream os;
      for (const auto &kv : scp) os << kv.first << " " << kv.second << "\n";
      detail::WriteWholeFile(out / (name + ".scp"), os.str());
      Log("stage 1 (feats): " + name + ": " + std::to_string(scp.size()) +
          " utterances indexed");
    }
  }

  // Stage 2: build the token table from the train transcripts, then write one
  // data json per set.
  void Json() {
    for (const auto &[name, dir] : cfg_.sets) {
      (void)dir;
      ASRKIT_CHECK(
          std::filesystem::exists(ScpPath(name)), PrereqError,
          "json: missing " << ScpPath(name).string()
                           << ": run stage 1 (feats) first");
    }
    DataDir train = ParseDataDir(cfg_.train_dir);
    std::vector<std::string> texts;
    for (const auto &kv : train.transcripts) texts.push_back(kv.second);
    TokenTable table = TokenTable::Build(texts);
    table.Save(TokensPath());
    Log("stage 2 (json): token table has " + std::to_string(table.size()) +
        " entries");

    std::filesystem::path out = cfg_.exp_dir / "json";
    std::filesystem::create_directories(out);
    for (const auto &[name, dir] : cfg_.sets) {
      DataDir d = ParseDataDir(dir);
      auto scp = detail::ParseScpLike(ScpPath(name), false);
      std::map<std::string, std::vector<std::string>> by_ark;
      for (const auto &kv : scp) by_ark[kv.second].push_back(kv.first);
      FeatsIndex index;
      for (const auto &[ark, ids] : by_ark) {
        auto entries = ReadTextArk(ark);
        for (const std::string &id : ids) {
          auto it = entries.find(id);
          ASRKIT_CHECK(it != entries.end(), DataError,
                       ark << ": no feature matrix for " << id);
          index[id] = FeatsEntry{ark, it->second.shape()[0],
                                 it->second.shape()[1]};
        }
      }
      MakeJsonResult mk = MakeJson(d, index, table);
      detail::WriteWholeFile(out / (name + ".json"), SerializeJson(mk.json));
      if (mk.unk_count > 0) {
        Log("stage 2 (json): " + name + ": " + std::to_string(mk.unk_count) +
            " out-of-vocabulary characters mapped to <unk>");
      }
    }
  }

  // Stage 3: character RNNLM on the train transcripts. Optional; disabled
  // configs write only the completion marker.
  void LmTrainStage() {
    if (!cfg_.lm_enabled) {
      Log("stage 3 (lmtrain): disabled, skipping");
      return;
    }
    ASRKIT_CHECK(std::filesystem::exists(TokensPath()), PrereqError,
                 "lmtrain: missing " << TokensPath().string()
                                     << ": run stage 2 (json) first");
    if (cfg_.precision == "float") {
      TrainLmImpl<float>();
    } else {
      TrainLmImpl<double>();
    }
  }

  // Stage 4: hybrid CTC/attention training on the train set json.
  void AsrTrainStage() {
    ASRKIT_CHECK(std::filesystem::exists(TokensPath()), PrereqError,
                 "asrtrain: missing " << TokensPath().string()
                                      << ": run stage 2 (json) first");
    ASRKIT_CHECK(std::filesystem::exists(JsonPath(cfg_.train_name)),
                 PrereqError,
                 "asrtrain: missing " << JsonPath(cfg_.train_name).string()
                                      << ": run stage 2 (json) first");
    if (cfg_.precision == "float") {
      TrainAsrImpl<float>();
    } else {
      TrainAsrImpl<double>();
    }
  }

  // Stage 5: beam-search decoding plus character and word error reports for
  // every dev/eval set.
  void DecodeStage() {
    if (cfg_.decode_sets.empty()) {
      Log("stage 5 (decode): no dev or eval sets configured");
      return;
    }
    ASRKIT_CHECK(std::filesystem::exists(TokensPath()), PrereqError,
                 "decode: missing " << TokensPath().string()
                                    << ": run stage 2 (json) first");
    for (const auto &[name, dir] : cfg_.decode_sets) {
      (void)dir;
      ASRKIT_CHECK(std::filesystem::exists(JsonPath(name)), PrereqError,
                   "decode: missing " << JsonPath(name).string()
                                      << ": run stage 2 (json) first");
    }
    ASRKIT_CHECK(std::filesystem::exists(AsrCheckpointPath()), PrereqError,
                 "decode: missing " << AsrCheckpointPath().string()
                                    << ": run stage 4 (asrtrain) first");
    if (UseFusion()) {
      ASRKIT_CHECK(std::filesystem::exists(LmCheckpointPath()), PrereqError,
                   "decode: missing " << LmCheckpointPath().string()
                                      << ": run stage 3 (lmtrain) first");
    }
    if (cfg_.precision == "float") {
      DecodeImpl<float>();
    } else {
      DecodeImpl<double>();
    }
  }

  // Rescores the hypotheses already under decode/<set> without decoding.
  void ScoreSets() {
    if (cfg_.decode_sets.empty()) {
      Log("score: no dev or eval sets configured");
      return;
    }
    for (const auto &[name, dir] : cfg_.decode_sets) {
      (void)dir;
      ASRKIT_CHECK(
          std::filesystem::exists(cfg_.exp_dir / "decode" / name / "hyp.txt"),
          PrereqError,
          "score: missing "
              << (cfg_.exp_dir / "decode" / name / "hyp.txt").string()
              << ": run stage 5 (decode) first");
    }
    for (const auto &[name, dir] : cfg_.decode_sets) ScoreOne(name, dir);
  }

 private:
  std::filesystem::path MarkerPath(int64_t k) const {
    return cfg_.exp_dir / (".done." + std::to_string(k));
  }
  std::filesystem::path ScpPath(const std::string &name) const {
    return cfg_.exp_dir / "feats" / (name + ".scp");
  }
  std::filesystem::path TokensPath() const {
    return cfg_.exp_dir / "tokens.txt";
  }
  std::filesystem::path JsonPath(const std::string &name) const {
    return cfg_.exp_dir / "json" / (name + ".json");
  }
  std::filesystem::path AsrCheckpointPath() const {
    return cfg_.exp_dir / "asr" / "model.bin";
  }
  std::filesystem::path LmCheckpointPath() const {
    return cfg_.exp_dir / "lm" / "model.bin";
  }
  bool UseFusion() const {
    return cfg_.lm_enabled && cfg_.decode.lm_weight > 0.0;
  }

  std::string HashHex() const {
    char buf[24];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(cfg_.config_hash));
    return buf;
  }

  bool ArtifactsPresent(int64_t k) const {
    namespace fs = std::filesystem;
    switch (k) {
      case 0:
        for (const auto &[name, dir] : cfg_.sets) {
          (void)dir;
          if (!fs::exists(cfg_.exp_dir / "prep" / (name + ".txt"))) {
            return false;
          }
        }
        return true;
      case 1:
        for (const auto &[name, dir] : cfg_.sets) {
          (void)dir;
          if (!fs::exists(ScpPath(name))) return false;
        }
        return true;
      case 2:
        if (!fs::exists(TokensPath())) return false;
        for (const auto &[name, dir] : cfg_.sets) {
          (void)dir;
          if (!fs::exists(JsonPath(name))) return false;
        }
        return true;
      case 3:
        return !cfg_.lm_enabled || fs::exists(LmCheckpointPath());
      case 4:
        return fs::exists(AsrCheckpointPath());
      case 5:
        for (const auto &[name, dir] : cfg_.decode_sets) {
          (void)dir;
          if (!fs::exists(cfg_.exp_dir / "decode" / name / "hyp.txt") ||
              !fs::exists(cfg_.exp_dir / "score" / name / "cer.txt") ||
              !fs::exists(cfg_.exp_dir / "score" / name / "wer.txt")) {
            return false;
          }
        }
        return true;
      default:
        return false;
    }
  }

  bool MarkerFresh(int64_t k) const {
    std::ifstream is(MarkerPath(k));
    if (!is.good()) return false;
    std::string line;
    std::getline(is, line);
    return line == HashHex() && ArtifactsPresent(k);
  }

  void WriteMarker(int64_t k) const {
    detail::WriteWholeFile(MarkerPath(k), HashHex() + "\n");
  }

  void RunStage(int64_t k) {
    switch (k) {
      case 0: Prep(); break;
      case 1: Feats(); break;
      case 2: Json(); break;
      case 3: LmTrainStage(); break;
      case 4: AsrTrainStage(); break;
      case 5: DecodeStage(); break;
      default:
        throw ContractError("stage number " + std::to_string(k) +
                            " outside [0, 5]");
    }
  }

  void Log(const std::string &line) const {
    if (log_ != nullptr) *log_ << line << "\n";
  }

  template <typename Real>
  void TrainLmImpl() {
    TokenTable table = TokenTable::Load(TokensPath());
    DataDir train = ParseDataDir(cfg_.train_dir);
    std::vector<LmExample> corpus;
    for (const auto &kv : train.transcripts) {
      corpus.push_back(LmExample{kv.first, table.Encode(kv.second)});
    }
    LmConfig lc = cfg_.lm;
    lc.vocab = table.size();
    CharRnnLm<Real> lm(lc);
    lm.InitParams(cfg_.lm_train.seed);
    LmTrainResult r = LmTrain(&lm, corpus, cfg_.lm_train);

    std::filesystem::path out = cfg_.exp_dir / "lm";
    std::filesystem::create_directories(out);
    std::ofstream metrics(out / "metrics.jsonl", std::ios::binary);
    ASRKIT_CHECK(metrics.good(), DataError,
                 "cannot write " << (out / "metrics.jsonl").string());
    for (size_t i = 0; i < r.epochs.size(); ++i) {
      char buf[160];
      std::snprintf(buf, sizeof buf,
                    "{\"epoch\":%lld,\"split\":\"train\",\"ppl\":%.17g}\n",
                    static_cast<long long>(i + 1), r.epochs[i].train_ppl);
      metrics << buf;
      std::snprintf(buf, sizeof buf,
                    "{\"epoch\":%lld,\"split\":\"val\",\"ppl\":%.17g}\n",
                    static_cast<long long>(i + 1), r.epochs[i].val_ppl);
      metrics << buf;
    }
    metrics.flush();
    ASRKIT_CHECK(metrics.good(), DataError,
                 "cannot write " << (out / "metrics.jsonl").string());
    SaveCheckpoint(lm.params(), LmCheckpointPath(), "lm", table.Checksum());
    char ppl[64];
    std::snprintf(ppl, sizeof ppl, "%.3f", r.epochs.back().val_ppl);
    Log("stage 3 (lmtrain): " + std::to_string(r.train_sequences) +
        " train sequences, final val ppl " + ppl);
  }

  template <typename Real>
  void TrainAsrImpl() {
    TokenTable table = TokenTable::Load(TokensPath());
    Dataset ds = LoadDataJson(JsonPath(cfg_.train_name));
    ASRKIT_CHECK(!ds.utts.empty(), DataError, "training dataset is empty");
    int64_t input_dim = ds.utts[0].dim;
    for (const UttRecord &u : ds.utts) {
      ASRKIT_CHECK(u.dim == input_dim, DataError,
                   "asrtrain: feature dim " << u.dim << " for " << u.id
                                            << " != " << input_dim);
    }
    AsrModel<Real> model(cfg_.Model(input_dim, table.size()));
    FitResult r =
        Fit(&model, ds, cfg_.train, cfg_.exp_dir / "asr", table.Checksum());
    char val[64];
    std::snprintf(val, sizeof val, "%.6f", r.best_val);
    Log("stage 4 (asrtrain): " + std::to_string(r.train_utts) + " train / " +
        std::to_string(r.val_utts) + " val utterances, " +
        std::to_string(r.excluded) + " excluded, best epoch " +
        std::to_string(r.best_epoch) + " (loss " + val + ")");
  }

  template <typename Real>
  void DecodeImpl() {
    TokenTable table = TokenTable::Load(TokensPath());

    Dataset first = LoadDataJson(JsonPath(cfg_.decode_sets[0].first));
    ASRKIT_CHECK(!first.utts.empty(), DataError,
                 "decode: set " << cfg_.decode_sets[0].first << " is empty");
    AsrModel<Real> model(cfg_.Model(first.utts[0].dim, table.size()));
    CheckpointInfo ai = LoadCheckpoint(AsrCheckpointPath(), &model.params());
    ASRKIT_CHECK(ai.model_type == "asr", DataError,
                 AsrCheckpointPath().string() << ": checkpoint holds a `"
                                              << ai.model_type
                                              << "` model, expected `asr`");

    CharRnnLm<Real> *lm_ptr = nullptr;
    uint64_t lm_checksum = 0;
    LmConfig lc = cfg_.lm;
    lc.vocab = table.size();
    CharRnnLm<Real> lm(lc);
    if (UseFusion()) {
      CheckpointInfo li = LoadCheckpoint(LmCheckpointPath(), &lm.params());
      ASRKIT_CHECK(li.model_type == "lm", DataError,
                   LmCheckpointPath().string() << ": checkpoint holds a `"
                                               << li.model_type
                                               << "` model, expected `lm`");
      lm_ptr = &lm;
      lm_checksum = li.token_checksum;
    }

    for (const auto &[name, dir] : cfg_.decode_sets) {
      Dataset ds = LoadDataJson(JsonPath(name));
      std::filesystem::path dec_dir = cfg_.exp_dir / "decode" / name;
      DecodeSetResult dr =
          DecodeSet(model, ai.token_checksum, lm_ptr, lm_checksum, ds, table,
                    cfg_.decode, dec_dir);
      for (const auto &[id, reason] : dr.failures) {
        Log("stage 5 (decode): " + name + ": " + id + " failed: " + reason);
      }
      ScoreOne(name, dir);
    }
  }

  void ScoreOne(const std::string &name, const std::filesystem::path &dir) {
    DataDir d = ParseDataDir(dir);
    auto hyps = detail::ParseScpLike(
        cfg_.exp_dir / "decode" / name / "hyp.txt", true);
    std::vector<ScorePair> pairs = PairById(d.transcripts, hyps);
    std::filesystem::path score_dir = cfg_.exp_dir / "score" / name;
    std::filesystem::create_directories(score_dir);
    CorpusScore cer = ScoreCorpus(pairs, ScoreUnit::kChar);
    WriteScoreReport(cer, score_dir / "cer.txt", score_dir / "cer.json");
    CorpusScore wer = ScoreCorpus(pairs, ScoreUnit::kWord);
    WriteScoreReport(wer, score_dir / "wer.txt", score_dir / "wer.json");
    auto pct = [](const ErrorCounts &c) {
      if (c.ref_len == 0 && c.errors() > 0) return std::string("inf");
      double rate = c.ref_len > 0 ? 100.0 * static_cast<double>(c.errors()) /
                                        static_cast<double>(c.ref_len)
                                  : 0.0;
      char buf[64];
      std::snprintf(buf, sizeof buf, "%.2f%%", rate);
      return std::string(buf);
    };
    Log("score: " + name + ": " + std::to_string(pairs.size()) +
        " utterances, CER " + pct(cer.total) + ", WER " + pct(wer.total));
  }

  RecipeConfig cfg_;
  std::ostream *log_;
};

}  // namespace asrkit

#endif  // ASRKIT_RECIPE_HPP_
