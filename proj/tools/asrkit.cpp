// tools/asrkit.cpp

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

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "asrkit/recipe.hpp"

namespace {

// Exit codes: 0 success, 2 config error, 3 missing prerequisite, 4 any other
// failure.
constexpr int kExitConfig = 2;
constexpr int kExitPrereq = 3;
constexpr int kExitRuntime = 4;

}  // namespace

int main(int argc, char **argv) {
  CLI::App app{"hybrid CTC/attention end-to-end speech recognition pipeline"};
  app.require_subcommand(1);

  std::string config;
  int64_t stage = 0;
  int64_t stop_stage = 5;
  bool force = false;
  CLI::App *run = app.add_subcommand("run", "run pipeline stages in order");
  run->add_option("--config", config, "experiment config (YAML)")->required();
  run->add_option("--stage", stage, "first stage to run (0-5)");
  run->add_option("--stop-stage", stop_stage, "last stage to run (0-5)");
  run->add_flag("--force", force, "re-run stages even if up to date");

  auto stage_cmd = [&](const char *name, const char *help) {
    CLI::App *cmd = app.add_subcommand(name, help);
    cmd->add_option("--config", config, "experiment config (YAML)")
        ->required();
    return cmd;
  };
  CLI::App *prep = stage_cmd("prep", "stage 0: validate the data dirs");
  CLI::App *feats = stage_cmd("feats", "stage 1: log-mel feature extraction");
  CLI::App *json = stage_cmd("json", "stage 2: token table and data json");
  CLI::App *lmtrain = stage_cmd("lmtrain", "stage 3: character RNNLM");
  CLI::App *asrtrain = stage_cmd("asrtrain", "stage 4: hybrid model training");
  CLI::App *decode =
      stage_cmd("decode", "stage 5: beam search and error reports");
  CLI::App *score = stage_cmd("score", "rescore existing hypotheses");

  std::optional<int64_t> beam, nbest;
  std::optional<double> ctc_weight, lm_weight, max_len_ratio, min_len_ratio;
  decode->add_option("--beam", beam, "beam width");
  decode->add_option("--ctc_weight", ctc_weight, "CTC weight in [0, 1]");
  decode->add_option("--lm_weight", lm_weight, "LM fusion weight");
  decode->add_option("--max_len_ratio", max_len_ratio,
                     "max output length as a fraction of encoder frames");
  decode->add_option("--min_len_ratio", min_len_ratio,
                     "min output length as a fraction of encoder frames");
  decode->add_option("--nbest", nbest, "hypotheses to keep per utterance");

  std::string synth_out;
  asrkit::SynthConfig sc;
  CLI::App *synth =
      app.add_subcommand("synth", "generate a synthetic wav-free corpus");
  synth->add_option("--out", synth_out, "output corpus dir")->required();
  synth->add_option("--seed", sc.seed, "generator seed");
  synth->add_option("--num_train", sc.num_train, "train utterances");
  synth->add_option("--num_test", sc.num_test, "test utterances");
  synth->add_option("--vocab_size", sc.vocab_size, "symbols (at most 26)");
  synth->add_option("--frames_per_symbol", sc.frames_per_symbol,
                    "frames emitted per symbol");
  synth->add_option("--noise_sigma", sc.noise_sigma,
                    "feature noise standard deviation");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp &e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp &e) {
    return app.exit(e);
  } catch (const CLI::ParseError &e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (*synth) {
      asrkit::SynthCorpus(sc, synth_out);
      std::cout << "wrote " << sc.num_train << " train and " << sc.num_test
                << " test utterances under " << synth_out << "\n";
      return 0;
    }
    asrkit::RecipeConfig cfg = asrkit::RecipeConfig::Load(config);
    if (*decode) {
      if (beam) cfg.decode.beam = *beam;
      if (ctc_weight) cfg.decode.ctc_weight = *ctc_weight;
      if (lm_weight) cfg.decode.lm_weight = *lm_weight;
      if (max_len_ratio) cfg.decode.max_len_ratio = *max_len_ratio;
      if (min_len_ratio) cfg.decode.min_len_ratio = *min_len_ratio;
      if (nbest) cfg.decode.nbest = *nbest;
      cfg.decode.Validate();
    }
    asrkit::Recipe recipe(cfg, &std::cout);
    if (*run) {
      recipe.Run(stage, stop_stage, force);
    } else if (*prep) {
      recipe.Prep();
    } else if (*feats) {
      recipe.Feats();
    } else if (*json) {
      recipe.Json();
    } else if (*lmtrain) {
      recipe.LmTrainStage();
    } else if (*asrtrain) {
      recipe.AsrTrainStage();
    } else if (*decode) {
      recipe.DecodeStage();
    } else if (*score) {
      recipe.ScoreSets();
    }
  } catch (const asrkit::ConfigError &e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const asrkit::PrereqError &e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitPrereq;
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return 0;
}
