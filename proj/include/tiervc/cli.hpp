#pragma once

#include <string>
#include <vector>

#include "tiervc/error.hpp"
#include "tiervc/trainer.hpp"

namespace tiervc {

// Named hyperparameter presets. "desk" is the 4 kHz synthetic-corpus scale
// this repo trains end to end on a CPU; "paper" is the 16 kHz full scale
// (1024-wide recurrent layers, batch 32, 8000-sample truncation). The "paper"
// preset ships with the four CMU Arctic speaker ids and an empty phoneme
// list; `train` fills the phonemes from the corpus inventory.
ModelConfig profile_model_config(const std::string& profile);
TrainConfig profile_train_config(const std::string& profile);

// One JSON document describing a run:
//   { "profile": "desk"|"paper", "seed": N,
//     "model": {...}, "train": {...},
//     "paths": { "corpus": DIR, "stats": FILE, "out_dir": DIR } }
// Every section is optional. "model"/"train" overlay the profile presets key
// by key; the top-level "seed" is shorthand for train.seed and wins over a
// seed inside "train". Unknown keys are rejected everywhere.
struct RunConfig {
    std::string profile = "desk";
    ModelConfig model;
    TrainConfig train;
    std::string corpus_dir; // paths.corpus
    std::string stats_path; // paths.stats
    std::string out_dir;    // paths.out_dir
};

RunConfig default_run_config(const std::string& profile);

// Parses a config document. A non-empty `profile_override` (the --profile
// flag) beats the document's "profile" key; both beat the "desk" default.
RunConfig parse_run_config(const std::string& json_text,
                           const std::string& profile_override = "");

// Loads every manifest clip as teacher-forcing material: mu-law codes plus
// frame-rate conditioning built from the clip's alignment, its pitch file
// and the clip's own speaker statistics. The corpus inventory must match
// cfg.phonemes exactly and every clip's sample rate must match the model's.
std::vector<TrainingClip> load_training_corpus(const std::string& corpus_dir,
                                               const std::string& stats_path,
                                               const ModelConfig& cfg);

// "usage" | "config" | "io" | "numeric"
std::string error_kind_name(ErrorKind kind);

// Full command-line dispatch. Returns the process exit code; failures are
// reported as exactly one "tiervc: <kind>: <message>" line on stderr.
int run_cli(int argc, const char* const* argv);

} // namespace tiervc
