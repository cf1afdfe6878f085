#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "tiervc/audio.hpp"
#include "tiervc/features.hpp"
#include "tiervc/model.hpp"
#include "tiervc/rng.hpp"
#include "tiervc/trainer.hpp"

namespace tiervc {

// Content extraction for conversion: exactly the training featurization
// pipeline, with the *source* speaker's pitch statistics. The target voice
// enters later, through the speaker embedding alone.
ConditioningSequence extract_content(const PhonemeAlignment& alignment, const F0Contour& f0,
                                     const SpeakerStats& source_stats,
                                     const PhonemeInventory& inventory);

// Picks a code from unnormalized logits. Temperature 0 is exact argmax with
// ties broken toward the lowest code; positive temperatures sample the
// softmax of logits/temperature using the given stream.
int sample_code(const std::vector<float>& logits, double temperature, Rng& rng);

// Invocation tallies for one generation pass, one counter per tier.
struct TierCounts {
    long top = 0;  // top-tier recurrent steps (one per conditioning frame)
    long mid = 0;  // middle-tier recurrent steps
    long samp = 0; // sample-MLP evaluations (one per emitted code)
};

// Runs the tier cascade over `cond` [frames x cond_dim] and calls `pick`
// once per sample position with that position's logits; the returned code
// feeds back as autoregressive context. Plain float math that reproduces
// the teacher-forced scoring path bit for bit, without a tape. Emits
// exactly frames * frame_size_top codes. When `counts` is given, it is
// overwritten with this pass's tier invocation tallies.
std::vector<uint8_t> run_sample_loop(const ModelConfig& cfg, const ModelParams<float>& p,
                                     const Tensor<float>& cond,
                                     const std::function<int(const std::vector<float>&)>& pick,
                                     TierCounts* counts = nullptr);

struct GenerationStats {
    std::string clip_id;
    long samples = 0;
    double wall_ms = 0;
    double samples_per_sec = 0;
};

std::string gen_stats_csv_header();
std::string gen_stats_csv_row(const GenerationStats& s);

// A trained model loaded from a checkpoint, ready to generate.
class Generator {
  public:
    explicit Generator(const CheckpointData& cp);

    const ModelConfig& config() const { return cfg_; }
    const ModelParams<float>& params() const { return model_; }
    PhonemeInventory inventory() const;

    // Whole-utterance generation. The conditioning context (including the
    // bidirectional pass) is precomputed over the full utterance, and every
    // recurrent state is reset here, exactly once. Output holds
    // frame_count * frame_size_top samples; the emitted code sequence is
    // also stored in *codes when given.
    AudioClip generate(const ConditioningSequence& cond, const std::string& target_speaker,
                       uint64_t seed, double temperature,
                       std::vector<uint8_t>* codes = nullptr) const;

  private:
    ModelConfig cfg_;
    ParameterStore<float> store_;
    ModelParams<float> model_;
};

// One source clip to convert.
struct ConversionJob {
    std::string clip_id;
    std::string alignment_path;
    std::string f0_path;
    std::string out_wav_path;
};

struct ConversionOutcome {
    std::string clip_id;
    bool ok = false;
    std::string error; // the per-clip failure message when !ok
    GenerationStats stats;
};

// Batch driver: converts every job to `target_speaker`, writing one WAV per
// source clip. Per-clip failures are collected in the outcome list and the
// batch continues. Each clip samples from its own stream derived from
// (seed, clip id), so outputs do not depend on batch order or composition.
std::vector<ConversionOutcome> convert_batch(const Generator& gen,
                                             const std::vector<ConversionJob>& jobs,
                                             const SpeakerStats& source_stats,
                                             const std::string& target_speaker, uint64_t seed,
                                             double temperature);

} // namespace tiervc
