#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "tiervc/audio.hpp"
#include "tiervc/features.hpp"
#include "tiervc/rng.hpp"

namespace tiervc {

inline constexpr int kHarmonics = 8;

// A synthetic "voice": a fundamental-frequency range and a fixed relative
// amplitude per harmonic. The harmonic profile stands in for timbre; it is
// what conversion is supposed to change.
struct SpeakerTemplate {
    std::string speaker_id;
    double f0_low_hz = 0;
    double f0_high_hz = 0;
    std::array<double, kHarmonics> harmonics{}; // non-negative, sums to 1

    void validate() const;
};

// A synthetic "sound unit": which harmonics it lets through. SIL is the
// all-off unvoiced unit. The mask stands in for linguistic content; it is
// what conversion is supposed to preserve.
struct PseudoPhoneme {
    std::string symbol;
    std::array<bool, kHarmonics> active{};
    bool voiced = false;
};

// The four built-in desk-scale voices. F0 ranges are disjoint and the
// harmonic profiles are pairwise separable (cosine < 0.8), so "sounds like
// speaker k" is objectively measurable.
std::vector<SpeakerTemplate> desk_speaker_templates();

// SIL plus eight voiced units, each masking out exactly one harmonic.
std::vector<PseudoPhoneme> desk_phonemes();

// PAD, SIL, then the voiced units, in desk_phonemes() order.
PhonemeInventory desk_inventory();

// Smooth random pitch trajectory: log-F0 is a sum of two slow sinusoids
// around the midpoint of the speaker's range, so f0(t) stays inside
// [low, high] by construction.
struct F0Model {
    double mid_log = 0;
    double amp1 = 0, freq1_hz = 0, phase1 = 0;
    double amp2 = 0, freq2_hz = 0, phase2 = 0;

    double at(double t_sec) const;
};

F0Model random_f0_model(const SpeakerTemplate& spk, Rng& rng);

// Maps a source pitch model into the target speaker's range the same way
// generation does: normalize log-F0 with source statistics, denormalize
// with target statistics. Affine in log-F0, so the result is again a model.
F0Model map_f0_model(const F0Model& source, const SpeakerStats& source_stats,
                     const SpeakerStats& target_stats);

// One planned utterance: a phoneme segmentation plus the pitch model that
// generated (and exactly describes) its ground-truth contour.
struct ClipPlan {
    PhonemeAlignment alignment;
    F0Model f0;
};

// Random segmentation covering exactly `frames * frame_period` seconds with
// segment durations in [50, 250] ms and roughly 20% silence.
ClipPlan plan_clip(const SpeakerTemplate& spk, const std::vector<PseudoPhoneme>& phonemes,
                   int frames, double frame_period_sec, Rng& rng);

// Ground-truth contour: one frame per conditioning frame, sampled at frame
// centers; unvoiced frames carry f0 = 0.
F0Contour ground_truth_contour(const ClipPlan& plan, const std::vector<PseudoPhoneme>& phonemes,
                               int frames, double frame_period_sec);

// Additive synthesis of `samples` samples at `sample_rate_hz`: one running
// phase (continuous through pitch changes), harmonic amplitudes are the
// speaker profile gated by the active phoneme's mask, slewed over 4 ms at
// segment boundaries. Harmonics at or above Nyquist are dropped (reported
// on stderr once per clip). The result is peak-normalized.
AudioClip synth_clip(const SpeakerTemplate& spk, const std::vector<PseudoPhoneme>& phonemes,
                     const PhonemeAlignment& alignment, const F0Model& f0, int samples,
                     int sample_rate_hz);

// ---------------------------------------------------------------------------
// Corpus generation

struct CorpusSpec {
    std::string out_dir;
    int clips_per_speaker = 50;
    double clip_seconds = 1.0; // nominal; actual lengths vary +-20% on the frame grid
    int sample_rate_hz = 4000;
    int frame_size_top = 80; // samples per conditioning frame
    uint64_t seed = 1;

    void validate() const;
};

struct ManifestRow {
    std::string speaker_id;
    std::string clip_id;
    std::string wav;   // paths relative to the corpus directory
    std::string align;
    std::string f0;
    double seconds = 0;
};

// Writes wav/, align/, f0/, inventory.txt and manifest.csv under
// spec.out_dir and returns the manifest. Same spec => byte-identical corpus.
std::vector<ManifestRow> synth_corpus(const CorpusSpec& spec);

void save_manifest(const std::string& path, const std::vector<ManifestRow>& rows);
std::vector<ManifestRow> load_manifest(const std::string& path);

// ---------------------------------------------------------------------------
// Objective evaluation

// Median normalized harmonic amplitude profile over voiced frames, measured
// by single-bin windowed Fourier projection at k*f0 (Hann window, ~3 pitch
// periods). Errors if fewer than 30% of frames are voiced.
std::array<double, kHarmonics> measure_timbre(const AudioClip& clip, const F0Contour& f0);

// Frame-wise pitch tracking by normalized autocorrelation, search range
// [50, 500] Hz, parabolic peak refinement. To suppress octave errors the
// smallest lag whose peak reaches 85% of the global maximum wins. Frames
// whose best peak is below 0.3 are unvoiced.
F0Contour measure_f0(const AudioClip& clip, double frame_period_sec);

double cosine_similarity(const std::array<double, kHarmonics>& a,
                         const std::array<double, kHarmonics>& b);

struct ConversionReport {
    double cos_to_target = 0;       // cosine(measured profile, target template)
    double cos_to_source = 0;       // cosine(measured profile, source template)
    double timbre_score = 0;        // cos_to_target - cos_to_source; > 0 means converted
    double f0_median_rel_err = 0;   // vs. the target-range-mapped source contour
    double voicing_agreement = 0;   // fraction of frames agreeing with the source
    int voiced_frames_compared = 0; // frames voiced in both contours
};

// Scores one converted clip against (a) the target timbre template, (b) the
// source pitch contour mapped into the target's range, (c) the source
// voicing pattern.
ConversionReport eval_conversion(const AudioClip& converted, const F0Contour& source_f0,
                                 const SpeakerStats& source_stats,
                                 const SpeakerTemplate& source_template,
                                 const SpeakerTemplate& target_template,
                                 const SpeakerStats& target_stats);

} // namespace tiervc
