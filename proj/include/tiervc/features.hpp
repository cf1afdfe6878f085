#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

namespace tiervc {

// Ordered phoneme symbol set. PAD (index 0) marks positions beyond the
// utterance edges; SIL is ordinary silence inside an utterance.
struct PhonemeInventory {
    static constexpr const char* kPad = "PAD";
    static constexpr const char* kSil = "SIL";

    std::vector<std::string> symbols;
    std::map<std::string, int> index;

    static PhonemeInventory from_symbols(std::vector<std::string> symbols);
    int at(const std::string& symbol) const; // unknown symbol -> error
    int size() const { return static_cast<int>(symbols.size()); }
};

struct AlignSegment {
    double start_sec = 0;
    double end_sec = 0;
    std::string symbol;
};

// Non-overlapping, sorted segments tiling [0, duration].
struct PhonemeAlignment {
    std::vector<AlignSegment> segments;
    double duration_sec() const { return segments.empty() ? 0.0 : segments.back().end_sec; }
};

struct F0Frame {
    double f0_hz = 0;
    bool voiced = false;
};

struct F0Contour {
    double frame_period_sec = 0.005;
    std::vector<F0Frame> frames;
};

// Per-frame normalized log-F0 (x' value) plus the voiced flag.
struct NormF0Frame {
    double x_prime = 0;
    bool voiced = false;
};

struct NormalizedF0 {
    double frame_period_sec = 0.005;
    std::vector<NormF0Frame> frames;
};

// Per-speaker voiced log-F0 statistics (population standard deviation).
struct SpeakerStats {
    std::string speaker_id;
    double mu = 0;
    double sigma = 0;
    long frame_count = 0;
};

// Frame-rate conditioning matrix. Each row is
//   [5 one-hot blocks of size P | normalized log-F0 | voiced flag]
// for the context (prev2, prev1, current, next1, next2).
struct ConditioningSequence {
    int phoneme_count = 0; // P
    double frame_rate_hz = 0;
    std::vector<float> values; // row-major, frame_count x dim

    int dim() const { return 5 * phoneme_count + 2; }
    int frame_count() const { return dim() == 0 ? 0 : static_cast<int>(values.size()) / dim(); }
    const float* row(int f) const { return values.data() + static_cast<size_t>(f) * dim(); }
};

// Conditioning row used for padding past the end of a clip: every one-hot
// block points at PAD, x' = 0, voiced = 0.
std::vector<float> conditioning_pad_row(int phoneme_count);

SpeakerStats compute_speaker_stats(const std::string& speaker_id,
                                   const std::vector<F0Contour>& contours);

NormalizedF0 normalize_f0(const F0Contour& contour, const SpeakerStats& stats);

double denormalize_f0(double x_prime, const SpeakerStats& stats);

// Indices of (prev2, prev1, current, next1, next2) for the segment containing
// the frame's center time; positions past either edge give PAD.
std::array<int, 5> phoneme_context(const PhonemeAlignment& alignment,
                                   const PhonemeInventory& inventory, int frame_index,
                                   double frame_period_sec);

ConditioningSequence build_conditioning(const PhonemeAlignment& alignment,
                                        const NormalizedF0& contour,
                                        const PhonemeInventory& inventory);

// File formats (all UTF-8):
//   alignment: "start_sec<TAB>end_sec<TAB>symbol" per line
//   f0:        CSV with header "frame,f0_hz,voiced"
//   inventory: one symbol per line, order defines indices, PAD first
//   stats:     CSV with header "speaker_id,mu,sigma,frames"
PhonemeAlignment parse_alignment_file(const std::string& path, const PhonemeInventory& inventory);
F0Contour parse_f0_file(const std::string& path, double frame_period_sec);
PhonemeInventory load_inventory(const std::string& path);
void save_inventory(const std::string& path, const PhonemeInventory& inventory);
std::map<std::string, SpeakerStats> load_speaker_stats(const std::string& path);
void save_speaker_stats(const std::string& path, const std::vector<SpeakerStats>& stats);
void save_alignment_file(const std::string& path, const PhonemeAlignment& alignment);
void save_f0_file(const std::string& path, const F0Contour& contour);

} // namespace tiervc
