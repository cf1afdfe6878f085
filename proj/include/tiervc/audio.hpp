#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace tiervc {

struct AudioClip {
    std::vector<float> samples; // in [-1, 1]
    int sample_rate_hz = 0;
};

struct QuantizedClip {
    std::vector<uint8_t> codes; // 256-level alphabet
    int sample_rate_hz = 0;
};

// Companding curve F(x) = sign(x) * ln(1 + 255|x|) / ln(256), mapping
// [-1,1] onto [-1,1]. Exposed so tests can measure quantization error in the
// companded domain, where the code grid is uniform.
double mulaw_compand(double x);

// code = round_half_away_from_zero((F(x)+1)/2 * 255). Values outside [-1,1]
// by at most 1e-6 are clamped with a warning; anything further is an error.
uint8_t mulaw_encode_sample(double x);

// Exact inverse of the code grid: y = 2*code/255 - 1, x = sign(y)*(256^|y|-1)/255.
double mulaw_decode_sample(int code);

QuantizedClip mulaw_encode(const AudioClip& clip);
AudioClip mulaw_decode(const QuantizedClip& q);

// RIFF/WAVE PCM 16-bit mono little-endian only.
AudioClip wav_read(const std::string& path);
void wav_write(const std::string& path, const AudioClip& clip);

// Scales a nonzero clip so max |sample| is exactly 1; all-zero input is
// returned unchanged. Empty input is an error.
AudioClip peak_normalize(const AudioClip& clip);

} // namespace tiervc
