#include "tiervc/audio.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iostream>

#include "tiervc/error.hpp"

namespace tiervc {

namespace {

constexpr double kMu = 255.0;
const double kLog1pMu = std::log(1.0 + kMu); // ln 256

double sign(double x) { return x < 0 ? -1.0 : 1.0; }

} // namespace

double mulaw_compand(double x) {
    return sign(x) * std::log(1.0 + kMu * std::abs(x)) / kLog1pMu;
}

uint8_t mulaw_encode_sample(double x) {
    if (std::abs(x) > 1.0) {
        check(std::abs(x) <= 1.0 + 1e-6, ErrorKind::numeric,
              "mulaw_encode: sample " + std::to_string(x) + " outside [-1,1]");
        std::cerr << "mulaw_encode: clamping out-of-range sample " << x << "\n";
        x = std::clamp(x, -1.0, 1.0);
    }
    double f = mulaw_compand(x);
    // std::round rounds halfway cases away from zero; the argument is
    // non-negative here so this is also round-half-up.
    double code = std::round((f + 1.0) / 2.0 * 255.0);
    return static_cast<uint8_t>(std::clamp(code, 0.0, 255.0));
}

double mulaw_decode_sample(int code) {
    check(code >= 0 && code <= 255, ErrorKind::numeric,
          "mulaw_decode: code " + std::to_string(code) + " outside [0,255]");
    double y = 2.0 * code / 255.0 - 1.0;
    return sign(y) * (std::pow(1.0 + kMu, std::abs(y)) - 1.0) / kMu;
}

QuantizedClip mulaw_encode(const AudioClip& clip) {
    QuantizedClip q;
    q.sample_rate_hz = clip.sample_rate_hz;
    q.codes.reserve(clip.samples.size());
    for (float s : clip.samples) q.codes.push_back(mulaw_encode_sample(s));
    return q;
}

AudioClip mulaw_decode(const QuantizedClip& q) {
    AudioClip clip;
    clip.sample_rate_hz = q.sample_rate_hz;
    clip.samples.reserve(q.codes.size());
    for (uint8_t c : q.codes) clip.samples.push_back(static_cast<float>(mulaw_decode_sample(c)));
    return clip;
}

namespace {

uint32_t read_u32(const std::vector<char>& buf, size_t off) {
    uint32_t v;
    std::memcpy(&v, buf.data() + off, 4);
    return v; // little-endian host assumed (x86/arm)
}

uint16_t read_u16(const std::vector<char>& buf, size_t off) {
    uint16_t v;
    std::memcpy(&v, buf.data() + off, 2);
    return v;
}

void append_u32(std::string& out, uint32_t v) { out.append(reinterpret_cast<const char*>(&v), 4); }
void append_u16(std::string& out, uint16_t v) { out.append(reinterpret_cast<const char*>(&v), 2); }

} // namespace

AudioClip wav_read(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    check(in.good(), ErrorKind::io, "wav_read: cannot open '" + path + "'");
    std::vector<char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    check(buf.size() >= 12, ErrorKind::io, "wav_read: '" + path + "' too short for a RIFF header");
    check(std::memcmp(buf.data(), "RIFF", 4) == 0 && std::memcmp(buf.data() + 8, "WAVE", 4) == 0,
          ErrorKind::io, "wav_read: '" + path + "' is not a RIFF/WAVE file");

    bool have_fmt = false;
    int channels = 0, bits = 0, rate = 0, format = 0;
    AudioClip clip;
    bool have_data = false;

    size_t off = 12;
    while (off + 8 <= buf.size()) {
        char id[5] = {buf[off], buf[off + 1], buf[off + 2], buf[off + 3], 0};
        uint32_t size = read_u32(buf, off + 4);
        size_t body = off + 8;
        check(body + size <= buf.size(), ErrorKind::io,
              "wav_read: '" + path + "' chunk '" + id + "' extends past end of file");
        if (std::memcmp(id, "fmt ", 4) == 0) {
            check(size >= 16, ErrorKind::io, "wav_read: fmt chunk too small");
            format = read_u16(buf, body);
            channels = read_u16(buf, body + 2);
            rate = static_cast<int>(read_u32(buf, body + 4));
            bits = read_u16(buf, body + 14);
            have_fmt = true;
        } else if (std::memcmp(id, "data", 4) == 0) {
            check(have_fmt, ErrorKind::io, "wav_read: data chunk before fmt chunk");
            check(format == 1, ErrorKind::io,
                  "wav_read: audio_format=" + std::to_string(format) + ", only PCM (1) supported");
            check(channels == 1, ErrorKind::io,
                  "wav_read: num_channels=" + std::to_string(channels) + ", only mono supported");
            check(bits == 16, ErrorKind::io,
                  "wav_read: bits_per_sample=" + std::to_string(bits) + ", only 16 supported");
            check(size % 2 == 0, ErrorKind::io, "wav_read: odd data chunk size");
            size_t n = size / 2;
            clip.samples.resize(n);
            for (size_t i = 0; i < n; ++i) {
                int16_t s;
                std::memcpy(&s, buf.data() + body + 2 * i, 2);
                clip.samples[i] = static_cast<float>(s) / 32768.0f;
            }
            clip.sample_rate_hz = rate;
            have_data = true;
        }
        off = body + size + (size % 2); // chunks are word-aligned
    }
    check(have_data, ErrorKind::io, "wav_read: '" + path + "' has no data chunk");
    check(clip.sample_rate_hz > 0, ErrorKind::io, "wav_read: sample rate is zero");
    return clip;
}

void wav_write(const std::string& path, const AudioClip& clip) {
    check(clip.sample_rate_hz > 0, ErrorKind::config, "wav_write: sample rate must be positive");
    std::string pcm;
    pcm.reserve(clip.samples.size() * 2);
    for (float s : clip.samples) {
        double v = std::round(static_cast<double>(s) * 32768.0);
        int16_t q = static_cast<int16_t>(std::clamp(v, -32768.0, 32767.0));
        pcm.append(reinterpret_cast<const char*>(&q), 2);
    }
    std::string out;
    out.reserve(44 + pcm.size());
    out.append("RIFF");
    append_u32(out, static_cast<uint32_t>(36 + pcm.size()));
    out.append("WAVE");
    out.append("fmt ");
    append_u32(out, 16);
    append_u16(out, 1); // PCM
    append_u16(out, 1); // mono
    append_u32(out, static_cast<uint32_t>(clip.sample_rate_hz));
    append_u32(out, static_cast<uint32_t>(clip.sample_rate_hz * 2)); // byte rate
    append_u16(out, 2);                                              // block align
    append_u16(out, 16);                                             // bits per sample
    out.append("data");
    append_u32(out, static_cast<uint32_t>(pcm.size()));
    out.append(pcm);

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    check(f.good(), ErrorKind::io, "wav_write: cannot open '" + path + "' for writing");
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    check(f.good(), ErrorKind::io, "wav_write: write to '" + path + "' failed");
}

AudioClip peak_normalize(const AudioClip& clip) {
    check(!clip.samples.empty(), ErrorKind::config, "peak_normalize: empty clip");
    float peak = 0;
    for (float s : clip.samples) peak = std::max(peak, std::abs(s));
    AudioClip out = clip;
    if (peak > 0)
        for (float& s : out.samples) s /= peak;
    return out;
}

} // namespace tiervc
