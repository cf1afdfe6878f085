#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "tiervc/audio.hpp"
#include "tiervc/error.hpp"
#include "tiervc/rng.hpp"

using namespace tiervc;

namespace {

std::filesystem::path tmp_dir() {
    auto p = std::filesystem::temp_directory_path() / "tiervc_audio_tests";
    std::filesystem::create_directories(p);
    return p;
}

} // namespace

TEST_SUITE("audiocodec") {

TEST_CASE("companding endpoints and code mapping") {
    CHECK(mulaw_encode_sample(1.0) == 255);
    CHECK(mulaw_encode_sample(-1.0) == 0);
    CHECK(mulaw_encode_sample(0.0) == 128); // (0+1)/2*255 = 127.5 rounds up
    CHECK(mulaw_decode_sample(255) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(mulaw_decode_sample(0) == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(mulaw_decode_sample(128) == doctest::Approx(8.62114e-05).epsilon(1e-5));
}

TEST_CASE("companding curve is exactly odd") {
    for (double x : {0.0, 1e-6, 0.01, 0.3, 0.777, 1.0})
        CHECK(mulaw_compand(-x) == -mulaw_compand(x));
}

TEST_CASE("out-of-range samples: tolerated within 1e-6, rejected beyond") {
    CHECK(mulaw_encode_sample(1.0 + 5e-7) == 255);
    CHECK(mulaw_encode_sample(-1.0 - 5e-7) == 0);
    CHECK_THROWS_AS(mulaw_encode_sample(1.01), Error);
    CHECK_THROWS_AS(mulaw_decode_sample(256), Error);
    CHECK_THROWS_AS(mulaw_decode_sample(-1), Error);
}

TEST_CASE("encode is monotone, decode strictly increasing") {
    int prev_code = 0;
    for (int i = 0; i <= 2000; ++i) {
        double x = -1.0 + 2.0 * i / 2000.0;
        int code = mulaw_encode_sample(x);
        if (i > 0) CHECK(code >= prev_code);
        prev_code = code;
    }
    double prev = mulaw_decode_sample(0);
    for (int c = 1; c <= 255; ++c) {
        double v = mulaw_decode_sample(c);
        CHECK(v > prev);
        prev = v;
    }
}

TEST_CASE("10001-point sweep: companded round-trip error is at most one code width") {
    double worst = 0;
    for (int i = 0; i <= 10000; ++i) {
        double x = -1.0 + 2.0 * i / 10000.0;
        double rt = mulaw_decode_sample(mulaw_encode_sample(x));
        worst = std::max(worst, std::abs(mulaw_compand(rt) - mulaw_compand(x)));
    }
    CHECK(worst <= 1.0 / 255.0);
}

TEST_CASE("clip-level encode/decode preserves length and rate") {
    AudioClip clip;
    clip.sample_rate_hz = 4000;
    clip.samples = {0.0f, 0.5f, -0.5f, 1.0f, -1.0f};
    QuantizedClip q = mulaw_encode(clip);
    CHECK(q.codes.size() == 5);
    CHECK(q.sample_rate_hz == 4000);
    CHECK(q.codes[0] == 128);
    AudioClip back = mulaw_decode(q);
    CHECK(back.samples.size() == 5);
    CHECK(back.sample_rate_hz == 4000);
    CHECK(back.samples[3] == doctest::Approx(1.0f));
}

TEST_CASE("wav write/read round-trip on a ramp") {
    AudioClip clip;
    clip.sample_rate_hz = 16000;
    for (int i = 0; i < 100; ++i) clip.samples.push_back(-1.0f + 2.0f * i / 99.0f);
    auto path = (tmp_dir() / "ramp.wav").string();
    wav_write(path, clip);
    AudioClip back = wav_read(path);
    REQUIRE(back.samples.size() == clip.samples.size());
    CHECK(back.sample_rate_hz == 16000);
    double worst = 0;
    for (size_t i = 0; i < clip.samples.size(); ++i)
        worst = std::max(worst, std::abs(static_cast<double>(back.samples[i]) - clip.samples[i]));
    CHECK(worst <= 1.0 / 32768.0);
}

TEST_CASE("wav round-trip of an empty clip") {
    AudioClip clip;
    clip.sample_rate_hz = 8000;
    auto path = (tmp_dir() / "empty.wav").string();
    wav_write(path, clip);
    AudioClip back = wav_read(path);
    CHECK(back.samples.empty());
    CHECK(back.sample_rate_hz == 8000);
}

TEST_CASE("wav reader names the offending header field") {
    // Hand-build a stereo header.
    std::string h;
    auto u32 = [&](uint32_t v) { h.append(reinterpret_cast<const char*>(&v), 4); };
    auto u16 = [&](uint16_t v) { h.append(reinterpret_cast<const char*>(&v), 2); };
    h.append("RIFF");
    u32(36);
    h.append("WAVE");
    h.append("fmt ");
    u32(16);
    u16(1);     // PCM
    u16(2);     // stereo -> unsupported
    u32(16000); // rate
    u32(64000);
    u16(4);
    u16(16);
    h.append("data");
    u32(0);
    auto path = (tmp_dir() / "stereo.wav").string();
    std::ofstream(path, std::ios::binary) << h;
    try {
        wav_read(path);
        FAIL("expected an error for a stereo file");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::io);
        CHECK(std::string(e.what()).find("num_channels") != std::string::npos);
    }
}

TEST_CASE("wav reader rejects non-wav and truncated input") {
    auto path = (tmp_dir() / "junk.bin").string();
    std::ofstream(path, std::ios::binary) << "this is not audio";
    CHECK_THROWS_AS(wav_read(path), Error);
    CHECK_THROWS_AS(wav_read((tmp_dir() / "missing.wav").string()), Error);
}

TEST_CASE("peak normalization") {
    AudioClip clip;
    clip.sample_rate_hz = 4000;
    clip.samples = {0.5f, -0.25f};
    AudioClip out = peak_normalize(clip);
    CHECK(out.samples[0] == doctest::Approx(1.0f));
    CHECK(out.samples[1] == doctest::Approx(-0.5f));

    AudioClip zeros;
    zeros.sample_rate_hz = 4000;
    zeros.samples = {0.0f, 0.0f};
    CHECK(peak_normalize(zeros).samples == zeros.samples);

    AudioClip empty;
    empty.sample_rate_hz = 4000;
    CHECK_THROWS_AS(peak_normalize(empty), Error);

    // Property: after normalization the peak is 0 (all-zero) or exactly 1.
    Rng rng(3);
    AudioClip r;
    r.sample_rate_hz = 4000;
    for (int i = 0; i < 257; ++i) r.samples.push_back(static_cast<float>(rng.next_uniform(-0.7, 0.7)));
    AudioClip rn = peak_normalize(r);
    float peak = 0;
    for (float s : rn.samples) peak = std::max(peak, std::abs(s));
    CHECK(peak == doctest::Approx(1.0f).epsilon(1e-6));
}

} // TEST_SUITE
