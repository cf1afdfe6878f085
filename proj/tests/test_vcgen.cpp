#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "tiervc/synthcorpus.hpp"
#include "tiervc/vcgen.hpp"

using namespace tiervc;

namespace {

ModelConfig micro_config() {
    ModelConfig cfg;
    cfg.sample_rate_hz = 4000;
    cfg.frame_size_top = 4;
    cfg.frame_size_mid = 2;
    cfg.sample_embed_dim = 3;
    cfg.cond_dim = 5;
    cfg.hidden_top = 6;
    cfg.hidden_mid = 6;
    cfg.cond_hidden = 4;
    cfg.mlp_widths = {6, 6};
    cfg.speakers = {"s0", "s1"};
    cfg.phonemes = {"PAD", "SIL", "aa"};
    return cfg;
}

TrainingClip constant_clip(const ModelConfig& cfg, const std::string& id, int speaker,
                           int samples, uint8_t code, uint64_t seed) {
    Rng rng = Rng(seed).derive("clip/" + id);
    TrainingClip clip;
    clip.clip_id = id;
    clip.speaker_index = speaker;
    clip.codes.assign(samples, code);
    const int frames = (samples + cfg.frame_size_top - 1) / cfg.frame_size_top;
    clip.cond.phoneme_count = cfg.phoneme_count();
    clip.cond.frame_rate_hz = static_cast<double>(cfg.sample_rate_hz) / cfg.frame_size_top;
    for (int i = 0; i < frames * clip.cond.dim(); ++i)
        clip.cond.values.push_back(static_cast<float>(rng.next_uniform(-0.5, 0.5)));
    return clip;
}

// A micro model whose two speakers were trained onto different constant
// codes, so the speaker embedding visibly controls the output.
CheckpointData speaker_coded_checkpoint() {
    const ModelConfig mc = micro_config();
    TrainConfig tc;
    tc.seed = 5;
    tc.batch_size = 2;
    tc.tbptt_samples = 8;
    tc.epochs = 0;
    tc.max_steps = 80;
    tc.learning_rate = 0.02;
    std::vector<TrainingClip> corpus = {constant_clip(mc, "a", 0, 16, 200, 21),
                                        constant_clip(mc, "b", 1, 16, 60, 22)};
    Trainer<float> trainer(mc, tc, corpus);
    trainer.run();
    return trainer.snapshot();
}

ConditioningSequence random_cond(const ModelConfig& cfg, int frames, uint64_t seed) {
    Rng rng(seed);
    ConditioningSequence cond;
    cond.phoneme_count = cfg.phoneme_count();
    cond.frame_rate_hz = static_cast<double>(cfg.sample_rate_hz) / cfg.frame_size_top;
    for (int i = 0; i < frames * cond.dim(); ++i)
        cond.values.push_back(static_cast<float>(rng.next_uniform(-0.5, 0.5)));
    return cond;
}

std::filesystem::path tmp_dir() {
    auto p = std::filesystem::temp_directory_path() / "tiervc_vcgen_tests";
    std::filesystem::create_directories(p);
    return p;
}

} // namespace

TEST_SUITE("vcgen") {

TEST_CASE("zero temperature decodes the argmax with lowest-index ties") {
    Rng rng(1);
    std::vector<float> logits = {0.1f, 2.5f, -1.0f, 2.5f};
    CHECK(sample_code(logits, 0.0, rng) == 1); // first of the two equal maxima
    logits[3] = 3.0f;
    CHECK(sample_code(logits, 0.0, rng) == 3);
    CHECK_THROWS_AS(sample_code(logits, -0.5, rng), Error);
    CHECK_THROWS_AS(sample_code({}, 1.0, rng), Error);
}

TEST_CASE("positive temperature samples the softmax distribution") {
    // Logits ln(1), ln(2), ln(4): probabilities 1/7, 2/7, 4/7 at temperature 1.
    const std::vector<float> logits = {0.0f, static_cast<float>(std::log(2.0)),
                                       static_cast<float>(std::log(4.0))};
    Rng rng(99);
    const int n = 20000;
    std::array<int, 3> counts{};
    for (int i = 0; i < n; ++i) counts[sample_code(logits, 1.0, rng)] += 1;
    CHECK(counts[0] / static_cast<double>(n) == doctest::Approx(1.0 / 7).epsilon(0.15));
    CHECK(counts[1] / static_cast<double>(n) == doctest::Approx(2.0 / 7).epsilon(0.10));
    CHECK(counts[2] / static_cast<double>(n) == doctest::Approx(4.0 / 7).epsilon(0.06));

    // A huge temperature flattens the distribution toward uniform.
    Rng rng2(7);
    std::array<int, 3> flat{};
    for (int i = 0; i < n; ++i) flat[sample_code(logits, 1e6, rng2)] += 1;
    for (int c : flat) CHECK(c / static_cast<double>(n) == doctest::Approx(1.0 / 3).epsilon(0.10));

    // Same stream, same draws.
    Rng a(5), b(5);
    for (int i = 0; i < 200; ++i)
        CHECK(sample_code(logits, 0.8, a) == sample_code(logits, 0.8, b));
}

TEST_CASE("sample loop reproduces teacher-forced scoring bit for bit") {
    const ModelConfig cfg = micro_config();
    ParameterStore<float> store;
    ModelParams<float> params = ModelParams<float>::attach(store, cfg);
    init_params(store, 31);

    const int frames = 4;
    const int t_len = frames * cfg.frame_size_top;
    Rng rng(77);
    std::vector<uint8_t> codes;
    for (int i = 0; i < t_len; ++i) codes.push_back(static_cast<uint8_t>(rng.next_below(256)));
    Tensor<float> cond = Tensor<float>::zeros({frames, cfg.cond_dim});
    for (size_t i = 0; i < cond.numel(); ++i)
        cond.at(i) = static_cast<float>(rng.next_uniform(-1.0, 1.0));

    // Fast path, teacher-forced: record logits, feed back the true codes.
    std::vector<std::vector<float>> rows;
    auto recorder = [&](const std::vector<float>& logits) {
        rows.push_back(logits);
        return static_cast<int>(codes[rows.size() - 1]);
    };
    const std::vector<uint8_t> echoed = run_sample_loop(cfg, params, cond, recorder);
    CHECK(echoed == codes);
    REQUIRE(static_cast<int>(rows.size()) == t_len);

    // Cross-entropy of the recorded logits, mirroring the scoring op's math.
    double nats = 0;
    for (int i = 0; i < t_len; ++i) {
        const auto& row = rows[i];
        double mx = row[0];
        for (float v : row) mx = std::max(mx, static_cast<double>(v));
        double sum = 0;
        for (float v : row) sum += std::exp(static_cast<double>(v) - mx);
        nats += mx + std::log(sum) - static_cast<double>(row[codes[i]]);
    }
    const float fast_bits =
        static_cast<float>(static_cast<float>(nats / t_len) * (1.0 / std::log(2.0)));

    // Tape path over the same codes and conditioning.
    Tape<float> tape;
    TierState<float> state = TierState<float>::initial(cfg, 1);
    ChunkScore<float> score = score_chunk(tape, params, cfg, {codes},
                                          {std::vector<double>(t_len, 1.0)}, {cond}, state);
    CHECK(score.loss_bits.at(size_t{0}) == fast_bits);
    CHECK(score.counters.mlp_rows == t_len);
}

TEST_CASE("generation emits frames x frame-size samples, deterministically") {
    const CheckpointData cp = speaker_coded_checkpoint();
    const Generator gen(cp);
    const ConditioningSequence cond = random_cond(gen.config(), 5, 3);

    std::vector<uint8_t> codes_a, codes_b;
    const AudioClip a = gen.generate(cond, "s0", 123, 1.0, &codes_a);
    const AudioClip b = gen.generate(cond, "s0", 123, 1.0, &codes_b);
    CHECK(a.sample_rate_hz == gen.config().sample_rate_hz);
    REQUIRE(a.samples.size() == 20); // 5 frames x 4 samples
    REQUIRE(codes_a.size() == 20);
    CHECK(codes_a == codes_b);
    CHECK(a.samples == b.samples);

    // A different seed gives a different sample path. The trained model
    // above is nearly deterministic, so probe with an untrained one whose
    // output distribution is still spread out.
    {
        TrainConfig tc;
        tc.seed = 5;
        tc.max_steps = 1;
        std::vector<TrainingClip> corpus = {constant_clip(micro_config(), "a", 0, 16, 200, 21)};
        const Generator fresh(Trainer<float>(micro_config(), tc, corpus).snapshot());
        std::vector<uint8_t> codes_c, codes_d;
        fresh.generate(cond, "s0", 123, 1.0, &codes_c);
        fresh.generate(cond, "s0", 124, 1.0, &codes_d);
        CHECK(codes_c != codes_d);
    }

    // Argmax decoding ignores the seed entirely.
    std::vector<uint8_t> codes_d, codes_e;
    gen.generate(cond, "s0", 1, 0.0, &codes_d);
    gen.generate(cond, "s0", 2, 0.0, &codes_e);
    CHECK(codes_d == codes_e);
}

TEST_CASE("the speaker embedding alone steers the output") {
    const CheckpointData cp = speaker_coded_checkpoint();
    const Generator gen(cp);
    const ConditioningSequence cond = random_cond(gen.config(), 8, 4);

    std::vector<uint8_t> as_s0, as_s1;
    gen.generate(cond, "s0", 55, 0.0, &as_s0);
    gen.generate(cond, "s1", 55, 0.0, &as_s1);
    REQUIRE(as_s0.size() == as_s1.size());

    // The model was trained to emit 200 for s0 and 60 for s1.
    int hit0 = 0, hit1 = 0, differ = 0;
    for (size_t i = 0; i < as_s0.size(); ++i) {
        hit0 += as_s0[i] == 200;
        hit1 += as_s1[i] == 60;
        differ += as_s0[i] != as_s1[i];
    }
    CHECK(hit0 > static_cast<int>(as_s0.size() * 0.6));
    CHECK(hit1 > static_cast<int>(as_s1.size() * 0.6));
    CHECK(differ > static_cast<int>(as_s0.size() * 0.01));
}

TEST_CASE("content extraction normalizes with the source statistics") {
    const PhonemeInventory inv = PhonemeInventory::from_symbols({"PAD", "SIL", "aa"});
    PhonemeAlignment align;
    align.segments.push_back({0.0, 0.01, "aa"});

    F0Contour f0;
    f0.frame_period_sec = 0.001;
    for (int i = 0; i < 10; ++i) {
        F0Frame f;
        f.voiced = true;
        f.f0_hz = 100.0 + 10.0 * i; // rising contour
        f0.frames.push_back(f);
    }
    SpeakerStats stats{"src", std::log(120.0), 0.2, 50};
    const ConditioningSequence cond = extract_content(align, f0, stats, inv);
    REQUIRE(cond.frame_count() == 10);
    const int xp = 5 * cond.phoneme_count; // normalized log-F0 column
    for (int i = 0; i < 10; ++i) {
        const double expect = (std::log(100.0 + 10.0 * i) - stats.mu) / stats.sigma;
        CHECK(cond.row(i)[xp] == doctest::Approx(expect).epsilon(1e-6));
        CHECK(cond.row(i)[xp + 1] == 1.0f); // voiced flag
        if (i > 0) CHECK(cond.row(i)[xp] > cond.row(i - 1)[xp]); // affine keeps order
    }

    // Identical to the training featurization of the same inputs.
    const ConditioningSequence direct = build_conditioning(align, normalize_f0(f0, stats), inv);
    CHECK(cond.values == direct.values);

    SpeakerStats degenerate{"src", 4.5, 0.0, 3};
    CHECK_THROWS_AS(extract_content(align, f0, degenerate, inv), Error);
}

TEST_CASE("batch conversion collects per-clip failures and keeps going") {
    const CheckpointData cp = speaker_coded_checkpoint();
    const Generator gen(cp);
    const auto dir = tmp_dir();

    // One valid source clip on disk.
    PhonemeAlignment align;
    align.segments.push_back({0.0, 0.008, "aa"}); // 8 frames at 1 ms
    save_alignment_file((dir / "ok.align").string(), align);
    F0Contour f0;
    f0.frame_period_sec = gen.config().frame_period_sec();
    for (int i = 0; i < 8; ++i) {
        F0Frame f;
        f.voiced = true;
        f.f0_hz = 150.0;
        f0.frames.push_back(f);
    }
    save_f0_file((dir / "ok.f0.csv").string(), f0);

    SpeakerStats stats{"src", std::log(150.0), 0.1, 40};
    std::vector<ConversionJob> jobs = {
        {"ok", (dir / "ok.align").string(), (dir / "ok.f0.csv").string(),
         (dir / "ok_converted.wav").string()},
        {"missing", (dir / "no_such.align").string(), (dir / "ok.f0.csv").string(),
         (dir / "missing_converted.wav").string()},
    };
    const auto outcomes = convert_batch(gen, jobs, stats, "s1", 7, 1.0);
    REQUIRE(outcomes.size() == 2);

    CHECK(outcomes[0].ok);
    CHECK(outcomes[0].error.empty());
    CHECK(outcomes[0].stats.samples == 32); // 8 frames x 4 samples
    CHECK(outcomes[0].stats.wall_ms >= 0);
    const AudioClip written = wav_read((dir / "ok_converted.wav").string());
    CHECK(written.samples.size() == 32);

    CHECK_FALSE(outcomes[1].ok);
    CHECK(outcomes[1].error.find("no_such.align") != std::string::npos);
    CHECK_FALSE(std::filesystem::exists(dir / "missing_converted.wav"));

    CHECK(gen_stats_csv_header() == "clip,samples,wall_ms,samples_per_sec");
    const std::string row = gen_stats_csv_row(outcomes[0].stats);
    CHECK(row.substr(0, 6) == "ok,32,");

    // Conversion is reproducible: same jobs, same seed, same bytes.
    std::vector<ConversionJob> again = {
        {"ok", (dir / "ok.align").string(), (dir / "ok.f0.csv").string(),
         (dir / "ok_again.wav").string()}};
    convert_batch(gen, again, stats, "s1", 7, 1.0);
    std::ifstream f1(dir / "ok_converted.wav", std::ios::binary);
    std::ifstream f2(dir / "ok_again.wav", std::ios::binary);
    const std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    const std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    CHECK(b1 == b2);
}

TEST_CASE("generator rejects mismatched inputs and damaged checkpoints") {
    const CheckpointData cp = speaker_coded_checkpoint();
    const Generator gen(cp);

    ConditioningSequence wrong_p = random_cond(gen.config(), 3, 8);
    wrong_p.phoneme_count = 7;
    CHECK_THROWS_AS(gen.generate(wrong_p, "s0", 1, 1.0), Error);

    ConditioningSequence wrong_rate = random_cond(gen.config(), 3, 8);
    wrong_rate.frame_rate_hz *= 2;
    CHECK_THROWS_AS(gen.generate(wrong_rate, "s0", 1, 1.0), Error);

    const ConditioningSequence cond = random_cond(gen.config(), 3, 8);
    CHECK_THROWS_AS(gen.generate(cond, "nobody", 1, 1.0), Error);

    CheckpointData missing = cp;
    missing.arrays.erase(
        std::remove_if(missing.arrays.begin(), missing.arrays.end(),
                       [](const NamedArray& a) { return a.name == "param/mlp.fc3.b"; }),
        missing.arrays.end());
    try {
        Generator broken(missing);
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::io);
        CHECK(std::string(e.what()).find("mlp.fc3.b") != std::string::npos);
    }
}

} // TEST_SUITE
