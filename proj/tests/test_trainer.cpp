#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "tiervc/trainer.hpp"

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

TrainConfig micro_train(uint64_t seed) {
    TrainConfig tc;
    tc.seed = seed;
    tc.batch_size = 2;
    tc.tbptt_samples = 8; // two top frames per chunk
    tc.epochs = 2;
    return tc;
}

TrainingClip make_clip(const ModelConfig& cfg, const std::string& id, int speaker, int samples,
                       uint64_t seed) {
    Rng rng = Rng(seed).derive("clip/" + id);
    TrainingClip clip;
    clip.clip_id = id;
    clip.speaker_index = speaker;
    for (int i = 0; i < samples; ++i)
        clip.codes.push_back(static_cast<uint8_t>(rng.next_below(256)));
    const int frames = (samples + cfg.frame_size_top - 1) / cfg.frame_size_top;
    clip.cond.phoneme_count = cfg.phoneme_count();
    clip.cond.frame_rate_hz = static_cast<double>(cfg.sample_rate_hz) / cfg.frame_size_top;
    for (int i = 0; i < frames * clip.cond.dim(); ++i)
        clip.cond.values.push_back(static_cast<float>(rng.next_uniform(-0.5, 0.5)));
    return clip;
}

std::vector<TrainingClip> micro_corpus(const ModelConfig& cfg) {
    // Three clips, two speakers, one clip shorter than the rest so every
    // epoch exercises padding and masking.
    return {make_clip(cfg, "a", 0, 16, 11), make_clip(cfg, "b", 1, 16, 12),
            make_clip(cfg, "c", 0, 10, 13)};
}

std::filesystem::path tmp_dir() {
    auto p = std::filesystem::temp_directory_path() / "tiervc_trainer_tests";
    std::filesystem::create_directories(p);
    return p;
}

std::string read_bytes(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    REQUIRE(f.good());
    return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

void write_bytes(const std::string& path, const std::string& bytes) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    REQUIRE(f.good());
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

std::vector<float> flat_params(ParameterStore<float>& store) {
    std::vector<float> out;
    for (auto& [_, p] : store) out.insert(out.end(), p.data->begin(), p.data->end());
    return out;
}

} // namespace

TEST_SUITE("trainer") {

TEST_CASE("first optimizer step applies the bias-corrected unit update") {
    ParameterStore<double> store;
    Tensor<double>& w = store.create("w", {1, 1});
    w.at(size_t{0}) = 5.0;
    (*w.grad)[0] = 1.0;
    AdamState<double> adam;
    adam_step(store, adam, 1, 0.001);
    // First step with g=1: both moment ratios are exactly 1, so the update
    // is -lr / (1 + eps) regardless of the gradient's magnitude history.
    const double expected = 5.0 - 0.001 / (1.0 + 1e-8);
    CHECK(w.at(size_t{0}) == expected);
    CHECK(w.at(size_t{0}) == doctest::Approx(5.0 - 0.000999999990).epsilon(1e-9));
}

TEST_CASE("zero gradient leaves parameters bit-identical") {
    ParameterStore<double> store;
    Tensor<double>& w = store.create("w", {2, 2});
    for (size_t i = 0; i < 4; ++i) w.at(i) = 1.25 * static_cast<double>(i + 1);
    AdamState<double> adam;
    for (int t = 1; t <= 3; ++t) adam_step(store, adam, t, 0.01);
    for (size_t i = 0; i < 4; ++i) CHECK(w.at(i) == 1.25 * static_cast<double>(i + 1));
}

TEST_CASE("optimizer trajectory matches an independent reference") {
    ParameterStore<double> store;
    Tensor<double>& w = store.create("w", {1, 3});
    std::vector<double> ref = {0.5, -1.0, 2.0};
    for (size_t i = 0; i < 3; ++i) w.at(i) = ref[i];

    AdamState<double> adam;
    std::vector<double> m(3, 0), v(3, 0);
    Rng rng(99);
    for (int t = 1; t <= 5; ++t) {
        std::vector<double> g(3);
        for (size_t i = 0; i < 3; ++i) {
            g[i] = rng.next_uniform(-2, 2);
            (*w.grad)[i] = g[i];
        }
        adam_step(store, adam, t, 0.07);
        for (size_t i = 0; i < 3; ++i) {
            m[i] = 0.9 * m[i] + 0.1 * g[i];
            v[i] = 0.999 * v[i] + 0.001 * g[i] * g[i];
            const double mhat = m[i] / (1.0 - std::pow(0.9, t));
            const double vhat = v[i] / (1.0 - std::pow(0.999, t));
            ref[i] -= 0.07 * mhat / (std::sqrt(vhat) + 1e-8);
            CHECK(w.at(i) == doctest::Approx(ref[i]).epsilon(1e-14));
        }
    }
}

TEST_CASE("non-finite gradient aborts and names the offending parameter") {
    ParameterStore<double> store;
    store.create("fine", {1, 1});
    Tensor<double>& bad = store.create("gru.w_z", {1, 2});
    (*bad.grad)[1] = std::nan("");
    AdamState<double> adam;
    try {
        adam_step(store, adam, 1, 0.001);
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::numeric);
        CHECK(std::string(e.what()).find("gru.w_z") != std::string::npos);
    }
}

TEST_CASE("epoch permutation is a seed-deterministic shuffle") {
    auto p1 = epoch_permutation(42, 3, 16);
    auto p2 = epoch_permutation(42, 3, 16);
    CHECK(p1 == p2);
    auto sorted = p1;
    std::sort(sorted.begin(), sorted.end());
    for (int i = 0; i < 16; ++i) CHECK(sorted[i] == i);
    CHECK(epoch_permutation(42, 4, 16) != p1); // epochs see different orders
    CHECK(epoch_permutation(43, 3, 16) != p1); // seeds see different orders
}

TEST_CASE("group assembly pads codes with silence and masks padded positions") {
    ModelConfig cfg = micro_config();
    TrainingClip a = make_clip(cfg, "a", 0, 12, 1); // 3 frames
    TrainingClip b = make_clip(cfg, "b", 1, 6, 2);  // 1.5 frames -> 2 frames
    GroupBatch g = assemble_group(cfg, {&a, &b});

    CHECK(g.group_frames == 3);
    CHECK(g.group_samples == 12);
    CHECK(g.speakers == std::vector<int>{0, 1});

    CHECK(std::equal(a.codes.begin(), a.codes.end(), g.codes[0].begin()));
    for (int i = 0; i < 12; ++i) CHECK(g.weights[0][i] == 1.0);

    CHECK(std::equal(b.codes.begin(), b.codes.end(), g.codes[1].begin()));
    for (int i = 6; i < 12; ++i) CHECK(g.codes[1][i] == 128);
    for (int i = 0; i < 6; ++i) CHECK(g.weights[1][i] == 1.0);
    for (int i = 6; i < 12; ++i) CHECK(g.weights[1][i] == 0.0);

    // Frame rows past the clip's end are PAD rows.
    const int dim = cfg.cond_feature_dim();
    CHECK(static_cast<int>(g.frames[1].size()) == 3 * dim);
    const std::vector<float> pad = conditioning_pad_row(cfg.phoneme_count());
    for (int k = 0; k < dim; ++k) CHECK(g.frames[1][2 * dim + k] == pad[k]);
    for (int k = 0; k < 2 * dim; ++k) CHECK(g.frames[1][k] == b.cond.values[k]);
}

TEST_CASE("clips that disagree with the model configuration are rejected") {
    ModelConfig cfg = micro_config();
    TrainingClip ok = make_clip(cfg, "ok", 0, 8, 3);
    CHECK_NOTHROW(validate_training_clip(cfg, ok));

    TrainingClip bad_speaker = ok;
    bad_speaker.speaker_index = 2;
    CHECK_THROWS_AS(validate_training_clip(cfg, bad_speaker), Error);

    TrainingClip bad_frames = ok;
    bad_frames.cond.values.resize(bad_frames.cond.values.size() - bad_frames.cond.dim());
    CHECK_THROWS_AS(validate_training_clip(cfg, bad_frames), Error);

    TrainingClip bad_rate = ok;
    bad_rate.cond.frame_rate_hz = 999.0;
    CHECK_THROWS_AS(validate_training_clip(cfg, bad_rate), Error);

    TrainingClip bad_phonemes = ok;
    bad_phonemes.cond.phoneme_count = 4;
    CHECK_THROWS_AS(validate_training_clip(cfg, bad_phonemes), Error);

    TrainingClip empty = ok;
    empty.codes.clear();
    CHECK_THROWS_AS(validate_training_clip(cfg, empty), Error);
}

TEST_CASE("training is bit-reproducible under a fixed seed") {
    ModelConfig cfg = micro_config();
    TrainConfig tc = micro_train(7);

    std::vector<double> losses1, losses2;
    Trainer<float> t1(cfg, tc, micro_corpus(cfg));
    t1.run([&](const StepMetrics& m) { losses1.push_back(m.bits_per_sample); });
    Trainer<float> t2(cfg, tc, micro_corpus(cfg));
    t2.run([&](const StepMetrics& m) { losses2.push_back(m.bits_per_sample); });

    REQUIRE(!losses1.empty());
    REQUIRE(losses1.size() == losses2.size());
    for (size_t i = 0; i < losses1.size(); ++i) CHECK(losses1[i] == losses2[i]);

    auto p1 = flat_params(t1.params()), p2 = flat_params(t2.params());
    REQUIRE(p1.size() == p2.size());
    CHECK(std::memcmp(p1.data(), p2.data(), p1.size() * sizeof(float)) == 0);
}

TEST_CASE("loss starts near the uniform baseline and falls on a fixed batch") {
    ModelConfig cfg = micro_config();
    TrainConfig tc;
    tc.seed = 5;
    tc.batch_size = 1;
    tc.tbptt_samples = 32;
    tc.epochs = 0;
    tc.max_steps = 60;
    tc.learning_rate = 0.02;
    std::vector<TrainingClip> corpus = {make_clip(cfg, "solo", 0, 32, 21)};
    corpus[0].codes.assign(32, 200); // a constant sequence is trivially learnable

    std::vector<double> losses;
    Trainer<float> trainer(cfg, tc, corpus);
    trainer.run([&](const StepMetrics& m) { losses.push_back(m.bits_per_sample); });

    REQUIRE(losses.size() == 60);
    // Fresh small-uniform parameters put the logits near zero, so the first
    // step scores close to the 8-bit uniform ceiling.
    CHECK(losses.front() == doctest::Approx(8.0).epsilon(0.08));
    CHECK(losses.back() < losses.front() - 0.5);
}

TEST_CASE("metrics rows carry step, split, and loss in a stable format") {
    CHECK(metrics_csv_header() == "step,split,bits_per_sample,wall_ms");
    StepMetrics m;
    m.step = 7;
    m.bits_per_sample = 8.0;
    m.wall_ms = 12.3456;
    CHECK(metrics_csv_row(m) == "7,train,8,12.346");
}

TEST_CASE("model and train configs survive a JSON round trip") {
    ModelConfig cfg = micro_config();
    ModelConfig back = model_config_from_json(model_config_to_json(cfg));
    CHECK(back.sample_rate_hz == cfg.sample_rate_hz);
    CHECK(back.frame_size_top == cfg.frame_size_top);
    CHECK(back.frame_size_mid == cfg.frame_size_mid);
    CHECK(back.sample_embed_dim == cfg.sample_embed_dim);
    CHECK(back.cond_dim == cfg.cond_dim);
    CHECK(back.hidden_top == cfg.hidden_top);
    CHECK(back.hidden_mid == cfg.hidden_mid);
    CHECK(back.cond_hidden == cfg.cond_hidden);
    CHECK(back.mlp_widths == cfg.mlp_widths);
    CHECK(back.speakers == cfg.speakers);
    CHECK(back.phonemes == cfg.phonemes);

    TrainConfig tc;
    tc.learning_rate = 0.003;
    tc.batch_size = 9;
    tc.tbptt_samples = 4000;
    tc.epochs = 12;
    tc.max_steps = 345;
    tc.grad_clip_norm = 0.0;
    tc.seed = 0xFFFFFFFFFFFFFFFFull; // full 64-bit seeds survive the header
    TrainConfig tback = train_config_from_json(train_config_to_json(tc));
    CHECK(tback.learning_rate == tc.learning_rate);
    CHECK(tback.batch_size == tc.batch_size);
    CHECK(tback.tbptt_samples == tc.tbptt_samples);
    CHECK(tback.epochs == tc.epochs);
    CHECK(tback.max_steps == tc.max_steps);
    CHECK(tback.grad_clip_norm == tc.grad_clip_norm);
    CHECK(tback.seed == tc.seed);
}

TEST_CASE("config parsing rejects unknown keys and wrong types") {
    nlohmann::json j = model_config_to_json(micro_config());
    j["hiden_top"] = 8; // typo must not be silently ignored
    try {
        model_config_from_json(j);
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::config);
        CHECK(std::string(e.what()).find("hiden_top") != std::string::npos);
    }

    nlohmann::json t = train_config_to_json(TrainConfig{});
    t["learning_rate"] = "fast";
    CHECK_THROWS_AS(train_config_from_json(t), Error);
}

TEST_CASE("checkpoints round-trip byte-identically through load and save") {
    ModelConfig cfg = micro_config();
    TrainConfig tc = micro_train(19);
    tc.epochs = 0;
    tc.max_steps = 3; // ends mid-group, so live recurrent state is captured
    Trainer<float> trainer(cfg, tc, micro_corpus(cfg));
    trainer.run();
    REQUIRE(trainer.progress().chunk > 0);

    const std::string p1 = (tmp_dir() / "round1.ckpt").string();
    const std::string p2 = (tmp_dir() / "round2.ckpt").string();
    trainer.save(p1);
    save_checkpoint(p2, load_checkpoint(p1));
    CHECK(read_bytes(p1) == read_bytes(p2));

    // Restoring a trainer and snapshotting again reproduces the same bytes.
    const std::string p3 = (tmp_dir() / "round3.ckpt").string();
    Trainer<float> restored(load_checkpoint(p1), micro_corpus(cfg));
    restored.save(p3);
    CHECK(read_bytes(p1) == read_bytes(p3));
}

TEST_CASE("corrupt checkpoint files are rejected with a format error") {
    ModelConfig cfg = micro_config();
    TrainConfig tc = micro_train(23);
    tc.epochs = 0;
    tc.max_steps = 1;
    Trainer<float> trainer(cfg, tc, micro_corpus(cfg));
    trainer.run();
    const std::string path = (tmp_dir() / "victim.ckpt").string();
    trainer.save(path);
    const std::string good = read_bytes(path);

    SUBCASE("wrong magic") {
        std::string bad = good;
        bad[0] = 'X';
        write_bytes(path, bad);
        try {
            load_checkpoint(path);
            FAIL("expected an error");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::io);
            CHECK(std::string(e.what()).find("magic") != std::string::npos);
        }
    }
    SUBCASE("unsupported version") {
        std::string bad = good;
        bad[4] = 9;
        write_bytes(path, bad);
        try {
            load_checkpoint(path);
            FAIL("expected an error");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::io);
            CHECK(std::string(e.what()).find("version") != std::string::npos);
        }
    }
    SUBCASE("truncated data section") {
        write_bytes(path, good.substr(0, good.size() - 5));
        CHECK_THROWS_AS(load_checkpoint(path), Error);
    }
    SUBCASE("truncated header") {
        write_bytes(path, good.substr(0, 20));
        CHECK_THROWS_AS(load_checkpoint(path), Error);
    }
    SUBCASE("trailing bytes") {
        write_bytes(path, good + std::string(4, '\0'));
        CHECK_THROWS_AS(load_checkpoint(path), Error);
    }
    SUBCASE("missing file") { CHECK_THROWS_AS(load_checkpoint(path + ".nope"), Error); }
}

TEST_CASE("restoring rejects tensors whose shape no longer matches") {
    ModelConfig cfg = micro_config();
    TrainConfig tc = micro_train(29);
    tc.epochs = 0;
    tc.max_steps = 1;
    Trainer<float> trainer(cfg, tc, micro_corpus(cfg));
    trainer.run();

    CheckpointData cp = trainer.snapshot();
    for (NamedArray& a : cp.arrays)
        if (a.name == "param/top.gru.w_z") std::swap(a.shape[0], a.shape[1]);
    try {
        Trainer<float> restored(cp, micro_corpus(cfg));
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::io);
        CHECK(std::string(e.what()).find("top.gru.w_z") != std::string::npos);
    }
}

TEST_CASE("interrupting and resuming reproduces uninterrupted training bit-exactly") {
    ModelConfig cfg = micro_config();
    TrainConfig tc = micro_train(31);
    tc.epochs = 0;
    tc.max_steps = 8; // two epochs' worth of chunks for this corpus

    Trainer<float> straight(cfg, tc, micro_corpus(cfg));
    straight.run();
    const std::string want = (tmp_dir() / "straight.ckpt").string();
    straight.save(want);
    const std::string want_bytes = read_bytes(want);

    // Interrupt at every possible step: mid-group, at group boundaries, and
    // at the epoch boundary; each resume must land on identical bytes.
    for (int64_t stop = 1; stop < 8; ++stop) {
        const std::string mid = (tmp_dir() / "mid.ckpt").string();
        Trainer<float> first(cfg, tc, micro_corpus(cfg));
        first.run([&](const StepMetrics& m) {
            if (m.step == stop) first.save(mid);
        });

        Trainer<float> resumed(load_checkpoint(mid), micro_corpus(cfg));
        CHECK(resumed.progress().step == stop);
        resumed.run();
        const std::string done = (tmp_dir() / "resumed.ckpt").string();
        resumed.save(done);
        CHECK(read_bytes(done) == want_bytes);
    }
}

} // TEST_SUITE
