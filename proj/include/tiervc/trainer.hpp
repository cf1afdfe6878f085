#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "tiervc/condnet.hpp"
#include "tiervc/features.hpp"
#include "tiervc/model.hpp"
#include "tiervc/rng.hpp"
#include "tiervc/tensor.hpp"

#include "json.hpp"

namespace tiervc {

// ---------------------------------------------------------------------------
// Configuration

struct TrainConfig {
    double learning_rate = 0.001;
    int batch_size = 4;
    int tbptt_samples = 2000; // gradient-truncation chunk length, in samples
    int epochs = 1;           // full passes over the corpus; 0 = unlimited (needs max_steps)
    int64_t max_steps = 0;    // hard cap on optimization steps; 0 = no cap
    double grad_clip_norm = 1.0; // global-norm gradient clip; 0 = off
    uint64_t seed = 1;

    void validate(const ModelConfig& model) const;
};

nlohmann::json model_config_to_json(const ModelConfig& cfg);
nlohmann::json train_config_to_json(const TrainConfig& cfg);

// The json readers overlay onto `base` key by key: absent keys keep the base
// value, unknown keys are rejected. The one-argument forms start from the
// struct defaults.
ModelConfig model_config_from_json(const nlohmann::json& j, ModelConfig base);
ModelConfig model_config_from_json(const nlohmann::json& j);
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base);
TrainConfig train_config_from_json(const nlohmann::json& j);

// ---------------------------------------------------------------------------
// Corpus representation

// One featurized utterance, ready for teacher forcing.
struct TrainingClip {
    std::string clip_id; // stable identifier; corpus order is sorted by it
    int speaker_index = 0;
    std::vector<uint8_t> codes;
    ConditioningSequence cond; // one row per full (or partial-tail) top frame
};

// A batch of clips padded to a shared length: codes padded with the silence
// code, padded positions weighted 0, conditioning rows padded with PAD rows.
struct GroupBatch {
    std::vector<std::vector<uint8_t>> codes;  // [B][group_samples]
    std::vector<std::vector<double>> weights; // [B][group_samples]
    std::vector<std::vector<float>> frames;   // [B][group_frames * feature_dim]
    std::vector<int> speakers;                // [B]
    int group_frames = 0;
    int group_samples = 0;
};

// Validates one clip against the model configuration (phoneme inventory
// width, speaker index range, frame/sample count agreement).
void validate_training_clip(const ModelConfig& cfg, const TrainingClip& clip);

GroupBatch assemble_group(const ModelConfig& cfg, const std::vector<const TrainingClip*>& clips);

// Deterministic Fisher-Yates permutation of [0, n) for one epoch; a pure
// function of (seed, epoch), independent of any other randomness consumed.
std::vector<int> epoch_permutation(uint64_t seed, int64_t epoch, int n);

// ---------------------------------------------------------------------------
// Optimizer

// First/second moment accumulators, keyed by parameter name. Stored at the
// parameter's own precision so checkpoints round-trip bit-exactly.
template <typename S>
struct AdamState {
    std::map<std::string, std::vector<S>> m;
    std::map<std::string, std::vector<S>> v;
};

// One bias-corrected Adam update over every parameter in the store, visited
// in name order. `t` is the 1-based step number used for bias correction.
// Inner arithmetic runs in double; results are stored at parameter precision.
template <typename S>
void adam_step(ParameterStore<S>& params, AdamState<S>& state, int64_t t, double lr) {
    constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    check(t >= 1, ErrorKind::config, "adam: step number must be >= 1");
    check(lr > 0, ErrorKind::config, "adam: learning rate must be positive");
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (auto& [name, p] : params) {
        auto& m = state.m[name];
        auto& v = state.v[name];
        if (m.empty()) m.assign(p.numel(), S(0));
        if (v.empty()) v.assign(p.numel(), S(0));
        check(m.size() == p.numel() && v.size() == p.numel(), ErrorKind::config,
              "adam: moment shape for '" + name + "' does not match the parameter");
        for (size_t i = 0; i < p.numel(); ++i) {
            const double g = static_cast<double>((*p.grad)[i]);
            if (!std::isfinite(g))
                throw Error(ErrorKind::numeric, "adam: non-finite gradient in '" + name + "'");
            const double mi = beta1 * static_cast<double>(m[i]) + (1.0 - beta1) * g;
            const double vi = beta2 * static_cast<double>(v[i]) + (1.0 - beta2) * g * g;
            m[i] = static_cast<S>(mi);
            v[i] = static_cast<S>(vi);
            const double step = lr * (static_cast<double>(m[i]) / bc1) /
                                (std::sqrt(static_cast<double>(v[i]) / bc2) + eps);
            (*p.data)[i] = static_cast<S>(static_cast<double>((*p.data)[i]) - step);
        }
    }
}

// ---------------------------------------------------------------------------
// Checkpoints

// Position inside the deterministic training schedule. `chunk` counts chunks
// already finished in the current group; 0 means the group has not started
// (or just finished, in which case `group` already points at the next one).
struct TrainProgress {
    int64_t step = 0;
    int64_t epoch = 0;
    int64_t group = 0;
    int64_t chunk = 0;
};

struct NamedArray {
    std::string name;
    std::vector<int> shape;
    std::vector<float> values;
};

// Everything a checkpoint file holds, in memory. `arrays` is kept sorted by
// name; values are the raw 32-bit payloads.
struct CheckpointData {
    ModelConfig model;
    TrainConfig train;
    TrainProgress progress;
    uint64_t rng_origin = 0;
    uint64_t rng_state = 0;
    std::vector<NamedArray> arrays;

    const NamedArray* find(const std::string& name) const;
};

void save_checkpoint(const std::string& path, const CheckpointData& data);
CheckpointData load_checkpoint(const std::string& path);

// ---------------------------------------------------------------------------
// Training loop

struct StepMetrics {
    int64_t step = 0; // 1-based, after the update
    std::string split = "train";
    double bits_per_sample = 0;
    double wall_ms = 0;
};

// TBPTT training driver. The whole trajectory is a pure function of
// (model config, train config, corpus): clips are visited in a seeded
// per-epoch permutation, grouped into batches that stay together for their
// full padded length, and each batch is scored chunk by chunk with recurrent
// state carried across chunks (gradients cut at chunk boundaries). One
// optimization step = one chunk.
template <typename S>
class Trainer {
public:
    Trainer(ModelConfig model_cfg, TrainConfig train_cfg, std::vector<TrainingClip> corpus)
        : mc_(std::move(model_cfg)), tc_(train_cfg), corpus_(std::move(corpus)),
          root_(train_cfg.seed) {
        mc_.validate();
        tc_.validate(mc_);
        check(!corpus_.empty(), ErrorKind::config, "trainer: corpus is empty");
        for (const auto& clip : corpus_) validate_training_clip(mc_, clip);
        model_ = ModelParams<S>::attach(store_, mc_);
        init_params(store_, tc_.seed);
    }

    // Rebuilds a trainer mid-run from a checkpoint plus the same corpus the
    // interrupted run used. Continuing from here is bit-identical to never
    // having stopped.
    Trainer(const CheckpointData& cp, std::vector<TrainingClip> corpus)
        : Trainer(cp.model, cp.train, std::move(corpus)) {
        prog_ = cp.progress;
        root_ = Rng(cp.rng_origin, cp.rng_state);
        for (auto& [name, p] : store_) {
            const NamedArray* a = cp.find("param/" + name);
            check(a != nullptr, ErrorKind::io, "checkpoint: missing tensor 'param/" + name + "'");
            copy_into(name, *a, *p.data, p.shape);
            if (const NamedArray* am = cp.find("adam_m/" + name)) {
                auto& m = adam_.m[name];
                m.resize(p.numel());
                copy_values(*am, m, p.shape, "adam_m/" + name);
            }
            if (const NamedArray* av = cp.find("adam_v/" + name)) {
                auto& v = adam_.v[name];
                v.resize(p.numel());
                copy_values(*av, v, p.shape, "adam_v/" + name);
            }
        }
        if (prog_.chunk > 0) restore_group_state(cp);
    }

    // Runs until the step/epoch budget is exhausted. `on_step` fires after
    // every optimization step (metrics row + checkpoint hook).
    void run(const std::function<void(const StepMetrics&)>& on_step = {}) {
        while (!budget_exhausted()) {
            if (!advance_to_runnable_chunk()) break; // epochs exhausted
            StepMetrics m = do_step();
            if (on_step) on_step(m);
        }
    }

    CheckpointData snapshot() const {
        CheckpointData cp;
        cp.model = mc_;
        cp.train = tc_;
        cp.progress = prog_;
        cp.rng_origin = root_.origin();
        cp.rng_state = root_.state();
        for (const auto& [name, p] : store_) {
            cp.arrays.push_back(to_array("param/" + name, p.shape, *p.data));
            auto im = adam_.m.find(name);
            auto iv = adam_.v.find(name);
            if (im != adam_.m.end()) cp.arrays.push_back(to_array("adam_m/" + name, p.shape, im->second));
            if (iv != adam_.v.end()) cp.arrays.push_back(to_array("adam_v/" + name, p.shape, iv->second));
        }
        if (state_) append_group_state(cp);
        std::sort(cp.arrays.begin(), cp.arrays.end(),
                  [](const NamedArray& a, const NamedArray& b) { return a.name < b.name; });
        return cp;
    }

    void save(const std::string& path) const { save_checkpoint(path, snapshot()); }

    ParameterStore<S>& params() { return store_; }
    const ModelConfig& model_config() const { return mc_; }
    const TrainConfig& train_config() const { return tc_; }
    const TrainProgress& progress() const { return prog_; }

private:
    bool budget_exhausted() const {
        if (tc_.max_steps > 0 && prog_.step >= tc_.max_steps) return true;
        return false;
    }

    int64_t groups_per_epoch() const {
        int64_t n = static_cast<int64_t>(corpus_.size());
        return (n + tc_.batch_size - 1) / tc_.batch_size;
    }

    // Moves progress forward past epoch/group boundaries until the cursor
    // points at a chunk that can run, materializing the group if needed.
    // Returns false when the epoch budget is used up.
    bool advance_to_runnable_chunk() {
        for (;;) {
            if (tc_.epochs > 0 && prog_.epoch >= tc_.epochs) return false;
            if (prog_.group >= groups_per_epoch()) {
                prog_.epoch += 1;
                prog_.group = 0;
                prog_.chunk = 0;
                state_.reset();
                continue;
            }
            if (!state_) materialize_group();
            if (prog_.chunk >= group_chunks()) {
                prog_.group += 1;
                prog_.chunk = 0;
                state_.reset();
                continue;
            }
            return true;
        }
    }

    void materialize_group() {
        std::vector<int> order =
            epoch_permutation(tc_.seed, prog_.epoch, static_cast<int>(corpus_.size()));
        int64_t lo = prog_.group * tc_.batch_size;
        int64_t hi = std::min<int64_t>(lo + tc_.batch_size, static_cast<int64_t>(order.size()));
        std::vector<const TrainingClip*> members;
        for (int64_t i = lo; i < hi; ++i) members.push_back(&corpus_[order[i]]);
        group_ = assemble_group(mc_, members);
        state_ = std::make_unique<TierState<S>>(
            TierState<S>::initial(mc_, static_cast<int>(members.size())));
    }

    int64_t group_chunks() const {
        return (group_.group_samples + tc_.tbptt_samples - 1) / tc_.tbptt_samples;
    }

    StepMetrics do_step() {
        auto t0 = std::chrono::steady_clock::now();
        const int fs_top = mc_.frame_size_top;
        const int feat = mc_.cond_feature_dim();
        const int batch = static_cast<int>(group_.codes.size());
        const int64_t s0 = prog_.chunk * tc_.tbptt_samples;
        const int64_t s1 = std::min<int64_t>(s0 + tc_.tbptt_samples, group_.group_samples);
        const int64_t f0 = s0 / fs_top, f1 = s1 / fs_top;

        store_.zero_grad();
        Tape<S> tape;
        std::vector<std::vector<uint8_t>> codes(batch);
        std::vector<std::vector<double>> weights(batch);
        std::vector<Tensor<S>> conds(batch);
        for (int b = 0; b < batch; ++b) {
            codes[b].assign(group_.codes[b].begin() + s0, group_.codes[b].begin() + s1);
            weights[b].assign(group_.weights[b].begin() + s0, group_.weights[b].begin() + s1);
            Tensor<S> frames = Tensor<S>::zeros({static_cast<int>(f1 - f0), feat});
            const float* src = group_.frames[b].data() + f0 * feat;
            for (size_t i = 0; i < frames.numel(); ++i) frames.at(i) = static_cast<S>(src[i]);
            conds[b] = condnet_forward(tape, model_.cond, frames, group_.speakers[b],
                                       &state_->cond[b]);
        }
        ChunkScore<S> score = score_chunk(tape, model_, mc_, codes, weights, conds, *state_);
        const double bits = static_cast<double>(score.loss_bits.item());
        check(std::isfinite(bits), ErrorKind::numeric,
              "trainer: non-finite loss at step " + std::to_string(prog_.step + 1));
        tape.backward(score.loss_bits);
        if (tc_.grad_clip_norm > 0) store_.clip_grad_norm(tc_.grad_clip_norm);
        adam_step(store_, adam_, prog_.step + 1, tc_.learning_rate);

        prog_.step += 1;
        prog_.chunk += 1;
        if (prog_.chunk >= group_chunks()) {
            prog_.group += 1;
            prog_.chunk = 0;
            state_.reset();
        }
        auto t1 = std::chrono::steady_clock::now();
        StepMetrics m;
        m.step = prog_.step;
        m.bits_per_sample = bits;
        m.wall_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
        return m;
    }

    // --- group-state (de)serialization: only present mid-group -------------

    static std::string item_tag(int b) {
        char buf[16];
        std::snprintf(buf, sizeof(buf), "%04d", b);
        return buf;
    }

    void append_group_state(CheckpointData& cp) const {
        const int batch = state_->batch();
        cp.arrays.push_back(to_array("state/top_h", state_->top_h.shape, *state_->top_h.data));
        cp.arrays.push_back(to_array("state/mid_h", state_->mid_h.shape, *state_->mid_h.data));
        for (int b = 0; b < batch; ++b) {
            NamedArray hist;
            hist.name = "state/hist/" + item_tag(b);
            hist.shape = {mc_.frame_size_top};
            for (uint8_t c : state_->history[b]) hist.values.push_back(static_cast<float>(c));
            cp.arrays.push_back(std::move(hist));
            const Tensor<S>& fh = state_->cond[b].fwd_h;
            check(fh.numel() > 0, ErrorKind::numeric,
                  "trainer: mid-group snapshot without a conditioning state");
            cp.arrays.push_back(to_array("state/cond/" + item_tag(b), fh.shape, *fh.data));
        }
    }

    void restore_group_state(const CheckpointData& cp) {
        materialize_group();
        const int batch = state_->batch();
        auto need = [&](const std::string& name) -> const NamedArray& {
            const NamedArray* a = cp.find(name);
            check(a != nullptr, ErrorKind::io, "checkpoint: missing tensor '" + name + "'");
            return *a;
        };
        copy_into("state/top_h", need("state/top_h"), *state_->top_h.data, state_->top_h.shape);
        copy_into("state/mid_h", need("state/mid_h"), *state_->mid_h.data, state_->mid_h.shape);
        for (int b = 0; b < batch; ++b) {
            const NamedArray& hist = need("state/hist/" + item_tag(b));
            check(hist.values.size() == static_cast<size_t>(mc_.frame_size_top), ErrorKind::io,
                  "checkpoint: '" + hist.name + "' has the wrong length");
            for (int i = 0; i < mc_.frame_size_top; ++i) {
                float v = hist.values[i];
                check(v >= 0 && v <= 255 && v == std::floor(v), ErrorKind::io,
                      "checkpoint: '" + hist.name + "' holds a non-code value");
                state_->history[b][i] = static_cast<uint8_t>(v);
            }
            const NamedArray& ch = need("state/cond/" + item_tag(b));
            state_->cond[b].fwd_h = Tensor<S>::zeros({1, mc_.cond_hidden});
            copy_into(ch.name, ch, *state_->cond[b].fwd_h.data, state_->cond[b].fwd_h.shape);
        }
    }

    template <typename V>
    static NamedArray to_array(std::string name, const std::vector<int>& shape, const V& values) {
        NamedArray a;
        a.name = std::move(name);
        a.shape = shape;
        a.values.reserve(values.size());
        for (auto v : values) a.values.push_back(static_cast<float>(v));
        return a;
    }

    template <typename V>
    static void copy_values(const NamedArray& src, V& dst, const std::vector<int>& shape,
                            const std::string& name) {
        check(src.shape == shape, ErrorKind::io,
              "checkpoint: tensor '" + name + "' has shape mismatching the configuration");
        check(src.values.size() == dst.size(), ErrorKind::io,
              "checkpoint: tensor '" + name + "' has the wrong element count");
        for (size_t i = 0; i < dst.size(); ++i)
            dst[i] = static_cast<typename V::value_type>(src.values[i]);
    }

    template <typename V>
    static void copy_into(const std::string& name, const NamedArray& src, V& dst,
                          const std::vector<int>& shape) {
        copy_values(src, dst, shape, name);
    }

    ModelConfig mc_;
    TrainConfig tc_;
    std::vector<TrainingClip> corpus_;
    ParameterStore<S> store_;
    ModelParams<S> model_;
    AdamState<S> adam_;
    Rng root_;
    TrainProgress prog_;
    GroupBatch group_;                     // current group (derived, never saved)
    std::unique_ptr<TierState<S>> state_;  // live only mid-group
};

// Formats one metrics row; callers append it (plus the header on a fresh
// file) to the CSV log.
std::string metrics_csv_header();
std::string metrics_csv_row(const StepMetrics& m);

} // namespace tiervc
