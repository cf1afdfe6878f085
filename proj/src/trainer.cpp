#include "tiervc/trainer.hpp"

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "tiervc/textio.hpp"

namespace tiervc {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Configuration

void TrainConfig::validate(const ModelConfig& model) const {
    check(learning_rate > 0, ErrorKind::config, "train: learning rate must be positive");
    check(batch_size >= 1, ErrorKind::config, "train: batch size must be >= 1");
    check(tbptt_samples >= model.frame_size_top, ErrorKind::config,
          "train: truncation length must cover at least one top frame");
    check(tbptt_samples % model.frame_size_top == 0, ErrorKind::config,
          "train: truncation length " + std::to_string(tbptt_samples) +
              " is not a multiple of the top frame size " +
              std::to_string(model.frame_size_top));
    check(epochs >= 0 && max_steps >= 0, ErrorKind::config,
          "train: epochs and max_steps must be non-negative");
    check(epochs > 0 || max_steps > 0, ErrorKind::config,
          "train: either epochs or max_steps must bound the run");
    check(grad_clip_norm >= 0, ErrorKind::config, "train: gradient clip must be >= 0 (0 = off)");
}

namespace {

// Strict JSON object reader: every present key must be known, absent keys
// keep their defaults, wrong types are reported with the key name.
class ObjectReader {
public:
    ObjectReader(const json& j, std::string context) : j_(j), context_(std::move(context)) {
        check(j_.is_object(), ErrorKind::config, context_ + ": expected a JSON object");
    }

    void read_int(const char* key, int& out) {
        if (!j_.contains(key)) return;
        const json& v = j_.at(key);
        check(v.is_number_integer(), ErrorKind::config, where(key) + " must be an integer");
        out = v.get<int>();
        seen_.push_back(key);
    }
    void read_i64(const char* key, int64_t& out) {
        if (!j_.contains(key)) return;
        const json& v = j_.at(key);
        check(v.is_number_integer(), ErrorKind::config, where(key) + " must be an integer");
        out = v.get<int64_t>();
        seen_.push_back(key);
    }
    void read_u64(const char* key, uint64_t& out) {
        if (!j_.contains(key)) return;
        const json& v = j_.at(key);
        check(v.is_number_integer() && (!v.is_number_integer() || v.is_number_unsigned() ||
                                        v.get<int64_t>() >= 0),
              ErrorKind::config, where(key) + " must be a non-negative integer");
        out = v.get<uint64_t>();
        seen_.push_back(key);
    }
    void read_double(const char* key, double& out) {
        if (!j_.contains(key)) return;
        const json& v = j_.at(key);
        check(v.is_number(), ErrorKind::config, where(key) + " must be a number");
        out = v.get<double>();
        seen_.push_back(key);
    }
    void read_int_list(const char* key, std::vector<int>& out) {
        if (!j_.contains(key)) return;
        const json& v = j_.at(key);
        check(v.is_array(), ErrorKind::config, where(key) + " must be an array of integers");
        out.clear();
        for (const json& e : v) {
            check(e.is_number_integer(), ErrorKind::config,
                  where(key) + " must be an array of integers");
            out.push_back(e.get<int>());
        }
        seen_.push_back(key);
    }
    void read_string_list(const char* key, std::vector<std::string>& out) {
        if (!j_.contains(key)) return;
        const json& v = j_.at(key);
        check(v.is_array(), ErrorKind::config, where(key) + " must be an array of strings");
        out.clear();
        for (const json& e : v) {
            check(e.is_string(), ErrorKind::config, where(key) + " must be an array of strings");
            out.push_back(e.get<std::string>());
        }
        seen_.push_back(key);
    }

    // Call after all read_* calls: rejects keys nothing consumed.
    void finish() const {
        for (const auto& [key, _] : j_.items())
            check(std::find(seen_.begin(), seen_.end(), key) != seen_.end(), ErrorKind::config,
                  context_ + ": unknown key '" + key + "'");
    }

private:
    std::string where(const char* key) const { return context_ + ": '" + std::string(key) + "'"; }

    const json& j_;
    std::string context_;
    std::vector<std::string> seen_;
};

} // namespace

json model_config_to_json(const ModelConfig& cfg) {
    json j;
    j["sample_rate_hz"] = cfg.sample_rate_hz;
    j["frame_size_top"] = cfg.frame_size_top;
    j["frame_size_mid"] = cfg.frame_size_mid;
    j["quant_levels"] = cfg.quant_levels;
    j["sample_embed_dim"] = cfg.sample_embed_dim;
    j["cond_dim"] = cfg.cond_dim;
    j["hidden_top"] = cfg.hidden_top;
    j["hidden_mid"] = cfg.hidden_mid;
    j["cond_hidden"] = cfg.cond_hidden;
    j["mlp_widths"] = cfg.mlp_widths;
    j["speakers"] = cfg.speakers;
    j["phonemes"] = cfg.phonemes;
    return j;
}

ModelConfig model_config_from_json(const json& j, ModelConfig cfg) {
    ObjectReader r(j, "model config");
    r.read_int("sample_rate_hz", cfg.sample_rate_hz);
    r.read_int("frame_size_top", cfg.frame_size_top);
    r.read_int("frame_size_mid", cfg.frame_size_mid);
    r.read_int("quant_levels", cfg.quant_levels);
    r.read_int("sample_embed_dim", cfg.sample_embed_dim);
    r.read_int("cond_dim", cfg.cond_dim);
    r.read_int("hidden_top", cfg.hidden_top);
    r.read_int("hidden_mid", cfg.hidden_mid);
    r.read_int("cond_hidden", cfg.cond_hidden);
    r.read_int_list("mlp_widths", cfg.mlp_widths);
    r.read_string_list("speakers", cfg.speakers);
    r.read_string_list("phonemes", cfg.phonemes);
    r.finish();
    return cfg;
}

ModelConfig model_config_from_json(const json& j) {
    return model_config_from_json(j, ModelConfig{});
}

json train_config_to_json(const TrainConfig& cfg) {
    json j;
    j["learning_rate"] = cfg.learning_rate;
    j["batch_size"] = cfg.batch_size;
    j["tbptt_samples"] = cfg.tbptt_samples;
    j["epochs"] = cfg.epochs;
    j["max_steps"] = cfg.max_steps;
    j["grad_clip_norm"] = cfg.grad_clip_norm;
    j["seed"] = cfg.seed;
    return j;
}

TrainConfig train_config_from_json(const json& j, TrainConfig cfg) {
    ObjectReader r(j, "train config");
    r.read_double("learning_rate", cfg.learning_rate);
    r.read_int("batch_size", cfg.batch_size);
    r.read_int("tbptt_samples", cfg.tbptt_samples);
    r.read_int("epochs", cfg.epochs);
    r.read_i64("max_steps", cfg.max_steps);
    r.read_double("grad_clip_norm", cfg.grad_clip_norm);
    r.read_u64("seed", cfg.seed);
    r.finish();
    return cfg;
}

TrainConfig train_config_from_json(const json& j) {
    return train_config_from_json(j, TrainConfig{});
}

// ---------------------------------------------------------------------------
// Corpus assembly

void validate_training_clip(const ModelConfig& cfg, const TrainingClip& clip) {
    const std::string who = "clip '" + clip.clip_id + "'";
    check(!clip.codes.empty(), ErrorKind::config, who + ": no samples");
    check(clip.speaker_index >= 0 &&
              clip.speaker_index < static_cast<int>(cfg.speakers.size()),
          ErrorKind::config, who + ": speaker index " + std::to_string(clip.speaker_index) +
                                 " out of range");
    check(clip.cond.phoneme_count == cfg.phoneme_count(), ErrorKind::config,
          who + ": conditioning was built with " + std::to_string(clip.cond.phoneme_count) +
              " phonemes, model expects " + std::to_string(cfg.phoneme_count()));
    const double want_rate = static_cast<double>(cfg.sample_rate_hz) / cfg.frame_size_top;
    check(std::abs(clip.cond.frame_rate_hz - want_rate) < 1e-6 * want_rate, ErrorKind::config,
          who + ": conditioning frame rate " + std::to_string(clip.cond.frame_rate_hz) +
              " does not match the model's " + std::to_string(want_rate));
    const int64_t frames_needed =
        (static_cast<int64_t>(clip.codes.size()) + cfg.frame_size_top - 1) / cfg.frame_size_top;
    check(clip.cond.frame_count() == frames_needed, ErrorKind::config,
          who + ": " + std::to_string(clip.codes.size()) + " samples need " +
              std::to_string(frames_needed) + " conditioning frames, got " +
              std::to_string(clip.cond.frame_count()));
}

GroupBatch assemble_group(const ModelConfig& cfg, const std::vector<const TrainingClip*>& clips) {
    check(!clips.empty(), ErrorKind::config, "group: no clips");
    for (const TrainingClip* c : clips) validate_training_clip(cfg, *c);

    GroupBatch g;
    const int fs_top = cfg.frame_size_top;
    for (const TrainingClip* c : clips)
        g.group_frames = std::max(g.group_frames, c->cond.frame_count());
    g.group_samples = g.group_frames * fs_top;

    const std::vector<float> pad_row = conditioning_pad_row(cfg.phoneme_count());
    for (const TrainingClip* c : clips) {
        const size_t t_len = c->codes.size();
        std::vector<uint8_t> codes(c->codes);
        codes.resize(g.group_samples, 128); // silence beyond the clip
        std::vector<double> weights(t_len, 1.0);
        weights.resize(g.group_samples, 0.0); // padded positions carry no loss
        std::vector<float> frames(c->cond.values);
        for (int f = c->cond.frame_count(); f < g.group_frames; ++f)
            frames.insert(frames.end(), pad_row.begin(), pad_row.end());
        g.codes.push_back(std::move(codes));
        g.weights.push_back(std::move(weights));
        g.frames.push_back(std::move(frames));
        g.speakers.push_back(c->speaker_index);
    }
    return g;
}

std::vector<int> epoch_permutation(uint64_t seed, int64_t epoch, int n) {
    check(n > 0, ErrorKind::config, "permutation: need at least one element");
    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    Rng r = Rng(seed).derive("shuffle", static_cast<uint64_t>(epoch));
    for (int i = n - 1; i >= 1; --i) {
        int j = static_cast<int>(r.next_below(static_cast<uint64_t>(i) + 1));
        std::swap(order[i], order[j]);
    }
    return order;
}

// ---------------------------------------------------------------------------
// Checkpoint file format
//
//   bytes 0..3   magic "CSRN"
//   bytes 4..7   format version, u32 little-endian
//   bytes 8..11  header length H, u32 little-endian
//   bytes 12..   UTF-8 JSON header (configs, progress, rng, tensor directory)
//   then         one raw little-endian float32 array per directory entry,
//                in directory order; offsets are relative to the data start.

namespace {

constexpr char kMagic[4] = {'C', 'S', 'R', 'N'};
constexpr uint32_t kVersion = 1;

void put_u32(std::string& out, uint32_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
    out.push_back(static_cast<char>((v >> 16) & 0xff));
    out.push_back(static_cast<char>((v >> 24) & 0xff));
}

uint32_t get_u32(const std::string& s, size_t off) {
    return static_cast<uint32_t>(static_cast<unsigned char>(s[off])) |
           static_cast<uint32_t>(static_cast<unsigned char>(s[off + 1])) << 8 |
           static_cast<uint32_t>(static_cast<unsigned char>(s[off + 2])) << 16 |
           static_cast<uint32_t>(static_cast<unsigned char>(s[off + 3])) << 24;
}

void put_f32(std::string& out, float f) {
    uint32_t bits;
    std::memcpy(&bits, &f, sizeof(bits));
    put_u32(out, bits);
}

float get_f32(const std::string& s, size_t off) {
    uint32_t bits = get_u32(s, off);
    float f;
    std::memcpy(&f, &bits, sizeof(f));
    return f;
}

size_t shape_numel(const std::vector<int>& shape, const std::string& name) {
    check(!shape.empty(), ErrorKind::io, "checkpoint: tensor '" + name + "' has an empty shape");
    size_t n = 1;
    for (int d : shape) {
        check(d > 0, ErrorKind::io,
              "checkpoint: tensor '" + name + "' has a non-positive dimension");
        n *= static_cast<size_t>(d);
    }
    return n;
}

} // namespace

const NamedArray* CheckpointData::find(const std::string& name) const {
    for (const NamedArray& a : arrays)
        if (a.name == name) return &a;
    return nullptr;
}

void save_checkpoint(const std::string& path, const CheckpointData& data) {
    for (size_t i = 0; i + 1 < data.arrays.size(); ++i)
        check(data.arrays[i].name < data.arrays[i + 1].name, ErrorKind::config,
              "checkpoint: tensor directory must be sorted and unique, '" +
                  data.arrays[i].name + "' precedes '" + data.arrays[i + 1].name + "'");

    json tensors = json::array();
    uint64_t offset = 0;
    for (const NamedArray& a : data.arrays) {
        check(a.values.size() == shape_numel(a.shape, a.name), ErrorKind::config,
              "checkpoint: tensor '" + a.name + "' value count does not match its shape");
        json entry;
        entry["name"] = a.name;
        entry["shape"] = a.shape;
        entry["offset"] = offset;
        tensors.push_back(std::move(entry));
        offset += a.values.size() * 4;
    }

    json header;
    header["model"] = model_config_to_json(data.model);
    header["train"] = train_config_to_json(data.train);
    header["progress"] = {{"step", data.progress.step},
                          {"epoch", data.progress.epoch},
                          {"group", data.progress.group},
                          {"chunk", data.progress.chunk}};
    header["rng"] = {{"origin", data.rng_origin}, {"state", data.rng_state}};
    header["tensors"] = std::move(tensors);
    const std::string htext = header.dump();

    std::string out;
    out.reserve(12 + htext.size() + offset);
    out.append(kMagic, 4);
    put_u32(out, kVersion);
    put_u32(out, static_cast<uint32_t>(htext.size()));
    out += htext;
    for (const NamedArray& a : data.arrays)
        for (float v : a.values) put_f32(out, v);

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    check(f.good(), ErrorKind::io, "cannot open '" + path + "' for writing");
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    f.flush();
    check(f.good(), ErrorKind::io, "failed writing checkpoint '" + path + "'");
}

CheckpointData load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    check(f.good(), ErrorKind::io, "cannot open checkpoint '" + path + "'");
    std::string raw((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

    check(raw.size() >= 12, ErrorKind::io, "checkpoint '" + path + "' is truncated");
    check(std::memcmp(raw.data(), kMagic, 4) == 0, ErrorKind::io,
          "checkpoint '" + path + "' has the wrong magic bytes");
    const uint32_t version = get_u32(raw, 4);
    check(version == kVersion, ErrorKind::io,
          "checkpoint '" + path + "' has unsupported version " + std::to_string(version));
    const uint32_t header_len = get_u32(raw, 8);
    check(raw.size() >= 12 + static_cast<size_t>(header_len), ErrorKind::io,
          "checkpoint '" + path + "' is truncated inside the header");

    json header;
    try {
        header = json::parse(raw.substr(12, header_len));
    } catch (const json::exception& e) {
        throw Error(ErrorKind::io,
                    "checkpoint '" + path + "' has a malformed header: " + e.what());
    }

    CheckpointData data;
    try {
        check(header.is_object(), ErrorKind::io, "checkpoint header must be a JSON object");
        for (const auto& [key, _] : header.items())
            check(key == "model" || key == "train" || key == "progress" || key == "rng" ||
                      key == "tensors",
                  ErrorKind::io, "checkpoint header has unknown key '" + key + "'");
        data.model = model_config_from_json(header.at("model"));
        data.train = train_config_from_json(header.at("train"));
        const json& prog = header.at("progress");
        data.progress.step = prog.at("step").get<int64_t>();
        data.progress.epoch = prog.at("epoch").get<int64_t>();
        data.progress.group = prog.at("group").get<int64_t>();
        data.progress.chunk = prog.at("chunk").get<int64_t>();
        check(data.progress.step >= 0 && data.progress.epoch >= 0 && data.progress.group >= 0 &&
                  data.progress.chunk >= 0,
              ErrorKind::io, "checkpoint progress counters must be non-negative");
        data.rng_origin = header.at("rng").at("origin").get<uint64_t>();
        data.rng_state = header.at("rng").at("state").get<uint64_t>();

        const json& tensors = header.at("tensors");
        check(tensors.is_array(), ErrorKind::io, "checkpoint tensor directory must be an array");
        uint64_t expect_offset = 0;
        for (const json& entry : tensors) {
            NamedArray a;
            a.name = entry.at("name").get<std::string>();
            a.shape = entry.at("shape").get<std::vector<int>>();
            const uint64_t offset = entry.at("offset").get<uint64_t>();
            check(offset == expect_offset, ErrorKind::io,
                  "checkpoint: tensor '" + a.name + "' has offset " + std::to_string(offset) +
                      ", expected " + std::to_string(expect_offset));
            expect_offset += shape_numel(a.shape, a.name) * 4;
            data.arrays.push_back(std::move(a));
        }
        for (size_t i = 0; i + 1 < data.arrays.size(); ++i)
            check(data.arrays[i].name < data.arrays[i + 1].name, ErrorKind::io,
                  "checkpoint tensor directory is not sorted");

        const size_t data_start = 12 + static_cast<size_t>(header_len);
        check(raw.size() - data_start == expect_offset, ErrorKind::io,
              "checkpoint '" + path + "' data section holds " +
                  std::to_string(raw.size() - data_start) + " bytes, directory expects " +
                  std::to_string(expect_offset));
        size_t pos = data_start;
        for (NamedArray& a : data.arrays) {
            const size_t n = shape_numel(a.shape, a.name);
            a.values.resize(n);
            for (size_t i = 0; i < n; ++i, pos += 4) a.values[i] = get_f32(raw, pos);
        }
    } catch (const json::exception& e) {
        throw Error(ErrorKind::io,
                    "checkpoint '" + path + "' has a malformed header: " + e.what());
    }
    return data;
}

// ---------------------------------------------------------------------------
// Metrics

std::string metrics_csv_header() { return "step,split,bits_per_sample,wall_ms"; }

std::string metrics_csv_row(const StepMetrics& m) {
    char wall[32];
    std::snprintf(wall, sizeof(wall), "%.3f", m.wall_ms);
    return std::to_string(m.step) + "," + m.split + "," + format_double(m.bits_per_sample) +
           "," + wall;
}

} // namespace tiervc
