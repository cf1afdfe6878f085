#include "tiervc/cli.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>

#include "CLI11.hpp"
#include "json.hpp"
#include "tiervc/audio.hpp"
#include "tiervc/features.hpp"
#include "tiervc/model.hpp"
#include "tiervc/rng.hpp"
#include "tiervc/synthcorpus.hpp"
#include "tiervc/tensor.hpp"
#include "tiervc/textio.hpp"
#include "tiervc/vcgen.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace tiervc {

// ---------------------------------------------------------------------------
// Profiles and run configuration

ModelConfig profile_model_config(const std::string& profile) {
    if (profile == "desk") {
        ModelConfig cfg; // struct defaults are the desk scale
        cfg.speakers = {"s0", "s1", "s2", "s3"};
        cfg.phonemes = desk_inventory().symbols;
        return cfg;
    }
    if (profile == "paper") {
        ModelConfig cfg;
        cfg.sample_rate_hz = 16000;
        cfg.frame_size_top = 80;
        cfg.frame_size_mid = 8;
        cfg.sample_embed_dim = 256;
        cfg.cond_dim = 1024;
        cfg.hidden_top = 1024;
        cfg.hidden_mid = 1024;
        cfg.cond_hidden = 1024;
        cfg.mlp_widths = {1024, 1024};
        cfg.speakers = {"bdl", "clb", "rms", "slt"};
        cfg.phonemes.clear(); // filled from the corpus inventory at train time
        return cfg;
    }
    throw Error(ErrorKind::config,
                "unknown profile '" + profile + "' (expected 'desk' or 'paper')");
}

TrainConfig profile_train_config(const std::string& profile) {
    if (profile == "desk") return TrainConfig{}; // struct defaults
    if (profile == "paper") {
        TrainConfig tc;
        tc.learning_rate = 0.001;
        tc.batch_size = 32;
        tc.tbptt_samples = 8000;
        return tc;
    }
    throw Error(ErrorKind::config,
                "unknown profile '" + profile + "' (expected 'desk' or 'paper')");
}

RunConfig default_run_config(const std::string& profile) {
    RunConfig rc;
    rc.profile = profile;
    rc.model = profile_model_config(profile);
    rc.train = profile_train_config(profile);
    return rc;
}

RunConfig parse_run_config(const std::string& json_text, const std::string& profile_override) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        throw Error(ErrorKind::config, std::string("config: ") + e.what());
    }
    check(j.is_object(), ErrorKind::config, "config: the document root must be a JSON object");
    static const std::set<std::string> allowed = {"profile", "seed", "model", "train", "paths"};
    for (const auto& item : j.items())
        check(allowed.count(item.key()) > 0, ErrorKind::config,
              "config: unknown key '" + item.key() + "'");

    std::string profile = "desk";
    if (j.contains("profile")) {
        check(j["profile"].is_string(), ErrorKind::config, "config: 'profile' must be a string");
        profile = j["profile"].get<std::string>();
    }
    if (!profile_override.empty()) profile = profile_override;

    RunConfig rc = default_run_config(profile);
    if (j.contains("model")) {
        check(j["model"].is_object(), ErrorKind::config, "config: 'model' must be an object");
        rc.model = model_config_from_json(j["model"], rc.model);
    }
    if (j.contains("train")) {
        check(j["train"].is_object(), ErrorKind::config, "config: 'train' must be an object");
        rc.train = train_config_from_json(j["train"], rc.train);
    }
    if (j.contains("paths")) {
        const json& p = j["paths"];
        check(p.is_object(), ErrorKind::config, "config: 'paths' must be an object");
        for (const auto& item : p.items()) {
            check(item.value().is_string(), ErrorKind::config,
                  "config: paths." + item.key() + " must be a string");
            if (item.key() == "corpus") rc.corpus_dir = item.value().get<std::string>();
            else if (item.key() == "stats") rc.stats_path = item.value().get<std::string>();
            else if (item.key() == "out_dir") rc.out_dir = item.value().get<std::string>();
            else throw Error(ErrorKind::config, "config: unknown key 'paths." + item.key() + "'");
        }
    }
    if (j.contains("seed")) { // shorthand for train.seed; wins over train.seed
        check(j["seed"].is_number_unsigned(), ErrorKind::config,
              "config: 'seed' must be a non-negative integer");
        rc.train.seed = j["seed"].get<uint64_t>();
    }
    return rc;
}

// ---------------------------------------------------------------------------
// Corpus loading

std::vector<TrainingClip> load_training_corpus(const std::string& corpus_dir,
                                               const std::string& stats_path,
                                               const ModelConfig& cfg) {
    const auto rows = load_manifest((fs::path(corpus_dir) / "manifest.csv").string());
    const PhonemeInventory inv = load_inventory((fs::path(corpus_dir) / "inventory.txt").string());
    check(inv.symbols == cfg.phonemes, ErrorKind::config,
          "corpus inventory does not match the model's phoneme list");
    const auto stats = load_speaker_stats(stats_path);
    const double period = cfg.frame_period_sec();
    std::vector<TrainingClip> clips;
    clips.reserve(rows.size());
    for (const auto& row : rows) {
        TrainingClip clip;
        clip.clip_id = row.clip_id;
        clip.speaker_index = cfg.speaker_index(row.speaker_id);
        AudioClip wav = wav_read((fs::path(corpus_dir) / row.wav).string());
        check(wav.sample_rate_hz == cfg.sample_rate_hz, ErrorKind::config,
              "clip '" + row.clip_id + "': sample rate " + std::to_string(wav.sample_rate_hz) +
                  " does not match the model's " + std::to_string(cfg.sample_rate_hz));
        clip.codes = mulaw_encode(wav).codes;
        const auto align =
            parse_alignment_file((fs::path(corpus_dir) / row.align).string(), inv);
        const auto f0 = parse_f0_file((fs::path(corpus_dir) / row.f0).string(), period);
        auto it = stats.find(row.speaker_id);
        check(it != stats.end(), ErrorKind::config,
              "stats file '" + stats_path + "' has no entry for speaker '" + row.speaker_id + "'");
        clip.cond = build_conditioning(align, normalize_f0(f0, it->second), inv);
        validate_training_clip(cfg, clip);
        clips.push_back(std::move(clip));
    }
    return clips;
}

std::string error_kind_name(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::usage: return "usage";
        case ErrorKind::config: return "config";
        case ErrorKind::io: return "io";
        case ErrorKind::numeric: return "numeric";
    }
    return "error";
}

// ---------------------------------------------------------------------------
// Subcommands

namespace {

struct SynthOpts {
    std::string out;
    int clips_per_speaker = 50;
    double clip_seconds = 1.0;
    int sample_rate = 4000;
    int frame_size = 80;
    uint64_t seed = 1;
};

int cmd_synth_corpus(const SynthOpts& o) {
    CorpusSpec spec;
    spec.out_dir = o.out;
    spec.clips_per_speaker = o.clips_per_speaker;
    spec.clip_seconds = o.clip_seconds;
    spec.sample_rate_hz = o.sample_rate;
    spec.frame_size_top = o.frame_size;
    spec.seed = o.seed;
    const auto rows = synth_corpus(spec);
    std::cerr << "synth-corpus: wrote " << rows.size() << " clips under " << o.out << "\n";
    return 0;
}

struct StatsOpts {
    std::string corpus, out;
    int sample_rate = 4000;
    int frame_size = 80;
};

int cmd_stats(const StatsOpts& o) {
    const auto rows = load_manifest((fs::path(o.corpus) / "manifest.csv").string());
    const double period = static_cast<double>(o.frame_size) / o.sample_rate;
    std::vector<std::string> order;                       // first-seen speaker order
    std::map<std::string, std::vector<F0Contour>> by_spk; // speaker -> contours
    for (const auto& row : rows) {
        if (by_spk.find(row.speaker_id) == by_spk.end()) order.push_back(row.speaker_id);
        by_spk[row.speaker_id].push_back(
            parse_f0_file((fs::path(o.corpus) / row.f0).string(), period));
    }
    std::vector<SpeakerStats> stats;
    stats.reserve(order.size());
    for (const auto& id : order) stats.push_back(compute_speaker_stats(id, by_spk[id]));
    save_speaker_stats(o.out, stats);
    std::cerr << "stats: wrote " << stats.size() << " speaker rows to " << o.out << "\n";
    return 0;
}

struct FeaturizeOpts {
    std::string corpus, stats, out;
    int sample_rate = 4000;
    int frame_size = 80;
};

int cmd_featurize(const FeaturizeOpts& o) {
    const auto rows = load_manifest((fs::path(o.corpus) / "manifest.csv").string());
    const PhonemeInventory inv = load_inventory((fs::path(o.corpus) / "inventory.txt").string());
    const auto stats = load_speaker_stats(o.stats);
    const double period = static_cast<double>(o.frame_size) / o.sample_rate;
    fs::create_directories(o.out);
    std::string index = "clip_id,path,frames,dim\n";
    for (const auto& row : rows) {
        const auto align = parse_alignment_file((fs::path(o.corpus) / row.align).string(), inv);
        const auto f0 = parse_f0_file((fs::path(o.corpus) / row.f0).string(), period);
        auto it = stats.find(row.speaker_id);
        check(it != stats.end(), ErrorKind::config,
              "stats file '" + o.stats + "' has no entry for speaker '" + row.speaker_id + "'");
        const ConditioningSequence cond = build_conditioning(align, normalize_f0(f0, it->second), inv);
        const std::string rel = row.clip_id + ".cond.csv";
        std::string text;
        const int dim = cond.dim();
        for (int f = 0; f < cond.frame_count(); ++f) {
            const float* r = cond.row(f);
            for (int c = 0; c < dim; ++c) {
                if (c) text += ',';
                text += format_double(r[c]);
            }
            text += '\n';
        }
        write_text_file((fs::path(o.out) / rel).string(), text);
        index += row.clip_id + "," + rel + "," + std::to_string(cond.frame_count()) + "," +
                 std::to_string(dim) + "\n";
    }
    write_text_file((fs::path(o.out) / "features.csv").string(), index);
    std::cerr << "featurize: wrote " << rows.size() << " conditioning files under " << o.out
              << "\n";
    return 0;
}

struct TrainOpts {
    std::string config_path, profile, corpus, stats, out_dir, resume;
    uint64_t seed = 1;
    int epochs = 1;
    int64_t max_steps = 0;
    int batch_size = 4;
    int tbptt = 2000;
    double lr = 0.001;
    double grad_clip = 1.0;
    int checkpoint_every = 0;
    int jobs = 1;
    // explicit-presence markers, filled in run_cli
    bool has_config = false, has_profile = false, has_corpus = false, has_stats = false,
         has_out = false, has_resume = false, has_seed = false, has_epochs = false,
         has_max_steps = false, has_batch = false, has_tbptt = false, has_lr = false,
         has_clip = false;
};

std::string checkpoint_name(int64_t step) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "checkpoint_%06lld.ckpt", static_cast<long long>(step));
    return buf;
}

// Rewrites metrics.csv (keeping rows up to `start_step` when resuming), then
// streams one row per optimization step and drops periodic checkpoints.
void run_training(Trainer<float>& tr, const std::string& out_dir, int checkpoint_every,
                  bool resumed) {
    fs::create_directories(out_dir);
    const std::string mpath = (fs::path(out_dir) / "metrics.csv").string();
    const int64_t start_step = tr.progress().step;
    std::vector<std::string> kept;
    if (resumed && fs::exists(mpath)) {
        for (const auto& line : split_lines(read_text_file(mpath))) {
            if (line.empty() || line == metrics_csv_header()) continue;
            const auto fields = split(line, ',');
            if (!fields.empty() && parse_long(fields[0], mpath) <= start_step)
                kept.push_back(line);
        }
    }
    std::ofstream mf(mpath, std::ios::trunc);
    check(mf.good(), ErrorKind::io, "cannot open '" + mpath + "' for writing");
    mf << metrics_csv_header() << '\n';
    for (const auto& line : kept) mf << line << '\n';

    tr.run([&](const StepMetrics& m) {
        mf << metrics_csv_row(m) << '\n';
        mf.flush();
        std::cerr << "train: step " << m.step << " bits/sample "
                  << format_double(m.bits_per_sample) << "\n";
        if (checkpoint_every > 0 && m.step % checkpoint_every == 0)
            tr.save((fs::path(out_dir) / checkpoint_name(m.step)).string());
    });
    check(mf.good(), ErrorKind::io, "failed writing '" + mpath + "'");
    const std::string final_path = (fs::path(out_dir) / "checkpoint_final.ckpt").string();
    tr.save(final_path);
    std::cerr << "train: finished at step " << tr.progress().step << "; wrote " << final_path
              << "\n";
}

int cmd_train(const TrainOpts& o) {
    check(o.jobs == 1, ErrorKind::config, "train: only --jobs 1 is supported");

    RunConfig rc;
    if (o.has_config)
        rc = parse_run_config(read_text_file(o.config_path), o.has_profile ? o.profile : "");
    else
        rc = default_run_config(o.has_profile ? o.profile : "desk");
    if (o.has_corpus) rc.corpus_dir = o.corpus;
    if (o.has_stats) rc.stats_path = o.stats;
    if (o.has_out) rc.out_dir = o.out_dir;
    check(!rc.corpus_dir.empty(), ErrorKind::config,
          "train: no corpus directory (--corpus or config paths.corpus)");
    check(!rc.stats_path.empty(), ErrorKind::config,
          "train: no stats file (--stats or config paths.stats)");
    check(!rc.out_dir.empty(), ErrorKind::config,
          "train: no output directory (--out-dir or config paths.out_dir)");

    if (o.has_resume) {
        // The checkpoint owns the model shape and the training schedule;
        // resuming is bit-identical to never having stopped, so only the
        // step/epoch budget may be extended here.
        check(!(o.has_seed || o.has_batch || o.has_tbptt || o.has_lr || o.has_clip),
              ErrorKind::config,
              "train: --seed/--batch-size/--tbptt/--lr/--grad-clip cannot change on --resume");
        CheckpointData cp = load_checkpoint(o.resume);
        if (o.has_max_steps) cp.train.max_steps = o.max_steps;
        if (o.has_epochs) cp.train.epochs = o.epochs;
        auto corpus = load_training_corpus(rc.corpus_dir, rc.stats_path, cp.model);
        std::cerr << "train: resuming from " << o.resume << " at step " << cp.progress.step
                  << "\n";
        Trainer<float> tr(cp, std::move(corpus));
        run_training(tr, rc.out_dir, o.checkpoint_every, true);
        return 0;
    }

    if (o.has_seed) rc.train.seed = o.seed;
    if (o.has_epochs) rc.train.epochs = o.epochs;
    if (o.has_max_steps) rc.train.max_steps = o.max_steps;
    if (o.has_batch) rc.train.batch_size = o.batch_size;
    if (o.has_tbptt) rc.train.tbptt_samples = o.tbptt;
    if (o.has_lr) rc.train.learning_rate = o.lr;
    if (o.has_clip) rc.train.grad_clip_norm = o.grad_clip;

    if (rc.model.phonemes.empty())
        rc.model.phonemes =
            load_inventory((fs::path(rc.corpus_dir) / "inventory.txt").string()).symbols;
    if (rc.model.speakers.empty())
        for (const auto& kv : load_speaker_stats(rc.stats_path)) rc.model.speakers.push_back(kv.first);
    rc.model.validate();
    rc.train.validate(rc.model);

    auto corpus = load_training_corpus(rc.corpus_dir, rc.stats_path, rc.model);
    std::cerr << "train: " << corpus.size() << " clips, profile " << rc.profile << ", seed "
              << rc.train.seed << "\n";
    Trainer<float> tr(rc.model, rc.train, std::move(corpus));
    run_training(tr, rc.out_dir, o.checkpoint_every, false);
    return 0;
}

struct ConvertOpts {
    std::string checkpoint, align, f0, stats, source_speaker, target_speaker, out, stats_out;
    uint64_t seed = 1;
    double temperature = 1.0;
};

SpeakerStats pick_source_stats(const std::map<std::string, SpeakerStats>& stats,
                               const std::string& stats_path, const std::string& source_speaker) {
    if (!source_speaker.empty()) {
        auto it = stats.find(source_speaker);
        check(it != stats.end(), ErrorKind::config,
              "stats file '" + stats_path + "' has no entry for speaker '" + source_speaker + "'");
        return it->second;
    }
    check(stats.size() == 1, ErrorKind::config,
          "stats file '" + stats_path + "' lists " + std::to_string(stats.size()) +
              " speakers; pass --source-speaker");
    return stats.begin()->second;
}

int cmd_convert(const ConvertOpts& o) {
    const CheckpointData cp = load_checkpoint(o.checkpoint);
    const Generator gen(cp);
    const PhonemeInventory inv = gen.inventory();
    const SpeakerStats src_stats =
        pick_source_stats(load_speaker_stats(o.stats), o.stats, o.source_speaker);
    const PhonemeAlignment align = parse_alignment_file(o.align, inv);
    const F0Contour f0 = parse_f0_file(o.f0, gen.config().frame_period_sec());
    const ConditioningSequence cond = extract_content(align, f0, src_stats, inv);

    const auto t0 = std::chrono::steady_clock::now();
    const AudioClip wav = gen.generate(cond, o.target_speaker, o.seed, o.temperature);
    const auto t1 = std::chrono::steady_clock::now();

    wav_write(o.out, wav);
    GenerationStats st;
    st.clip_id = fs::path(o.out).stem().string();
    st.samples = static_cast<long>(wav.samples.size());
    st.wall_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
    st.samples_per_sec = static_cast<double>(st.samples) / std::max(st.wall_ms, 1e-6) * 1000.0;
    if (!o.stats_out.empty())
        write_text_file(o.stats_out, gen_stats_csv_header() + "\n" + gen_stats_csv_row(st) + "\n");
    std::cerr << "convert: wrote " << o.out << " (" << st.samples << " samples, "
              << static_cast<long>(st.samples_per_sec) << " samples/sec)\n";
    return 0;
}

struct EvaluateOpts {
    std::string wav, source_f0, stats, source_speaker, target_speaker, out;
    int sample_rate = 4000;
    int frame_size = 80;
};

const SpeakerTemplate& builtin_template(const std::vector<SpeakerTemplate>& all,
                                        const std::string& id) {
    for (const auto& t : all)
        if (t.speaker_id == id) return t;
    throw Error(ErrorKind::config, "no built-in voice template for speaker '" + id + "'");
}

int cmd_evaluate(const EvaluateOpts& o) {
    const auto templates = desk_speaker_templates();
    const SpeakerTemplate& src_t = builtin_template(templates, o.source_speaker);
    const SpeakerTemplate& tgt_t = builtin_template(templates, o.target_speaker);
    const auto stats = load_speaker_stats(o.stats);
    auto src_it = stats.find(o.source_speaker);
    check(src_it != stats.end(), ErrorKind::config,
          "stats file '" + o.stats + "' has no entry for speaker '" + o.source_speaker + "'");
    auto tgt_it = stats.find(o.target_speaker);
    check(tgt_it != stats.end(), ErrorKind::config,
          "stats file '" + o.stats + "' has no entry for speaker '" + o.target_speaker + "'");

    const AudioClip wav = wav_read(o.wav);
    const F0Contour f0 =
        parse_f0_file(o.source_f0, static_cast<double>(o.frame_size) / o.sample_rate);
    const ConversionReport rep =
        eval_conversion(wav, f0, src_it->second, src_t, tgt_t, tgt_it->second);

    std::string text =
        "cos_to_target,cos_to_source,timbre_score,f0_median_rel_err,voicing_agreement,"
        "voiced_frames_compared\n";
    text += format_double(rep.cos_to_target) + "," + format_double(rep.cos_to_source) + "," +
            format_double(rep.timbre_score) + "," + format_double(rep.f0_median_rel_err) + "," +
            format_double(rep.voicing_agreement) + "," +
            std::to_string(rep.voiced_frames_compared) + "\n";
    if (o.out.empty()) {
        std::cout << text;
    } else {
        write_text_file(o.out, text);
        std::cerr << "evaluate: wrote " << o.out << "\n";
    }
    return 0;
}

struct GradcheckOpts {
    // Default pinned to a probe point whose ReLU preactivations all clear the
    // finite-difference step: seeds that park a unit within h of its kink make
    // the central difference straddle two linear regimes and report O(1)
    // error for a correct gradient.
    uint64_t seed = 6;
};

int cmd_gradcheck(const GradcheckOpts& o) {
    // Micro shape small enough for exhaustive central differences in double
    // precision: every parameter element of the full stack (conditioning
    // network, both recurrent tiers, sample MLP) is perturbed.
    ModelConfig cfg;
    cfg.sample_rate_hz = 4000;
    cfg.frame_size_top = 4;
    cfg.frame_size_mid = 2;
    cfg.sample_embed_dim = 4;
    cfg.cond_dim = 8;
    cfg.hidden_top = 8;
    cfg.hidden_mid = 8;
    cfg.cond_hidden = 8;
    cfg.mlp_widths = {8, 8};
    cfg.speakers = {"a", "b"};
    cfg.phonemes = {"PAD", "SIL", "aa"};
    cfg.validate();
    const int t_len = 32;
    const int frames = t_len / cfg.frame_size_top;

    ParameterStore<double> store;
    auto params = ModelParams<double>::attach(store, cfg);
    init_params(store, o.seed);

    Rng rng(o.seed ^ 0x9e3779b97f4a7c15ull);
    std::vector<std::vector<uint8_t>> codes(1, std::vector<uint8_t>(t_len));
    for (auto& c : codes[0])
        c = static_cast<uint8_t>(std::min<int>(255, static_cast<int>(rng.next_double() * 256)));
    std::vector<std::vector<double>> weights(1, std::vector<double>(t_len, 1.0));
    auto ling = Tensor<double>::zeros({frames, cfg.cond_feature_dim()});
    fill_uniform(ling, rng, -1, 1);

    auto build = [&](Tape<double>& tape) {
        std::vector<Tensor<double>> conds{condnet_forward(tape, params.cond, ling, 1)};
        auto state = TierState<double>::initial(cfg, 1);
        return score_chunk(tape, params, cfg, codes, weights, conds, state).loss_bits;
    };
    const auto report = finite_diff_check(store, build, 5e-4);
    std::fprintf(stderr, "gradcheck: %zu parameter tensors, max relative error %.3e (tolerance 1e-4)\n",
                 report.items.size(), report.max_rel_err);
    for (const auto& item : report.items)
        if (item.max_rel_err == report.max_rel_err)
            std::fprintf(stderr, "gradcheck: worst '%s'[%zu]: analytic %.6e vs numeric %.6e\n",
                         item.name.c_str(), item.worst_index, item.analytic, item.numeric);
    check(report.pass(1e-4), ErrorKind::numeric,
          "gradcheck: max relative error " + format_double(report.max_rel_err) +
              " exceeds tolerance 1e-4");
    std::cerr << "gradcheck: PASS\n";
    return 0;
}

} // namespace

// ---------------------------------------------------------------------------
// Dispatch

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"tiered neural voice conversion toolkit"};
    app.require_subcommand(1);

    SynthOpts so;
    CLI::App* synth = app.add_subcommand("synth-corpus", "generate the synthetic voice corpus");
    synth->add_option("--out", so.out, "corpus output directory")->required();
    synth->add_option("--clips-per-speaker", so.clips_per_speaker, "clips per voice")
        ->capture_default_str();
    synth->add_option("--clip-seconds", so.clip_seconds, "nominal clip length in seconds")
        ->capture_default_str();
    synth->add_option("--sample-rate", so.sample_rate, "sample rate in Hz")->capture_default_str();
    synth->add_option("--frame-size", so.frame_size, "samples per conditioning frame")
        ->capture_default_str();
    synth->add_option("--seed", so.seed, "corpus random seed")->capture_default_str();

    StatsOpts to_;
    CLI::App* stats = app.add_subcommand("stats", "compute per-speaker log-F0 statistics");
    stats->add_option("--corpus", to_.corpus, "corpus directory (with manifest.csv)")->required();
    stats->add_option("--out", to_.out, "output stats CSV path")->required();
    stats->add_option("--sample-rate", to_.sample_rate, "sample rate of the F0 files' clips")
        ->capture_default_str();
    stats->add_option("--frame-size", to_.frame_size, "samples per F0 frame")
        ->capture_default_str();

    FeaturizeOpts fo;
    CLI::App* feat = app.add_subcommand("featurize", "write conditioning matrices per clip");
    feat->add_option("--corpus", fo.corpus, "corpus directory (with manifest.csv)")->required();
    feat->add_option("--stats", fo.stats, "per-speaker stats CSV")->required();
    feat->add_option("--out", fo.out, "output directory for conditioning CSVs")->required();
    feat->add_option("--sample-rate", fo.sample_rate, "sample rate of the corpus")
        ->capture_default_str();
    feat->add_option("--frame-size", fo.frame_size, "samples per conditioning frame")
        ->capture_default_str();

    TrainOpts tro;
    CLI::App* train = app.add_subcommand("train", "train the waveform model");
    CLI::Option* t_config = train->add_option("--config", tro.config_path, "run config JSON file");
    CLI::Option* t_profile =
        train->add_option("--profile", tro.profile, "hyperparameter preset: desk or paper");
    CLI::Option* t_corpus = train->add_option("--corpus", tro.corpus, "corpus directory");
    CLI::Option* t_stats = train->add_option("--stats", tro.stats, "per-speaker stats CSV");
    CLI::Option* t_out = train->add_option("--out-dir", tro.out_dir, "output directory");
    CLI::Option* t_resume =
        train->add_option("--resume", tro.resume, "checkpoint to continue from");
    CLI::Option* t_seed = train->add_option("--seed", tro.seed, "training seed");
    CLI::Option* t_epochs = train->add_option("--epochs", tro.epochs, "epochs (0 = unlimited)");
    CLI::Option* t_max_steps =
        train->add_option("--max-steps", tro.max_steps, "stop after this many steps (0 = no cap)");
    CLI::Option* t_batch = train->add_option("--batch-size", tro.batch_size, "clips per batch");
    CLI::Option* t_tbptt =
        train->add_option("--tbptt", tro.tbptt, "gradient-truncation chunk length in samples");
    CLI::Option* t_lr = train->add_option("--lr", tro.lr, "Adam learning rate");
    CLI::Option* t_clip =
        train->add_option("--grad-clip", tro.grad_clip, "global gradient-norm clip (0 = off)");
    train->add_option("--checkpoint-every", tro.checkpoint_every,
                      "also save a checkpoint every N steps (0 = final only)")
        ->capture_default_str();
    train->add_option("--jobs", tro.jobs, "worker count; must be 1 (deterministic path)")
        ->capture_default_str();

    ConvertOpts co;
    CLI::App* convert = app.add_subcommand("convert", "convert one utterance to a target voice");
    convert->add_option("--checkpoint", co.checkpoint, "trained model checkpoint")->required();
    convert->add_option("--source-align", co.align, "source phoneme alignment file")->required();
    convert->add_option("--source-f0", co.f0, "source F0 CSV")->required();
    convert->add_option("--source-stats", co.stats, "stats CSV holding the source speaker")
        ->required();
    convert->add_option("--source-speaker", co.source_speaker,
                        "source speaker id (needed when the stats file lists several)");
    convert->add_option("--target-speaker", co.target_speaker, "target speaker id")->required();
    convert->add_option("--out", co.out, "output WAV path")->required();
    convert->add_option("--seed", co.seed, "sampling seed")->capture_default_str();
    convert->add_option("--temperature", co.temperature, "sampling temperature (0 = argmax)")
        ->capture_default_str();
    convert->add_option("--stats-out", co.stats_out, "optional generation-stats CSV path");

    EvaluateOpts eo;
    CLI::App* evaluate =
        app.add_subcommand("evaluate", "score a converted clip against the built-in voices");
    evaluate->add_option("--wav", eo.wav, "converted WAV to score")->required();
    evaluate->add_option("--source-f0", eo.source_f0, "source F0 CSV")->required();
    evaluate->add_option("--stats", eo.stats, "stats CSV holding source and target speakers")
        ->required();
    evaluate->add_option("--source-speaker", eo.source_speaker, "source speaker id")->required();
    evaluate->add_option("--target-speaker", eo.target_speaker, "target speaker id")->required();
    evaluate->add_option("--out", eo.out, "report CSV path (default: stdout)");
    evaluate->add_option("--sample-rate", eo.sample_rate, "sample rate of the F0 frames' clips")
        ->capture_default_str();
    evaluate->add_option("--frame-size", eo.frame_size, "samples per F0 frame")
        ->capture_default_str();

    GradcheckOpts go;
    CLI::App* gradcheck = app.add_subcommand(
        "gradcheck", "finite-difference check of the full model on a micro configuration");
    gradcheck->add_option("--seed", go.seed, "parameter/input seed")->capture_default_str();

    try {
        app.parse(argc, argv);
        tro.has_config = t_config->count() > 0;
        tro.has_profile = t_profile->count() > 0;
        tro.has_corpus = t_corpus->count() > 0;
        tro.has_stats = t_stats->count() > 0;
        tro.has_out = t_out->count() > 0;
        tro.has_resume = t_resume->count() > 0;
        tro.has_seed = t_seed->count() > 0;
        tro.has_epochs = t_epochs->count() > 0;
        tro.has_max_steps = t_max_steps->count() > 0;
        tro.has_batch = t_batch->count() > 0;
        tro.has_tbptt = t_tbptt->count() > 0;
        tro.has_lr = t_lr->count() > 0;
        tro.has_clip = t_clip->count() > 0;

        if (synth->parsed()) return cmd_synth_corpus(so);
        if (stats->parsed()) return cmd_stats(to_);
        if (feat->parsed()) return cmd_featurize(fo);
        if (train->parsed()) return cmd_train(tro);
        if (convert->parsed()) return cmd_convert(co);
        if (evaluate->parsed()) return cmd_evaluate(eo);
        if (gradcheck->parsed()) return cmd_gradcheck(go);
        throw Error(ErrorKind::usage, "no subcommand given");
    } catch (const CLI::CallForHelp&) {
        CLI::App* deepest = &app;
        while (!deepest->get_subcommands().empty()) deepest = deepest->get_subcommands().back();
        std::cout << deepest->help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        std::cout << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        std::cerr << "tiervc: usage: " << e.what() << "\n";
        return 2;
    } catch (const Error& e) {
        std::cerr << "tiervc: " << error_kind_name(e.kind()) << ": " << e.what() << "\n";
        return e.exit_code();
    } catch (const std::exception& e) {
        std::cerr << "tiervc: internal: " << e.what() << "\n";
        return 1;
    }
}

} // namespace tiervc
