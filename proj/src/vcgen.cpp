#include "tiervc/vcgen.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>

#include "tiervc/error.hpp"
#include "tiervc/textio.hpp"

namespace tiervc {

ConditioningSequence extract_content(const PhonemeAlignment& alignment, const F0Contour& f0,
                                     const SpeakerStats& source_stats,
                                     const PhonemeInventory& inventory) {
    check(source_stats.sigma > 0, ErrorKind::numeric,
          "content extraction: degenerate pitch statistics for '" + source_stats.speaker_id + "'");
    return build_conditioning(alignment, normalize_f0(f0, source_stats), inventory);
}

int sample_code(const std::vector<float>& logits, double temperature, Rng& rng) {
    check(!logits.empty(), ErrorKind::config, "sampling: empty logits");
    check(temperature >= 0, ErrorKind::config, "sampling: temperature must be non-negative");
    if (temperature == 0) {
        int best = 0;
        for (size_t i = 1; i < logits.size(); ++i)
            if (logits[i] > logits[best]) best = static_cast<int>(i);
        return best;
    }
    double mx = logits[0];
    for (float v : logits) mx = std::max(mx, static_cast<double>(v));
    std::vector<double> p(logits.size());
    double total = 0;
    for (size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp((static_cast<double>(logits[i]) - mx) / temperature);
        total += p[i];
    }
    const double u = rng.next_double() * total;
    double cum = 0;
    for (size_t i = 0; i < p.size(); ++i) {
        cum += p[i];
        if (u < cum) return static_cast<int>(i);
    }
    return static_cast<int>(p.size()) - 1;
}

namespace {

// out[j] = sum_k x[k] * w[k*n + j], k ascending with zero inputs skipped —
// the same accumulation the tape's matmul performs, so the sampling path
// reproduces teacher-forced activations bit for bit.
void matvec(const float* x, int in, const Tensor<float>& w, float* out) {
    const int n = w.shape[1];
    std::fill(out, out + n, 0.0f);
    const float* pw = w.data->data();
    for (int k = 0; k < in; ++k) {
        const float xv = x[k];
        if (xv == 0.0f) continue;
        const float* wrow = pw + static_cast<size_t>(k) * n;
        for (int j = 0; j < n; ++j) out[j] += xv * wrow[j];
    }
}

void add_vec(const Tensor<float>& b, float* out) {
    const float* pb = b.data->data();
    for (int j = 0; j < b.shape[0]; ++j) out[j] += pb[j];
}

float sigmoid_val(float x) {
    const double v = x;
    const double y = v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
    return static_cast<float>(y);
}

// One GRU step over plain buffers, mirroring the tape cell formula
// h' = h + z * (cand - h) term by term.
struct RawGru {
    const GruCell<float>* cell = nullptr;
    std::vector<float> xh, xrh, z, r, cand;

    explicit RawGru(const GruCell<float>& c)
        : cell(&c),
          xh(c.input_size + c.hidden_size),
          xrh(c.input_size + c.hidden_size),
          z(c.hidden_size),
          r(c.hidden_size),
          cand(c.hidden_size) {}

    void step(const float* x, std::vector<float>& h) {
        const int in = cell->input_size, hid = cell->hidden_size;
        std::copy(x, x + in, xh.begin());
        std::copy(h.begin(), h.end(), xh.begin() + in);
        matvec(xh.data(), in + hid, cell->w_z, z.data());
        add_vec(cell->b_z, z.data());
        for (int j = 0; j < hid; ++j) z[j] = sigmoid_val(z[j]);
        matvec(xh.data(), in + hid, cell->w_r, r.data());
        add_vec(cell->b_r, r.data());
        for (int j = 0; j < hid; ++j) r[j] = sigmoid_val(r[j]);
        std::copy(x, x + in, xrh.begin());
        for (int j = 0; j < hid; ++j) xrh[in + j] = r[j] * h[j];
        matvec(xrh.data(), in + hid, cell->w_h, cand.data());
        add_vec(cell->b_h, cand.data());
        for (int j = 0; j < hid; ++j) cand[j] = std::tanh(static_cast<double>(cand[j]));
        for (int j = 0; j < hid; ++j) h[j] = h[j] + z[j] * (cand[j] - h[j]);
    }
};

} // namespace

std::vector<uint8_t> run_sample_loop(const ModelConfig& cfg, const ModelParams<float>& p,
                                     const Tensor<float>& cond,
                                     const std::function<int(const std::vector<float>&)>& pick,
                                     TierCounts* counts) {
    if (counts) *counts = TierCounts{};
    cfg.validate();
    check(cond.rank() == 2 && cond.shape[1] == cfg.cond_dim, ErrorKind::config,
          "generation: conditioning is " + cond.shape_str() + ", expected frames x " +
              std::to_string(cfg.cond_dim));
    const int frames = cond.shape[0];
    check(frames > 0, ErrorKind::config, "generation: no conditioning frames");
    const int fs_top = cfg.frame_size_top;
    const int fs_mid = cfg.frame_size_mid;
    const int r_top = cfg.ratio_top();
    const int e = cfg.sample_embed_dim;
    const int mlp_in = cfg.mlp_input_dim();
    const int q = cfg.quant_levels;
    const int t_len = frames * fs_top;

    // Per-frame conditioning projections, computed once.
    auto project = [&](const Tensor<float>& w) {
        std::vector<float> out(static_cast<size_t>(frames) * w.shape[1]);
        for (int f = 0; f < frames; ++f)
            matvec(cond.data->data() + static_cast<size_t>(f) * cfg.cond_dim, cfg.cond_dim, w,
                   out.data() + static_cast<size_t>(f) * w.shape[1]);
        return out;
    };
    const std::vector<float> l_top = project(p.top_cond_w);
    const std::vector<float> l_mid = project(p.mid_cond_w);
    const std::vector<float> l_samp = project(p.samp_cond_w);

    std::vector<uint8_t> codes;
    codes.reserve(t_len);
    std::vector<float> dec(t_len, 0.0f);
    // Positions before the clip are digital silence: code 128, value 0.
    auto decoded = [&](int pos) -> float { return pos >= 0 ? dec[pos] : 0.0f; };
    auto code_at = [&](int pos) -> int { return pos >= 0 ? codes[pos] : 128; };

    std::vector<float> h_top(cfg.hidden_top, 0.0f), h_mid(cfg.hidden_mid, 0.0f);
    RawGru gru_top(p.top_gru), gru_mid(p.mid_gru);
    std::vector<float> m_top(fs_top), m_mid(fs_mid);
    std::vector<float> x_top(cfg.hidden_top), x_mid(cfg.hidden_mid);
    std::vector<std::vector<float>> up_top(r_top, std::vector<float>(cfg.hidden_mid));
    std::vector<std::vector<float>> up_mid(fs_mid, std::vector<float>(mlp_in));
    std::vector<float> x(mlp_in), a1(cfg.mlp_widths[0]), a2(cfg.mlp_widths[1]);
    std::vector<float> logits(q);
    const float* embed = p.samp_embed.data->data();

    for (int ft = 0; ft < frames; ++ft) {
        if (counts) ++counts->top;
        for (int j = 0; j < fs_top; ++j) m_top[j] = decoded(ft * fs_top - fs_top + j);
        matvec(m_top.data(), fs_top, p.top_in_w, x_top.data());
        add_vec(p.top_in_b, x_top.data());
        for (int j = 0; j < cfg.hidden_top; ++j)
            x_top[j] += l_top[static_cast<size_t>(ft) * cfg.hidden_top + j];
        gru_top.step(x_top.data(), h_top);
        for (int j = 0; j < r_top; ++j) {
            matvec(h_top.data(), cfg.hidden_top, p.top_up_w[j], up_top[j].data());
            add_vec(p.top_up_b[j], up_top[j].data());
        }

        for (int jm = 0; jm < r_top; ++jm) {
            if (counts) ++counts->mid;
            const int base = ft * fs_top + jm * fs_mid; // first sample this step emits
            for (int j = 0; j < fs_mid; ++j) m_mid[j] = decoded(base - fs_mid + j);
            matvec(m_mid.data(), fs_mid, p.mid_in_w, x_mid.data());
            add_vec(p.mid_in_b, x_mid.data());
            for (int j = 0; j < cfg.hidden_mid; ++j) x_mid[j] += up_top[jm][j];
            for (int j = 0; j < cfg.hidden_mid; ++j)
                x_mid[j] += l_mid[static_cast<size_t>(ft) * cfg.hidden_mid + j];
            gru_mid.step(x_mid.data(), h_mid);
            for (int j = 0; j < fs_mid; ++j) {
                matvec(h_mid.data(), cfg.hidden_mid, p.mid_up_w[j], up_mid[j].data());
                add_vec(p.mid_up_b[j], up_mid[j].data());
            }

            for (int js = 0; js < fs_mid; ++js) {
                if (counts) ++counts->samp;
                const int i = base + js;
                for (int k = 0; k < fs_mid; ++k) {
                    const int code = code_at(i - fs_mid + k);
                    const float* row = embed + static_cast<size_t>(code) * e;
                    std::copy(row, row + e, x.begin() + static_cast<size_t>(k) * e);
                }
                for (int j = 0; j < mlp_in; ++j) x[j] += up_mid[js][j];
                for (int j = 0; j < mlp_in; ++j)
                    x[j] += l_samp[static_cast<size_t>(ft) * mlp_in + j];
                matvec(x.data(), mlp_in, p.fc1_w, a1.data());
                add_vec(p.fc1_b, a1.data());
                for (float& v : a1) v = v > 0.0f ? v : 0.0f;
                matvec(a1.data(), cfg.mlp_widths[0], p.fc2_w, a2.data());
                add_vec(p.fc2_b, a2.data());
                for (float& v : a2) v = v > 0.0f ? v : 0.0f;
                matvec(a2.data(), cfg.mlp_widths[1], p.fc3_w, logits.data());
                add_vec(p.fc3_b, logits.data());

                const int code = pick(logits);
                check(code >= 0 && code < q, ErrorKind::numeric,
                      "generation: picked code " + std::to_string(code) + " outside [0," +
                          std::to_string(q) + ")");
                codes.push_back(static_cast<uint8_t>(code));
                dec[i] = static_cast<float>(mulaw_decode_sample(code));
            }
        }
    }
    return codes;
}

std::string gen_stats_csv_header() { return "clip,samples,wall_ms,samples_per_sec"; }

std::string gen_stats_csv_row(const GenerationStats& s) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), ",%ld,%.3f,%.1f", s.samples, s.wall_ms, s.samples_per_sec);
    return s.clip_id + buf;
}

Generator::Generator(const CheckpointData& cp) : cfg_(cp.model) {
    cfg_.validate();
    model_ = ModelParams<float>::attach(store_, cfg_);
    for (auto& [name, tensor] : store_) {
        const NamedArray* arr = cp.find("param/" + name);
        check(arr != nullptr, ErrorKind::io, "checkpoint has no tensor 'param/" + name + "'");
        check(arr->shape == tensor.shape, ErrorKind::io,
              "checkpoint tensor 'param/" + name + "' has shape mismatch");
        std::copy(arr->values.begin(), arr->values.end(), tensor.data->begin());
    }
}

PhonemeInventory Generator::inventory() const {
    return PhonemeInventory::from_symbols(cfg_.phonemes);
}

AudioClip Generator::generate(const ConditioningSequence& cond, const std::string& target_speaker,
                              uint64_t seed, double temperature,
                              std::vector<uint8_t>* codes) const {
    check(cond.phoneme_count == cfg_.phoneme_count(), ErrorKind::config,
          "generation: conditioning was built for " + std::to_string(cond.phoneme_count) +
              " phonemes, model has " + std::to_string(cfg_.phoneme_count()));
    const double expect_rate = static_cast<double>(cfg_.sample_rate_hz) / cfg_.frame_size_top;
    check(std::abs(cond.frame_rate_hz - expect_rate) <= 1e-6 * expect_rate, ErrorKind::config,
          "generation: conditioning frame rate " + format_double(cond.frame_rate_hz) +
              " does not match the model's " + format_double(expect_rate));
    const int frames = cond.frame_count();
    check(frames > 0, ErrorKind::config, "generation: empty conditioning sequence");
    const int speaker = cfg_.speaker_index(target_speaker);

    // Whole-utterance conditioning context; the single place recurrent
    // state is created for this utterance.
    Tensor<float> rows = Tensor<float>::zeros({frames, cond.dim()});
    std::copy(cond.values.begin(), cond.values.end(), rows.data->begin());
    Tape<float> tape;
    tape.recording = false;
    const Tensor<float> context = condnet_forward(tape, model_.cond, rows, speaker);

    Rng rng(seed);
    auto pick = [&](const std::vector<float>& logits) {
        return sample_code(logits, temperature, rng);
    };
    QuantizedClip qc;
    qc.codes = run_sample_loop(cfg_, model_, context, pick);
    qc.sample_rate_hz = cfg_.sample_rate_hz;
    if (codes) *codes = qc.codes;
    return mulaw_decode(qc);
}

std::vector<ConversionOutcome> convert_batch(const Generator& gen,
                                             const std::vector<ConversionJob>& jobs,
                                             const SpeakerStats& source_stats,
                                             const std::string& target_speaker, uint64_t seed,
                                             double temperature) {
    const PhonemeInventory inv = gen.inventory();
    const double period = gen.config().frame_period_sec();
    std::vector<ConversionOutcome> out;
    for (const ConversionJob& job : jobs) {
        ConversionOutcome res;
        res.clip_id = job.clip_id;
        try {
            const PhonemeAlignment align = parse_alignment_file(job.alignment_path, inv);
            const F0Contour f0 = parse_f0_file(job.f0_path, period);
            const ConditioningSequence cond = extract_content(align, f0, source_stats, inv);
            const uint64_t clip_seed = Rng(seed).derive("gen/" + job.clip_id).next_u64();

            const auto t0 = std::chrono::steady_clock::now();
            const AudioClip clip = gen.generate(cond, target_speaker, clip_seed, temperature);
            const auto t1 = std::chrono::steady_clock::now();
            wav_write(job.out_wav_path, clip);

            res.stats.clip_id = job.clip_id;
            res.stats.samples = static_cast<long>(clip.samples.size());
            res.stats.wall_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
            res.stats.samples_per_sec =
                res.stats.samples / std::max(res.stats.wall_ms, 1e-6) * 1000.0;
            res.ok = true;
        } catch (const std::exception& ex) {
            res.error = ex.what();
        }
        out.push_back(std::move(res));
    }
    return out;
}

} // namespace tiervc
