#include "tiervc/synthcorpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>

#include "tiervc/error.hpp"
#include "tiervc/textio.hpp"

namespace tiervc {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

// ---------------------------------------------------------------------------
// Templates and inventory

void SpeakerTemplate::validate() const {
    check(!speaker_id.empty(), ErrorKind::config, "speaker template: empty id");
    check(f0_low_hz > 0 && f0_low_hz < f0_high_hz, ErrorKind::config,
          "speaker template '" + speaker_id + "': need 0 < f0 low < f0 high");
    double sum = 0;
    for (double a : harmonics) {
        check(a >= 0, ErrorKind::config,
              "speaker template '" + speaker_id + "': negative harmonic amplitude");
        sum += a;
    }
    check(std::abs(sum - 1.0) < 1e-9, ErrorKind::config,
          "speaker template '" + speaker_id + "': harmonic amplitudes must sum to 1");
}

std::vector<SpeakerTemplate> desk_speaker_templates() {
    // Four strong harmonics per voice plus a small floor. The sets were
    // chosen so that (a) any two profiles have cosine similarity far below
    // 0.8, (b) removing any single harmonic (what the sound units do) keeps
    // the profile closest to its own voice, and (c) no profile, masked or
    // not, is near-periodic at a fraction of its pitch period inside the
    // 50-500 Hz search range (which would fool the pitch tracker).
    auto make = [](const char* id, double lo, double hi,
                   std::array<double, kHarmonics> amps) {
        SpeakerTemplate t;
        t.speaker_id = id;
        t.f0_low_hz = lo;
        t.f0_high_hz = hi;
        double sum = 0;
        for (double a : amps) sum += a;
        for (int k = 0; k < kHarmonics; ++k) t.harmonics[k] = amps[k] / sum;
        t.validate();
        return t;
    };
    return {
        make("s0", 80, 100, {0.2399, 0.2685, 0.0068, 0.2835, 0.1810, 0.0068, 0.0068, 0.0068}),
        make("s1", 105, 130, {0.2592, 0.0059, 0.0059, 0.0059, 0.2829, 0.1997, 0.2345, 0.0059}),
        make("s2", 135, 165, {0.0060, 0.1758, 0.2765, 0.0060, 0.0060, 0.0060, 0.2754, 0.2482}),
        make("s3", 170, 210, {0.0073, 0.0073, 0.2517, 0.2305, 0.2000, 0.2888, 0.0073, 0.0073}),
    };
}

std::vector<PseudoPhoneme> desk_phonemes() {
    std::vector<PseudoPhoneme> out;
    PseudoPhoneme sil;
    sil.symbol = "SIL";
    sil.voiced = false;
    out.push_back(sil);
    for (int k = 0; k < kHarmonics; ++k) {
        PseudoPhoneme p;
        p.symbol = "p" + std::to_string(k);
        p.voiced = true;
        p.active.fill(true);
        p.active[k] = false; // each unit removes exactly one harmonic
        out.push_back(p);
    }
    return out;
}

PhonemeInventory desk_inventory() {
    std::vector<std::string> symbols = {"PAD"};
    for (const PseudoPhoneme& p : desk_phonemes()) symbols.push_back(p.symbol);
    return PhonemeInventory::from_symbols(std::move(symbols));
}

// ---------------------------------------------------------------------------
// Pitch models

double F0Model::at(double t_sec) const {
    return std::exp(mid_log + amp1 * std::sin(2 * kPi * freq1_hz * t_sec + phase1) +
                    amp2 * std::sin(2 * kPi * freq2_hz * t_sec + phase2));
}

F0Model random_f0_model(const SpeakerTemplate& spk, Rng& rng) {
    spk.validate();
    const double half_span = 0.5 * std::log(spk.f0_high_hz / spk.f0_low_hz);
    F0Model m;
    m.mid_log = 0.5 * (std::log(spk.f0_low_hz) + std::log(spk.f0_high_hz));
    m.amp1 = 0.7 * half_span;
    m.amp2 = 0.3 * half_span;
    m.freq1_hz = rng.next_uniform(0.3, 0.8);
    m.freq2_hz = rng.next_uniform(1.2, 2.5);
    m.phase1 = rng.next_uniform(0, 2 * kPi);
    m.phase2 = rng.next_uniform(0, 2 * kPi);
    return m;
}

F0Model map_f0_model(const F0Model& source, const SpeakerStats& source_stats,
                     const SpeakerStats& target_stats) {
    check(source_stats.sigma > 0 && target_stats.sigma > 0, ErrorKind::numeric,
          "f0 mapping: degenerate speaker statistics");
    const double scale = target_stats.sigma / source_stats.sigma;
    F0Model m = source;
    m.mid_log = target_stats.mu + (source.mid_log - source_stats.mu) * scale;
    m.amp1 = source.amp1 * scale;
    m.amp2 = source.amp2 * scale;
    return m;
}

// ---------------------------------------------------------------------------
// Clip planning and synthesis

ClipPlan plan_clip(const SpeakerTemplate& spk, const std::vector<PseudoPhoneme>& phonemes,
                   int frames, double frame_period_sec, Rng& rng) {
    check(frames > 0 && frame_period_sec > 0, ErrorKind::config, "plan: empty clip");
    const double total = frames * frame_period_sec;
    check(total >= 0.05, ErrorKind::config,
          "plan: clip of " + std::to_string(total) + " s is shorter than one segment");
    std::vector<const PseudoPhoneme*> voiced;
    for (const PseudoPhoneme& p : phonemes)
        if (p.voiced) voiced.push_back(&p);
    check(!voiced.empty(), ErrorKind::config, "plan: no voiced units in the inventory");

    ClipPlan plan;
    double t = 0;
    while (total - t > 1e-12) {
        const double remaining = total - t;
        double d;
        if (remaining > 0.25)
            d = rng.next_uniform(0.05, std::min(0.25, remaining - 0.05));
        else
            d = remaining; // close out exactly; by construction >= 0.05
        AlignSegment seg;
        seg.start_sec = t;
        seg.end_sec = (remaining - d < 1e-12) ? total : t + d;
        if (rng.next_double() < 0.2)
            seg.symbol = "SIL";
        else
            seg.symbol = voiced[rng.next_below(voiced.size())]->symbol;
        t = seg.end_sec;
        plan.alignment.segments.push_back(std::move(seg));
    }
    plan.f0 = random_f0_model(spk, rng);
    return plan;
}

namespace {

const PseudoPhoneme& phoneme_by_symbol(const std::vector<PseudoPhoneme>& phonemes,
                                       const std::string& symbol) {
    for (const PseudoPhoneme& p : phonemes)
        if (p.symbol == symbol) return p;
    throw Error(ErrorKind::config, "unknown sound unit '" + symbol + "'");
}

// Index of the segment whose [start, end) interval holds t; the final
// segment also owns its right edge.
size_t segment_at(const PhonemeAlignment& a, double t) {
    for (size_t i = 0; i + 1 < a.segments.size(); ++i)
        if (t < a.segments[i].end_sec) return i;
    return a.segments.size() - 1;
}

} // namespace

F0Contour ground_truth_contour(const ClipPlan& plan, const std::vector<PseudoPhoneme>& phonemes,
                               int frames, double frame_period_sec) {
    check(!plan.alignment.segments.empty(), ErrorKind::config, "contour: empty plan");
    F0Contour contour;
    contour.frame_period_sec = frame_period_sec;
    for (int i = 0; i < frames; ++i) {
        const double t = (i + 0.5) * frame_period_sec;
        const AlignSegment& seg = plan.alignment.segments[segment_at(plan.alignment, t)];
        F0Frame f;
        f.voiced = phoneme_by_symbol(phonemes, seg.symbol).voiced;
        f.f0_hz = f.voiced ? plan.f0.at(t) : 0.0;
        contour.frames.push_back(f);
    }
    return contour;
}

AudioClip synth_clip(const SpeakerTemplate& spk, const std::vector<PseudoPhoneme>& phonemes,
                     const PhonemeAlignment& alignment, const F0Model& f0, int samples,
                     int sample_rate_hz) {
    spk.validate();
    check(samples > 0 && sample_rate_hz > 0, ErrorKind::config, "synth: empty clip");
    check(!alignment.segments.empty(), ErrorKind::config, "synth: empty alignment");

    AudioClip clip;
    clip.sample_rate_hz = sample_rate_hz;
    clip.samples.resize(samples);

    const double nyquist = 0.5 * sample_rate_hz;
    // Full 0 -> 1 amplitude transitions take 4 ms.
    const double slew = 1.0 / (0.004 * sample_rate_hz);
    std::array<double, kHarmonics> amp{};
    double phase = 0;
    size_t seg = 0;
    bool dropped = false;
    for (int n = 0; n < samples; ++n) {
        const double t = static_cast<double>(n) / sample_rate_hz;
        while (seg + 1 < alignment.segments.size() && t >= alignment.segments[seg].end_sec)
            ++seg;
        const PseudoPhoneme& ph = phoneme_by_symbol(phonemes, alignment.segments[seg].symbol);
        const double f = f0.at(t);
        phase += 2 * kPi * f / sample_rate_hz;
        double x = 0;
        for (int k = 0; k < kHarmonics; ++k) {
            double target = 0;
            if (ph.voiced && ph.active[k]) {
                if ((k + 1) * f < nyquist)
                    target = spk.harmonics[k];
                else
                    dropped = true;
            }
            amp[k] += std::clamp(target - amp[k], -slew, slew);
            if (amp[k] != 0) x += amp[k] * std::sin((k + 1) * phase);
        }
        clip.samples[n] = static_cast<float>(x);
    }
    if (dropped)
        std::fprintf(stderr, "synth: dropped harmonics at or above Nyquist (%d Hz)\n",
                     static_cast<int>(nyquist));
    bool any = false;
    for (float s : clip.samples)
        if (s != 0) any = true;
    if (any) clip = peak_normalize(clip);
    return clip;
}

// ---------------------------------------------------------------------------
// Corpus generation

void CorpusSpec::validate() const {
    check(!out_dir.empty(), ErrorKind::config, "corpus: output directory not set");
    check(clips_per_speaker >= 1, ErrorKind::config, "corpus: need at least one clip per speaker");
    check(sample_rate_hz > 0 && frame_size_top > 0 &&
              sample_rate_hz % frame_size_top == 0,
          ErrorKind::config, "corpus: sample rate must be a multiple of the frame size");
    check(clip_seconds >= 0.1, ErrorKind::config, "corpus: clips must be at least 0.1 s");
}

std::vector<ManifestRow> synth_corpus(const CorpusSpec& spec) {
    spec.validate();
    namespace fs = std::filesystem;
    const fs::path root(spec.out_dir);
    fs::create_directories(root / "wav");
    fs::create_directories(root / "align");
    fs::create_directories(root / "f0");

    const std::vector<SpeakerTemplate> speakers = desk_speaker_templates();
    const std::vector<PseudoPhoneme> phonemes = desk_phonemes();
    save_inventory((root / "inventory.txt").string(), desk_inventory());

    const double period = static_cast<double>(spec.frame_size_top) / spec.sample_rate_hz;
    const int min_frames = static_cast<int>(std::ceil(0.06 / period));
    const Rng base(spec.seed);

    std::vector<ManifestRow> rows;
    for (const SpeakerTemplate& spk : speakers) {
        for (int i = 0; i < spec.clips_per_speaker; ++i) {
            Rng rng = base.derive("clip/" + spk.speaker_id, static_cast<uint64_t>(i));
            const double seconds = spec.clip_seconds * rng.next_uniform(0.8, 1.2);
            const int frames = std::max(min_frames, static_cast<int>(std::lround(seconds / period)));
            const int samples = frames * spec.frame_size_top;

            ClipPlan plan = plan_clip(spk, phonemes, frames, period, rng);
            F0Contour truth = ground_truth_contour(plan, phonemes, frames, period);
            AudioClip clip = synth_clip(spk, phonemes, plan.alignment, plan.f0, samples,
                                        spec.sample_rate_hz);

            char tag[16];
            std::snprintf(tag, sizeof(tag), "%03d", i);
            ManifestRow row;
            row.speaker_id = spk.speaker_id;
            row.clip_id = spk.speaker_id + "_" + tag;
            row.wav = "wav/" + row.clip_id + ".wav";
            row.align = "align/" + row.clip_id + ".align";
            row.f0 = "f0/" + row.clip_id + ".f0.csv";
            row.seconds = frames * period;
            wav_write((root / row.wav).string(), clip);
            save_alignment_file((root / row.align).string(), plan.alignment);
            save_f0_file((root / row.f0).string(), truth);
            rows.push_back(std::move(row));
        }
    }
    save_manifest((root / "manifest.csv").string(), rows);
    return rows;
}

void save_manifest(const std::string& path, const std::vector<ManifestRow>& rows) {
    std::string out = "speaker_id,clip_id,wav,align,f0,seconds\n";
    for (const ManifestRow& r : rows)
        out += r.speaker_id + "," + r.clip_id + "," + r.wav + "," + r.align + "," + r.f0 + "," +
               format_double(r.seconds) + "\n";
    write_text_file(path, out);
}

std::vector<ManifestRow> load_manifest(const std::string& path) {
    auto lines = split_lines(read_text_file(path));
    check(!lines.empty() && lines[0] == "speaker_id,clip_id,wav,align,f0,seconds", ErrorKind::io,
          path + ":1: expected header 'speaker_id,clip_id,wav,align,f0,seconds'");
    std::vector<ManifestRow> rows;
    for (size_t i = 1; i < lines.size(); ++i) {
        if (lines[i].empty()) continue;
        const std::string where = path + ":" + std::to_string(i + 1);
        auto fields = split(lines[i], ',');
        check(fields.size() == 6, ErrorKind::io, where + ": expected 6 CSV fields");
        ManifestRow r;
        r.speaker_id = fields[0];
        r.clip_id = fields[1];
        r.wav = fields[2];
        r.align = fields[3];
        r.f0 = fields[4];
        r.seconds = parse_double(fields[5], where);
        check(!r.speaker_id.empty() && !r.clip_id.empty(), ErrorKind::io,
              where + ": empty speaker or clip id");
        rows.push_back(std::move(r));
    }
    return rows;
}

// ---------------------------------------------------------------------------
// Measurement

double cosine_similarity(const std::array<double, kHarmonics>& a,
                         const std::array<double, kHarmonics>& b) {
    double dot = 0, na = 0, nb = 0;
    for (int k = 0; k < kHarmonics; ++k) {
        dot += a[k] * b[k];
        na += a[k] * a[k];
        nb += b[k] * b[k];
    }
    if (na <= 0 || nb <= 0) return 0;
    return dot / std::sqrt(na * nb);
}

std::array<double, kHarmonics> measure_timbre(const AudioClip& clip, const F0Contour& f0) {
    const int rate = clip.sample_rate_hz;
    const int total = static_cast<int>(clip.samples.size());
    check(rate > 0 && total > 0, ErrorKind::config, "timbre: empty clip");
    const int n_frames = static_cast<int>(f0.frames.size());
    check(n_frames > 0, ErrorKind::config, "timbre: empty contour");

    int voiced_frames = 0;
    for (const F0Frame& f : f0.frames)
        if (f.voiced) ++voiced_frames;
    check(voiced_frames >= 3 && voiced_frames * 10 >= n_frames * 3, ErrorKind::numeric,
          "timbre: insufficient voiced frames (" + std::to_string(voiced_frames) + " of " +
              std::to_string(n_frames) + ")");

    std::array<std::vector<double>, kHarmonics> per_frame;
    for (int i = 0; i < n_frames; ++i) {
        const F0Frame& fr = f0.frames[i];
        if (!fr.voiced || fr.f0_hz <= 0) continue;
        // Window of ~3 pitch periods centered on the frame, shifted inward
        // at the clip edges.
        const int len = static_cast<int>(std::lround(3.0 * rate / fr.f0_hz));
        if (len < 8 || len > total) continue;
        const int center = static_cast<int>(std::lround((i + 0.5) * f0.frame_period_sec * rate));
        const int start = std::clamp(center - len / 2, 0, total - len);

        std::array<double, kHarmonics> amps{};
        double wsum = 0, psum = 0;
        std::vector<double> windowed(len);
        for (int j = 0; j < len; ++j) {
            const double w = 0.5 - 0.5 * std::cos(2 * kPi * j / (len - 1));
            windowed[j] = w * clip.samples[start + j];
            wsum += w;
        }
        for (int k = 0; k < kHarmonics; ++k) {
            const double freq = (k + 1) * fr.f0_hz;
            if (freq >= 0.5 * rate) continue; // out-of-band harmonics read as 0
            double re = 0, im = 0;
            const double step = 2 * kPi * freq / rate;
            for (int j = 0; j < len; ++j) {
                re += windowed[j] * std::cos(step * j);
                im -= windowed[j] * std::sin(step * j);
            }
            amps[k] = 2.0 * std::sqrt(re * re + im * im) / wsum;
            psum += amps[k];
        }
        if (psum <= 1e-12) continue; // silent despite the voiced flag
        for (int k = 0; k < kHarmonics; ++k) per_frame[k].push_back(amps[k] / psum);
    }

    const size_t used = per_frame[0].size();
    check(used >= 3, ErrorKind::numeric, "timbre: too few measurable voiced frames");
    std::array<double, kHarmonics> profile{};
    double sum = 0;
    for (int k = 0; k < kHarmonics; ++k) {
        std::vector<double> v = per_frame[k];
        std::sort(v.begin(), v.end());
        profile[k] = (used % 2 == 1) ? v[used / 2] : 0.5 * (v[used / 2 - 1] + v[used / 2]);
        sum += profile[k];
    }
    check(sum > 0, ErrorKind::numeric, "timbre: all harmonic bins are empty");
    for (int k = 0; k < kHarmonics; ++k) profile[k] /= sum;
    return profile;
}

F0Contour measure_f0(const AudioClip& clip, double frame_period_sec) {
    const int rate = clip.sample_rate_hz;
    const int total = static_cast<int>(clip.samples.size());
    check(rate > 0, ErrorKind::config, "pitch: clip has no sample rate");
    check(frame_period_sec > 0, ErrorKind::config, "pitch: frame period must be positive");

    F0Contour contour;
    contour.frame_period_sec = frame_period_sec;
    const int n_frames =
        static_cast<int>(std::lround(total / (frame_period_sec * rate)));
    const int lag_min = std::max(2, rate / 500);
    const int lag_max = (rate + 49) / 50;
    const int win = lag_max;           // one full 50 Hz period of evidence
    const int need = win + lag_max;    // window plus the largest lag

    for (int i = 0; i < n_frames; ++i) {
        F0Frame frame; // defaults to unvoiced
        contour.frames.push_back(frame);
        if (total < need) continue;
        // Base window centered on the frame; lagged copies extend to the
        // right, so the voiced/unvoiced call reflects the frame itself.
        const int center = static_cast<int>(std::lround((i + 0.5) * frame_period_sec * rate));
        const int start = std::clamp(center - win / 2, 0, total - need);

        // The autocorrelation runs on the mean-removed span: 8-bit companding
        // has no code for exactly zero, so decoded "silence" is a small DC
        // offset, and DC correlates perfectly at every lag.
        double mean = 0;
        for (int n = 0; n < need; ++n) mean += clip.samples[start + n];
        mean /= need;

        auto energy = [&](int off) {
            double e = 0;
            for (int n = 0; n < win; ++n) {
                const double s = clip.samples[start + off + n] - mean;
                e += s * s;
            }
            return e;
        };
        // Silence gate above the companding dither floor: one code step
        // around zero is 1.7e-4 of full scale, so code-level dither has
        // mean-removed energy up to ~8e-9 per sample, while the quietest
        // genuine voiced content sits orders of magnitude higher.
        const double e0 = energy(0);
        if (e0 / win < 1e-8) continue; // silence

        std::vector<double> r(lag_max + 1, 0);
        double rmax = 0;
        for (int lag = lag_min; lag <= lag_max; ++lag) {
            double dot = 0;
            for (int n = 0; n < win; ++n)
                dot += (static_cast<double>(clip.samples[start + n]) - mean) *
                       (clip.samples[start + n + lag] - mean);
            const double el = energy(lag);
            r[lag] = (el > 1e-12) ? dot / std::sqrt(e0 * el) : 0;
            rmax = std::max(rmax, r[lag]);
        }
        if (rmax < 0.3) continue; // no credible periodicity

        // Smallest-lag peak near the global maximum wins, suppressing
        // period-doubling (the true period's integer multiples also score
        // close to 1).
        int best = -1;
        for (int lag = lag_min; lag <= lag_max; ++lag) {
            const double left = (lag > lag_min) ? r[lag - 1] : -1;
            const double right = (lag < lag_max) ? r[lag + 1] : -1;
            if (r[lag] >= left && r[lag] >= right && r[lag] >= 0.85 * rmax) {
                best = lag;
                break;
            }
        }
        if (best < 0) continue;

        double lag_hat = best;
        if (best > lag_min && best < lag_max) {
            const double denom = r[best - 1] - 2 * r[best] + r[best + 1];
            if (std::abs(denom) > 1e-12) {
                const double delta = 0.5 * (r[best - 1] - r[best + 1]) / denom;
                if (std::abs(delta) <= 0.5) lag_hat = best + delta;
            }
        }
        contour.frames.back().voiced = true;
        contour.frames.back().f0_hz = std::clamp(rate / lag_hat, 50.0, 500.0);
    }
    return contour;
}

ConversionReport eval_conversion(const AudioClip& converted, const F0Contour& source_f0,
                                 const SpeakerStats& source_stats,
                                 const SpeakerTemplate& source_template,
                                 const SpeakerTemplate& target_template,
                                 const SpeakerStats& target_stats) {
    check(source_stats.sigma > 0 && target_stats.sigma > 0, ErrorKind::numeric,
          "evaluation: degenerate speaker statistics");

    const F0Contour measured = measure_f0(converted, source_f0.frame_period_sec);
    const std::array<double, kHarmonics> profile = measure_timbre(converted, measured);

    ConversionReport report;
    report.cos_to_target = cosine_similarity(profile, target_template.harmonics);
    report.cos_to_source = cosine_similarity(profile, source_template.harmonics);
    report.timbre_score = report.cos_to_target - report.cos_to_source;

    const size_t n = std::min(source_f0.frames.size(), measured.frames.size());
    check(n > 0, ErrorKind::numeric, "evaluation: no overlapping frames");
    std::vector<double> rel_errs;
    int agree = 0;
    for (size_t i = 0; i < n; ++i) {
        const F0Frame& src = source_f0.frames[i];
        const F0Frame& got = measured.frames[i];
        if (src.voiced == got.voiced) ++agree;
        if (src.voiced && got.voiced) {
            const double x_prime = (std::log(src.f0_hz) - source_stats.mu) / source_stats.sigma;
            const double expected = std::exp(target_stats.mu + target_stats.sigma * x_prime);
            rel_errs.push_back(std::abs(got.f0_hz - expected) / expected);
        }
    }
    report.voicing_agreement = static_cast<double>(agree) / static_cast<double>(n);
    report.voiced_frames_compared = static_cast<int>(rel_errs.size());
    if (!rel_errs.empty()) {
        std::sort(rel_errs.begin(), rel_errs.end());
        const size_t m = rel_errs.size();
        report.f0_median_rel_err =
            (m % 2 == 1) ? rel_errs[m / 2] : 0.5 * (rel_errs[m / 2 - 1] + rel_errs[m / 2]);
    } else {
        report.f0_median_rel_err = std::numeric_limits<double>::quiet_NaN();
    }
    return report;
}

} // namespace tiervc
