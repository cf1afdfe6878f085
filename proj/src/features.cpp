#include "tiervc/features.hpp"

#include <algorithm>
#include <cmath>

#include "tiervc/error.hpp"
#include "tiervc/textio.hpp"

namespace tiervc {

PhonemeInventory PhonemeInventory::from_symbols(std::vector<std::string> symbols) {
    PhonemeInventory inv;
    check(!symbols.empty(), ErrorKind::config, "inventory: no symbols");
    check(symbols[0] == kPad, ErrorKind::config, "inventory: first symbol must be PAD, got '" + symbols[0] + "'");
    inv.symbols = std::move(symbols);
    for (int i = 0; i < inv.size(); ++i) {
        auto [_, fresh] = inv.index.emplace(inv.symbols[i], i);
        check(fresh, ErrorKind::config, "inventory: duplicate symbol '" + inv.symbols[i] + "'");
    }
    check(inv.index.count(kSil), ErrorKind::config, "inventory: SIL symbol missing");
    return inv;
}

int PhonemeInventory::at(const std::string& symbol) const {
    auto it = index.find(symbol);
    check(it != index.end(), ErrorKind::config, "inventory: unknown phoneme symbol '" + symbol + "'");
    return it->second;
}

std::vector<float> conditioning_pad_row(int phoneme_count) {
    std::vector<float> row(5 * phoneme_count + 2, 0.0f);
    for (int block = 0; block < 5; ++block) row[block * phoneme_count + 0] = 1.0f; // PAD index 0
    return row;
}

SpeakerStats compute_speaker_stats(const std::string& speaker_id,
                                   const std::vector<F0Contour>& contours) {
    // Two-pass population statistics over voiced frames of all clips.
    double sum = 0;
    long n = 0;
    for (const auto& c : contours)
        for (const auto& f : c.frames)
            if (f.voiced) {
                check(f.f0_hz > 0, ErrorKind::config,
                      "speaker stats: voiced frame with non-positive f0 for '" + speaker_id + "'");
                sum += std::log(f.f0_hz);
                ++n;
            }
    check(n >= 2, ErrorKind::config,
          "speaker stats: speaker '" + speaker_id + "' has " + std::to_string(n) +
              " voiced frames, need at least 2");
    double mu = sum / static_cast<double>(n);
    double ss = 0;
    for (const auto& c : contours)
        for (const auto& f : c.frames)
            if (f.voiced) {
                double d = std::log(f.f0_hz) - mu;
                ss += d * d;
            }
    double sigma = std::sqrt(ss / static_cast<double>(n));
    check(sigma >= 1e-8, ErrorKind::config,
          "speaker stats: degenerate sigma " + format_double(sigma) + " for '" + speaker_id + "'");
    SpeakerStats stats;
    stats.speaker_id = speaker_id;
    stats.mu = mu;
    stats.sigma = sigma;
    stats.frame_count = n;
    return stats;
}

namespace {

void check_stats_usable(const SpeakerStats& stats) {
    check(stats.sigma >= 1e-8, ErrorKind::config,
          "speaker stats for '" + stats.speaker_id + "' are degenerate (sigma=" +
              format_double(stats.sigma) + ")");
}

} // namespace

NormalizedF0 normalize_f0(const F0Contour& contour, const SpeakerStats& stats) {
    check_stats_usable(stats);
    NormalizedF0 out;
    out.frame_period_sec = contour.frame_period_sec;
    out.frames.reserve(contour.frames.size());
    for (const auto& f : contour.frames) {
        NormF0Frame nf;
        if (f.voiced) {
            check(f.f0_hz > 0, ErrorKind::config, "normalize_f0: voiced frame with non-positive f0");
            nf.x_prime = (std::log(f.f0_hz) - stats.mu) / stats.sigma;
            nf.voiced = true;
        } // unvoiced: x' = 0, flag 0
        out.frames.push_back(nf);
    }
    return out;
}

double denormalize_f0(double x_prime, const SpeakerStats& stats) {
    check_stats_usable(stats);
    return std::exp(stats.mu + stats.sigma * x_prime);
}

std::array<int, 5> phoneme_context(const PhonemeAlignment& alignment,
                                   const PhonemeInventory& inventory, int frame_index,
                                   double frame_period_sec) {
    check(!alignment.segments.empty(), ErrorKind::config, "phoneme_context: empty alignment");
    check(frame_index >= 0, ErrorKind::config, "phoneme_context: negative frame index");
    double t = (frame_index + 0.5) * frame_period_sec;
    double duration = alignment.duration_sec();
    check(t <= duration, ErrorKind::config,
          "phoneme_context: frame " + std::to_string(frame_index) + " center " + format_double(t) +
              "s is past the utterance end " + format_double(duration) + "s");
    int n = static_cast<int>(alignment.segments.size());
    int cur = n - 1; // t == duration lands in the last segment
    for (int i = 0; i < n; ++i)
        if (t < alignment.segments[i].end_sec) {
            cur = i;
            break;
        }
    int pad = 0; // PAD is pinned to index 0
    std::array<int, 5> ctx;
    for (int off = -2; off <= 2; ++off) {
        int i = cur + off;
        ctx[off + 2] = (i < 0 || i >= n) ? pad : inventory.at(alignment.segments[i].symbol);
    }
    return ctx;
}

ConditioningSequence build_conditioning(const PhonemeAlignment& alignment,
                                        const NormalizedF0& contour,
                                        const PhonemeInventory& inventory) {
    check(contour.frame_period_sec > 0, ErrorKind::config, "build_conditioning: non-positive frame period");
    double rate = 1.0 / contour.frame_period_sec;
    long from_alignment = std::lround(alignment.duration_sec() * rate);
    long from_contour = static_cast<long>(contour.frames.size());
    check(std::labs(from_alignment - from_contour) <= 1, ErrorKind::config,
          "build_conditioning: alignment implies " + std::to_string(from_alignment) +
              " frames but contour has " + std::to_string(from_contour) +
              " (more than one frame apart)");
    // Off-by-one grid disagreements are resolved by truncating to the shorter.
    int frames = static_cast<int>(std::min(from_alignment, from_contour));

    ConditioningSequence seq;
    seq.phoneme_count = inventory.size();
    seq.frame_rate_hz = rate;
    int p = seq.phoneme_count;
    seq.values.assign(static_cast<size_t>(frames) * seq.dim(), 0.0f);
    for (int f = 0; f < frames; ++f) {
        auto ctx = phoneme_context(alignment, inventory, f, contour.frame_period_sec);
        float* row = seq.values.data() + static_cast<size_t>(f) * seq.dim();
        for (int block = 0; block < 5; ++block) row[block * p + ctx[block]] = 1.0f;
        const auto& nf = contour.frames[f];
        row[5 * p] = static_cast<float>(nf.x_prime);
        row[5 * p + 1] = nf.voiced ? 1.0f : 0.0f;
    }
    return seq;
}

PhonemeAlignment parse_alignment_file(const std::string& path, const PhonemeInventory& inventory) {
    PhonemeAlignment alignment;
    auto lines = split_lines(read_text_file(path));
    for (size_t i = 0; i < lines.size(); ++i) {
        if (lines[i].empty()) continue;
        std::string where = path + ":" + std::to_string(i + 1);
        auto fields = split(lines[i], '\t');
        check(fields.size() == 3, ErrorKind::io,
              where + ": expected 'start<TAB>end<TAB>symbol', got " + std::to_string(fields.size()) +
                  " fields");
        AlignSegment seg;
        seg.start_sec = parse_double(fields[0], where);
        seg.end_sec = parse_double(fields[1], where);
        seg.symbol = fields[2];
        check(seg.start_sec < seg.end_sec, ErrorKind::io,
              where + ": segment start " + format_double(seg.start_sec) + " is not before end " +
                  format_double(seg.end_sec));
        inventory.at(seg.symbol); // unknown symbol -> error
        if (!alignment.segments.empty()) {
            double prev_end = alignment.segments.back().end_sec;
            check(seg.start_sec >= prev_end - 1e-9, ErrorKind::io,
                  where + ": segment overlaps previous (starts at " + format_double(seg.start_sec) +
                      ", previous ends at " + format_double(prev_end) + ")");
            check(seg.start_sec <= prev_end + 1e-6, ErrorKind::io,
                  where + ": gap after previous segment ending at " + format_double(prev_end));
        } else {
            check(std::abs(seg.start_sec) <= 1e-6, ErrorKind::io,
                  where + ": first segment must start at 0");
        }
        alignment.segments.push_back(std::move(seg));
    }
    check(!alignment.segments.empty(), ErrorKind::io, path + ": no segments");
    return alignment;
}

void save_alignment_file(const std::string& path, const PhonemeAlignment& alignment) {
    std::string out;
    for (const auto& seg : alignment.segments)
        out += format_double(seg.start_sec) + "\t" + format_double(seg.end_sec) + "\t" + seg.symbol + "\n";
    write_text_file(path, out);
}

F0Contour parse_f0_file(const std::string& path, double frame_period_sec) {
    auto lines = split_lines(read_text_file(path));
    check(!lines.empty() && lines[0] == "frame,f0_hz,voiced", ErrorKind::io,
          path + ":1: expected header 'frame,f0_hz,voiced'");
    F0Contour contour;
    contour.frame_period_sec = frame_period_sec;
    for (size_t i = 1; i < lines.size(); ++i) {
        if (lines[i].empty()) continue;
        std::string where = path + ":" + std::to_string(i + 1);
        auto fields = split(lines[i], ',');
        check(fields.size() == 3, ErrorKind::io, where + ": expected 3 CSV fields");
        long frame = parse_long(fields[0], where);
        check(frame == static_cast<long>(contour.frames.size()), ErrorKind::io,
              where + ": frame index " + std::to_string(frame) + " out of order, expected " +
                  std::to_string(contour.frames.size()));
        F0Frame f;
        f.f0_hz = parse_double(fields[1], where);
        long v = parse_long(fields[2], where);
        check(v == 0 || v == 1, ErrorKind::io, where + ": voiced flag must be 0 or 1");
        f.voiced = v == 1;
        check(f.f0_hz >= 0, ErrorKind::io, where + ": negative f0");
        check(!f.voiced || f.f0_hz > 0, ErrorKind::io, where + ": voiced frame with zero f0");
        contour.frames.push_back(f);
    }
    return contour;
}

void save_f0_file(const std::string& path, const F0Contour& contour) {
    std::string out = "frame,f0_hz,voiced\n";
    for (size_t i = 0; i < contour.frames.size(); ++i)
        out += std::to_string(i) + "," + format_double(contour.frames[i].f0_hz) + "," +
               (contour.frames[i].voiced ? "1" : "0") + "\n";
    write_text_file(path, out);
}

PhonemeInventory load_inventory(const std::string& path) {
    std::vector<std::string> symbols;
    for (auto& line : split_lines(read_text_file(path)))
        if (!line.empty()) symbols.push_back(line);
    check(!symbols.empty(), ErrorKind::io, path + ": empty inventory");
    return PhonemeInventory::from_symbols(std::move(symbols));
}

void save_inventory(const std::string& path, const PhonemeInventory& inventory) {
    std::string out;
    for (const auto& s : inventory.symbols) out += s + "\n";
    write_text_file(path, out);
}

std::map<std::string, SpeakerStats> load_speaker_stats(const std::string& path) {
    auto lines = split_lines(read_text_file(path));
    check(!lines.empty() && lines[0] == "speaker_id,mu,sigma,frames", ErrorKind::io,
          path + ":1: expected header 'speaker_id,mu,sigma,frames'");
    std::map<std::string, SpeakerStats> out;
    for (size_t i = 1; i < lines.size(); ++i) {
        if (lines[i].empty()) continue;
        std::string where = path + ":" + std::to_string(i + 1);
        auto fields = split(lines[i], ',');
        check(fields.size() == 4, ErrorKind::io, where + ": expected 4 CSV fields");
        SpeakerStats s;
        s.speaker_id = fields[0];
        s.mu = parse_double(fields[1], where);
        s.sigma = parse_double(fields[2], where);
        s.frame_count = parse_long(fields[3], where);
        check(!out.count(s.speaker_id), ErrorKind::io, where + ": duplicate speaker '" + s.speaker_id + "'");
        out.emplace(s.speaker_id, std::move(s));
    }
    check(!out.empty(), ErrorKind::io, path + ": no speaker rows");
    return out;
}

void save_speaker_stats(const std::string& path, const std::vector<SpeakerStats>& stats) {
    std::string out = "speaker_id,mu,sigma,frames\n";
    for (const auto& s : stats)
        out += s.speaker_id + "," + format_double(s.mu) + "," + format_double(s.sigma) + "," +
               std::to_string(s.frame_count) + "\n";
    write_text_file(path, out);
}

} // namespace tiervc
