#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "tiervc/audio.hpp"
#include "tiervc/condnet.hpp"
#include "tiervc/tensor.hpp"

namespace tiervc {

// Static shape of the three-tier sample model plus the conditioning network.
// Desk-scale and paper-scale differ only in these numbers.
struct ModelConfig {
    int sample_rate_hz = 4000;
    int frame_size_top = 80; // samples per top-tier frame == samples per conditioning frame
    int frame_size_mid = 8;  // samples per middle-tier frame == sample-level context length
    int quant_levels = 256;
    int sample_embed_dim = 16; // e: embedding width of one quantized sample
    int cond_dim = 64;         // width of the conditioning vectors L_t
    int hidden_top = 64;
    int hidden_mid = 64;
    int cond_hidden = 64;
    std::vector<int> mlp_widths = {64, 64}; // widths of the two hidden FC layers
    std::vector<std::string> speakers;      // order defines embedding rows
    std::vector<std::string> phonemes;      // inventory symbols, PAD first

    int ratio_top() const { return frame_size_top / frame_size_mid; }
    int ratio_mid() const { return frame_size_mid; }
    int mlp_input_dim() const { return frame_size_mid * sample_embed_dim; }
    int phoneme_count() const { return static_cast<int>(phonemes.size()); }
    int cond_feature_dim() const { return 5 * phoneme_count() + 2; }
    double frame_period_sec() const {
        return static_cast<double>(frame_size_top) / sample_rate_hz;
    }
    int speaker_index(const std::string& id) const {
        for (size_t i = 0; i < speakers.size(); ++i)
            if (speakers[i] == id) return static_cast<int>(i);
        throw Error(ErrorKind::config, "unknown speaker '" + id + "'");
    }

    void validate() const {
        check(quant_levels == 256, ErrorKind::config,
              "model: quant_levels must be 256, got " + std::to_string(quant_levels));
        check(frame_size_mid > 0 && frame_size_top > 0, ErrorKind::config,
              "model: frame sizes must be positive");
        check(frame_size_top % frame_size_mid == 0, ErrorKind::config,
              "model: top frame size " + std::to_string(frame_size_top) +
                  " is not a multiple of middle frame size " + std::to_string(frame_size_mid));
        check(sample_rate_hz > 0 && sample_rate_hz % frame_size_top == 0, ErrorKind::config,
              "model: sample rate " + std::to_string(sample_rate_hz) +
                  " is not a multiple of the top frame size " + std::to_string(frame_size_top));
        check(sample_embed_dim > 0 && cond_dim > 0 && hidden_top > 0 && hidden_mid > 0 &&
                  cond_hidden > 0,
              ErrorKind::config, "model: all widths must be positive");
        check(mlp_widths.size() == 2 && mlp_widths[0] > 0 && mlp_widths[1] > 0, ErrorKind::config,
              "model: mlp_widths must list exactly the two hidden layer widths");
        check(!speakers.empty(), ErrorKind::config, "model: speaker list is empty");
        check(std::set<std::string>(speakers.begin(), speakers.end()).size() == speakers.size(),
              ErrorKind::config, "model: duplicate speaker ids");
        check(!phonemes.empty() && phonemes[0] == "PAD", ErrorKind::config,
              "model: phoneme inventory must start with PAD");
    }
};

template <typename S>
struct ModelParams {
    CondNetParams<S> cond;
    // Top tier: consumes the previous frame_size_top decoded samples plus L_t.
    Tensor<S> top_in_w, top_in_b; // [FS_top x h_top], [h_top]
    Tensor<S> top_cond_w;         // [cond_dim x h_top]
    GruCell<S> top_gru;           // input h_top
    std::vector<Tensor<S>> top_up_w, top_up_b; // ratio_top maps [h_top x h_mid]
    // Middle tier.
    Tensor<S> mid_in_w, mid_in_b; // [FS_mid x h_mid], [h_mid]
    Tensor<S> mid_cond_w;         // [cond_dim x h_mid]
    GruCell<S> mid_gru;           // input h_mid
    std::vector<Tensor<S>> mid_up_w, mid_up_b; // ratio_mid maps [h_mid x mlp_in]
    // Sample-level MLP over the last FS_mid quantized samples.
    Tensor<S> samp_embed;  // [Q x e]
    Tensor<S> samp_cond_w; // [cond_dim x mlp_in]
    Tensor<S> fc1_w, fc1_b;
    Tensor<S> fc2_w, fc2_b;
    Tensor<S> fc3_w, fc3_b; // final linear to Q logits

    static ModelParams attach(ParameterStore<S>& store, const ModelConfig& cfg) {
        cfg.validate();
        ModelParams p;
        p.cond = CondNetParams<S>::attach(store, static_cast<int>(cfg.speakers.size()),
                                          cfg.cond_feature_dim(), cfg.cond_hidden, cfg.cond_dim);
        p.top_in_w = store.create("top.in.w", {cfg.frame_size_top, cfg.hidden_top});
        p.top_in_b = store.create("top.in.b", {cfg.hidden_top});
        p.top_cond_w = store.create("top.cond.w", {cfg.cond_dim, cfg.hidden_top});
        p.top_gru = GruCell<S>::attach(store, "top.gru", cfg.hidden_top, cfg.hidden_top);
        for (int j = 0; j < cfg.ratio_top(); ++j) {
            std::string idx = (j < 10 ? "0" : "") + std::to_string(j);
            p.top_up_w.push_back(store.create("top.up." + idx + ".w", {cfg.hidden_top, cfg.hidden_mid}));
            p.top_up_b.push_back(store.create("top.up." + idx + ".b", {cfg.hidden_mid}));
        }
        p.mid_in_w = store.create("mid.in.w", {cfg.frame_size_mid, cfg.hidden_mid});
        p.mid_in_b = store.create("mid.in.b", {cfg.hidden_mid});
        p.mid_cond_w = store.create("mid.cond.w", {cfg.cond_dim, cfg.hidden_mid});
        p.mid_gru = GruCell<S>::attach(store, "mid.gru", cfg.hidden_mid, cfg.hidden_mid);
        for (int j = 0; j < cfg.ratio_mid(); ++j) {
            std::string idx = (j < 10 ? "0" : "") + std::to_string(j);
            p.mid_up_w.push_back(store.create("mid.up." + idx + ".w", {cfg.hidden_mid, cfg.mlp_input_dim()}));
            p.mid_up_b.push_back(store.create("mid.up." + idx + ".b", {cfg.mlp_input_dim()}));
        }
        p.samp_embed = store.create("mlp.embed", {cfg.quant_levels, cfg.sample_embed_dim});
        p.samp_cond_w = store.create("mlp.cond.w", {cfg.cond_dim, cfg.mlp_input_dim()});
        p.fc1_w = store.create("mlp.fc1.w", {cfg.mlp_input_dim(), cfg.mlp_widths[0]});
        p.fc1_b = store.create("mlp.fc1.b", {cfg.mlp_widths[0]});
        p.fc2_w = store.create("mlp.fc2.w", {cfg.mlp_widths[0], cfg.mlp_widths[1]});
        p.fc2_b = store.create("mlp.fc2.b", {cfg.mlp_widths[1]});
        p.fc3_w = store.create("mlp.fc3.w", {cfg.mlp_widths[1], cfg.quant_levels});
        p.fc3_b = store.create("mlp.fc3.b", {cfg.quant_levels});
        return p;
    }
};

// Seeded initialization. Matrices get uniform Glorot ranges, biases start at
// zero, embedding tables use a fixed +-0.1 range. Each tensor draws from its
// own derived stream, so values do not depend on initialization order.
template <typename S>
void init_params(ParameterStore<S>& store, uint64_t seed) {
    Rng base(seed);
    for (auto& [name, p] : store) {
        Rng stream = base.derive("init/" + name);
        if (name.find("embed") != std::string::npos) {
            fill_uniform(p, stream, -0.1, 0.1);
        } else if (p.rank() == 2) {
            double bound = std::sqrt(6.0 / (p.shape[0] + p.shape[1]));
            fill_uniform(p, stream, -bound, bound);
        } else {
            std::fill(p.data->begin(), p.data->end(), S(0));
        }
    }
}

// Everything that carries across TBPTT chunks of the same clips: recurrent
// hidden vectors, the last top-frame of codes per batch item, and the forward
// conditioning state per item.
template <typename S>
struct TierState {
    Tensor<S> top_h; // [B x h_top]
    Tensor<S> mid_h; // [B x h_mid]
    std::vector<std::vector<uint8_t>> history; // per item, last frame_size_top codes
    std::vector<CondNetState<S>> cond;         // per item

    static TierState initial(const ModelConfig& cfg, int batch) {
        check(batch > 0, ErrorKind::config, "tier state: batch must be positive");
        TierState s;
        s.top_h = Tensor<S>::zeros({batch, cfg.hidden_top});
        s.mid_h = Tensor<S>::zeros({batch, cfg.hidden_mid});
        // Clip start: history is digital silence, mu-law code 128.
        s.history.assign(batch, std::vector<uint8_t>(cfg.frame_size_top, 128));
        s.cond.resize(batch);
        return s;
    }
    int batch() const { return static_cast<int>(history.size()); }
};

struct ChunkCounters {
    long top_steps = 0; // per batch item
    long mid_steps = 0;
    long mlp_rows = 0;
};

template <typename S>
struct ChunkScore {
    Tensor<S> loss_bits; // scalar, per predicted sample
    ChunkCounters counters;
};

// Teacher-forced scoring of one batch-synchronized chunk.
//   codes[b]   : the chunk's true codes for item b (length T, multiple of FS_top)
//   weights[b] : per-position loss weights (0 masks padded positions)
//   conds[b]   : conditioning rows for exactly this chunk's frames [T/FS_top x cond_dim]
// Every position i is predicted from true history x_1..x_{i-1} (augmented by
// `state.history` before the chunk) and the conditioning context. Recurrent
// work is batched: all top-tier steps run first, then all middle-tier steps,
// then one flat MLP pass over every (position, item) row.
template <typename S>
ChunkScore<S> score_chunk(Tape<S>& t, const ModelParams<S>& p, const ModelConfig& cfg,
                          const std::vector<std::vector<uint8_t>>& codes,
                          const std::vector<std::vector<double>>& weights,
                          const std::vector<Tensor<S>>& conds, TierState<S>& state) {
    const int batch = static_cast<int>(codes.size());
    check(batch > 0, ErrorKind::config, "score_chunk: empty batch");
    check(state.batch() == batch, ErrorKind::config,
          "score_chunk: state is for batch " + std::to_string(state.batch()) + ", got " +
              std::to_string(batch) + " items");
    check(static_cast<int>(weights.size()) == batch && static_cast<int>(conds.size()) == batch,
          ErrorKind::config, "score_chunk: codes/weights/conds disagree on batch size");
    const int fs_top = cfg.frame_size_top;
    const int fs_mid = cfg.frame_size_mid;
    const int t_len = static_cast<int>(codes[0].size());
    check(t_len > 0 && t_len % fs_top == 0, ErrorKind::config,
          "score_chunk: chunk length " + std::to_string(t_len) +
              " is not a positive multiple of the top frame size " + std::to_string(fs_top));
    const int frames = t_len / fs_top;   // top-tier steps == conditioning frames
    const int n_mid = t_len / fs_mid;    // middle-tier steps
    const int r_top = cfg.ratio_top();
    const int r_mid = cfg.ratio_mid();
    for (int b = 0; b < batch; ++b) {
        check(static_cast<int>(codes[b].size()) == t_len, ErrorKind::config,
              "score_chunk: item " + std::to_string(b) + " has " + std::to_string(codes[b].size()) +
                  " codes, expected " + std::to_string(t_len));
        check(static_cast<int>(weights[b].size()) == t_len, ErrorKind::config,
              "score_chunk: item " + std::to_string(b) + " has wrong weight count");
        check(conds[b].rank() == 2 && conds[b].shape[0] == frames && conds[b].shape[1] == cfg.cond_dim,
              ErrorKind::config,
              "score_chunk: item " + std::to_string(b) + " conditioning is " + conds[b].shape_str() +
                  ", expected [" + std::to_string(frames) + "x" + std::to_string(cfg.cond_dim) + "]");
        check(static_cast<int>(state.history[b].size()) == fs_top, ErrorKind::config,
              "score_chunk: item " + std::to_string(b) + " history has wrong length");
    }

    // Decoded sample value at chunk position pos (negative reaches into the
    // pre-chunk history).
    auto decoded = [&](int b, int pos) -> S {
        int code = pos >= 0 ? codes[b][pos] : state.history[b][fs_top + pos];
        return static_cast<S>(mulaw_decode_sample(code));
    };
    auto code_at = [&](int b, int pos) -> int {
        return pos >= 0 ? codes[b][pos] : state.history[b][fs_top + pos];
    };

    // Conditioning rows of all items: row (b, f) = b*frames + f.
    auto l_cat = t.concat(conds, 0);
    auto l_top = t.matmul(l_cat, p.top_cond_w);  // [B*F x h_top]
    auto l_mid = t.matmul(l_cat, p.mid_cond_w);  // [B*F x h_mid]
    auto l_samp = t.matmul(l_cat, p.samp_cond_w); // [B*F x mlp_in]

    // ---- top tier ----
    Tensor<S> m_top = Tensor<S>::zeros({frames * batch, fs_top});
    for (int ft = 0; ft < frames; ++ft)
        for (int b = 0; b < batch; ++b)
            for (int j = 0; j < fs_top; ++j)
                m_top.at(ft * batch + b, j) = decoded(b, ft * fs_top - fs_top + j);
    auto top_in = t.add(t.matmul(m_top, p.top_in_w), p.top_in_b); // [F*B x h_top]

    Tensor<S> h_top = state.top_h;
    std::vector<Tensor<S>> top_outs(frames);
    for (int ft = 0; ft < frames; ++ft) {
        std::vector<int> row_ids(batch), cond_ids(batch);
        for (int b = 0; b < batch; ++b) {
            row_ids[b] = ft * batch + b;
            cond_ids[b] = b * frames + ft;
        }
        auto x = t.add(t.embedding_lookup(top_in, row_ids), t.embedding_lookup(l_top, cond_ids));
        h_top = p.top_gru.step(t, x, h_top);
        top_outs[ft] = h_top;
    }
    auto h_top_all = t.concat(top_outs, 0); // [F*B x h_top], row ft*B+b
    std::vector<Tensor<S>> up_top(r_top);
    for (int j = 0; j < r_top; ++j)
        up_top[j] = t.add(t.matmul(h_top_all, p.top_up_w[j]), p.top_up_b[j]);
    auto u_top = t.concat(up_top, 0); // row (j, ft, b) = j*F*B + ft*B + b

    // ---- middle tier ----
    Tensor<S> m_mid = Tensor<S>::zeros({n_mid * batch, fs_mid});
    for (int fm = 0; fm < n_mid; ++fm)
        for (int b = 0; b < batch; ++b)
            for (int j = 0; j < fs_mid; ++j)
                m_mid.at(fm * batch + b, j) = decoded(b, fm * fs_mid - fs_mid + j);
    auto mid_in = t.add(t.matmul(m_mid, p.mid_in_w), p.mid_in_b); // [n_mid*B x h_mid]

    Tensor<S> h_mid = state.mid_h;
    std::vector<Tensor<S>> mid_outs(n_mid);
    for (int fm = 0; fm < n_mid; ++fm) {
        int ft = fm / r_top, j = fm % r_top;
        std::vector<int> row_ids(batch), up_ids(batch), cond_ids(batch);
        for (int b = 0; b < batch; ++b) {
            row_ids[b] = fm * batch + b;
            up_ids[b] = j * frames * batch + ft * batch + b;
            cond_ids[b] = b * frames + (fm * fs_mid) / fs_top;
        }
        auto x = t.add(t.add(t.embedding_lookup(mid_in, row_ids), t.embedding_lookup(u_top, up_ids)),
                       t.embedding_lookup(l_mid, cond_ids));
        h_mid = p.mid_gru.step(t, x, h_mid);
        mid_outs[fm] = h_mid;
    }
    auto h_mid_all = t.concat(mid_outs, 0); // [n_mid*B x h_mid], row fm*B+b
    std::vector<Tensor<S>> up_mid(r_mid);
    for (int j = 0; j < r_mid; ++j)
        up_mid[j] = t.add(t.matmul(h_mid_all, p.mid_up_w[j]), p.mid_up_b[j]);
    auto u_mid = t.concat(up_mid, 0); // row (j, fm, b) = j*n_mid*B + fm*B + b

    // ---- sample-level MLP over every (position, item) row ----
    std::vector<int> embed_ids;
    embed_ids.reserve(static_cast<size_t>(t_len) * batch * fs_mid);
    std::vector<int> u_ids(static_cast<size_t>(t_len) * batch);
    std::vector<int> l_ids(static_cast<size_t>(t_len) * batch);
    std::vector<int> targets(static_cast<size_t>(t_len) * batch);
    std::vector<double> w_flat(static_cast<size_t>(t_len) * batch);
    for (int i = 0; i < t_len; ++i)
        for (int b = 0; b < batch; ++b) {
            size_t row = static_cast<size_t>(i) * batch + b;
            for (int k = 0; k < fs_mid; ++k) embed_ids.push_back(code_at(b, i - fs_mid + k));
            u_ids[row] = (i % r_mid) * n_mid * batch + (i / fs_mid) * batch + b;
            l_ids[row] = b * frames + i / fs_top;
            targets[row] = codes[b][i];
            w_flat[row] = weights[b][i];
        }
    auto embedded = t.embedding_lookup(p.samp_embed, embed_ids); // [T*B*FS_mid x e]
    auto embed_flat = t.reshape(embedded, {t_len * batch, cfg.mlp_input_dim()});
    auto x = t.add(t.add(embed_flat, t.embedding_lookup(u_mid, u_ids)),
                   t.embedding_lookup(l_samp, l_ids));
    auto a1 = t.relu(t.add(t.matmul(x, p.fc1_w), p.fc1_b));
    auto a2 = t.relu(t.add(t.matmul(a1, p.fc2_w), p.fc2_b));
    auto logits = t.add(t.matmul(a2, p.fc3_w), p.fc3_b);
    auto nats = t.softmax_cross_entropy(logits, targets, w_flat);

    ChunkScore<S> out;
    out.loss_bits = t.scale(nats, 1.0 / std::log(2.0));
    out.counters.top_steps = frames;
    out.counters.mid_steps = n_mid;
    out.counters.mlp_rows = t_len;

    // Carry state: values flow, gradients do not (truncated BPTT).
    state.top_h = detach(h_top);
    state.mid_h = detach(h_mid);
    for (int b = 0; b < batch; ++b)
        state.history[b].assign(codes[b].end() - fs_top, codes[b].end());
    return out;
}

} // namespace tiervc
