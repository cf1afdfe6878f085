#pragma once

#include <string>
#include <vector>

#include "tiervc/tensor.hpp"

namespace tiervc {

// Gated recurrent unit cell:
//   z  = sigmoid(W_z [x;h] + b_z)
//   r  = sigmoid(W_r [x;h] + b_r)
//   h~ = tanh(W_h [x; r*h] + b_h)
//   h' = (1-z)*h + z*h~
// With all-zero parameters and h = 0, h' stays 0.
template <typename S>
struct GruCell {
    int input_size = 0;
    int hidden_size = 0;
    Tensor<S> w_z, w_r, w_h; // [(input+hidden) x hidden]
    Tensor<S> b_z, b_r, b_h; // [hidden]

    static GruCell attach(ParameterStore<S>& store, const std::string& prefix, int input_size,
                          int hidden_size) {
        GruCell c;
        c.input_size = input_size;
        c.hidden_size = hidden_size;
        int rows = input_size + hidden_size;
        c.w_z = store.create(prefix + ".w_z", {rows, hidden_size});
        c.w_r = store.create(prefix + ".w_r", {rows, hidden_size});
        c.w_h = store.create(prefix + ".w_h", {rows, hidden_size});
        c.b_z = store.create(prefix + ".b_z", {hidden_size});
        c.b_r = store.create(prefix + ".b_r", {hidden_size});
        c.b_h = store.create(prefix + ".b_h", {hidden_size});
        return c;
    }

    // One step: x [B x input], h [B x hidden] -> h' [B x hidden].
    Tensor<S> step(Tape<S>& t, const Tensor<S>& x, const Tensor<S>& h) const {
        check(x.rank() == 2 && x.shape[1] == input_size, ErrorKind::config,
              "gru: input " + x.shape_str() + " does not match input size " + std::to_string(input_size));
        check(h.rank() == 2 && h.shape[1] == hidden_size && h.shape[0] == x.shape[0], ErrorKind::config,
              "gru: state " + h.shape_str() + " does not match input " + x.shape_str());
        auto xh = t.concat({x, h}, 1);
        auto z = t.sigmoid(t.add(t.matmul(xh, w_z), b_z));
        auto r = t.sigmoid(t.add(t.matmul(xh, w_r), b_r));
        auto xrh = t.concat({x, t.mul(r, h)}, 1);
        auto cand = t.tanh(t.add(t.matmul(xrh, w_h), b_h));
        // (1-z)*h + z*cand, written as h + z*(cand - h)
        return t.add(h, t.mul(z, t.sub(cand, h)));
    }
};

// Conditioning network: per-frame linguistic vectors are concatenated with a
// learned speaker embedding, run through a single bidirectional GRU layer,
// and projected to cond_dim, giving one context vector L_t per frame.
template <typename S>
struct CondNetParams {
    static constexpr int kSpeakerEmbedDim = 16;

    int feature_dim = 0; // linguistic vector size (5P+2)
    int hidden = 0;
    int cond_dim = 0;
    Tensor<S> speaker_embed; // [num_speakers x 16]
    GruCell<S> fwd, bwd;
    Tensor<S> proj_w; // [2*hidden x cond_dim]
    Tensor<S> proj_b; // [cond_dim]

    static CondNetParams attach(ParameterStore<S>& store, int num_speakers, int feature_dim,
                                int hidden, int cond_dim) {
        check(num_speakers > 0, ErrorKind::config, "condnet: need at least one speaker");
        CondNetParams p;
        p.feature_dim = feature_dim;
        p.hidden = hidden;
        p.cond_dim = cond_dim;
        p.speaker_embed = store.create("cond.embed", {num_speakers, kSpeakerEmbedDim});
        p.fwd = GruCell<S>::attach(store, "cond.fwd", feature_dim + kSpeakerEmbedDim, hidden);
        p.bwd = GruCell<S>::attach(store, "cond.bwd", feature_dim + kSpeakerEmbedDim, hidden);
        p.proj_w = store.create("cond.proj.w", {2 * hidden, cond_dim});
        p.proj_b = store.create("cond.proj.b", {cond_dim});
        return p;
    }

    int num_speakers() const { return speaker_embed.shape.empty() ? 0 : speaker_embed.shape[0]; }
};

// Forward recurrent state for one utterance (carried across TBPTT chunks;
// the backward direction is reset on every call by design).
template <typename S>
struct CondNetState {
    Tensor<S> fwd_h; // [1 x hidden]; empty tensor = start of utterance
};

// Runs the bidirectional layer over `frames` [F x feature_dim] for one
// speaker and returns L [F x cond_dim]. If `state` is given, the forward
// direction starts from it and the final forward hidden vector is stored
// back (detached). The backward direction always starts from zero: during
// training it sees only the current chunk, at generation the whole utterance.
template <typename S>
Tensor<S> condnet_forward(Tape<S>& t, const CondNetParams<S>& p, const Tensor<S>& frames,
                          int speaker_index, CondNetState<S>* state = nullptr) {
    check(frames.rank() == 2 && frames.shape[1] == p.feature_dim, ErrorKind::config,
          "condnet: frames " + frames.shape_str() + " do not match feature dim " +
              std::to_string(p.feature_dim));
    check(speaker_index >= 0 && speaker_index < p.num_speakers(), ErrorKind::config,
          "condnet: speaker index " + std::to_string(speaker_index) + " out of range [0," +
              std::to_string(p.num_speakers()) + ")");
    int f_count = frames.shape[0];

    auto spk = t.embedding_lookup(p.speaker_embed, std::vector<int>(f_count, speaker_index));
    auto x = t.concat({frames, spk}, 1); // [F x (feature_dim+16)]

    std::vector<Tensor<S>> x_rows(f_count);
    for (int f = 0; f < f_count; ++f) x_rows[f] = t.embedding_lookup(x, {f});

    Tensor<S> hf;
    if (state && state->fwd_h.data) {
        check(state->fwd_h.shape == std::vector<int>{1, p.hidden}, ErrorKind::config,
              "condnet: carried state " + state->fwd_h.shape_str() + " has wrong shape");
        hf = state->fwd_h;
    } else {
        hf = Tensor<S>::zeros({1, p.hidden});
    }
    std::vector<Tensor<S>> fwd_out(f_count);
    for (int f = 0; f < f_count; ++f) {
        hf = p.fwd.step(t, x_rows[f], hf);
        fwd_out[f] = hf;
    }
    Tensor<S> hb = Tensor<S>::zeros({1, p.hidden});
    std::vector<Tensor<S>> bwd_out(f_count);
    for (int f = f_count - 1; f >= 0; --f) {
        hb = p.bwd.step(t, x_rows[f], hb);
        bwd_out[f] = hb;
    }

    std::vector<Tensor<S>> rows(f_count);
    for (int f = 0; f < f_count; ++f) rows[f] = t.concat({fwd_out[f], bwd_out[f]}, 1);
    auto stacked = t.concat(rows, 0); // [F x 2*hidden]
    auto cond = t.add(t.matmul(stacked, p.proj_w), p.proj_b);

    if (state) state->fwd_h = detach(hf);
    return cond;
}

// Repeats each frame vector `factor` times contiguously:
// [a, b] with factor 3 -> [a, a, a, b, b, b].
template <typename S>
Tensor<S> upsample_repeat(Tape<S>& t, const Tensor<S>& frames, int factor) {
    check(frames.rank() == 2, ErrorKind::config,
          "upsample_repeat: need rank-2 input, got " + frames.shape_str());
    check(factor >= 1, ErrorKind::config,
          "upsample_repeat: factor must be at least 1, got " + std::to_string(factor));
    std::vector<int> ids;
    ids.reserve(static_cast<size_t>(frames.shape[0]) * factor);
    for (int f = 0; f < frames.shape[0]; ++f)
        for (int j = 0; j < factor; ++j) ids.push_back(f);
    return t.embedding_lookup(frames, ids);
}

} // namespace tiervc
