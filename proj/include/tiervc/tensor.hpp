#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "tiervc/error.hpp"
#include "tiervc/rng.hpp"

namespace tiervc {

// Dense row-major tensor (rank 1 or 2 in practice). Data and gradient buffers
// are shared_ptr so tensors behave like cheap handles: copies alias the same
// storage, which is what the tape's backward closures rely on.
//
// The scalar type S is templated so the same code runs in float for training
// and in double for gradient checking.
template <typename S>
struct Tensor {
    std::vector<int> shape;
    std::shared_ptr<std::vector<S>> data;
    std::shared_ptr<std::vector<S>> grad; // null unless requires_grad
    bool requires_grad = false;

    Tensor() = default;

    static Tensor zeros(std::vector<int> shape, bool requires_grad = false) {
        Tensor t;
        t.shape = std::move(shape);
        size_t n = t.checked_numel();
        t.data = std::make_shared<std::vector<S>>(n, S(0));
        t.requires_grad = requires_grad;
        if (requires_grad) t.grad = std::make_shared<std::vector<S>>(n, S(0));
        return t;
    }

    static Tensor constant(std::vector<int> shape, std::vector<S> values) {
        Tensor t = zeros(std::move(shape), false);
        check(values.size() == t.numel(), ErrorKind::config,
              "tensor: value count " + std::to_string(values.size()) +
                  " does not match shape " + t.shape_str());
        *t.data = std::move(values);
        return t;
    }

    size_t numel() const { return data ? data->size() : 0; }
    int rank() const { return static_cast<int>(shape.size()); }
    int rows() const { return rank() == 2 ? shape[0] : 1; }
    int cols() const { return rank() == 2 ? shape[1] : (rank() == 1 ? shape[0] : 0); }

    S& at(int r, int c) { return (*data)[static_cast<size_t>(r) * cols() + c]; }
    S at(int r, int c) const { return (*data)[static_cast<size_t>(r) * cols() + c]; }
    S& at(size_t i) { return (*data)[i]; }
    S at(size_t i) const { return (*data)[i]; }

    // Value of a one-element tensor.
    S item() const {
        check(numel() == 1, ErrorKind::numeric, "tensor: item() on non-scalar " + shape_str());
        return (*data)[0];
    }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    std::string shape_str() const {
        std::string s = "[";
        for (size_t i = 0; i < shape.size(); ++i) {
            if (i) s += "x";
            s += std::to_string(shape[i]);
        }
        return s + "]";
    }

private:
    size_t checked_numel() const {
        check(!shape.empty(), ErrorKind::config, "tensor: empty shape");
        size_t n = 1;
        for (int d : shape) {
            check(d > 0, ErrorKind::config, "tensor: non-positive dimension in " + shape_str());
            n *= static_cast<size_t>(d);
        }
        return n;
    }
};

template <typename S>
void fill_uniform(Tensor<S>& t, Rng& rng, double lo, double hi) {
    for (auto& v : *t.data) v = static_cast<S>(rng.next_uniform(lo, hi));
}

// Grad-free handle onto the same values. Used to carry recurrent state across
// TBPTT chunks: the next chunk reads the values but no gradient flows back.
template <typename S>
Tensor<S> detach(const Tensor<S>& t) {
    Tensor<S> out;
    out.shape = t.shape;
    out.data = t.data;
    out.requires_grad = false;
    return out;
}

// Reverse-mode tape. Every op computes its output immediately and, while
// recording, pushes one closure that adds the op's contribution to its
// inputs' gradient buffers. backward() runs the closures in reverse push
// order, which is a valid topological order because closures are pushed as
// the forward pass executes. Everything is sequential and the accumulation
// order is fixed, so backward is bit-reproducible.
template <typename S>
class Tape {
public:
    // When false, ops compute forward values only: no closures, no gradient
    // buffers. Used for evaluation and for the finite-difference probes.
    bool recording = true;

    size_t size() const { return records_.size(); }
    void clear() { records_.clear(); }

    // --- ops ----------------------------------------------------------

    Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b) {
        check(a.rank() == 2 && b.rank() == 2, ErrorKind::config,
              "matmul: need rank-2 operands, got " + a.shape_str() + " and " + b.shape_str());
        check(a.shape[1] == b.shape[0], ErrorKind::config,
              "matmul: inner dimensions disagree, " + a.shape_str() + " vs " + b.shape_str());
        int m = a.shape[0], k = a.shape[1], n = b.shape[1];
        Tensor<S> out = result({m, n}, a.requires_grad || b.requires_grad);
        const S* pa = a.data->data();
        const S* pb = b.data->data();
        S* pc = out.data->data();
        for (int i = 0; i < m; ++i) {
            const S* arow = pa + static_cast<size_t>(i) * k;
            S* crow = pc + static_cast<size_t>(i) * n;
            for (int kk = 0; kk < k; ++kk) {
                S av = arow[kk];
                if (av == S(0)) continue;
                const S* brow = pb + static_cast<size_t>(kk) * n;
                for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
            }
        }
        if (out.requires_grad) record([a, b, out, m, k, n] {
            const S* go = out.grad->data();
            if (a.requires_grad) {
                S* ga = a.grad->data();
                const S* pb = b.data->data();
                for (int i = 0; i < m; ++i) {
                    const S* grow = go + static_cast<size_t>(i) * n;
                    S* garow = ga + static_cast<size_t>(i) * k;
                    for (int kk = 0; kk < k; ++kk) {
                        const S* brow = pb + static_cast<size_t>(kk) * n;
                        S acc = S(0);
                        for (int j = 0; j < n; ++j) acc += grow[j] * brow[j];
                        garow[kk] += acc;
                    }
                }
            }
            if (b.requires_grad) {
                S* gb = b.grad->data();
                const S* pa = a.data->data();
                for (int i = 0; i < m; ++i) {
                    const S* arow = pa + static_cast<size_t>(i) * k;
                    const S* grow = go + static_cast<size_t>(i) * n;
                    for (int kk = 0; kk < k; ++kk) {
                        S av = arow[kk];
                        if (av == S(0)) continue;
                        S* gbrow = gb + static_cast<size_t>(kk) * n;
                        for (int j = 0; j < n; ++j) gbrow[j] += av * grow[j];
                    }
                }
            }
        });
        return out;
    }

    // Elementwise a + b. b may also be a vector of length a.cols(), added to
    // every row of a (the bias case).
    Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
        if (a.same_shape(b)) {
            Tensor<S> out = result(a.shape, a.requires_grad || b.requires_grad);
            for (size_t i = 0; i < a.numel(); ++i) out.at(i) = a.at(i) + b.at(i);
            if (out.requires_grad) record([a, b, out] {
                if (a.requires_grad)
                    for (size_t i = 0; i < a.numel(); ++i) (*a.grad)[i] += (*out.grad)[i];
                if (b.requires_grad)
                    for (size_t i = 0; i < b.numel(); ++i) (*b.grad)[i] += (*out.grad)[i];
            });
            return out;
        }
        check(a.rank() == 2 && b.rank() == 1 && b.shape[0] == a.shape[1], ErrorKind::config,
              "add: shapes " + a.shape_str() + " and " + b.shape_str() + " are incompatible");
        int m = a.shape[0], n = a.shape[1];
        Tensor<S> out = result(a.shape, a.requires_grad || b.requires_grad);
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) out.at(i, j) = a.at(i, j) + b.at(j);
        if (out.requires_grad) record([a, b, out, m, n] {
            if (a.requires_grad)
                for (size_t i = 0; i < a.numel(); ++i) (*a.grad)[i] += (*out.grad)[i];
            if (b.requires_grad)
                for (int i = 0; i < m; ++i)
                    for (int j = 0; j < n; ++j) (*b.grad)[j] += out.grad->at(static_cast<size_t>(i) * n + j);
        });
        return out;
    }

    Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b) {
        check(a.same_shape(b), ErrorKind::config,
              "sub: shapes " + a.shape_str() + " and " + b.shape_str() + " differ");
        Tensor<S> out = result(a.shape, a.requires_grad || b.requires_grad);
        for (size_t i = 0; i < a.numel(); ++i) out.at(i) = a.at(i) - b.at(i);
        if (out.requires_grad) record([a, b, out] {
            if (a.requires_grad)
                for (size_t i = 0; i < a.numel(); ++i) (*a.grad)[i] += (*out.grad)[i];
            if (b.requires_grad)
                for (size_t i = 0; i < b.numel(); ++i) (*b.grad)[i] -= (*out.grad)[i];
        });
        return out;
    }

    // Elementwise product; same broadcast rule as add.
    Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
        if (a.same_shape(b)) {
            Tensor<S> out = result(a.shape, a.requires_grad || b.requires_grad);
            for (size_t i = 0; i < a.numel(); ++i) out.at(i) = a.at(i) * b.at(i);
            if (out.requires_grad) record([a, b, out] {
                if (a.requires_grad)
                    for (size_t i = 0; i < a.numel(); ++i) (*a.grad)[i] += (*out.grad)[i] * b.at(i);
                if (b.requires_grad)
                    for (size_t i = 0; i < b.numel(); ++i) (*b.grad)[i] += (*out.grad)[i] * a.at(i);
            });
            return out;
        }
        check(a.rank() == 2 && b.rank() == 1 && b.shape[0] == a.shape[1], ErrorKind::config,
              "mul: shapes " + a.shape_str() + " and " + b.shape_str() + " are incompatible");
        int m = a.shape[0], n = a.shape[1];
        Tensor<S> out = result(a.shape, a.requires_grad || b.requires_grad);
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) out.at(i, j) = a.at(i, j) * b.at(j);
        if (out.requires_grad) record([a, b, out, m, n] {
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < n; ++j) {
                    S g = out.grad->at(static_cast<size_t>(i) * n + j);
                    if (a.requires_grad) a.grad->at(static_cast<size_t>(i) * n + j) += g * b.at(j);
                    if (b.requires_grad) (*b.grad)[j] += g * a.at(i, j);
                }
        });
        return out;
    }

    Tensor<S> scale(const Tensor<S>& a, double c) {
        Tensor<S> out = result(a.shape, a.requires_grad);
        for (size_t i = 0; i < a.numel(); ++i) out.at(i) = static_cast<S>(a.at(i) * c);
        if (out.requires_grad) record([a, out, c] {
            for (size_t i = 0; i < a.numel(); ++i) (*a.grad)[i] += static_cast<S>((*out.grad)[i] * c);
        });
        return out;
    }

    Tensor<S> sigmoid(const Tensor<S>& a) {
        Tensor<S> out = result(a.shape, a.requires_grad);
        for (size_t i = 0; i < a.numel(); ++i) {
            double x = a.at(i);
            // Evaluate on the non-overflowing side of exp for either sign.
            double y = x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
            out.at(i) = static_cast<S>(y);
        }
        if (out.requires_grad) record([a, out] {
            for (size_t i = 0; i < a.numel(); ++i) {
                S y = out.at(i);
                (*a.grad)[i] += (*out.grad)[i] * y * (S(1) - y);
            }
        });
        return out;
    }

    Tensor<S> tanh(const Tensor<S>& a) {
        Tensor<S> out = result(a.shape, a.requires_grad);
        for (size_t i = 0; i < a.numel(); ++i) out.at(i) = static_cast<S>(std::tanh(static_cast<double>(a.at(i))));
        if (out.requires_grad) record([a, out] {
            for (size_t i = 0; i < a.numel(); ++i) {
                S y = out.at(i);
                (*a.grad)[i] += (*out.grad)[i] * (S(1) - y * y);
            }
        });
        return out;
    }

    Tensor<S> relu(const Tensor<S>& a) {
        Tensor<S> out = result(a.shape, a.requires_grad);
        for (size_t i = 0; i < a.numel(); ++i) out.at(i) = a.at(i) > S(0) ? a.at(i) : S(0);
        if (out.requires_grad) record([a, out] {
            // Subgradient at exactly 0 is taken as 0.
            for (size_t i = 0; i < a.numel(); ++i)
                if (a.at(i) > S(0)) (*a.grad)[i] += (*out.grad)[i];
        });
        return out;
    }

    // Concatenate rank-2 tensors along rows (axis 0) or columns (axis 1).
    Tensor<S> concat(const std::vector<Tensor<S>>& parts, int axis) {
        check(!parts.empty(), ErrorKind::config, "concat: no inputs");
        check(axis == 0 || axis == 1, ErrorKind::config, "concat: axis must be 0 or 1");
        bool rg = false;
        for (const auto& p : parts) {
            check(p.rank() == 2, ErrorKind::config, "concat: need rank-2 inputs, got " + p.shape_str());
            rg = rg || p.requires_grad;
        }
        int fixed = parts[0].shape[1 - axis];
        int total = 0;
        for (const auto& p : parts) {
            check(p.shape[1 - axis] == fixed, ErrorKind::config,
                  "concat: mismatched shapes " + parts[0].shape_str() + " vs " + p.shape_str());
            total += p.shape[axis];
        }
        std::vector<int> oshape = axis == 0 ? std::vector<int>{total, fixed} : std::vector<int>{fixed, total};
        Tensor<S> out = result(oshape, rg);
        if (axis == 0) {
            size_t off = 0;
            for (const auto& p : parts) {
                std::copy(p.data->begin(), p.data->end(), out.data->begin() + off);
                off += p.numel();
            }
            if (out.requires_grad) record([parts, out] {
                size_t off = 0;
                for (const auto& p : parts) {
                    if (p.requires_grad)
                        for (size_t i = 0; i < p.numel(); ++i) (*p.grad)[i] += (*out.grad)[off + i];
                    off += p.numel();
                }
            });
        } else {
            int rows = fixed;
            int ocols = total;
            int coff = 0;
            for (const auto& p : parts) {
                int pc = p.shape[1];
                for (int r = 0; r < rows; ++r)
                    std::copy(p.data->begin() + static_cast<size_t>(r) * pc,
                              p.data->begin() + static_cast<size_t>(r) * pc + pc,
                              out.data->begin() + static_cast<size_t>(r) * ocols + coff);
                coff += pc;
            }
            if (out.requires_grad) record([parts, out, rows, ocols] {
                int coff = 0;
                for (const auto& p : parts) {
                    int pc = p.shape[1];
                    if (p.requires_grad)
                        for (int r = 0; r < rows; ++r)
                            for (int c = 0; c < pc; ++c)
                                p.grad->at(static_cast<size_t>(r) * pc + c) +=
                                    out.grad->at(static_cast<size_t>(r) * ocols + coff + c);
                    coff += pc;
                }
            });
        }
        return out;
    }

    // Gather rows of `table` by index: out[i, :] = table[ids[i], :].
    // Backward scatter-adds into the gathered rows, so this both implements
    // embedding tables and differentiable row selection.
    Tensor<S> embedding_lookup(const Tensor<S>& table, const std::vector<int>& ids) {
        check(table.rank() == 2, ErrorKind::config,
              "embedding_lookup: table must be rank-2, got " + table.shape_str());
        check(!ids.empty(), ErrorKind::config, "embedding_lookup: empty id list");
        int v = table.shape[0], d = table.shape[1];
        for (int id : ids)
            check(id >= 0 && id < v, ErrorKind::config,
                  "embedding_lookup: id " + std::to_string(id) + " out of range [0," + std::to_string(v) + ")");
        int n = static_cast<int>(ids.size());
        Tensor<S> out = result({n, d}, table.requires_grad);
        for (int i = 0; i < n; ++i)
            std::copy(table.data->begin() + static_cast<size_t>(ids[i]) * d,
                      table.data->begin() + static_cast<size_t>(ids[i]) * d + d,
                      out.data->begin() + static_cast<size_t>(i) * d);
        if (out.requires_grad) record([table, out, ids, d] {
            for (size_t i = 0; i < ids.size(); ++i) {
                S* dst = table.grad->data() + static_cast<size_t>(ids[i]) * d;
                const S* src = out.grad->data() + i * d;
                for (int c = 0; c < d; ++c) dst[c] += src[c];
            }
        });
        return out;
    }

    // Mean (optionally weighted) softmax cross-entropy in nats.
    // logits: [n x C]; targets: n class ids; weights: n non-negative entries
    // or empty for uniform. Rows with weight zero contribute nothing, which
    // is how padded positions are masked out of the loss.
    Tensor<S> softmax_cross_entropy(const Tensor<S>& logits, const std::vector<int>& targets,
                                    const std::vector<double>& weights = {}) {
        check(logits.rank() == 2, ErrorKind::config,
              "softmax_cross_entropy: logits must be rank-2, got " + logits.shape_str());
        int n = logits.shape[0], c = logits.shape[1];
        check(static_cast<int>(targets.size()) == n, ErrorKind::config,
              "softmax_cross_entropy: " + std::to_string(targets.size()) + " targets for " +
                  std::to_string(n) + " rows");
        check(weights.empty() || static_cast<int>(weights.size()) == n, ErrorKind::config,
              "softmax_cross_entropy: weight count does not match rows");
        double wsum = 0;
        for (int i = 0; i < n; ++i) {
            double w = weights.empty() ? 1.0 : weights[i];
            check(w >= 0, ErrorKind::config, "softmax_cross_entropy: negative weight");
            wsum += w;
        }
        check(wsum > 0, ErrorKind::config, "softmax_cross_entropy: all weights are zero");

        auto probs = std::make_shared<std::vector<S>>(static_cast<size_t>(n) * c);
        double loss = 0;
        for (int i = 0; i < n; ++i) {
            int t = targets[i];
            check(t >= 0 && t < c, ErrorKind::config,
                  "softmax_cross_entropy: target " + std::to_string(t) + " out of range [0," +
                      std::to_string(c) + ")");
            const S* row = logits.data->data() + static_cast<size_t>(i) * c;
            double mx = row[0];
            for (int j = 1; j < c; ++j) mx = std::max(mx, static_cast<double>(row[j]));
            double sum = 0;
            for (int j = 0; j < c; ++j) sum += std::exp(static_cast<double>(row[j]) - mx);
            double lse = mx + std::log(sum);
            for (int j = 0; j < c; ++j)
                (*probs)[static_cast<size_t>(i) * c + j] =
                    static_cast<S>(std::exp(static_cast<double>(row[j]) - lse));
            double w = weights.empty() ? 1.0 : weights[i];
            loss += w * (lse - static_cast<double>(row[t]));
        }
        Tensor<S> out = result({1}, logits.requires_grad);
        out.at(size_t{0}) = static_cast<S>(loss / wsum);
        if (out.requires_grad) record([logits, out, targets, weights, probs, wsum, n, c] {
            S go = (*out.grad)[0];
            for (int i = 0; i < n; ++i) {
                double w = weights.empty() ? 1.0 : weights[i];
                if (w == 0) continue;
                S scale = static_cast<S>(static_cast<double>(go) * w / wsum);
                S* grow = logits.grad->data() + static_cast<size_t>(i) * c;
                const S* prow = probs->data() + static_cast<size_t>(i) * c;
                for (int j = 0; j < c; ++j) grow[j] += scale * prow[j];
                grow[targets[i]] -= scale;
            }
        });
        return out;
    }

    // Sum of all elements (accumulated in double).
    Tensor<S> sum(const Tensor<S>& a) {
        double acc = 0;
        for (size_t i = 0; i < a.numel(); ++i) acc += a.at(i);
        Tensor<S> out = result({1}, a.requires_grad);
        out.at(size_t{0}) = static_cast<S>(acc);
        if (out.requires_grad) record([a, out] {
            S g = (*out.grad)[0];
            for (size_t i = 0; i < a.numel(); ++i) (*a.grad)[i] += g;
        });
        return out;
    }

    // Metadata-only view: shares data and gradient storage, so no closure is
    // needed — upstream writes into the shared gradient buffer directly.
    Tensor<S> reshape(const Tensor<S>& a, std::vector<int> shape) {
        Tensor<S> out;
        out.shape = std::move(shape);
        size_t n = 1;
        for (int d : out.shape) {
            check(d > 0, ErrorKind::config, "reshape: non-positive dimension");
            n *= static_cast<size_t>(d);
        }
        check(n == a.numel(), ErrorKind::config,
              "reshape: cannot view " + a.shape_str() + " as " + out.shape_str());
        out.data = a.data;
        out.grad = a.grad;
        out.requires_grad = a.requires_grad && recording;
        return out;
    }

    // --- backward -------------------------------------------------------

    void backward(const Tensor<S>& loss) {
        check(loss.numel() == 1, ErrorKind::numeric,
              "backward: loss must be scalar, got " + loss.shape_str());
        check(loss.requires_grad && loss.grad, ErrorKind::numeric,
              "backward: loss does not require grad (tape not recording?)");
        (*loss.grad)[0] = S(1);
        for (auto it = records_.rbegin(); it != records_.rend(); ++it) (*it)();
    }

private:
    Tensor<S> result(std::vector<int> shape, bool input_rg) {
        return Tensor<S>::zeros(std::move(shape), recording && input_rg);
    }
    void record(std::function<void()> fn) { records_.push_back(std::move(fn)); }

    std::vector<std::function<void()>> records_;
};

// Named trainable tensors. std::map keeps names sorted, and every whole-store
// walk (gradient norm, optimizer update, serialization) uses that order, so
// all of them are deterministic.
template <typename S>
class ParameterStore {
public:
    Tensor<S>& create(const std::string& name, std::vector<int> shape) {
        check(!params_.count(name), ErrorKind::config, "parameter '" + name + "' already exists");
        auto [it, ok] = params_.emplace(name, Tensor<S>::zeros(std::move(shape), true));
        (void)ok;
        return it->second;
    }

    Tensor<S>& at(const std::string& name) {
        auto it = params_.find(name);
        check(it != params_.end(), ErrorKind::config, "unknown parameter '" + name + "'");
        return it->second;
    }
    const Tensor<S>& at(const std::string& name) const {
        auto it = params_.find(name);
        check(it != params_.end(), ErrorKind::config, "unknown parameter '" + name + "'");
        return it->second;
    }
    bool has(const std::string& name) const { return params_.count(name) != 0; }
    size_t count() const { return params_.size(); }

    size_t total_values() const {
        size_t n = 0;
        for (const auto& [_, t] : params_) n += t.numel();
        return n;
    }

    void zero_grad() {
        for (auto& [_, t] : params_) std::fill(t.grad->begin(), t.grad->end(), S(0));
    }

    // Global L2 norm of all gradients, accumulated in double in name order.
    double grad_norm() const {
        double acc = 0;
        for (const auto& [_, t] : params_)
            for (S g : *t.grad) acc += static_cast<double>(g) * static_cast<double>(g);
        return std::sqrt(acc);
    }

    // Scales all gradients so the global norm is at most max_norm.
    // Returns the norm before clipping.
    double clip_grad_norm(double max_norm) {
        double norm = grad_norm();
        if (norm > max_norm && norm > 0) {
            double s = max_norm / norm;
            for (auto& [_, t] : params_)
                for (S& g : *t.grad) g = static_cast<S>(g * s);
        }
        return norm;
    }

    auto begin() { return params_.begin(); }
    auto end() { return params_.end(); }
    auto begin() const { return params_.begin(); }
    auto end() const { return params_.end(); }

private:
    std::map<std::string, Tensor<S>> params_;
};

// --- finite-difference gradient check -----------------------------------

struct GradCheckItem {
    std::string name;
    double max_rel_err = 0;
    size_t worst_index = 0;
    double analytic = 0;
    double numeric = 0;
};

struct GradCheckReport {
    std::vector<GradCheckItem> items;
    double max_rel_err = 0;
    bool pass(double tol) const { return max_rel_err < tol; }
};

// Relative error with a dead zone: values that are both tiny are counted as
// matching, otherwise |a-b| / max(|a|,|b|).
inline double rel_err(double a, double b) {
    double denom = std::max(std::abs(a), std::abs(b));
    if (denom < 1e-7) return 0;
    return std::abs(a - b) / denom;
}

// Central-difference check of every element of every parameter against the
// tape's analytic gradient. `build` must construct the loss from the current
// parameter values on the given tape and be deterministic.
template <typename S, typename F>
GradCheckReport finite_diff_check(ParameterStore<S>& params, F&& build, double h = 1e-5) {
    static_assert(sizeof(S) >= 8, "finite differences need double precision");
    params.zero_grad();
    Tape<S> tape;
    Tensor<S> loss = build(tape);
    tape.backward(loss);

    std::map<std::string, std::vector<S>> analytic;
    for (auto& [name, t] : params) analytic[name] = *t.grad;

    auto eval = [&]() {
        Tape<S> probe;
        probe.recording = false;
        return static_cast<double>(build(probe).item());
    };

    GradCheckReport report;
    for (auto& [name, t] : params) {
        GradCheckItem item;
        item.name = name;
        for (size_t i = 0; i < t.numel(); ++i) {
            S orig = t.at(i);
            t.at(i) = orig + static_cast<S>(h);
            double up = eval();
            t.at(i) = orig - static_cast<S>(h);
            double down = eval();
            t.at(i) = orig;
            double fd = (up - down) / (2 * h);
            double an = static_cast<double>(analytic[name][i]);
            double e = rel_err(an, fd);
            if (e >= item.max_rel_err) {
                item.max_rel_err = e;
                item.worst_index = i;
                item.analytic = an;
                item.numeric = fd;
            }
        }
        report.max_rel_err = std::max(report.max_rel_err, item.max_rel_err);
        report.items.push_back(std::move(item));
    }
    return report;
}

} // namespace tiervc
