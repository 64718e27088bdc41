#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "rollwin/autodiff.hpp"
#include "rollwin/conditioning.hpp"
#include "rollwin/error.hpp"
#include "rollwin/kvcache.hpp"
#include "rollwin/ops.hpp"
#include "rollwin/rng.hpp"
#include "rollwin/schedule.hpp"
#include "rollwin/tensor.hpp"

namespace rw {

struct ModelDims {
    int n_layers = 2;
    std::size_t latent_dim = 16;
    std::size_t head_dim = 16;
    std::size_t ffn_dim = 32;
    std::size_t time_dim = 16;
    std::size_t cond_dim = 8;
    double rope_base = 10000.0;
    std::uint64_t injection_mask = ~0ULL;  // bit l set: conditioning injected before layer l

    void validate() const {
        if (n_layers < 1 || n_layers > 64) throw ConfigError("ModelDims: n_layers must be in [1,64]");
        if (latent_dim == 0 || ffn_dim == 0 || cond_dim == 0) throw ConfigError("ModelDims: zero dimension");
        if (head_dim == 0 || head_dim % 2) throw ConfigError("ModelDims: head_dim must be even");
        if (time_dim == 0 || time_dim % 2) throw ConfigError("ModelDims: time_dim must be even");
        if (!(rope_base > 1.0)) throw ConfigError("ModelDims: rope_base must be > 1");
    }

    RopeConfig rope() const { return RopeConfig{head_dim, rope_base}; }

    std::set<int> injection_layers() const {
        std::set<int> s;
        for (int l = 0; l < n_layers; ++l)
            if (injection_mask >> l & 1ULL) s.insert(l);
        return s;
    }

    friend bool operator==(const ModelDims&, const ModelDims&) = default;
};

struct LayerParams {
    Tensor2D ln1_gain, ln1_bias;
    Tensor2D wq, wk, wv, wo;
    Tensor2D ln2_gain, ln2_bias;
    Tensor2D w1, b1, w2, b2;

    friend bool operator==(const LayerParams&, const LayerParams&) = default;
};

/// Parameters of the toy one-step generator. Zero weights (with unit-free residuals)
/// reduce the network to the identity on its input frames.
struct DenoiserParams {
    ModelDims dims;
    std::uint64_t param_seed = 0;
    Tensor2D time_proj;  // time_dim x latent_dim, timestep embedding into the residual stream
    Tensor2D cond_proj;  // cond_dim x latent_dim, the conditioning injector
    Tensor2D skip_proj;  // latent_dim x latent_dim, linear read of the raw input
    Tensor2D skip_gate;  // time_dim x 1, time-dependent scale on the raw input
    std::vector<LayerParams> layers;

    friend bool operator==(const DenoiserParams&, const DenoiserParams&) = default;

    static constexpr std::size_t kGlobalTensors = 4;
    static constexpr std::size_t kLayerTensors = 12;

    /// Canonical (name, tensor) enumeration shared by optimizers, checkpoints and gradients.
    template <class Self, class F>
    static void visit(Self& self, F&& f) {
        f("time_proj", self.time_proj);
        f("cond_proj", self.cond_proj);
        f("skip_proj", self.skip_proj);
        f("skip_gate", self.skip_gate);
        for (std::size_t l = 0; l < self.layers.size(); ++l) {
            auto& L = self.layers[l];
            const std::string p = "layer" + std::to_string(l) + ".";
            f(p + "ln1_gain", L.ln1_gain);
            f(p + "ln1_bias", L.ln1_bias);
            f(p + "wq", L.wq);
            f(p + "wk", L.wk);
            f(p + "wv", L.wv);
            f(p + "wo", L.wo);
            f(p + "ln2_gain", L.ln2_gain);
            f(p + "ln2_bias", L.ln2_bias);
            f(p + "w1", L.w1);
            f(p + "b1", L.b1);
            f(p + "w2", L.w2);
            f(p + "b2", L.b2);
        }
    }
    template <class F>
    void for_each(F&& f) {
        visit(*this, std::forward<F>(f));
    }
    template <class F>
    void for_each(F&& f) const {
        visit(*this, std::forward<F>(f));
    }

    std::vector<Tensor2D*> tensors() {
        std::vector<Tensor2D*> out;
        for_each([&](const std::string&, Tensor2D& t) { out.push_back(&t); });
        return out;
    }
    std::vector<const Tensor2D*> tensors() const {
        std::vector<const Tensor2D*> out;
        for_each([&](const std::string&, const Tensor2D& t) { out.push_back(&t); });
        return out;
    }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const Tensor2D* t : tensors()) n += t->size();
        return n;
    }

    CondInjector injector() const { return CondInjector{cond_proj, dims.injection_layers()}; }

    /// Same shapes, all zero, unit layer-norm gains set to zero as well.
    static DenoiserParams zeros(const ModelDims& dims) {
        dims.validate();
        DenoiserParams p;
        p.dims = dims;
        const std::size_t d = dims.latent_dim, h = dims.head_dim, f = dims.ffn_dim;
        p.time_proj = Tensor2D(dims.time_dim, d);
        p.cond_proj = Tensor2D(dims.cond_dim, d);
        p.skip_proj = Tensor2D(d, d);
        p.skip_gate = Tensor2D(dims.time_dim, 1);
        p.layers.resize(static_cast<std::size_t>(dims.n_layers));
        for (auto& L : p.layers) {
            L.ln1_gain = Tensor2D(1, d);
            L.ln1_bias = Tensor2D(1, d);
            L.wq = Tensor2D(d, h);
            L.wk = Tensor2D(d, h);
            L.wv = Tensor2D(d, h);
            L.wo = Tensor2D(h, d);
            L.ln2_gain = Tensor2D(1, d);
            L.ln2_bias = Tensor2D(1, d);
            L.w1 = Tensor2D(d, f);
            L.b1 = Tensor2D(1, f);
            L.w2 = Tensor2D(f, d);
            L.b2 = Tensor2D(1, d);
        }
        return p;
    }

    static DenoiserParams init(const ModelDims& dims, std::uint64_t seed) {
        DenoiserParams p = zeros(dims);
        p.param_seed = seed;
        Rng rng{seed, 0};
        auto fill = [&rng](Tensor2D& t, double stddev) {
            for (double& v : t.flat()) v = stddev * rng.gaussian();
        };
        const double d = static_cast<double>(dims.latent_dim);
        const double h = static_cast<double>(dims.head_dim);
        const double f = static_cast<double>(dims.ffn_dim);
        const double e = static_cast<double>(dims.time_dim);
        const double c = static_cast<double>(dims.cond_dim);
        fill(p.time_proj, 0.3 / std::sqrt(e));
        fill(p.cond_proj, 0.3 / std::sqrt(c));
        fill(p.skip_proj, 0.1 / std::sqrt(d));
        fill(p.skip_gate, 0.1 / std::sqrt(e));
        for (auto& L : p.layers) {
            for (double& v : L.ln1_gain.flat()) v = 1.0;
            for (double& v : L.ln2_gain.flat()) v = 1.0;
            fill(L.wq, 1.0 / std::sqrt(d));
            fill(L.wk, 1.0 / std::sqrt(d));
            fill(L.wv, 1.0 / std::sqrt(d));
            fill(L.wo, 0.5 / std::sqrt(h));
            fill(L.w1, 1.0 / std::sqrt(d));
            fill(L.w2, 0.5 / std::sqrt(f));
        }
        return p;
    }
};

// ---------------------------------------------------------------- timestep embedding

/// Sinusoidal features [cos(w_k t), sin(w_k t)] with w_k = (k+1) pi/2 for k < dim/2.
inline std::vector<double> timestep_embed(double t, std::size_t dim) {
    if (!(t >= 0.0 && t <= 1.0)) throw InvalidArgument("timestep_embed: t must lie in [0,1]");
    if (dim % 2) throw InvalidArgument("timestep_embed: dim must be even");
    std::vector<double> e(dim);
    for (std::size_t k = 0; k < dim / 2; ++k) {
        const double w = static_cast<double>(k + 1) * std::numbers::pi / 2.0;
        e[2 * k] = std::cos(w * t);
        e[2 * k + 1] = std::sin(w * t);
    }
    return e;
}

inline Tensor2D timestep_features(std::span<const double> times, std::size_t dim) {
    Tensor2D out(times.size(), dim);
    for (std::size_t i = 0; i < times.size(); ++i) {
        const auto e = timestep_embed(times[i], dim);
        std::copy(e.begin(), e.end(), out.row(i).begin());
    }
    return out;
}

// ---------------------------------------------------------------- tape binding

/// Parameters placed on a tape, in DenoiserParams::visit order.
struct BoundParams {
    std::vector<ad::Var> vars;

    ad::Var time_proj() const { return vars[0]; }
    ad::Var cond_proj() const { return vars[1]; }
    ad::Var skip_proj() const { return vars[2]; }
    ad::Var skip_gate() const { return vars[3]; }
    ad::Var layer(std::size_t l, std::size_t k) const {
        return vars[DenoiserParams::kGlobalTensors + l * DenoiserParams::kLayerTensors + k];
    }
};

enum LayerSlot : std::size_t { ln1_gain, ln1_bias, wq, wk, wv, wo, ln2_gain, ln2_bias, w1, b1, w2, b2 };

inline BoundParams bind(ad::Tape& tape, const DenoiserParams& p, bool requires_grad) {
    BoundParams b;
    p.for_each([&](const std::string&, const Tensor2D& t) { b.vars.push_back(tape.leaf(t, requires_grad)); });
    return b;
}

/// Collects d(loss)/d(param) after tape.backward, shaped like the parameters.
inline DenoiserParams gradients(const ad::Tape& tape, const BoundParams& b, const DenoiserParams& like) {
    DenoiserParams g = like;
    std::size_t i = 0;
    g.for_each([&](const std::string&, Tensor2D& t) { t = tape.grad(b.vars[i++]); });
    return g;
}

// ---------------------------------------------------------------- core network

/// Token-level inputs of one network evaluation.
struct TokenInputs {
    Tensor2D frames;                     // tokens x latent_dim
    std::vector<std::int64_t> positions;  // absolute frame position per token
    std::vector<double> times;           // noise level per token
    Tensor2D conds;                      // tokens x cond_dim
};

/// Keys (post-RoPE) and values visible to window queries ahead of the window itself.
struct LayerPrefix {
    Tensor2D keys;
    Tensor2D values;
    std::size_t anchor_rows = 0;
};

/// Per-layer key/value states of the evaluated tokens.
struct CoreTrace {
    std::vector<Tensor2D> keys_pre;
    std::vector<Tensor2D> keys_post;
    std::vector<Tensor2D> values;
};

/// Prefix keys/values already placed on a tape.
struct VarPrefix {
    ad::Var keys;
    ad::Var values;
    bool present = false;
};

/// Per-layer pre-RoPE keys and values of the evaluated tokens, as tape variables.
struct VarTrace {
    std::vector<ad::Var> keys_pre;
    std::vector<ad::Var> values;
};

/// One evaluation of the generator over `in`. Queries come from the tokens only; keys and
/// values are [prefix | tokens]. Returns the clean-endpoint prediction per token.
inline ad::Var denoise_core(ad::Tape& tape, const BoundParams& p, const ModelDims& dims, ad::Var frames,
                            const TokenInputs& in, std::span<const VarPrefix> prefix, CoreTrace* trace = nullptr,
                            VarTrace* vtrace = nullptr) {
    const std::size_t n = in.frames.rows();
    if (in.frames.cols() != dims.latent_dim) throw InvalidArgument("denoiser: frame width != latent_dim");
    if (in.positions.size() != n || in.times.size() != n) throw InvalidArgument("denoiser: positions/times per token");
    if (in.conds.rows() != n || in.conds.cols() != dims.cond_dim) throw InvalidArgument("denoiser: cond alignment");
    if (!prefix.empty() && prefix.size() != static_cast<std::size_t>(dims.n_layers)) {
        throw InvalidArgument("denoiser: one prefix per layer required");
    }
    const RopeConfig rope = dims.rope();
    const ad::Var temb = tape.constant(timestep_features(in.times, dims.time_dim));
    const ad::Var conds = tape.constant(in.conds);
    ad::Var h = tape.add(frames, tape.matmul(temb, p.time_proj()));
    if (trace) *trace = CoreTrace{};
    if (vtrace) *vtrace = VarTrace{};
    for (int l = 0; l < dims.n_layers; ++l) {
        const auto L = static_cast<std::size_t>(l);
        if (dims.injection_mask >> l & 1ULL) h = tape.add(h, tape.matmul(conds, p.cond_proj()));
        const ad::Var z = tape.layer_norm(h, p.layer(L, ln1_gain), p.layer(L, ln1_bias));
        const ad::Var q = tape.rope(tape.matmul(z, p.layer(L, wq)), in.positions, rope);
        const ad::Var k_pre = tape.matmul(z, p.layer(L, wk));
        const ad::Var k = tape.rope(k_pre, in.positions, rope);
        const ad::Var v = tape.matmul(z, p.layer(L, wv));
        if (trace) {
            trace->keys_pre.push_back(tape.value(k_pre));
            trace->keys_post.push_back(tape.value(k));
            trace->values.push_back(tape.value(v));
        }
        if (vtrace) {
            vtrace->keys_pre.push_back(k_pre);
            vtrace->values.push_back(v);
        }
        ad::Var keys = k, values = v;
        if (!prefix.empty() && prefix[L].present) {
            keys = tape.concat_rows({prefix[L].keys, k});
            values = tape.concat_rows({prefix[L].values, v});
        }
        const ad::Var att = tape.attention(q, keys, values);
        h = tape.add(h, tape.matmul(att, p.layer(L, wo)));
        const ad::Var z2 = tape.layer_norm(h, p.layer(L, ln2_gain), p.layer(L, ln2_bias));
        const ad::Var hidden = tape.gelu(tape.add_row(tape.matmul(z2, p.layer(L, w1)), p.layer(L, b1)));
        h = tape.add(h, tape.add_row(tape.matmul(hidden, p.layer(L, w2)), p.layer(L, b2)));
    }
    const ad::Var gate = tape.matmul(temb, p.skip_gate());
    return tape.add(tape.add(h, tape.matmul(frames, p.skip_proj())), tape.mul_rows(frames, gate));
}

inline std::vector<VarPrefix> constant_prefix(ad::Tape& tape, std::span<const LayerPrefix> prefix) {
    std::vector<VarPrefix> out;
    for (const auto& lp : prefix) {
        VarPrefix vp;
        if (lp.keys.rows() > 0) vp = VarPrefix{tape.constant(lp.keys), tape.constant(lp.values), true};
        out.push_back(vp);
    }
    return out;
}

inline ad::Var denoise_core(ad::Tape& tape, const BoundParams& p, const ModelDims& dims, ad::Var frames,
                            const TokenInputs& in, std::span<const LayerPrefix> prefix, CoreTrace* trace = nullptr) {
    const auto vp = constant_prefix(tape, prefix);
    return denoise_core(tape, p, dims, frames, in, std::span<const VarPrefix>(vp), trace);
}

/// Plain evaluation without gradients.
inline Tensor2D evaluate(const DenoiserParams& params, const TokenInputs& in, std::span<const LayerPrefix> prefix,
                         CoreTrace* trace = nullptr) {
    ad::Tape tape;
    const BoundParams b = bind(tape, params, false);
    const ad::Var out = denoise_core(tape, b, params.dims, tape.constant(in.frames), in, prefix, trace);
    return tape.value(out);
}

/// Analytic multiply-add count of one evaluation (shape-only).
inline std::uint64_t forward_flops(const ModelDims& d, std::size_t tokens, std::size_t prefix_rows) {
    const std::uint64_t n = tokens, ctx = tokens + prefix_rows;
    std::uint64_t per_layer = n * d.latent_dim * d.head_dim * 3    // q k v
                              + n * ctx * d.head_dim * 2           // scores and mix
                              + n * d.head_dim * d.latent_dim      // out proj
                              + n * d.latent_dim * d.ffn_dim * 2;  // ffn
    return static_cast<std::uint64_t>(d.n_layers) * per_layer + n * d.time_dim * (d.latent_dim + 1) +
           n * d.latent_dim * d.latent_dim;
}

// ---------------------------------------------------------------- anchors and caches

/// Runs the reference block through the network once (t = 0, all tokens at one frame
/// position) and freezes the per-layer pre-RoPE keys and values.
inline std::vector<StyleAnchor> encode_anchor(const DenoiserParams& params, const Tensor2D& reference,
                                              const Tensor2D& anchor_conds, std::int64_t offset_d) {
    TokenInputs in;
    in.frames = reference;
    in.positions.assign(reference.rows(), 0);
    in.times.assign(reference.rows(), 0.0);
    in.conds = anchor_conds;
    CoreTrace trace;
    evaluate(params, in, {}, &trace);
    std::vector<StyleAnchor> anchors;
    for (int l = 0; l < params.dims.n_layers; ++l) {
        const auto L = static_cast<std::size_t>(l);
        anchors.push_back(StyleAnchor{trace.keys_pre[L], trace.values[L], offset_d});
    }
    return anchors;
}

/// Per-layer [anchor | temporal] prefix for a context whose first non-anchor frame is u_i.
inline std::vector<LayerPrefix> build_prefix(const ModelDims& dims, std::span<const StyleAnchor> anchors,
                                             std::span<const TemporalCache> caches, std::int64_t u_i,
                                             AnchorPlacement placement) {
    const RopeConfig rope = dims.rope();
    std::vector<LayerPrefix> prefix(static_cast<std::size_t>(dims.n_layers));
    for (std::size_t l = 0; l < prefix.size(); ++l) {
        std::vector<const Tensor2D*> keys, values;
        Tensor2D anchor_keys;
        if (placement.enabled && !anchors.empty()) {
            const StyleAnchor& a = anchors[l];
            anchor_keys = anchor_reindex(a, anchor_position(a, u_i, placement) - a.offset_d, rope);
            keys.push_back(&anchor_keys);
            values.push_back(&a.values);
            prefix[l].anchor_rows = a.tokens();
        }
        if (!caches.empty()) {
            for (const auto& e : caches[l].entries()) {
                keys.push_back(&e.keys);
                values.push_back(&e.values);
            }
        }
        if (!keys.empty()) {
            prefix[l].keys = concat_rows(std::span<const Tensor2D* const>(keys));
            prefix[l].values = concat_rows(std::span<const Tensor2D* const>(values));
        }
    }
    return prefix;
}

/// Reference block to be encoded on the same tape as the evaluation it anchors, so the
/// anchor keys and values carry gradients.
struct AnchorSource {
    Tensor2D reference;
    Tensor2D conds;
    std::int64_t offset_d = -1;
};

/// Per-layer [anchor | cache] prefix on a tape; `cache_prefix` holds cache rows only.
inline std::vector<VarPrefix> tape_prefix(ad::Tape& tape, const BoundParams& p, const ModelDims& dims,
                                          const AnchorSource* anchor, std::int64_t u_i, AnchorPlacement placement,
                                          std::span<const LayerPrefix> cache_prefix) {
    const RopeConfig rope = dims.rope();
    VarTrace vt;
    std::int64_t pos = 0;
    const bool use_anchor = anchor != nullptr && placement.enabled;
    if (use_anchor) {
        TokenInputs ain;
        ain.frames = anchor->reference;
        ain.positions.assign(anchor->reference.rows(), 0);
        ain.times.assign(anchor->reference.rows(), 0.0);
        ain.conds = anchor->conds;
        denoise_core(tape, p, dims, tape.constant(ain.frames), ain, std::span<const VarPrefix>{}, nullptr, &vt);
        pos = placement.reindex ? u_i + anchor->offset_d : anchor->offset_d;
    }
    std::vector<VarPrefix> out(static_cast<std::size_t>(dims.n_layers));
    for (std::size_t l = 0; l < out.size(); ++l) {
        std::vector<ad::Var> keys, values;
        if (use_anchor) {
            keys.push_back(tape.rope(vt.keys_pre[l], std::vector<std::int64_t>(anchor->reference.rows(), pos), rope));
            values.push_back(vt.values[l]);
        }
        if (l < cache_prefix.size() && cache_prefix[l].keys.rows() > 0) {
            keys.push_back(tape.constant(cache_prefix[l].keys));
            values.push_back(tape.constant(cache_prefix[l].values));
        }
        if (keys.empty()) continue;
        out[l].keys = keys.size() == 1 ? keys[0] : tape.concat_rows(keys);
        out[l].values = values.size() == 1 ? values[0] : tape.concat_rows(values);
        out[l].present = true;
    }
    return out;
}

/// Clean-block key/values for the temporal cache: the emitted block at t = 0 with its own
/// conditioning, attending to the style anchor and itself.
inline std::vector<CacheEntry> encode_clean_kv(const DenoiserParams& params, const Tensor2D& clean_block,
                                               std::int64_t block_index, std::int64_t first_position,
                                               const Tensor2D& conds, std::span<const StyleAnchor> anchors,
                                               AnchorPlacement placement) {
    TokenInputs in;
    in.frames = clean_block;
    for (std::size_t r = 0; r < clean_block.rows(); ++r) in.positions.push_back(first_position + static_cast<std::int64_t>(r));
    in.times.assign(clean_block.rows(), 0.0);
    in.conds = conds;
    const auto prefix = build_prefix(params.dims, anchors, {}, first_position, placement);
    CoreTrace trace;
    evaluate(params, in, prefix, &trace);
    std::vector<CacheEntry> out;
    for (int l = 0; l < params.dims.n_layers; ++l) {
        const auto L = static_cast<std::size_t>(l);
        out.push_back(CacheEntry{block_index, in.positions, trace.keys_post[L], trace.values[L]});
    }
    return out;
}

// ---------------------------------------------------------------- window-level passes

struct PredictedWindow {
    std::vector<Tensor2D> x0_hat;  // one B x latent_dim prediction per block
};

/// Token inputs for a window whose block k sits at noise level block_times[k].
inline TokenInputs window_inputs(const Window& window, std::span<const double> block_times, const Tensor2D& conds,
                                 int B) {
    if (block_times.size() != window.size()) throw InvalidArgument("forward: one time per block required");
    TokenInputs in;
    std::vector<const Tensor2D*> parts;
    for (const Block& b : window.blocks) {
        if (b.frames.rows() != static_cast<std::size_t>(B)) throw InvalidArgument("forward: block is not B frames");
        parts.push_back(&b.frames);
    }
    in.frames = concat_rows(std::span<const Tensor2D* const>(parts));
    for (std::size_t k = 0; k < window.size(); ++k) {
        for (int j = 0; j < B; ++j) {
            in.positions.push_back(window.blocks[k].block_index * B + j);
            in.times.push_back(block_times[k]);
        }
    }
    in.conds = conds;
    return in;
}

inline PredictedWindow split_blocks(const Tensor2D& tokens, std::size_t n_blocks, int B) {
    PredictedWindow p;
    for (std::size_t k = 0; k < n_blocks; ++k) p.x0_hat.push_back(tokens.slice_rows(k * static_cast<std::size_t>(B), static_cast<std::size_t>(B)));
    return p;
}

/// One joint denoising update over the window with [anchor | temporal | window] attention.
inline PredictedWindow forward(const Window& window, std::span<const double> block_times,
                               std::span<const StyleAnchor> anchors, std::span<const TemporalCache> caches,
                               const Tensor2D& conds, const DenoiserParams& params, int B,
                               AnchorPlacement placement = {}) {
    if (window.empty()) throw InvalidArgument("forward: empty window");
    const TokenInputs in = window_inputs(window, block_times, conds, B);
    const std::int64_t u_i = caches.empty() ? in.positions.front() : context_start(caches[0], in.positions.front());
    if (!caches.empty() && !caches[0].empty() && in.positions.front() != caches[0].last_position() + 1) {
        throw StateCorruption("forward: window does not continue the temporal cache");
    }
    const auto prefix = build_prefix(params.dims, anchors, caches, u_i, placement);
    return split_blocks(evaluate(params, in, prefix), window.size(), B);
}

/// Reference mode: one joint prediction over a whole clip at a shared noise level, full
/// bidirectional attention, style anchor at virtual position first_position + d.
inline Tensor2D full_sequence_denoise(const Tensor2D& all_frames, double t, const Tensor2D& conds,
                                      const DenoiserParams& params, std::span<const StyleAnchor> anchors,
                                      std::int64_t first_position = 0) {
    TokenInputs in;
    in.frames = all_frames;
    for (std::size_t r = 0; r < all_frames.rows(); ++r) in.positions.push_back(first_position + static_cast<std::int64_t>(r));
    in.times.assign(all_frames.rows(), t);
    in.conds = conds;
    const auto prefix = build_prefix(params.dims, anchors, {}, first_position, AnchorPlacement{!anchors.empty(), true});
    return evaluate(params, in, prefix);
}

}  // namespace rw
