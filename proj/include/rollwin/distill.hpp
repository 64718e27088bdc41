#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <numbers>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "rollwin/autodiff.hpp"
#include "rollwin/binio.hpp"
#include "rollwin/conditioning.hpp"
#include "rollwin/denoiser.hpp"
#include "rollwin/error.hpp"
#include "rollwin/metrics.hpp"
#include "rollwin/rng.hpp"
#include "rollwin/schedule.hpp"
#include "rollwin/settings.hpp"
#include "rollwin/streamer.hpp"

namespace rw {

// ---------------------------------------------------------------- synthetic data

struct Clip {
    Tensor2D frames;            // T x latent_dim
    std::vector<double> raw;    // T, scalar drive
    Tensor2D conds;             // T x cond_dim
    Tensor2D reference;         // B x latent_dim, the frames right before frame 0
    Tensor2D reference_conds;   // B x cond_dim, their original conditioning
    std::vector<double> phase;  // T
};

/// Clips whose latent frame j is lift * [A cos phi_j, A sin phi_j, identity..., drift_j] plus
/// a small noise floor, with phi_{j+1} = phi_j + base_freq + cond_gain * r_j.
struct SyntheticDataset {
    DataParams params;
    std::uint64_t seed = 0;
    int B = 4;
    Tensor2D lift;  // latent_dim x (3 + identity_dims), orthonormal columns
    std::vector<double> cos_axis, sin_axis;
    std::vector<Clip> clips;

    std::size_t training_clips() const { return params.training_clips(); }
    std::vector<std::size_t> heldout_ids() const {
        std::vector<std::size_t> ids;
        for (std::size_t c = params.training_clips(); c < clips.size(); ++c) ids.push_back(c);
        return ids;
    }
};

/// Gaussian columns made orthonormal by Gram-Schmidt.
inline Tensor2D make_lift(std::size_t latent_dim, std::size_t basis_dim, std::uint64_t seed) {
    if (basis_dim > latent_dim) throw InvalidArgument("make_lift: basis wider than latent space");
    Rng rng{seed, 0};
    Tensor2D m = rng.gaussian(latent_dim, basis_dim);
    for (std::size_t c = 0; c < basis_dim; ++c) {
        for (std::size_t p = 0; p < c; ++p) {
            double proj = 0.0;
            for (std::size_t r = 0; r < latent_dim; ++r) proj += m(r, c) * m(r, p);
            for (std::size_t r = 0; r < latent_dim; ++r) m(r, c) -= proj * m(r, p);
        }
        double n = 0.0;
        for (std::size_t r = 0; r < latent_dim; ++r) n += m(r, c) * m(r, c);
        n = std::sqrt(n);
        for (std::size_t r = 0; r < latent_dim; ++r) m(r, c) /= n;
    }
    return m;
}

/// One clip of `frames` frames preceded by its B-frame reference.
inline Clip make_clip(const DataParams& p, const Tensor2D& lift, const CondEncoder& encoder, int B, std::size_t frames,
                      Rng rng) {
    const std::size_t basis = lift.cols();
    const std::size_t latent_dim = lift.rows();
    const std::size_t b = static_cast<std::size_t>(B);
    const std::size_t total = b + frames;
    std::vector<double> raw(total), phase(total);
    raw[0] = rng.gaussian();
    const double innov = std::sqrt(1.0 - p.ar_coef * p.ar_coef);
    for (std::size_t j = 1; j < total; ++j) raw[j] = p.ar_coef * raw[j - 1] + innov * rng.gaussian();
    phase[0] = rng.uniform(0.0, 2.0 * std::numbers::pi);
    for (std::size_t j = 1; j < total; ++j) phase[j] = phase[j - 1] + p.base_freq + p.cond_gain * raw[j - 1];
    std::vector<double> identity(p.identity_dims);
    for (double& v : identity) v = p.identity_scale * rng.gaussian();
    const double drift_phase = rng.uniform(0.0, 2.0 * std::numbers::pi);

    Tensor2D all(total, latent_dim);
    std::vector<double> coeff(basis);
    for (std::size_t j = 0; j < total; ++j) {
        coeff[0] = p.amplitude * std::cos(phase[j]);
        coeff[1] = p.amplitude * std::sin(phase[j]);
        std::copy(identity.begin(), identity.end(), coeff.begin() + 2);
        coeff[basis - 1] =
            p.drift_amplitude * std::sin(2.0 * std::numbers::pi * static_cast<double>(j) / p.drift_period + drift_phase);
        for (std::size_t r = 0; r < latent_dim; ++r) {
            double v = 0.0;
            for (std::size_t k = 0; k < basis; ++k) v += lift(r, k) * coeff[k];
            all(j, r) = v + p.noise_floor * rng.gaussian();
        }
    }
    const Tensor2D conds = encoder.encode_all(raw);
    Clip clip;
    clip.reference = all.slice_rows(0, b);
    clip.reference_conds = conds.slice_rows(0, b);
    clip.frames = all.slice_rows(b, frames);
    clip.conds = conds.slice_rows(b, frames);
    clip.raw.assign(raw.begin() + static_cast<std::ptrdiff_t>(b), raw.end());
    clip.phase.assign(phase.begin() + static_cast<std::ptrdiff_t>(b), phase.end());
    return clip;
}

inline SyntheticDataset gen_dataset(const DataParams& p, std::size_t latent_dim, std::size_t cond_dim, int B,
                                    std::uint64_t seed) {
    p.validate();
    if (B < 1) throw InvalidArgument("gen_dataset: B must be >= 1");
    SyntheticDataset ds;
    ds.params = p;
    ds.seed = seed;
    ds.B = B;
    ds.lift = make_lift(latent_dim, 3 + p.identity_dims, Rng::mix(seed ^ 0x11f7ULL));
    for (std::size_t r = 0; r < latent_dim; ++r) {
        ds.cos_axis.push_back(ds.lift(r, 0));
        ds.sin_axis.push_back(ds.lift(r, 1));
    }
    const CondEncoder encoder(cond_dim, p.encoder_radius, p.encoder_seed);
    const Rng root{seed, 0};
    for (std::size_t c = 0; c < p.n_clips; ++c) ds.clips.push_back(make_clip(p, ds.lift, encoder, B, p.frames_per_clip, root.fork(c)));
    return ds;
}

/// Extra clips of arbitrary length from the same process and lift, never used in training.
/// Their random streams are disjoint from the dataset's clips.
inline std::vector<Clip> gen_long_clips(const SyntheticDataset& ds, std::size_t n, std::size_t frames,
                                        std::size_t cond_dim) {
    const CondEncoder encoder(cond_dim, ds.params.encoder_radius, ds.params.encoder_seed);
    const Rng root{ds.seed, 0};
    std::vector<Clip> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(make_clip(ds.params, ds.lift, encoder, ds.B, frames, root.fork(1000003 + i)));
    return out;
}

// ---------------------------------------------------------------- optimisation

struct CurvePoint {
    int step = 0;
    double loss = 0.0;
    double grad_norm = 0.0;
};

inline void write_curve_csv(std::ostream& os, const std::vector<CurvePoint>& curve) {
    os << "step,loss,grad_norm\n";
    os.precision(17);
    for (const auto& c : curve) os << c.step << ',' << c.loss << ',' << c.grad_norm << '\n';
}

/// out += w * g, parameter-wise.
inline void axpy(DenoiserParams& out, const DenoiserParams& g, double w) {
    auto dst = out.tensors();
    const auto src = g.tensors();
    for (std::size_t i = 0; i < dst.size(); ++i) {
        auto d = dst[i]->flat();
        const auto s = src[i]->flat();
        for (std::size_t k = 0; k < d.size(); ++k) d[k] += w * s[k];
    }
}

inline double global_norm(const DenoiserParams& g) {
    double s = 0.0;
    for (const Tensor2D* t : g.tensors()) s += sum_squares(*t);
    return std::sqrt(s);
}

/// Stochastic gradient descent with heavy-ball momentum and global-norm clipping.
class Sgd {
  public:
    Sgd(double lr, double momentum, double clip_norm) : lr_(lr), momentum_(momentum), clip_(clip_norm) {}

    /// Applies one update; returns the gradient norm before clipping.
    double step(DenoiserParams& params, const DenoiserParams& grad) {
        const double norm = global_norm(grad);
        if (!std::isfinite(norm)) throw TrainingDivergence("non-finite gradient norm");
        const double scale = (clip_ > 0.0 && norm > clip_) ? clip_ / norm : 1.0;
        if (velocity_.empty()) {
            for (const Tensor2D* t : grad.tensors()) velocity_.emplace_back(t->rows(), t->cols());
        }
        auto dst = params.tensors();
        const auto src = grad.tensors();
        for (std::size_t i = 0; i < dst.size(); ++i) {
            auto v = velocity_[i].flat();
            auto p = dst[i]->flat();
            const auto g = src[i]->flat();
            for (std::size_t k = 0; k < p.size(); ++k) {
                v[k] = momentum_ * v[k] + scale * g[k];
                p[k] -= lr_ * v[k];
            }
        }
        return norm;
    }

    double lr() const { return lr_; }
    void set_lr(double lr) { lr_ = lr; }

  private:
    double lr_, momentum_, clip_;
    std::vector<Tensor2D> velocity_;
};

inline void check_loss(double loss, const std::string& what, int step) {
    if (!std::isfinite(loss)) throw TrainingDivergence(what + ": loss is not finite at step " + std::to_string(step));
}

/// A supervised x0 target for one network evaluation. With an anchor source the reference
/// is encoded on the evaluation tape and `prefix` holds the cache rows only; otherwise
/// `prefix` is the complete constant prefix.
struct RegressionSample {
    TokenInputs in;
    std::optional<AnchorSource> anchor;
    std::int64_t u_i = 0;
    AnchorPlacement placement;
    std::vector<LayerPrefix> prefix;
    Tensor2D target;
};

inline ad::Var sample_output(ad::Tape& tape, const BoundParams& b, const DenoiserParams& params,
                             const RegressionSample& s) {
    const auto vp = s.anchor ? tape_prefix(tape, b, params.dims, &*s.anchor, s.u_i, s.placement, s.prefix)
                             : constant_prefix(tape, s.prefix);
    return denoise_core(tape, b, params.dims, tape.constant(s.in.frames), s.in, std::span<const VarPrefix>(vp));
}

/// Prediction for a sample, no gradients.
inline Tensor2D predict(const DenoiserParams& params, const RegressionSample& s) {
    ad::Tape tape;
    const BoundParams b = bind(tape, params, false);
    return tape.value(sample_output(tape, b, params, s));
}

/// Mean squared error of the prediction; fills `grad` with d(loss)/d(params) when given.
inline double regression_loss(const DenoiserParams& params, const RegressionSample& s, DenoiserParams* grad = nullptr) {
    ad::Tape tape;
    const BoundParams b = bind(tape, params, grad != nullptr);
    const ad::Var out = sample_output(tape, b, params, s);
    const ad::Var diff = tape.sub(out, tape.constant(s.target));
    const ad::Var loss = tape.scale(tape.sum_squares(diff), 1.0 / static_cast<double>(s.target.size()));
    if (grad) {
        tape.backward(loss);
        *grad = gradients(tape, b, params);
    }
    return tape.value(loss)(0, 0);
}

/// Averages loss and gradient over a batch and takes one optimizer step.
inline CurvePoint batch_step(DenoiserParams& params, const std::vector<RegressionSample>& batch, Sgd& opt, int step,
                             const std::string& what) {
    DenoiserParams total = DenoiserParams::zeros(params.dims);
    double loss = 0.0;
    for (const auto& s : batch) {
        DenoiserParams g;
        loss += regression_loss(params, s, &g);
        axpy(total, g, 1.0 / static_cast<double>(batch.size()));
    }
    loss /= static_cast<double>(batch.size());
    check_loss(loss, what, step);
    const double gn = opt.step(params, total);
    return CurvePoint{step, loss, gn};
}

inline std::vector<StyleAnchor> clip_anchors(const DenoiserParams& params, const Clip& clip, std::int64_t d) {
    return encode_anchor(params, clip.reference, Tensor2D(clip.reference.rows(), params.dims.cond_dim), d);
}

// ---------------------------------------------------------------- teacher

struct TeacherModel {
    DenoiserParams params;
    bool trained = false;
    std::vector<CurvePoint> curve;
};

/// Full-sequence denoising sample: clip frames [start, start+length) noised to a shared t.
inline RegressionSample full_sequence_sample(const DenoiserParams& params, const Clip& clip, std::size_t start,
                                             std::size_t length, double t, const Tensor2D& noise, std::int64_t d) {
    RegressionSample s;
    s.target = clip.frames.slice_rows(start, length);
    s.in.frames = interpolate_noise(s.target, noise, t);
    for (std::size_t r = 0; r < length; ++r) s.in.positions.push_back(static_cast<std::int64_t>(start + r));
    s.in.times.assign(length, t);
    s.in.conds = clip.conds.slice_rows(start, length);
    s.anchor = AnchorSource{clip.reference, Tensor2D(clip.reference.rows(), params.dims.cond_dim), d};
    s.u_i = static_cast<std::int64_t>(start);
    return s;
}

/// Teacher: denoising regression over random crops at uniform t. steps = 0 returns the
/// initialized parameters.
inline TeacherModel train_teacher(const SyntheticDataset& ds, const ModelDims& dims, const TrainConfig& cfg, int steps,
                                  std::uint64_t seed, std::int64_t d = -1) {
    if (ds.training_clips() == 0) throw InvalidArgument("train_teacher: empty dataset");
    TeacherModel tm;
    tm.params = DenoiserParams::init(dims, seed);
    Sgd opt(cfg.teacher_lr, cfg.momentum, cfg.clip_norm);
    const Rng root{Rng::mix(seed ^ 0x7eac4e5ULL), 0};
    const std::size_t B = static_cast<std::size_t>(ds.B);
    const std::size_t max_blocks = std::min<std::size_t>(static_cast<std::size_t>(cfg.crop_blocks), ds.params.frames_per_clip / B);
    for (int step = 0; step < steps; ++step) {
        Rng rng = root.fork(static_cast<std::uint64_t>(step));
        std::vector<RegressionSample> batch;
        for (int b = 0; b < cfg.batch; ++b) {
            const Clip& clip = ds.clips[rng.below(ds.training_clips())];
            const std::size_t length = B * (1 + rng.below(max_blocks));
            const std::size_t start = rng.below(clip.frames.rows() - length + 1);
            const double t = rng.uniform();
            batch.push_back(full_sequence_sample(tm.params, clip, start, length, t, rng.gaussian(length, dims.latent_dim), d));
        }
        tm.curve.push_back(batch_step(tm.params, batch, opt, step, "train_teacher"));
    }
    tm.trained = steps > 0;
    return tm;
}

/// Mean full-sequence denoising error at noise level t over fixed crops of the given clips.
inline double denoise_mse(const DenoiserParams& params, const SyntheticDataset& ds, std::span<const std::size_t> clip_ids,
                          double t, std::size_t samples_per_clip, std::size_t length, std::uint64_t seed,
                          std::int64_t d = -1) {
    double acc = 0.0;
    std::size_t n = 0;
    for (std::size_t c : clip_ids) {
        Rng rng = Rng{seed, 0}.fork(c);
        const Clip& clip = ds.clips[c];
        for (std::size_t k = 0; k < samples_per_clip; ++k, ++n) {
            const std::size_t start = rng.below(clip.frames.rows() - length + 1);
            acc += regression_loss(params, full_sequence_sample(params, clip, start, length, t,
                                                                rng.gaussian(length, params.dims.latent_dim), d));
        }
    }
    return n ? acc / static_cast<double>(n) : 0.0;
}

/// Deterministic probability-flow integration from level t to 0 in n uniform Euler steps,
/// with velocity (x - x0_hat) / t under the linear forward process.
inline Tensor2D ode_integrate(const DenoiserParams& teacher, Tensor2D x, double t, const Tensor2D& conds,
                              std::span<const StyleAnchor> anchors, std::int64_t first_position, int n_steps) {
    if (n_steps < 1) throw InvalidArgument("ode_integrate: n_steps must be >= 1");
    if (t == 0.0) return x;
    const double dt = t / n_steps;
    for (int k = 0; k < n_steps; ++k) {
        const double tk = t - k * dt;
        const double tn = k + 1 == n_steps ? 0.0 : t - (k + 1) * dt;
        const Tensor2D x0 = full_sequence_denoise(x, tk, conds, teacher, anchors, first_position);
        x = x0 + (tn / tk) * (x - x0);
    }
    return x;
}

/// Multi-step teacher sample of clip frames [start, start+length) starting from pure noise.
inline Tensor2D teacher_sample(const DenoiserParams& teacher, const Clip& clip, std::size_t start, std::size_t length,
                               int n_steps, Rng& rng, std::int64_t d = -1) {
    const auto anchors = clip_anchors(teacher, clip, d);
    const Tensor2D noise = rng.gaussian(length, teacher.dims.latent_dim);
    return ode_integrate(teacher, noise, 1.0, clip.conds.slice_rows(start, length), anchors,
                         static_cast<std::int64_t>(start), n_steps);
}

// ---------------------------------------------------------------- ODE backfill

struct TrajectoryPair {
    std::uint64_t clip_id = 0;
    std::uint64_t group = 0;         // pairs of one group share crop and noise draw
    std::int64_t first_position = 0; // clip frame of row 0
    double t = 0.0;
    Tensor2D x_t;
    Tensor2D x0_ode;
    Tensor2D cond;
};

/// Pairs are recorded in groups: one (clip, crop, noise) at every level t = k / levels.
inline std::vector<TrajectoryPair> ode_backfill(const TeacherModel& teacher, const SyntheticDataset& ds,
                                                std::size_t n_pairs, int n_ode_steps, int levels, int crop_blocks,
                                                std::uint64_t seed, std::int64_t d = -1) {
    if (levels < 1 || crop_blocks < 1) throw InvalidArgument("ode_backfill: bad layout");
    const std::size_t length = static_cast<std::size_t>(crop_blocks * ds.B);
    if (length > ds.params.frames_per_clip) throw InvalidArgument("ode_backfill: crop longer than clips");
    std::vector<TrajectoryPair> pairs;
    pairs.reserve(n_pairs);
    const Rng root{Rng::mix(seed ^ 0x0deba11ULL), 0};
    for (std::uint64_t g = 0; pairs.size() < n_pairs; ++g) {
        Rng rng = root.fork(g);
        const std::size_t c = rng.below(ds.training_clips());
        const Clip& clip = ds.clips[c];
        const std::size_t start = rng.below(clip.frames.rows() - length + 1);
        const Tensor2D x0 = clip.frames.slice_rows(start, length);
        const Tensor2D noise = rng.gaussian(length, x0.cols());
        const Tensor2D cond = clip.conds.slice_rows(start, length);
        const auto anchors = clip_anchors(teacher.params, clip, d);
        for (int k = 1; k <= levels && pairs.size() < n_pairs; ++k) {
            TrajectoryPair p;
            p.clip_id = c;
            p.group = g;
            p.first_position = static_cast<std::int64_t>(start);
            p.t = static_cast<double>(k) / levels;
            p.x_t = interpolate_noise(x0, noise, p.t);
            p.x0_ode = ode_integrate(teacher.params, p.x_t, p.t, cond, anchors, p.first_position, n_ode_steps);
            if (!p.x0_ode.all_finite()) {
                throw NumericError("ode_backfill: non-finite trajectory for clip " + std::to_string(c) + " at t=" +
                                   std::to_string(p.t));
            }
            p.cond = cond;
            pairs.push_back(std::move(p));
        }
    }
    return pairs;
}

inline void write_pairs(const std::filesystem::path& path, const std::vector<TrajectoryPair>& pairs) {
    io::Writer w(path);
    w.bytes(io::kPairsMagic);
    const std::size_t rows = pairs.empty() ? 0 : pairs.front().x_t.rows();
    const std::size_t latent = pairs.empty() ? 0 : pairs.front().x_t.cols();
    const std::size_t cond = pairs.empty() ? 0 : pairs.front().cond.cols();
    w.u32(static_cast<std::uint32_t>(latent));
    w.u32(static_cast<std::uint32_t>(cond));
    w.u32(static_cast<std::uint32_t>(rows));
    w.u64(pairs.size());
    for (const auto& p : pairs) {
        if (p.x_t.rows() != rows || p.x_t.cols() != latent || p.cond.cols() != cond) {
            throw InvalidArgument("write_pairs: pairs must share one shape");
        }
        w.u64(p.clip_id);
        w.u64(p.group);
        w.i64(p.first_position);
        w.f64(p.t);
        w.f64s(p.x_t.flat());
        w.f64s(p.x0_ode.flat());
        w.f64s(p.cond.flat());
    }
    w.close();
}

inline std::vector<TrajectoryPair> read_pairs(const std::filesystem::path& path) {
    io::Reader r(path);
    r.expect_magic(io::kPairsMagic);
    const std::size_t latent = r.u32(), cond = r.u32(), rows = r.u32();
    const std::uint64_t count = r.u64();
    if (count > (1ULL << 28)) throw IoError(path.string() + ": implausible pair count");
    std::vector<TrajectoryPair> pairs(count);
    for (auto& p : pairs) {
        p.clip_id = r.u64();
        p.group = r.u64();
        p.first_position = r.i64();
        p.t = r.f64();
        p.x_t = Tensor2D(rows, latent);
        p.x0_ode = Tensor2D(rows, latent);
        p.cond = Tensor2D(rows, cond);
        r.f64s(p.x_t.flat());
        r.f64s(p.x0_ode.flat());
        r.f64s(p.cond.flat());
    }
    r.expect_end();
    return pairs;
}

/// Complete groups of pairs, each indexed by level k-1.
inline std::vector<std::vector<std::size_t>> group_pairs(const std::vector<TrajectoryPair>& pairs, int levels) {
    std::vector<std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < pairs.size();) {
        std::size_t j = i;
        std::vector<std::size_t> g;
        while (j < pairs.size() && pairs[j].group == pairs[i].group) g.push_back(j++);
        if (g.size() == static_cast<std::size_t>(levels)) groups.push_back(std::move(g));
        i = j;
    }
    return groups;
}

// ---------------------------------------------------------------- stage 1: ODE regression

struct StudentModel {
    DenoiserParams params;
    std::vector<CurvePoint> curve;
};

/// Layout of one student training window cut from a pair group.
struct WindowSpec {
    WindowShape shape;
    int pass = 0;           // sub-step index within the step, 0..N-1
    int cache_blocks = 0;   // clean blocks ahead of the window
    int window_blocks = 0;  // < L for a cold-start window
    int window_start = 0;   // block offset of the window inside the crop
};

inline int level_of(double t, int levels) {
    const double k = t * levels;
    const double r = std::round(k);
    if (std::abs(k - r) > 1e-9 || r < 1 || r > levels) {
        throw ConfigError("student window time " + std::to_string(t) + " is not on the backfill grid");
    }
    return static_cast<int>(r);
}

/// Heterogeneous window from one group: block k at its stage time, caches built from the
/// lowest-level ODE endpoints, anchor from the clip reference; targets are ODE endpoints.
inline RegressionSample student_window_sample(const DenoiserParams& student, const SyntheticDataset& ds,
                                              const std::vector<TrajectoryPair>& pairs,
                                              const std::vector<std::size_t>& group, const WindowSpec& spec,
                                              const StreamConfig& base, int levels) {
    StreamConfig cfg = base;
    cfg.L = spec.shape.L;
    cfg.N = spec.shape.N;
    const StageSchedule sched = build_schedule(cfg);
    const TrajectoryPair& lowest = pairs[group.front()];
    const Clip& clip = ds.clips[lowest.clip_id];
    const std::size_t B = static_cast<std::size_t>(ds.B);
    const auto anchors = clip_anchors(student, clip, cfg.anchor_offset_d);
    const AnchorPlacement placement{cfg.style_anchor, cfg.reindex_anchor};

    std::vector<TemporalCache> caches(static_cast<std::size_t>(student.dims.n_layers),
                                      TemporalCache(std::max<std::size_t>(cfg.cache_budget_tokens, spec.cache_blocks * B)));
    for (int c = spec.window_start - spec.cache_blocks; c < spec.window_start; ++c) {
        const std::size_t row = static_cast<std::size_t>(c) * B;
        const auto entries = encode_clean_kv(student, lowest.x0_ode.slice_rows(row, B), c,
                                             lowest.first_position + static_cast<std::int64_t>(row),
                                             lowest.cond.slice_rows(row, B), anchors, placement);
        for (std::size_t l = 0; l < caches.size(); ++l) caches[l].push(entries[l]);
    }

    RegressionSample s;
    std::vector<Tensor2D> frames, targets;
    const int m = spec.window_blocks;
    for (int k = 0; k < m; ++k) {
        const int stage = cfg.L - (m - 1 - k);
        const double t = substep_times(stage, sched, cfg.N)[static_cast<std::size_t>(spec.pass)];
        const TrajectoryPair& p = pairs[group[static_cast<std::size_t>(level_of(t, levels) - 1)]];
        const std::size_t row = static_cast<std::size_t>(spec.window_start + k) * B;
        frames.push_back(p.x_t.slice_rows(row, B));
        targets.push_back(p.x0_ode.slice_rows(row, B));
        for (std::size_t j = 0; j < B; ++j) {
            s.in.positions.push_back(p.first_position + static_cast<std::int64_t>(row + j));
            s.in.times.push_back(t);
        }
    }
    std::vector<const Tensor2D*> fp, tp;
    for (std::size_t k = 0; k < frames.size(); ++k) {
        fp.push_back(&frames[k]);
        tp.push_back(&targets[k]);
    }
    s.in.frames = concat_rows(std::span<const Tensor2D* const>(fp));
    s.target = concat_rows(std::span<const Tensor2D* const>(tp));
    s.in.conds = lowest.cond.slice_rows(static_cast<std::size_t>(spec.window_start) * B, static_cast<std::size_t>(m) * B);
    s.u_i = context_start(caches.front(), s.in.positions.front());
    s.anchor = AnchorSource{clip.reference, Tensor2D(clip.reference.rows(), student.dims.cond_dim), cfg.anchor_offset_d};
    s.placement = placement;
    s.prefix = build_prefix(student.dims, {}, caches, s.u_i, AnchorPlacement{false, true});
    return s;
}

/// Random window layout: weighted shape, random pass, 0..2 cache blocks, occasional cold start.
inline WindowSpec draw_window_spec(Rng& rng, const TrainConfig& cfg, int max_cache_blocks = 2) {
    double total = 0.0;
    for (const auto& s : cfg.shapes) total += s.weight;
    double u = rng.uniform() * total;
    WindowShape shape = cfg.shapes.back();
    for (const auto& s : cfg.shapes) {
        if (u < s.weight) {
            shape = s;
            break;
        }
        u -= s.weight;
    }
    WindowSpec spec;
    spec.shape = shape;
    spec.pass = static_cast<int>(rng.below(static_cast<std::uint64_t>(shape.N)));
    const bool cold = rng.uniform() < cfg.cold_start_fraction && shape.L > 1;
    if (cold) {
        spec.window_blocks = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(shape.L - 1)));
        spec.cache_blocks = 0;
        spec.window_start = 0;
    } else {
        spec.window_blocks = shape.L;
        spec.cache_blocks = static_cast<int>(rng.below(static_cast<std::uint64_t>(max_cache_blocks + 1)));
        const int room = cfg.crop_blocks - shape.L - spec.cache_blocks;
        spec.window_start = spec.cache_blocks + static_cast<int>(rng.below(static_cast<std::uint64_t>(room + 1)));
    }
    return spec;
}

/// Train/held-out split of complete groups (held-out groups are the trailing fraction).
inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_groups(std::size_t n_groups,
                                                                                 double heldout_fraction) {
    const std::size_t held = std::min(n_groups - 1, static_cast<std::size_t>(std::ceil(heldout_fraction * n_groups)));
    std::vector<std::size_t> train, test;
    for (std::size_t g = 0; g < n_groups; ++g) (g + held < n_groups ? train : test).push_back(g);
    return {train, test};
}

/// Stage 1: one-step regression onto teacher ODE endpoints from heterogeneous windows.
inline StudentModel ode_regress(const DenoiserParams& init, const SyntheticDataset& ds,
                                const std::vector<TrajectoryPair>& pairs, const TrainConfig& cfg,
                                const StreamConfig& scfg, int steps, std::uint64_t seed) {
    const auto groups = group_pairs(pairs, cfg.backfill_levels);
    if (groups.empty()) throw InvalidArgument("ode_regress: no complete pair groups");
    const auto [train, test] = split_groups(groups.size(), cfg.heldout_pair_fraction);
    StudentModel sm{init, {}};
    Sgd opt(cfg.ode_lr, cfg.momentum, cfg.clip_norm);
    const Rng root{Rng::mix(seed ^ 0x0de5ULL), 0};
    for (int step = 0; step < steps; ++step) {
        Rng rng = root.fork(static_cast<std::uint64_t>(step));
        std::vector<RegressionSample> batch;
        for (int b = 0; b < cfg.batch; ++b) {
            const auto& g = groups[train[rng.below(train.size())]];
            batch.push_back(student_window_sample(sm.params, ds, pairs, g, draw_window_spec(rng, cfg), scfg,
                                                  cfg.backfill_levels));
        }
        sm.curve.push_back(batch_step(sm.params, batch, opt, step, "ode_regress"));
    }
    return sm;
}

/// Mean regression error over fixed default-shape windows (L and N from the stream config,
/// full cache) drawn from the given groups.
inline double regression_mse(const DenoiserParams& student, const SyntheticDataset& ds,
                             const std::vector<TrajectoryPair>& pairs, std::span<const std::size_t> group_ids,
                             const TrainConfig& cfg, const StreamConfig& scfg, std::uint64_t seed) {
    const auto groups = group_pairs(pairs, cfg.backfill_levels);
    double acc = 0.0;
    std::size_t n = 0;
    for (std::size_t gi : group_ids) {
        Rng rng = Rng{seed, 0}.fork(gi);
        WindowSpec spec;
        spec.shape = WindowShape{scfg.L, scfg.N, 1.0};
        spec.pass = static_cast<int>(rng.below(static_cast<std::uint64_t>(scfg.N)));
        spec.window_blocks = scfg.L;
        spec.cache_blocks = std::min(2, cfg.crop_blocks - scfg.L);
        spec.window_start = spec.cache_blocks;
        acc += regression_loss(student, student_window_sample(student, ds, pairs, groups[gi], spec, scfg, cfg.backfill_levels));
        ++n;
    }
    return n ? acc / static_cast<double>(n) : 0.0;
}

// ---------------------------------------------------------------- stage 2: DMD

struct DmdTerms {
    double loss = 0.0;
    Tensor2D g;     // w(t) (x0_critic - x0_teacher)
    Tensor2D grad;  // d loss / d x0_hat through the stop-gradient surrogate
    Tensor2D x_t;
};

/// 0.5 * ||x - target||^2 with `target` held constant: the stop-gradient surrogate.
inline double dmd_surrogate(std::span<const double> x, std::span<const double> target) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += (x[i] - target[i]) * (x[i] - target[i]);
    return 0.5 * s;
}

/// Distribution-matching loss for a clean sample x0_hat: both scores are read as x0
/// predictions of the full-sequence models on x_t, each with its own style anchor.
inline DmdTerms dmd_loss(const Tensor2D& x0_hat, const DenoiserParams& teacher, const DenoiserParams& critic, double t,
                         const Tensor2D& noise, const Tensor2D& conds, const Tensor2D& reference,
                         std::int64_t first_position, std::int64_t d = -1, double weight = 1.0) {
    if (!(t > 0.0 && t <= 1.0)) throw InvalidArgument("dmd_loss: t must lie in (0,1]");
    DmdTerms out;
    out.x_t = interpolate_noise(x0_hat, noise, t);
    const Tensor2D zero_cond(reference.rows(), teacher.dims.cond_dim);
    const auto ta = encode_anchor(teacher, reference, zero_cond, d);
    const auto ca = encode_anchor(critic, reference, zero_cond, d);
    const Tensor2D real = full_sequence_denoise(out.x_t, t, conds, teacher, ta, first_position);
    const Tensor2D fake = full_sequence_denoise(out.x_t, t, conds, critic, ca, first_position);
    out.g = weight * (fake - real);
    if (!out.g.all_finite()) throw NumericError("dmd_loss: non-finite score gap");

    ad::Tape tape;
    const ad::Var x = tape.leaf(x0_hat, true);
    const ad::Var target = tape.constant(x0_hat - out.g);
    const ad::Var loss = tape.scale(tape.sum_squares(tape.sub(x, target)), 0.5);
    tape.backward(loss);
    out.loss = tape.value(loss)(0, 0);
    out.grad = tape.grad(x);
    return out;
}

struct CriticModel {
    DenoiserParams params;
    std::vector<CurvePoint> curve;
};

/// A clean sample produced by the student, with what the score models need to see it.
struct StudentSample {
    Tensor2D x0;
    Tensor2D conds;
    std::int64_t first_position = 0;
    std::size_t clip = 0;
};

/// Critic: denoising regression on student samples, `batch` samples per step. steps = 0
/// leaves it unchanged.
inline CriticModel critic_update(CriticModel critic, const std::vector<StudentSample>& samples,
                                 const SyntheticDataset& ds, int steps, int batch, Sgd& opt, Rng& rng,
                                 int step_base = 0, std::int64_t d = -1) {
    if (steps > 0 && samples.empty()) throw InvalidArgument("critic_update: no student samples");
    for (int k = 0; k < steps; ++k) {
        std::vector<RegressionSample> rs;
        for (int i = 0; i < batch; ++i) {
            const StudentSample& s = samples[rng.below(samples.size())];
            RegressionSample r;
            const double t = rng.uniform();
            r.target = s.x0;
            r.in.frames = interpolate_noise(s.x0, rng.gaussian(s.x0.rows(), s.x0.cols()), t);
            for (std::size_t j = 0; j < s.x0.rows(); ++j) r.in.positions.push_back(s.first_position + static_cast<std::int64_t>(j));
            r.in.times.assign(s.x0.rows(), t);
            r.in.conds = s.conds;
            const Clip& clip = ds.clips[s.clip];
            r.anchor = AnchorSource{clip.reference, Tensor2D(clip.reference.rows(), critic.params.dims.cond_dim), d};
            r.u_i = s.first_position;
            rs.push_back(std::move(r));
        }
        critic.curve.push_back(batch_step(critic.params, rs, opt, step_base + k, "critic_update"));
    }
    return critic;
}

struct HarvestedWindow {
    PassRecord record;
    std::size_t clip = 0;
};

/// Runs the streamer on a training clip from `start_frame` and keeps every pass over a full
/// window (all L stages present).
inline std::vector<HarvestedWindow> rollout_simulate(const DenoiserParams& student, const StreamConfig& cfg,
                                                     const SyntheticDataset& ds, std::size_t clip_id,
                                                     std::size_t start_frame, int steps, std::uint64_t seed) {
    const Clip& clip = ds.clips.at(clip_id);
    const std::size_t needed = static_cast<std::size_t>(steps) * static_cast<std::size_t>(cfg.B);
    if (start_frame + needed > clip.conds.rows()) throw InvalidArgument("rollout_simulate: clip too short");
    StreamState s = init_stream(clip.reference, clip.reference_conds, cfg, std::make_shared<DenoiserParams>(student), seed);
    std::vector<HarvestedWindow> out;
    s.on_pass = [&](const PassRecord& r) {
        if (r.stages.size() == static_cast<std::size_t>(cfg.L)) out.push_back(HarvestedWindow{r, clip_id});
    };
    const CondStream conds(clip.conds.slice_rows(start_frame, needed));
    for (int i = 0; i < steps; ++i) step(s, conds);
    return out;
}

/// Stage 2: alternating critic and generator updates on student rollouts. The generator
/// gradient g enters through the leftmost `backprop_blocks` blocks of a harvested window; the
/// window's caches and anchor are treated as constants.
struct DmdResult {
    StudentModel student;
    CriticModel critic;
};

inline DmdResult distill_dmd(const DenoiserParams& student_init, const TeacherModel& teacher, const SyntheticDataset& ds,
                             const TrainConfig& cfg, const StreamConfig& scfg, int steps, std::uint64_t seed,
                             const std::function<void(int, const DmdResult&)>& monitor = {}) {
    DmdResult res{StudentModel{student_init, {}}, CriticModel{teacher.params, {}}};
    Sgd gen_opt(cfg.dmd_lr, cfg.momentum, cfg.clip_norm);
    Sgd critic_opt(cfg.critic_lr, cfg.momentum, cfg.clip_norm);
    const Rng root{Rng::mix(seed ^ 0xd3dULL), 0};
    std::vector<StudentSample> buffer;
    const std::size_t buffer_cap = cfg.critic_buffer;
    const std::size_t B = static_cast<std::size_t>(scfg.B);
    for (int step = 0; step < steps; ++step) {
        Rng rng = root.fork(static_cast<std::uint64_t>(step));
        const int rollout_steps = scfg.L + static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg.rollout_extra_steps) + 1));
        const std::size_t c = rng.below(ds.training_clips());
        const std::size_t need = static_cast<std::size_t>(rollout_steps) * B;
        const std::size_t start = rng.below(ds.clips[c].frames.rows() - need + 1);
        auto windows = rollout_simulate(res.student.params, scfg, ds, c, start, rollout_steps, rng.next_u64());
        if (windows.empty()) throw StateCorruption("distill_dmd: rollout produced no full window");
        for (const auto& w : windows) {
            StudentSample s;
            const auto& pred = w.record.prediction.x0_hat;
            std::vector<const Tensor2D*> parts;
            for (const auto& b : pred) parts.push_back(&b);
            s.x0 = concat_rows(std::span<const Tensor2D* const>(parts));
            s.conds = w.record.inputs.conds;
            // rollout positions restart at 0; the clip frames they stand for start at `start`
            s.first_position = w.record.inputs.positions.front();
            s.clip = w.clip;
            if (buffer.size() < buffer_cap) buffer.push_back(std::move(s));
            else buffer[rng.below(buffer_cap)] = std::move(s);
        }

        res.critic = critic_update(std::move(res.critic), buffer, ds, cfg.critic_steps_per_generator, cfg.batch,
                                   critic_opt, rng, step * cfg.critic_steps_per_generator, scfg.anchor_offset_d);

        DenoiserParams grad = DenoiserParams::zeros(res.student.params.dims);
        double loss = 0.0;
        for (int bi = 0; bi < cfg.batch; ++bi) {
            const HarvestedWindow& hw = windows[rng.below(windows.size())];
            ad::Tape tape;
            const BoundParams bound = bind(tape, res.student.params, true);
            const ad::Var out = denoise_core(tape, bound, res.student.params.dims,
                                             tape.constant(hw.record.inputs.frames), hw.record.inputs, hw.record.prefix);
            const Tensor2D x0 = tape.value(out);
            const double t = rng.uniform(cfg.dmd_t_lo, cfg.dmd_t_hi);
            const DmdTerms terms = dmd_loss(x0, teacher.params, res.critic.params, t, rng.gaussian(x0.rows(), x0.cols()),
                                            hw.record.inputs.conds, ds.clips[hw.clip].reference,
                                            hw.record.inputs.positions.front(), scfg.anchor_offset_d, cfg.dmd_weight);
            const std::size_t rows = std::min(x0.rows(), static_cast<std::size_t>(cfg.backprop_blocks) * B);
            Tensor2D upstream(x0.rows(), x0.cols());
            const double norm = 1.0 / static_cast<double>(rows * x0.cols() * static_cast<std::size_t>(cfg.batch));
            for (std::size_t r = 0; r < rows; ++r) {
                for (std::size_t k = 0; k < x0.cols(); ++k) {
                    upstream(r, k) = norm * terms.grad(r, k);
                    loss += 0.5 * norm * terms.grad(r, k) * terms.grad(r, k);
                }
            }
            tape.backward(out, upstream);
            axpy(grad, gradients(tape, bound, res.student.params), 1.0);
        }
        check_loss(loss, "distill_dmd", step);
        if (cfg.dmd_cosine_decay) gen_opt.set_lr(0.5 * cfg.dmd_lr * (1.0 + std::cos(std::numbers::pi * step / steps)));
        const double gn = gen_opt.step(res.student.params, grad);
        res.student.curve.push_back(CurvePoint{step, loss, gn});
        if (monitor) monitor(step, res);
    }
    return res;
}

// ---------------------------------------------------------------- evaluation helpers

/// Emitted blocks (one row per block) of streaming runs over the given clips and seeds.
inline Tensor2D student_blocks(const DenoiserParams& student, const StreamConfig& cfg, const SyntheticDataset& ds,
                               std::span<const std::size_t> clip_ids, std::size_t n_blocks,
                               std::span<const std::uint64_t> seeds) {
    const auto params = std::make_shared<const DenoiserParams>(student);
    std::vector<Tensor2D> parts;
    for (std::size_t c : clip_ids) {
        const Clip& clip = ds.clips[c];
        for (std::uint64_t seed : seeds) {
            const RunOutput r = run(cfg, params, clip.reference, clip.reference_conds, CondStream(clip.conds),
                                    n_blocks * static_cast<std::size_t>(cfg.B), seed);
            parts.push_back(block_vectors(r.frames, cfg.B));
        }
    }
    std::vector<const Tensor2D*> ptrs;
    for (const auto& p : parts) ptrs.push_back(&p);
    return concat_rows(std::span<const Tensor2D* const>(ptrs));
}

/// Multi-step teacher blocks over the same frames, sampled window_blocks blocks at a time.
inline Tensor2D teacher_blocks(const DenoiserParams& teacher, const SyntheticDataset& ds,
                               std::span<const std::size_t> clip_ids, std::size_t n_blocks,
                               std::span<const std::uint64_t> seeds, int n_steps, std::size_t window_blocks,
                               std::int64_t d = -1) {
    const std::size_t B = static_cast<std::size_t>(ds.B);
    std::vector<Tensor2D> parts;
    for (std::size_t c : clip_ids) {
        for (std::uint64_t seed : seeds) {
            Rng rng = Rng{seed, 0}.fork(c);
            for (std::size_t b = 0; b < n_blocks; b += window_blocks) {
                const std::size_t len = std::min(window_blocks, n_blocks - b) * B;
                parts.push_back(block_vectors(teacher_sample(teacher, ds.clips[c], b * B, len, n_steps, rng, d), ds.B));
            }
        }
    }
    std::vector<const Tensor2D*> ptrs;
    for (const auto& p : parts) ptrs.push_back(&p);
    return concat_rows(std::span<const Tensor2D* const>(ptrs));
}

/// Variance deficit of one-step predictions at each stage time, from forward-process inputs
/// built on held-out data (uniform time across a full window, no cache).
inline std::vector<double> stage_variance_deficit(const DenoiserParams& student, const StreamConfig& cfg,
                                                  const SyntheticDataset& ds, std::span<const std::size_t> clip_ids,
                                                  std::uint64_t seed, std::size_t windows_per_clip = 6) {
    const StageSchedule sched = build_schedule(cfg);
    const std::size_t len = cfg.window_frames();
    std::vector<double> out;
    for (int s = 1; s <= cfg.L; ++s) {
        std::vector<Tensor2D> preds, data;
        for (std::size_t c : clip_ids) {
            Rng rng = Rng{seed, static_cast<std::uint64_t>(s)}.fork(c);
            const Clip& clip = ds.clips[c];
            for (std::size_t k = 0; k < windows_per_clip; ++k) {
                const std::size_t start = rng.below(clip.frames.rows() - len + 1);
                const RegressionSample r = full_sequence_sample(student, clip, start, len, sched.at(s),
                                                                rng.gaussian(len, student.dims.latent_dim),
                                                                cfg.anchor_offset_d);
                preds.push_back(predict(student, r));
                data.push_back(r.target);
            }
        }
        std::vector<const Tensor2D*> pp, dp;
        for (std::size_t i = 0; i < preds.size(); ++i) {
            pp.push_back(&preds[i]);
            dp.push_back(&data[i]);
        }
        out.push_back(variance_deficit(concat_rows(std::span<const Tensor2D* const>(pp)),
                                       concat_rows(std::span<const Tensor2D* const>(dp))));
    }
    return out;
}

}  // namespace rw
