#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <iomanip>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "rollwin/distill.hpp"
#include "rollwin/metrics.hpp"
#include "rollwin/settings.hpp"
#include "rollwin/streamer.hpp"

namespace rw {

// ---------------------------------------------------------------- rollouts

/// Long held-out clips for stability rollouts. They carry `frames` frames plus the look-ahead
/// the widest window in `cfg_L_max` needs.
inline std::vector<Clip> eval_clips(const SyntheticDataset& ds, std::size_t n, std::size_t frames, int L_max,
                                    std::size_t cond_dim) {
    const std::size_t extra = static_cast<std::size_t>(std::max(L_max, 1)) * static_cast<std::size_t>(ds.B);
    return gen_long_clips(ds, n, frames + extra, cond_dim);
}

/// Metrics of one streaming rollout over `frames` frames of `clip`.
inline MetricsRecord evaluate_rollout(const StreamConfig& cfg, std::shared_ptr<const DenoiserParams> params,
                                      const Clip& clip, const SyntheticDataset& ds, std::size_t frames,
                                      std::uint64_t seed) {
    const RunOutput r = run(cfg, std::move(params), clip.reference, clip.reference_conds, CondStream(clip.conds), frames, seed);
    MetricsRecord m = compute_metrics(r.frames, clip.reference, std::span<const double>(clip.raw).first(frames),
                                      ds.cos_axis, ds.sin_axis, clip.frames.slice_rows(0, frames), cfg.B);
    std::vector<double> ns;
    for (std::size_t i = static_cast<std::size_t>(cfg.L); i < r.ledger.size(); ++i) ns.push_back(static_cast<double>(r.ledger[i].wall_ns));
    m.per_step_latency_ms = median(std::move(ns)) * 1e-6;
    return m;
}

/// Field-wise median over records.
inline MetricsRecord median_record(const std::vector<MetricsRecord>& rs) {
    auto pick = [&](double MetricsRecord::*f) {
        std::vector<double> v;
        for (const auto& r : rs) v.push_back(r.*f);
        return median(std::move(v));
    };
    MetricsRecord m;
    m.drift_total = pick(&MetricsRecord::drift_total);
    m.drift_last = pick(&MetricsRecord::drift_last);
    m.flicker_total = pick(&MetricsRecord::flicker_total);
    m.flicker_last = pick(&MetricsRecord::flicker_last);
    m.sync_corr = pick(&MetricsRecord::sync_corr);
    m.variance_deficit = pick(&MetricsRecord::variance_deficit);
    m.per_step_latency_ms = pick(&MetricsRecord::per_step_latency_ms);
    return m;
}

/// Median metrics over every (clip, seed) rollout, ordered by clip then seed.
inline MetricsRecord evaluate_config(const StreamConfig& cfg, const std::shared_ptr<const DenoiserParams>& params,
                                     const std::vector<Clip>& clips, const SyntheticDataset& ds, std::size_t frames,
                                     std::span<const std::uint64_t> seeds) {
    std::vector<MetricsRecord> rs;
    for (const Clip& c : clips)
        for (std::uint64_t s : seeds) rs.push_back(evaluate_rollout(cfg, params, c, ds, frames, s));
    return median_record(rs);
}

// ---------------------------------------------------------------- grid sweep

struct GridCell {
    int L = 0;
    int N = 0;
    MetricsRecord metrics;
    std::string error;  // non-empty when the cell failed; the sweep continues
};

inline std::vector<GridCell> grid_sweep(std::span<const int> L_list, std::span<const int> N_list, const StreamConfig& base,
                                        const std::shared_ptr<const DenoiserParams>& params, const std::vector<Clip>& clips,
                                        const SyntheticDataset& ds, std::size_t frames, std::span<const std::uint64_t> seeds) {
    if (seeds.empty()) throw InvalidArgument("grid_sweep: at least one seed required");
    std::vector<GridCell> out;
    for (int L : L_list) {
        for (int N : N_list) {
            GridCell cell{L, N, {}, {}};
            StreamConfig cfg = base;
            cfg.L = L;
            cfg.N = N;
            try {
                cell.metrics = evaluate_config(cfg, params, clips, ds, frames, seeds);
            } catch (const Error& e) {
                cell.error = e.what();
            }
            out.push_back(std::move(cell));
        }
    }
    return out;
}

inline constexpr const char* kGridHeader = "L,N,budget,drift_total,drift_last,flicker_total,flicker_last,sync_corr,latency_ms";

inline void write_grid_csv(std::ostream& os, const std::vector<GridCell>& cells) {
    os << kGridHeader << '\n';
    os << std::setprecision(10);
    for (const auto& c : cells) {
        os << c.L << ',' << c.N << ',' << c.L * c.N << ',';
        if (!c.error.empty()) {
            os << "nan,nan,nan,nan,nan,nan\n";
            continue;
        }
        const auto& m = c.metrics;
        os << m.drift_total << ',' << m.drift_last << ',' << m.flicker_total << ',' << m.flicker_last << ',' << m.sync_corr
           << ',' << m.per_step_latency_ms << '\n';
    }
}

// ---------------------------------------------------------------- ablations

enum class AblationMode { full, no_style_anchor, no_temporal_anchor, no_anchor_zero_pad, no_rope_reindex };

inline constexpr AblationMode kAllAblations[] = {AblationMode::full, AblationMode::no_style_anchor,
                                                 AblationMode::no_temporal_anchor, AblationMode::no_anchor_zero_pad,
                                                 AblationMode::no_rope_reindex};

inline std::string to_string(AblationMode m) {
    switch (m) {
        case AblationMode::full: return "full";
        case AblationMode::no_style_anchor: return "no_style_anchor";
        case AblationMode::no_temporal_anchor: return "no_temporal_anchor";
        case AblationMode::no_anchor_zero_pad: return "no_anchor_zero_pad";
        case AblationMode::no_rope_reindex: return "no_rope_reindex";
    }
    return "?";
}

inline AblationMode parse_ablation(const std::string& s) {
    for (AblationMode m : kAllAblations)
        if (to_string(m) == s) return m;
    throw ConfigError("unknown ablation mode '" + s + "'");
}

/// Flips exactly the switch named by the mode.
inline StreamConfig apply_ablation(StreamConfig cfg, AblationMode m) {
    switch (m) {
        case AblationMode::full: break;
        case AblationMode::no_style_anchor: cfg.style_anchor = false; break;
        case AblationMode::no_temporal_anchor: cfg.cache_budget_tokens = 0; break;
        case AblationMode::no_anchor_zero_pad: cfg.anchor_zero_pad = false; break;
        case AblationMode::no_rope_reindex: cfg.reindex_anchor = false; break;
    }
    return cfg;
}

struct AblationRow {
    AblationMode mode = AblationMode::full;
    MetricsRecord metrics;
    double anchor_cond_energy = 0.0;
};

inline std::vector<AblationRow> ablate(std::span<const AblationMode> modes, const StreamConfig& base,
                                       const std::shared_ptr<const DenoiserParams>& params, const std::vector<Clip>& clips,
                                       const SyntheticDataset& ds, std::size_t frames, std::span<const std::uint64_t> seeds) {
    std::vector<AblationRow> out;
    for (AblationMode m : modes) {
        const StreamConfig cfg = apply_ablation(base, m);
        AblationRow row{m, evaluate_config(cfg, params, clips, ds, frames, seeds), 0.0};
        if (!clips.empty()) {
            const StreamState s = init_stream(clips.front().reference, clips.front().reference_conds, cfg, params, 0);
            row.anchor_cond_energy = s.anchor_cond_energy;
        }
        out.push_back(row);
    }
    return out;
}

inline void write_ablation_csv(std::ostream& os, const std::vector<AblationRow>& rows) {
    os << "mode,drift_total,drift_last,flicker_total,flicker_last,sync_corr,variance_deficit,anchor_cond_energy,latency_ms\n";
    os << std::setprecision(10);
    for (const auto& r : rows) {
        const auto& m = r.metrics;
        os << to_string(r.mode) << ',' << m.drift_total << ',' << m.drift_last << ',' << m.flicker_total << ','
           << m.flicker_last << ',' << m.sync_corr << ',' << m.variance_deficit << ',' << r.anchor_cond_energy << ','
           << m.per_step_latency_ms << '\n';
    }
}

/// Attention logit between a probe query at the context's first non-anchor position and the
/// anchor key of token 0 in layer 0, as the stream would place it at each step.
struct AnchorProbe {
    std::vector<double> logits;
    std::vector<std::int64_t> u;
};

inline double anchor_logit(const StyleAnchor& anchor, std::span<const double> probe, std::int64_t u_i,
                           AnchorPlacement placement, const RopeConfig& rope) {
    const auto q = rope_apply(probe, u_i, rope);
    const auto k = rope_apply(anchor.pre_rope_keys.row(0), anchor_position(anchor, u_i, placement), rope);
    return dot(q, k) / std::sqrt(static_cast<double>(rope.head_dim));
}

/// Streams `steps` steps and records the probe logit before every step. The probe defaults to
/// the anchor key itself.
inline AnchorProbe anchor_probe(const StreamConfig& cfg, std::shared_ptr<const DenoiserParams> params,
                                const Tensor2D& reference, const Tensor2D& reference_cond, const CondStream& conds,
                                std::size_t steps, std::uint64_t seed, std::optional<std::vector<double>> probe = {}) {
    StreamState s = init_stream(reference, reference_cond, cfg, std::move(params), seed);
    const RopeConfig rope = s.params->dims.rope();
    const StyleAnchor& a = s.anchors.front();
    const std::vector<double> q = probe ? *probe : std::vector<double>(a.pre_rope_keys.row(0).begin(), a.pre_rope_keys.row(0).end());
    AnchorProbe out;
    for (std::size_t i = 0; i < steps; ++i) {
        const std::int64_t u = current_u_i(s);
        out.u.push_back(u);
        out.logits.push_back(anchor_logit(a, q, u, s.placement(), rope));
        step(s, conds);
    }
    return out;
}

// ---------------------------------------------------------------- causal baselines

struct BaselineRow {
    std::string name;
    int L = 1;
    int N = 1;
    MetricsRecord metrics;
    std::string error;
};

/// Strictly causal L=1 students under the same budgets: regression on ODE endpoints only
/// ("causal_ode"), and distribution matching only, starting from the teacher ("self_forcing").
struct CausalStudents {
    DenoiserParams causal_ode;
    DenoiserParams self_forcing;
};

inline StreamConfig causal_config(StreamConfig cfg) {
    cfg.L = 1;
    cfg.N = 1;
    return cfg;
}

inline CausalStudents train_causal_students(const TeacherModel& teacher, const SyntheticDataset& ds,
                                            const std::vector<TrajectoryPair>& pairs, TrainConfig cfg,
                                            const StreamConfig& scfg, std::uint64_t seed) {
    const StreamConfig causal = causal_config(scfg);
    cfg.shapes = {WindowShape{1, 1, 1.0}};
    CausalStudents out;
    out.causal_ode = ode_regress(teacher.params, ds, pairs, cfg, causal, cfg.ode_steps, seed).params;
    out.self_forcing = distill_dmd(teacher.params, teacher, ds, cfg, causal, cfg.dmd_steps, seed).student.params;
    return out;
}

inline std::vector<BaselineRow> causal_baselines(const CausalStudents& students, const DenoiserParams& two_stage,
                                                 const StreamConfig& scfg, const std::vector<Clip>& clips,
                                                 const SyntheticDataset& ds, std::size_t frames,
                                                 std::span<const std::uint64_t> seeds) {
    const StreamConfig causal = causal_config(scfg);
    struct Job {
        std::string name;
        const DenoiserParams* params;
        StreamConfig cfg;
    };
    const std::vector<Job> jobs = {{"causal_ode", &students.causal_ode, causal},
                                   {"self_forcing", &students.self_forcing, causal},
                                   {"two_stage", &two_stage, scfg}};
    std::vector<BaselineRow> out;
    for (const auto& j : jobs) {
        BaselineRow row{j.name, j.cfg.L, j.cfg.N, {}, {}};
        try {
            row.metrics = evaluate_config(j.cfg, std::make_shared<const DenoiserParams>(*j.params), clips, ds, frames, seeds);
        } catch (const Error& e) {
            row.error = e.what();
        }
        out.push_back(std::move(row));
    }
    return out;
}

inline void write_baselines_csv(std::ostream& os, const std::vector<BaselineRow>& rows) {
    os << "baseline,L,N,drift_total,drift_last,flicker_total,flicker_last,sync_corr,variance_deficit,latency_ms\n";
    os << std::setprecision(10);
    for (const auto& r : rows) {
        const auto& m = r.metrics;
        os << r.name << ',' << r.L << ',' << r.N << ',';
        if (!r.error.empty()) {
            os << "nan,nan,nan,nan,nan,nan,nan\n";
            continue;
        }
        os << m.drift_total << ',' << m.drift_last << ',' << m.flicker_total << ',' << m.flicker_last << ','
           << m.sync_corr << ',' << m.variance_deficit << ',' << m.per_step_latency_ms << '\n';
    }
}

// ---------------------------------------------------------------- latency curve

struct LatencyCell {
    int L = 0;
    int N = 0;
    double per_step_ms = 0.0;
    double per_frame_ms = 0.0;
};

/// Median step time per (L,N) after an L-step warm-up, `steps` timed steps each.
inline std::vector<LatencyCell> latency_curve(std::span<const int> L_list, std::span<const int> N_list,
                                              const StreamConfig& base, const std::shared_ptr<const DenoiserParams>& params,
                                              const Clip& clip, std::size_t steps, std::uint64_t seed) {
    std::vector<LatencyCell> out;
    for (int L : L_list) {
        for (int N : N_list) {
            StreamConfig cfg = base;
            cfg.L = L;
            cfg.N = N;
            const std::size_t frames = steps * static_cast<std::size_t>(cfg.B);
            if (clip.conds.rows() < frames + cfg.window_frames()) throw InvalidArgument("latency_curve: clip too short");
            const RunOutput r = run(cfg, params, clip.reference, clip.reference_conds, CondStream(clip.conds), frames, seed);
            std::vector<double> ns;
            for (std::size_t i = static_cast<std::size_t>(L); i < r.ledger.size(); ++i) ns.push_back(static_cast<double>(r.ledger[i].wall_ns));
            const double ms = median(std::move(ns)) * 1e-6;
            out.push_back(LatencyCell{L, N, ms, ms / cfg.B});
        }
    }
    return out;
}

inline void write_latency_curve_csv(std::ostream& os, const std::vector<LatencyCell>& cells) {
    os << "L,N,budget,per_step_ms,per_frame_ms\n";
    os << std::setprecision(10);
    for (const auto& c : cells) os << c.L << ',' << c.N << ',' << c.L * c.N << ',' << c.per_step_ms << ',' << c.per_frame_ms << '\n';
}

/// Per-frame time against N, one polyline per L, log2 on the x axis.
inline void write_latency_svg(std::ostream& os, const std::vector<LatencyCell>& cells) {
    const double W = 640, H = 420, ml = 70, mr = 110, mt = 30, mb = 50;
    double ymax = 0.0;
    int nmax = 1;
    std::map<int, std::vector<const LatencyCell*>> byL;
    for (const auto& c : cells) {
        ymax = std::max(ymax, c.per_frame_ms);
        nmax = std::max(nmax, c.N);
        byL[c.L].push_back(&c);
    }
    if (ymax <= 0.0) ymax = 1.0;
    ymax *= 1.1;
    const double xr = std::max(1.0, std::log2(static_cast<double>(nmax)));
    auto X = [&](int n) { return ml + (W - ml - mr) * std::log2(static_cast<double>(n)) / xr; };
    auto Y = [&](double v) { return H - mb - (H - mt - mb) * v / ymax; };
    static const char* colors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b"};

    os << std::fixed << std::setprecision(2);
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "<line x1=\"" << ml << "\" y1=\"" << H - mb << "\" x2=\"" << W - mr << "\" y2=\"" << H - mb << "\" stroke=\"black\"/>\n";
    os << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << H - mb << "\" stroke=\"black\"/>\n";
    for (int n = 1; n <= nmax; n *= 2) {
        os << "<text x=\"" << X(n) << "\" y=\"" << H - mb + 18 << "\" text-anchor=\"middle\">" << n << "</text>\n";
    }
    for (int k = 0; k <= 4; ++k) {
        const double v = ymax * k / 4.0;
        os << "<text x=\"" << ml - 6 << "\" y=\"" << Y(v) + 4 << "\" text-anchor=\"end\">" << std::setprecision(3) << v
           << std::setprecision(2) << "</text>\n";
    }
    os << "<text x=\"" << (ml + W - mr) / 2 << "\" y=\"" << H - 10 << "\" text-anchor=\"middle\">N (passes per step)</text>\n";
    os << "<text x=\"16\" y=\"" << (mt + H - mb) / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " << (mt + H - mb) / 2
       << ")\">ms per frame</text>\n";
    std::size_t ci = 0;
    for (const auto& [L, pts] : byL) {
        const char* col = colors[ci % 6];
        os << "<polyline fill=\"none\" stroke=\"" << col << "\" stroke-width=\"2\" points=\"";
        for (const auto* c : pts) os << X(c->N) << ',' << Y(c->per_frame_ms) << ' ';
        os << "\"/>\n";
        for (const auto* c : pts) os << "<circle cx=\"" << X(c->N) << "\" cy=\"" << Y(c->per_frame_ms) << "\" r=\"3\" fill=\"" << col << "\"/>\n";
        os << "<text x=\"" << W - mr + 12 << "\" y=\"" << mt + 18 * static_cast<double>(ci + 1) << "\" fill=\"" << col << "\">L=" << L << "</text>\n";
        ++ci;
    }
    os << "</svg>\n";
}

// ---------------------------------------------------------------- distillation lab

/// Everything trained for one seed by the full recipe.
struct LabModels {
    SyntheticDataset ds;
    TeacherModel teacher;
    std::vector<TrajectoryPair> pairs;
    StudentModel ode_student;
    DmdResult dmd;
    double ode_train_mse = 0.0;
    double ode_heldout_mse = 0.0;
};

inline LabModels run_lab(const AppConfig& cfg, std::uint64_t seed) {
    LabModels m;
    m.ds = gen_dataset(cfg.data, cfg.model.latent_dim, cfg.model.cond_dim, cfg.stream.B, seed);
    m.teacher = train_teacher(m.ds, cfg.model, cfg.train, cfg.train.teacher_steps, seed, cfg.stream.anchor_offset_d);
    m.pairs = ode_backfill(m.teacher, m.ds, cfg.train.n_pairs, cfg.train.n_ode_steps, cfg.train.backfill_levels,
                           cfg.train.crop_blocks, seed, cfg.stream.anchor_offset_d);
    m.ode_student = ode_regress(m.teacher.params, m.ds, m.pairs, cfg.train, cfg.stream, cfg.train.ode_steps, seed);
    const auto groups = group_pairs(m.pairs, cfg.train.backfill_levels);
    const auto [train_ids, held_ids] = split_groups(groups.size(), cfg.train.heldout_pair_fraction);
    m.ode_train_mse = regression_mse(m.ode_student.params, m.ds, m.pairs, train_ids, cfg.train, cfg.stream, seed);
    m.ode_heldout_mse = regression_mse(m.ode_student.params, m.ds, m.pairs, held_ids, cfg.train, cfg.stream, seed);
    m.dmd = distill_dmd(m.ode_student.params, m.teacher, m.ds, cfg.train, cfg.stream, cfg.train.dmd_steps, seed);
    return m;
}

/// Energy distance of one-step student blocks and multi-step teacher blocks on held-out clips.
struct EfficacyReport {
    double ed_ode = 0.0;
    double ed_dmd = 0.0;
};

inline std::vector<std::uint64_t> eval_sample_seeds(std::size_t n) {
    std::vector<std::uint64_t> s;
    for (std::size_t i = 0; i < n; ++i) s.push_back(11 + i);
    return s;
}

inline EfficacyReport distill_efficacy(const LabModels& m, const AppConfig& cfg) {
    const auto held = m.ds.heldout_ids();
    const auto seeds = eval_sample_seeds(cfg.bench.eval_sample_seeds);
    const Tensor2D T = teacher_blocks(m.teacher.params, m.ds, held, cfg.bench.eval_blocks, seeds,
                                      cfg.bench.teacher_sample_steps, cfg.bench.teacher_window_blocks,
                                      cfg.stream.anchor_offset_d);
    EfficacyReport r;
    r.ed_ode = energy_distance(student_blocks(m.ode_student.params, cfg.stream, m.ds, held, cfg.bench.eval_blocks, seeds), T);
    r.ed_dmd = energy_distance(student_blocks(m.dmd.student.params, cfg.stream, m.ds, held, cfg.bench.eval_blocks, seeds), T);
    return r;
}

}  // namespace rw
