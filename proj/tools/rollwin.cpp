// rollwin command line driver. Every subcommand regenerates the synthetic dataset from the
// config and seed, reads checkpoints named on the command line, and writes its outputs plus a
// resolved.ini into --out.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>

#include "rollwin/rollwin.hpp"

namespace fs = std::filesystem;
using namespace rw;
using namespace rw::io;

namespace {

struct Common {
    std::string config;
    std::uint64_t seed = 0;
    bool seed_set = false;
    std::string out = "out";
};

struct Inputs {
    std::string teacher, student, pairs;
    std::size_t clip = 0;
    std::size_t frames = 0;
    bool realtime = false;
};

AppConfig resolve(const Common& c) {
    AppConfig cfg = c.config.empty() ? AppConfig{} : load_config(c.config);
    if (c.seed_set) cfg.seed = c.seed;
    cfg.validate();
    return cfg;
}

fs::path prepare_out(const Common& c, const AppConfig& cfg) {
    const fs::path out(c.out);
    fs::create_directories(out);
    save_config(out / "resolved.ini", cfg);
    return out;
}

std::ofstream open_out(const fs::path& p) {
    std::ofstream os(p);
    if (!os) throw IoError("cannot write " + p.string());
    return os;
}

SyntheticDataset dataset(const AppConfig& cfg) {
    return gen_dataset(cfg.data, cfg.model.latent_dim, cfg.model.cond_dim, cfg.stream.B, cfg.seed);
}

std::shared_ptr<const DenoiserParams> need_params(const std::string& path, const char* what) {
    if (path.empty()) throw ConfigError(std::string("missing --") + what + " checkpoint");
    return std::make_shared<const DenoiserParams>(load_checkpoint(path));
}

int max_L(const AppConfig& cfg) {
    int L = cfg.stream.L;
    for (int v : cfg.bench.L_list) L = std::max(L, v);
    return L;
}

std::vector<Clip> bench_clips(const AppConfig& cfg, const SyntheticDataset& ds) {
    return eval_clips(ds, cfg.bench.eval_clips, cfg.bench.rollout_frames, max_L(cfg), cfg.model.cond_dim);
}

void cmd_gen_data(const Common& c) {
    const AppConfig cfg = resolve(c);
    const fs::path out = prepare_out(c, cfg);
    const SyntheticDataset ds = dataset(cfg);
    fs::create_directories(out / "data");
    auto idx = open_out(out / "data" / "clips.csv");
    idx << "clip,frames,heldout,frames_file,cond_file\n";
    for (std::size_t i = 0; i < ds.clips.size(); ++i) {
        const std::string stem = "clip_" + std::to_string(i);
        write_frames(out / "data" / (stem + ".frames.bin"), ds.clips[i].frames);
        write_conds(out / "data" / (stem + ".cond.bin"), ds.clips[i].conds);
        idx << i << ',' << ds.clips[i].frames.rows() << ',' << (i >= ds.training_clips() ? 1 : 0) << ',' << stem
            << ".frames.bin," << stem << ".cond.bin\n";
    }
}

void cmd_train_teacher(const Common& c) {
    const AppConfig cfg = resolve(c);
    const fs::path out = prepare_out(c, cfg);
    const SyntheticDataset ds = dataset(cfg);
    const TeacherModel tm = train_teacher(ds, cfg.model, cfg.train, cfg.train.teacher_steps, cfg.seed, cfg.stream.anchor_offset_d);
    save_checkpoint(out / "teacher.ckpt", tm.params);
    auto os = open_out(out / "teacher_curve.csv");
    write_curve_csv(os, tm.curve);
    auto mse = open_out(out / "teacher_eval.csv");
    const auto held = ds.heldout_ids();
    mse << std::setprecision(17) << "t,heldout_denoise_mse\n";
    for (double t : {0.25, 0.5, 0.75})
        mse << t << ',' << denoise_mse(tm.params, ds, held, t, 8, cfg.stream.window_frames(), cfg.seed, cfg.stream.anchor_offset_d) << '\n';
}

void cmd_backfill(const Common& c, const Inputs& in) {
    const AppConfig cfg = resolve(c);
    const fs::path out = prepare_out(c, cfg);
    const SyntheticDataset ds = dataset(cfg);
    TeacherModel tm{*need_params(in.teacher, "teacher"), true, {}};
    const auto pairs = ode_backfill(tm, ds, cfg.train.n_pairs, cfg.train.n_ode_steps, cfg.train.backfill_levels,
                                    cfg.train.crop_blocks, cfg.seed, cfg.stream.anchor_offset_d);
    write_pairs(out / "pairs.bin", pairs);
}

void cmd_distill_ode(const Common& c, const Inputs& in) {
    const AppConfig cfg = resolve(c);
    const fs::path out = prepare_out(c, cfg);
    const SyntheticDataset ds = dataset(cfg);
    const auto teacher = need_params(in.teacher, "teacher");
    if (in.pairs.empty()) throw ConfigError("missing --pairs file");
    const auto pairs = read_pairs(in.pairs);
    const StudentModel st = ode_regress(*teacher, ds, pairs, cfg.train, cfg.stream, cfg.train.ode_steps, cfg.seed);
    save_checkpoint(out / "student_ode.ckpt", st.params);
    auto os = open_out(out / "ode_curve.csv");
    write_curve_csv(os, st.curve);
    const auto groups = group_pairs(pairs, cfg.train.backfill_levels);
    const auto [tr, te] = split_groups(groups.size(), cfg.train.heldout_pair_fraction);
    auto ev = open_out(out / "ode_eval.csv");
    ev << std::setprecision(17) << "train_mse,heldout_mse\n"
       << regression_mse(st.params, ds, pairs, tr, cfg.train, cfg.stream, cfg.seed) << ','
       << regression_mse(st.params, ds, pairs, te, cfg.train, cfg.stream, cfg.seed) << '\n';
}

void cmd_distill_dmd(const Common& c, const Inputs& in) {
    const AppConfig cfg = resolve(c);
    const fs::path out = prepare_out(c, cfg);
    const SyntheticDataset ds = dataset(cfg);
    const TeacherModel tm{*need_params(in.teacher, "teacher"), true, {}};
    const auto init = need_params(in.student, "student");
    const DmdResult r = distill_dmd(*init, tm, ds, cfg.train, cfg.stream, cfg.train.dmd_steps, cfg.seed);
    save_checkpoint(out / "student_dmd.ckpt", r.student.params);
    save_checkpoint(out / "critic.ckpt", r.critic.params);
    auto g = open_out(out / "dmd_curve.csv");
    write_curve_csv(g, r.student.curve);
    auto k = open_out(out / "critic_curve.csv");
    write_curve_csv(k, r.critic.curve);
}

void cmd_stream(const Common& c, const Inputs& in) {
    const AppConfig cfg = resolve(c);
    const fs::path out = prepare_out(c, cfg);
    const SyntheticDataset ds = dataset(cfg);
    const auto params = need_params(in.student, "student");
    const std::size_t frames = in.frames ? in.frames : cfg.bench.rollout_frames;
    const auto clips = eval_clips(ds, in.clip + 1, frames, cfg.stream.L, cfg.model.cond_dim);
    const Clip& clip = clips.back();
    const RunOutput r = run(cfg.stream, params, clip.reference, clip.reference_conds, CondStream(clip.conds), frames, cfg.seed);
    write_frames(out / "frames.bin", r.frames);
    write_conds(out / "conds.bin", clip.conds);
    auto lat = open_out(out / "latency.csv");
    write_latency_csv(lat, r.ledger);

    const MetricsRecord m = compute_metrics(r.frames, clip.reference, std::span<const double>(clip.raw).first(frames),
                                            ds.cos_axis, ds.sin_axis, clip.frames.slice_rows(0, frames), cfg.stream.B);
    auto met = open_out(out / "metrics.csv");
    met << std::setprecision(10) << "drift_total,drift_last,flicker_total,flicker_last,sync_corr,variance_deficit\n"
        << m.drift_total << ',' << m.drift_last << ',' << m.flicker_total << ',' << m.flicker_last << ',' << m.sync_corr
        << ',' << m.variance_deficit << '\n';

    LatencyReport rep = r.latency;
    if (in.realtime) {
        rep = measure_delay(cfg.stream, params, clip.reference, clip.reference_conds, clip.conds, frames, cfg.seed);
    }
    auto lr = open_out(out / "latency_report.csv");
    lr << std::setprecision(10) << "audio_lookahead_s,steady_state_per_frame_s,end_to_end_delay_s\n"
       << rep.audio_lookahead_s << ',' << rep.steady_state_per_frame_s << ',' << rep.end_to_end_delay_s << '\n';
}

void cmd_bench_grid(const Common& c, const Inputs& in) {
    const AppConfig cfg = resolve(c);
    const fs::path out = prepare_out(c, cfg);
    const SyntheticDataset ds = dataset(cfg);
    const auto params = need_params(in.student, "student");
    const auto clips = bench_clips(cfg, ds);
    const auto cells = grid_sweep(cfg.bench.L_list, cfg.bench.N_list, cfg.stream, params, clips, ds,
                                  cfg.bench.rollout_frames, cfg.bench.seeds);
    auto os = open_out(out / "grid.csv");
    write_grid_csv(os, cells);
    for (const auto& cell : cells)
        if (!cell.error.empty()) std::cerr << "cell L=" << cell.L << " N=" << cell.N << " failed: " << cell.error << '\n';
}

void cmd_ablate(const Common& c, const Inputs& in) {
    const AppConfig cfg = resolve(c);
    const fs::path out = prepare_out(c, cfg);
    const SyntheticDataset ds = dataset(cfg);
    const auto params = need_params(in.student, "student");
    const auto clips = bench_clips(cfg, ds);
    const auto rows = ablate(kAllAblations, cfg.stream, params, clips, ds, cfg.bench.rollout_frames, cfg.bench.seeds);
    auto os = open_out(out / "ablation.csv");
    write_ablation_csv(os, rows);

    // logit of the first anchor key against a window-start query, with and without re-indexing
    auto probe = open_out(out / "anchor_probe.csv");
    probe << std::setprecision(17) << "step,u_i,logit_reindex,logit_frozen\n";
    const Clip& clip = clips.front();
    const std::size_t steps = std::min<std::size_t>(cfg.bench.rollout_frames / static_cast<std::size_t>(cfg.stream.B), 500);
    const auto a = anchor_probe(cfg.stream, params, clip.reference, clip.reference_conds, CondStream(clip.conds), steps, cfg.seed);
    const auto b = anchor_probe(apply_ablation(cfg.stream, AblationMode::no_rope_reindex), params, clip.reference,
                                clip.reference_conds, CondStream(clip.conds), steps, cfg.seed);
    for (std::size_t i = 0; i < steps; ++i) probe << i << ',' << a.u[i] << ',' << a.logits[i] << ',' << b.logits[i] << '\n';
}

void cmd_baselines(const Common& c, const Inputs& in) {
    const AppConfig cfg = resolve(c);
    const fs::path out = prepare_out(c, cfg);
    const SyntheticDataset ds = dataset(cfg);
    const TeacherModel tm{*need_params(in.teacher, "teacher"), true, {}};
    const auto student = need_params(in.student, "student");
    if (in.pairs.empty()) throw ConfigError("missing --pairs file");
    const auto pairs = read_pairs(in.pairs);
    const CausalStudents cs = train_causal_students(tm, ds, pairs, cfg.train, cfg.stream, cfg.seed);
    save_checkpoint(out / "causal_ode.ckpt", cs.causal_ode);
    save_checkpoint(out / "self_forcing.ckpt", cs.self_forcing);
    const auto clips = bench_clips(cfg, ds);
    const auto rows = causal_baselines(cs, *student, cfg.stream, clips, ds, cfg.bench.rollout_frames, cfg.bench.seeds);
    auto os = open_out(out / "baselines.csv");
    write_baselines_csv(os, rows);
}

void cmd_latency_curve(const Common& c, const Inputs& in) {
    const AppConfig cfg = resolve(c);
    const fs::path out = prepare_out(c, cfg);
    const SyntheticDataset ds = dataset(cfg);
    const auto params = need_params(in.student, "student");
    const auto clips = eval_clips(ds, 1, cfg.bench.latency_steps * static_cast<std::size_t>(cfg.stream.B), max_L(cfg),
                                  cfg.model.cond_dim);
    const auto cells = latency_curve(cfg.bench.L_list, cfg.bench.N_list, cfg.stream, params, clips.front(),
                                     cfg.bench.latency_steps, cfg.seed);
    auto os = open_out(out / "latency_curve.csv");
    write_latency_curve_csv(os, cells);
    auto svg = open_out(out / "latency_curve.svg");
    write_latency_svg(svg, cells);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"rollwin: rolling-window streaming denoiser toolkit"};
    app.require_subcommand(1);
    Common common;
    Inputs in;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("-c,--config", common.config, "INI config file")->check(CLI::ExistingFile);
        sub->add_option_function<std::uint64_t>("-s,--seed", [&](const std::uint64_t& v) {
            common.seed = v;
            common.seed_set = true;
        }, "overrides [run] seed");
        sub->add_option("-o,--out", common.out, "output directory");
    };
    auto add_teacher = [&](CLI::App* sub) { sub->add_option("--teacher", in.teacher, "teacher checkpoint")->required(); };
    auto add_student = [&](CLI::App* sub) { sub->add_option("--student", in.student, "student checkpoint")->required(); };
    auto add_pairs = [&](CLI::App* sub) { sub->add_option("--pairs", in.pairs, "ODE pair file")->required(); };

    auto* gen = app.add_subcommand("gen-data", "write the synthetic clips as binary records");
    auto* teach = app.add_subcommand("train-teacher", "train the full-sequence teacher");
    auto* back = app.add_subcommand("backfill", "integrate teacher ODE trajectories into regression pairs");
    auto* ode = app.add_subcommand("distill-ode", "stage 1: one-step regression on ODE pairs");
    auto* dmd = app.add_subcommand("distill-dmd", "stage 2: distribution matching on student rollouts");
    auto* str = app.add_subcommand("stream", "stream one held-out clip");
    auto* grid = app.add_subcommand("bench-grid", "sweep (L,N) and report stability metrics");
    auto* abl = app.add_subcommand("ablate", "anchor ablations and anchor logit probe");
    auto* base = app.add_subcommand("baselines", "train and evaluate the causal one-step baselines");
    auto* lat = app.add_subcommand("latency-curve", "per-(L,N) step time, CSV and SVG");
    for (auto* s : {gen, teach, back, ode, dmd, str, grid, abl, base, lat}) add_common(s);
    add_teacher(back);
    add_teacher(ode);
    add_pairs(ode);
    add_teacher(dmd);
    add_student(dmd);
    add_student(str);
    str->add_option("--clip", in.clip, "index of the long held-out clip");
    str->add_option("--frames", in.frames, "frames to emit (default bench.rollout_frames)");
    str->add_flag("--realtime", in.realtime, "simulate real-time cond arrival for the delay figure");
    add_student(grid);
    add_student(abl);
    add_teacher(base);
    add_student(base);
    add_pairs(base);
    add_student(lat);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (*gen) cmd_gen_data(common);
        else if (*teach) cmd_train_teacher(common);
        else if (*back) cmd_backfill(common, in);
        else if (*ode) cmd_distill_ode(common, in);
        else if (*dmd) cmd_distill_dmd(common, in);
        else if (*str) cmd_stream(common, in);
        else if (*grid) cmd_bench_grid(common, in);
        else if (*abl) cmd_ablate(common, in);
        else if (*base) cmd_baselines(common, in);
        else if (*lat) cmd_latency_curve(common, in);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const TrainingDivergence& e) {
        std::cerr << "training diverged: " << e.what() << '\n';
        return 3;
    } catch (const StateCorruption& e) {
        std::cerr << "invariant violated: " << e.what() << '\n';
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
