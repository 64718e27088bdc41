#pragma once

#include <cstdint>
#include <numbers>
#include <vector>

#include "rollwin/denoiser.hpp"
#include "rollwin/error.hpp"
#include "rollwin/schedule.hpp"

namespace rw {

/// Synthetic conditioned-sequence generator.
struct DataParams {
    std::size_t n_clips = 28;
    std::size_t heldout_clips = 4;    // the last clips are never trained on
    std::size_t frames_per_clip = 160;
    double base_freq = std::numbers::pi / 2.0;  // radians per frame; one turn per 4-frame block
    double cond_gain = 0.5;
    double ar_coef = 0.9;             // raw drive r_{j+1} = a r_j + sqrt(1-a^2) xi
    double amplitude = 1.0;           // radius of the phase circle
    double identity_scale = 1.0;
    std::size_t identity_dims = 4;
    double drift_amplitude = 0.1;     // slow identity drift channel
    double drift_period = 400.0;      // frames
    double noise_floor = 0.03;
    std::size_t encoder_radius = 2;
    std::uint64_t encoder_seed = 0x5eedc0deULL;

    std::size_t training_clips() const { return n_clips - heldout_clips; }

    void validate() const {
        if (n_clips == 0 || frames_per_clip == 0) throw ConfigError("data: sizes must be positive");
        if (heldout_clips >= n_clips) throw ConfigError("data: heldout_clips must leave training clips");
        if (!(ar_coef >= 0.0 && ar_coef < 1.0)) throw ConfigError("data: ar_coef must be in [0,1)");
        if (noise_floor < 0.0) throw ConfigError("data: noise_floor must be >= 0");
    }
};

/// A window layout the student is trained on, with sampling weight.
struct WindowShape {
    int L = 4;
    int N = 1;
    double weight = 1.0;
};

struct TrainConfig {
    // teacher
    int teacher_steps = 2000;
    double teacher_lr = 0.02;
    int batch = 4;
    // ODE backfill
    std::size_t n_pairs = 2000;
    int n_ode_steps = 8;
    int backfill_levels = 8;         // pairs recorded at t = k / levels, k = 1..levels
    int crop_blocks = 10;            // frames per pair = crop_blocks * B
    double heldout_pair_fraction = 0.1;
    // stage 1
    int ode_steps = 1200;
    double ode_lr = 0.02;
    std::vector<WindowShape> shapes = {{4, 1, 6.0}, {1, 1, 1.0}, {2, 1, 1.0}, {8, 1, 1.0}, {1, 2, 0.5},
                                       {1, 4, 0.5}, {1, 8, 0.5}, {2, 2, 0.5}, {2, 4, 0.5}, {4, 2, 0.5}};
    double cold_start_fraction = 0.15;
    // stage 2
    int dmd_steps = 600;
    double dmd_lr = 0.002;
    bool dmd_cosine_decay = true;    // generator step size follows a half cosine to zero
    double critic_lr = 0.02;
    int critic_steps_per_generator = 5;
    std::size_t critic_buffer = 64;  // recent student windows the critic regresses on
    double dmd_weight = 1.0;         // w(t), constant
    int backprop_blocks = 1;         // leftmost blocks that receive the generator gradient
    int rollout_extra_steps = 8;     // rollout length beyond cold start, drawn uniformly
    double dmd_t_lo = 0.02;
    double dmd_t_hi = 0.98;
    // optimizer
    double momentum = 0.9;
    double clip_norm = 1.0;

    void validate() const {
        if (teacher_steps < 0 || ode_steps < 0 || dmd_steps < 0) throw ConfigError("train: negative step budget");
        if (batch < 1) throw ConfigError("train: batch must be >= 1");
        if (n_ode_steps < 1 || backfill_levels < 1) throw ConfigError("train: ODE settings must be >= 1");
        if (critic_steps_per_generator < 0) throw ConfigError("train: critic ratio must be >= 0");
        if (critic_buffer == 0) throw ConfigError("train: critic_buffer must be >= 1");
        if (backprop_blocks < 1) throw ConfigError("train: backprop_blocks must be >= 1");
        if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("train: momentum must be in [0,1)");
        if (!(dmd_t_lo > 0.0 && dmd_t_hi <= 1.0 && dmd_t_lo < dmd_t_hi)) throw ConfigError("train: bad DMD t range");
        if (shapes.empty()) throw ConfigError("train: no window shapes");
        for (const auto& s : shapes) {
            if (s.L < 1 || s.N < 1 || s.weight < 0.0) throw ConfigError("train: bad window shape");
            if (backfill_levels % (s.L * s.N)) {
                throw ConfigError("train: window shape L*N must divide backfill_levels");
            }
            if (s.L + 2 > crop_blocks) throw ConfigError("train: crop_blocks too small for window shape");
        }
    }
};

struct BenchConfig {
    std::vector<int> L_list = {1, 2, 4, 8};
    std::vector<int> N_list = {1, 2, 4, 8};
    std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
    std::size_t rollout_frames = 1500;
    std::size_t latency_steps = 60;
    std::size_t eval_blocks = 12;      // emitted blocks per held-out clip for distribution checks
    int teacher_sample_steps = 16;
    std::size_t teacher_window_blocks = 4;  // blocks the teacher samples jointly
    std::size_t eval_sample_seeds = 8;      // sampling seeds 11, 12, ... for distribution checks
    std::size_t eval_clips = 4;             // long held-out clips per rollout benchmark

    void validate() const {
        if (L_list.empty() || N_list.empty() || seeds.empty()) throw ConfigError("bench: empty sweep list");
        for (int v : L_list)
            if (v < 1) throw ConfigError("bench: L values must be >= 1");
        for (int v : N_list)
            if (v < 1) throw ConfigError("bench: N values must be >= 1");
        if (eval_blocks < 1 || teacher_window_blocks < 1 || eval_sample_seeds < 2 || eval_clips < 1)
            throw ConfigError("bench: evaluation sizes too small");
        if (teacher_sample_steps < 1) throw ConfigError("bench: teacher_sample_steps must be >= 1");
    }
};

struct AppConfig {
    StreamConfig stream;
    ModelDims model;
    DataParams data;
    TrainConfig train;
    BenchConfig bench;
    std::uint64_t seed = 1;

    void validate() const {
        stream.validate();
        model.validate();
        data.validate();
        train.validate();
        bench.validate();
        if (stream.latent_dim != model.latent_dim) throw ConfigError("stream.latent_dim must equal model.latent_dim");
        if (data.identity_dims + 3 > model.latent_dim) throw ConfigError("data.identity_dims too large for latent_dim");
    }
};

}  // namespace rw
