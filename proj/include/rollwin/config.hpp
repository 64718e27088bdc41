#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <set>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include <boost/algorithm/string.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "rollwin/error.hpp"
#include "rollwin/settings.hpp"

namespace rw {

namespace cfgio {

// shortest text that reads back to the same double
inline std::string fmt(double v) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

inline double parse_double(const std::string& key, const std::string& s) {
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(s, &used);
    } catch (const std::exception&) {
        throw ConfigError(key + ": not a number: '" + s + "'");
    }
    if (used != s.size()) throw ConfigError(key + ": trailing characters in '" + s + "'");
    return v;
}

template <class I>
I parse_int(const std::string& key, const std::string& s) {
    std::size_t used = 0;
    long long v = 0;
    try {
        if constexpr (std::is_unsigned_v<I>) {
            if (!s.empty() && s[0] == '-') throw ConfigError(key + ": must be non-negative");
            v = static_cast<long long>(std::stoull(s, &used, 0));
        } else {
            v = std::stoll(s, &used, 10);
        }
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception&) {
        throw ConfigError(key + ": not an integer: '" + s + "'");
    }
    if (used != s.size()) throw ConfigError(key + ": trailing characters in '" + s + "'");
    return static_cast<I>(v);
}

inline bool parse_bool(const std::string& key, const std::string& s) {
    const std::string l = boost::algorithm::to_lower_copy(s);
    if (l == "true" || l == "1" || l == "yes" || l == "on") return true;
    if (l == "false" || l == "0" || l == "no" || l == "off") return false;
    throw ConfigError(key + ": not a boolean: '" + s + "'");
}

inline std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> parts;
    if (boost::algorithm::trim_copy(s).empty()) return parts;
    boost::algorithm::split(parts, s, boost::algorithm::is_any_of(","));
    for (auto& p : parts) boost::algorithm::trim(p);
    return parts;
}

/// One config key bound to a field.
struct Binding {
    std::string section, key;
    std::function<std::string()> get;
    std::function<void(const std::string&)> set;
};

template <class T>
Binding bind_key(const std::string& section, const std::string& key, T& field) {
    const std::string name = section + "." + key;
    Binding b{section, key, {}, {}};
    if constexpr (std::is_same_v<T, bool>) {
        b.get = [&field] { return std::string(field ? "true" : "false"); };
        b.set = [&field, name](const std::string& s) { field = parse_bool(name, s); };
    } else if constexpr (std::is_floating_point_v<T>) {
        b.get = [&field] { return fmt(field); };
        b.set = [&field, name](const std::string& s) { field = parse_double(name, s); };
    } else if constexpr (std::is_integral_v<T>) {
        b.get = [&field] { return std::to_string(field); };
        b.set = [&field, name](const std::string& s) { field = parse_int<T>(name, s); };
    } else if constexpr (std::is_same_v<T, std::vector<WindowShape>>) {
        // LxN:weight, comma separated
        b.get = [&field] {
            std::string out;
            for (const auto& w : field) {
                if (!out.empty()) out += ",";
                out += std::to_string(w.L) + "x" + std::to_string(w.N) + ":" + fmt(w.weight);
            }
            return out;
        };
        b.set = [&field, name](const std::string& s) {
            std::vector<WindowShape> v;
            for (const auto& p : split_list(s)) {
                const auto x = p.find('x');
                const auto c = p.find(':');
                if (x == std::string::npos) throw ConfigError(name + ": expected LxN[:weight], got '" + p + "'");
                WindowShape w;
                w.L = parse_int<int>(name, p.substr(0, x));
                w.N = parse_int<int>(name, p.substr(x + 1, c == std::string::npos ? std::string::npos : c - x - 1));
                w.weight = c == std::string::npos ? 1.0 : parse_double(name, p.substr(c + 1));
                v.push_back(w);
            }
            field = std::move(v);
        };
    } else {
        using E = typename T::value_type;
        b.get = [&field] {
            std::string out;
            for (const auto& e : field) {
                if (!out.empty()) out += ",";
                out += std::to_string(e);
            }
            return out;
        };
        b.set = [&field, name](const std::string& s) {
            T v;
            for (const auto& p : split_list(s)) v.push_back(parse_int<E>(name, p));
            field = std::move(v);
        };
    }
    return b;
}

inline std::vector<Binding> bindings(AppConfig& c) {
    auto& s = c.stream;
    auto& m = c.model;
    auto& d = c.data;
    auto& t = c.train;
    auto& b = c.bench;
    return {
        bind_key("stream", "L", s.L),
        bind_key("stream", "N", s.N),
        bind_key("stream", "B", s.B),
        bind_key("stream", "latent_dim", s.latent_dim),
        bind_key("stream", "fps", s.fps),
        bind_key("stream", "t_min", s.t_min),
        bind_key("stream", "t_max", s.t_max),
        bind_key("stream", "shift_gamma", s.shift_gamma),
        bind_key("stream", "cache_budget_tokens", s.cache_budget_tokens),
        bind_key("stream", "anchor_offset_d", s.anchor_offset_d),
        bind_key("stream", "style_anchor", s.style_anchor),
        bind_key("stream", "reindex_anchor", s.reindex_anchor),
        bind_key("stream", "anchor_zero_pad", s.anchor_zero_pad),
        bind_key("stream", "fresh_noise_renoise", s.fresh_noise_renoise),

        bind_key("model", "n_layers", m.n_layers),
        bind_key("model", "latent_dim", m.latent_dim),
        bind_key("model", "head_dim", m.head_dim),
        bind_key("model", "ffn_dim", m.ffn_dim),
        bind_key("model", "time_dim", m.time_dim),
        bind_key("model", "cond_dim", m.cond_dim),
        bind_key("model", "rope_base", m.rope_base),
        bind_key("model", "injection_mask", m.injection_mask),

        bind_key("data", "n_clips", d.n_clips),
        bind_key("data", "heldout_clips", d.heldout_clips),
        bind_key("data", "frames_per_clip", d.frames_per_clip),
        bind_key("data", "base_freq", d.base_freq),
        bind_key("data", "cond_gain", d.cond_gain),
        bind_key("data", "ar_coef", d.ar_coef),
        bind_key("data", "amplitude", d.amplitude),
        bind_key("data", "identity_scale", d.identity_scale),
        bind_key("data", "identity_dims", d.identity_dims),
        bind_key("data", "drift_amplitude", d.drift_amplitude),
        bind_key("data", "drift_period", d.drift_period),
        bind_key("data", "noise_floor", d.noise_floor),
        bind_key("data", "encoder_radius", d.encoder_radius),
        bind_key("data", "encoder_seed", d.encoder_seed),

        bind_key("train", "teacher_steps", t.teacher_steps),
        bind_key("train", "teacher_lr", t.teacher_lr),
        bind_key("train", "batch", t.batch),
        bind_key("train", "n_pairs", t.n_pairs),
        bind_key("train", "n_ode_steps", t.n_ode_steps),
        bind_key("train", "backfill_levels", t.backfill_levels),
        bind_key("train", "crop_blocks", t.crop_blocks),
        bind_key("train", "heldout_pair_fraction", t.heldout_pair_fraction),
        bind_key("train", "ode_steps", t.ode_steps),
        bind_key("train", "ode_lr", t.ode_lr),
        bind_key("train", "shapes", t.shapes),
        bind_key("train", "cold_start_fraction", t.cold_start_fraction),
        bind_key("train", "dmd_steps", t.dmd_steps),
        bind_key("train", "dmd_lr", t.dmd_lr),
        bind_key("train", "dmd_cosine_decay", t.dmd_cosine_decay),
        bind_key("train", "critic_lr", t.critic_lr),
        bind_key("train", "critic_steps_per_generator", t.critic_steps_per_generator),
        bind_key("train", "critic_buffer", t.critic_buffer),
        bind_key("train", "dmd_weight", t.dmd_weight),
        bind_key("train", "backprop_blocks", t.backprop_blocks),
        bind_key("train", "rollout_extra_steps", t.rollout_extra_steps),
        bind_key("train", "dmd_t_lo", t.dmd_t_lo),
        bind_key("train", "dmd_t_hi", t.dmd_t_hi),
        bind_key("train", "momentum", t.momentum),
        bind_key("train", "clip_norm", t.clip_norm),

        bind_key("bench", "L_list", b.L_list),
        bind_key("bench", "N_list", b.N_list),
        bind_key("bench", "seeds", b.seeds),
        bind_key("bench", "rollout_frames", b.rollout_frames),
        bind_key("bench", "latency_steps", b.latency_steps),
        bind_key("bench", "eval_blocks", b.eval_blocks),
        bind_key("bench", "teacher_sample_steps", b.teacher_sample_steps),
        bind_key("bench", "teacher_window_blocks", b.teacher_window_blocks),
        bind_key("bench", "eval_sample_seeds", b.eval_sample_seeds),
        bind_key("bench", "eval_clips", b.eval_clips),

        bind_key("run", "seed", c.seed),
    };
}

}  // namespace cfgio

/// Applies every key of an INI stream on top of `base`. Unknown sections or keys are errors.
inline AppConfig parse_config(std::istream& is, AppConfig base = {}) {
    namespace pt = boost::property_tree;
    pt::ptree tree;
    try {
        pt::read_ini(is, tree);
    } catch (const pt::ini_parser_error& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    auto binds = cfgio::bindings(base);
    std::set<std::string> known;
    for (const auto& b : binds) known.insert(b.section + "." + b.key);
    for (const auto& [sec, node] : tree) {
        if (node.empty() && !node.data().empty()) throw ConfigError("config: key '" + sec + "' outside any section");
        for (const auto& [key, leaf] : node) {
            if (!known.count(sec + "." + key)) throw ConfigError("config: unknown key '" + sec + "." + key + "'");
        }
    }
    for (auto& b : binds) {
        if (auto v = tree.get_optional<std::string>(pt::ptree::path_type(b.section + "." + b.key, '.')))
            b.set(boost::algorithm::trim_copy(*v));
    }
    base.validate();
    return base;
}

inline AppConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open " + path.string());
    return parse_config(in);
}

/// Every key, in a fixed order; reading the output back yields the same config.
inline void write_config(std::ostream& os, const AppConfig& c) {
    AppConfig copy = c;
    std::string section;
    for (const auto& b : cfgio::bindings(copy)) {
        if (b.section != section) {
            if (!section.empty()) os << '\n';
            section = b.section;
            os << '[' << section << "]\n";
        }
        os << b.key << " = " << b.get() << '\n';
    }
}

inline void save_config(const std::filesystem::path& path, const AppConfig& c) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    write_config(out, c);
}

}  // namespace rw
