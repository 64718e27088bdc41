#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include "rollwin/denoiser.hpp"
#include "rollwin/error.hpp"
#include "rollwin/tensor.hpp"

namespace rw::io {

// Little-endian, byte-wise, independent of host layout.

class Writer {
  public:
    explicit Writer(const std::filesystem::path& path) : path_(path), os_(path, std::ios::binary | std::ios::trunc) {
        if (!os_) throw IoError("cannot open " + path.string() + " for writing");
    }

    void bytes(std::string_view s) { os_.write(s.data(), static_cast<std::streamsize>(s.size())); }

    void u32(std::uint32_t v) { put_le(v, 4); }
    void u64(std::uint64_t v) { put_le(v, 8); }
    void i64(std::int64_t v) { put_le(static_cast<std::uint64_t>(v), 8); }
    void f64(double v) { put_le(std::bit_cast<std::uint64_t>(v), 8); }
    void f64s(std::span<const double> v) {
        for (double x : v) f64(x);
    }
    void str(const std::string& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        bytes(s);
    }

    void close() {
        os_.flush();
        if (!os_) throw IoError("write failed: " + path_.string());
        os_.close();
    }

  private:
    void put_le(std::uint64_t v, int n) {
        std::array<char, 8> b{};
        for (int i = 0; i < n; ++i) b[static_cast<std::size_t>(i)] = static_cast<char>((v >> (8 * i)) & 0xff);
        os_.write(b.data(), n);
    }

    std::filesystem::path path_;
    std::ofstream os_;
};

class Reader {
  public:
    explicit Reader(const std::filesystem::path& path) : path_(path), is_(path, std::ios::binary) {
        if (!is_) throw IoError("cannot open " + path.string());
    }

    void expect_magic(std::string_view magic) {
        std::string got(magic.size(), '\0');
        is_.read(got.data(), static_cast<std::streamsize>(got.size()));
        if (!is_ || got != magic) throw IoError(path_.string() + ": bad magic, expected " + std::string(magic));
    }

    std::uint32_t u32() { return static_cast<std::uint32_t>(get_le(4)); }
    std::uint64_t u64() { return get_le(8); }
    std::int64_t i64() { return static_cast<std::int64_t>(get_le(8)); }
    double f64() { return std::bit_cast<double>(get_le(8)); }
    void f64s(std::span<double> out) {
        for (double& x : out) x = f64();
    }
    std::string str() {
        const std::uint32_t n = u32();
        if (n > (1u << 20)) throw IoError(path_.string() + ": string too long");
        std::string s(n, '\0');
        is_.read(s.data(), n);
        if (!is_) throw IoError(path_.string() + ": truncated");
        return s;
    }

    void expect_end() {
        if (is_.peek() != std::char_traits<char>::eof()) throw IoError(path_.string() + ": trailing bytes");
    }

  private:
    std::uint64_t get_le(int n) {
        std::array<unsigned char, 8> b{};
        is_.read(reinterpret_cast<char*>(b.data()), n);
        if (!is_) throw IoError(path_.string() + ": truncated");
        std::uint64_t v = 0;
        for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(b[static_cast<std::size_t>(i)]) << (8 * i);
        return v;
    }

    std::filesystem::path path_;
    std::ifstream is_;
};

inline constexpr std::string_view kFramesMagic = "RWFRM1";
inline constexpr std::string_view kCondMagic = "RWCOND1";
inline constexpr std::string_view kPairsMagic = "RWODE1";
inline constexpr std::string_view kCheckpointMagic = "RWCKPT1";
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {
inline void write_matrix_record(const std::filesystem::path& path, std::string_view magic, const Tensor2D& m) {
    Writer w(path);
    w.bytes(magic);
    w.u32(static_cast<std::uint32_t>(m.cols()));
    w.u64(m.rows());
    w.f64s(m.flat());
    w.close();
}

inline Tensor2D read_matrix_record(const std::filesystem::path& path, std::string_view magic) {
    Reader r(path);
    r.expect_magic(magic);
    const std::uint32_t width = r.u32();
    const std::uint64_t count = r.u64();
    if (width == 0 || count > (1ULL << 32)) throw IoError(path.string() + ": implausible header");
    Tensor2D m(count, width);
    r.f64s(m.flat());
    r.expect_end();
    return m;
}
}  // namespace detail

/// Frame-major latent frames.
inline void write_frames(const std::filesystem::path& path, const Tensor2D& frames) {
    detail::write_matrix_record(path, kFramesMagic, frames);
}
inline Tensor2D read_frames(const std::filesystem::path& path) { return detail::read_matrix_record(path, kFramesMagic); }

/// Frame-major conditioning features.
inline void write_conds(const std::filesystem::path& path, const Tensor2D& conds) {
    detail::write_matrix_record(path, kCondMagic, conds);
}
inline Tensor2D read_conds(const std::filesystem::path& path) { return detail::read_matrix_record(path, kCondMagic); }

// ---------------------------------------------------------------- checkpoints

inline void save_checkpoint(const std::filesystem::path& path, const DenoiserParams& p) {
    struct Section {
        std::string name;
        const Tensor2D* t;
    };
    std::vector<Section> sections;
    p.for_each([&](const std::string& name, const Tensor2D& t) { sections.push_back({name, &t}); });

    Writer w(path);
    w.bytes(kCheckpointMagic);
    w.u32(kCheckpointVersion);
    w.u32(static_cast<std::uint32_t>(p.dims.n_layers));
    w.u64(p.dims.latent_dim);
    w.u64(p.dims.head_dim);
    w.u64(p.dims.ffn_dim);
    w.u64(p.dims.time_dim);
    w.u64(p.dims.cond_dim);
    w.f64(p.dims.rope_base);
    w.u64(p.dims.injection_mask);
    w.u64(p.param_seed);
    w.u32(static_cast<std::uint32_t>(sections.size()));
    std::uint64_t offset = 0;
    for (const auto& s : sections) {
        w.str(s.name);
        w.u64(s.t->rows());
        w.u64(s.t->cols());
        w.u64(offset);
        offset += s.t->size() * sizeof(double);
    }
    for (const auto& s : sections) w.f64s(s.t->flat());
    w.close();
}

inline DenoiserParams load_checkpoint(const std::filesystem::path& path) {
    Reader r(path);
    r.expect_magic(kCheckpointMagic);
    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion) throw IoError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
    ModelDims dims;
    dims.n_layers = static_cast<int>(r.u32());
    dims.latent_dim = r.u64();
    dims.head_dim = r.u64();
    dims.ffn_dim = r.u64();
    dims.time_dim = r.u64();
    dims.cond_dim = r.u64();
    dims.rope_base = r.f64();
    dims.injection_mask = r.u64();
    DenoiserParams p = DenoiserParams::zeros(dims);
    p.param_seed = r.u64();

    const std::uint32_t n_sections = r.u32();
    std::vector<std::pair<std::string, Tensor2D*>> expected;
    p.for_each([&](const std::string& name, Tensor2D& t) { expected.emplace_back(name, &t); });
    if (n_sections != expected.size()) throw IoError(path.string() + ": section count mismatch");
    std::uint64_t offset = 0;
    for (const auto& [name, t] : expected) {
        const std::string got = r.str();
        const std::uint64_t rows = r.u64(), cols = r.u64(), off = r.u64();
        if (got != name || rows != t->rows() || cols != t->cols() || off != offset) {
            throw IoError(path.string() + ": section table mismatch at " + got);
        }
        offset += t->size() * sizeof(double);
    }
    for (const auto& e : expected) r.f64s(e.second->flat());
    r.expect_end();
    return p;
}

}  // namespace rw::io
