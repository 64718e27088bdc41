#pragma once

#include <cstdint>
#include <deque>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "rollwin/error.hpp"
#include "rollwin/ops.hpp"
#include "rollwin/tensor.hpp"

namespace rw {

/// Reference-frame keys kept before rotation so they can be re-positioned every step.
struct StyleAnchor {
    Tensor2D pre_rope_keys;  // anchor_tokens x head_dim
    Tensor2D values;         // anchor_tokens x head_dim
    std::int64_t offset_d = -1;

    std::size_t tokens() const noexcept { return pre_rope_keys.rows(); }
};

/// Rotates all anchor keys to the single virtual position u_i + d.
inline Tensor2D anchor_reindex(const StyleAnchor& anchor, std::int64_t u_i, const RopeConfig& cfg) {
    Tensor2D out = anchor.pre_rope_keys;
    const std::int64_t pos = u_i + anchor.offset_d;
    for (std::size_t r = 0; r < out.rows(); ++r) rope_apply_inplace(out.row(r), pos, cfg);
    return out;
}

struct CacheEntry {
    std::int64_t block_index = 0;
    std::vector<std::int64_t> positions;  // absolute frame position per token
    Tensor2D keys;                        // post-RoPE
    Tensor2D values;
};

/// Rolling cache of recently emitted clean blocks, capped at `budget_tokens`.
/// Eviction drops whole blocks, oldest first.
class TemporalCache {
  public:
    explicit TemporalCache(std::size_t budget_tokens = 0) : budget_(budget_tokens) {}

    std::size_t budget_tokens() const noexcept { return budget_; }
    std::size_t tokens() const noexcept { return tokens_; }
    bool empty() const noexcept { return entries_.empty(); }
    const std::deque<CacheEntry>& entries() const noexcept { return entries_; }

    void push(CacheEntry e) {
        if (!entries_.empty() && e.block_index <= entries_.back().block_index) {
            throw StateCorruption("temporal_push: block " + std::to_string(e.block_index) +
                                  " is not newer than cached block " + std::to_string(entries_.back().block_index));
        }
        if (e.keys.rows() != e.positions.size() || !e.keys.same_shape(e.values)) {
            throw InvalidArgument("temporal_push: entry shape mismatch");
        }
        for (std::size_t i = 1; i < e.positions.size(); ++i) {
            if (e.positions[i] <= e.positions[i - 1]) throw StateCorruption("temporal_push: positions not increasing");
        }
        if (!entries_.empty() && !e.positions.empty() && !entries_.back().positions.empty() &&
            e.positions.front() <= entries_.back().positions.back()) {
            throw StateCorruption("temporal_push: positions overlap the cache");
        }
        tokens_ += e.keys.rows();
        entries_.push_back(std::move(e));
        while (tokens_ > budget_ && !entries_.empty()) {
            tokens_ -= entries_.front().keys.rows();
            entries_.pop_front();
        }
    }

    std::int64_t first_position() const { return entries_.front().positions.front(); }
    std::int64_t last_position() const { return entries_.back().positions.back(); }

    /// Line-oriented snapshot for golden tests.
    std::string dump() const {
        std::ostringstream os;
        os << std::setprecision(17);
        os << "temporal_cache budget=" << budget_ << " tokens=" << tokens_ << " entries=" << entries_.size() << "\n";
        for (const auto& e : entries_) {
            os << "block " << e.block_index << " positions";
            for (auto p : e.positions) os << ' ' << p;
            os << "\n";
            for (std::size_t r = 0; r < e.keys.rows(); ++r) {
                os << "  k";
                for (double v : e.keys.row(r)) os << ' ' << v;
                os << "\n  v";
                for (double v : e.values.row(r)) os << ' ' << v;
                os << "\n";
            }
        }
        return os.str();
    }

  private:
    std::size_t budget_;
    std::size_t tokens_ = 0;
    std::deque<CacheEntry> entries_;
};

inline TemporalCache temporal_push(TemporalCache cache, CacheEntry entry) {
    cache.push(std::move(entry));
    return cache;
}

enum class Segment : std::uint8_t { anchor, temporal, window };

struct AssembledContext {
    Tensor2D keys;
    Tensor2D values;
    std::vector<Segment> segment_labels;
    std::int64_t u_i = 0;

    std::size_t rows() const noexcept { return keys.rows(); }
};

struct WindowKV {
    Tensor2D keys;  // post-RoPE
    Tensor2D values;
    std::vector<std::int64_t> positions;
};

/// First non-anchor frame of [temporal cache | window].
inline std::int64_t context_start(const TemporalCache& cache, std::int64_t window_first_position) {
    return cache.empty() ? window_first_position : cache.first_position();
}

/// How the style anchor is positioned for one assembly.
struct AnchorPlacement {
    bool enabled = true;
    bool reindex = true;  // false: anchor frozen at its original absolute position d
};

inline std::int64_t anchor_position(const StyleAnchor& anchor, std::int64_t u_i, AnchorPlacement placement) {
    return placement.reindex ? u_i + anchor.offset_d : anchor.offset_d;
}

/// Concatenates keys/values as [anchor | temporal | window].
inline AssembledContext assemble(const StyleAnchor* anchor, const TemporalCache& cache, const WindowKV& window,
                                 const RopeConfig& rope, AnchorPlacement placement = {}) {
    if (window.positions.empty()) throw InvalidArgument("assemble: empty window");
    if (window.keys.rows() != window.positions.size() || !window.keys.same_shape(window.values)) {
        throw InvalidArgument("assemble: window kv shape mismatch");
    }
    if (!cache.empty() && window.positions.front() != cache.last_position() + 1) {
        throw StateCorruption("assemble: position gap between cache (ends " + std::to_string(cache.last_position()) +
                              ") and window (starts " + std::to_string(window.positions.front()) + ")");
    }
    AssembledContext ctx;
    ctx.u_i = context_start(cache, window.positions.front());

    std::vector<const Tensor2D*> keys, values;
    Tensor2D anchor_keys;
    if (anchor && placement.enabled) {
        anchor_keys = anchor_reindex(*anchor, anchor_position(*anchor, ctx.u_i, placement) - anchor->offset_d, rope);
        keys.push_back(&anchor_keys);
        values.push_back(&anchor->values);
        ctx.segment_labels.insert(ctx.segment_labels.end(), anchor->tokens(), Segment::anchor);
    }
    for (const auto& e : cache.entries()) {
        keys.push_back(&e.keys);
        values.push_back(&e.values);
        ctx.segment_labels.insert(ctx.segment_labels.end(), e.keys.rows(), Segment::temporal);
    }
    keys.push_back(&window.keys);
    values.push_back(&window.values);
    ctx.segment_labels.insert(ctx.segment_labels.end(), window.keys.rows(), Segment::window);
    ctx.keys = concat_rows(std::span<const Tensor2D* const>(keys));
    ctx.values = concat_rows(std::span<const Tensor2D* const>(values));
    return ctx;
}

}  // namespace rw
