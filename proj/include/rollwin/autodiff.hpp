#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "rollwin/ops.hpp"
#include "rollwin/tensor.hpp"

namespace rw::ad {

struct Var {
    std::size_t id = static_cast<std::size_t>(-1);
};

/// Reverse-mode tape over Tensor2D values. Values are computed eagerly with the
/// same kernels as the plain path; a backward closure is recorded only when some
/// input requires a gradient.
class Tape {
  public:
    Tape() { nodes_.reserve(256); }

    Var leaf(Tensor2D value, bool requires_grad = false) {
        return push(std::move(value), requires_grad, nullptr);
    }
    Var constant(Tensor2D value) { return leaf(std::move(value), false); }

    const Tensor2D& value(Var v) const { return nodes_.at(v.id).value; }
    bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }

    /// Gradient accumulated into v by the last backward(); zeros if none reached it.
    Tensor2D grad(Var v) const {
        const Node& n = nodes_.at(v.id);
        if (n.grad.empty() && !n.value.empty()) return Tensor2D(n.value.rows(), n.value.cols());
        return n.grad;
    }

    std::size_t size() const noexcept { return nodes_.size(); }

    /// Seeds d(out) with `upstream` and propagates to every leaf that requires a gradient.
    void backward(Var out, const Tensor2D& upstream) {
        if (!upstream.same_shape(value(out))) throw InvalidArgument("backward: upstream shape mismatch");
        for (auto& n : nodes_) n.grad = Tensor2D();
        accumulate(out.id, upstream);
        for (std::size_t i = out.id + 1; i-- > 0;) {
            Node& n = nodes_[i];
            if (n.backward && !n.grad.empty()) n.backward(*this, n.grad);
        }
    }

    void backward(Var scalar_out) {
        if (value(scalar_out).size() != 1) throw InvalidArgument("backward: output is not a scalar");
        backward(scalar_out, Tensor2D(1, 1, 1.0));
    }

    // ------------------------------------------------------------ ops

    Var matmul(Var a, Var b) {
        Tensor2D out = rw::matmul(value(a), value(b));
        return record(std::move(out), {a, b}, [a, b](Tape& t, const Tensor2D& g) {
            if (t.requires_grad(a)) t.accumulate(a.id, rw::matmul_nt(g, t.value(b)));
            if (t.requires_grad(b)) t.accumulate(b.id, rw::matmul_tn(t.value(a), g));
        });
    }

    /// a * b^T
    Var matmul_nt(Var a, Var b) {
        Tensor2D out = rw::matmul_nt(value(a), value(b));
        return record(std::move(out), {a, b}, [a, b](Tape& t, const Tensor2D& g) {
            if (t.requires_grad(a)) t.accumulate(a.id, rw::matmul(g, t.value(b)));
            if (t.requires_grad(b)) t.accumulate(b.id, rw::matmul_tn(g, t.value(a)));
        });
    }

    Var add(Var a, Var b) {
        Tensor2D out = value(a) + value(b);
        return record(std::move(out), {a, b}, [a, b](Tape& t, const Tensor2D& g) {
            if (t.requires_grad(a)) t.accumulate(a.id, g);
            if (t.requires_grad(b)) t.accumulate(b.id, g);
        });
    }

    Var sub(Var a, Var b) {
        Tensor2D out = value(a) - value(b);
        return record(std::move(out), {a, b}, [a, b](Tape& t, const Tensor2D& g) {
            if (t.requires_grad(a)) t.accumulate(a.id, g);
            if (t.requires_grad(b)) t.accumulate(b.id, g * -1.0);
        });
    }

    Var scale(Var a, double s) {
        Tensor2D out = value(a) * s;
        return record(std::move(out), {a}, [a, s](Tape& t, const Tensor2D& g) { t.accumulate(a.id, g * s); });
    }

    /// x + bias broadcast over rows (bias is 1 x cols).
    Var add_row(Var x, Var bias) {
        Tensor2D out = rw::add_row(value(x), value(bias));
        return record(std::move(out), {x, bias}, [x, bias](Tape& t, const Tensor2D& g) {
            if (t.requires_grad(x)) t.accumulate(x.id, g);
            if (t.requires_grad(bias)) {
                Tensor2D gb(1, g.cols());
                for (std::size_t i = 0; i < g.rows(); ++i)
                    for (std::size_t j = 0; j < g.cols(); ++j) gb(0, j) += g(i, j);
                t.accumulate(bias.id, gb);
            }
        });
    }

    /// Scales row i of x by col(i, 0).
    Var mul_rows(Var x, Var col) {
        const Tensor2D& xv = value(x);
        const Tensor2D& cv = value(col);
        if (cv.cols() != 1 || cv.rows() != xv.rows()) throw InvalidArgument("mul_rows: column shape");
        Tensor2D out = xv;
        for (std::size_t i = 0; i < out.rows(); ++i)
            for (double& v : out.row(i)) v *= cv(i, 0);
        return record(std::move(out), {x, col}, [x, col](Tape& t, const Tensor2D& g) {
            const Tensor2D& xv2 = t.value(x);
            const Tensor2D& cv2 = t.value(col);
            if (t.requires_grad(x)) {
                Tensor2D gx = g;
                for (std::size_t i = 0; i < gx.rows(); ++i)
                    for (double& v : gx.row(i)) v *= cv2(i, 0);
                t.accumulate(x.id, gx);
            }
            if (t.requires_grad(col)) {
                Tensor2D gc(cv2.rows(), 1);
                for (std::size_t i = 0; i < g.rows(); ++i) gc(i, 0) = rw::dot(g.row(i), xv2.row(i));
                t.accumulate(col.id, gc);
            }
        });
    }

    Var layer_norm(Var x, Var gain, Var bias) {
        auto cache = std::make_shared<LayerNormCache>();
        Tensor2D out = rw::layer_norm(value(x), value(gain), value(bias), cache.get());
        return record(std::move(out), {x, gain, bias}, [x, gain, bias, cache](Tape& t, const Tensor2D& g) {
            const Tensor2D& xhat = cache->normalized;
            const Tensor2D& gv = t.value(gain);
            const std::size_t n = xhat.cols();
            if (t.requires_grad(gain) || t.requires_grad(bias)) {
                Tensor2D gg(1, n), gbias(1, n);
                for (std::size_t i = 0; i < g.rows(); ++i)
                    for (std::size_t j = 0; j < n; ++j) {
                        gg(0, j) += g(i, j) * xhat(i, j);
                        gbias(0, j) += g(i, j);
                    }
                if (t.requires_grad(gain)) t.accumulate(gain.id, gg);
                if (t.requires_grad(bias)) t.accumulate(bias.id, gbias);
            }
            if (t.requires_grad(x)) {
                Tensor2D gx(g.rows(), n);
                const double inv_n = 1.0 / static_cast<double>(n);
                for (std::size_t i = 0; i < g.rows(); ++i) {
                    double sum_d = 0.0, sum_dx = 0.0;
                    for (std::size_t j = 0; j < n; ++j) {
                        const double d = g(i, j) * gv(0, j);
                        sum_d += d;
                        sum_dx += d * xhat(i, j);
                    }
                    for (std::size_t j = 0; j < n; ++j) {
                        const double d = g(i, j) * gv(0, j);
                        gx(i, j) = cache->inv_std[i] * (d - inv_n * sum_d - xhat(i, j) * inv_n * sum_dx);
                    }
                }
                t.accumulate(x.id, gx);
            }
        });
    }

    Var gelu(Var x) {
        Tensor2D out = value(x);
        for (double& v : out.flat()) v = rw::gelu(v);
        return record(std::move(out), {x}, [x](Tape& t, const Tensor2D& g) {
            Tensor2D gx = g;
            const auto xv = t.value(x).flat();
            auto gf = gx.flat();
            for (std::size_t i = 0; i < gf.size(); ++i) gf[i] *= rw::gelu_grad(xv[i]);
            t.accumulate(x.id, gx);
        });
    }

    /// Per-row rotary embedding; the adjoint of a rotation is the inverse rotation.
    Var rope(Var x, std::vector<std::int64_t> positions, const RopeConfig& cfg) {
        Tensor2D out = rw::rope_rows(value(x), positions, cfg);
        return record(std::move(out), {x}, [x, positions = std::move(positions), cfg](Tape& t, const Tensor2D& g) {
            std::vector<std::int64_t> neg(positions.size());
            for (std::size_t i = 0; i < positions.size(); ++i) neg[i] = -positions[i];
            t.accumulate(x.id, rw::rope_rows(g, neg, cfg));
        });
    }

    Var concat_rows(const std::vector<Var>& parts) {
        std::vector<const Tensor2D*> ptrs;
        std::vector<std::size_t> offsets;
        std::size_t at = 0;
        for (Var p : parts) {
            ptrs.push_back(&value(p));
            offsets.push_back(at);
            at += value(p).rows();
        }
        Tensor2D out = rw::concat_rows(std::span<const Tensor2D* const>(ptrs));
        return record(std::move(out), parts, [parts, offsets](Tape& t, const Tensor2D& g) {
            for (std::size_t k = 0; k < parts.size(); ++k) {
                if (!t.requires_grad(parts[k]) || t.value(parts[k]).rows() == 0) continue;
                t.accumulate(parts[k].id, g.slice_rows(offsets[k], t.value(parts[k]).rows()));
            }
        });
    }

    Var slice_rows(Var a, std::size_t begin, std::size_t count) {
        Tensor2D out = value(a).slice_rows(begin, count);
        return record(std::move(out), {a}, [a, begin](Tape& t, const Tensor2D& g) {
            Tensor2D ga(t.value(a).rows(), t.value(a).cols());
            ga.set_rows(begin, g);
            t.accumulate(a.id, ga);
        });
    }

    Var softmax_rows(Var a) {
        Tensor2D out = rw::softmax_rows(value(a));
        const std::size_t self = nodes_.size();
        return record(std::move(out), {a}, [a, self](Tape& t, const Tensor2D& g) {
            const Tensor2D& p = t.nodes_[self].value;
            Tensor2D ga(p.rows(), p.cols());
            for (std::size_t i = 0; i < p.rows(); ++i) {
                const double s = rw::dot(g.row(i), p.row(i));
                for (std::size_t j = 0; j < p.cols(); ++j) ga(i, j) = p(i, j) * (g(i, j) - s);
            }
            t.accumulate(a.id, ga);
        });
    }

    Var attention(Var q, Var k, Var v) {
        const double inv = 1.0 / std::sqrt(static_cast<double>(value(q).cols()));
        return matmul(softmax_rows(scale(matmul_nt(q, k), inv)), v);
    }

    /// sum of squares, as a 1 x 1 node.
    Var sum_squares(Var a) {
        Tensor2D out(1, 1, rw::sum_squares(value(a)));
        return record(std::move(out), {a}, [a](Tape& t, const Tensor2D& g) {
            t.accumulate(a.id, t.value(a) * (2.0 * g(0, 0)));
        });
    }

  private:
    friend class TapeTestAccess;

    struct Node {
        Tensor2D value;
        Tensor2D grad;
        std::function<void(Tape&, const Tensor2D&)> backward;
        bool requires_grad = false;
    };

    Var push(Tensor2D value, bool requires_grad, std::function<void(Tape&, const Tensor2D&)> fn) {
        nodes_.push_back(Node{std::move(value), Tensor2D(), std::move(fn), requires_grad});
        return Var{nodes_.size() - 1};
    }

    Var record(Tensor2D value, std::initializer_list<Var> inputs, std::function<void(Tape&, const Tensor2D&)> fn) {
        return record(std::move(value), std::vector<Var>(inputs), std::move(fn));
    }

    Var record(Tensor2D value, const std::vector<Var>& inputs, std::function<void(Tape&, const Tensor2D&)> fn) {
        bool rg = false;
        for (Var in : inputs) rg = rg || requires_grad(in);
        return push(std::move(value), rg, rg ? std::move(fn) : nullptr);
    }

    void accumulate(std::size_t id, const Tensor2D& g) {
        Node& n = nodes_[id];
        if (n.grad.empty()) {
            n.grad = g;
        } else {
            n.grad += g;
        }
    }

    std::vector<Node> nodes_;
};

}  // namespace rw::ad
