#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "rollwin/error.hpp"

namespace rw {

/// Dense row-major matrix of doubles. Rows are tokens, columns are features.
class Tensor2D {
  public:
    Tensor2D() = default;
    Tensor2D(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    Tensor2D(std::size_t rows, std::size_t cols, std::vector<double> data)
        : rows_(rows), cols_(cols), data_(std::move(data)) {
        if (data_.size() != rows_ * cols_) {
            throw InvalidArgument("Tensor2D: data length " + std::to_string(data_.size()) +
                                  " != " + std::to_string(rows_) + "x" + std::to_string(cols_));
        }
    }
    Tensor2D(std::initializer_list<std::initializer_list<double>> init) {
        rows_ = init.size();
        cols_ = rows_ ? init.begin()->size() : 0;
        data_.reserve(rows_ * cols_);
        for (const auto& r : init) {
            if (r.size() != cols_) throw InvalidArgument("Tensor2D: ragged initializer");
            data_.insert(data_.end(), r.begin(), r.end());
        }
    }

    static Tensor2D row_vector(std::span<const double> v) {
        return Tensor2D(1, v.size(), std::vector<double>(v.begin(), v.end()));
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) noexcept {
        assert(r < rows_ && c < cols_);
        return data_[r * cols_ + c];
    }
    double operator()(std::size_t r, std::size_t c) const noexcept {
        assert(r < rows_ && c < cols_);
        return data_[r * cols_ + c];
    }

    std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const noexcept {
        return {data_.data() + r * cols_, cols_};
    }

    std::span<double> flat() noexcept { return data_; }
    std::span<const double> flat() const noexcept { return data_; }
    const std::vector<double>& data() const noexcept { return data_; }

    bool same_shape(const Tensor2D& o) const noexcept { return rows_ == o.rows_ && cols_ == o.cols_; }

    bool all_finite() const noexcept {
        return std::all_of(data_.begin(), data_.end(), [](double x) { return std::isfinite(x); });
    }

    Tensor2D slice_rows(std::size_t begin, std::size_t count) const {
        if (begin + count > rows_) throw InvalidArgument("slice_rows: out of range");
        return Tensor2D(count, cols_,
                        std::vector<double>(data_.begin() + static_cast<std::ptrdiff_t>(begin * cols_),
                                            data_.begin() + static_cast<std::ptrdiff_t>((begin + count) * cols_)));
    }

    void set_rows(std::size_t begin, const Tensor2D& src) {
        if (src.cols_ != cols_ || begin + src.rows_ > rows_) throw InvalidArgument("set_rows: shape mismatch");
        std::copy(src.data_.begin(), src.data_.end(), data_.begin() + static_cast<std::ptrdiff_t>(begin * cols_));
    }

    Tensor2D& operator+=(const Tensor2D& o) {
        check_same(o, "+=");
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
        return *this;
    }
    Tensor2D& operator-=(const Tensor2D& o) {
        check_same(o, "-=");
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
        return *this;
    }
    Tensor2D& operator*=(double s) noexcept {
        for (double& x : data_) x *= s;
        return *this;
    }

    friend bool operator==(const Tensor2D&, const Tensor2D&) = default;

  private:
    void check_same(const Tensor2D& o, const char* op) const {
        if (!same_shape(o)) {
            throw InvalidArgument(std::string("Tensor2D ") + op + ": shape mismatch " + std::to_string(rows_) + "x" +
                                  std::to_string(cols_) + " vs " + std::to_string(o.rows_) + "x" +
                                  std::to_string(o.cols_));
        }
    }

    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

inline Tensor2D operator+(Tensor2D a, const Tensor2D& b) { return a += b; }
inline Tensor2D operator-(Tensor2D a, const Tensor2D& b) { return a -= b; }
inline Tensor2D operator*(Tensor2D a, double s) { return a *= s; }
inline Tensor2D operator*(double s, Tensor2D a) { return a *= s; }

inline Tensor2D concat_rows(std::span<const Tensor2D* const> parts) {
    std::size_t rows = 0;
    std::size_t cols = 0;
    bool have_cols = false;
    for (const Tensor2D* p : parts) {
        if (p->rows() == 0) continue;
        if (have_cols && p->cols() != cols) throw InvalidArgument("concat_rows: column mismatch");
        cols = p->cols();
        have_cols = true;
        rows += p->rows();
    }
    Tensor2D out(rows, cols);
    std::size_t at = 0;
    for (const Tensor2D* p : parts) {
        if (p->rows() == 0) continue;
        out.set_rows(at, *p);
        at += p->rows();
    }
    return out;
}

inline Tensor2D concat_rows(std::initializer_list<const Tensor2D*> parts) {
    return concat_rows(std::span<const Tensor2D* const>(parts.begin(), parts.size()));
}

inline double dot(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw InvalidArgument("dot: length mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

inline double sum_squares(const Tensor2D& a) { return dot(a.flat(), a.flat()); }

inline double max_abs_diff(const Tensor2D& a, const Tensor2D& b) {
    if (!a.same_shape(b)) throw InvalidArgument("max_abs_diff: shape mismatch");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.flat()[i] - b.flat()[i]));
    return m;
}

}  // namespace rw
