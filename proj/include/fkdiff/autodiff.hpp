#pragma once

/**
 * Forward-mode automatic differentiation.
 *
 * Dual<N> carries a primal value and N tangent lanes. Seeding lane i of input
 * x_j with 1 makes lane i of every result hold the derivative with respect to
 * x_j, so a full Jacobian of an m-input map costs ceil(m / N) evaluations.
 *
 * Generic code reaches the elementary functions through fkdiff::math, which
 * overloads them for plain floating point and for Dual alike.
 */

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "fkdiff/error.hpp"

namespace fkdiff {

template <std::size_t N, class T = double>
struct Dual {
    T value{};
    std::array<T, N> grad{};

    constexpr Dual() = default;
    constexpr Dual(T v) : value(v) {}  // NOLINT: constants lift implicitly
    constexpr Dual(T v, const std::array<T, N>& g) : value(v), grad(g) {}

    friend constexpr Dual operator+(const Dual& a, const Dual& b) {
        Dual r(a.value + b.value);
        for (std::size_t i = 0; i < N; ++i) r.grad[i] = a.grad[i] + b.grad[i];
        return r;
    }
    friend constexpr Dual operator+(const Dual& a, T b) { return Dual(a.value + b, a.grad); }
    friend constexpr Dual operator+(T a, const Dual& b) { return Dual(a + b.value, b.grad); }

    friend constexpr Dual operator-(const Dual& a) {
        Dual r(-a.value);
        for (std::size_t i = 0; i < N; ++i) r.grad[i] = -a.grad[i];
        return r;
    }
    friend constexpr Dual operator-(const Dual& a, const Dual& b) {
        Dual r(a.value - b.value);
        for (std::size_t i = 0; i < N; ++i) r.grad[i] = a.grad[i] - b.grad[i];
        return r;
    }
    friend constexpr Dual operator-(const Dual& a, T b) { return Dual(a.value - b, a.grad); }
    friend constexpr Dual operator-(T a, const Dual& b) {
        Dual r(a - b.value);
        for (std::size_t i = 0; i < N; ++i) r.grad[i] = -b.grad[i];
        return r;
    }

    friend constexpr Dual operator*(const Dual& a, const Dual& b) {
        Dual r(a.value * b.value);
        for (std::size_t i = 0; i < N; ++i) r.grad[i] = a.grad[i] * b.value + a.value * b.grad[i];
        return r;
    }
    friend constexpr Dual operator*(const Dual& a, T b) {
        Dual r(a.value * b);
        for (std::size_t i = 0; i < N; ++i) r.grad[i] = a.grad[i] * b;
        return r;
    }
    friend constexpr Dual operator*(T a, const Dual& b) {
        Dual r(a * b.value);
        for (std::size_t i = 0; i < N; ++i) r.grad[i] = a * b.grad[i];
        return r;
    }

    friend constexpr Dual operator/(const Dual& a, const Dual& b) {
        Dual r(a.value / b.value);
        for (std::size_t i = 0; i < N; ++i)
            r.grad[i] = (a.grad[i] * b.value - a.value * b.grad[i]) / (b.value * b.value);
        return r;
    }
    friend constexpr Dual operator/(const Dual& a, T b) {
        Dual r(a.value / b);
        for (std::size_t i = 0; i < N; ++i) r.grad[i] = a.grad[i] / b;
        return r;
    }
    friend constexpr Dual operator/(T a, const Dual& b) {
        Dual r(a / b.value);
        for (std::size_t i = 0; i < N; ++i) r.grad[i] = -a * b.grad[i] / (b.value * b.value);
        return r;
    }

    constexpr Dual& operator+=(const Dual& o) { return *this = *this + o; }
    constexpr Dual& operator-=(const Dual& o) { return *this = *this - o; }
    constexpr Dual& operator*=(const Dual& o) { return *this = *this * o; }
    constexpr Dual& operator/=(const Dual& o) { return *this = *this / o; }
};

template <class>
inline constexpr bool is_dual_v = false;
template <std::size_t N, class T>
inline constexpr bool is_dual_v<Dual<N, T>> = true;

inline constexpr double value_of(double x) { return x; }
inline constexpr float value_of(float x) { return x; }
template <std::size_t N, class T>
constexpr T value_of(const Dual<N, T>& x) {
    return x.value;
}

/// Underlying real type: double for double and Dual<N, double>.
template <class S>
using value_type_t = std::remove_cvref_t<decltype(value_of(std::declval<S>()))>;

/// Constant (no seed) or independent variable seeded on lane `seed`.
template <std::size_t N, class T = double>
Dual<N, T> lift(T x, std::optional<std::size_t> seed = std::nullopt) {
    Dual<N, T> r(x);
    if (seed) {
        if (*seed >= N)
            throw std::out_of_range("seed lane " + std::to_string(*seed) + " out of range for width " +
                                    std::to_string(N));
        r.grad[*seed] = T(1);
    }
    return r;
}

namespace math {

// Plain floating point.
inline double sin(double x) { return std::sin(x); }
inline double cos(double x) { return std::cos(x); }
inline double sqrt(double x) { return std::sqrt(x); }
inline double acos(double x) { return std::acos(x); }
inline double atan2(double y, double x) { return std::atan2(y, x); }
inline double abs(double x) { return std::fabs(x); }
inline double min(double a, double b) { return a <= b ? a : b; }
inline double max(double a, double b) { return a >= b ? a : b; }
inline float sin(float x) { return std::sin(x); }
inline float cos(float x) { return std::cos(x); }
inline float sqrt(float x) { return std::sqrt(x); }
inline float acos(float x) { return std::acos(x); }
inline float atan2(float y, float x) { return std::atan2(y, x); }
inline float abs(float x) { return std::fabs(x); }
inline float min(float a, float b) { return a <= b ? a : b; }
inline float max(float a, float b) { return a >= b ? a : b; }

/// Value `fx` with derivative `dfx * dx`. The primitive every unary rule below
/// is built from; exposed for callers that need a custom derivative.
inline double apply_unary(double, double fx, double) { return fx; }
inline float apply_unary(float, float fx, float) { return fx; }
template <std::size_t N, class T>
Dual<N, T> apply_unary(const Dual<N, T>& x, T fx, T dfx) {
    Dual<N, T> r(fx);
    for (std::size_t i = 0; i < N; ++i) r.grad[i] = dfx * x.grad[i];
    return r;
}

template <std::size_t N, class T>
Dual<N, T> sin(const Dual<N, T>& x) {
    return apply_unary(x, std::sin(x.value), std::cos(x.value));
}
template <std::size_t N, class T>
Dual<N, T> cos(const Dual<N, T>& x) {
    return apply_unary(x, std::cos(x.value), -std::sin(x.value));
}
template <std::size_t N, class T>
Dual<N, T> sqrt(const Dual<N, T>& x) {
    const T s = std::sqrt(x.value);
    return apply_unary(x, s, T(1) / (T(2) * s));
}
template <std::size_t N, class T>
Dual<N, T> acos(const Dual<N, T>& x) {
    return apply_unary(x, std::acos(x.value), -T(1) / std::sqrt(T(1) - x.value * x.value));
}
template <std::size_t N, class T>
Dual<N, T> atan2(const Dual<N, T>& y, const Dual<N, T>& x) {
    const T denom = x.value * x.value + y.value * y.value;
    Dual<N, T> r(std::atan2(y.value, x.value));
    for (std::size_t i = 0; i < N; ++i) r.grad[i] = (x.value * y.grad[i] - y.value * x.grad[i]) / denom;
    return r;
}

// Kinks take the branch of the non-negative argument: abs'(0) = +1, so
// max(a, a) follows a and min(a, a) follows b, consistent with
// max = (a + b + |a - b|) / 2 and min = (a + b - |a - b|) / 2.
template <std::size_t N, class T>
Dual<N, T> abs(const Dual<N, T>& x) {
    return x.value >= T(0) ? x : -x;
}
template <std::size_t N, class T>
Dual<N, T> max(const Dual<N, T>& a, const Dual<N, T>& b) {
    return a.value >= b.value ? a : b;
}
template <std::size_t N, class T>
Dual<N, T> min(const Dual<N, T>& a, const Dual<N, T>& b) {
    return a.value < b.value ? a : b;
}

}  // namespace math

/// Dense row-major Jacobian.
struct JacobianMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
    double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    bool operator==(const JacobianMatrix&) const = default;
};

namespace detail {

template <std::size_t N>
void check_finite_row(const Dual<N>& y, std::size_t row) {
    bool ok = std::isfinite(y.value);
    for (double g : y.grad) ok = ok && std::isfinite(g);
    if (!ok) throw NumericError("non-finite value in output row " + std::to_string(row));
}

}  // namespace detail

/**
 * Jacobian of `f` at `x`, evaluated in chunks of `Chunk` tangent lanes.
 *
 * `f` is called with a std::span<const Dual<Chunk>> and must return a
 * std::vector<Dual<Chunk>>; a generic lambda works for both.
 */
template <std::size_t Chunk = 8, class F>
JacobianMatrix jacobian(F&& f, std::span<const double> x) {
    using D = Dual<Chunk>;
    const std::size_t m = x.size();
    JacobianMatrix J;
    J.cols = m;
    std::vector<D> xs(m);
    std::size_t start = 0;
    do {
        for (std::size_t j = 0; j < m; ++j) {
            xs[j] = D(x[j]);
            if (j >= start && j < start + Chunk) xs[j].grad[j - start] = 1.0;
        }
        const std::vector<D> ys = f(std::span<const D>(xs));
        if (start == 0) {
            J.rows = ys.size();
            J.data.assign(J.rows * m, 0.0);
        } else if (ys.size() != J.rows) {
            throw ShapeError("output dimension changed between evaluations");
        }
        for (std::size_t r = 0; r < ys.size(); ++r) {
            detail::check_finite_row(ys[r], r);
            for (std::size_t lane = 0; lane < Chunk && start + lane < m; ++lane)
                J(r, start + lane) = ys[r].grad[lane];
        }
        start += Chunk;
    } while (start < m);
    return J;
}

/**
 * Per-configuration Jacobians of a batched map.
 *
 * `thetas` holds `batch` blocks of m inputs; `f` maps it to `batch` blocks of
 * p outputs where block k depends only on input block k. Cross-block
 * derivatives are zero by contract, so lane i seeds column i of every block at
 * once and a single pass yields all `batch` Jacobians.
 */
template <std::size_t Chunk = 8, class F>
std::vector<JacobianMatrix> batch_jacobian(F&& f, std::span<const double> thetas, std::size_t batch) {
    using D = Dual<Chunk>;
    if (batch == 0) throw ShapeError("batch size must be positive");
    if (thetas.size() % batch != 0)
        throw ShapeError("theta length " + std::to_string(thetas.size()) + " is not divisible by batch size " +
                         std::to_string(batch));
    const std::size_t m = thetas.size() / batch;
    std::vector<JacobianMatrix> out(batch);
    std::vector<D> xs(thetas.size());
    std::size_t p = 0;
    std::size_t start = 0;
    do {
        for (std::size_t k = 0; k < batch; ++k) {
            for (std::size_t j = 0; j < m; ++j) {
                D& v = xs[k * m + j];
                v = D(thetas[k * m + j]);
                if (j >= start && j < start + Chunk) v.grad[j - start] = 1.0;
            }
        }
        const std::vector<D> ys = f(std::span<const D>(xs));
        if (ys.size() % batch != 0) throw ShapeError("output length is not divisible by batch size");
        if (start == 0) {
            p = ys.size() / batch;
            for (auto& J : out) {
                J.rows = p;
                J.cols = m;
                J.data.assign(p * m, 0.0);
            }
        }
        for (std::size_t k = 0; k < batch; ++k) {
            for (std::size_t r = 0; r < p; ++r) {
                const D& y = ys[k * p + r];
                detail::check_finite_row(y, r);
                for (std::size_t lane = 0; lane < Chunk && start + lane < m; ++lane)
                    out[k](r, start + lane) = y.grad[lane];
            }
        }
        start += Chunk;
    } while (start < m);
    return out;
}

}  // namespace fkdiff
