#pragma once

// SO(3) / SE(3) building blocks. Every function is a template over the scalar
// so the same code serves plain evaluation and forward-mode differentiation.
//
// Euler convention: extrinsic x -> y -> z, i.e. R = Rz(gamma) Ry(beta) Rx(alpha),
// the URDF rpy convention.

#include <array>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <utility>

#include "fkdiff/autodiff.hpp"

namespace fkdiff {

template <class A, class B>
using product_t = decltype(std::declval<A>() * std::declval<B>());

template <class S>
struct Mat3 {
    std::array<S, 9> m{};

    S& operator()(std::size_t r, std::size_t c) { return m[r * 3 + c]; }
    const S& operator()(std::size_t r, std::size_t c) const { return m[r * 3 + c]; }

    static Mat3 identity() {
        Mat3 r;
        r.m = {S(1), S(0), S(0), S(0), S(1), S(0), S(0), S(0), S(1)};
        return r;
    }
};

template <class A, class B>
Mat3<product_t<A, B>> operator*(const Mat3<A>& a, const Mat3<B>& b) {
    Mat3<product_t<A, B>> r;
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j)
            r(i, j) = a(i, 0) * b(0, j) + a(i, 1) * b(1, j) + a(i, 2) * b(2, j);
    return r;
}

template <class S>
Mat3<S> transpose(const Mat3<S>& a) {
    Mat3<S> r;
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j) r(i, j) = a(j, i);
    return r;
}

/// 4x4 homogeneous transform, row-major. The bottom row is (0, 0, 0, 1).
template <class S>
struct Transform4 {
    std::array<S, 16> m{};

    S& operator()(std::size_t r, std::size_t c) { return m[r * 4 + c]; }
    const S& operator()(std::size_t r, std::size_t c) const { return m[r * 4 + c]; }

    static Transform4 identity() {
        Transform4 t;
        t.m[0] = t.m[5] = t.m[10] = t.m[15] = S(1);
        return t;
    }

    static Transform4 translation(S x, S y, S z) {
        Transform4 t = identity();
        t(0, 3) = x;
        t(1, 3) = y;
        t(2, 3) = z;
        return t;
    }

    static Transform4 from_parts(const Mat3<S>& rot, const std::array<S, 3>& p) {
        Transform4 t;
        for (std::size_t i = 0; i < 3; ++i) {
            for (std::size_t j = 0; j < 3; ++j) t(i, j) = rot(i, j);
            t(i, 3) = p[i];
        }
        t.m[15] = S(1);
        return t;
    }

    Mat3<S> rotation() const {
        Mat3<S> r;
        for (std::size_t i = 0; i < 3; ++i)
            for (std::size_t j = 0; j < 3; ++j) r(i, j) = (*this)(i, j);
        return r;
    }

    std::array<S, 3> translation_part() const { return {m[3], m[7], m[11]}; }

    template <class U>
    Transform4<U> cast() const {
        Transform4<U> r;
        for (std::size_t i = 0; i < 16; ++i) r.m[i] = U(m[i]);
        return r;
    }
};

/// [x, y, z, alpha, beta, gamma] of a 6-DoF joint.
template <class S>
struct SixDofParams {
    std::array<S, 6> values{};

    S& operator[](std::size_t i) { return values[i]; }
    const S& operator[](std::size_t i) const { return values[i]; }
    bool operator==(const SixDofParams&) const = default;
};

template <class S>
struct PoseRPY {
    S x{}, y{}, z{};
    S alpha{}, beta{}, gamma{};
    /// Set when |cos beta| <= 1e-6; alpha is then pinned to 0.
    bool degenerate = false;

    std::array<S, 6> as_array() const { return {x, y, z, alpha, beta, gamma}; }
};

template <class S>
struct Quaternion {
    S w{1}, x{}, y{}, z{};
};

template <class S>
Mat3<S> rot_x(const S& a) {
    const S c = math::cos(a), s = math::sin(a);
    Mat3<S> r;
    r.m = {S(1), S(0), S(0), S(0), c, -s, S(0), s, c};
    return r;
}

template <class S>
Mat3<S> rot_y(const S& b) {
    const S c = math::cos(b), s = math::sin(b);
    Mat3<S> r;
    r.m = {c, S(0), s, S(0), S(1), S(0), -s, S(0), c};
    return r;
}

template <class S>
Mat3<S> rot_z(const S& g) {
    const S c = math::cos(g), s = math::sin(g);
    Mat3<S> r;
    r.m = {c, -s, S(0), s, c, S(0), S(0), S(0), S(1)};
    return r;
}

/// Rz(gamma) * Ry(beta) * Rx(alpha), expanded.
template <class S>
Mat3<S> rpy_to_rotation(const S& alpha, const S& beta, const S& gamma) {
    const S ca = math::cos(alpha), sa = math::sin(alpha);
    const S cb = math::cos(beta), sb = math::sin(beta);
    const S cg = math::cos(gamma), sg = math::sin(gamma);
    const S sb_sa = sb * sa;
    const S sb_ca = sb * ca;
    Mat3<S> r;
    r.m = {cg * cb, cg * sb_sa - sg * ca, cg * sb_ca + sg * sa,
           sg * cb, sg * sb_sa + cg * ca, sg * sb_ca - cg * sa,
           -sb,     cb * sa,              cb * ca};
    return r;
}

template <class S>
Transform4<S> sixdof_to_transform(const SixDofParams<S>& p) {
    return Transform4<S>::from_parts(rpy_to_rotation(p[3], p[4], p[5]), {p[0], p[1], p[2]});
}

/// a * b. Only the top three rows are multiplied; the bottom row is copied.
template <class A, class B>
inline Transform4<product_t<A, B>> compose(const Transform4<A>& a, const Transform4<B>& b) {
    using R = product_t<A, B>;
    const auto& x = a.m;
    const auto& y = b.m;
    // written out so no zero-filled temporary is needed
    return Transform4<R>{{
        x[0] * y[0] + x[1] * y[4] + x[2] * y[8],
        x[0] * y[1] + x[1] * y[5] + x[2] * y[9],
        x[0] * y[2] + x[1] * y[6] + x[2] * y[10],
        x[0] * y[3] + x[1] * y[7] + x[2] * y[11] + x[3],
        x[4] * y[0] + x[5] * y[4] + x[6] * y[8],
        x[4] * y[1] + x[5] * y[5] + x[6] * y[9],
        x[4] * y[2] + x[5] * y[6] + x[6] * y[10],
        x[4] * y[3] + x[5] * y[7] + x[6] * y[11] + x[7],
        x[8] * y[0] + x[9] * y[4] + x[10] * y[8],
        x[8] * y[1] + x[9] * y[5] + x[10] * y[9],
        x[8] * y[2] + x[9] * y[6] + x[10] * y[10],
        x[8] * y[3] + x[9] * y[7] + x[10] * y[11] + x[11],
        R(0), R(0), R(0), R(1),
    }};
}

template <class S>
Transform4<S> inverse(const Transform4<S>& t) {
    const Mat3<S> rt = transpose(t.rotation());
    const auto p = t.translation_part();
    std::array<S, 3> q;
    for (std::size_t i = 0; i < 3; ++i) q[i] = -(rt(i, 0) * p[0] + rt(i, 1) * p[1] + rt(i, 2) * p[2]);
    return Transform4<S>::from_parts(rt, q);
}

/// Inverse of sixdof_to_transform away from gimbal lock. At |cos beta| <= 1e-6
/// alpha is set to 0, gamma absorbs the full twist and `degenerate` is set.
template <class S>
PoseRPY<S> pose_from_transform(const Transform4<S>& t) {
    PoseRPY<S> pose;
    pose.x = t(0, 3);
    pose.y = t(1, 3);
    pose.z = t(2, 3);
    const S cos_beta = math::sqrt(t(0, 0) * t(0, 0) + t(1, 0) * t(1, 0));
    pose.beta = math::atan2(-t(2, 0), cos_beta);
    if (value_of(cos_beta) <= 1e-6) {
        pose.degenerate = true;
        pose.alpha = S(0);
        pose.gamma = math::atan2(-t(0, 1), t(1, 1));
    } else {
        pose.alpha = math::atan2(t(2, 1), t(2, 2));
        pose.gamma = math::atan2(t(1, 0), t(0, 0));
    }
    return pose;
}

/// Largest deviation of R^T R from the identity.
template <class S>
double orthonormality_error(const Mat3<S>& r) {
    double worst = 0.0;
    for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t j = 0; j < 3; ++j) {
            double dot = 0.0;
            for (std::size_t k = 0; k < 3; ++k) dot += value_of(r(k, i)) * value_of(r(k, j));
            worst = std::max(worst, std::fabs(dot - (i == j ? 1.0 : 0.0)));
        }
    }
    return worst;
}

template <class S>
double determinant(const Mat3<S>& r) {
    auto v = [&](std::size_t i, std::size_t j) { return value_of(r(i, j)); };
    return v(0, 0) * (v(1, 1) * v(2, 2) - v(1, 2) * v(2, 1)) - v(0, 1) * (v(1, 0) * v(2, 2) - v(1, 2) * v(2, 0)) +
           v(0, 2) * (v(1, 0) * v(2, 1) - v(1, 1) * v(2, 0));
}

/// Unit quaternion with w >= 0. The branch is picked by the largest of
/// trace, R00, R11, R22 so the square root argument stays well away from 0.
/// Throws std::invalid_argument when R^T R deviates from I by more than 1e-6.
template <class S>
Quaternion<S> quaternion_from_rotation(const Mat3<S>& r) {
    if (orthonormality_error(r) > 1e-6) throw std::invalid_argument("rotation matrix is not orthonormal");
    const double r00 = value_of(r(0, 0)), r11 = value_of(r(1, 1)), r22 = value_of(r(2, 2));
    const double tr = r00 + r11 + r22;
    Quaternion<S> q;
    if (tr >= r00 && tr >= r11 && tr >= r22) {
        const S s = math::sqrt(S(1) + r(0, 0) + r(1, 1) + r(2, 2)) * 2.0;
        q.w = s * 0.25;
        q.x = (r(2, 1) - r(1, 2)) / s;
        q.y = (r(0, 2) - r(2, 0)) / s;
        q.z = (r(1, 0) - r(0, 1)) / s;
    } else if (r00 >= r11 && r00 >= r22) {
        const S s = math::sqrt(S(1) + r(0, 0) - r(1, 1) - r(2, 2)) * 2.0;
        q.w = (r(2, 1) - r(1, 2)) / s;
        q.x = s * 0.25;
        q.y = (r(0, 1) + r(1, 0)) / s;
        q.z = (r(0, 2) + r(2, 0)) / s;
    } else if (r11 >= r22) {
        const S s = math::sqrt(S(1) + r(1, 1) - r(0, 0) - r(2, 2)) * 2.0;
        q.w = (r(0, 2) - r(2, 0)) / s;
        q.x = (r(0, 1) + r(1, 0)) / s;
        q.y = s * 0.25;
        q.z = (r(1, 2) + r(2, 1)) / s;
    } else {
        const S s = math::sqrt(S(1) + r(2, 2) - r(0, 0) - r(1, 1)) * 2.0;
        q.w = (r(1, 0) - r(0, 1)) / s;
        q.x = (r(0, 2) + r(2, 0)) / s;
        q.y = (r(1, 2) + r(2, 1)) / s;
        q.z = s * 0.25;
    }
    if (value_of(q.w) < 0.0) {
        q.w = -q.w;
        q.x = -q.x;
        q.y = -q.y;
        q.z = -q.z;
    }
    return q;
}

template <class S>
Mat3<S> rotation_from_quaternion(const Quaternion<S>& q) {
    const S ww = q.w * q.w, xx = q.x * q.x, yy = q.y * q.y, zz = q.z * q.z;
    const S xy = q.x * q.y, xz = q.x * q.z, yz = q.y * q.z;
    const S wx = q.w * q.x, wy = q.w * q.y, wz = q.w * q.z;
    Mat3<S> r;
    r.m = {ww + xx - yy - zz, 2.0 * (xy - wz),    2.0 * (xz + wy),
           2.0 * (xy + wz),   ww - xx + yy - zz,  2.0 * (yz - wx),
           2.0 * (xz - wy),   2.0 * (yz + wx),    ww - xx - yy + zz};
    return r;
}

}  // namespace fkdiff
