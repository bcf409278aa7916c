#pragma once

// Rotation distances between homogeneous transforms. Translation is ignored.
//
//   phi1  Euclidean distance of extrinsic-xyz Euler angles     R+
//   phi2  min(|q - q'|, |q + q'|)                              [0, sqrt 2]
//   phi3  arccos(|q . q'|)                                      [0, pi/2]
//   phi4  1 - |q . q'|                                          [0, 1]
//   phi5  ||I - R R'^T||_F                                      [0, 2 sqrt 2]
//
// phi3 and phi4 take the inner product, not |q - q'|: only the inner product
// gives those ranges and the sign-flip invariance. The batched entry points
// are rotation_with_rmse and phi2_loss .. phi5_loss.

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "fkdiff/autodiff.hpp"
#include "fkdiff/error.hpp"
#include "fkdiff/transforms.hpp"

namespace fkdiff {

/// Largest derivative magnitude the clamped sqrt reports near 0.
inline constexpr double kMaxMetricSlope = 1e8;

namespace detail {

template <class S>
S clamped_sqrt(const S& x) {
    const double v = std::max(0.0, static_cast<double>(value_of(x)));
    const double s = std::sqrt(v);
    const double slope = s > 0.5 / kMaxMetricSlope ? 0.5 / s : kMaxMetricSlope;
    using V = value_type_t<S>;
    return math::apply_unary(x, V(s), V(slope));
}

template <class S>
S quaternion_dot(const Quaternion<S>& a, const Quaternion<S>& b) {
    return a.w * b.w + a.x * b.x + a.y * b.y + a.z * b.z;
}

template <class S, class F>
std::vector<S> map_pairs(std::span<const Transform4<S>> t, std::span<const Transform4<S>> t_hat, F&& f) {
    if (t.size() != t_hat.size())
        throw ShapeError("metric inputs differ in batch size: " + std::to_string(t.size()) + " vs " +
                         std::to_string(t_hat.size()));
    std::vector<S> out;
    out.reserve(t.size());
    for (std::size_t k = 0; k < t.size(); ++k) out.push_back(f(t[k], t_hat[k]));
    return out;
}

}  // namespace detail

/// phi1; `degenerate` reports a gimbal-locked extraction on either side.
template <class S>
S phi1(const Transform4<S>& t, const Transform4<S>& t_hat, bool* degenerate = nullptr) {
    const PoseRPY<S> a = pose_from_transform(t);
    const PoseRPY<S> b = pose_from_transform(t_hat);
    if (degenerate) *degenerate = a.degenerate || b.degenerate;
    const S da = a.alpha - b.alpha, db = a.beta - b.beta, dg = a.gamma - b.gamma;
    return detail::clamped_sqrt(da * da + db * db + dg * dg);
}

template <class S>
S phi2(const Quaternion<S>& q, const Quaternion<S>& p) {
    auto sq = [](const S& v) { return v * v; };
    const S minus = sq(q.w - p.w) + sq(q.x - p.x) + sq(q.y - p.y) + sq(q.z - p.z);
    const S plus = sq(q.w + p.w) + sq(q.x + p.x) + sq(q.y + p.y) + sq(q.z + p.z);
    // |q - p|^2 + |q + p|^2 = 4 for unit quaternions; the cap absorbs rounding.
    return detail::clamped_sqrt(math::min(math::min(minus, plus), S(2)));
}

/// Evaluated as 2 atan2(|q - s p|, |q + s p|) with s = sign(q . p), which is
/// arccos|q . p| for unit quaternions but keeps full precision near 0, where
/// arccos of a dot product rounded to 1 - 1e-16 would report 1.5e-8.
template <class S>
S phi3(const Quaternion<S>& q, const Quaternion<S>& p) {
    const double s = value_of(detail::quaternion_dot(q, p)) < 0.0 ? -1.0 : 1.0;
    auto sq = [](const S& v) { return v * v; };
    const S minus = sq(q.w - s * p.w) + sq(q.x - s * p.x) + sq(q.y - s * p.y) + sq(q.z - s * p.z);
    const S plus = sq(q.w + s * p.w) + sq(q.x + s * p.x) + sq(q.y + s * p.y) + sq(q.z + s * p.z);
    // when q . p rounds to 0 the two norms may swap by an ulp
    return math::min(S(2) * math::atan2(detail::clamped_sqrt(minus), detail::clamped_sqrt(plus)), S(M_PI / 2));
}

template <class S>
S phi4(const Quaternion<S>& q, const Quaternion<S>& p) {
    return S(1) - math::min(math::abs(detail::quaternion_dot(q, p)), S(1));
}

template <class S>
S phi2(const Transform4<S>& t, const Transform4<S>& t_hat) {
    return phi2(quaternion_from_rotation(t.rotation()), quaternion_from_rotation(t_hat.rotation()));
}

template <class S>
S phi3(const Transform4<S>& t, const Transform4<S>& t_hat) {
    return phi3(quaternion_from_rotation(t.rotation()), quaternion_from_rotation(t_hat.rotation()));
}

template <class S>
S phi4(const Transform4<S>& t, const Transform4<S>& t_hat) {
    return phi4(quaternion_from_rotation(t.rotation()), quaternion_from_rotation(t_hat.rotation()));
}

/// Squared Frobenius norm of I - R R'^T; smooth everywhere.
template <class S>
S phi5_squared(const Transform4<S>& t, const Transform4<S>& t_hat) {
    S total(0);
    for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t j = 0; j < 3; ++j) {
            // (R R'^T)_ij = row i of R . row j of R'
            const S rr = t(i, 0) * t_hat(j, 0) + t(i, 1) * t_hat(j, 1) + t(i, 2) * t_hat(j, 2);
            const S d = (i == j ? S(1) : S(0)) - rr;
            total = total + d * d;
        }
    }
    return total;
}

template <class S>
S phi5(const Transform4<S>& t, const Transform4<S>& t_hat) {
    return detail::clamped_sqrt(math::min(phi5_squared(t, t_hat), S(8)));
}

template <class S>
struct EulerDistance {
    std::vector<S> values;
    std::vector<bool> degenerate;
};

template <class S>
EulerDistance<S> rotation_with_rmse(std::span<const Transform4<S>> t, std::span<const Transform4<S>> t_hat) {
    EulerDistance<S> out;
    std::size_t k = 0;
    out.degenerate.resize(t.size());
    out.values = detail::map_pairs(t, t_hat, [&](const auto& a, const auto& b) {
        bool flag = false;
        S v = phi1(a, b, &flag);
        out.degenerate[k++] = flag;
        return v;
    });
    return out;
}

template <class S>
std::vector<S> phi2_loss(std::span<const Transform4<S>> t, std::span<const Transform4<S>> t_hat) {
    return detail::map_pairs(t, t_hat, [](const auto& a, const auto& b) { return phi2(a, b); });
}

template <class S>
std::vector<S> phi3_loss(std::span<const Transform4<S>> t, std::span<const Transform4<S>> t_hat) {
    return detail::map_pairs(t, t_hat, [](const auto& a, const auto& b) { return phi3(a, b); });
}

template <class S>
std::vector<S> phi4_loss(std::span<const Transform4<S>> t, std::span<const Transform4<S>> t_hat) {
    return detail::map_pairs(t, t_hat, [](const auto& a, const auto& b) { return phi4(a, b); });
}

template <class S>
std::vector<S> phi5_loss(std::span<const Transform4<S>> t, std::span<const Transform4<S>> t_hat) {
    return detail::map_pairs(t, t_hat, [](const auto& a, const auto& b) { return phi5(a, b); });
}

}  // namespace fkdiff
