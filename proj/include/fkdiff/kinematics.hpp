#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <type_traits>
#include <vector>

#include "fkdiff/autodiff.hpp"
#include "fkdiff/error.hpp"
#include "fkdiff/transforms.hpp"
#include "fkdiff/urdf.hpp"

namespace fkdiff {

namespace detail {
/// s[i] = sin(x[i]), c[i] = cos(x[i]); vectorised where the platform allows.
void batch_sincos(const double* x, std::size_t n, double* s, double* c);
}  // namespace detail

/// Q-slot order of a 6-DoF parameter vector.
enum Slot : std::size_t { kX = 0, kY, kZ, kAlpha, kBeta, kGamma };

/// One row of the index matrix: theta row r of configuration `batch` is
/// written, times `sign`, to Q[batch][joint][slot]. Indices are 0-based.
struct IndexEntry {
    std::size_t batch = 0;
    std::size_t joint = 0;
    std::size_t slot = 0;
    double sign = 1.0;
    bool operator==(const IndexEntry&) const = default;
};

/// Dense (batch x joints x 6) parameter tensor.
template <class S>
struct JointParamBatch {
    std::size_t batch = 0;
    std::size_t joints = 0;
    std::vector<S> data;

    S& at(std::size_t k, std::size_t i, std::size_t e) { return data[(k * joints + i) * 6 + e]; }
    const S& at(std::size_t k, std::size_t i, std::size_t e) const { return data[(k * joints + i) * 6 + e]; }
};

/// (batch x per_batch) transforms, configuration-major.
template <class S>
struct TransformBatch {
    std::size_t batch = 0;
    std::size_t per_batch = 0;
    std::vector<Transform4<S>> data;

    Transform4<S>& at(std::size_t k, std::size_t i) { return data[k * per_batch + i]; }
    const Transform4<S>& at(std::size_t k, std::size_t i) const { return data[k * per_batch + i]; }
};

struct LimitViolation {
    std::size_t batch = 0;
    std::string joint;
    double value = 0.0;
    double lower = 0.0;
    double upper = 0.0;
};

struct EngineOptions {
    /// Worker threads along the batch axis. Results do not depend on it.
    std::size_t threads = 1;
};

/// Thread count from FKDIFF_THREADS, or `fallback` when unset or invalid.
std::size_t threads_from_env(std::size_t fallback = 1);

/**
 * Batched forward kinematics over a fixed chain.
 *
 * The pipeline is: scatter the flat configuration batch into a zeroed
 * (b x n x 6) tensor Q through the index matrix, turn every Q row into a 6-DoF
 * joint transform, left-multiply the static link transforms, then take the
 * inclusive cumulative product along the chain. Every stage is a template over
 * the scalar, so the same engine evaluates plain values or dual numbers.
 *
 * A joint whose axis is not a coordinate axis is expressed as
 * B * J(theta) * B^T, where B rotates a canonical axis onto the joint axis; B
 * is folded into the link side and B^T applied after the joint. Axis-aligned
 * joints write straight into their slot with the axis sign folded into the
 * index entry.
 *
 * Trainable Floating joints (see substitute_link_with_joint) take their six
 * parameters from a separate parameter vector shared by the whole batch.
 */
class FkEngine {
public:
    FkEngine(KinematicChain chain, std::size_t batch_size, EngineOptions options = {});

    const KinematicChain& chain() const { return chain_; }
    std::size_t batch_size() const { return batch_; }
    std::size_t joint_count() const { return segments_.size(); }
    std::size_t dof() const { return dof_; }
    /// Length of the trainable parameter vector: 6 per trainable joint.
    std::size_t param_count() const { return trainable_.size() * 6; }
    const EngineOptions& options() const { return options_; }

    const std::vector<IndexEntry>& index_matrix() const { return index_; }
    /// Static origin transform of each joint, in chain order.
    std::vector<Transform4<double>> link_transforms() const;
    /// Initial trainable parameters, 6 per trainable joint in chain order.
    std::vector<double> initial_params() const;

    template <class S>
    JointParamBatch<S> scatter_thetas(std::span<const S> thetas, std::span<const S> params = {}) const;
    template <class S>
    TransformBatch<S> joint_transforms(const JointParamBatch<S>& q) const;
    template <class S>
    TransformBatch<S> combine_link_joint(const TransformBatch<S>& joints) const;
    template <class S>
    TransformBatch<S> scan_compose(const TransformBatch<S>& combined) const;

    /// Full pipeline. Returns (b x n) cumulative transforms with
    /// `want_intermediates`, else (b x 1) final transforms.
    template <class S>
    TransformBatch<S> forward(std::span<const S> thetas, bool want_intermediates = false,
                              std::span<const S> params = {}) const;

    /// forward() into a caller-owned batch; its storage is reused when large
    /// enough, which keeps repeated large batches free of fresh page faults.
    template <class S>
    void forward_into(std::span<const S> thetas, TransformBatch<S>& out, bool want_intermediates = false,
                      std::span<const S> params = {}) const;

    TransformBatch<double> forward(const std::vector<double>& thetas, bool want_intermediates = false) const {
        return forward<double>(std::span<const double>(thetas), want_intermediates);
    }

    /// 6 x m Jacobians of pose_from_transform(forward(.)), one per configuration.
    std::vector<JacobianMatrix> pose_jacobians(std::span<const double> thetas) const;

    /// Joint-limit violations. forward itself never enforces limits.
    std::vector<LimitViolation> check_limits(std::span<const double> thetas) const;

private:
    /// Which Q cells of a segment can be nonzero. The joint stage skips the
    /// trig of rotation slots that are structurally zero; the result equals
    /// sixdof_to_transform of the full row.
    enum class Motion { Identity, Translation, RotX, RotY, RotZ, General };
    static bool is_rotation(Motion m) { return m == Motion::RotX || m == Motion::RotY || m == Motion::RotZ; }

    struct Segment {
        Transform4<double> link;
        /// link * B for non-aligned joints, else link.
        Transform4<double> link_aligned;
        /// B^T for non-aligned joints.
        std::optional<Transform4<double>> post;
        /// (slot, sign) per theta row this joint consumes.
        std::vector<std::pair<std::size_t, double>> slots;
        std::optional<std::size_t> trainable_index;
        Motion motion = Motion::General;
    };

    template <class S>
    void check_inputs(std::span<const S> thetas, std::span<const S> params) const;
    template <class S>
    void scatter_range(std::span<const S> thetas, std::span<const S> params, std::size_t k0, std::size_t k1,
                       S* q) const;
    template <class S>
    void joint_range(const S* q, std::size_t count, Transform4<S>* out) const;
    template <class S>
    void combine_range(Transform4<S>* inout, std::size_t count) const;
    /// `sc`, when given, holds the precomputed (sin, cos) of the segment's
    /// rotation slot.
    template <class S>
    Transform4<S> local_transform(const Segment& seg, const S* row, const std::pair<S, S>* sc = nullptr) const;
    /// Fused joint/combine/scan for up to kTile plain-double configurations,
    /// laid out batch-minor so the arithmetic vectorises across the tile.
    void forward_tile(const double* q, std::size_t count, bool intermediates, Transform4<double>* out) const;

    static constexpr std::size_t kTile = 64;
    template <class S>
    void scan_range(const Transform4<S>* combined, std::size_t count, bool intermediates,
                    Transform4<S>* out) const;
    template <class F>
    void parallel_for_batch(F&& body) const;

    KinematicChain chain_;
    std::size_t batch_;
    std::size_t dof_ = 0;
    EngineOptions options_;
    std::vector<Segment> segments_;
    std::vector<std::size_t> trainable_;  // segment index per trainable joint
    std::vector<std::pair<std::size_t, std::size_t>> rotations_;  // (segment, Q slot) of single-axis rotations
    std::vector<IndexEntry> index_;
};

// ---------------------------------------------------------------------------

template <class S>
void FkEngine::check_inputs(std::span<const S> thetas, std::span<const S> params) const {
    if (thetas.size() != batch_ * dof_)
        throw ShapeError("expected " + std::to_string(batch_ * dof_) + " joint values (batch " +
                         std::to_string(batch_) + " x dof " + std::to_string(dof_) + "), got " +
                         std::to_string(thetas.size()));
    if (!params.empty() && params.size() != param_count())
        throw ShapeError("expected " + std::to_string(param_count()) + " trainable parameters, got " +
                         std::to_string(params.size()));
    for (std::size_t i = 0; i < thetas.size(); ++i)
        if (!std::isfinite(value_of(thetas[i])))
            throw NumericError("non-finite joint value at index " + std::to_string(i));
    for (std::size_t i = 0; i < params.size(); ++i)
        if (!std::isfinite(value_of(params[i])))
            throw NumericError("non-finite trainable parameter at index " + std::to_string(i));
}

template <class S>
void FkEngine::scatter_range(std::span<const S> thetas, std::span<const S> params, std::size_t k0,
                             std::size_t k1, S* q) const {
    const std::size_t n = segments_.size();
    const std::size_t cells = (k1 - k0) * n * 6;
    for (std::size_t c = 0; c < cells; ++c) q[c] = S(0);
    for (std::size_t r = k0 * dof_; r < k1 * dof_; ++r) {
        const IndexEntry& e = index_[r];
        q[((e.batch - k0) * n + e.joint) * 6 + e.slot] = thetas[r] * value_type_t<S>(e.sign);
    }
    if (trainable_.empty()) return;
    std::vector<S> defaults;
    if (params.empty()) {
        for (double v : initial_params()) defaults.push_back(S(v));
        params = defaults;
    }
    for (std::size_t k = k0; k < k1; ++k)
        for (std::size_t t = 0; t < trainable_.size(); ++t)
            for (std::size_t e = 0; e < 6; ++e) q[((k - k0) * n + trainable_[t]) * 6 + e] = params[t * 6 + e];
}

template <class S>
void FkEngine::joint_range(const S* q, std::size_t count, Transform4<S>* out) const {
    const std::size_t n = segments_.size();
    for (std::size_t s = 0; s < count; ++s) {
        const S* row = q + s * 6;
        switch (segments_[s % n].motion) {
            case Motion::Identity:
                out[s] = Transform4<S>::identity();
                break;
            case Motion::Translation:
                out[s] = Transform4<S>::translation(row[0], row[1], row[2]);
                break;
            case Motion::RotX:
                out[s] = Transform4<S>::from_parts(rot_x(row[3]), {row[0], row[1], row[2]});
                break;
            case Motion::RotY:
                out[s] = Transform4<S>::from_parts(rot_y(row[4]), {row[0], row[1], row[2]});
                break;
            case Motion::RotZ:
                out[s] = Transform4<S>::from_parts(rot_z(row[5]), {row[0], row[1], row[2]});
                break;
            case Motion::General:
                out[s] = sixdof_to_transform(SixDofParams<S>{{row[0], row[1], row[2], row[3], row[4], row[5]}});
                break;
        }
    }
}

template <class S>
void FkEngine::combine_range(Transform4<S>* inout, std::size_t count) const {
    using V = value_type_t<S>;
    const std::size_t n = segments_.size();
    for (std::size_t s = 0; s < count; ++s) {
        const Segment& seg = segments_[s % n];
        if constexpr (std::is_same_v<V, double>) {
            inout[s] = seg.post ? compose(compose(seg.link_aligned, inout[s]), *seg.post)
                                : compose(seg.link, inout[s]);
        } else {
            inout[s] = seg.post ? compose(compose(seg.link_aligned.cast<V>(), inout[s]), seg.post->cast<V>())
                                : compose(seg.link.cast<V>(), inout[s]);
        }
    }
}

template <class S>
void FkEngine::scan_range(const Transform4<S>* combined, std::size_t count, bool intermediates,
                          Transform4<S>* out) const {
    const std::size_t n = segments_.size();
    for (std::size_t k = 0; k < count; ++k) {
        const Transform4<S>* row = combined + k * n;
        if (n == 0) {
            if (!intermediates) out[k] = Transform4<S>::identity();
            continue;
        }
        Transform4<S> acc = row[0];
        if (intermediates) out[k * n] = acc;
        for (std::size_t i = 1; i < n; ++i) {
            acc = compose(acc, row[i]);
            if (intermediates) out[k * n + i] = acc;
        }
        if (!intermediates) out[k] = acc;
    }
}

// link * J(row) (* post) in one step. Single-axis rotations touch two columns
// of the link rotation and leave its translation alone; translations leave
// the rotation alone.
template <class S>
Transform4<S> FkEngine::local_transform(const Segment& seg, const S* row, const std::pair<S, S>* sc) const {
    using V = value_type_t<S>;
    const Transform4<double>& link = seg.post ? seg.link_aligned : seg.link;
    std::array<V, 12> l;
    for (std::size_t i = 0; i < 12; ++i) l[i] = V(link.m[i]);
    const S zero(0), one(1);
    Transform4<S> t;

    switch (seg.motion) {
        case Motion::Identity:
            return link.template cast<S>();
        case Motion::Translation: {
            const S& x = row[0];
            const S& y = row[1];
            const S& z = row[2];
            t = Transform4<S>{{l[0], l[1], l[2], x * l[0] + y * l[1] + z * l[2] + l[3],
                               l[4], l[5], l[6], x * l[4] + y * l[5] + z * l[6] + l[7],
                               l[8], l[9], l[10], x * l[8] + y * l[9] + z * l[10] + l[11],
                               zero, zero, zero, one}};
            break;
        }
        case Motion::RotX: {
            const S c = sc ? sc->second : math::cos(row[3]), s = sc ? sc->first : math::sin(row[3]);
            t = Transform4<S>{{l[0], c * l[1] + s * l[2], c * l[2] - s * l[1], l[3],
                               l[4], c * l[5] + s * l[6], c * l[6] - s * l[5], l[7],
                               l[8], c * l[9] + s * l[10], c * l[10] - s * l[9], l[11],
                               zero, zero, zero, one}};
            break;
        }
        case Motion::RotY: {
            const S c = sc ? sc->second : math::cos(row[4]), s = sc ? sc->first : math::sin(row[4]);
            t = Transform4<S>{{c * l[0] - s * l[2], l[1], c * l[2] + s * l[0], l[3],
                               c * l[4] - s * l[6], l[5], c * l[6] + s * l[4], l[7],
                               c * l[8] - s * l[10], l[9], c * l[10] + s * l[8], l[11],
                               zero, zero, zero, one}};
            break;
        }
        case Motion::RotZ: {
            const S c = sc ? sc->second : math::cos(row[5]), s = sc ? sc->first : math::sin(row[5]);
            t = Transform4<S>{{c * l[0] + s * l[1], c * l[1] - s * l[0], l[2], l[3],
                               c * l[4] + s * l[5], c * l[5] - s * l[4], l[6], l[7],
                               c * l[8] + s * l[9], c * l[9] - s * l[8], l[10], l[11],
                               zero, zero, zero, one}};
            break;
        }
        case Motion::General: {
            const Transform4<S> j =
                sixdof_to_transform(SixDofParams<S>{{row[0], row[1], row[2], row[3], row[4], row[5]}});
            if constexpr (std::is_same_v<V, double>) t = compose(link, j);
            else t = compose(link.template cast<V>(), j);
            break;
        }
    }
    if (!seg.post) return t;
    if constexpr (std::is_same_v<V, double>) return compose(t, *seg.post);
    else return compose(t, seg.post->template cast<V>());
}

template <class F>
void FkEngine::parallel_for_batch(F&& body) const {
    const std::size_t workers = std::max<std::size_t>(1, std::min(options_.threads, batch_));
    if (workers == 1) {
        body(std::size_t{0}, batch_);
        return;
    }
    std::vector<std::jthread> pool;
    const std::size_t per = (batch_ + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
        const std::size_t k0 = w * per;
        const std::size_t k1 = std::min(batch_, k0 + per);
        if (k0 >= k1) break;
        pool.emplace_back([&body, k0, k1] { body(k0, k1); });
    }
}

template <class S>
JointParamBatch<S> FkEngine::scatter_thetas(std::span<const S> thetas, std::span<const S> params) const {
    check_inputs(thetas, params);
    JointParamBatch<S> q{batch_, segments_.size(), std::vector<S>(batch_ * segments_.size() * 6)};
    scatter_range(thetas, params, 0, batch_, q.data.data());
    return q;
}

template <class S>
TransformBatch<S> FkEngine::joint_transforms(const JointParamBatch<S>& q) const {
    if (q.batch != batch_ || q.joints != segments_.size() || q.data.size() != batch_ * segments_.size() * 6)
        throw ShapeError("parameter tensor shape does not match engine");
    TransformBatch<S> out{batch_, segments_.size(), std::vector<Transform4<S>>(batch_ * segments_.size())};
    joint_range(q.data.data(), out.data.size(), out.data.data());
    return out;
}

template <class S>
TransformBatch<S> FkEngine::combine_link_joint(const TransformBatch<S>& joints) const {
    if (joints.batch != batch_ || joints.per_batch != segments_.size())
        throw ShapeError("joint transform batch shape does not match engine");
    TransformBatch<S> out = joints;
    combine_range(out.data.data(), out.data.size());
    return out;
}

template <class S>
TransformBatch<S> FkEngine::scan_compose(const TransformBatch<S>& combined) const {
    if (combined.batch != batch_ || combined.per_batch != segments_.size())
        throw ShapeError("combined transform batch shape does not match engine");
    TransformBatch<S> out{batch_, segments_.size(), std::vector<Transform4<S>>(combined.data.size())};
    scan_range(combined.data.data(), batch_, true, out.data.data());
    return out;
}

template <class S>
TransformBatch<S> FkEngine::forward(std::span<const S> thetas, bool want_intermediates,
                                    std::span<const S> params) const {
    TransformBatch<S> out;
    forward_into(thetas, out, want_intermediates, params);
    return out;
}

template <class S>
void FkEngine::forward_into(std::span<const S> thetas, TransformBatch<S>& out, bool want_intermediates,
                            std::span<const S> params) const {
    check_inputs(thetas, params);
    const std::size_t n = segments_.size();
    out.batch = batch_;
    out.per_batch = want_intermediates ? n : 1;
    out.data.resize(batch_ * out.per_batch);

    // Tile by tile so the working set stays in cache; nothing reduces across
    // configurations, so tiling and threading do not change any bit.
    parallel_for_batch([&](std::size_t b0, std::size_t b1) {
        std::vector<S> q(kTile * n * 6);
        for (std::size_t k0 = b0; k0 < b1; k0 += kTile) {
            const std::size_t k1 = std::min(b1, k0 + kTile);
            scatter_range(thetas, params, k0, k1, q.data());
            Transform4<S>* dst = out.data.data() + k0 * out.per_batch;
            if constexpr (std::is_same_v<S, double>) {
                forward_tile(q.data(), k1 - k0, want_intermediates, dst);
                continue;
            }
            // joint, combine and scan stages fused per configuration
            for (std::size_t k = 0; k < k1 - k0; ++k, dst += out.per_batch) {
                const S* qk = q.data() + k * n * 6;
                if (n == 0) {
                    *dst = Transform4<S>::identity();
                    continue;
                }
                Transform4<S> acc = local_transform(segments_[0], qk);
                if (want_intermediates) dst[0] = acc;
                for (std::size_t i = 1; i < n; ++i) {
                    acc = compose(acc, local_transform(segments_[i], qk + i * 6));
                    if (want_intermediates) dst[i] = acc;
                }
                if (!want_intermediates) *dst = acc;
            }
        }
    });
}

}  // namespace fkdiff
