#include "fkdiff/kinematics.hpp"

#include <cstdlib>
#include <string>

// The tile kernel gets an AVX2 clone picked at load time. No FMA, so its
// arithmetic is the same as the generic build's.
#if defined(__GNUC__) && !defined(__clang__) && defined(__x86_64__) && defined(__linux__)
#define FKDIFF_TILE_CLONES __attribute__((target_clones("avx2", "default")))
#define FKDIFF_TILE_INLINE [[gnu::always_inline]] inline
#else
#define FKDIFF_TILE_CLONES
#define FKDIFF_TILE_INLINE inline
#endif

namespace fkdiff {

namespace {

constexpr double kAxisTol = 1e-12;

struct AxisFrame {
    Mat3<double> basis;  // columns u, v, axis
};

/// Orthonormal completion of `axis` by Gram-Schmidt against the coordinate
/// axis where |axis| is smallest (lowest index on ties).
AxisFrame complete_axis(const Vec3& axis) {
    std::size_t s = 0;
    for (std::size_t i = 1; i < 3; ++i)
        if (std::fabs(axis[i]) < std::fabs(axis[s])) s = i;
    Vec3 u{};
    u[s] = 1.0;
    const double d = axis[s];
    for (std::size_t i = 0; i < 3; ++i) u[i] -= d * axis[i];
    const double nu = std::sqrt(u[0] * u[0] + u[1] * u[1] + u[2] * u[2]);
    for (double& c : u) c /= nu;
    const Vec3 v{axis[1] * u[2] - axis[2] * u[1], axis[2] * u[0] - axis[0] * u[2], axis[0] * u[1] - axis[1] * u[0]};
    AxisFrame f;
    for (std::size_t i = 0; i < 3; ++i) {
        f.basis(i, 0) = u[i];
        f.basis(i, 1) = v[i];
        f.basis(i, 2) = axis[i];
    }
    return f;
}

/// Index and sign of `v` if it is +-e_i, else nullopt.
std::optional<std::pair<std::size_t, double>> coordinate_axis(const Vec3& v) {
    std::optional<std::pair<std::size_t, double>> hit;
    for (std::size_t i = 0; i < 3; ++i) {
        if (std::fabs(v[i]) < kAxisTol) continue;
        if (hit || std::fabs(std::fabs(v[i]) - 1.0) > kAxisTol) return std::nullopt;
        hit = std::make_pair(i, v[i] > 0 ? 1.0 : -1.0);
    }
    return hit;
}

Vec3 column(const Mat3<double>& m, std::size_t c) { return {m(0, c), m(1, c), m(2, c)}; }

}  // namespace

std::size_t threads_from_env(std::size_t fallback) {
    if (const char* env = std::getenv("FKDIFF_THREADS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end != env && *end == '\0' && v > 0) return static_cast<std::size_t>(v);
    }
    return fallback;
}

FkEngine::FkEngine(KinematicChain chain, std::size_t batch_size, EngineOptions options)
    : chain_(std::move(chain)), batch_(batch_size), options_(options) {
    if (batch_ == 0) throw ShapeError("batch size must be at least 1");

    for (const auto& seg : chain_.segments) {
        const Joint& j = seg.joint;
        Segment s;
        s.link = j.origin();
        s.link_aligned = s.link;

        auto align = [&](const AxisFrame& frame) {
            Transform4<double> b = Transform4<double>::from_parts(frame.basis, {0.0, 0.0, 0.0});
            s.link_aligned = compose(s.link, b);
            s.post = Transform4<double>::from_parts(transpose(frame.basis), {0.0, 0.0, 0.0});
        };

        if (j.trainable_init) {
            if (j.type != JointType::Floating)
                throw ChainError("joint '" + j.name + "' is marked trainable but is not a floating joint");
            s.trainable_index = trainable_.size();
            trainable_.push_back(segments_.size());
        } else {
            switch (j.type) {
                case JointType::Fixed: break;
                case JointType::Revolute:
                case JointType::Continuous:
                case JointType::Prismatic: {
                    const std::size_t base = j.type == JointType::Prismatic ? kX : kAlpha;
                    if (auto hit = coordinate_axis(j.axis)) {
                        s.slots.emplace_back(base + hit->first, hit->second);
                    } else {
                        align(complete_axis(j.axis));
                        s.slots.emplace_back(base + 2, 1.0);
                    }
                    break;
                }
                case JointType::Planar: {
                    const AxisFrame frame = complete_axis(j.axis);
                    auto u = coordinate_axis(column(frame.basis, 0));
                    auto v = coordinate_axis(column(frame.basis, 1));
                    if (u && v && coordinate_axis(j.axis)) {
                        s.slots.emplace_back(u->first, u->second);
                        s.slots.emplace_back(v->first, v->second);
                    } else {
                        align(frame);
                        s.slots.emplace_back(kX, 1.0);
                        s.slots.emplace_back(kY, 1.0);
                    }
                    break;
                }
                case JointType::Floating:
                    for (std::size_t e = 0; e < 6; ++e) s.slots.emplace_back(e, 1.0);
                    break;
            }
        }
        if (!s.trainable_index) {
            bool translation_only = true;
            for (const auto& slot : s.slots) translation_only = translation_only && slot.first < kAlpha;
            if (s.slots.empty()) s.motion = Motion::Identity;
            else if (translation_only) s.motion = Motion::Translation;
            else if (s.slots.size() == 1) s.motion = s.slots[0].first == kAlpha ? Motion::RotX
                                                   : s.slots[0].first == kBeta  ? Motion::RotY
                                                                                : Motion::RotZ;
        }
        if (is_rotation(s.motion)) rotations_.emplace_back(segments_.size(), s.slots[0].first);
        dof_ += s.slots.size();
        segments_.push_back(std::move(s));
    }

    index_.reserve(batch_ * dof_);
    for (std::size_t k = 0; k < batch_; ++k)
        for (std::size_t i = 0; i < segments_.size(); ++i)
            for (const auto& [slot, sign] : segments_[i].slots) index_.push_back(IndexEntry{k, i, slot, sign});
}

namespace {

// Tile matrices hold the top three rows of a transform, entry-major:
// a[e * T + k] is entry e (row-major, 0..11) of configuration k.
constexpr std::size_t kRows = 12;

// Fills the entries of columns set in `columns` (bit j = column j).
FKDIFF_TILE_INLINE void broadcast(const double* l, std::size_t count, std::size_t T, double* __restrict dst, unsigned columns = 0xF) {
    for (std::size_t e = 0; e < kRows; ++e) {
        if (!(columns >> (e % 4) & 1u)) continue;
        for (std::size_t k = 0; k < count; ++k) dst[e * T + k] = l[e];
    }
}

// dst = a * b over the tile; same operation order as compose().
FKDIFF_TILE_INLINE void compose_tile(const double* __restrict a, const double* __restrict b, std::size_t count, std::size_t T,
                  double* __restrict dst) {
    for (std::size_t r = 0; r < 3; ++r) {
        const double* a0 = a + (r * 4) * T;
        const double* a1 = a + (r * 4 + 1) * T;
        const double* a2 = a + (r * 4 + 2) * T;
        const double* a3 = a + (r * 4 + 3) * T;
        for (std::size_t j = 0; j < 3; ++j) {
            const double* b0 = b + j * T;
            const double* b1 = b + (4 + j) * T;
            const double* b2 = b + (8 + j) * T;
            double* d = dst + (r * 4 + j) * T;
            for (std::size_t k = 0; k < count; ++k) d[k] = a0[k] * b0[k] + a1[k] * b1[k] + a2[k] * b2[k];
        }
        const double* b0 = b + 3 * T;
        const double* b1 = b + 7 * T;
        const double* b2 = b + 11 * T;
        double* d = dst + (r * 4 + 3) * T;
        for (std::size_t k = 0; k < count; ++k) d[k] = a0[k] * b0[k] + a1[k] * b1[k] + a2[k] * b2[k] + a3[k];
    }
}

// dst = a * c for a constant transform c.
FKDIFF_TILE_INLINE void compose_tile_const(const double* __restrict a, const Transform4<double>& c, std::size_t count, std::size_t T,
                        double* __restrict dst) {
    for (std::size_t r = 0; r < 3; ++r) {
        const double* a0 = a + (r * 4) * T;
        const double* a1 = a + (r * 4 + 1) * T;
        const double* a2 = a + (r * 4 + 2) * T;
        const double* a3 = a + (r * 4 + 3) * T;
        for (std::size_t j = 0; j < 4; ++j) {
            const double c0 = c(0, j), c1 = c(1, j), c2 = c(2, j);
            double* d = dst + (r * 4 + j) * T;
            if (j < 3) {
                for (std::size_t k = 0; k < count; ++k) d[k] = a0[k] * c0 + a1[k] * c1 + a2[k] * c2;
            } else {
                for (std::size_t k = 0; k < count; ++k) d[k] = a0[k] * c0 + a1[k] * c1 + a2[k] * c2 + a3[k];
            }
        }
    }
}

FKDIFF_TILE_INLINE void store_tile(const double* a, std::size_t count, std::size_t T, Transform4<double>* out, std::size_t stride) {
    for (std::size_t k = 0; k < count; ++k) {
        auto& m = out[k * stride].m;
        for (std::size_t e = 0; e < kRows; ++e) m[e] = a[e * T + k];
        m[12] = m[13] = m[14] = 0.0;
        m[15] = 1.0;
    }
}

}  // namespace

FKDIFF_TILE_CLONES void FkEngine::forward_tile(const double* q, std::size_t count, bool intermediates, Transform4<double>* out) const {
    const std::size_t n = segments_.size();
    if (n == 0) {
        if (!intermediates)
            for (std::size_t k = 0; k < count; ++k) out[k] = Transform4<double>::identity();
        return;
    }
    const std::size_t per = intermediates ? n : 1;
    const std::size_t row_stride = n * 6;
    constexpr std::size_t T = kTile;

    thread_local std::vector<double> scratch;
    scratch.resize(T * (3 * kRows + 3));
    double* acc = scratch.data();
    double* loc = acc + kRows * T;
    double* tmp = loc + kRows * T;
    double* ang = tmp + kRows * T;
    double* sn = ang + T;
    double* cs = sn + T;

    for (std::size_t i = 0; i < n; ++i) {
        const Segment& seg = segments_[i];
        const double* l = (seg.post ? seg.link_aligned : seg.link).m.data();
        const double* qi = q + i * 6;
        bool post_pending = seg.post.has_value();

        switch (seg.motion) {
            case Motion::Identity:
                broadcast(l, count, T, loc);
                break;
            case Motion::Translation:
                broadcast(l, count, T, loc, 0x7);
                for (std::size_t r = 0; r < 3; ++r) {
                    double* d = loc + (r * 4 + 3) * T;
                    for (std::size_t k = 0; k < count; ++k) {
                        const double* row = qi + k * row_stride;
                        d[k] = row[0] * l[r * 4] + row[1] * l[r * 4 + 1] + row[2] * l[r * 4 + 2] + l[r * 4 + 3];
                    }
                }
                break;
            case Motion::RotX:
            case Motion::RotY:
            case Motion::RotZ: {
                const std::size_t slot = seg.motion == Motion::RotX ? kAlpha : seg.motion == Motion::RotY ? kBeta : kGamma;
                for (std::size_t k = 0; k < count; ++k) ang[k] = qi[k * row_stride + slot];
                detail::batch_sincos(ang, count, sn, cs);
                // the two columns that rotate, (a, b): a <- c l_a + s l_b, b <- c l_b - s l_a
                const std::size_t a = seg.motion == Motion::RotX ? 1 : seg.motion == Motion::RotY ? 2 : 0;
                const std::size_t b = seg.motion == Motion::RotX ? 2 : seg.motion == Motion::RotY ? 0 : 1;
                broadcast(l, count, T, loc, 0xFu & ~(1u << a) & ~(1u << b));
                for (std::size_t r = 0; r < 3; ++r) {
                    const double la = l[r * 4 + a], lb = l[r * 4 + b];
                    double* da = loc + (r * 4 + a) * T;
                    double* db = loc + (r * 4 + b) * T;
                    for (std::size_t k = 0; k < count; ++k) {
                        da[k] = cs[k] * la + sn[k] * lb;
                        db[k] = cs[k] * lb - sn[k] * la;
                    }
                }
                break;
            }
            case Motion::General:
                for (std::size_t k = 0; k < count; ++k) {
                    const Transform4<double> t = local_transform(seg, qi + k * row_stride);
                    for (std::size_t e = 0; e < kRows; ++e) loc[e * T + k] = t.m[e];
                }
                post_pending = false;  // local_transform applied it
                break;
        }
        if (post_pending) {
            compose_tile_const(loc, *seg.post, count, T, tmp);
            std::swap(loc, tmp);
        }
        if (i == 0) {
            std::swap(acc, loc);
        } else {
            compose_tile(acc, loc, count, T, tmp);
            std::swap(acc, tmp);
        }
        if (intermediates) store_tile(acc, count, T, out + i, per);
    }
    if (!intermediates) store_tile(acc, count, T, out, per);
}

std::vector<Transform4<double>> FkEngine::link_transforms() const {
    std::vector<Transform4<double>> out;
    out.reserve(segments_.size());
    for (const auto& s : segments_) out.push_back(s.link);
    return out;
}

std::vector<double> FkEngine::initial_params() const {
    std::vector<double> out;
    out.reserve(param_count());
    for (std::size_t idx : trainable_) {
        const auto& init = *chain_.segments[idx].joint.trainable_init;
        out.insert(out.end(), init.values.begin(), init.values.end());
    }
    return out;
}

std::vector<JacobianMatrix> FkEngine::pose_jacobians(std::span<const double> thetas) const {
    check_inputs<double>(thetas, {});
    if (dof_ == 0) return std::vector<JacobianMatrix>(batch_, JacobianMatrix{6, 0, {}});

    auto run = [&]<std::size_t K>() {
        return batch_jacobian<K>(
            [&](std::span<const Dual<K>> xs) {
                const TransformBatch<Dual<K>> t = forward<Dual<K>>(xs);
                std::vector<Dual<K>> poses;
                poses.reserve(batch_ * 6);
                for (std::size_t k = 0; k < batch_; ++k) {
                    const auto p = pose_from_transform(t.at(k, 0)).as_array();
                    poses.insert(poses.end(), p.begin(), p.end());
                }
                return poses;
            },
            thetas, batch_);
    };
    if (dof_ <= 1) return run.template operator()<1>();
    if (dof_ <= 2) return run.template operator()<2>();
    if (dof_ <= 4) return run.template operator()<4>();
    return run.template operator()<8>();
}

std::vector<LimitViolation> FkEngine::check_limits(std::span<const double> thetas) const {
    check_inputs<double>(thetas, {});
    std::vector<LimitViolation> out;
    std::size_t r = 0;
    for (std::size_t k = 0; k < batch_; ++k) {
        for (std::size_t i = 0; i < segments_.size(); ++i) {
            const Joint& j = chain_.segments[i].joint;
            for (std::size_t d = 0; d < segments_[i].slots.size(); ++d, ++r) {
                if (!j.limits) continue;
                const double v = thetas[r];
                if (v < j.limits->lower || v > j.limits->upper)
                    out.push_back(LimitViolation{k, j.name, v, j.limits->lower, j.limits->upper});
            }
        }
    }
    return out;
}

}  // namespace fkdiff
