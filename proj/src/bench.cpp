#include "fkdiff/bench.hpp"

#include <sys/utsname.h>

#include <chrono>
#include <cmath>
#include <random>
#include <thread>

namespace fkdiff {

namespace {

using Matrix = std::vector<double>;  // 4x4 row-major

Matrix identity4() {
    Matrix m(16, 0.0);
    m[0] = m[5] = m[10] = m[15] = 1.0;
    return m;
}

Matrix multiply(const Matrix& a, const Matrix& b) {
    Matrix c(16, 0.0);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j)
            for (int k = 0; k < 4; ++k) c[i * 4 + j] += a[i * 4 + k] * b[k * 4 + j];
    return c;
}

Matrix from_rpy(const Vec3& xyz, const Vec3& rpy) {
    const Mat3<double> r = rot_z(rpy[2]) * rot_y(rpy[1]) * rot_x(rpy[0]);
    Matrix m = identity4();
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) m[i * 4 + j] = r(i, j);
        m[i * 4 + 3] = xyz[i];
    }
    return m;
}

Matrix axis_angle(const Vec3& a, double t) {
    // Rodrigues: I + sin t [a]x + (1 - cos t) [a]x^2
    const double s = std::sin(t), c = 1.0 - std::cos(t);
    const double x = a[0], y = a[1], z = a[2];
    Matrix m = identity4();
    m[0] = 1.0 - c * (y * y + z * z);
    m[1] = -s * z + c * x * y;
    m[2] = s * y + c * x * z;
    m[4] = s * z + c * x * y;
    m[5] = 1.0 - c * (x * x + z * z);
    m[6] = -s * x + c * y * z;
    m[8] = -s * y + c * x * z;
    m[9] = s * x + c * y * z;
    m[10] = 1.0 - c * (x * x + y * y);
    return m;
}

// In-plane directions of a planar joint: u is the coordinate axis least
// aligned with the normal, projected out; v = a x u.
std::pair<Vec3, Vec3> plane_basis(const Vec3& a) {
    std::size_t pick = 0;
    for (std::size_t i = 1; i < 3; ++i)
        if (std::fabs(a[i]) < std::fabs(a[pick])) pick = i;
    Vec3 u{0, 0, 0};
    u[pick] = 1.0;
    const double d = u[0] * a[0] + u[1] * a[1] + u[2] * a[2];
    for (int i = 0; i < 3; ++i) u[i] -= d * a[i];
    const double len = std::sqrt(u[0] * u[0] + u[1] * u[1] + u[2] * u[2]);
    for (int i = 0; i < 3; ++i) u[i] /= len;
    const Vec3 v{a[1] * u[2] - a[2] * u[1], a[2] * u[0] - a[0] * u[2], a[0] * u[1] - a[1] * u[0]};
    return {u, v};
}

double uniform(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

std::vector<double> random_thetas(std::mt19937_64& rng, std::size_t count) {
    std::vector<double> out(count);
    for (double& v : out) v = -M_PI + 2.0 * M_PI * uniform(rng);
    return out;
}

// One round: three discarded warm-up calls, then timed calls until both
// limits are met. `prepare` runs outside the timed region.
template <class Prepare, class Call>
BenchEntry measure(std::size_t ops_per_call, double min_seconds, Prepare&& prepare, Call&& call) {
    using clock = std::chrono::steady_clock;
    for (int i = 0; i < 3; ++i) {
        prepare();
        call();
    }
    BenchEntry e;
    e.batch_size = ops_per_call;
    while (e.iterations < 10 || e.seconds < min_seconds) {
        prepare();
        const auto t0 = clock::now();
        call();
        e.seconds += std::chrono::duration<double>(clock::now() - t0).count();
        ++e.iterations;
    }
    e.ops_per_sec = static_cast<double>(ops_per_call * e.iterations) / e.seconds;
    return e;
}

void keep_best(BenchEntry& best, const BenchEntry& round) {
    if (round.ops_per_sec > best.ops_per_sec) best = round;
}

}  // namespace

Transform4<double> sequential_fk(const KinematicChain& chain, std::span<const double> theta) {
    Matrix acc = identity4();
    std::size_t r = 0;
    for (const ChainSegment& seg : chain.segments) {
        const Joint& j = seg.joint;
        acc = multiply(acc, from_rpy(j.origin_xyz, j.origin_rpy));
        Matrix motion = identity4();
        switch (j.type) {
            case JointType::Fixed:
                break;
            case JointType::Revolute:
            case JointType::Continuous:
                motion = axis_angle(j.axis, theta[r++]);
                break;
            case JointType::Prismatic: {
                const double d = theta[r++];
                for (int i = 0; i < 3; ++i) motion[i * 4 + 3] = j.axis[i] * d;
                break;
            }
            case JointType::Planar: {
                const auto [u, v] = plane_basis(j.axis);
                const double a = theta[r++], b = theta[r++];
                for (int i = 0; i < 3; ++i) motion[i * 4 + 3] = a * u[i] + b * v[i];
                break;
            }
            case JointType::Floating: {
                std::array<double, 6> p{};
                if (j.trainable_init) {
                    p = j.trainable_init->values;
                } else {
                    for (double& v : p) v = theta[r++];
                }
                motion = from_rpy({p[0], p[1], p[2]}, {p[3], p[4], p[5]});
                break;
            }
        }
        acc = multiply(acc, motion);
    }
    Transform4<double> out;
    for (int i = 0; i < 16; ++i) out.m[i] = acc[i];
    return out;
}

std::string machine_descriptor() {
    std::string out;
    utsname u{};
    if (uname(&u) == 0) out = std::string(u.sysname) + " " + u.release + " " + u.machine + ", ";
    out += std::to_string(std::thread::hardware_concurrency()) + " hardware threads";
#if defined(__clang__)
    out += ", clang " __clang_version__;
#elif defined(__GNUC__)
    out += ", gcc " __VERSION__;
#endif
    return out;
}

BenchReport run_bench(const EngineFactory& factory, std::span<const std::size_t> batch_sizes,
                      const BenchOptions& options) {
    BenchReport report;
    report.machine = machine_descriptor();
    std::mt19937_64 rng(options.seed);

    std::vector<FkEngine> engines;
    for (std::size_t b : batch_sizes) {
        if (b == 0) throw ShapeError("benchmark batch sizes must be positive");
        engines.push_back(factory(b));
        report.threads = engines.back().options().threads;
    }
    const FkEngine one = factory(1);
    report.entries.resize(engines.size());
    report.baseline.batch_size = 1;

    std::size_t sink = 0;
    double checksum = 0.0;
    std::vector<double> thetas;
    std::vector<TransformBatch<double>> outputs(engines.size());
    for (std::size_t round = 0; round < std::max<std::size_t>(1, options.rounds); ++round) {
        for (std::size_t i = 0; i < engines.size(); ++i) {
            const FkEngine& engine = engines[i];
            keep_best(report.entries[i],
                      measure(
                          engine.batch_size(), options.min_seconds,
                          [&] { thetas = random_thetas(rng, engine.batch_size() * engine.dof()); },
                          [&] {
                              engine.forward_into<double>(thetas, outputs[i]);
                              sink += outputs[i].data.size();
                          }));
        }
        keep_best(report.baseline, measure(
                                       1, options.min_seconds, [&] { thetas = random_thetas(rng, one.dof()); },
                                       [&] { checksum += sequential_fk(one.chain(), thetas)(0, 3); }));
    }
    if (sink == 0 && !engines.empty()) throw std::logic_error("benchmark produced no output");
    if (!std::isfinite(checksum)) throw NumericError("baseline produced a non-finite transform");
    return report;
}

}  // namespace fkdiff
