#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "fkdiff/autodiff.hpp"
#include "fkdiff/transforms.hpp"
#include "random_robot.hpp"

using namespace fkdiff;

namespace {

// Reference 3x3 product, written without the library's Mat3 operator.
std::array<double, 9> mul3(const std::array<double, 9>& a, const std::array<double, 9>& b) {
    std::array<double, 9> c{};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            for (int k = 0; k < 3; ++k) c[i * 3 + j] += a[i * 3 + k] * b[k * 3 + j];
    return c;
}

std::array<double, 9> ref_rx(double t) { return {1, 0, 0, 0, std::cos(t), -std::sin(t), 0, std::sin(t), std::cos(t)}; }
std::array<double, 9> ref_ry(double t) { return {std::cos(t), 0, std::sin(t), 0, 1, 0, -std::sin(t), 0, std::cos(t)}; }
std::array<double, 9> ref_rz(double t) { return {std::cos(t), -std::sin(t), 0, std::sin(t), std::cos(t), 0, 0, 0, 1}; }

double max_diff(const std::array<double, 9>& a, const std::array<double, 9>& b) {
    double w = 0;
    for (int i = 0; i < 9; ++i) w = std::max(w, std::fabs(a[i] - b[i]));
    return w;
}

template <class S>
double max_diff(const Transform4<S>& a, const Transform4<S>& b) {
    double w = 0;
    for (int i = 0; i < 16; ++i) w = std::max(w, std::fabs(double(a.m[i] - b.m[i])));
    return w;
}

Transform4<double> random_transform(std::mt19937_64& rng) {
    SixDofParams<double> p;
    for (int i = 0; i < 3; ++i) p[i] = gen::uniform(rng, -2, 2);
    for (int i = 3; i < 6; ++i) p[i] = gen::uniform(rng, -M_PI, M_PI);
    return sixdof_to_transform(p);
}

double wrap(double a) { return std::remainder(a, 2 * M_PI); }

}  // namespace

TEST(Transforms, AxisRotations) {
    EXPECT_EQ(rot_z(0.0).m, Mat3<double>::identity().m);
    const Mat3<double> r = rot_z(M_PI / 2);
    EXPECT_NEAR(r(0, 0), 0.0, 1e-16);
    EXPECT_NEAR(r(1, 0), 1.0, 1e-16);
    EXPECT_NEAR(r(2, 0), 0.0, 1e-16);
    EXPECT_LT(max_diff((rot_x(0.3) * rot_x(-0.3)).m, Mat3<double>::identity().m), 1e-12);
    // standard form: bottom-left of Rx is 0
    EXPECT_EQ(rot_x(0.7)(2, 0), 0.0);
    for (double t : {-2.0, 0.1, 1.3}) {
        EXPECT_LT(max_diff(rot_x(t).m, ref_rx(t)), 1e-16);
        EXPECT_LT(max_diff(rot_y(t).m, ref_ry(t)), 1e-16);
        EXPECT_LT(max_diff(rot_z(t).m, ref_rz(t)), 1e-16);
    }
}

TEST(Transforms, RpyIsProductZyx) {
    EXPECT_EQ(rpy_to_rotation(0.0, 0.0, 0.0).m, Mat3<double>::identity().m);
    for (double a : {-1.0, 0.4, 2.5}) EXPECT_EQ(rpy_to_rotation(a, 0.0, 0.0).m, rot_x(a).m);
    EXPECT_LT(max_diff(rpy_to_rotation(0.1, 0.2, 0.3).m, mul3(ref_rz(0.3), mul3(ref_ry(0.2), ref_rx(0.1)))), 1e-14);
    std::mt19937_64 rng(1);
    for (int i = 0; i < 1000; ++i) {
        const double a = gen::uniform(rng, -4, 4), b = gen::uniform(rng, -4, 4), g = gen::uniform(rng, -4, 4);
        const Mat3<double> r = rpy_to_rotation(a, b, g);
        EXPECT_LT(max_diff(r.m, mul3(ref_rz(g), mul3(ref_ry(b), ref_rx(a)))), 1e-14);
        EXPECT_LT(orthonormality_error(r), 1e-9);
        EXPECT_NEAR(determinant(r), 1.0, 1e-9);
    }
}

TEST(Transforms, SixDof) {
    EXPECT_EQ(sixdof_to_transform(SixDofParams<double>{}).m, Transform4<double>::identity().m);
    const auto ty = sixdof_to_transform(SixDofParams<double>{{0, 0.4, 0, 0, 0, 0}});
    EXPECT_EQ(ty.m, Transform4<double>::translation(0, 0.4, 0).m);
    const auto rz = sixdof_to_transform(SixDofParams<double>{{0, 0, 0, 0, 0, 0.9}});
    EXPECT_LT(max_diff(rz.rotation().m, rot_z(0.9).m), 1e-16);
    EXPECT_EQ(rz.translation_part(), (std::array<double, 3>{0, 0, 0}));
}

TEST(Transforms, Compose) {
    std::mt19937_64 rng(2);
    const auto t = random_transform(rng);
    EXPECT_EQ(compose(Transform4<double>::identity(), t).m, t.m);
    EXPECT_EQ(compose(t, Transform4<double>::identity()).m, t.m);
    EXPECT_EQ(compose(Transform4<double>::translation(1, 0, 0), Transform4<double>::translation(0, 2, 0)).m,
              Transform4<double>::translation(1, 2, 0).m);
    for (int i = 0; i < 200; ++i) {
        const auto a = random_transform(rng), b = random_transform(rng), c = random_transform(rng),
                   d = random_transform(rng);
        const auto left = compose(compose(compose(a, b), c), d);
        const auto right = compose(a, compose(b, compose(c, d)));
        EXPECT_LT(max_diff(left, right), 1e-12);
        EXPECT_EQ(left(3, 0), 0.0);
        EXPECT_EQ(left(3, 1), 0.0);
        EXPECT_EQ(left(3, 2), 0.0);
        EXPECT_EQ(left(3, 3), 1.0);
        EXPECT_LT(orthonormality_error(left.rotation()), 1e-9);
        EXPECT_NEAR(determinant(left.rotation()), 1.0, 1e-9);
        EXPECT_LT(max_diff(compose(a, inverse(a)), Transform4<double>::identity()), 1e-14);
    }
}

TEST(Transforms, PoseRoundTrip) {
    const auto zero = pose_from_transform(Transform4<double>::identity());
    EXPECT_EQ(zero.as_array(), (std::array<double, 6>{0, 0, 0, 0, 0, 0}));
    EXPECT_FALSE(zero.degenerate);

    const auto p = pose_from_transform(sixdof_to_transform(SixDofParams<double>{{1, 2, 3, 0.1, 0.2, 0.3}}));
    const std::array<double, 6> want{1, 2, 3, 0.1, 0.2, 0.3};
    for (int i = 0; i < 6; ++i) EXPECT_NEAR(p.as_array()[i], want[i], 1e-10);

    std::mt19937_64 rng(3);
    for (int i = 0; i < 10000; ++i) {
        SixDofParams<double> s{{gen::uniform(rng, -5, 5), gen::uniform(rng, -5, 5), gen::uniform(rng, -5, 5),
                                gen::uniform(rng, -M_PI, M_PI), gen::uniform(rng, -M_PI / 2 + 1e-3, M_PI / 2 - 1e-3),
                                gen::uniform(rng, -M_PI, M_PI)}};
        const auto q = pose_from_transform(sixdof_to_transform(s));
        ASSERT_FALSE(q.degenerate);
        for (int k = 0; k < 3; ++k) ASSERT_NEAR(q.as_array()[k], s[k], 1e-10);
        // +-pi are the same angle
        for (int k = 3; k < 6; ++k) ASSERT_NEAR(wrap(q.as_array()[k] - s[k]), 0.0, 1e-10);
    }
}

TEST(Transforms, GimbalLock) {
    for (double beta : {M_PI / 2, -M_PI / 2}) {
        const auto t = sixdof_to_transform(SixDofParams<double>{{0, 0, 0, 0.4, beta, 0.3}});
        const auto p = pose_from_transform(t);
        EXPECT_TRUE(p.degenerate);
        EXPECT_EQ(p.alpha, 0.0);
        EXPECT_NEAR(p.beta, beta, 1e-7);
        // the extracted angles still describe the same rotation
        const auto back = sixdof_to_transform(SixDofParams<double>{{0, 0, 0, p.alpha, p.beta, p.gamma}});
        EXPECT_LT(max_diff(back, t), 1e-6);
    }
    EXPECT_FALSE(pose_from_transform(sixdof_to_transform(SixDofParams<double>{{0, 0, 0, 0, 1.5, 0}})).degenerate);
}

TEST(Transforms, Quaternion) {
    const auto qi = quaternion_from_rotation(Mat3<double>::identity());
    EXPECT_EQ(qi.w, 1.0);
    EXPECT_EQ(qi.x, 0.0);
    EXPECT_EQ(qi.y, 0.0);
    EXPECT_EQ(qi.z, 0.0);
    const auto qz = quaternion_from_rotation(rot_z(M_PI));
    EXPECT_NEAR(qz.w, 0.0, 1e-16);
    EXPECT_NEAR(qz.x, 0.0, 1e-16);
    EXPECT_NEAR(qz.y, 0.0, 1e-16);
    EXPECT_NEAR(qz.z, 1.0, 1e-16);

    std::mt19937_64 rng(4);
    for (int i = 0; i < 10000; ++i) {
        const Mat3<double> r = random_transform(rng).rotation();
        const auto q = quaternion_from_rotation(r);
        EXPECT_GE(q.w, 0.0);
        EXPECT_NEAR(q.w * q.w + q.x * q.x + q.y * q.y + q.z * q.z, 1.0, 1e-9);
        ASSERT_LT(max_diff(rotation_from_quaternion(q).m, r.m), 1e-10);
    }
    // half-angle oracle for an axis-angle rotation
    const double t = 1.1;
    const auto q = quaternion_from_rotation(rot_y(t));
    EXPECT_NEAR(q.w, std::cos(t / 2), 1e-15);
    EXPECT_NEAR(q.y, std::sin(t / 2), 1e-15);

    Mat3<double> bad = Mat3<double>::identity();
    bad(0, 1) = 0.01;
    EXPECT_THROW(quaternion_from_rotation(bad), std::invalid_argument);
}

TEST(Transforms, FloatScalar) {
    const auto tf = sixdof_to_transform(SixDofParams<float>{{1.f, 2.f, 3.f, 0.1f, 0.2f, 0.3f}});
    const auto td = sixdof_to_transform(SixDofParams<double>{{1, 2, 3, 0.1, 0.2, 0.3}});
    for (int i = 0; i < 16; ++i) EXPECT_NEAR(tf.m[i], td.m[i], 1e-6);
    const auto p = pose_from_transform(tf);
    EXPECT_NEAR(p.gamma, 0.3f, 1e-6);
    EXPECT_LT(orthonormality_error(tf.rotation()), 1e-6);
}

// Derivatives of every operation over dual numbers vs central differences.
TEST(Transforms, DualMatchesFiniteDifferences) {
    std::mt19937_64 rng(6);
    const double h = 1e-6;
    auto check = [&](auto&& f, std::array<double, 6> x) {
        const auto J = jacobian<6>(
            [&](auto in) {
                SixDofParams<Dual<6>> p;
                for (int i = 0; i < 6; ++i) p[i] = in[i];
                return f(p);
            },
            std::span<const double>(x));
        for (std::size_t c = 0; c < 6; ++c) {
            auto xp = x, xm = x;
            xp[c] += h;
            xm[c] -= h;
            auto eval = [&](const std::array<double, 6>& v) {
                SixDofParams<Dual<6>> p;
                for (int i = 0; i < 6; ++i) p[i] = Dual<6>(v[i]);
                return f(p);
            };
            const auto yp = eval(xp), ym = eval(xm);
            for (std::size_t r = 0; r < J.rows; ++r) {
                const double fd = (yp[r].value - ym[r].value) / (2 * h);
                const double tol = std::max(1e-8, 1e-5 * std::fabs(fd));
                EXPECT_NEAR(J(r, c), fd, tol) << "row " << r << " col " << c;
            }
        }
    };
    auto as_vec = [](const Transform4<Dual<6>>& t) { return std::vector<Dual<6>>(t.m.begin(), t.m.begin() + 12); };
    for (int i = 0; i < 20; ++i) {
        std::array<double, 6> x;
        for (int k = 0; k < 3; ++k) x[k] = gen::uniform(rng, -1, 1);
        x[3] = gen::uniform(rng, -3, 3);
        x[4] = gen::uniform(rng, -1.4, 1.4);
        x[5] = gen::uniform(rng, -3, 3);
        check([&](const SixDofParams<Dual<6>>& p) { return as_vec(sixdof_to_transform(p)); }, x);
        check([&](const SixDofParams<Dual<6>>& p) {
                  const auto t = compose(sixdof_to_transform(p), inverse(sixdof_to_transform(p)));
                  auto v = as_vec(compose(sixdof_to_transform(p), sixdof_to_transform(p)));
                  v.insert(v.end(), t.m.begin(), t.m.begin() + 12);
                  return v;
              },
              x);
        check([&](const SixDofParams<Dual<6>>& p) {
                  const auto pose = pose_from_transform(compose(sixdof_to_transform(p), sixdof_to_transform(p)));
                  const auto a = pose.as_array();
                  return std::vector<Dual<6>>(a.begin(), a.end());
              },
              x);
        check([&](const SixDofParams<Dual<6>>& p) {
                  const auto q = quaternion_from_rotation(sixdof_to_transform(p).rotation());
                  return std::vector<Dual<6>>{q.w, q.x, q.y, q.z};
              },
              x);
    }
}
