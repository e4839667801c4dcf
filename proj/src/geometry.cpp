#include "fipa/geometry.hpp"

#include <cmath>
#include <numbers>

#include "fipa/error.hpp"

namespace fipa {

namespace {

constexpr double kDegenerate = 1e-8;

Vec3 sub(const Vec3& a, const Vec3& b) {
    return {a[0] - b[0], a[1] - b[1], a[2] - b[2]};
}

double dot(const Vec3& a, const Vec3& b) {
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
}

Vec3 cross(const Vec3& a, const Vec3& b) {
    return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}

double norm(const Vec3& a) {
    return std::sqrt(dot(a, a));
}

Vec3 scaled(const Vec3& a, double s) {
    return {a[0] * s, a[1] * s, a[2] * s};
}

}  // namespace

RigidTransform frame_from_three_points(const Vec3& p_a, const Vec3& origin, const Vec3& p_b) {
    const Vec3 u = sub(p_b, origin);
    const Vec3 v = sub(p_a, origin);
    const double nu = norm(u);
    const double nv = norm(v);
    if (nu < kDegenerate || nv < kDegenerate) {
        throw NumericError("singular frame: a spanning vector is shorter than 1e-8");
    }
    const Vec3 e1 = scaled(u, 1.0 / nu);
    const Vec3 w = sub(v, scaled(e1, dot(v, e1)));
    const double nw = norm(w);
    if (nw < kDegenerate) {
        throw NumericError("singular frame: spanning vectors are parallel within 1e-8");
    }
    const Vec3 e2 = scaled(w, 1.0 / nw);
    const Vec3 e3 = cross(e1, e2);

    RigidTransform t;
    for (int r = 0; r < 3; ++r) {
        t.rotation[3 * r + 0] = e1[r];
        t.rotation[3 * r + 1] = e2[r];
        t.rotation[3 * r + 2] = e3[r];
    }
    t.translation = origin;
    return t;
}

Vec3 apply(const RigidTransform& t, const Vec3& x) {
    const auto& r = t.rotation;
    return {r[0] * x[0] + r[1] * x[1] + r[2] * x[2] + t.translation[0],
            r[3] * x[0] + r[4] * x[1] + r[5] * x[2] + t.translation[1],
            r[6] * x[0] + r[7] * x[1] + r[8] * x[2] + t.translation[2]};
}

Vec3 apply_inverse(const RigidTransform& t, const Vec3& x) {
    const auto& r = t.rotation;
    const Vec3 d = sub(x, t.translation);
    return {r[0] * d[0] + r[3] * d[1] + r[6] * d[2],
            r[1] * d[0] + r[4] * d[1] + r[7] * d[2],
            r[2] * d[0] + r[5] * d[1] + r[8] * d[2]};
}

RigidTransform compose(const RigidTransform& t1, const RigidTransform& t2) {
    RigidTransform out;
    const auto& a = t1.rotation;
    const auto& b = t2.rotation;
    for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) {
            out.rotation[3 * r + c] =
                a[3 * r + 0] * b[0 + c] + a[3 * r + 1] * b[3 + c] + a[3 * r + 2] * b[6 + c];
        }
    }
    out.translation = apply(t1, t2.translation);
    return out;
}

RigidTransform inverse(const RigidTransform& t) {
    RigidTransform out;
    const auto& r = t.rotation;
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
            out.rotation[3 * i + j] = r[3 * j + i];
        }
    }
    const Vec3 rt = {r[0] * t.translation[0] + r[3] * t.translation[1] + r[6] * t.translation[2],
                     r[1] * t.translation[0] + r[4] * t.translation[1] + r[7] * t.translation[2],
                     r[2] * t.translation[0] + r[5] * t.translation[1] + r[8] * t.translation[2]};
    out.translation = scaled(rt, -1.0);
    return out;
}

RigidTransform random_rototranslation(Rng& rng, double translation_scale) {
    FIPA_REQUIRE(translation_scale >= 0.0, "translation_scale must be non-negative");

    // A normalized 4-vector of i.i.d. Gaussians is uniform on the 3-sphere,
    // so the induced rotation is uniform over SO(3).
    double qw = 0, qx = 0, qy = 0, qz = 0, qn = 0;
    do {
        qw = rng.gaussian();
        qx = rng.gaussian();
        qy = rng.gaussian();
        qz = rng.gaussian();
        qn = std::sqrt(qw * qw + qx * qx + qy * qy + qz * qz);
    } while (qn < 1e-12);
    qw /= qn;
    qx /= qn;
    qy /= qn;
    qz /= qn;

    RigidTransform t;
    t.rotation = {1 - 2 * (qy * qy + qz * qz), 2 * (qx * qy - qw * qz), 2 * (qx * qz + qw * qy),
                  2 * (qx * qy + qw * qz), 1 - 2 * (qx * qx + qz * qz), 2 * (qy * qz - qw * qx),
                  2 * (qx * qz - qw * qy), 2 * (qy * qz + qw * qx), 1 - 2 * (qx * qx + qy * qy)};
    t.translation = {translation_scale * rng.gaussian(), translation_scale * rng.gaussian(),
                     translation_scale * rng.gaussian()};
    return t;
}

double torsion_angle(const Vec3& p1, const Vec3& p2, const Vec3& p3, const Vec3& p4) {
    const Vec3 b1 = sub(p2, p1);
    const Vec3 b2 = sub(p3, p2);
    const Vec3 b3 = sub(p4, p3);
    const double nb2 = norm(b2);
    if (norm(b1) < kDegenerate || nb2 < kDegenerate || norm(b3) < kDegenerate) {
        throw NumericError("undefined dihedral: a bond vector is shorter than 1e-8");
    }
    const Vec3 n1 = cross(b1, b2);
    const Vec3 n2 = cross(b2, b3);
    if (norm(n1) < kDegenerate || norm(n2) < kDegenerate) {
        throw NumericError("undefined dihedral: three consecutive points are collinear");
    }
    const Vec3 b2_hat = scaled(b2, 1.0 / nb2);
    const double angle = std::atan2(dot(cross(n1, n2), b2_hat), dot(n1, n2));
    // atan2 lands in [-pi, pi]; fold the closed lower end onto +pi.
    if (angle <= -std::numbers::pi) return std::numbers::pi;
    return angle;
}

}  // namespace fipa
