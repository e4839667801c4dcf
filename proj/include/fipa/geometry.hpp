#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "fipa/rng.hpp"

namespace fipa {

using Vec3 = std::array<double, 3>;

// Rigid motion T = (R, t). Rotations are stored row-major and kept in double
// precision regardless of the working precision of the surrounding model:
// frame arithmetic is where invariance errors would compound fastest.
struct RigidTransform {
    std::array<double, 9> rotation{1, 0, 0, 0, 1, 0, 0, 0, 1};  // row-major 3x3
    Vec3 translation{0, 0, 0};

    static RigidTransform identity() { return RigidTransform{}; }
};

// Per-residue frames plus a validity mask (true = participates in attention).
struct FrameSet {
    std::vector<RigidTransform> frames;
    std::vector<bool> mask;

    std::size_t size() const { return frames.size(); }
};

// Gram–Schmidt frame from three points. The first axis points from `origin`
// toward `p_b`, the second is the component of origin->p_a orthogonal to it,
// the third completes the right-handed set; columns of R are those axes and
// t is `origin`. Throws NumericError when the points are degenerate (norms
// or orthogonal residuals below 1e-8).
RigidTransform frame_from_three_points(const Vec3& p_a, const Vec3& origin, const Vec3& p_b);

// y = R x + t
Vec3 apply(const RigidTransform& t, const Vec3& x);

// y = R^T (x - t)
Vec3 apply_inverse(const RigidTransform& t, const Vec3& x);

// compose(T1, T2) acts as T1 after T2: apply(compose(T1,T2), x) == apply(T1, apply(T2, x)).
RigidTransform compose(const RigidTransform& t1, const RigidTransform& t2);

RigidTransform inverse(const RigidTransform& t);

// Rotation uniform over SO(3) (normalized Gaussian quaternion); translation
// components i.i.d. Gaussian scaled by translation_scale.
RigidTransform random_rototranslation(Rng& rng, double translation_scale);

// Signed dihedral angle between the planes (p1,p2,p3) and (p2,p3,p4), in
// (-pi, pi] with the cis arrangement at 0 and trans at pi. Throws
// NumericError when a consecutive triple is collinear.
double torsion_angle(const Vec3& p1, const Vec3& p2, const Vec3& p3, const Vec3& p4);

}  // namespace fipa
