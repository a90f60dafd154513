#pragma once

// Rigid-body transforms and the SE(3) exponential / logarithm maps.
//
// Twists are ordered (omega, v): rotation part first, translation part
// second. manifold_step applies a left-multiplicative retraction, which is
// how every gradient-based pose update in this library moves on the group.

#include <cmath>

#include "lsc/error.hpp"
#include "lsc/mathcore/mat.hpp"

namespace lsc {

using Twist = Eigen::Matrix<double, 6, 1>; // (omega_x, omega_y, omega_z, v_x, v_y, v_z)

inline Mat3 skew(const Vec3& w) {
    Mat3 s;
    s << 0.0, -w.z(), w.y(),
         w.z(), 0.0, -w.x(),
        -w.y(), w.x(), 0.0;
    return s;
}

// Closest rotation to an almost-orthonormal matrix (polar factor, det +1).
inline Mat3 orthonormalize(const Mat3& m) {
    Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Mat3 r = svd.matrixU() * svd.matrixV().transpose();
    if (r.determinant() < 0.0) {
        Mat3 flip = Mat3::Identity();
        flip(2, 2) = -1.0;
        r = svd.matrixU() * flip * svd.matrixV().transpose();
    }
    return r;
}

inline double orthonormality_error(const Mat3& r) {
    return (r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff();
}

class RigidTransform {
public:
    RigidTransform() : R_(Mat3::Identity()), t_(Vec3::Zero()) {}

    // Validates the rotation: orthonormal within 1e-9 and det +1.
    RigidTransform(const Mat3& R, const Vec3& t) : R_(R), t_(t) {
        require(orthonormality_error(R) <= 1e-9, ErrorKind::Argument,
                "RigidTransform: rotation is not orthonormal");
        require(R.determinant() > 0.0, ErrorKind::Argument,
                "RigidTransform: rotation must have determinant +1");
    }

    static RigidTransform identity() { return RigidTransform(); }

    const Mat3& R() const { return R_; }
    const Vec3& t() const { return t_; }

    Vec3 apply(const Vec3& p) const { return R_ * p + t_; }

    Points apply(const Points& pts) const {
        Points out(pts.rows(), 3);
        out = pts * R_.transpose();
        out.rowwise() += t_.transpose();
        return out;
    }

    RigidTransform compose(const RigidTransform& other) const { // this ∘ other
        return trusted(R_ * other.R_, R_ * other.t_ + t_);
    }

    RigidTransform inverse() const {
        return trusted(R_.transpose(), -(R_.transpose() * t_));
    }

    // Constructs without validation; for results that are orthonormal by
    // construction (exponential map, composition of valid transforms).
    static RigidTransform trusted(const Mat3& R, const Vec3& t) {
        RigidTransform out;
        out.R_ = R;
        out.t_ = t;
        return out;
    }

private:
    Mat3 R_;
    Vec3 t_;
};

namespace detail {

// Rodrigues coefficients with series fallbacks accurate to 4th order,
// engaged below the branch threshold where the closed forms lose digits.
struct So3Coeffs {
    double a; // sin(x)/x
    double b; // (1-cos(x))/x^2
    double c; // (x-sin(x))/x^3
};

inline So3Coeffs so3_coeffs(double theta) {
    constexpr double kSmall = 1e-8;
    So3Coeffs k{};
    double t2 = theta * theta;
    if (theta < kSmall) {
        k.a = 1.0 - t2 / 6.0 + t2 * t2 / 120.0;
        k.b = 0.5 - t2 / 24.0 + t2 * t2 / 720.0;
        k.c = 1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0;
    } else {
        k.a = std::sin(theta) / theta;
        k.b = (1.0 - std::cos(theta)) / t2;
        k.c = (theta - std::sin(theta)) / (t2 * theta);
    }
    return k;
}

} // namespace detail

inline RigidTransform se3_exp(const Twist& xi) {
    Vec3 omega = xi.head<3>(), v = xi.tail<3>();
    double theta = omega.norm();
    Mat3 wx = skew(omega);
    detail::So3Coeffs k = detail::so3_coeffs(theta);
    Mat3 R = Mat3::Identity() + k.a * wx + k.b * wx * wx;
    Mat3 V = Mat3::Identity() + k.b * wx + k.c * wx * wx;
    return RigidTransform::trusted(R, V * v);
}

inline Twist se3_log(const RigidTransform& T) {
    const Mat3& R = T.R();
    double cos_theta = std::clamp((R.trace() - 1.0) * 0.5, -1.0, 1.0);
    double theta = std::acos(cos_theta);
    require(theta < M_PI - 1e-6, ErrorKind::Numerical,
            "se3_log: rotation angle at or near pi, logarithm branch is ambiguous");

    Vec3 omega;
    constexpr double kSmall = 1e-8;
    Vec3 axis_raw(R(2, 1) - R(1, 2), R(0, 2) - R(2, 0), R(1, 0) - R(0, 1));
    if (theta < kSmall) {
        // theta/(2 sin(theta)) -> 1/2 with quadratic correction
        omega = 0.5 * (1.0 + theta * theta / 6.0) * axis_raw;
    } else {
        omega = theta / (2.0 * std::sin(theta)) * axis_raw;
    }

    Mat3 wx = skew(omega);
    double t2 = theta * theta;
    double g; // coefficient of wx^2 in V^{-1}
    if (theta < kSmall) {
        g = 1.0 / 12.0 + t2 / 720.0 + t2 * t2 / 30240.0;
    } else {
        g = (1.0 - 0.5 * theta * std::sin(theta) / (1.0 - std::cos(theta))) / t2;
    }
    Mat3 Vinv = Mat3::Identity() - 0.5 * wx + g * wx * wx;

    Twist xi;
    xi.head<3>() = omega;
    xi.tail<3>() = Vinv * T.t();
    return xi;
}

// One gradient step on SE(3): T' = exp(-eta * grad) ∘ T, with a polar
// re-orthonormalization if accumulated drift exceeds the class invariant.
inline RigidTransform manifold_step(const RigidTransform& T, const Twist& grad, double eta) {
    RigidTransform stepped = se3_exp(Twist(-eta * grad)).compose(T);
    if (orthonormality_error(stepped.R()) > 1e-9)
        return RigidTransform::trusted(orthonormalize(stepped.R()), stepped.t());
    return stepped;
}

// Gradient of a point-set objective with respect to the left-multiplied
// tangent at the current transform. `world` holds the already-transformed
// points, `dl_dp` the objective's gradient at each of them.
inline Twist point_loss_tangent(const Points& world, const Points& dl_dp) {
    require(world.rows() == dl_dp.rows(), ErrorKind::Argument,
            "point_loss_tangent: point/gradient count mismatch");
    Twist g = Twist::Zero();
    for (Eigen::Index i = 0; i < world.rows(); ++i) {
        Vec3 p = world.row(i), d = dl_dp.row(i);
        g.head<3>() += p.cross(d);
        g.tail<3>() += d;
    }
    return g;
}

} // namespace lsc
