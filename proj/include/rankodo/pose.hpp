#pragma once

#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <istream>
#include <numbers>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace rankodo::pose {

struct GimbalLockError : std::domain_error {
    GimbalLockError() : std::domain_error("pitch at +/-pi/2: Euler angles undefined") {}
};

struct ParseError : std::runtime_error {
    ParseError(std::size_t line_no, const std::string& msg)
        : std::runtime_error("pose line " + std::to_string(line_no) + ": " + msg),
          line(line_no) {}
    std::size_t line;
};

struct InvalidRotationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Vec3 {
    double x = 0.0, y = 0.0, z = 0.0;
};

inline Vec3 operator+(const Vec3& a, const Vec3& b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
inline Vec3 operator-(const Vec3& a, const Vec3& b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
inline Vec3 operator*(double s, const Vec3& v) { return {s * v.x, s * v.y, s * v.z}; }
inline double dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
inline Vec3 cross(const Vec3& a, const Vec3& b) {
    return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
inline double norm(const Vec3& v) { return std::sqrt(dot(v, v)); }

// Row-major 3x3 matrix; default-constructs to identity.
struct Mat3 {
    std::array<double, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};
    double& operator()(int r, int c) { return m[static_cast<std::size_t>(3 * r + c)]; }
    double operator()(int r, int c) const { return m[static_cast<std::size_t>(3 * r + c)]; }
};

inline Mat3 matmul(const Mat3& a, const Mat3& b) {
    Mat3 out;
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) {
            double s = 0.0;
            for (int k = 0; k < 3; ++k) s += a(r, k) * b(k, c);
            out(r, c) = s;
        }
    return out;
}

inline Vec3 apply(const Mat3& a, const Vec3& v) {
    return {a(0, 0) * v.x + a(0, 1) * v.y + a(0, 2) * v.z,
            a(1, 0) * v.x + a(1, 1) * v.y + a(1, 2) * v.z,
            a(2, 0) * v.x + a(2, 1) * v.y + a(2, 2) * v.z};
}

inline Mat3 transpose(const Mat3& a) {
    Mat3 out;
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) out(r, c) = a(c, r);
    return out;
}

inline double det(const Mat3& a) {
    return a(0, 0) * (a(1, 1) * a(2, 2) - a(1, 2) * a(2, 1)) -
           a(0, 1) * (a(1, 0) * a(2, 2) - a(1, 2) * a(2, 0)) +
           a(0, 2) * (a(1, 0) * a(2, 1) - a(1, 1) * a(2, 0));
}

// max |R^T R - I|, the orthonormality residual.
inline double orthonormality_residual(const Mat3& r) {
    const Mat3 g = matmul(transpose(r), r);
    double worst = 0.0;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            const double target = (i == j) ? 1.0 : 0.0;
            worst = std::max(worst, std::abs(g(i, j) - target));
        }
    return worst;
}

// Wrap to (-pi, pi].
inline double wrap_angle(double a) {
    a = std::remainder(a, 2.0 * std::numbers::pi);
    if (a <= -std::numbers::pi) a = std::numbers::pi;
    return a;
}

// Camera state as translation (meters) plus intrinsic ZYX Euler rotation
// (radians about the camera x, y, z axes). Angles live in (-pi, pi].
struct EulerPose6D {
    double x = 0.0, y = 0.0, z = 0.0;
    double roll = 0.0, pitch = 0.0, yaw = 0.0;
};

constexpr std::array<std::string_view, 6> kDofNames{"x", "y", "z", "roll", "pitch", "yaw"};

inline double& component(EulerPose6D& p, int dof) {
    switch (dof) {
        case 0: return p.x;
        case 1: return p.y;
        case 2: return p.z;
        case 3: return p.roll;
        case 4: return p.pitch;
        case 5: return p.yaw;
    }
    throw std::out_of_range("dof index must be in [0, 6)");
}

inline double component(const EulerPose6D& p, int dof) {
    return component(const_cast<EulerPose6D&>(p), dof);
}

inline bool is_valid(const EulerPose6D& p) {
    for (int d = 0; d < 6; ++d)
        if (!std::isfinite(component(p, d))) return false;
    const double pi = std::numbers::pi;
    for (int d = 3; d < 6; ++d) {
        const double a = component(p, d);
        if (a <= -pi || a > pi) return false;
    }
    return true;
}

// Camera-to-world rigid motion.
struct RigidTransform {
    Mat3 rotation;
    Vec3 translation;
};

inline bool is_valid(const RigidTransform& t, double tol = 1e-9) {
    for (double v : t.rotation.m)
        if (!std::isfinite(v)) return false;
    if (!std::isfinite(t.translation.x) || !std::isfinite(t.translation.y) ||
        !std::isfinite(t.translation.z))
        return false;
    return orthonormality_residual(t.rotation) < tol && std::abs(det(t.rotation) - 1.0) < tol;
}

// Absolute poses, frame 0 first; identity origin when built from relatives.
using Trajectory = std::vector<RigidTransform>;

inline Mat3 rotation_x(double a) {
    const double c = std::cos(a), s = std::sin(a);
    Mat3 r;
    r(1, 1) = c;
    r(1, 2) = -s;
    r(2, 1) = s;
    r(2, 2) = c;
    return r;
}

inline Mat3 rotation_y(double a) {
    const double c = std::cos(a), s = std::sin(a);
    Mat3 r;
    r(0, 0) = c;
    r(0, 2) = s;
    r(2, 0) = -s;
    r(2, 2) = c;
    return r;
}

inline Mat3 rotation_z(double a) {
    const double c = std::cos(a), s = std::sin(a);
    Mat3 r;
    r(0, 0) = c;
    r(0, 1) = -s;
    r(1, 0) = s;
    r(1, 1) = c;
    return r;
}

// R = Rz(yaw) * Ry(pitch) * Rx(roll)
inline RigidTransform euler_to_transform(const EulerPose6D& p) {
    RigidTransform t;
    t.rotation = matmul(rotation_z(p.yaw), matmul(rotation_y(p.pitch), rotation_x(p.roll)));
    t.translation = {p.x, p.y, p.z};
    return t;
}

// Inverse of euler_to_transform. Throws GimbalLockError at |pitch| = pi/2.
inline EulerPose6D transform_to_euler(const RigidTransform& t) {
    const Mat3& r = t.rotation;
    if (std::abs(r(2, 0)) > 1.0 - 1e-9) throw GimbalLockError{};
    EulerPose6D p;
    p.pitch = std::asin(-r(2, 0));
    p.roll = wrap_angle(std::atan2(r(2, 1), r(2, 2)));
    p.yaw = wrap_angle(std::atan2(r(1, 0), r(0, 0)));
    p.x = t.translation.x;
    p.y = t.translation.y;
    p.z = t.translation.z;
    return p;
}

// Applies b, then a.
inline RigidTransform compose(const RigidTransform& a, const RigidTransform& b) {
    return {matmul(a.rotation, b.rotation), apply(a.rotation, b.translation) + a.translation};
}

inline RigidTransform inverse(const RigidTransform& t) {
    const Mat3 rt = transpose(t.rotation);
    return {rt, -1.0 * apply(rt, t.translation)};
}

// Motion of frame b expressed in frame a: a^-1 * b.
inline RigidTransform relative_pose(const RigidTransform& a, const RigidTransform& b) {
    return compose(inverse(a), b);
}

inline Trajectory accumulate(std::span<const RigidTransform> relatives) {
    Trajectory traj;
    traj.reserve(relatives.size() + 1);
    traj.push_back(RigidTransform{});
    for (const auto& rel : relatives) traj.push_back(compose(traj.back(), rel));
    return traj;
}

namespace detail {

// Orthonormalize columns (Gram-Schmidt); right-handedness restored via the
// cross product, so callers must reject det <= 0 beforehand.
inline Mat3 gram_schmidt(const Mat3& r) {
    Vec3 c0{r(0, 0), r(1, 0), r(2, 0)};
    Vec3 c1{r(0, 1), r(1, 1), r(2, 1)};
    c0 = (1.0 / norm(c0)) * c0;
    c1 = c1 - dot(c1, c0) * c0;
    c1 = (1.0 / norm(c1)) * c1;
    const Vec3 c2 = cross(c0, c1);
    Mat3 out;
    out(0, 0) = c0.x; out(1, 0) = c0.y; out(2, 0) = c0.z;
    out(0, 1) = c1.x; out(1, 1) = c1.y; out(2, 1) = c1.z;
    out(0, 2) = c2.x; out(1, 2) = c2.y; out(2, 2) = c2.z;
    return out;
}

inline std::string format_g17(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace detail

// KITTI odometry pose file: one frame per line, 12 ASCII decimals forming
// the row-major 3x4 matrix [R|t]. Rotations within 1e-4 of orthonormal are
// re-orthonormalized (ground-truth files carry limited precision); worse
// ones are rejected.
inline Trajectory parse_kitti_poses(std::istream& in) {
    Trajectory traj;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::array<double, 12> vals{};
        std::size_t count = 0;
        const char* p = line.data();
        const char* end = p + line.size();
        while (p != end) {
            while (p != end && (*p == ' ' || *p == '\t' || *p == '\r')) ++p;
            if (p == end) break;
            if (count == 12) throw ParseError(line_no, "more than 12 fields");
            double v = 0.0;
            const auto res = std::from_chars(p, end, v);
            if (res.ec != std::errc{} || res.ptr == p)
                throw ParseError(line_no, "field " + std::to_string(count + 1) + " is not a number");
            if (res.ptr != end && *res.ptr != ' ' && *res.ptr != '\t' && *res.ptr != '\r')
                throw ParseError(line_no, "field " + std::to_string(count + 1) + " is not a number");
            if (!std::isfinite(v))
                throw ParseError(line_no, "field " + std::to_string(count + 1) + " is not finite");
            vals[count++] = v;
            p = res.ptr;
        }
        if (count == 0) continue;
        if (count != 12)
            throw ParseError(line_no, "expected 12 fields, got " + std::to_string(count));

        RigidTransform t;
        for (int r = 0; r < 3; ++r) {
            for (int c = 0; c < 3; ++c) t.rotation(r, c) = vals[static_cast<std::size_t>(4 * r + c)];
        }
        t.translation = {vals[3], vals[7], vals[11]};

        const double residual = orthonormality_residual(t.rotation);
        if (residual > 1e-4)
            throw InvalidRotationError("pose line " + std::to_string(line_no) +
                                       ": rotation is not orthonormal (residual " +
                                       detail::format_g17(residual) + ")");
        if (det(t.rotation) <= 0.0)
            throw InvalidRotationError("pose line " + std::to_string(line_no) +
                                       ": rotation has non-positive determinant");
        if (residual > 1e-9) t.rotation = detail::gram_schmidt(t.rotation);
        traj.push_back(t);
    }
    return traj;
}

inline Trajectory parse_kitti_poses(std::string_view text) {
    std::istringstream in{std::string(text)};
    return parse_kitti_poses(in);
}

// 17 significant digits so parse(write(traj)) reproduces every value bit
// for bit.
inline std::string write_kitti_poses(const Trajectory& traj) {
    std::string out;
    for (const auto& t : traj) {
        const std::array<double, 12> vals{
            t.rotation(0, 0), t.rotation(0, 1), t.rotation(0, 2), t.translation.x,
            t.rotation(1, 0), t.rotation(1, 1), t.rotation(1, 2), t.translation.y,
            t.rotation(2, 0), t.rotation(2, 1), t.rotation(2, 2), t.translation.z};
        for (std::size_t i = 0; i < vals.size(); ++i) {
            if (i) out += ' ';
            out += detail::format_g17(vals[i]);
        }
        out += '\n';
    }
    return out;
}

}  // namespace rankodo::pose
