#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "core/error.hpp"

namespace ropnet::geom {

using Mat3 = Eigen::Matrix3d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using PointMatrix = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;

// N x 3 coordinates with optional unit normals.
struct PointCloud {
    PointMatrix points;
    std::optional<PointMatrix> normals;

    long size() const { return points.rows(); }
    bool has_normals() const { return normals.has_value(); }
};

// Rotation (special orthogonal) + translation. Points transform as rows:
// x' = x * R^T + t^T.
struct RigidTransform {
    Mat3 rotation = Mat3::Identity();
    Vec3 translation = Vec3::Zero();

    static RigidTransform identity() { return {}; }

    RigidTransform inverse() const {
        RigidTransform inv;
        inv.rotation = rotation.transpose();
        inv.translation = -(rotation.transpose() * translation);
        return inv;
    }
};

// Scalar-first (w, x, y, z) quaternion to rotation matrix; the quaternion is
// normalized first. Norm <= 1e-8 is rejected as degenerate.
Mat3 quat_to_rotation(const Vec4& q_wxyz);

// Intrinsic Z-Y-X Euler composition: R = Rz(yaw) * Ry(pitch) * Rx(roll),
// angles in radians.
Mat3 euler_zyx_to_rotation(double yaw, double pitch, double roll);

// Inverse of euler_zyx_to_rotation. gimbal is set when |pitch| is within
// 1e-6 rad of pi/2 and yaw/roll are not separable.
struct EulerZyx {
    double yaw, pitch, roll;
    bool gimbal;
};
EulerZyx rotation_to_euler_zyx(const Mat3& r);

PointCloud apply_transform(const RigidTransform& t, const PointCloud& cloud);
PointMatrix apply_transform(const RigidTransform& t, const PointMatrix& pts);

// compose(t1, t0): first t0, then t1. R = R1*R0, t = R1*t0 + t1.
RigidTransform compose(const RigidTransform& t1, const RigidTransform& t0);

bool is_rotation(const Mat3& r, double tol = 1e-5);

// ---- file I/O --------------------------------------------------------------
// ASCII: one point per line, "x y z [nx ny nz]"; '#' lines ignored.
// Binary: magic "ROPNETCLD", version u32, count u64, has_normals u32,
// little-endian float64 payload (points then normals), mirroring the
// checkpoint container conventions.

PointCloud load_cloud(const std::string& path);
void save_cloud_ascii(const PointCloud& cloud, const std::string& path);
void save_cloud_binary(const PointCloud& cloud, const std::string& path);

}  // namespace ropnet::geom
