#include "geom/cloud.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace ropnet::geom {

Mat3 quat_to_rotation(const Vec4& q_wxyz) {
    double norm = q_wxyz.norm();
    if (norm <= 1e-8)
        throw Error(Status::Numeric, "quat_to_rotation: near-zero quaternion");
    Vec4 q = q_wxyz / norm;
    double w = q(0), x = q(1), y = q(2), z = q(3);
    Mat3 r;
    r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
        2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
        2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
    return r;
}

Mat3 euler_zyx_to_rotation(double yaw, double pitch, double roll) {
    Mat3 rz, ry, rx;
    rz << std::cos(yaw), -std::sin(yaw), 0, std::sin(yaw), std::cos(yaw), 0, 0, 0, 1;
    ry << std::cos(pitch), 0, std::sin(pitch), 0, 1, 0, -std::sin(pitch), 0,
        std::cos(pitch);
    rx << 1, 0, 0, 0, std::cos(roll), -std::sin(roll), 0, std::sin(roll), std::cos(roll);
    return rz * ry * rx;
}

EulerZyx rotation_to_euler_zyx(const Mat3& r) {
    EulerZyx e{};
    double sp = -r(2, 0);
    sp = std::clamp(sp, -1.0, 1.0);
    e.pitch = std::asin(sp);
    if (std::abs(std::abs(e.pitch) - M_PI / 2) < 1e-6) {
        e.gimbal = true;
        e.yaw = std::atan2(-r(0, 1), r(1, 1));
        e.roll = 0.0;
    } else {
        e.gimbal = false;
        e.yaw = std::atan2(r(1, 0), r(0, 0));
        e.roll = std::atan2(r(2, 1), r(2, 2));
    }
    return e;
}

PointMatrix apply_transform(const RigidTransform& t, const PointMatrix& pts) {
    PointMatrix out = pts * t.rotation.transpose();
    out.rowwise() += t.translation.transpose();
    return out;
}

PointCloud apply_transform(const RigidTransform& t, const PointCloud& cloud) {
    PointCloud out;
    out.points = apply_transform(t, cloud.points);
    if (cloud.normals) out.normals = *cloud.normals * t.rotation.transpose();
    return out;
}

RigidTransform compose(const RigidTransform& t1, const RigidTransform& t0) {
    RigidTransform out;
    out.rotation = t1.rotation * t0.rotation;
    out.translation = t1.rotation * t0.translation + t1.translation;
    return out;
}

bool is_rotation(const Mat3& r, double tol) {
    Mat3 rtr = r.transpose() * r;
    return (rtr - Mat3::Identity()).cwiseAbs().maxCoeff() <= tol &&
           std::abs(r.determinant() - 1.0) <= tol;
}

// ---- I/O --------------------------------------------------------------------

namespace {

constexpr char kCloudMagic[] = "ROPNETCLD";

void put_u32(std::ostream& os, uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
    os.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& os, uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
    os.write(reinterpret_cast<const char*>(b), 8);
}

void put_f64(std::ostream& os, double d) {
    uint64_t v;
    std::memcpy(&v, &d, 8);
    put_u64(os, v);
}

uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
    return v;
}

uint64_t get_u64(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
    return v;
}

double get_f64(std::istream& is) {
    uint64_t v = get_u64(is);
    double d;
    std::memcpy(&d, &v, 8);
    return d;
}

PointCloud load_cloud_binary(std::istream& is, const std::string& path) {
    char magic[9];
    is.read(magic, 9);
    if (!is || std::memcmp(magic, kCloudMagic, 9) != 0)
        throw Error(Status::Data, "not a binary cloud file: " + path);
    uint32_t version = get_u32(is);
    if (version != 1)
        throw Error(Status::Data, "unsupported cloud format version in " + path);
    uint64_t n = get_u64(is);
    uint32_t has_normals = get_u32(is);
    PointCloud cloud;
    cloud.points.resize(static_cast<long>(n), 3);
    for (uint64_t i = 0; i < n; ++i)
        for (int c = 0; c < 3; ++c) cloud.points(static_cast<long>(i), c) = get_f64(is);
    if (has_normals) {
        PointMatrix nrm(static_cast<long>(n), 3);
        for (uint64_t i = 0; i < n; ++i)
            for (int c = 0; c < 3; ++c) nrm(static_cast<long>(i), c) = get_f64(is);
        cloud.normals = std::move(nrm);
    }
    if (!is) throw Error(Status::Data, "truncated cloud file: " + path);
    return cloud;
}

}  // namespace

PointCloud load_cloud(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error(Status::Data, "cannot open cloud file: " + path);
    char head[9] = {};
    is.read(head, 9);
    if (is && std::memcmp(head, kCloudMagic, 9) == 0) {
        is.seekg(0);
        return load_cloud_binary(is, path);
    }
    is.close();

    std::ifstream text(path);
    std::vector<double> coords;
    std::vector<double> normals;
    std::string line;
    bool any_normals = false;
    long row = 0;
    while (std::getline(text, line)) {
        size_t first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#') continue;
        std::istringstream ss(line);
        double x, y, z;
        if (!(ss >> x >> y >> z))
            throw Error(Status::Data, "bad point row in " + path + ": " + line);
        coords.insert(coords.end(), {x, y, z});
        double nx, ny, nz;
        if (ss >> nx >> ny >> nz) {
            if (row != 0 && !any_normals)
                throw Error(Status::Data, "inconsistent normal columns in " + path);
            any_normals = true;
            normals.insert(normals.end(), {nx, ny, nz});
        } else if (any_normals) {
            throw Error(Status::Data, "inconsistent normal columns in " + path);
        }
        ++row;
    }
    if (row == 0) throw Error(Status::Data, "empty cloud file: " + path);
    PointCloud cloud;
    cloud.points.resize(row, 3);
    for (long i = 0; i < row; ++i)
        for (int c = 0; c < 3; ++c) cloud.points(i, c) = coords[static_cast<size_t>(3 * i + c)];
    if (any_normals) {
        PointMatrix nrm(row, 3);
        for (long i = 0; i < row; ++i)
            for (int c = 0; c < 3; ++c) nrm(i, c) = normals[static_cast<size_t>(3 * i + c)];
        cloud.normals = std::move(nrm);
    }
    return cloud;
}

void save_cloud_ascii(const PointCloud& cloud, const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "w");
    if (!f) throw Error(Status::Data, "cannot open cloud file for writing: " + path);
    for (long i = 0; i < cloud.size(); ++i) {
        if (cloud.normals) {
            std::fprintf(f, "%.17g %.17g %.17g %.17g %.17g %.17g\n", cloud.points(i, 0),
                         cloud.points(i, 1), cloud.points(i, 2), (*cloud.normals)(i, 0),
                         (*cloud.normals)(i, 1), (*cloud.normals)(i, 2));
        } else {
            std::fprintf(f, "%.17g %.17g %.17g\n", cloud.points(i, 0), cloud.points(i, 1),
                         cloud.points(i, 2));
        }
    }
    std::fclose(f);
}

void save_cloud_binary(const PointCloud& cloud, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error(Status::Data, "cannot open cloud file for writing: " + path);
    os.write(kCloudMagic, 9);
    put_u32(os, 1);
    put_u64(os, static_cast<uint64_t>(cloud.size()));
    put_u32(os, cloud.normals ? 1 : 0);
    for (long i = 0; i < cloud.size(); ++i)
        for (int c = 0; c < 3; ++c) put_f64(os, cloud.points(i, c));
    if (cloud.normals)
        for (long i = 0; i < cloud.size(); ++i)
            for (int c = 0; c < 3; ++c) put_f64(os, (*cloud.normals)(i, c));
    if (!os) throw Error(Status::Data, "failed writing cloud file: " + path);
}

}  // namespace ropnet::geom
