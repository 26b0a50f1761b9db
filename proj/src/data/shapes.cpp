#include "data/shapes.hpp"

#include <algorithm>
#include <cmath>

namespace ropnet::data {

using core::Rng;
using geom::Mat3;
using geom::PointMatrix;
using geom::Vec3;

const std::vector<std::string> kShapeCategories = {"sphere", "box", "cylinder", "torus",
                                                   "composite"};

bool is_shape_category(const std::string& name) {
    return std::find(kShapeCategories.begin(), kShapeCategories.end(), name) !=
           kShapeCategories.end();
}

namespace {

Vec3 random_direction(Rng& rng) {
    while (true) {
        Vec3 v(rng.normal(), rng.normal(), rng.normal());
        double n = v.norm();
        if (n > 1e-9) return v / n;
    }
}

void sample_sphere(Rng& rng, double radius, std::vector<Vec3>& out, long count,
                   const Vec3& center = Vec3::Zero()) {
    for (long i = 0; i < count; ++i) out.push_back(center + radius * random_direction(rng));
}

// Axis-aligned box with half extents h, faces sampled by area.
void sample_box(Rng& rng, const Vec3& h, std::vector<Vec3>& out, long count,
                const Vec3& center = Vec3::Zero()) {
    double ax = h.y() * h.z(), ay = h.x() * h.z(), az = h.x() * h.y();
    double total = 2 * (ax + ay + az);
    for (long i = 0; i < count; ++i) {
        double r = rng.uniform(0.0, total);
        double u = rng.uniform(-1.0, 1.0), v = rng.uniform(-1.0, 1.0);
        Vec3 p;
        if (r < 2 * ax) {
            p = Vec3(r < ax ? h.x() : -h.x(), u * h.y(), v * h.z());
        } else if (r < 2 * ax + 2 * ay) {
            p = Vec3(u * h.x(), (r - 2 * ax) < ay ? h.y() : -h.y(), v * h.z());
        } else {
            p = Vec3(u * h.x(), v * h.y(), (r - 2 * ax - 2 * ay) < az ? h.z() : -h.z());
        }
        out.push_back(center + p);
    }
}

// Capped cylinder along z: radius rad, half height hh.
void sample_cylinder(Rng& rng, double rad, double hh, std::vector<Vec3>& out, long count,
                     const Vec3& center = Vec3::Zero()) {
    double side = 2 * M_PI * rad * 2 * hh;
    double cap = M_PI * rad * rad;
    double total = side + 2 * cap;
    for (long i = 0; i < count; ++i) {
        double r = rng.uniform(0.0, total);
        Vec3 p;
        if (r < side) {
            double theta = rng.uniform(0.0, 2 * M_PI);
            p = Vec3(rad * std::cos(theta), rad * std::sin(theta), rng.uniform(-hh, hh));
        } else {
            double rr = rad * std::sqrt(rng.uniform01());
            double theta = rng.uniform(0.0, 2 * M_PI);
            p = Vec3(rr * std::cos(theta), rr * std::sin(theta), r < side + cap ? hh : -hh);
        }
        out.push_back(center + p);
    }
}

// Torus in the xy-plane, ring radius big, tube radius small. Surface area
// density is proportional to (big + small cos v); rejection-sample v.
void sample_torus(Rng& rng, double big, double small, std::vector<Vec3>& out, long count,
                  const Vec3& center = Vec3::Zero()) {
    for (long i = 0; i < count; ++i) {
        double v;
        while (true) {
            v = rng.uniform(0.0, 2 * M_PI);
            double accept = (big + small * std::cos(v)) / (big + small);
            if (rng.uniform01() <= accept) break;
        }
        double u = rng.uniform(0.0, 2 * M_PI);
        double ring = big + small * std::cos(v);
        out.push_back(center +
                      Vec3(ring * std::cos(u), ring * std::sin(u), small * std::sin(v)));
    }
}

// Randomized union of primitives; layouts are drawn from the instance rng,
// which makes each composite a distinct asymmetric shape.
void sample_composite(Rng& rng, std::vector<Vec3>& out, long count) {
    struct Part {
        int kind;  // 0 box, 1 cylinder, 2 sphere
        Vec3 center;
        Vec3 size;
        Mat3 rot;
        double weight;
    };
    long nparts = 2 + rng.uniform_index(3);  // 2..4
    std::vector<Part> parts;
    double total = 0.0;
    for (long p = 0; p < nparts; ++p) {
        Part part;
        part.kind = static_cast<int>(rng.uniform_index(3));
        part.center = Vec3(rng.uniform(-0.6, 0.6), rng.uniform(-0.6, 0.6),
                           rng.uniform(-0.6, 0.6));
        part.size = Vec3(rng.uniform(0.15, 0.55), rng.uniform(0.15, 0.55),
                         rng.uniform(0.15, 0.55));
        double yaw = rng.uniform(0.0, 2 * M_PI);
        double pitch = rng.uniform(-0.5, 0.5);
        part.rot = geom::euler_zyx_to_rotation(yaw, pitch, 0.0);
        part.weight = part.size.prod() + 0.05;
        total += part.weight;
        parts.push_back(part);
    }
    for (long i = 0; i < count; ++i) {
        double r = rng.uniform(0.0, total);
        size_t pi = 0;
        for (; pi + 1 < parts.size(); ++pi) {
            if (r < parts[pi].weight) break;
            r -= parts[pi].weight;
        }
        const Part& part = parts[pi];
        std::vector<Vec3> one;
        switch (part.kind) {
            case 0:
                sample_box(rng, part.size, one, 1);
                break;
            case 1:
                sample_cylinder(rng, part.size.x() * 0.6, part.size.z(), one, 1);
                break;
            default:
                sample_sphere(rng, part.size.x() * 0.7, one, 1);
                break;
        }
        out.push_back(part.center + part.rot * one[0]);
    }
}

}  // namespace

PointMatrix make_shape(const std::string& category, Rng& rng, long count) {
    std::vector<Vec3> pts;
    pts.reserve(static_cast<size_t>(count));
    if (category == "sphere") {
        sample_sphere(rng, 1.0, pts, count);
    } else if (category == "box") {
        sample_box(rng, Vec3(0.9, 0.6, 0.4), pts, count);
    } else if (category == "cylinder") {
        sample_cylinder(rng, 0.45, 0.9, pts, count);
    } else if (category == "torus") {
        sample_torus(rng, 0.7, 0.25, pts, count);
    } else if (category == "composite") {
        sample_composite(rng, pts, count);
    } else {
        throw Error(Status::Usage, "unknown shape category: " + category);
    }
    PointMatrix m(count, 3);
    for (long i = 0; i < count; ++i) m.row(i) = pts[static_cast<size_t>(i)].transpose();
    Vec3 centroid = m.colwise().mean();
    m.rowwise() -= centroid.transpose();
    double max_norm = m.rowwise().norm().maxCoeff();
    if (max_norm > 0.0) m /= max_norm;
    return m;
}

}  // namespace ropnet::data
