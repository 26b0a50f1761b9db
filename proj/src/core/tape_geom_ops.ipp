#pragma once

// Fused differentiable geometry ops for Tape<S>. Included by tape.hpp.

namespace ropnet::core {

namespace detail {

// angle(u, v) in [0, pi] with d/du, d/dv; zero-length input gives angle 0
// and zero gradient. dtheta/du = -(v_hat - cos(theta) u_hat) / (|u| sin(theta)).
struct AngleGrad {
    double theta = 0.0;
    double du[3] = {0, 0, 0};
    double dv[3] = {0, 0, 0};
};

inline AngleGrad angle_with_grad(const double u[3], const double v[3]) {
    AngleGrad out;
    double nu = std::sqrt(u[0] * u[0] + u[1] * u[1] + u[2] * u[2]);
    double nv = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
    constexpr double kZero = 1e-12;
    if (nu < kZero || nv < kZero) return out;  // zero-vector convention
    double uh[3] = {u[0] / nu, u[1] / nu, u[2] / nu};
    double vh[3] = {v[0] / nv, v[1] / nv, v[2] / nv};
    double c = uh[0] * vh[0] + uh[1] * vh[1] + uh[2] * vh[2];
    c = std::clamp(c, -1.0, 1.0);
    out.theta = std::acos(c);
    double s = std::sqrt(std::max(1.0 - c * c, 0.0));
    if (s < 1e-6) return out;  // gradient undefined at parallel vectors; treat as flat
    for (int i = 0; i < 3; ++i) {
        out.du[i] = -(vh[i] - c * uh[i]) / (nu * s);
        out.dv[i] = -(uh[i] - c * vh[i]) / (nv * s);
    }
    return out;
}

}  // namespace detail

template <typename S>
typename Tape<S>::Id Tape<S>::ppf_augment(Id points, Id normals,
                                          const std::vector<long>& neighbor_idx, long k) {
    const Tensor<S>& P = val(points);
    const Tensor<S>& Nrm = val(normals);
    long n = P.rows();
    if (P.cols() != 3 || Nrm.rows() != n || Nrm.cols() != 3)
        throw Error(Status::Usage, "ppf_augment: expected (n x 3) points and normals");
    if (static_cast<long>(neighbor_idx.size()) != n * k)
        throw Error(Status::Usage, "ppf_augment: neighbor index count mismatch");

    Tensor<S> out = Tensor<S>::zeros({n * k, 10});
    for (long i = 0; i < n; ++i) {
        double x[3] = {P.at(i, 0), P.at(i, 1), P.at(i, 2)};
        double nx[3] = {Nrm.at(i, 0), Nrm.at(i, 1), Nrm.at(i, 2)};
        for (long j = 0; j < k; ++j) {
            long mi = neighbor_idx[static_cast<size_t>(i * k + j)];
            double m[3] = {P.at(mi, 0), P.at(mi, 1), P.at(mi, 2)};
            double nm[3] = {Nrm.at(mi, 0), Nrm.at(mi, 1), Nrm.at(mi, 2)};
            double d[3] = {m[0] - x[0], m[1] - x[1], m[2] - x[2]};
            long r = i * k + j;
            for (int c = 0; c < 3; ++c) {
                out.at(r, c) = static_cast<S>(m[c]);
                out.at(r, 3 + c) = static_cast<S>(d[c]);
            }
            out.at(r, 6) = static_cast<S>(detail::angle_with_grad(nx, d).theta);
            out.at(r, 7) = static_cast<S>(detail::angle_with_grad(nm, d).theta);
            out.at(r, 8) = static_cast<S>(detail::angle_with_grad(nx, nm).theta);
            out.at(r, 9) =
                static_cast<S>(std::sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2]));
        }
    }
    Id o = push_value(std::move(out), needs_grad(points, normals));
    record(o, [this, points, normals, o, neighbor_idx, k] {
        const Tensor<S>& g = grads_ref(o);
        const Tensor<S>& P = val(points);
        const Tensor<S>& Nrm = val(normals);
        bool gp = requires_grad(points), gn = requires_grad(normals);
        long n = P.rows();
        auto add3 = [](Tensor<S>& t, long row, const double* v, double scale) {
            for (int c = 0; c < 3; ++c) t.at(row, c) += static_cast<S>(v[c] * scale);
        };
        for (long i = 0; i < n; ++i) {
            double x[3] = {P.at(i, 0), P.at(i, 1), P.at(i, 2)};
            double nx[3] = {Nrm.at(i, 0), Nrm.at(i, 1), Nrm.at(i, 2)};
            for (long j = 0; j < k; ++j) {
                long mi = neighbor_idx[static_cast<size_t>(i * k + j)];
                long r = i * k + j;
                double m[3] = {P.at(mi, 0), P.at(mi, 1), P.at(mi, 2)};
                double nm[3] = {Nrm.at(mi, 0), Nrm.at(mi, 1), Nrm.at(mi, 2)};
                double d[3] = {m[0] - x[0], m[1] - x[1], m[2] - x[2]};
                if (gp) {
                    Tensor<S>& gP = grad_buf(points);
                    // columns 0..2: m ; columns 3..5: m - x
                    for (int c = 0; c < 3; ++c) {
                        double gm = g.at(r, c);
                        double gd = g.at(r, 3 + c);
                        gP.at(mi, c) += static_cast<S>(gm + gd);
                        gP.at(i, c) += static_cast<S>(-gd);
                    }
                    // column 9: |d|
                    double nd = std::sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2]);
                    if (nd > 1e-12) {
                        double gl = g.at(r, 9);
                        for (int c = 0; c < 3; ++c) {
                            double u = d[c] / nd;
                            gP.at(mi, c) += static_cast<S>(gl * u);
                            gP.at(i, c) += static_cast<S>(-gl * u);
                        }
                    }
                }
                // angle columns
                auto a0 = detail::angle_with_grad(nx, d);
                auto a1 = detail::angle_with_grad(nm, d);
                auto a2 = detail::angle_with_grad(nx, nm);
                double g6 = g.at(r, 6), g7 = g.at(r, 7), g8 = g.at(r, 8);
                if (gn) {
                    Tensor<S>& gN = grad_buf(normals);
                    add3(gN, i, a0.du, g6);
                    add3(gN, mi, a1.du, g7);
                    add3(gN, i, a2.du, g8);
                    add3(gN, mi, a2.dv, g8);
                }
                if (gp) {
                    Tensor<S>& gP = grad_buf(points);
                    // d = m - x feeds angles 6 and 7
                    for (int c = 0; c < 3; ++c) {
                        double gd = g6 * a0.dv[c] + g7 * a1.dv[c];
                        gP.at(mi, c) += static_cast<S>(gd);
                        gP.at(i, c) += static_cast<S>(-gd);
                    }
                }
            }
        }
    });
    return o;
}

template <typename S>
typename Tape<S>::Id Tape<S>::procrustes_rotation(Id cross_cov) {
    const Tensor<S>& Sc = val(cross_cov);
    if (Sc.rows() != 3 || Sc.cols() != 3)
        throw Error(Status::Usage, "procrustes_rotation: expected 3x3 cross-covariance");
    Eigen::Matrix3d A;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) A(i, j) = Sc.at(i, j);
    Eigen::JacobiSVD<Eigen::Matrix3d> svd(A, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Eigen::Matrix3d U = svd.matrixU();
    Eigen::Matrix3d V = svd.matrixV();
    Eigen::Vector3d sig = svd.singularValues();
    if (sig(0) <= 0.0 || sig(1) <= 1e-12 * sig(0))
        throw Error(Status::Numeric,
                    "procrustes_rotation: rank-deficient cross-covariance (collinear points)");
    Eigen::Matrix3d D = Eigen::Matrix3d::Identity();
    D(2, 2) = ((V * U.transpose()).determinant() < 0.0) ? -1.0 : 1.0;
    Eigen::Matrix3d R = V * D * U.transpose();
    Tensor<S> out = Tensor<S>::zeros({3, 3});
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) out.at(i, j) = static_cast<S>(R(i, j));
    Id o = push_value(std::move(out), needs_grad(cross_cov));
    record(o, [this, cross_cov, o, U, V, sig, D] {
        if (!requires_grad(cross_cov)) return;
        const Tensor<S>& g = grads_ref(o);
        Eigen::Matrix3d Rbar;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) Rbar(i, j) = g.at(i, j);
        // R = V D U^T with D constant => Ubar = Rbar^T V D, Vbar = Rbar U D.
        Eigen::Matrix3d Ubar = Rbar.transpose() * V * D;
        Eigen::Matrix3d Vbar = Rbar * U * D;
        // SVD differential for square A = U S V^T (no direct dL/dS term):
        // Abar = U [ (F o (U^T Ubar - Ubar^T U)) S + S (F o (V^T Vbar - Vbar^T V)) ] V^T
        // with F_ij = 1 / (s_j^2 - s_i^2), clamped near repeated singular values.
        Eigen::Matrix3d F = Eigen::Matrix3d::Zero();
        for (int i = 0; i < 3; ++i) {
            for (int j = 0; j < 3; ++j) {
                if (i == j) continue;
                double denom = sig(j) * sig(j) - sig(i) * sig(i);
                double mag = std::max(std::abs(denom), 1e-12);
                F(i, j) = (denom >= 0.0 ? 1.0 : -1.0) / mag;
            }
        }
        Eigen::Matrix3d Sdiag = sig.asDiagonal();
        Eigen::Matrix3d JU = F.cwiseProduct(U.transpose() * Ubar - Ubar.transpose() * U);
        Eigen::Matrix3d JV = F.cwiseProduct(V.transpose() * Vbar - Vbar.transpose() * V);
        Eigen::Matrix3d Abar = U * (JU * Sdiag + Sdiag * JV) * V.transpose();
        Tensor<S>& ga = grad_buf(cross_cov);
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) ga.at(i, j) += static_cast<S>(Abar(i, j));
    });
    return o;
}

template <typename S>
typename Tape<S>::Id Tape<S>::topk_weighted_rows(Id h, const Tensor<S>& y, long k) {
    const Tensor<S>& H = val(h);
    long n = H.rows(), m = H.cols();
    if (y.rows() != m) throw Error(Status::Usage, "topk_weighted_rows: row count mismatch");
    if (k < 1 || k > m)
        throw Error(Status::Usage, "topk_weighted_rows: k out of range");
    long yc = y.cols();
    Tensor<S> out = Tensor<S>::zeros({n, yc});
    std::vector<long> picked(static_cast<size_t>(n * k));
    std::vector<double> sums(static_cast<size_t>(n));
    std::vector<std::pair<S, long>> row(static_cast<size_t>(m));
    for (long i = 0; i < n; ++i) {
        for (long j = 0; j < m; ++j) row[static_cast<size_t>(j)] = {H.at(i, j), j};
        std::partial_sort(row.begin(), row.begin() + k, row.end(),
                          [](const auto& a, const auto& b) {
                              if (a.first != b.first) return a.first > b.first;
                              return a.second < b.second;
                          });
        double s = 0.0;
        for (long j = 0; j < k; ++j) s += static_cast<double>(row[static_cast<size_t>(j)].first);
        sums[static_cast<size_t>(i)] = s;
        for (long j = 0; j < k; ++j) {
            long col = row[static_cast<size_t>(j)].second;
            picked[static_cast<size_t>(i * k + j)] = col;
            double w = s > 1e-30 ? static_cast<double>(row[static_cast<size_t>(j)].first) / s
                                 : 1.0 / static_cast<double>(k);
            for (long c = 0; c < yc; ++c)
                out.at(i, c) += static_cast<S>(w * static_cast<double>(y.at(col, c)));
        }
    }
    Id o = push_value(std::move(out), needs_grad(h));
    record(o, [this, h, o, y, k, picked = std::move(picked), sums = std::move(sums)] {
        if (!requires_grad(h)) return;
        const Tensor<S>& g = grads_ref(o);
        const Tensor<S>& yo = val(o);
        Tensor<S>& gh = grad_buf(h);
        long n = g.rows(), yc = g.cols();
        for (long i = 0; i < n; ++i) {
            double s = sums[static_cast<size_t>(i)];
            if (s <= 1e-30) continue;  // uniform fallback treated as constant
            for (long j = 0; j < k; ++j) {
                long col = picked[static_cast<size_t>(i * k + j)];
                double acc = 0.0;
                for (long c = 0; c < yc; ++c)
                    acc += static_cast<double>(g.at(i, c)) *
                           (static_cast<double>(y.at(col, c)) - yo.at(i, c));
                gh.at(i, col) += static_cast<S>(acc / s);
            }
        }
    });
    return o;
}

}  // namespace ropnet::core
