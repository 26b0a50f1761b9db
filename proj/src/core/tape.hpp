#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "core/param_store.hpp"
#include "core/tensor.hpp"

namespace ropnet::core {

// Define-by-run reverse-mode tape. A tape is rebuilt for every forward pass
// and is confined to one logical thread. backward() replays the recorded ops
// in exact reverse execution order.
template <typename S>
class Tape {
  public:
    using Id = int;

    using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    using MatMap = Eigen::Map<Mat>;
    using ConstMatMap = Eigen::Map<const Mat>;

    void set_grad_enabled(bool enabled) { grad_enabled_ = enabled; }

    Id leaf(Tensor<S> v, bool requires_grad = false) {
        return push_value(std::move(v), requires_grad && grad_enabled_);
    }

    // Differentiable leaf bound to a named parameter; the value is copied
    // from the store, the gradient is collected via param_ids() after
    // backward() (or accumulated directly by backward(loss, &store)).
    Id param(const ParamStore<S>& store, const std::string& name) {
        Id id = push_value(store.value(name), grad_enabled_);
        param_ids_.emplace_back(name, id);
        return id;
    }

    const Tensor<S>& val(Id id) const { return values_[static_cast<size_t>(id)]; }

    const Tensor<S>& grad(Id id) const {
        const Tensor<S>& g = grads_[static_cast<size_t>(id)];
        if (g.shape.empty())
            throw Error(Status::Usage, "gradient not computed for this value");
        return g;
    }

    bool has_grad(Id id) const { return !grads_[static_cast<size_t>(id)].shape.empty(); }

    const std::vector<std::pair<std::string, Id>>& param_ids() const { return param_ids_; }

    size_t size() const { return values_.size(); }

    // ---- ops -------------------------------------------------------------

    Id matmul(Id a, Id b) {
        const Tensor<S>& A = val(a);
        const Tensor<S>& B = val(b);
        if (A.cols() != B.rows())
            throw Error(Status::Usage, "matmul: inner dimensions disagree " +
                                           shape_string(A) + " x " + shape_string(B));
        Tensor<S> out = Tensor<S>::zeros({A.rows(), B.cols()});
        mat(out).noalias() = cmat(A) * cmat(B);
        Id o = push_value(std::move(out), needs_grad(a, b));
        record(o, [this, a, b, o] {
            const Tensor<S>& g = grads_ref(o);
            if (requires_grad(a)) mat(grad_buf(a)).noalias() += cmat(g) * cmat(val(b)).transpose();
            if (requires_grad(b)) mat(grad_buf(b)).noalias() += cmat(val(a)).transpose() * cmat(g);
        });
        return o;
    }

    Id transpose(Id a) {
        const Tensor<S>& A = val(a);
        Tensor<S> out = Tensor<S>::zeros({A.cols(), A.rows()});
        mat(out) = cmat(A).transpose();
        Id o = push_value(std::move(out), needs_grad(a));
        record(o, [this, a, o] {
            if (requires_grad(a)) mat(grad_buf(a)) += cmat(grads_ref(o)).transpose();
        });
        return o;
    }

    Id add(Id a, Id b) { return binary_elementwise(a, b, /*sign_b=*/S(1)); }
    Id sub(Id a, Id b) { return binary_elementwise(a, b, /*sign_b=*/S(-1)); }

    Id scale(Id a, S c) {
        Tensor<S> out = val(a);
        vec(out) *= c;
        Id o = push_value(std::move(out), needs_grad(a));
        record(o, [this, a, o, c] {
            if (!requires_grad(a)) return;
            vec(grad_buf(a)) += c * cvec(grads_ref(o));
        });
        return o;
    }

    // m (n x c) + row (1 x c), broadcast over rows.
    Id add_row_broadcast(Id m, Id row) {
        const Tensor<S>& M = val(m);
        const Tensor<S>& r = val(row);
        if (r.cols() != M.cols() || r.rows() != 1)
            throw Error(Status::Usage, "add_row_broadcast: incompatible shapes");
        Tensor<S> out = M;
        mat(out).rowwise() += Eigen::Map<const Eigen::Matrix<S, 1, Eigen::Dynamic>>(
            r.data.data(), r.cols());
        Id o = push_value(std::move(out), needs_grad(m, row));
        record(o, [this, m, row, o] {
            const Tensor<S>& g = grads_ref(o);
            if (requires_grad(m)) vec(grad_buf(m)) += cvec(g);
            if (requires_grad(row)) {
                Tensor<S>& gr = grad_buf(row);
                Eigen::Map<Eigen::Matrix<S, 1, Eigen::Dynamic>>(gr.data.data(), gr.cols()) +=
                    cmat(g).colwise().sum();
            }
        });
        return o;
    }

    Id relu(Id a) {
        Tensor<S> out = val(a);
        vec(out) = vec(out).cwiseMax(S(0));
        Id o = push_value(std::move(out), needs_grad(a));
        record(o, [this, a, o] {
            if (!requires_grad(a)) return;
            const Tensor<S>& g = grads_ref(o);
            const Tensor<S>& x = val(a);
            Tensor<S>& ga = grad_buf(a);
            cvec(g);  // keep maps consistent
            for (size_t i = 0; i < g.data.size(); ++i)
                if (x.data[i] > S(0)) ga.data[i] += g.data[i];
        });
        return o;
    }

    // Fused dense layer: out = x W + b (row-broadcast), optionally ReLU'd.
    // One tape node instead of three keeps the big per-point stacks cheap.
    Id dense_layer(Id x, Id w, Id b, bool with_relu) {
        const Tensor<S>& X = val(x);
        const Tensor<S>& W = val(w);
        const Tensor<S>& B = val(b);
        if (X.cols() != W.rows() || B.rows() != 1 || B.cols() != W.cols())
            throw Error(Status::Usage, "dense_layer: shape mismatch " + shape_string(X) +
                                           " x " + shape_string(W) + " + " +
                                           shape_string(B));
        Tensor<S> out = Tensor<S>::zeros({X.rows(), W.cols()});
        {
            auto m = mat(out);
            m.noalias() = cmat(X) * cmat(W);
            m.rowwise() += Eigen::Map<const Eigen::Matrix<S, 1, Eigen::Dynamic>>(
                B.data.data(), B.cols());
            if (with_relu) m = m.cwiseMax(S(0));
        }
        Id o = push_value(std::move(out), needs_grad(x, w, b));
        record(o, [this, x, w, b, o, with_relu] {
            const Tensor<S>& g = grads_ref(o);
            Tensor<S> masked;
            const Tensor<S>* gp = &g;
            if (with_relu) {
                masked = g;
                vec(masked) *= (cvec(val(o)) > S(0)).template cast<S>();
                gp = &masked;
            }
            if (requires_grad(x))
                mat(grad_buf(x)).noalias() += cmat(*gp) * cmat(val(w)).transpose();
            if (requires_grad(w))
                mat(grad_buf(w)).noalias() += cmat(val(x)).transpose() * cmat(*gp);
            if (requires_grad(b)) {
                Tensor<S>& gb = grad_buf(b);
                Eigen::Map<Eigen::Matrix<S, 1, Eigen::Dynamic>>(gb.data.data(), gb.cols()) +=
                    cmat(*gp).colwise().sum();
            }
        });
        return o;
    }

    // Fused per-neighbor encoder + segment max-pool. Applies a ReLU dense
    // stack to (B*k) rows and max-pools each k-row block, processing in
    // cache-sized chunks; the backward pass recomputes chunk activations
    // instead of keeping the (B*k)-row intermediates alive. On low-bandwidth
    // machines this is several times faster than the unfused stack.
    Id dense_relu_pool(Id rows, const std::vector<Id>& weights,
                       const std::vector<Id>& biases, long k) {
        const Tensor<S>& X = val(rows);
        long total = X.rows();
        if (k < 1 || total % k != 0)
            throw Error(Status::Usage, "dense_relu_pool: rows not divisible by segment");
        if (weights.empty() || weights.size() != biases.size())
            throw Error(Status::Usage, "dense_relu_pool: layer parameter mismatch");
        long layers = static_cast<long>(weights.size());
        long in_w = X.cols();
        std::vector<long> widths{in_w};
        for (long l = 0; l < layers; ++l) {
            const Tensor<S>& W = val(weights[static_cast<size_t>(l)]);
            const Tensor<S>& B = val(biases[static_cast<size_t>(l)]);
            if (W.rows() != widths.back() || B.rows() != 1 || B.cols() != W.cols())
                throw Error(Status::Usage, "dense_relu_pool: layer shape mismatch");
            widths.push_back(W.cols());
        }
        long b = total / k;
        long out_w = widths.back();
        long chunk_pts = std::max<long>(1, 4096 / k);  // keep chunks L2-resident

        Tensor<S> out = Tensor<S>::zeros({b, out_w});
        std::vector<long> arg(static_cast<size_t>(b * out_w));
        std::vector<std::vector<S>> act(static_cast<size_t>(layers));

        for (long p0 = 0; p0 < b; p0 += chunk_pts) {
            long pts = std::min(chunk_pts, b - p0);
            drp_forward_chunk(rows, weights, biases, widths, act, p0 * k, pts * k);
            const S* last = act[static_cast<size_t>(layers - 1)].data();
            for (long p = 0; p < pts; ++p) {
                S* dst = out.data.data() + (p0 + p) * out_w;
                long* adst = arg.data() + (p0 + p) * out_w;
                const S* seg = last + p * k * out_w;
                std::copy(seg, seg + out_w, dst);
                std::fill(adst, adst + out_w, (p0 + p) * k);
                for (long i = 1; i < k; ++i) {
                    const S* row = seg + i * out_w;
                    for (long j = 0; j < out_w; ++j) {
                        if (row[j] > dst[j]) {
                            dst[j] = row[j];
                            adst[j] = (p0 + p) * k + i;
                        }
                    }
                }
            }
        }

        bool rg = requires_grad(rows);
        for (long l = 0; l < layers; ++l)
            rg = rg || requires_grad(weights[static_cast<size_t>(l)]) ||
                 requires_grad(biases[static_cast<size_t>(l)]);
        Id o = push_value(std::move(out), rg && grad_enabled_);
        record(o, [this, rows, weights, biases, k, o, widths, arg = std::move(arg),
                   chunk_pts, layers] {
            const Tensor<S>& g = grads_ref(o);
            const Tensor<S>& X = val(rows);
            long b = g.rows(), out_w = g.cols(), in_w = widths[0];
            std::vector<std::vector<S>> act(static_cast<size_t>(layers));
            std::vector<S> gbuf_a, gbuf_b;
            for (long p0 = 0; p0 < b; p0 += chunk_pts) {
                long pts = std::min(chunk_pts, b - p0);
                long rows_n = pts * k, r0 = p0 * k;
                drp_forward_chunk(rows, weights, biases, widths, act, r0, rows_n);
                gbuf_a.assign(static_cast<size_t>(rows_n * out_w), S(0));
                for (long p = 0; p < pts; ++p)
                    for (long j = 0; j < out_w; ++j)
                        gbuf_a[static_cast<size_t>(
                            (arg[static_cast<size_t>((p0 + p) * out_w + j)] - r0) * out_w +
                            j)] += g.at(p0 + p, j);
                S* gcur = gbuf_a.data();
                for (long l = layers - 1; l >= 0; --l) {
                    long w_out = widths[static_cast<size_t>(l + 1)];
                    long w_in = widths[static_cast<size_t>(l)];
                    const S* a_out = act[static_cast<size_t>(l)].data();
                    VecMap gv(gcur, rows_n * w_out);
                    gv *= (ConstVecMap(a_out, rows_n * w_out) > S(0)).template cast<S>();
                    MatMap gm(gcur, rows_n, w_out);
                    Id wid = weights[static_cast<size_t>(l)];
                    Id bid = biases[static_cast<size_t>(l)];
                    if (requires_grad(bid)) {
                        Tensor<S>& gb = grad_buf(bid);
                        Eigen::Map<Eigen::Matrix<S, 1, Eigen::Dynamic>>(gb.data.data(),
                                                                        w_out) +=
                            gm.colwise().sum();
                    }
                    const S* a_in = l > 0 ? act[static_cast<size_t>(l - 1)].data()
                                          : X.data.data() + r0 * in_w;
                    if (requires_grad(wid))
                        mat(grad_buf(wid)).noalias() +=
                            ConstMatMap(a_in, rows_n, w_in).transpose() * gm;
                    if (l > 0 || requires_grad(rows)) {
                        std::vector<S>& next = (gcur == gbuf_a.data()) ? gbuf_b : gbuf_a;
                        next.resize(static_cast<size_t>(rows_n * w_in));
                        MatMap(next.data(), rows_n, w_in).noalias() =
                            gm * cmat(val(wid)).transpose();
                        gcur = next.data();
                    }
                }
                if (requires_grad(rows)) {
                    Tensor<S>& gx = grad_buf(rows);
                    Eigen::Map<
                        Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
                        gx.data.data() + r0 * in_w, rows_n, in_w) +=
                        ConstMatMap(gcur, rows_n, in_w);
                }
            }
        });
        return o;
    }

  private:
    void drp_forward_chunk(Id rows, const std::vector<Id>& weights,
                           const std::vector<Id>& biases, const std::vector<long>& widths,
                           std::vector<std::vector<S>>& act, long r0, long rows_n) const {
        const Tensor<S>& X = val(rows);
        const S* cur = X.data.data() + r0 * widths[0];
        long cur_w = widths[0];
        for (size_t l = 0; l < weights.size(); ++l) {
            long w_out = widths[l + 1];
            auto& buf = act[l];
            buf.resize(static_cast<size_t>(rows_n * w_out));
            MatMap acts(buf.data(), rows_n, w_out);
            acts.noalias() = ConstMatMap(cur, rows_n, cur_w) * cmat(val(weights[l]));
            const Tensor<S>& bias = val(biases[l]);
            acts.rowwise() += Eigen::Map<const Eigen::Matrix<S, 1, Eigen::Dynamic>>(
                bias.data.data(), w_out);
            acts = acts.cwiseMax(S(0));
            cur = buf.data();
            cur_w = w_out;
        }
    }

  public:

    // Rows [r0, r1) of m as a new tensor.
    Id slice_rows(Id a, long r0, long r1) {
        const Tensor<S>& X = val(a);
        if (r0 < 0 || r1 > X.rows() || r0 >= r1)
            throw Error(Status::Usage, "slice_rows: bad row range");
        long c = X.cols();
        Tensor<S> out = Tensor<S>::zeros({r1 - r0, c});
        std::copy(X.data.data() + r0 * c, X.data.data() + r1 * c, out.data.data());
        Id o = push_value(std::move(out), needs_grad(a));
        record(o, [this, a, o, r0] {
            if (!requires_grad(a)) return;
            const Tensor<S>& g = grads_ref(o);
            Tensor<S>& ga = grad_buf(a);
            long c = g.cols();
            VecMap(ga.data.data() + r0 * c, g.numel()) += cvec(g);
        });
        return o;
    }

    Id softmax_rows(Id a) {
        const Tensor<S>& X = val(a);
        Tensor<S> out = Tensor<S>::zeros(X.shape);
        long n = X.rows(), c = X.cols();
        using RowMap = Eigen::Map<Eigen::Array<S, Eigen::Dynamic, 1>>;
        using ConstRowMap = Eigen::Map<const Eigen::Array<S, Eigen::Dynamic, 1>>;
        for (long i = 0; i < n; ++i) {
            ConstRowMap xr(X.data.data() + i * c, c);
            RowMap yr(out.data.data() + i * c, c);
            yr = (xr - xr.maxCoeff()).exp();
            double sum = yr.template cast<double>().sum();
            yr *= static_cast<S>(1.0 / sum);
        }
        Id o = push_value(std::move(out), needs_grad(a));
        record(o, [this, a, o] {
            if (!requires_grad(a)) return;
            const Tensor<S>& g = grads_ref(o);
            const Tensor<S>& y = val(o);
            Tensor<S>& ga = grad_buf(a);
            long n = y.rows(), c = y.cols();
            using RowMap = Eigen::Map<Eigen::Array<S, Eigen::Dynamic, 1>>;
            using ConstRowMap = Eigen::Map<const Eigen::Array<S, Eigen::Dynamic, 1>>;
            for (long i = 0; i < n; ++i) {
                ConstRowMap gr(g.data.data() + i * c, c);
                ConstRowMap yr(y.data.data() + i * c, c);
                RowMap gar(ga.data.data() + i * c, c);
                double dot = (gr * yr).template cast<double>().sum();
                gar += (gr - static_cast<S>(dot)) * yr;
            }
        });
        return o;
    }

    // Divides every column by its sum. Column sums must be positive.
    Id normalize_columns(Id a) {
        const Tensor<S>& X = val(a);
        long n = X.rows(), c = X.cols();
        std::vector<double> sums(static_cast<size_t>(c), 0.0);
        for (long i = 0; i < n; ++i) {
            const S* row = X.data.data() + i * c;
            for (long j = 0; j < c; ++j) sums[static_cast<size_t>(j)] += row[j];
        }
        for (long j = 0; j < c; ++j)
            if (!(sums[static_cast<size_t>(j)] > 0.0))
                throw Error(Status::Numeric, "normalize_columns: degenerate column " +
                                                 std::to_string(j));
        std::vector<S> inv(static_cast<size_t>(c));
        for (long j = 0; j < c; ++j)
            inv[static_cast<size_t>(j)] = static_cast<S>(1.0 / sums[static_cast<size_t>(j)]);
        Tensor<S> out = Tensor<S>::zeros(X.shape);
        for (long i = 0; i < n; ++i) {
            const S* row = X.data.data() + i * c;
            S* dst = out.data.data() + i * c;
            for (long j = 0; j < c; ++j) dst[j] = row[j] * inv[static_cast<size_t>(j)];
        }
        Id o = push_value(std::move(out), needs_grad(a));
        record(o, [this, a, o, sums] {
            if (!requires_grad(a)) return;
            const Tensor<S>& g = grads_ref(o);
            const Tensor<S>& y = val(o);
            Tensor<S>& ga = grad_buf(a);
            long n = y.rows(), c = y.cols();
            std::vector<double> dot(static_cast<size_t>(c), 0.0);
            for (long i = 0; i < n; ++i) {
                const S* gr = g.data.data() + i * c;
                const S* yr = y.data.data() + i * c;
                for (long j = 0; j < c; ++j)
                    dot[static_cast<size_t>(j)] +=
                        static_cast<double>(gr[j]) * static_cast<double>(yr[j]);
            }
            for (long i = 0; i < n; ++i) {
                const S* gr = g.data.data() + i * c;
                S* gar = ga.data.data() + i * c;
                for (long j = 0; j < c; ++j)
                    gar[j] += static_cast<S>((static_cast<double>(gr[j]) -
                                              dot[static_cast<size_t>(j)]) /
                                             sums[static_cast<size_t>(j)]);
            }
        });
        return o;
    }

    // Column-normalized row softmax (the attention weighting), fused so the
    // softmax intermediate is never materialized: only the per-column sums
    // are kept and the softmax is recovered as y_ij * s_j in backward.
    Id softmax_rows_colnorm(Id a) {
        const Tensor<S>& X = val(a);
        long n = X.rows(), c = X.cols();
        Tensor<S> out = Tensor<S>::zeros(X.shape);
        using RowMap = Eigen::Map<Eigen::Array<S, Eigen::Dynamic, 1>>;
        using ConstRowMap = Eigen::Map<const Eigen::Array<S, Eigen::Dynamic, 1>>;
        std::vector<double> colsum(static_cast<size_t>(c), 0.0);
        for (long i = 0; i < n; ++i) {
            ConstRowMap xr(X.data.data() + i * c, c);
            RowMap yr(out.data.data() + i * c, c);
            yr = (xr - xr.maxCoeff()).exp();
            double sum = yr.template cast<double>().sum();
            yr *= static_cast<S>(1.0 / sum);
            const S* row = out.data.data() + i * c;
            for (long j = 0; j < c; ++j) colsum[static_cast<size_t>(j)] += row[j];
        }
        std::vector<S> inv(static_cast<size_t>(c));
        for (long j = 0; j < c; ++j)
            inv[static_cast<size_t>(j)] =
                static_cast<S>(1.0 / colsum[static_cast<size_t>(j)]);
        for (long i = 0; i < n; ++i) {
            S* row = out.data.data() + i * c;
            for (long j = 0; j < c; ++j) row[j] *= inv[static_cast<size_t>(j)];
        }
        Id o = push_value(std::move(out), needs_grad(a));
        record(o, [this, a, o, colsum = std::move(colsum)] {
            if (!requires_grad(a)) return;
            const Tensor<S>& g = grads_ref(o);
            const Tensor<S>& y = val(o);
            Tensor<S>& ga = grad_buf(a);
            long n = y.rows(), c = y.cols();
            std::vector<double> dot(static_cast<size_t>(c), 0.0);
            for (long i = 0; i < n; ++i) {
                const S* gr = g.data.data() + i * c;
                const S* yr = y.data.data() + i * c;
                for (long j = 0; j < c; ++j)
                    dot[static_cast<size_t>(j)] +=
                        static_cast<double>(gr[j]) * static_cast<double>(yr[j]);
            }
            std::vector<S> dsm(static_cast<size_t>(c));
            for (long i = 0; i < n; ++i) {
                const S* gr = g.data.data() + i * c;
                const S* yr = y.data.data() + i * c;
                S* gar = ga.data.data() + i * c;
                double rowdot = 0.0;
                for (long j = 0; j < c; ++j) {
                    double s = colsum[static_cast<size_t>(j)];
                    double sm = yr[j] * s;
                    double d = (static_cast<double>(gr[j]) -
                                dot[static_cast<size_t>(j)]) / s;
                    dsm[static_cast<size_t>(j)] = static_cast<S>(d);
                    rowdot += d * sm;
                }
                for (long j = 0; j < c; ++j) {
                    double sm = yr[j] * colsum[static_cast<size_t>(j)];
                    gar[j] += static_cast<S>(
                        (static_cast<double>(dsm[static_cast<size_t>(j)]) - rowdot) * sm);
                }
            }
        });
        return o;
    }

    // Rows scaled to unit L2 norm; rows with norm <= min_norm are rejected.
    Id normalize_rows_l2(Id a, double min_norm = 1e-8) {
        const Tensor<S>& X = val(a);
        long n = X.rows(), c = X.cols();
        std::vector<double> norms(static_cast<size_t>(n));
        Tensor<S> out = Tensor<S>::zeros(X.shape);
        for (long i = 0; i < n; ++i) {
            double s = 0.0;
            for (long j = 0; j < c; ++j) s += static_cast<double>(X.at(i, j)) * X.at(i, j);
            double nm = std::sqrt(s);
            if (nm <= min_norm)
                throw Error(Status::Numeric, "normalize_rows_l2: near-zero row norm");
            norms[static_cast<size_t>(i)] = nm;
            for (long j = 0; j < c; ++j) out.at(i, j) = static_cast<S>(X.at(i, j) / nm);
        }
        Id o = push_value(std::move(out), needs_grad(a));
        record(o, [this, a, o, norms] {
            if (!requires_grad(a)) return;
            const Tensor<S>& g = grads_ref(o);
            const Tensor<S>& y = val(o);
            Tensor<S>& ga = grad_buf(a);
            long n = y.rows(), c = y.cols();
            for (long i = 0; i < n; ++i) {
                double dot = 0.0;
                for (long j = 0; j < c; ++j)
                    dot += static_cast<double>(g.at(i, j)) * static_cast<double>(y.at(i, j));
                double inv = 1.0 / norms[static_cast<size_t>(i)];
                for (long j = 0; j < c; ++j)
                    ga.at(i, j) += static_cast<S>(
                        (static_cast<double>(g.at(i, j)) - dot * y.at(i, j)) * inv);
            }
        });
        return o;
    }

    // Unit quaternion (1 x 4, scalar-first w,x,y,z) -> rotation matrix (3 x 3).
    Id quat_to_rotmat(Id q) {
        const Tensor<S>& Q = val(q);
        if (Q.rows() != 1 || Q.cols() != 4)
            throw Error(Status::Usage, "quat_to_rotmat: expected 1x4 quaternion");
        double w = Q.data[0], x = Q.data[1], y = Q.data[2], z = Q.data[3];
        Tensor<S> R = Tensor<S>::zeros({3, 3});
        R.at(0, 0) = static_cast<S>(1 - 2 * (y * y + z * z));
        R.at(0, 1) = static_cast<S>(2 * (x * y - w * z));
        R.at(0, 2) = static_cast<S>(2 * (x * z + w * y));
        R.at(1, 0) = static_cast<S>(2 * (x * y + w * z));
        R.at(1, 1) = static_cast<S>(1 - 2 * (x * x + z * z));
        R.at(1, 2) = static_cast<S>(2 * (y * z - w * x));
        R.at(2, 0) = static_cast<S>(2 * (x * z - w * y));
        R.at(2, 1) = static_cast<S>(2 * (y * z + w * x));
        R.at(2, 2) = static_cast<S>(1 - 2 * (x * x + y * y));
        Id o = push_value(std::move(R), needs_grad(q));
        record(o, [this, q, o] {
            if (!requires_grad(q)) return;
            const Tensor<S>& g = grads_ref(o);
            const Tensor<S>& Q = val(q);
            double w = Q.data[0], x = Q.data[1], y = Q.data[2], z = Q.data[3];
            auto G = [&](int i, int j) { return static_cast<double>(g.at(i, j)); };
            double dw = 2 * (-z * G(0, 1) + y * G(0, 2) + z * G(1, 0) - x * G(1, 2) -
                             y * G(2, 0) + x * G(2, 1));
            double dx = 2 * (y * G(0, 1) + z * G(0, 2) + y * G(1, 0) - 2 * x * G(1, 1) -
                             w * G(1, 2) + z * G(2, 0) + w * G(2, 1) - 2 * x * G(2, 2));
            double dy = 2 * (-2 * y * G(0, 0) + x * G(0, 1) + w * G(0, 2) + x * G(1, 0) +
                             z * G(1, 2) - w * G(2, 0) + z * G(2, 1) - 2 * y * G(2, 2));
            double dz = 2 * (-2 * z * G(0, 0) - w * G(0, 1) + x * G(0, 2) + w * G(1, 0) -
                             2 * z * G(1, 1) + y * G(1, 2) + x * G(2, 0) + y * G(2, 1));
            Tensor<S>& gq = grad_buf(q);
            gq.data[0] += static_cast<S>(dw);
            gq.data[1] += static_cast<S>(dx);
            gq.data[2] += static_cast<S>(dy);
            gq.data[3] += static_cast<S>(dz);
        });
        return o;
    }

    // N x C -> 1 x C column-wise max; gradient routes to the lowest-index
    // maximum of each column.
    Id max_pool_rows(Id a) {
        const Tensor<S>& X = val(a);
        long n = X.rows(), c = X.cols();
        if (n < 1) throw Error(Status::Usage, "max_pool_rows: empty input");
        Tensor<S> out = Tensor<S>::zeros({1, c});
        std::vector<long> arg(static_cast<size_t>(c), 0);
        std::copy(X.data.data(), X.data.data() + c, out.data.data());
        for (long i = 1; i < n; ++i) {
            const S* row = X.data.data() + i * c;
            for (long j = 0; j < c; ++j) {
                if (row[j] > out.data[static_cast<size_t>(j)]) {
                    out.data[static_cast<size_t>(j)] = row[j];
                    arg[static_cast<size_t>(j)] = i;
                }
            }
        }
        Id o = push_value(std::move(out), needs_grad(a));
        record(o, [this, a, o, arg] {
            if (!requires_grad(a)) return;
            const Tensor<S>& g = grads_ref(o);
            Tensor<S>& ga = grad_buf(a);
            for (long j = 0; j < g.cols(); ++j)
                ga.at(arg[static_cast<size_t>(j)], j) += g.data[static_cast<size_t>(j)];
        });
        return o;
    }

    // (B*k) x C -> B x C, max over each block of k consecutive rows.
    Id segment_max_rows(Id a, long k) {
        const Tensor<S>& X = val(a);
        long n = X.rows(), c = X.cols();
        if (k < 1 || n % k != 0)
            throw Error(Status::Usage, "segment_max_rows: rows not divisible by segment");
        long b = n / k;
        Tensor<S> out = Tensor<S>::zeros({b, c});
        std::vector<long> arg(static_cast<size_t>(b * c));
        for (long s = 0; s < b; ++s) {
            S* dst = out.data.data() + s * c;
            long* adst = arg.data() + s * c;
            const S* src = X.data.data() + s * k * c;
            std::copy(src, src + c, dst);
            std::fill(adst, adst + c, s * k);
            for (long i = 1; i < k; ++i) {
                const S* row = src + i * c;
                for (long j = 0; j < c; ++j) {
                    if (row[j] > dst[j]) {
                        dst[j] = row[j];
                        adst[j] = s * k + i;
                    }
                }
            }
        }
        Id o = push_value(std::move(out), needs_grad(a));
        record(o, [this, a, o, arg] {
            if (!requires_grad(a)) return;
            const Tensor<S>& g = grads_ref(o);
            Tensor<S>& ga = grad_buf(a);
            long b = g.rows(), c = g.cols();
            for (long s = 0; s < b; ++s)
                for (long j = 0; j < c; ++j)
                    ga.at(arg[static_cast<size_t>(s * c + j)], j) += g.at(s, j);
        });
        return o;
    }

    // Group normalization over the channel dimension of each row.
    Id group_norm(Id a, long groups, Id gamma, Id beta, double eps = 1e-5) {
        const Tensor<S>& X = val(a);
        long n = X.rows(), c = X.cols();
        if (groups < 1 || c % groups != 0)
            throw Error(Status::Usage, "group_norm: channels not divisible by groups");
        const Tensor<S>& G = val(gamma);
        const Tensor<S>& B = val(beta);
        if (G.numel() != c || B.numel() != c)
            throw Error(Status::Usage, "group_norm: affine parameter size mismatch");
        long gc = c / groups;
        Tensor<S> xhat = Tensor<S>::zeros(X.shape);
        std::vector<double> inv_sigma(static_cast<size_t>(n * groups));
        for (long i = 0; i < n; ++i) {
            for (long g = 0; g < groups; ++g) {
                double mean = 0.0;
                for (long j = g * gc; j < (g + 1) * gc; ++j) mean += X.at(i, j);
                mean /= gc;
                double var = 0.0;
                for (long j = g * gc; j < (g + 1) * gc; ++j) {
                    double d = X.at(i, j) - mean;
                    var += d * d;
                }
                var /= gc;
                double is = 1.0 / std::sqrt(var + eps);
                inv_sigma[static_cast<size_t>(i * groups + g)] = is;
                for (long j = g * gc; j < (g + 1) * gc; ++j)
                    xhat.at(i, j) = static_cast<S>((X.at(i, j) - mean) * is);
            }
        }
        Tensor<S> out = Tensor<S>::zeros(X.shape);
        for (long i = 0; i < n; ++i)
            for (long j = 0; j < c; ++j)
                out.at(i, j) = G.data[static_cast<size_t>(j)] * xhat.at(i, j) +
                               B.data[static_cast<size_t>(j)];
        Id xh = push_value(std::move(xhat), false);  // cached, not differentiated through
        Id o = push_value(std::move(out), needs_grad(a, gamma, beta));
        record(o, [this, a, gamma, beta, o, xh, groups, inv_sigma] {
            const Tensor<S>& g = grads_ref(o);
            const Tensor<S>& xhat = val(xh);
            const Tensor<S>& gam = val(gamma);
            long n = g.rows(), c = g.cols(), gc = c / groups;
            if (requires_grad(gamma)) {
                Tensor<S>& gg = grad_buf(gamma);
                for (long j = 0; j < c; ++j) {
                    double acc = 0.0;
                    for (long i = 0; i < n; ++i)
                        acc += static_cast<double>(g.at(i, j)) * xhat.at(i, j);
                    gg.data[static_cast<size_t>(j)] += static_cast<S>(acc);
                }
            }
            if (requires_grad(beta)) {
                Tensor<S>& gb = grad_buf(beta);
                for (long j = 0; j < c; ++j) {
                    double acc = 0.0;
                    for (long i = 0; i < n; ++i) acc += static_cast<double>(g.at(i, j));
                    gb.data[static_cast<size_t>(j)] += static_cast<S>(acc);
                }
            }
            if (requires_grad(a)) {
                Tensor<S>& ga = grad_buf(a);
                for (long i = 0; i < n; ++i) {
                    for (long grp = 0; grp < groups; ++grp) {
                        double mean_dxh = 0.0, mean_dxh_xh = 0.0;
                        for (long j = grp * gc; j < (grp + 1) * gc; ++j) {
                            double dxh = static_cast<double>(g.at(i, j)) *
                                         gam.data[static_cast<size_t>(j)];
                            mean_dxh += dxh;
                            mean_dxh_xh += dxh * xhat.at(i, j);
                        }
                        mean_dxh /= gc;
                        mean_dxh_xh /= gc;
                        double is = inv_sigma[static_cast<size_t>(i * groups + grp)];
                        for (long j = grp * gc; j < (grp + 1) * gc; ++j) {
                            double dxh = static_cast<double>(g.at(i, j)) *
                                         gam.data[static_cast<size_t>(j)];
                            ga.at(i, j) += static_cast<S>(
                                is * (dxh - mean_dxh - xhat.at(i, j) * mean_dxh_xh));
                        }
                    }
                }
            }
        });
        return o;
    }

    Id concat_cols(const std::vector<Id>& parts) {
        if (parts.empty()) throw Error(Status::Usage, "concat_cols: no inputs");
        long n = val(parts[0]).rows();
        long c = 0;
        for (Id p : parts) {
            if (val(p).rows() != n)
                throw Error(Status::Usage, "concat_cols: row count mismatch");
            c += val(p).cols();
        }
        Tensor<S> out = Tensor<S>::zeros({n, c});
        long off = 0;
        bool rg = false;
        for (Id p : parts) {
            const Tensor<S>& P = val(p);
            for (long i = 0; i < n; ++i)
                for (long j = 0; j < P.cols(); ++j) out.at(i, off + j) = P.at(i, j);
            off += P.cols();
            rg = rg || requires_grad(p);
        }
        Id o = push_value(std::move(out), rg && grad_enabled_);
        record(o, [this, parts, o] {
            const Tensor<S>& g = grads_ref(o);
            long n = g.rows();
            long off = 0;
            for (Id p : parts) {
                long pc = val(p).cols();
                if (requires_grad(p)) {
                    Tensor<S>& gp = grad_buf(p);
                    for (long i = 0; i < n; ++i)
                        for (long j = 0; j < pc; ++j) gp.at(i, j) += g.at(i, off + j);
                }
                off += pc;
            }
        });
        return o;
    }

    Id slice_cols(Id a, long c0, long c1) {
        const Tensor<S>& X = val(a);
        if (c0 < 0 || c1 > X.cols() || c0 >= c1)
            throw Error(Status::Usage, "slice_cols: bad column range");
        long n = X.rows();
        Tensor<S> out = Tensor<S>::zeros({n, c1 - c0});
        for (long i = 0; i < n; ++i)
            for (long j = c0; j < c1; ++j) out.at(i, j - c0) = X.at(i, j);
        Id o = push_value(std::move(out), needs_grad(a));
        record(o, [this, a, o, c0] {
            if (!requires_grad(a)) return;
            const Tensor<S>& g = grads_ref(o);
            Tensor<S>& ga = grad_buf(a);
            for (long i = 0; i < g.rows(); ++i)
                for (long j = 0; j < g.cols(); ++j) ga.at(i, c0 + j) += g.at(i, j);
        });
        return o;
    }

    Id repeat_row(Id row, long n) {
        const Tensor<S>& r = val(row);
        if (r.rows() != 1) throw Error(Status::Usage, "repeat_row: expected a single row");
        long c = r.cols();
        Tensor<S> out = Tensor<S>::zeros({n, c});
        for (long i = 0; i < n; ++i)
            for (long j = 0; j < c; ++j) out.at(i, j) = r.data[static_cast<size_t>(j)];
        Id o = push_value(std::move(out), needs_grad(row));
        record(o, [this, row, o] {
            if (!requires_grad(row)) return;
            const Tensor<S>& g = grads_ref(o);
            Tensor<S>& gr = grad_buf(row);
            for (long j = 0; j < g.cols(); ++j) {
                double acc = 0.0;
                for (long i = 0; i < g.rows(); ++i) acc += static_cast<double>(g.at(i, j));
                gr.data[static_cast<size_t>(j)] += static_cast<S>(acc);
            }
        });
        return o;
    }

    Id gather_rows(Id a, std::vector<long> idx) {
        const Tensor<S>& X = val(a);
        long c = X.cols();
        Tensor<S> out = Tensor<S>::zeros({static_cast<long>(idx.size()), c});
        for (size_t i = 0; i < idx.size(); ++i) {
            if (idx[i] < 0 || idx[i] >= X.rows())
                throw Error(Status::Usage, "gather_rows: index out of range");
            for (long j = 0; j < c; ++j) out.at(static_cast<long>(i), j) = X.at(idx[i], j);
        }
        Id o = push_value(std::move(out), needs_grad(a));
        record(o, [this, a, o, idx = std::move(idx)] {
            if (!requires_grad(a)) return;
            const Tensor<S>& g = grads_ref(o);
            Tensor<S>& ga = grad_buf(a);
            for (size_t i = 0; i < idx.size(); ++i)
                for (long j = 0; j < g.cols(); ++j)
                    ga.at(idx[i], j) += g.at(static_cast<long>(i), j);
        });
        return o;
    }

    // Row i of m scaled by w[i]; w is (n x 1).
    Id scale_rows(Id m, Id w) {
        const Tensor<S>& M = val(m);
        const Tensor<S>& W = val(w);
        if (W.rows() != M.rows() || W.cols() != 1)
            throw Error(Status::Usage, "scale_rows: weight must be (rows x 1)");
        Tensor<S> out = M;
        long n = M.rows(), c = M.cols();
        for (long i = 0; i < n; ++i)
            for (long j = 0; j < c; ++j) out.at(i, j) *= W.data[static_cast<size_t>(i)];
        Id o = push_value(std::move(out), needs_grad(m, w));
        record(o, [this, m, w, o] {
            const Tensor<S>& g = grads_ref(o);
            long n = g.rows(), c = g.cols();
            if (requires_grad(m)) {
                const Tensor<S>& W = val(w);
                Tensor<S>& gm = grad_buf(m);
                for (long i = 0; i < n; ++i)
                    for (long j = 0; j < c; ++j)
                        gm.at(i, j) += g.at(i, j) * W.data[static_cast<size_t>(i)];
            }
            if (requires_grad(w)) {
                const Tensor<S>& M = val(m);
                Tensor<S>& gw = grad_buf(w);
                for (long i = 0; i < n; ++i) {
                    double acc = 0.0;
                    for (long j = 0; j < c; ++j)
                        acc += static_cast<double>(g.at(i, j)) * M.at(i, j);
                    gw.data[static_cast<size_t>(i)] += static_cast<S>(acc);
                }
            }
        });
        return o;
    }

    Id sum_all(Id a) {
        const Tensor<S>& X = val(a);
        double acc = 0.0;
        for (S v : X.data) acc += v;
        Id o = push_value(Tensor<S>::scalar(static_cast<S>(acc)), needs_grad(a));
        record(o, [this, a, o] {
            if (!requires_grad(a)) return;
            S g = grads_ref(o).data[0];
            Tensor<S>& ga = grad_buf(a);
            for (S& v : ga.data) v += g;
        });
        return o;
    }

    // m / s where s is a (1 x 1) scalar tensor.
    Id div_by_scalar(Id m, Id s) {
        const Tensor<S>& M = val(m);
        S sv = val(s).scalar_value();
        Tensor<S> out = M;
        for (S& v : out.data) v /= sv;
        Id o = push_value(std::move(out), needs_grad(m, s));
        record(o, [this, m, s, o] {
            const Tensor<S>& g = grads_ref(o);
            S sv = val(s).scalar_value();
            if (requires_grad(m)) {
                Tensor<S>& gm = grad_buf(m);
                for (size_t i = 0; i < g.data.size(); ++i) gm.data[i] += g.data[i] / sv;
            }
            if (requires_grad(s)) {
                const Tensor<S>& y = val(o);
                double acc = 0.0;
                for (size_t i = 0; i < g.data.size(); ++i)
                    acc += static_cast<double>(g.data[i]) * y.data[i];
                grad_buf(s).data[0] += static_cast<S>(-acc / sv);
            }
        });
        return o;
    }

    // L1 distance to a constant target, reduced by mean (default) or sum.
    Id l1_loss(Id a, const Tensor<S>& target, bool mean = true) {
        const Tensor<S>& X = val(a);
        if (!X.same_shape(target)) throw Error(Status::Usage, "l1_loss: shape mismatch");
        double acc = 0.0;
        for (size_t i = 0; i < X.data.size(); ++i)
            acc += std::abs(static_cast<double>(X.data[i]) - target.data[i]);
        double denom = mean ? static_cast<double>(X.numel()) : 1.0;
        Id o = push_value(Tensor<S>::scalar(static_cast<S>(acc / denom)), needs_grad(a));
        record(o, [this, a, o, target, denom] {
            if (!requires_grad(a)) return;
            S g = grads_ref(o).data[0];
            const Tensor<S>& X = val(a);
            Tensor<S>& ga = grad_buf(a);
            for (size_t i = 0; i < X.data.size(); ++i) {
                double d = static_cast<double>(X.data[i]) - target.data[i];
                if (d > 0)
                    ga.data[i] += static_cast<S>(g / denom);
                else if (d < 0)
                    ga.data[i] -= static_cast<S>(g / denom);
            }
        });
        return o;
    }

    // Mean binary cross-entropy of two-class probability rows (n x 2)
    // against {0,1} labels; log arguments clamped at 1e-12.
    Id bce_mean(Id probs, std::vector<double> labels) {
        const Tensor<S>& P = val(probs);
        long n = P.rows();
        if (P.cols() != 2 || static_cast<long>(labels.size()) != n)
            throw Error(Status::Usage, "bce_mean: expected (n x 2) probabilities and n labels");
        constexpr double kEps = 1e-12;
        double acc = 0.0;
        for (long i = 0; i < n; ++i) {
            double p = labels[static_cast<size_t>(i)] > 0.5 ? P.at(i, 1) : P.at(i, 0);
            acc -= std::log(std::max(p, kEps));
        }
        Id o = push_value(Tensor<S>::scalar(static_cast<S>(acc / n)), needs_grad(probs));
        record(o, [this, probs, o, labels = std::move(labels)] {
            if (!requires_grad(probs)) return;
            constexpr double kEps = 1e-12;
            S g = grads_ref(o).data[0];
            const Tensor<S>& P = val(probs);
            Tensor<S>& gp = grad_buf(probs);
            long n = P.rows();
            for (long i = 0; i < n; ++i) {
                long cls = labels[static_cast<size_t>(i)] > 0.5 ? 1 : 0;
                double p = P.at(i, cls);
                if (p > kEps) gp.at(i, cls) += static_cast<S>(-g / (p * n));
            }
        });
        return o;
    }

    // ---- fused geometry ops (custom backward) ------------------------------

    // Builds the (n*k) x 10 neighbor feature rows
    //   [m, m - x, angle(n_x, d), angle(n_m, d), angle(n_x, n_m), |d|]
    // for fixed neighbor indices (n*k entries, row-major per point).
    // Zero-length vectors take angle 0 with zero gradient.
    Id ppf_augment(Id points, Id normals, const std::vector<long>& neighbor_idx, long k);

    // Optimal rotation of the weighted orthogonal Procrustes problem: given
    // the 3x3 cross-covariance, returns R = V diag(1,1,det(VU^T)) U^T.
    // Backward uses the closed-form SVD differential.
    Id procrustes_rotation(Id cross_cov);

    // Per row of H (positive weights): keep the k largest entries (ties to
    // the lower index), renormalize them to sum 1, and output the weighted
    // average of the corresponding rows of Y (constant).
    Id topk_weighted_rows(Id h, const Tensor<S>& y, long k);

    // ---- backward ----------------------------------------------------------

    // Seeds d(loss)=1 and replays the tape in reverse. When a store is given,
    // parameter gradients are accumulated (+=) into it; repeated calls
    // without zeroing therefore double the gradients.
    void backward(Id loss, ParamStore<S>* store = nullptr) {
        if (nodes_.empty()) throw Error(Status::Usage, "backward on an empty tape");
        const Tensor<S>& L = val(loss);
        if (L.numel() != 1) throw Error(Status::Usage, "backward: loss must be scalar");
        grad_buf(loss).data[0] = S(1);
        for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it)
            if (has_grad(it->output)) it->backward();
        if (store) {
            for (const auto& [name, id] : param_ids_) {
                if (!has_grad(id)) continue;
                Tensor<S>& dst = store->grad(name);
                const Tensor<S>& src = grad(id);
                for (size_t i = 0; i < dst.data.size(); ++i) dst.data[i] += src.data[i];
            }
        }
    }

  private:
    struct Node {
        Id output;
        std::function<void()> backward;
    };

    bool grad_enabled_ = true;
    std::vector<Tensor<S>> values_;
    std::vector<Tensor<S>> grads_;
    std::vector<bool> requires_grad_;
    std::vector<Node> nodes_;
    std::vector<std::pair<std::string, Id>> param_ids_;

    Id push_value(Tensor<S> v, bool requires_grad) {
        values_.push_back(std::move(v));
        grads_.emplace_back();
        requires_grad_.push_back(requires_grad);
        return static_cast<Id>(values_.size() - 1);
    }

    bool requires_grad(Id id) const { return requires_grad_[static_cast<size_t>(id)]; }
    bool needs_grad(Id a) const { return grad_enabled_ && requires_grad(a); }
    bool needs_grad(Id a, Id b) const {
        return grad_enabled_ && (requires_grad(a) || requires_grad(b));
    }
    bool needs_grad(Id a, Id b, Id c) const {
        return grad_enabled_ && (requires_grad(a) || requires_grad(b) || requires_grad(c));
    }

    void record(Id output, std::function<void()> fn) {
        if (grad_enabled_ && requires_grad_[static_cast<size_t>(output)])
            nodes_.push_back({output, std::move(fn)});
    }

    const Tensor<S>& grads_ref(Id id) const { return grads_[static_cast<size_t>(id)]; }

    Tensor<S>& grad_buf(Id id) {
        Tensor<S>& g = grads_[static_cast<size_t>(id)];
        if (g.shape.empty()) g = Tensor<S>::zeros(values_[static_cast<size_t>(id)].shape);
        return g;
    }

    Id binary_elementwise(Id a, Id b, S sign_b) {
        const Tensor<S>& A = val(a);
        const Tensor<S>& B = val(b);
        if (!A.same_shape(B))
            throw Error(Status::Usage, "elementwise op: shape mismatch " + shape_string(A) +
                                           " vs " + shape_string(B));
        Tensor<S> out = A;
        vec(out) += sign_b * cvec(B);
        Id o = push_value(std::move(out), needs_grad(a, b));
        record(o, [this, a, b, o, sign_b] {
            const Tensor<S>& g = grads_ref(o);
            if (requires_grad(a)) vec(grad_buf(a)) += cvec(g);
            if (requires_grad(b)) vec(grad_buf(b)) += sign_b * cvec(g);
        });
        return o;
    }

    static MatMap mat(Tensor<S>& t) { return MatMap(t.data.data(), t.rows(), t.cols()); }
    static ConstMatMap cmat(const Tensor<S>& t) {
        return ConstMatMap(t.data.data(), t.rows(), t.cols());
    }
    using VecMap = Eigen::Map<Eigen::Array<S, Eigen::Dynamic, 1>>;
    using ConstVecMap = Eigen::Map<const Eigen::Array<S, Eigen::Dynamic, 1>>;
    static VecMap vec(Tensor<S>& t) {
        return VecMap(t.data.data(), static_cast<long>(t.data.size()));
    }
    static ConstVecMap cvec(const Tensor<S>& t) {
        return ConstVecMap(t.data.data(), static_cast<long>(t.data.size()));
    }
};

}  // namespace ropnet::core

#include "core/tape_geom_ops.ipp"
