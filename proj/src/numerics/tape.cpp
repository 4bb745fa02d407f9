// SPDX-License-Identifier: Apache-2.0
#include "peta/numerics/tape.hpp"

#include <cmath>

#include "peta/numerics/kernels.hpp"

namespace peta::numerics {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b)) {
        throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " + b.shape_str());
    }
}

}  // namespace

NodeId Tape::matmul(NodeId a, NodeId b) {
    const Tensor& ta = val(a);
    const Tensor& tb = val(b);
    if (ta.rank() != 2 || tb.rank() != 2 || ta.dim(1) != tb.dim(0)) {
        throw ShapeError("matmul: incompatible shapes " + ta.shape_str() + " and " + tb.shape_str());
    }
    const int64_t m = ta.dim(0), k = ta.dim(1), n = tb.dim(1);
    Tensor out({m, n});
    kernels::active().matmul(ta.data(), tb.data(), out.data(), m, k, n);

    const bool rg = wants(a) || wants(b);
    NodeId id = add_node(std::move(out), rg, nullptr);
    if (rg) {
        node(id).back = [a, b, id, m, k, n](Tape& t) {
            const Tensor& gy = t.cnode(id).grad;
            if (t.wants(a)) {
                Tensor bt = transpose2d(t.val(b));
                Tensor tmp({m, k});
                kernels::active().matmul(gy.data(), bt.data(), tmp.data(), m, n, k);
                kernels::active().axpy(1.0, tmp.data(), t.grad_ref(a).data(), m * k);
            }
            if (t.wants(b)) {
                Tensor at = transpose2d(t.val(a));
                Tensor tmp({k, n});
                kernels::active().matmul(at.data(), gy.data(), tmp.data(), k, m, n);
                kernels::active().axpy(1.0, tmp.data(), t.grad_ref(b).data(), k * n);
            }
        };
    }
    return id;
}

NodeId Tape::batched_matmul(NodeId a, NodeId b, bool trans_b) {
    const Tensor& ta = val(a);
    const Tensor& tb = val(b);
    if (ta.rank() != 3 || tb.rank() != 3 || ta.dim(0) != tb.dim(0)) {
        throw ShapeError("batched_matmul: incompatible shapes " + ta.shape_str() + " and " + tb.shape_str());
    }
    const int64_t bs = ta.dim(0), m = ta.dim(1), k = ta.dim(2);
    const int64_t n = trans_b ? tb.dim(1) : tb.dim(2);
    const int64_t bk = trans_b ? tb.dim(2) : tb.dim(1);
    if (bk != k) {
        throw ShapeError("batched_matmul: inner dim mismatch " + ta.shape_str() + " and " + tb.shape_str());
    }
    Tensor out({bs, m, n});
    const auto& K = kernels::active();
    for (int64_t s = 0; s < bs; ++s) {
        const double* ap = ta.data() + s * m * k;
        const double* bp = tb.data() + s * (trans_b ? n * k : k * n);
        double* cp = out.data() + s * m * n;
        if (!trans_b) {
            K.matmul(ap, bp, cp, m, k, n);
        } else {
            // C = A * B^T with B stored [n,k]; transpose the slice once.
            Tensor bt({k, n});
            for (int64_t r = 0; r < n; ++r) {
                for (int64_t c = 0; c < k; ++c) bt.at(c, r) = bp[r * k + c];
            }
            K.matmul(ap, bt.data(), cp, m, k, n);
        }
    }

    const bool rg = wants(a) || wants(b);
    NodeId id = add_node(std::move(out), rg, nullptr);
    if (rg) {
        node(id).back = [a, b, id, bs, m, k, n, trans_b](Tape& t) {
            const auto& K = kernels::active();
            const Tensor& gy = t.cnode(id).grad;
            const Tensor& av = t.val(a);
            const Tensor& bv = t.val(b);
            for (int64_t s = 0; s < bs; ++s) {
                const double* gp = gy.data() + s * m * n;
                const double* ap = av.data() + s * m * k;
                const double* bp = bv.data() + s * (trans_b ? n * k : k * n);
                if (t.wants(a)) {
                    // dA = dC * B^T (plain) or dC * B (trans_b).
                    Tensor tmp({m, k});
                    if (!trans_b) {
                        Tensor bt({n, k});
                        for (int64_t r = 0; r < k; ++r) {
                            for (int64_t c = 0; c < n; ++c) bt.at(c, r) = bp[r * n + c];
                        }
                        K.matmul(gp, bt.data(), tmp.data(), m, n, k);
                    } else {
                        K.matmul(gp, bp, tmp.data(), m, n, k);
                    }
                    K.axpy(1.0, tmp.data(), t.grad_ref(a).data() + s * m * k, m * k);
                }
                if (t.wants(b)) {
                    Tensor at({k, m});
                    for (int64_t r = 0; r < m; ++r) {
                        for (int64_t c = 0; c < k; ++c) at.at(c, r) = ap[r * k + c];
                    }
                    if (!trans_b) {
                        // dB = A^T * dC : [k,n]
                        Tensor tmp({k, n});
                        K.matmul(at.data(), gp, tmp.data(), k, m, n);
                        K.axpy(1.0, tmp.data(), t.grad_ref(b).data() + s * k * n, k * n);
                    } else {
                        // dB = dC^T * A : [n,k]
                        Tensor gt({n, m});
                        for (int64_t r = 0; r < m; ++r) {
                            for (int64_t c = 0; c < n; ++c) gt.at(c, r) = gp[r * n + c];
                        }
                        Tensor tmp({n, k});
                        K.matmul(gt.data(), av.data() + s * m * k, tmp.data(), n, m, k);
                        K.axpy(1.0, tmp.data(), t.grad_ref(b).data() + s * n * k, n * k);
                    }
                }
            }
        };
    }
    return id;
}

NodeId Tape::add(NodeId a, NodeId b) {
    const Tensor& ta = val(a);
    const Tensor& tb = val(b);
    check_same_shape(ta, tb, "add");
    Tensor out(ta.shape());
    kernels::active().add(ta.data(), tb.data(), out.data(), ta.size());

    const bool rg = wants(a) || wants(b);
    NodeId id = add_node(std::move(out), rg, nullptr);
    if (rg) {
        node(id).back = [a, b, id](Tape& t) {
            const Tensor& gy = t.cnode(id).grad;
            if (t.wants(a)) kernels::active().axpy(1.0, gy.data(), t.grad_ref(a).data(), gy.size());
            if (t.wants(b)) kernels::active().axpy(1.0, gy.data(), t.grad_ref(b).data(), gy.size());
        };
    }
    return id;
}

NodeId Tape::add_bias(NodeId x, NodeId bias) {
    const Tensor& tx = val(x);
    const Tensor& tb = val(bias);
    if (tx.rank() != 2 || tb.rank() != 1 || tx.dim(1) != tb.dim(0)) {
        throw ShapeError("add_bias: incompatible shapes " + tx.shape_str() + " and " + tb.shape_str());
    }
    const int64_t rows = tx.dim(0), d = tx.dim(1);
    Tensor out({rows, d});
    for (int64_t i = 0; i < rows; ++i) {
        kernels::active().add(tx.data() + i * d, tb.data(), out.data() + i * d, d);
    }

    const bool rg = wants(x) || wants(bias);
    NodeId id = add_node(std::move(out), rg, nullptr);
    if (rg) {
        node(id).back = [x, bias, id, rows, d](Tape& t) {
            const Tensor& gy = t.cnode(id).grad;
            if (t.wants(x)) kernels::active().axpy(1.0, gy.data(), t.grad_ref(x).data(), rows * d);
            if (t.wants(bias)) {
                double* gb = t.grad_ref(bias).data();
                for (int64_t i = 0; i < rows; ++i) {
                    kernels::active().axpy(1.0, gy.data() + i * d, gb, d);
                }
            }
        };
    }
    return id;
}

NodeId Tape::mul(NodeId a, NodeId b) {
    const Tensor& ta = val(a);
    const Tensor& tb = val(b);
    check_same_shape(ta, tb, "mul");
    Tensor out(ta.shape());
    kernels::active().mul(ta.data(), tb.data(), out.data(), ta.size());

    const bool rg = wants(a) || wants(b);
    NodeId id = add_node(std::move(out), rg, nullptr);
    if (rg) {
        node(id).back = [a, b, id](Tape& t) {
            const Tensor& gy = t.cnode(id).grad;
            const int64_t n = gy.size();
            if (t.wants(a)) {
                Tensor tmp(gy.shape());
                kernels::active().mul(gy.data(), t.val(b).data(), tmp.data(), n);
                kernels::active().axpy(1.0, tmp.data(), t.grad_ref(a).data(), n);
            }
            if (t.wants(b)) {
                Tensor tmp(gy.shape());
                kernels::active().mul(gy.data(), t.val(a).data(), tmp.data(), n);
                kernels::active().axpy(1.0, tmp.data(), t.grad_ref(b).data(), n);
            }
        };
    }
    return id;
}

NodeId Tape::scale(NodeId a, double s) {
    const Tensor& ta = val(a);
    Tensor out(ta.shape());
    kernels::active().scale(ta.data(), s, out.data(), ta.size());

    const bool rg = wants(a);
    NodeId id = add_node(std::move(out), rg, nullptr);
    if (rg) {
        node(id).back = [a, id, s](Tape& t) {
            const Tensor& gy = t.cnode(id).grad;
            kernels::active().axpy(s, gy.data(), t.grad_ref(a).data(), gy.size());
        };
    }
    return id;
}

NodeId Tape::sum_all(NodeId a) {
    const Tensor& ta = val(a);
    double s = 0.0;
    for (int64_t i = 0; i < ta.size(); ++i) s += ta.at(i);
    const bool rg = wants(a);
    NodeId id = add_node(Tensor::scalar(s), rg, nullptr);
    if (rg) {
        node(id).back = [a, id](Tape& t) {
            const double g = t.cnode(id).grad.at(0);
            Tensor& ga = t.grad_ref(a);
            for (int64_t i = 0; i < ga.size(); ++i) ga.at(i) += g;
        };
    }
    return id;
}

NodeId Tape::tanh_op(NodeId a) {
    const Tensor& ta = val(a);
    Tensor out(ta.shape());
    for (int64_t i = 0; i < ta.size(); ++i) out.at(i) = std::tanh(ta.at(i));

    const bool rg = wants(a);
    NodeId id = add_node(std::move(out), rg, nullptr);
    if (rg) {
        node(id).back = [a, id](Tape& t) {
            const Tensor& y = t.val(id);
            const Tensor& gy = t.cnode(id).grad;
            Tensor& ga = t.grad_ref(a);
            for (int64_t i = 0; i < y.size(); ++i) {
                ga.at(i) += gy.at(i) * (1.0 - y.at(i) * y.at(i));
            }
        };
    }
    return id;
}

NodeId Tape::gelu(NodeId a) {
    const Tensor& ta = val(a);
    Tensor out(ta.shape());
    for (int64_t i = 0; i < ta.size(); ++i) {
        const double x = ta.at(i);
        out.at(i) = 0.5 * x * (1.0 + std::erf(x * kInvSqrt2));
    }

    const bool rg = wants(a);
    NodeId id = add_node(std::move(out), rg, nullptr);
    if (rg) {
        node(id).back = [a, id](Tape& t) {
            const Tensor& xin = t.val(a);
            const Tensor& gy = t.cnode(id).grad;
            Tensor& ga = t.grad_ref(a);
            for (int64_t i = 0; i < xin.size(); ++i) {
                const double x = xin.at(i);
                const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
                const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
                ga.at(i) += gy.at(i) * (cdf + x * pdf);
            }
        };
    }
    return id;
}

NodeId Tape::layer_norm(NodeId x, NodeId gamma, NodeId beta, double eps) {
    const Tensor& tx = val(x);
    const Tensor& tg = val(gamma);
    const Tensor& tb = val(beta);
    if (tx.rank() != 2 || tg.rank() != 1 || tb.rank() != 1 || tx.dim(1) != tg.dim(0) || tx.dim(1) != tb.dim(0)) {
        throw ShapeError("layer_norm: incompatible shapes " + tx.shape_str() + ", " + tg.shape_str() + ", " +
                         tb.shape_str());
    }
    const int64_t rows = tx.dim(0), d = tx.dim(1);
    Tensor out({rows, d});
    Tensor xhat({rows, d});
    Tensor istd({rows});
    for (int64_t i = 0; i < rows; ++i) {
        const double* xp = tx.data() + i * d;
        double mean = 0.0;
        for (int64_t j = 0; j < d; ++j) mean += xp[j];
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (int64_t j = 0; j < d; ++j) {
            const double c = xp[j] - mean;
            var += c * c;
        }
        var /= static_cast<double>(d);
        const double inv = 1.0 / std::sqrt(var + eps);
        istd.at(i) = inv;
        for (int64_t j = 0; j < d; ++j) {
            const double xh = (xp[j] - mean) * inv;
            xhat.at(i, j) = xh;
            out.at(i, j) = xh * tg.at(j) + tb.at(j);
        }
    }

    const bool rg = wants(x) || wants(gamma) || wants(beta);
    NodeId id = add_node(std::move(out), rg, nullptr);
    if (rg) {
        node(id).back = [x, gamma, beta, id, rows, d, xh = std::move(xhat), is = std::move(istd)](Tape& t) {
            const Tensor& gy = t.cnode(id).grad;
            const Tensor& tg = t.val(gamma);
            if (t.wants(gamma)) {
                Tensor& gg = t.grad_ref(gamma);
                for (int64_t i = 0; i < rows; ++i) {
                    for (int64_t j = 0; j < d; ++j) gg.at(j) += gy.at(i, j) * xh.at(i, j);
                }
            }
            if (t.wants(beta)) {
                Tensor& gb = t.grad_ref(beta);
                for (int64_t i = 0; i < rows; ++i) {
                    for (int64_t j = 0; j < d; ++j) gb.at(j) += gy.at(i, j);
                }
            }
            if (t.wants(x)) {
                Tensor& gx = t.grad_ref(x);
                std::vector<double> g(static_cast<size_t>(d));
                for (int64_t i = 0; i < rows; ++i) {
                    double m1 = 0.0, m2 = 0.0;
                    for (int64_t j = 0; j < d; ++j) {
                        g[static_cast<size_t>(j)] = gy.at(i, j) * tg.at(j);
                        m1 += g[static_cast<size_t>(j)];
                        m2 += g[static_cast<size_t>(j)] * xh.at(i, j);
                    }
                    m1 /= static_cast<double>(d);
                    m2 /= static_cast<double>(d);
                    const double inv = is.at(i);
                    for (int64_t j = 0; j < d; ++j) {
                        gx.at(i, j) += (g[static_cast<size_t>(j)] - m1 - xh.at(i, j) * m2) * inv;
                    }
                }
            }
        };
    }
    return id;
}

NodeId Tape::softmax_rows(NodeId x) {
    const Tensor& tx = val(x);
    if (tx.rank() < 1) throw ShapeError("softmax_rows: scalar input");
    const int64_t cols = tx.dim(tx.rank() - 1);
    const int64_t rows = tx.size() / cols;
    Tensor out(tx.shape());
    for (int64_t i = 0; i < rows; ++i) {
        const double* xp = tx.data() + i * cols;
        double* yp = out.data() + i * cols;
        double mx = xp[0];
        for (int64_t j = 1; j < cols; ++j) mx = std::max(mx, xp[j]);
        double z = 0.0;
        for (int64_t j = 0; j < cols; ++j) {
            yp[j] = std::exp(xp[j] - mx);
            z += yp[j];
        }
        const double inv = 1.0 / z;
        for (int64_t j = 0; j < cols; ++j) yp[j] *= inv;
    }

    const bool rg = wants(x);
    NodeId id = add_node(std::move(out), rg, nullptr);
    if (rg) {
        node(id).back = [x, id, rows, cols](Tape& t) {
            const Tensor& y = t.val(id);
            const Tensor& gy = t.cnode(id).grad;
            Tensor& gx = t.grad_ref(x);
            for (int64_t i = 0; i < rows; ++i) {
                const double* yp = y.data() + i * cols;
                const double* gp = gy.data() + i * cols;
                double s = 0.0;
                for (int64_t j = 0; j < cols; ++j) s += gp[j] * yp[j];
                double* gxp = gx.data() + i * cols;
                for (int64_t j = 0; j < cols; ++j) gxp[j] += yp[j] * (gp[j] - s);
            }
        };
    }
    return id;
}

NodeId Tape::embedding(NodeId table, std::vector<int32_t> ids) {
    const Tensor& tt = val(table);
    if (tt.rank() != 2) throw ShapeError("embedding: table must be rank-2, got " + tt.shape_str());
    const int64_t v = tt.dim(0), d = tt.dim(1);
    const int64_t n = static_cast<int64_t>(ids.size());
    for (int32_t idx : ids) {
        if (idx < 0 || idx >= v) {
            throw IndexError("embedding: token id " + std::to_string(idx) + " out of range [0, " + std::to_string(v) +
                             ")");
        }
    }
    Tensor out({n, d});
    for (int64_t i = 0; i < n; ++i) {
        const double* src = tt.data() + static_cast<int64_t>(ids[static_cast<size_t>(i)]) * d;
        double* dst = out.data() + i * d;
        for (int64_t j = 0; j < d; ++j) dst[j] = src[j];
    }

    const bool rg = wants(table);
    NodeId id = add_node(std::move(out), rg, nullptr);
    if (rg) {
        node(id).back = [table, id, d, ids = std::move(ids)](Tape& t) {
            const Tensor& gy = t.cnode(id).grad;
            Tensor& gt = t.grad_ref(table);
            for (size_t i = 0; i < ids.size(); ++i) {
                kernels::active().axpy(1.0, gy.data() + static_cast<int64_t>(i) * d,
                                       gt.data() + static_cast<int64_t>(ids[i]) * d, d);
            }
        };
    }
    return id;
}

NodeId Tape::gather_rows(NodeId x, std::vector<int64_t> rows) {
    const Tensor& tx = val(x);
    if (tx.rank() != 2) throw ShapeError("gather_rows: input must be rank-2, got " + tx.shape_str());
    const int64_t n = tx.dim(0), d = tx.dim(1);
    for (int64_t r : rows) {
        if (r < 0 || r >= n) throw IndexError("gather_rows: row " + std::to_string(r) + " out of range");
    }
    const int64_t m = static_cast<int64_t>(rows.size());
    Tensor out({m, d});
    for (int64_t i = 0; i < m; ++i) {
        const double* src = tx.data() + rows[static_cast<size_t>(i)] * d;
        for (int64_t j = 0; j < d; ++j) out.at(i, j) = src[j];
    }

    const bool rg = wants(x);
    NodeId id = add_node(std::move(out), rg, nullptr);
    if (rg) {
        node(id).back = [x, id, d, rows = std::move(rows)](Tape& t) {
            const Tensor& gy = t.cnode(id).grad;
            Tensor& gx = t.grad_ref(x);
            for (size_t i = 0; i < rows.size(); ++i) {
                kernels::active().axpy(1.0, gy.data() + static_cast<int64_t>(i) * d, gx.data() + rows[i] * d, d);
            }
        };
    }
    return id;
}

NodeId Tape::split_heads(NodeId x, int64_t batch, int64_t seq, int64_t heads) {
    const Tensor& tx = val(x);
    if (tx.rank() != 2 || tx.dim(0) != batch * seq || tx.dim(1) % heads != 0) {
        throw ShapeError("split_heads: bad input " + tx.shape_str());
    }
    const int64_t d = tx.dim(1), dh = d / heads;
    Tensor out({batch * heads, seq, dh});
    for (int64_t bi = 0; bi < batch; ++bi) {
        for (int64_t si = 0; si < seq; ++si) {
            const double* src = tx.data() + (bi * seq + si) * d;
            for (int64_t h = 0; h < heads; ++h) {
                double* dst = out.data() + ((bi * heads + h) * seq + si) * dh;
                for (int64_t j = 0; j < dh; ++j) dst[j] = src[h * dh + j];
            }
        }
    }

    const bool rg = wants(x);
    NodeId id = add_node(std::move(out), rg, nullptr);
    if (rg) {
        node(id).back = [x, id, batch, seq, heads, d, dh](Tape& t) {
            const Tensor& gy = t.cnode(id).grad;
            Tensor& gx = t.grad_ref(x);
            for (int64_t bi = 0; bi < batch; ++bi) {
                for (int64_t si = 0; si < seq; ++si) {
                    double* dst = gx.data() + (bi * seq + si) * d;
                    for (int64_t h = 0; h < heads; ++h) {
                        const double* src = gy.data() + ((bi * heads + h) * seq + si) * dh;
                        for (int64_t j = 0; j < dh; ++j) dst[h * dh + j] += src[j];
                    }
                }
            }
        };
    }
    return id;
}

NodeId Tape::merge_heads(NodeId x, int64_t batch, int64_t seq, int64_t heads) {
    const Tensor& tx = val(x);
    if (tx.rank() != 3 || tx.dim(0) != batch * heads || tx.dim(1) != seq) {
        throw ShapeError("merge_heads: bad input " + tx.shape_str());
    }
    const int64_t dh = tx.dim(2), d = dh * heads;
    Tensor out({batch * seq, d});
    for (int64_t bi = 0; bi < batch; ++bi) {
        for (int64_t si = 0; si < seq; ++si) {
            double* dst = out.data() + (bi * seq + si) * d;
            for (int64_t h = 0; h < heads; ++h) {
                const double* src = tx.data() + ((bi * heads + h) * seq + si) * dh;
                for (int64_t j = 0; j < dh; ++j) dst[h * dh + j] = src[j];
            }
        }
    }

    const bool rg = wants(x);
    NodeId id = add_node(std::move(out), rg, nullptr);
    if (rg) {
        node(id).back = [x, id, batch, seq, heads, d, dh](Tape& t) {
            const Tensor& gy = t.cnode(id).grad;
            Tensor& gx = t.grad_ref(x);
            for (int64_t bi = 0; bi < batch; ++bi) {
                for (int64_t si = 0; si < seq; ++si) {
                    const double* src = gy.data() + (bi * seq + si) * d;
                    for (int64_t h = 0; h < heads; ++h) {
                        double* dst = gx.data() + ((bi * heads + h) * seq + si) * dh;
                        for (int64_t j = 0; j < dh; ++j) dst[j] += src[h * dh + j];
                    }
                }
            }
        };
    }
    return id;
}

NodeId Tape::masked_mean_pool(NodeId x, const std::vector<double>& mask, int64_t batch, int64_t seq) {
    const Tensor& tx = val(x);
    if (tx.rank() != 2 || tx.dim(0) != batch * seq || static_cast<int64_t>(mask.size()) != batch * seq) {
        throw ShapeError("masked_mean_pool: bad input " + tx.shape_str());
    }
    const int64_t d = tx.dim(1);
    std::vector<double> inv_count(static_cast<size_t>(batch));
    for (int64_t bi = 0; bi < batch; ++bi) {
        double c = 0.0;
        for (int64_t si = 0; si < seq; ++si) c += mask[static_cast<size_t>(bi * seq + si)];
        if (c <= 0.0) throw ContractError("masked_mean_pool: example " + std::to_string(bi) + " fully masked");
        inv_count[static_cast<size_t>(bi)] = 1.0 / c;
    }
    Tensor out({batch, d});
    for (int64_t bi = 0; bi < batch; ++bi) {
        double* dst = out.data() + bi * d;
        for (int64_t si = 0; si < seq; ++si) {
            const double w = mask[static_cast<size_t>(bi * seq + si)];
            if (w != 0.0) kernels::active().axpy(w, tx.data() + (bi * seq + si) * d, dst, d);
        }
        kernels::active().scale(dst, inv_count[static_cast<size_t>(bi)], dst, d);
    }

    const bool rg = wants(x);
    NodeId id = add_node(std::move(out), rg, nullptr);
    if (rg) {
        node(id).back = [x, id, batch, seq, d, mask, inv_count = std::move(inv_count)](Tape& t) {
            const Tensor& gy = t.cnode(id).grad;
            Tensor& gx = t.grad_ref(x);
            for (int64_t bi = 0; bi < batch; ++bi) {
                const double* gp = gy.data() + bi * d;
                for (int64_t si = 0; si < seq; ++si) {
                    const double w = mask[static_cast<size_t>(bi * seq + si)] * inv_count[static_cast<size_t>(bi)];
                    if (w != 0.0) kernels::active().axpy(w, gp, gx.data() + (bi * seq + si) * d, d);
                }
            }
        };
    }
    return id;
}

NodeId Tape::cross_entropy(NodeId logits, std::vector<int32_t> labels) {
    const Tensor& tl = val(logits);
    if (tl.rank() != 2) throw ShapeError("cross_entropy: logits must be rank-2, got " + tl.shape_str());
    const int64_t n = tl.dim(0), k = tl.dim(1);
    if (static_cast<int64_t>(labels.size()) != n) {
        throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for " + std::to_string(n) +
                         " logit rows");
    }
    for (int32_t y : labels) {
        if (y < 0 || y >= k) {
            throw IndexError("cross_entropy: label " + std::to_string(y) + " out of range [0, " + std::to_string(k) +
                             ")");
        }
    }
    Tensor probs({n, k});
    double loss = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        const double* xp = tl.data() + i * k;
        double mx = xp[0];
        for (int64_t j = 1; j < k; ++j) mx = std::max(mx, xp[j]);
        double z = 0.0;
        for (int64_t j = 0; j < k; ++j) {
            probs.at(i, j) = std::exp(xp[j] - mx);
            z += probs.at(i, j);
        }
        const double inv = 1.0 / z;
        for (int64_t j = 0; j < k; ++j) probs.at(i, j) *= inv;
        loss -= (xp[labels[static_cast<size_t>(i)]] - mx) - std::log(z);
    }
    loss /= static_cast<double>(n);

    const bool rg = wants(logits);
    NodeId id = add_node(Tensor::scalar(loss), rg, nullptr);
    if (rg) {
        node(id).back = [logits, id, n, k, p = std::move(probs), labels = std::move(labels)](Tape& t) {
            const double g = t.cnode(id).grad.at(0) / static_cast<double>(n);
            Tensor& gl = t.grad_ref(logits);
            for (int64_t i = 0; i < n; ++i) {
                const int64_t y = labels[static_cast<size_t>(i)];
                for (int64_t j = 0; j < k; ++j) {
                    gl.at(i, j) += g * (p.at(i, j) - (j == y ? 1.0 : 0.0));
                }
            }
        };
    }
    return id;
}

void Tape::backward(NodeId loss) {
    if (consumed_) throw ContractError("backward: tape already consumed");
    const Tensor& lv = val(loss);
    if (lv.size() != 1) throw ContractError("backward: loss must be scalar, got " + lv.shape_str());
    consumed_ = true;
    Node& ln = node(loss);
    ln.grad = Tensor::scalar(1.0);
    ln.has_grad = true;
    for (NodeId id = loss; id >= 0; --id) {
        Node& nd = node(id);
        if (nd.has_grad && nd.back) nd.back(*this);
    }
}

Tensor Tape::grad(NodeId id) const {
    const Node& nd = cnode(id);
    if (nd.has_grad) return nd.grad;
    return Tensor::zeros(nd.value.shape());
}

}  // namespace peta::numerics
