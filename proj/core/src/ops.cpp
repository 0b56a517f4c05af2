#include "kbcin/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <string>

namespace kbcin {

namespace {

// C[m,q] += A[m,p] * B[p,q]
void gemm_nn(const double* A, std::size_t m, std::size_t p, const double* B, std::size_t q,
             double* C) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* a = A + i * p;
        double* c = C + i * q;
        for (std::size_t k = 0; k < p; ++k) {
            const double av = a[k];
            const double* b = B + k * q;
            for (std::size_t j = 0; j < q; ++j) c[j] += av * b[j];
        }
    }
}

// C[m,n] += A[m,k] * B[n,k]^T
void gemm_nt(const double* A, std::size_t m, std::size_t k, const double* B, std::size_t n,
             double* C) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* a = A + i * k;
        double* c = C + i * n;
        for (std::size_t j = 0; j < n; ++j) {
            const double* b = B + j * k;
            double acc = 0.0;
            for (std::size_t t = 0; t < k; ++t) acc += a[t] * b[t];
            c[j] += acc;
        }
    }
}

// C[p,q] += A[m,p]^T * B[m,q]
void gemm_tn(const double* A, std::size_t m, std::size_t p, const double* B, std::size_t q,
             double* C) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* a = A + i * p;
        const double* b = B + i * q;
        for (std::size_t k = 0; k < p; ++k) {
            const double av = a[k];
            double* c = C + k * q;
            for (std::size_t j = 0; j < q; ++j) c[j] += av * b[j];
        }
    }
}

bool any_grad(std::initializer_list<const Tensor*> ts) {
    for (const Tensor* t : ts) {
        if (t->defined() && t->requires_grad()) return true;
    }
    return false;
}

void require_rank2(const Tensor& x, const char* op) {
    if (x.rank() != 2) {
        throw DimensionError(std::string(op) + ": expected rank-2 tensor, got shape " +
                             x.shape_str());
    }
}

void require_rank1(const Tensor& x, const char* op) {
    if (x.rank() != 1) {
        throw DimensionError(std::string(op) + ": expected rank-1 tensor, got shape " +
                             x.shape_str());
    }
}

}  // namespace

Tensor add(Tape& t, const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) {
        throw DimensionError("add: shape " + a.shape_str() + " vs " + b.shape_str());
    }
    Tensor out = Tensor::zeros(a.shape(), any_grad({&a, &b}));
    auto& o = out.mutable_values();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = a.at(i) + b.at(i);
    if (out.requires_grad()) {
        t.record("add", out, [a, b, out]() mutable {
            const auto& g = out.grad();
            if (a.requires_grad()) {
                auto& ga = a.grad();
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
            }
            if (b.requires_grad()) {
                auto& gb = b.grad();
                for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
            }
        });
    }
    return out;
}

Tensor scale(Tape& t, const Tensor& a, double c) {
    Tensor out = Tensor::zeros(a.shape(), a.requires_grad());
    auto& o = out.mutable_values();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = c * a.at(i);
    if (out.requires_grad()) {
        t.record("scale", out, [a, out, c]() mutable {
            const auto& g = out.grad();
            auto& ga = a.grad();
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += c * g[i];
        });
    }
    return out;
}

Tensor leaky_relu(Tape& t, const Tensor& x, double slope) {
    Tensor out = Tensor::zeros(x.shape(), x.requires_grad());
    auto& o = out.mutable_values();
    for (std::size_t i = 0; i < o.size(); ++i) {
        const double v = x.at(i);
        o[i] = v >= 0.0 ? v : slope * v;
    }
    if (out.requires_grad()) {
        t.record("leaky_relu", out, [x, out, slope]() mutable {
            const auto& g = out.grad();
            auto& gx = x.grad();
            for (std::size_t i = 0; i < g.size(); ++i) {
                gx[i] += (x.at(i) >= 0.0 ? 1.0 : slope) * g[i];
            }
        });
    }
    return out;
}

Tensor elu(Tape& t, const Tensor& x, double alpha) {
    Tensor out = Tensor::zeros(x.shape(), x.requires_grad());
    auto& o = out.mutable_values();
    for (std::size_t i = 0; i < o.size(); ++i) {
        const double v = x.at(i);
        o[i] = v >= 0.0 ? v : alpha * std::expm1(v);
    }
    if (out.requires_grad()) {
        t.record("elu", out, [x, out, alpha]() mutable {
            const auto& g = out.grad();
            auto& gx = x.grad();
            for (std::size_t i = 0; i < g.size(); ++i) {
                const double v = x.at(i);
                gx[i] += (v >= 0.0 ? 1.0 : alpha * std::exp(v)) * g[i];
            }
        });
    }
    return out;
}

Tensor sigmoid(Tape& t, const Tensor& x) {
    Tensor out = Tensor::zeros(x.shape(), x.requires_grad());
    auto& o = out.mutable_values();
    for (std::size_t i = 0; i < o.size(); ++i) {
        const double v = x.at(i);
        // stable in both tails
        o[i] = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
    }
    if (out.requires_grad()) {
        t.record("sigmoid", out, [x, out]() mutable {
            const auto& g = out.grad();
            auto& gx = x.grad();
            for (std::size_t i = 0; i < g.size(); ++i) {
                const double s = out.at(i);
                gx[i] += s * (1.0 - s) * g[i];
            }
        });
    }
    return out;
}

Tensor matmul(Tape& t, const Tensor& A, const Tensor& B) {
    require_rank2(A, "matmul");
    require_rank2(B, "matmul");
    if (A.cols() != B.rows()) {
        throw DimensionError("matmul: " + A.shape_str() + " incompatible with " + B.shape_str());
    }
    const std::size_t m = A.rows(), p = A.cols(), q = B.cols();
    Tensor out = Tensor::zeros({m, q}, any_grad({&A, &B}));
    gemm_nn(A.values().data(), m, p, B.values().data(), q, out.mutable_values().data());
    if (out.requires_grad()) {
        t.record("matmul", out, [A, B, out, m, p, q]() mutable {
            const double* g = out.grad().data();
            if (A.requires_grad()) gemm_nt(g, m, q, B.values().data(), p, A.grad().data());
            if (B.requires_grad()) gemm_tn(A.values().data(), m, p, g, q, B.grad().data());
        });
    }
    return out;
}

Tensor linear_map(Tape& t, const Tensor& x, const Tensor& W, const Tensor& b) {
    require_rank2(x, "linear_map");
    require_rank2(W, "linear_map");
    if (x.cols() != W.rows()) {
        throw DimensionError("linear_map: x" + x.shape_str() + " incompatible with W" +
                             W.shape_str());
    }
    const std::size_t m = x.rows(), p = x.cols(), q = W.cols();
    if (b.defined() && b.size() != q) {
        throw DimensionError("linear_map: bias" + b.shape_str() + " incompatible with W" +
                             W.shape_str());
    }
    Tensor out = Tensor::zeros({m, q}, any_grad({&x, &W, &b}));
    auto& o = out.mutable_values();
    if (b.defined()) {
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < q; ++j) o[i * q + j] = b.at(j);
        }
    }
    gemm_nn(x.values().data(), m, p, W.values().data(), q, o.data());
    if (out.requires_grad()) {
        t.record("linear_map", out, [x, W, b, out, m, p, q]() mutable {
            const double* g = out.grad().data();
            if (x.requires_grad()) gemm_nt(g, m, q, W.values().data(), p, x.grad().data());
            if (W.requires_grad()) gemm_tn(x.values().data(), m, p, g, q, W.grad().data());
            if (b.defined() && b.requires_grad()) {
                auto& gb = b.grad();
                for (std::size_t i = 0; i < m; ++i) {
                    for (std::size_t j = 0; j < q; ++j) gb[j] += g[i * q + j];
                }
            }
        });
    }
    return out;
}

Tensor matmul_nt(Tape& t, const Tensor& A, const Tensor& B) {
    require_rank2(A, "matmul_nt");
    require_rank2(B, "matmul_nt");
    if (A.cols() != B.cols()) {
        throw DimensionError("matmul_nt: " + A.shape_str() + " incompatible with " +
                             B.shape_str());
    }
    const std::size_t m = A.rows(), k = A.cols(), n = B.rows();
    Tensor out = Tensor::zeros({m, n}, any_grad({&A, &B}));
    gemm_nt(A.values().data(), m, k, B.values().data(), n, out.mutable_values().data());
    if (out.requires_grad()) {
        t.record("matmul_nt", out, [A, B, out, m, k, n]() mutable {
            const double* g = out.grad().data();
            // dA += g * B ; dB += g^T * A
            if (A.requires_grad()) gemm_nn(g, m, n, B.values().data(), k, A.grad().data());
            if (B.requires_grad()) gemm_tn(g, m, n, A.values().data(), k, B.grad().data());
        });
    }
    return out;
}

Tensor matvec(Tape& t, const Tensor& M, const Tensor& v) {
    require_rank2(M, "matvec");
    require_rank1(v, "matvec");
    if (M.cols() != v.size()) {
        throw DimensionError("matvec: " + M.shape_str() + " incompatible with " + v.shape_str());
    }
    const std::size_t n = M.rows(), k = M.cols();
    Tensor out = Tensor::zeros({n}, any_grad({&M, &v}));
    auto& o = out.mutable_values();
    for (std::size_t i = 0; i < n; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < k; ++j) acc += M.at(i, j) * v.at(j);
        o[i] = acc;
    }
    if (out.requires_grad()) {
        t.record("matvec", out, [M, v, out, n, k]() mutable {
            const auto& g = out.grad();
            if (M.requires_grad()) {
                auto& gm = M.grad();
                for (std::size_t i = 0; i < n; ++i) {
                    for (std::size_t j = 0; j < k; ++j) gm[i * k + j] += g[i] * v.at(j);
                }
            }
            if (v.requires_grad()) {
                auto& gv = v.grad();
                for (std::size_t i = 0; i < n; ++i) {
                    for (std::size_t j = 0; j < k; ++j) gv[j] += g[i] * M.at(i, j);
                }
            }
        });
    }
    return out;
}

Tensor reshape(Tape& t, const Tensor& x, std::vector<std::size_t> shape) {
    Tensor out = Tensor::from(std::move(shape), x.values(), x.requires_grad());
    if (out.size() != x.size()) {
        throw DimensionError("reshape: size mismatch " + x.shape_str() + " -> " + out.shape_str());
    }
    if (out.requires_grad()) {
        t.record("reshape", out, [x, out]() mutable {
            const auto& g = out.grad();
            auto& gx = x.grad();
            for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
        });
    }
    return out;
}

Tensor concat_vecs(Tape& t, std::span<const Tensor> parts) {
    if (parts.empty()) throw PreconditionError("concat_vecs: no inputs");
    std::size_t total = 0;
    bool rg = false;
    for (const Tensor& p : parts) {
        require_rank1(p, "concat_vecs");
        total += p.size();
        rg = rg || p.requires_grad();
    }
    Tensor out = Tensor::zeros({total}, rg);
    auto& o = out.mutable_values();
    std::size_t off = 0;
    for (const Tensor& p : parts) {
        std::memcpy(o.data() + off, p.values().data(), p.size() * sizeof(double));
        off += p.size();
    }
    if (rg) {
        std::vector<Tensor> saved(parts.begin(), parts.end());
        t.record("concat_vecs", out, [saved, out]() mutable {
            const auto& g = out.grad();
            std::size_t off = 0;
            for (Tensor& p : saved) {
                if (p.requires_grad()) {
                    auto& gp = p.grad();
                    for (std::size_t i = 0; i < p.size(); ++i) gp[i] += g[off + i];
                }
                off += p.size();
            }
        });
    }
    return out;
}

Tensor concat_cols(Tape& t, std::span<const Tensor> parts) {
    if (parts.empty()) throw PreconditionError("concat_cols: no inputs");
    const std::size_t n = parts[0].rows();
    std::size_t total = 0;
    bool rg = false;
    for (const Tensor& p : parts) {
        require_rank2(p, "concat_cols");
        if (p.rows() != n) {
            throw DimensionError("concat_cols: row mismatch " + parts[0].shape_str() + " vs " +
                                 p.shape_str());
        }
        total += p.cols();
        rg = rg || p.requires_grad();
    }
    Tensor out = Tensor::zeros({n, total}, rg);
    auto& o = out.mutable_values();
    std::size_t off = 0;
    for (const Tensor& p : parts) {
        const std::size_t c = p.cols();
        for (std::size_t i = 0; i < n; ++i) {
            std::memcpy(o.data() + i * total + off, p.values().data() + i * c,
                        c * sizeof(double));
        }
        off += c;
    }
    if (rg) {
        std::vector<Tensor> saved(parts.begin(), parts.end());
        t.record("concat_cols", out, [saved, out, n, total]() mutable {
            const auto& g = out.grad();
            std::size_t off = 0;
            for (Tensor& p : saved) {
                const std::size_t c = p.cols();
                if (p.requires_grad()) {
                    auto& gp = p.grad();
                    for (std::size_t i = 0; i < n; ++i) {
                        for (std::size_t j = 0; j < c; ++j) gp[i * c + j] += g[i * total + off + j];
                    }
                }
                off += c;
            }
        });
    }
    return out;
}

Tensor stack_rows(Tape& t, std::span<const Tensor> rows) {
    if (rows.empty()) throw PreconditionError("stack_rows: no inputs");
    const std::size_t d = rows[0].size();
    bool rg = false;
    for (const Tensor& r : rows) {
        require_rank1(r, "stack_rows");
        if (r.size() != d) {
            throw DimensionError("stack_rows: length mismatch " + rows[0].shape_str() + " vs " +
                                 r.shape_str());
        }
        rg = rg || r.requires_grad();
    }
    Tensor out = Tensor::zeros({rows.size(), d}, rg);
    auto& o = out.mutable_values();
    for (std::size_t i = 0; i < rows.size(); ++i) {
        std::memcpy(o.data() + i * d, rows[i].values().data(), d * sizeof(double));
    }
    if (rg) {
        std::vector<Tensor> saved(rows.begin(), rows.end());
        t.record("stack_rows", out, [saved, out, d]() mutable {
            const auto& g = out.grad();
            for (std::size_t i = 0; i < saved.size(); ++i) {
                if (!saved[i].requires_grad()) continue;
                auto& gr = saved[i].grad();
                for (std::size_t j = 0; j < d; ++j) gr[j] += g[i * d + j];
            }
        });
    }
    return out;
}

Tensor select_row(Tape& t, const Tensor& X, std::size_t i) {
    require_rank2(X, "select_row");
    if (i >= X.rows()) {
        throw PreconditionError("select_row: row " + std::to_string(i) + " out of range for " +
                                X.shape_str());
    }
    const std::size_t d = X.cols();
    Tensor out = Tensor::zeros({d}, X.requires_grad());
    std::memcpy(out.mutable_values().data(), X.values().data() + i * d, d * sizeof(double));
    if (out.requires_grad()) {
        t.record("select_row", out, [X, out, i, d]() mutable {
            const auto& g = out.grad();
            auto& gx = X.grad();
            for (std::size_t j = 0; j < d; ++j) gx[i * d + j] += g[j];
        });
    }
    return out;
}

Tensor slice_cols(Tape& t, const Tensor& X, std::size_t start, std::size_t count) {
    require_rank2(X, "slice_cols");
    if (start + count > X.cols()) {
        throw DimensionError("slice_cols: [" + std::to_string(start) + ", " +
                             std::to_string(start + count) + ") out of range for " +
                             X.shape_str());
    }
    const std::size_t n = X.rows(), c = X.cols();
    Tensor out = Tensor::zeros({n, count}, X.requires_grad());
    auto& o = out.mutable_values();
    for (std::size_t i = 0; i < n; ++i) {
        std::memcpy(o.data() + i * count, X.values().data() + i * c + start,
                    count * sizeof(double));
    }
    if (out.requires_grad()) {
        t.record("slice_cols", out, [X, out, start, count, n, c]() mutable {
            const auto& g = out.grad();
            auto& gx = X.grad();
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t j = 0; j < count; ++j) gx[i * c + start + j] += g[i * count + j];
            }
        });
    }
    return out;
}

Tensor slice_vec(Tape& t, const Tensor& v, std::size_t start, std::size_t count) {
    require_rank1(v, "slice_vec");
    if (start + count > v.size()) {
        throw DimensionError("slice_vec: [" + std::to_string(start) + ", " +
                             std::to_string(start + count) + ") out of range for " +
                             v.shape_str());
    }
    Tensor out = Tensor::zeros({count}, v.requires_grad());
    std::memcpy(out.mutable_values().data(), v.values().data() + start, count * sizeof(double));
    if (out.requires_grad()) {
        t.record("slice_vec", out, [v, out, start, count]() mutable {
            const auto& g = out.grad();
            auto& gv = v.grad();
            for (std::size_t i = 0; i < count; ++i) gv[start + i] += g[i];
        });
    }
    return out;
}

Tensor take_rows(Tape& t, const Tensor& table, std::span<const int> ids) {
    require_rank2(table, "take_rows");
    const std::size_t d = table.cols();
    for (const int id : ids) {
        if (id < 0 || static_cast<std::size_t>(id) >= table.rows()) {
            throw PreconditionError("take_rows: index " + std::to_string(id) +
                                    " out of range for " + table.shape_str());
        }
    }
    Tensor out = Tensor::zeros({ids.size(), d}, table.requires_grad());
    auto& o = out.mutable_values();
    for (std::size_t i = 0; i < ids.size(); ++i) {
        std::memcpy(o.data() + i * d, table.values().data() + ids[i] * d, d * sizeof(double));
    }
    if (out.requires_grad()) {
        std::vector<int> saved(ids.begin(), ids.end());
        t.record("take_rows", out, [table, out, saved, d]() mutable {
            const auto& g = out.grad();
            auto& gt = table.grad();
            for (std::size_t i = 0; i < saved.size(); ++i) {
                for (std::size_t j = 0; j < d; ++j) gt[saved[i] * d + j] += g[i * d + j];
            }
        });
    }
    return out;
}

Tensor broadcast_row(Tape& t, const Tensor& v, std::size_t n) {
    require_rank1(v, "broadcast_row");
    const std::size_t d = v.size();
    Tensor out = Tensor::zeros({n, d}, v.requires_grad());
    auto& o = out.mutable_values();
    for (std::size_t i = 0; i < n; ++i) {
        std::memcpy(o.data() + i * d, v.values().data(), d * sizeof(double));
    }
    if (out.requires_grad()) {
        t.record("broadcast_row", out, [v, out, n, d]() mutable {
            const auto& g = out.grad();
            auto& gv = v.grad();
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t j = 0; j < d; ++j) gv[j] += g[i * d + j];
            }
        });
    }
    return out;
}

Tensor scale_rows(Tape& t, const Tensor& X, const Tensor& s) {
    require_rank2(X, "scale_rows");
    require_rank1(s, "scale_rows");
    if (X.rows() != s.size()) {
        throw DimensionError("scale_rows: " + X.shape_str() + " vs " + s.shape_str());
    }
    const std::size_t n = X.rows(), d = X.cols();
    Tensor out = Tensor::zeros({n, d}, any_grad({&X, &s}));
    auto& o = out.mutable_values();
    for (std::size_t i = 0; i < n; ++i) {
        const double si = s.at(i);
        for (std::size_t j = 0; j < d; ++j) o[i * d + j] = si * X.at(i, j);
    }
    if (out.requires_grad()) {
        t.record("scale_rows", out, [X, s, out, n, d]() mutable {
            const auto& g = out.grad();
            if (X.requires_grad()) {
                auto& gx = X.grad();
                for (std::size_t i = 0; i < n; ++i) {
                    const double si = s.at(i);
                    for (std::size_t j = 0; j < d; ++j) gx[i * d + j] += si * g[i * d + j];
                }
            }
            if (s.requires_grad()) {
                auto& gs = s.grad();
                for (std::size_t i = 0; i < n; ++i) {
                    double acc = 0.0;
                    for (std::size_t j = 0; j < d; ++j) acc += g[i * d + j] * X.at(i, j);
                    gs[i] += acc;
                }
            }
        });
    }
    return out;
}

Tensor outer_add(Tape& t, const Tensor& u, const Tensor& w) {
    require_rank1(u, "outer_add");
    require_rank1(w, "outer_add");
    const std::size_t m = u.size(), n = w.size();
    Tensor out = Tensor::zeros({m, n}, any_grad({&u, &w}));
    auto& o = out.mutable_values();
    for (std::size_t i = 0; i < m; ++i) {
        const double ui = u.at(i);
        for (std::size_t j = 0; j < n; ++j) o[i * n + j] = ui + w.at(j);
    }
    if (out.requires_grad()) {
        t.record("outer_add", out, [u, w, out, m, n]() mutable {
            const auto& g = out.grad();
            if (u.requires_grad()) {
                auto& gu = u.grad();
                for (std::size_t i = 0; i < m; ++i) {
                    double acc = 0.0;
                    for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j];
                    gu[i] += acc;
                }
            }
            if (w.requires_grad()) {
                auto& gw = w.grad();
                for (std::size_t i = 0; i < m; ++i) {
                    for (std::size_t j = 0; j < n; ++j) gw[j] += g[i * n + j];
                }
            }
        });
    }
    return out;
}

Tensor max_pool_rows(Tape& t, const Tensor& X) {
    require_rank2(X, "max_pool_rows");
    const std::size_t L = X.rows(), d = X.cols();
    if (L == 0) throw PreconditionError("max_pool_rows: empty row set");
    Tensor out = Tensor::zeros({d}, X.requires_grad());
    auto& o = out.mutable_values();
    std::vector<std::size_t> argmax(d, 0);
    for (std::size_t j = 0; j < d; ++j) {
        double best = X.at(0, j);
        std::size_t bi = 0;
        for (std::size_t i = 1; i < L; ++i) {
            // strict > keeps the lowest row index on ties
            if (X.at(i, j) > best) {
                best = X.at(i, j);
                bi = i;
            }
        }
        o[j] = best;
        argmax[j] = bi;
    }
    if (out.requires_grad()) {
        t.record("max_pool_rows", out, [X, out, argmax, d]() mutable {
            const auto& g = out.grad();
            auto& gx = X.grad();
            for (std::size_t j = 0; j < d; ++j) gx[argmax[j] * d + j] += g[j];
        });
    }
    return out;
}

Tensor masked_softmax(Tape& t, const Tensor& scores, std::span<const std::uint8_t> mask) {
    require_rank1(scores, "masked_softmax");
    const std::size_t n = scores.size();
    if (mask.size() != n) {
        throw DimensionError("masked_softmax: mask length " + std::to_string(mask.size()) +
                             " vs scores " + scores.shape_str());
    }
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
        if (mask[i]) mx = std::max(mx, scores.at(i));
    }
    if (!std::isfinite(mx) && mx < 0) {
        throw PreconditionError("masked_softmax: mask keeps no entries");
    }
    Tensor out = Tensor::zeros({n}, scores.requires_grad());
    auto& o = out.mutable_values();
    double denom = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (mask[i]) {
            o[i] = std::exp(scores.at(i) - mx);
            denom += o[i];
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (mask[i]) o[i] /= denom;
    }
    if (out.requires_grad()) {
        std::vector<std::uint8_t> saved(mask.begin(), mask.end());
        t.record("masked_softmax", out, [scores, out, saved, n]() mutable {
            const auto& g = out.grad();
            auto& gs = scores.grad();
            double dot = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                if (saved[i]) dot += g[i] * out.at(i);
            }
            for (std::size_t i = 0; i < n; ++i) {
                if (saved[i]) gs[i] += out.at(i) * (g[i] - dot);
            }
        });
    }
    return out;
}

namespace {

// Shared kernel: softmax of row i over columns [0, limit(i)).
template <typename LimitFn>
Tensor row_softmax_impl(Tape& t, const Tensor& S, LimitFn limit, const char* name) {
    const std::size_t n = S.rows(), m = S.cols();
    Tensor out = Tensor::zeros({n, m}, S.requires_grad());
    auto& o = out.mutable_values();
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t k = limit(i);
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < k; ++j) mx = std::max(mx, S.at(i, j));
        double denom = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            o[i * m + j] = std::exp(S.at(i, j) - mx);
            denom += o[i * m + j];
        }
        for (std::size_t j = 0; j < k; ++j) o[i * m + j] /= denom;
    }
    if (out.requires_grad()) {
        t.record(name, out, [S, out, limit, n, m]() mutable {
            const auto& g = out.grad();
            auto& gs = S.grad();
            for (std::size_t i = 0; i < n; ++i) {
                const std::size_t k = limit(i);
                double dot = 0.0;
                for (std::size_t j = 0; j < k; ++j) dot += g[i * m + j] * out.at(i, j);
                for (std::size_t j = 0; j < k; ++j) {
                    gs[i * m + j] += out.at(i, j) * (g[i * m + j] - dot);
                }
            }
        });
    }
    return out;
}

}  // namespace

Tensor softmax_rows(Tape& t, const Tensor& S) {
    require_rank2(S, "softmax_rows");
    const std::size_t m = S.cols();
    return row_softmax_impl(t, S, [m](std::size_t) { return m; }, "softmax_rows");
}

Tensor causal_softmax_rows(Tape& t, const Tensor& S) {
    require_rank2(S, "causal_softmax_rows");
    if (S.rows() != S.cols()) {
        throw DimensionError("causal_softmax_rows: expected square scores, got " + S.shape_str());
    }
    return row_softmax_impl(t, S, [](std::size_t i) { return i + 1; }, "causal_softmax_rows");
}

Tensor layer_norm_rows(Tape& t, const Tensor& X, const Tensor& gain, const Tensor& bias,
                       double eps) {
    require_rank2(X, "layer_norm_rows");
    const std::size_t n = X.rows(), d = X.cols();
    if (gain.size() != d || bias.size() != d) {
        throw DimensionError("layer_norm_rows: gain/bias do not match " + X.shape_str());
    }
    Tensor out = Tensor::zeros({n, d}, any_grad({&X, &gain, &bias}));
    auto& o = out.mutable_values();
    std::vector<double> mean(n), inv_std(n);
    for (std::size_t i = 0; i < n; ++i) {
        double mu = 0.0;
        for (std::size_t j = 0; j < d; ++j) mu += X.at(i, j);
        mu /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            const double c = X.at(i, j) - mu;
            var += c * c;
        }
        var /= static_cast<double>(d);
        mean[i] = mu;
        inv_std[i] = 1.0 / std::sqrt(var + eps);
        for (std::size_t j = 0; j < d; ++j) {
            o[i * d + j] = gain.at(j) * (X.at(i, j) - mu) * inv_std[i] + bias.at(j);
        }
    }
    if (out.requires_grad()) {
        t.record("layer_norm_rows", out, [X, gain, bias, out, mean, inv_std, n, d]() mutable {
            const auto& g = out.grad();
            for (std::size_t i = 0; i < n; ++i) {
                const double is = inv_std[i];
                if (gain.requires_grad() || bias.requires_grad()) {
                    for (std::size_t j = 0; j < d; ++j) {
                        const double xhat = (X.at(i, j) - mean[i]) * is;
                        if (gain.requires_grad()) gain.grad()[j] += g[i * d + j] * xhat;
                        if (bias.requires_grad()) bias.grad()[j] += g[i * d + j];
                    }
                }
                if (X.requires_grad()) {
                    // dx = (gain*g - mean(gain*g) - xhat * mean(gain*g*xhat)) * inv_std
                    double s1 = 0.0, s2 = 0.0;
                    for (std::size_t j = 0; j < d; ++j) {
                        const double gg = gain.at(j) * g[i * d + j];
                        const double xhat = (X.at(i, j) - mean[i]) * is;
                        s1 += gg;
                        s2 += gg * xhat;
                    }
                    s1 /= static_cast<double>(d);
                    s2 /= static_cast<double>(d);
                    auto& gx = X.grad();
                    for (std::size_t j = 0; j < d; ++j) {
                        const double gg = gain.at(j) * g[i * d + j];
                        const double xhat = (X.at(i, j) - mean[i]) * is;
                        gx[i * d + j] += (gg - s1 - xhat * s2) * is;
                    }
                }
            }
        });
    }
    return out;
}

Tensor dropout(Tape& t, const Tensor& x, double p, Rng& rng, bool train) {
    if (p < 0.0 || p >= 1.0) {
        throw PreconditionError("dropout: rate " + std::to_string(p) + " outside [0, 1)");
    }
    if (!train || p == 0.0) return x;
    const double keep = 1.0 - p;
    std::vector<double> m(x.size());
    for (double& v : m) v = rng.next_double() < keep ? 1.0 / keep : 0.0;
    Tensor out = Tensor::zeros(x.shape(), x.requires_grad());
    auto& o = out.mutable_values();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = x.at(i) * m[i];
    if (out.requires_grad()) {
        t.record("dropout", out, [x, out, m]() mutable {
            const auto& g = out.grad();
            auto& gx = x.grad();
            for (std::size_t i = 0; i < g.size(); ++i) gx[i] += m[i] * g[i];
        });
    }
    return out;
}

}  // namespace kbcin
