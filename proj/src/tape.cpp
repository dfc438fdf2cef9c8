#include "ldd/tape.hpp"

#include <cmath>

namespace ldd {

static void check_rank12(const Tensor& t, const char* op) {
    if (t.rank() != 1 && t.rank() != 2)
        throw ShapeError(std::string(op) + ": expected rank 1 or 2, got " + t.shape_str());
}

Var Tape::push(Tensor value, bool requires_grad, std::function<void(Tape&)> back, const char* op) {
    if (!value.all_finite())
        throw NumericError(std::string(op) + ": non-finite value in output");
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    if (requires_grad) n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return static_cast<Var>(nodes_.size() - 1);
}

Var Tape::leaf(Tensor value, bool requires_grad) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    nodes_.push_back(std::move(n));
    return static_cast<Var>(nodes_.size() - 1);
}

Var Tape::leaf_ref(const Tensor* value, bool requires_grad) {
    Node n;
    n.ref = value;
    n.requires_grad = requires_grad;
    nodes_.push_back(std::move(n));
    return static_cast<Var>(nodes_.size() - 1);
}

const Tensor& Tape::val(Var v) const {
    const Node& n = nodes_[static_cast<size_t>(v)];
    return n.ref ? *n.ref : n.value;
}

Tensor& Tape::grad_buf(Var v) {
    Node& n = nodes_[static_cast<size_t>(v)];
    const Tensor& value = n.ref ? *n.ref : n.value;
    if (!n.grad.same_shape(value)) {
        n.grad = Tensor(value.shape());
    } else if (!n.grad_live) {
        n.grad.fill(0.0);
    }
    n.grad_live = true;
    return n.grad;
}

const Tensor& Tape::grad(Var v) { return grad_buf(v); }

void Tape::clear() { nodes_.clear(); }

void Tape::backward(Var scalar_output) {
    if (val(scalar_output).size() != 1)
        throw ShapeError("backward: output has shape " + val(scalar_output).shape_str() + ", expected a scalar");
    for (auto& n : nodes_) n.grad_live = false;
    grad_buf(scalar_output)[0] = 1.0;
    for (Var i = scalar_output; i >= 0; --i) {
        Node& n = nodes_[static_cast<size_t>(i)];
        if (n.grad_live && n.back) n.back(*this);
    }
}

// --- elementwise -------------------------------------------------------------

Var Tape::add(Var a, Var b) {
    const Tensor& ta = val(a);
    const Tensor& tb = val(b);
    if (!ta.same_shape(tb))
        throw ShapeError("add: shape mismatch " + ta.shape_str() + " vs " + tb.shape_str());
    Tensor out = ta;
    for (int64_t i = 0; i < out.size(); ++i) out[i] += tb[i];
    bool rg = needs_grad(a) || needs_grad(b);
    Var result = push(std::move(out), rg, nullptr, "add");
    if (rg) {
        nodes_.back().back = [a, b, result](Tape& tp) {
            const Tensor& g = tp.grad_buf(result);
            if (tp.needs_grad(a)) {
                Tensor& ga = tp.grad_buf(a);
                for (int64_t i = 0; i < g.size(); ++i) ga[i] += g[i];
            }
            if (tp.needs_grad(b)) {
                Tensor& gb = tp.grad_buf(b);
                for (int64_t i = 0; i < g.size(); ++i) gb[i] += g[i];
            }
        };
    }
    return result;
}

Var Tape::sub(Var a, Var b) {
    const Tensor& ta = val(a);
    const Tensor& tb = val(b);
    if (!ta.same_shape(tb))
        throw ShapeError("sub: shape mismatch " + ta.shape_str() + " vs " + tb.shape_str());
    Tensor out = ta;
    for (int64_t i = 0; i < out.size(); ++i) out[i] -= tb[i];
    bool rg = needs_grad(a) || needs_grad(b);
    Var result = push(std::move(out), rg, nullptr, "sub");
    if (rg) {
        nodes_.back().back = [a, b, result](Tape& tp) {
            const Tensor& g = tp.grad_buf(result);
            if (tp.needs_grad(a)) {
                Tensor& ga = tp.grad_buf(a);
                for (int64_t i = 0; i < g.size(); ++i) ga[i] += g[i];
            }
            if (tp.needs_grad(b)) {
                Tensor& gb = tp.grad_buf(b);
                for (int64_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
            }
        };
    }
    return result;
}

Var Tape::mul(Var a, Var b) {
    const Tensor& ta = val(a);
    const Tensor& tb = val(b);
    if (!ta.same_shape(tb))
        throw ShapeError("mul: shape mismatch " + ta.shape_str() + " vs " + tb.shape_str());
    Tensor out = ta;
    for (int64_t i = 0; i < out.size(); ++i) out[i] *= tb[i];
    bool rg = needs_grad(a) || needs_grad(b);
    Var result = push(std::move(out), rg, nullptr, "mul");
    if (rg) {
        nodes_.back().back = [a, b, result](Tape& tp) {
            const Tensor& g = tp.grad_buf(result);
            const Tensor& va = tp.val(a);
            const Tensor& vb = tp.val(b);
            if (tp.needs_grad(a)) {
                Tensor& ga = tp.grad_buf(a);
                for (int64_t i = 0; i < g.size(); ++i) ga[i] += g[i] * vb[i];
            }
            if (tp.needs_grad(b)) {
                Tensor& gb = tp.grad_buf(b);
                for (int64_t i = 0; i < g.size(); ++i) gb[i] += g[i] * va[i];
            }
        };
    }
    return result;
}

Var Tape::scale(Var a, double c) {
    Tensor out = val(a);
    for (int64_t i = 0; i < out.size(); ++i) out[i] *= c;
    bool rg = needs_grad(a);
    Var result = push(std::move(out), rg, nullptr, "scale");
    if (rg) {
        nodes_.back().back = [a, c, result](Tape& tp) {
            const Tensor& g = tp.grad_buf(result);
            Tensor& ga = tp.grad_buf(a);
            for (int64_t i = 0; i < g.size(); ++i) ga[i] += c * g[i];
        };
    }
    return result;
}

Var Tape::add_rowvec(Var m, Var v) {
    const Tensor& tm = val(m);
    const Tensor& tv = val(v);
    if (tm.rank() != 2 || tv.rank() != 1 || tm.cols() != static_cast<int>(tv.size()))
        throw ShapeError("add_rowvec: shape mismatch " + tm.shape_str() + " vs " + tv.shape_str());
    Tensor out = tm;
    int n = tm.rows(), d = tm.cols();
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) out.at(i, j) += tv[j];
    bool rg = needs_grad(m) || needs_grad(v);
    Var result = push(std::move(out), rg, nullptr, "add_rowvec");
    if (rg) {
        nodes_.back().back = [m, v, n, d, result](Tape& tp) {
            const Tensor& g = tp.grad_buf(result);
            if (tp.needs_grad(m)) {
                Tensor& gm = tp.grad_buf(m);
                for (int64_t i = 0; i < g.size(); ++i) gm[i] += g[i];
            }
            if (tp.needs_grad(v)) {
                Tensor& gv = tp.grad_buf(v);
                for (int i = 0; i < n; ++i)
                    for (int j = 0; j < d; ++j) gv[j] += g.at(i, j);
            }
        };
    }
    return result;
}

Var Tape::relu(Var a) {
    Tensor out = val(a);
    for (int64_t i = 0; i < out.size(); ++i) out[i] = out[i] > 0.0 ? out[i] : 0.0;
    bool rg = needs_grad(a);
    Var result = push(std::move(out), rg, nullptr, "relu");
    if (rg) {
        nodes_.back().back = [a, result](Tape& tp) {
            const Tensor& g = tp.grad_buf(result);
            const Tensor& x = tp.val(a);
            Tensor& ga = tp.grad_buf(a);
            // subgradient at 0 is 0
            for (int64_t i = 0; i < g.size(); ++i) ga[i] += x[i] > 0.0 ? g[i] : 0.0;
        };
    }
    return result;
}

Var Tape::tanh_op(Var a) {
    Tensor out = val(a);
    for (int64_t i = 0; i < out.size(); ++i) out[i] = std::tanh(out[i]);
    bool rg = needs_grad(a);
    Var result = push(std::move(out), rg, nullptr, "tanh");
    if (rg) {
        nodes_.back().back = [a, result](Tape& tp) {
            const Tensor& g = tp.grad_buf(result);
            const Tensor& y = tp.val(result);
            Tensor& ga = tp.grad_buf(a);
            for (int64_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (1.0 - y[i] * y[i]);
        };
    }
    return result;
}

Var Tape::exp_op(Var a) {
    Tensor out = val(a);
    for (int64_t i = 0; i < out.size(); ++i) out[i] = std::exp(out[i]);
    bool rg = needs_grad(a);
    Var result = push(std::move(out), rg, nullptr, "exp");
    if (rg) {
        nodes_.back().back = [a, result](Tape& tp) {
            const Tensor& g = tp.grad_buf(result);
            const Tensor& y = tp.val(result);
            Tensor& ga = tp.grad_buf(a);
            for (int64_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i];
        };
    }
    return result;
}

Var Tape::sqrt_op(Var a) {
    const Tensor& x = val(a);
    Tensor out = x;
    for (int64_t i = 0; i < out.size(); ++i) {
        if (out[i] < 0.0) throw NumericError("sqrt: negative input");
        out[i] = std::sqrt(out[i]);
    }
    bool rg = needs_grad(a);
    Var result = push(std::move(out), rg, nullptr, "sqrt");
    if (rg) {
        nodes_.back().back = [a, result](Tape& tp) {
            const Tensor& g = tp.grad_buf(result);
            const Tensor& y = tp.val(result);
            Tensor& ga = tp.grad_buf(a);
            for (int64_t i = 0; i < g.size(); ++i)
                if (y[i] > 1e-12) ga[i] += g[i] * 0.5 / y[i];
        };
    }
    return result;
}

// --- structural --------------------------------------------------------------

Var Tape::reshape(Var a, std::vector<int> shape) {
    const Tensor& ta = val(a);
    Tensor out(shape);
    if (out.size() != ta.size())
        throw ShapeError("reshape: size mismatch " + ta.shape_str() + " vs " + shape_str(shape));
    for (int64_t i = 0; i < out.size(); ++i) out[i] = ta[i];
    bool rg = needs_grad(a);
    Var result = push(std::move(out), rg, nullptr, "reshape");
    if (rg) {
        nodes_.back().back = [a, result](Tape& tp) {
            const Tensor& g = tp.grad_buf(result);
            Tensor& ga = tp.grad_buf(a);
            for (int64_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        };
    }
    return result;
}

Var Tape::flatten(Var a) { return reshape(a, {static_cast<int>(val(a).size())}); }

Var Tape::concat(const std::vector<Var>& parts) {
    if (parts.empty()) throw ShapeError("concat: no parts");
    int64_t total = 0;
    bool rg = false;
    for (Var p : parts) {
        if (val(p).rank() != 1)
            throw ShapeError("concat: expected rank-1 parts, got " + val(p).shape_str());
        total += val(p).size();
        rg = rg || needs_grad(p);
    }
    Tensor out({static_cast<int>(total)});
    int64_t off = 0;
    for (Var p : parts) {
        const Tensor& tp = val(p);
        for (int64_t i = 0; i < tp.size(); ++i) out[off + i] = tp[i];
        off += tp.size();
    }
    Var result = push(std::move(out), rg, nullptr, "concat");
    if (rg) {
        std::vector<Var> ps = parts;
        nodes_.back().back = [ps, result](Tape& tp) {
            const Tensor& g = tp.grad_buf(result);
            int64_t off = 0;
            for (Var p : ps) {
                int64_t n = tp.val(p).size();
                if (tp.needs_grad(p)) {
                    Tensor& gp = tp.grad_buf(p);
                    for (int64_t i = 0; i < n; ++i) gp[i] += g[off + i];
                }
                off += n;
            }
        };
    }
    return result;
}

Var Tape::concat_cols(Var a, Var b) {
    const Tensor& ta = val(a);
    const Tensor& tb = val(b);
    if (ta.rank() != 2 || tb.rank() != 2 || ta.rows() != tb.rows())
        throw ShapeError("concat_cols: shape mismatch " + ta.shape_str() + " vs " + tb.shape_str());
    int n = ta.rows(), p = ta.cols(), q = tb.cols();
    Tensor out({n, p + q});
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < p; ++j) out.at(i, j) = ta.at(i, j);
        for (int j = 0; j < q; ++j) out.at(i, p + j) = tb.at(i, j);
    }
    bool rg = needs_grad(a) || needs_grad(b);
    Var result = push(std::move(out), rg, nullptr, "concat_cols");
    if (rg) {
        nodes_.back().back = [a, b, n, p, q, result](Tape& tp) {
            const Tensor& g = tp.grad_buf(result);
            if (tp.needs_grad(a)) {
                Tensor& ga = tp.grad_buf(a);
                for (int i = 0; i < n; ++i)
                    for (int j = 0; j < p; ++j) ga.at(i, j) += g.at(i, j);
            }
            if (tp.needs_grad(b)) {
                Tensor& gb = tp.grad_buf(b);
                for (int i = 0; i < n; ++i)
                    for (int j = 0; j < q; ++j) gb.at(i, j) += g.at(i, p + j);
            }
        };
    }
    return result;
}

Var Tape::stack_rows(const std::vector<Var>& rows) {
    if (rows.empty()) throw ShapeError("stack_rows: no rows");
    int d = static_cast<int>(val(rows[0]).size());
    bool rg = false;
    for (Var r : rows) {
        if (val(r).rank() != 1 || val(r).size() != d)
            throw ShapeError("stack_rows: inconsistent row " + val(r).shape_str());
        rg = rg || needs_grad(r);
    }
    int n = static_cast<int>(rows.size());
    Tensor out({n, d});
    for (int i = 0; i < n; ++i) {
        const Tensor& tr = val(rows[static_cast<size_t>(i)]);
        for (int j = 0; j < d; ++j) out.at(i, j) = tr[j];
    }
    Var result = push(std::move(out), rg, nullptr, "stack_rows");
    if (rg) {
        std::vector<Var> rs = rows;
        nodes_.back().back = [rs, d, result](Tape& tp) {
            const Tensor& g = tp.grad_buf(result);
            for (size_t i = 0; i < rs.size(); ++i) {
                if (!tp.needs_grad(rs[i])) continue;
                Tensor& gr = tp.grad_buf(rs[i]);
                for (int j = 0; j < d; ++j) gr[j] += g.at(static_cast<int>(i), j);
            }
        };
    }
    return result;
}

Var Tape::gather_rows(Var m, const std::vector<int>& rows) {
    const Tensor& tm = val(m);
    if (tm.rank() != 2) throw ShapeError("gather_rows: expected rank-2, got " + tm.shape_str());
    int src_rows = tm.rows(), d = tm.cols();
    for (int r : rows)
        if (r < -1 || r >= src_rows)
            throw ShapeError("gather_rows: row " + std::to_string(r) + " outside [" + std::to_string(-1) + ", " + std::to_string(src_rows) + ")");
    int n = static_cast<int>(rows.size());
    Tensor out({n, d});
    for (int i = 0; i < n; ++i) {
        int r = rows[static_cast<size_t>(i)];
        if (r < 0) continue;  // zero row
        for (int j = 0; j < d; ++j) out.at(i, j) = tm.at(r, j);
    }
    bool rg = needs_grad(m);
    Var result = push(std::move(out), rg, nullptr, "gather_rows");
    if (rg) {
        std::vector<int> rs = rows;
        nodes_.back().back = [m, rs, d, result](Tape& tp) {
            const Tensor& g = tp.grad_buf(result);
            Tensor& gm = tp.grad_buf(m);
            for (size_t i = 0; i < rs.size(); ++i) {
                if (rs[i] < 0) continue;
                for (int j = 0; j < d; ++j) gm.at(rs[i], j) += g.at(static_cast<int>(i), j);
            }
        };
    }
    return result;
}

Var Tape::tile_rows(Var v, int n) {
    const Tensor& tv = val(v);
    if (tv.rank() != 1) throw ShapeError("tile_rows: expected rank-1, got " + tv.shape_str());
    if (n < 1) throw ShapeError("tile_rows: n must be positive");
    int d = static_cast<int>(tv.size());
    Tensor out({n, d});
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) out.at(i, j) = tv[j];
    bool rg = needs_grad(v);
    Var result = push(std::move(out), rg, nullptr, "tile_rows");
    if (rg) {
        nodes_.back().back = [v, n, d, result](Tape& tp) {
            const Tensor& g = tp.grad_buf(result);
            Tensor& gv = tp.grad_buf(v);
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < d; ++j) gv[j] += g.at(i, j);
        };
    }
    return result;
}

Var Tape::transpose(Var m) {
    const Tensor& tm = val(m);
    if (tm.rank() != 2) throw ShapeError("transpose: expected rank-2, got " + tm.shape_str());
    int n = tm.rows(), d = tm.cols();
    Tensor out({d, n});
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) out.at(j, i) = tm.at(i, j);
    bool rg = needs_grad(m);
    Var result = push(std::move(out), rg, nullptr, "transpose");
    if (rg) {
        nodes_.back().back = [m, n, d, result](Tape& tp) {
            const Tensor& g = tp.grad_buf(result);
            Tensor& gm = tp.grad_buf(m);
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < d; ++j) gm.at(i, j) += g.at(j, i);
        };
    }
    return result;
}

// --- reductions --------------------------------------------------------------

Var Tape::sum_all(Var a) {
    const Tensor& ta = val(a);
    double s = 0.0;
    for (int64_t i = 0; i < ta.size(); ++i) s += ta[i];
    bool rg = needs_grad(a);
    Var result = push(Tensor::scalar(s), rg, nullptr, "sum");
    if (rg) {
        nodes_.back().back = [a, result](Tape& tp) {
            double g = tp.grad_buf(result)[0];
            Tensor& ga = tp.grad_buf(a);
            for (int64_t i = 0; i < ga.size(); ++i) ga[i] += g;
        };
    }
    return result;
}

Var Tape::mean_all(Var a) {
    const Tensor& ta = val(a);
    if (ta.size() == 0) throw ShapeError("mean: empty tensor");
    double s = 0.0;
    for (int64_t i = 0; i < ta.size(); ++i) s += ta[i];
    double inv = 1.0 / static_cast<double>(ta.size());
    bool rg = needs_grad(a);
    Var result = push(Tensor::scalar(s * inv), rg, nullptr, "mean");
    if (rg) {
        nodes_.back().back = [a, inv, result](Tape& tp) {
            double g = tp.grad_buf(result)[0] * inv;
            Tensor& ga = tp.grad_buf(a);
            for (int64_t i = 0; i < ga.size(); ++i) ga[i] += g;
        };
    }
    return result;
}

Var Tape::mean_rows(Var a) {
    const Tensor& ta = val(a);
    if (ta.rank() != 2 || ta.rows() == 0)
        throw ShapeError("mean_rows: expected non-empty rank-2 tensor, got " + ta.shape_str());
    int n = ta.rows(), d = ta.cols();
    Tensor out({d});
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) out[j] += ta.at(i, j);
    double inv = 1.0 / n;
    for (int j = 0; j < d; ++j) out[j] *= inv;
    bool rg = needs_grad(a);
    Var result = push(std::move(out), rg, nullptr, "mean_rows");
    if (rg) {
        nodes_.back().back = [a, n, d, inv, result](Tape& tp) {
            const Tensor& g = tp.grad_buf(result);
            Tensor& ga = tp.grad_buf(a);
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < d; ++j) ga.at(i, j) += g[j] * inv;
        };
    }
    return result;
}

// --- linear algebra ----------------------------------------------------------

Var Tape::matmul(Var a, Var b) {
    const Tensor& ta = val(a);
    const Tensor& tb = val(b);
    check_rank12(ta, "matmul");
    check_rank12(tb, "matmul");

    // normalize to [m x k] * [k x n]; remember which inputs were vectors
    bool a_vec = ta.rank() == 1;
    bool b_vec = tb.rank() == 1;
    int m = a_vec ? 1 : ta.shape()[0];
    int k = a_vec ? static_cast<int>(ta.size()) : ta.shape()[1];
    int k2 = b_vec ? static_cast<int>(tb.size()) : tb.shape()[0];
    int n = b_vec ? 1 : tb.shape()[1];
    if (k != k2)
        throw ShapeError("matmul: inner extent mismatch " + ta.shape_str() + " vs " + tb.shape_str());
    if (a_vec && b_vec)
        throw ShapeError("matmul: both operands rank-1; use squared_l2 or mul+sum for dot products");

    Tensor out(a_vec ? std::vector<int>{n} : (b_vec ? std::vector<int>{m} : std::vector<int>{m, n}));
    const double* A = ta.data();
    const double* B = tb.data();
    double* C = out.data();
    for (int i = 0; i < m; ++i)
        for (int p = 0; p < k; ++p) {
            double av = A[static_cast<int64_t>(i) * k + p];
            if (av == 0.0) continue;
            const double* Bp = B + static_cast<int64_t>(p) * n;
            double* Ci = C + static_cast<int64_t>(i) * n;
            for (int j = 0; j < n; ++j) Ci[j] += av * Bp[j];
        }

    bool rg = needs_grad(a) || needs_grad(b);
    Var result = push(std::move(out), rg, nullptr, "matmul");
    if (rg) {
        nodes_.back().back = [a, b, m, k, n, result](Tape& tp) {
            const Tensor& g = tp.grad_buf(result);
            const Tensor& va = tp.val(a);
            const Tensor& vb = tp.val(b);
            const double* G = g.data();
            if (tp.needs_grad(a)) {
                Tensor& ga = tp.grad_buf(a);
                double* GA = ga.data();
                const double* B = vb.data();
                // gA = g * B^T
                for (int i = 0; i < m; ++i)
                    for (int p = 0; p < k; ++p) {
                        const double* Gi = G + static_cast<int64_t>(i) * n;
                        const double* Bp = B + static_cast<int64_t>(p) * n;
                        double s = 0.0;
                        for (int j = 0; j < n; ++j) s += Gi[j] * Bp[j];
                        GA[static_cast<int64_t>(i) * k + p] += s;
                    }
            }
            if (tp.needs_grad(b)) {
                Tensor& gb = tp.grad_buf(b);
                double* GB = gb.data();
                const double* A = va.data();
                // gB = A^T * g
                for (int i = 0; i < m; ++i)
                    for (int p = 0; p < k; ++p) {
                        double av = A[static_cast<int64_t>(i) * k + p];
                        if (av == 0.0) continue;
                        const double* Gi = G + static_cast<int64_t>(i) * n;
                        double* GBp = GB + static_cast<int64_t>(p) * n;
                        for (int j = 0; j < n; ++j) GBp[j] += av * Gi[j];
                    }
            }
        };
    }
    return result;
}

Var Tape::matmul_nt(Var a, Var b) {
    const Tensor& ta = val(a);
    const Tensor& tb = val(b);
    check_rank12(ta, "matmul_nt");
    if (tb.rank() != 2)
        throw ShapeError("matmul_nt: rhs must be rank-2, got " + tb.shape_str());
    bool a_vec = ta.rank() == 1;
    int m = a_vec ? 1 : ta.shape()[0];
    int k = a_vec ? static_cast<int>(ta.size()) : ta.shape()[1];
    int n = tb.shape()[0];
    if (tb.shape()[1] != k)
        throw ShapeError("matmul_nt: inner extent mismatch " + ta.shape_str() + " vs " + tb.shape_str());

    Tensor out(a_vec ? std::vector<int>{n} : std::vector<int>{m, n});
    const double* A = ta.data();
    const double* B = tb.data();
    double* C = out.data();
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
            const double* Ai = A + static_cast<int64_t>(i) * k;
            const double* Bj = B + static_cast<int64_t>(j) * k;
            double s = 0.0;
            for (int p = 0; p < k; ++p) s += Ai[p] * Bj[p];
            C[static_cast<int64_t>(i) * n + j] = s;
        }

    bool rg = needs_grad(a) || needs_grad(b);
    Var result = push(std::move(out), rg, nullptr, "matmul_nt");
    if (rg) {
        nodes_.back().back = [a, b, m, k, n, result](Tape& tp) {
            const Tensor& g = tp.grad_buf(result);
            const Tensor& va = tp.val(a);
            const Tensor& vb = tp.val(b);
            const double* G = g.data();
            if (tp.needs_grad(a)) {
                // gA = g * B
                Tensor& ga = tp.grad_buf(a);
                double* GA = ga.data();
                const double* B = vb.data();
                for (int i = 0; i < m; ++i)
                    for (int j = 0; j < n; ++j) {
                        double gv = G[static_cast<int64_t>(i) * n + j];
                        if (gv == 0.0) continue;
                        const double* Bj = B + static_cast<int64_t>(j) * k;
                        double* GAi = GA + static_cast<int64_t>(i) * k;
                        for (int p = 0; p < k; ++p) GAi[p] += gv * Bj[p];
                    }
            }
            if (tp.needs_grad(b)) {
                // gB = g^T * A
                Tensor& gb = tp.grad_buf(b);
                double* GB = gb.data();
                const double* A = va.data();
                for (int i = 0; i < m; ++i)
                    for (int j = 0; j < n; ++j) {
                        double gv = G[static_cast<int64_t>(i) * n + j];
                        if (gv == 0.0) continue;
                        const double* Ai = A + static_cast<int64_t>(i) * k;
                        double* GBj = GB + static_cast<int64_t>(j) * k;
                        for (int p = 0; p < k; ++p) GBj[p] += gv * Ai[p];
                    }
            }
        };
    }
    return result;
}

// --- nn primitives -----------------------------------------------------------

static void softmax_row(const double* z, double* p, int c) {
    double m = z[0];
    for (int j = 1; j < c; ++j) m = std::max(m, z[j]);
    double s = 0.0;
    for (int j = 0; j < c; ++j) {
        p[j] = std::exp(z[j] - m);
        s += p[j];
    }
    double inv = 1.0 / s;
    for (int j = 0; j < c; ++j) p[j] *= inv;
}

Var Tape::softmax(Var logits) {
    const Tensor& tz = val(logits);
    check_rank12(tz, "softmax");
    int rows = tz.rank() == 2 ? tz.rows() : 1;
    int c = tz.rank() == 2 ? tz.cols() : static_cast<int>(tz.size());
    if (c == 0) throw ShapeError("softmax: empty axis");
    Tensor out = tz;
    for (int i = 0; i < rows; ++i)
        softmax_row(tz.data() + static_cast<int64_t>(i) * c, out.data() + static_cast<int64_t>(i) * c, c);
    bool rg = needs_grad(logits);
    Var result = push(std::move(out), rg, nullptr, "softmax");
    if (rg) {
        nodes_.back().back = [logits, rows, c, result](Tape& tp) {
            const Tensor& g = tp.grad_buf(result);
            const Tensor& y = tp.val(result);
            Tensor& gz = tp.grad_buf(logits);
            for (int i = 0; i < rows; ++i) {
                const double* yi = y.data() + static_cast<int64_t>(i) * c;
                const double* gi = g.data() + static_cast<int64_t>(i) * c;
                double dot = 0.0;
                for (int j = 0; j < c; ++j) dot += gi[j] * yi[j];
                double* gzi = gz.data() + static_cast<int64_t>(i) * c;
                for (int j = 0; j < c; ++j) gzi[j] += yi[j] * (gi[j] - dot);
            }
        };
    }
    return result;
}

Var Tape::embedding_lookup(Var table, const std::vector<int>& ids) {
    const Tensor& tt = val(table);
    if (tt.rank() != 2) throw ShapeError("embedding_lookup: table must be rank-2, got " + tt.shape_str());
    int v = tt.rows(), d = tt.cols();
    for (int id : ids)
        if (id < 0 || id >= v)
            throw ContractError("embedding_lookup: id " + std::to_string(id) + " outside table of " + std::to_string(v) + " entries");
    int n = static_cast<int>(ids.size());
    Tensor out({n, d});
    for (int i = 0; i < n; ++i) {
        const double* src = tt.data() + static_cast<int64_t>(ids[static_cast<size_t>(i)]) * d;
        double* dst = out.data() + static_cast<int64_t>(i) * d;
        for (int j = 0; j < d; ++j) dst[j] = src[j];
    }
    bool rg = needs_grad(table);
    Var result = push(std::move(out), rg, nullptr, "embedding_lookup");
    if (rg) {
        std::vector<int> idc = ids;
        nodes_.back().back = [table, idc, d, result](Tape& tp) {
            const Tensor& g = tp.grad_buf(result);
            Tensor& gt = tp.grad_buf(table);
            for (size_t i = 0; i < idc.size(); ++i) {
                double* dst = gt.data() + static_cast<int64_t>(idc[i]) * d;
                const double* src = g.data() + static_cast<int64_t>(i) * d;
                for (int j = 0; j < d; ++j) dst[j] += src[j];
            }
        };
    }
    return result;
}

Var Tape::cross_entropy(Var logits, const std::vector<int>& targets) {
    const Tensor& tz = val(logits);
    check_rank12(tz, "cross_entropy");
    int rows = tz.rank() == 2 ? tz.rows() : 1;
    int c = tz.rank() == 2 ? tz.cols() : static_cast<int>(tz.size());
    if (static_cast<int>(targets.size()) != rows)
        throw ShapeError("cross_entropy: " + std::to_string(targets.size()) + " targets for " + std::to_string(rows) + " rows");
    for (int t : targets)
        if (t < 0 || t >= c) throw ContractError("cross_entropy: target " + std::to_string(t) + " outside " + std::to_string(c) + " classes");

    Tensor probs({rows, c});
    Tensor out({rows});
    for (int i = 0; i < rows; ++i) {
        const double* zi = tz.data() + static_cast<int64_t>(i) * c;
        double* pi = probs.data() + static_cast<int64_t>(i) * c;
        softmax_row(zi, pi, c);
        out[i] = -std::log(std::max(pi[targets[static_cast<size_t>(i)]], 1e-300));
    }
    bool rg = needs_grad(logits);
    Var result = push(std::move(out), rg, nullptr, "cross_entropy");
    if (rg) {
        std::vector<int> tg = targets;
        nodes_.back().back = [logits, tg, rows, c, result, probs](Tape& tp) {
            const Tensor& g = tp.grad_buf(result);
            Tensor& gz = tp.grad_buf(logits);
            for (int i = 0; i < rows; ++i) {
                double gi = g[i];
                if (gi == 0.0) continue;
                const double* pi = probs.data() + static_cast<int64_t>(i) * c;
                double* gzi = gz.data() + static_cast<int64_t>(i) * c;
                for (int j = 0; j < c; ++j) gzi[j] += gi * pi[j];
                gzi[tg[static_cast<size_t>(i)]] -= gi;
            }
        };
    }
    return result;
}

Var Tape::entropy(Var logits) {
    const Tensor& tz = val(logits);
    check_rank12(tz, "entropy");
    int rows = tz.rank() == 2 ? tz.rows() : 1;
    int c = tz.rank() == 2 ? tz.cols() : static_cast<int>(tz.size());
    Tensor probs({rows, c});
    Tensor out({rows});
    for (int i = 0; i < rows; ++i) {
        const double* zi = tz.data() + static_cast<int64_t>(i) * c;
        double* pi = probs.data() + static_cast<int64_t>(i) * c;
        softmax_row(zi, pi, c);
        double h = 0.0;
        for (int j = 0; j < c; ++j)
            if (pi[j] > 0.0) h -= pi[j] * std::log(pi[j]);
        out[i] = h;
    }
    bool rg = needs_grad(logits);
    Var result = push(std::move(out), rg, nullptr, "entropy");
    if (rg) {
        nodes_.back().back = [logits, rows, c, result, probs](Tape& tp) {
            const Tensor& g = tp.grad_buf(result);
            const Tensor& h = tp.val(result);
            Tensor& gz = tp.grad_buf(logits);
            // dH/dz_j = -p_j (log p_j + H)
            for (int i = 0; i < rows; ++i) {
                double gi = g[i];
                if (gi == 0.0) continue;
                const double* pi = probs.data() + static_cast<int64_t>(i) * c;
                double* gzi = gz.data() + static_cast<int64_t>(i) * c;
                for (int j = 0; j < c; ++j) {
                    double lp = pi[j] > 0.0 ? std::log(pi[j]) : 0.0;
                    gzi[j] += gi * (-pi[j] * (lp + h[i]));
                }
            }
        };
    }
    return result;
}

Var Tape::squared_l2(Var a, Var b) {
    const Tensor& ta = val(a);
    const Tensor& tb = val(b);
    if (!ta.same_shape(tb))
        throw ShapeError("squared_l2: shape mismatch " + ta.shape_str() + " vs " + tb.shape_str());
    double s = 0.0;
    for (int64_t i = 0; i < ta.size(); ++i) {
        double d = ta[i] - tb[i];
        s += d * d;
    }
    bool rg = needs_grad(a) || needs_grad(b);
    Var result = push(Tensor::scalar(s), rg, nullptr, "squared_l2");
    if (rg) {
        nodes_.back().back = [a, b, result](Tape& tp) {
            double g = tp.grad_buf(result)[0];
            const Tensor& va = tp.val(a);
            const Tensor& vb = tp.val(b);
            if (tp.needs_grad(a)) {
                Tensor& ga = tp.grad_buf(a);
                for (int64_t i = 0; i < va.size(); ++i) ga[i] += 2.0 * g * (va[i] - vb[i]);
            }
            if (tp.needs_grad(b)) {
                Tensor& gb = tp.grad_buf(b);
                for (int64_t i = 0; i < va.size(); ++i) gb[i] -= 2.0 * g * (va[i] - vb[i]);
            }
        };
    }
    return result;
}

}  // namespace ldd
