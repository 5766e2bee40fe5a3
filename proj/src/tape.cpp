#include "sad/tape.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace sad {

namespace {

void axpy(Tensor& dst, double s, const double* src) {
    double* d = dst.data();
    const size_t n = dst.size();
    for (size_t i = 0; i < n; ++i) d[i] += s * src[i];
}

}  // namespace

Var Tape::push(Tensor value, bool needs_grad, std::function<void(Tape&)> back) {
    if (nodes_.capacity() == nodes_.size()) nodes_.reserve(nodes_.empty() ? 256 : nodes_.size() * 2);
    Node n;
    n.value = std::move(value);
    n.needs_grad = needs_grad;
    n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
}

void Tape::check_var(Var x) const {
    if (!x.valid() || static_cast<size_t>(x.id) >= nodes_.size()) {
        throw std::invalid_argument("Tape: invalid Var handle");
    }
}

const Tape::Node& Tape::node(Var x) const {
    check_var(x);
    return nodes_[static_cast<size_t>(x.id)];
}

const Tensor& Tape::value(Var x) const { return node(x).value; }

Tensor Tape::grad(Var x) const {
    const Node& n = node(x);
    if (n.grad.size() == 0) return Tensor(n.value.shape());
    return n.grad;
}

Tensor& Tape::grad_buf(int id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (n.grad.size() == 0) n.grad = Tensor(n.value.shape());
    return n.grad;
}

Var Tape::constant(Tensor v) {
    check_finite("constant", v);
    return push(std::move(v), false, nullptr);
}

Var Tape::leaf(Tensor v) {
    check_finite("leaf", v);
    return push(std::move(v), true, nullptr);
}

Var Tape::matmul(Var a, Var b) {
    const Tensor& av = value(a);
    const Tensor& bv = value(b);
    check_finite("matmul", av);
    check_finite("matmul", bv);
    if (av.rank() != 2 || bv.rank() != 2 || av.shape()[1] != bv.shape()[0]) {
        throw std::invalid_argument("matmul: incompatible shapes " + av.shape_str() + " vs " + bv.shape_str());
    }
    const size_t m = av.shape()[0], k = av.shape()[1], n = bv.shape()[1];
    Tensor out({m, n});
    kernels::matmul(av.data(), bv.data(), out.data(), m, k, n);
    const bool ga = wants_grad(a), gb = wants_grad(b);
    const int ia = a.id, ib = b.id;
    const int out_id = static_cast<int>(nodes_.size());
    return push(std::move(out), ga || gb, [=](Tape& t) {
        const Tensor& g = t.nodes_[out_id].grad;
        const Tensor& A = t.nodes_[ia].value;
        const Tensor& B = t.nodes_[ib].value;
        if (ga) {
            // dA += g . B^T; materializing B^T turns the row-dot form into
            // the vectorizable ikj kernel with identical accumulation order
            Tensor bt({n, k});
            for (size_t p = 0; p < k; ++p) {
                for (size_t j = 0; j < n; ++j) bt[j * k + p] = B[p * n + j];
            }
            kernels::matmul_acc(g.data(), bt.data(), t.grad_buf(ia).data(), m, n, k);
        }
        if (gb) kernels::matmul_tn_acc(A.data(), g.data(), t.grad_buf(ib).data(), m, k, n);
    });
}

Var Tape::matmul_nt(Var a, Var b) {
    const Tensor& av = value(a);
    const Tensor& bv = value(b);
    check_finite("matmul_nt", av);
    check_finite("matmul_nt", bv);
    if (av.rank() != 2 || bv.rank() != 2 || av.shape()[1] != bv.shape()[1]) {
        throw std::invalid_argument("matmul_nt: incompatible shapes " + av.shape_str() + " vs " + bv.shape_str());
    }
    const size_t m = av.shape()[0], k = av.shape()[1], n = bv.shape()[0];
    Tensor out({m, n});
    kernels::matmul_nt(av.data(), bv.data(), out.data(), m, k, n);
    const bool ga = wants_grad(a), gb = wants_grad(b);
    const int ia = a.id, ib = b.id;
    const int out_id = static_cast<int>(nodes_.size());
    return push(std::move(out), ga || gb, [=](Tape& t) {
        const Tensor& g = t.nodes_[out_id].grad;  // [m,n]
        const Tensor& A = t.nodes_[ia].value;     // [m,k]
        const Tensor& B = t.nodes_[ib].value;     // [n,k]
        if (ga) kernels::matmul_acc(g.data(), B.data(), t.grad_buf(ia).data(), m, n, k);
        if (gb) kernels::matmul_tn_acc(g.data(), A.data(), t.grad_buf(ib).data(), m, n, k);
    });
}

Var Tape::add(Var a, Var b) {
    const Tensor& av = value(a);
    const Tensor& bv = value(b);
    check_finite("add", av);
    check_finite("add", bv);
    check_same_shape("add", av, bv);
    Tensor out(av.shape());
    for (size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
    const bool ga = wants_grad(a), gb = wants_grad(b);
    const int ia = a.id, ib = b.id;
    const int out_id = static_cast<int>(nodes_.size());
    return push(std::move(out), ga || gb, [=](Tape& t) {
        const Tensor& g = t.nodes_[out_id].grad;
        if (ga) axpy(t.grad_buf(ia), 1.0, g.data());
        if (gb) axpy(t.grad_buf(ib), 1.0, g.data());
    });
}

Var Tape::sub(Var a, Var b) {
    const Tensor& av = value(a);
    const Tensor& bv = value(b);
    check_finite("sub", av);
    check_finite("sub", bv);
    check_same_shape("sub", av, bv);
    Tensor out(av.shape());
    for (size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
    const bool ga = wants_grad(a), gb = wants_grad(b);
    const int ia = a.id, ib = b.id;
    const int out_id = static_cast<int>(nodes_.size());
    return push(std::move(out), ga || gb, [=](Tape& t) {
        const Tensor& g = t.nodes_[out_id].grad;
        if (ga) axpy(t.grad_buf(ia), 1.0, g.data());
        if (gb) axpy(t.grad_buf(ib), -1.0, g.data());
    });
}

Var Tape::mul(Var a, Var b) {
    const Tensor& av = value(a);
    const Tensor& bv = value(b);
    check_finite("mul", av);
    check_finite("mul", bv);
    check_same_shape("mul", av, bv);
    Tensor out(av.shape());
    for (size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
    const bool ga = wants_grad(a), gb = wants_grad(b);
    const int ia = a.id, ib = b.id;
    const int out_id = static_cast<int>(nodes_.size());
    return push(std::move(out), ga || gb, [=](Tape& t) {
        const Tensor& g = t.nodes_[out_id].grad;
        const Tensor& A = t.nodes_[ia].value;
        const Tensor& B = t.nodes_[ib].value;
        if (ga) {
            Tensor& d = t.grad_buf(ia);
            for (size_t i = 0; i < d.size(); ++i) d[i] += g[i] * B[i];
        }
        if (gb) {
            Tensor& d = t.grad_buf(ib);
            for (size_t i = 0; i < d.size(); ++i) d[i] += g[i] * A[i];
        }
    });
}

Var Tape::affine(Var a, double s, double c) {
    const Tensor& av = value(a);
    check_finite("affine", av);
    if (!std::isfinite(s) || !std::isfinite(c)) throw std::invalid_argument("affine: non-finite coefficient");
    Tensor out(av.shape());
    for (size_t i = 0; i < out.size(); ++i) out[i] = s * av[i] + c;
    const bool ga = wants_grad(a);
    const int ia = a.id;
    const int out_id = static_cast<int>(nodes_.size());
    return push(std::move(out), ga, [=](Tape& t) {
        if (ga) axpy(t.grad_buf(ia), s, t.nodes_[out_id].grad.data());
    });
}

Var Tape::add_rowwise(Var mat, Var row) {
    const Tensor& mv = value(mat);
    const Tensor& rv = value(row);
    check_finite("add_rowwise", mv);
    check_finite("add_rowwise", rv);
    if (mv.rank() != 2 || rv.size() != mv.shape()[1]) {
        throw std::invalid_argument("add_rowwise: incompatible shapes " + mv.shape_str() + " vs " + rv.shape_str());
    }
    const size_t n = mv.shape()[0], d = mv.shape()[1];
    Tensor out({n, d});
    for (size_t i = 0; i < n; ++i) {
        for (size_t j = 0; j < d; ++j) out[i * d + j] = mv[i * d + j] + rv[j];
    }
    const bool gm = wants_grad(mat), gr = wants_grad(row);
    const int im = mat.id, ir = row.id;
    const int out_id = static_cast<int>(nodes_.size());
    return push(std::move(out), gm || gr, [=](Tape& t) {
        const Tensor& g = t.nodes_[out_id].grad;
        if (gm) axpy(t.grad_buf(im), 1.0, g.data());
        if (gr) {
            Tensor& d_ = t.grad_buf(ir);
            for (size_t i = 0; i < n; ++i) {
                for (size_t j = 0; j < d; ++j) d_[j] += g[i * d + j];
            }
        }
    });
}

Var Tape::relu(Var a) {
    const Tensor& av = value(a);
    check_finite("relu", av);
    Tensor out(av.shape());
    for (size_t i = 0; i < out.size(); ++i) out[i] = av[i] > 0.0 ? av[i] : 0.0;
    const bool ga = wants_grad(a);
    const int ia = a.id;
    const int out_id = static_cast<int>(nodes_.size());
    return push(std::move(out), ga, [=](Tape& t) {
        if (!ga) return;
        const Tensor& g = t.nodes_[out_id].grad;
        const Tensor& A = t.nodes_[ia].value;
        Tensor& d = t.grad_buf(ia);
        for (size_t i = 0; i < d.size(); ++i) d[i] += A[i] > 0.0 ? g[i] : 0.0;
    });
}

Var Tape::exp(Var a) {
    const Tensor& av = value(a);
    check_finite("exp", av);
    Tensor out(av.shape());
    for (size_t i = 0; i < out.size(); ++i) out[i] = std::exp(av[i]);
    const bool ga = wants_grad(a);
    const int ia = a.id;
    const int out_id = static_cast<int>(nodes_.size());
    return push(std::move(out), ga, [=](Tape& t) {
        if (!ga) return;
        const Tensor& g = t.nodes_[out_id].grad;
        const Tensor& y = t.nodes_[out_id].value;
        Tensor& d = t.grad_buf(ia);
        for (size_t i = 0; i < d.size(); ++i) d[i] += g[i] * y[i];
    });
}

Var Tape::log(Var a) {
    const Tensor& av = value(a);
    check_finite("log", av);
    Tensor out(av.shape());
    for (size_t i = 0; i < out.size(); ++i) out[i] = std::log(std::max(av[i], kLogClamp));
    const bool ga = wants_grad(a);
    const int ia = a.id;
    const int out_id = static_cast<int>(nodes_.size());
    return push(std::move(out), ga, [=](Tape& t) {
        if (!ga) return;
        const Tensor& g = t.nodes_[out_id].grad;
        const Tensor& A = t.nodes_[ia].value;
        Tensor& d = t.grad_buf(ia);
        for (size_t i = 0; i < d.size(); ++i) d[i] += g[i] / std::max(A[i], kLogClamp);
    });
}

Var Tape::cos(Var a) {
    const Tensor& av = value(a);
    check_finite("cos", av);
    Tensor out(av.shape());
    for (size_t i = 0; i < out.size(); ++i) out[i] = std::cos(av[i]);
    const bool ga = wants_grad(a);
    const int ia = a.id;
    const int out_id = static_cast<int>(nodes_.size());
    return push(std::move(out), ga, [=](Tape& t) {
        if (!ga) return;
        const Tensor& g = t.nodes_[out_id].grad;
        const Tensor& A = t.nodes_[ia].value;
        Tensor& d = t.grad_buf(ia);
        for (size_t i = 0; i < d.size(); ++i) d[i] -= g[i] * std::sin(A[i]);
    });
}

Var Tape::abs(Var a) {
    const Tensor& av = value(a);
    check_finite("abs", av);
    Tensor out(av.shape());
    for (size_t i = 0; i < out.size(); ++i) out[i] = std::fabs(av[i]);
    const bool ga = wants_grad(a);
    const int ia = a.id;
    const int out_id = static_cast<int>(nodes_.size());
    return push(std::move(out), ga, [=](Tape& t) {
        if (!ga) return;
        const Tensor& g = t.nodes_[out_id].grad;
        const Tensor& A = t.nodes_[ia].value;
        Tensor& d = t.grad_buf(ia);
        // subgradient at 0 is 0
        for (size_t i = 0; i < d.size(); ++i) d[i] += A[i] > 0.0 ? g[i] : (A[i] < 0.0 ? -g[i] : 0.0);
    });
}

Var Tape::sum(Var a) {
    const Tensor& av = value(a);
    check_finite("sum", av);
    double acc = 0.0;
    for (size_t i = 0; i < av.size(); ++i) acc += av[i];
    const bool ga = wants_grad(a);
    const int ia = a.id;
    const int out_id = static_cast<int>(nodes_.size());
    return push(Tensor::scalar(acc), ga, [=](Tape& t) {
        if (!ga) return;
        const double g = t.nodes_[out_id].grad[0];
        Tensor& d = t.grad_buf(ia);
        for (size_t i = 0; i < d.size(); ++i) d[i] += g;
    });
}

Var Tape::mean(Var a) {
    const Tensor& av = value(a);
    check_finite("mean", av);
    const double inv = 1.0 / static_cast<double>(av.size());
    double acc = 0.0;
    for (size_t i = 0; i < av.size(); ++i) acc += av[i];
    const bool ga = wants_grad(a);
    const int ia = a.id;
    const int out_id = static_cast<int>(nodes_.size());
    return push(Tensor::scalar(acc * inv), ga, [=](Tape& t) {
        if (!ga) return;
        const double g = t.nodes_[out_id].grad[0] * inv;
        Tensor& d = t.grad_buf(ia);
        for (size_t i = 0; i < d.size(); ++i) d[i] += g;
    });
}

Var Tape::inner_const(Var a, Tensor w) {
    const Tensor& av = value(a);
    check_finite("inner_const", av);
    check_finite("inner_const", w);
    check_same_shape("inner_const", av, w);
    double acc = 0.0;
    for (size_t i = 0; i < av.size(); ++i) acc += av[i] * w[i];
    const bool ga = wants_grad(a);
    const int ia = a.id;
    const int out_id = static_cast<int>(nodes_.size());
    return push(Tensor::scalar(acc), ga, [=, w = std::move(w)](Tape& t) {
        if (!ga) return;
        const double g = t.nodes_[out_id].grad[0];
        Tensor& d = t.grad_buf(ia);
        for (size_t i = 0; i < d.size(); ++i) d[i] += g * w[i];
    });
}

Var Tape::concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
    size_t n = 0, d = 0;
    for (size_t p = 0; p < parts.size(); ++p) {
        const Tensor& v = value(parts[p]);
        check_finite("concat_cols", v);
        if (v.rank() != 2) throw std::invalid_argument("concat_cols: rank-2 required, got " + v.shape_str());
        if (p == 0) n = v.shape()[0];
        if (v.shape()[0] != n) {
            throw std::invalid_argument("concat_cols: row mismatch " + value(parts[0]).shape_str() + " vs " +
                                        v.shape_str());
        }
        d += v.shape()[1];
    }
    Tensor out({n, d});
    std::vector<int> ids;
    std::vector<size_t> widths;
    std::vector<bool> needs;
    size_t off = 0;
    bool any = false;
    for (Var p : parts) {
        const Tensor& v = value(p);
        const size_t w = v.shape()[1];
        for (size_t i = 0; i < n; ++i) {
            for (size_t j = 0; j < w; ++j) out[i * d + off + j] = v[i * w + j];
        }
        ids.push_back(p.id);
        widths.push_back(w);
        needs.push_back(wants_grad(p));
        any = any || wants_grad(p);
        off += w;
    }
    const int out_id = static_cast<int>(nodes_.size());
    return push(std::move(out), any, [=](Tape& t) {
        const Tensor& g = t.nodes_[out_id].grad;
        size_t o = 0;
        for (size_t p = 0; p < ids.size(); ++p) {
            const size_t w = widths[p];
            if (needs[p]) {
                Tensor& dst = t.grad_buf(ids[p]);
                for (size_t i = 0; i < n; ++i) {
                    for (size_t j = 0; j < w; ++j) dst[i * w + j] += g[i * d + o + j];
                }
            }
            o += w;
        }
    });
}

Var Tape::concat_rows(const std::vector<Var>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_rows: no inputs");
    size_t n = 0, d = 0;
    for (size_t p = 0; p < parts.size(); ++p) {
        const Tensor& v = value(parts[p]);
        check_finite("concat_rows", v);
        if (v.rank() != 2) throw std::invalid_argument("concat_rows: rank-2 required, got " + v.shape_str());
        if (p == 0) d = v.shape()[1];
        if (v.shape()[1] != d) {
            throw std::invalid_argument("concat_rows: column mismatch " + value(parts[0]).shape_str() + " vs " +
                                        v.shape_str());
        }
        n += v.shape()[0];
    }
    Tensor out({n, d});
    std::vector<int> ids;
    std::vector<size_t> heights;
    std::vector<bool> needs;
    size_t off = 0;
    bool any = false;
    for (Var p : parts) {
        const Tensor& v = value(p);
        const size_t h = v.shape()[0];
        std::copy(v.data(), v.data() + v.size(), out.data() + off * d);
        ids.push_back(p.id);
        heights.push_back(h);
        needs.push_back(wants_grad(p));
        any = any || wants_grad(p);
        off += h;
    }
    const int out_id = static_cast<int>(nodes_.size());
    return push(std::move(out), any, [=](Tape& t) {
        const Tensor& g = t.nodes_[out_id].grad;
        size_t o = 0;
        for (size_t p = 0; p < ids.size(); ++p) {
            const size_t h = heights[p];
            if (needs[p]) axpy(t.grad_buf(ids[p]), 1.0, g.data() + o * d);
            o += h;
        }
    });
}

Var Tape::slice_rows(Var a, size_t start, size_t count) {
    const Tensor& av = value(a);
    check_finite("slice_rows", av);
    if (av.rank() != 2 || start + count > av.shape()[0] || count == 0) {
        throw std::invalid_argument("slice_rows: range [" + std::to_string(start) + "," +
                                    std::to_string(start + count) + ") out of " + av.shape_str());
    }
    const size_t d = av.shape()[1];
    Tensor out({count, d});
    std::copy(av.data() + start * d, av.data() + (start + count) * d, out.data());
    const bool ga = wants_grad(a);
    const int ia = a.id;
    const int out_id = static_cast<int>(nodes_.size());
    return push(std::move(out), ga, [=](Tape& t) {
        if (!ga) return;
        const Tensor& g = t.nodes_[out_id].grad;
        Tensor& dst = t.grad_buf(ia);
        double* base = dst.data() + start * d;
        for (size_t i = 0; i < count * d; ++i) base[i] += g[i];
    });
}

Var Tape::gather_rows(Var a, std::vector<int64_t> idx) {
    const Tensor& av = value(a);
    check_finite("gather_rows", av);
    if (av.rank() != 2) throw std::invalid_argument("gather_rows: rank-2 required, got " + av.shape_str());
    const size_t rows = av.shape()[0], d = av.shape()[1];
    for (int64_t i : idx) {
        if (i >= static_cast<int64_t>(rows)) throw std::invalid_argument("gather_rows: index out of range");
    }
    Tensor out({idx.size(), d});
    for (size_t r = 0; r < idx.size(); ++r) {
        if (idx[r] >= 0) {
            std::copy(av.data() + static_cast<size_t>(idx[r]) * d, av.data() + (static_cast<size_t>(idx[r]) + 1) * d,
                      out.data() + r * d);
        }
    }
    const bool ga = wants_grad(a);
    const int ia = a.id;
    const int out_id = static_cast<int>(nodes_.size());
    return push(std::move(out), ga, [=, idx = std::move(idx)](Tape& t) {
        if (!ga) return;
        const Tensor& g = t.nodes_[out_id].grad;
        Tensor& dst = t.grad_buf(ia);
        for (size_t r = 0; r < idx.size(); ++r) {
            if (idx[r] < 0) continue;
            double* row = dst.data() + static_cast<size_t>(idx[r]) * d;
            const double* gr = g.data() + r * d;
            for (size_t j = 0; j < d; ++j) row[j] += gr[j];
        }
    });
}

Var Tape::softmax_rows(Var a) {
    const Tensor& av = value(a);
    check_finite("softmax_rows", av);
    if (av.rank() != 2) throw std::invalid_argument("softmax_rows: rank-2 required, got " + av.shape_str());
    const size_t n = av.shape()[0], d = av.shape()[1];
    Tensor out({n, d});
    for (size_t i = 0; i < n; ++i) {
        const double* x = av.data() + i * d;
        double* y = out.data() + i * d;
        double m = x[0];
        for (size_t j = 1; j < d; ++j) m = std::max(m, x[j]);
        double s = 0.0;
        for (size_t j = 0; j < d; ++j) {
            y[j] = std::exp(x[j] - m);
            s += y[j];
        }
        for (size_t j = 0; j < d; ++j) y[j] /= s;
    }
    const bool ga = wants_grad(a);
    const int ia = a.id;
    const int out_id = static_cast<int>(nodes_.size());
    return push(std::move(out), ga, [=](Tape& t) {
        if (!ga) return;
        const Tensor& g = t.nodes_[out_id].grad;
        const Tensor& y = t.nodes_[out_id].value;
        Tensor& dst = t.grad_buf(ia);
        for (size_t i = 0; i < n; ++i) {
            const double* gr = g.data() + i * d;
            const double* yr = y.data() + i * d;
            double dot = 0.0;
            for (size_t j = 0; j < d; ++j) dot += gr[j] * yr[j];
            double* dr = dst.data() + i * d;
            for (size_t j = 0; j < d; ++j) dr[j] += yr[j] * (gr[j] - dot);
        }
    });
}

Var Tape::l2_normalize_rows(Var a) {
    const Tensor& av = value(a);
    check_finite("l2_normalize_rows", av);
    if (av.rank() != 2) throw std::invalid_argument("l2_normalize_rows: rank-2 required, got " + av.shape_str());
    const size_t n = av.shape()[0], d = av.shape()[1];
    Tensor out({n, d});
    std::vector<double> norms(n);
    for (size_t i = 0; i < n; ++i) {
        const double* x = av.data() + i * d;
        double s2 = 0.0;
        for (size_t j = 0; j < d; ++j) s2 += x[j] * x[j];
        const double norm = std::max(std::sqrt(s2), kLogClamp);
        norms[i] = norm;
        double* y = out.data() + i * d;
        for (size_t j = 0; j < d; ++j) y[j] = x[j] / norm;
    }
    const bool ga = wants_grad(a);
    const int ia = a.id;
    const int out_id = static_cast<int>(nodes_.size());
    return push(std::move(out), ga, [=, norms = std::move(norms)](Tape& t) {
        if (!ga) return;
        const Tensor& g = t.nodes_[out_id].grad;
        const Tensor& y = t.nodes_[out_id].value;
        const Tensor& x = t.nodes_[ia].value;
        Tensor& dst = t.grad_buf(ia);
        for (size_t i = 0; i < n; ++i) {
            const double* gr = g.data() + i * d;
            const double* yr = y.data() + i * d;
            const double* xr = x.data() + i * d;
            double* dr = dst.data() + i * d;
            double s2 = 0.0;
            for (size_t j = 0; j < d; ++j) s2 += xr[j] * xr[j];
            if (std::sqrt(s2) <= kLogClamp) {
                // clamped branch is linear: y = x / clamp
                for (size_t j = 0; j < d; ++j) dr[j] += gr[j] / norms[i];
                continue;
            }
            double dot = 0.0;
            for (size_t j = 0; j < d; ++j) dot += gr[j] * yr[j];
            for (size_t j = 0; j < d; ++j) dr[j] += (gr[j] - yr[j] * dot) / norms[i];
        }
    });
}

Var Tape::logsumexp_rows(Var a) {
    const Tensor& av = value(a);
    check_finite("logsumexp_rows", av);
    if (av.rank() != 2) throw std::invalid_argument("logsumexp_rows: rank-2 required, got " + av.shape_str());
    const size_t n = av.shape()[0], d = av.shape()[1];
    Tensor out({n, 1});
    for (size_t i = 0; i < n; ++i) {
        const double* x = av.data() + i * d;
        double m = x[0];
        for (size_t j = 1; j < d; ++j) m = std::max(m, x[j]);
        double s = 0.0;
        for (size_t j = 0; j < d; ++j) s += std::exp(x[j] - m);
        out[i] = m + std::log(s);
    }
    const bool ga = wants_grad(a);
    const int ia = a.id;
    const int out_id = static_cast<int>(nodes_.size());
    return push(std::move(out), ga, [=](Tape& t) {
        if (!ga) return;
        const Tensor& g = t.nodes_[out_id].grad;
        const Tensor& y = t.nodes_[out_id].value;
        const Tensor& x = t.nodes_[ia].value;
        Tensor& dst = t.grad_buf(ia);
        for (size_t i = 0; i < n; ++i) {
            const double gi = g[i];
            const double* xr = x.data() + i * d;
            double* dr = dst.data() + i * d;
            for (size_t j = 0; j < d; ++j) dr[j] += gi * std::exp(xr[j] - y[i]);
        }
    });
}

Var Tape::cosine_features(const std::vector<double>& gaps, Var omega, Var phase) {
    const Tensor& ov = value(omega);
    const Tensor& pv = value(phase);
    check_finite("cosine_features", ov);
    check_finite("cosine_features", pv);
    if (ov.rank() != 2 || ov.shape()[0] != 1 || !ov.same_shape(pv)) {
        throw std::invalid_argument("cosine_features: omega/phase must be matching [1,d] rows, got " + ov.shape_str() +
                                    " vs " + pv.shape_str());
    }
    if (gaps.empty()) throw std::invalid_argument("cosine_features: no gaps");
    for (double g : gaps) {
        if (!std::isfinite(g)) throw std::invalid_argument("cosine_features: non-finite input");
    }
    const size_t n = gaps.size(), d = ov.cols();
    Tensor out({n, d});
    for (size_t i = 0; i < n; ++i) {
        const double gap = gaps[i];
        double* row = out.data() + i * d;
        for (size_t j = 0; j < d; ++j) row[j] = std::cos(gap * ov[j] + pv[j]);
    }
    const bool go = wants_grad(omega), gp = wants_grad(phase);
    const int io = omega.id, ip = phase.id;
    const int out_id = static_cast<int>(nodes_.size());
    return push(std::move(out), go || gp, [=, gaps = gaps](Tape& t) {
        const Tensor& g = t.nodes_[out_id].grad;
        const Tensor& om = t.nodes_[io].value;
        const Tensor& ph = t.nodes_[ip].value;
        Tensor* domega = go ? &t.grad_buf(io) : nullptr;
        Tensor* dphase = gp ? &t.grad_buf(ip) : nullptr;
        for (size_t i = 0; i < gaps.size(); ++i) {
            const double gap = gaps[i];
            const double* grow = g.data() + i * d;
            for (size_t j = 0; j < d; ++j) {
                const double dd = -std::sin(gap * om[j] + ph[j]) * grow[j];
                if (domega) (*domega)[j] += dd * gap;
                if (dphase) (*dphase)[j] += dd;
            }
        }
    });
}

Var Tape::attention_pool(Var q, Var k, Var v, std::vector<std::pair<size_t, size_t>> segments, double scale,
                         std::vector<double>* weights_sink) {
    const Tensor& qv = value(q);
    const Tensor& kv = value(k);
    const Tensor& vv = value(v);
    check_finite("attention_pool", qv);
    check_finite("attention_pool", kv);
    check_finite("attention_pool", vv);
    if (qv.rank() != 2 || kv.rank() != 2 || vv.rank() != 2 || qv.shape()[1] != kv.shape()[1] ||
        kv.shape()[0] != vv.shape()[0] || kv.shape()[1] != vv.shape()[1]) {
        throw std::invalid_argument("attention_pool: incompatible shapes q=" + qv.shape_str() + " k=" + kv.shape_str() +
                                    " v=" + vv.shape_str());
    }
    const size_t S = qv.shape()[0], dk = qv.shape()[1], T = kv.shape()[0];
    if (segments.size() != S) throw std::invalid_argument("attention_pool: one segment per query row required");
    size_t total = 0;
    for (auto [start, len] : segments) {
        if (len == 0 || start + len > T) throw std::invalid_argument("attention_pool: bad segment range");
        total += len;
    }
    Tensor out({S, dk});
    std::vector<double> weights(total);
    std::vector<size_t> offs(S);
    {
        size_t o = 0;
        for (size_t s = 0; s < S; ++s) {
            offs[s] = o;
            o += segments[s].second;
        }
    }
    std::vector<double> zbuf;
    for (size_t s = 0; s < S; ++s) {
        const auto [start, len] = segments[s];
        const double* qr = qv.data() + s * dk;
        zbuf.resize(len);
        double zmax = -1e300;
        for (size_t j = 0; j < len; ++j) {
            const double* kr = kv.data() + (start + j) * dk;
            double z = 0.0;
            for (size_t c = 0; c < dk; ++c) z += qr[c] * kr[c];
            z *= scale;
            zbuf[j] = z;
            zmax = std::max(zmax, z);
        }
        double zsum = 0.0;
        double* w = weights.data() + offs[s];
        for (size_t j = 0; j < len; ++j) {
            w[j] = std::exp(zbuf[j] - zmax);
            zsum += w[j];
        }
        double* orow = out.data() + s * dk;
        for (size_t j = 0; j < len; ++j) {
            w[j] /= zsum;
            const double* vr = vv.data() + (start + j) * dk;
            for (size_t c = 0; c < dk; ++c) orow[c] += w[j] * vr[c];
        }
    }
    if (weights_sink) *weights_sink = weights;
    const bool gq = wants_grad(q), gk = wants_grad(k), gv = wants_grad(v);
    const int iq = q.id, ik = k.id, iv = v.id;
    const int out_id = static_cast<int>(nodes_.size());
    return push(std::move(out), gq || gk || gv,
                [=, segments = std::move(segments), weights = std::move(weights), offs = std::move(offs)](Tape& t) {
                    const Tensor& g = t.nodes_[out_id].grad;
                    const Tensor& Q = t.nodes_[iq].value;
                    const Tensor& K = t.nodes_[ik].value;
                    const Tensor& V = t.nodes_[iv].value;
                    Tensor* dq = gq ? &t.grad_buf(iq) : nullptr;
                    Tensor* dkt = gk ? &t.grad_buf(ik) : nullptr;
                    Tensor* dv = gv ? &t.grad_buf(iv) : nullptr;
                    std::vector<double> dz;
                    for (size_t s = 0; s < segments.size(); ++s) {
                        const auto [start, len] = segments[s];
                        const double* w = weights.data() + offs[s];
                        const double* gr = g.data() + s * dk;
                        dz.resize(len);
                        double wdot = 0.0;
                        for (size_t j = 0; j < len; ++j) {
                            const double* vr = V.data() + (start + j) * dk;
                            double dw = 0.0;
                            for (size_t c = 0; c < dk; ++c) dw += gr[c] * vr[c];
                            dz[j] = dw;
                            wdot += w[j] * dw;
                            if (dv) {
                                double* dvr = dv->data() + (start + j) * dk;
                                for (size_t c = 0; c < dk; ++c) dvr[c] += w[j] * gr[c];
                            }
                        }
                        const double* qr = Q.data() + s * dk;
                        for (size_t j = 0; j < len; ++j) {
                            const double dzj = w[j] * (dz[j] - wdot) * scale;
                            const double* kr = K.data() + (start + j) * dk;
                            if (dq) {
                                double* dqr = dq->data() + s * dk;
                                for (size_t c = 0; c < dk; ++c) dqr[c] += dzj * kr[c];
                            }
                            if (dkt) {
                                double* dkr = dkt->data() + (start + j) * dk;
                                for (size_t c = 0; c < dk; ++c) dkr[c] += dzj * qr[c];
                            }
                        }
                    }
                });
}

Var Tape::softmax_xent(Var logits, const std::vector<int>& labels) {
    const Tensor& lv = value(logits);
    check_finite("softmax_xent", lv);
    if (lv.rank() != 2) throw std::invalid_argument("softmax_xent: rank-2 required, got " + lv.shape_str());
    const size_t n = lv.shape()[0], c = lv.shape()[1];
    if (labels.size() != n) throw std::invalid_argument("softmax_xent: labels length mismatch");
    size_t count = 0;
    for (int y : labels) {
        if (y >= static_cast<int>(c)) throw std::invalid_argument("softmax_xent: label out of range");
        if (y >= 0) ++count;
    }
    if (count == 0) return constant(Tensor::scalar(0.0));
    double loss = 0.0;
    std::vector<double> lse(n);
    for (size_t i = 0; i < n; ++i) {
        if (labels[i] < 0) continue;
        const double* x = lv.data() + i * c;
        double m = x[0];
        for (size_t j = 1; j < c; ++j) m = std::max(m, x[j]);
        double s = 0.0;
        for (size_t j = 0; j < c; ++j) s += std::exp(x[j] - m);
        lse[i] = m + std::log(s);
        loss += lse[i] - x[labels[i]];
    }
    loss /= static_cast<double>(count);
    const bool ga = wants_grad(logits);
    const int ia = logits.id;
    const int out_id = static_cast<int>(nodes_.size());
    return push(Tensor::scalar(loss), ga, [=, labels = labels, lse = std::move(lse)](Tape& t) {
        if (!ga) return;
        const double g = t.nodes_[out_id].grad[0] / static_cast<double>(count);
        const Tensor& x = t.nodes_[ia].value;
        Tensor& dst = t.grad_buf(ia);
        for (size_t i = 0; i < n; ++i) {
            if (labels[i] < 0) continue;
            const double* xr = x.data() + i * c;
            double* dr = dst.data() + i * c;
            for (size_t j = 0; j < c; ++j) {
                const double p = std::exp(xr[j] - lse[i]);
                dr[j] += g * (p - (static_cast<int>(j) == labels[i] ? 1.0 : 0.0));
            }
        }
    });
}

void Tape::backward(Var loss) {
    const Tensor& lv = value(loss);
    if (lv.size() != 1) {
        throw std::invalid_argument("backward: loss must be scalar, got shape " + lv.shape_str());
    }
    if (backward_done_) throw std::runtime_error("backward: already run on this tape");
    backward_done_ = true;
    grad_buf(loss.id)[0] = 1.0;
    for (size_t i = nodes_.size(); i-- > 0;) {
        Node& n = nodes_[i];
        if (!n.needs_grad || n.grad.size() == 0 || !n.back) continue;
        n.back(*this);
    }
}

}  // namespace sad
