#include "braingat/tape.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

#include "braingat/errors.hpp"

namespace braingat {

namespace {

void require(bool cond, const std::string& msg) {
    if (!cond) throw ShapeError(msg);
}

// Second operand of add/multiply may be a row vector over a matrix.
bool row_broadcasts(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2) return false;
    if (b.rank() == 1) return b.size() == a.cols();
    return b.rank() == 2 && b.rows() == 1 && b.cols() == a.cols();
}

}  // namespace

Var Tape::push(Tensor value, bool requires_grad) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    nodes_.push_back(std::move(n));
    return Var{static_cast<std::int32_t>(nodes_.size() - 1)};
}

Tape::Node& Tape::node(Var v) {
    require(v.valid() && static_cast<std::size_t>(v.id) < nodes_.size(), "invalid var");
    return nodes_[static_cast<std::size_t>(v.id)];
}

const Tape::Node& Tape::node(Var v) const {
    require(v.valid() && static_cast<std::size_t>(v.id) < nodes_.size(), "invalid var");
    return nodes_[static_cast<std::size_t>(v.id)];
}

const Tensor& Tape::value(Var v) const { return node(v).value; }

bool Tape::requires_grad(Var v) const { return node(v).requires_grad; }

Tensor& Tape::grad_buffer(std::int32_t id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.grad.empty()) n.grad = Tensor(n.value.shape());
    return n.grad;
}

void Tape::accumulate(std::int32_t id, const Tensor& g) {
    Tensor& buf = grad_buffer(id);
    double* out = buf.data();
    const double* in = g.data();
    for (std::size_t i = 0; i < buf.size(); ++i) out[i] += in[i];
}

const Tensor& Tape::grad(Var v) { return grad_buffer(v.id); }

Var Tape::leaf(Tensor value, bool requires_grad) { return push(std::move(value), requires_grad); }

Var Tape::add(Var a, Var b) {
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    const bool bcast = !ta.same_shape(tb);
    if (bcast) {
        require(row_broadcasts(ta, tb),
                "add: shapes " + ta.shape_str() + " vs " + tb.shape_str());
    }
    Tensor out = ta;
    if (bcast) {
        const std::size_t r = ta.rows(), c = ta.cols();
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) out.at(i, j) += tb.at(j);
    } else {
        for (std::size_t i = 0; i < out.size(); ++i) out.at(i) += tb.at(i);
    }
    Var res = push(std::move(out), requires_grad(a) || requires_grad(b));
    if (node(res).requires_grad) {
        node(res).backprop = [a, b, self = res.id, bcast](Tape& t) {
            const Tensor& g = t.nodes_[self].grad;
            if (t.requires_grad(a)) t.accumulate(a.id, g);
            if (t.requires_grad(b)) {
                if (!bcast) {
                    t.accumulate(b.id, g);
                } else {
                    Tensor gb(t.value(b).shape());
                    const std::size_t r = g.rows(), c = g.cols();
                    for (std::size_t j = 0; j < c; ++j) {
                        double s = 0.0;
                        for (std::size_t i = 0; i < r; ++i) s += g.at(i, j);
                        gb.at(j) = s;
                    }
                    t.accumulate(b.id, gb);
                }
            }
        };
    }
    return res;
}

Var Tape::add_scalar(Var a, double c) {
    Tensor out = value(a);
    for (std::size_t i = 0; i < out.size(); ++i) out.at(i) += c;
    Var res = push(std::move(out), requires_grad(a));
    if (node(res).requires_grad) {
        node(res).backprop = [a, self = res.id](Tape& t) {
            t.accumulate(a.id, t.nodes_[self].grad);
        };
    }
    return res;
}

Var Tape::multiply(Var a, Var b) {
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    const bool bcast = !ta.same_shape(tb);
    if (bcast) {
        require(row_broadcasts(ta, tb),
                "multiply: shapes " + ta.shape_str() + " vs " + tb.shape_str());
    }
    Tensor out = ta;
    if (bcast) {
        const std::size_t r = ta.rows(), c = ta.cols();
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) out.at(i, j) *= tb.at(j);
    } else {
        for (std::size_t i = 0; i < out.size(); ++i) out.at(i) *= tb.at(i);
    }
    Var res = push(std::move(out), requires_grad(a) || requires_grad(b));
    if (node(res).requires_grad) {
        node(res).backprop = [a, b, self = res.id, bcast](Tape& t) {
            const Tensor& g = t.nodes_[self].grad;
            const Tensor& ta2 = t.value(a);
            const Tensor& tb2 = t.value(b);
            if (!bcast) {
                if (t.requires_grad(a)) {
                    Tensor ga(ta2.shape());
                    for (std::size_t i = 0; i < ga.size(); ++i) ga.at(i) = g.at(i) * tb2.at(i);
                    t.accumulate(a.id, ga);
                }
                if (t.requires_grad(b)) {
                    Tensor gb(tb2.shape());
                    for (std::size_t i = 0; i < gb.size(); ++i) gb.at(i) = g.at(i) * ta2.at(i);
                    t.accumulate(b.id, gb);
                }
            } else {
                const std::size_t r = ta2.rows(), c = ta2.cols();
                if (t.requires_grad(a)) {
                    Tensor ga(ta2.shape());
                    for (std::size_t i = 0; i < r; ++i)
                        for (std::size_t j = 0; j < c; ++j) ga.at(i, j) = g.at(i, j) * tb2.at(j);
                    t.accumulate(a.id, ga);
                }
                if (t.requires_grad(b)) {
                    Tensor gb(tb2.shape());
                    for (std::size_t j = 0; j < c; ++j) {
                        double s = 0.0;
                        for (std::size_t i = 0; i < r; ++i) s += g.at(i, j) * ta2.at(i, j);
                        gb.at(j) = s;
                    }
                    t.accumulate(b.id, gb);
                }
            }
        };
    }
    return res;
}

Var Tape::scalar_multiply(Var a, double c) {
    Tensor out = value(a);
    for (std::size_t i = 0; i < out.size(); ++i) out.at(i) *= c;
    Var res = push(std::move(out), requires_grad(a));
    if (node(res).requires_grad) {
        node(res).backprop = [a, c, self = res.id](Tape& t) {
            const Tensor& g = t.nodes_[self].grad;
            Tensor ga(g.shape());
            for (std::size_t i = 0; i < ga.size(); ++i) ga.at(i) = g.at(i) * c;
            t.accumulate(a.id, ga);
        };
    }
    return res;
}

Var Tape::matmul(Var a, Var b) {
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    require(ta.rank() == 2 && tb.rank() == 2 && ta.cols() == tb.rows(),
            "matmul: shapes " + ta.shape_str() + " vs " + tb.shape_str());
    const std::size_t m = ta.rows(), k = ta.cols(), n = tb.cols();
    Tensor out = Tensor::matrix(m, n);
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = ta.data() + i * k;
        double* orow = out.data() + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = arow[p];
            if (av == 0.0) continue;
            const double* brow = tb.data() + p * n;
            for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    }
    Var res = push(std::move(out), requires_grad(a) || requires_grad(b));
    if (node(res).requires_grad) {
        node(res).backprop = [a, b, self = res.id, m, k, n](Tape& t) {
            const Tensor& g = t.nodes_[self].grad;
            const Tensor& ta2 = t.value(a);
            const Tensor& tb2 = t.value(b);
            if (t.requires_grad(a)) {
                // dA = G * B^T
                Tensor ga = Tensor::matrix(m, k);
                for (std::size_t i = 0; i < m; ++i) {
                    const double* grow = g.data() + i * n;
                    double* garow = ga.data() + i * k;
                    for (std::size_t p = 0; p < k; ++p) {
                        const double* brow = tb2.data() + p * n;
                        double s = 0.0;
                        for (std::size_t j = 0; j < n; ++j) s += grow[j] * brow[j];
                        garow[p] = s;
                    }
                }
                t.accumulate(a.id, ga);
            }
            if (t.requires_grad(b)) {
                // dB = A^T * G
                Tensor gb = Tensor::matrix(k, n);
                for (std::size_t i = 0; i < m; ++i) {
                    const double* arow = ta2.data() + i * k;
                    const double* grow = g.data() + i * n;
                    for (std::size_t p = 0; p < k; ++p) {
                        const double av = arow[p];
                        if (av == 0.0) continue;
                        double* gbrow = gb.data() + p * n;
                        for (std::size_t j = 0; j < n; ++j) gbrow[j] += av * grow[j];
                    }
                }
                t.accumulate(b.id, gb);
            }
        };
    }
    return res;
}

Var Tape::concat(int axis, const std::vector<Var>& parts) {
    require(!parts.empty(), "concat: no inputs");
    require(axis == 0 || axis == 1, "concat: axis must be 0 or 1");
    bool any_grad = false;
    std::size_t rows_total = 0, cols_total = 0;
    const Tensor& first = value(parts[0]);
    require(first.rank() == 2, "concat: rank-2 inputs required");
    for (Var p : parts) {
        const Tensor& tp = value(p);
        require(tp.rank() == 2, "concat: rank-2 inputs required");
        if (axis == 0) {
            require(tp.cols() == first.cols(), "concat: column mismatch");
            rows_total += tp.rows();
        } else {
            require(tp.rows() == first.rows(), "concat: row mismatch");
            cols_total += tp.cols();
        }
        any_grad = any_grad || requires_grad(p);
    }
    Tensor out;
    if (axis == 0) {
        out = Tensor::matrix(rows_total, first.cols());
        std::size_t r0 = 0;
        for (Var p : parts) {
            const Tensor& tp = value(p);
            std::copy(tp.data(), tp.data() + tp.size(), out.data() + r0 * first.cols());
            r0 += tp.rows();
        }
    } else {
        out = Tensor::matrix(first.rows(), cols_total);
        std::size_t c0 = 0;
        for (Var p : parts) {
            const Tensor& tp = value(p);
            for (std::size_t i = 0; i < tp.rows(); ++i)
                std::copy(tp.data() + i * tp.cols(), tp.data() + (i + 1) * tp.cols(),
                          out.data() + i * cols_total + c0);
            c0 += tp.cols();
        }
    }
    Var res = push(std::move(out), any_grad);
    if (node(res).requires_grad) {
        node(res).backprop = [axis, parts, self = res.id](Tape& t) {
            const Tensor& g = t.nodes_[self].grad;
            std::size_t offset = 0;
            for (Var p : parts) {
                const Tensor& tp = t.value(p);
                if (t.requires_grad(p)) {
                    Tensor gp(tp.shape());
                    if (axis == 0) {
                        std::copy(g.data() + offset * tp.cols(),
                                  g.data() + (offset + tp.rows()) * tp.cols(), gp.data());
                    } else {
                        for (std::size_t i = 0; i < tp.rows(); ++i)
                            std::copy(g.data() + i * g.cols() + offset,
                                      g.data() + i * g.cols() + offset + tp.cols(),
                                      gp.data() + i * tp.cols());
                    }
                    t.accumulate(p.id, gp);
                }
                offset += (axis == 0) ? tp.rows() : tp.cols();
            }
        };
    }
    return res;
}

Var Tape::exp(Var a) {
    Tensor out = value(a);
    for (std::size_t i = 0; i < out.size(); ++i) out.at(i) = std::exp(out.at(i));
    Var res = push(std::move(out), requires_grad(a));
    if (node(res).requires_grad) {
        node(res).backprop = [a, self = res.id](Tape& t) {
            const Tensor& g = t.nodes_[self].grad;
            const Tensor& y = t.nodes_[self].value;
            Tensor ga(y.shape());
            for (std::size_t i = 0; i < ga.size(); ++i) ga.at(i) = g.at(i) * y.at(i);
            t.accumulate(a.id, ga);
        };
    }
    return res;
}

Var Tape::log(Var a) {
    Tensor out = value(a);
    for (std::size_t i = 0; i < out.size(); ++i) out.at(i) = std::log(out.at(i));
    Var res = push(std::move(out), requires_grad(a));
    if (node(res).requires_grad) {
        node(res).backprop = [a, self = res.id](Tape& t) {
            const Tensor& g = t.nodes_[self].grad;
            const Tensor& x = t.value(a);
            Tensor ga(x.shape());
            for (std::size_t i = 0; i < ga.size(); ++i) ga.at(i) = g.at(i) / x.at(i);
            t.accumulate(a.id, ga);
        };
    }
    return res;
}

Var Tape::sum(Var a) {
    const Tensor& ta = value(a);
    double s = 0.0;
    for (std::size_t i = 0; i < ta.size(); ++i) s += ta.at(i);
    Var res = push(Tensor::scalar(s), requires_grad(a));
    if (node(res).requires_grad) {
        node(res).backprop = [a, self = res.id](Tape& t) {
            const double g = t.nodes_[self].grad.at(0);
            t.accumulate(a.id, Tensor::filled(t.value(a).shape(), g));
        };
    }
    return res;
}

Var Tape::sum(Var a, int axis) {
    const Tensor& ta = value(a);
    require(ta.rank() == 2 && (axis == 0 || axis == 1), "sum: rank-2 input, axis 0 or 1");
    const std::size_t r = ta.rows(), c = ta.cols();
    Tensor out = (axis == 0) ? Tensor::matrix(1, c) : Tensor::matrix(r, 1);
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out.at(axis == 0 ? j : i) += ta.at(i, j);
    Var res = push(std::move(out), requires_grad(a));
    if (node(res).requires_grad) {
        node(res).backprop = [a, axis, self = res.id](Tape& t) {
            const Tensor& g = t.nodes_[self].grad;
            const Tensor& x = t.value(a);
            Tensor ga(x.shape());
            const std::size_t r2 = x.rows(), c2 = x.cols();
            for (std::size_t i = 0; i < r2; ++i)
                for (std::size_t j = 0; j < c2; ++j)
                    ga.at(i, j) = g.at(axis == 0 ? j : i);
            t.accumulate(a.id, ga);
        };
    }
    return res;
}

Var Tape::mean(Var a) {
    const std::size_t n = value(a).size();
    require(n > 0, "mean of empty tensor");
    return scalar_multiply(sum(a), 1.0 / static_cast<double>(n));
}

Var Tape::mean(Var a, int axis) {
    const Tensor& ta = value(a);
    require(ta.rank() == 2, "mean: rank-2 input");
    const double n = static_cast<double>(axis == 0 ? ta.rows() : ta.cols());
    require(n > 0, "mean over empty axis");
    return scalar_multiply(sum(a, axis), 1.0 / n);
}

Var Tape::max(Var a, int axis) {
    const Tensor& ta = value(a);
    require(ta.rank() == 2 && (axis == 0 || axis == 1), "max: rank-2 input, axis 0 or 1");
    const std::size_t r = ta.rows(), c = ta.cols();
    const std::size_t groups = (axis == 0) ? c : r;
    const std::size_t extent = (axis == 0) ? r : c;
    require(extent > 0, "max over empty axis");
    Tensor out = (axis == 0) ? Tensor::matrix(1, c) : Tensor::matrix(r, 1);
    auto argmax = std::make_shared<std::vector<std::size_t>>(groups, 0);
    for (std::size_t gidx = 0; gidx < groups; ++gidx) {
        double best = -std::numeric_limits<double>::infinity();
        std::size_t best_k = 0;
        for (std::size_t k = 0; k < extent; ++k) {
            const double v = (axis == 0) ? ta.at(k, gidx) : ta.at(gidx, k);
            if (v > best) {
                best = v;
                best_k = k;
            }
        }
        out.at(gidx) = best;
        (*argmax)[gidx] = best_k;
    }
    Var res = push(std::move(out), requires_grad(a));
    if (node(res).requires_grad) {
        node(res).backprop = [a, axis, argmax, self = res.id](Tape& t) {
            const Tensor& g = t.nodes_[self].grad;
            Tensor ga(t.value(a).shape());
            for (std::size_t gidx = 0; gidx < argmax->size(); ++gidx) {
                const std::size_t k = (*argmax)[gidx];
                if (axis == 0)
                    ga.at(k, gidx) = g.at(gidx);
                else
                    ga.at(gidx, k) = g.at(gidx);
            }
            t.accumulate(a.id, ga);
        };
    }
    return res;
}

Var Tape::transpose(Var a) {
    const Tensor& ta = value(a);
    require(ta.rank() == 2, "transpose: rank-2 input");
    const std::size_t r = ta.rows(), c = ta.cols();
    Tensor out = Tensor::matrix(c, r);
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out.at(j, i) = ta.at(i, j);
    Var res = push(std::move(out), requires_grad(a));
    if (node(res).requires_grad) {
        node(res).backprop = [a, self = res.id](Tape& t) {
            const Tensor& g = t.nodes_[self].grad;
            const std::size_t gr = g.rows(), gc = g.cols();
            Tensor ga = Tensor::matrix(gc, gr);
            for (std::size_t i = 0; i < gr; ++i)
                for (std::size_t j = 0; j < gc; ++j) ga.at(j, i) = g.at(i, j);
            t.accumulate(a.id, ga);
        };
    }
    return res;
}

Var Tape::gather_rows(Var a, std::vector<std::size_t> rows) {
    const Tensor& ta = value(a);
    require(ta.rank() == 2, "gather_rows: rank-2 input");
    const std::size_t c = ta.cols();
    Tensor out = Tensor::matrix(rows.size(), c);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        require(rows[i] < ta.rows(), "gather_rows: index out of range");
        std::copy(ta.data() + rows[i] * c, ta.data() + (rows[i] + 1) * c, out.data() + i * c);
    }
    Var res = push(std::move(out), requires_grad(a));
    if (node(res).requires_grad) {
        auto idx = std::make_shared<std::vector<std::size_t>>(std::move(rows));
        node(res).backprop = [a, idx, self = res.id](Tape& t) {
            const Tensor& g = t.nodes_[self].grad;
            Tensor ga(t.value(a).shape());
            const std::size_t c2 = ga.cols();
            for (std::size_t i = 0; i < idx->size(); ++i) {
                double* dst = ga.data() + (*idx)[i] * c2;
                const double* src = g.data() + i * c2;
                for (std::size_t j = 0; j < c2; ++j) dst[j] += src[j];
            }
            t.accumulate(a.id, ga);
        };
    }
    return res;
}

Var Tape::scatter_add_rows(Var a, std::vector<std::size_t> rows, std::size_t n_rows) {
    const Tensor& ta = value(a);
    require(ta.rank() == 2, "scatter_add_rows: rank-2 input");
    require(rows.size() == ta.rows(), "scatter_add_rows: one index per input row");
    const std::size_t c = ta.cols();
    Tensor out = Tensor::matrix(n_rows, c);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        require(rows[i] < n_rows, "scatter_add_rows: index out of range");
        double* dst = out.data() + rows[i] * c;
        const double* src = ta.data() + i * c;
        for (std::size_t j = 0; j < c; ++j) dst[j] += src[j];
    }
    Var res = push(std::move(out), requires_grad(a));
    if (node(res).requires_grad) {
        auto idx = std::make_shared<std::vector<std::size_t>>(std::move(rows));
        node(res).backprop = [a, idx, self = res.id](Tape& t) {
            const Tensor& g = t.nodes_[self].grad;
            const std::size_t c2 = g.cols();
            Tensor ga(t.value(a).shape());
            for (std::size_t i = 0; i < idx->size(); ++i) {
                const double* src = g.data() + (*idx)[i] * c2;
                double* dst = ga.data() + i * c2;
                for (std::size_t j = 0; j < c2; ++j) dst[j] = src[j];
            }
            t.accumulate(a.id, ga);
        };
    }
    return res;
}

Var Tape::relu(Var a) {
    Tensor out = value(a);
    for (std::size_t i = 0; i < out.size(); ++i) out.at(i) = std::max(0.0, out.at(i));
    Var res = push(std::move(out), requires_grad(a));
    if (node(res).requires_grad) {
        node(res).backprop = [a, self = res.id](Tape& t) {
            const Tensor& g = t.nodes_[self].grad;
            const Tensor& x = t.value(a);
            Tensor ga(x.shape());
            for (std::size_t i = 0; i < ga.size(); ++i) ga.at(i) = x.at(i) > 0.0 ? g.at(i) : 0.0;
            t.accumulate(a.id, ga);
        };
    }
    return res;
}

Var Tape::elu(Var a) {
    Tensor out = value(a);
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double x = out.at(i);
        out.at(i) = x > 0.0 ? x : std::expm1(x);
    }
    Var res = push(std::move(out), requires_grad(a));
    if (node(res).requires_grad) {
        node(res).backprop = [a, self = res.id](Tape& t) {
            const Tensor& g = t.nodes_[self].grad;
            const Tensor& x = t.value(a);
            const Tensor& y = t.nodes_[self].value;
            Tensor ga(x.shape());
            for (std::size_t i = 0; i < ga.size(); ++i)
                ga.at(i) = x.at(i) > 0.0 ? g.at(i) : g.at(i) * (y.at(i) + 1.0);
            t.accumulate(a.id, ga);
        };
    }
    return res;
}

Var Tape::leaky_relu(Var a, double negative_slope) {
    Tensor out = value(a);
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double x = out.at(i);
        out.at(i) = x > 0.0 ? x : negative_slope * x;
    }
    Var res = push(std::move(out), requires_grad(a));
    if (node(res).requires_grad) {
        node(res).backprop = [a, negative_slope, self = res.id](Tape& t) {
            const Tensor& g = t.nodes_[self].grad;
            const Tensor& x = t.value(a);
            Tensor ga(x.shape());
            for (std::size_t i = 0; i < ga.size(); ++i)
                ga.at(i) = x.at(i) > 0.0 ? g.at(i) : g.at(i) * negative_slope;
            t.accumulate(a.id, ga);
        };
    }
    return res;
}

Var Tape::scale_rows(Var m, Var s) {
    const Tensor& tm = value(m);
    const Tensor& ts = value(s);
    require(tm.rank() == 2, "scale_rows: rank-2 matrix");
    require(ts.size() == tm.rows(), "scale_rows: one scale per row");
    const std::size_t r = tm.rows(), c = tm.cols();
    Tensor out = tm;
    for (std::size_t i = 0; i < r; ++i) {
        const double f = ts.at(i);
        double* row = out.data() + i * c;
        for (std::size_t j = 0; j < c; ++j) row[j] *= f;
    }
    Var res = push(std::move(out), requires_grad(m) || requires_grad(s));
    if (node(res).requires_grad) {
        node(res).backprop = [m, s, self = res.id](Tape& t) {
            const Tensor& g = t.nodes_[self].grad;
            const Tensor& tm2 = t.value(m);
            const Tensor& ts2 = t.value(s);
            const std::size_t r2 = tm2.rows(), c2 = tm2.cols();
            if (t.requires_grad(m)) {
                Tensor gm(tm2.shape());
                for (std::size_t i = 0; i < r2; ++i) {
                    const double f = ts2.at(i);
                    for (std::size_t j = 0; j < c2; ++j) gm.at(i, j) = g.at(i, j) * f;
                }
                t.accumulate(m.id, gm);
            }
            if (t.requires_grad(s)) {
                Tensor gs(ts2.shape());
                for (std::size_t i = 0; i < r2; ++i) {
                    double acc = 0.0;
                    for (std::size_t j = 0; j < c2; ++j) acc += g.at(i, j) * tm2.at(i, j);
                    gs.at(i) = acc;
                }
                t.accumulate(s.id, gs);
            }
        };
    }
    return res;
}

Var Tape::segment_softmax(Var values, std::vector<std::size_t> segments, std::size_t n_segments) {
    const Tensor& tv = value(values);
    require(tv.size() == segments.size(), "segment_softmax: one segment id per value");
    require(n_segments > 0, "segment_softmax: no segments");
    std::vector<std::size_t> count(n_segments, 0);
    for (std::size_t sid : segments) {
        require(sid < n_segments, "segment_softmax: segment id out of range");
        ++count[sid];
    }
    for (std::size_t sid = 0; sid < n_segments; ++sid) {
        if (count[sid] == 0) throw ShapeError("segment_softmax: empty segment");
    }
    // Max-shift per segment keeps exp in range.
    std::vector<double> seg_max(n_segments, -std::numeric_limits<double>::infinity());
    for (std::size_t i = 0; i < segments.size(); ++i)
        seg_max[segments[i]] = std::max(seg_max[segments[i]], tv.at(i));
    Tensor out(tv.shape());
    std::vector<double> seg_sum(n_segments, 0.0);
    for (std::size_t i = 0; i < segments.size(); ++i) {
        out.at(i) = std::exp(tv.at(i) - seg_max[segments[i]]);
        seg_sum[segments[i]] += out.at(i);
    }
    for (std::size_t i = 0; i < segments.size(); ++i) out.at(i) /= seg_sum[segments[i]];
    Var res = push(std::move(out), requires_grad(values));
    if (node(res).requires_grad) {
        auto seg = std::make_shared<std::vector<std::size_t>>(std::move(segments));
        node(res).backprop = [values, seg, n_segments, self = res.id](Tape& t) {
            const Tensor& g = t.nodes_[self].grad;
            const Tensor& y = t.nodes_[self].value;
            std::vector<double> dot(n_segments, 0.0);
            for (std::size_t i = 0; i < seg->size(); ++i) dot[(*seg)[i]] += g.at(i) * y.at(i);
            Tensor ga(y.shape());
            for (std::size_t i = 0; i < seg->size(); ++i)
                ga.at(i) = y.at(i) * (g.at(i) - dot[(*seg)[i]]);
            t.accumulate(values.id, ga);
        };
    }
    return res;
}

Var Tape::log_softmax_rows(Var a) {
    const Tensor& ta = value(a);
    require(ta.rank() == 2, "log_softmax_rows: rank-2 input");
    const std::size_t r = ta.rows(), c = ta.cols();
    require(c > 0, "log_softmax_rows: empty rows");
    Tensor out(ta.shape());
    for (std::size_t i = 0; i < r; ++i) {
        double m = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < c; ++j) m = std::max(m, ta.at(i, j));
        double lse = 0.0;
        for (std::size_t j = 0; j < c; ++j) lse += std::exp(ta.at(i, j) - m);
        lse = m + std::log(lse);
        for (std::size_t j = 0; j < c; ++j) out.at(i, j) = ta.at(i, j) - lse;
    }
    Var res = push(std::move(out), requires_grad(a));
    if (node(res).requires_grad) {
        node(res).backprop = [a, self = res.id](Tape& t) {
            const Tensor& g = t.nodes_[self].grad;
            const Tensor& y = t.nodes_[self].value;
            const std::size_t r2 = y.rows(), c2 = y.cols();
            Tensor ga(y.shape());
            for (std::size_t i = 0; i < r2; ++i) {
                double gsum = 0.0;
                for (std::size_t j = 0; j < c2; ++j) gsum += g.at(i, j);
                for (std::size_t j = 0; j < c2; ++j)
                    ga.at(i, j) = g.at(i, j) - std::exp(y.at(i, j)) * gsum;
            }
            t.accumulate(a.id, ga);
        };
    }
    return res;
}

void Tape::backward(Var loss) {
    const Tensor& lv = value(loss);
    if (!lv.is_scalar()) {
        throw ShapeError("backward: loss must be scalar, got " + lv.shape_str());
    }
    grad_buffer(loss.id).at(0) = 1.0;
    for (std::int32_t id = loss.id; id >= 0; --id) {
        Node& n = nodes_[static_cast<std::size_t>(id)];
        if (n.requires_grad && n.backprop && !n.grad.empty()) {
            n.backprop(*this);
        }
    }
}

double finite_difference_check(const std::function<Var(Tape&, Var)>& build, const Tensor& x,
                               double eps) {
    if (eps <= 0.0) throw NumericError("finite_difference_check: eps must be positive");
    auto eval = [&](const Tensor& xt) {
        Tape t;
        Var leaf = t.leaf(xt, true);
        Var out = build(t, leaf);
        const Tensor& v = t.value(out);
        if (!v.is_scalar()) throw ShapeError("finite_difference_check: f must be scalar-valued");
        return v.item();
    };
    const double f1 = eval(x);
    const double f2 = eval(x);
    if (f1 != f2) throw NumericError("finite_difference_check: f is not deterministic");

    Tape t;
    Var leaf = t.leaf(x, true);
    Var out = build(t, leaf);
    if (!t.value(out).is_scalar()) throw ShapeError("finite_difference_check: f must be scalar-valued");
    t.backward(out);
    const Tensor g_ad = t.grad(leaf);

    Tensor xp = x;
    double max_err = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double orig = xp.at(i);
        xp.at(i) = orig + eps;
        const double fp = eval(xp);
        xp.at(i) = orig - eps;
        const double fm = eval(xp);
        xp.at(i) = orig;
        const double g_fd = (fp - fm) / (2.0 * eps);
        const double denom = std::max({1.0, std::abs(g_ad.at(i)), std::abs(g_fd)});
        max_err = std::max(max_err, std::abs(g_ad.at(i) - g_fd) / denom);
    }
    return max_err;
}

}  // namespace braingat
