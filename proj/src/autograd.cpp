#include "rltopic/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "rltopic/errors.hpp"
#include "rltopic/kernels.hpp"

namespace rltopic {

const Tensor& Var::value() const { return tape_->value(*this); }

Var Tape::constant(Tensor value) { return record(std::move(value), {}, nullptr, "constant"); }

Var Tape::variable(Tensor value) {
    Var v = record(std::move(value), {}, nullptr, "variable");
    nodes_[v.id()].requires_grad = true;
    return v;
}

Var Tape::parameter(Parameter& p) {
    Var v = record(p.value, {}, nullptr, p.name.c_str());
    nodes_[v.id()].requires_grad = true;
    nodes_[v.id()].param = &p;
    return v;
}

Var Tape::record(Tensor value, std::initializer_list<Var> inputs, BackwardFn fn, const char* op) {
    if (!value.all_finite()) {
        throw NumericalError(std::string("non-finite value produced by '") + op + "'");
    }
    Node node;
    node.value = std::move(value);
    for (const Var& in : inputs) {
        if (in.tape() != this) throw ConfigError(std::string("'") + op + "': input from another tape");
        node.requires_grad = node.requires_grad || nodes_[in.id()].requires_grad;
    }
    if (node.requires_grad) node.backward = std::move(fn);
    nodes_.push_back(std::move(node));
    return Var(this, nodes_.size() - 1);
}

Tensor* Tape::grad_slot(Var input) {
    Node& n = nodes_[input.id()];
    if (!n.requires_grad) return nullptr;
    if (n.grad.empty() && !n.value.empty()) n.grad = Tensor(n.value.shape());
    return &n.grad;
}

Tensor Tape::grad(Var v) const {
    const Node& n = nodes_[v.id()];
    if (n.grad.empty()) return Tensor(n.value.shape());
    return n.grad;
}

void Tape::backward(Var loss) {
    if (loss.tape() != this) throw ConfigError("backward: loss from another tape");
    if (value(loss).size() != 1) {
        throw ConfigError("backward: loss must be scalar, got shape " +
                          shape_string(value(loss).shape()));
    }
    for (Node& n : nodes_) n.grad = Tensor();
    if (!nodes_[loss.id()].requires_grad) return;
    nodes_[loss.id()].grad = Tensor(value(loss).shape(), 1.0);
    for (std::size_t i = loss.id() + 1; i-- > 0;) {
        Node& n = nodes_[i];
        if (n.grad.empty()) continue;
        if (n.backward) n.backward(*this, i);
        if (n.param) {
            auto g = n.param->grad.data();
            auto src = n.grad.data();
            for (std::size_t k = 0; k < g.size(); ++k) g[k] += src[k];
        }
    }
}

real gelu_value(real x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); }

namespace ops {

namespace {

void require(bool cond, const char* op, const std::string& what) {
    if (!cond) throw ConfigError(std::string(op) + ": " + what);
}

void require_same_shape(Var a, Var b, const char* op) {
    require(a.value().same_shape(b.value()), op,
            "shape mismatch " + shape_string(a.value().shape()) + " vs " +
                shape_string(b.value().shape()));
}

// rows/cols of a row-wise operand (rank-1 is one row)
std::pair<std::size_t, std::size_t> row_layout(const Tensor& t) {
    if (t.rank() == 0) return {1, 1};
    return {t.rows(), t.cols()};
}

template <typename F, typename DF>
Var unary(Var a, const char* op, F f, DF df) {
    const Tensor& x = a.value();
    Tensor y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
    return a.tape()->record(std::move(y), {a}, [a, df](Tape& t, std::size_t out) {
        Tensor* ga = t.grad_slot(a);
        if (!ga) return;
        const Tensor& g = t.out_grad(out);
        const Tensor& x = a.value();
        for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * df(x[i]);
    }, op);
}

}  // namespace

Var matmul(Var a, Var b) {
    const Tensor& A = a.value();
    const Tensor& B = b.value();
    require(A.rank() == 2 && B.rank() == 2, "matmul", "operands must be matrices");
    require(A.cols() == B.rows(), "matmul",
            "inner dimension mismatch " + shape_string(A.shape()) + " x " + shape_string(B.shape()));
    const std::size_t m = A.rows(), k = A.cols(), n = B.cols();
    Tensor C({m, n});
    kernels::matmul(A.ptr(), B.ptr(), C.ptr(), m, k, n);
    return a.tape()->record(std::move(C), {a, b}, [a, b, m, k, n](Tape& t, std::size_t out) {
        const Tensor& g = t.out_grad(out);
        if (Tensor* ga = t.grad_slot(a)) kernels::matmul_nt_acc(g.ptr(), b.value().ptr(), ga->ptr(), m, n, k);
        if (Tensor* gb = t.grad_slot(b)) kernels::matmul_tn_acc(a.value().ptr(), g.ptr(), gb->ptr(), m, k, n);
    }, "matmul");
}

Var add(Var a, Var b) {
    require_same_shape(a, b, "add");
    Tensor y = a.value();
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += b.value()[i];
    return a.tape()->record(std::move(y), {a, b}, [a, b](Tape& t, std::size_t out) {
        const Tensor& g = t.out_grad(out);
        for (Var v : {a, b}) {
            if (Tensor* gv = t.grad_slot(v)) {
                for (std::size_t i = 0; i < g.size(); ++i) (*gv)[i] += g[i];
            }
        }
    }, "add");
}

Var sub(Var a, Var b) {
    require_same_shape(a, b, "sub");
    Tensor y = a.value();
    for (std::size_t i = 0; i < y.size(); ++i) y[i] -= b.value()[i];
    return a.tape()->record(std::move(y), {a, b}, [a, b](Tape& t, std::size_t out) {
        const Tensor& g = t.out_grad(out);
        if (Tensor* ga = t.grad_slot(a)) {
            for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i];
        }
        if (Tensor* gb = t.grad_slot(b)) {
            for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] -= g[i];
        }
    }, "sub");
}

Var mul(Var a, Var b) {
    require_same_shape(a, b, "mul");
    Tensor y = a.value();
    for (std::size_t i = 0; i < y.size(); ++i) y[i] *= b.value()[i];
    return a.tape()->record(std::move(y), {a, b}, [a, b](Tape& t, std::size_t out) {
        const Tensor& g = t.out_grad(out);
        if (Tensor* ga = t.grad_slot(a)) {
            for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * b.value()[i];
        }
        if (Tensor* gb = t.grad_slot(b)) {
            for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] += g[i] * a.value()[i];
        }
    }, "mul");
}

Var add_row(Var a, Var row) {
    const auto [m, n] = row_layout(a.value());
    require(row.value().rank() == 1 && row.value().size() == n, "add_row",
            "row length must equal last dimension " + std::to_string(n));
    Tensor y = a.value();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) y[i * n + j] += row.value()[j];
    return a.tape()->record(std::move(y), {a, row}, [a, row, m, n](Tape& t, std::size_t out) {
        const Tensor& g = t.out_grad(out);
        if (Tensor* ga = t.grad_slot(a)) {
            for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i];
        }
        if (Tensor* gr = t.grad_slot(row)) {
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) (*gr)[j] += g[i * n + j];
        }
    }, "add_row");
}

Var mul_row(Var a, Var row) {
    const auto [m, n] = row_layout(a.value());
    require(row.value().rank() == 1 && row.value().size() == n, "mul_row",
            "row length must equal last dimension " + std::to_string(n));
    Tensor y = a.value();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) y[i * n + j] *= row.value()[j];
    return a.tape()->record(std::move(y), {a, row}, [a, row, m, n](Tape& t, std::size_t out) {
        const Tensor& g = t.out_grad(out);
        const Tensor& av = a.value();
        const Tensor& rv = row.value();
        if (Tensor* ga = t.grad_slot(a)) {
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) (*ga)[i * n + j] += g[i * n + j] * rv[j];
        }
        if (Tensor* gr = t.grad_slot(row)) {
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) (*gr)[j] += g[i * n + j] * av[i * n + j];
        }
    }, "mul_row");
}

Var scale(Var a, real c) {
    return unary(a, "scale", [c](real x) { return c * x; }, [c](real) { return c; });
}

Var add_scalar(Var a, real c) {
    return unary(a, "add_scalar", [c](real x) { return x + c; }, [](real) { return 1.0; });
}

Var neg(Var a) {
    return unary(a, "neg", [](real x) { return -x; }, [](real) { return -1.0; });
}

Var exp(Var a) {
    return unary(a, "exp", [](real x) { return std::exp(x); }, [](real x) { return std::exp(x); });
}

Var log(Var a) {
    return unary(a, "log", [](real x) { return std::log(x); }, [](real x) { return 1.0 / x; });
}

Var square(Var a) {
    return unary(a, "square", [](real x) { return x * x; }, [](real x) { return 2.0 * x; });
}

Var gelu(Var a) {
    return unary(a, "gelu", gelu_value, [](real x) {
        const real cdf = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
        const real pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
        return cdf + x * pdf;
    });
}

Var clamp(Var a, real lo, real hi) {
    require(lo <= hi, "clamp", "lo > hi");
    return unary(a, "clamp", [lo, hi](real x) { return std::clamp(x, lo, hi); },
                 [lo, hi](real x) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

Var layer_norm(Var x, Var gain, Var bias, real eps) {
    const auto [m, n] = row_layout(x.value());
    require(gain.value().rank() == 1 && gain.value().size() == n, "layer_norm",
            "gain length must equal last dimension " + std::to_string(n));
    require(bias.value().rank() == 1 && bias.value().size() == n, "layer_norm",
            "bias length must equal last dimension " + std::to_string(n));
    const Tensor& X = x.value();
    const Tensor& G = gain.value();
    const Tensor& B = bias.value();
    Tensor xhat(X.shape());
    std::vector<real> inv_std(m);
    Tensor y(X.shape());
    for (std::size_t i = 0; i < m; ++i) {
        const real* row = X.ptr() + i * n;
        real mean = 0;
        for (std::size_t j = 0; j < n; ++j) mean += row[j];
        mean /= static_cast<real>(n);
        real var = 0;
        for (std::size_t j = 0; j < n; ++j) var += (row[j] - mean) * (row[j] - mean);
        var /= static_cast<real>(n);
        inv_std[i] = 1.0 / std::sqrt(var + eps);
        for (std::size_t j = 0; j < n; ++j) {
            const real h = (row[j] - mean) * inv_std[i];
            xhat[i * n + j] = h;
            y[i * n + j] = h * G[j] + B[j];
        }
    }
    return x.tape()->record(
        std::move(y), {x, gain, bias},
        [x, gain, bias, m, n, xhat = std::move(xhat), inv_std = std::move(inv_std)](
            Tape& t, std::size_t out) {
            const Tensor& g = t.out_grad(out);
            const Tensor& G = gain.value();
            if (Tensor* gg = t.grad_slot(gain)) {
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < n; ++j) (*gg)[j] += g[i * n + j] * xhat[i * n + j];
            }
            if (Tensor* gb = t.grad_slot(bias)) {
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < n; ++j) (*gb)[j] += g[i * n + j];
            }
            if (Tensor* gx = t.grad_slot(x)) {
                const real inv_n = 1.0 / static_cast<real>(n);
                for (std::size_t i = 0; i < m; ++i) {
                    real mean_d = 0, mean_dh = 0;
                    for (std::size_t j = 0; j < n; ++j) {
                        const real d = g[i * n + j] * G[j];
                        mean_d += d;
                        mean_dh += d * xhat[i * n + j];
                    }
                    mean_d *= inv_n;
                    mean_dh *= inv_n;
                    for (std::size_t j = 0; j < n; ++j) {
                        const real d = g[i * n + j] * G[j];
                        (*gx)[i * n + j] += inv_std[i] * (d - mean_d - xhat[i * n + j] * mean_dh);
                    }
                }
            }
        },
        "layer_norm");
}

Var dropout(Var x, real drop_prob, RandomSource& rng, bool train) {
    require(drop_prob >= 0.0 && drop_prob < 1.0, "dropout", "drop probability must be in [0, 1)");
    if (!train || drop_prob == 0.0) return x;
    const real keep_scale = 1.0 / (1.0 - drop_prob);
    Tensor mask(x.value().shape());
    for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = rng.bernoulli(drop_prob) ? 0.0 : keep_scale;
    Tensor y = x.value();
    for (std::size_t i = 0; i < y.size(); ++i) y[i] *= mask[i];
    return x.tape()->record(std::move(y), {x}, [x, mask = std::move(mask)](Tape& t, std::size_t out) {
        Tensor* gx = t.grad_slot(x);
        if (!gx) return;
        const Tensor& g = t.out_grad(out);
        for (std::size_t i = 0; i < g.size(); ++i) (*gx)[i] += g[i] * mask[i];
    }, "dropout");
}

Var softmax(Var x) {
    const auto [m, n] = row_layout(x.value());
    const Tensor& X = x.value();
    Tensor y(X.shape());
    for (std::size_t i = 0; i < m; ++i) {
        const real* row = X.ptr() + i * n;
        const real mx = *std::max_element(row, row + n);
        real z = 0;
        for (std::size_t j = 0; j < n; ++j) z += (y[i * n + j] = std::exp(row[j] - mx));
        for (std::size_t j = 0; j < n; ++j) y[i * n + j] /= z;
    }
    Var out_var = x.tape()->record(y, {x}, [x, m, n, y](Tape& t, std::size_t out) {
        Tensor* gx = t.grad_slot(x);
        if (!gx) return;
        const Tensor& g = t.out_grad(out);
        for (std::size_t i = 0; i < m; ++i) {
            real dot = 0;
            for (std::size_t j = 0; j < n; ++j) dot += g[i * n + j] * y[i * n + j];
            for (std::size_t j = 0; j < n; ++j) (*gx)[i * n + j] += y[i * n + j] * (g[i * n + j] - dot);
        }
    }, "softmax");
    return out_var;
}

Var log_softmax(Var x) {
    const auto [m, n] = row_layout(x.value());
    const Tensor& X = x.value();
    Tensor y(X.shape());
    for (std::size_t i = 0; i < m; ++i) {
        const real* row = X.ptr() + i * n;
        const real mx = *std::max_element(row, row + n);
        real z = 0;
        for (std::size_t j = 0; j < n; ++j) z += std::exp(row[j] - mx);
        const real lse = mx + std::log(z);
        for (std::size_t j = 0; j < n; ++j) y[i * n + j] = row[j] - lse;
    }
    Var out_var = x.tape()->record(std::move(y), {x}, [x, m, n](Tape& t, std::size_t out) {
        Tensor* gx = t.grad_slot(x);
        if (!gx) return;
        const Tensor& g = t.out_grad(out);
        const Tensor& logp = t.value_of(out);
        for (std::size_t i = 0; i < m; ++i) {
            real gsum = 0;
            for (std::size_t j = 0; j < n; ++j) gsum += g[i * n + j];
            for (std::size_t j = 0; j < n; ++j)
                (*gx)[i * n + j] += g[i * n + j] - std::exp(logp[i * n + j]) * gsum;
        }
    }, "log_softmax");
    return out_var;
}

Var sum(Var x) {
    real s = 0;
    for (real v : x.value().data()) s += v;
    return x.tape()->record(Tensor::scalar(s), {x}, [x](Tape& t, std::size_t out) {
        Tensor* gx = t.grad_slot(x);
        if (!gx) return;
        const real g = t.out_grad(out)[0];
        for (real& v : gx->data()) v += g;
    }, "sum");
}

Var mean(Var x) {
    const std::size_t n = x.value().size();
    require(n > 0, "mean", "empty tensor");
    return scale(sum(x), 1.0 / static_cast<real>(n));
}

Var sum_rows(Var x) {
    const auto [m, n] = row_layout(x.value());
    Tensor y({m});
    for (std::size_t i = 0; i < m; ++i) {
        real s = 0;
        for (std::size_t j = 0; j < n; ++j) s += x.value()[i * n + j];
        y[i] = s;
    }
    return x.tape()->record(std::move(y), {x}, [x, m, n](Tape& t, std::size_t out) {
        Tensor* gx = t.grad_slot(x);
        if (!gx) return;
        const Tensor& g = t.out_grad(out);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) (*gx)[i * n + j] += g[i];
    }, "sum_rows");
}

Var detach(Var x) { return x.tape()->constant(x.value()); }

}  // namespace ops

}  // namespace rltopic
