#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <string>
#include <vector>

#include "rltopic/random.hpp"
#include "rltopic/tensor.hpp"

namespace rltopic {

/// A trainable tensor together with its accumulated gradient.
struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;
    bool decay = true;  // participates in decoupled weight decay

    Parameter() = default;
    Parameter(std::string n, Tensor v, bool d = true)
        : name(std::move(n)), value(std::move(v)), grad(value.shape()), decay(d) {}

    void zero_grad() { grad = Tensor(value.shape()); }
};

class Tape;

/// Handle to a node recorded on a Tape.
class Var {
   public:
    Var() = default;
    const Tensor& value() const;
    std::size_t id() const { return id_; }
    Tape* tape() const { return tape_; }
    bool valid() const { return tape_ != nullptr; }

   private:
    friend class Tape;
    Var(Tape* t, std::size_t id) : tape_(t), id_(id) {}
    Tape* tape_ = nullptr;
    std::size_t id_ = 0;
};

/// Records one forward pass in execution (hence topological) order and runs
/// reverse-mode differentiation over it.
class Tape {
   public:
    using BackwardFn = std::function<void(Tape&, std::size_t out)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var constant(Tensor value);
    Var variable(Tensor value);
    Var parameter(Parameter& p);

    const Tensor& value(Var v) const { return nodes_[v.id()].value; }
    bool requires_grad(Var v) const { return nodes_[v.id()].requires_grad; }
    // Gradient of the last backward() target w.r.t. v; zeros if v was unused.
    Tensor grad(Var v) const;
    std::size_t size() const { return nodes_.size(); }

    // Seeds d(loss)/d(loss) = 1, visits every node once in reverse order and
    // adds parameter-node gradients into Parameter::grad. `loss` must hold a
    // single element.
    void backward(Var loss);

    // Used by op implementations.
    Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn fn, const char* op);
    const Tensor& out_grad(std::size_t out) const { return nodes_[out].grad; }
    const Tensor& value_of(std::size_t id) const { return nodes_[id].value; }
    // Gradient accumulator for an input, or nullptr when it needs none.
    Tensor* grad_slot(Var input);

   private:
    struct Node {
        Tensor value;
        Tensor grad;
        bool requires_grad = false;
        BackwardFn backward;
        Parameter* param = nullptr;
    };
    std::vector<Node> nodes_;
};

/// Differentiable primitives. All inputs must live on the same tape.
/// Shapes: "matrix" means rank 2; row-wise ops also accept rank-1 tensors as a
/// single row.
namespace ops {

Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var add_row(Var a, Var row);  // a[m x n] + row[n] broadcast over rows
Var mul_row(Var a, Var row);  // a[m x n] * row[n] broadcast over rows
Var scale(Var a, real c);
Var add_scalar(Var a, real c);
Var neg(Var a);
Var exp(Var a);
Var log(Var a);
Var square(Var a);
Var gelu(Var a);
Var clamp(Var a, real lo, real hi);
Var layer_norm(Var x, Var gain, Var bias, real eps = 1e-5);
// drop_prob in [0, 1); surviving entries scaled by 1/(1 - drop_prob).
// Identity (the same Var) when !train or drop_prob == 0.
Var dropout(Var x, real drop_prob, RandomSource& rng, bool train);
Var softmax(Var x);
Var log_softmax(Var x);
Var sum(Var x);
Var mean(Var x);
Var sum_rows(Var x);  // [m x n] -> [m]
Var detach(Var x);

}  // namespace ops

real gelu_value(real x);

}  // namespace rltopic
