#pragma once

// Reverse-mode autodiff on a linear tape. Ops execute eagerly, record a
// backward closure, and the tape replays closures in reverse insertion
// order, visiting each node once. Every op output is checked for
// non-finite values immediately.
//
// Nodes either own their value or reference an external tensor
// (leaf_ref), which lets model parameters be bound without copying.

#include <deque>
#include <functional>
#include <vector>

#include "ldd/tensor.hpp"

namespace ldd {

using Var = int32_t;

class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // --- leaves ---
    Var leaf(Tensor value, bool requires_grad = false);
    // The referenced tensor must outlive the tape (model parameters).
    Var leaf_ref(const Tensor* value, bool requires_grad);
    Var constant(Tensor value) { return leaf(std::move(value), false); }
    Var constant_scalar(double v) { return leaf(Tensor::scalar(v), false); }

    // --- elementwise / scalar ---
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);
    Var scale(Var a, double c);
    Var add_rowvec(Var m, Var v);  // [n x d] + [d] broadcast over rows
    Var relu(Var a);
    Var tanh_op(Var a);
    Var exp_op(Var a);
    Var sqrt_op(Var a);  // gradient defined as 0 at 0

    // --- structural ---
    Var reshape(Var a, std::vector<int> shape);
    Var flatten(Var a);
    Var concat(const std::vector<Var>& parts);              // rank-1 parts
    Var concat_cols(Var a, Var b);                          // [n x p],[n x q] -> [n x (p+q)]
    Var stack_rows(const std::vector<Var>& rows);           // k vectors [d] -> [k x d]
    Var gather_rows(Var m, const std::vector<int>& rows);   // row id -1 -> zero row
    Var tile_rows(Var v, int n);                            // [d] -> [n x d]
    Var transpose(Var m);                                   // [n x d] -> [d x n]

    // --- reductions ---
    Var sum_all(Var a);    // -> [1]
    Var mean_all(Var a);   // -> [1]
    Var mean_rows(Var a);  // [n x d] -> [d], mean over rows

    // --- linear algebra ---
    Var matmul(Var a, Var b);     // [m x k][k x n]; [k][k x n]; [m x k][k]
    Var matmul_nt(Var a, Var b);  // A * B^T: [m x k][n x k] -> [m x n]; [k][n x k] -> [n]

    // --- nn primitives ---
    Var softmax(Var logits);  // over last axis
    Var embedding_lookup(Var table, const std::vector<int>& ids);  // [V x d] -> [n x d]
    // per-row negative log likelihood: [B x C] + B targets -> [B]; [C] + 1 target -> [1]
    Var cross_entropy(Var logits, const std::vector<int>& targets);
    Var entropy(Var logits);  // per-row entropy of softmax(logits)
    Var squared_l2(Var a, Var b);  // sum of squared differences -> [1]

    // --- engine ---
    void backward(Var scalar_output);
    const Tensor& val(Var v) const;
    const Tensor& grad(Var v);  // zeros if the node was never reached
    bool grad_live(Var v) const { return nodes_[static_cast<size_t>(v)].grad_live; }
    size_t size() const { return nodes_.size(); }
    void clear();

private:
    struct Node {
        Tensor value;
        const Tensor* ref = nullptr;
        Tensor grad;
        bool requires_grad = false;
        bool grad_live = false;
        std::function<void(Tape&)> back;
    };

    Var push(Tensor value, bool requires_grad, std::function<void(Tape&)> back, const char* op);
    Tensor& grad_buf(Var v);
    bool needs_grad(Var v) const { return nodes_[static_cast<size_t>(v)].requires_grad; }
    const Node& node(Var v) const { return nodes_[static_cast<size_t>(v)]; }

    // deque: references returned by val()/grad() stay valid as ops append
    std::deque<Node> nodes_;
};

}  // namespace ldd
