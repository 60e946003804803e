#pragma once

// Reverse-mode automatic differentiation on an append-only tape.
//
// A Tape owns a list of nodes; every operation appends one node whose parents
// are earlier nodes, so the list is topologically ordered by construction.
// backward() walks the list in reverse and accumulates adjoints.
//
// A Tape is confined to a single thread for its lifetime.  Cross-sample
// parallelism is achieved with one tape per sample (see parallel.hpp).

#include <functional>
#include <vector>

#include "flan/matrix.hpp"

namespace flan {

using NodeId = int;

class Tape {
public:
    enum class Op {
        Leaf,
        Add,
        Sub,
        MatMul,
        Scale,
        Tanh,
        Relu,
        Sigmoid,
        Sum,
        Concat,
        Pick,
        SoftmaxXent,
        LogisticXent,
    };

    // Registers an input (parameter or data) node.  Leaves receive gradients.
    NodeId leaf(Matrix value);

    NodeId add(NodeId a, NodeId b);
    NodeId sub(NodeId a, NodeId b);
    NodeId matmul(NodeId a, NodeId b);
    NodeId scale(NodeId a, double c);
    NodeId tanh_act(NodeId a);
    NodeId relu(NodeId a);
    NodeId sigmoid(NodeId a);
    // Sum of all entries, yielding a 1x1 scalar node.
    NodeId sum_all(NodeId a);
    // Column-wise concatenation of two row-aligned matrices.
    NodeId concat(NodeId a, NodeId b);
    // Extracts column j of a 1xC row vector as a 1x1 scalar node.
    NodeId pick(NodeId a, int col);
    // Cross-entropy of softmax(logits) against a class index; logits are 1xC.
    // Computed as logsumexp(logits) - logits[target] for stability.
    NodeId softmax_xent(NodeId logits, int target);
    // Binary cross-entropy on a single logit (1x1) against label y in {0,1},
    // in the overflow-safe form max(s,0) - s*y + log(1 + exp(-|s|)).
    NodeId logistic_xent(NodeId logit, double y);

    const Matrix& value(NodeId id) const { return nodes_[id].value; }
    const Matrix& grad(NodeId id) const { return nodes_[id].grad; }

    // Seeds the adjoint of `loss` with 1 and back-propagates through every
    // node.  `loss` must be a 1x1 scalar node.
    void backward(NodeId loss);

    int size() const { return static_cast<int>(nodes_.size()); }

private:
    struct Node {
        Op op;
        NodeId a = -1;
        NodeId b = -1;
        double c = 0.0;   // Scale factor / LogisticXent label
        int index = 0;    // Pick column / SoftmaxXent target class
        Matrix value;
        Matrix grad;
    };

    NodeId push(Node n);
    const Matrix& val(NodeId id) const;

    std::vector<Node> nodes_;
};

// Central-difference gradient oracle: (f(x+he_i) - f(x-he_i)) / 2h per entry.
// Used by the test suite to cross-check backward(); also usable on any scalar
// function of a matrix.
Matrix finite_diff_gradient(const std::function<double(const Matrix&)>& f,
                            const Matrix& x, double h = 1e-5);

}  // namespace flan
