#include "flan/tape.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace flan {

namespace {

double stable_sigmoid(double s) {
    if (s >= 0.0) {
        return 1.0 / (1.0 + std::exp(-s));
    }
    const double e = std::exp(s);
    return e / (1.0 + e);
}

}  // namespace

NodeId Tape::push(Node n) {
    n.grad = Matrix::zeros(n.value.rows, n.value.cols);
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size()) - 1;
}

const Matrix& Tape::val(NodeId id) const {
    if (id < 0 || id >= static_cast<NodeId>(nodes_.size())) {
        throw std::invalid_argument("Tape: node id out of range");
    }
    return nodes_[id].value;
}

NodeId Tape::leaf(Matrix value) {
    Node n;
    n.op = Op::Leaf;
    n.value = std::move(value);
    return push(std::move(n));
}

NodeId Tape::add(NodeId a, NodeId b) {
    Node n;
    n.op = Op::Add;
    n.a = a;
    n.b = b;
    n.value = flan::add(val(a), val(b));
    return push(std::move(n));
}

NodeId Tape::sub(NodeId a, NodeId b) {
    Node n;
    n.op = Op::Sub;
    n.a = a;
    n.b = b;
    n.value = flan::sub(val(a), val(b));
    return push(std::move(n));
}

NodeId Tape::matmul(NodeId a, NodeId b) {
    Node n;
    n.op = Op::MatMul;
    n.a = a;
    n.b = b;
    n.value = flan::matmul(val(a), val(b));
    return push(std::move(n));
}

NodeId Tape::scale(NodeId a, double c) {
    Node n;
    n.op = Op::Scale;
    n.a = a;
    n.c = c;
    n.value = flan::scale(val(a), c);
    return push(std::move(n));
}

NodeId Tape::tanh_act(NodeId a) {
    Node n;
    n.op = Op::Tanh;
    n.a = a;
    n.value = val(a);
    for (auto& x : n.value.data) x = std::tanh(x);
    return push(std::move(n));
}

NodeId Tape::relu(NodeId a) {
    Node n;
    n.op = Op::Relu;
    n.a = a;
    n.value = val(a);
    for (auto& x : n.value.data) x = x > 0.0 ? x : 0.0;
    return push(std::move(n));
}

NodeId Tape::sigmoid(NodeId a) {
    Node n;
    n.op = Op::Sigmoid;
    n.a = a;
    n.value = val(a);
    for (auto& x : n.value.data) x = stable_sigmoid(x);
    return push(std::move(n));
}

NodeId Tape::sum_all(NodeId a) {
    Node n;
    n.op = Op::Sum;
    n.a = a;
    n.value = Matrix::scalar(flan::sum(val(a)));
    return push(std::move(n));
}

NodeId Tape::concat(NodeId a, NodeId b) {
    Node n;
    n.op = Op::Concat;
    n.a = a;
    n.b = b;
    n.value = concat_cols(val(a), val(b));
    return push(std::move(n));
}

NodeId Tape::pick(NodeId a, int col) {
    const Matrix& v = val(a);
    if (v.rows != 1 || col < 0 || col >= v.cols) {
        std::ostringstream os;
        os << "Tape::pick: column " << col << " out of range for " << v.shape_str();
        throw std::invalid_argument(os.str());
    }
    Node n;
    n.op = Op::Pick;
    n.a = a;
    n.index = col;
    n.value = Matrix::scalar(v.at(0, col));
    return push(std::move(n));
}

NodeId Tape::softmax_xent(NodeId logits, int target) {
    const Matrix& v = val(logits);
    if (v.rows != 1 || target < 0 || target >= v.cols) {
        std::ostringstream os;
        os << "Tape::softmax_xent: target class " << target << " out of range for "
           << v.shape_str();
        throw std::invalid_argument(os.str());
    }
    double mx = v.data[0];
    for (double x : v.data) mx = std::max(mx, x);
    double denom = 0.0;
    for (double x : v.data) denom += std::exp(x - mx);
    const double loss = mx + std::log(denom) - v.at(0, target);

    Node n;
    n.op = Op::SoftmaxXent;
    n.a = logits;
    n.index = target;
    n.value = Matrix::scalar(loss);
    return push(std::move(n));
}

NodeId Tape::logistic_xent(NodeId logit, double y) {
    const Matrix& v = val(logit);
    if (v.rows != 1 || v.cols != 1) {
        throw std::invalid_argument("Tape::logistic_xent: logit must be 1x1, got " +
                                    v.shape_str());
    }
    if (y != 0.0 && y != 1.0) {
        throw std::invalid_argument("Tape::logistic_xent: label must be 0 or 1");
    }
    const double s = v.at(0, 0);
    const double loss = std::max(s, 0.0) - s * y + std::log1p(std::exp(-std::fabs(s)));

    Node n;
    n.op = Op::LogisticXent;
    n.a = logit;
    n.c = y;
    n.value = Matrix::scalar(loss);
    return push(std::move(n));
}

void Tape::backward(NodeId loss) {
    const Matrix& lv = val(loss);
    if (lv.rows != 1 || lv.cols != 1) {
        throw std::invalid_argument("Tape::backward: loss node must be 1x1 scalar, got " +
                                    lv.shape_str());
    }
    for (auto& n : nodes_) n.grad.fill(0.0);
    nodes_[loss].grad.at(0, 0) = 1.0;

    for (NodeId id = loss; id >= 0; --id) {
        Node& n = nodes_[id];
        const Matrix& g = n.grad;
        switch (n.op) {
            case Op::Leaf:
                break;
            case Op::Add: {
                Matrix& ga = nodes_[n.a].grad;
                Matrix& gb = nodes_[n.b].grad;
                for (std::size_t i = 0; i < g.data.size(); ++i) {
                    ga.data[i] += g.data[i];
                    gb.data[i] += g.data[i];
                }
                break;
            }
            case Op::Sub: {
                Matrix& ga = nodes_[n.a].grad;
                Matrix& gb = nodes_[n.b].grad;
                for (std::size_t i = 0; i < g.data.size(); ++i) {
                    ga.data[i] += g.data[i];
                    gb.data[i] -= g.data[i];
                }
                break;
            }
            case Op::MatMul: {
                const Matrix& a = nodes_[n.a].value;
                const Matrix& b = nodes_[n.b].value;
                const Matrix da = flan::matmul(g, transpose(b));
                const Matrix db = flan::matmul(transpose(a), g);
                Matrix& ga = nodes_[n.a].grad;
                Matrix& gb = nodes_[n.b].grad;
                for (std::size_t i = 0; i < da.data.size(); ++i) ga.data[i] += da.data[i];
                for (std::size_t i = 0; i < db.data.size(); ++i) gb.data[i] += db.data[i];
                break;
            }
            case Op::Scale: {
                Matrix& ga = nodes_[n.a].grad;
                for (std::size_t i = 0; i < g.data.size(); ++i)
                    ga.data[i] += n.c * g.data[i];
                break;
            }
            case Op::Tanh: {
                Matrix& ga = nodes_[n.a].grad;
                for (std::size_t i = 0; i < g.data.size(); ++i) {
                    const double t = n.value.data[i];
                    ga.data[i] += g.data[i] * (1.0 - t * t);
                }
                break;
            }
            case Op::Relu: {
                const Matrix& a = nodes_[n.a].value;
                Matrix& ga = nodes_[n.a].grad;
                for (std::size_t i = 0; i < g.data.size(); ++i) {
                    if (a.data[i] > 0.0) ga.data[i] += g.data[i];
                }
                break;
            }
            case Op::Sigmoid: {
                Matrix& ga = nodes_[n.a].grad;
                for (std::size_t i = 0; i < g.data.size(); ++i) {
                    const double s = n.value.data[i];
                    ga.data[i] += g.data[i] * s * (1.0 - s);
                }
                break;
            }
            case Op::Sum: {
                Matrix& ga = nodes_[n.a].grad;
                const double gs = g.at(0, 0);
                for (auto& x : ga.data) x += gs;
                break;
            }
            case Op::Concat: {
                const Matrix& a = nodes_[n.a].value;
                const Matrix& b = nodes_[n.b].value;
                Matrix& ga = nodes_[n.a].grad;
                Matrix& gb = nodes_[n.b].grad;
                for (int i = 0; i < a.rows; ++i) {
                    for (int j = 0; j < a.cols; ++j) ga.at(i, j) += g.at(i, j);
                    for (int j = 0; j < b.cols; ++j) gb.at(i, j) += g.at(i, a.cols + j);
                }
                break;
            }
            case Op::Pick: {
                nodes_[n.a].grad.at(0, n.index) += g.at(0, 0);
                break;
            }
            case Op::SoftmaxXent: {
                const Matrix& logits = nodes_[n.a].value;
                const Matrix probs = softmax_rows(logits);
                Matrix& ga = nodes_[n.a].grad;
                const double gs = g.at(0, 0);
                for (int j = 0; j < logits.cols; ++j) {
                    const double onehot = (j == n.index) ? 1.0 : 0.0;
                    ga.at(0, j) += gs * (probs.at(0, j) - onehot);
                }
                break;
            }
            case Op::LogisticXent: {
                const double s = nodes_[n.a].value.at(0, 0);
                nodes_[n.a].grad.at(0, 0) += g.at(0, 0) * (stable_sigmoid(s) - n.c);
                break;
            }
        }
    }
}

Matrix finite_diff_gradient(const std::function<double(const Matrix&)>& f,
                            const Matrix& x, double h) {
    if (!(h > 0.0)) {
        throw std::invalid_argument("finite_diff_gradient: step h must be positive");
    }
    Matrix g(x.rows, x.cols);
    Matrix xp = x;
    for (std::size_t i = 0; i < x.data.size(); ++i) {
        const double orig = xp.data[i];
        xp.data[i] = orig + h;
        const double fp = f(xp);
        xp.data[i] = orig - h;
        const double fm = f(xp);
        xp.data[i] = orig;
        if (!std::isfinite(fp) || !std::isfinite(fm)) {
            throw std::runtime_error("finite_diff_gradient: non-finite function value");
        }
        g.data[i] = (fp - fm) / (2.0 * h);
    }
    return g;
}

}  // namespace flan
