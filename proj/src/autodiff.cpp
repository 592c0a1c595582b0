#include "pdabench/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>

#include "pdabench/errors.hpp"
#include "pdabench/numerics.hpp"

namespace pdabench {

const char* op_name(Op op) {
    switch (op) {
        case Op::Leaf: return "leaf";
        case Op::Constant: return "constant";
        case Op::Matmul: return "matmul";
        case Op::MatmulNT: return "matmul_nt";
        case Op::Add: return "add";
        case Op::AddRowVec: return "add_rowvec";
        case Op::Sub: return "sub";
        case Op::Mul: return "mul";
        case Op::Scale: return "scale";
        case Op::Relu: return "relu";
        case Op::Exp: return "exp";
        case Op::Log: return "log";
        case Op::Square: return "square";
        case Op::RowL2Norm: return "row_l2_norm";
        case Op::RowSum: return "row_sum";
        case Op::RowsDiv: return "rows_div";
        case Op::RowSoftmax: return "row_softmax";
        case Op::RowLogSoftmax: return "row_log_softmax";
        case Op::Mean: return "mean";
        case Op::Sum: return "sum";
        case Op::StopGradient: return "stop_gradient";
        case Op::ConcatRows: return "concat_rows";
        case Op::Clamp: return "clamp";
        case Op::Sigmoid: return "sigmoid";
        case Op::Transpose: return "transpose";
        case Op::GradReverse: return "grad_reverse";
        case Op::PairwiseSqDist: return "pairwise_sqdist";
        case Op::BroadcastRows: return "broadcast_rows";
        case Op::SoftmaxXent: return "softmax_xent";
        case Op::BceLogits: return "bce_logits";
    }
    return "?";
}

namespace {

double stable_sigmoid(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

void acc(Tensor& dst, const Tensor& src, double s = 1.0) {
    for (std::size_t i = 0; i < dst.data.size(); ++i) dst.data[i] += s * src.data[i];
}

} // namespace

int Tape::push(Node n) {
    if (!n.value.all_finite())
        throw NumericError(std::string("non-finite output from op '") + op_name(n.op) + "'");
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
}

int Tape::leaf(Parameter& p) {
    Node n;
    n.op = Op::Leaf;
    n.value = p.value;
    n.requires_grad = p.requires_grad;
    n.param = &p;
    return push(std::move(n));
}

int Tape::constant(Tensor v) {
    Node n;
    n.op = Op::Constant;
    n.value = std::move(v);
    return push(std::move(n));
}

int Tape::matmul(int a, int b) {
    const Tensor& va = at(a).value;
    const Tensor& vb = at(b).value;
    if (va.cols != vb.rows) throw ConfigError("matmul: inner dimensions differ");
    Node n;
    n.op = Op::Matmul;
    n.a = a;
    n.b = b;
    n.requires_grad = at(a).requires_grad || at(b).requires_grad;
    n.value = pdabench::matmul(va, vb);
    return push(std::move(n));
}

int Tape::matmul_nt(int a, int b) {
    const Tensor& va = at(a).value;
    const Tensor& vb = at(b).value;
    if (va.cols != vb.cols) throw ConfigError("matmul_nt: inner dimensions differ");
    Node n;
    n.op = Op::MatmulNT;
    n.a = a;
    n.b = b;
    n.requires_grad = at(a).requires_grad || at(b).requires_grad;
    n.value = pdabench::matmul_nt(va, vb);
    return push(std::move(n));
}

int Tape::add(int a, int b) {
    const Tensor& va = at(a).value;
    const Tensor& vb = at(b).value;
    if (!va.same_shape(vb)) throw ConfigError("add: shape mismatch");
    Node n;
    n.op = Op::Add;
    n.a = a;
    n.b = b;
    n.requires_grad = at(a).requires_grad || at(b).requires_grad;
    n.value = va;
    acc(n.value, vb);
    return push(std::move(n));
}

int Tape::add_rowvec(int a, int v) {
    const Tensor& va = at(a).value;
    const Tensor& vv = at(v).value;
    if (vv.rows != 1 || vv.cols != va.cols) throw ConfigError("add_rowvec: expected 1 x cols vector");
    Node n;
    n.op = Op::AddRowVec;
    n.a = a;
    n.b = v;
    n.requires_grad = at(a).requires_grad || at(v).requires_grad;
    n.value = va;
    for (int i = 0; i < va.rows; ++i)
        for (int j = 0; j < va.cols; ++j) n.value(i, j) += vv(0, j);
    return push(std::move(n));
}

int Tape::sub(int a, int b) {
    const Tensor& va = at(a).value;
    const Tensor& vb = at(b).value;
    if (!va.same_shape(vb)) throw ConfigError("sub: shape mismatch");
    Node n;
    n.op = Op::Sub;
    n.a = a;
    n.b = b;
    n.requires_grad = at(a).requires_grad || at(b).requires_grad;
    n.value = va;
    acc(n.value, vb, -1.0);
    return push(std::move(n));
}

int Tape::mul(int a, int b) {
    const Tensor& va = at(a).value;
    const Tensor& vb = at(b).value;
    if (!va.same_shape(vb)) throw ConfigError("mul: shape mismatch");
    Node n;
    n.op = Op::Mul;
    n.a = a;
    n.b = b;
    n.requires_grad = at(a).requires_grad || at(b).requires_grad;
    n.value = va;
    for (std::size_t i = 0; i < n.value.data.size(); ++i) n.value.data[i] *= vb.data[i];
    return push(std::move(n));
}

int Tape::scale(int a, double s) {
    Node n;
    n.op = Op::Scale;
    n.a = a;
    n.c0 = s;
    n.requires_grad = at(a).requires_grad;
    n.value = at(a).value;
    for (double& v : n.value.data) v *= s;
    return push(std::move(n));
}

int Tape::relu(int a) {
    Node n;
    n.op = Op::Relu;
    n.a = a;
    n.requires_grad = at(a).requires_grad;
    n.value = at(a).value;
    for (double& v : n.value.data) v = v > 0.0 ? v : 0.0;
    return push(std::move(n));
}

int Tape::exp(int a) {
    Node n;
    n.op = Op::Exp;
    n.a = a;
    n.requires_grad = at(a).requires_grad;
    n.value = at(a).value;
    for (double& v : n.value.data) v = std::exp(v);
    return push(std::move(n));
}

int Tape::log(int a) {
    Node n;
    n.op = Op::Log;
    n.a = a;
    n.requires_grad = at(a).requires_grad;
    n.value = at(a).value;
    for (double& v : n.value.data) v = std::log(v);
    return push(std::move(n));
}

int Tape::square(int a) {
    Node n;
    n.op = Op::Square;
    n.a = a;
    n.requires_grad = at(a).requires_grad;
    n.value = at(a).value;
    for (double& v : n.value.data) v *= v;
    return push(std::move(n));
}

int Tape::row_l2_norm(int a) {
    const Tensor& va = at(a).value;
    Node n;
    n.op = Op::RowL2Norm;
    n.a = a;
    n.requires_grad = at(a).requires_grad;
    n.value = Tensor(va.rows, 1);
    for (int i = 0; i < va.rows; ++i) {
        double s = 0.0;
        for (int j = 0; j < va.cols; ++j) s += va(i, j) * va(i, j);
        n.value(i, 0) = std::sqrt(s);
    }
    return push(std::move(n));
}

int Tape::row_sum(int a) {
    const Tensor& va = at(a).value;
    Node n;
    n.op = Op::RowSum;
    n.a = a;
    n.requires_grad = at(a).requires_grad;
    n.value = Tensor(va.rows, 1);
    for (int i = 0; i < va.rows; ++i) {
        double s = 0.0;
        for (int j = 0; j < va.cols; ++j) s += va(i, j);
        n.value(i, 0) = s;
    }
    return push(std::move(n));
}

int Tape::rows_div(int a, int s) {
    const Tensor& va = at(a).value;
    const Tensor& vs = at(s).value;
    if (vs.rows != va.rows || vs.cols != 1) throw ConfigError("rows_div: divisor must be n x 1");
    Node n;
    n.op = Op::RowsDiv;
    n.a = a;
    n.b = s;
    n.requires_grad = at(a).requires_grad || at(s).requires_grad;
    n.value = va;
    for (int i = 0; i < va.rows; ++i)
        for (int j = 0; j < va.cols; ++j) n.value(i, j) /= vs(i, 0);
    return push(std::move(n));
}

int Tape::row_softmax(int a) {
    const Tensor& va = at(a).value;
    Node n;
    n.op = Op::RowSoftmax;
    n.a = a;
    n.requires_grad = at(a).requires_grad;
    n.value = Tensor(va.rows, va.cols);
    for (int i = 0; i < va.rows; ++i) {
        double m = -1e300;
        for (int j = 0; j < va.cols; ++j) m = std::max(m, va(i, j));
        double z = 0.0;
        for (int j = 0; j < va.cols; ++j) {
            const double e = std::exp(va(i, j) - m);
            n.value(i, j) = e;
            z += e;
        }
        for (int j = 0; j < va.cols; ++j) n.value(i, j) /= z;
    }
    return push(std::move(n));
}

int Tape::row_log_softmax(int a) {
    const Tensor& va = at(a).value;
    Node n;
    n.op = Op::RowLogSoftmax;
    n.a = a;
    n.requires_grad = at(a).requires_grad;
    n.value = Tensor(va.rows, va.cols);
    for (int i = 0; i < va.rows; ++i) {
        double m = -1e300;
        for (int j = 0; j < va.cols; ++j) m = std::max(m, va(i, j));
        double z = 0.0;
        for (int j = 0; j < va.cols; ++j) z += std::exp(va(i, j) - m);
        const double lse = m + std::log(z);
        for (int j = 0; j < va.cols; ++j) n.value(i, j) = va(i, j) - lse;
    }
    return push(std::move(n));
}

int Tape::mean(int a) {
    const Tensor& va = at(a).value;
    if (va.size() == 0) throw ConfigError("mean: empty tensor");
    Node n;
    n.op = Op::Mean;
    n.a = a;
    n.requires_grad = at(a).requires_grad;
    double s = 0.0;
    for (double v : va.data) s += v;
    n.value = Tensor::scalar(s / va.size());
    return push(std::move(n));
}

int Tape::sum(int a) {
    const Tensor& va = at(a).value;
    Node n;
    n.op = Op::Sum;
    n.a = a;
    n.requires_grad = at(a).requires_grad;
    double s = 0.0;
    for (double v : va.data) s += v;
    n.value = Tensor::scalar(s);
    return push(std::move(n));
}

int Tape::stop_gradient(int a) {
    Node n;
    n.op = Op::StopGradient;
    n.a = a;
    n.requires_grad = false;
    n.value = at(a).value;
    return push(std::move(n));
}

int Tape::concat_rows(int a, int b) {
    const Tensor& va = at(a).value;
    const Tensor& vb = at(b).value;
    if (va.cols != vb.cols) throw ConfigError("concat_rows: column count mismatch");
    Node n;
    n.op = Op::ConcatRows;
    n.a = a;
    n.b = b;
    n.requires_grad = at(a).requires_grad || at(b).requires_grad;
    n.value = Tensor(va.rows + vb.rows, va.cols);
    std::copy(va.data.begin(), va.data.end(), n.value.data.begin());
    std::copy(vb.data.begin(), vb.data.end(), n.value.data.begin() + va.data.size());
    return push(std::move(n));
}

int Tape::clamp(int a, double lo, double hi) {
    if (lo > hi) throw ConfigError("clamp: lo > hi");
    Node n;
    n.op = Op::Clamp;
    n.a = a;
    n.c0 = lo;
    n.c1 = hi;
    n.requires_grad = at(a).requires_grad;
    n.value = at(a).value;
    for (double& v : n.value.data) v = std::min(std::max(v, lo), hi);
    return push(std::move(n));
}

int Tape::sigmoid(int a) {
    Node n;
    n.op = Op::Sigmoid;
    n.a = a;
    n.requires_grad = at(a).requires_grad;
    n.value = at(a).value;
    for (double& v : n.value.data) v = stable_sigmoid(v);
    return push(std::move(n));
}

int Tape::transpose(int a) {
    const Tensor& va = at(a).value;
    Node n;
    n.op = Op::Transpose;
    n.a = a;
    n.requires_grad = at(a).requires_grad;
    n.value = Tensor(va.cols, va.rows);
    for (int i = 0; i < va.rows; ++i)
        for (int j = 0; j < va.cols; ++j) n.value(j, i) = va(i, j);
    return push(std::move(n));
}

int Tape::grad_reverse(int a, double coeff) {
    if (coeff < 0.0) throw ConfigError("grad_reverse: coeff must be >= 0");
    Node n;
    n.op = Op::GradReverse;
    n.a = a;
    n.c0 = coeff;
    n.requires_grad = at(a).requires_grad;
    n.value = at(a).value;
    return push(std::move(n));
}

int Tape::pairwise_sqdist(int a, int b) {
    const Tensor& va = at(a).value;
    const Tensor& vb = at(b).value;
    if (va.cols != vb.cols) throw ConfigError("pairwise_sqdist: feature dims differ");
    Node n;
    n.op = Op::PairwiseSqDist;
    n.a = a;
    n.b = b;
    n.requires_grad = at(a).requires_grad || at(b).requires_grad;
    n.value = Tensor(va.rows, vb.rows);
    for (int i = 0; i < va.rows; ++i)
        for (int j = 0; j < vb.rows; ++j) {
            double s = 0.0;
            for (int k = 0; k < va.cols; ++k) {
                const double d = va(i, k) - vb(j, k);
                s += d * d;
            }
            n.value(i, j) = s;
        }
    return push(std::move(n));
}

int Tape::broadcast_rows(int v, int rows) {
    const Tensor& vv = at(v).value;
    if (vv.rows != 1) throw ConfigError("broadcast_rows: expected a 1 x c tensor");
    Node n;
    n.op = Op::BroadcastRows;
    n.a = v;
    n.requires_grad = at(v).requires_grad;
    n.value = Tensor(rows, vv.cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < vv.cols; ++j) n.value(i, j) = vv(0, j);
    return push(std::move(n));
}

int Tape::softmax_xent(int logits, const Tensor& labels, const Tensor& weights) {
    const Tensor& x = at(logits).value;
    if (!x.same_shape(labels)) throw ConfigError("softmax_xent: labels shape mismatch");
    const bool weighted = weights.size() > 0;
    if (weighted && (weights.rows != x.rows || weights.cols != 1))
        throw ConfigError("softmax_xent: weights must be n x 1");

    double wsum = 0.0;
    for (int i = 0; i < x.rows; ++i) {
        double rowsum = 0.0;
        for (int j = 0; j < x.cols; ++j) rowsum += labels(i, j);
        if (std::abs(rowsum - 1.0) > 1e-6) throw ConfigError("softmax_xent: label rows must sum to 1");
        const double w = weighted ? weights(i, 0) : 1.0;
        if (w < 0.0) throw ConfigError("softmax_xent: negative sample weight");
        wsum += w;
    }
    if (wsum <= 0.0) throw ConfigError("softmax_xent: weights sum to zero");

    Node n;
    n.op = Op::SoftmaxXent;
    n.a = logits;
    n.c0 = wsum;
    n.c1 = weighted ? 1.0 : 0.0;
    n.requires_grad = at(logits).requires_grad;
    n.aux = Tensor(x.rows, x.cols); // softmax probabilities
    n.aux2 = labels;
    if (weighted) n.aux3 = weights;

    double loss = 0.0;
    for (int i = 0; i < x.rows; ++i) {
        double m = -1e300;
        for (int j = 0; j < x.cols; ++j) m = std::max(m, x(i, j));
        double z = 0.0;
        for (int j = 0; j < x.cols; ++j) z += std::exp(x(i, j) - m);
        const double lse = m + std::log(z);
        double dot = 0.0;
        for (int j = 0; j < x.cols; ++j) {
            n.aux(i, j) = std::exp(x(i, j) - m) / z;
            dot += labels(i, j) * x(i, j);
        }
        const double w = weighted ? weights(i, 0) : 1.0;
        loss += w * (lse - dot);
    }
    n.value = Tensor::scalar(loss / wsum);
    return push(std::move(n));
}

int Tape::bce_logits(int logits, const Tensor& targets, const Tensor& weights) {
    const Tensor& x = at(logits).value;
    if (x.cols != 1) throw ConfigError("bce_logits: logits must be n x 1");
    if (!targets.same_shape(x)) throw ConfigError("bce_logits: targets shape mismatch");
    const bool weighted = weights.size() > 0;
    if (weighted && !weights.same_shape(x)) throw ConfigError("bce_logits: weights must be n x 1");

    double wsum = 0.0;
    for (int i = 0; i < x.rows; ++i) {
        const double w = weighted ? weights(i, 0) : 1.0;
        if (w < 0.0) throw ConfigError("bce_logits: negative sample weight");
        wsum += w;
    }
    if (wsum <= 0.0) throw ConfigError("bce_logits: weights sum to zero");

    Node n;
    n.op = Op::BceLogits;
    n.a = logits;
    n.c0 = wsum;
    n.c1 = weighted ? 1.0 : 0.0;
    n.requires_grad = at(logits).requires_grad;
    n.aux = targets;
    if (weighted) n.aux2 = weights;

    double loss = 0.0;
    for (int i = 0; i < x.rows; ++i) {
        const double xi = x(i, 0);
        const double ti = targets(i, 0);
        const double w = weighted ? weights(i, 0) : 1.0;
        loss += w * (std::max(xi, 0.0) - ti * xi + std::log1p(std::exp(-std::abs(xi))));
    }
    n.value = Tensor::scalar(loss / wsum);
    return push(std::move(n));
}

void Tape::backward(int loss) {
    Node& top = at(loss);
    if (top.value.rows != 1 || top.value.cols != 1)
        throw UsageError("backward: loss must be a scalar");
    if (!top.requires_grad) return;

    for (Node& n : nodes_) n.grad = Tensor();

    auto ensure = [&](int id) -> Tensor& {
        Node& n = at(id);
        if (n.grad.size() == 0) n.grad = Tensor(n.value.rows, n.value.cols);
        return n.grad;
    };

    ensure(loss).data[0] = 1.0;

    for (int id = loss; id >= 0; --id) {
        Node& n = at(id);
        if (!n.requires_grad || n.grad.size() == 0) continue;
        const Tensor& g = n.grad;
        switch (n.op) {
            case Op::Leaf:
                if (n.param && n.param->requires_grad) acc(n.param->grad, g);
                break;
            case Op::Constant:
                break;
            case Op::Matmul:
                if (at(n.a).requires_grad) gemm_acc(ensure(n.a), g, at(n.b).value, Gemm::NT);
                if (at(n.b).requires_grad) gemm_acc(ensure(n.b), at(n.a).value, g, Gemm::TN);
                break;
            case Op::MatmulNT:
                if (at(n.a).requires_grad) gemm_acc(ensure(n.a), g, at(n.b).value, Gemm::NN);
                if (at(n.b).requires_grad) gemm_acc(ensure(n.b), g, at(n.a).value, Gemm::TN);
                break;
            case Op::Add:
                if (at(n.a).requires_grad) acc(ensure(n.a), g);
                if (at(n.b).requires_grad) acc(ensure(n.b), g);
                break;
            case Op::AddRowVec:
                if (at(n.a).requires_grad) acc(ensure(n.a), g);
                if (at(n.b).requires_grad) {
                    Tensor& gv = ensure(n.b);
                    for (int i = 0; i < g.rows; ++i)
                        for (int j = 0; j < g.cols; ++j) gv(0, j) += g(i, j);
                }
                break;
            case Op::Sub:
                if (at(n.a).requires_grad) acc(ensure(n.a), g);
                if (at(n.b).requires_grad) acc(ensure(n.b), g, -1.0);
                break;
            case Op::Mul:
                if (at(n.a).requires_grad) {
                    Tensor& ga = ensure(n.a);
                    const Tensor& vb = at(n.b).value;
                    for (std::size_t i = 0; i < ga.data.size(); ++i)
                        ga.data[i] += g.data[i] * vb.data[i];
                }
                if (at(n.b).requires_grad) {
                    Tensor& gb = ensure(n.b);
                    const Tensor& va = at(n.a).value;
                    for (std::size_t i = 0; i < gb.data.size(); ++i)
                        gb.data[i] += g.data[i] * va.data[i];
                }
                break;
            case Op::Scale:
                if (at(n.a).requires_grad) acc(ensure(n.a), g, n.c0);
                break;
            case Op::Relu:
                if (at(n.a).requires_grad) {
                    Tensor& ga = ensure(n.a);
                    const Tensor& va = at(n.a).value;
                    for (std::size_t i = 0; i < ga.data.size(); ++i)
                        if (va.data[i] > 0.0) ga.data[i] += g.data[i];
                }
                break;
            case Op::Exp:
                if (at(n.a).requires_grad) {
                    Tensor& ga = ensure(n.a);
                    for (std::size_t i = 0; i < ga.data.size(); ++i)
                        ga.data[i] += g.data[i] * n.value.data[i];
                }
                break;
            case Op::Log:
                if (at(n.a).requires_grad) {
                    Tensor& ga = ensure(n.a);
                    const Tensor& va = at(n.a).value;
                    for (std::size_t i = 0; i < ga.data.size(); ++i)
                        ga.data[i] += g.data[i] / va.data[i];
                }
                break;
            case Op::Square:
                if (at(n.a).requires_grad) {
                    Tensor& ga = ensure(n.a);
                    const Tensor& va = at(n.a).value;
                    for (std::size_t i = 0; i < ga.data.size(); ++i)
                        ga.data[i] += g.data[i] * 2.0 * va.data[i];
                }
                break;
            case Op::RowL2Norm:
                if (at(n.a).requires_grad) {
                    Tensor& ga = ensure(n.a);
                    const Tensor& va = at(n.a).value;
                    for (int i = 0; i < va.rows; ++i) {
                        const double inv = g(i, 0) / std::max(n.value(i, 0), Numerics::norm_floor);
                        for (int j = 0; j < va.cols; ++j) ga(i, j) += inv * va(i, j);
                    }
                }
                break;
            case Op::RowSum:
                if (at(n.a).requires_grad) {
                    Tensor& ga = ensure(n.a);
                    for (int i = 0; i < ga.rows; ++i)
                        for (int j = 0; j < ga.cols; ++j) ga(i, j) += g(i, 0);
                }
                break;
            case Op::RowsDiv: {
                const Tensor& va = at(n.a).value;
                const Tensor& vs = at(n.b).value;
                if (at(n.a).requires_grad) {
                    Tensor& ga = ensure(n.a);
                    for (int i = 0; i < va.rows; ++i)
                        for (int j = 0; j < va.cols; ++j) ga(i, j) += g(i, j) / vs(i, 0);
                }
                if (at(n.b).requires_grad) {
                    Tensor& gs = ensure(n.b);
                    for (int i = 0; i < va.rows; ++i) {
                        double s = 0.0;
                        for (int j = 0; j < va.cols; ++j) s += g(i, j) * n.value(i, j);
                        gs(i, 0) -= s / vs(i, 0);
                    }
                }
                break;
            }
            case Op::RowSoftmax:
                if (at(n.a).requires_grad) {
                    Tensor& ga = ensure(n.a);
                    for (int i = 0; i < g.rows; ++i) {
                        double dot = 0.0;
                        for (int j = 0; j < g.cols; ++j) dot += g(i, j) * n.value(i, j);
                        for (int j = 0; j < g.cols; ++j)
                            ga(i, j) += n.value(i, j) * (g(i, j) - dot);
                    }
                }
                break;
            case Op::RowLogSoftmax:
                if (at(n.a).requires_grad) {
                    Tensor& ga = ensure(n.a);
                    for (int i = 0; i < g.rows; ++i) {
                        double rowsum = 0.0;
                        for (int j = 0; j < g.cols; ++j) rowsum += g(i, j);
                        for (int j = 0; j < g.cols; ++j)
                            ga(i, j) += g(i, j) - std::exp(n.value(i, j)) * rowsum;
                    }
                }
                break;
            case Op::Mean:
                if (at(n.a).requires_grad) {
                    Tensor& ga = ensure(n.a);
                    const double s = g.data[0] / ga.size();
                    for (double& v : ga.data) v += s;
                }
                break;
            case Op::Sum:
                if (at(n.a).requires_grad) {
                    Tensor& ga = ensure(n.a);
                    for (double& v : ga.data) v += g.data[0];
                }
                break;
            case Op::StopGradient:
                break;
            case Op::ConcatRows: {
                const int ra = at(n.a).value.rows;
                if (at(n.a).requires_grad) {
                    Tensor& ga = ensure(n.a);
                    for (int i = 0; i < ra; ++i)
                        for (int j = 0; j < g.cols; ++j) ga(i, j) += g(i, j);
                }
                if (at(n.b).requires_grad) {
                    Tensor& gb = ensure(n.b);
                    for (int i = 0; i < gb.rows; ++i)
                        for (int j = 0; j < g.cols; ++j) gb(i, j) += g(ra + i, j);
                }
                break;
            }
            case Op::Clamp:
                if (at(n.a).requires_grad) {
                    Tensor& ga = ensure(n.a);
                    const Tensor& va = at(n.a).value;
                    for (std::size_t i = 0; i < ga.data.size(); ++i)
                        if (va.data[i] >= n.c0 && va.data[i] <= n.c1) ga.data[i] += g.data[i];
                }
                break;
            case Op::Sigmoid:
                if (at(n.a).requires_grad) {
                    Tensor& ga = ensure(n.a);
                    for (std::size_t i = 0; i < ga.data.size(); ++i) {
                        const double s = n.value.data[i];
                        ga.data[i] += g.data[i] * s * (1.0 - s);
                    }
                }
                break;
            case Op::Transpose:
                if (at(n.a).requires_grad) {
                    Tensor& ga = ensure(n.a);
                    for (int i = 0; i < g.rows; ++i)
                        for (int j = 0; j < g.cols; ++j) ga(j, i) += g(i, j);
                }
                break;
            case Op::GradReverse:
                if (at(n.a).requires_grad) acc(ensure(n.a), g, -n.c0);
                break;
            case Op::PairwiseSqDist: {
                const Tensor& va = at(n.a).value;
                const Tensor& vb = at(n.b).value;
                const bool need_a = at(n.a).requires_grad;
                const bool need_b = at(n.b).requires_grad;
                if (need_a || need_b) {
                    Tensor* ga = need_a ? &ensure(n.a) : nullptr;
                    Tensor* gb = need_b ? &ensure(n.b) : nullptr;
                    for (int i = 0; i < va.rows; ++i)
                        for (int j = 0; j < vb.rows; ++j) {
                            const double gij2 = 2.0 * g(i, j);
                            if (gij2 == 0.0) continue;
                            for (int k = 0; k < va.cols; ++k) {
                                const double d = va(i, k) - vb(j, k);
                                if (ga) (*ga)(i, k) += gij2 * d;
                                if (gb) (*gb)(j, k) -= gij2 * d;
                            }
                        }
                }
                break;
            }
            case Op::BroadcastRows:
                if (at(n.a).requires_grad) {
                    Tensor& gv = ensure(n.a);
                    for (int i = 0; i < g.rows; ++i)
                        for (int j = 0; j < g.cols; ++j) gv(0, j) += g(i, j);
                }
                break;
            case Op::SoftmaxXent:
                if (at(n.a).requires_grad) {
                    Tensor& ga = ensure(n.a);
                    const double gs = g.data[0] / n.c0;
                    for (int i = 0; i < ga.rows; ++i) {
                        const double wi = n.c1 > 0.5 ? n.aux3(i, 0) : 1.0;
                        for (int j = 0; j < ga.cols; ++j)
                            ga(i, j) += gs * wi * (n.aux(i, j) - n.aux2(i, j));
                    }
                }
                break;
            case Op::BceLogits:
                if (at(n.a).requires_grad) {
                    Tensor& ga = ensure(n.a);
                    const Tensor& x = at(n.a).value;
                    const double gs = g.data[0] / n.c0;
                    for (int i = 0; i < ga.rows; ++i) {
                        const double wi = n.c1 > 0.5 ? n.aux2(i, 0) : 1.0;
                        ga(i, 0) += gs * wi * (stable_sigmoid(x(i, 0)) - n.aux(i, 0));
                    }
                }
                break;
        }
    }
}

void zero_grads(const std::vector<Parameter*>& params) {
    for (Parameter* p : params) p->zero_grad();
}

} // namespace pdabench
