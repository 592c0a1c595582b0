#pragma once

#include <string>
#include <vector>

#include "pdabench/tensor.hpp"

namespace pdabench {

// A trainable tensor. Tapes bind leaves to parameters; backward() accumulates
// into grad.
struct Parameter {
    Tensor value;
    Tensor grad;
    double lr_multiplier = 1.0; // 1 for the backbone, 10 for new heads
    bool requires_grad = true;
    std::string name;

    Parameter() = default;
    Parameter(Tensor v, std::string n, double lr_mult = 1.0)
        : value(std::move(v)), grad(value.rows, value.cols), lr_multiplier(lr_mult),
          name(std::move(n)) {}

    void zero_grad() { std::fill(grad.data.begin(), grad.data.end(), 0.0); }
};

enum class Op {
    Leaf,
    Constant,
    Matmul,
    MatmulNT,
    Add,
    AddRowVec,
    Sub,
    Mul,
    Scale,
    Relu,
    Exp,
    Log,
    Square,
    RowL2Norm,
    RowSum,
    RowsDiv,
    RowSoftmax,
    RowLogSoftmax,
    Mean,
    Sum,
    StopGradient,
    ConcatRows,
    Clamp,
    Sigmoid,
    Transpose,
    GradReverse,
    PairwiseSqDist,
    BroadcastRows,
    SoftmaxXent,
    BceLogits,
};

const char* op_name(Op op);

// Reverse-mode tape. Nodes are appended during the forward pass and visited
// exactly once, in reverse creation order, by backward(). Single-threaded.
class Tape {
  public:
    struct Node {
        Op op = Op::Constant;
        int a = -1;
        int b = -1;
        double c0 = 0.0;
        double c1 = 0.0;
        bool requires_grad = false;
        Tensor value;
        Tensor grad;             // allocated by backward()
        Tensor aux, aux2, aux3;  // cached forward extras (probs, labels, weights)
        Parameter* param = nullptr;
    };

    int leaf(Parameter& p);
    int constant(Tensor v);
    int scalar(double v) { return constant(Tensor::scalar(v)); }

    int matmul(int a, int b);
    int matmul_nt(int a, int b); // a * b^T
    int add(int a, int b);
    int add_rowvec(int a, int v); // a: n x c, v: 1 x c
    int sub(int a, int b);
    int mul(int a, int b); // elementwise
    int scale(int a, double s);
    int relu(int a);
    int exp(int a);
    int log(int a);
    int square(int a);
    int row_l2_norm(int a);      // n x d -> n x 1
    int row_sum(int a);          // n x d -> n x 1
    int rows_div(int a, int s);  // divide row i of a by s(i,0)
    int row_softmax(int a);
    int row_log_softmax(int a);
    int mean(int a); // -> 1 x 1
    int sum(int a);  // -> 1 x 1
    int stop_gradient(int a);
    int concat_rows(int a, int b);
    int clamp(int a, double lo, double hi);
    int sigmoid(int a);
    int transpose(int a);
    int grad_reverse(int a, double coeff); // identity forward, -coeff * g backward
    int pairwise_sqdist(int a, int b);     // (n x d, m x d) -> n x m
    int broadcast_rows(int v, int n);      // 1 x c -> n x c

    // Weighted mean of -sum_k labels_k * log softmax(logits)_k. labels rows
    // must sum to 1; weights (n x 1) optional, nonnegative.
    int softmax_xent(int logits, const Tensor& labels, const Tensor& weights = Tensor());

    // Weighted mean binary cross-entropy on logits (n x 1), targets in [0,1].
    int bce_logits(int logits, const Tensor& targets, const Tensor& weights = Tensor());

    // Seeds d(loss)/d(loss) = 1 and sweeps the tape once in reverse; leaf
    // gradients are accumulated into their bound parameters.
    void backward(int loss);

    const Tensor& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
    const Tensor& grad(int id) const { return nodes_[static_cast<std::size_t>(id)].grad; }
    int size() const { return static_cast<int>(nodes_.size()); }

  private:
    int push(Node n);
    Node& at(int id) { return nodes_[static_cast<std::size_t>(id)]; }
    const Node& at(int id) const { return nodes_[static_cast<std::size_t>(id)]; }

    std::vector<Node> nodes_;
};

void zero_grads(const std::vector<Parameter*>& params);

} // namespace pdabench
