#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace lsnpipe::autodiff {

// Dense row-major tensor of 64-bit floats with an optional gradient buffer
// of identical shape. Shapes are small (toy-model scale), so everything is
// plain contiguous storage.
struct Tensor {
    std::vector<int> shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty until a backward pass touches it

    Tensor() = default;
    Tensor(std::vector<int> s, std::vector<double> d);

    static Tensor zeros(std::vector<int> shape);
    static Tensor full(std::vector<int> shape, double value);

    int64_t numel() const;
    int rows() const { return shape.empty() ? 1 : shape[0]; }
    int cols() const { return shape.size() < 2 ? 1 : shape[1]; }

    double& at(int r, int c) { return data[static_cast<size_t>(r) * cols() + c]; }
    double at(int r, int c) const { return data[static_cast<size_t>(r) * cols() + c]; }

    void ensure_grad();
    void zero_grad();
    bool same_shape(const Tensor& other) const { return shape == other.shape; }
};

// True when every element (and every gradient element, if present) is finite.
bool all_finite(const Tensor& t);

// L2 norm over the gradient buffers of a parameter group.
double global_grad_norm(std::span<Tensor* const> params);

class Tape;

// Handle to a node on a Tape. Valid only for the tape that produced it.
struct Var {
    int id = -1;
};

enum class OpKind : uint8_t {
    Leaf,
    Constant,
    Add,
    Mul,
    AddBias,
    Scale,
    MatMul,
    MatMulNT,
    Relu,
    Gelu,
    LayerNorm,
    Softmax,
    CausalSoftmax,
    Embedding,
    SliceCols,
    ConcatCols,
    CrossEntropyMean,
    Sum,
};

// Reverse-mode tape. Each forward call appends one node; the execution order
// is the topological order, and backward() walks it once in reverse. The tape
// is rebuilt per forward pass and consumed by a single backward().
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;
    Tape(Tape&&) = default;
    Tape& operator=(Tape&&) = default;

    // Registers an external parameter tensor. Gradients accumulate into
    // param->grad, which is allocated on demand. The tensor must outlive the
    // tape and must not be mutated while the tape is alive.
    Var leaf(Tensor* param);

    // A tensor participating in the graph with no gradient tracking.
    Var constant(Tensor value);

    Var add(Var a, Var b);                 // elementwise, same shape
    Var mul(Var a, Var b);                 // elementwise, same shape
    Var add_bias(Var x, Var bias);         // [m,n] + [n], row broadcast
    Var scale(Var x, double s);
    Var matmul(Var a, Var b);              // [m,k] x [k,n]
    Var matmul_nt(Var a, Var b);           // [m,k] x [n,k]^T -> [m,n]
    Var relu(Var x);
    Var gelu(Var x);                       // exact erf form
    Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);  // over last dim
    Var softmax(Var x);                    // over last dim, max-stabilized
    Var causal_softmax(Var scores);        // [t,t]; row i normalized over cols 0..i
    Var embedding(Var table, std::span<const int> ids);
    Var slice_cols(Var x, int start, int len);
    Var concat_cols(std::span<const Var> parts);
    Var cross_entropy_mean(Var logits, std::span<const int> targets);
    Var sum(Var x);

    const Tensor& value(Var v) const;
    // Gradient of an interior node after backward(). For Leaf vars read the
    // external tensor's grad buffer instead.
    const Tensor& grad(Var v) const;

    // Populates d loss / d leaf for every reachable leaf. loss must be scalar
    // and the tape may only be consumed once.
    void backward(Var loss);

    size_t size() const { return nodes_.size(); }

private:
    struct Node {
        OpKind kind;
        int in0 = -1, in1 = -1, in2 = -1;
        Tensor value;               // owned output (unused for Leaf)
        Tensor* external = nullptr; // Leaf only
        Tensor grad;                // allocated lazily during backward
        std::vector<int> iaux;      // token ids, slice offsets, concat ids, targets
        std::vector<double> daux;   // scale factor, saved layer-norm stats
    };

    const Tensor& val(int id) const {
        const Node& n = nodes_[id];
        return n.kind == OpKind::Leaf ? *n.external : n.value;
    }
    Tensor& grad_buf(int id);
    void add_grad(int id, const Tensor& contribution);
    int push(Node node, const char* op_name);
    void backward_node(int id);

    std::vector<Node> nodes_;
    bool consumed_ = false;
};

}  // namespace lsnpipe::autodiff
