#include "lsnpipe/autodiff.hpp"

#include <cmath>
#include <cstring>
#include <numbers>

#include "lsnpipe/util.hpp"

namespace lsnpipe::autodiff {

namespace {

int64_t shape_numel(const std::vector<int>& shape) {
    int64_t n = 1;
    for (int d : shape) n *= d;
    return n;
}

}  // namespace

Tensor::Tensor(std::vector<int> s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
    for (int dim : shape) require(dim > 0, "tensor dimensions must be positive");
    require(shape_numel(shape) == static_cast<int64_t>(data.size()),
            "tensor data length does not match shape");
}

Tensor Tensor::zeros(std::vector<int> shape) {
    size_t n = static_cast<size_t>(shape_numel(shape));
    return Tensor(std::move(shape), std::vector<double>(n, 0.0));
}

Tensor Tensor::full(std::vector<int> shape, double value) {
    size_t n = static_cast<size_t>(shape_numel(shape));
    return Tensor(std::move(shape), std::vector<double>(n, value));
}

int64_t Tensor::numel() const { return static_cast<int64_t>(data.size()); }

void Tensor::ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
}

void Tensor::zero_grad() {
    if (!grad.empty()) std::fill(grad.begin(), grad.end(), 0.0);
}

bool all_finite(const Tensor& t) {
    for (double v : t.data)
        if (!std::isfinite(v)) return false;
    for (double v : t.grad)
        if (!std::isfinite(v)) return false;
    return true;
}

double global_grad_norm(std::span<Tensor* const> params) {
    double sq = 0.0;
    for (const Tensor* p : params)
        for (double g : p->grad) sq += g * g;
    return std::sqrt(sq);
}

// ---------------------------------------------------------------------------
// Tape
// ---------------------------------------------------------------------------

int Tape::push(Node node, const char* op_name) {
    require(!consumed_, "tape already consumed by backward()");
    if (node.kind != OpKind::Leaf) {
        for (double v : node.value.data) {
            if (!std::isfinite(v))
                throw RuntimeFailure(std::string("non-finite value produced by op ") + op_name);
        }
    }
    nodes_.push_back(std::move(node));
    return static_cast<int>(nodes_.size()) - 1;
}

Var Tape::leaf(Tensor* param) {
    require(param != nullptr, "leaf parameter must not be null");
    Node n;
    n.kind = OpKind::Leaf;
    n.external = param;
    return {push(std::move(n), "leaf")};
}

Var Tape::constant(Tensor value) {
    Node n;
    n.kind = OpKind::Constant;
    n.value = std::move(value);
    return {push(std::move(n), "constant")};
}

Var Tape::add(Var a, Var b) {
    const Tensor& ta = val(a.id);
    const Tensor& tb = val(b.id);
    require(ta.same_shape(tb), "add: shape mismatch");
    Node n;
    n.kind = OpKind::Add;
    n.in0 = a.id;
    n.in1 = b.id;
    n.value = Tensor::zeros(ta.shape);
    for (size_t i = 0; i < ta.data.size(); ++i) n.value.data[i] = ta.data[i] + tb.data[i];
    return {push(std::move(n), "add")};
}

Var Tape::mul(Var a, Var b) {
    const Tensor& ta = val(a.id);
    const Tensor& tb = val(b.id);
    require(ta.same_shape(tb), "mul: shape mismatch");
    Node n;
    n.kind = OpKind::Mul;
    n.in0 = a.id;
    n.in1 = b.id;
    n.value = Tensor::zeros(ta.shape);
    for (size_t i = 0; i < ta.data.size(); ++i) n.value.data[i] = ta.data[i] * tb.data[i];
    return {push(std::move(n), "mul")};
}

Var Tape::add_bias(Var x, Var bias) {
    const Tensor& tx = val(x.id);
    const Tensor& tb = val(bias.id);
    require(tx.shape.size() == 2 && tb.shape.size() == 1 && tb.shape[0] == tx.shape[1],
            "add_bias: expects [m,n] + [n]");
    Node n;
    n.kind = OpKind::AddBias;
    n.in0 = x.id;
    n.in1 = bias.id;
    n.value = Tensor::zeros(tx.shape);
    int m = tx.shape[0], c = tx.shape[1];
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < c; ++j)
            n.value.data[static_cast<size_t>(i) * c + j] =
                tx.data[static_cast<size_t>(i) * c + j] + tb.data[j];
    return {push(std::move(n), "add_bias")};
}

Var Tape::scale(Var x, double s) {
    const Tensor& tx = val(x.id);
    Node n;
    n.kind = OpKind::Scale;
    n.in0 = x.id;
    n.daux = {s};
    n.value = Tensor::zeros(tx.shape);
    for (size_t i = 0; i < tx.data.size(); ++i) n.value.data[i] = tx.data[i] * s;
    return {push(std::move(n), "scale")};
}

Var Tape::matmul(Var a, Var b) {
    const Tensor& ta = val(a.id);
    const Tensor& tb = val(b.id);
    require(ta.shape.size() == 2 && tb.shape.size() == 2 && ta.shape[1] == tb.shape[0],
            "matmul: inner dimensions must match");
    int m = ta.shape[0], k = ta.shape[1], c = tb.shape[1];
    Node n;
    n.kind = OpKind::MatMul;
    n.in0 = a.id;
    n.in1 = b.id;
    n.value = Tensor::zeros({m, c});
    const double* A = ta.data.data();
    const double* B = tb.data.data();
    double* Y = n.value.data.data();
    for (int i = 0; i < m; ++i) {
        const double* ai = A + static_cast<size_t>(i) * k;
        double* yi = Y + static_cast<size_t>(i) * c;
        for (int p = 0; p < k; ++p) {
            double av = ai[p];
            const double* bp = B + static_cast<size_t>(p) * c;
            for (int j = 0; j < c; ++j) yi[j] += av * bp[j];
        }
    }
    return {push(std::move(n), "matmul")};
}

Var Tape::matmul_nt(Var a, Var b) {
    const Tensor& ta = val(a.id);
    const Tensor& tb = val(b.id);
    require(ta.shape.size() == 2 && tb.shape.size() == 2 && ta.shape[1] == tb.shape[1],
            "matmul_nt: inner dimensions must match");
    int m = ta.shape[0], k = ta.shape[1], c = tb.shape[0];
    Node n;
    n.kind = OpKind::MatMulNT;
    n.in0 = a.id;
    n.in1 = b.id;
    n.value = Tensor::zeros({m, c});
    const double* A = ta.data.data();
    const double* B = tb.data.data();
    double* Y = n.value.data.data();
    for (int i = 0; i < m; ++i) {
        const double* ai = A + static_cast<size_t>(i) * k;
        double* yi = Y + static_cast<size_t>(i) * c;
        for (int j = 0; j < c; ++j) {
            const double* bj = B + static_cast<size_t>(j) * k;
            double acc = 0.0;
            for (int p = 0; p < k; ++p) acc += ai[p] * bj[p];
            yi[j] = acc;
        }
    }
    return {push(std::move(n), "matmul_nt")};
}

Var Tape::relu(Var x) {
    const Tensor& tx = val(x.id);
    Node n;
    n.kind = OpKind::Relu;
    n.in0 = x.id;
    n.value = Tensor::zeros(tx.shape);
    for (size_t i = 0; i < tx.data.size(); ++i)
        n.value.data[i] = tx.data[i] > 0.0 ? tx.data[i] : 0.0;
    return {push(std::move(n), "relu")};
}

Var Tape::gelu(Var x) {
    const Tensor& tx = val(x.id);
    Node n;
    n.kind = OpKind::Gelu;
    n.in0 = x.id;
    n.value = Tensor::zeros(tx.shape);
    for (size_t i = 0; i < tx.data.size(); ++i) {
        double v = tx.data[i];
        n.value.data[i] = 0.5 * v * (1.0 + std::erf(v * std::numbers::inv_sqrt2));
    }
    return {push(std::move(n), "gelu")};
}

Var Tape::layer_norm(Var x, Var gain, Var bias, double eps) {
    const Tensor& tx = val(x.id);
    const Tensor& tg = val(gain.id);
    const Tensor& tb = val(bias.id);
    require(tx.shape.size() == 2, "layer_norm: expects [m,n]");
    int m = tx.shape[0], c = tx.shape[1];
    require(tg.shape == std::vector<int>{c} && tb.shape == std::vector<int>{c},
            "layer_norm: gain/bias must be [n]");
    Node n;
    n.kind = OpKind::LayerNorm;
    n.in0 = x.id;
    n.in1 = gain.id;
    n.in2 = bias.id;
    n.value = Tensor::zeros(tx.shape);
    n.daux.resize(1 + 2 * static_cast<size_t>(m));
    n.daux[0] = eps;
    for (int i = 0; i < m; ++i) {
        const double* xi = tx.data.data() + static_cast<size_t>(i) * c;
        double mean = 0.0;
        for (int j = 0; j < c; ++j) mean += xi[j];
        mean /= c;
        double var = 0.0;
        for (int j = 0; j < c; ++j) {
            double d = xi[j] - mean;
            var += d * d;
        }
        var /= c;
        double rstd = 1.0 / std::sqrt(var + eps);
        n.daux[1 + 2 * static_cast<size_t>(i)] = mean;
        n.daux[2 + 2 * static_cast<size_t>(i)] = rstd;
        double* yi = n.value.data.data() + static_cast<size_t>(i) * c;
        for (int j = 0; j < c; ++j)
            yi[j] = (xi[j] - mean) * rstd * tg.data[j] + tb.data[j];
    }
    return {push(std::move(n), "layer_norm")};
}

Var Tape::softmax(Var x) {
    const Tensor& tx = val(x.id);
    require(!tx.shape.empty(), "softmax: scalar input");
    int c = tx.shape.back();
    int m = static_cast<int>(tx.numel() / c);
    Node n;
    n.kind = OpKind::Softmax;
    n.in0 = x.id;
    n.value = Tensor::zeros(tx.shape);
    for (int i = 0; i < m; ++i) {
        const double* xi = tx.data.data() + static_cast<size_t>(i) * c;
        double* yi = n.value.data.data() + static_cast<size_t>(i) * c;
        double mx = xi[0];
        for (int j = 1; j < c; ++j) mx = std::max(mx, xi[j]);
        double total = 0.0;
        for (int j = 0; j < c; ++j) {
            yi[j] = std::exp(xi[j] - mx);
            total += yi[j];
        }
        for (int j = 0; j < c; ++j) yi[j] /= total;
    }
    return {push(std::move(n), "softmax")};
}

Var Tape::causal_softmax(Var scores) {
    const Tensor& tx = val(scores.id);
    require(tx.shape.size() == 2 && tx.shape[0] == tx.shape[1],
            "causal_softmax: expects square [t,t]");
    int t = tx.shape[0];
    Node n;
    n.kind = OpKind::CausalSoftmax;
    n.in0 = scores.id;
    n.value = Tensor::zeros(tx.shape);
    for (int i = 0; i < t; ++i) {
        const double* xi = tx.data.data() + static_cast<size_t>(i) * t;
        double* yi = n.value.data.data() + static_cast<size_t>(i) * t;
        double mx = xi[0];
        for (int j = 1; j <= i; ++j) mx = std::max(mx, xi[j]);
        double total = 0.0;
        for (int j = 0; j <= i; ++j) {
            yi[j] = std::exp(xi[j] - mx);
            total += yi[j];
        }
        for (int j = 0; j <= i; ++j) yi[j] /= total;
    }
    return {push(std::move(n), "causal_softmax")};
}

Var Tape::embedding(Var table, std::span<const int> ids) {
    const Tensor& tt = val(table.id);
    require(tt.shape.size() == 2, "embedding: table must be [rows,dim]");
    int rows = tt.shape[0], dim = tt.shape[1];
    Node n;
    n.kind = OpKind::Embedding;
    n.in0 = table.id;
    n.iaux.assign(ids.begin(), ids.end());
    n.value = Tensor::zeros({static_cast<int>(ids.size()), dim});
    for (size_t t = 0; t < ids.size(); ++t) {
        require(ids[t] >= 0 && ids[t] < rows, "embedding: id out of range");
        std::memcpy(n.value.data.data() + t * dim,
                    tt.data.data() + static_cast<size_t>(ids[t]) * dim,
                    sizeof(double) * static_cast<size_t>(dim));
    }
    return {push(std::move(n), "embedding")};
}

Var Tape::slice_cols(Var x, int start, int len) {
    const Tensor& tx = val(x.id);
    require(tx.shape.size() == 2, "slice_cols: expects [m,n]");
    int m = tx.shape[0], c = tx.shape[1];
    require(start >= 0 && len > 0 && start + len <= c, "slice_cols: range out of bounds");
    Node n;
    n.kind = OpKind::SliceCols;
    n.in0 = x.id;
    n.iaux = {start, len};
    n.value = Tensor::zeros({m, len});
    for (int i = 0; i < m; ++i)
        std::memcpy(n.value.data.data() + static_cast<size_t>(i) * len,
                    tx.data.data() + static_cast<size_t>(i) * c + start,
                    sizeof(double) * static_cast<size_t>(len));
    return {push(std::move(n), "slice_cols")};
}

Var Tape::concat_cols(std::span<const Var> parts) {
    require(!parts.empty(), "concat_cols: no inputs");
    int m = val(parts[0].id).shape[0];
    int total = 0;
    for (Var p : parts) {
        const Tensor& tp = val(p.id);
        require(tp.shape.size() == 2 && tp.shape[0] == m, "concat_cols: row mismatch");
        total += tp.shape[1];
    }
    Node n;
    n.kind = OpKind::ConcatCols;
    for (Var p : parts) n.iaux.push_back(p.id);
    n.value = Tensor::zeros({m, total});
    int offset = 0;
    for (Var p : parts) {
        const Tensor& tp = val(p.id);
        int w = tp.shape[1];
        for (int i = 0; i < m; ++i)
            std::memcpy(n.value.data.data() + static_cast<size_t>(i) * total + offset,
                        tp.data.data() + static_cast<size_t>(i) * w,
                        sizeof(double) * static_cast<size_t>(w));
        offset += w;
    }
    return {push(std::move(n), "concat_cols")};
}

Var Tape::cross_entropy_mean(Var logits, std::span<const int> targets) {
    const Tensor& tl = val(logits.id);
    require(tl.shape.size() == 2, "cross_entropy_mean: logits must be [t,vocab]");
    int t = tl.shape[0], v = tl.shape[1];
    require(static_cast<int>(targets.size()) == t, "cross_entropy_mean: target count mismatch");
    Node n;
    n.kind = OpKind::CrossEntropyMean;
    n.in0 = logits.id;
    n.iaux.assign(targets.begin(), targets.end());
    n.daux.resize(static_cast<size_t>(t) * v);  // saved probabilities for backward
    double total = 0.0;
    for (int i = 0; i < t; ++i) {
        require(targets[i] >= 0 && targets[i] < v, "cross_entropy_mean: target out of range");
        const double* xi = tl.data.data() + static_cast<size_t>(i) * v;
        double* pi = n.daux.data() + static_cast<size_t>(i) * v;
        double mx = xi[0];
        for (int j = 1; j < v; ++j) mx = std::max(mx, xi[j]);
        double z = 0.0;
        for (int j = 0; j < v; ++j) {
            pi[j] = std::exp(xi[j] - mx);
            z += pi[j];
        }
        for (int j = 0; j < v; ++j) pi[j] /= z;
        total += mx + std::log(z) - xi[targets[i]];
    }
    n.value = Tensor({1}, {total / t});
    return {push(std::move(n), "cross_entropy_mean")};
}

Var Tape::sum(Var x) {
    const Tensor& tx = val(x.id);
    double total = 0.0;
    for (double v : tx.data) total += v;
    Node n;
    n.kind = OpKind::Sum;
    n.in0 = x.id;
    n.value = Tensor({1}, {total});
    return {push(std::move(n), "sum")};
}

const Tensor& Tape::value(Var v) const {
    require(v.id >= 0 && v.id < static_cast<int>(nodes_.size()), "invalid var");
    return val(v.id);
}

const Tensor& Tape::grad(Var v) const {
    require(v.id >= 0 && v.id < static_cast<int>(nodes_.size()), "invalid var");
    const Node& n = nodes_[v.id];
    require(n.kind != OpKind::Leaf, "grad of a leaf lives in the external tensor's grad buffer");
    return n.grad;
}

Tensor& Tape::grad_buf(int id) {
    Node& n = nodes_[id];
    if (n.kind == OpKind::Leaf) {
        n.external->ensure_grad();
        return *n.external;
    }
    if (n.grad.data.empty()) n.grad = Tensor::zeros(val(id).shape);
    return n.grad;
}

void Tape::add_grad(int id, const Tensor& contribution) {
    Tensor& g = grad_buf(id);
    if (nodes_[id].kind == OpKind::Leaf) {
        for (size_t i = 0; i < contribution.data.size(); ++i)
            g.grad[i] += contribution.data[i];
    } else {
        for (size_t i = 0; i < contribution.data.size(); ++i)
            g.data[i] += contribution.data[i];
    }
}

void Tape::backward(Var loss) {
    require(!consumed_, "backward: tape already consumed");
    require(loss.id >= 0 && loss.id < static_cast<int>(nodes_.size()), "backward: invalid loss var");
    require(val(loss.id).numel() == 1, "backward: loss must be a scalar");
    consumed_ = true;
    grad_buf(loss.id);
    if (nodes_[loss.id].kind == OpKind::Leaf)
        nodes_[loss.id].external->grad[0] += 1.0;
    else
        nodes_[loss.id].grad.data[0] = 1.0;
    for (int id = loss.id; id >= 0; --id) backward_node(id);
    for (const Node& n : nodes_) {
        if (n.kind == OpKind::Leaf && !n.external->grad.empty()) {
            for (double g : n.external->grad)
                if (!std::isfinite(g)) throw RuntimeFailure("non-finite gradient after backward");
        }
    }
}

void Tape::backward_node(int id) {
    Node& n = nodes_[id];
    if (n.kind == OpKind::Leaf || n.kind == OpKind::Constant) return;
    if (n.grad.data.empty()) return;  // not reachable from the loss
    const Tensor& dy = n.grad;
    switch (n.kind) {
        case OpKind::Add: {
            add_grad(n.in0, dy);
            add_grad(n.in1, dy);
            break;
        }
        case OpKind::Mul: {
            const Tensor& a = val(n.in0);
            const Tensor& b = val(n.in1);
            Tensor da = Tensor::zeros(a.shape);
            Tensor db = Tensor::zeros(b.shape);
            for (size_t i = 0; i < dy.data.size(); ++i) {
                da.data[i] = dy.data[i] * b.data[i];
                db.data[i] = dy.data[i] * a.data[i];
            }
            add_grad(n.in0, da);
            add_grad(n.in1, db);
            break;
        }
        case OpKind::AddBias: {
            add_grad(n.in0, dy);
            int m = dy.shape[0], c = dy.shape[1];
            Tensor db = Tensor::zeros({c});
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < c; ++j) db.data[j] += dy.data[static_cast<size_t>(i) * c + j];
            add_grad(n.in1, db);
            break;
        }
        case OpKind::Scale: {
            Tensor dx = Tensor::zeros(dy.shape);
            for (size_t i = 0; i < dy.data.size(); ++i) dx.data[i] = dy.data[i] * n.daux[0];
            add_grad(n.in0, dx);
            break;
        }
        case OpKind::MatMul: {
            const Tensor& a = val(n.in0);
            const Tensor& b = val(n.in1);
            int m = a.shape[0], k = a.shape[1], c = b.shape[1];
            Tensor da = Tensor::zeros(a.shape);  // dy [m,c] x b^T [c,k]
            for (int i = 0; i < m; ++i) {
                const double* dyi = dy.data.data() + static_cast<size_t>(i) * c;
                double* dai = da.data.data() + static_cast<size_t>(i) * k;
                for (int p = 0; p < k; ++p) {
                    const double* bp = b.data.data() + static_cast<size_t>(p) * c;
                    double acc = 0.0;
                    for (int j = 0; j < c; ++j) acc += dyi[j] * bp[j];
                    dai[p] += acc;
                }
            }
            Tensor db = Tensor::zeros(b.shape);  // a^T [k,m] x dy [m,c]
            for (int p = 0; p < k; ++p)
                for (int i = 0; i < m; ++i) {
                    double av = a.data[static_cast<size_t>(i) * k + p];
                    const double* dyi = dy.data.data() + static_cast<size_t>(i) * c;
                    double* dbp = db.data.data() + static_cast<size_t>(p) * c;
                    for (int j = 0; j < c; ++j) dbp[j] += av * dyi[j];
                }
            add_grad(n.in0, da);
            add_grad(n.in1, db);
            break;
        }
        case OpKind::MatMulNT: {
            const Tensor& a = val(n.in0);
            const Tensor& b = val(n.in1);
            int m = a.shape[0], k = a.shape[1], c = b.shape[0];
            Tensor da = Tensor::zeros(a.shape);  // dy [m,c] x b [c,k]
            for (int i = 0; i < m; ++i) {
                const double* dyi = dy.data.data() + static_cast<size_t>(i) * c;
                double* dai = da.data.data() + static_cast<size_t>(i) * k;
                for (int j = 0; j < c; ++j) {
                    double g = dyi[j];
                    const double* bj = b.data.data() + static_cast<size_t>(j) * k;
                    for (int p = 0; p < k; ++p) dai[p] += g * bj[p];
                }
            }
            Tensor db = Tensor::zeros(b.shape);  // dy^T [c,m] x a [m,k]
            for (int i = 0; i < m; ++i) {
                const double* dyi = dy.data.data() + static_cast<size_t>(i) * c;
                const double* ai = a.data.data() + static_cast<size_t>(i) * k;
                for (int j = 0; j < c; ++j) {
                    double g = dyi[j];
                    double* dbj = db.data.data() + static_cast<size_t>(j) * k;
                    for (int p = 0; p < k; ++p) dbj[p] += g * ai[p];
                }
            }
            add_grad(n.in0, da);
            add_grad(n.in1, db);
            break;
        }
        case OpKind::Relu: {
            const Tensor& x = val(n.in0);
            Tensor dx = Tensor::zeros(x.shape);
            for (size_t i = 0; i < x.data.size(); ++i)
                dx.data[i] = x.data[i] > 0.0 ? dy.data[i] : 0.0;
            add_grad(n.in0, dx);
            break;
        }
        case OpKind::Gelu: {
            const Tensor& x = val(n.in0);
            Tensor dx = Tensor::zeros(x.shape);
            constexpr double inv_sqrt_2pi = 0.3989422804014327;
            for (size_t i = 0; i < x.data.size(); ++i) {
                double v = x.data[i];
                double cdf = 0.5 * (1.0 + std::erf(v * std::numbers::inv_sqrt2));
                double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
                dx.data[i] = dy.data[i] * (cdf + v * pdf);
            }
            add_grad(n.in0, dx);
            break;
        }
        case OpKind::LayerNorm: {
            const Tensor& x = val(n.in0);
            const Tensor& g = val(n.in1);
            int m = x.shape[0], c = x.shape[1];
            Tensor dx = Tensor::zeros(x.shape);
            Tensor dg = Tensor::zeros(g.shape);
            Tensor db = Tensor::zeros(g.shape);
            for (int i = 0; i < m; ++i) {
                double mean = n.daux[1 + 2 * static_cast<size_t>(i)];
                double rstd = n.daux[2 + 2 * static_cast<size_t>(i)];
                const double* xi = x.data.data() + static_cast<size_t>(i) * c;
                const double* dyi = dy.data.data() + static_cast<size_t>(i) * c;
                double* dxi = dx.data.data() + static_cast<size_t>(i) * c;
                double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
                for (int j = 0; j < c; ++j) {
                    double xhat = (xi[j] - mean) * rstd;
                    double dxhat = dyi[j] * g.data[j];
                    mean_dxhat += dxhat;
                    mean_dxhat_xhat += dxhat * xhat;
                    dg.data[j] += dyi[j] * xhat;
                    db.data[j] += dyi[j];
                }
                mean_dxhat /= c;
                mean_dxhat_xhat /= c;
                for (int j = 0; j < c; ++j) {
                    double xhat = (xi[j] - mean) * rstd;
                    double dxhat = dyi[j] * g.data[j];
                    dxi[j] = rstd * (dxhat - mean_dxhat - xhat * mean_dxhat_xhat);
                }
            }
            add_grad(n.in0, dx);
            add_grad(n.in1, dg);
            add_grad(n.in2, db);
            break;
        }
        case OpKind::Softmax: {
            const Tensor& y = n.value;
            int c = y.shape.back();
            int m = static_cast<int>(y.numel() / c);
            Tensor dx = Tensor::zeros(y.shape);
            for (int i = 0; i < m; ++i) {
                const double* yi = y.data.data() + static_cast<size_t>(i) * c;
                const double* dyi = dy.data.data() + static_cast<size_t>(i) * c;
                double dot = 0.0;
                for (int j = 0; j < c; ++j) dot += dyi[j] * yi[j];
                double* dxi = dx.data.data() + static_cast<size_t>(i) * c;
                for (int j = 0; j < c; ++j) dxi[j] = yi[j] * (dyi[j] - dot);
            }
            add_grad(n.in0, dx);
            break;
        }
        case OpKind::CausalSoftmax: {
            const Tensor& y = n.value;
            int t = y.shape[0];
            Tensor dx = Tensor::zeros(y.shape);
            for (int i = 0; i < t; ++i) {
                const double* yi = y.data.data() + static_cast<size_t>(i) * t;
                const double* dyi = dy.data.data() + static_cast<size_t>(i) * t;
                double dot = 0.0;
                for (int j = 0; j <= i; ++j) dot += dyi[j] * yi[j];
                double* dxi = dx.data.data() + static_cast<size_t>(i) * t;
                for (int j = 0; j <= i; ++j) dxi[j] = yi[j] * (dyi[j] - dot);
            }
            add_grad(n.in0, dx);
            break;
        }
        case OpKind::Embedding: {
            const Tensor& table = val(n.in0);
            int dim = table.shape[1];
            Tensor dt = Tensor::zeros(table.shape);
            for (size_t p = 0; p < n.iaux.size(); ++p) {
                const double* dyp = dy.data.data() + p * dim;
                double* row = dt.data.data() + static_cast<size_t>(n.iaux[p]) * dim;
                for (int j = 0; j < dim; ++j) row[j] += dyp[j];
            }
            add_grad(n.in0, dt);
            break;
        }
        case OpKind::SliceCols: {
            const Tensor& x = val(n.in0);
            int m = x.shape[0], c = x.shape[1];
            int start = n.iaux[0], len = n.iaux[1];
            Tensor dx = Tensor::zeros(x.shape);
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < len; ++j)
                    dx.data[static_cast<size_t>(i) * c + start + j] =
                        dy.data[static_cast<size_t>(i) * len + j];
            add_grad(n.in0, dx);
            break;
        }
        case OpKind::ConcatCols: {
            int m = n.value.shape[0], total = n.value.shape[1];
            int offset = 0;
            for (int src : n.iaux) {
                const Tensor& part = val(src);
                int w = part.shape[1];
                Tensor dp = Tensor::zeros(part.shape);
                for (int i = 0; i < m; ++i)
                    std::memcpy(dp.data.data() + static_cast<size_t>(i) * w,
                                dy.data.data() + static_cast<size_t>(i) * total + offset,
                                sizeof(double) * static_cast<size_t>(w));
                add_grad(src, dp);
                offset += w;
            }
            break;
        }
        case OpKind::CrossEntropyMean: {
            const Tensor& logits = val(n.in0);
            int t = logits.shape[0], v = logits.shape[1];
            double upstream = dy.data[0] / t;
            Tensor dl = Tensor::zeros(logits.shape);
            for (int i = 0; i < t; ++i) {
                const double* pi = n.daux.data() + static_cast<size_t>(i) * v;
                double* dli = dl.data.data() + static_cast<size_t>(i) * v;
                for (int j = 0; j < v; ++j) dli[j] = upstream * pi[j];
                dli[n.iaux[i]] -= upstream;
            }
            add_grad(n.in0, dl);
            break;
        }
        case OpKind::Sum: {
            const Tensor& x = val(n.in0);
            Tensor dx = Tensor::full(x.shape, dy.data[0]);
            add_grad(n.in0, dx);
            break;
        }
        case OpKind::Leaf:
        case OpKind::Constant:
            break;
    }
}

}  // namespace lsnpipe::autodiff
