#include "hijacklab/tape.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "hijacklab/errors.hpp"

namespace hijacklab {

Parameter::Parameter(std::string name_, Tensor value_)
    : name(std::move(name_)), value(std::move(value_)), grad(Tensor::zeros(value.shape)) {}

void Parameter::zero_grad() {
    std::fill(grad.data.begin(), grad.data.end(), 0.0);
}

const char* Tape::op_name(Op op) {
    switch (op) {
        case Op::Input: return "input";
        case Op::Param: return "param";
        case Op::MatMul: return "matmul";
        case Op::Add: return "add";
        case Op::AddBias: return "add_bias";
        case Op::Sub: return "sub";
        case Op::Mul: return "mul";
        case Op::Scale: return "scale";
        case Op::AddScalar: return "add_scalar";
        case Op::Relu: return "relu";
        case Op::Sigmoid: return "sigmoid";
        case Op::Exp: return "exp";
        case Op::Log: return "log";
        case Op::Reshape: return "reshape";
        case Op::ConcatCols: return "concat_cols";
        case Op::SumAll: return "sum_all";
        case Op::MeanAll: return "mean_all";
        case Op::SoftmaxCE: return "softmax_cross_entropy";
        case Op::BceLogits: return "bce_with_logits";
    }
    return "?";
}

std::uint32_t Tape::check(Value v, const char* opname) const {
    if (v.owner != this)
        throw ContractError(std::string(opname) + ": value belongs to a different tape");
    if (v.id >= nodes_.size())
        throw ContractError(std::string(opname) + ": dangling value id");
    return v.id;
}

Value Tape::push(Node n, const char* opname) {
    if (!n.value.all_finite())
        throw NumericError(std::string("non-finite value produced by op '") + opname + "'");
    nodes_.push_back(std::move(n));
    return Value{static_cast<std::uint32_t>(nodes_.size() - 1), this};
}

Value Tape::input(Tensor t) {
    Node n;
    n.op = Op::Input;
    n.value = std::move(t);
    return push(std::move(n), "input");
}

Value Tape::param(Parameter& p) {
    for (std::uint32_t i = 0; i < nodes_.size(); ++i) {
        if (nodes_[i].op != Op::Param) continue;
        if (nodes_[i].bound == &p) return Value{i, this};
        if (nodes_[i].bound->name == p.name)
            throw ContractError("param: duplicate parameter name '" + p.name + "'");
    }
    Node n;
    n.op = Op::Param;
    n.value = p.value;
    n.bound = &p;
    return push(std::move(n), "param");
}

Value Tape::matmul(Value a, Value b) {
    auto ia = check(a, "matmul"), ib = check(b, "matmul");
    const Tensor& A = nodes_[ia].value;
    const Tensor& B = nodes_[ib].value;
    if (A.rank() != 2 || B.rank() != 2 || A.shape[1] != B.shape[0])
        throw ShapeError("matmul: incompatible shapes " + A.shape_str() + " and " + B.shape_str());
    const std::size_t m = A.shape[0], k = A.shape[1], p = B.shape[1];
    Tensor C = Tensor::zeros({m, p});
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = &A.data[i * k];
        double* crow = &C.data[i * p];
        for (std::size_t kk = 0; kk < k; ++kk) {
            const double av = arow[kk];
            const double* brow = &B.data[kk * p];
            for (std::size_t j = 0; j < p; ++j) crow[j] += av * brow[j];
        }
    }
    Node n;
    n.op = Op::MatMul;
    n.in = {ia, ib};
    n.value = std::move(C);
    return push(std::move(n), "matmul");
}

Value Tape::add(Value a, Value b) {
    auto ia = check(a, "add"), ib = check(b, "add");
    const Tensor& A = nodes_[ia].value;
    const Tensor& B = nodes_[ib].value;
    Node n;
    n.in = {ia, ib};
    if (A.same_shape(B)) {
        n.op = Op::Add;
        n.value = A;
        for (std::size_t i = 0; i < B.numel(); ++i) n.value.data[i] += B.data[i];
    } else if (A.rank() == 2 && B.rank() == 1 && B.shape[0] == A.shape[1]) {
        n.op = Op::AddBias;
        n.value = A;
        const std::size_t rows = A.shape[0], cols = A.shape[1];
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) n.value.data[r * cols + c] += B.data[c];
    } else {
        throw ShapeError("add: incompatible shapes " + A.shape_str() + " and " + B.shape_str());
    }
    return push(std::move(n), "add");
}

Value Tape::sub(Value a, Value b) {
    auto ia = check(a, "sub"), ib = check(b, "sub");
    const Tensor& A = nodes_[ia].value;
    const Tensor& B = nodes_[ib].value;
    if (!A.same_shape(B))
        throw ShapeError("sub: incompatible shapes " + A.shape_str() + " and " + B.shape_str());
    Node n;
    n.op = Op::Sub;
    n.in = {ia, ib};
    n.value = A;
    for (std::size_t i = 0; i < B.numel(); ++i) n.value.data[i] -= B.data[i];
    return push(std::move(n), "sub");
}

Value Tape::mul(Value a, Value b) {
    auto ia = check(a, "mul"), ib = check(b, "mul");
    const Tensor& A = nodes_[ia].value;
    const Tensor& B = nodes_[ib].value;
    if (!A.same_shape(B))
        throw ShapeError("mul: incompatible shapes " + A.shape_str() + " and " + B.shape_str());
    Node n;
    n.op = Op::Mul;
    n.in = {ia, ib};
    n.value = A;
    for (std::size_t i = 0; i < B.numel(); ++i) n.value.data[i] *= B.data[i];
    return push(std::move(n), "mul");
}

Value Tape::scale(Value a, double s) {
    auto ia = check(a, "scale");
    Node n;
    n.op = Op::Scale;
    n.in = {ia, kNoInput};
    n.scalar_arg = s;
    n.value = nodes_[ia].value;
    for (double& v : n.value.data) v *= s;
    return push(std::move(n), "scale");
}

Value Tape::add_scalar(Value a, double s) {
    auto ia = check(a, "add_scalar");
    Node n;
    n.op = Op::AddScalar;
    n.in = {ia, kNoInput};
    n.scalar_arg = s;
    n.value = nodes_[ia].value;
    for (double& v : n.value.data) v += s;
    return push(std::move(n), "add_scalar");
}

Value Tape::relu(Value a) {
    auto ia = check(a, "relu");
    Node n;
    n.op = Op::Relu;
    n.in = {ia, kNoInput};
    n.value = nodes_[ia].value;
    for (double& v : n.value.data) v = v > 0.0 ? v : 0.0;
    return push(std::move(n), "relu");
}

Value Tape::sigmoid(Value a) {
    auto ia = check(a, "sigmoid");
    Node n;
    n.op = Op::Sigmoid;
    n.in = {ia, kNoInput};
    n.value = nodes_[ia].value;
    for (double& v : n.value.data) v = 1.0 / (1.0 + std::exp(-v));
    return push(std::move(n), "sigmoid");
}

Value Tape::exp(Value a) {
    auto ia = check(a, "exp");
    Node n;
    n.op = Op::Exp;
    n.in = {ia, kNoInput};
    n.value = nodes_[ia].value;
    for (double& v : n.value.data) v = std::exp(v);
    return push(std::move(n), "exp");
}

Value Tape::log(Value a) {
    auto ia = check(a, "log");
    Node n;
    n.op = Op::Log;
    n.in = {ia, kNoInput};
    n.value = nodes_[ia].value;
    for (double& v : n.value.data) v = std::log(v);
    return push(std::move(n), "log");
}

Value Tape::reshape(Value a, std::vector<std::size_t> shape) {
    auto ia = check(a, "reshape");
    const Tensor& A = nodes_[ia].value;
    if (shape_numel(shape) != A.numel())
        throw ShapeError("reshape: cannot view " + A.shape_str() + " as " +
                         Tensor::zeros(shape).shape_str());
    Node n;
    n.op = Op::Reshape;
    n.in = {ia, kNoInput};
    n.value = Tensor(std::move(shape), A.data);
    return push(std::move(n), "reshape");
}

Value Tape::concat_cols(Value a, Value b) {
    auto ia = check(a, "concat_cols"), ib = check(b, "concat_cols");
    const Tensor& A = nodes_[ia].value;
    const Tensor& B = nodes_[ib].value;
    if (A.rank() != 2 || B.rank() != 2 || A.shape[0] != B.shape[0])
        throw ShapeError("concat_cols: incompatible shapes " + A.shape_str() + " and " +
                         B.shape_str());
    const std::size_t rows = A.shape[0], ca = A.shape[1], cb = B.shape[1];
    Tensor C = Tensor::zeros({rows, ca + cb});
    for (std::size_t r = 0; r < rows; ++r) {
        std::memcpy(&C.data[r * (ca + cb)], &A.data[r * ca], ca * sizeof(double));
        std::memcpy(&C.data[r * (ca + cb) + ca], &B.data[r * cb], cb * sizeof(double));
    }
    Node n;
    n.op = Op::ConcatCols;
    n.in = {ia, ib};
    n.value = std::move(C);
    return push(std::move(n), "concat_cols");
}

Value Tape::sum_all(Value a) {
    auto ia = check(a, "sum_all");
    double s = 0.0;
    for (double v : nodes_[ia].value.data) s += v;
    Node n;
    n.op = Op::SumAll;
    n.in = {ia, kNoInput};
    n.value = Tensor::scalar(s);
    return push(std::move(n), "sum_all");
}

Value Tape::mean_all(Value a) {
    auto ia = check(a, "mean_all");
    const Tensor& A = nodes_[ia].value;
    if (A.numel() == 0) throw ContractError("mean_all: empty tensor");
    double s = 0.0;
    for (double v : A.data) s += v;
    Node n;
    n.op = Op::MeanAll;
    n.in = {ia, kNoInput};
    n.value = Tensor::scalar(s / static_cast<double>(A.numel()));
    return push(std::move(n), "mean_all");
}

Value Tape::softmax_cross_entropy(Value logits, std::vector<int> labels) {
    auto il = check(logits, "softmax_cross_entropy");
    const Tensor& L = nodes_[il].value;
    if (L.rank() != 2)
        throw ShapeError("softmax_cross_entropy: logits must be a matrix, got " + L.shape_str());
    const std::size_t rows = L.shape[0], cols = L.shape[1];
    if (labels.size() != rows)
        throw ShapeError("softmax_cross_entropy: " + std::to_string(labels.size()) +
                         " labels for logits " + L.shape_str());
    for (int y : labels)
        if (y < 0 || static_cast<std::size_t>(y) >= cols)
            throw ContractError("softmax_cross_entropy: label " + std::to_string(y) +
                                " out of range [0, " + std::to_string(cols) + ")");
    // Cache the softmax rows for the backward rule.
    Tensor probs = Tensor::zeros({rows, cols});
    double total = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
        const double* row = &L.data[r * cols];
        double mx = row[0];
        for (std::size_t c = 1; c < cols; ++c) mx = std::max(mx, row[c]);
        double sum = 0.0;
        for (std::size_t c = 0; c < cols; ++c) {
            const double e = std::exp(row[c] - mx);
            probs.data[r * cols + c] = e;
            sum += e;
        }
        for (std::size_t c = 0; c < cols; ++c) probs.data[r * cols + c] /= sum;
        const double lse = mx + std::log(sum);
        total += lse - row[static_cast<std::size_t>(labels[r])];
    }
    Node n;
    n.op = Op::SoftmaxCE;
    n.in = {il, kNoInput};
    n.value = Tensor::scalar(total / static_cast<double>(rows));
    n.aux = std::move(probs);
    n.labels = std::move(labels);
    return push(std::move(n), "softmax_cross_entropy");
}

Value Tape::bce_with_logits(Value logits, Tensor targets) {
    auto il = check(logits, "bce_with_logits");
    const Tensor& L = nodes_[il].value;
    if (!L.same_shape(targets))
        throw ShapeError("bce_with_logits: logits " + L.shape_str() + " vs targets " +
                         targets.shape_str());
    Tensor out = Tensor::zeros(L.shape);
    for (std::size_t i = 0; i < L.numel(); ++i) {
        const double l = L.data[i], t = targets.data[i];
        out.data[i] = std::max(l, 0.0) - l * t + std::log1p(std::exp(-std::abs(l)));
    }
    Node n;
    n.op = Op::BceLogits;
    n.in = {il, kNoInput};
    n.value = std::move(out);
    n.aux = std::move(targets);
    return push(std::move(n), "bce_with_logits");
}

const Tensor& Tape::value(Value v) const {
    return nodes_[check(v, "value")].value;
}

double Tape::scalar(Value v) const {
    const Tensor& t = value(v);
    if (!t.is_scalar())
        throw ContractError("scalar: tensor has shape " + t.shape_str());
    return t.data[0];
}

bool Tape::topologically_ordered() const {
    for (std::size_t i = 0; i < nodes_.size(); ++i)
        for (std::uint32_t in : nodes_[i].in)
            if (in != kNoInput && in >= i) return false;
    return true;
}

GradMap Tape::backward(Value output) const {
    const std::uint32_t out = check(output, "backward");
    if (!nodes_[out].value.is_scalar())
        throw ContractError("backward: output must be scalar, got shape " +
                            nodes_[out].value.shape_str());

    std::vector<Tensor> grads(nodes_.size());
    std::vector<bool> live(nodes_.size(), false);
    auto bump = [&](std::uint32_t id) {
        if (!live[id]) {
            grads[id] = Tensor::zeros(nodes_[id].value.shape);
            live[id] = true;
        }
        return &grads[id];
    };
    bump(out)->data[0] = 1.0;

    for (std::uint32_t i = out + 1; i-- > 0;) {
        if (!live[i]) continue;
        const Node& n = nodes_[i];
        const Tensor& g = grads[i];
        switch (n.op) {
            case Op::Input:
            case Op::Param:
                break;
            case Op::MatMul: {
                const Tensor& A = nodes_[n.in[0]].value;
                const Tensor& B = nodes_[n.in[1]].value;
                const std::size_t m = A.shape[0], k = A.shape[1], p = B.shape[1];
                Tensor* ga = bump(n.in[0]);
                Tensor* gb = bump(n.in[1]);
                // dA += g . B^T ; dB += A^T . g
                for (std::size_t r = 0; r < m; ++r)
                    for (std::size_t j = 0; j < p; ++j) {
                        const double gv = g.data[r * p + j];
                        if (gv == 0.0) continue;
                        for (std::size_t kk = 0; kk < k; ++kk) {
                            ga->data[r * k + kk] += gv * B.data[kk * p + j];
                            gb->data[kk * p + j] += gv * A.data[r * k + kk];
                        }
                    }
                break;
            }
            case Op::Add: {
                Tensor* ga = bump(n.in[0]);
                Tensor* gb = bump(n.in[1]);
                for (std::size_t j = 0; j < g.numel(); ++j) {
                    ga->data[j] += g.data[j];
                    gb->data[j] += g.data[j];
                }
                break;
            }
            case Op::AddBias: {
                Tensor* ga = bump(n.in[0]);
                Tensor* gb = bump(n.in[1]);
                const std::size_t rows = n.value.shape[0], cols = n.value.shape[1];
                for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t c = 0; c < cols; ++c) {
                        ga->data[r * cols + c] += g.data[r * cols + c];
                        gb->data[c] += g.data[r * cols + c];
                    }
                break;
            }
            case Op::Sub: {
                Tensor* ga = bump(n.in[0]);
                Tensor* gb = bump(n.in[1]);
                for (std::size_t j = 0; j < g.numel(); ++j) {
                    ga->data[j] += g.data[j];
                    gb->data[j] -= g.data[j];
                }
                break;
            }
            case Op::Mul: {
                const Tensor& A = nodes_[n.in[0]].value;
                const Tensor& B = nodes_[n.in[1]].value;
                Tensor* ga = bump(n.in[0]);
                Tensor* gb = bump(n.in[1]);
                for (std::size_t j = 0; j < g.numel(); ++j) {
                    ga->data[j] += g.data[j] * B.data[j];
                    gb->data[j] += g.data[j] * A.data[j];
                }
                break;
            }
            case Op::Scale: {
                Tensor* ga = bump(n.in[0]);
                for (std::size_t j = 0; j < g.numel(); ++j) ga->data[j] += g.data[j] * n.scalar_arg;
                break;
            }
            case Op::AddScalar: {
                Tensor* ga = bump(n.in[0]);
                for (std::size_t j = 0; j < g.numel(); ++j) ga->data[j] += g.data[j];
                break;
            }
            case Op::Relu: {
                // Subgradient at 0 is 0: output value 0 blocks the flow.
                Tensor* ga = bump(n.in[0]);
                for (std::size_t j = 0; j < g.numel(); ++j)
                    if (n.value.data[j] > 0.0) ga->data[j] += g.data[j];
                break;
            }
            case Op::Sigmoid: {
                Tensor* ga = bump(n.in[0]);
                for (std::size_t j = 0; j < g.numel(); ++j) {
                    const double y = n.value.data[j];
                    ga->data[j] += g.data[j] * y * (1.0 - y);
                }
                break;
            }
            case Op::Exp: {
                Tensor* ga = bump(n.in[0]);
                for (std::size_t j = 0; j < g.numel(); ++j)
                    ga->data[j] += g.data[j] * n.value.data[j];
                break;
            }
            case Op::Log: {
                const Tensor& A = nodes_[n.in[0]].value;
                Tensor* ga = bump(n.in[0]);
                for (std::size_t j = 0; j < g.numel(); ++j) ga->data[j] += g.data[j] / A.data[j];
                break;
            }
            case Op::Reshape: {
                Tensor* ga = bump(n.in[0]);
                for (std::size_t j = 0; j < g.numel(); ++j) ga->data[j] += g.data[j];
                break;
            }
            case Op::ConcatCols: {
                const Tensor& A = nodes_[n.in[0]].value;
                const Tensor& B = nodes_[n.in[1]].value;
                Tensor* ga = bump(n.in[0]);
                Tensor* gb = bump(n.in[1]);
                const std::size_t rows = A.shape[0], ca = A.shape[1], cb = B.shape[1];
                for (std::size_t r = 0; r < rows; ++r) {
                    for (std::size_t c = 0; c < ca; ++c)
                        ga->data[r * ca + c] += g.data[r * (ca + cb) + c];
                    for (std::size_t c = 0; c < cb; ++c)
                        gb->data[r * cb + c] += g.data[r * (ca + cb) + ca + c];
                }
                break;
            }
            case Op::SumAll: {
                Tensor* ga = bump(n.in[0]);
                for (double& v : ga->data) v += g.data[0];
                break;
            }
            case Op::MeanAll: {
                Tensor* ga = bump(n.in[0]);
                const double s = g.data[0] / static_cast<double>(ga->numel());
                for (double& v : ga->data) v += s;
                break;
            }
            case Op::SoftmaxCE: {
                Tensor* ga = bump(n.in[0]);
                const std::size_t rows = n.aux.shape[0], cols = n.aux.shape[1];
                const double inv = g.data[0] / static_cast<double>(rows);
                for (std::size_t r = 0; r < rows; ++r) {
                    for (std::size_t c = 0; c < cols; ++c)
                        ga->data[r * cols + c] += inv * n.aux.data[r * cols + c];
                    ga->data[r * cols + static_cast<std::size_t>(n.labels[r])] -= inv;
                }
                break;
            }
            case Op::BceLogits: {
                const Tensor& L = nodes_[n.in[0]].value;
                Tensor* ga = bump(n.in[0]);
                for (std::size_t j = 0; j < g.numel(); ++j) {
                    const double s = 1.0 / (1.0 + std::exp(-L.data[j]));
                    ga->data[j] += g.data[j] * (s - n.aux.data[j]);
                }
                break;
            }
        }
    }

    GradMap result;
    for (std::size_t i = 0; i < nodes_.size(); ++i)
        if (nodes_[i].op == Op::Param && live[i]) result[nodes_[i].bound->name] = grads[i];
    return result;
}

GradCheckReport grad_check(const std::function<Value(Tape&)>& build_loss,
                           const std::vector<Parameter*>& params,
                           double tol,
                           double fd_step) {
    GradMap analytic;
    {
        Tape tape;
        Value out = build_loss(tape);
        analytic = tape.backward(out);
    }
    auto eval = [&]() {
        Tape tape;
        return tape.scalar(build_loss(tape));
    };

    GradCheckReport report;
    for (Parameter* p : params) {
        const Tensor* ag = nullptr;
        if (auto it = analytic.find(p->name); it != analytic.end()) ag = &it->second;
        for (std::size_t i = 0; i < p->value.numel(); ++i) {
            const double saved = p->value.data[i];
            p->value.data[i] = saved + fd_step;
            const double up = eval();
            p->value.data[i] = saved - fd_step;
            const double down = eval();
            p->value.data[i] = saved;
            const double numeric = (up - down) / (2.0 * fd_step);
            const double a = ag ? ag->data[i] : 0.0;
            const double rel = std::abs(a - numeric) / std::max(1e-8, std::abs(numeric));
            report.max_rel_err = std::max(report.max_rel_err, rel);
        }
    }
    report.pass = report.max_rel_err < tol;
    return report;
}

}  // namespace hijacklab
