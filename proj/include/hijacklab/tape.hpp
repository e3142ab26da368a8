#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "hijacklab/tensor.hpp"

namespace hijacklab {

class Tape;

/// A trainable tensor with its gradient buffer.
struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;

    Parameter() = default;
    Parameter(std::string name_, Tensor value_);

    void zero_grad();
};

/// Handle to a node on a tape. Only valid with the tape that created it.
struct Value {
    std::uint32_t id = 0;
    const Tape* owner = nullptr;
};

/// Gradients by parameter name, as produced by Tape::backward.
using GradMap = std::map<std::string, Tensor>;

/// Records a forward computation and replays it in reverse for gradients.
///
/// Nodes are appended in construction order, so inputs always precede their
/// consumers and a single reverse sweep visits each node exactly once. Every
/// op validates shapes up front and checks its output for non-finite values.
/// A tape is built and consumed by one logical thread.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;
    Tape(Tape&&) = default;
    Tape& operator=(Tape&&) = default;

    /// Constant leaf. Receives no gradient entry.
    Value input(Tensor t);

    /// Trainable leaf. backward() reports a gradient under p.name.
    /// The parameter must outlive the tape. Names must be unique per tape.
    Value param(Parameter& p);

    // -- differentiable ops ---------------------------------------------

    Value matmul(Value a, Value b);
    /// Elementwise add; also accepts matrix + row vector (bias broadcast).
    /// That is the only supported broadcast in the library.
    Value add(Value a, Value b);
    Value sub(Value a, Value b);
    /// Elementwise product (same shape only).
    Value mul(Value a, Value b);
    Value scale(Value a, double s);
    Value add_scalar(Value a, double s);
    Value relu(Value a);
    Value sigmoid(Value a);
    Value exp(Value a);
    Value log(Value a);
    Value reshape(Value a, std::vector<std::size_t> shape);
    /// Concatenate two matrices along columns: [m x n1] ++ [m x n2].
    Value concat_cols(Value a, Value b);
    Value sum_all(Value a);
    Value mean_all(Value a);

    /// Mean softmax cross-entropy of logit rows against integer labels.
    /// Stable log-sum-exp formulation; gradient is (softmax - onehot)/batch.
    Value softmax_cross_entropy(Value logits, std::vector<int> labels);

    /// Elementwise binary cross-entropy of sigmoid(logits) against targets,
    /// computed in the numerically stable logits form. Targets are constants.
    Value bce_with_logits(Value logits, Tensor targets);

    // -- evaluation ------------------------------------------------------

    const Tensor& value(Value v) const;
    double scalar(Value v) const;
    std::size_t size() const { return nodes_.size(); }

    /// Reverse sweep from a scalar output. Returns gradients for every
    /// parameter leaf; pure (a second call yields the same map).
    GradMap backward(Value output) const;

    /// True if every node's inputs have smaller ids than the node itself.
    bool topologically_ordered() const;

private:
    enum class Op : std::uint8_t {
        Input, Param, MatMul, Add, AddBias, Sub, Mul, Scale, AddScalar,
        Relu, Sigmoid, Exp, Log, Reshape, ConcatCols, SumAll, MeanAll,
        SoftmaxCE, BceLogits,
    };

    struct Node {
        Op op;
        std::array<std::uint32_t, 2> in{kNoInput, kNoInput};
        Tensor value;
        double scalar_arg = 0.0;
        Tensor aux;                   // op-specific saved forward data
        std::vector<int> labels;      // SoftmaxCE
        Parameter* bound = nullptr;   // Param leaves
    };

    static constexpr std::uint32_t kNoInput = ~std::uint32_t{0};

    Value push(Node n, const char* opname);
    std::uint32_t check(Value v, const char* opname) const;
    static const char* op_name(Op op);

    std::vector<Node> nodes_;
};

/// Result of a finite-difference gradient audit.
struct GradCheckReport {
    double max_rel_err = 0.0;
    bool pass = false;
};

/// Compares analytic gradients against central finite differences.
///
/// `build_loss` must construct a scalar loss on the given tape, registering
/// each of `params` on it (directly or through model helpers). The relative
/// error of component i is |analytic - numeric| / max(1e-8, |numeric|).
/// Never throws on mismatch; the report carries the verdict.
GradCheckReport grad_check(const std::function<Value(Tape&)>& build_loss,
                           const std::vector<Parameter*>& params,
                           double tol,
                           double fd_step = 1e-5);

}  // namespace hijacklab
