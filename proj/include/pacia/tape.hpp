#pragma once

#include <cstdint>
#include <deque>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "pacia/rng.hpp"
#include "pacia/tensor.hpp"

namespace pacia {

// Named trainable tensor with its gradient accumulator.
struct Param {
    std::string name;
    Tensor value;
    Tensor grad;
};

// Flat, insertion-ordered collection of trainable parameters. The insertion
// order is the documented iteration order used for optimizer steps,
// checkpoints and snapshots.
class ParamStore {
  public:
    std::size_t add(std::string name, Tensor init);

    Param& at(std::size_t i) { return params_[i]; }
    const Param& at(std::size_t i) const { return params_[i]; }
    std::size_t index_of(const std::string& name) const;
    bool contains(const std::string& name) const { return by_name_.count(name) > 0; }

    std::size_t size() const { return params_.size(); }
    std::size_t value_count() const;

    void zero_grads();
    std::vector<Tensor> snapshot_values() const;
    void restore_values(const std::vector<Tensor>& values);

    auto begin() { return params_.begin(); }
    auto end() { return params_.end(); }
    auto begin() const { return params_.begin(); }
    auto end() const { return params_.end(); }

  private:
    std::deque<Param> params_;  // deque: stable addresses for tape leaves
    std::unordered_map<std::string, std::size_t> by_name_;
};

enum class Op : std::uint8_t {
    kLeaf,
    kInput,
    kAdd,
    kSub,
    kMul,
    kAddRowVec,
    kMulRowVec,
    kMulScalar,
    kScale,
    kMatmul,
    kDot,
    kConcat,
    kStackRows,
    kRow,
    kPick,
    kSlice,
    kSum,
    kMean,
    kSumAll,
    kReshape,
    kBroadcastRows,
    kPairwiseDiff,
    kAbs,
    kExp,
    kLog,
    kClampMin,
    kRelu,
    kLeakyRelu,
    kSigmoid,
    kSoftmax,
};

const char* op_name(Op op);

class Tape;

// Lightweight handle to a tape node.
struct Var {
    Tape* tape = nullptr;
    int id = -1;

    bool valid() const { return tape != nullptr && id >= 0; }
    const Tensor& value() const;
    const std::vector<std::size_t>& shape() const;
    std::size_t size() const { return value().size(); }
};

// Define-by-run tape: forward values are computed eagerly as ops are
// recorded; backward walks the record in exact reverse order. A tape is
// confined to one worker and rebuilt per forward pass.
class Tape {
  public:
    struct Node {
        Op op;
        int a = -1;
        int b = -1;
        std::vector<int> extra_inputs;  // concat / stack_rows
        Tensor value;
        Tensor grad;  // allocated lazily during backward
        Param* param = nullptr;
        int i0 = 0;
        int i1 = 0;
        double d0 = 0.0;
    };

    Var leaf(Param& p);
    Var input(Tensor t);  // constant; no gradient is propagated into it
    Var constant(double v) { return input(Tensor::scalar(v)); }

    // Runs backward from a scalar loss, accumulating into Param::grad of
    // every reachable leaf. Callers zero the store's grads beforehand;
    // untouched leaves therefore read as exactly zero.
    void backward(Var loss);

    std::size_t size() const { return nodes_.size(); }
    const Node& node(int id) const { return nodes_[id]; }
    void clear() { nodes_.clear(); }

    // Name of the first node (in creation order) holding a non-finite value,
    // or empty string. Used for NaN-loss diagnostics.
    std::string first_non_finite() const;

  private:
    friend Var emit(Tape& t, Tape::Node n);
    std::vector<Node> nodes_;
};

// --- op builders -----------------------------------------------------------

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var add_rowvec(Var m, Var v);  // [r,c] + [c] per row
Var mul_rowvec(Var m, Var v);  // [r,c] * [c] per row
Var mul_scalar(Var a, Var s);  // a * s, s shape [1]
Var scale(Var a, double c);    // a * c (constant)
Var matmul(Var a, Var b);
Var dot(Var a, Var b);  // 1-D . 1-D -> [1]
Var concat(std::span<const Var> parts);
Var concat(std::initializer_list<Var> parts);
Var stack_rows(std::span<const Var> rows);  // k x [n] -> [k,n]
Var row(Var m, std::size_t i);              // [r,c] -> [c]
Var pick(Var v, std::size_t i);             // [n] -> [1]
Var slice(Var v, std::size_t start, std::size_t len);
Var sum(Var a, int axis);   // [r,c]: axis 0 -> [c], axis 1 -> [r]
Var mean(Var a, int axis);
Var sum_all(Var a);  // -> [1]
Var reshape(Var a, std::vector<std::size_t> shape);
Var broadcast_rows(Var v, std::size_t n_rows);  // [c] -> [n_rows,c]
Var pairwise_diff(Var m);                       // [n,d] -> [n*n,d], row i*n+j = m[i]-m[j]
Var abs(Var a);
Var exp(Var a);
Var log(Var a);
Var clamp_min(Var a, double lo);
Var relu(Var a);
Var leaky_relu(Var a, double slope = 0.01);
Var sigmoid(Var a);
Var softmax(Var a);  // 1-D, max-subtracted

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }

// Multiplies by an inverted-dropout mask drawn from `rng`; identity when
// disabled or rate is zero.
Var dropout(Var a, double rate, RngStream& rng, bool enabled);

// String-keyed dispatch for the uniform-arity ops (test/diagnostic surface).
// Throws on unknown op kind.
Var apply(const std::string& op_kind, std::span<const Var> inputs);

}  // namespace pacia
