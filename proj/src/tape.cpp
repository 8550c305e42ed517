#include "pacia/tape.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

namespace pacia {

// --- ParamStore --------------------------------------------------------------

std::size_t ParamStore::add(std::string name, Tensor init) {
    if (by_name_.count(name)) {
        throw std::runtime_error(fmt::format("duplicate parameter name '{}'", name));
    }
    const std::size_t idx = params_.size();
    Tensor grad = Tensor::zeros(init.shape());
    params_.push_back(Param{std::move(name), std::move(init), std::move(grad)});
    by_name_.emplace(params_.back().name, idx);
    return idx;
}

std::size_t ParamStore::index_of(const std::string& name) const {
    auto it = by_name_.find(name);
    if (it == by_name_.end()) {
        throw std::runtime_error(fmt::format("unknown parameter '{}'", name));
    }
    return it->second;
}

std::size_t ParamStore::value_count() const {
    std::size_t n = 0;
    for (const Param& p : params_) n += p.value.size();
    return n;
}

void ParamStore::zero_grads() {
    for (Param& p : params_) p.grad.fill(0.0);
}

std::vector<Tensor> ParamStore::snapshot_values() const {
    std::vector<Tensor> out;
    out.reserve(params_.size());
    for (const Param& p : params_) out.push_back(p.value);
    return out;
}

void ParamStore::restore_values(const std::vector<Tensor>& values) {
    if (values.size() != params_.size()) {
        throw std::runtime_error("snapshot size does not match parameter store");
    }
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!values[i].same_shape(params_[i].value)) {
            throw ShapeError(fmt::format("snapshot shape mismatch at '{}'", params_[i].name));
        }
        params_[i].value = values[i];
    }
}

// --- Tape --------------------------------------------------------------------

const char* op_name(Op op) {
    switch (op) {
        case Op::kLeaf: return "leaf";
        case Op::kInput: return "input";
        case Op::kAdd: return "add";
        case Op::kSub: return "sub";
        case Op::kMul: return "mul";
        case Op::kAddRowVec: return "add_rowvec";
        case Op::kMulRowVec: return "mul_rowvec";
        case Op::kMulScalar: return "mul_scalar";
        case Op::kScale: return "scale";
        case Op::kMatmul: return "matmul";
        case Op::kDot: return "dot";
        case Op::kConcat: return "concat";
        case Op::kStackRows: return "stack_rows";
        case Op::kRow: return "row";
        case Op::kPick: return "pick";
        case Op::kSlice: return "slice";
        case Op::kSum: return "sum";
        case Op::kMean: return "mean";
        case Op::kSumAll: return "sum_all";
        case Op::kReshape: return "reshape";
        case Op::kBroadcastRows: return "broadcast_rows";
        case Op::kPairwiseDiff: return "pairwise_diff";
        case Op::kAbs: return "abs";
        case Op::kExp: return "exp";
        case Op::kLog: return "log";
        case Op::kClampMin: return "clamp_min";
        case Op::kRelu: return "relu";
        case Op::kLeakyRelu: return "leaky_relu";
        case Op::kSigmoid: return "sigmoid";
        case Op::kSoftmax: return "softmax";
    }
    return "?";
}

const Tensor& Var::value() const { return tape->node(id).value; }
const std::vector<std::size_t>& Var::shape() const { return value().shape(); }

Var emit(Tape& t, Tape::Node n) {
    t.nodes_.push_back(std::move(n));
    return Var{&t, static_cast<int>(t.nodes_.size()) - 1};
}

Var Tape::leaf(Param& p) {
    Node n;
    n.op = Op::kLeaf;
    n.value = p.value;
    n.param = &p;
    return emit(*this, std::move(n));
}

Var Tape::input(Tensor t) {
    Node n;
    n.op = Op::kInput;
    n.value = std::move(t);
    return emit(*this, std::move(n));
}

std::string Tape::first_non_finite() const {
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        if (!nodes_[i].value.all_finite()) {
            const Node& n = nodes_[i];
            if (n.op == Op::kLeaf && n.param) {
                return fmt::format("leaf '{}'", n.param->name);
            }
            return fmt::format("node #{} ({})", i, op_name(n.op));
        }
    }
    return "";
}

namespace {

[[noreturn]] void shape_fail(const char* op, const Tensor& a, const Tensor& b) {
    throw ShapeError(
        fmt::format("{}: incompatible shapes {} and {}", op, shape_str(a.shape()), shape_str(b.shape())));
}

[[noreturn]] void shape_fail(const char* op, const Tensor& a) {
    throw ShapeError(fmt::format("{}: bad input shape {}", op, shape_str(a.shape())));
}

void check_same_tape(Var a, Var b) {
    if (a.tape != b.tape) throw std::runtime_error("vars belong to different tapes");
}

Tensor& ensure_grad(Tape::Node& n) {
    if (n.grad.empty()) n.grad = Tensor::zeros(n.value.shape());
    return n.grad;
}

}  // namespace

// --- builders ------------------------------------------------------------

namespace {

Var binary_same_shape(const char* name, Op op, Var a, Var b) {
    check_same_tape(a, b);
    const Tensor& va = a.value();
    const Tensor& vb = b.value();
    if (!va.same_shape(vb)) shape_fail(name, va, vb);
    Tape::Node n;
    n.op = op;
    n.a = a.id;
    n.b = b.id;
    n.value = Tensor::uninit(va.shape());
    const std::size_t sz = va.size();
    const double* pa = va.data();
    const double* pb = vb.data();
    double* out = n.value.data();
    switch (op) {
        case Op::kAdd:
            for (std::size_t i = 0; i < sz; ++i) out[i] = pa[i] + pb[i];
            break;
        case Op::kSub:
            for (std::size_t i = 0; i < sz; ++i) out[i] = pa[i] - pb[i];
            break;
        case Op::kMul:
            for (std::size_t i = 0; i < sz; ++i) out[i] = pa[i] * pb[i];
            break;
        default:
            throw std::runtime_error("binary_same_shape: bad op");
    }
    return emit(*a.tape, std::move(n));
}

}  // namespace

Var add(Var a, Var b) { return binary_same_shape("add", Op::kAdd, a, b); }
Var sub(Var a, Var b) { return binary_same_shape("sub", Op::kSub, a, b); }
Var mul(Var a, Var b) { return binary_same_shape("mul", Op::kMul, a, b); }

namespace {

Var rowvec_op(const char* name, Op op, Var m, Var v) {
    check_same_tape(m, v);
    const Tensor& vm = m.value();
    const Tensor& vv = v.value();
    if (vm.rank() != 2 || vv.rank() != 1 || vm.cols() != vv.size()) shape_fail(name, vm, vv);
    Tape::Node n;
    n.op = op;
    n.a = m.id;
    n.b = v.id;
    n.value = Tensor::uninit(vm.shape());
    const std::size_t r = vm.rows(), c = vm.cols();
    const double* pm = vm.data();
    const double* pv = vv.data();
    double* out = n.value.data();
    if (op == Op::kAddRowVec) {
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) out[i * c + j] = pm[i * c + j] + pv[j];
    } else {
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) out[i * c + j] = pm[i * c + j] * pv[j];
    }
    return emit(*m.tape, std::move(n));
}

}  // namespace

Var add_rowvec(Var m, Var v) { return rowvec_op("add_rowvec", Op::kAddRowVec, m, v); }
Var mul_rowvec(Var m, Var v) { return rowvec_op("mul_rowvec", Op::kMulRowVec, m, v); }

Var mul_scalar(Var a, Var s) {
    check_same_tape(a, s);
    if (s.value().size() != 1) shape_fail("mul_scalar", a.value(), s.value());
    Tape::Node n;
    n.op = Op::kMulScalar;
    n.a = a.id;
    n.b = s.id;
    n.value = Tensor::uninit(a.value().shape());
    const double sv = s.value()[0];
    const double* pa = a.value().data();
    double* out = n.value.data();
    for (std::size_t i = 0; i < a.value().size(); ++i) out[i] = pa[i] * sv;
    return emit(*a.tape, std::move(n));
}

Var scale(Var a, double c) {
    Tape::Node n;
    n.op = Op::kScale;
    n.a = a.id;
    n.d0 = c;
    n.value = Tensor::uninit(a.value().shape());
    const double* pa = a.value().data();
    double* out = n.value.data();
    for (std::size_t i = 0; i < a.value().size(); ++i) out[i] = pa[i] * c;
    return emit(*a.tape, std::move(n));
}

Var matmul(Var a, Var b) {
    check_same_tape(a, b);
    const Tensor& va = a.value();
    const Tensor& vb = b.value();
    if (va.rank() != 2 || vb.rank() != 2 || va.cols() != vb.rows()) shape_fail("matmul", va, vb);
    const std::size_t m = va.rows(), k = va.cols(), p = vb.cols();
    Tape::Node n;
    n.op = Op::kMatmul;
    n.a = a.id;
    n.b = b.id;
    n.value = Tensor::zeros({m, p});
    const double* pa = va.data();
    const double* pb = vb.data();
    double* out = n.value.data();
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t kk = 0; kk < k; ++kk) {
            const double aik = pa[i * k + kk];
            if (aik == 0.0) continue;
            const double* brow = pb + kk * p;
            double* orow = out + i * p;
            for (std::size_t j = 0; j < p; ++j) orow[j] += aik * brow[j];
        }
    }
    return emit(*a.tape, std::move(n));
}

Var dot(Var a, Var b) {
    check_same_tape(a, b);
    const Tensor& va = a.value();
    const Tensor& vb = b.value();
    if (va.rank() != 1 || !va.same_shape(vb)) shape_fail("dot", va, vb);
    double s = 0.0;
    for (std::size_t i = 0; i < va.size(); ++i) s += va[i] * vb[i];
    Tape::Node n;
    n.op = Op::kDot;
    n.a = a.id;
    n.b = b.id;
    n.value = Tensor::scalar(s);
    return emit(*a.tape, std::move(n));
}

Var concat(std::span<const Var> parts) {
    if (parts.empty()) throw ShapeError("concat: no inputs");
    std::size_t total = 0;
    for (const Var& p : parts) {
        if (p.value().rank() != 1) shape_fail("concat", p.value());
        total += p.value().size();
    }
    Tape::Node n;
    n.op = Op::kConcat;
    n.value = Tensor::uninit({total});
    double* out = n.value.data();
    std::size_t off = 0;
    for (const Var& p : parts) {
        n.extra_inputs.push_back(p.id);
        const Tensor& v = p.value();
        std::copy(v.data(), v.data() + v.size(), out + off);
        off += v.size();
    }
    return emit(*parts[0].tape, std::move(n));
}

Var concat(std::initializer_list<Var> parts) {
    std::vector<Var> v(parts);
    return concat(std::span<const Var>(v));
}

Var stack_rows(std::span<const Var> rows) {
    if (rows.empty()) throw ShapeError("stack_rows: no inputs");
    const std::size_t c = rows[0].value().size();
    for (const Var& r : rows) {
        if (r.value().rank() != 1 || r.value().size() != c) shape_fail("stack_rows", r.value());
    }
    Tape::Node n;
    n.op = Op::kStackRows;
    n.value = Tensor::uninit({rows.size(), c});
    double* out = n.value.data();
    for (std::size_t i = 0; i < rows.size(); ++i) {
        n.extra_inputs.push_back(rows[i].id);
        const double* src = rows[i].value().data();
        std::copy(src, src + c, out + i * c);
    }
    return emit(*rows[0].tape, std::move(n));
}

Var row(Var m, std::size_t i) {
    const Tensor& vm = m.value();
    if (vm.rank() != 2 || i >= vm.rows()) {
        throw ShapeError(fmt::format("row: index {} out of range for shape {}", i, shape_str(vm.shape())));
    }
    Tape::Node n;
    n.op = Op::kRow;
    n.a = m.id;
    n.i0 = static_cast<int>(i);
    const std::size_t c = vm.cols();
    n.value = Tensor::uninit({c});
    std::copy(vm.data() + i * c, vm.data() + (i + 1) * c, n.value.data());
    return emit(*m.tape, std::move(n));
}

Var pick(Var v, std::size_t i) {
    const Tensor& vv = v.value();
    if (vv.rank() != 1 || i >= vv.size()) {
        throw ShapeError(fmt::format("pick: index {} out of range for shape {}", i, shape_str(vv.shape())));
    }
    Tape::Node n;
    n.op = Op::kPick;
    n.a = v.id;
    n.i0 = static_cast<int>(i);
    n.value = Tensor::scalar(vv[i]);
    return emit(*v.tape, std::move(n));
}

Var slice(Var v, std::size_t start, std::size_t len) {
    const Tensor& vv = v.value();
    if (vv.rank() != 1 || start + len > vv.size() || len == 0) {
        throw ShapeError(fmt::format("slice: [{},{}) out of range for shape {}", start, start + len,
                                     shape_str(vv.shape())));
    }
    Tape::Node n;
    n.op = Op::kSlice;
    n.a = v.id;
    n.i0 = static_cast<int>(start);
    n.i1 = static_cast<int>(len);
    n.value = Tensor::uninit({len});
    std::copy(vv.data() + start, vv.data() + start + len, n.value.data());
    return emit(*v.tape, std::move(n));
}

namespace {

Var reduce_axis(const char* name, Op op, Var a, int axis) {
    const Tensor& va = a.value();
    if (va.rank() != 2 || (axis != 0 && axis != 1)) shape_fail(name, va);
    const std::size_t r = va.rows(), c = va.cols();
    Tape::Node n;
    n.op = op;
    n.a = a.id;
    n.i0 = axis;
    const std::size_t out_len = axis == 0 ? c : r;
    n.value = Tensor::zeros({out_len});
    const double* pa = va.data();
    double* out = n.value.data();
    for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < c; ++j) {
            out[axis == 0 ? j : i] += pa[i * c + j];
        }
    }
    if (op == Op::kMean) {
        const double denom = axis == 0 ? static_cast<double>(r) : static_cast<double>(c);
        for (std::size_t i = 0; i < out_len; ++i) out[i] /= denom;
    }
    return emit(*a.tape, std::move(n));
}

}  // namespace

Var sum(Var a, int axis) { return reduce_axis("sum", Op::kSum, a, axis); }
Var mean(Var a, int axis) { return reduce_axis("mean", Op::kMean, a, axis); }

Var sum_all(Var a) {
    const Tensor& va = a.value();
    double s = 0.0;
    for (std::size_t i = 0; i < va.size(); ++i) s += va[i];
    Tape::Node n;
    n.op = Op::kSumAll;
    n.a = a.id;
    n.value = Tensor::scalar(s);
    return emit(*a.tape, std::move(n));
}

Var reshape(Var a, std::vector<std::size_t> shape) {
    std::size_t cnt = 1;
    for (std::size_t d : shape) cnt *= d;
    if (cnt != a.value().size() || shape.empty() || shape.size() > 2) {
        throw ShapeError(fmt::format("reshape: cannot view {} as {}", shape_str(a.value().shape()),
                                     shape_str(shape)));
    }
    Tape::Node n;
    n.op = Op::kReshape;
    n.a = a.id;
    n.value = Tensor::from(std::move(shape), a.value().values());
    return emit(*a.tape, std::move(n));
}

Var broadcast_rows(Var v, std::size_t n_rows) {
    const Tensor& vv = v.value();
    if (vv.rank() != 1 || n_rows == 0) shape_fail("broadcast_rows", vv);
    Tape::Node n;
    n.op = Op::kBroadcastRows;
    n.a = v.id;
    n.i0 = static_cast<int>(n_rows);
    const std::size_t c = vv.size();
    n.value = Tensor::uninit({n_rows, c});
    for (std::size_t i = 0; i < n_rows; ++i) {
        std::copy(vv.data(), vv.data() + c, n.value.data() + i * c);
    }
    return emit(*v.tape, std::move(n));
}

Var pairwise_diff(Var m) {
    const Tensor& vm = m.value();
    if (vm.rank() != 2) shape_fail("pairwise_diff", vm);
    const std::size_t r = vm.rows(), c = vm.cols();
    Tape::Node n;
    n.op = Op::kPairwiseDiff;
    n.a = m.id;
    n.value = Tensor::uninit({r * r, c});
    const double* pm = vm.data();
    double* out = n.value.data();
    for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < r; ++j) {
            double* orow = out + (i * r + j) * c;
            const double* ri = pm + i * c;
            const double* rj = pm + j * c;
            for (std::size_t kk = 0; kk < c; ++kk) orow[kk] = ri[kk] - rj[kk];
        }
    }
    return emit(*m.tape, std::move(n));
}

namespace {

template <typename F>
Var unary(const char* /*name*/, Op op, Var a, F f, double d0 = 0.0) {
    Tape::Node n;
    n.op = op;
    n.a = a.id;
    n.d0 = d0;
    n.value = Tensor::uninit(a.value().shape());
    const double* pa = a.value().data();
    double* out = n.value.data();
    for (std::size_t i = 0; i < a.value().size(); ++i) out[i] = f(pa[i]);
    return emit(*a.tape, std::move(n));
}

}  // namespace

Var abs(Var a) {
    return unary("abs", Op::kAbs, a, [](double x) { return std::fabs(x); });
}
Var exp(Var a) {
    return unary("exp", Op::kExp, a, [](double x) { return std::exp(x); });
}
Var log(Var a) {
    return unary("log", Op::kLog, a, [](double x) { return std::log(x); });
}
Var clamp_min(Var a, double lo) {
    return unary("clamp_min", Op::kClampMin, a, [lo](double x) { return x < lo ? lo : x; }, lo);
}
Var relu(Var a) {
    return unary("relu", Op::kRelu, a, [](double x) { return x > 0.0 ? x : 0.0; });
}
Var leaky_relu(Var a, double slope) {
    return unary("leaky_relu", Op::kLeakyRelu, a,
                 [slope](double x) { return x > 0.0 ? x : slope * x; }, slope);
}
Var sigmoid(Var a) {
    return unary("sigmoid", Op::kSigmoid, a, [](double x) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
    });
}

Var softmax(Var a) {
    const Tensor& va = a.value();
    if (va.rank() != 1) shape_fail("softmax", va);
    Tape::Node n;
    n.op = Op::kSoftmax;
    n.a = a.id;
    n.value = Tensor::uninit(va.shape());
    double mx = va[0];
    for (std::size_t i = 1; i < va.size(); ++i) mx = std::max(mx, va[i]);
    double s = 0.0;
    double* out = n.value.data();
    for (std::size_t i = 0; i < va.size(); ++i) {
        out[i] = std::exp(va[i] - mx);
        s += out[i];
    }
    for (std::size_t i = 0; i < va.size(); ++i) out[i] /= s;
    return emit(*a.tape, std::move(n));
}

Var dropout(Var a, double rate, RngStream& rng, bool enabled) {
    if (!enabled || rate <= 0.0) return a;
    if (rate >= 1.0) throw std::runtime_error("dropout rate must be < 1");
    Tensor mask = Tensor::uninit(a.value().shape());
    const double keep = 1.0 - rate;
    for (std::size_t i = 0; i < mask.size(); ++i) {
        mask[i] = rng.uniform() < rate ? 0.0 : 1.0 / keep;
    }
    return mul(a, a.tape->input(std::move(mask)));
}

// --- backward ------------------------------------------------------------

void Tape::backward(Var loss) {
    if (!loss.valid() || loss.tape != this) {
        throw std::runtime_error("backward: loss is not on this tape");
    }
    if (nodes_.empty()) throw std::runtime_error("backward: empty tape");
    if (loss.value().size() != 1) {
        throw ShapeError(
            fmt::format("backward: loss must have shape [1], got {}", shape_str(loss.shape())));
    }

    ensure_grad(nodes_[loss.id])[0] = 1.0;

    for (int id = loss.id; id >= 0; --id) {
        Node& n = nodes_[id];
        if (n.grad.empty()) continue;  // not reachable from the loss
        const double* g = n.grad.data();
        const std::size_t gsz = n.grad.size();
        switch (n.op) {
            case Op::kLeaf: {
                Tensor& pg = n.param->grad;
                for (std::size_t i = 0; i < gsz; ++i) pg[i] += g[i];
                break;
            }
            case Op::kInput:
                break;
            case Op::kAdd: {
                Tensor& ga = ensure_grad(nodes_[n.a]);
                Tensor& gb = ensure_grad(nodes_[n.b]);
                for (std::size_t i = 0; i < gsz; ++i) {
                    ga[i] += g[i];
                    gb[i] += g[i];
                }
                break;
            }
            case Op::kSub: {
                Tensor& ga = ensure_grad(nodes_[n.a]);
                Tensor& gb = ensure_grad(nodes_[n.b]);
                for (std::size_t i = 0; i < gsz; ++i) {
                    ga[i] += g[i];
                    gb[i] -= g[i];
                }
                break;
            }
            case Op::kMul: {
                Tensor& ga = ensure_grad(nodes_[n.a]);
                Tensor& gb = ensure_grad(nodes_[n.b]);
                const double* va = nodes_[n.a].value.data();
                const double* vb = nodes_[n.b].value.data();
                for (std::size_t i = 0; i < gsz; ++i) {
                    ga[i] += g[i] * vb[i];
                    gb[i] += g[i] * va[i];
                }
                break;
            }
            case Op::kAddRowVec: {
                Tensor& ga = ensure_grad(nodes_[n.a]);
                Tensor& gb = ensure_grad(nodes_[n.b]);
                const std::size_t r = n.value.rows(), c = n.value.cols();
                for (std::size_t i = 0; i < r; ++i) {
                    for (std::size_t j = 0; j < c; ++j) {
                        ga[i * c + j] += g[i * c + j];
                        gb[j] += g[i * c + j];
                    }
                }
                break;
            }
            case Op::kMulRowVec: {
                Tensor& ga = ensure_grad(nodes_[n.a]);
                Tensor& gb = ensure_grad(nodes_[n.b]);
                const double* va = nodes_[n.a].value.data();
                const double* vb = nodes_[n.b].value.data();
                const std::size_t r = n.value.rows(), c = n.value.cols();
                for (std::size_t i = 0; i < r; ++i) {
                    for (std::size_t j = 0; j < c; ++j) {
                        ga[i * c + j] += g[i * c + j] * vb[j];
                        gb[j] += g[i * c + j] * va[i * c + j];
                    }
                }
                break;
            }
            case Op::kMulScalar: {
                Tensor& ga = ensure_grad(nodes_[n.a]);
                Tensor& gs = ensure_grad(nodes_[n.b]);
                const double* va = nodes_[n.a].value.data();
                const double sv = nodes_[n.b].value[0];
                double acc = 0.0;
                for (std::size_t i = 0; i < gsz; ++i) {
                    ga[i] += g[i] * sv;
                    acc += g[i] * va[i];
                }
                gs[0] += acc;
                break;
            }
            case Op::kScale: {
                Tensor& ga = ensure_grad(nodes_[n.a]);
                for (std::size_t i = 0; i < gsz; ++i) ga[i] += g[i] * n.d0;
                break;
            }
            case Op::kMatmul: {
                Tensor& ga = ensure_grad(nodes_[n.a]);
                Tensor& gb = ensure_grad(nodes_[n.b]);
                const Tensor& va = nodes_[n.a].value;
                const Tensor& vb = nodes_[n.b].value;
                const std::size_t m = va.rows(), k = va.cols(), p = vb.cols();
                // dA += dC . B^T
                for (std::size_t i = 0; i < m; ++i) {
                    const double* grow = g + i * p;
                    for (std::size_t kk = 0; kk < k; ++kk) {
                        const double* brow = vb.data() + kk * p;
                        double acc = 0.0;
                        for (std::size_t j = 0; j < p; ++j) acc += grow[j] * brow[j];
                        ga[i * k + kk] += acc;
                    }
                }
                // dB += A^T . dC
                for (std::size_t i = 0; i < m; ++i) {
                    const double* arow = va.data() + i * k;
                    const double* grow = g + i * p;
                    for (std::size_t kk = 0; kk < k; ++kk) {
                        const double aik = arow[kk];
                        if (aik == 0.0) continue;
                        double* gbrow = gb.data() + kk * p;
                        for (std::size_t j = 0; j < p; ++j) gbrow[j] += aik * grow[j];
                    }
                }
                break;
            }
            case Op::kDot: {
                Tensor& ga = ensure_grad(nodes_[n.a]);
                Tensor& gb = ensure_grad(nodes_[n.b]);
                const double* va = nodes_[n.a].value.data();
                const double* vb = nodes_[n.b].value.data();
                const double g0 = g[0];
                for (std::size_t i = 0; i < ga.size(); ++i) {
                    ga[i] += g0 * vb[i];
                    gb[i] += g0 * va[i];
                }
                break;
            }
            case Op::kConcat: {
                std::size_t off = 0;
                for (int src : n.extra_inputs) {
                    Tensor& gs = ensure_grad(nodes_[src]);
                    for (std::size_t i = 0; i < gs.size(); ++i) gs[i] += g[off + i];
                    off += gs.size();
                }
                break;
            }
            case Op::kStackRows: {
                const std::size_t c = n.value.cols();
                for (std::size_t r = 0; r < n.extra_inputs.size(); ++r) {
                    Tensor& gs = ensure_grad(nodes_[n.extra_inputs[r]]);
                    for (std::size_t j = 0; j < c; ++j) gs[j] += g[r * c + j];
                }
                break;
            }
            case Op::kRow: {
                Tensor& ga = ensure_grad(nodes_[n.a]);
                const std::size_t c = n.value.size();
                for (std::size_t j = 0; j < c; ++j) ga[n.i0 * c + j] += g[j];
                break;
            }
            case Op::kPick: {
                Tensor& ga = ensure_grad(nodes_[n.a]);
                ga[n.i0] += g[0];
                break;
            }
            case Op::kSlice: {
                Tensor& ga = ensure_grad(nodes_[n.a]);
                for (int j = 0; j < n.i1; ++j) ga[n.i0 + j] += g[j];
                break;
            }
            case Op::kSum:
            case Op::kMean: {
                Tensor& ga = ensure_grad(nodes_[n.a]);
                const Tensor& va = nodes_[n.a].value;
                const std::size_t r = va.rows(), c = va.cols();
                const double denom = n.op == Op::kMean
                                         ? (n.i0 == 0 ? static_cast<double>(r) : static_cast<double>(c))
                                         : 1.0;
                for (std::size_t i = 0; i < r; ++i) {
                    for (std::size_t j = 0; j < c; ++j) {
                        ga[i * c + j] += g[n.i0 == 0 ? j : i] / denom;
                    }
                }
                break;
            }
            case Op::kSumAll: {
                Tensor& ga = ensure_grad(nodes_[n.a]);
                const double g0 = g[0];
                for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g0;
                break;
            }
            case Op::kReshape: {
                Tensor& ga = ensure_grad(nodes_[n.a]);
                for (std::size_t i = 0; i < gsz; ++i) ga[i] += g[i];
                break;
            }
            case Op::kBroadcastRows: {
                Tensor& ga = ensure_grad(nodes_[n.a]);
                const std::size_t c = ga.size();
                for (std::size_t i = 0; i < static_cast<std::size_t>(n.i0); ++i) {
                    for (std::size_t j = 0; j < c; ++j) ga[j] += g[i * c + j];
                }
                break;
            }
            case Op::kPairwiseDiff: {
                Tensor& ga = ensure_grad(nodes_[n.a]);
                const std::size_t r = nodes_[n.a].value.rows(), c = nodes_[n.a].value.cols();
                for (std::size_t i = 0; i < r; ++i) {
                    for (std::size_t j = 0; j < r; ++j) {
                        const double* grow = g + (i * r + j) * c;
                        double* gi = ga.data() + i * c;
                        double* gj = ga.data() + j * c;
                        for (std::size_t kk = 0; kk < c; ++kk) {
                            gi[kk] += grow[kk];
                            gj[kk] -= grow[kk];
                        }
                    }
                }
                break;
            }
            case Op::kAbs: {
                Tensor& ga = ensure_grad(nodes_[n.a]);
                const double* va = nodes_[n.a].value.data();
                for (std::size_t i = 0; i < gsz; ++i) {
                    ga[i] += va[i] > 0.0 ? g[i] : (va[i] < 0.0 ? -g[i] : 0.0);
                }
                break;
            }
            case Op::kExp: {
                Tensor& ga = ensure_grad(nodes_[n.a]);
                const double* out = n.value.data();
                for (std::size_t i = 0; i < gsz; ++i) ga[i] += g[i] * out[i];
                break;
            }
            case Op::kLog: {
                Tensor& ga = ensure_grad(nodes_[n.a]);
                const double* va = nodes_[n.a].value.data();
                for (std::size_t i = 0; i < gsz; ++i) ga[i] += g[i] / va[i];
                break;
            }
            case Op::kClampMin: {
                Tensor& ga = ensure_grad(nodes_[n.a]);
                const double* va = nodes_[n.a].value.data();
                for (std::size_t i = 0; i < gsz; ++i) {
                    if (va[i] > n.d0) ga[i] += g[i];
                }
                break;
            }
            case Op::kRelu: {
                Tensor& ga = ensure_grad(nodes_[n.a]);
                const double* va = nodes_[n.a].value.data();
                for (std::size_t i = 0; i < gsz; ++i) {
                    if (va[i] > 0.0) ga[i] += g[i];
                }
                break;
            }
            case Op::kLeakyRelu: {
                Tensor& ga = ensure_grad(nodes_[n.a]);
                const double* va = nodes_[n.a].value.data();
                for (std::size_t i = 0; i < gsz; ++i) {
                    ga[i] += va[i] > 0.0 ? g[i] : n.d0 * g[i];
                }
                break;
            }
            case Op::kSigmoid: {
                Tensor& ga = ensure_grad(nodes_[n.a]);
                const double* out = n.value.data();
                for (std::size_t i = 0; i < gsz; ++i) ga[i] += g[i] * out[i] * (1.0 - out[i]);
                break;
            }
            case Op::kSoftmax: {
                Tensor& ga = ensure_grad(nodes_[n.a]);
                const double* out = n.value.data();
                double dsum = 0.0;
                for (std::size_t i = 0; i < gsz; ++i) dsum += g[i] * out[i];
                for (std::size_t i = 0; i < gsz; ++i) ga[i] += out[i] * (g[i] - dsum);
                break;
            }
        }
    }
}

// --- string-keyed apply ----------------------------------------------------

Var apply(const std::string& op_kind, std::span<const Var> inputs) {
    auto want = [&](std::size_t n) {
        if (inputs.size() != n) {
            throw std::runtime_error(
                fmt::format("apply('{}'): expected {} inputs, got {}", op_kind, n, inputs.size()));
        }
    };
    if (op_kind == "matmul") { want(2); return matmul(inputs[0], inputs[1]); }
    if (op_kind == "add") { want(2); return add(inputs[0], inputs[1]); }
    if (op_kind == "sub") { want(2); return sub(inputs[0], inputs[1]); }
    if (op_kind == "mul") { want(2); return mul(inputs[0], inputs[1]); }
    if (op_kind == "dot") { want(2); return dot(inputs[0], inputs[1]); }
    if (op_kind == "abs") { want(1); return abs(inputs[0]); }
    if (op_kind == "exp") { want(1); return exp(inputs[0]); }
    if (op_kind == "log") { want(1); return log(inputs[0]); }
    if (op_kind == "relu") { want(1); return relu(inputs[0]); }
    if (op_kind == "leaky_relu") { want(1); return leaky_relu(inputs[0]); }
    if (op_kind == "sigmoid") { want(1); return sigmoid(inputs[0]); }
    if (op_kind == "softmax") { want(1); return softmax(inputs[0]); }
    if (op_kind == "sum") { want(1); return sum_all(inputs[0]); }
    if (op_kind == "mean") { want(1); return scale(sum_all(inputs[0]), 1.0 / inputs[0].value().size()); }
    if (op_kind == "concat") { return concat(inputs); }
    throw std::runtime_error(fmt::format("apply: unknown op kind '{}'", op_kind));
}

}  // namespace pacia
