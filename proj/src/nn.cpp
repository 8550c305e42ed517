#include "pacia/nn.hpp"

#include <fmt/format.h>

#include <cmath>

namespace pacia {

Tensor xavier_uniform(std::size_t in, std::size_t out, RngStream& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
    Tensor t = Tensor::uninit({in, out});
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-bound, bound);
    return t;
}

Linear make_linear(ParamStore& store, const std::string& name, std::size_t in, std::size_t out,
                   RngStream& rng) {
    Linear l;
    l.in = in;
    l.out = out;
    l.w = store.add(name + ".w", xavier_uniform(in, out, rng));
    l.b = store.add(name + ".b", Tensor::zeros({out}));
    return l;
}

Var Linear::operator()(Tape& tape, ParamStore& store, Var x) const {
    Var w = tape.leaf(store.at(this->w));
    Var b = tape.leaf(store.at(this->b));
    if (x.value().rank() == 1) {
        if (x.value().size() != in) {
            throw ShapeError(fmt::format("linear '{}': input dim {} != {}",
                                         store.at(this->w).name, x.value().size(), in));
        }
        Var y = matmul(reshape(x, {1, in}), w);
        return add(reshape(y, {out}), b);
    }
    return add_rowvec(matmul(x, w), b);
}

Mlp make_mlp(ParamStore& store, const std::string& name, const std::vector<std::size_t>& dims,
             const MlpOptions& opt, RngStream& rng) {
    if (dims.size() < 2) throw std::runtime_error(fmt::format("mlp '{}': needs >= 2 dims", name));
    Mlp mlp;
    mlp.opt = opt;
    for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
        mlp.layers.push_back(
            make_linear(store, fmt::format("{}.fc{}", name, i + 1), dims[i], dims[i + 1], rng));
    }
    return mlp;
}

Var Mlp::operator()(Tape& tape, ParamStore& store, Var x, bool train, RngStream* rng) const {
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const bool final_layer = (i + 1 == layers.size());
        Var z = layers[i](tape, store, x);
        if (opt.skips && layers[i].in == layers[i].out && (!final_layer || opt.skip_final)) {
            z = add(z, x);
        }
        if (!final_layer || opt.activate_final) {
            z = opt.activation == Activation::kRelu ? relu(z) : leaky_relu(z, opt.leaky_slope);
            if (!final_layer && opt.dropout > 0.0 && train) {
                if (rng == nullptr) throw std::runtime_error("mlp dropout needs an rng in train mode");
                z = dropout(z, opt.dropout, *rng, true);
            }
        }
        x = z;
    }
    return x;
}

void AdamOptimizer::reset() {
    t_ = 0;
    m_.clear();
    v_.clear();
}

void AdamOptimizer::step(ParamStore& store) {
    if (m_.empty()) {
        for (const Param& p : store) {
            m_.push_back(Tensor::zeros(p.value.shape()));
            v_.push_back(Tensor::zeros(p.value.shape()));
        }
    }
    if (m_.size() != store.size()) {
        throw std::runtime_error("adam: parameter store changed size");
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, t_);
    const double bc2 = 1.0 - std::pow(beta2_, t_);
    for (std::size_t i = 0; i < store.size(); ++i) {
        Param& p = store.at(i);
        Tensor& m = m_[i];
        Tensor& v = v_[i];
        for (std::size_t j = 0; j < p.value.size(); ++j) {
            const double g = p.grad[j];
            m[j] = beta1_ * m[j] + (1.0 - beta1_) * g;
            v[j] = beta2_ * v[j] + (1.0 - beta2_) * g * g;
            const double mhat = m[j] / bc1;
            const double vhat = v[j] / bc2;
            p.value[j] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
        }
    }
}

void sgd_step(ParamStore& store, double lr) {
    for (Param& p : store) {
        for (std::size_t j = 0; j < p.value.size(); ++j) p.value[j] -= lr * p.grad[j];
    }
}

}  // namespace pacia
