#pragma once

#include <string>
#include <vector>

#include "pacia/rng.hpp"
#include "pacia/tape.hpp"

namespace pacia {

// Fully connected layer; weight shape [in, out], bias [out].
struct Linear {
    std::size_t w = 0;
    std::size_t b = 0;
    std::size_t in = 0;
    std::size_t out = 0;

    // x: [in] or [m, in]
    Var operator()(Tape& tape, ParamStore& store, Var x) const;
};

Linear make_linear(ParamStore& store, const std::string& name, std::size_t in, std::size_t out,
                   RngStream& rng);

enum class Activation { kRelu, kLeakyRelu };

struct MlpOptions {
    Activation activation = Activation::kLeakyRelu;
    double leaky_slope = 0.01;
    bool skips = false;          // residual skip on layers with matching dims
    bool skip_final = false;     // allow the skip on the last layer too
    bool activate_final = false;
    double dropout = 0.0;        // applied between layers in train mode
};

// Stack of fully connected layers. With `skips` set, layers whose input and
// output dims match compute act(Wx + b + x).
struct Mlp {
    std::vector<Linear> layers;
    MlpOptions opt;

    Var operator()(Tape& tape, ParamStore& store, Var x, bool train = false,
                   RngStream* rng = nullptr) const;
    std::size_t out_dim() const { return layers.back().out; }
    std::size_t in_dim() const { return layers.front().in; }
};

Mlp make_mlp(ParamStore& store, const std::string& name, const std::vector<std::size_t>& dims,
             const MlpOptions& opt, RngStream& rng);

// Adam with bias correction; one slot pair per parameter in store order.
class AdamOptimizer {
  public:
    explicit AdamOptimizer(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void step(ParamStore& store);
    void reset();
    double lr() const { return lr_; }
    void set_lr(double lr) { lr_ = lr; }

  private:
    double lr_, beta1_, beta2_, eps_;
    long t_ = 0;
    std::vector<Tensor> m_, v_;
};

// Plain gradient descent step p -= lr * g over every parameter.
void sgd_step(ParamStore& store, double lr);

Tensor xavier_uniform(std::size_t in, std::size_t out, RngStream& rng);

}  // namespace pacia
