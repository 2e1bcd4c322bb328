#ifndef FRN_MLP_HPP
#define FRN_MLP_HPP

#include <map>
#include <string>
#include <vector>

#include "numkit.hpp"
#include "rng.hpp"

// Two affine layers with an elementwise rectifier between them. The same
// block serves as decoupling encoder, boundary predictor and detector head.

namespace numkit {

struct Mlp {
    Tensor w1, b1, w2, b2;  // in x hidden, hidden, hidden x out, out

    void init(int in, int hidden, int out, rng::Rng& rng) {
        double r1 = std::sqrt(6.0 / (in + hidden));
        double r2 = std::sqrt(6.0 / (hidden + out));
        w1 = Tensor::zeros({in, hidden});
        for (double& v : w1.data) v = rng.uniform(-r1, r1);
        b1 = Tensor::zeros({hidden});
        w2 = Tensor::zeros({hidden, out});
        for (double& v : w2.data) v = rng.uniform(-r2, r2);
        b2 = Tensor::zeros({out});
    }

    int input_dim() const { return w1.shape.empty() ? 0 : w1.shape[0]; }
    int output_dim() const { return w2.shape.empty() ? 0 : w2.shape[1]; }

    Tensor forward(const Tensor& x) const {
        return add_bias(matmul(relu(add_bias(matmul(x, w1), b1)), w2), b2);
    }

    // leaves registered on the tape; positions mirror params()
    struct TapeVars {
        Var w1, b1, w2, b2;
    };

    TapeVars leaves(Tape& tape) const {
        return {tape.leaf(w1), tape.leaf(b1), tape.leaf(w2), tape.leaf(b2)};
    }

    static Var forward(Tape& tape, const TapeVars& p, Var x) {
        return tape.add_bias(tape.matmul(tape.relu(tape.add_bias(tape.matmul(x, p.w1), p.b1)), p.w2),
                             p.b2);
    }

    std::vector<Tensor*> params() { return {&w1, &b1, &w2, &b2}; }
    std::vector<const Tensor*> params() const { return {&w1, &b1, &w2, &b2}; }

    void store(const std::string& prefix, std::map<std::string, Tensor>& blocks) const {
        blocks[prefix + ".w1"] = w1;
        blocks[prefix + ".b1"] = b1;
        blocks[prefix + ".w2"] = w2;
        blocks[prefix + ".b2"] = b2;
    }

    void restore(const std::string& prefix, const std::map<std::string, Tensor>& blocks) {
        w1 = blocks.at(prefix + ".w1");
        b1 = blocks.at(prefix + ".b1");
        w2 = blocks.at(prefix + ".w2");
        b2 = blocks.at(prefix + ".b2");
    }
};

}  // namespace numkit

#endif
