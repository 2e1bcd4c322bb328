#ifndef FRN_NUMKIT_HPP
#define FRN_NUMKIT_HPP

#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

// Dense double-precision tensors plus a small reverse-mode gradient tape.
// Shapes are restricted to what the encoders, losses and detector heads
// need: scalars, vectors and row-major matrices. No broadcasting beyond
// bias-add.

namespace numkit {

struct Tensor {
    std::vector<int> shape;
    std::vector<double> data;

    Tensor() = default;
    Tensor(std::vector<int> s, std::vector<double> d);

    static Tensor scalar(double v);
    static Tensor zeros(std::vector<int> s);
    static Tensor vector(std::vector<double> d);

    int size() const;
    int rows() const;
    int cols() const;
    bool is_scalar() const { return size() == 1; }

    double& at(int i) { return data[static_cast<size_t>(i)]; }
    double at(int i) const { return data[static_cast<size_t>(i)]; }
    double& at(int i, int j);
    double at(int i, int j) const;

    // throws std::domain_error on NaN/Inf
    void check_finite(const std::string& what) const;
};

bool same_shape(const Tensor& a, const Tensor& b);

// population mean / standard deviation over all entries; D >= 2 required
std::pair<double, double> mean_std(const Tensor& x);

// plain (non-recorded) kernels, shared with the inference path
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add_bias(const Tensor& m, const Tensor& b);
Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
double cosine(const Tensor& u, const Tensor& v);
Tensor concat_cols(const Tensor& a, const Tensor& b);

// variance floor applied before the log in the unit-Gaussian KL penalty
inline constexpr double kKlVarianceFloor = 1e-8;

// 0.5 * D * (mu^2 + var - log(max(var, floor)) - 1)
double kl_unit_gaussian(const Tensor& x);

struct Var {
    int idx = -1;
    bool valid() const { return idx >= 0; }
};

class Tape {
public:
    Var leaf(Tensor t);

    Var matmul(Var a, Var b);
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var add_bias(Var m, Var b);
    Var relu(Var x);
    Var sigmoid(Var x);
    Var scale(Var x, double k);
    Var add_const(Var x, double c);
    Var sum(Var x);
    Var mean(Var x);
    Var add_n(const std::vector<Var>& terms);
    Var concat_cols(Var a, Var b);
    Var vstack(const std::vector<Var>& rows);
    Var col(Var m, int j);
    Var row(Var m, int i);

    Var cosine(Var u, Var v);
    Var kl_unit_gaussian(Var x);

    // per-row variants used for batched training
    Var rows_cosine(Var a, Var b);
    Var rows_kl_unit_gaussian(Var m);
    Var weighted_sum(Var v, const std::vector<double>& w);

    // scalar losses with analytic gradients
    Var logistic_loss(Var logits, const std::vector<double>& labels,
                      const std::vector<double>& weights);
    Var softmax_cross_entropy_rows(Var logits, const std::vector<int>& targets);
    Var smooth_l1_rows(Var pred, const Tensor& target,
                       const std::vector<bool>& row_mask);
    Var pairwise_hinge(Var scores, const std::vector<int>& high,
                       const std::vector<int>& low, double margin);

    // max-pool the snippet span [start, end] into `bins` column-concatenated bins
    Var roi_max_pool(Var features, int start, int end, int bins);

    // seeds d(loss)/d(loss) = 1 and sweeps the tape once in reverse order;
    // loss must be scalar
    void backward(Var loss);

    const Tensor& value(Var v) const;
    // zero tensor of the node's shape if the node is off every path to the loss
    Tensor grad(Var v) const;

    size_t node_count() const { return nodes_.size(); }

private:
    struct Node {
        Tensor value;
        Tensor grad;
        bool has_grad = false;
        std::function<void(Tape&, const Tensor&)> back;
    };

    Var push(Tensor value, std::function<void(Tape&, const Tensor&)> back);
    void accumulate(int idx, const Tensor& contribution);
    const Node& node(Var v) const;

    std::vector<Node> nodes_;
};

// Adam with bias correction; state grows to match the parameter list on
// first step and the pairing (by position) must stay stable afterwards.
struct Adam {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    void step(const std::vector<Tensor*>& params, const std::vector<Tensor>& grads);

    long t = 0;
    std::vector<Tensor> m, v;
};

}  // namespace numkit

#endif
