#include "numkit.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace numkit {

namespace {

int product(const std::vector<int>& shape) {
    int n = 1;
    for (int e : shape) {
        if (e <= 0) throw std::invalid_argument("tensor extents must be positive");
        n *= e;
    }
    return n;
}

void require(bool ok, const std::string& msg) {
    if (!ok) throw std::invalid_argument(msg);
}

double stable_softplus(double z) {
    return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

}  // namespace

Tensor::Tensor(std::vector<int> s, std::vector<double> d)
    : shape(std::move(s)), data(std::move(d)) {
    if (product(shape) != static_cast<int>(data.size()))
        throw std::invalid_argument("tensor shape does not match data length");
}

Tensor Tensor::scalar(double v) { return Tensor({1}, {v}); }

Tensor Tensor::zeros(std::vector<int> s) {
    int n = product(s);
    return Tensor(std::move(s), std::vector<double>(static_cast<size_t>(n), 0.0));
}

Tensor Tensor::vector(std::vector<double> d) {
    int n = static_cast<int>(d.size());
    return Tensor({n}, std::move(d));
}

int Tensor::size() const { return static_cast<int>(data.size()); }

int Tensor::rows() const {
    return shape.size() == 2 ? shape[0] : 1;
}

int Tensor::cols() const {
    return shape.size() == 2 ? shape[1] : (shape.empty() ? 0 : shape[0]);
}

double& Tensor::at(int i, int j) { return data[static_cast<size_t>(i) * cols() + j]; }
double Tensor::at(int i, int j) const { return data[static_cast<size_t>(i) * cols() + j]; }

void Tensor::check_finite(const std::string& what) const {
    for (double v : data)
        if (!std::isfinite(v))
            throw std::domain_error("non-finite value in " + what);
}

bool same_shape(const Tensor& a, const Tensor& b) { return a.shape == b.shape; }

std::pair<double, double> mean_std(const Tensor& x) {
    int n = x.size();
    if (n < 2) throw std::domain_error("mean_std needs at least two entries");
    double mu = std::accumulate(x.data.begin(), x.data.end(), 0.0) / n;
    double var = 0.0;
    for (double v : x.data) var += (v - mu) * (v - mu);
    var /= n;
    return {mu, std::sqrt(var)};
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    require(a.shape.size() <= 2 && b.shape.size() == 2, "matmul expects matrices");
    int m = a.rows(), k = a.cols(), k2 = b.rows(), n = b.cols();
    require(k == k2, "matmul inner extents mismatch");
    Tensor out = Tensor::zeros({m, n});
    for (int i = 0; i < m; ++i) {
        const double* ar = a.data.data() + static_cast<size_t>(i) * k;
        double* orow = out.data.data() + static_cast<size_t>(i) * n;
        for (int p = 0; p < k; ++p) {
            double av = ar[p];
            if (av == 0.0) continue;
            const double* br = b.data.data() + static_cast<size_t>(p) * n;
            for (int j = 0; j < n; ++j) orow[j] += av * br[j];
        }
    }
    if (a.shape.size() == 1) out.shape = {n};
    return out;
}

Tensor add_bias(const Tensor& m, const Tensor& b) {
    require(b.shape.size() == 1, "bias must be a vector");
    require(m.cols() == b.size(), "bias width mismatch");
    Tensor out = m;
    int r = m.rows(), c = m.cols();
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) out.data[static_cast<size_t>(i) * c + j] += b.at(j);
    return out;
}

Tensor relu(const Tensor& x) {
    Tensor out = x;
    for (double& v : out.data) v = std::max(0.0, v);
    return out;
}

Tensor sigmoid(const Tensor& x) {
    Tensor out = x;
    for (double& v : out.data) v = 1.0 / (1.0 + std::exp(-v));
    return out;
}

double cosine(const Tensor& u, const Tensor& v) {
    require(u.shape.size() == 1 && same_shape(u, v), "cosine expects equal-length vectors");
    double uu = 0, vv = 0, uv = 0;
    for (int i = 0; i < u.size(); ++i) {
        uu += u.at(i) * u.at(i);
        vv += v.at(i) * v.at(i);
        uv += u.at(i) * v.at(i);
    }
    if (uu == 0.0 || vv == 0.0)
        throw std::domain_error("cosine of a zero-norm vector");
    double c = uv / (std::sqrt(uu) * std::sqrt(vv));
    return std::clamp(c, -1.0, 1.0);
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
    require(a.shape.size() == b.shape.size(), "concat_cols rank mismatch");
    if (a.shape.size() == 1) {
        Tensor out = Tensor::zeros({a.size() + b.size()});
        std::copy(a.data.begin(), a.data.end(), out.data.begin());
        std::copy(b.data.begin(), b.data.end(), out.data.begin() + a.size());
        return out;
    }
    require(a.rows() == b.rows(), "concat_cols row mismatch");
    int r = a.rows(), ca = a.cols(), cb = b.cols();
    Tensor out = Tensor::zeros({r, ca + cb});
    for (int i = 0; i < r; ++i) {
        for (int j = 0; j < ca; ++j) out.at(i, j) = a.at(i, j);
        for (int j = 0; j < cb; ++j) out.at(i, ca + j) = b.at(i, j);
    }
    return out;
}

namespace {

// shared by the plain and recorded KL kernels
struct KlParts {
    double mu, var, value;
    bool floored;
};

KlParts kl_parts(const Tensor& x) {
    int n = x.size();
    if (n < 2) throw std::domain_error("kl_unit_gaussian needs at least two entries");
    double mu = std::accumulate(x.data.begin(), x.data.end(), 0.0) / n;
    double var = 0.0;
    for (double v : x.data) var += (v - mu) * (v - mu);
    var /= n;
    bool floored = var < kKlVarianceFloor;
    double var_f = floored ? kKlVarianceFloor : var;
    double value = 0.5 * n * (mu * mu + var - std::log(var_f) - 1.0);
    return {mu, var, value, floored};
}

void kl_backward(const Tensor& x, const KlParts& p, double gout, Tensor& gx) {
    // d/dx_j [0.5*D*(mu^2 + var - log var_f - 1)]
    //   = mu + (1 - [var above floor]/var) * (x_j - mu)
    int n = x.size();
    double dvar = 1.0 - (p.floored ? 0.0 : 1.0 / p.var);
    for (int j = 0; j < n; ++j)
        gx.at(j) += gout * (p.mu + dvar * (x.at(j) - p.mu));
}

}  // namespace

double kl_unit_gaussian(const Tensor& x) { return kl_parts(x).value; }

// ---------------------------------------------------------------------------
// Tape

Var Tape::push(Tensor value, std::function<void(Tape&, const Tensor&)> back) {
    nodes_.push_back(Node{std::move(value), Tensor{}, false, std::move(back)});
    return Var{static_cast<int>(nodes_.size()) - 1};
}

const Tape::Node& Tape::node(Var v) const {
    if (!v.valid() || v.idx >= static_cast<int>(nodes_.size()))
        throw std::invalid_argument("variable does not belong to this tape");
    return nodes_[static_cast<size_t>(v.idx)];
}

void Tape::accumulate(int idx, const Tensor& contribution) {
    Node& n = nodes_[static_cast<size_t>(idx)];
    if (!n.has_grad) {
        n.grad = Tensor::zeros(n.value.shape);
        n.has_grad = true;
    }
    for (int i = 0; i < contribution.size(); ++i) n.grad.at(i) += contribution.at(i);
}

Var Tape::leaf(Tensor t) {
    t.check_finite("leaf tensor");
    return push(std::move(t), nullptr);
}

const Tensor& Tape::value(Var v) const { return node(v).value; }

Tensor Tape::grad(Var v) const {
    const Node& n = node(v);
    return n.has_grad ? n.grad : Tensor::zeros(n.value.shape);
}

void Tape::backward(Var loss) {
    const Node& ln = node(loss);
    if (!ln.value.is_scalar())
        throw std::invalid_argument("backward requires a scalar loss");
    accumulate(loss.idx, Tensor::scalar(1.0));
    for (int i = loss.idx; i >= 0; --i) {
        Node& n = nodes_[static_cast<size_t>(i)];
        if (n.has_grad && n.back) n.back(*this, n.grad);
    }
}

Var Tape::matmul(Var a, Var b) {
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    Tensor out = numkit::matmul(A, B);
    int ai = a.idx, bi = b.idx;
    return push(std::move(out), [ai, bi](Tape& t, const Tensor& g) {
        const Tensor& A = t.nodes_[ai].value;
        const Tensor& B = t.nodes_[bi].value;
        int m = A.rows(), k = A.cols(), n = B.cols();
        Tensor ga = Tensor::zeros(A.shape);
        Tensor gb = Tensor::zeros(B.shape);
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) {
                double gv = g.data[static_cast<size_t>(i) * n + j];
                if (gv == 0.0) continue;
                for (int p = 0; p < k; ++p) {
                    ga.data[static_cast<size_t>(i) * k + p] += gv * B.data[static_cast<size_t>(p) * n + j];
                    gb.data[static_cast<size_t>(p) * n + j] += gv * A.data[static_cast<size_t>(i) * k + p];
                }
            }
        t.accumulate(ai, ga);
        t.accumulate(bi, gb);
    });
}

Var Tape::add(Var a, Var b) {
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    require(same_shape(A, B), "add shape mismatch");
    Tensor out = A;
    for (int i = 0; i < out.size(); ++i) out.at(i) += B.at(i);
    int ai = a.idx, bi = b.idx;
    return push(std::move(out), [ai, bi](Tape& t, const Tensor& g) {
        t.accumulate(ai, g);
        t.accumulate(bi, g);
    });
}

Var Tape::sub(Var a, Var b) {
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    require(same_shape(A, B), "sub shape mismatch");
    Tensor out = A;
    for (int i = 0; i < out.size(); ++i) out.at(i) -= B.at(i);
    int ai = a.idx, bi = b.idx;
    return push(std::move(out), [ai, bi](Tape& t, const Tensor& g) {
        t.accumulate(ai, g);
        Tensor neg = g;
        for (double& v : neg.data) v = -v;
        t.accumulate(bi, neg);
    });
}

Var Tape::add_bias(Var m, Var b) {
    Tensor out = numkit::add_bias(value(m), value(b));
    int mi = m.idx, bi = b.idx;
    return push(std::move(out), [mi, bi](Tape& t, const Tensor& g) {
        t.accumulate(mi, g);
        int r = g.rows(), c = g.cols();
        Tensor gb = Tensor::zeros({c});
        for (int i = 0; i < r; ++i)
            for (int j = 0; j < c; ++j) gb.at(j) += g.data[static_cast<size_t>(i) * c + j];
        t.accumulate(bi, gb);
    });
}

Var Tape::relu(Var x) {
    Tensor out = numkit::relu(value(x));
    int xi = x.idx;
    return push(std::move(out), [xi](Tape& t, const Tensor& g) {
        const Tensor& in = t.nodes_[xi].value;
        Tensor gx = Tensor::zeros(in.shape);
        // subgradient 0 at the kink
        for (int i = 0; i < in.size(); ++i) gx.at(i) = in.at(i) > 0.0 ? g.at(i) : 0.0;
        t.accumulate(xi, gx);
    });
}

Var Tape::sigmoid(Var x) {
    Tensor out = numkit::sigmoid(value(x));
    int xi = x.idx;
    Tensor saved = out;
    return push(std::move(out), [xi, saved](Tape& t, const Tensor& g) {
        Tensor gx = saved;
        for (int i = 0; i < gx.size(); ++i) gx.at(i) = g.at(i) * saved.at(i) * (1.0 - saved.at(i));
        t.accumulate(xi, gx);
    });
}

Var Tape::scale(Var x, double k) {
    Tensor out = value(x);
    for (double& v : out.data) v *= k;
    int xi = x.idx;
    return push(std::move(out), [xi, k](Tape& t, const Tensor& g) {
        Tensor gx = g;
        for (double& v : gx.data) v *= k;
        t.accumulate(xi, gx);
    });
}

Var Tape::add_const(Var x, double c) {
    Tensor out = value(x);
    for (double& v : out.data) v += c;
    int xi = x.idx;
    return push(std::move(out), [xi](Tape& t, const Tensor& g) { t.accumulate(xi, g); });
}

Var Tape::sum(Var x) {
    double s = std::accumulate(value(x).data.begin(), value(x).data.end(), 0.0);
    int xi = x.idx;
    return push(Tensor::scalar(s), [xi](Tape& t, const Tensor& g) {
        Tensor gx = Tensor::zeros(t.nodes_[xi].value.shape);
        for (double& v : gx.data) v = g.at(0);
        t.accumulate(xi, gx);
    });
}

Var Tape::mean(Var x) {
    int n = value(x).size();
    double s = std::accumulate(value(x).data.begin(), value(x).data.end(), 0.0) / n;
    int xi = x.idx;
    return push(Tensor::scalar(s), [xi, n](Tape& t, const Tensor& g) {
        Tensor gx = Tensor::zeros(t.nodes_[xi].value.shape);
        for (double& v : gx.data) v = g.at(0) / n;
        t.accumulate(xi, gx);
    });
}

Var Tape::add_n(const std::vector<Var>& terms) {
    require(!terms.empty(), "add_n needs at least one term");
    double s = 0.0;
    std::vector<int> idx;
    idx.reserve(terms.size());
    for (Var v : terms) {
        require(value(v).is_scalar(), "add_n expects scalar terms");
        s += value(v).at(0);
        idx.push_back(v.idx);
    }
    return push(Tensor::scalar(s), [idx](Tape& t, const Tensor& g) {
        for (int i : idx) t.accumulate(i, g);
    });
}

Var Tape::concat_cols(Var a, Var b) {
    Tensor out = numkit::concat_cols(value(a), value(b));
    int ai = a.idx, bi = b.idx;
    return push(std::move(out), [ai, bi](Tape& t, const Tensor& g) {
        const Tensor& A = t.nodes_[ai].value;
        const Tensor& B = t.nodes_[bi].value;
        Tensor ga = Tensor::zeros(A.shape);
        Tensor gb = Tensor::zeros(B.shape);
        int r = A.rows(), ca = A.cols(), cb = B.cols();
        for (int i = 0; i < r; ++i) {
            for (int j = 0; j < ca; ++j)
                ga.data[static_cast<size_t>(i) * ca + j] = g.data[static_cast<size_t>(i) * (ca + cb) + j];
            for (int j = 0; j < cb; ++j)
                gb.data[static_cast<size_t>(i) * cb + j] = g.data[static_cast<size_t>(i) * (ca + cb) + ca + j];
        }
        t.accumulate(ai, ga);
        t.accumulate(bi, gb);
    });
}

Var Tape::vstack(const std::vector<Var>& rows) {
    require(!rows.empty(), "vstack needs at least one row");
    int c = value(rows[0]).size();
    Tensor out = Tensor::zeros({static_cast<int>(rows.size()), c});
    std::vector<int> idx;
    for (size_t i = 0; i < rows.size(); ++i) {
        const Tensor& r = value(rows[i]);
        require(r.shape.size() == 1 && r.size() == c, "vstack rows must be equal-length vectors");
        for (int j = 0; j < c; ++j) out.at(static_cast<int>(i), j) = r.at(j);
        idx.push_back(rows[i].idx);
    }
    return push(std::move(out), [idx, c](Tape& t, const Tensor& g) {
        for (size_t i = 0; i < idx.size(); ++i) {
            Tensor gr = Tensor::zeros({c});
            for (int j = 0; j < c; ++j) gr.at(j) = g.data[i * c + j];
            t.accumulate(idx[i], gr);
        }
    });
}

Var Tape::col(Var m, int j) {
    const Tensor& M = value(m);
    require(M.shape.size() == 2 && j >= 0 && j < M.cols(), "col index out of range");
    Tensor out = Tensor::zeros({M.rows()});
    for (int i = 0; i < M.rows(); ++i) out.at(i) = M.at(i, j);
    int mi = m.idx;
    return push(std::move(out), [mi, j](Tape& t, const Tensor& g) {
        const Tensor& M = t.nodes_[mi].value;
        Tensor gm = Tensor::zeros(M.shape);
        for (int i = 0; i < M.rows(); ++i) gm.at(i, j) = g.at(i);
        t.accumulate(mi, gm);
    });
}

Var Tape::row(Var m, int i) {
    const Tensor& M = value(m);
    require(M.shape.size() == 2 && i >= 0 && i < M.rows(), "row index out of range");
    Tensor out = Tensor::zeros({M.cols()});
    for (int j = 0; j < M.cols(); ++j) out.at(j) = M.at(i, j);
    int mi = m.idx;
    return push(std::move(out), [mi, i](Tape& t, const Tensor& g) {
        const Tensor& M = t.nodes_[mi].value;
        Tensor gm = Tensor::zeros(M.shape);
        for (int j = 0; j < M.cols(); ++j) gm.at(i, j) = g.at(j);
        t.accumulate(mi, gm);
    });
}

namespace {

// gradient of cos<u,v> w.r.t. u, scaled by gout, added into gu
void cosine_backward(const Tensor& u, const Tensor& v, double c, double gout, Tensor& gu) {
    double uu = 0, vv = 0;
    for (int i = 0; i < u.size(); ++i) {
        uu += u.at(i) * u.at(i);
        vv += v.at(i) * v.at(i);
    }
    double nu = std::sqrt(uu), nv = std::sqrt(vv);
    for (int i = 0; i < u.size(); ++i)
        gu.at(i) += gout * (v.at(i) / (nu * nv) - c * u.at(i) / uu);
}

}  // namespace

Var Tape::cosine(Var u, Var v) {
    const Tensor& U = value(u);
    const Tensor& V = value(v);
    double c = numkit::cosine(U, V);
    int ui = u.idx, vi = v.idx;
    return push(Tensor::scalar(c), [ui, vi, c](Tape& t, const Tensor& g) {
        const Tensor& U = t.nodes_[ui].value;
        const Tensor& V = t.nodes_[vi].value;
        Tensor gu = Tensor::zeros(U.shape);
        Tensor gv = Tensor::zeros(V.shape);
        cosine_backward(U, V, c, g.at(0), gu);
        cosine_backward(V, U, c, g.at(0), gv);
        t.accumulate(ui, gu);
        t.accumulate(vi, gv);
    });
}

Var Tape::kl_unit_gaussian(Var x) {
    const Tensor& X = value(x);
    KlParts p = kl_parts(X);
    int xi = x.idx;
    return push(Tensor::scalar(p.value), [xi, p](Tape& t, const Tensor& g) {
        const Tensor& X = t.nodes_[xi].value;
        Tensor gx = Tensor::zeros(X.shape);
        kl_backward(X, p, g.at(0), gx);
        t.accumulate(xi, gx);
    });
}

Var Tape::rows_cosine(Var a, Var b) {
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    require(A.shape.size() == 2 && same_shape(A, B), "rows_cosine expects equal-shape matrices");
    int r = A.rows(), c = A.cols();
    Tensor out = Tensor::zeros({r});
    for (int i = 0; i < r; ++i) {
        Tensor u({c}, std::vector<double>(A.data.begin() + static_cast<size_t>(i) * c,
                                          A.data.begin() + static_cast<size_t>(i + 1) * c));
        Tensor v({c}, std::vector<double>(B.data.begin() + static_cast<size_t>(i) * c,
                                          B.data.begin() + static_cast<size_t>(i + 1) * c));
        out.at(i) = numkit::cosine(u, v);
    }
    int ai = a.idx, bi = b.idx;
    Tensor saved = out;
    return push(std::move(out), [ai, bi, saved, r, c](Tape& t, const Tensor& g) {
        const Tensor& A = t.nodes_[ai].value;
        const Tensor& B = t.nodes_[bi].value;
        Tensor ga = Tensor::zeros(A.shape);
        Tensor gb = Tensor::zeros(B.shape);
        for (int i = 0; i < r; ++i) {
            Tensor u({c}, std::vector<double>(A.data.begin() + static_cast<size_t>(i) * c,
                                              A.data.begin() + static_cast<size_t>(i + 1) * c));
            Tensor v({c}, std::vector<double>(B.data.begin() + static_cast<size_t>(i) * c,
                                              B.data.begin() + static_cast<size_t>(i + 1) * c));
            Tensor gu = Tensor::zeros({c});
            Tensor gv = Tensor::zeros({c});
            cosine_backward(u, v, saved.at(i), g.at(i), gu);
            cosine_backward(v, u, saved.at(i), g.at(i), gv);
            for (int j = 0; j < c; ++j) {
                ga.data[static_cast<size_t>(i) * c + j] = gu.at(j);
                gb.data[static_cast<size_t>(i) * c + j] = gv.at(j);
            }
        }
        t.accumulate(ai, ga);
        t.accumulate(bi, gb);
    });
}

Var Tape::rows_kl_unit_gaussian(Var m) {
    const Tensor& M = value(m);
    require(M.shape.size() == 2 && M.cols() >= 2, "rows_kl needs matrix rows of length >= 2");
    int r = M.rows(), c = M.cols();
    Tensor out = Tensor::zeros({r});
    std::vector<KlParts> parts;
    parts.reserve(static_cast<size_t>(r));
    for (int i = 0; i < r; ++i) {
        Tensor x({c}, std::vector<double>(M.data.begin() + static_cast<size_t>(i) * c,
                                          M.data.begin() + static_cast<size_t>(i + 1) * c));
        parts.push_back(kl_parts(x));
        out.at(i) = parts.back().value;
    }
    int mi = m.idx;
    return push(std::move(out), [mi, parts, r, c](Tape& t, const Tensor& g) {
        const Tensor& M = t.nodes_[mi].value;
        Tensor gm = Tensor::zeros(M.shape);
        for (int i = 0; i < r; ++i) {
            Tensor x({c}, std::vector<double>(M.data.begin() + static_cast<size_t>(i) * c,
                                              M.data.begin() + static_cast<size_t>(i + 1) * c));
            Tensor gx = Tensor::zeros({c});
            kl_backward(x, parts[static_cast<size_t>(i)], g.at(i), gx);
            for (int j = 0; j < c; ++j) gm.data[static_cast<size_t>(i) * c + j] = gx.at(j);
        }
        t.accumulate(mi, gm);
    });
}

Var Tape::weighted_sum(Var v, const std::vector<double>& w) {
    const Tensor& V = value(v);
    require(V.shape.size() == 1 && V.size() == static_cast<int>(w.size()),
            "weighted_sum length mismatch");
    double s = 0.0;
    for (int i = 0; i < V.size(); ++i) s += w[static_cast<size_t>(i)] * V.at(i);
    int vi = v.idx;
    return push(Tensor::scalar(s), [vi, w](Tape& t, const Tensor& g) {
        Tensor gv = Tensor::zeros({static_cast<int>(w.size())});
        for (int i = 0; i < gv.size(); ++i) gv.at(i) = g.at(0) * w[static_cast<size_t>(i)];
        t.accumulate(vi, gv);
    });
}

Var Tape::logistic_loss(Var logits, const std::vector<double>& labels,
                        const std::vector<double>& weights) {
    const Tensor& Z = value(logits);
    require(Z.shape.size() == 1, "logistic_loss expects a logit vector");
    require(Z.size() == static_cast<int>(labels.size()) &&
                Z.size() == static_cast<int>(weights.size()),
            "logistic_loss length mismatch");
    double loss = 0.0;
    for (int i = 0; i < Z.size(); ++i)
        loss += weights[static_cast<size_t>(i)] *
                (stable_softplus(Z.at(i)) - labels[static_cast<size_t>(i)] * Z.at(i));
    int zi = logits.idx;
    return push(Tensor::scalar(loss), [zi, labels, weights](Tape& t, const Tensor& g) {
        const Tensor& Z = t.nodes_[zi].value;
        Tensor gz = Tensor::zeros(Z.shape);
        for (int i = 0; i < Z.size(); ++i) {
            double p = 1.0 / (1.0 + std::exp(-Z.at(i)));
            gz.at(i) = g.at(0) * weights[static_cast<size_t>(i)] * (p - labels[static_cast<size_t>(i)]);
        }
        t.accumulate(zi, gz);
    });
}

Var Tape::softmax_cross_entropy_rows(Var logits, const std::vector<int>& targets) {
    const Tensor& Z = value(logits);
    require(Z.shape.size() == 2 && Z.rows() == static_cast<int>(targets.size()),
            "softmax_cross_entropy_rows target count mismatch");
    int r = Z.rows(), c = Z.cols();
    double loss = 0.0;
    for (int i = 0; i < r; ++i) {
        require(targets[static_cast<size_t>(i)] >= 0 && targets[static_cast<size_t>(i)] < c,
                "target class out of range");
        double zmax = Z.at(i, 0);
        for (int j = 1; j < c; ++j) zmax = std::max(zmax, Z.at(i, j));
        double lse = 0.0;
        for (int j = 0; j < c; ++j) lse += std::exp(Z.at(i, j) - zmax);
        lse = zmax + std::log(lse);
        loss += lse - Z.at(i, targets[static_cast<size_t>(i)]);
    }
    loss /= r;
    int zi = logits.idx;
    return push(Tensor::scalar(loss), [zi, targets, r, c](Tape& t, const Tensor& g) {
        const Tensor& Z = t.nodes_[zi].value;
        Tensor gz = Tensor::zeros(Z.shape);
        for (int i = 0; i < r; ++i) {
            double zmax = Z.at(i, 0);
            for (int j = 1; j < c; ++j) zmax = std::max(zmax, Z.at(i, j));
            double denom = 0.0;
            for (int j = 0; j < c; ++j) denom += std::exp(Z.at(i, j) - zmax);
            for (int j = 0; j < c; ++j) {
                double p = std::exp(Z.at(i, j) - zmax) / denom;
                gz.at(i, j) = g.at(0) * (p - (j == targets[static_cast<size_t>(i)] ? 1.0 : 0.0)) / r;
            }
        }
        t.accumulate(zi, gz);
    });
}

Var Tape::smooth_l1_rows(Var pred, const Tensor& target, const std::vector<bool>& row_mask) {
    const Tensor& P = value(pred);
    require(P.shape.size() == 2 && same_shape(P, target), "smooth_l1_rows shape mismatch");
    require(P.rows() == static_cast<int>(row_mask.size()), "smooth_l1_rows mask mismatch");
    int r = P.rows(), c = P.cols();
    int active = 0;
    for (bool m : row_mask) active += m ? 1 : 0;
    double loss = 0.0;
    if (active > 0) {
        for (int i = 0; i < r; ++i) {
            if (!row_mask[static_cast<size_t>(i)]) continue;
            for (int j = 0; j < c; ++j) {
                double d = P.at(i, j) - target.at(i, j);
                loss += std::abs(d) < 1.0 ? 0.5 * d * d : std::abs(d) - 0.5;
            }
        }
        loss /= active;
    }
    int pi = pred.idx;
    return push(Tensor::scalar(loss), [pi, target, row_mask, r, c, active](Tape& t, const Tensor& g) {
        if (active == 0) return;
        const Tensor& P = t.nodes_[pi].value;
        Tensor gp = Tensor::zeros(P.shape);
        for (int i = 0; i < r; ++i) {
            if (!row_mask[static_cast<size_t>(i)]) continue;
            for (int j = 0; j < c; ++j) {
                double d = P.at(i, j) - target.at(i, j);
                gp.at(i, j) = g.at(0) * std::clamp(d, -1.0, 1.0) / active;
            }
        }
        t.accumulate(pi, gp);
    });
}

Var Tape::pairwise_hinge(Var scores, const std::vector<int>& high,
                         const std::vector<int>& low, double margin) {
    const Tensor& S = value(scores);
    require(S.shape.size() == 1, "pairwise_hinge expects a score vector");
    size_t n_pairs = high.size() * low.size();
    double loss = 0.0;
    if (n_pairs > 0) {
        for (int h : high)
            for (int l : low)
                loss += std::max(0.0, margin - (S.at(h) - S.at(l)));
        loss /= static_cast<double>(n_pairs);
    }
    int si = scores.idx;
    return push(Tensor::scalar(loss), [si, high, low, margin, n_pairs](Tape& t, const Tensor& g) {
        if (n_pairs == 0) return;
        const Tensor& S = t.nodes_[si].value;
        Tensor gs = Tensor::zeros(S.shape);
        for (int h : high)
            for (int l : low)
                if (margin - (S.at(h) - S.at(l)) > 0.0) {
                    gs.at(h) -= g.at(0) / static_cast<double>(n_pairs);
                    gs.at(l) += g.at(0) / static_cast<double>(n_pairs);
                }
        t.accumulate(si, gs);
    });
}

// Bin b covers snippets [floor(b*n/bins), ceil((b+1)*n/bins)) of the span;
// the covering sets are mirror images under span reversal.
Var Tape::roi_max_pool(Var features, int start, int end, int bins) {
    const Tensor& F = value(features);
    require(F.shape.size() == 2, "roi_max_pool expects an L x D matrix");
    if (start >= end) throw std::invalid_argument("roi_max_pool degenerate span");
    require(start >= 0 && end < F.rows(), "roi_max_pool span outside video");
    require(bins >= 1, "roi_max_pool needs at least one bin");
    int n = end - start + 1;
    int d = F.cols();
    Tensor out = Tensor::zeros({bins * d});
    std::vector<int> argmax(static_cast<size_t>(bins) * d);
    for (int b = 0; b < bins; ++b) {
        int i0 = start + static_cast<int>(std::floor(static_cast<double>(b) * n / bins));
        int i1 = start + static_cast<int>(std::ceil(static_cast<double>(b + 1) * n / bins));
        for (int j = 0; j < d; ++j) {
            double best = F.at(i0, j);
            int best_i = i0;
            for (int i = i0 + 1; i < i1; ++i)
                if (F.at(i, j) > best) {
                    best = F.at(i, j);
                    best_i = i;
                }
            out.at(b * d + j) = best;
            argmax[static_cast<size_t>(b) * d + j] = best_i;
        }
    }
    int fi = features.idx;
    return push(std::move(out), [fi, argmax, bins, d](Tape& t, const Tensor& g) {
        const Tensor& F = t.nodes_[fi].value;
        Tensor gf = Tensor::zeros(F.shape);
        for (int b = 0; b < bins; ++b)
            for (int j = 0; j < d; ++j)
                gf.at(argmax[static_cast<size_t>(b) * d + j], j) += g.at(b * d + j);
        t.accumulate(fi, gf);
    });
}

void Adam::step(const std::vector<Tensor*>& params, const std::vector<Tensor>& grads) {
    if (params.size() != grads.size())
        throw std::invalid_argument("Adam parameter/gradient count mismatch");
    if (m.empty()) {
        for (const Tensor* p : params) {
            m.push_back(Tensor::zeros(p->shape));
            v.push_back(Tensor::zeros(p->shape));
        }
    }
    if (m.size() != params.size())
        throw std::invalid_argument("Adam state does not match parameter list");
    ++t;
    double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (size_t p = 0; p < params.size(); ++p) {
        Tensor& theta = *params[p];
        const Tensor& g = grads[p];
        if (!same_shape(theta, g))
            throw std::invalid_argument("Adam gradient shape mismatch");
        for (int i = 0; i < theta.size(); ++i) {
            m[p].at(i) = beta1 * m[p].at(i) + (1.0 - beta1) * g.at(i);
            v[p].at(i) = beta2 * v[p].at(i) + (1.0 - beta2) * g.at(i) * g.at(i);
            double mhat = m[p].at(i) / bc1;
            double vhat = v[p].at(i) / bc2;
            theta.at(i) -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }
}

}  // namespace numkit
