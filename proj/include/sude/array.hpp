#pragma once

// Dense n-d arrays of doubles plus a tape-based reverse-mode autodiff
// engine. The operation set is deliberately small: elementwise +,-,*,
// scalar scale, matrix-vector multiply, tanh, sum, sum-of-squares mse,
// log-sum-exp, detach and concat. Everything downstream (schedules,
// denoisers, losses) is built from these.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace sude {

struct Array {
    std::vector<std::size_t> shape;
    std::vector<double> values;

    Array() = default;
    Array(std::vector<std::size_t> s, std::vector<double> v)
        : shape(std::move(s)), values(std::move(v)) {
        if (count(shape) != values.size())
            throw std::invalid_argument("Array: shape/value count mismatch");
    }

    static std::size_t count(const std::vector<std::size_t>& s) {
        std::size_t n = 1;
        for (std::size_t e : s) {
            if (e == 0) throw std::invalid_argument("Array: zero extent");
            n *= e;
        }
        return n;
    }

    static Array zeros(std::vector<std::size_t> s) {
        std::size_t n = count(s);
        return Array(std::move(s), std::vector<double>(n, 0.0));
    }
    static Array full(std::vector<std::size_t> s, double v) {
        std::size_t n = count(s);
        return Array(std::move(s), std::vector<double>(n, v));
    }
    static Array scalar(double v) { return Array({1}, {v}); }
    static Array vec(std::vector<double> v) {
        std::size_t n = v.size();
        return Array({n}, std::move(v));
    }

    std::size_t size() const { return values.size(); }
    bool same_shape(const Array& o) const { return shape == o.shape; }

    std::string shape_str() const {
        std::ostringstream os;
        os << "[";
        for (std::size_t i = 0; i < shape.size(); ++i)
            os << (i ? "," : "") << shape[i];
        os << "]";
        return os.str();
    }

    bool finite() const {
        for (double v : values)
            if (!std::isfinite(v)) return false;
        return true;
    }
};

inline void require_same_shape(const Array& a, const Array& b, const char* op) {
    if (!a.same_shape(b))
        throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                    a.shape_str() + " vs " + b.shape_str());
}

class Tape;

// Lightweight handle into a tape. Copyable; valid as long as the tape lives.
struct Var {
    Tape* tape = nullptr;
    std::int32_t id = -1;

    bool valid() const { return tape != nullptr && id >= 0; }
    bool requires_grad() const;
    const Array& value() const;
    double scalar() const;
};

class Tape {
    enum class Op : std::uint8_t {
        Leaf, Const, Add, Sub, Mul, Scale, MatVec, Tanh, Sum, Mse,
        LogSumExp, Detach, Concat
    };

    struct Node {
        Array value;
        Op op = Op::Const;
        bool requires_grad = false;
        std::int32_t a = -1, b = -1;   // parents
        double aux = 0.0;              // scale factor
        std::vector<std::int32_t> parents;  // concat only
    };

public:
    Var leaf(Array v, bool requires_grad = true) {
        return push(std::move(v), Op::Leaf, requires_grad);
    }
    Var constant(Array v) { return push(std::move(v), Op::Const, false); }

    const Array& value(Var v) const { return node(v).value; }

    // Accumulated gradient of the last backward() pass; zero array when the
    // loss did not depend on v.
    Array grad(Var v) const {
        const Node& n = node(v);
        if (grads_.empty() || static_cast<std::size_t>(v.id) >= grads_.size() ||
            grads_[v.id].values.empty())
            return Array::zeros(n.value.shape);
        return grads_[v.id];
    }

    std::size_t size() const { return nodes_.size(); }

    void reset() {
        nodes_.clear();
        grads_.clear();
    }

    Var add(Var a, Var b) {
        require_same_shape(val(a), val(b), "add");
        Array out = val(a);
        const auto& bv = val(b).values;
        for (std::size_t i = 0; i < out.size(); ++i) out.values[i] += bv[i];
        return push2(std::move(out), Op::Add, a, b);
    }

    Var sub(Var a, Var b) {
        require_same_shape(val(a), val(b), "sub");
        Array out = val(a);
        const auto& bv = val(b).values;
        for (std::size_t i = 0; i < out.size(); ++i) out.values[i] -= bv[i];
        return push2(std::move(out), Op::Sub, a, b);
    }

    Var mul(Var a, Var b) {
        require_same_shape(val(a), val(b), "mul");
        Array out = val(a);
        const auto& bv = val(b).values;
        for (std::size_t i = 0; i < out.size(); ++i) out.values[i] *= bv[i];
        return push2(std::move(out), Op::Mul, a, b);
    }

    Var scale(Var a, double s) {
        Array out = val(a);
        for (double& v : out.values) v *= s;
        Var r = push2(std::move(out), Op::Scale, a, Var{});
        nodes_[r.id].aux = s;
        return r;
    }

    // w: [m,n], x: [n] -> [m]
    Var matvec(Var w, Var x) {
        const Array& wv = val(w);
        const Array& xv = val(x);
        if (wv.shape.size() != 2 || xv.shape.size() != 1 ||
            wv.shape[1] != xv.shape[0])
            throw std::invalid_argument("matvec: incompatible shapes " +
                                        wv.shape_str() + " vs " + xv.shape_str());
        std::size_t m = wv.shape[0], n = wv.shape[1];
        Array out = Array::zeros({m});
        for (std::size_t i = 0; i < m; ++i) {
            const double* row = wv.values.data() + i * n;
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) acc += row[j] * xv.values[j];
            out.values[i] = acc;
        }
        return push2(std::move(out), Op::MatVec, w, x);
    }

    Var tanh(Var a) {
        Array out = val(a);
        for (double& v : out.values) v = std::tanh(v);
        return push2(std::move(out), Op::Tanh, a, Var{});
    }

    Var sum(Var a) {
        double s = std::accumulate(val(a).values.begin(), val(a).values.end(), 0.0);
        return push2(Array::scalar(s), Op::Sum, a, Var{});
    }

    // Sum of squared elementwise differences (not mean).
    Var mse(Var a, Var b) {
        require_same_shape(val(a), val(b), "mse");
        const auto& av = val(a).values;
        const auto& bv = val(b).values;
        double s = 0.0;
        for (std::size_t i = 0; i < av.size(); ++i) {
            double d = av[i] - bv[i];
            s += d * d;
        }
        return push2(Array::scalar(s), Op::Mse, a, b);
    }

    Var log_sum_exp(Var a) {
        const auto& av = val(a).values;
        double mx = av[0];
        for (double v : av) mx = std::max(mx, v);
        double s = 0.0;
        for (double v : av) s += std::exp(v - mx);
        return push2(Array::scalar(mx + std::log(s)), Op::LogSumExp, a, Var{});
    }

    // Value-identical, gradient-annihilating.
    Var detach(Var a) {
        return push(Array(val(a)), Op::Detach, false);
    }

    Var concat(std::span<const Var> parts) {
        if (parts.empty()) throw std::invalid_argument("concat: empty");
        std::vector<double> out;
        bool rg = false;
        for (Var p : parts) {
            const Array& pv = val(p);
            if (pv.shape.size() != 1)
                throw std::invalid_argument("concat: vectors only");
            out.insert(out.end(), pv.values.begin(), pv.values.end());
            rg = rg || node(p).requires_grad;
        }
        Node n;
        n.value = Array::vec(std::move(out));
        n.op = Op::Concat;
        n.requires_grad = rg;
        for (Var p : parts) n.parents.push_back(p.id);
        nodes_.push_back(std::move(n));
        return Var{this, static_cast<std::int32_t>(nodes_.size() - 1)};
    }

    void backward(Var loss) {
        const Node& ln = node(loss);
        if (ln.value.size() != 1)
            throw std::invalid_argument("backward: loss must be a scalar");
        grads_.assign(nodes_.size(), Array{});
        seed(loss.id, Array::scalar(1.0));
        for (std::int32_t i = loss.id; i >= 0; --i) {
            Node& n = nodes_[i];
            if (!n.requires_grad || grads_[i].values.empty()) continue;
            propagate(i, n);
        }
    }

    bool requires_grad(Var v) const { return node(v).requires_grad; }

private:
    const Node& node(Var v) const {
        if (v.tape != this || v.id < 0 ||
            static_cast<std::size_t>(v.id) >= nodes_.size())
            throw std::invalid_argument("Var does not belong to this tape");
        return nodes_[v.id];
    }
    const Array& val(Var v) const { return node(v).value; }

    Var push(Array v, Op op, bool rg) {
        if (!v.finite())
            throw std::runtime_error("non-finite value produced on tape");
        Node n;
        n.value = std::move(v);
        n.op = op;
        n.requires_grad = rg;
        nodes_.push_back(std::move(n));
        return Var{this, static_cast<std::int32_t>(nodes_.size() - 1)};
    }

    Var push2(Array v, Op op, Var a, Var b) {
        bool rg = (a.valid() && node(a).requires_grad) ||
                  (b.valid() && node(b).requires_grad);
        Var r = push(std::move(v), op, rg);
        nodes_[r.id].a = a.valid() ? a.id : -1;
        nodes_[r.id].b = b.valid() ? b.id : -1;
        return r;
    }

    void seed(std::int32_t id, Array g) {
        if (grads_[id].values.empty())
            grads_[id] = std::move(g);
        else
            for (std::size_t i = 0; i < g.size(); ++i)
                grads_[id].values[i] += g.values[i];
    }

    void accum(std::int32_t id, const std::vector<double>& g) {
        if (id < 0 || !nodes_[id].requires_grad) return;
        if (grads_[id].values.empty())
            grads_[id] = Array::zeros(nodes_[id].value.shape);
        for (std::size_t i = 0; i < g.size(); ++i)
            grads_[id].values[i] += g[i];
    }

    void propagate(std::int32_t i, const Node& n) {
        const std::vector<double>& g = grads_[i].values;
        switch (n.op) {
        case Op::Leaf:
        case Op::Const:
        case Op::Detach:
            break;
        case Op::Add:
            accum(n.a, g);
            accum(n.b, g);
            break;
        case Op::Sub: {
            accum(n.a, g);
            if (n.b >= 0 && nodes_[n.b].requires_grad) {
                std::vector<double> ng(g.size());
                for (std::size_t k = 0; k < g.size(); ++k) ng[k] = -g[k];
                accum(n.b, ng);
            }
            break;
        }
        case Op::Mul: {
            if (nodes_[n.a].requires_grad) {
                std::vector<double> ga(g.size());
                const auto& bv = nodes_[n.b].value.values;
                for (std::size_t k = 0; k < g.size(); ++k) ga[k] = g[k] * bv[k];
                accum(n.a, ga);
            }
            if (nodes_[n.b].requires_grad) {
                std::vector<double> gb(g.size());
                const auto& av = nodes_[n.a].value.values;
                for (std::size_t k = 0; k < g.size(); ++k) gb[k] = g[k] * av[k];
                accum(n.b, gb);
            }
            break;
        }
        case Op::Scale: {
            std::vector<double> ga(g.size());
            for (std::size_t k = 0; k < g.size(); ++k) ga[k] = g[k] * n.aux;
            accum(n.a, ga);
            break;
        }
        case Op::MatVec: {
            const Array& wv = nodes_[n.a].value;
            const Array& xv = nodes_[n.b].value;
            std::size_t m = wv.shape[0], nn = wv.shape[1];
            if (nodes_[n.a].requires_grad) {
                std::vector<double> gw(m * nn);
                for (std::size_t r = 0; r < m; ++r)
                    for (std::size_t c = 0; c < nn; ++c)
                        gw[r * nn + c] = g[r] * xv.values[c];
                accum(n.a, gw);
            }
            if (nodes_[n.b].requires_grad) {
                std::vector<double> gx(nn, 0.0);
                for (std::size_t r = 0; r < m; ++r) {
                    const double* row = wv.values.data() + r * nn;
                    for (std::size_t c = 0; c < nn; ++c)
                        gx[c] += row[c] * g[r];
                }
                accum(n.b, gx);
            }
            break;
        }
        case Op::Tanh: {
            std::vector<double> ga(g.size());
            const auto& yv = n.value.values;
            for (std::size_t k = 0; k < g.size(); ++k)
                ga[k] = g[k] * (1.0 - yv[k] * yv[k]);
            accum(n.a, ga);
            break;
        }
        case Op::Sum: {
            std::vector<double> ga(nodes_[n.a].value.size(), g[0]);
            accum(n.a, ga);
            break;
        }
        case Op::Mse: {
            const auto& av = nodes_[n.a].value.values;
            const auto& bv = nodes_[n.b].value.values;
            if (nodes_[n.a].requires_grad) {
                std::vector<double> ga(av.size());
                for (std::size_t k = 0; k < av.size(); ++k)
                    ga[k] = 2.0 * g[0] * (av[k] - bv[k]);
                accum(n.a, ga);
            }
            if (nodes_[n.b].requires_grad) {
                std::vector<double> gb(av.size());
                for (std::size_t k = 0; k < av.size(); ++k)
                    gb[k] = -2.0 * g[0] * (av[k] - bv[k]);
                accum(n.b, gb);
            }
            break;
        }
        case Op::LogSumExp: {
            const auto& av = nodes_[n.a].value.values;
            double lse = n.value.values[0];
            std::vector<double> ga(av.size());
            for (std::size_t k = 0; k < av.size(); ++k)
                ga[k] = g[0] * std::exp(av[k] - lse);
            accum(n.a, ga);
            break;
        }
        case Op::Concat: {
            std::size_t off = 0;
            for (std::int32_t p : n.parents) {
                std::size_t len = nodes_[p].value.size();
                if (nodes_[p].requires_grad) {
                    std::vector<double> gp(g.begin() + off, g.begin() + off + len);
                    accum(p, gp);
                }
                off += len;
            }
            break;
        }
        }
    }

    std::vector<Node> nodes_;
    std::vector<Array> grads_;
};

inline bool Var::requires_grad() const { return tape->requires_grad(*this); }
inline const Array& Var::value() const { return tape->value(*this); }
inline double Var::scalar() const {
    const Array& a = tape->value(*this);
    if (a.size() != 1) throw std::invalid_argument("Var::scalar: not a scalar");
    return a.values[0];
}

struct FiniteDiffReport {
    double max_rel_error = 0.0;
    bool pass = false;
};

// Central-difference check of an analytic gradient. `f` maps a flat parameter
// vector to a scalar; `grad` is the candidate gradient at `params`.
inline FiniteDiffReport finite_diff_check(
    const std::function<double(const std::vector<double>&)>& f,
    const std::vector<double>& params, const std::vector<double>& grad,
    double step, double tolerance) {
    if (step <= 0.0) throw std::invalid_argument("finite_diff_check: step <= 0");
    FiniteDiffReport rep;
    std::vector<double> p = params;
    for (std::size_t i = 0; i < p.size(); ++i) {
        double orig = p[i];
        p[i] = orig + step;
        double fp = f(p);
        p[i] = orig - step;
        double fm = f(p);
        p[i] = orig;
        double numeric = (fp - fm) / (2.0 * step);
        double denom = std::max({std::abs(numeric), std::abs(grad[i]), 1e-8});
        double rel = std::abs(numeric - grad[i]) / denom;
        rep.max_rel_error = std::max(rep.max_rel_error, rel);
    }
    rep.pass = rep.max_rel_error < tolerance;
    return rep;
}

}  // namespace sude
