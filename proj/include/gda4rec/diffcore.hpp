#pragma once

#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "gda4rec/errors.hpp"
#include "gda4rec/sparse.hpp"

// Minimal reverse-mode differentiation over dense row-major matrices.
//
// A Tape records one forward pass. Every primitive computes its value eagerly
// and registers a backward rule; Tape::backward walks the nodes in reverse
// recording order, which is a valid reverse topological order because parents
// are always recorded before their children.
namespace gda4rec::ad {

class Tape;

class Var {
public:
    Var() = default;
    Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

    Tape* tape() const { return tape_; }
    std::size_t id() const { return id_; }
    bool valid() const { return tape_ != nullptr; }

    const Matrix& value() const;
    Eigen::Index rows() const { return value().rows(); }
    Eigen::Index cols() const { return value().cols(); }
    /// Value of a 1x1 node.
    double scalar() const;

private:
    Tape* tape_ = nullptr;
    std::size_t id_ = 0;
};

using BackwardFn = std::function<void(Tape&, const Matrix& out_grad)>;

class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// Differentiable input (a parameter).
    Var leaf(Matrix value) { return push("leaf", std::move(value), true, {}, nullptr); }

    /// Non-differentiable input.
    Var constant(Matrix value) { return push("constant", std::move(value), false, {}, nullptr); }

    Var record(const char* op, Matrix value, std::initializer_list<Var> parents, BackwardFn fn) {
        bool needs = false;
        std::vector<std::size_t> ids;
        ids.reserve(parents.size());
        for (const Var& p : parents) {
            if (p.tape() != this) {
                throw std::invalid_argument(std::string(op) + ": operand recorded on a different tape");
            }
            needs = needs || nodes_[p.id()].requires_grad;
            ids.push_back(p.id());
        }
        return push(op, std::move(value), needs, std::move(ids), needs ? std::move(fn) : nullptr);
    }

    const Matrix& value(std::size_t id) const { return nodes_[id].value; }
    const char* op(std::size_t id) const { return nodes_[id].op; }
    const std::vector<std::size_t>& parents(std::size_t id) const { return nodes_[id].parents; }
    bool requires_grad(const Var& v) const { return nodes_[v.id()].requires_grad; }
    std::size_t size() const { return nodes_.size(); }

    /// Adds `contribution` into the gradient of `target` (lazily zero-initialized).
    template <typename Expr>
    void accumulate(const Var& target, const Expr& contribution) {
        Node& node = nodes_[target.id()];
        if (!node.requires_grad) {
            return;
        }
        if (node.grad.size() == 0) {
            node.grad = contribution;
        } else {
            node.grad += Matrix(contribution);
        }
    }

    /// Runs the backward sweep from a 1x1 loss. Gradients from a previous sweep
    /// are cleared first.
    void backward(const Var& loss) {
        const Matrix& v = nodes_.at(loss.id()).value;
        if (v.rows() != 1 || v.cols() != 1) {
            throw ShapeError("backward: loss must be 1x1, got " + std::to_string(v.rows()) + "x" +
                             std::to_string(v.cols()));
        }
        for (auto& n : nodes_) {
            n.grad.resize(0, 0);
        }
        nodes_[loss.id()].grad = Matrix::Ones(1, 1);
        for (std::size_t k = loss.id() + 1; k-- > 0;) {
            Node& n = nodes_[k];
            if (n.backward && n.grad.size() != 0) {
                n.backward(*this, n.grad);
            }
        }
    }

    /// d(loss)/d(v) after backward; zeros when v did not influence the loss.
    Matrix gradient(const Var& v) const {
        const Node& n = nodes_.at(v.id());
        if (n.grad.size() == 0) {
            return Matrix::Zero(n.value.rows(), n.value.cols());
        }
        return n.grad;
    }

private:
    struct Node {
        const char* op;
        Matrix value;
        Matrix grad;
        bool requires_grad;
        std::vector<std::size_t> parents;
        BackwardFn backward;
    };

    Var push(const char* op, Matrix value, bool requires_grad, std::vector<std::size_t> parents, BackwardFn fn) {
        nodes_.push_back(Node{op, std::move(value), Matrix(), requires_grad, std::move(parents), std::move(fn)});
        return Var(this, nodes_.size() - 1);
    }

    std::vector<Node> nodes_;
};

inline const Matrix& Var::value() const { return tape_->value(id_); }

inline double Var::scalar() const {
    const Matrix& v = value();
    if (v.rows() != 1 || v.cols() != 1) {
        throw ShapeError("scalar: node is " + std::to_string(v.rows()) + "x" + std::to_string(v.cols()));
    }
    return v(0, 0);
}

namespace detail {

inline std::string shape(const Var& v) { return std::to_string(v.rows()) + "x" + std::to_string(v.cols()); }

inline void require_same_shape(const char* op, const Var& a, const Var& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw ShapeError(std::string(op) + ": shapes " + shape(a) + " and " + shape(b) + " differ");
    }
}

inline double sigmoid(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    double e = std::exp(x);
    return e / (1.0 + e);
}

inline double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

inline double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI); }

template <typename F, typename D>
Var unary(const char* op, const Var& x, F forward, D derivative) {
    Matrix out = x.value().unaryExpr(forward);
    return x.tape()->record(op, std::move(out), {x}, [x, derivative](Tape& t, const Matrix& g) {
        t.accumulate(x, g.cwiseProduct(x.value().unaryExpr(derivative)));
    });
}

}  // namespace detail

inline Var matmul(const Var& a, const Var& b) {
    if (a.cols() != b.rows()) {
        throw ShapeError("matmul: shapes " + detail::shape(a) + " and " + detail::shape(b) + " incompatible");
    }
    Matrix out = a.value() * b.value();
    return a.tape()->record("matmul", std::move(out), {a, b}, [a, b](Tape& t, const Matrix& g) {
        if (t.requires_grad(a)) {
            t.accumulate(a, g * b.value().transpose());
        }
        if (t.requires_grad(b)) {
            t.accumulate(b, a.value().transpose() * g);
        }
    });
}

/// sparse * x. The sparse operand must outlive the tape.
inline Var spmm(const SparseMatrix& s, const Var& x) {
    if (static_cast<Eigen::Index>(s.cols()) != x.rows()) {
        throw ShapeError("spmm: shapes " + s.shape_string() + " and " + detail::shape(x) + " incompatible");
    }
    Matrix out = s.multiply(x.value());
    const SparseMatrix* sp = &s;
    return x.tape()->record("spmm", std::move(out), {x},
                            [sp, x](Tape& t, const Matrix& g) { t.accumulate(x, sp->transpose_multiply(g)); });
}

inline Var transpose(const Var& x) {
    Matrix out = x.value().transpose();
    return x.tape()->record("transpose", std::move(out), {x},
                            [x](Tape& t, const Matrix& g) { t.accumulate(x, g.transpose()); });
}

inline Var add(const Var& a, const Var& b) {
    detail::require_same_shape("add", a, b);
    Matrix out = a.value() + b.value();
    return a.tape()->record("add", std::move(out), {a, b}, [a, b](Tape& t, const Matrix& g) {
        t.accumulate(a, g);
        t.accumulate(b, g);
    });
}

inline Var sub(const Var& a, const Var& b) {
    detail::require_same_shape("sub", a, b);
    Matrix out = a.value() - b.value();
    return a.tape()->record("sub", std::move(out), {a, b}, [a, b](Tape& t, const Matrix& g) {
        t.accumulate(a, g);
        t.accumulate(b, -g);
    });
}

inline Var mul(const Var& a, const Var& b) {
    detail::require_same_shape("mul", a, b);
    Matrix out = a.value().cwiseProduct(b.value());
    return a.tape()->record("mul", std::move(out), {a, b}, [a, b](Tape& t, const Matrix& g) {
        if (t.requires_grad(a)) {
            t.accumulate(a, g.cwiseProduct(b.value()));
        }
        if (t.requires_grad(b)) {
            t.accumulate(b, g.cwiseProduct(a.value()));
        }
    });
}

inline Var scale(const Var& x, double factor) {
    Matrix out = x.value() * factor;
    return x.tape()->record("scale", std::move(out), {x},
                            [x, factor](Tape& t, const Matrix& g) { t.accumulate(x, g * factor); });
}

/// x + c elementwise.
inline Var shift(const Var& x, double c) {
    Matrix out = x.value().array() + c;
    return x.tape()->record("shift", std::move(out), {x}, [x](Tape& t, const Matrix& g) { t.accumulate(x, g); });
}

inline Var exp(const Var& x) {
    Matrix out = x.value().array().exp();
    Matrix y = out;
    return x.tape()->record("exp", std::move(out), {x}, [x, y = std::move(y)](Tape& t, const Matrix& g) {
        t.accumulate(x, g.cwiseProduct(y));
    });
}

inline Var log(const Var& x) {
    if ((x.value().array() <= 0.0).any()) {
        throw DivergenceError("log: non-positive input");
    }
    Matrix out = x.value().array().log();
    return x.tape()->record("log", std::move(out), {x}, [x](Tape& t, const Matrix& g) {
        t.accumulate(x, g.cwiseQuotient(x.value()));
    });
}

inline Var sigmoid(const Var& x) {
    return detail::unary(
        "sigmoid", x, [](double v) { return detail::sigmoid(v); },
        [](double v) {
            double s = detail::sigmoid(v);
            return s * (1.0 - s);
        });
}

inline Var softplus(const Var& x) {
    return detail::unary(
        "softplus", x, [](double v) { return detail::softplus(v); }, [](double v) { return detail::sigmoid(v); });
}

/// Exact GELU: x * Phi(x).
inline Var gelu(const Var& x) {
    return detail::unary(
        "gelu", x, [](double v) { return v * detail::normal_cdf(v); },
        [](double v) { return detail::normal_cdf(v) + v * detail::normal_pdf(v); });
}

inline Var square(const Var& x) {
    Matrix out = x.value().array().square();
    return x.tape()->record("square", std::move(out), {x},
                            [x](Tape& t, const Matrix& g) { t.accumulate(x, 2.0 * g.cwiseProduct(x.value())); });
}

inline constexpr double kNormGuard = 1e-12;

/// Each row scaled to unit L2 norm. Rows with norm <= 1e-12 map to zero and
/// pass no gradient.
inline Var row_l2_normalize(const Var& x) {
    const Matrix& xv = x.value();
    Eigen::VectorXd norms = xv.rowwise().norm();
    Matrix out(xv.rows(), xv.cols());
    for (Eigen::Index r = 0; r < xv.rows(); ++r) {
        if (norms(r) > kNormGuard) {
            out.row(r) = xv.row(r) / norms(r);
        } else {
            out.row(r).setZero();
        }
    }
    Matrix y = out;
    return x.tape()->record("row_l2_normalize", std::move(out), {x},
                            [x, y = std::move(y), norms = std::move(norms)](Tape& t, const Matrix& g) {
                                Matrix dx(g.rows(), g.cols());
                                for (Eigen::Index r = 0; r < g.rows(); ++r) {
                                    if (norms(r) > kNormGuard) {
                                        double proj = y.row(r).dot(g.row(r));
                                        dx.row(r) = (g.row(r) - proj * y.row(r)) / norms(r);
                                    } else {
                                        dx.row(r).setZero();
                                    }
                                }
                                t.accumulate(x, dx);
                            });
}

/// Rows x[indices[0]], x[indices[1]], ... (indices may repeat).
inline Var gather_rows(const Var& x, std::vector<Index> indices) {
    const Matrix& xv = x.value();
    Matrix out(static_cast<Eigen::Index>(indices.size()), xv.cols());
    for (std::size_t k = 0; k < indices.size(); ++k) {
        if (indices[k] >= xv.rows()) {
            throw ShapeError("gather_rows: index " + std::to_string(indices[k]) + " out of range for " +
                             detail::shape(x));
        }
        out.row(static_cast<Eigen::Index>(k)) = xv.row(indices[k]);
    }
    return x.tape()->record("gather_rows", std::move(out), {x},
                            [x, idx = std::move(indices)](Tape& t, const Matrix& g) {
                                Matrix dx = Matrix::Zero(x.rows(), x.cols());
                                for (std::size_t k = 0; k < idx.size(); ++k) {
                                    dx.row(idx[k]) += g.row(static_cast<Eigen::Index>(k));
                                }
                                t.accumulate(x, dx);
                            });
}

/// Contiguous rows [start, start + count).
inline Var row_block(const Var& x, Eigen::Index start, Eigen::Index count) {
    if (start < 0 || count < 0 || start + count > x.rows()) {
        throw ShapeError("row_block: rows [" + std::to_string(start) + "," + std::to_string(start + count) +
                         ") out of range for " + detail::shape(x));
    }
    Matrix out = x.value().middleRows(start, count);
    return x.tape()->record("row_block", std::move(out), {x}, [x, start, count](Tape& t, const Matrix& g) {
        Matrix dx = Matrix::Zero(x.rows(), x.cols());
        dx.middleRows(start, count) = g;
        t.accumulate(x, dx);
    });
}

/// Contiguous columns [start, start + count).
inline Var col_slice(const Var& x, Eigen::Index start, Eigen::Index count) {
    if (start < 0 || count < 0 || start + count > x.cols()) {
        throw ShapeError("col_slice: cols [" + std::to_string(start) + "," + std::to_string(start + count) +
                         ") out of range for " + detail::shape(x));
    }
    Matrix out = x.value().middleCols(start, count);
    return x.tape()->record("col_slice", std::move(out), {x}, [x, start, count](Tape& t, const Matrix& g) {
        Matrix dx = Matrix::Zero(x.rows(), x.cols());
        dx.middleCols(start, count) = g;
        t.accumulate(x, dx);
    });
}

inline Var sum(const Var& x) {
    Matrix out(1, 1);
    out(0, 0) = x.value().sum();
    return x.tape()->record("sum", std::move(out), {x}, [x](Tape& t, const Matrix& g) {
        t.accumulate(x, Matrix::Constant(x.rows(), x.cols(), g(0, 0)));
    });
}

inline Var mean(const Var& x) {
    if (x.value().size() == 0) {
        throw ShapeError("mean: empty operand");
    }
    const double count = static_cast<double>(x.value().size());
    Matrix out(1, 1);
    out(0, 0) = x.value().sum() / count;
    return x.tape()->record("mean", std::move(out), {x}, [x, count](Tape& t, const Matrix& g) {
        t.accumulate(x, Matrix::Constant(x.rows(), x.cols(), g(0, 0) / count));
    });
}

/// rows x 1 column of row sums.
inline Var row_sum(const Var& x) {
    Matrix out = x.value().rowwise().sum();
    return x.tape()->record("row_sum", std::move(out), {x}, [x](Tape& t, const Matrix& g) {
        t.accumulate(x, g.replicate(1, x.cols()));
    });
}

/// Stable log(sum(exp(row))) as a rows x 1 column.
inline Var row_logsumexp(const Var& x) {
    const Matrix& xv = x.value();
    Eigen::VectorXd peak = xv.rowwise().maxCoeff();
    Matrix softmax = (xv.colwise() - peak).array().exp();
    Eigen::VectorXd total = softmax.rowwise().sum();
    Matrix out(xv.rows(), 1);
    for (Eigen::Index r = 0; r < xv.rows(); ++r) {
        out(r, 0) = peak(r) + std::log(total(r));
        softmax.row(r) /= total(r);
    }
    return x.tape()->record("row_logsumexp", std::move(out), {x},
                            [x, softmax = std::move(softmax)](Tape& t, const Matrix& g) {
                                t.accumulate(x, softmax.array().colwise() * g.col(0).array());
                            });
}

/// x + b with b a 1 x cols row broadcast over every row.
inline Var add_row_broadcast(const Var& x, const Var& b) {
    if (b.rows() != 1 || b.cols() != x.cols()) {
        throw ShapeError("add_row_broadcast: shapes " + detail::shape(x) + " and " + detail::shape(b) +
                         " incompatible");
    }
    Matrix out = x.value().rowwise() + b.value().row(0);
    return x.tape()->record("add_row_broadcast", std::move(out), {x, b}, [x, b](Tape& t, const Matrix& g) {
        t.accumulate(x, g);
        t.accumulate(b, g.colwise().sum());
    });
}

/// x + c with c a rows x 1 column broadcast over every column.
inline Var add_col_broadcast(const Var& x, const Var& c) {
    if (c.cols() != 1 || c.rows() != x.rows()) {
        throw ShapeError("add_col_broadcast: shapes " + detail::shape(x) + " and " + detail::shape(c) +
                         " incompatible");
    }
    Matrix out = x.value().colwise() + c.value().col(0);
    return x.tape()->record("add_col_broadcast", std::move(out), {x, c}, [x, c](Tape& t, const Matrix& g) {
        t.accumulate(x, g);
        t.accumulate(c, g.rowwise().sum());
    });
}

/// Row-wise dot products of equally shaped operands (rows x 1).
inline Var row_dot(const Var& a, const Var& b) { return row_sum(mul(a, b)); }

struct GradientCheck {
    double max_rel_error = 0.0;
    double loss = 0.0;
    std::size_t coordinates = 0;
};

using LossBuilder = std::function<Var(Tape&, std::span<const Var> params)>;

/// Compares reverse-mode gradients of `build` at `point` with central finite
/// differences. Error per coordinate is |analytic - fd| / max(1, |analytic|).
inline GradientCheck check_gradients(const LossBuilder& build, const std::vector<Matrix>& point, double h = 1e-5) {
    auto evaluate = [&](const std::vector<Matrix>& at, std::vector<Matrix>* grads) {
        Tape tape;
        std::vector<Var> vars;
        vars.reserve(at.size());
        for (const auto& p : at) {
            vars.push_back(tape.leaf(p));
        }
        Var loss = build(tape, vars);
        double value = loss.scalar();
        if (!std::isfinite(value)) {
            throw DivergenceError("check_gradients: loss is not finite");
        }
        if (grads != nullptr) {
            tape.backward(loss);
            for (const auto& v : vars) {
                grads->push_back(tape.gradient(v));
            }
        }
        return value;
    };

    GradientCheck result;
    std::vector<Matrix> analytic;
    result.loss = evaluate(point, &analytic);
    std::vector<Matrix> probe = point;
    for (std::size_t p = 0; p < probe.size(); ++p) {
        for (Eigen::Index k = 0; k < probe[p].size(); ++k) {
            double* coord = probe[p].data() + k;
            const double original = *coord;
            *coord = original + h;
            double up = evaluate(probe, nullptr);
            *coord = original - h;
            double down = evaluate(probe, nullptr);
            *coord = original;
            double fd = (up - down) / (2.0 * h);
            double a = analytic[p].data()[k];
            result.max_rel_error = std::max(result.max_rel_error, std::abs(a - fd) / std::max(1.0, std::abs(a)));
            ++result.coordinates;
        }
    }
    return result;
}

}  // namespace gda4rec::ad
