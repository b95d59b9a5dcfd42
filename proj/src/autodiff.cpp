#include "cyclevqa/autodiff.hpp"

#include <cmath>

namespace cyclevqa::ad {

namespace {

void check_same_shape(const Var& a, const Var& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw ShapeError(std::string(op) + ": operand shapes " + std::to_string(a.rows()) + "x" +
                         std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                         std::to_string(b.cols()));
    }
}

}  // namespace

Tape::Node* Tape::fresh(Mat value, bool requires_grad) {
    nodes_.emplace_back();
    Node* n = &nodes_.back();
    n->value = std::move(value);
    n->requires_grad = requires_grad;
    if (requires_grad) n->grad = Mat::Zero(n->value.rows(), n->value.cols());
    return n;
}

void Tape::accum(Node* n, const Mat& g) {
    if (n->requires_grad) n->grad += g;
}

Var Tape::leaf(Mat value, bool requires_grad) { return Var(fresh(std::move(value), requires_grad)); }

Var Tape::scalar(double v) {
    Mat m(1, 1);
    m(0, 0) = v;
    return leaf(std::move(m), false);
}

Var Tape::matmul(Var a, Var b) {
    if (a.cols() != b.rows()) {
        throw ShapeError("matmul: inner dimensions " + std::to_string(a.cols()) + " vs " +
                         std::to_string(b.rows()));
    }
    bool rg = a.requires_grad() || b.requires_grad();
    Node* out = fresh(a.value() * b.value(), rg);
    if (rg) {
        Node *an = a.node_, *bn = b.node_;
        backprop_.push_back([an, bn, out] {
            if (an->requires_grad) an->grad.noalias() += out->grad * bn->value.transpose();
            if (bn->requires_grad) bn->grad.noalias() += an->value.transpose() * out->grad;
        });
    }
    return Var(out);
}

Var Tape::add(Var a, Var b) {
    check_same_shape(a, b, "add");
    bool rg = a.requires_grad() || b.requires_grad();
    Node* out = fresh(a.value() + b.value(), rg);
    if (rg) {
        Node *an = a.node_, *bn = b.node_;
        backprop_.push_back([an, bn, out] {
            accum(an, out->grad);
            accum(bn, out->grad);
        });
    }
    return Var(out);
}

Var Tape::sub(Var a, Var b) {
    check_same_shape(a, b, "sub");
    bool rg = a.requires_grad() || b.requires_grad();
    Node* out = fresh(a.value() - b.value(), rg);
    if (rg) {
        Node *an = a.node_, *bn = b.node_;
        backprop_.push_back([an, bn, out] {
            accum(an, out->grad);
            if (bn->requires_grad) bn->grad -= out->grad;
        });
    }
    return Var(out);
}

Var Tape::cmul(Var a, Var b) {
    check_same_shape(a, b, "cmul");
    bool rg = a.requires_grad() || b.requires_grad();
    Node* out = fresh(a.value().cwiseProduct(b.value()), rg);
    if (rg) {
        Node *an = a.node_, *bn = b.node_;
        backprop_.push_back([an, bn, out] {
            if (an->requires_grad) an->grad += out->grad.cwiseProduct(bn->value);
            if (bn->requires_grad) bn->grad += out->grad.cwiseProduct(an->value);
        });
    }
    return Var(out);
}

Var Tape::scale(Var a, double s) {
    bool rg = a.requires_grad();
    Node* out = fresh(a.value() * s, rg);
    if (rg) {
        Node* an = a.node_;
        backprop_.push_back([an, out, s] { an->grad += out->grad * s; });
    }
    return Var(out);
}

Var Tape::add_colvec(Var m, Var v) {
    if (v.cols() != 1 || v.rows() != m.rows()) {
        throw ShapeError("add_colvec: vector " + std::to_string(v.rows()) + "x" +
                         std::to_string(v.cols()) + " against matrix with " +
                         std::to_string(m.rows()) + " rows");
    }
    bool rg = m.requires_grad() || v.requires_grad();
    Node* out = fresh(m.value().colwise() + Eigen::VectorXd(v.value().col(0)), rg);
    if (rg) {
        Node *mn = m.node_, *vn = v.node_;
        backprop_.push_back([mn, vn, out] {
            accum(mn, out->grad);
            if (vn->requires_grad) vn->grad += out->grad.rowwise().sum();
        });
    }
    return Var(out);
}

Var Tape::sigmoid(Var a) {
    Mat y = (1.0 + (-a.value().array()).exp()).inverse().matrix();
    bool rg = a.requires_grad();
    Node* out = fresh(std::move(y), rg);
    if (rg) {
        Node* an = a.node_;
        backprop_.push_back([an, out] {
            an->grad.array() +=
                out->grad.array() * out->value.array() * (1.0 - out->value.array());
        });
    }
    return Var(out);
}

Var Tape::tanh(Var a) {
    Mat y = a.value().array().tanh().matrix();
    bool rg = a.requires_grad();
    Node* out = fresh(std::move(y), rg);
    if (rg) {
        Node* an = a.node_;
        backprop_.push_back([an, out] {
            an->grad.array() += out->grad.array() * (1.0 - out->value.array().square());
        });
    }
    return Var(out);
}

Var Tape::softmax_col(Var a) {
    if (a.cols() != 1) throw ShapeError("softmax_col: expected column vector");
    const double mx = a.value().maxCoeff();
    Eigen::ArrayXd e = (a.value().col(0).array() - mx).exp();
    Mat y = (e / e.sum()).matrix();
    bool rg = a.requires_grad();
    Node* out = fresh(std::move(y), rg);
    if (rg) {
        Node* an = a.node_;
        backprop_.push_back([an, out] {
            const double dot = (out->value.array() * out->grad.array()).sum();
            an->grad.array() += out->value.array() * (out->grad.array() - dot);
        });
    }
    return Var(out);
}

Var Tape::transpose(Var a) {
    bool rg = a.requires_grad();
    Node* out = fresh(a.value().transpose(), rg);
    if (rg) {
        Node* an = a.node_;
        backprop_.push_back([an, out] { an->grad += out->grad.transpose(); });
    }
    return Var(out);
}

Var Tape::sum(Var a) {
    Mat s(1, 1);
    s(0, 0) = a.value().sum();
    bool rg = a.requires_grad();
    Node* out = fresh(std::move(s), rg);
    if (rg) {
        Node* an = a.node_;
        backprop_.push_back([an, out] { an->grad.array() += out->grad(0, 0); });
    }
    return Var(out);
}

Var Tape::mean(Var a) {
    const double n = static_cast<double>(a.value().size());
    Mat s(1, 1);
    s(0, 0) = a.value().sum() / n;
    bool rg = a.requires_grad();
    Node* out = fresh(std::move(s), rg);
    if (rg) {
        Node* an = a.node_;
        backprop_.push_back([an, out, n] { an->grad.array() += out->grad(0, 0) / n; });
    }
    return Var(out);
}

Var Tape::pick(Var a, Eigen::Index i) {
    if (a.cols() != 1) throw ShapeError("pick: expected column vector");
    if (i < 0 || i >= a.rows()) throw ArgumentError("pick: index " + std::to_string(i) + " out of range");
    Mat s(1, 1);
    s(0, 0) = a.value()(i, 0);
    bool rg = a.requires_grad();
    Node* out = fresh(std::move(s), rg);
    if (rg) {
        Node* an = a.node_;
        backprop_.push_back([an, out, i] { an->grad(i, 0) += out->grad(0, 0); });
    }
    return Var(out);
}

Var Tape::pick_row_t(Var a, Eigen::Index r) {
    if (r < 0 || r >= a.rows()) throw ArgumentError("pick_row_t: row " + std::to_string(r) + " out of range");
    bool rg = a.requires_grad();
    Node* out = fresh(a.value().row(r).transpose(), rg);
    if (rg) {
        Node* an = a.node_;
        backprop_.push_back([an, out, r] { an->grad.row(r) += out->grad.transpose(); });
    }
    return Var(out);
}

Var Tape::vcat(Var a, Var b) {
    if (a.cols() != b.cols()) throw ShapeError("vcat: column count mismatch");
    Mat y(a.rows() + b.rows(), a.cols());
    y.topRows(a.rows()) = a.value();
    y.bottomRows(b.rows()) = b.value();
    bool rg = a.requires_grad() || b.requires_grad();
    Node* out = fresh(std::move(y), rg);
    if (rg) {
        Node *an = a.node_, *bn = b.node_;
        const Eigen::Index ar = a.rows(), br = b.rows();
        backprop_.push_back([an, bn, out, ar, br] {
            if (an->requires_grad) an->grad += out->grad.topRows(ar);
            if (bn->requires_grad) bn->grad += out->grad.bottomRows(br);
        });
    }
    return Var(out);
}

Var Tape::slice_rows(Var a, Eigen::Index r0, Eigen::Index n) {
    if (r0 < 0 || n < 1 || r0 + n > a.rows()) throw ArgumentError("slice_rows: bad range");
    bool rg = a.requires_grad();
    Node* out = fresh(a.value().middleRows(r0, n), rg);
    if (rg) {
        Node* an = a.node_;
        backprop_.push_back([an, out, r0, n] { an->grad.middleRows(r0, n) += out->grad; });
    }
    return Var(out);
}

Var Tape::neg_log_clamped(Var p, double eps) {
    if (p.rows() != 1 || p.cols() != 1) throw ShapeError("neg_log_clamped: expected 1x1");
    const double v = p.value()(0, 0);
    Mat s(1, 1);
    s(0, 0) = -std::log(std::max(v, eps));
    bool rg = p.requires_grad();
    Node* out = fresh(std::move(s), rg);
    if (rg) {
        Node* pn = p.node_;
        backprop_.push_back([pn, out, v, eps] {
            if (v > eps) pn->grad(0, 0) += out->grad(0, 0) * (-1.0 / v);
        });
    }
    return Var(out);
}

Var Tape::add_n(const std::vector<Var>& xs) {
    if (xs.empty()) throw ArgumentError("add_n: empty input");
    Mat y = xs[0].value();
    bool rg = xs[0].requires_grad();
    for (std::size_t i = 1; i < xs.size(); ++i) {
        check_same_shape(xs[0], xs[i], "add_n");
        y += xs[i].value();
        rg = rg || xs[i].requires_grad();
    }
    Node* out = fresh(std::move(y), rg);
    if (rg) {
        std::vector<Node*> ins;
        ins.reserve(xs.size());
        for (const Var& x : xs) ins.push_back(x.node_);
        backprop_.push_back([ins, out] {
            for (Node* n : ins) accum(n, out->grad);
        });
    }
    return Var(out);
}

void Tape::backward(Var loss) {
    if (loss.rows() != 1 || loss.cols() != 1) throw ShapeError("backward: loss must be 1x1");
    if (!loss.node_->requires_grad) return;  // nothing on the tape depends on parameters
    loss.node_->grad(0, 0) += 1.0;
    for (auto it = backprop_.rbegin(); it != backprop_.rend(); ++it) (*it)();
}

Var ParamBinder::bind(const std::string& name, const Mat& value) {
    auto it = vars_.find(name);
    if (it != vars_.end()) return it->second;
    Var v = tape_->leaf(value, true);
    vars_.emplace(name, v);
    return v;
}

GradMap ParamBinder::grads() const {
    GradMap g;
    for (const auto& [name, var] : vars_) g.emplace(name, var.grad());
    return g;
}

}  // namespace cyclevqa::ad
