#pragma once

#include <Eigen/Dense>
#include <deque>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "cyclevqa/errors.hpp"

namespace cyclevqa::ad {

using Mat = Eigen::MatrixXd;

// Reverse-mode autodiff over dense double matrices. A Tape owns every node
// created through it; Var is a cheap non-owning handle. Build one tape per
// forward pass, call backward once, read gradients, drop the tape.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    class Var {
    public:
        Var() = default;
        const Mat& value() const { return node_->value; }
        const Mat& grad() const { return node_->grad; }
        bool requires_grad() const { return node_->requires_grad; }
        Eigen::Index rows() const { return node_->value.rows(); }
        Eigen::Index cols() const { return node_->value.cols(); }
        bool valid() const { return node_ != nullptr; }

    private:
        friend class Tape;
        struct Node {
            Mat value;
            Mat grad;
            bool requires_grad = false;
        };
        explicit Var(Node* n) : node_(n) {}
        Node* node_ = nullptr;
    };

    Var leaf(Mat value, bool requires_grad = false);
    Var constant(Mat value) { return leaf(std::move(value), false); }
    Var scalar(double v);

    Var matmul(Var a, Var b);
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var cmul(Var a, Var b);
    Var scale(Var a, double s);
    Var add_colvec(Var m, Var v);  // broadcast column vector v over the columns of m
    Var sigmoid(Var a);
    Var tanh(Var a);
    Var softmax_col(Var a);  // column-vector softmax, max-shifted
    Var transpose(Var a);
    Var sum(Var a);   // 1x1
    Var mean(Var a);  // 1x1
    Var pick(Var a, Eigen::Index i);        // element i of a column vector, as 1x1
    Var pick_row_t(Var a, Eigen::Index r);  // row r of a matrix, as a column vector
    Var vcat(Var a, Var b);
    Var slice_rows(Var a, Eigen::Index r0, Eigen::Index n);
    Var neg_log_clamped(Var p, double eps);  // -log(max(p, eps)) of a 1x1
    Var add_n(const std::vector<Var>& xs);   // elementwise sum, at least one input

    // Seeds d(loss)/d(loss) = 1 and sweeps the tape once, accumulating into
    // the grad of every node with requires_grad. loss must be 1x1.
    void backward(Var loss);

    std::size_t num_nodes() const { return nodes_.size(); }

private:
    using Node = Var::Node;
    Node* fresh(Mat value, bool requires_grad);
    static void accum(Node* n, const Mat& g);

    std::deque<Node> nodes_;  // deque: stable addresses
    std::vector<std::function<void()>> backprop_;
};

using Var = Tape::Var;

// Binds named parameter matrices to grad-requiring leaves. Binding the same
// name twice returns the same Var, which is what gives two forward branches
// shared weights on one tape.
class ParamBinder {
public:
    explicit ParamBinder(Tape& tape) : tape_(&tape) {}

    Var bind(const std::string& name, const Mat& value);
    bool has(const std::string& name) const { return vars_.count(name) != 0; }
    const std::map<std::string, Var>& bound() const { return vars_; }

    // Gradient per bound name, after Tape::backward.
    std::map<std::string, Mat> grads() const;

private:
    Tape* tape_;
    std::map<std::string, Var> vars_;
};

using GradMap = std::map<std::string, Mat>;

}  // namespace cyclevqa::ad
