#pragma once

#include <string>
#include <utility>

#include "cyclevqa/autodiff.hpp"
#include "cyclevqa/rng.hpp"

namespace cyclevqa::nn {

using ad::Mat;
using ad::Var;

inline Mat glorot_uniform(Eigen::Index rows, Eigen::Index cols, rng::Engine& g) {
    const double a = std::sqrt(6.0 / static_cast<double>(rows + cols));
    Mat m(rows, cols);
    for (Eigen::Index c = 0; c < cols; ++c)
        for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = rng::uniform(g, -a, a);
    return m;
}

// One LSTM cell; gate layout along rows is [input, forget, cell, output].
struct LstmParams {
    Mat w_ih;  // 4H x I
    Mat w_hh;  // 4H x H
    Mat b;     // 4H x 1
};

inline LstmParams make_lstm(Eigen::Index input, Eigen::Index hidden, rng::Engine& g) {
    LstmParams p;
    p.w_ih = glorot_uniform(4 * hidden, input, g);
    p.w_hh = glorot_uniform(4 * hidden, hidden, g);
    p.b = Mat::Zero(4 * hidden, 1);
    // forget-gate bias 1, the usual LSTM starting point
    p.b.middleRows(hidden, hidden).setOnes();
    return p;
}

struct LstmVars {
    Var w_ih, w_hh, b;
};

inline LstmVars bind_lstm(ad::ParamBinder& binder, const std::string& prefix, const LstmParams& p) {
    return LstmVars{binder.bind(prefix + ".w_ih", p.w_ih), binder.bind(prefix + ".w_hh", p.w_hh),
                    binder.bind(prefix + ".b", p.b)};
}

struct LstmState {
    Var h, c;
};

inline LstmState lstm_step(ad::Tape& t, const LstmVars& p, Var x, LstmState s) {
    const Eigen::Index hidden = s.h.rows();
    Var gates = t.add(t.add(t.matmul(p.w_ih, x), t.matmul(p.w_hh, s.h)), p.b);
    Var i = t.sigmoid(t.slice_rows(gates, 0, hidden));
    Var f = t.sigmoid(t.slice_rows(gates, hidden, hidden));
    Var g = t.tanh(t.slice_rows(gates, 2 * hidden, hidden));
    Var o = t.sigmoid(t.slice_rows(gates, 3 * hidden, hidden));
    Var c = t.add(t.cmul(f, s.c), t.cmul(i, g));
    Var h = t.cmul(o, t.tanh(c));
    return LstmState{h, c};
}

// Tape-free twin of lstm_step for inference paths (decoding); must stay in
// lockstep with the graph version — the unit tests compare the two.
struct PlainLstmState {
    Eigen::VectorXd h, c;
};

inline PlainLstmState lstm_step_plain(const LstmParams& p, const Eigen::VectorXd& x,
                                      const PlainLstmState& s) {
    const Eigen::Index hidden = s.h.rows();
    const Eigen::VectorXd gates = p.w_ih * x + p.w_hh * s.h + p.b;
    const auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
    PlainLstmState out;
    out.h.resize(hidden);
    out.c.resize(hidden);
    for (Eigen::Index j = 0; j < hidden; ++j) {
        const double i = sig(gates(j));
        const double f = sig(gates(hidden + j));
        const double g = std::tanh(gates(2 * hidden + j));
        const double o = sig(gates(3 * hidden + j));
        out.c(j) = f * s.c(j) + i * g;
        out.h(j) = o * std::tanh(out.c(j));
    }
    return out;
}

inline Eigen::VectorXd softmax_plain(const Eigen::VectorXd& logits) {
    const double m = logits.maxCoeff();
    Eigen::VectorXd e = (logits.array() - m).exp();
    return e / e.sum();
}

}  // namespace cyclevqa::nn
