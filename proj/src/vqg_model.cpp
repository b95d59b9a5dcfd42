#include "cyclevqa/vqg_model.hpp"

#include <cmath>
#include <limits>
#include <vector>

#include "cyclevqa/vqa_model.hpp"  // kProbFloor, argmax_lowest

namespace cyclevqa {

VQGParams make_vqg_params(const VQGModelConfig& config, rng::Engine& g) {
    if (config.vocab_size < static_cast<int>(Vocabulary::kNumSpecials))
        throw ArgumentError("vqg config: vocab_size smaller than the special-token set");
    if (config.n_answers < 1) throw ArgumentError("vqg config: n_answers must be >= 1");
    if (config.embed_dim < 1 || config.enc_dim < 1 || config.hidden_dim < 1 ||
        config.feature_dim < 1)
        throw ArgumentError("vqg config: dimensions must be >= 1");

    const int e = config.embed_dim;
    const int enc = config.enc_dim;
    const int h = config.hidden_dim;

    VQGParams p;
    p.config = config;
    p.embedding = nn::glorot_uniform(config.vocab_size, e, g);
    p.embedding.row(Vocabulary::kPad).setZero();
    p.ans_w = nn::glorot_uniform(enc, config.n_answers, g);
    p.ans_b = Eigen::MatrixXd::Zero(enc, 1);
    p.img_w = nn::glorot_uniform(enc, config.feature_dim, g);
    p.img_b = Eigen::MatrixXd::Zero(enc, 1);
    p.init_h = nn::glorot_uniform(h, enc, g);
    p.init_h_b = Eigen::MatrixXd::Zero(h, 1);
    p.init_c = nn::glorot_uniform(h, enc, g);
    p.init_c_b = Eigen::MatrixXd::Zero(h, 1);
    p.decoder = nn::make_lstm(e, h, g);
    p.out_w = nn::glorot_uniform(config.vocab_size, h, g);
    p.out_b = Eigen::MatrixXd::Zero(config.vocab_size, 1);
    return p;
}

std::map<std::string, Eigen::MatrixXd*> named_vqg_params(VQGParams& p) {
    std::map<std::string, Eigen::MatrixXd*> out;
    for_each_vqg_param(p, [&out](const char* name, Eigen::MatrixXd& m) { out[name] = &m; });
    return out;
}

VQGVars bind_vqg(ad::ParamBinder& binder, const VQGParams& params) {
    std::map<std::string, ad::Var> bound;
    for_each_vqg_param(params,
                       [&](const char* name, const Eigen::MatrixXd& m) { bound[name] = binder.bind(name, m); });
    VQGVars v;
    v.embedding = bound.at("vqg.embedding");
    v.ans_w = bound.at("vqg.ans_w");
    v.ans_b = bound.at("vqg.ans_b");
    v.img_w = bound.at("vqg.img_w");
    v.img_b = bound.at("vqg.img_b");
    v.init_h = bound.at("vqg.init_h");
    v.init_h_b = bound.at("vqg.init_h_b");
    v.init_c = bound.at("vqg.init_c");
    v.init_c_b = bound.at("vqg.init_c_b");
    v.decoder = nn::LstmVars{bound.at("vqg.decoder.w_ih"), bound.at("vqg.decoder.w_hh"),
                             bound.at("vqg.decoder.b")};
    v.out_w = bound.at("vqg.out_w");
    v.out_b = bound.at("vqg.out_b");
    return v;
}

Eigen::VectorXd sample_noise(int dim, const NoiseConfig& noise, rng::Engine& g) {
    if (noise.scale < 0.0) throw ArgumentError("noise scale must be >= 0");
    Eigen::VectorXd eta = Eigen::VectorXd::Zero(dim);
    if (noise.enabled && noise.scale > 0.0) {
        for (int i = 0; i < dim; ++i) eta(i) = noise.scale * rng::normal(g);
    }
    return eta;
}

namespace {

void check_conditioning_dims(const VQGModelConfig& c, Eigen::Index answer_dim,
                             Eigen::Index attended_dim) {
    if (answer_dim != c.n_answers)
        throw ShapeError("answer encoder input: expected " + std::to_string(c.n_answers) +
                         " answers, got " + std::to_string(answer_dim));
    if (attended_dim != c.feature_dim)
        throw ShapeError("image encoder input: expected dim " + std::to_string(c.feature_dim) +
                         ", got " + std::to_string(attended_dim));
}

}  // namespace

Eigen::VectorXd encode_conditioning(const VQGParams& params, const Eigen::VectorXd& answer,
                                    const Eigen::VectorXd& attended, const NoiseConfig& noise,
                                    rng::Engine& g) {
    check_conditioning_dims(params.config, answer.size(), attended.size());
    Eigen::VectorXd e = params.ans_w * answer + params.ans_b.col(0) + params.img_w * attended +
                        params.img_b.col(0);
    return e + sample_noise(params.config.enc_dim, noise, g);
}

ad::Var encode_conditioning_graph(ad::Tape& t, const VQGVars& vars, ad::Var answer,
                                  ad::Var attended, const Eigen::VectorXd& eta) {
    ad::Var e = t.add(t.add(t.matmul(vars.ans_w, answer), vars.ans_b),
                      t.add(t.matmul(vars.img_w, attended), vars.img_b));
    if (eta.size() != e.rows())
        throw ShapeError("noise vector: expected dim " + std::to_string(e.rows()) + ", got " +
                         std::to_string(eta.size()));
    return t.add(e, t.constant(eta));
}

ad::Var vqg_teacher_forced_loss_graph(ad::Tape& t, const VQGVars& vars,
                                      const VQGModelConfig& config, ad::Var conditioning,
                                      const TokenSequence& target) {
    validate_token_sequence(target);
    if (target.length < 2)
        throw ArgumentError("teacher forcing needs a target of at least 2 tokens (sos + 1)");

    nn::LstmState state{t.add(t.matmul(vars.init_h, conditioning), vars.init_h_b),
                        t.add(t.matmul(vars.init_c, conditioning), vars.init_c_b)};
    std::vector<ad::Var> terms;
    terms.reserve(static_cast<std::size_t>(target.length - 1));
    for (int pos = 1; pos < target.length; ++pos) {
        const int prev = target.ids[static_cast<std::size_t>(pos - 1)];
        const int want = target.ids[static_cast<std::size_t>(pos)];
        if (prev < 0 || prev >= config.vocab_size || want < 0 || want >= config.vocab_size)
            throw ShapeError("token embedding table: target id outside vocabulary of size " +
                             std::to_string(config.vocab_size));
        ad::Var x = t.pick_row_t(vars.embedding, prev);
        state = nn::lstm_step(t, vars.decoder, x, state);
        ad::Var logits = t.add(t.matmul(vars.out_w, state.h), vars.out_b);
        ad::Var p = t.softmax_col(logits);
        terms.push_back(t.neg_log_clamped(t.pick(p, want), kProbFloor));
    }
    return t.scale(t.add_n(terms), 1.0 / static_cast<double>(target.length - 1));
}

double vqg_teacher_forced_loss(const VQGParams& params, const Eigen::VectorXd& conditioning,
                               const TokenSequence& target) {
    if (conditioning.size() != params.config.enc_dim)
        throw ShapeError("conditioning vector: expected dim " +
                         std::to_string(params.config.enc_dim) + ", got " +
                         std::to_string(conditioning.size()));
    ad::Tape tape;
    ad::ParamBinder binder(tape);
    VQGVars vars = bind_vqg(binder, params);
    ad::Var loss = vqg_teacher_forced_loss_graph(tape, vars, params.config,
                                                 tape.constant(conditioning), target);
    return loss.value()(0, 0);
}

TokenSequence decode_generate(const VQGParams& params, const Eigen::VectorXd& conditioning,
                              int max_len, DecodeMode mode, rng::Engine& g, double temperature) {
    if (max_len < 2) throw ArgumentError("max_len must be >= 2");
    if (temperature <= 0.0) throw ArgumentError("temperature must be > 0");
    if (conditioning.size() != params.config.enc_dim)
        throw ShapeError("conditioning vector: expected dim " +
                         std::to_string(params.config.enc_dim) + ", got " +
                         std::to_string(conditioning.size()));

    nn::PlainLstmState state{params.init_h * conditioning + params.init_h_b.col(0),
                             params.init_c * conditioning + params.init_c_b.col(0)};
    TokenSequence seq;
    seq.ids.push_back(Vocabulary::kSos);
    int prev = Vocabulary::kSos;
    while (static_cast<int>(seq.ids.size()) < max_len) {
        const Eigen::VectorXd x = params.embedding.row(prev).transpose();
        state = nn::lstm_step_plain(params.decoder, x, state);
        Eigen::VectorXd logits = params.out_w * state.h + params.out_b.col(0);
        logits(Vocabulary::kPad) = -std::numeric_limits<double>::infinity();
        logits(Vocabulary::kSos) = -std::numeric_limits<double>::infinity();

        int next;
        if (mode == DecodeMode::kGreedy) {
            next = argmax_lowest(logits);
        } else {
            const Eigen::VectorXd p = nn::softmax_plain(logits / temperature);
            const double u = rng::uniform01(g);
            double acc = 0.0;
            next = static_cast<int>(p.size()) - 1;
            for (int i = 0; i < p.size(); ++i) {
                acc += p(i);
                if (u < acc) {
                    next = i;
                    break;
                }
            }
        }
        seq.ids.push_back(next);
        prev = next;
        if (next == Vocabulary::kEos) break;
    }
    seq.length = static_cast<int>(seq.ids.size());
    return seq;
}

}  // namespace cyclevqa
