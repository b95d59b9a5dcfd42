#include "cyclevqa/vqa_model.hpp"

#include <string>
#include <vector>

namespace cyclevqa {

VQAParams make_vqa_params(const VQAModelConfig& config, rng::Engine& g) {
    if (config.vocab_size < static_cast<int>(Vocabulary::kNumSpecials))
        throw ArgumentError("vqa config: vocab_size smaller than the special-token set");
    if (config.n_answers < 1) throw ArgumentError("vqa config: n_answers must be >= 1");
    if (config.embed_dim < 1 || config.hidden_dim < 1 || config.regions < 1 ||
        config.feature_dim < 1)
        throw ArgumentError("vqa config: dimensions must be >= 1");

    const int e = config.embed_dim;
    const int h = config.hidden_dim;
    const int d = config.feature_dim;

    VQAParams p;
    p.config = config;
    p.embedding = nn::glorot_uniform(config.vocab_size, e, g);
    p.embedding.row(Vocabulary::kPad).setZero();
    p.encoder = nn::make_lstm(e, h, g);
    p.att_q = nn::glorot_uniform(h, h, g);
    p.att_v = nn::glorot_uniform(h, d, g);
    p.att_b = Eigen::MatrixXd::Zero(h, 1);
    p.att_w = nn::glorot_uniform(1, h, g);
    p.fuse_q = nn::glorot_uniform(h, h, g);
    p.fuse_v = nn::glorot_uniform(h, d, g);
    p.out_w = nn::glorot_uniform(config.n_answers, h, g);
    p.out_b = Eigen::MatrixXd::Zero(config.n_answers, 1);
    return p;
}

std::map<std::string, Eigen::MatrixXd*> named_vqa_params(VQAParams& p) {
    std::map<std::string, Eigen::MatrixXd*> out;
    for_each_vqa_param(p, [&out](const char* name, Eigen::MatrixXd& m) { out[name] = &m; });
    return out;
}

VQAVars bind_vqa(ad::ParamBinder& binder, const VQAParams& params) {
    std::map<std::string, ad::Var> bound;
    for_each_vqa_param(params,
                       [&](const char* name, const Eigen::MatrixXd& m) { bound[name] = binder.bind(name, m); });
    VQAVars v;
    v.embedding = bound.at("vqa.embedding");
    v.encoder = nn::LstmVars{bound.at("vqa.encoder.w_ih"), bound.at("vqa.encoder.w_hh"),
                             bound.at("vqa.encoder.b")};
    v.att_q = bound.at("vqa.att_q");
    v.att_v = bound.at("vqa.att_v");
    v.att_b = bound.at("vqa.att_b");
    v.att_w = bound.at("vqa.att_w");
    v.fuse_q = bound.at("vqa.fuse_q");
    v.fuse_v = bound.at("vqa.fuse_v");
    v.out_w = bound.at("vqa.out_w");
    v.out_b = bound.at("vqa.out_b");
    return v;
}

VQAGraph forward_vqa_graph(ad::Tape& t, const VQAVars& vars, const VQAModelConfig& config,
                           const TokenSequence& question, const Eigen::MatrixXd& features) {
    validate_token_sequence(question);
    if (features.rows() != config.regions || features.cols() != config.feature_dim)
        throw ShapeError("region features: expected " + std::to_string(config.regions) + "x" +
                         std::to_string(config.feature_dim) + ", got " +
                         std::to_string(features.rows()) + "x" + std::to_string(features.cols()));

    const int h = config.hidden_dim;
    ad::Var zero_h = t.constant(Eigen::MatrixXd::Zero(h, 1));
    nn::LstmState state{zero_h, zero_h};
    for (int i = 0; i < question.length; ++i) {
        const int id = question.ids[static_cast<std::size_t>(i)];
        if (id < 0 || id >= config.vocab_size)
            throw ShapeError("token embedding table: id " + std::to_string(id) +
                             " outside vocabulary of size " + std::to_string(config.vocab_size));
        ad::Var x = t.pick_row_t(vars.embedding, id);
        state = nn::lstm_step(t, vars.encoder, x, state);
    }
    ad::Var encoding = state.h;  // H_q x 1

    ad::Var qproj = t.add(t.matmul(vars.att_q, encoding), vars.att_b);  // H x 1
    std::vector<ad::Var> scores;
    scores.reserve(static_cast<std::size_t>(config.regions));
    for (int r = 0; r < config.regions; ++r) {
        ad::Var v = t.constant(features.row(r).transpose());  // D x 1
        ad::Var pre = t.tanh(t.add(qproj, t.matmul(vars.att_v, v)));
        scores.push_back(t.matmul(vars.att_w, pre));  // 1 x 1
    }
    ad::Var score_vec = scores[0];
    for (std::size_t i = 1; i < scores.size(); ++i) score_vec = t.vcat(score_vec, scores[i]);
    ad::Var attention = t.softmax_col(score_vec);  // R x 1

    ad::Var features_t = t.constant(features.transpose());       // D x R
    ad::Var attended = t.matmul(features_t, attention);          // D x 1
    ad::Var zq = t.tanh(t.matmul(vars.fuse_q, encoding));        // H x 1
    ad::Var zv = t.tanh(t.matmul(vars.fuse_v, attended));        // H x 1
    ad::Var fused = t.cmul(zq, zv);
    ad::Var logits = t.add(t.matmul(vars.out_w, fused), vars.out_b);
    ad::Var probs = t.softmax_col(logits);

    return VQAGraph{probs, attention, encoding, attended};
}

VQAOutput forward_vqa(const VQAParams& params, const TokenSequence& question,
                      const RegionFeatures& image) {
    ad::Tape tape;
    ad::ParamBinder binder(tape);
    VQAVars vars = bind_vqa(binder, params);
    VQAGraph g = forward_vqa_graph(tape, vars, params.config, question, image.features);
    VQAOutput out;
    out.answer_distribution = g.probs.value().col(0);
    out.attention = g.attention.value().col(0);
    out.question_encoding = g.encoding.value().col(0);
    out.attended = g.attended.value().col(0);
    return out;
}

double vqa_loss(const VQAOutput& output, int target) {
    if (target < 0 || target >= output.answer_distribution.size())
        throw ArgumentError("answer target " + std::to_string(target) +
                            " outside answer vocabulary of size " +
                            std::to_string(output.answer_distribution.size()));
    return -std::log(std::max(output.answer_distribution(target), kProbFloor));
}

ad::Var vqa_loss_graph(ad::Tape& tape, ad::Var probs, int target) {
    if (target < 0 || target >= probs.rows())
        throw ArgumentError("answer target " + std::to_string(target) +
                            " outside answer vocabulary of size " + std::to_string(probs.rows()));
    return tape.neg_log_clamped(tape.pick(probs, target), kProbFloor);
}

int argmax_lowest(const Eigen::VectorXd& v) {
    int best = 0;
    for (int i = 1; i < v.size(); ++i)
        if (v(i) > v(best)) best = i;
    return best;
}

int predict_answer(const VQAOutput& output) { return argmax_lowest(output.answer_distribution); }

}  // namespace cyclevqa
