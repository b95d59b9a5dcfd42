#pragma once

#include <Eigen/Dense>
#include <map>
#include <string>

#include "cyclevqa/autodiff.hpp"
#include "cyclevqa/corpus.hpp"
#include "cyclevqa/nn.hpp"
#include "cyclevqa/rng.hpp"
#include "cyclevqa/vocab.hpp"

namespace cyclevqa {

struct VQAModelConfig {
    int vocab_size = 0;
    int embed_dim = 32;    // E
    int hidden_dim = 64;   // H_q, also the attention / fusion width
    int regions = 9;       // R
    int feature_dim = 16;  // D
    int n_answers = 0;
};

// Answerer parameters. Attention scores one region at a time from the question
// summary, the classifier fuses the attended feature vector with that summary
// by elementwise product.
struct VQAParams {
    VQAModelConfig config;

    Eigen::MatrixXd embedding;  // vocab x E
    nn::LstmParams encoder;     // input E, hidden H_q

    Eigen::MatrixXd att_q;  // H x H_q
    Eigen::MatrixXd att_v;  // H x D
    Eigen::MatrixXd att_b;  // H x 1
    Eigen::MatrixXd att_w;  // 1 x H

    Eigen::MatrixXd fuse_q;  // H x H_q
    Eigen::MatrixXd fuse_v;  // H x D
    Eigen::MatrixXd out_w;   // n_answers x H
    Eigen::MatrixXd out_b;   // n_answers x 1
};

VQAParams make_vqa_params(const VQAModelConfig& config, rng::Engine& g);

// Single naming scheme shared by the binder, the optimizer, and checkpoints.
template <typename Params, typename Fn>
void for_each_vqa_param(Params& p, Fn&& fn) {
    fn("vqa.embedding", p.embedding);
    fn("vqa.encoder.w_ih", p.encoder.w_ih);
    fn("vqa.encoder.w_hh", p.encoder.w_hh);
    fn("vqa.encoder.b", p.encoder.b);
    fn("vqa.att_q", p.att_q);
    fn("vqa.att_v", p.att_v);
    fn("vqa.att_b", p.att_b);
    fn("vqa.att_w", p.att_w);
    fn("vqa.fuse_q", p.fuse_q);
    fn("vqa.fuse_v", p.fuse_v);
    fn("vqa.out_w", p.out_w);
    fn("vqa.out_b", p.out_b);
}

std::map<std::string, Eigen::MatrixXd*> named_vqa_params(VQAParams& p);

struct VQAVars {
    ad::Var embedding;
    nn::LstmVars encoder;
    ad::Var att_q, att_v, att_b, att_w;
    ad::Var fuse_q, fuse_v, out_w, out_b;
};

VQAVars bind_vqa(ad::ParamBinder& binder, const VQAParams& params);

// Everything downstream consumers need from one answer pass.
struct VQAOutput {
    Eigen::VectorXd answer_distribution;  // n_answers, simplex
    Eigen::VectorXd attention;            // R, simplex
    Eigen::VectorXd question_encoding;    // H_q
    Eigen::VectorXd attended;             // D, attention-weighted region sum
};

// Graph-side handles for the same four artifacts, used by the trainer.
struct VQAGraph {
    ad::Var probs;      // n_answers x 1
    ad::Var attention;  // R x 1
    ad::Var encoding;   // H_q x 1
    ad::Var attended;   // D x 1
};

VQAGraph forward_vqa_graph(ad::Tape& tape, const VQAVars& vars, const VQAModelConfig& config,
                           const TokenSequence& question, const Eigen::MatrixXd& features);

VQAOutput forward_vqa(const VQAParams& params, const TokenSequence& question,
                      const RegionFeatures& image);

// -log p(target), probability floored at 1e-10.
double vqa_loss(const VQAOutput& output, int target);

ad::Var vqa_loss_graph(ad::Tape& tape, ad::Var probs, int target);

// Argmax with lowest-index tie-break.
int predict_answer(const VQAOutput& output);
int argmax_lowest(const Eigen::VectorXd& v);

inline constexpr double kProbFloor = 1e-10;

}  // namespace cyclevqa
