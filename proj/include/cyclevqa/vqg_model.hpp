#pragma once

#include <Eigen/Dense>
#include <map>
#include <string>

#include "cyclevqa/autodiff.hpp"
#include "cyclevqa/nn.hpp"
#include "cyclevqa/rng.hpp"
#include "cyclevqa/vocab.hpp"

namespace cyclevqa {

struct NoiseConfig {
    double scale = 0.1;   // sigma of the additive Gaussian
    bool enabled = true;  // training only; generation/eval paths pass enabled=false
};

struct VQGModelConfig {
    int vocab_size = 0;
    int embed_dim = 32;    // E, matches the answerer's embedding width
    int enc_dim = 300;     // output width of the answer / image encoders
    int hidden_dim = 1024; // decoder LSTM
    int n_answers = 0;
    int feature_dim = 16;  // D
};

// Question generator: linear answer/image encoders fused by addition (plus
// optional Gaussian noise), projected into the decoder's initial (h, c).
struct VQGParams {
    VQGModelConfig config;

    Eigen::MatrixXd embedding;  // vocab x E
    Eigen::MatrixXd ans_w;      // enc x n_answers
    Eigen::MatrixXd ans_b;      // enc x 1
    Eigen::MatrixXd img_w;      // enc x D
    Eigen::MatrixXd img_b;      // enc x 1
    Eigen::MatrixXd init_h;     // H x enc
    Eigen::MatrixXd init_h_b;   // H x 1
    Eigen::MatrixXd init_c;     // H x enc
    Eigen::MatrixXd init_c_b;   // H x 1
    nn::LstmParams decoder;     // input E, hidden H
    Eigen::MatrixXd out_w;      // vocab x H
    Eigen::MatrixXd out_b;      // vocab x 1
};

VQGParams make_vqg_params(const VQGModelConfig& config, rng::Engine& g);

template <typename Params, typename Fn>
void for_each_vqg_param(Params& p, Fn&& fn) {
    fn("vqg.embedding", p.embedding);
    fn("vqg.ans_w", p.ans_w);
    fn("vqg.ans_b", p.ans_b);
    fn("vqg.img_w", p.img_w);
    fn("vqg.img_b", p.img_b);
    fn("vqg.init_h", p.init_h);
    fn("vqg.init_h_b", p.init_h_b);
    fn("vqg.init_c", p.init_c);
    fn("vqg.init_c_b", p.init_c_b);
    fn("vqg.decoder.w_ih", p.decoder.w_ih);
    fn("vqg.decoder.w_hh", p.decoder.w_hh);
    fn("vqg.decoder.b", p.decoder.b);
    fn("vqg.out_w", p.out_w);
    fn("vqg.out_b", p.out_b);
}

std::map<std::string, Eigen::MatrixXd*> named_vqg_params(VQGParams& p);

struct VQGVars {
    ad::Var embedding;
    ad::Var ans_w, ans_b, img_w, img_b;
    ad::Var init_h, init_h_b, init_c, init_c_b;
    nn::LstmVars decoder;
    ad::Var out_w, out_b;
};

VQGVars bind_vqg(ad::ParamBinder& binder, const VQGParams& params);

// Draws the additive-noise vector for one conditioning pass: N(0, sigma^2 I)
// when enabled, zero otherwise. Split out so graph and plain paths share draws.
Eigen::VectorXd sample_noise(int dim, const NoiseConfig& noise, rng::Engine& g);

// e = W_a * answer + b_a + W_v * attended + b_v + eta
Eigen::VectorXd encode_conditioning(const VQGParams& params, const Eigen::VectorXd& answer,
                                    const Eigen::VectorXd& attended, const NoiseConfig& noise,
                                    rng::Engine& g);

// Graph version; `answer` and `attended` are already Vars (detached or not is
// the caller's choice), `eta` enters as a constant.
ad::Var encode_conditioning_graph(ad::Tape& tape, const VQGVars& vars, ad::Var answer,
                                  ad::Var attended, const Eigen::VectorXd& eta);

// Mean over target positions 1..length-1 of -log p(token_t | tokens_<t, e).
ad::Var vqg_teacher_forced_loss_graph(ad::Tape& tape, const VQGVars& vars,
                                      const VQGModelConfig& config, ad::Var conditioning,
                                      const TokenSequence& target);

double vqg_teacher_forced_loss(const VQGParams& params, const Eigen::VectorXd& conditioning,
                               const TokenSequence& target);

enum class DecodeMode { kGreedy, kSample };

// Free-running decode from <sos>; stops at <eos> or when the sequence reaches
// max_len tokens total. pad/sos are never emitted. Greedy consumes no
// randomness; sample draws one uniform variate per emitted token.
TokenSequence decode_generate(const VQGParams& params, const Eigen::VectorXd& conditioning,
                              int max_len, DecodeMode mode, rng::Engine& g,
                              double temperature = 1.0);

}  // namespace cyclevqa
