#pragma once

#include <Eigen/Dense>
#include <map>
#include <string>
#include <vector>

#include "cyclevqa/consensus.hpp"
#include "cyclevqa/corpus.hpp"
#include "cyclevqa/rng.hpp"
#include "cyclevqa/vqa_model.hpp"

namespace cyclevqa {

struct FPModelConfig {
    int enc_dim = 300;     // width of the image / answer encoders
    int n_answers = 0;
    int feature_dim = 16;  // D, matches the answerer's attended vector
    int question_dim = 0;  // H_q of the frozen base model
};

// Binary correctness predictor over the frozen answerer's outputs: two linear
// encoders, concatenation with the question encoding, one logit.
struct FPParams {
    FPModelConfig config;
    Eigen::MatrixXd img_w;  // enc x D
    Eigen::MatrixXd img_b;  // enc x 1
    Eigen::MatrixXd ans_w;  // enc x n_answers
    Eigen::MatrixXd ans_b;  // enc x 1
    Eigen::MatrixXd comb_w;  // 1 x (2*enc + H_q)
    Eigen::MatrixXd comb_b;  // 1 x 1
};

FPParams make_fp_params(const FPModelConfig& config, rng::Engine& g);

template <typename Params, typename Fn>
void for_each_fp_param(Params& p, Fn&& fn) {
    fn("fp.img_w", p.img_w);
    fn("fp.img_b", p.img_b);
    fn("fp.ans_w", p.ans_w);
    fn("fp.ans_b", p.ans_b);
    fn("fp.comb_w", p.comb_w);
    fn("fp.comb_b", p.comb_b);
}

struct FPExample {
    const QAInstance* instance = nullptr;
    VQAOutput vqa_output;  // from the frozen base model
    bool label = false;    // soft accuracy of the predicted answer > 0
};

// Builds examples by running the frozen base model over the split.
std::vector<FPExample> build_fp_examples(const VQAParams& base, const DatasetSplit& split,
                                         const FeatureStore& store,
                                         const std::vector<std::string>& answers);

double fp_forward(const FPParams& params, const FPExample& example);

ad::Var fp_forward_graph(ad::Tape& tape, const std::map<std::string, ad::Var>& vars,
                         const FPModelConfig& config, const FPExample& example);

// -(y log p + (1-y) log(1-p)), probabilities floored at 1e-10.
double fp_bce_loss(double p, bool label);
ad::Var fp_bce_loss_graph(ad::Tape& tape, ad::Var p, bool label);

struct FPTrainOptions {
    long n_iterations = 400;
    int batch_size = 16;
    double learning_rate = 0.05;
    double clip_norm = 0.25;
    std::uint64_t seed = 0;
};

// SGD + momentum on the head only; the base model's parameters are never
// touched (the examples are precomputed from it).
FPParams train_fp(const std::vector<FPExample>& examples, const FPModelConfig& config,
                  const FPTrainOptions& options);

std::vector<bool> threshold_baseline(const std::vector<PredictionRecord>& predictions,
                                     double threshold);

struct PRF {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

PRF precision_recall_f1(const std::vector<bool>& predicted_flags,
                        const std::vector<bool>& true_flags);

struct FPReport {
    PRF prf;
    std::string mode;  // "fp" | "threshold"
    double threshold = 0.5;
};

// Sweeps all distinct confidence values plus 0 and reports the F1-best one.
FPReport best_threshold_report(const std::vector<PredictionRecord>& predictions,
                               const std::vector<bool>& true_flags);

FPReport evaluate_fp(const FPParams& params, const std::vector<FPExample>& examples,
                     double threshold = 0.5);

void write_fp_report(const std::string& path, const FPReport& report);

}  // namespace cyclevqa
