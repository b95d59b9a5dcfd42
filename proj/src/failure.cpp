#include "cyclevqa/failure.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include <json.hpp>

#include "cyclevqa/cycle.hpp"
#include "cyclevqa/nn.hpp"

namespace cyclevqa {

FPParams make_fp_params(const FPModelConfig& config, rng::Engine& g) {
    if (config.enc_dim < 1 || config.n_answers < 1 || config.feature_dim < 1 ||
        config.question_dim < 1)
        throw ArgumentError("fp config: dimensions must be >= 1");
    FPParams p;
    p.config = config;
    p.img_w = nn::glorot_uniform(config.enc_dim, config.feature_dim, g);
    p.img_b = Eigen::MatrixXd::Zero(config.enc_dim, 1);
    p.ans_w = nn::glorot_uniform(config.enc_dim, config.n_answers, g);
    p.ans_b = Eigen::MatrixXd::Zero(config.enc_dim, 1);
    p.comb_w = nn::glorot_uniform(1, 2 * config.enc_dim + config.question_dim, g);
    p.comb_b = Eigen::MatrixXd::Zero(1, 1);
    return p;
}

std::vector<FPExample> build_fp_examples(const VQAParams& base, const DatasetSplit& split,
                                         const FeatureStore& store,
                                         const std::vector<std::string>& answers) {
    std::vector<FPExample> out;
    out.reserve(split.instances.size());
    for (const auto& inst : split.instances) {
        FPExample ex;
        ex.instance = &inst;
        ex.vqa_output = forward_vqa(base, inst.question, store.get(inst.image_id));
        const int pred = predict_answer(ex.vqa_output);
        const std::string& pred_str = answers.at(static_cast<std::size_t>(pred));
        ex.label = vqa_accuracy(pred_str, inst.labels) > 0.0;
        out.push_back(std::move(ex));
    }
    return out;
}

namespace {

void check_fp_dims(const FPModelConfig& c, const VQAOutput& o) {
    if (o.attended.size() != c.feature_dim)
        throw ShapeError("fp image encoder input: expected dim " + std::to_string(c.feature_dim) +
                         ", got " + std::to_string(o.attended.size()));
    if (o.answer_distribution.size() != c.n_answers)
        throw ShapeError("fp answer encoder input: expected " + std::to_string(c.n_answers) +
                         " answers, got " + std::to_string(o.answer_distribution.size()));
    if (o.question_encoding.size() != c.question_dim)
        throw ShapeError("fp question input: expected dim " + std::to_string(c.question_dim) +
                         ", got " + std::to_string(o.question_encoding.size()));
}

}  // namespace

double fp_forward(const FPParams& params, const FPExample& example) {
    const auto& c = params.config;
    const auto& o = example.vqa_output;
    check_fp_dims(c, o);
    Eigen::VectorXd concat(2 * c.enc_dim + c.question_dim);
    concat.head(c.enc_dim) = params.img_w * o.attended + params.img_b.col(0);
    concat.segment(c.enc_dim, c.enc_dim) =
        params.ans_w * o.answer_distribution + params.ans_b.col(0);
    concat.tail(c.question_dim) = o.question_encoding;
    const double logit = (params.comb_w * concat)(0, 0) + params.comb_b(0, 0);
    return 1.0 / (1.0 + std::exp(-logit));
}

ad::Var fp_forward_graph(ad::Tape& t, const std::map<std::string, ad::Var>& vars,
                         const FPModelConfig& config, const FPExample& example) {
    const auto& o = example.vqa_output;
    check_fp_dims(config, o);
    ad::Var img = t.add(t.matmul(vars.at("fp.img_w"), t.constant(o.attended)), vars.at("fp.img_b"));
    ad::Var ans = t.add(t.matmul(vars.at("fp.ans_w"), t.constant(o.answer_distribution)),
                        vars.at("fp.ans_b"));
    ad::Var concat = t.vcat(t.vcat(img, ans), t.constant(o.question_encoding));
    ad::Var logit = t.add(t.matmul(vars.at("fp.comb_w"), concat), vars.at("fp.comb_b"));
    return t.sigmoid(logit);
}

double fp_bce_loss(double p, bool label) {
    const double q = label ? p : 1.0 - p;
    return -std::log(std::max(q, kProbFloor));
}

ad::Var fp_bce_loss_graph(ad::Tape& t, ad::Var p, bool label) {
    ad::Var q = label ? p : t.sub(t.scalar(1.0), p);
    return t.neg_log_clamped(q, kProbFloor);
}

FPParams train_fp(const std::vector<FPExample>& examples, const FPModelConfig& config,
                  const FPTrainOptions& options) {
    if (examples.empty()) throw ArgumentError("fp training set is empty");
    if (options.n_iterations < 1) throw ArgumentError("n_iterations must be >= 1");
    if (options.batch_size < 1) throw ArgumentError("batch_size must be >= 1");

    rng::Engine init = rng::make_engine(rng::derive_seed(options.seed, 0xF9));
    FPParams params = make_fp_params(config, init);
    std::map<std::string, Eigen::MatrixXd> momentum;

    const std::size_t n = examples.size();
    for (long iter = 0; iter < options.n_iterations; ++iter) {
        rng::Engine g =
            rng::make_engine(rng::derive_seed(options.seed, 0xF90 + static_cast<std::uint64_t>(iter)));
        ad::Tape tape;
        ad::ParamBinder binder(tape);
        std::map<std::string, ad::Var> vars;
        for_each_fp_param(params, [&](const char* name, const Eigen::MatrixXd& m) {
            vars[name] = binder.bind(name, m);
        });

        std::vector<ad::Var> terms;
        for (int b = 0; b < options.batch_size; ++b) {
            const auto& ex = examples[rng::uniform_int(g, n)];
            terms.push_back(fp_bce_loss_graph(tape, fp_forward_graph(tape, vars, config, ex),
                                              ex.label));
        }
        ad::Var loss = tape.scale(tape.add_n(terms), 1.0 / static_cast<double>(terms.size()));
        if (!std::isfinite(loss.value()(0, 0)))
            throw TrainingError("non-finite fp loss at iteration " + std::to_string(iter), {});
        tape.backward(loss);

        ad::GradMap grads = binder.grads();
        double sq = 0.0;
        for (const auto& [name, gmat] : grads) sq += gmat.squaredNorm();
        const double norm = std::sqrt(sq);
        const double clip = norm > options.clip_norm ? options.clip_norm / norm : 1.0;

        for_each_fp_param(params, [&](const char* name, Eigen::MatrixXd& m) {
            auto it = momentum.find(name);
            if (it == momentum.end())
                it = momentum.emplace(name, Eigen::MatrixXd::Zero(m.rows(), m.cols())).first;
            it->second *= 0.9;
            const auto gi = grads.find(name);
            if (gi != grads.end()) it->second += clip * gi->second;
            m -= options.learning_rate * it->second;
        });
    }
    return params;
}

std::vector<bool> threshold_baseline(const std::vector<PredictionRecord>& predictions,
                                     double threshold) {
    std::vector<bool> out;
    out.reserve(predictions.size());
    for (const auto& p : predictions) out.push_back(p.confidence >= threshold);
    return out;
}

PRF precision_recall_f1(const std::vector<bool>& predicted_flags,
                        const std::vector<bool>& true_flags) {
    if (predicted_flags.size() != true_flags.size())
        throw ArgumentError("precision_recall_f1: flag lists differ in length");
    if (predicted_flags.empty()) throw ArgumentError("precision_recall_f1: empty input");
    long tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < predicted_flags.size(); ++i) {
        if (predicted_flags[i] && true_flags[i]) ++tp;
        else if (predicted_flags[i]) ++fp;
        else if (true_flags[i]) ++fn;
    }
    PRF prf;
    prf.precision = tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    prf.recall = tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    prf.f1 = prf.precision + prf.recall > 0.0
                 ? 2.0 * prf.precision * prf.recall / (prf.precision + prf.recall)
                 : 0.0;
    return prf;
}

FPReport best_threshold_report(const std::vector<PredictionRecord>& predictions,
                               const std::vector<bool>& true_flags) {
    if (predictions.size() != true_flags.size())
        throw ArgumentError("threshold sweep: predictions and labels differ in length");
    std::set<double> candidates{0.0};
    for (const auto& p : predictions) candidates.insert(p.confidence);

    FPReport best;
    best.mode = "threshold";
    best.prf.f1 = -1.0;
    for (double tau : candidates) {
        const PRF prf = precision_recall_f1(threshold_baseline(predictions, tau), true_flags);
        if (prf.f1 > best.prf.f1) {
            best.prf = prf;
            best.threshold = tau;
        }
    }
    return best;
}

FPReport evaluate_fp(const FPParams& params, const std::vector<FPExample>& examples,
                     double threshold) {
    std::vector<bool> predicted, truth;
    predicted.reserve(examples.size());
    truth.reserve(examples.size());
    for (const auto& ex : examples) {
        predicted.push_back(fp_forward(params, ex) >= threshold);
        truth.push_back(ex.label);
    }
    FPReport report;
    report.prf = precision_recall_f1(predicted, truth);
    report.mode = "fp";
    report.threshold = threshold;
    return report;
}

void write_fp_report(const std::string& path, const FPReport& report) {
    nlohmann::json j;
    j["precision"] = report.prf.precision;
    j["recall"] = report.prf.recall;
    j["f1"] = report.prf.f1;
    j["mode"] = report.mode;
    j["threshold"] = report.threshold;
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open fp report for writing: " + path);
    out << j.dump(2) << '\n';
    if (!out) throw IoError("failed while writing fp report: " + path);
}

}  // namespace cyclevqa
