#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "cyclevqa/pipeline.hpp"

namespace py = pybind11;

namespace {

py::dict report_to_dict(const cyclevqa::ConsensusReport& r) {
    py::dict cs;
    for (const auto& [k, v] : r.cs) cs[py::int_(k)] = v;
    py::dict groups_per_k;
    for (const auto& [k, v] : r.groups_per_k) groups_per_k[py::int_(k)] = v;
    py::dict out;
    out["cs"] = cs;
    out["groups_per_k"] = groups_per_k;
    out["n_groups"] = r.n_groups;
    out["ori"] = r.ori_accuracy;
    out["rep"] = r.rep_accuracy;
    return out;
}

py::dict fp_report_to_dict(const cyclevqa::FPReport& r) {
    py::dict out;
    out["precision"] = r.prf.precision;
    out["recall"] = r.prf.recall;
    out["f1"] = r.prf.f1;
    out["mode"] = r.mode;
    out["threshold"] = r.threshold;
    return out;
}

}  // namespace

PYBIND11_MODULE(cyclevqa, m) {
    m.doc() = "cycle-consistent VQA training and evaluation";

    py::register_exception<cyclevqa::ArgumentError>(m, "ArgumentError", PyExc_ValueError);
    py::register_exception<cyclevqa::IntegrityError>(m, "IntegrityError", PyExc_RuntimeError);

    m.def(
        "bleu",
        [](const std::vector<int>& hyp, const std::vector<std::vector<int>>& refs, int max_n) {
            return cyclevqa::bleu(hyp, refs, max_n);
        },
        py::arg("hypothesis"), py::arg("references"), py::arg("max_n"),
        "sentence BLEU over token-id lists (clipped precision, brevity penalty)");

    m.def(
        "rouge_l",
        [](const std::vector<int>& hyp, const std::vector<int>& ref) {
            return cyclevqa::rouge_l(hyp, ref);
        },
        py::arg("hypothesis"), py::arg("reference"), "LCS F-measure with beta^2 = 1.44");

    m.def(
        "consensus_score",
        [](const std::vector<bool>& correctness, int k) {
            return cyclevqa::consensus_score(correctness, k);
        },
        py::arg("group_correctness"), py::arg("k"),
        "fraction of size-k subsets answered entirely correctly");

    m.def(
        "vqa_accuracy",
        [](const std::string& predicted, const std::vector<std::string>& answers) {
            return cyclevqa::vqa_accuracy(predicted, cyclevqa::make_answer_labels(answers));
        },
        py::arg("predicted"), py::arg("answers"),
        "soft accuracy against an answer multiset (exact match for singletons)");

    m.def(
        "precision_recall_f1",
        [](const std::vector<bool>& predicted, const std::vector<bool>& truth) {
            const auto prf = cyclevqa::precision_recall_f1(predicted, truth);
            return py::make_tuple(prf.precision, prf.recall, prf.f1);
        },
        py::arg("predicted_flags"), py::arg("true_flags"));

    m.def(
        "run_synth",
        [](std::uint64_t seed, int images, int questions_per_image, int rephrasings,
           const std::string& out) {
            cyclevqa::SynthOptions o;
            o.seed = seed;
            o.images = images;
            o.questions_per_image = questions_per_image;
            o.rephrasings = rephrasings;
            o.out_dir = out;
            const auto r = cyclevqa::run_synth(o);
            py::dict d;
            d["n_instances"] = r.n_instances;
            d["n_groups"] = r.n_groups;
            d["n_images"] = r.n_images;
            return d;
        },
        py::arg("seed"), py::arg("images"), py::arg("questions_per_image") = 4,
        py::arg("rephrasings") = 3, py::arg("out") = "");

    m.def(
        "run_train",
        [](const std::string& data, const std::string& out, long iterations,
           const std::string& config, bool q_consistency, bool a_consistency, bool gating,
           bool attention_consistency, int batch_size, long checkpoint_every) {
            cyclevqa::TrainRunOptions o;
            o.data_dir = data;
            o.out_dir = out;
            o.iterations = iterations;
            o.config_path = config;
            o.enable_q_consistency = q_consistency;
            o.enable_a_consistency = a_consistency;
            o.enable_gating = gating;
            o.enable_attention_consistency = attention_consistency;
            o.batch_size = batch_size;
            o.checkpoint_every = checkpoint_every;
            const auto r = cyclevqa::run_train(o);
            py::dict d;
            d["final_checkpoint"] = r.final_checkpoint;
            d["iterations"] = r.iterations;
            d["loss_F"] = r.last_record.loss_F;
            d["loss_G"] = r.last_record.loss_G;
            d["loss_cycle"] = r.last_record.loss_cycle;
            return d;
        },
        py::arg("data"), py::arg("out"), py::arg("iterations") = 1000, py::arg("config") = "",
        py::arg("q_consistency") = false, py::arg("a_consistency") = false,
        py::arg("gating") = false, py::arg("attention_consistency") = false,
        py::arg("batch_size") = 16, py::arg("checkpoint_every") = 500);

    m.def(
        "run_eval",
        [](const std::string& data, const std::string& out, const std::string& checkpoint,
           const std::string& predictions) {
            cyclevqa::EvalRunOptions o;
            o.data_dir = data;
            o.out_dir = out;
            o.checkpoint = checkpoint;
            o.predictions = predictions;
            return report_to_dict(cyclevqa::run_eval(o));
        },
        py::arg("data"), py::arg("out"), py::arg("checkpoint") = "", py::arg("predictions") = "");

    m.def(
        "run_generate",
        [](const std::string& checkpoint, const std::string& data, const std::string& out,
           bool sample, bool condition_on_gt, std::uint64_t sample_seed) {
            cyclevqa::GenerateRunOptions o;
            o.checkpoint = checkpoint;
            o.data_dir = data;
            o.out_dir = out;
            o.sample = sample;
            o.condition_on_gt = condition_on_gt;
            o.sample_seed = sample_seed;
            const auto r = cyclevqa::run_generate(o);
            py::dict d;
            d["bleu1"] = r.bleu1;
            d["bleu2"] = r.bleu2;
            d["bleu3"] = r.bleu3;
            d["bleu4"] = r.bleu4;
            d["rougeL"] = r.rougeL;
            d["n_instances"] = r.n_instances;
            d["n_kept_by_gate"] = r.n_kept_by_gate;
            return d;
        },
        py::arg("checkpoint"), py::arg("data"), py::arg("out"), py::arg("sample") = false,
        py::arg("condition_on_gt") = false, py::arg("sample_seed") = 0);

    m.def(
        "run_fp",
        [](const std::string& checkpoint, const std::string& data, const std::string& out,
           const std::string& mode, double threshold) {
            cyclevqa::FpRunOptions o;
            o.checkpoint = checkpoint;
            o.data_dir = data;
            o.out_dir = out;
            o.mode = mode;
            o.threshold = threshold;
            return fp_report_to_dict(cyclevqa::run_fp(o));
        },
        py::arg("checkpoint"), py::arg("data"), py::arg("out"), py::arg("mode") = "fp",
        py::arg("threshold") = -1.0);
}
