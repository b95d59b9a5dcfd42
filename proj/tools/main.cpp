#include <cstdio>
#include <exception>
#include <iostream>

#include <CLI11.hpp>

#include "cyclevqa/pipeline.hpp"

namespace {

// 0 success, 2 bad arguments or config, 3 training divergence, 4 broken data.
constexpr int kExitOk = 0;
constexpr int kExitIo = 1;
constexpr int kExitArgument = 2;
constexpr int kExitDivergence = 3;
constexpr int kExitIntegrity = 4;

int run(int argc, char** argv) {
    CLI::App app{"cycle-consistent VQA trainer and evaluation harness"};
    app.require_subcommand(1);

    cyclevqa::SynthOptions synth;
    CLI::App* cmd_synth = app.add_subcommand("synth", "generate a synthetic grid-world dataset");
    cmd_synth->add_option("--seed", synth.seed, "rng seed");
    cmd_synth->add_option("--images", synth.images, "number of images")->required();
    cmd_synth->add_option("--questions-per-image", synth.questions_per_image,
                          "questions per image");
    cmd_synth->add_option("--rephrasings", synth.rephrasings, "rephrasings per question");
    cmd_synth->add_option("--out", synth.out_dir, "output directory")->required();

    cyclevqa::TrainRunOptions train;
    CLI::App* cmd_train = app.add_subcommand("train", "train the answerer/generator pair");
    cmd_train->add_option("--config", train.config_path, "config file (key = value)");
    cmd_train->add_option("--data", train.data_dir, "dataset directory")->required();
    cmd_train->add_option("--out", train.out_dir, "output directory")->required();
    cmd_train->add_option("--iterations", train.iterations, "total training iterations");
    cmd_train->add_flag("--enable-q-consistency", train.enable_q_consistency,
                        "train the question generator against the originals");
    cmd_train->add_flag("--enable-a-consistency", train.enable_a_consistency,
                        "add the answer-cycle loss (late-activated)");
    cmd_train->add_flag("--enable-gating", train.enable_gating,
                        "admit only gate-passing generated questions into the cycle loss");
    cmd_train->add_flag("--enable-attention-consistency", train.enable_attention_consistency,
                        "penalize attention drift between original and generated questions");

    cyclevqa::EvalRunOptions eval;
    CLI::App* cmd_eval = app.add_subcommand("eval", "consensus evaluation over rephrasing groups");
    cmd_eval->add_option("--checkpoint", eval.checkpoint, "checkpoint to run predictions with");
    cmd_eval->add_option("--predictions", eval.predictions, "precomputed predictions (JSON lines)");
    cmd_eval->add_option("--data", eval.data_dir, "dataset directory")->required();
    cmd_eval->add_option("--out", eval.out_dir, "output directory")->required();

    cyclevqa::GenerateRunOptions gen;
    std::string gen_mode = "greedy";
    CLI::App* cmd_generate = app.add_subcommand("generate", "export generated questions + metrics");
    cmd_generate->add_option("--checkpoint", gen.checkpoint, "checkpoint")->required();
    cmd_generate->add_option("--data", gen.data_dir, "dataset directory")->required();
    cmd_generate->add_option("--out", gen.out_dir, "output directory")->required();
    cmd_generate->add_option("--mode", gen_mode, "greedy|sample")
        ->check(CLI::IsMember({"greedy", "sample"}));
    cmd_generate->add_flag("--condition-on-gt", gen.condition_on_gt,
                           "condition on the true answer instead of the model's prediction");
    cmd_generate->add_option("--sample-seed", gen.sample_seed, "seed for sample mode");

    cyclevqa::FpRunOptions fp;
    CLI::App* cmd_fp = app.add_subcommand("fp", "failure prediction / confidence thresholding");
    cmd_fp->add_option("--checkpoint", fp.checkpoint, "checkpoint")->required();
    cmd_fp->add_option("--data", fp.data_dir, "dataset directory")->required();
    cmd_fp->add_option("--out", fp.out_dir, "output directory")->required();
    cmd_fp->add_option("--mode", fp.mode, "fp|threshold")
        ->check(CLI::IsMember({"fp", "threshold"}));
    cmd_fp->add_option("--threshold", fp.threshold,
                       "fixed threshold for threshold mode (default: sweep for best F1)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);  // prints help or the parse error
        return code == 0 ? kExitOk : kExitArgument;
    }

    if (cmd_synth->parsed()) {
        const auto res = cyclevqa::run_synth(synth);
        std::printf("wrote %d instances over %d images (%d groups) to %s\n", res.n_instances,
                    res.n_images, res.n_groups, synth.out_dir.c_str());
    } else if (cmd_train->parsed()) {
        const auto res = cyclevqa::run_train(train);
        std::printf("trained %ld iterations; final loss_F %.4f; checkpoint %s\n", res.iterations,
                    res.last_record.loss_F, res.final_checkpoint.c_str());
    } else if (cmd_eval->parsed()) {
        const auto report = cyclevqa::run_eval(eval);
        std::fputs(cyclevqa::format_consensus_table(report).c_str(), stdout);
    } else if (cmd_generate->parsed()) {
        gen.sample = gen_mode == "sample";
        const auto res = cyclevqa::run_generate(gen);
        std::printf("generated %d questions (%d kept by gate); BLEU-1 %.4f ROUGE-L %.4f\n",
                    res.n_instances, res.n_kept_by_gate, res.bleu1, res.rougeL);
    } else if (cmd_fp->parsed()) {
        const auto report = cyclevqa::run_fp(fp);
        std::printf("%s: precision %.4f recall %.4f f1 %.4f (threshold %.4f)\n",
                    report.mode.c_str(), report.prf.precision, report.prf.recall, report.prf.f1,
                    report.threshold);
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const cyclevqa::ArgumentError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitArgument;
    } catch (const cyclevqa::TrainingError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitDivergence;
    } catch (const cyclevqa::IntegrityError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitIntegrity;
    } catch (const cyclevqa::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitIntegrity;
    } catch (const cyclevqa::ShapeError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitIntegrity;
    } catch (const cyclevqa::IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitIo;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitIo;
    }
}
