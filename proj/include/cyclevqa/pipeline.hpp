#pragma once

#include <cstdint>
#include <string>

#include "cyclevqa/checkpoint.hpp"
#include "cyclevqa/consensus.hpp"
#include "cyclevqa/cycle.hpp"
#include "cyclevqa/failure.hpp"

namespace cyclevqa {

// Implementations behind the CLI subcommands, shared with the python module.
// Each writes its artifact files under out_dir and returns the figures a
// caller usually wants to look at.

struct SynthOptions {
    std::uint64_t seed = 0;
    int images = 16;
    int questions_per_image = 4;
    int rephrasings = 3;
    std::string out_dir;
};

struct SynthResult {
    int n_instances = 0;
    int n_groups = 0;
    int n_images = 0;
};

// questions.json, annotations.json, groups.json, features.bin
SynthResult run_synth(const SynthOptions& options);

// Fixed artifact filenames inside a dataset directory.
struct DataPaths {
    std::string questions, annotations, groups, features;
};
DataPaths data_paths(const std::string& dir);

struct LoadedData {
    DatasetSplit split;
    FeatureStore store;
};

// Loads a dataset directory; groups are optional unless require_groups.
LoadedData load_data_dir(const std::string& dir, const Vocabulary& vocab, bool require_groups);

struct TrainRunOptions {
    std::string config_path;  // empty = built-in defaults
    std::string data_dir;
    std::string out_dir;
    long iterations = 1000;
    long checkpoint_every = 500;
    int batch_size = 16;
    // ablation switches; when true they override the config file
    bool enable_q_consistency = false;
    bool enable_a_consistency = false;
    bool enable_gating = false;
    bool enable_attention_consistency = false;
    // reference-backbone widths (checkpoints remember them)
    int embed_dim = 32;
    int vqa_hidden_dim = 64;
    int vqg_enc_dim = 48;
    int vqg_hidden_dim = 64;
};

struct TrainRunResult {
    std::string final_checkpoint;
    long iterations = 0;
    CycleStepRecord last_record;
};

// checkpoints/, steps.csv, config.snapshot
TrainRunResult run_train(const TrainRunOptions& options);

struct EvalRunOptions {
    std::string checkpoint;    // exactly one of checkpoint / predictions
    std::string predictions;
    std::string data_dir;
    std::string out_dir;
};

// consensus.json, cs_by_k.csv
ConsensusReport run_eval(const EvalRunOptions& options);

struct GenerateRunOptions {
    std::string checkpoint;
    std::string data_dir;
    std::string out_dir;
    bool sample = false;           // default greedy
    bool condition_on_gt = false;  // delta on the true answer instead of the model's A'
    std::uint64_t sample_seed = 0;
};

struct GenerateRunResult {
    double bleu1 = 0.0, bleu2 = 0.0, bleu3 = 0.0, bleu4 = 0.0, rougeL = 0.0;
    int n_instances = 0;
    int n_kept_by_gate = 0;
};

// generated.jsonl, vqg_metrics.json
GenerateRunResult run_generate(const GenerateRunOptions& options);

struct FpRunOptions {
    std::string checkpoint;
    std::string data_dir;
    std::string out_dir;
    std::string mode = "fp";  // "fp" | "threshold"
    double threshold = -1.0;  // threshold mode: <0 sweeps for the F1-best value
    long fp_iterations = 400;
    std::uint64_t fp_seed = 0;
    int fp_enc_dim = 48;
};

// fp_report.json
FPReport run_fp(const FpRunOptions& options);

}  // namespace cyclevqa
