#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "cyclevqa/corpus.hpp"
#include "cyclevqa/rng.hpp"
#include "cyclevqa/vqa_model.hpp"
#include "cyclevqa/vqg_model.hpp"

namespace cyclevqa {

// All knobs of the consistency training scheme. The loss is
//   total = L_F + lambda_G * L_G + lambda_C * L_cycle (+ lambda_att * L_att)
// where L_G ties the generated question back to the original and L_cycle ties
// the answer to the generated question back to the ground truth. L_cycle only
// becomes active once `iteration >= A_iter`, so the generator is competent
// before its outputs start steering the answerer.
struct CycleConfig {
    double lambda_G = 1.0;
    double lambda_C = 0.5;
    double T_sim = 0.9;   // cosine gate threshold in [-1, 1]
    long A_iter = 5500;   // late-activation iteration for the cycle loss
    bool enable_Q_consistency = false;
    bool enable_A_consistency = false;
    bool enable_gating = false;
    bool enable_attention_consistency = false;
    double lambda_att = 1.0;
    NoiseConfig noise;
    double clip_norm = 0.25;          // global L2 gradient clip
    double vqg_learning_rate = 0.0005;  // fixed for all generator parameters
    double vqa_learning_rate = 0.05;
    int max_gen_len = 20;
    std::uint64_t seed = 0;
};

// Throws ArgumentError on out-of-range values or gating without A-consistency.
void validate(const CycleConfig& config);

// Flat `key = value` text, keys matching the field names above (noise flattens
// to noise_scale / noise_enabled). Unknown keys are errors.
CycleConfig parse_cycle_config(const std::string& text);
CycleConfig load_cycle_config(const std::string& path);
std::string serialize_cycle_config(const CycleConfig& config);

struct TrainState {
    long iteration = 0;
    VQAParams vqa;
    VQGParams vqg;
    std::map<std::string, Eigen::MatrixXd> momentum;  // one buffer per parameter name
    rng::Engine engine;
};

TrainState make_train_state(const VQAModelConfig& vqa_config, const VQGModelConfig& vqg_config,
                            std::uint64_t seed);

struct CycleStepRecord {
    long iteration = 0;
    double loss_F = 0.0;
    double loss_G = 0.0;
    double loss_cycle = 0.0;
    double loss_att = 0.0;
    double total = 0.0;
    int gate_pass = 0;
    int gate_total = 0;
    bool cycle_active = false;
};

// Raised when a step produces a non-finite loss; carries the offending record.
class TrainingError : public Error {
public:
    TrainingError(const std::string& what, CycleStepRecord record)
        : Error(what), record(record) {}
    CycleStepRecord record;
};

// Admission rule for a generated question: keep it when the answerer gets it
// right, or when its encoding stays close to the original question's encoding.
// Purely a decision — no gradients flow through it.
bool gating_filter(const Eigen::VectorXd& original_encoding, const TokenSequence& generated,
                   const VQAOutput& generated_output, int target, double T_sim);

double cosine_similarity(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

struct CycleForwardResult {
    CycleStepRecord record;
    ad::Var total;                         // 1x1, differentiable
    std::vector<TokenSequence> generated;  // per batch element; empty when cycle inactive
    std::vector<bool> kept;                // gate decision per batch element
};

// Builds the full training graph for one batch on `tape`. Consumes randomness
// from state.engine only for conditioning noise.
CycleForwardResult cycle_forward(ad::Tape& tape, ad::ParamBinder& binder, TrainState& state,
                                 const std::vector<const QAInstance*>& batch,
                                 const FeatureStore& store,
                                 const std::map<std::string, int>& answer_index,
                                 const CycleConfig& config);

// ||a - b||^2 over two same-length attention vectors.
double attention_consistency_loss(const Eigen::VectorXd& att_q, const Eigen::VectorXd& att_qprime);

// One optimization step: forward, backward, global-norm clip, SGD+momentum
// update (generator parameters use the fixed vqg_learning_rate), then
// iteration += 1. Throws TrainingError when the loss is not finite.
CycleStepRecord train_step(TrainState& state, const std::vector<const QAInstance*>& batch,
                           const FeatureStore& store,
                           const std::map<std::string, int>& answer_index,
                           const CycleConfig& config);

// Deterministic batch schedule: epoch permutations are seeded functions of
// (config seed, epoch), so a resumed state replays the identical sequence.
std::vector<std::size_t> epoch_permutation(std::uint64_t seed, long epoch, std::size_t n);
std::vector<const QAInstance*> batch_for_iteration(const DatasetSplit& split,
                                                   const CycleConfig& config, long iteration,
                                                   int batch_size);

struct TrainLoopOptions {
    long n_iterations = 1;
    long checkpoint_every = 1000;
    int batch_size = 16;
    std::string out_dir;  // receives checkpoints/ and steps.csv
};

using StepCallback = std::function<void(const CycleStepRecord&)>;

// Runs train_step from state.iteration to n_iterations, appending step records
// to steps.csv and checkpointing on schedule plus once at the end. `answers`
// is the answer vocabulary (index = classifier class).
TrainState train_loop(TrainState state, const DatasetSplit& split, const FeatureStore& store,
                      const Vocabulary& vocab, const std::vector<std::string>& answers,
                      const CycleConfig& config, const TrainLoopOptions& options,
                      const StepCallback& on_step = {});

std::map<std::string, int> make_answer_index(const std::vector<std::string>& answers);

// Target class for an instance; -1 when its canonical answer is out of vocabulary.
int answer_target(const std::map<std::string, int>& answer_index, const QAInstance& inst);

void write_steps_csv_header(std::ostream& os);
void write_steps_csv_row(std::ostream& os, const CycleStepRecord& r);

}  // namespace cyclevqa
