#pragma once

#include <map>
#include <string>
#include <vector>

#include "cyclevqa/cycle.hpp"

namespace cyclevqa {

// Everything needed to resume training or run inference: both parameter sets,
// optimizer buffers, engine state, iteration, the config, and the two
// vocabularies the model indices refer to. Round-trips bit-exactly.
struct Checkpoint {
    long iteration = 0;
    CycleConfig config;
    std::string rng_state;
    VQAParams vqa;
    VQGParams vqg;
    std::map<std::string, Eigen::MatrixXd> momentum;
    std::vector<std::string> vocab_tokens;  // content tokens; specials implied
    std::vector<std::string> answers;
};

void save_checkpoint(const std::string& path, const Checkpoint& c);
Checkpoint load_checkpoint(const std::string& path);

Checkpoint make_checkpoint(const TrainState& state, const CycleConfig& config,
                           const Vocabulary& vocab, const std::vector<std::string>& answers);
TrainState state_from_checkpoint(const Checkpoint& c);

}  // namespace cyclevqa
