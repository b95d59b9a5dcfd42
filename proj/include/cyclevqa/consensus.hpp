#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "cyclevqa/corpus.hpp"
#include "cyclevqa/vocab.hpp"

namespace cyclevqa {

struct PredictionRecord {
    std::int64_t question_id = 0;
    std::string answer;
    double confidence = 0.0;  // in [0, 1]
};

// Soft accuracy of one prediction against the instance's answer multiset:
// min(count/3, 1) for multi-annotator sets, exact match for singleton sets.
// Both sides are normalized before comparison.
double vqa_accuracy(const std::string& predicted, const AnswerLabelSet& labels);

// Fraction of size-k subsets of the group whose members are all answered
// correctly: C(m, k) / C(n, k) with m = number of correct members.
double consensus_score(const std::vector<bool>& group_correctness, int k);

struct ConsensusReport {
    std::map<int, double> cs;       // k -> mean CS(k) over groups with n >= k
    std::map<int, int> groups_per_k;
    int n_groups = 0;
    double ori_accuracy = 0.0;  // mean soft accuracy over group originals, x100
    double rep_accuracy = 0.0;  // mean soft accuracy over rephrasings, x100
};

// Scores every rephrasing group in the split. Every member must have exactly
// one prediction; missing or duplicate ids raise IntegrityError.
ConsensusReport evaluate_consensus(const std::vector<PredictionRecord>& predictions,
                                   const DatasetSplit& split);

// Sentence-level n-gram precision with clipping, geometric mean over orders
// 1..max_n, brevity penalty exp(1 - r/c) when the hypothesis is shorter than
// the closest reference. Operates on content-token ids.
double bleu(const std::vector<int>& hypothesis, const std::vector<std::vector<int>>& references,
            int max_n);
double bleu(const TokenSequence& hypothesis, const std::vector<TokenSequence>& references,
            int max_n);

// Longest-common-subsequence F-measure with beta^2 = 1.44.
double rouge_l(const std::vector<int>& hypothesis, const std::vector<int>& reference);
double rouge_l(const TokenSequence& hypothesis, const TokenSequence& reference);

// --- file formats ---------------------------------------------------------------

// JSON lines, one {"question_id", "answer", "confidence"} per row.
std::vector<PredictionRecord> read_predictions_jsonl(const std::string& path);
void write_predictions_jsonl(const std::string& path,
                             const std::vector<PredictionRecord>& predictions);

void write_consensus_json(const std::string& path, const ConsensusReport& report);
void write_cs_csv(const std::string& path, const ConsensusReport& report);

// Table-shaped summary for terminals.
std::string format_consensus_table(const ConsensusReport& report);

}  // namespace cyclevqa
