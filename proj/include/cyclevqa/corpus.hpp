#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cyclevqa/errors.hpp"
#include "cyclevqa/vocab.hpp"

namespace cyclevqa {

struct RegionFeatures {
    std::uint64_t image_id = 0;
    Eigen::MatrixXd features;  // R x D
};

// Immutable after load; shareable across threads.
class FeatureStore {
public:
    FeatureStore() = default;
    FeatureStore(int regions, int dim) : regions_(regions), dim_(dim) {}

    void insert(RegionFeatures rf);
    const RegionFeatures& get(std::uint64_t image_id) const;  // IntegrityError when missing
    bool contains(std::uint64_t image_id) const { return store_.count(image_id) != 0; }
    int regions() const { return regions_; }
    int dim() const { return dim_; }
    std::size_t size() const { return store_.size(); }
    const std::map<std::uint64_t, RegionFeatures>& all() const { return store_; }

private:
    int regions_ = 0;
    int dim_ = 0;
    std::map<std::uint64_t, RegionFeatures> store_;
};

struct AnswerLabelSet {
    std::vector<std::string> answers;  // normalized; 10 entries for VQA data, 1 for synthetic
    std::string canonical_answer;      // most frequent entry, lexicographic tie-break
};

// most frequent entry wins; ties broken by lexicographically smallest
AnswerLabelSet make_answer_labels(std::vector<std::string> raw_answers);

struct QAInstance {
    std::int64_t question_id = 0;
    std::uint64_t image_id = 0;
    std::string raw_question;
    TokenSequence question;
    AnswerLabelSet labels;
};

struct RephrasingGroup {
    std::int64_t group_id = 0;
    std::int64_t original = 0;
    std::vector<std::int64_t> rephrasings;
    std::uint64_t image_id = 0;

    std::size_t size() const { return 1 + rephrasings.size(); }
};

struct DatasetSplit {
    std::string name;  // train | val | test
    std::vector<QAInstance> instances;
    std::vector<RephrasingGroup> groups;

    const QAInstance& instance_by_question_id(std::int64_t qid) const;
    bool has_question(std::int64_t qid) const;
    void rebuild_index();

private:
    std::map<std::int64_t, std::size_t> index_;
};

// --- loaders -----------------------------------------------------------------

DatasetSplit load_vqa_json(const std::string& questions_path, const std::string& annotations_path,
                           const Vocabulary& vocab);

std::vector<RephrasingGroup> load_rephrasing_groups(const std::string& path, const DatasetSplit& split);

// question vocabulary: every token seen, sorted, plus specials;
// answer vocabulary: max_answers most frequent answers, frequency then lexicographic
std::pair<Vocabulary, std::vector<std::string>> build_vocabulary(
    const std::vector<std::string>& questions, const std::vector<std::string>& answers,
    int max_answers);

// every instance's image must resolve in the store with matching dims
void validate_split_against_store(const DatasetSplit& split, const FeatureStore& store);

// fill in token ids for every instance from raw question text
void encode_split(DatasetSplit& split, const Vocabulary& vocab);

// --- file formats ------------------------------------------------------------

// Region features binary: magic "RFE1", u32 count, u32 R, u32 D (little-endian),
// then per image a u64 image_id followed by R*D float32 row-major.
FeatureStore read_region_features(const std::string& path);
void write_region_features(const std::string& path, const FeatureStore& store);

void write_questions_json(const std::string& path, const std::vector<QAInstance>& instances);
void write_annotations_json(const std::string& path, const std::vector<QAInstance>& instances);
void write_groups_json(const std::string& path, const std::vector<RephrasingGroup>& groups);

}  // namespace cyclevqa
