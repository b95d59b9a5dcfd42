#include "cyclevqa/corpus.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

namespace cyclevqa {

using nlohmann::json;

void FeatureStore::insert(RegionFeatures rf) {
    if (regions_ == 0 && dim_ == 0) {
        regions_ = static_cast<int>(rf.features.rows());
        dim_ = static_cast<int>(rf.features.cols());
    }
    if (rf.features.rows() != regions_ || rf.features.cols() != dim_) {
        throw ShapeError("region features for image " + std::to_string(rf.image_id) + ": expected " +
                         std::to_string(regions_) + "x" + std::to_string(dim_));
    }
    if (!rf.features.allFinite()) {
        throw IntegrityError("region features for image " + std::to_string(rf.image_id) +
                             " contain non-finite values");
    }
    const std::uint64_t id = rf.image_id;
    if (!store_.emplace(id, std::move(rf)).second) {
        throw IntegrityError("duplicate image_id " + std::to_string(id) + " in feature store");
    }
}

const RegionFeatures& FeatureStore::get(std::uint64_t image_id) const {
    auto it = store_.find(image_id);
    if (it == store_.end()) {
        throw IntegrityError("image_id " + std::to_string(image_id) + " not present in feature store");
    }
    return it->second;
}

AnswerLabelSet make_answer_labels(std::vector<std::string> raw_answers) {
    if (raw_answers.empty()) throw ArgumentError("answer label set must be non-empty");
    AnswerLabelSet out;
    out.answers.reserve(raw_answers.size());
    for (auto& a : raw_answers) out.answers.push_back(normalize_answer(a));
    std::map<std::string, int> freq;
    for (const auto& a : out.answers) ++freq[a];
    int best = 0;
    for (const auto& [answer, count] : freq) {  // map order = lexicographic, first max wins ties
        if (count > best) {
            best = count;
            out.canonical_answer = answer;
        }
    }
    return out;
}

const QAInstance& DatasetSplit::instance_by_question_id(std::int64_t qid) const {
    auto it = index_.find(qid);
    if (it == index_.end()) {
        throw IntegrityError("question_id " + std::to_string(qid) + " not present in split '" + name + "'");
    }
    return instances[it->second];
}

bool DatasetSplit::has_question(std::int64_t qid) const { return index_.count(qid) != 0; }

void DatasetSplit::rebuild_index() {
    index_.clear();
    for (std::size_t i = 0; i < instances.size(); ++i) {
        if (!index_.emplace(instances[i].question_id, i).second) {
            throw IntegrityError("duplicate question_id " + std::to_string(instances[i].question_id) +
                                 " in split '" + name + "'");
        }
    }
}

namespace {

json parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ParseError(path + ": " + e.what());
    }
    return j;
}

}  // namespace

DatasetSplit load_vqa_json(const std::string& questions_path, const std::string& annotations_path,
                           const Vocabulary& vocab) {
    const json qj = parse_file(questions_path);
    const json aj = parse_file(annotations_path);

    if (!qj.is_object() || !qj.contains("questions") || !qj["questions"].is_array())
        throw ParseError(questions_path + ": missing top-level \"questions\" array");
    if (!aj.is_object() || !aj.contains("annotations") || !aj["annotations"].is_array())
        throw ParseError(annotations_path + ": missing top-level \"annotations\" array");

    struct Annotation {
        std::uint64_t image_id;
        std::vector<std::string> answers;
    };
    std::unordered_map<std::int64_t, Annotation> annotations;
    {
        std::size_t idx = 0;
        for (const auto& rec : aj["annotations"]) {
            try {
                Annotation ann;
                const std::int64_t qid = rec.at("question_id").get<std::int64_t>();
                ann.image_id = rec.at("image_id").get<std::uint64_t>();
                for (const auto& a : rec.at("answers")) {
                    ann.answers.push_back(a.at("answer").get<std::string>());
                }
                if (ann.answers.empty())
                    throw ParseError(annotations_path + ": record " + std::to_string(idx) +
                                     " has an empty answers array");
                annotations[qid] = std::move(ann);
            } catch (const json::exception& e) {
                throw ParseError(annotations_path + ": record " + std::to_string(idx) + ": " + e.what());
            }
            ++idx;
        }
    }

    DatasetSplit split;
    std::size_t idx = 0;
    for (const auto& rec : qj["questions"]) {
        QAInstance inst;
        try {
            inst.question_id = rec.at("question_id").get<std::int64_t>();
            inst.image_id = rec.at("image_id").get<std::uint64_t>();
            inst.raw_question = rec.at("question").get<std::string>();
        } catch (const json::exception& e) {
            throw ParseError(questions_path + ": record " + std::to_string(idx) + ": " + e.what());
        }
        auto it = annotations.find(inst.question_id);
        if (it == annotations.end()) {
            throw IntegrityError("question_id " + std::to_string(inst.question_id) +
                                 " present in questions but absent from annotations");
        }
        if (it->second.image_id != inst.image_id) {
            throw IntegrityError("question_id " + std::to_string(inst.question_id) +
                                 ": image_id disagrees between questions and annotations");
        }
        inst.question = encode_question(vocab, inst.raw_question);
        inst.labels = make_answer_labels(it->second.answers);
        split.instances.push_back(std::move(inst));
        ++idx;
    }
    split.rebuild_index();
    return split;
}

std::vector<RephrasingGroup> load_rephrasing_groups(const std::string& path, const DatasetSplit& split) {
    const json gj = parse_file(path);
    if (!gj.is_object() || !gj.contains("groups") || !gj["groups"].is_array())
        throw ParseError(path + ": missing top-level \"groups\" array");

    std::vector<RephrasingGroup> groups;
    std::set<std::int64_t> seen_members;
    std::size_t idx = 0;
    for (const auto& rec : gj["groups"]) {
        RephrasingGroup g;
        try {
            g.group_id = rec.at("group_id").get<std::int64_t>();
            g.original = rec.at("original").get<std::int64_t>();
            g.image_id = rec.at("image_id").get<std::uint64_t>();
            for (const auto& r : rec.at("rephrasings")) g.rephrasings.push_back(r.get<std::int64_t>());
        } catch (const json::exception& e) {
            throw ParseError(path + ": record " + std::to_string(idx) + ": " + e.what());
        }
        if (g.rephrasings.empty()) {
            throw IntegrityError("group " + std::to_string(g.group_id) + ": needs at least one rephrasing");
        }
        std::vector<std::int64_t> missing;
        std::vector<std::int64_t> members{g.original};
        members.insert(members.end(), g.rephrasings.begin(), g.rephrasings.end());
        for (std::int64_t qid : members) {
            if (!split.has_question(qid)) missing.push_back(qid);
        }
        if (!missing.empty()) {
            std::string ids;
            for (std::int64_t m : missing) ids += (ids.empty() ? "" : ", ") + std::to_string(m);
            throw IntegrityError("group " + std::to_string(g.group_id) +
                                 ": member question_ids missing from split: " + ids);
        }
        for (std::int64_t r : g.rephrasings) {
            if (r == g.original) {
                throw IntegrityError("group " + std::to_string(g.group_id) +
                                     ": original question repeated inside rephrasings");
            }
        }
        std::set<std::int64_t> uniq(members.begin(), members.end());
        if (uniq.size() != members.size()) {
            throw IntegrityError("group " + std::to_string(g.group_id) + ": duplicate member question_ids");
        }
        const QAInstance& orig = split.instance_by_question_id(g.original);
        for (std::int64_t qid : members) {
            const QAInstance& inst = split.instance_by_question_id(qid);
            if (inst.image_id != g.image_id) {
                throw IntegrityError("group " + std::to_string(g.group_id) + ": member " +
                                     std::to_string(qid) + " does not share the group image_id");
            }
            if (inst.labels.canonical_answer != orig.labels.canonical_answer ||
                inst.labels.answers.size() != orig.labels.answers.size()) {
                throw IntegrityError("group " + std::to_string(g.group_id) + ": member " +
                                     std::to_string(qid) + " disagrees on the answer label set");
            }
            if (!seen_members.insert(qid).second) {
                throw IntegrityError("question_id " + std::to_string(qid) +
                                     " appears in more than one rephrasing group");
            }
        }
        groups.push_back(std::move(g));
        ++idx;
    }
    return groups;
}

std::pair<Vocabulary, std::vector<std::string>> build_vocabulary(
    const std::vector<std::string>& questions, const std::vector<std::string>& answers,
    int max_answers) {
    if (max_answers < 1) throw ArgumentError("max_answers must be >= 1");
    if (questions.empty() && answers.empty()) throw ArgumentError("vocabulary corpus is empty");

    std::set<std::string> token_set;
    for (const auto& q : questions) {
        for (auto& t : tokenize_question(q)) token_set.insert(std::move(t));
    }
    Vocabulary vocab(std::vector<std::string>(token_set.begin(), token_set.end()));

    std::map<std::string, int> freq;
    for (const auto& a : answers) ++freq[normalize_answer(a)];
    std::vector<std::pair<std::string, int>> ranked(freq.begin(), freq.end());
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    std::vector<std::string> answer_vocab;
    for (const auto& [answer, count] : ranked) {
        if (static_cast<int>(answer_vocab.size()) >= max_answers) break;
        answer_vocab.push_back(answer);
    }
    return {std::move(vocab), std::move(answer_vocab)};
}

void validate_split_against_store(const DatasetSplit& split, const FeatureStore& store) {
    std::vector<std::uint64_t> missing;
    std::unordered_set<std::uint64_t> reported;
    for (const auto& inst : split.instances) {
        if (!store.contains(inst.image_id) && reported.insert(inst.image_id).second) {
            missing.push_back(inst.image_id);
        }
    }
    if (!missing.empty()) {
        std::string ids;
        for (auto m : missing) ids += (ids.empty() ? "" : ", ") + std::to_string(m);
        throw IntegrityError("split '" + split.name + "': image_ids without region features: " + ids);
    }
}

void encode_split(DatasetSplit& split, const Vocabulary& vocab) {
    for (auto& inst : split.instances) inst.question = encode_question(vocab, inst.raw_question);
}

// --- region features binary ----------------------------------------------------

namespace {

template <typename T>
void write_le(std::ostream& out, T v) {
    unsigned char buf[sizeof(T)];
    for (std::size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
T read_le(std::istream& in, const std::string& path) {
    unsigned char buf[sizeof(T)];
    if (!in.read(reinterpret_cast<char*>(buf), sizeof(T)))
        throw ParseError(path + ": truncated region features file");
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(buf[i]) << (8 * i);
    return v;
}

void write_f32_le(std::ostream& out, float f) {
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    write_le<std::uint32_t>(out, bits);
}

float read_f32_le(std::istream& in, const std::string& path) {
    const std::uint32_t bits = read_le<std::uint32_t>(in, path);
    float f;
    std::memcpy(&f, &bits, 4);
    return f;
}

}  // namespace

FeatureStore read_region_features(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, "RFE1", 4) != 0)
        throw ParseError(path + ": bad magic, expected RFE1");
    const std::uint32_t count = read_le<std::uint32_t>(in, path);
    const std::uint32_t regions = read_le<std::uint32_t>(in, path);
    const std::uint32_t dim = read_le<std::uint32_t>(in, path);
    if (regions < 1 || dim < 1) throw ParseError(path + ": R and D must be >= 1");
    FeatureStore store(static_cast<int>(regions), static_cast<int>(dim));
    for (std::uint32_t i = 0; i < count; ++i) {
        RegionFeatures rf;
        rf.image_id = read_le<std::uint64_t>(in, path);
        rf.features.resize(regions, dim);
        for (std::uint32_t r = 0; r < regions; ++r)
            for (std::uint32_t d = 0; d < dim; ++d)
                rf.features(r, d) = static_cast<double>(read_f32_le(in, path));
        store.insert(std::move(rf));
    }
    return store;
}

void write_region_features(const std::string& path, const FeatureStore& store) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out.write("RFE1", 4);
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(store.size()));
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(store.regions()));
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(store.dim()));
    for (const auto& [image_id, rf] : store.all()) {
        write_le<std::uint64_t>(out, image_id);
        for (int r = 0; r < store.regions(); ++r)
            for (int d = 0; d < store.dim(); ++d) write_f32_le(out, static_cast<float>(rf.features(r, d)));
    }
    if (!out) throw IoError("write failed for " + path);
}

// --- json writers ----------------------------------------------------------------

void write_questions_json(const std::string& path, const std::vector<QAInstance>& instances) {
    json arr = json::array();
    for (const auto& inst : instances) {
        arr.push_back({{"question_id", inst.question_id},
                       {"image_id", inst.image_id},
                       {"question", inst.raw_question}});
    }
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out << json{{"questions", std::move(arr)}}.dump(2) << "\n";
}

void write_annotations_json(const std::string& path, const std::vector<QAInstance>& instances) {
    json arr = json::array();
    for (const auto& inst : instances) {
        json answers = json::array();
        for (const auto& a : inst.labels.answers) answers.push_back({{"answer", a}});
        arr.push_back({{"question_id", inst.question_id},
                       {"image_id", inst.image_id},
                       {"multiple_choice_answer", inst.labels.canonical_answer},
                       {"answers", std::move(answers)}});
    }
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out << json{{"annotations", std::move(arr)}}.dump(2) << "\n";
}

void write_groups_json(const std::string& path, const std::vector<RephrasingGroup>& groups) {
    json arr = json::array();
    for (const auto& g : groups) {
        arr.push_back({{"group_id", g.group_id},
                       {"original", g.original},
                       {"rephrasings", g.rephrasings},
                       {"image_id", g.image_id}});
    }
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out << json{{"groups", std::move(arr)}}.dump(2) << "\n";
}

}  // namespace cyclevqa
