#include "cyclevqa/consensus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace cyclevqa {

double vqa_accuracy(const std::string& predicted, const AnswerLabelSet& labels) {
    if (labels.answers.empty()) throw ArgumentError("answer label set is empty");
    const std::string norm = normalize_answer(predicted);
    std::size_t count = 0;
    for (const auto& a : labels.answers)
        if (a == norm) ++count;
    if (labels.answers.size() == 1) return count == 1 ? 1.0 : 0.0;
    return std::min(static_cast<double>(count) / 3.0, 1.0);
}

namespace {

// Exact binomial; n stays small (group sizes), so unsigned 64-bit is plenty.
unsigned long long binomial(int n, int k) {
    if (k < 0 || k > n) return 0;
    if (k > n - k) k = n - k;
    unsigned long long c = 1;
    for (int i = 1; i <= k; ++i) {
        c = c * static_cast<unsigned long long>(n - k + i) / static_cast<unsigned long long>(i);
    }
    return c;
}

}  // namespace

double consensus_score(const std::vector<bool>& group_correctness, int k) {
    const int n = static_cast<int>(group_correctness.size());
    if (k < 1 || k > n)
        throw ArgumentError("consensus_score: k = " + std::to_string(k) +
                            " outside [1, " + std::to_string(n) + "]");
    int m = 0;
    for (bool c : group_correctness)
        if (c) ++m;
    if (m < k) return 0.0;
    return static_cast<double>(binomial(m, k)) / static_cast<double>(binomial(n, k));
}

ConsensusReport evaluate_consensus(const std::vector<PredictionRecord>& predictions,
                                   const DatasetSplit& split) {
    std::map<std::int64_t, const PredictionRecord*> by_id;
    for (const auto& p : predictions) {
        if (!by_id.emplace(p.question_id, &p).second)
            throw IntegrityError("duplicate prediction for question_id " +
                                 std::to_string(p.question_id));
    }

    std::vector<std::int64_t> missing;
    for (const auto& g : split.groups) {
        if (!by_id.count(g.original)) missing.push_back(g.original);
        for (auto r : g.rephrasings)
            if (!by_id.count(r)) missing.push_back(r);
    }
    if (!missing.empty()) {
        std::sort(missing.begin(), missing.end());
        missing.erase(std::unique(missing.begin(), missing.end()), missing.end());
        std::string ids;
        for (auto m : missing) ids += (ids.empty() ? "" : ", ") + std::to_string(m);
        throw IntegrityError("missing predictions for question_ids: " + ids);
    }

    ConsensusReport report;
    report.n_groups = static_cast<int>(split.groups.size());
    std::map<int, double> cs_sum;
    double ori_sum = 0.0;
    double rep_sum = 0.0;
    std::size_t ori_count = 0;
    std::size_t rep_count = 0;

    const auto theta = [&](std::int64_t qid) {
        const QAInstance& inst = split.instance_by_question_id(qid);
        return vqa_accuracy(by_id.at(qid)->answer, inst.labels);
    };

    for (const auto& g : split.groups) {
        std::vector<bool> correctness;
        correctness.reserve(g.size());
        {
            const double th = theta(g.original);
            ori_sum += th;
            ++ori_count;
            correctness.push_back(th > 0.0);
        }
        for (auto r : g.rephrasings) {
            const double th = theta(r);
            rep_sum += th;
            ++rep_count;
            correctness.push_back(th > 0.0);
        }
        const int n = static_cast<int>(correctness.size());
        for (int k = 1; k <= n; ++k) {
            cs_sum[k] += consensus_score(correctness, k);
            report.groups_per_k[k] += 1;
        }
    }

    for (const auto& [k, sum] : cs_sum) report.cs[k] = sum / report.groups_per_k.at(k);
    if (ori_count) report.ori_accuracy = 100.0 * ori_sum / static_cast<double>(ori_count);
    if (rep_count) report.rep_accuracy = 100.0 * rep_sum / static_cast<double>(rep_count);
    return report;
}

// --- n-gram metrics ---------------------------------------------------------------

namespace {

std::map<std::vector<int>, int> ngram_counts(const std::vector<int>& tokens, int n) {
    std::map<std::vector<int>, int> counts;
    if (static_cast<int>(tokens.size()) < n) return counts;
    for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= tokens.size(); ++i) {
        counts[std::vector<int>(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                                tokens.begin() + static_cast<std::ptrdiff_t>(i) + n)] += 1;
    }
    return counts;
}

}  // namespace

double bleu(const std::vector<int>& hypothesis, const std::vector<std::vector<int>>& references,
            int max_n) {
    if (max_n < 1 || max_n > 4) throw ArgumentError("bleu: max_n must lie in [1, 4]");
    if (references.empty()) throw ArgumentError("bleu: no references");
    if (hypothesis.empty()) return 0.0;

    const std::size_t c = hypothesis.size();
    // closest reference length; ties go to the shorter reference
    std::size_t r = references[0].size();
    for (const auto& ref : references) {
        const auto d_new = ref.size() > c ? ref.size() - c : c - ref.size();
        const auto d_old = r > c ? r - c : c - r;
        if (d_new < d_old || (d_new == d_old && ref.size() < r)) r = ref.size();
    }

    double log_sum = 0.0;
    for (int n = 1; n <= max_n; ++n) {
        const auto hyp_counts = ngram_counts(hypothesis, n);
        std::map<std::vector<int>, int> max_ref;
        for (const auto& ref : references) {
            for (const auto& [gram, cnt] : ngram_counts(ref, n)) {
                auto& slot = max_ref[gram];
                slot = std::max(slot, cnt);
            }
        }
        long long clipped = 0;
        long long total = 0;
        for (const auto& [gram, cnt] : hyp_counts) {
            total += cnt;
            const auto it = max_ref.find(gram);
            if (it != max_ref.end()) clipped += std::min(cnt, it->second);
        }
        if (total == 0 || clipped == 0) return 0.0;
        log_sum += std::log(static_cast<double>(clipped) / static_cast<double>(total));
    }

    const double bp = c < r ? std::exp(1.0 - static_cast<double>(r) / static_cast<double>(c)) : 1.0;
    return bp * std::exp(log_sum / max_n);
}

double bleu(const TokenSequence& hypothesis, const std::vector<TokenSequence>& references,
            int max_n) {
    std::vector<std::vector<int>> refs;
    refs.reserve(references.size());
    for (const auto& r : references) refs.push_back(content_tokens(r));
    return bleu(content_tokens(hypothesis), refs, max_n);
}

double rouge_l(const std::vector<int>& hypothesis, const std::vector<int>& reference) {
    if (hypothesis.empty() || reference.empty()) return 0.0;
    const std::size_t hl = hypothesis.size();
    const std::size_t rl = reference.size();
    std::vector<std::vector<int>> dp(hl + 1, std::vector<int>(rl + 1, 0));
    for (std::size_t i = 1; i <= hl; ++i) {
        for (std::size_t j = 1; j <= rl; ++j) {
            dp[i][j] = hypothesis[i - 1] == reference[j - 1]
                           ? dp[i - 1][j - 1] + 1
                           : std::max(dp[i - 1][j], dp[i][j - 1]);
        }
    }
    const int lcs = dp[hl][rl];
    if (lcs == 0) return 0.0;
    const double p = static_cast<double>(lcs) / static_cast<double>(hl);
    const double r = static_cast<double>(lcs) / static_cast<double>(rl);
    constexpr double beta2 = 1.44;  // beta = 1.2
    return (1.0 + beta2) * p * r / (r + beta2 * p);
}

double rouge_l(const TokenSequence& hypothesis, const TokenSequence& reference) {
    return rouge_l(content_tokens(hypothesis), content_tokens(reference));
}

// --- files ----------------------------------------------------------------------------

std::vector<PredictionRecord> read_predictions_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open predictions: " + path);
    std::vector<PredictionRecord> out;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string stripped = line;
        if (stripped.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(stripped);
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(path + " line " + std::to_string(lineno) + ": " + e.what());
        }
        if (!j.contains("question_id") || !j.contains("answer"))
            throw ParseError(path + " line " + std::to_string(lineno) +
                             ": need question_id and answer");
        PredictionRecord r;
        r.question_id = j.at("question_id").get<std::int64_t>();
        r.answer = j.at("answer").get<std::string>();
        r.confidence = j.value("confidence", 0.0);
        if (r.confidence < 0.0 || r.confidence > 1.0)
            throw ParseError(path + " line " + std::to_string(lineno) +
                             ": confidence outside [0, 1]");
        out.push_back(std::move(r));
    }
    return out;
}

void write_predictions_jsonl(const std::string& path,
                             const std::vector<PredictionRecord>& predictions) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open predictions for writing: " + path);
    for (const auto& p : predictions) {
        nlohmann::json j;
        j["question_id"] = p.question_id;
        j["answer"] = p.answer;
        j["confidence"] = p.confidence;
        out << j.dump() << '\n';
    }
    if (!out) throw IoError("failed while writing predictions: " + path);
}

void write_consensus_json(const std::string& path, const ConsensusReport& report) {
    nlohmann::json j;
    j["cs"] = nlohmann::json::object();
    j["groups_per_k"] = nlohmann::json::object();
    for (const auto& [k, v] : report.cs) j["cs"][std::to_string(k)] = v;
    for (const auto& [k, v] : report.groups_per_k) j["groups_per_k"][std::to_string(k)] = v;
    j["ori"] = report.ori_accuracy;
    j["rep"] = report.rep_accuracy;
    j["n_groups"] = report.n_groups;
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open report for writing: " + path);
    out << j.dump(2) << '\n';
    if (!out) throw IoError("failed while writing report: " + path);
}

void write_cs_csv(const std::string& path, const ConsensusReport& report) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open CSV for writing: " + path);
    out << "k,cs,n_groups\n";
    for (const auto& [k, v] : report.cs) out << k << ',' << v << ',' << report.groups_per_k.at(k)
                                             << '\n';
    if (!out) throw IoError("failed while writing CSV: " + path);
}

std::string format_consensus_table(const ConsensusReport& report) {
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(2);
    os << "groups: " << report.n_groups << "\n";
    os << "ORI accuracy: " << report.ori_accuracy << "\n";
    os << "REP accuracy: " << report.rep_accuracy << "\n";
    os << "k    CS(k)    groups\n";
    for (const auto& [k, v] : report.cs) {
        os << k << "    " << v << "    " << report.groups_per_k.at(k) << "\n";
    }
    return os.str();
}

}  // namespace cyclevqa
