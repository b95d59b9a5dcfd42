#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>

#include "cyclevqa/consensus.hpp"
#include "test_util.hpp"

using namespace cyclevqa;
using testutil::TempDir;
using testutil::make_sequence;

namespace {

// Independent oracle: walk every k-subset and count the all-correct ones.
double brute_force_cs(const std::vector<bool>& correctness, int k) {
    const int n = int(correctness.size());
    long total = 0, good = 0;
    std::vector<int> mask(std::size_t(n), 0);
    std::fill(mask.end() - k, mask.end(), 1);
    do {
        bool all = true;
        for (int i = 0; i < n; ++i) {
            if (mask[std::size_t(i)] && !correctness[std::size_t(i)]) all = false;
        }
        total += 1;
        if (all) good += 1;
    } while (std::next_permutation(mask.begin(), mask.end()));
    return double(good) / double(total);
}

DatasetSplit one_group_split(int n_members) {
    DatasetSplit split;
    RephrasingGroup g;
    g.group_id = 1;
    g.original = 100;
    g.image_id = 1;
    for (int i = 1; i < n_members; ++i) g.rephrasings.push_back(100 + i);
    for (int i = 0; i < n_members; ++i) {
        QAInstance inst;
        inst.question_id = 100 + i;
        inst.image_id = 1;
        inst.raw_question = "is it red";
        inst.labels = make_answer_labels({"yes"});
        split.instances.push_back(inst);
    }
    split.groups.push_back(g);
    split.rebuild_index();
    return split;
}

}  // namespace

TEST_CASE("closed-form consensus equals exhaustive subset counting") {
    for (int n = 1; n <= 7; ++n) {
        for (int pattern = 0; pattern < (1 << n); ++pattern) {
            std::vector<bool> correctness;
            for (int i = 0; i < n; ++i) correctness.push_back((pattern >> i) & 1);
            for (int k = 1; k <= n; ++k) {
                CHECK(consensus_score(correctness, k) == brute_force_cs(correctness, k));
            }
        }
    }
}

TEST_CASE("consensus structural properties") {
    auto g = rng::make_engine(12);
    for (int trial = 0; trial < 300; ++trial) {
        const int n = 1 + int(rng::uniform_int(g, 10));
        std::vector<bool> correctness;
        int m = 0;
        for (int i = 0; i < n; ++i) {
            const bool c = rng::uniform01(g) < 0.6;
            correctness.push_back(c);
            m += c ? 1 : 0;
        }
        CHECK(consensus_score(correctness, 1) == double(m) / double(n));
        double prev = 2.0;
        for (int k = 1; k <= n; ++k) {
            const double cs = consensus_score(correctness, k);
            CHECK(cs <= prev + 1e-15);
            CHECK(cs >= 0.0);
            CHECK(cs <= 1.0);
            prev = cs;
        }
        if (m == n) CHECK(consensus_score(correctness, n) == 1.0);
        if (m < n) CHECK(consensus_score(correctness, n) == 0.0);
    }
}

TEST_CASE("consensus argument validation") {
    const std::vector<bool> group = {true, false, true};
    CHECK_THROWS_AS((void)consensus_score(group, 0), ArgumentError);
    CHECK_THROWS_AS((void)consensus_score(group, 4), ArgumentError);
    CHECK_THROWS_AS((void)consensus_score({}, 1), ArgumentError);
}

TEST_CASE("soft accuracy theta") {
    // multi-annotator set: min(count/3, 1)
    std::vector<std::string> ten = {"yes", "yes", "no", "maybe", "no", "no", "no", "no", "no", "no"};
    CHECK(vqa_accuracy("yes", make_answer_labels(ten)) == doctest::Approx(2.0 / 3.0));
    CHECK(vqa_accuracy("no", make_answer_labels(ten)) == 1.0);
    CHECK(vqa_accuracy("cat", make_answer_labels(ten)) == 0.0);
    CHECK(vqa_accuracy("YES ", make_answer_labels(ten)) == doctest::Approx(2.0 / 3.0));

    // singleton set: exact match
    CHECK(vqa_accuracy("blue", make_answer_labels({"Blue"})) == 1.0);
    CHECK(vqa_accuracy("red", make_answer_labels({"blue"})) == 0.0);

    AnswerLabelSet empty;
    CHECK_THROWS_AS((void)vqa_accuracy("x", empty), ArgumentError);
}

TEST_CASE("group evaluation on a worked example") {
    const DatasetSplit split = one_group_split(4);
    std::vector<PredictionRecord> preds = {
        {100, "yes", 0.9},  // original: correct
        {101, "yes", 0.8},  // one rephrasing correct
        {102, "no", 0.7},
        {103, "no", 0.6},
    };
    const ConsensusReport report = evaluate_consensus(preds, split);
    CHECK(report.n_groups == 1);
    CHECK(report.cs.at(1) == doctest::Approx(0.5));
    CHECK(report.cs.at(2) == doctest::Approx(1.0 / 6.0));
    CHECK(report.cs.at(3) == doctest::Approx(0.0));
    CHECK(report.cs.at(4) == doctest::Approx(0.0));
    CHECK(report.groups_per_k.at(4) == 1);
    CHECK(report.ori_accuracy == doctest::Approx(100.0));
    CHECK(report.rep_accuracy == doctest::Approx(100.0 / 3.0));

    SUBCASE("prediction order does not matter") {
        std::reverse(preds.begin(), preds.end());
        const ConsensusReport r2 = evaluate_consensus(preds, split);
        CHECK(r2.cs.at(2) == report.cs.at(2));
        CHECK(r2.rep_accuracy == report.rep_accuracy);
    }
    SUBCASE("missing predictions are named") {
        preds.pop_back();
        CHECK_THROWS_WITH_AS((void)evaluate_consensus(preds, split),
                             doctest::Contains("103"), IntegrityError);
    }
    SUBCASE("duplicate predictions are rejected") {
        preds.push_back({100, "no", 0.5});
        CHECK_THROWS_AS((void)evaluate_consensus(preds, split), IntegrityError);
    }
}

TEST_CASE("mixed group sizes populate k levels separately") {
    DatasetSplit split = one_group_split(4);
    // second group of size 2 on the same image
    RephrasingGroup g2;
    g2.group_id = 2;
    g2.original = 200;
    g2.rephrasings = {201};
    g2.image_id = 1;
    for (int qid : {200, 201}) {
        QAInstance inst;
        inst.question_id = qid;
        inst.image_id = 1;
        inst.raw_question = "is it blue";
        inst.labels = make_answer_labels({"no"});
        split.instances.push_back(inst);
    }
    split.groups.push_back(g2);
    split.rebuild_index();

    std::vector<PredictionRecord> preds = {
        {100, "yes", 1.0}, {101, "yes", 1.0}, {102, "yes", 1.0}, {103, "yes", 1.0},
        {200, "no", 1.0},  {201, "maybe", 1.0},
    };
    const ConsensusReport report = evaluate_consensus(preds, split);
    CHECK(report.n_groups == 2);
    CHECK(report.groups_per_k.at(1) == 2);
    CHECK(report.groups_per_k.at(2) == 2);
    CHECK(report.groups_per_k.at(3) == 1);
    CHECK(report.groups_per_k.at(4) == 1);
    CHECK(report.cs.at(1) == doctest::Approx((1.0 + 0.5) / 2.0));
    CHECK(report.cs.at(2) == doctest::Approx((1.0 + 0.0) / 2.0));
    CHECK(report.cs.at(4) == doctest::Approx(1.0));
}

TEST_CASE("sentence bleu") {
    SUBCASE("clipping caps repeated tokens") {
        // hypothesis repeats one reference word four times: p1 = 1/4, BP = 1
        CHECK(bleu({7, 7, 7, 7}, {{7, 8}}, 1) == doctest::Approx(0.25));
        // no shared bigram: any zero n-gram precision zeroes the score
        CHECK(bleu({7, 7, 7, 7}, {{7, 8}}, 2) == 0.0);
    }
    SUBCASE("identity scores 1") {
        const std::vector<int> s = {3, 4, 5, 6, 7};
        for (int n = 1; n <= 4; ++n) CHECK(bleu(s, {s}, n) == doctest::Approx(1.0));
    }
    SUBCASE("brevity penalty for short hypotheses") {
        CHECK(bleu({3, 4}, {{3, 4, 5, 6}}, 1) == doctest::Approx(std::exp(1.0 - 4.0 / 2.0)));
    }
    SUBCASE("closest reference length, shorter on ties") {
        // |3-2| == |3-4|: the shorter reference (2) wins, so no penalty applies
        const double score = bleu({3, 4, 5}, {{3, 4}, {3, 4, 5, 6}}, 1);
        CHECK(score == doctest::Approx(1.0));
    }
    SUBCASE("degenerate inputs") {
        CHECK(bleu({}, {{1, 2}}, 4) == 0.0);
        CHECK(bleu({1, 2}, {{}}, 1) == 0.0);
        CHECK(bleu({1}, {{1}}, 4) == 0.0);  // no 4-grams available
    }
    SUBCASE("token sequences strip specials before scoring") {
        const TokenSequence hyp = make_sequence({1, 7, 7, 7, 7, 2});
        const TokenSequence ref = make_sequence({1, 7, 8, 2});
        CHECK(bleu(hyp, {ref}, 1) == doctest::Approx(0.25));
    }
}

TEST_CASE("rouge-l") {
    CHECK(rouge_l({5, 6, 7, 8}, {5, 7, 8}) == doctest::Approx(0.87980769).epsilon(1e-6));
    CHECK(rouge_l({1, 2, 3}, {1, 2, 3}) == doctest::Approx(1.0));
    CHECK(rouge_l({1, 2}, {3, 4}) == 0.0);
    CHECK(rouge_l({}, {1}) == 0.0);
    CHECK(rouge_l({1}, {}) == 0.0);

    const TokenSequence hyp = make_sequence({1, 5, 6, 7, 8, 2});
    const TokenSequence ref = make_sequence({1, 5, 7, 8, 2});
    CHECK(rouge_l(hyp, ref) == doctest::Approx(0.87980769).epsilon(1e-6));
}

TEST_CASE("prediction jsonl round-trip and validation") {
    TempDir dir;
    const std::vector<PredictionRecord> preds = {
        {10, "yes", 0.875}, {11, "fire hydrant", 0.5}, {12, "2", 0.0}};
    const std::string path = dir.file("preds.jsonl");
    write_predictions_jsonl(path, preds);

    const auto back = read_predictions_jsonl(path);
    REQUIRE(back.size() == 3);
    CHECK(back[0].question_id == 10);
    CHECK(back[0].answer == "yes");
    CHECK(back[0].confidence == 0.875);
    CHECK(back[1].answer == "fire hydrant");

    SUBCASE("confidence out of range") {
        std::ofstream f(path);
        f << R"({"question_id": 1, "answer": "x", "confidence": 1.5})" << "\n";
        f.close();
        CHECK_THROWS_AS((void)read_predictions_jsonl(path), ParseError);
    }
    SUBCASE("malformed json names the line") {
        std::ofstream f(path);
        f << R"({"question_id": 1, "answer": "x", "confidence": 0.5})" << "\n";
        f << "not json\n";
        f.close();
        CHECK_THROWS_WITH_AS((void)read_predictions_jsonl(path), doctest::Contains("line 2"),
                             ParseError);
    }
    SUBCASE("missing file") {
        CHECK_THROWS_AS((void)read_predictions_jsonl(dir.file("absent.jsonl")), IoError);
    }
}

TEST_CASE("report serialization") {
    TempDir dir;
    const DatasetSplit split = one_group_split(3);
    const std::vector<PredictionRecord> preds = {
        {100, "yes", 0.9}, {101, "yes", 0.8}, {102, "no", 0.7}};
    const ConsensusReport report = evaluate_consensus(preds, split);

    write_consensus_json(dir.file("consensus.json"), report);
    const auto j = nlohmann::json::parse(testutil::slurp(dir.file("consensus.json")));
    CHECK(j.at("n_groups") == 1);
    CHECK(j.at("cs").at("1").get<double>() == doctest::Approx(2.0 / 3.0));
    CHECK(j.at("ori").get<double>() == doctest::Approx(100.0));
    CHECK(j.at("rep").get<double>() == doctest::Approx(50.0));
    CHECK(j.contains("groups_per_k"));

    write_cs_csv(dir.file("cs.csv"), report);
    const std::string csv = testutil::slurp(dir.file("cs.csv"));
    CHECK(csv.rfind("k,cs,n_groups\n", 0) == 0);
    CHECK(csv.find("\n1,") != std::string::npos);

    const std::string table = format_consensus_table(report);
    CHECK(table.find("CS(k)") != std::string::npos);
}
