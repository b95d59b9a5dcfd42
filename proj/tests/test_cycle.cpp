#include <doctest.h>

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "cyclevqa/cycle.hpp"
#include "cyclevqa/synthetic.hpp"
#include "test_util.hpp"

using namespace cyclevqa;
using testutil::TempDir;

namespace {

struct World {
    DatasetSplit split;
    FeatureStore store;
    Vocabulary vocab;
    std::vector<std::string> answers;
    std::map<std::string, int> answer_index;
    std::vector<const QAInstance*> all;

    explicit World(std::uint64_t seed = 7, int images = 4, int qpi = 2, int reph = 1) {
        auto [s, st] = generate_synthetic_world(seed, images, qpi, reph);
        split = std::move(s);
        store = std::move(st);
        std::vector<std::string> questions, answer_strings;
        for (const auto& inst : split.instances) {
            questions.push_back(inst.raw_question);
            for (const auto& a : inst.labels.answers) answer_strings.push_back(a);
        }
        auto [v, ans] = build_vocabulary(questions, answer_strings, 1 << 20);
        vocab = std::move(v);
        answers = std::move(ans);
        encode_split(split, vocab);
        answer_index = make_answer_index(answers);
        for (const auto& inst : split.instances) all.push_back(&inst);
    }

    TrainState state(std::uint64_t seed = 0) const {
        VQAModelConfig vc;
        vc.vocab_size = vocab.size();
        vc.embed_dim = 10;
        vc.hidden_dim = 12;
        vc.regions = kSyntheticRegions;
        vc.feature_dim = kSyntheticFeatureDim;
        vc.n_answers = int(answers.size());
        VQGModelConfig gc;
        gc.vocab_size = vocab.size();
        gc.embed_dim = 10;
        gc.enc_dim = 9;
        gc.hidden_dim = 12;
        gc.n_answers = int(answers.size());
        gc.feature_dim = kSyntheticFeatureDim;
        return make_train_state(vc, gc, seed);
    }
};

CycleConfig cycle_on_config() {
    CycleConfig c;
    c.enable_Q_consistency = true;
    c.enable_A_consistency = true;
    c.A_iter = 0;
    c.max_gen_len = 8;
    return c;
}

bool params_equal(const TrainState& a, const TrainState& b) {
    bool equal = true;
    auto va = const_cast<TrainState&>(a);
    auto vb = const_cast<TrainState&>(b);
    const auto check = [&equal](const auto& lhs, const auto& rhs) {
        for (const auto& [name, mat] : lhs) {
            if ((*mat - *rhs.at(name)).cwiseAbs().maxCoeff() != 0.0) equal = false;
        }
    };
    check(named_vqa_params(va.vqa), named_vqa_params(vb.vqa));
    check(named_vqg_params(va.vqg), named_vqg_params(vb.vqg));
    return equal;
}

}  // namespace

TEST_CASE("cosine similarity") {
    Eigen::VectorXd a(2), b(2), z(2);
    a << 1, 0;
    b << 0, 1;
    z << 0, 0;
    CHECK(cosine_similarity(a, b) == 0.0);
    CHECK(cosine_similarity(a, a) == doctest::Approx(1.0));
    CHECK(cosine_similarity(a, (-a).eval()) == doctest::Approx(-1.0));
    CHECK(cosine_similarity(a, z) == 0.0);
    Eigen::VectorXd c(3);
    c << 1, 2, 3;
    CHECK_THROWS_AS((void)cosine_similarity(a, c), ShapeError);
}

TEST_CASE("attention consistency loss is squared distance") {
    Eigen::VectorXd a(2), b(2);
    a << 1, 0;
    b << 0, 1;
    CHECK(attention_consistency_loss(a, b) == doctest::Approx(2.0));
    CHECK(attention_consistency_loss(a, a) == 0.0);
    Eigen::VectorXd c(3);
    c.setZero();
    CHECK_THROWS_AS((void)attention_consistency_loss(a, c), ShapeError);
}

TEST_CASE("gating keeps correct answers regardless of threshold") {
    VQAOutput out;
    out.answer_distribution = Eigen::VectorXd::Zero(3);
    out.answer_distribution(1) = 1.0;
    out.question_encoding = Eigen::VectorXd::Zero(4);
    out.question_encoding(0) = 1.0;  // orthogonal to the original below
    Eigen::VectorXd original(4);
    original << 0, 1, 0, 0;
    TokenSequence q = testutil::make_sequence({1, 5, 2});

    // correct answer: admitted at any threshold
    CHECK(gating_filter(original, q, out, 1, -1.0));
    CHECK(gating_filter(original, q, out, 1, 1.0));
    // wrong answer, orthogonal encodings: only sub-zero thresholds admit
    CHECK(gating_filter(original, q, out, 0, -1.0));
    CHECK_FALSE(gating_filter(original, q, out, 0, 0.0));  // strict inequality
    CHECK_FALSE(gating_filter(original, q, out, 0, 0.5));
    // wrong answer, identical encodings: cosine 1 passes everything below 1
    CHECK(gating_filter(out.question_encoding, q, out, 0, 0.9));
    CHECK_FALSE(gating_filter(out.question_encoding, q, out, 0, 1.0));
}

TEST_CASE("config validation") {
    CycleConfig c;
    CHECK_NOTHROW(validate(c));
    SUBCASE("gating requires the cycle") {
        c.enable_gating = true;
        CHECK_THROWS_AS(validate(c), ArgumentError);
        c.enable_A_consistency = true;
        CHECK_NOTHROW(validate(c));
    }
    SUBCASE("ranges") {
        c.lambda_G = -0.5;
        CHECK_THROWS_AS(validate(c), ArgumentError);
        c = CycleConfig{};
        c.T_sim = 1.5;
        CHECK_THROWS_AS(validate(c), ArgumentError);
        c = CycleConfig{};
        c.A_iter = -1;
        CHECK_THROWS_AS(validate(c), ArgumentError);
        c = CycleConfig{};
        c.clip_norm = 0.0;
        CHECK_THROWS_AS(validate(c), ArgumentError);
        c = CycleConfig{};
        c.max_gen_len = 1;
        CHECK_THROWS_AS(validate(c), ArgumentError);
    }
}

TEST_CASE("config text round-trip") {
    CycleConfig c;
    c.lambda_G = 0.75;
    c.lambda_C = 0.25;
    c.T_sim = 0.33;
    c.A_iter = 123;
    c.enable_Q_consistency = true;
    c.enable_A_consistency = true;
    c.enable_gating = true;
    c.noise.scale = 0.05;
    c.noise.enabled = false;
    c.vqg_learning_rate = 0.001;
    c.seed = 42;

    const CycleConfig back = parse_cycle_config(serialize_cycle_config(c));
    CHECK(back.lambda_G == c.lambda_G);
    CHECK(back.lambda_C == c.lambda_C);
    CHECK(back.T_sim == c.T_sim);
    CHECK(back.A_iter == c.A_iter);
    CHECK(back.enable_Q_consistency == c.enable_Q_consistency);
    CHECK(back.enable_gating == c.enable_gating);
    CHECK(back.noise.scale == c.noise.scale);
    CHECK(back.noise.enabled == c.noise.enabled);
    CHECK(back.vqg_learning_rate == c.vqg_learning_rate);
    CHECK(back.seed == c.seed);
}

TEST_CASE("config parsing errors") {
    CHECK_THROWS_AS((void)parse_cycle_config("bogus_key = 1\n"), ParseError);
    CHECK_THROWS_AS((void)parse_cycle_config("lambda_G\n"), ParseError);
    CHECK_THROWS_AS((void)parse_cycle_config("lambda_G = abc\n"), ParseError);
    CHECK_THROWS_AS((void)parse_cycle_config("noise_enabled = maybe\n"), ParseError);
    CHECK_THROWS_AS((void)parse_cycle_config("A_iter = 1.5\n"), ParseError);
    const CycleConfig c = parse_cycle_config("# comment only\n\nlambda_G = 2.0\n");
    CHECK(c.lambda_G == 2.0);
    CHECK(c.lambda_C == 0.5);  // untouched defaults survive
}

TEST_CASE("answer index and targets") {
    const auto index = make_answer_index({"yes", "no", "2"});
    CHECK(index.at("yes") == 0);
    CHECK(index.at("2") == 2);
    QAInstance inst;
    inst.labels = make_answer_labels({"no"});
    CHECK(answer_target(index, inst) == 1);
    inst.labels = make_answer_labels({"zebra"});
    CHECK(answer_target(index, inst) == -1);
}

TEST_CASE("epoch permutations are deterministic, complete, and epoch-dependent") {
    const auto p0 = epoch_permutation(5, 0, 10);
    CHECK(p0 == epoch_permutation(5, 0, 10));
    CHECK(p0.size() == 10);
    std::set<std::size_t> seen(p0.begin(), p0.end());
    CHECK(seen.size() == 10);
    CHECK(p0 != epoch_permutation(5, 1, 10));
    CHECK(p0 != epoch_permutation(6, 0, 10));
}

TEST_CASE("the batch schedule covers every instance exactly once per epoch") {
    World w(3, 5, 2, 1);  // 20 instances
    CycleConfig config;
    config.seed = 11;
    const int B = 8;
    const long bpe = 3;  // ceil(20/8)

    for (long epoch = 0; epoch < 2; ++epoch) {
        std::multiset<std::int64_t> seen;
        std::size_t total = 0;
        for (long slot = 0; slot < bpe; ++slot) {
            const auto batch = batch_for_iteration(w.split, config, epoch * bpe + slot, B);
            total += batch.size();
            for (const auto* inst : batch) seen.insert(inst->question_id);
        }
        CHECK(total == w.split.instances.size());
        CHECK(seen.size() == w.split.instances.size());
        std::set<std::int64_t> unique(seen.begin(), seen.end());
        CHECK(unique.size() == seen.size());  // no repeats inside one epoch
    }

    // the same iteration always produces the same batch
    const auto again = batch_for_iteration(w.split, config, 4, B);
    const auto again2 = batch_for_iteration(w.split, config, 4, B);
    REQUIRE(again.size() == again2.size());
    for (std::size_t i = 0; i < again.size(); ++i) CHECK(again[i] == again2[i]);
}

TEST_CASE("total loss is the documented weighted sum") {
    World w;
    auto state = w.state(1);
    CycleConfig config = cycle_on_config();
    config.lambda_G = 0.7;
    config.lambda_C = 0.3;

    for (int step = 0; step < 3; ++step) {
        const auto batch = batch_for_iteration(w.split, config, state.iteration, 8);
        const auto rec = train_step(state, batch, w.store, w.answer_index, config);
        const double expected = rec.loss_F + config.lambda_G * rec.loss_G +
                                config.lambda_C * rec.loss_cycle + config.lambda_att * rec.loss_att;
        CHECK(rec.total == doctest::Approx(expected).epsilon(1e-9));
        CHECK(rec.cycle_active);
        CHECK(rec.gate_total == int(batch.size()));
        CHECK(rec.gate_pass == rec.gate_total);  // gating disabled keeps everything
    }
}

TEST_CASE("cycle loss activates exactly at A_iter") {
    World w;
    auto state = w.state(2);
    CycleConfig config = cycle_on_config();
    config.A_iter = 3;

    for (int step = 0; step < 5; ++step) {
        const auto batch = batch_for_iteration(w.split, config, state.iteration, 8);
        const auto rec = train_step(state, batch, w.store, w.answer_index, config);
        CHECK(rec.iteration == step);
        if (step < 3) {
            CHECK_FALSE(rec.cycle_active);
            CHECK(rec.loss_cycle == 0.0);
            CHECK(rec.gate_total == 0);
        } else {
            CHECK(rec.cycle_active);
            CHECK(rec.gate_total > 0);
        }
    }
    CHECK(state.iteration == 5);
}

TEST_CASE("generated questions are recorded when the cycle is active") {
    World w;
    auto state = w.state(3);
    const CycleConfig config = cycle_on_config();
    const auto batch = batch_for_iteration(w.split, config, 0, 8);

    ad::Tape tape;
    ad::ParamBinder binder(tape);
    const auto result = cycle_forward(tape, binder, state, batch, w.store, w.answer_index, config);
    CHECK(result.generated.size() == batch.size());
    CHECK(result.kept.size() == batch.size());
    for (const auto& q : result.generated) {
        CHECK(q.length >= 1);
        CHECK(q.length <= config.max_gen_len);
        CHECK_NOTHROW(validate_token_sequence(q));
    }
    CHECK(result.record.total == doctest::Approx(result.total.value()(0, 0)));
}

TEST_CASE("one update step follows clipped SGD with momentum") {
    World w;
    auto state = w.state(4);
    CycleConfig config;  // baseline: only the answer loss
    config.seed = 9;

    // replicate the step by hand on a copy
    TrainState manual = state;
    const auto batch = batch_for_iteration(w.split, config, 0, 8);
    ad::Tape tape;
    ad::ParamBinder binder(tape);
    const auto fwd = cycle_forward(tape, binder, manual, batch, w.store, w.answer_index, config);
    tape.backward(fwd.total);
    const ad::GradMap grads = binder.grads();

    double sq = 0.0;
    for (const auto& [name, g] : grads) sq += g.squaredNorm();
    const double norm = std::sqrt(sq);
    const double scale = norm > config.clip_norm ? config.clip_norm / norm : 1.0;

    const auto rec = train_step(state, batch, w.store, w.answer_index, config);
    CHECK(rec.total == doctest::Approx(fwd.record.total));

    const auto named = named_vqa_params(manual.vqa);
    auto updated = named_vqa_params(state.vqa);
    for (const auto& [name, before] : named) {
        const auto it = grads.find(name);
        if (it == grads.end()) continue;
        const Eigen::MatrixXd expected = *before - config.vqa_learning_rate * (scale * it->second);
        CHECK((expected - *updated.at(name)).cwiseAbs().maxCoeff() < 1e-12);
    }

    // every named parameter owns a momentum buffer after the first step
    auto vqa_names = named_vqa_params(state.vqa);
    auto vqg_names = named_vqg_params(state.vqg);
    CHECK(state.momentum.size() == vqa_names.size() + vqg_names.size());
    for (const auto& [name, mat] : vqa_names) {
        REQUIRE(state.momentum.count(name) == 1);
        CHECK(state.momentum.at(name).rows() == mat->rows());
    }
    // no generator gradients in a baseline step: buffers stay zero, weights untouched
    auto vqg_before = named_vqg_params(manual.vqg);
    for (const auto& [name, mat] : vqg_names) {
        REQUIRE(state.momentum.count(name) == 1);
        CHECK(state.momentum.at(name).cwiseAbs().maxCoeff() == 0.0);
        CHECK((*mat - *vqg_before.at(name)).cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("generator parameters move at their own fixed learning rate") {
    World w;
    auto state = w.state(5);
    CycleConfig config;
    config.enable_Q_consistency = true;
    config.vqg_learning_rate = 0.002;
    config.vqa_learning_rate = 0.05;
    config.noise.enabled = false;

    TrainState manual = state;
    const auto batch = batch_for_iteration(w.split, config, 0, 8);
    ad::Tape tape;
    ad::ParamBinder binder(tape);
    const auto fwd = cycle_forward(tape, binder, manual, batch, w.store, w.answer_index, config);
    tape.backward(fwd.total);
    const ad::GradMap grads = binder.grads();
    double sq = 0.0;
    for (const auto& [name, g] : grads) sq += g.squaredNorm();
    const double scale = std::sqrt(sq) > config.clip_norm ? config.clip_norm / std::sqrt(sq) : 1.0;

    (void)train_step(state, batch, w.store, w.answer_index, config);

    const Eigen::MatrixXd expected =
        manual.vqg.out_w - config.vqg_learning_rate * (scale * grads.at("vqg.out_w"));
    CHECK((expected - state.vqg.out_w).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("momentum accumulates across steps") {
    World w;
    auto state = w.state(6);
    CycleConfig config;
    config.clip_norm = 1e9;  // keep the clip out of the picture

    const auto batch = batch_for_iteration(w.split, config, 0, 8);

    TrainState probe = state;
    ad::Tape t1;
    ad::ParamBinder b1(t1);
    auto f1 = cycle_forward(t1, b1, probe, batch, w.store, w.answer_index, config);
    t1.backward(f1.total);
    const Eigen::MatrixXd g1 = b1.grads().at("vqa.out_w");

    (void)train_step(state, batch, w.store, w.answer_index, config);
    CHECK((state.momentum.at("vqa.out_w") - g1).cwiseAbs().maxCoeff() < 1e-12);

    const auto batch2 = batch_for_iteration(w.split, config, 1, 8);
    TrainState probe2 = state;
    ad::Tape t2;
    ad::ParamBinder b2(t2);
    auto f2 = cycle_forward(t2, b2, probe2, batch2, w.store, w.answer_index, config);
    t2.backward(f2.total);
    const Eigen::MatrixXd g2 = b2.grads().at("vqa.out_w");

    (void)train_step(state, batch2, w.store, w.answer_index, config);
    CHECK((state.momentum.at("vqa.out_w") - (0.9 * g1 + g2)).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("non-finite losses raise a training error") {
    World w;
    auto state = w.state(7);
    state.vqa.out_w.setConstant(std::numeric_limits<double>::quiet_NaN());
    CycleConfig config;
    const auto batch = batch_for_iteration(w.split, config, 0, 4);
    CHECK_THROWS_AS((void)train_step(state, batch, w.store, w.answer_index, config),
                    TrainingError);
}

TEST_CASE("steps csv format") {
    std::ostringstream os;
    write_steps_csv_header(os);
    CycleStepRecord r;
    r.iteration = 3;
    r.loss_F = 1.5;
    r.loss_G = 0.25;
    r.gate_pass = 2;
    r.gate_total = 8;
    r.cycle_active = true;
    write_steps_csv_row(os, r);
    const std::string text = os.str();
    CHECK(text.rfind("iteration,loss_F,loss_G,loss_cycle,loss_att,gate_pass,gate_total,cycle_active\n",
                     0) == 0);
    CHECK(text.find("3,1.5,0.25,0,0,2,8,1\n") != std::string::npos);
}

TEST_CASE("train_loop writes artifacts and honours the checkpoint schedule") {
    World w;
    TempDir dir;
    CycleConfig config;
    config.seed = 3;
    TrainLoopOptions options;
    options.n_iterations = 5;
    options.checkpoint_every = 2;
    options.batch_size = 8;
    options.out_dir = dir.file("run");

    int callbacks = 0;
    auto state = w.state(8);
    state = train_loop(std::move(state), w.split, w.store, w.vocab, w.answers, config, options,
                       [&](const CycleStepRecord&) { callbacks += 1; });
    CHECK(state.iteration == 5);
    CHECK(callbacks == 5);

    namespace fs = std::filesystem;
    CHECK(fs::exists(dir.file("run/steps.csv")));
    CHECK(fs::exists(dir.file("run/checkpoints/ckpt_000002.bin")));
    CHECK(fs::exists(dir.file("run/checkpoints/ckpt_000004.bin")));
    CHECK(fs::exists(dir.file("run/checkpoints/ckpt_000005.bin")));  // final

    std::ifstream in(dir.file("run/steps.csv"));
    std::string line;
    int rows = 0;
    while (std::getline(in, line)) rows += 1;
    CHECK(rows == 6);  // header + 5 steps
}

TEST_CASE("identical seeds give identical training trajectories") {
    World w;
    CycleConfig config = cycle_on_config();
    config.seed = 21;

    auto s1 = w.state(9);
    auto s2 = w.state(9);
    for (int step = 0; step < 4; ++step) {
        const auto batch = batch_for_iteration(w.split, config, step, 8);
        const auto r1 = train_step(s1, batch, w.store, w.answer_index, config);
        const auto r2 = train_step(s2, batch, w.store, w.answer_index, config);
        CHECK(r1.total == r2.total);
    }
    CHECK(params_equal(s1, s2));
}
