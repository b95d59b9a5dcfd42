#include <doctest.h>

#include <cmath>

#include "cyclevqa/vqa_model.hpp"
#include "test_util.hpp"

using namespace cyclevqa;
using testutil::make_sequence;

namespace {

VQAModelConfig tiny_config() {
    VQAModelConfig c;
    c.vocab_size = 12;
    c.embed_dim = 6;
    c.hidden_dim = 8;
    c.regions = 3;
    c.feature_dim = 4;
    c.n_answers = 5;
    return c;
}

RegionFeatures tiny_image(std::uint64_t id, rng::Engine& g, int regions = 3, int dim = 4) {
    return RegionFeatures{id, testutil::random_matrix(regions, dim, g)};
}

}  // namespace

TEST_CASE("forward produces simplex outputs with the right shapes") {
    auto g = rng::make_engine(1);
    const auto config = tiny_config();
    const VQAParams params = make_vqa_params(config, g);
    const auto question = make_sequence({1, 4, 7, 5, 2});
    const auto image = tiny_image(1, g);

    const VQAOutput out = forward_vqa(params, question, image);
    CHECK(out.answer_distribution.size() == config.n_answers);
    CHECK(out.attention.size() == config.regions);
    CHECK(out.question_encoding.size() == config.hidden_dim);
    CHECK(out.attended.size() == config.feature_dim);
    CHECK(out.answer_distribution.minCoeff() >= 0.0);
    CHECK(out.answer_distribution.sum() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(out.attention.minCoeff() >= 0.0);
    CHECK(out.attention.sum() == doctest::Approx(1.0).epsilon(1e-12));

    const VQAOutput again = forward_vqa(params, question, image);
    CHECK((out.answer_distribution - again.answer_distribution).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("graph forward agrees with the plain forward") {
    auto g = rng::make_engine(2);
    const auto config = tiny_config();
    const VQAParams params = make_vqa_params(config, g);
    const auto question = make_sequence({1, 9, 3, 2});
    const auto image = tiny_image(1, g);

    const VQAOutput plain = forward_vqa(params, question, image);
    ad::Tape tape;
    ad::ParamBinder binder(tape);
    const VQAVars vars = bind_vqa(binder, params);
    const VQAGraph graph = forward_vqa_graph(tape, vars, config, question, image.features);
    CHECK((graph.probs.value().col(0) - plain.answer_distribution).cwiseAbs().maxCoeff() < 1e-14);
    CHECK((graph.attention.value().col(0) - plain.attention).cwiseAbs().maxCoeff() < 1e-14);
    CHECK((graph.encoding.value().col(0) - plain.question_encoding).cwiseAbs().maxCoeff() < 1e-14);
    CHECK((graph.attended.value().col(0) - plain.attended).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("zero classifier weights give the uniform distribution") {
    auto g = rng::make_engine(3);
    const auto config = tiny_config();
    VQAParams params = make_vqa_params(config, g);
    params.out_w.setZero();
    params.out_b.setZero();
    const auto out = forward_vqa(params, make_sequence({1, 4, 2}), tiny_image(1, g));
    for (int a = 0; a < config.n_answers; ++a) {
        CHECK(out.answer_distribution(a) == doctest::Approx(1.0 / config.n_answers));
    }
    CHECK(vqa_loss(out, 0) == doctest::Approx(std::log(config.n_answers)));
}

TEST_CASE("zero attention scorer attends uniformly") {
    auto g = rng::make_engine(4);
    const auto config = tiny_config();
    VQAParams params = make_vqa_params(config, g);
    params.att_w.setZero();
    const auto image = tiny_image(1, g);
    const auto out = forward_vqa(params, make_sequence({1, 4, 2}), image);
    for (int r = 0; r < config.regions; ++r) {
        CHECK(out.attention(r) == doctest::Approx(1.0 / config.regions));
    }
    const Eigen::VectorXd mean_feature = image.features.colwise().mean();
    CHECK((out.attended - mean_feature).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("permuting regions permutes attention and preserves the answer") {
    auto g = rng::make_engine(5);
    const auto config = tiny_config();
    const VQAParams params = make_vqa_params(config, g);
    const auto question = make_sequence({1, 6, 8, 2});
    const auto image = tiny_image(1, g);

    Eigen::MatrixXd permuted = image.features;
    permuted.row(0) = image.features.row(2);
    permuted.row(2) = image.features.row(0);

    const auto a = forward_vqa(params, question, image);
    const auto b = forward_vqa(params, question, RegionFeatures{2, permuted});
    CHECK(b.attention(0) == doctest::Approx(a.attention(2)).epsilon(1e-12));
    CHECK(b.attention(2) == doctest::Approx(a.attention(0)).epsilon(1e-12));
    CHECK(b.attention(1) == doctest::Approx(a.attention(1)).epsilon(1e-12));
    CHECK((a.answer_distribution - b.answer_distribution).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("shape and argument violations are reported") {
    auto g = rng::make_engine(6);
    const auto config = tiny_config();
    const VQAParams params = make_vqa_params(config, g);

    CHECK_THROWS_AS((void)forward_vqa(params, make_sequence({1, 4, 2}),
                                      RegionFeatures{1, Eigen::MatrixXd::Zero(3, 7)}),
                    ShapeError);
    CHECK_THROWS_AS((void)forward_vqa(params, make_sequence({1, 99, 2}),
                                      RegionFeatures{1, Eigen::MatrixXd::Zero(3, 4)}),
                    ShapeError);

    const auto out = forward_vqa(params, make_sequence({1, 4, 2}),
                                 RegionFeatures{1, Eigen::MatrixXd::Zero(3, 4)});
    CHECK_THROWS_AS((void)vqa_loss(out, -1), ArgumentError);
    CHECK_THROWS_AS((void)vqa_loss(out, config.n_answers), ArgumentError);
}

TEST_CASE("loss floors the probability at 1e-10") {
    VQAOutput out;
    out.answer_distribution = Eigen::VectorXd::Zero(3);
    out.answer_distribution(1) = 1.0;
    CHECK(vqa_loss(out, 0) == doctest::Approx(-std::log(kProbFloor)));
    CHECK(vqa_loss(out, 1) == doctest::Approx(0.0));
}

TEST_CASE("argmax breaks ties toward the lowest index") {
    Eigen::VectorXd v(4);
    v << 0.4, 0.4, 0.15, 0.05;
    CHECK(argmax_lowest(v) == 0);
    v << 0.1, 0.2, 0.5, 0.2;
    CHECK(argmax_lowest(v) == 2);

    VQAOutput out;
    out.answer_distribution = v;
    CHECK(predict_answer(out) == 2);
}

TEST_CASE("answer loss gradients match finite differences") {
    auto g = rng::make_engine(7);
    const auto config = tiny_config();
    VQAParams params = make_vqa_params(config, g);
    const auto question = make_sequence({1, 4, 7, 5, 10, 2});
    const auto image = tiny_image(1, g);
    const int target = 3;

    ad::Tape tape;
    ad::ParamBinder binder(tape);
    const VQAVars vars = bind_vqa(binder, params);
    const VQAGraph graph = forward_vqa_graph(tape, vars, config, question, image.features);
    ad::Var loss = vqa_loss_graph(tape, graph.probs, target);
    tape.backward(loss);
    CHECK(loss.value()(0, 0) == doctest::Approx(vqa_loss(forward_vqa(params, question, image), target)));

    const auto stats = testutil::check_gradients(
        named_vqa_params(params),
        [&]() { return vqa_loss(forward_vqa(params, question, image), target); }, binder.grads());
    INFO("checked ", stats.checked, " coords, worst rel err ", stats.worst_rel_err);
    CHECK(stats.checked > 50);
    CHECK(stats.pass_rate() >= 0.95);
}
