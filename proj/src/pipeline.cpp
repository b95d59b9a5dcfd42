#include "cyclevqa/pipeline.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>

#include <json.hpp>

#include "cyclevqa/synthetic.hpp"

namespace cyclevqa {

namespace fs = std::filesystem;

namespace {

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory: " + dir);
}

}  // namespace

DataPaths data_paths(const std::string& dir) {
    const fs::path base(dir);
    return DataPaths{(base / "questions.json").string(), (base / "annotations.json").string(),
                     (base / "groups.json").string(), (base / "features.bin").string()};
}

SynthResult run_synth(const SynthOptions& options) {
    auto [split, store] = generate_synthetic_world(options.seed, options.images,
                                                   options.questions_per_image,
                                                   options.rephrasings);
    ensure_dir(options.out_dir);
    const DataPaths paths = data_paths(options.out_dir);
    write_questions_json(paths.questions, split.instances);
    write_annotations_json(paths.annotations, split.instances);
    write_groups_json(paths.groups, split.groups);
    write_region_features(paths.features, store);

    SynthResult res;
    res.n_instances = static_cast<int>(split.instances.size());
    res.n_groups = static_cast<int>(split.groups.size());
    res.n_images = static_cast<int>(store.size());
    return res;
}

LoadedData load_data_dir(const std::string& dir, const Vocabulary& vocab, bool require_groups) {
    const DataPaths paths = data_paths(dir);
    LoadedData data;
    data.split = load_vqa_json(paths.questions, paths.annotations, vocab);
    data.store = read_region_features(paths.features);
    if (fs::exists(paths.groups)) {
        data.split.groups = load_rephrasing_groups(paths.groups, data.split);
    } else if (require_groups) {
        throw IoError("dataset has no rephrasing groups file: " + paths.groups);
    }
    validate_split_against_store(data.split, data.store);
    return data;
}

TrainRunResult run_train(const TrainRunOptions& options) {
    CycleConfig config = options.config_path.empty() ? CycleConfig{}
                                                     : load_cycle_config(options.config_path);
    if (options.enable_q_consistency) config.enable_Q_consistency = true;
    if (options.enable_a_consistency) config.enable_A_consistency = true;
    if (options.enable_gating) config.enable_gating = true;
    if (options.enable_attention_consistency) config.enable_attention_consistency = true;
    validate(config);

    LoadedData data = load_data_dir(options.data_dir, Vocabulary(), false);

    std::vector<std::string> questions, answer_strings;
    questions.reserve(data.split.instances.size());
    for (const auto& inst : data.split.instances) {
        questions.push_back(inst.raw_question);
        for (const auto& a : inst.labels.answers) answer_strings.push_back(a);
    }
    auto [vocab, answers] =
        build_vocabulary(questions, answer_strings, std::numeric_limits<int>::max());
    encode_split(data.split, vocab);

    VQAModelConfig vqa_config;
    vqa_config.vocab_size = vocab.size();
    vqa_config.embed_dim = options.embed_dim;
    vqa_config.hidden_dim = options.vqa_hidden_dim;
    vqa_config.regions = data.store.regions();
    vqa_config.feature_dim = data.store.dim();
    vqa_config.n_answers = static_cast<int>(answers.size());

    VQGModelConfig vqg_config;
    vqg_config.vocab_size = vocab.size();
    vqg_config.embed_dim = options.embed_dim;
    vqg_config.enc_dim = options.vqg_enc_dim;
    vqg_config.hidden_dim = options.vqg_hidden_dim;
    vqg_config.n_answers = static_cast<int>(answers.size());
    vqg_config.feature_dim = data.store.dim();

    ensure_dir(options.out_dir);
    {
        const fs::path snapshot = fs::path(options.out_dir) / "config.snapshot";
        std::ofstream out(snapshot, std::ios::trunc);
        if (!out) throw IoError("cannot write config snapshot: " + snapshot.string());
        out << serialize_cycle_config(config);
    }

    TrainState state = make_train_state(vqa_config, vqg_config, config.seed);

    TrainLoopOptions loop;
    loop.n_iterations = options.iterations;
    loop.checkpoint_every = options.checkpoint_every;
    loop.batch_size = options.batch_size;
    loop.out_dir = options.out_dir;

    TrainRunResult res;
    state = train_loop(std::move(state), data.split, data.store, vocab, answers, config, loop,
                       [&res](const CycleStepRecord& r) { res.last_record = r; });
    res.iterations = state.iteration;

    char name[32];
    std::snprintf(name, sizeof(name), "ckpt_%06ld.bin", state.iteration);
    res.final_checkpoint = (fs::path(options.out_dir) / "checkpoints" / name).string();
    return res;
}

namespace {

struct LoadedModel {
    Checkpoint ckpt;
    Vocabulary vocab;
    std::map<std::string, int> answer_index;
};

LoadedModel load_model(const std::string& path) {
    LoadedModel m{load_checkpoint(path), Vocabulary(), {}};
    m.vocab = Vocabulary(m.ckpt.vocab_tokens);
    m.answer_index = make_answer_index(m.ckpt.answers);
    return m;
}

std::vector<PredictionRecord> predict_split(const LoadedModel& model, const DatasetSplit& split,
                                            const FeatureStore& store) {
    std::vector<PredictionRecord> out;
    out.reserve(split.instances.size());
    for (const auto& inst : split.instances) {
        const VQAOutput fwd = forward_vqa(model.ckpt.vqa, inst.question, store.get(inst.image_id));
        const int pred = predict_answer(fwd);
        PredictionRecord r;
        r.question_id = inst.question_id;
        r.answer = model.ckpt.answers.at(static_cast<std::size_t>(pred));
        r.confidence = fwd.answer_distribution(pred);
        out.push_back(std::move(r));
    }
    return out;
}

}  // namespace

ConsensusReport run_eval(const EvalRunOptions& options) {
    const bool has_ckpt = !options.checkpoint.empty();
    const bool has_preds = !options.predictions.empty();
    if (has_ckpt == has_preds)
        throw ArgumentError("eval needs exactly one of a checkpoint or a predictions file");

    ConsensusReport report;
    if (has_ckpt) {
        LoadedModel model = load_model(options.checkpoint);
        LoadedData data = load_data_dir(options.data_dir, model.vocab, true);
        report = evaluate_consensus(predict_split(model, data.split, data.store), data.split);
    } else {
        LoadedData data = load_data_dir(options.data_dir, Vocabulary(), true);
        report = evaluate_consensus(read_predictions_jsonl(options.predictions), data.split);
    }

    ensure_dir(options.out_dir);
    write_consensus_json((fs::path(options.out_dir) / "consensus.json").string(), report);
    write_cs_csv((fs::path(options.out_dir) / "cs_by_k.csv").string(), report);
    return report;
}

GenerateRunResult run_generate(const GenerateRunOptions& options) {
    LoadedModel model = load_model(options.checkpoint);
    LoadedData data = load_data_dir(options.data_dir, model.vocab, false);

    ensure_dir(options.out_dir);
    const fs::path jsonl_path = fs::path(options.out_dir) / "generated.jsonl";
    std::ofstream jsonl(jsonl_path, std::ios::trunc);
    if (!jsonl) throw IoError("cannot open for writing: " + jsonl_path.string());

    const NoiseConfig no_noise{0.0, false};
    rng::Engine dummy = rng::make_engine(0);
    GenerateRunResult res;
    double b1 = 0, b2 = 0, b3 = 0, b4 = 0, rl = 0;

    for (const auto& inst : data.split.instances) {
        const RegionFeatures& image = data.store.get(inst.image_id);
        const VQAOutput fwd = forward_vqa(model.ckpt.vqa, inst.question, image);

        Eigen::VectorXd conditioning_answer = fwd.answer_distribution;
        std::string conditioning_label =
            model.ckpt.answers.at(static_cast<std::size_t>(predict_answer(fwd)));
        if (options.condition_on_gt) {
            const auto it = model.answer_index.find(inst.labels.canonical_answer);
            if (it == model.answer_index.end())
                throw IntegrityError("question " + std::to_string(inst.question_id) +
                                     ": canonical answer '" + inst.labels.canonical_answer +
                                     "' is outside the checkpoint's answer vocabulary");
            conditioning_answer = Eigen::VectorXd::Zero(fwd.answer_distribution.size());
            conditioning_answer(it->second) = 1.0;
            conditioning_label = inst.labels.canonical_answer;
        }

        const Eigen::VectorXd e = encode_conditioning(model.ckpt.vqg, conditioning_answer,
                                                      fwd.attended, no_noise, dummy);
        rng::Engine sample_engine = rng::make_engine(rng::derive_seed(
            options.sample_seed, static_cast<std::uint64_t>(inst.question_id)));
        const TokenSequence generated =
            decode_generate(model.ckpt.vqg, e, model.ckpt.config.max_gen_len,
                            options.sample ? DecodeMode::kSample : DecodeMode::kGreedy,
                            sample_engine);

        const VQAOutput gen_fwd = forward_vqa(model.ckpt.vqa, generated, image);
        const int target = answer_target(model.answer_index, inst);
        const bool kept = target >= 0 &&
                          gating_filter(fwd.question_encoding, generated, gen_fwd, target,
                                        model.ckpt.config.T_sim);

        nlohmann::json j;
        j["question_id"] = inst.question_id;
        j["generated"] = decode_question(model.vocab, generated);
        j["conditioning_answer"] = conditioning_label;
        j["kept_by_gate"] = kept;
        jsonl << j.dump() << '\n';

        const std::vector<TokenSequence> refs{inst.question};
        b1 += bleu(generated, refs, 1);
        b2 += bleu(generated, refs, 2);
        b3 += bleu(generated, refs, 3);
        b4 += bleu(generated, refs, 4);
        rl += rouge_l(generated, inst.question);
        res.n_instances += 1;
        if (kept) res.n_kept_by_gate += 1;
    }
    if (!jsonl) throw IoError("failed while writing: " + jsonl_path.string());

    if (res.n_instances > 0) {
        const double n = res.n_instances;
        res.bleu1 = b1 / n;
        res.bleu2 = b2 / n;
        res.bleu3 = b3 / n;
        res.bleu4 = b4 / n;
        res.rougeL = rl / n;
    }

    nlohmann::json metrics;
    metrics["bleu1"] = res.bleu1;
    metrics["bleu2"] = res.bleu2;
    metrics["bleu3"] = res.bleu3;
    metrics["bleu4"] = res.bleu4;
    metrics["rougeL"] = res.rougeL;
    const fs::path metrics_path = fs::path(options.out_dir) / "vqg_metrics.json";
    std::ofstream mout(metrics_path, std::ios::trunc);
    if (!mout) throw IoError("cannot open for writing: " + metrics_path.string());
    mout << metrics.dump(2) << '\n';
    if (!mout) throw IoError("failed while writing: " + metrics_path.string());
    return res;
}

FPReport run_fp(const FpRunOptions& options) {
    if (options.mode != "fp" && options.mode != "threshold")
        throw ArgumentError("fp mode must be 'fp' or 'threshold'");

    LoadedModel model = load_model(options.checkpoint);
    LoadedData data = load_data_dir(options.data_dir, model.vocab, false);
    const std::vector<FPExample> examples =
        build_fp_examples(model.ckpt.vqa, data.split, data.store, model.ckpt.answers);

    FPReport report;
    if (options.mode == "threshold") {
        std::vector<PredictionRecord> preds;
        std::vector<bool> truth;
        preds.reserve(examples.size());
        for (const auto& ex : examples) {
            const int pred = predict_answer(ex.vqa_output);
            PredictionRecord r;
            r.question_id = ex.instance->question_id;
            r.answer = model.ckpt.answers.at(static_cast<std::size_t>(pred));
            r.confidence = ex.vqa_output.answer_distribution(pred);
            preds.push_back(std::move(r));
            truth.push_back(ex.label);
        }
        if (options.threshold >= 0.0) {
            report.prf = precision_recall_f1(threshold_baseline(preds, options.threshold), truth);
            report.mode = "threshold";
            report.threshold = options.threshold;
        } else {
            report = best_threshold_report(preds, truth);
        }
    } else {
        FPModelConfig fp_config;
        fp_config.enc_dim = options.fp_enc_dim;
        fp_config.n_answers = model.ckpt.vqa.config.n_answers;
        fp_config.feature_dim = model.ckpt.vqa.config.feature_dim;
        fp_config.question_dim = model.ckpt.vqa.config.hidden_dim;
        FPTrainOptions train_options;
        train_options.n_iterations = options.fp_iterations;
        train_options.seed = options.fp_seed;
        const FPParams fp = train_fp(examples, fp_config, train_options);
        report = evaluate_fp(fp, examples);
    }

    ensure_dir(options.out_dir);
    write_fp_report((fs::path(options.out_dir) / "fp_report.json").string(), report);
    return report;
}

}  // namespace cyclevqa
