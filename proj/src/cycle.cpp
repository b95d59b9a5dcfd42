#include "cyclevqa/cycle.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cyclevqa/checkpoint.hpp"

namespace cyclevqa {

void validate(const CycleConfig& c) {
    if (c.lambda_G < 0.0) throw ArgumentError("lambda_G must be >= 0");
    if (c.lambda_C < 0.0) throw ArgumentError("lambda_C must be >= 0");
    if (c.lambda_att < 0.0) throw ArgumentError("lambda_att must be >= 0");
    if (c.T_sim < -1.0 || c.T_sim > 1.0) throw ArgumentError("T_sim must lie in [-1, 1]");
    if (c.A_iter < 0) throw ArgumentError("A_iter must be >= 0");
    if (c.noise.scale < 0.0) throw ArgumentError("noise_scale must be >= 0");
    if (c.clip_norm <= 0.0) throw ArgumentError("clip_norm must be > 0");
    if (c.vqg_learning_rate <= 0.0) throw ArgumentError("vqg_learning_rate must be > 0");
    if (c.vqa_learning_rate <= 0.0) throw ArgumentError("vqa_learning_rate must be > 0");
    if (c.max_gen_len < 2) throw ArgumentError("max_gen_len must be >= 2");
    if (c.enable_gating && !c.enable_A_consistency)
        throw ArgumentError("enable_gating requires enable_A_consistency");
}

// --- config text round-trip ----------------------------------------------------

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

bool parse_bool(const std::string& v, const std::string& key) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ParseError("config key " + key + ": expected a boolean, got '" + v + "'");
}

double parse_real(const std::string& v, const std::string& key) {
    std::size_t used = 0;
    double d = 0.0;
    try {
        d = std::stod(v, &used);
    } catch (const std::exception&) {
        throw ParseError("config key " + key + ": expected a number, got '" + v + "'");
    }
    if (used != v.size())
        throw ParseError("config key " + key + ": trailing characters in '" + v + "'");
    return d;
}

long long parse_int(const std::string& v, const std::string& key) {
    std::size_t used = 0;
    long long i = 0;
    try {
        i = std::stoll(v, &used);
    } catch (const std::exception&) {
        throw ParseError("config key " + key + ": expected an integer, got '" + v + "'");
    }
    if (used != v.size())
        throw ParseError("config key " + key + ": trailing characters in '" + v + "'");
    return i;
}

}  // namespace

CycleConfig parse_cycle_config(const std::string& text) {
    CycleConfig c;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string stripped = trim(line);
        if (stripped.empty() || stripped[0] == '#') continue;
        const auto eq = stripped.find('=');
        if (eq == std::string::npos)
            throw ParseError("config line " + std::to_string(lineno) + ": expected key = value");
        const std::string key = trim(stripped.substr(0, eq));
        const std::string val = trim(stripped.substr(eq + 1));

        if (key == "lambda_G") c.lambda_G = parse_real(val, key);
        else if (key == "lambda_C") c.lambda_C = parse_real(val, key);
        else if (key == "T_sim") c.T_sim = parse_real(val, key);
        else if (key == "A_iter") c.A_iter = static_cast<long>(parse_int(val, key));
        else if (key == "enable_Q_consistency") c.enable_Q_consistency = parse_bool(val, key);
        else if (key == "enable_A_consistency") c.enable_A_consistency = parse_bool(val, key);
        else if (key == "enable_gating") c.enable_gating = parse_bool(val, key);
        else if (key == "enable_attention_consistency")
            c.enable_attention_consistency = parse_bool(val, key);
        else if (key == "lambda_att") c.lambda_att = parse_real(val, key);
        else if (key == "noise_scale") c.noise.scale = parse_real(val, key);
        else if (key == "noise_enabled") c.noise.enabled = parse_bool(val, key);
        else if (key == "clip_norm") c.clip_norm = parse_real(val, key);
        else if (key == "vqg_learning_rate") c.vqg_learning_rate = parse_real(val, key);
        else if (key == "vqa_learning_rate") c.vqa_learning_rate = parse_real(val, key);
        else if (key == "max_gen_len") c.max_gen_len = static_cast<int>(parse_int(val, key));
        else if (key == "seed") c.seed = static_cast<std::uint64_t>(parse_int(val, key));
        else throw ParseError("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    }
    validate(c);
    return c;
}

CycleConfig load_cycle_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    try {
        return parse_cycle_config(buf.str());
    } catch (const ParseError& e) {
        throw ParseError(path + ": " + e.what());
    }
}

std::string serialize_cycle_config(const CycleConfig& c) {
    std::ostringstream out;
    out.precision(17);
    out << "lambda_G = " << c.lambda_G << "\n";
    out << "lambda_C = " << c.lambda_C << "\n";
    out << "T_sim = " << c.T_sim << "\n";
    out << "A_iter = " << c.A_iter << "\n";
    out << "enable_Q_consistency = " << (c.enable_Q_consistency ? "true" : "false") << "\n";
    out << "enable_A_consistency = " << (c.enable_A_consistency ? "true" : "false") << "\n";
    out << "enable_gating = " << (c.enable_gating ? "true" : "false") << "\n";
    out << "enable_attention_consistency = " << (c.enable_attention_consistency ? "true" : "false")
        << "\n";
    out << "lambda_att = " << c.lambda_att << "\n";
    out << "noise_scale = " << c.noise.scale << "\n";
    out << "noise_enabled = " << (c.noise.enabled ? "true" : "false") << "\n";
    out << "clip_norm = " << c.clip_norm << "\n";
    out << "vqg_learning_rate = " << c.vqg_learning_rate << "\n";
    out << "vqa_learning_rate = " << c.vqa_learning_rate << "\n";
    out << "max_gen_len = " << c.max_gen_len << "\n";
    out << "seed = " << c.seed << "\n";
    return out.str();
}

// --- state ----------------------------------------------------------------------

TrainState make_train_state(const VQAModelConfig& vqa_config, const VQGModelConfig& vqg_config,
                            std::uint64_t seed) {
    TrainState s;
    rng::Engine init = rng::make_engine(rng::derive_seed(seed, 0x1217));
    s.vqa = make_vqa_params(vqa_config, init);
    s.vqg = make_vqg_params(vqg_config, init);
    s.engine = rng::make_engine(rng::derive_seed(seed, 0x7261));
    return s;
}

std::map<std::string, int> make_answer_index(const std::vector<std::string>& answers) {
    std::map<std::string, int> index;
    for (std::size_t i = 0; i < answers.size(); ++i) {
        if (!index.emplace(answers[i], static_cast<int>(i)).second)
            throw ArgumentError("duplicate answer in answer vocabulary: " + answers[i]);
    }
    return index;
}

int answer_target(const std::map<std::string, int>& answer_index, const QAInstance& inst) {
    const auto it = answer_index.find(inst.labels.canonical_answer);
    return it == answer_index.end() ? -1 : it->second;
}

// --- gating ----------------------------------------------------------------------

double cosine_similarity(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    if (a.size() != b.size())
        throw ShapeError("cosine: mismatched lengths " + std::to_string(a.size()) + " vs " +
                         std::to_string(b.size()));
    const double na = a.norm();
    const double nb = b.norm();
    if (na == 0.0 || nb == 0.0) return 0.0;
    return a.dot(b) / (na * nb);
}

bool gating_filter(const Eigen::VectorXd& original_encoding, const TokenSequence& generated,
                   const VQAOutput& generated_output, int target, double T_sim) {
    validate_token_sequence(generated);
    if (argmax_lowest(generated_output.answer_distribution) == target) return true;
    return cosine_similarity(original_encoding, generated_output.question_encoding) > T_sim;
}

double attention_consistency_loss(const Eigen::VectorXd& att_q,
                                  const Eigen::VectorXd& att_qprime) {
    if (att_q.size() != att_qprime.size())
        throw ShapeError("attention consistency: mismatched lengths " +
                         std::to_string(att_q.size()) + " vs " + std::to_string(att_qprime.size()));
    return (att_q - att_qprime).squaredNorm();
}

// --- forward ----------------------------------------------------------------------

CycleForwardResult cycle_forward(ad::Tape& t, ad::ParamBinder& binder, TrainState& state,
                                 const std::vector<const QAInstance*>& batch,
                                 const FeatureStore& store,
                                 const std::map<std::string, int>& answer_index,
                                 const CycleConfig& config) {
    if (batch.empty()) throw ArgumentError("cycle_forward: empty batch");

    CycleForwardResult res;
    res.record.iteration = state.iteration;
    res.record.cycle_active = config.enable_A_consistency && state.iteration >= config.A_iter;

    VQAVars vqa_vars = bind_vqa(binder, state.vqa);
    const bool need_vqg = config.enable_Q_consistency || res.record.cycle_active;
    VQGVars vqg_vars;
    if (need_vqg) vqg_vars = bind_vqg(binder, state.vqg);

    std::vector<ad::Var> f_terms, g_terms, cycle_terms, att_terms;

    for (const QAInstance* inst : batch) {
        const int target = answer_target(answer_index, *inst);
        if (target < 0) continue;  // canonical answer outside the classifier head
        const RegionFeatures& image = store.get(inst->image_id);

        VQAGraph fwd = forward_vqa_graph(t, vqa_vars, state.vqa.config, inst->question,
                                         image.features);
        f_terms.push_back(vqa_loss_graph(t, fwd.probs, target));

        if (!need_vqg) continue;

        // Conditioning built from values, not nodes: the generator learns from
        // the answerer's outputs without pushing gradients back into it.
        const Eigen::VectorXd answer_detached = fwd.probs.value().col(0);
        const Eigen::VectorXd attended_detached = fwd.attended.value().col(0);
        const Eigen::VectorXd eta =
            sample_noise(state.vqg.config.enc_dim, config.noise, state.engine);

        ad::Var conditioning;
        Eigen::VectorXd conditioning_value;
        {
            conditioning = encode_conditioning_graph(t, vqg_vars, t.constant(answer_detached),
                                                     t.constant(attended_detached), eta);
            conditioning_value = conditioning.value().col(0);
        }

        if (config.enable_Q_consistency) {
            g_terms.push_back(vqg_teacher_forced_loss_graph(t, vqg_vars, state.vqg.config,
                                                            conditioning, inst->question));
        }

        if (res.record.cycle_active) {
            rng::Engine unused = state.engine;  // greedy decode draws nothing
            TokenSequence generated = decode_generate(state.vqg, conditioning_value,
                                                      config.max_gen_len, DecodeMode::kGreedy,
                                                      unused);
            VQAGraph fwd2 = forward_vqa_graph(t, vqa_vars, state.vqa.config, generated,
                                              image.features);

            VQAOutput gen_out;
            gen_out.answer_distribution = fwd2.probs.value().col(0);
            gen_out.attention = fwd2.attention.value().col(0);
            gen_out.question_encoding = fwd2.encoding.value().col(0);
            gen_out.attended = fwd2.attended.value().col(0);
            const Eigen::VectorXd original_encoding = fwd.encoding.value().col(0);

            const bool keep = !config.enable_gating ||
                              gating_filter(original_encoding, generated, gen_out, target,
                                            config.T_sim);
            res.generated.push_back(std::move(generated));
            res.kept.push_back(keep);
            res.record.gate_total += 1;
            if (keep) {
                res.record.gate_pass += 1;
                cycle_terms.push_back(vqa_loss_graph(t, fwd2.probs, target));
                if (config.enable_attention_consistency) {
                    ad::Var d = t.sub(fwd.attention, fwd2.attention);
                    att_terms.push_back(t.sum(t.cmul(d, d)));
                }
            }
        }
    }

    const auto mean_of = [&t](const std::vector<ad::Var>& terms) {
        return t.scale(t.add_n(terms), 1.0 / static_cast<double>(terms.size()));
    };

    ad::Var total = t.scalar(0.0);
    if (!f_terms.empty()) {
        ad::Var f = mean_of(f_terms);
        res.record.loss_F = f.value()(0, 0);
        total = t.add(total, f);
    }
    if (!g_terms.empty()) {
        ad::Var g = mean_of(g_terms);
        res.record.loss_G = g.value()(0, 0);
        if (config.lambda_G > 0.0) total = t.add(total, t.scale(g, config.lambda_G));
    }
    if (!cycle_terms.empty()) {
        ad::Var cy = mean_of(cycle_terms);
        res.record.loss_cycle = cy.value()(0, 0);
        if (config.lambda_C > 0.0) total = t.add(total, t.scale(cy, config.lambda_C));
    }
    if (!att_terms.empty()) {
        ad::Var at = mean_of(att_terms);
        res.record.loss_att = at.value()(0, 0);
        if (config.lambda_att > 0.0) total = t.add(total, t.scale(at, config.lambda_att));
    }
    res.total = total;
    res.record.total = total.value()(0, 0);
    return res;
}

// --- optimization ------------------------------------------------------------------

CycleStepRecord train_step(TrainState& state, const std::vector<const QAInstance*>& batch,
                           const FeatureStore& store,
                           const std::map<std::string, int>& answer_index,
                           const CycleConfig& config) {
    validate(config);
    ad::Tape tape;
    ad::ParamBinder binder(tape);
    CycleForwardResult fwd = cycle_forward(tape, binder, state, batch, store, answer_index, config);

    if (!std::isfinite(fwd.record.total))
        throw TrainingError("non-finite loss at iteration " + std::to_string(state.iteration),
                            fwd.record);

    tape.backward(fwd.total);
    ad::GradMap grads = binder.grads();

    double sq = 0.0;
    for (const auto& [name, g] : grads) sq += g.squaredNorm();
    const double norm = std::sqrt(sq);
    const double clip_scale = norm > config.clip_norm ? config.clip_norm / norm : 1.0;

    auto vqa_named = named_vqa_params(state.vqa);
    auto vqg_named = named_vqg_params(state.vqg);
    const auto update = [&](const std::string& name, Eigen::MatrixXd& param, double lr) {
        auto mom = state.momentum.find(name);
        if (mom == state.momentum.end())
            mom = state.momentum.emplace(name, Eigen::MatrixXd::Zero(param.rows(), param.cols()))
                      .first;
        Eigen::MatrixXd& m = mom->second;
        m *= 0.9;
        const auto g = grads.find(name);
        if (g != grads.end()) m += clip_scale * g->second;
        param -= lr * m;
    };
    for (auto& [name, p] : vqa_named) update(name, *p, config.vqa_learning_rate);
    for (auto& [name, p] : vqg_named) update(name, *p, config.vqg_learning_rate);

    state.iteration += 1;
    return fwd.record;
}

// --- batch schedule ------------------------------------------------------------------

std::vector<std::size_t> epoch_permutation(std::uint64_t seed, long epoch, std::size_t n) {
    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    rng::Engine g = rng::make_engine(
        rng::derive_seed(rng::derive_seed(seed, 0x626174), static_cast<std::uint64_t>(epoch)));
    for (std::size_t i = n; i > 1; --i) {
        const std::size_t j = rng::uniform_int(g, i);
        std::swap(perm[i - 1], perm[j]);
    }
    return perm;
}

std::vector<const QAInstance*> batch_for_iteration(const DatasetSplit& split,
                                                   const CycleConfig& config, long iteration,
                                                   int batch_size) {
    if (split.instances.empty()) throw ArgumentError("training split is empty");
    if (batch_size < 1) throw ArgumentError("batch_size must be >= 1");
    const std::size_t n = split.instances.size();
    const long batches_per_epoch =
        static_cast<long>((n + static_cast<std::size_t>(batch_size) - 1) /
                          static_cast<std::size_t>(batch_size));
    const long epoch = iteration / batches_per_epoch;
    const long slot = iteration % batches_per_epoch;
    const std::vector<std::size_t> perm = epoch_permutation(config.seed, epoch, n);

    std::vector<const QAInstance*> batch;
    const std::size_t begin = static_cast<std::size_t>(slot) * static_cast<std::size_t>(batch_size);
    const std::size_t end = std::min(begin + static_cast<std::size_t>(batch_size), n);
    batch.reserve(end - begin);
    for (std::size_t i = begin; i < end; ++i) batch.push_back(&split.instances[perm[i]]);
    return batch;
}

// --- loop ------------------------------------------------------------------------------

void write_steps_csv_header(std::ostream& os) {
    os << "iteration,loss_F,loss_G,loss_cycle,loss_att,gate_pass,gate_total,cycle_active\n";
}

void write_steps_csv_row(std::ostream& os, const CycleStepRecord& r) {
    os << r.iteration << ',' << r.loss_F << ',' << r.loss_G << ',' << r.loss_cycle << ','
       << r.loss_att << ',' << r.gate_pass << ',' << r.gate_total << ','
       << (r.cycle_active ? 1 : 0) << '\n';
}

TrainState train_loop(TrainState state, const DatasetSplit& split, const FeatureStore& store,
                      const Vocabulary& vocab, const std::vector<std::string>& answers,
                      const CycleConfig& config, const TrainLoopOptions& options,
                      const StepCallback& on_step) {
    validate(config);
    if (options.n_iterations < 1) throw ArgumentError("n_iterations must be >= 1");
    if (options.checkpoint_every < 1) throw ArgumentError("checkpoint_every must be >= 1");
    validate_split_against_store(split, store);

    namespace fs = std::filesystem;
    const fs::path out_dir(options.out_dir);
    const fs::path ckpt_dir = out_dir / "checkpoints";
    std::error_code ec;
    fs::create_directories(ckpt_dir, ec);
    if (ec) throw IoError("cannot create output directory: " + ckpt_dir.string());

    const fs::path csv_path = out_dir / "steps.csv";
    const bool fresh = state.iteration == 0;
    std::ofstream csv(csv_path, fresh ? std::ios::trunc : std::ios::app);
    if (!csv) throw IoError("cannot open step log for writing: " + csv_path.string());
    if (fresh) write_steps_csv_header(csv);

    const std::map<std::string, int> answer_index = make_answer_index(answers);

    const auto checkpoint_path = [&](long iter) {
        char name[32];
        std::snprintf(name, sizeof(name), "ckpt_%06ld.bin", iter);
        return (ckpt_dir / name).string();
    };

    long last_saved = -1;
    while (state.iteration < options.n_iterations) {
        const auto batch = batch_for_iteration(split, config, state.iteration, options.batch_size);
        const CycleStepRecord record = train_step(state, batch, store, answer_index, config);
        write_steps_csv_row(csv, record);
        if (on_step) on_step(record);

        if (state.iteration % options.checkpoint_every == 0) {
            csv.flush();
            save_checkpoint(checkpoint_path(state.iteration),
                            make_checkpoint(state, config, vocab, answers));
            last_saved = state.iteration;
        }
    }
    csv.flush();
    if (!csv) throw IoError("failed while writing step log: " + csv_path.string());
    if (last_saved != state.iteration) {
        save_checkpoint(checkpoint_path(state.iteration),
                        make_checkpoint(state, config, vocab, answers));
    }
    return state;
}

}  // namespace cyclevqa
