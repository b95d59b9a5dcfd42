#include "cyclevqa/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

namespace cyclevqa {

namespace {

constexpr char kMagic[4] = {'C', 'V', 'Q', 'A'};
constexpr std::uint32_t kFormatVersion = 1;

template <typename T>
void write_le(std::ostream& out, T v) {
    char buf[sizeof(T)];
    for (std::size_t i = 0; i < sizeof(T); ++i)
        buf[i] = static_cast<char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xff);
    out.write(buf, sizeof(T));
}

template <typename T>
T read_le(std::istream& in, const std::string& path) {
    unsigned char buf[sizeof(T)];
    if (!in.read(reinterpret_cast<char*>(buf), sizeof(T)))
        throw ParseError(path + ": truncated checkpoint");
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
    return static_cast<T>(v);
}

void write_f64(std::ostream& out, double d) {
    std::uint64_t bits;
    std::memcpy(&bits, &d, sizeof(bits));
    write_le<std::uint64_t>(out, bits);
}

double read_f64(std::istream& in, const std::string& path) {
    const std::uint64_t bits = read_le<std::uint64_t>(in, path);
    double d;
    std::memcpy(&d, &bits, sizeof(d));
    return d;
}

void write_string(std::ostream& out, const std::string& s) {
    write_le<std::uint64_t>(out, s.size());
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& in, const std::string& path) {
    const std::uint64_t n = read_le<std::uint64_t>(in, path);
    if (n > (1ULL << 32)) throw ParseError(path + ": implausible string length");
    std::string s(n, '\0');
    if (n && !in.read(s.data(), static_cast<std::streamsize>(n)))
        throw ParseError(path + ": truncated checkpoint");
    return s;
}

void write_matrix(std::ostream& out, const std::string& name, const Eigen::MatrixXd& m) {
    write_string(out, name);
    write_le<std::uint64_t>(out, static_cast<std::uint64_t>(m.rows()));
    write_le<std::uint64_t>(out, static_cast<std::uint64_t>(m.cols()));
    for (Eigen::Index c = 0; c < m.cols(); ++c)
        for (Eigen::Index r = 0; r < m.rows(); ++r) write_f64(out, m(r, c));
}

Eigen::MatrixXd read_matrix(std::istream& in, const std::string& path) {
    const auto rows = read_le<std::uint64_t>(in, path);
    const auto cols = read_le<std::uint64_t>(in, path);
    if (rows > (1ULL << 24) || cols > (1ULL << 24))
        throw ParseError(path + ": implausible matrix shape");
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index c = 0; c < m.cols(); ++c)
        for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) = read_f64(in, path);
    return m;
}

void write_string_list(std::ostream& out, const std::vector<std::string>& v) {
    write_le<std::uint64_t>(out, v.size());
    for (const auto& s : v) write_string(out, s);
}

std::vector<std::string> read_string_list(std::istream& in, const std::string& path) {
    const std::uint64_t n = read_le<std::uint64_t>(in, path);
    if (n > (1ULL << 24)) throw ParseError(path + ": implausible list length");
    std::vector<std::string> v;
    v.reserve(n);
    for (std::uint64_t i = 0; i < n; ++i) v.push_back(read_string(in, path));
    return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& c) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open checkpoint for writing: " + path);

    out.write(kMagic, 4);
    write_le<std::uint32_t>(out, kFormatVersion);
    write_le<std::int64_t>(out, c.iteration);
    write_string(out, serialize_cycle_config(c.config));
    write_string(out, c.rng_state);

    const auto& qa = c.vqa.config;
    write_le<std::int32_t>(out, qa.vocab_size);
    write_le<std::int32_t>(out, qa.embed_dim);
    write_le<std::int32_t>(out, qa.hidden_dim);
    write_le<std::int32_t>(out, qa.regions);
    write_le<std::int32_t>(out, qa.feature_dim);
    write_le<std::int32_t>(out, qa.n_answers);
    const auto& qg = c.vqg.config;
    write_le<std::int32_t>(out, qg.vocab_size);
    write_le<std::int32_t>(out, qg.embed_dim);
    write_le<std::int32_t>(out, qg.enc_dim);
    write_le<std::int32_t>(out, qg.hidden_dim);
    write_le<std::int32_t>(out, qg.n_answers);
    write_le<std::int32_t>(out, qg.feature_dim);

    write_string_list(out, c.vocab_tokens);
    write_string_list(out, c.answers);

    std::map<std::string, const Eigen::MatrixXd*> mats;
    for_each_vqa_param(c.vqa, [&](const char* n, const Eigen::MatrixXd& m) { mats[n] = &m; });
    for_each_vqg_param(c.vqg, [&](const char* n, const Eigen::MatrixXd& m) { mats[n] = &m; });
    for (const auto& [name, m] : c.momentum) mats["momentum." + name] = &m;

    write_le<std::uint64_t>(out, mats.size());
    for (const auto& [name, m] : mats) write_matrix(out, name, *m);

    out.flush();
    if (!out) throw IoError("failed while writing checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint: " + path);

    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
        throw ParseError(path + ": not a checkpoint file (bad magic)");
    const auto version = read_le<std::uint32_t>(in, path);
    if (version != kFormatVersion)
        throw ParseError(path + ": unsupported checkpoint version " + std::to_string(version));

    Checkpoint c;
    c.iteration = static_cast<long>(read_le<std::int64_t>(in, path));
    c.config = parse_cycle_config(read_string(in, path));
    c.rng_state = read_string(in, path);

    c.vqa.config.vocab_size = read_le<std::int32_t>(in, path);
    c.vqa.config.embed_dim = read_le<std::int32_t>(in, path);
    c.vqa.config.hidden_dim = read_le<std::int32_t>(in, path);
    c.vqa.config.regions = read_le<std::int32_t>(in, path);
    c.vqa.config.feature_dim = read_le<std::int32_t>(in, path);
    c.vqa.config.n_answers = read_le<std::int32_t>(in, path);
    c.vqg.config.vocab_size = read_le<std::int32_t>(in, path);
    c.vqg.config.embed_dim = read_le<std::int32_t>(in, path);
    c.vqg.config.enc_dim = read_le<std::int32_t>(in, path);
    c.vqg.config.hidden_dim = read_le<std::int32_t>(in, path);
    c.vqg.config.n_answers = read_le<std::int32_t>(in, path);
    c.vqg.config.feature_dim = read_le<std::int32_t>(in, path);

    c.vocab_tokens = read_string_list(in, path);
    c.answers = read_string_list(in, path);

    const std::uint64_t n_mats = read_le<std::uint64_t>(in, path);
    std::map<std::string, Eigen::MatrixXd> mats;
    for (std::uint64_t i = 0; i < n_mats; ++i) {
        std::string name = read_string(in, path);
        if (mats.count(name)) throw ParseError(path + ": duplicate matrix " + name);
        mats[name] = read_matrix(in, path);
    }

    const auto take = [&](const char* name, Eigen::MatrixXd& dst) {
        auto it = mats.find(name);
        if (it == mats.end()) throw IntegrityError(path + ": checkpoint missing matrix " + name);
        dst = std::move(it->second);
        mats.erase(it);
    };
    for_each_vqa_param(c.vqa, take);
    for_each_vqg_param(c.vqg, take);
    for (auto& [name, m] : mats) {
        if (name.rfind("momentum.", 0) != 0)
            throw IntegrityError(path + ": unexpected matrix " + name);
        c.momentum[name.substr(9)] = std::move(m);
    }
    return c;
}

Checkpoint make_checkpoint(const TrainState& state, const CycleConfig& config,
                           const Vocabulary& vocab, const std::vector<std::string>& answers) {
    Checkpoint c;
    c.iteration = state.iteration;
    c.config = config;
    c.rng_state = rng::save_state(state.engine);
    c.vqa = state.vqa;
    c.vqg = state.vqg;
    c.momentum = state.momentum;
    const auto& toks = vocab.tokens();
    c.vocab_tokens.assign(toks.begin() + Vocabulary::kNumSpecials, toks.end());
    c.answers = answers;
    return c;
}

TrainState state_from_checkpoint(const Checkpoint& c) {
    TrainState s;
    s.iteration = c.iteration;
    s.vqa = c.vqa;
    s.vqg = c.vqg;
    s.momentum = c.momentum;
    rng::load_state(s.engine, c.rng_state);
    return s;
}

}  // namespace cyclevqa
