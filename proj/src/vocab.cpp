#include "cyclevqa/vocab.hpp"

#include <algorithm>
#include <cctype>

namespace cyclevqa {

namespace {
const std::vector<std::string> kSpecials = {"<pad>", "<sos>", "<eos>", "<unk>"};
}

std::string normalize_answer(const std::string& text) {
    std::string out;
    out.reserve(text.size());
    bool pending_space = false;
    for (unsigned char c : text) {
        if (std::isalnum(c)) {
            if (pending_space && !out.empty()) out.push_back(' ');
            pending_space = false;
            out.push_back(static_cast<char>(std::tolower(c)));
        } else if (std::isspace(c)) {
            pending_space = true;
        }
        // punctuation: dropped
    }
    return out;
}

std::vector<std::string> tokenize_question(const std::string& text) {
    const std::string norm = normalize_answer(text);
    std::vector<std::string> tokens;
    std::size_t pos = 0;
    while (pos < norm.size()) {
        std::size_t sp = norm.find(' ', pos);
        if (sp == std::string::npos) sp = norm.size();
        if (sp > pos) tokens.push_back(norm.substr(pos, sp - pos));
        pos = sp + 1;
    }
    return tokens;
}

Vocabulary::Vocabulary() : Vocabulary(std::vector<std::string>{}) {}

Vocabulary::Vocabulary(std::vector<std::string> content_tokens) {
    tokens_ = kSpecials;
    for (auto& t : content_tokens) tokens_.push_back(std::move(t));
    for (int i = 0; i < static_cast<int>(tokens_.size()); ++i) {
        if (!index_.emplace(tokens_[i], i).second) {
            throw ArgumentError("Vocabulary: duplicate token '" + tokens_[i] + "'");
        }
    }
}

const std::string& Vocabulary::token(int id) const {
    if (id < 0 || id >= size()) throw ArgumentError("Vocabulary: id " + std::to_string(id) + " out of range");
    return tokens_[id];
}

int Vocabulary::id(const std::string& token) const {
    auto it = index_.find(token);
    return it == index_.end() ? kUnk : it->second;
}

bool Vocabulary::contains(const std::string& token) const { return index_.count(token) != 0; }

TokenSequence encode_question(const Vocabulary& vocab, const std::string& text) {
    TokenSequence seq;
    seq.ids.push_back(Vocabulary::kSos);
    for (const auto& tok : tokenize_question(text)) seq.ids.push_back(vocab.id(tok));
    seq.ids.push_back(Vocabulary::kEos);
    seq.length = static_cast<int>(seq.ids.size());
    return seq;
}

std::string decode_question(const Vocabulary& vocab, const TokenSequence& seq) {
    std::string out;
    for (int i = 0; i < seq.length; ++i) {
        const int id = seq.ids[i];
        if (id == Vocabulary::kPad || id == Vocabulary::kSos || id == Vocabulary::kEos) continue;
        if (!out.empty()) out.push_back(' ');
        out += vocab.token(id);
    }
    return out;
}

std::vector<int> content_tokens(const TokenSequence& seq) {
    std::vector<int> out;
    out.reserve(seq.length);
    for (int i = 0; i < seq.length; ++i) {
        const int id = seq.ids[i];
        if (id == Vocabulary::kPad || id == Vocabulary::kSos || id == Vocabulary::kEos) continue;
        out.push_back(id);
    }
    return out;
}

void validate_token_sequence(const TokenSequence& seq) {
    if (seq.length < 1) throw IntegrityError("TokenSequence: length must be >= 1");
    if (seq.length > static_cast<int>(seq.ids.size()))
        throw IntegrityError("TokenSequence: length exceeds id storage");
    int eos_count = 0;
    for (int i = 0; i < seq.length; ++i) {
        if (seq.ids[i] == Vocabulary::kPad)
            throw IntegrityError("TokenSequence: pad token before position length");
        if (seq.ids[i] == Vocabulary::kEos) {
            ++eos_count;
            if (i != seq.length - 1)
                throw IntegrityError("TokenSequence: eos before position length-1");
        }
    }
    if (eos_count > 1) throw IntegrityError("TokenSequence: multiple eos tokens");
}

}  // namespace cyclevqa
