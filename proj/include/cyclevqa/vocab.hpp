#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "cyclevqa/errors.hpp"

namespace cyclevqa {

// lowercase, strip punctuation, collapse whitespace, split
std::vector<std::string> tokenize_question(const std::string& text);

// same normalization without the split; used for answer-string comparison
std::string normalize_answer(const std::string& text);

class Vocabulary {
public:
    static constexpr int kPad = 0;
    static constexpr int kSos = 1;
    static constexpr int kEos = 2;
    static constexpr int kUnk = 3;
    static constexpr int kNumSpecials = 4;

    Vocabulary();  // specials only
    explicit Vocabulary(std::vector<std::string> content_tokens);

    int size() const { return static_cast<int>(tokens_.size()); }
    const std::vector<std::string>& tokens() const { return tokens_; }
    const std::string& token(int id) const;
    int id(const std::string& token) const;  // kUnk when absent
    bool contains(const std::string& token) const;

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int> index_;
};

struct TokenSequence {
    std::vector<int> ids;
    int length = 0;  // count excluding padding; ids[0..length) are live

    bool empty() const { return length == 0; }
};

// [sos, tokens..., eos] with out-of-vocabulary tokens mapped to unk
TokenSequence encode_question(const Vocabulary& vocab, const std::string& text);

// content tokens only (specials dropped), joined by single spaces
std::string decode_question(const Vocabulary& vocab, const TokenSequence& seq);

// content token ids, specials dropped; what the n-gram metrics operate on
std::vector<int> content_tokens(const TokenSequence& seq);

// TokenSequence invariants: length >= 1, no pad before `length`, at most one
// eos and only at position length-1. Throws IntegrityError.
void validate_token_sequence(const TokenSequence& seq);

}  // namespace cyclevqa
