#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

namespace bdlm::vocab {

// Base natural-language tokens V followed by one token per user
// ("<uid1>".."<uidN>") and per item ("<iid1>".."<iidM>"). The three ID
// ranges are contiguous and disjoint.
struct MixedVocabulary {
    std::vector<std::string> tokens;
    int64_t base_size = 0;
    int64_t n_users = 0;
    int64_t n_items = 0;
    std::unordered_map<std::string, int64_t> index;

    int64_t pad_id = -1, eos_id = -1, unk_id = -1, yes_id = -1, no_id = -1;

    int64_t size() const { return static_cast<int64_t>(tokens.size()); }
    int64_t user_token_id(int64_t user) const { return base_size + user; }
    int64_t item_token_id(int64_t item) const { return base_size + n_users + item; }
    bool is_user_token(int64_t id) const { return id >= base_size && id < base_size + n_users; }
    bool is_item_token(int64_t id) const { return id >= base_size + n_users && id < size(); }

    uint64_t hash() const;
};

inline std::string user_token_spelling(int64_t user) {
    return "<uid" + std::to_string(user + 1) + ">";
}
inline std::string item_token_spelling(int64_t item) {
    return "<iid" + std::to_string(item + 1) + ">";
}

// Reserved specials, always present in this order at the front of V.
inline const std::vector<std::string>& reserved_specials() {
    static const std::vector<std::string> specials = {"<pad>", "<eos>", "<unk>", "Yes", "No"};
    return specials;
}

// Word-level tokens with frequency >= min_freq, ordered by frequency
// descending then lexicographic, after the reserved specials.
std::vector<std::string> build_base_vocab(const std::vector<std::string>& texts, int64_t min_freq);

MixedVocabulary extend_vocab(std::vector<std::string> base, int64_t n_users, int64_t n_items);

// Lexer shared by encode and vocabulary building: entity tokens "<uidK>" /
// "<iidK>" match greedily as single lexemes, words are maximal
// [A-Za-z0-9_'] runs, any other non-space character is its own lexeme.
std::vector<std::string> tokenize_text(const std::string& text);

// Unknown words map to <unk>. When max_len >= 0, exceeding it is an error
// (callers shorten history; tokens are never cut mid-spelling).
std::vector<int64_t> encode(const std::string& text, const MixedVocabulary& vocab,
                            int64_t max_len = -1);
std::string decode(const std::vector<int64_t>& ids, const MixedVocabulary& vocab);

void save_vocab(const std::filesystem::path& path, const MixedVocabulary& vocab);
MixedVocabulary load_vocab(const std::filesystem::path& path);

// ---- prompt rendering (Table-style instruction templates) ----

enum class Task { interaction_prediction, topk };
enum class PromptMode { tokens, text_only };

// Domain wording; movie defaults.
struct PromptStrings {
    std::string noun_plural = "movies";
    std::string noun_singular = "movie";
    std::string verb_past = "watched";
    std::string verb = "watch";
};

struct HistoryItem {
    int64_t item = 0;
    std::string title;
};

struct RenderedPrompt {
    std::string prompt;
    std::string answer;
};

RenderedPrompt render_interaction_prompt(int64_t user, const std::vector<HistoryItem>& history,
                                         int64_t target_item, const std::string& target_title,
                                         bool will_interact, PromptMode mode,
                                         const PromptStrings& strings = {});

// Candidates appear in the given order; the answer is the positive's entity
// token (tokens mode) or its title (text_only mode).
RenderedPrompt render_topk_prompt(int64_t user, const std::vector<HistoryItem>& history,
                                  const std::vector<HistoryItem>& candidates, int64_t positive,
                                  PromptMode mode, const PromptStrings& strings = {});

}  // namespace bdlm::vocab
