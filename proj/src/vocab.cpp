#include "bdlm/vocab.hpp"

#include <algorithm>
#include <cctype>
#include <map>

#include "bdlm/error.hpp"
#include "bdlm/io.hpp"

namespace bdlm::vocab {

uint64_t MixedVocabulary::hash() const {
    uint64_t h = 14695981039346656037ULL;
    auto mix_byte = [&h](unsigned char b) {
        h ^= b;
        h *= 1099511628211ULL;
    };
    for (const auto& t : tokens) {
        for (char c : t) mix_byte(static_cast<unsigned char>(c));
        mix_byte(0);
    }
    mix_byte(static_cast<unsigned char>(base_size & 0xff));
    mix_byte(static_cast<unsigned char>(n_users & 0xff));
    mix_byte(static_cast<unsigned char>(n_items & 0xff));
    return h;
}

namespace {

bool word_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '\'' || c == '_';
}

// tries to read "<uidNNN>" or "<iidNNN>" starting at pos
bool match_entity(const std::string& s, size_t pos, size_t& len) {
    if (s[pos] != '<' || pos + 6 >= s.size()) return false;
    std::string_view rest(s.data() + pos + 1, s.size() - pos - 1);
    if (rest.substr(0, 3) != "uid" && rest.substr(0, 3) != "iid") return false;
    size_t i = 3;
    size_t digits = 0;
    while (i < rest.size() && std::isdigit(static_cast<unsigned char>(rest[i]))) {
        ++i;
        ++digits;
    }
    if (digits == 0 || i >= rest.size() || rest[i] != '>') return false;
    len = i + 2;
    return true;
}

}  // namespace

std::vector<std::string> tokenize_text(const std::string& text) {
    std::vector<std::string> out;
    size_t pos = 0;
    while (pos < text.size()) {
        char c = text[pos];
        if (std::isspace(static_cast<unsigned char>(c))) {
            ++pos;
            continue;
        }
        size_t ent_len = 0;
        if (c == '<' && match_entity(text, pos, ent_len)) {
            out.push_back(text.substr(pos, ent_len));
            pos += ent_len;
            continue;
        }
        if (word_char(c)) {
            size_t end = pos;
            while (end < text.size() && word_char(text[end])) ++end;
            out.push_back(text.substr(pos, end - pos));
            pos = end;
            continue;
        }
        out.push_back(std::string(1, c));
        ++pos;
    }
    return out;
}

std::vector<std::string> build_base_vocab(const std::vector<std::string>& texts, int64_t min_freq) {
    std::map<std::string, int64_t> freq;
    for (const auto& t : texts) {
        for (auto& w : tokenize_text(t)) ++freq[w];
    }
    std::vector<std::string> base = reserved_specials();
    std::vector<std::pair<std::string, int64_t>> kept;
    for (const auto& [w, f] : freq) {
        if (f < min_freq) continue;
        if (std::find(base.begin(), base.end(), w) != base.end()) continue;
        kept.emplace_back(w, f);
    }
    std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    for (auto& [w, _] : kept) base.push_back(std::move(w));
    return base;
}

MixedVocabulary extend_vocab(std::vector<std::string> base, int64_t n_users, int64_t n_items) {
    require(n_users >= 0 && n_items >= 0, "entity counts must be non-negative");
    MixedVocabulary v;
    v.base_size = static_cast<int64_t>(base.size());
    v.n_users = n_users;
    v.n_items = n_items;
    v.tokens = std::move(base);
    v.tokens.reserve(v.base_size + n_users + n_items);
    for (int64_t u = 0; u < n_users; ++u) v.tokens.push_back(user_token_spelling(u));
    for (int64_t i = 0; i < n_items; ++i) v.tokens.push_back(item_token_spelling(i));
    v.index.reserve(v.tokens.size());
    for (int64_t id = 0; id < v.size(); ++id) {
        auto [_, fresh] = v.index.try_emplace(v.tokens[id], id);
        require(fresh, "duplicate token spelling: " + v.tokens[id]);
    }
    auto find = [&v](const char* s) {
        auto it = v.index.find(s);
        return it == v.index.end() ? -1 : it->second;
    };
    v.pad_id = find("<pad>");
    v.eos_id = find("<eos>");
    v.unk_id = find("<unk>");
    v.yes_id = find("Yes");
    v.no_id = find("No");
    return v;
}

std::vector<int64_t> encode(const std::string& text, const MixedVocabulary& vocab, int64_t max_len) {
    require(!text.empty(), "encode: empty text");
    std::vector<int64_t> ids;
    for (const auto& lex : tokenize_text(text)) {
        auto it = vocab.index.find(lex);
        ids.push_back(it != vocab.index.end() ? it->second : vocab.unk_id);
    }
    require(max_len < 0 || static_cast<int64_t>(ids.size()) <= max_len,
            "encoded prompt length " + std::to_string(ids.size()) + " exceeds limit " +
                std::to_string(max_len));
    return ids;
}

std::string decode(const std::vector<int64_t>& ids, const MixedVocabulary& vocab) {
    std::string out;
    for (size_t k = 0; k < ids.size(); ++k) {
        require(ids[k] >= 0 && ids[k] < vocab.size(),
                "decode: invalid token id " + std::to_string(ids[k]));
        if (k) out += ' ';
        out += vocab.tokens[ids[k]];
    }
    return out;
}

void save_vocab(const std::filesystem::path& path, const MixedVocabulary& vocab) {
    io::json j;
    j["base_size"] = vocab.base_size;
    j["n_users"] = vocab.n_users;
    j["n_items"] = vocab.n_items;
    j["ranges"] = {{"base", {0, vocab.base_size}},
                   {"user", {vocab.base_size, vocab.base_size + vocab.n_users}},
                   {"item", {vocab.base_size + vocab.n_users, vocab.size()}}};
    j["tokens"] = vocab.tokens;
    io::write_json(path, j);
}

MixedVocabulary load_vocab(const std::filesystem::path& path) {
    auto j = io::read_json(path);
    std::vector<std::string> tokens = j.at("tokens").get<std::vector<std::string>>();
    int64_t n_users = j.at("n_users").get<int64_t>();
    int64_t n_items = j.at("n_items").get<int64_t>();
    int64_t base_size = j.at("base_size").get<int64_t>();
    require(static_cast<int64_t>(tokens.size()) == base_size + n_users + n_items,
            "vocab file is inconsistent: " + path.string());
    tokens.resize(static_cast<size_t>(base_size));
    return extend_vocab(std::move(tokens), n_users, n_items);
}

namespace {

std::string history_clause(const std::vector<HistoryItem>& history, PromptMode mode) {
    std::string out;
    for (size_t k = 0; k < history.size(); ++k) {
        if (k) out += ", ";
        if (mode == PromptMode::tokens) {
            out += item_token_spelling(history[k].item) + " (" + history[k].title + ")";
        } else {
            out += history[k].title;
        }
    }
    return out;
}

}  // namespace

RenderedPrompt render_interaction_prompt(int64_t user, const std::vector<HistoryItem>& history,
                                         int64_t target_item, const std::string& target_title,
                                         bool will_interact, PromptMode mode,
                                         const PromptStrings& strings) {
    require(!history.empty(), "render: history must be nonempty");
    RenderedPrompt r;
    r.prompt = "User ";
    if (mode == PromptMode::tokens) r.prompt += user_token_spelling(user) + " ";
    r.prompt += "has " + strings.verb_past + " the following " + strings.noun_plural + " " +
                history_clause(history, mode) + ". Predict if he/she will " + strings.verb + " ";
    if (mode == PromptMode::tokens)
        r.prompt += item_token_spelling(target_item) + " (" + target_title + ")";
    else
        r.prompt += target_title;
    r.prompt += " next. Answer:";
    r.answer = will_interact ? "Yes" : "No";
    return r;
}

RenderedPrompt render_topk_prompt(int64_t user, const std::vector<HistoryItem>& history,
                                  const std::vector<HistoryItem>& candidates, int64_t positive,
                                  PromptMode mode, const PromptStrings& strings) {
    require(!history.empty(), "render: history must be nonempty");
    require(!candidates.empty(), "render: candidate list must be nonempty");
    RenderedPrompt r;
    r.prompt = "User ";
    if (mode == PromptMode::tokens) r.prompt += user_token_spelling(user) + " ";
    r.prompt += "has " + strings.verb_past + " the following " + strings.noun_plural + " " +
                history_clause(history, mode) + ". Predict which 1 " + strings.noun_singular +
                " in candidate set will he/she " + strings.verb +
                " most probably? Candidates: " + history_clause(candidates, mode) + ". Answer:";
    const HistoryItem* pos = nullptr;
    for (const auto& c : candidates) {
        if (c.item == positive) pos = &c;
    }
    require(pos != nullptr, "render: positive item missing from candidates");
    r.answer = mode == PromptMode::tokens ? item_token_spelling(positive) : pos->title;
    return r;
}

}  // namespace bdlm::vocab
