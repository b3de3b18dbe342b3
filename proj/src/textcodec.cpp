#include "lrem/textcodec.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>

#include "lrem/util.hpp"

namespace lrem {

const std::array<const char*, Vocab::kNumSpecials>& Vocab::special_strings() {
    static const std::array<const char*, kNumSpecials> s = {
        "<pad>", "<bos>", "<think>", "</think>", "<emb>"};
    return s;
}

Vocab Vocab::build(std::vector<std::string> surface_tokens) {
    std::sort(surface_tokens.begin(), surface_tokens.end());
    Vocab v;
    v.tokens_.reserve(surface_tokens.size() + kNumSpecials);
    for (const char* s : special_strings()) {
        v.tokens_.emplace_back(s);
    }
    for (auto& t : surface_tokens) {
        if (t.empty()) {
            throw std::invalid_argument("empty surface token");
        }
        v.tokens_.push_back(std::move(t));
    }
    for (std::size_t i = 0; i < v.tokens_.size(); ++i) {
        auto [it, fresh] =
            v.index_.emplace(v.tokens_[i], static_cast<TokenId>(i));
        if (!fresh) {
            throw std::invalid_argument("duplicate or reserved token: " +
                                        v.tokens_[i]);
        }
    }
    return v;
}

const std::string& Vocab::token(TokenId id) const {
    if (id < 0 || id >= size()) {
        throw std::out_of_range("token id out of range: " +
                                std::to_string(id));
    }
    return tokens_[static_cast<std::size_t>(id)];
}

TokenId Vocab::id_of(const std::string& tok) const {
    auto it = index_.find(tok);
    if (it == index_.end()) {
        throw std::invalid_argument("token not in vocabulary: " + tok);
    }
    return it->second;
}

bool Vocab::contains(const std::string& tok) const {
    return index_.count(tok) != 0;
}

void Vocab::save(const std::string& path) const {
    std::string out;
    for (const auto& t : tokens_) {
        out += t;
        out += '\n';
    }
    write_file(path, out);
}

Vocab Vocab::load(const std::string& path) {
    auto lines = read_lines(path);
    while (!lines.empty() && lines.back().empty()) {
        lines.pop_back();
    }
    if (lines.size() < kNumSpecials) {
        throw std::runtime_error("vocabulary file too short: " + path);
    }
    for (int i = 0; i < kNumSpecials; ++i) {
        if (lines[static_cast<std::size_t>(i)] != special_strings()[i]) {
            throw std::runtime_error("vocabulary file missing special token " +
                                     std::string(special_strings()[i]));
        }
    }
    std::vector<std::string> surface(lines.begin() + kNumSpecials,
                                     lines.end());
    Vocab v = build(std::move(surface));
    // build() sorts; require the file order to already be canonical so that
    // ids match line numbers.
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (v.tokens_[i] != lines[i]) {
            throw std::runtime_error("vocabulary file not in canonical order");
        }
    }
    return v;
}

TokenSeq encode(const Vocab& vocab, const std::string& text) {
    TokenSeq ids;
    std::istringstream ss(text);
    std::string word;
    while (ss >> word) {
        ids.push_back(vocab.id_of(word));
    }
    return ids;
}

std::string decode(const Vocab& vocab, const TokenSeq& seq) {
    std::string out;
    for (std::size_t i = 0; i < seq.size(); ++i) {
        if (i > 0) {
            out += ' ';
        }
        out += vocab.token(seq[i]);
    }
    return out;
}

namespace {

void check_ids(const Vocab& vocab, const TokenSeq& seq) {
    for (TokenId id : seq) {
        if (id < 0 || id >= vocab.size()) {
            throw std::invalid_argument("token id out of vocabulary range: " +
                                        std::to_string(id));
        }
    }
}

}  // namespace

TokenSeq render_query_input(const Vocab& vocab, const TokenSeq& query,
                            const std::optional<TokenSeq>& cot,
                            int max_seq_len) {
    check_ids(vocab, query);
    if (cot) {
        check_ids(vocab, *cot);
    }
    TokenSeq out;
    out.reserve(query.size() + (cot ? cot->size() : 0) + 4);
    out.push_back(Vocab::kBos);
    out.insert(out.end(), query.begin(), query.end());
    out.push_back(Vocab::kThinkOpen);
    if (cot) {
        out.insert(out.end(), cot->begin(), cot->end());
        out.push_back(Vocab::kThinkClose);
        out.push_back(Vocab::kEmb);
    }
    if (static_cast<int>(out.size()) > max_seq_len) {
        throw std::invalid_argument("rendered query input exceeds max length");
    }
    return out;
}

TokenSeq render_item_input(const Vocab& vocab, const TokenSeq& title,
                           int max_seq_len) {
    check_ids(vocab, title);
    TokenSeq out;
    out.reserve(title.size() + 2);
    out.push_back(Vocab::kBos);
    out.insert(out.end(), title.begin(), title.end());
    out.push_back(Vocab::kEmb);
    if (static_cast<int>(out.size()) > max_seq_len) {
        throw std::invalid_argument("rendered item input exceeds max length");
    }
    return out;
}

}  // namespace lrem
