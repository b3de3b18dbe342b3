#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace lrem {

using TokenId = std::int32_t;
using TokenSeq = std::vector<TokenId>;

/// Word-level vocabulary. Ids 0..4 are the reserved control tokens, surface
/// tokens follow in lexicographic order. Immutable after construction.
class Vocab {
public:
    static constexpr TokenId kPad = 0;
    static constexpr TokenId kBos = 1;
    static constexpr TokenId kThinkOpen = 2;
    static constexpr TokenId kThinkClose = 3;
    static constexpr TokenId kEmb = 4;
    static constexpr int kNumSpecials = 5;

    static const std::array<const char*, kNumSpecials>& special_strings();

    /// Builds from surface tokens (sorted internally). Throws on duplicates
    /// or on a surface token equal to a special-token string.
    static Vocab build(std::vector<std::string> surface_tokens);

    int size() const { return static_cast<int>(tokens_.size()); }
    const std::string& token(TokenId id) const;
    TokenId id_of(const std::string& tok) const;  // throws on unknown token
    bool contains(const std::string& tok) const;
    static bool is_special(TokenId id) { return id >= 0 && id < kNumSpecials; }

    void save(const std::string& path) const;
    static Vocab load(const std::string& path);

private:
    Vocab() = default;
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, TokenId> index_;
};

/// Splits on whitespace and maps each word to its id. Unknown words throw.
TokenSeq encode(const Vocab& vocab, const std::string& text);
std::string decode(const Vocab& vocab, const TokenSeq& seq);

/// Query-side model input. With a reasoning span:
///   [BOS] query <think> cot </think> <emb>
/// Without one (generation prompt): [BOS] query <think>
TokenSeq render_query_input(const Vocab& vocab, const TokenSeq& query,
                            const std::optional<TokenSeq>& cot,
                            int max_seq_len);

/// Item-side model input: [BOS] title <emb>
TokenSeq render_item_input(const Vocab& vocab, const TokenSeq& title,
                           int max_seq_len);

}  // namespace lrem
