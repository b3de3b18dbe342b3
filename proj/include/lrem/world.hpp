#pragma once

// Synthetic e-commerce world: latent relation tables that queries can only
// reach through bridging keywords, a corpus generator that realizes them, and
// the exact relevance oracle shared by data construction and evaluation.
//
// Relations:
//   alternative  brand peer groups; a query names one brand, relevant items
//                come from its peers in the same category
//   negative     per-category attribute sets; "without attr cat" matches the
//                category items that lack the attribute
//   qa           activity -> gear attributes; the activity word never appears
//                in any title
//   knowledge    month -> produce attributes; months never appear in titles

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "lrem/textcodec.hpp"

namespace lrem {

struct WorldSizes {
    int brands = 20;
    int peer_group = 4;
    int categories = 10;
    int months = 12;
    int activities = 8;

    void validate() const {
        if (brands < 2 || peer_group < 2 || categories < 1 || months < 1 ||
            activities < 1) {
            throw std::invalid_argument("world sizes must be positive");
        }
        if (brands % peer_group != 0) {
            throw std::invalid_argument(
                "brand count must be divisible by peer group size");
        }
    }
};

/// (category index, attribute slot) pair; slots >= 2 are the rare attributes
/// wired into activity/month relations.
using AttrRef = std::pair<int, int>;

struct World {
    std::uint64_t seed = 0;
    WorldSizes sizes;

    std::vector<std::string> brands;
    std::vector<std::vector<int>> peer_groups;
    std::vector<int> brand_group;  // brand index -> peer group index

    std::vector<std::string> categories;
    std::vector<std::vector<std::string>> category_attrs;  // per category
    std::vector<double> attr_slot_weights;  // sampling weights per slot

    std::vector<std::string> months;
    std::vector<std::vector<AttrRef>> month_produce;

    std::vector<std::string> activities;
    std::vector<std::vector<AttrRef>> activity_gear;

    std::vector<std::string> styles;      // non-functional title filler
    std::vector<std::string> prohibited;  // never allowed in emitted CoTs

    std::string alt_marker, neg_marker, qa_marker, month_marker;

    const std::string& attr_token(const AttrRef& a) const {
        return category_attrs[static_cast<std::size_t>(a.first)]
                             [static_cast<std::size_t>(a.second)];
    }
    std::vector<std::string> surface_tokens() const;
};

struct ItemDoc {
    std::int64_t id = 0;
    std::vector<std::string> title;
    int brand = 0;
    int category = 0;
    int attr_slot = 0;
    std::vector<int> style_idx;
    std::vector<int> months;  // derived from the attribute, produce only
};

enum class QueryCategory { qa, alternative, negative, knowledge };

const char* category_name(QueryCategory c);
QueryCategory category_from_name(const std::string& name);

struct QuerySpec {
    std::int64_t id = 0;
    std::vector<std::string> tokens;
    QueryCategory category = QueryCategory::qa;
    int brand = -1;
    int cat = -1;
    int attr_slot = -1;
    int activity = -1;
    int month = -1;
    std::vector<std::int64_t> ground_truth;
};

World gen_world(std::uint64_t seed, const WorldSizes& sizes = {});

/// Deterministic for a given world; a coverage prefix guarantees every
/// (brand, category) cell and every attribute is realized when n permits.
std::vector<ItemDoc> gen_corpus(const World& world, int n);

std::vector<QuerySpec> gen_queries(const World& world,
                                   const std::vector<ItemDoc>& corpus,
                                   int n_per_category, std::uint64_t seed);

/// Exact relation-table relevance; no corpus scan, no model.
bool item_relevant(const World& world, const QuerySpec& query,
                   const ItemDoc& item);

/// Vocabulary over the world's surface tokens plus the control tokens.
Vocab build_vocab(const World& world);

}  // namespace lrem
