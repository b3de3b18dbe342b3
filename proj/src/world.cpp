#include "lrem/world.hpp"

#include <algorithm>
#include <set>
#include <unordered_set>

#include "lrem/util.hpp"

namespace lrem {

namespace {

const char* kSyllables[] = {"ba", "ce", "di", "fo", "gu", "ha", "ji", "ka",
                            "lo", "mu", "na", "pe", "qui", "ra", "so", "tu",
                            "ve", "wi", "xa", "yo", "zen", "dra", "kel", "mor",
                            "pol", "sta", "tri", "van"};

std::string fresh_word(Rng& rng, std::unordered_set<std::string>& used) {
    constexpr int kSyllableCount =
        static_cast<int>(sizeof(kSyllables) / sizeof(kSyllables[0]));
    for (int attempt = 0; attempt < 10000; ++attempt) {
        const int n = 2 + static_cast<int>(rng() % 2);
        std::string w;
        for (int i = 0; i < n; ++i) {
            w += kSyllables[rng() % kSyllableCount];
        }
        if (used.insert(w).second) {
            return w;
        }
    }
    throw std::runtime_error("word generator exhausted");
}

const char* kMonths[] = {"january", "february", "march",     "april",
                         "may",     "june",     "july",      "august",
                         "september", "october", "november", "december"};

int sample_weighted(const std::vector<double>& w, Rng& rng) {
    const double u = uniform01(rng);
    double cum = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
        cum += w[i];
        if (u < cum) {
            return static_cast<int>(i);
        }
    }
    return static_cast<int>(w.size()) - 1;
}

}  // namespace

const char* category_name(QueryCategory c) {
    switch (c) {
        case QueryCategory::qa: return "qa";
        case QueryCategory::alternative: return "alternative";
        case QueryCategory::negative: return "negative";
        case QueryCategory::knowledge: return "knowledge";
    }
    return "?";
}

QueryCategory category_from_name(const std::string& name) {
    if (name == "qa") return QueryCategory::qa;
    if (name == "alternative") return QueryCategory::alternative;
    if (name == "negative") return QueryCategory::negative;
    if (name == "knowledge") return QueryCategory::knowledge;
    throw std::invalid_argument("unknown query category: " + name);
}

std::vector<std::string> World::surface_tokens() const {
    std::vector<std::string> all;
    all.insert(all.end(), brands.begin(), brands.end());
    all.insert(all.end(), categories.begin(), categories.end());
    for (const auto& attrs : category_attrs) {
        all.insert(all.end(), attrs.begin(), attrs.end());
    }
    all.insert(all.end(), months.begin(), months.end());
    all.insert(all.end(), activities.begin(), activities.end());
    all.insert(all.end(), styles.begin(), styles.end());
    all.push_back(alt_marker);
    all.push_back(neg_marker);
    all.push_back(qa_marker);
    all.push_back(month_marker);
    return all;
}

World gen_world(std::uint64_t seed, const WorldSizes& sizes) {
    sizes.validate();
    World w;
    w.seed = seed;
    w.sizes = sizes;
    Rng rng(derive_seed(seed, 0x77));
    std::unordered_set<std::string> used;

    w.alt_marker = "like";
    w.neg_marker = "without";
    w.qa_marker = "for";
    w.month_marker = "during";
    used.insert({w.alt_marker, w.neg_marker, w.qa_marker, w.month_marker});

    if (sizes.months > 12) {
        throw std::invalid_argument("at most 12 months supported");
    }
    for (int m = 0; m < sizes.months; ++m) {
        w.months.emplace_back(kMonths[m]);
        used.insert(w.months.back());
    }

    for (int b = 0; b < sizes.brands; ++b) {
        w.brands.push_back(fresh_word(rng, used));
    }
    w.brand_group.assign(static_cast<std::size_t>(sizes.brands), 0);
    for (int g = 0; g < sizes.brands / sizes.peer_group; ++g) {
        std::vector<int> group;
        for (int i = 0; i < sizes.peer_group; ++i) {
            const int b = g * sizes.peer_group + i;
            group.push_back(b);
            w.brand_group[static_cast<std::size_t>(b)] = g;
        }
        w.peer_groups.push_back(std::move(group));
    }

    for (int c = 0; c < sizes.categories; ++c) {
        w.categories.push_back(fresh_word(rng, used));
    }
    for (int a = 0; a < sizes.activities; ++a) {
        w.activities.push_back(fresh_word(rng, used));
    }

    // Two frequent attribute slots per category carry most of the mass; the
    // rare slots are reserved for the activity and month relations so their
    // target sets stay small.
    const int needed_rare = 2 * (sizes.months + sizes.activities);
    const int rare_per_cat =
        std::max(4, (needed_rare + sizes.categories - 1) / sizes.categories);
    const int attrs_per_cat = 2 + rare_per_cat;
    for (int c = 0; c < sizes.categories; ++c) {
        std::vector<std::string> attrs;
        for (int s = 0; s < attrs_per_cat; ++s) {
            attrs.push_back(fresh_word(rng, used));
        }
        w.category_attrs.push_back(std::move(attrs));
    }
    w.attr_slot_weights.assign(static_cast<std::size_t>(attrs_per_cat), 0.0);
    w.attr_slot_weights[0] = 0.45;
    w.attr_slot_weights[1] = 0.35;
    for (int s = 2; s < attrs_per_cat; ++s) {
        w.attr_slot_weights[static_cast<std::size_t>(s)] =
            0.20 / rare_per_cat;
    }

    std::vector<AttrRef> rare;
    for (int c = 0; c < sizes.categories; ++c) {
        for (int s = 2; s < attrs_per_cat; ++s) {
            rare.emplace_back(c, s);
        }
    }
    std::shuffle(rare.begin(), rare.end(), rng);
    if (static_cast<int>(rare.size()) < needed_rare) {
        throw std::runtime_error("not enough rare attributes for relations");
    }
    std::size_t cursor = 0;
    w.activity_gear.resize(static_cast<std::size_t>(sizes.activities));
    for (auto& gear : w.activity_gear) {
        gear.push_back(rare[cursor++]);
        gear.push_back(rare[cursor++]);
    }
    w.month_produce.resize(static_cast<std::size_t>(sizes.months));
    for (auto& produce : w.month_produce) {
        produce.push_back(rare[cursor++]);
        produce.push_back(rare[cursor++]);
    }

    const int n_styles = 12;
    for (int s = 0; s < n_styles; ++s) {
        w.styles.push_back(fresh_word(rng, used));
    }
    for (int s = 0; s < 4; ++s) {
        w.prohibited.push_back(w.styles[static_cast<std::size_t>(s)]);
    }
    return w;
}

namespace {

ItemDoc make_item(const World& w, std::int64_t id, int brand, int cat,
                  int slot, Rng& rng) {
    ItemDoc d;
    d.id = id;
    d.brand = brand;
    d.category = cat;
    d.attr_slot = slot;
    const int n_styles = static_cast<int>(rng() % 3);  // 0..2
    for (int s = 0; s < n_styles; ++s) {
        d.style_idx.push_back(
            static_cast<int>(rng() % w.styles.size()));
    }
    d.title = {w.brands[static_cast<std::size_t>(brand)],
               w.categories[static_cast<std::size_t>(cat)],
               w.attr_token({cat, slot})};
    for (int s : d.style_idx) {
        d.title.push_back(w.styles[static_cast<std::size_t>(s)]);
    }
    for (int m = 0; m < static_cast<int>(w.month_produce.size()); ++m) {
        for (const AttrRef& a : w.month_produce[static_cast<std::size_t>(m)]) {
            if (a.first == cat && a.second == slot) {
                d.months.push_back(m);
            }
        }
    }
    return d;
}

}  // namespace

std::vector<ItemDoc> gen_corpus(const World& w, int n) {
    if (n < 1) {
        throw std::invalid_argument("corpus size must be >= 1");
    }
    Rng rng(derive_seed(w.seed, 0xc0));
    std::vector<ItemDoc> corpus;
    corpus.reserve(static_cast<std::size_t>(n));
    std::int64_t next_id = 0;

    // Coverage prefix: one item per (brand, category), then one per missing
    // attribute.
    std::set<AttrRef> attr_seen;
    for (int b = 0; b < w.sizes.brands && next_id < n; ++b) {
        for (int c = 0; c < w.sizes.categories && next_id < n; ++c) {
            const int slot = sample_weighted(w.attr_slot_weights, rng);
            corpus.push_back(make_item(w, next_id++, b, c, slot, rng));
            attr_seen.insert({c, slot});
        }
    }
    for (int c = 0; c < w.sizes.categories && next_id < n; ++c) {
        const int slots =
            static_cast<int>(w.category_attrs[static_cast<std::size_t>(c)].size());
        for (int s = 0; s < slots && next_id < n; ++s) {
            if (!attr_seen.count({c, s})) {
                const int b = static_cast<int>(rng() % w.brands.size());
                corpus.push_back(make_item(w, next_id++, b, c, s, rng));
                attr_seen.insert({c, s});
            }
        }
    }
    while (next_id < n) {
        const int b = static_cast<int>(rng() % w.brands.size());
        const int c = static_cast<int>(rng() % w.categories.size());
        const int slot = sample_weighted(w.attr_slot_weights, rng);
        corpus.push_back(make_item(w, next_id++, b, c, slot, rng));
    }
    return corpus;
}

bool item_relevant(const World& w, const QuerySpec& q, const ItemDoc& d) {
    switch (q.category) {
        case QueryCategory::alternative:
            return d.category == q.cat &&
                   w.brand_group[static_cast<std::size_t>(d.brand)] ==
                       w.brand_group[static_cast<std::size_t>(q.brand)] &&
                   d.brand != q.brand;
        case QueryCategory::negative:
            return d.category == q.cat && d.attr_slot != q.attr_slot;
        case QueryCategory::qa: {
            const auto& gear =
                w.activity_gear[static_cast<std::size_t>(q.activity)];
            for (const AttrRef& a : gear) {
                if (a.first == d.category && a.second == d.attr_slot) {
                    return true;
                }
            }
            return false;
        }
        case QueryCategory::knowledge: {
            const auto& produce =
                w.month_produce[static_cast<std::size_t>(q.month)];
            for (const AttrRef& a : produce) {
                if (a.first == d.category && a.second == d.attr_slot) {
                    return true;
                }
            }
            return false;
        }
    }
    return false;
}

Vocab build_vocab(const World& world) {
    return Vocab::build(world.surface_tokens());
}

std::vector<QuerySpec> gen_queries(const World& w,
                                   const std::vector<ItemDoc>& corpus,
                                   int n_per_category, std::uint64_t seed) {
    if (n_per_category < 1) {
        throw std::invalid_argument("queries per category must be >= 1");
    }
    Rng rng(derive_seed(seed, 0x9e));
    std::vector<QuerySpec> out;
    std::int64_t next_id = 0;
    const QueryCategory cats[] = {QueryCategory::qa, QueryCategory::alternative,
                                  QueryCategory::negative,
                                  QueryCategory::knowledge};
    for (QueryCategory qc : cats) {
        for (int i = 0; i < n_per_category; ++i) {
            QuerySpec q;
            bool ok = false;
            for (int attempt = 0; attempt < 100 && !ok; ++attempt) {
                q = QuerySpec{};
                q.id = next_id;
                q.category = qc;
                switch (qc) {
                    case QueryCategory::alternative:
                        q.brand = static_cast<int>(rng() % w.brands.size());
                        q.cat = static_cast<int>(rng() % w.categories.size());
                        q.tokens = {w.alt_marker,
                                    w.brands[static_cast<std::size_t>(q.brand)],
                                    w.categories[static_cast<std::size_t>(q.cat)]};
                        break;
                    case QueryCategory::negative:
                        q.cat = static_cast<int>(rng() % w.categories.size());
                        q.attr_slot = static_cast<int>(rng() % 2);  // frequent slots
                        q.tokens = {w.neg_marker,
                                    w.attr_token({q.cat, q.attr_slot}),
                                    w.categories[static_cast<std::size_t>(q.cat)]};
                        break;
                    case QueryCategory::qa:
                        q.activity =
                            static_cast<int>(rng() % w.activities.size());
                        q.tokens = {w.qa_marker,
                                    w.activities[static_cast<std::size_t>(
                                        q.activity)]};
                        break;
                    case QueryCategory::knowledge:
                        q.month = static_cast<int>(rng() % w.months.size());
                        q.tokens = {w.month_marker,
                                    w.months[static_cast<std::size_t>(q.month)]};
                        break;
                }
                for (const ItemDoc& d : corpus) {
                    if (item_relevant(w, q, d)) {
                        q.ground_truth.push_back(d.id);
                    }
                }
                ok = !q.ground_truth.empty();
            }
            if (!ok) {
                throw std::runtime_error(
                    "could not draw a query with non-empty ground truth");
            }
            out.push_back(std::move(q));
            ++next_id;
        }
    }
    return out;
}

}  // namespace lrem
