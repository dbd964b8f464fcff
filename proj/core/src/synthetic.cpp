#include "capsroute/synthetic.hpp"

#include <array>

#include "capsroute/rng.hpp"

namespace capsroute {

namespace {

const std::array<const char*, 4> kLabels = {"sports", "finance", "science", "kitchen"};

const std::array<std::vector<const char*>, 4> kKeywords = {{
    {"goal",    "striker", "referee", "season",  "playoff", "coach",   "stadium", "tackle",
     "penalty", "league",  "derby",   "transfer", "winger",  "keeper",  "fixture", "halftime",
     "corner",  "offside", "squad",   "trophy",  "defender", "kickoff", "header",  "crowd",
     "whistle"},
    {"dividend", "equity",  "portfolio", "inflation", "bond",     "hedge",    "asset",   "broker",
     "futures",  "yield",   "margin",    "audit",     "ledger",   "interest", "capital", "merger",
     "treasury", "revenue", "liquidity", "invoice",   "shares",   "deficit",  "quarter", "payroll",
     "creditor"},
    {"neutron",  "enzyme",   "quasar",    "genome",   "isotope",  "photon",  "reactor",  "fossil",
     "molecule", "orbit",    "catalyst",  "membrane", "particle", "nebula",  "electron", "mutation",
     "protein",  "velocity", "telescope", "bacteria", "plasma",   "gravity", "neuron",   "crystal",
     "antibody"},
    {"skillet",  "simmer",  "garlic",  "whisk",    "oven",     "broth",   "saucepan", "roast",
     "marinade", "dough",   "cinnamon", "ladle",    "paprika",  "grill",   "butter",   "sprinkle",
     "stew",     "spatula", "vinegar",  "chopping", "teaspoon", "garnish", "batter",   "knead",
     "casserole"},
}};

const std::vector<const char*> kFiller = {
    "the",    "a",       "an",      "of",      "and",    "to",      "in",      "that",   "it",
    "was",    "for",     "on",      "with",    "as",     "at",      "by",      "this",   "had",
    "not",    "are",     "but",     "from",    "or",     "have",    "they",    "which",  "one",
    "were",   "her",     "all",     "their",   "when",   "there",   "can",     "more",   "if",
    "out",    "so",      "what",    "time",    "then",   "about",   "now",     "only",   "just",
    "very",   "also",    "after",   "before",  "over",   "under",   "again",   "still",  "every",
    "some",   "such",    "into",    "most",    "other",  "than",    "these",   "those",  "during",
    "between", "through", "while",  "where",   "being",  "because", "against", "without", "around",
    "often",  "really",  "quite",   "rather",  "almost", "enough",  "perhaps", "indeed", "today",
    "yesterday", "morning", "evening", "week",  "month",  "year",    "people",  "thing",  "place",
    "work",   "part",    "group",   "case",    "fact",   "point",   "hand",    "eye",    "word",
    "side",   "kind",    "head",    "house",   "story",  "report",  "early",   "late",   "long",
    "short",  "small",   "large",   "good",    "bad",    "new",     "old",     "high",   "low",
    "next",   "last",    "first",   "second",  "local",  "public",  "whole",   "clear",  "major",
};

} // namespace

SyntheticCorpus make_keyword_corpus(std::uint64_t seed, std::size_t train_per_class,
                                    std::size_t test_per_class, std::size_t classes,
                                    double keyword_rate) {
    if (classes < 2 || classes > kLabels.size()) {
        throw ConfigError("synthetic corpus supports 2 to " + std::to_string(kLabels.size()) + " classes");
    }
    if (keyword_rate < 0.0 || keyword_rate > 1.0) {
        throw ConfigError("synthetic corpus keyword_rate must lie in [0, 1]");
    }

    Rng rng(seed);
    auto make_doc = [&](std::size_t cls) {
        const auto& pool = kKeywords[cls];
        const std::size_t len = 8 + static_cast<std::size_t>(rng.below(7)); // 8..14 tokens
        std::string text;
        for (std::size_t t = 0; t < len; ++t) {
            const char* word = rng.uniform() < keyword_rate
                                   ? pool[rng.below(pool.size())]
                                   : kFiller[rng.below(kFiller.size())];
            if (!text.empty()) text.push_back(' ');
            text += word;
        }
        return RawExample{kLabels[cls], text};
    };

    SyntheticCorpus corpus;
    for (std::size_t cls = 0; cls < classes; ++cls) {
        for (std::size_t i = 0; i < train_per_class; ++i) corpus.train.push_back(make_doc(cls));
    }
    for (std::size_t cls = 0; cls < classes; ++cls) {
        for (std::size_t i = 0; i < test_per_class; ++i) corpus.test.push_back(make_doc(cls));
    }

    // interleave classes so truncated prefixes stay roughly balanced
    Rng shuf(seed ^ 0xC0FFEEull);
    shuf.shuffle(corpus.train);
    shuf.shuffle(corpus.test);
    return corpus;
}

} // namespace capsroute
