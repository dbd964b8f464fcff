#pragma once

#include <cstdint>
#include <vector>

#include "capsroute/text.hpp"

namespace capsroute {

struct SyntheticCorpus {
    std::vector<RawExample> train;
    std::vector<RawExample> test;
};

/// Balanced keyword corpus for desk-scale runs: up to four themed classes,
/// each with its own keyword pool, mixed with shared filler words. Both
/// splits are class-balanced and fully determined by the seed. Full vocab
/// stays under 300 tokens.
SyntheticCorpus make_keyword_corpus(std::uint64_t seed, std::size_t train_per_class = 500,
                                    std::size_t test_per_class = 125, std::size_t classes = 4,
                                    double keyword_rate = 0.8);

} // namespace capsroute
