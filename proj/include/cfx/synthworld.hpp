#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "cfx/corpus.hpp"
#include "cfx/explainer.hpp"

namespace cfx {

// Attribute-world generator parameters. Defaults: 20 classes x 50 images,
// 12 nouns with 5 adjectives each, 3 descriptions of 3 attributes per image,
// feature noise 0.05, seed 17.
struct SynthSpec {
    std::size_t n_classes = 20;
    std::size_t images_per_class = 50;
    std::vector<std::string> nouns;
    std::map<std::string, std::vector<std::string>> adjectives_per_noun;
    std::size_t descriptions_per_image = 3;
    std::size_t attributes_per_description = 3;
    double feature_noise_sigma = 0.05;
    std::uint64_t seed = 17;
    // With this probability an image gains one extra description asserting a
    // flipped attribute, breaking the exclusivity assumption on purpose.
    double violate_exclusivity = 0.0;

    static SynthSpec defaults();
    void validate() const;  // throws DataError
};

SynthSpec load_synth_spec(const std::string& path);

// Each class gets one adjective per noun; image features are the one-hot
// (noun, adjective) indicator plus Gaussian noise; descriptions are
// templated attribute sentences; the lexicon is derived from the attribute
// vocabulary. Class assignments are pairwise distinct. Deterministic per
// seed.
Corpus generate(const SynthSpec& spec);

// Ground-truth scorer: 1.0 when the phrase matches the image's
// oracle_attributes, else 0.0. Requires a synthetic corpus.
Scorer oracle_checker(const Corpus& corpus);

// True iff oracle_attributes of the record claim exactly this phrase.
bool oracle_present(const ImageRecord& record, const NounPhrase& np);

}  // namespace cfx
