#pragma once

#include <map>
#include <string>
#include <vector>

#include "cfx/chunker.hpp"
#include "cfx/corpus.hpp"
#include "cfx/rng.hpp"

namespace cfx {

using ModifierList = std::vector<std::string>;

// head noun -> every distinct modifier sequence attested with it anywhere in
// the corpus descriptions. Heads iterate sorted; modifier lists are kept
// sorted and unique. Only modified phrases are recorded.
struct AttributeInventory {
    std::map<std::string, std::vector<ModifierList>> by_head;

    bool operator==(const AttributeInventory&) const = default;
};

AttributeInventory build_inventory(const Corpus& corpus);

// Same head, modifier list drawn uniformly from the attested alternatives
// excluding np's own. Throws UnmodifiedError / HeadUnknownError /
// NoAlternativeError.
NounPhrase flip(const NounPhrase& np, const AttributeInventory& inv, Rng& rng);

struct TrainingPair {
    std::string image_id;
    NounPhrase phrase;
    bool positive = false;

    bool operator==(const TrainingPair&) const = default;
};

// One positive pair per modified phrase occurrence; a flipped negative when
// the flip succeeds and does not collide with another phrase attested in the
// same image's descriptions.
std::vector<TrainingPair> make_training_pairs(const Corpus& corpus, const AttributeInventory& inv,
                                              Rng& rng);

}  // namespace cfx
