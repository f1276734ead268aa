#include "cfx/negmine.hpp"

#include <algorithm>
#include <set>

#include "cfx/error.hpp"

namespace cfx {

AttributeInventory build_inventory(const Corpus& corpus) {
    std::map<std::string, std::set<ModifierList>> collected;
    for (const ImageRecord& rec : corpus.records) {
        for (const Description& desc : rec.descriptions) {
            for (const NounPhrase& np : chunk(desc.tokens)) {
                if (np.modifiers.empty()) continue;
                collected[np.head].insert(np.modifiers);
            }
        }
    }
    AttributeInventory inv;
    for (auto& [head, lists] : collected) {
        inv.by_head[head] = std::vector<ModifierList>(lists.begin(), lists.end());
    }
    return inv;
}

NounPhrase flip(const NounPhrase& np, const AttributeInventory& inv, Rng& rng) {
    if (np.modifiers.empty()) {
        throw UnmodifiedError("cannot flip unmodified phrase: " + np.canonical());
    }
    auto it = inv.by_head.find(np.head);
    if (it == inv.by_head.end()) {
        throw HeadUnknownError("head not in inventory: " + np.head);
    }
    std::vector<const ModifierList*> alternatives;
    for (const ModifierList& mods : it->second) {
        if (mods != np.modifiers) alternatives.push_back(&mods);
    }
    if (alternatives.empty()) {
        throw NoAlternativeError("no attested alternative for: " + np.canonical());
    }
    NounPhrase flipped;
    flipped.modifiers = *alternatives[rng.below(alternatives.size())];
    flipped.head = np.head;
    return flipped;
}

std::vector<TrainingPair> make_training_pairs(const Corpus& corpus, const AttributeInventory& inv,
                                              Rng& rng) {
    std::vector<TrainingPair> pairs;
    for (const ImageRecord& rec : corpus.records) {
        // Everything this image's own descriptions attest, for negative
        // collision filtering.
        std::set<NounPhrase> attested;
        for (const Description& desc : rec.descriptions) {
            for (const NounPhrase& np : chunk(desc.tokens)) attested.insert(np);
        }
        for (const Description& desc : rec.descriptions) {
            for (const NounPhrase& np : chunk(desc.tokens)) {
                if (np.modifiers.empty()) continue;
                pairs.push_back(TrainingPair{rec.id, np, true});
                NounPhrase negative;
                try {
                    negative = flip(np, inv, rng);
                } catch (const NoAlternativeError&) {
                    continue;
                } catch (const HeadUnknownError&) {
                    continue;
                }
                if (attested.contains(negative)) continue;
                pairs.push_back(TrainingPair{rec.id, negative, false});
            }
        }
    }
    return pairs;
}

}  // namespace cfx
