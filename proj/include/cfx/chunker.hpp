#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "cfx/corpus.hpp"

namespace cfx {

// The evidence unit: ADJ modifiers followed by a NOUN head.
struct NounPhrase {
    std::vector<std::string> modifiers;  // ordered, possibly empty
    std::string head;                    // non-empty

    // "yellow nape", "black pointy beak", "nape".
    std::string canonical() const;

    bool operator==(const NounPhrase&) const = default;
    bool operator<(const NounPhrase& other) const { return canonical() < other.canonical(); }
};

struct ChunkSpan {
    NounPhrase phrase;
    std::size_t begin = 0;  // token index of the first kept token
    std::size_t end = 0;    // one past the head noun
};

// Maximal-munch matches of DET? ADJ* NOUN, scanned left to right without
// overlap. The determiner is dropped from the phrase. Duplicates and order
// of appearance are preserved.
std::vector<ChunkSpan> chunk_spans(const std::vector<Token>& tokens);
std::vector<NounPhrase> chunk(const std::vector<Token>& tokens);

// True iff np equals one of chunk(tokens) (exact-NP match).
bool contains_phrase(const std::vector<Token>& tokens, const NounPhrase& np);

}  // namespace cfx
