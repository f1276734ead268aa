#include "cfx/chunker.hpp"

namespace cfx {

std::string NounPhrase::canonical() const {
    std::string out;
    for (const std::string& m : modifiers) {
        out += m;
        out += ' ';
    }
    out += head;
    return out;
}

std::vector<ChunkSpan> chunk_spans(const std::vector<Token>& tokens) {
    std::vector<ChunkSpan> chunks;
    const std::size_t n = tokens.size();
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        if (j < n && tokens[j].pos == Pos::det) ++j;
        const std::size_t first_kept = j;
        while (j < n && tokens[j].pos == Pos::adj) ++j;
        if (j < n && tokens[j].pos == Pos::noun) {
            ChunkSpan span;
            span.begin = first_kept;
            span.end = j + 1;
            for (std::size_t m = first_kept; m < j; ++m) {
                span.phrase.modifiers.push_back(tokens[m].surface);
            }
            span.phrase.head = tokens[j].surface;
            chunks.push_back(std::move(span));
            i = j + 1;
        } else {
            ++i;
        }
    }
    return chunks;
}

std::vector<NounPhrase> chunk(const std::vector<Token>& tokens) {
    std::vector<NounPhrase> phrases;
    for (ChunkSpan& span : chunk_spans(tokens)) {
        phrases.push_back(std::move(span.phrase));
    }
    return phrases;
}

bool contains_phrase(const std::vector<Token>& tokens, const NounPhrase& np) {
    for (const NounPhrase& candidate : chunk(tokens)) {
        if (candidate == np) return true;
    }
    return false;
}

}  // namespace cfx
