#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace cfx {

enum class Pos { det, adj, noun, verb, prep, conj, other };

std::string_view to_string(Pos pos);
Pos pos_from_string(std::string_view s);

struct Token {
    std::string surface;  // lowercase, no whitespace, non-empty
    Pos pos = Pos::other;

    bool operator==(const Token&) const = default;
};

// Surface form -> tag, one tag per form. Lookup is total: unknown forms are
// tagged OTHER. Keys are lowercase.
struct Lexicon {
    std::map<std::string, Pos> entries;

    Pos lookup(std::string_view surface) const;

    bool operator==(const Lexicon&) const = default;
};

// The lexicon shipped with the project (bird attribute vocabulary plus
// function words). Parsed once from the embedded asset.
const Lexicon& default_lexicon();

struct Description {
    std::string image_id;
    std::string raw;
    std::vector<Token> tokens;  // always tokenize(raw, corpus lexicon)

    bool operator==(const Description&) const = default;
};

struct ImageRecord {
    std::string id;
    std::string class_id;
    std::vector<double> features;
    std::vector<Description> descriptions;
    // Ground-truth head-noun -> adjective map; present iff the corpus is
    // synthetic.
    std::optional<std::map<std::string, std::string>> oracle_attributes;

    bool operator==(const ImageRecord&) const = default;
};

struct Corpus {
    std::vector<ImageRecord> records;
    std::map<std::string, std::string> classes;  // class_id -> display name
    Lexicon lexicon;
    std::size_t feature_dim = 0;

    bool synthetic() const {
        return !records.empty() && records.front().oracle_attributes.has_value();
    }

    // Checks every corpus invariant (dimensions, referential integrity,
    // unique ids, oracle consistency) and rebuilds the id index. Throws
    // DataError on violation.
    void validate();

    const ImageRecord* find(const std::string& id) const;
    const ImageRecord& at(const std::string& id) const;  // throws DataError

    bool operator==(const Corpus& other) const {
        return records == other.records && classes == other.classes &&
               lexicon == other.lexicon && feature_dim == other.feature_dim;
    }

private:
    std::unordered_map<std::string, std::size_t> index_;
};

// Lowercases, splits on whitespace, strips leading/trailing punctuation
// (stripped characters are discarded), tags each token via the lexicon.
// Empty input yields an empty sequence.
std::vector<Token> tokenize(std::string_view raw, const Lexicon& lexicon);

// JSON-Lines corpus file. Line 1 is the header:
//   {"classes": {id: name, ...}, "feature_dim": d, "lexicon": {surface: pos, ...} | null}
// Each following line is one record:
//   {"id": str, "class_id": str, "features": [f64...], "descriptions": [str...],
//    "oracle_attributes": {noun: adj, ...} | null}
// A null header lexicon means "use the default lexicon".
Corpus load_corpus(const std::string& path);
void save_corpus(const Corpus& corpus, const std::string& path);

}  // namespace cfx
