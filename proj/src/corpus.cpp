#include "cfx/corpus.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "cfx/error.hpp"
#include "json.hpp"

namespace cfx {

using nlohmann::json;

extern const char* kDefaultLexiconJson;  // generated from assets/lexicon.json

std::string_view to_string(Pos pos) {
    switch (pos) {
        case Pos::det: return "DET";
        case Pos::adj: return "ADJ";
        case Pos::noun: return "NOUN";
        case Pos::verb: return "VERB";
        case Pos::prep: return "PREP";
        case Pos::conj: return "CONJ";
        case Pos::other: return "OTHER";
    }
    return "OTHER";
}

Pos pos_from_string(std::string_view s) {
    if (s == "DET") return Pos::det;
    if (s == "ADJ") return Pos::adj;
    if (s == "NOUN") return Pos::noun;
    if (s == "VERB") return Pos::verb;
    if (s == "PREP") return Pos::prep;
    if (s == "CONJ") return Pos::conj;
    if (s == "OTHER") return Pos::other;
    throw DataError("unknown pos tag: " + std::string(s));
}

Pos Lexicon::lookup(std::string_view surface) const {
    auto it = entries.find(std::string(surface));
    return it == entries.end() ? Pos::other : it->second;
}

namespace {

std::string to_lower(std::string_view s) {
    std::string out(s);
    for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

bool is_punct(char c) {
    return std::ispunct(static_cast<unsigned char>(c)) != 0;
}

Lexicon lexicon_from_json(const json& j) {
    Lexicon lex;
    for (auto it = j.begin(); it != j.end(); ++it) {
        lex.entries[to_lower(it.key())] = pos_from_string(it.value().get<std::string>());
    }
    return lex;
}

json lexicon_to_json(const Lexicon& lex) {
    json j = json::object();
    for (const auto& [surface, pos] : lex.entries) j[surface] = to_string(pos);
    return j;
}

}  // namespace

const Lexicon& default_lexicon() {
    static const Lexicon lex = lexicon_from_json(json::parse(kDefaultLexiconJson));
    return lex;
}

std::vector<Token> tokenize(std::string_view raw, const Lexicon& lexicon) {
    std::vector<Token> tokens;
    const std::string lowered = to_lower(raw);
    std::size_t i = 0;
    const std::size_t n = lowered.size();
    while (i < n) {
        while (i < n && std::isspace(static_cast<unsigned char>(lowered[i]))) ++i;
        std::size_t j = i;
        while (j < n && !std::isspace(static_cast<unsigned char>(lowered[j]))) ++j;
        if (j > i) {
            std::size_t b = i;
            std::size_t e = j;
            while (b < e && is_punct(lowered[b])) ++b;
            while (e > b && is_punct(lowered[e - 1])) --e;
            if (e > b) {
                std::string surface = lowered.substr(b, e - b);
                Pos pos = lexicon.lookup(surface);
                tokens.push_back(Token{std::move(surface), pos});
            }
        }
        i = j;
    }
    return tokens;
}

void Corpus::validate() {
    index_.clear();
    std::unordered_set<std::string> seen;
    const bool synth = !records.empty() && records.front().oracle_attributes.has_value();
    for (std::size_t r = 0; r < records.size(); ++r) {
        const ImageRecord& rec = records[r];
        if (!seen.insert(rec.id).second) {
            throw DataError("duplicate record id: " + rec.id);
        }
        if (rec.features.size() != feature_dim) {
            throw DataError("feature dimension mismatch for record " + rec.id + ": expected " +
                            std::to_string(feature_dim) + ", got " +
                            std::to_string(rec.features.size()));
        }
        for (double f : rec.features) {
            if (!std::isfinite(f)) throw DataError("non-finite feature in record " + rec.id);
        }
        if (!classes.contains(rec.class_id)) {
            throw DataError("record " + rec.id + " references unknown class " + rec.class_id);
        }
        if (rec.descriptions.empty()) {
            throw DataError("record " + rec.id + " has no descriptions");
        }
        if (rec.oracle_attributes.has_value() != synth) {
            throw DataError("record " + rec.id +
                            " is inconsistent about oracle_attributes (corpus must be all "
                            "synthetic or all natural)");
        }
        index_.emplace(rec.id, r);
    }
}

const ImageRecord* Corpus::find(const std::string& id) const {
    auto it = index_.find(id);
    return it == index_.end() ? nullptr : &records[it->second];
}

const ImageRecord& Corpus::at(const std::string& id) const {
    const ImageRecord* rec = find(id);
    if (rec == nullptr) throw DataError("unknown image id: " + id);
    return *rec;
}

Corpus load_corpus(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open corpus file: " + path);

    Corpus corpus;
    std::string line;
    std::size_t line_no = 0;

    auto parse_line = [&](const std::string& text) -> json {
        try {
            return json::parse(text);
        } catch (const json::exception& e) {
            throw ParseError("line " + std::to_string(line_no) + ": " + e.what());
        }
    };

    if (!std::getline(in, line)) throw ParseError("line 1: missing corpus header");
    ++line_no;
    {
        const json header = parse_line(line);
        try {
            for (auto it = header.at("classes").begin(); it != header.at("classes").end(); ++it) {
                corpus.classes[it.key()] = it.value().get<std::string>();
            }
            corpus.feature_dim = header.at("feature_dim").get<std::size_t>();
            const json& lex = header.at("lexicon");
            corpus.lexicon = lex.is_null() ? default_lexicon() : lexicon_from_json(lex);
        } catch (const json::exception& e) {
            throw ParseError("line 1: " + std::string(e.what()));
        }
    }

    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const json j = parse_line(line);
        ImageRecord rec;
        try {
            rec.id = j.at("id").get<std::string>();
            rec.class_id = j.at("class_id").get<std::string>();
            rec.features = j.at("features").get<std::vector<double>>();
            for (const auto& raw : j.at("descriptions")) {
                Description d;
                d.image_id = rec.id;
                d.raw = raw.get<std::string>();
                d.tokens = tokenize(d.raw, corpus.lexicon);
                rec.descriptions.push_back(std::move(d));
            }
            if (j.contains("oracle_attributes") && !j.at("oracle_attributes").is_null()) {
                std::map<std::string, std::string> attrs;
                for (auto it = j.at("oracle_attributes").begin();
                     it != j.at("oracle_attributes").end(); ++it) {
                    attrs[it.key()] = it.value().get<std::string>();
                }
                rec.oracle_attributes = std::move(attrs);
            }
        } catch (const json::exception& e) {
            throw ParseError("line " + std::to_string(line_no) + ": " + e.what());
        }
        corpus.records.push_back(std::move(rec));
    }

    corpus.validate();
    return corpus;
}

void save_corpus(const Corpus& corpus, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write corpus file: " + path);

    json header;
    header["classes"] = json::object();
    for (const auto& [id, name] : corpus.classes) header["classes"][id] = name;
    header["feature_dim"] = corpus.feature_dim;
    header["lexicon"] = lexicon_to_json(corpus.lexicon);
    out << header.dump() << '\n';

    for (const ImageRecord& rec : corpus.records) {
        json j;
        j["id"] = rec.id;
        j["class_id"] = rec.class_id;
        j["features"] = rec.features;
        json descs = json::array();
        for (const Description& d : rec.descriptions) descs.push_back(d.raw);
        j["descriptions"] = std::move(descs);
        if (rec.oracle_attributes.has_value()) {
            json attrs = json::object();
            for (const auto& [noun, adj] : *rec.oracle_attributes) attrs[noun] = adj;
            j["oracle_attributes"] = std::move(attrs);
        } else {
            j["oracle_attributes"] = nullptr;
        }
        out << j.dump() << '\n';
    }
    if (!out) throw IoError("failed writing corpus file: " + path);
}

}  // namespace cfx
