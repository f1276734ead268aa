#include "cfx/synthworld.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

#include "cfx/error.hpp"
#include "cfx/rng.hpp"
#include "json.hpp"

namespace cfx {

using nlohmann::json;

SynthSpec SynthSpec::defaults() {
    SynthSpec spec;
    spec.nouns = {"back", "beak", "belly", "breast", "crown", "eye",
                  "head", "leg",  "nape",  "tail",   "throat", "wing"};
    const std::vector<std::vector<std::string>> palettes = {
        {"black", "brown", "grey", "red", "white"},
        {"black", "blue", "grey", "red", "yellow"},
        {"blue", "brown", "green", "white", "yellow"},
        {"black", "green", "grey", "red", "white"},
        {"blue", "brown", "purple", "red", "yellow"},
        {"black", "blue", "brown", "white", "yellow"},
    };
    for (std::size_t i = 0; i < spec.nouns.size(); ++i) {
        spec.adjectives_per_noun[spec.nouns[i]] = palettes[i % palettes.size()];
    }
    return spec;
}

void SynthSpec::validate() const {
    if (n_classes < 2) throw DataError("synth spec: n_classes must be >= 2");
    if (images_per_class == 0) throw DataError("synth spec: images_per_class must be >= 1");
    if (nouns.empty()) throw DataError("synth spec: at least one noun required");
    if (descriptions_per_image == 0) {
        throw DataError("synth spec: descriptions_per_image must be >= 1");
    }
    if (attributes_per_description == 0 || attributes_per_description > nouns.size()) {
        throw DataError("synth spec: attributes_per_description must be in [1, #nouns]");
    }
    if (feature_noise_sigma < 0.0) throw DataError("synth spec: feature_noise_sigma must be >= 0");
    if (violate_exclusivity < 0.0 || violate_exclusivity > 1.0) {
        throw DataError("synth spec: violate_exclusivity must be in [0, 1]");
    }
    for (const std::string& noun : nouns) {
        auto it = adjectives_per_noun.find(noun);
        if (it == adjectives_per_noun.end() || it->second.size() < 2) {
            throw DataError("synth spec: noun \"" + noun + "\" needs at least two adjectives");
        }
    }
}

SynthSpec load_synth_spec(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open synth spec: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ParseError(std::string("synth spec: ") + e.what());
    }
    SynthSpec spec = SynthSpec::defaults();
    try {
        if (j.contains("n_classes")) spec.n_classes = j.at("n_classes").get<std::size_t>();
        if (j.contains("images_per_class")) {
            spec.images_per_class = j.at("images_per_class").get<std::size_t>();
        }
        if (j.contains("nouns")) {
            spec.nouns = j.at("nouns").get<std::vector<std::string>>();
            spec.adjectives_per_noun.clear();
        }
        if (j.contains("adjectives_per_noun")) {
            spec.adjectives_per_noun.clear();
            for (auto it = j.at("adjectives_per_noun").begin();
                 it != j.at("adjectives_per_noun").end(); ++it) {
                spec.adjectives_per_noun[it.key()] = it.value().get<std::vector<std::string>>();
            }
        }
        if (j.contains("descriptions_per_image")) {
            spec.descriptions_per_image = j.at("descriptions_per_image").get<std::size_t>();
        }
        if (j.contains("attributes_per_description")) {
            spec.attributes_per_description =
                j.at("attributes_per_description").get<std::size_t>();
        }
        if (j.contains("feature_noise_sigma")) {
            spec.feature_noise_sigma = j.at("feature_noise_sigma").get<double>();
        }
        if (j.contains("seed")) spec.seed = j.at("seed").get<std::uint64_t>();
        if (j.contains("violate_exclusivity")) {
            spec.violate_exclusivity = j.at("violate_exclusivity").get<double>();
        }
    } catch (const json::exception& e) {
        throw ParseError(std::string("synth spec: ") + e.what());
    }
    spec.validate();
    return spec;
}

namespace {

std::string zero_pad(std::size_t value, std::size_t width) {
    std::string digits = std::to_string(value);
    while (digits.size() < width) digits.insert(digits.begin(), '0');
    return digits;
}

}  // namespace

Corpus generate(const SynthSpec& spec) {
    spec.validate();

    // Sorted attribute layout: nouns alphabetical, adjectives alphabetical
    // within each noun block.
    std::vector<std::string> nouns = spec.nouns;
    std::sort(nouns.begin(), nouns.end());
    std::map<std::string, std::vector<std::string>> adjectives;
    std::map<std::string, std::size_t> block_offset;
    std::size_t dim = 0;
    for (const std::string& noun : nouns) {
        std::vector<std::string> adjs = spec.adjectives_per_noun.at(noun);
        std::sort(adjs.begin(), adjs.end());
        block_offset[noun] = dim;
        dim += adjs.size();
        adjectives[noun] = std::move(adjs);
    }

    Rng rng(spec.seed);

    // One adjective per noun per class; assignments pairwise distinct so no
    // two classes are indistinguishable.
    std::vector<std::vector<std::size_t>> assignments;
    for (std::size_t c = 0; c < spec.n_classes; ++c) {
        std::vector<std::size_t> assignment(nouns.size());
        bool distinct = false;
        for (std::size_t attempt = 0; attempt < 10000 && !distinct; ++attempt) {
            for (std::size_t n = 0; n < nouns.size(); ++n) {
                assignment[n] = rng.below(adjectives.at(nouns[n]).size());
            }
            distinct = std::none_of(assignments.begin(), assignments.end(),
                                    [&](const auto& other) { return other == assignment; });
        }
        if (!distinct) {
            throw DataError("synth spec: attribute space too small for distinct classes");
        }
        assignments.push_back(assignment);
    }

    Corpus corpus;
    corpus.feature_dim = dim;

    const std::size_t class_width = std::max<std::size_t>(2, std::to_string(spec.n_classes - 1).size());
    const std::size_t total_images = spec.n_classes * spec.images_per_class;
    const std::size_t image_width = std::max<std::size_t>(4, std::to_string(total_images - 1).size());

    std::vector<std::string> class_ids;
    for (std::size_t c = 0; c < spec.n_classes; ++c) {
        const std::string id = "c" + zero_pad(c, class_width);
        class_ids.push_back(id);
        corpus.classes[id] = "Species " + zero_pad(c, class_width);
    }

    // Lexicon: attribute vocabulary plus the template's function words.
    corpus.lexicon.entries = {{"this", Pos::det}, {"a", Pos::det},    {"an", Pos::det},
                              {"bird", Pos::noun}, {"has", Pos::verb}, {"and", Pos::conj}};
    for (const std::string& noun : nouns) {
        corpus.lexicon.entries[noun] = Pos::noun;
        for (const std::string& adj : adjectives.at(noun)) {
            corpus.lexicon.entries[adj] = Pos::adj;
        }
    }

    std::size_t image_counter = 0;
    std::vector<std::size_t> noun_order(nouns.size());
    for (std::size_t c = 0; c < spec.n_classes; ++c) {
        std::map<std::string, std::string> class_attrs;
        for (std::size_t n = 0; n < nouns.size(); ++n) {
            class_attrs[nouns[n]] = adjectives.at(nouns[n])[assignments[c][n]];
        }

        for (std::size_t i = 0; i < spec.images_per_class; ++i) {
            ImageRecord rec;
            rec.id = "img" + zero_pad(image_counter++, image_width);
            rec.class_id = class_ids[c];
            rec.oracle_attributes = class_attrs;

            rec.features.assign(dim, 0.0);
            for (std::size_t n = 0; n < nouns.size(); ++n) {
                rec.features[block_offset.at(nouns[n]) + assignments[c][n]] = 1.0;
            }
            for (double& f : rec.features) f += rng.normal(0.0, spec.feature_noise_sigma);

            for (std::size_t s = 0; s < spec.descriptions_per_image; ++s) {
                std::iota(noun_order.begin(), noun_order.end(), 0);
                rng.shuffle(noun_order);
                std::string sentence = "this bird has";
                for (std::size_t a = 0; a < spec.attributes_per_description; ++a) {
                    const std::string& noun = nouns[noun_order[a]];
                    if (a > 0) sentence += " and";
                    sentence += " a " + class_attrs.at(noun) + " " + noun;
                }
                sentence += ".";
                Description desc;
                desc.image_id = rec.id;
                desc.raw = sentence;
                desc.tokens = tokenize(desc.raw, corpus.lexicon);
                rec.descriptions.push_back(std::move(desc));
            }

            if (rng.uniform01() < spec.violate_exclusivity) {
                const std::size_t n = rng.below(nouns.size());
                const std::string& noun = nouns[n];
                const std::vector<std::string>& adjs = adjectives.at(noun);
                std::vector<std::size_t> others;
                for (std::size_t a = 0; a < adjs.size(); ++a) {
                    if (a != assignments[c][n]) others.push_back(a);
                }
                const std::string& flipped = adjs[others[rng.below(others.size())]];
                Description desc;
                desc.image_id = rec.id;
                desc.raw = "this bird has a " + flipped + " " + noun + ".";
                desc.tokens = tokenize(desc.raw, corpus.lexicon);
                rec.descriptions.push_back(std::move(desc));
            }

            corpus.records.push_back(std::move(rec));
        }
    }

    corpus.validate();
    return corpus;
}

bool oracle_present(const ImageRecord& record, const NounPhrase& np) {
    if (!record.oracle_attributes.has_value()) {
        throw DataError("oracle_present requires a synthetic record");
    }
    auto it = record.oracle_attributes->find(np.head);
    if (it == record.oracle_attributes->end()) return false;
    std::string joined;
    for (std::size_t i = 0; i < np.modifiers.size(); ++i) {
        if (i > 0) joined += ' ';
        joined += np.modifiers[i];
    }
    return it->second == joined;
}

Scorer oracle_checker(const Corpus& corpus) {
    if (!corpus.synthetic()) {
        throw DataError("oracle_checker requires a synthetic corpus");
    }
    // Snapshot the oracle maps so the scorer owns its data.
    auto oracle = std::make_shared<std::map<std::string, std::map<std::string, std::string>>>();
    for (const ImageRecord& rec : corpus.records) {
        (*oracle)[rec.id] = *rec.oracle_attributes;
    }
    return [oracle](const ImageRecord& image, const NounPhrase& np) {
        auto it = oracle->find(image.id);
        if (it == oracle->end()) throw DataError("oracle_checker: unknown image id " + image.id);
        auto attr = it->second.find(np.head);
        if (attr == it->second.end()) return 0.0;
        std::string joined;
        for (std::size_t i = 0; i < np.modifiers.size(); ++i) {
            if (i > 0) joined += ' ';
            joined += np.modifiers[i];
        }
        return attr->second == joined ? 1.0 : 0.0;
    };
}

}  // namespace cfx
