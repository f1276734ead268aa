#include "cfx/explainer.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <limits>

#include "cfx/error.hpp"
#include "json.hpp"

namespace cfx {

using nlohmann::json;

std::string_view to_string(CheckerKind kind) {
    switch (kind) {
        case CheckerKind::classifier: return "classifier";
        case CheckerKind::phrase_critic: return "phrase-critic";
        case CheckerKind::random_baseline: return "random-baseline";
        case CheckerKind::oracle: return "oracle";
    }
    return "oracle";
}

CheckerKind checker_kind_from_string(std::string_view s) {
    if (s == "classifier") return CheckerKind::classifier;
    if (s == "phrase-critic" || s == "critic") return CheckerKind::phrase_critic;
    if (s == "random-baseline" || s == "baseline") return CheckerKind::random_baseline;
    if (s == "oracle") return CheckerKind::oracle;
    throw DataError("unknown checker kind: " + std::string(s));
}

Scorer make_checker_scorer(const CheckerModel& model) {
    const CheckerModel* m = &model;
    return [m](const ImageRecord& image, const NounPhrase& np) {
        return fuse_score(*m, image.features, np);
    };
}

Scorer make_critic_scorer(const CriticModel& model, const GroundingBackend& backend) {
    const CriticModel* m = &model;
    const GroundingBackend* b = &backend;
    return [m, b](const ImageRecord& image, const NounPhrase& np) {
        return critic_score(*m, *b, image, np);
    };
}

ExternalExplanations load_external_explanations(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open explanations file: " + path);
    ExternalExplanations out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            const json j = json::parse(line);
            out.by_class[j.at("class_id").get<std::string>()].push_back(
                j.at("sentence").get<std::string>());
        } catch (const json::exception& e) {
            throw ParseError("explanations line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

namespace {

double euclidean_sq(const std::vector<double>& a, const std::vector<double>& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double diff = a[i] - b[i];
        acc += diff * diff;
    }
    return acc;
}

double cosine_distance(const std::vector<double>& a, const std::vector<double>& b) {
    const double na = norm2(a.data(), a.size());
    const double nb = norm2(b.data(), b.size());
    if (na <= kNormEps || nb <= kNormEps) return 1.0;
    return 1.0 - dot(a.data(), b.data(), a.size()) / (na * nb);
}

bool is_vowel(char c) {
    switch (std::tolower(static_cast<unsigned char>(c))) {
        case 'a':
        case 'e':
        case 'i':
        case 'o':
        case 'u':
            return true;
        default:
            return false;
    }
}

}  // namespace

std::string nearest_counterclass(const Corpus& corpus, const std::string& image_id,
                                 DistanceMetric metric) {
    if (corpus.classes.size() < 2) {
        throw DataError("nearest_counterclass requires a corpus with at least two classes");
    }
    const ImageRecord& query = corpus.at(image_id);

    const ImageRecord* best = nullptr;
    double best_dist = std::numeric_limits<double>::infinity();
    for (const ImageRecord& rec : corpus.records) {
        if (rec.class_id == query.class_id) continue;
        const double dist = metric == DistanceMetric::euclidean
                                ? euclidean_sq(query.features, rec.features)
                                : cosine_distance(query.features, rec.features);
        if (dist < best_dist || (dist == best_dist && best != nullptr && rec.id < best->id)) {
            best = &rec;
            best_dist = dist;
        }
    }
    if (best == nullptr) {
        throw DataError("no record with a different class than " + query.class_id);
    }
    return best->class_id;
}

CandidatePool candidate_evidence(const Corpus& corpus, const std::string& counter_class,
                                 const ExternalExplanations* external, std::size_t pool_cap) {
    if (!corpus.classes.contains(counter_class)) {
        throw DataError("unknown counter-class: " + counter_class);
    }

    CandidatePool pool;
    pool.counter_class = counter_class;

    std::map<NounPhrase, std::size_t> counts;
    auto add_sentence_chunks = [&](const std::vector<Token>& tokens) {
        for (NounPhrase& np : chunk(tokens)) {
            if (np.modifiers.empty()) continue;
            ++counts[std::move(np)];
        }
    };

    if (external != nullptr) {
        pool.source = CandidatePool::Source::external_explanations;
        auto it = external->by_class.find(counter_class);
        if (it != external->by_class.end()) {
            for (const std::string& sentence : it->second) {
                add_sentence_chunks(tokenize(sentence, corpus.lexicon));
            }
        }
    } else {
        pool.source = CandidatePool::Source::ground_truth_descriptions;
        for (const ImageRecord& rec : corpus.records) {
            if (rec.class_id != counter_class) continue;
            for (const Description& desc : rec.descriptions) add_sentence_chunks(desc.tokens);
        }
    }

    if (counts.empty()) {
        throw DataError("empty candidate pool for counter-class " + counter_class);
    }

    pool.candidates.assign(counts.begin(), counts.end());
    std::sort(pool.candidates.begin(), pool.candidates.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first.canonical() < b.first.canonical();
    });
    if (pool.candidates.size() > pool_cap) pool.candidates.resize(pool_cap);
    return pool;
}

Selection select_evidence(const CandidatePool& pool, const Scorer* scorer,
                          const ImageRecord& image, Rng* rng) {
    if ((scorer != nullptr) == (rng != nullptr)) {
        throw DataError("select_evidence: exactly one of scorer/rng must be supplied");
    }
    if (pool.candidates.empty()) {
        throw DataError("select_evidence: empty candidate pool");
    }

    if (rng != nullptr) {
        const std::size_t pick = rng->below(pool.candidates.size());
        return Selection{pool.candidates[pick].first, -1.0};
    }

    const NounPhrase* best = nullptr;
    double best_score = std::numeric_limits<double>::infinity();
    for (const auto& [np, count] : pool.candidates) {
        const double score = (*scorer)(image, np);
        if (best == nullptr || score < best_score ||
            (score == best_score && np.canonical() < best->canonical())) {
            best = &np;
            best_score = score;
        }
    }
    return Selection{*best, best_score};
}

std::string negate(const NounPhrase& np) {
    const std::string canonical = np.canonical();
    const std::string& head = np.head;
    const bool plural = head.size() >= 2 && head.back() == 's' && head[head.size() - 2] != 's';

    std::string out = "does not have ";
    if (!plural) {
        out += is_vowel(canonical.front()) ? "an " : "a ";
    }
    out += canonical;
    return out;
}

std::string compose(const std::string& counter_class_name, const std::string& negated) {
    std::string out = "This is not a";
    if (!counter_class_name.empty() && is_vowel(counter_class_name.front())) out += 'n';
    out += ' ';
    out += counter_class_name;
    out += " because it ";
    out += negated;
    out += '.';
    return out;
}

CounterfactualExplanation explain(const Corpus& corpus, const std::string& image_id,
                                  const ExplainOptions& options) {
    const ImageRecord& image = corpus.at(image_id);

    std::string counter_class;
    if (options.counter_class.has_value()) {
        counter_class = *options.counter_class;
        if (!corpus.classes.contains(counter_class)) {
            throw DataError("unknown counter-class: " + counter_class);
        }
    } else {
        counter_class = nearest_counterclass(corpus, image_id, options.metric);
    }

    const CandidatePool pool =
        candidate_evidence(corpus, counter_class, options.external, options.pool_cap);

    Selection selection;
    if (options.kind == CheckerKind::random_baseline) {
        Rng rng(mix_seed(mix_seed(options.seed, "baseline"), image_id));
        selection = select_evidence(pool, nullptr, image, &rng);
    } else {
        if (!options.scorer) {
            throw DataError("explain: checker kind requires a scorer");
        }
        selection = select_evidence(pool, &options.scorer, image, nullptr);
    }

    CounterfactualExplanation result;
    result.image_id = image_id;
    result.counter_class = counter_class;
    result.selected = selection.phrase;
    result.selected_score = selection.score;
    result.negated_clause = negate(selection.phrase);
    result.sentence = compose(corpus.classes.at(counter_class), result.negated_clause);
    result.checker_kind = options.kind;
    return result;
}

}  // namespace cfx
