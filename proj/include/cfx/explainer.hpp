#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cfx/chunker.hpp"
#include "cfx/corpus.hpp"
#include "cfx/critic.hpp"
#include "cfx/encoder.hpp"
#include "cfx/rng.hpp"

namespace cfx {

enum class CheckerKind { classifier, phrase_critic, random_baseline, oracle };

std::string_view to_string(CheckerKind kind);
CheckerKind checker_kind_from_string(std::string_view s);

enum class DistanceMetric { euclidean, cosine };

// Per-phrase in-image score; low means absent. Pure given loaded models.
using Scorer = std::function<double(const ImageRecord&, const NounPhrase&)>;

// The caller keeps the model (and backend) alive while the scorer is in use.
Scorer make_checker_scorer(const CheckerModel& model);
Scorer make_critic_scorer(const CriticModel& model, const GroundingBackend& backend);

struct CandidatePool {
    enum class Source { ground_truth_descriptions, external_explanations };

    std::string counter_class;
    // Sorted by count descending, ties lexicographic by canonical form.
    std::vector<std::pair<NounPhrase, std::size_t>> candidates;
    Source source = Source::ground_truth_descriptions;
};

// Generated explanations supplied from file, JSONL {"class_id": str,
// "sentence": str}; substitutes for an external explanation model's output.
struct ExternalExplanations {
    std::map<std::string, std::vector<std::string>> by_class;
};

ExternalExplanations load_external_explanations(const std::string& path);

// Class of the record nearest to the image among records of a different
// class; exact ties go to the smallest record id.
std::string nearest_counterclass(const Corpus& corpus, const std::string& image_id,
                                 DistanceMetric metric = DistanceMetric::euclidean);

// Chunks every counter-class sentence (external explanations when supplied,
// otherwise ground-truth descriptions), drops zero-modifier phrases,
// aggregates counts, caps the pool. Throws DataError on an empty pool.
CandidatePool candidate_evidence(const Corpus& corpus, const std::string& counter_class,
                                 const ExternalExplanations* external = nullptr,
                                 std::size_t pool_cap = 20);

struct Selection {
    NounPhrase phrase;
    double score = 0.0;
};

// Exactly one of scorer/rng must be supplied. Scorer mode returns the
// argmin-score candidate (ties by canonical form); baseline mode draws
// uniformly and reports score -1.
Selection select_evidence(const CandidatePool& pool, const Scorer* scorer,
                          const ImageRecord& image, Rng* rng);

// "does not have <article><canonical>"; no article for plural heads, "an"
// before a vowel-initial first word, "a" otherwise.
std::string negate(const NounPhrase& np);

// "This is not a <name> because it <negated>." ("an" before vowel-initial
// class names).
std::string compose(const std::string& counter_class_name, const std::string& negated);

struct CounterfactualExplanation {
    std::string image_id;
    std::string counter_class;
    NounPhrase selected;
    double selected_score = 0.0;
    std::string negated_clause;
    std::string sentence;
    CheckerKind checker_kind = CheckerKind::oracle;

    bool operator==(const CounterfactualExplanation&) const = default;
};

struct ExplainOptions {
    std::optional<std::string> counter_class;  // default: nearest_counterclass
    CheckerKind kind = CheckerKind::oracle;
    Scorer scorer;            // required unless kind == random_baseline
    std::uint64_t seed = 17;  // drives the baseline draw
    std::size_t pool_cap = 20;
    DistanceMetric metric = DistanceMetric::euclidean;
    const ExternalExplanations* external = nullptr;
};

// counter-class selection -> candidate evidence -> evidence check ->
// negation -> composition. Deterministic given models and seed; the baseline
// draw is seeded per image so batch evaluation order cannot change it.
CounterfactualExplanation explain(const Corpus& corpus, const std::string& image_id,
                                  const ExplainOptions& options);

}  // namespace cfx
