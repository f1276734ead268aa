#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <regex>

#include "cfx/error.hpp"
#include "cfx/explainer.hpp"
#include "cfx/rng.hpp"
#include "cfx/synthworld.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace cfx;
using cfx::test::TempDir;
using cfx::test::make_corpus;
using cfx::test::RecordSpec;
using cfx::test::write_file;

TEST_CASE("nearest_counterclass excludes the image's own class") {
    const Corpus corpus = make_corpus({{"q", "cA", {"a bird"}, {0.0, 0.0}},
                                       {"same", "cA", {"a bird"}, {0.1, 0.0}},
                                       {"b", "cB", {"a bird"}, {0.5, 0.0}},
                                       {"c", "cC", {"a bird"}, {0.9, 0.0}}},
                                      2);
    CHECK(nearest_counterclass(corpus, "q") == "cB");
}

TEST_CASE("nearest_counterclass breaks exact ties by smallest record id") {
    const Corpus corpus = make_corpus({{"q", "cA", {"a bird"}, {0.0, 0.0}},
                                       {"m2", "cB", {"a bird"}, {1.0, 0.0}},
                                       {"m1", "cC", {"a bird"}, {-1.0, 0.0}}},
                                      2);
    CHECK(nearest_counterclass(corpus, "q") == "cC");  // m1 < m2
}

TEST_CASE("nearest_counterclass requires two classes") {
    const Corpus corpus =
        make_corpus({{"q", "cA", {"a bird"}, {0.0}}, {"r", "cA", {"a bird"}, {1.0}}});
    CHECK_THROWS_AS(nearest_counterclass(corpus, "q"), DataError);
}

TEST_CASE("nearest_counterclass agrees with an independent brute-force scan") {
    Rng rng(2024);
    for (int instance = 0; instance < 200; ++instance) {
        const std::size_t n_classes = 2 + rng.below(4);
        const std::size_t n_records = n_classes + rng.below(20);
        const std::size_t dim = 1 + rng.below(6);

        std::vector<RecordSpec> specs;
        for (std::size_t r = 0; r < n_records; ++r) {
            RecordSpec spec;
            spec.id = "r" + std::to_string(100 + r);
            spec.class_id = "c" + std::to_string(r < n_classes ? r : rng.below(n_classes));
            spec.descriptions = {"a bird"};
            for (std::size_t i = 0; i < dim; ++i) {
                // coarse grid so exact ties actually happen
                spec.features.push_back(static_cast<double>(rng.below(3)));
            }
            specs.push_back(std::move(spec));
        }
        const Corpus corpus = make_corpus(specs, dim);
        const std::string query = corpus.records[rng.below(n_records)].id;
        const ImageRecord& q = corpus.at(query);

        // brute force: scan every record, track (distance, id)
        const ImageRecord* best = nullptr;
        double best_dist = std::numeric_limits<double>::infinity();
        for (const ImageRecord& rec : corpus.records) {
            if (rec.class_id == q.class_id) continue;
            double dist = 0.0;
            for (std::size_t i = 0; i < dim; ++i) {
                dist += (q.features[i] - rec.features[i]) * (q.features[i] - rec.features[i]);
            }
            dist = std::sqrt(dist);
            if (best == nullptr || dist < best_dist ||
                (dist == best_dist && rec.id < best->id)) {
                best = &rec;
                best_dist = dist;
            }
        }
        REQUIRE(nearest_counterclass(corpus, query) == best->class_id);
    }
}

TEST_CASE("candidate_evidence counts and orders phrases") {
    const Corpus corpus = make_corpus({{"i1", "cA", {"a yellow nape", "a yellow nape"}, {}},
                                       {"i2", "cA", {"a black wing"}, {}},
                                       {"i3", "cB", {"a red eye"}, {}}});
    const CandidatePool pool = candidate_evidence(corpus, "cA");
    REQUIRE(pool.candidates.size() == 2);
    CHECK(pool.candidates[0].first.canonical() == "yellow nape");
    CHECK(pool.candidates[0].second == 2);
    CHECK(pool.candidates[1].first.canonical() == "black wing");
    CHECK(pool.candidates[1].second == 1);
    CHECK(pool.source == CandidatePool::Source::ground_truth_descriptions);
}

TEST_CASE("candidate_evidence drops bare nouns and errors on empty pools") {
    const Corpus corpus = make_corpus({{"i1", "cA", {"the nape and the wing"}, {}},
                                       {"i2", "cB", {"a red eye"}, {}}});
    CHECK_THROWS_AS(candidate_evidence(corpus, "cA"), DataError);
    CHECK_THROWS_AS(candidate_evidence(corpus, "missing"), DataError);
}

TEST_CASE("candidate_evidence breaks count ties lexicographically") {
    const Corpus corpus = make_corpus({{"i1", "cA", {"a yellow nape and a black wing"}, {}}});
    const CandidatePool pool = candidate_evidence(corpus, "cA");
    REQUIRE(pool.candidates.size() == 2);
    CHECK(pool.candidates[0].first.canonical() == "black wing");
    CHECK(pool.candidates[1].first.canonical() == "yellow nape");
}

TEST_CASE("candidate_evidence caps the pool by count") {
    std::vector<std::string> sentences;
    const std::vector<std::string> adjectives = {"red",   "blue",  "green", "black", "white",
                                                 "brown", "grey",  "pink",  "purple", "tan",
                                                 "gold",  "olive", "navy",  "teal",  "coral",
                                                 "ivory", "amber", "plain", "pale",  "dark",
                                                 "dull",  "deep",  "slim",  "long",  "wide"};
    // adjective i appears with frequency i+1
    for (std::size_t i = 0; i < adjectives.size(); ++i) {
        for (std::size_t n = 0; n <= i; ++n) sentences.push_back("a " + adjectives[i] + " wing");
    }
    const Corpus corpus = make_corpus({{"i1", "cA", sentences, {}}});
    const CandidatePool pool = candidate_evidence(corpus, "cA", nullptr, 20);
    REQUIRE(pool.candidates.size() == 20);
    CHECK(pool.candidates.front().second == adjectives.size());  // most frequent kept
    CHECK(pool.candidates.back().second == adjectives.size() - 19);
}

TEST_CASE("external explanations replace ground-truth descriptions") {
    TempDir dir;
    write_file(dir.file("ext.jsonl"),
               R"({"class_id": "cA", "sentence": "a spotted breast and a spotted breast"}
{"class_id": "cB", "sentence": "a golden crown"}
)");
    const ExternalExplanations external = load_external_explanations(dir.file("ext.jsonl"));
    const Corpus corpus = make_corpus({{"i1", "cA", {"a yellow nape"}, {}},
                                       {"i2", "cB", {"a red eye"}, {}}});
    const CandidatePool pool = candidate_evidence(corpus, "cA", &external);
    REQUIRE(pool.candidates.size() == 1);
    CHECK(pool.candidates[0].first.canonical() == "spotted breast");
    CHECK(pool.candidates[0].second == 2);
    CHECK(pool.source == CandidatePool::Source::external_explanations);
}

namespace {

CandidatePool three_candidate_pool() {
    CandidatePool pool;
    pool.counter_class = "cA";
    pool.candidates = {{NounPhrase{{"black"}, "wing"}, 3},
                       {NounPhrase{{"yellow"}, "nape"}, 2},
                       {NounPhrase{{"red"}, "eye"}, 1}};
    return pool;
}

}  // namespace

TEST_CASE("select_evidence picks the minimum-scoring candidate") {
    const CandidatePool pool = three_candidate_pool();
    const Scorer scorer = [](const ImageRecord&, const NounPhrase& np) {
        return np.canonical() == "yellow nape" ? 0.1 : 0.9;
    };
    ImageRecord image;
    const Selection selection = select_evidence(pool, &scorer, image, nullptr);
    CHECK(selection.phrase.canonical() == "yellow nape");
    CHECK(selection.score == 0.1);
}

TEST_CASE("select_evidence breaks score ties by canonical form") {
    const CandidatePool pool = three_candidate_pool();
    const Scorer scorer = [](const ImageRecord&, const NounPhrase&) { return 0.5; };
    ImageRecord image;
    CHECK(select_evidence(pool, &scorer, image, nullptr).phrase.canonical() == "black wing");
}

TEST_CASE("select_evidence matches a brute-force scan on random pools") {
    Rng rng(515);
    const std::vector<std::string> heads = {"wing", "nape", "eye", "tail", "beak"};
    const std::vector<std::string> adjs = {"red", "blue", "green", "black", "white"};
    for (int instance = 0; instance < 200; ++instance) {
        CandidatePool pool;
        pool.counter_class = "cX";
        const std::size_t n = 1 + rng.below(12);
        for (std::size_t i = 0; i < n; ++i) {
            pool.candidates.push_back(
                {NounPhrase{{adjs[rng.below(adjs.size())]}, heads[rng.below(heads.size())]},
                 1 + rng.below(5)});
        }
        // hash-based scorer with deliberate ties (quantized to quarters)
        const std::uint64_t salt = rng.next_u64();
        const Scorer scorer = [salt](const ImageRecord&, const NounPhrase& np) {
            return static_cast<double>(mix_seed(salt, np.canonical()) % 4) / 4.0;
        };
        ImageRecord image;
        const Selection got = select_evidence(pool, &scorer, image, nullptr);

        // brute force: compute all scores, take exact min, then lexicographic
        double min_score = std::numeric_limits<double>::infinity();
        for (const auto& [np, count] : pool.candidates) {
            min_score = std::min(min_score, scorer(image, np));
        }
        std::string best_canonical;
        for (const auto& [np, count] : pool.candidates) {
            if (scorer(image, np) == min_score &&
                (best_canonical.empty() || np.canonical() < best_canonical)) {
                best_canonical = np.canonical();
            }
        }
        REQUIRE(got.score == min_score);
        REQUIRE(got.phrase.canonical() == best_canonical);
    }
}

TEST_CASE("baseline selection is uniform over the pool") {
    const CandidatePool pool = three_candidate_pool();
    ImageRecord image;
    Rng rng(8080);
    std::map<std::string, int> counts;
    const int draws = 9000;
    for (int i = 0; i < draws; ++i) {
        const Selection s = select_evidence(pool, nullptr, image, &rng);
        CHECK(s.score == -1.0);
        counts[s.phrase.canonical()]++;
    }
    REQUIRE(counts.size() == 3);
    for (const auto& [canonical, count] : counts) {
        CHECK(static_cast<double>(count) / draws == doctest::Approx(1.0 / 3.0).epsilon(0.05));
    }
}

TEST_CASE("select_evidence rejects ambiguous modes") {
    const CandidatePool pool = three_candidate_pool();
    ImageRecord image;
    Rng rng(1);
    const Scorer scorer = [](const ImageRecord&, const NounPhrase&) { return 0.0; };
    CHECK_THROWS_AS(select_evidence(pool, &scorer, image, &rng), DataError);
    CHECK_THROWS_AS(select_evidence(pool, nullptr, image, nullptr), DataError);
}

TEST_CASE("negate follows the article rules") {
    CHECK(negate(NounPhrase{{"brown"}, "wings"}) == "does not have brown wings");
    CHECK(negate(NounPhrase{{"yellow"}, "nape"}) == "does not have a yellow nape");
    CHECK(negate(NounPhrase{{"orange"}, "beak"}) == "does not have an orange beak");
    CHECK(negate(NounPhrase{{}, "eye"}) == "does not have an eye");
    CHECK(negate(NounPhrase{{"black"}, "glass"}) == "does not have a black glass");  // 'ss' head
}

TEST_CASE("compose renders the counterfactual template") {
    CHECK(compose("Scarlet Tanager", "does not have black wings") ==
          "This is not a Scarlet Tanager because it does not have black wings.");
    CHECK(compose("Bobolink", "does not have a yellow nape") ==
          "This is not a Bobolink because it does not have a yellow nape.");
    CHECK(compose("American Crow", "does not have a pointy black beak") ==
          "This is not an American Crow because it does not have a pointy black beak.");
}

TEST_CASE("composed sentences always match the template grammar") {
    const std::regex grammar("^This is not an? .+ because it does not have .+\\.$");
    const std::vector<std::string> names = {"Scarlet Tanager", "American Crow", "Bobolink",
                                            "Indigo Bunting", "Common Yellowthroat"};
    const std::vector<NounPhrase> phrases = {NounPhrase{{"black"}, "wings"},
                                             NounPhrase{{"orange"}, "beak"},
                                             NounPhrase{{}, "nape"},
                                             NounPhrase{{"bright", "yellow"}, "breast"}};
    for (const std::string& name : names) {
        for (const NounPhrase& np : phrases) {
            CHECK(std::regex_match(compose(name, negate(np)), grammar));
        }
    }
}

TEST_CASE("oracle explanations cite only oracle-absent evidence") {
    SynthSpec spec = SynthSpec::defaults();
    spec.n_classes = 6;
    spec.images_per_class = 5;
    spec.seed = 61;
    const Corpus corpus = generate(spec);

    ExplainOptions options;
    options.kind = CheckerKind::oracle;
    options.scorer = oracle_checker(corpus);

    for (const ImageRecord& rec : corpus.records) {
        const CounterfactualExplanation expl = explain(corpus, rec.id, options);
        CHECK_FALSE(oracle_present(rec, expl.selected));
        CHECK(expl.counter_class != rec.class_id);
        CHECK(expl.sentence == compose(corpus.classes.at(expl.counter_class), expl.negated_clause));
    }
}

TEST_CASE("explaining against the image's own class is permitted") {
    SynthSpec spec = SynthSpec::defaults();
    spec.n_classes = 3;
    spec.images_per_class = 2;
    const Corpus corpus = generate(spec);
    ExplainOptions options;
    options.kind = CheckerKind::random_baseline;
    options.counter_class = corpus.records.front().class_id;  // degenerate on purpose
    const CounterfactualExplanation expl = explain(corpus, corpus.records.front().id, options);
    CHECK(expl.counter_class == corpus.records.front().class_id);
}

TEST_CASE("explain is deterministic") {
    SynthSpec spec = SynthSpec::defaults();
    spec.n_classes = 4;
    spec.images_per_class = 3;
    const Corpus corpus = generate(spec);

    ExplainOptions options;
    options.kind = CheckerKind::random_baseline;
    options.seed = 99;
    const std::string id = corpus.records[5].id;
    CHECK(explain(corpus, id, options) == explain(corpus, id, options));

    ExplainOptions oracle_options;
    oracle_options.kind = CheckerKind::oracle;
    oracle_options.scorer = oracle_checker(corpus);
    CHECK(explain(corpus, id, oracle_options) == explain(corpus, id, oracle_options));
}
