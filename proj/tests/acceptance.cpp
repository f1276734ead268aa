// Acceptance suite: one line per criterion, nonzero exit on any failure.
//
// The model-quality criteria are directional (trained checkers must beat the
// random baseline, the critic must match or beat the checker under clean
// grounding); absolute benchmark numbers are out of reach at this scale and
// are not asserted.

#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "cfx/chunker.hpp"
#include "cfx/corpus.hpp"
#include "cfx/critic.hpp"
#include "cfx/encoder.hpp"
#include "cfx/error.hpp"
#include "cfx/eval.hpp"
#include "cfx/explainer.hpp"
#include "cfx/negmine.hpp"
#include "cfx/rng.hpp"
#include "cfx/synthworld.hpp"

using namespace cfx;

namespace {

int g_failures = 0;

void report(int criterion, const std::string& name, bool pass, const std::string& detail) {
    std::printf("[%s] criterion %d: %s (%s)\n", pass ? "PASS" : "FAIL", criterion, name.c_str(),
                detail.c_str());
    std::fflush(stdout);
    if (!pass) ++g_failures;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::string fmt(double x) {
    char buffer[64];
    std::snprintf(buffer, sizeof(buffer), "%.4g", x);
    return buffer;
}

struct SeedStats {
    double pe_classifier = 0.0;
    double pe_baseline = 0.0;
    double pe_critic = 0.0;
    double acc_without = 0.0;
    double acc_with_classifier = 0.0;
    double acc_with_baseline = 0.0;
};

// --- criterion 1 -----------------------------------------------------------

void criterion_oracle_zero_error(const Corpus& corpus) {
    const auto start = std::chrono::steady_clock::now();
    TrainConfig cfg;
    cfg.seed = 17;
    const SentenceClassifier sentclf = train_sentence_classifier(corpus, cfg).model;
    const EvalReport report_oracle =
        run_eval(corpus, CheckerKind::oracle, oracle_checker(corpus), sentclf, 17);
    const double elapsed = seconds_since(start);
    const bool pass = report_oracle.phrase_error == 0.0 && elapsed < 30.0;
    report(1, "oracle checker has exactly zero phrase error", pass,
           "phrase_error=" + fmt(report_oracle.phrase_error) + ", " + fmt(elapsed) + "s");
}

// --- criteria 2-4 (shared 5-seed pipeline) ---------------------------------

std::vector<SeedStats> run_seed_pipelines(const Corpus& corpus,
                                          const std::vector<std::uint64_t>& seeds) {
    std::vector<SeedStats> stats;
    const AttributeInventory inventory = build_inventory(corpus);
    const SyntheticBackend backend(corpus, 0.0, 0);  // noiseless grounding

    for (std::uint64_t seed : seeds) {
        Rng rng(mix_seed(seed, "pairs"));
        const std::vector<TrainingPair> pairs = make_training_pairs(corpus, inventory, rng);

        TrainConfig cfg;
        cfg.seed = seed;
        const TrainedChecker checker = train_checker(corpus, pairs, cfg);
        const TrainedCritic critic = train_critic(corpus, backend, pairs, cfg);
        const SentenceClassifier sentclf = train_sentence_classifier(corpus, cfg).model;

        const EvalReport rep_clf = run_eval(corpus, CheckerKind::classifier,
                                            make_checker_scorer(checker.model), sentclf, seed);
        const EvalReport rep_base =
            run_eval(corpus, CheckerKind::random_baseline, Scorer{}, sentclf, seed);
        const EvalReport rep_critic = run_eval(corpus, CheckerKind::phrase_critic,
                                               make_critic_scorer(critic.model, backend), sentclf,
                                               seed);

        SeedStats s;
        s.pe_classifier = rep_clf.phrase_error;
        s.pe_baseline = rep_base.phrase_error;
        s.pe_critic = rep_critic.phrase_error;
        s.acc_without = rep_clf.acc_without_cf;
        s.acc_with_classifier = rep_clf.acc_with_cf;
        s.acc_with_baseline = rep_base.acc_with_cf;
        stats.push_back(s);
    }
    return stats;
}

double mean(const std::vector<SeedStats>& stats, double SeedStats::*field) {
    double sum = 0.0;
    for (const SeedStats& s : stats) sum += s.*field;
    return sum / static_cast<double>(stats.size());
}

// --- criterion 5 -----------------------------------------------------------

void criterion_gradients() {
    const auto start = std::chrono::steady_clock::now();
    const std::map<std::string, std::size_t> vocab = {
        {"red", 1}, {"blue", 2}, {"green", 3}, {"eye", 4}, {"wing", 5}, {"tail", 6}};
    const std::vector<std::string> adjectives = {"red", "blue", "green", "oov-adj"};
    const std::vector<std::string> heads = {"eye", "wing", "tail", "oov-head"};

    Rng rng(5150);
    double worst = 0.0;
    for (int draw = 0; draw < 100; ++draw) {
        TrainConfig cfg;
        cfg.k = 4;
        cfg.seed = rng.next_u64();
        cfg.init_scale = 0.5;
        const CheckerModel model = init_checker(vocab, 6, cfg);

        std::vector<double> features(6);
        for (double& f : features) f = rng.normal(0.0, 1.0);
        NounPhrase np;
        const std::size_t n_mods = rng.below(3);
        for (std::size_t i = 0; i < n_mods; ++i) {
            np.modifiers.push_back(adjectives[rng.below(adjectives.size())]);
        }
        np.head = heads[rng.below(heads.size())];
        const double label = rng.below(2) == 0 ? 0.0 : 1.0;

        worst = std::max(worst, grad_check(model, features, np, label, 1e-5));
    }
    const double elapsed = seconds_since(start);
    const bool pass = worst < 1e-4 && elapsed < 10.0;
    report(5, "analytic gradients match finite differences over 100 draws", pass,
           "max_rel_err=" + fmt(worst) + ", " + fmt(elapsed) + "s");
}

// --- criterion 6 -----------------------------------------------------------

void criterion_brute_force_equivalence() {
    Rng rng(616);

    // nearest_counterclass against an independent scan
    bool nearest_ok = true;
    for (int instance = 0; instance < 200 && nearest_ok; ++instance) {
        const std::size_t n_classes = 2 + rng.below(4);
        const std::size_t n_records = n_classes + rng.below(24);
        const std::size_t dim = 1 + rng.below(5);

        Corpus corpus;
        corpus.lexicon = default_lexicon();
        corpus.feature_dim = dim;
        for (std::size_t c = 0; c < n_classes; ++c) {
            corpus.classes["c" + std::to_string(c)] = "Class " + std::to_string(c);
        }
        for (std::size_t r = 0; r < n_records; ++r) {
            ImageRecord rec;
            rec.id = "r" + std::to_string(100 + r);
            rec.class_id = "c" + std::to_string(r < n_classes ? r : rng.below(n_classes));
            for (std::size_t i = 0; i < dim; ++i) {
                rec.features.push_back(static_cast<double>(rng.below(3)));
            }
            Description d;
            d.image_id = rec.id;
            d.raw = "a bird";
            d.tokens = tokenize(d.raw, corpus.lexicon);
            rec.descriptions.push_back(d);
            corpus.records.push_back(std::move(rec));
        }
        corpus.validate();

        const ImageRecord& query = corpus.records[rng.below(n_records)];
        const ImageRecord* best = nullptr;
        double best_dist = std::numeric_limits<double>::infinity();
        for (const ImageRecord& rec : corpus.records) {
            if (rec.class_id == query.class_id) continue;
            double dist = 0.0;
            for (std::size_t i = 0; i < dim; ++i) {
                dist += (query.features[i] - rec.features[i]) *
                        (query.features[i] - rec.features[i]);
            }
            dist = std::sqrt(dist);
            if (best == nullptr || dist < best_dist || (dist == best_dist && rec.id < best->id)) {
                best = &rec;
                best_dist = dist;
            }
        }
        nearest_ok = nearest_counterclass(corpus, query.id) == best->class_id;
    }

    // select_evidence against a brute-force scan, with forced score ties
    bool select_ok = true;
    const std::vector<std::string> heads = {"wing", "nape", "eye", "tail", "beak"};
    const std::vector<std::string> adjs = {"red", "blue", "green", "black", "white"};
    for (int instance = 0; instance < 200 && select_ok; ++instance) {
        CandidatePool pool;
        pool.counter_class = "cX";
        const std::size_t n = 1 + rng.below(12);
        for (std::size_t i = 0; i < n; ++i) {
            pool.candidates.push_back(
                {NounPhrase{{adjs[rng.below(adjs.size())]}, heads[rng.below(heads.size())]},
                 1 + rng.below(5)});
        }
        const std::uint64_t salt = rng.next_u64();
        const Scorer scorer = [salt](const ImageRecord&, const NounPhrase& np) {
            return static_cast<double>(mix_seed(salt, np.canonical()) % 4) / 4.0;
        };
        ImageRecord image;
        const Selection got = select_evidence(pool, &scorer, image, nullptr);

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
        select_ok = got.score == min_score && got.phrase.canonical() == best_canonical;
    }

    report(6, "nearest_counterclass and select_evidence match brute force on 200 instances",
           nearest_ok && select_ok,
           std::string("nearest=") + (nearest_ok ? "ok" : "MISMATCH") + ", select=" +
               (select_ok ? "ok" : "MISMATCH"));
}

// --- criterion 7 -----------------------------------------------------------

void criterion_fixtures() {
    bool pass = true;
    std::string detail = "all fixtures verbatim";
    auto expect = [&](bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            detail = "mismatch: " + what;
        }
    };

    const Lexicon& lex = default_lexicon();

    std::vector<std::string> chunked;
    for (const NounPhrase& np :
         chunk(tokenize("a yellow bird with a black wing and a black pointy beak", lex))) {
        chunked.push_back(np.canonical());
    }
    expect(chunked == std::vector<std::string>{"yellow bird", "black wing", "black pointy beak"},
           "chunking of the qualitative example");

    expect(contains_phrase(tokenize("this bird has a yellow nape", lex),
                           NounPhrase{{"yellow"}, "nape"}),
           "yellow nape containment");

    const auto black_face = tokenize("Black face", lex);
    expect(black_face.size() == 2 && black_face[0] == Token{"black", Pos::adj} &&
               black_face[1] == Token{"face", Pos::noun},
           "tokenization of \"Black face\"");

    expect(negate(NounPhrase{{"brown"}, "wings"}) == "does not have brown wings",
           "negation of brown wings");
    expect(negate(NounPhrase{{"yellow"}, "nape"}) == "does not have a yellow nape",
           "negation of yellow nape");

    expect(compose("Scarlet Tanager", "does not have black wings") ==
               "This is not a Scarlet Tanager because it does not have black wings.",
           "Scarlet Tanager sentence");
    expect(compose("Bobolink", negate(NounPhrase{{"yellow"}, "nape"})) ==
               "This is not a Bobolink because it does not have a yellow nape.",
           "Bobolink sentence");
    expect(compose("American Crow", negate(NounPhrase{{"pointy", "black"}, "beak"})) ==
               "This is not an American Crow because it does not have a pointy black beak.",
           "American Crow sentence");
    expect(compose("Common Yellowthroat", negate(NounPhrase{{"black"}, "face"})) ==
               "This is not a Common Yellowthroat because it does not have a black face.",
           "Common Yellowthroat sentence");

    report(7, "chunk/negate/compose reproduce the attested sentences", pass, detail);
}

// --- criterion 8 -----------------------------------------------------------

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void criterion_cli_determinism() {
#ifndef CFX_BIN
    report(8, "CLI runs are byte-identical", false, "cfx binary path not configured");
#else
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / ("cfx-acceptance-" + std::to_string(getpid()));
    fs::create_directories(dir);

    auto run = [&](const std::string& args) {
        const std::string command = std::string(CFX_BIN) + " " + args + " >/dev/null 2>/dev/null";
        return std::system(command.c_str()) == 0;
    };

    bool pass = true;
    for (const char* tag : {"a", "b"}) {
        const std::string t = (dir / tag).string();
        pass = pass && run("synth --out " + t + "-c.jsonl --seed 17");
        pass = pass && run("train-checker --corpus " + t + "-c.jsonl --out " + t +
                           "-m.json --seed 17");
        pass = pass && run("train-sentclf --corpus " + t + "-c.jsonl --out " + t +
                           "-s.json --seed 17");
        pass = pass && run("eval --corpus " + t + "-c.jsonl --checker classifier --model " + t +
                           "-m.json --sentclf " + t + "-s.json --seed 17 --out " + t + "-r.json");
    }
    const std::string a = (dir / "a").string();
    const std::string b = (dir / "b").string();
    const bool corpus_same = pass && slurp(a + "-c.jsonl") == slurp(b + "-c.jsonl");
    const bool model_same = pass && slurp(a + "-m.json") == slurp(b + "-m.json");
    const bool report_same = pass && slurp(a + "-r.json") == slurp(b + "-r.json");

    std::error_code ec;
    fs::remove_all(dir, ec);

    report(8, "seeded CLI runs produce byte-identical corpus, model, and report",
           pass && corpus_same && model_same && report_same,
           std::string("corpus=") + (corpus_same ? "same" : "DIFFERS") + ", model=" +
               (model_same ? "same" : "DIFFERS") + ", report=" +
               (report_same ? "same" : "DIFFERS"));
#endif
}

// --- criterion 9 -----------------------------------------------------------

void criterion_round_trips() {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / ("cfx-roundtrip-" + std::to_string(getpid()));
    fs::create_directories(dir);
    auto path = [&](const char* name) { return (dir / name).string(); };

    bool pass = true;
    std::string detail = "corpus, checker, critic, sentclf, report";
    try {
        SynthSpec spec = SynthSpec::defaults();
        spec.n_classes = 5;
        spec.images_per_class = 4;
        const Corpus corpus = generate(spec);
        save_corpus(corpus, path("c.jsonl"));
        pass = pass && load_corpus(path("c.jsonl")) == corpus;

        const AttributeInventory inventory = build_inventory(corpus);
        Rng rng(mix_seed(17, "pairs"));
        const auto pairs = make_training_pairs(corpus, inventory, rng);
        TrainConfig cfg;
        cfg.epochs = 3;
        const CheckerModel checker = train_checker(corpus, pairs, cfg).model;
        save_checker(checker, path("m.json"));
        pass = pass && load_checker(path("m.json")) == checker;

        const SyntheticBackend backend(corpus, 0.0, 0);
        const CriticModel critic = train_critic(corpus, backend, pairs, cfg).model;
        save_critic(critic, path("cr.json"));
        pass = pass && load_critic(path("cr.json")) == critic;

        const SentenceClassifier sentclf = train_sentence_classifier(corpus, cfg).model;
        save_sentclf(sentclf, path("s.json"));
        pass = pass && load_sentclf(path("s.json")) == sentclf;

        const EvalReport rep =
            run_eval(corpus, CheckerKind::classifier, make_checker_scorer(checker), sentclf, 17);
        save_report(rep, path("r.json"));
        pass = pass && load_report(path("r.json")) == rep;
    } catch (const std::exception& e) {
        pass = false;
        detail = e.what();
    }

    std::error_code ec;
    fs::remove_all(dir, ec);
    report(9, "all five file formats satisfy load(save(x)) == x", pass, detail);
}

}  // namespace

int main() {
    const Corpus corpus = generate(SynthSpec::defaults());
    std::printf("default corpus: %zu records, feature_dim %zu\n", corpus.records.size(),
                corpus.feature_dim);

    criterion_oracle_zero_error(corpus);

    const std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
    const auto start = std::chrono::steady_clock::now();
    const std::vector<SeedStats> stats = run_seed_pipelines(corpus, seeds);
    const double pipeline_elapsed = seconds_since(start);

    const double pe_clf = mean(stats, &SeedStats::pe_classifier);
    const double pe_base = mean(stats, &SeedStats::pe_baseline);
    const double pe_critic = mean(stats, &SeedStats::pe_critic);
    const double acc_without = mean(stats, &SeedStats::acc_without);
    const double acc_with_clf = mean(stats, &SeedStats::acc_with_classifier);
    const double acc_with_base = mean(stats, &SeedStats::acc_with_baseline);

    report(2, "trained checker at most halves the baseline phrase error",
           pe_clf <= 0.5 * pe_base && pipeline_elapsed < 600.0,
           "mean classifier=" + fmt(pe_clf) + " vs baseline=" + fmt(pe_base) + " over 5 seeds, " +
               fmt(pipeline_elapsed) + "s");
    report(3, "counterfactual text lowers classifier accuracy, more than the baseline does",
           acc_with_clf < acc_without && acc_with_clf <= acc_with_base,
           "acc_without=" + fmt(acc_without) + ", with(checker)=" + fmt(acc_with_clf) +
               ", with(baseline)=" + fmt(acc_with_base));
    report(4, "phrase-critic matches or beats the checker under clean grounding",
           pe_critic <= pe_clf, "mean critic=" + fmt(pe_critic) + " vs classifier=" + fmt(pe_clf));

    criterion_gradients();
    criterion_brute_force_equivalence();
    criterion_fixtures();
    criterion_cli_determinism();
    criterion_round_trips();

    std::printf("%d criterion(s) failed\n", g_failures);
    return g_failures;
}
