// cfx — counterfactual explanation pipeline CLI.
//
// Subcommands: synth, chunk, pairs, train-checker, train-critic,
// train-sentclf, explain, eval. Exit codes: 0 success, 1 usage error,
// 2 data/contract error. All randomness flows from --seed.

#include <cstdint>
#include <iostream>
#include <fstream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cfx/corpus.hpp"
#include "cfx/error.hpp"
#include "cfx/eval.hpp"
#include "cfx/explainer.hpp"
#include "cfx/negmine.hpp"
#include "cfx/synthworld.hpp"
#include "json.hpp"

namespace {

using nlohmann::json;
using namespace cfx;

// Resolved configuration goes to stderr so stdout stays parseable.
void echo_config(const json& config) { std::cerr << config.dump() << "\n"; }

Lexicon load_lexicon_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open lexicon file: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ParseError(std::string("lexicon: ") + e.what());
    }
    Lexicon lex;
    for (auto it = j.begin(); it != j.end(); ++it) {
        lex.entries[it.key()] = pos_from_string(it.value().get<std::string>());
    }
    return lex;
}

Rng pairs_rng(std::uint64_t seed) { return Rng(mix_seed(seed, "pairs")); }

struct BackendFlags {
    std::string grounding_path;
    double noise_sigma = 0.0;
    std::uint64_t backend_seed = 0;
};

std::unique_ptr<GroundingBackend> make_backend(const Corpus& corpus, const BackendFlags& flags) {
    if (!flags.grounding_path.empty()) {
        return std::make_unique<ReplayBackend>(flags.grounding_path);
    }
    return std::make_unique<SyntheticBackend>(corpus, flags.noise_sigma, flags.backend_seed);
}

void print_loss_curve(const std::vector<double>& epoch_loss) {
    for (std::size_t e = 0; e < epoch_loss.size(); ++e) {
        std::cerr << "epoch " << e << " loss " << epoch_loss[e] << "\n";
    }
}

json trace_json(const Corpus& corpus, const CounterfactualExplanation& expl,
                const ExplainOptions& options) {
    const CandidatePool pool =
        candidate_evidence(corpus, expl.counter_class, options.external, options.pool_cap);
    json pool_json = json::array();
    json scores = json::array();
    const ImageRecord& image = corpus.at(expl.image_id);
    for (const auto& [np, count] : pool.candidates) {
        pool_json.push_back({{"phrase", np.canonical()}, {"count", count}});
        if (options.scorer) {
            scores.push_back(options.scorer(image, np));
        } else {
            scores.push_back(nullptr);
        }
    }
    return json{{"format", "cfx-trace-v1"},
                {"image_id", expl.image_id},
                {"counter_class", expl.counter_class},
                {"pool", std::move(pool_json)},
                {"scores", std::move(scores)},
                {"selected", expl.selected.canonical()},
                {"selected_score", expl.selected_score},
                {"negated", expl.negated_clause},
                {"sentence", expl.sentence},
                {"checker_kind", std::string(to_string(expl.checker_kind))}};
}

int run(int argc, char** argv) {
    CLI::App app{"counterfactual explanation pipeline"};
    app.require_subcommand(1);

    // --- synth ---
    auto* synth = app.add_subcommand("synth", "generate a synthetic attribute-world corpus");
    std::string synth_spec_path;
    std::string synth_out;
    std::uint64_t synth_seed = 0;
    double synth_violate = -1.0;
    std::size_t synth_classes = 0;
    std::size_t synth_images = 0;
    synth->add_option("--spec", synth_spec_path, "synth spec JSON (defaults used when omitted)");
    synth->add_option("--out", synth_out, "output corpus JSONL")->required();
    auto* synth_seed_opt = synth->add_option("--seed", synth_seed, "override spec seed");
    auto* synth_violate_opt = synth->add_option("--violate-exclusivity", synth_violate,
                                                "probability of an exclusivity-violating description");
    synth->add_option("--classes", synth_classes, "override number of classes");
    synth->add_option("--images-per-class", synth_images, "override images per class");

    // --- chunk ---
    auto* chunk_cmd = app.add_subcommand("chunk", "print noun phrases of a sentence");
    std::string chunk_text;
    std::string chunk_lexicon;
    chunk_cmd->add_option("--text", chunk_text, "sentence to chunk")->required();
    chunk_cmd->add_option("--lexicon", chunk_lexicon, "lexicon JSON (default: built-in)");

    // --- pairs ---
    auto* pairs_cmd = app.add_subcommand("pairs", "dump flipped-attribute training pairs");
    std::string pairs_corpus;
    std::string pairs_out;
    std::uint64_t pairs_seed = 17;
    pairs_cmd->add_option("--corpus", pairs_corpus, "corpus JSONL")->required();
    pairs_cmd->add_option("--out", pairs_out, "output pairs JSONL")->required();
    pairs_cmd->add_option("--seed", pairs_seed, "rng seed");

    // Shared training flags.
    struct TrainFlags {
        std::string corpus;
        std::string out;
        std::uint64_t seed = 17;
        std::size_t k = 64;
        double lr = 0.05;
        std::size_t epochs = 30;
        std::size_t batch = 32;
        double init_scale = 0.1;
    };
    auto add_train_flags = [](CLI::App* cmd, TrainFlags& flags) {
        cmd->add_option("--corpus", flags.corpus, "corpus JSONL")->required();
        cmd->add_option("--out", flags.out, "output model JSON")->required();
        cmd->add_option("--seed", flags.seed, "rng seed");
        cmd->add_option("--k", flags.k, "embedding width");
        cmd->add_option("--lr", flags.lr, "learning rate");
        cmd->add_option("--epochs", flags.epochs, "training epochs");
        cmd->add_option("--batch", flags.batch, "mini-batch size");
        cmd->add_option("--init-scale", flags.init_scale, "uniform init scale");
    };

    auto* train_checker_cmd = app.add_subcommand("train-checker", "train the evidence classifier");
    TrainFlags checker_flags;
    add_train_flags(train_checker_cmd, checker_flags);

    auto* train_critic_cmd = app.add_subcommand("train-critic", "train the phrase critic");
    TrainFlags critic_flags;
    add_train_flags(train_critic_cmd, critic_flags);
    BackendFlags critic_backend;
    train_critic_cmd->add_option("--grounding", critic_backend.grounding_path,
                                 "replay grounding dump JSONL (default: synthetic backend)");
    train_critic_cmd->add_option("--noise-sigma", critic_backend.noise_sigma,
                                 "synthetic backend noise sigma");
    train_critic_cmd->add_option("--backend-seed", critic_backend.backend_seed,
                                 "synthetic backend noise seed");

    auto* train_sentclf_cmd = app.add_subcommand("train-sentclf", "train the sentence classifier");
    TrainFlags sentclf_flags;
    add_train_flags(train_sentclf_cmd, sentclf_flags);

    // --- explain ---
    auto* explain_cmd = app.add_subcommand("explain", "explain one image (or all images)");
    std::string explain_corpus;
    std::string explain_image;
    bool explain_all = false;
    std::string explain_counter;
    std::string explain_checker = "oracle";
    std::string explain_model;
    std::string explain_critic_model;
    BackendFlags explain_backend;
    std::uint64_t explain_seed = 17;
    std::size_t explain_pool_cap = 20;
    std::string explain_metric = "euclidean";
    std::string explain_external;
    std::string explain_out;
    explain_cmd->add_option("--corpus", explain_corpus, "corpus JSONL")->required();
    explain_cmd->add_option("--image", explain_image, "image id");
    explain_cmd->add_flag("--all", explain_all, "explain every image");
    explain_cmd->add_option("--counter-class", explain_counter,
                            "counter-class id (default: nearest in feature space)");
    explain_cmd->add_option("--checker", explain_checker,
                            "evidence checker: classifier|critic|baseline|oracle");
    explain_cmd->add_option("--model", explain_model, "checker model JSON");
    explain_cmd->add_option("--critic-model", explain_critic_model, "critic model JSON");
    explain_cmd->add_option("--grounding", explain_backend.grounding_path, "grounding dump JSONL");
    explain_cmd->add_option("--noise-sigma", explain_backend.noise_sigma,
                            "synthetic backend noise sigma");
    explain_cmd->add_option("--backend-seed", explain_backend.backend_seed,
                            "synthetic backend noise seed");
    explain_cmd->add_option("--seed", explain_seed, "baseline rng seed");
    explain_cmd->add_option("--pool-cap", explain_pool_cap, "candidate pool cap");
    explain_cmd->add_option("--metric", explain_metric, "counter-class metric: euclidean|cosine");
    explain_cmd->add_option("--explanations", explain_external,
                            "external explanations JSONL for candidate evidence");
    explain_cmd->add_option("--out", explain_out, "trace JSONL output (with --all)");

    // --- eval ---
    auto* eval_cmd = app.add_subcommand("eval", "run both metrics over a corpus");
    std::string eval_corpus;
    std::string eval_checker = "oracle";
    std::string eval_model;
    std::string eval_critic_model;
    BackendFlags eval_backend;
    std::string eval_sentclf;
    std::uint64_t eval_seed = 17;
    std::string eval_out;
    std::string eval_match = "exact-np";
    std::string eval_metric = "euclidean";
    std::size_t eval_pool_cap = 20;
    std::size_t eval_jobs = 1;
    std::string eval_external;
    eval_cmd->add_option("--corpus", eval_corpus, "corpus JSONL")->required();
    eval_cmd->add_option("--checker", eval_checker,
                         "evidence checker: classifier|critic|baseline|oracle");
    eval_cmd->add_option("--model", eval_model, "checker model JSON");
    eval_cmd->add_option("--critic-model", eval_critic_model, "critic model JSON");
    eval_cmd->add_option("--grounding", eval_backend.grounding_path, "grounding dump JSONL");
    eval_cmd->add_option("--noise-sigma", eval_backend.noise_sigma,
                         "synthetic backend noise sigma");
    eval_cmd->add_option("--backend-seed", eval_backend.backend_seed,
                         "synthetic backend noise seed");
    eval_cmd->add_option("--sentclf", eval_sentclf, "sentence classifier JSON")->required();
    eval_cmd->add_option("--seed", eval_seed, "rng seed");
    eval_cmd->add_option("--out", eval_out, "report JSON output")->required();
    eval_cmd->add_option("--match", eval_match, "phrase matching: exact-np|substring");
    eval_cmd->add_option("--metric", eval_metric, "counter-class metric: euclidean|cosine");
    eval_cmd->add_option("--pool-cap", eval_pool_cap, "candidate pool cap");
    eval_cmd->add_option("--jobs", eval_jobs, "worker threads over images");
    eval_cmd->add_option("--explanations", eval_external,
                         "external explanations JSONL for candidate evidence");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    }

    auto parse_metric = [](const std::string& s) {
        if (s == "euclidean") return DistanceMetric::euclidean;
        if (s == "cosine") return DistanceMetric::cosine;
        throw DataError("unknown metric: " + s);
    };
    auto parse_match = [](const std::string& s) {
        if (s == "exact-np") return MatchMode::exact_np;
        if (s == "substring") return MatchMode::substring;
        throw DataError("unknown match mode: " + s);
    };

    if (synth->parsed()) {
        SynthSpec spec =
            synth_spec_path.empty() ? SynthSpec::defaults() : load_synth_spec(synth_spec_path);
        if (synth_seed_opt->count() > 0) spec.seed = synth_seed;
        if (synth_violate_opt->count() > 0) spec.violate_exclusivity = synth_violate;
        if (synth_classes > 0) spec.n_classes = synth_classes;
        if (synth_images > 0) spec.images_per_class = synth_images;
        echo_config({{"subcommand", "synth"},
                     {"spec", synth_spec_path.empty() ? json(nullptr) : json(synth_spec_path)},
                     {"out", synth_out},
                     {"seed", spec.seed},
                     {"n_classes", spec.n_classes},
                     {"images_per_class", spec.images_per_class},
                     {"violate_exclusivity", spec.violate_exclusivity}});
        const Corpus corpus = generate(spec);
        save_corpus(corpus, synth_out);
        std::cout << "wrote " << corpus.records.size() << " records (feature_dim "
                  << corpus.feature_dim << ") to " << synth_out << "\n";
        return 0;
    }

    if (chunk_cmd->parsed()) {
        echo_config({{"subcommand", "chunk"},
                     {"text", chunk_text},
                     {"lexicon", chunk_lexicon.empty() ? json(nullptr) : json(chunk_lexicon)}});
        const Lexicon lexicon =
            chunk_lexicon.empty() ? default_lexicon() : load_lexicon_file(chunk_lexicon);
        for (const NounPhrase& np : chunk(tokenize(chunk_text, lexicon))) {
            std::cout << np.canonical() << "\n";
        }
        return 0;
    }

    if (pairs_cmd->parsed()) {
        echo_config({{"subcommand", "pairs"},
                     {"corpus", pairs_corpus},
                     {"out", pairs_out},
                     {"seed", pairs_seed}});
        const Corpus corpus = load_corpus(pairs_corpus);
        const AttributeInventory inventory = build_inventory(corpus);
        Rng rng = pairs_rng(pairs_seed);
        const std::vector<TrainingPair> pairs = make_training_pairs(corpus, inventory, rng);
        std::ofstream out(pairs_out, std::ios::binary);
        if (!out) throw IoError("cannot write pairs file: " + pairs_out);
        for (const TrainingPair& pair : pairs) {
            out << json{{"image_id", pair.image_id},
                        {"phrase", pair.phrase.canonical()},
                        {"label", pair.positive ? "positive" : "negative"}}
                       .dump()
                << "\n";
        }
        std::cout << "wrote " << pairs.size() << " pairs to " << pairs_out << "\n";
        return 0;
    }

    auto train_config = [](const TrainFlags& flags) {
        TrainConfig cfg;
        cfg.k = flags.k;
        cfg.learning_rate = flags.lr;
        cfg.epochs = flags.epochs;
        cfg.batch_size = flags.batch;
        cfg.seed = flags.seed;
        cfg.init_scale = flags.init_scale;
        return cfg;
    };
    auto train_config_json = [](const char* name, const TrainFlags& flags) {
        return json{{"subcommand", name}, {"corpus", flags.corpus}, {"out", flags.out},
                    {"seed", flags.seed}, {"k", flags.k},           {"lr", flags.lr},
                    {"epochs", flags.epochs}, {"batch", flags.batch},
                    {"init_scale", flags.init_scale}};
    };

    if (train_checker_cmd->parsed()) {
        echo_config(train_config_json("train-checker", checker_flags));
        const Corpus corpus = load_corpus(checker_flags.corpus);
        const AttributeInventory inventory = build_inventory(corpus);
        Rng rng = pairs_rng(checker_flags.seed);
        const std::vector<TrainingPair> pairs = make_training_pairs(corpus, inventory, rng);
        const TrainedChecker trained = train_checker(corpus, pairs, train_config(checker_flags));
        print_loss_curve(trained.epoch_loss);
        save_checker(trained.model, checker_flags.out);
        std::cout << "wrote checker model to " << checker_flags.out << "\n";
        return 0;
    }

    if (train_critic_cmd->parsed()) {
        json cfg_json = train_config_json("train-critic", critic_flags);
        cfg_json["grounding"] =
            critic_backend.grounding_path.empty() ? json(nullptr) : json(critic_backend.grounding_path);
        cfg_json["noise_sigma"] = critic_backend.noise_sigma;
        cfg_json["backend_seed"] = critic_backend.backend_seed;
        echo_config(cfg_json);
        const Corpus corpus = load_corpus(critic_flags.corpus);
        const auto backend = make_backend(corpus, critic_backend);
        const AttributeInventory inventory = build_inventory(corpus);
        Rng rng = pairs_rng(critic_flags.seed);
        const std::vector<TrainingPair> pairs = make_training_pairs(corpus, inventory, rng);
        const TrainedCritic trained =
            train_critic(corpus, *backend, pairs, train_config(critic_flags));
        print_loss_curve(trained.epoch_loss);
        save_critic(trained.model, critic_flags.out);
        std::cout << "wrote critic model to " << critic_flags.out << "\n";
        return 0;
    }

    if (train_sentclf_cmd->parsed()) {
        echo_config(train_config_json("train-sentclf", sentclf_flags));
        const Corpus corpus = load_corpus(sentclf_flags.corpus);
        const TrainedSentenceClassifier trained =
            train_sentence_classifier(corpus, train_config(sentclf_flags));
        print_loss_curve(trained.epoch_loss);
        save_sentclf(trained.model, sentclf_flags.out);
        std::cout << "wrote sentence classifier to " << sentclf_flags.out << "\n";
        return 0;
    }

    if (explain_cmd->parsed() || eval_cmd->parsed()) {
        const bool is_eval = eval_cmd->parsed();
        const std::string corpus_path = is_eval ? eval_corpus : explain_corpus;
        const std::string checker_name = is_eval ? eval_checker : explain_checker;
        const std::string model_path = is_eval ? eval_model : explain_model;
        const std::string critic_path = is_eval ? eval_critic_model : explain_critic_model;
        const BackendFlags& backend_flags = is_eval ? eval_backend : explain_backend;
        const std::string external_path = is_eval ? eval_external : explain_external;

        const Corpus corpus = load_corpus(corpus_path);
        const CheckerKind kind = checker_kind_from_string(checker_name);

        // Models must outlive the scorer closures below.
        std::optional<CheckerModel> checker_model;
        std::optional<CriticModel> critic_model;
        std::unique_ptr<GroundingBackend> backend;
        std::optional<ExternalExplanations> external;
        if (!external_path.empty()) external = load_external_explanations(external_path);

        Scorer scorer;
        switch (kind) {
            case CheckerKind::classifier:
                if (model_path.empty()) throw DataError("--checker classifier requires --model");
                checker_model = load_checker(model_path);
                scorer = make_checker_scorer(*checker_model);
                break;
            case CheckerKind::phrase_critic:
                if (critic_path.empty()) {
                    throw DataError("--checker critic requires --critic-model");
                }
                critic_model = load_critic(critic_path);
                backend = make_backend(corpus, backend_flags);
                scorer = make_critic_scorer(*critic_model, *backend);
                break;
            case CheckerKind::oracle:
                scorer = oracle_checker(corpus);
                break;
            case CheckerKind::random_baseline:
                break;
        }

        if (is_eval) {
            echo_config({{"subcommand", "eval"},
                         {"corpus", eval_corpus},
                         {"checker", std::string(to_string(kind))},
                         {"model", eval_model.empty() ? json(nullptr) : json(eval_model)},
                         {"critic_model",
                          eval_critic_model.empty() ? json(nullptr) : json(eval_critic_model)},
                         {"sentclf", eval_sentclf},
                         {"seed", eval_seed},
                         {"out", eval_out},
                         {"match", eval_match},
                         {"metric", eval_metric},
                         {"pool_cap", eval_pool_cap},
                         {"jobs", eval_jobs}});
            const SentenceClassifier sentclf = load_sentclf(eval_sentclf);
            EvalOptions options;
            options.match = parse_match(eval_match);
            options.metric = parse_metric(eval_metric);
            options.pool_cap = eval_pool_cap;
            options.jobs = eval_jobs;
            options.external = external.has_value() ? &*external : nullptr;
            const EvalReport report = run_eval(corpus, kind, scorer, sentclf, eval_seed, options);
            save_report(report, eval_out);
            std::cout << "n_images=" << report.n_images << " phrase_error=" << report.phrase_error
                      << " acc_without_cf=" << report.acc_without_cf
                      << " acc_with_cf=" << report.acc_with_cf << "\n";
            return 0;
        }

        if (explain_all && !explain_image.empty()) {
            throw DataError("explain: --image and --all are mutually exclusive");
        }
        if (!explain_all && explain_image.empty()) {
            throw DataError("explain: exactly one of --image or --all is required");
        }
        echo_config({{"subcommand", "explain"},
                     {"corpus", explain_corpus},
                     {"image", explain_image.empty() ? json(nullptr) : json(explain_image)},
                     {"all", explain_all},
                     {"counter_class",
                      explain_counter.empty() ? json(nullptr) : json(explain_counter)},
                     {"checker", std::string(to_string(kind))},
                     {"seed", explain_seed},
                     {"pool_cap", explain_pool_cap},
                     {"metric", explain_metric},
                     {"out", explain_out.empty() ? json(nullptr) : json(explain_out)}});

        ExplainOptions options;
        if (!explain_counter.empty()) options.counter_class = explain_counter;
        options.kind = kind;
        options.scorer = scorer;
        options.seed = explain_seed;
        options.pool_cap = explain_pool_cap;
        options.metric = parse_metric(explain_metric);
        options.external = external.has_value() ? &*external : nullptr;

        if (explain_all) {
            std::ofstream trace_out;
            if (!explain_out.empty()) {
                trace_out.open(explain_out, std::ios::binary);
                if (!trace_out) throw IoError("cannot write trace file: " + explain_out);
            }
            std::vector<const ImageRecord*> images;
            for (const ImageRecord& rec : corpus.records) images.push_back(&rec);
            std::sort(images.begin(), images.end(),
                      [](const ImageRecord* a, const ImageRecord* b) { return a->id < b->id; });
            for (const ImageRecord* rec : images) {
                const CounterfactualExplanation expl = explain(corpus, rec->id, options);
                std::cout << expl.sentence << "\n";
                if (trace_out.is_open()) {
                    trace_out << trace_json(corpus, expl, options).dump() << "\n";
                }
            }
            return 0;
        }

        const CounterfactualExplanation expl = explain(corpus, explain_image, options);
        std::cout << expl.sentence << "\n";
        std::cout << trace_json(corpus, expl, options).dump() << "\n";
        return 0;
    }

    return 1;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const CfxError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
