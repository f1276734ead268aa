#include "cfx/eval.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <thread>

#include "cfx/chunker.hpp"
#include "cfx/error.hpp"
#include "cfx/rng.hpp"
#include "json.hpp"

namespace cfx {

using nlohmann::json;

namespace {

std::vector<std::pair<std::size_t, double>> bag_of_words(const SentenceClassifier& clf,
                                                         const std::vector<Token>& tokens) {
    std::map<std::size_t, double> counts;
    for (const Token& tok : tokens) {
        auto it = clf.vocab.find(tok.surface);
        if (it != clf.vocab.end()) counts[it->second] += 1.0;
    }
    return {counts.begin(), counts.end()};
}

// Softmax probabilities from sparse counts.
std::vector<double> class_probs(const SentenceClassifier& clf,
                                const std::vector<std::pair<std::size_t, double>>& bag) {
    const std::size_t n_classes = clf.class_ids.size();
    std::vector<double> logits(clf.bias);
    for (const auto& [col, count] : bag) {
        for (std::size_t c = 0; c < n_classes; ++c) logits[c] += clf.weights(c, col) * count;
    }
    const double max_logit = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (double& l : logits) {
        l = std::exp(l - max_logit);
        sum += l;
    }
    for (double& l : logits) l /= sum;
    return logits;
}

std::string lowercase(const std::string& s) {
    std::string out = s;
    for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

}  // namespace

TrainedSentenceClassifier train_sentence_classifier(const Corpus& corpus, const TrainConfig& cfg) {
    cfg.validate();
    std::set<std::string> class_set;
    for (const ImageRecord& rec : corpus.records) class_set.insert(rec.class_id);
    if (class_set.size() < 2) {
        throw DataError("train_sentence_classifier requires at least two classes with descriptions");
    }

    TrainedSentenceClassifier result;
    SentenceClassifier& clf = result.model;
    clf.class_ids.assign(class_set.begin(), class_set.end());

    std::map<std::string, std::size_t> class_index;
    for (std::size_t c = 0; c < clf.class_ids.size(); ++c) class_index[clf.class_ids[c]] = c;

    std::set<std::string> surfaces;
    for (const ImageRecord& rec : corpus.records) {
        for (const Description& desc : rec.descriptions) {
            for (const Token& tok : desc.tokens) surfaces.insert(tok.surface);
        }
    }
    std::size_t next = 0;
    for (const std::string& s : surfaces) clf.vocab[s] = next++;

    const std::size_t n_classes = clf.class_ids.size();
    const std::size_t n_vocab = clf.vocab.size();
    clf.weights = Matrix(n_classes, n_vocab);
    clf.bias.assign(n_classes, 0.0);

    Rng init_rng(cfg.seed);
    for (double& w : clf.weights.a) w = init_rng.uniform(-cfg.init_scale, cfg.init_scale);
    for (double& b : clf.bias) b = init_rng.uniform(-cfg.init_scale, cfg.init_scale);

    // One sample per description.
    std::vector<std::vector<std::pair<std::size_t, double>>> bags;
    std::vector<std::size_t> labels;
    for (const ImageRecord& rec : corpus.records) {
        for (const Description& desc : rec.descriptions) {
            bags.push_back(bag_of_words(clf, desc.tokens));
            labels.push_back(class_index.at(rec.class_id));
        }
    }

    Rng rng(mix_seed(cfg.seed, "shuffle"));
    std::vector<std::size_t> order(bags.size());
    std::iota(order.begin(), order.end(), 0);

    Matrix g_weights(n_classes, n_vocab);
    std::vector<double> g_bias(n_classes);

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(order);
        double epoch_loss_sum = 0.0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(start + cfg.batch_size, order.size());
            g_weights.fill(0.0);
            std::fill(g_bias.begin(), g_bias.end(), 0.0);

            for (std::size_t i = start; i < end; ++i) {
                const auto& bag = bags[order[i]];
                const std::size_t label = labels[order[i]];
                std::vector<double> probs = class_probs(clf, bag);
                epoch_loss_sum += -std::log(std::max(probs[label], 1e-300));
                probs[label] -= 1.0;  // dlogits
                for (std::size_t c = 0; c < n_classes; ++c) {
                    g_bias[c] += probs[c];
                    for (const auto& [col, count] : bag) g_weights(c, col) += probs[c] * count;
                }
            }

            const double scale = cfg.learning_rate / static_cast<double>(end - start);
            for (std::size_t i = 0; i < clf.weights.a.size(); ++i) {
                clf.weights.a[i] -= scale * g_weights.a[i];
            }
            for (std::size_t c = 0; c < n_classes; ++c) clf.bias[c] -= scale * g_bias[c];
        }
        const double epoch_loss = epoch_loss_sum / static_cast<double>(bags.size());
        if (!std::isfinite(epoch_loss)) {
            throw NonFiniteLossError("train_sentence_classifier: loss diverged at epoch " +
                                     std::to_string(epoch));
        }
        result.epoch_loss.push_back(epoch_loss);
    }
    return result;
}

std::string predict_class(const SentenceClassifier& clf, const std::vector<Token>& tokens) {
    const std::vector<double> probs = class_probs(clf, bag_of_words(clf, tokens));
    std::size_t best = 0;
    for (std::size_t c = 1; c < probs.size(); ++c) {
        if (probs[c] > probs[best]) best = c;
    }
    return clf.class_ids[best];
}

namespace {

bool phrase_matches_record(const ImageRecord& rec, const NounPhrase& np, MatchMode mode) {
    if (mode == MatchMode::exact_np) {
        for (const Description& desc : rec.descriptions) {
            if (contains_phrase(desc.tokens, np)) return true;
        }
        return false;
    }
    const std::string needle = np.canonical();
    for (const Description& desc : rec.descriptions) {
        if (lowercase(desc.raw).find(needle) != std::string::npos) return true;
    }
    return false;
}

}  // namespace

double phrase_error(const Corpus& corpus, const std::vector<CounterfactualExplanation>& explanations,
                    MatchMode mode) {
    if (explanations.empty()) throw DataError("phrase_error: empty explanation list");
    std::size_t errors = 0;
    for (const CounterfactualExplanation& expl : explanations) {
        const ImageRecord& rec = corpus.at(expl.image_id);
        if (phrase_matches_record(rec, expl.selected, mode)) ++errors;
    }
    return static_cast<double>(errors) / static_cast<double>(explanations.size());
}

std::string append_cf_text(const std::string& base, const std::string& phrase_canonical) {
    if (phrase_canonical.empty()) return base;
    return base + " and " + phrase_canonical;
}

std::pair<double, double> accuracy_with_cf_text(
    const SentenceClassifier& clf, const Corpus& corpus,
    const std::vector<CounterfactualExplanation>& explanations) {
    if (explanations.empty()) throw DataError("accuracy_with_cf_text: empty explanation list");
    std::size_t correct_without = 0;
    std::size_t correct_with = 0;
    for (const CounterfactualExplanation& expl : explanations) {
        const ImageRecord& rec = corpus.at(expl.image_id);
        const std::string& base = rec.descriptions.front().raw;
        const std::string pred_without = predict_class(clf, tokenize(base, corpus.lexicon));
        const std::string pred_with = predict_class(
            clf, tokenize(append_cf_text(base, expl.selected.canonical()), corpus.lexicon));
        if (pred_without == rec.class_id) ++correct_without;
        if (pred_with == rec.class_id) ++correct_with;
    }
    const double n = static_cast<double>(explanations.size());
    return {static_cast<double>(correct_without) / n, static_cast<double>(correct_with) / n};
}

EvalReport run_eval(const Corpus& corpus, CheckerKind kind, const Scorer& scorer,
                    const SentenceClassifier& sentclf, std::uint64_t seed,
                    const EvalOptions& options) {
    if (corpus.records.empty()) throw DataError("run_eval: empty corpus");

    std::vector<const ImageRecord*> images;
    images.reserve(corpus.records.size());
    for (const ImageRecord& rec : corpus.records) images.push_back(&rec);
    std::sort(images.begin(), images.end(),
              [](const ImageRecord* a, const ImageRecord* b) { return a->id < b->id; });

    ExplainOptions expl_options;
    expl_options.kind = kind;
    expl_options.scorer = scorer;
    expl_options.seed = seed;
    expl_options.pool_cap = options.pool_cap;
    expl_options.metric = options.metric;
    expl_options.external = options.external;

    std::vector<PerImageResult> rows(images.size());
    std::vector<CounterfactualExplanation> explanations(images.size());

    auto process = [&](std::size_t index) {
        const ImageRecord& rec = *images[index];
        const CounterfactualExplanation expl = explain(corpus, rec.id, expl_options);

        PerImageResult row;
        row.image_id = rec.id;
        row.counter_class = expl.counter_class;
        row.phrase = expl.selected.canonical();
        row.is_error = phrase_matches_record(rec, expl.selected, options.match);
        const std::string& base = rec.descriptions.front().raw;
        row.pred_without = predict_class(sentclf, tokenize(base, corpus.lexicon));
        row.pred_with = predict_class(
            sentclf, tokenize(append_cf_text(base, expl.selected.canonical()), corpus.lexicon));

        rows[index] = std::move(row);
        explanations[index] = std::move(expl);
    };

    const std::size_t jobs = std::max<std::size_t>(1, options.jobs);
    if (jobs == 1) {
        for (std::size_t i = 0; i < images.size(); ++i) process(i);
    } else {
        std::vector<std::thread> workers;
        for (std::size_t w = 0; w < jobs; ++w) {
            workers.emplace_back([&, w]() {
                for (std::size_t i = w; i < images.size(); i += jobs) process(i);
            });
        }
        for (std::thread& worker : workers) worker.join();
    }

    EvalReport report;
    report.n_images = images.size();
    report.checker_kind = kind;
    report.seed = seed;
    report.per_image = std::move(rows);

    std::size_t errors = 0;
    std::size_t correct_without = 0;
    std::size_t correct_with = 0;
    for (std::size_t i = 0; i < images.size(); ++i) {
        const PerImageResult& row = report.per_image[i];
        if (row.is_error) ++errors;
        if (row.pred_without == images[i]->class_id) ++correct_without;
        if (row.pred_with == images[i]->class_id) ++correct_with;
    }
    const double n = static_cast<double>(images.size());
    report.phrase_error = static_cast<double>(errors) / n;
    report.acc_without_cf = static_cast<double>(correct_without) / n;
    report.acc_with_cf = static_cast<double>(correct_with) / n;
    return report;
}

void save_report(const EvalReport& report, const std::string& path) {
    json j;
    j["format"] = "cfx-report-v1";
    j["n_images"] = report.n_images;
    j["phrase_error"] = report.phrase_error;
    j["acc_without_cf"] = report.acc_without_cf;
    j["acc_with_cf"] = report.acc_with_cf;
    j["checker_kind"] = std::string(to_string(report.checker_kind));
    j["seed"] = report.seed;
    json rows = json::array();
    for (const PerImageResult& row : report.per_image) {
        rows.push_back({{"image_id", row.image_id},
                        {"counter_class", row.counter_class},
                        {"phrase", row.phrase},
                        {"is_error", row.is_error},
                        {"pred_without", row.pred_without},
                        {"pred_with", row.pred_with}});
    }
    j["per_image"] = std::move(rows);

    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write report: " + path);
    out << j.dump() << '\n';
    if (!out) throw IoError("failed writing report: " + path);
}

EvalReport load_report(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open report: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ParseError(std::string("report: ") + e.what());
    }
    try {
        if (j.at("format").get<std::string>() != "cfx-report-v1") {
            throw DataError("report: unexpected format tag");
        }
        EvalReport report;
        report.n_images = j.at("n_images").get<std::size_t>();
        report.phrase_error = j.at("phrase_error").get<double>();
        report.acc_without_cf = j.at("acc_without_cf").get<double>();
        report.acc_with_cf = j.at("acc_with_cf").get<double>();
        report.checker_kind = checker_kind_from_string(j.at("checker_kind").get<std::string>());
        report.seed = j.at("seed").get<std::uint64_t>();
        for (const json& row : j.at("per_image")) {
            PerImageResult r;
            r.image_id = row.at("image_id").get<std::string>();
            r.counter_class = row.at("counter_class").get<std::string>();
            r.phrase = row.at("phrase").get<std::string>();
            r.is_error = row.at("is_error").get<bool>();
            r.pred_without = row.at("pred_without").get<std::string>();
            r.pred_with = row.at("pred_with").get<std::string>();
            report.per_image.push_back(std::move(r));
        }
        return report;
    } catch (const json::exception& e) {
        throw ParseError(std::string("report: ") + e.what());
    }
}

void save_sentclf(const SentenceClassifier& clf, const std::string& path) {
    json j;
    j["format"] = "cfx-sentclf-v1";
    j["dims"] = {{"n_classes", clf.class_ids.size()}, {"vocab_size", clf.vocab.size()}};
    j["classes"] = clf.class_ids;
    json vocab = json::object();
    for (const auto& [surface, index] : clf.vocab) vocab[surface] = index;
    j["vocab"] = std::move(vocab);
    j["params"] = {{"weights", clf.weights.a}, {"bias", clf.bias}};

    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write sentence classifier: " + path);
    out << j.dump() << '\n';
    if (!out) throw IoError("failed writing sentence classifier: " + path);
}

SentenceClassifier load_sentclf(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open sentence classifier: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ParseError(std::string("sentence classifier: ") + e.what());
    }
    try {
        if (j.at("format").get<std::string>() != "cfx-sentclf-v1") {
            throw DataError("sentence classifier: unexpected format tag");
        }
        SentenceClassifier clf;
        clf.class_ids = j.at("classes").get<std::vector<std::string>>();
        for (auto it = j.at("vocab").begin(); it != j.at("vocab").end(); ++it) {
            clf.vocab[it.key()] = it.value().get<std::size_t>();
        }
        const std::size_t n_classes = j.at("dims").at("n_classes").get<std::size_t>();
        const std::size_t n_vocab = j.at("dims").at("vocab_size").get<std::size_t>();
        if (n_classes != clf.class_ids.size() || n_vocab != clf.vocab.size()) {
            throw DataError("sentence classifier: dims disagree with tables");
        }
        clf.weights = Matrix(n_classes, n_vocab);
        clf.weights.a = j.at("params").at("weights").get<std::vector<double>>();
        clf.bias = j.at("params").at("bias").get<std::vector<double>>();
        if (clf.weights.a.size() != n_classes * n_vocab || clf.bias.size() != n_classes) {
            throw DataError("sentence classifier: parameter dimensions disagree with dims");
        }
        return clf;
    } catch (const json::exception& e) {
        throw ParseError(std::string("sentence classifier: ") + e.what());
    }
}

}  // namespace cfx
