#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "cfx/corpus.hpp"
#include "cfx/encoder.hpp"
#include "cfx/explainer.hpp"
#include "cfx/linalg.hpp"

namespace cfx {

// Bag-of-words softmax regression over description tokens.
struct SentenceClassifier {
    std::vector<std::string> class_ids;        // sorted; argmax ties go to the first
    std::map<std::string, std::size_t> vocab;  // surface -> column; unknown tokens dropped
    Matrix weights;                            // C x V
    std::vector<double> bias;                  // C

    bool operator==(const SentenceClassifier&) const = default;
};

struct TrainedSentenceClassifier {
    SentenceClassifier model;
    std::vector<double> epoch_loss;
};

TrainedSentenceClassifier train_sentence_classifier(const Corpus& corpus, const TrainConfig& cfg);

std::string predict_class(const SentenceClassifier& clf, const std::vector<Token>& tokens);

// How the selected phrase is matched against ground-truth descriptions.
enum class MatchMode { exact_np, substring };

// Fraction of explanations whose selected phrase occurs in any ground-truth
// description of the image. Ideally zero.
double phrase_error(const Corpus& corpus, const std::vector<CounterfactualExplanation>& explanations,
                    MatchMode mode = MatchMode::exact_np);

// Base text plus the counterfactual phrase as a positive clause; identity
// when the phrase is empty.
std::string append_cf_text(const std::string& base, const std::string& phrase_canonical);

// Accuracy of the sentence classifier on each image's first description,
// without and with the counterfactual phrase appended.
std::pair<double, double> accuracy_with_cf_text(
    const SentenceClassifier& clf, const Corpus& corpus,
    const std::vector<CounterfactualExplanation>& explanations);

struct PerImageResult {
    std::string image_id;
    std::string counter_class;
    std::string phrase;  // canonical form
    bool is_error = false;
    std::string pred_without;
    std::string pred_with;

    bool operator==(const PerImageResult&) const = default;
};

struct EvalReport {
    std::size_t n_images = 0;
    double phrase_error = 0.0;
    double acc_without_cf = 0.0;
    double acc_with_cf = 0.0;
    std::vector<PerImageResult> per_image;  // image-id order
    CheckerKind checker_kind = CheckerKind::oracle;
    std::uint64_t seed = 17;

    bool operator==(const EvalReport&) const = default;
};

struct EvalOptions {
    MatchMode match = MatchMode::exact_np;
    DistanceMetric metric = DistanceMetric::euclidean;
    std::size_t pool_cap = 20;
    std::size_t jobs = 1;  // worker threads over images; merge order is fixed
    const ExternalExplanations* external = nullptr;
};

// Explains every image (counter-class via nearest_counterclass) and computes
// both metrics. Deterministic per seed, independent of jobs.
EvalReport run_eval(const Corpus& corpus, CheckerKind kind, const Scorer& scorer,
                    const SentenceClassifier& sentclf, std::uint64_t seed,
                    const EvalOptions& options = {});

void save_report(const EvalReport& report, const std::string& path);
EvalReport load_report(const std::string& path);

void save_sentclf(const SentenceClassifier& clf, const std::string& path);
SentenceClassifier load_sentclf(const std::string& path);

}  // namespace cfx
