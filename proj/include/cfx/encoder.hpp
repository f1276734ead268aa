#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "cfx/chunker.hpp"
#include "cfx/corpus.hpp"
#include "cfx/linalg.hpp"
#include "cfx/negmine.hpp"

namespace cfx {

struct TrainConfig {
    std::size_t k = 64;
    double learning_rate = 0.05;
    std::size_t epochs = 30;
    std::size_t batch_size = 32;
    std::uint64_t seed = 17;
    double init_scale = 0.1;

    void validate() const;  // positive hyperparameters; throws DataError
};

// Evidence checker: recurrent text encoder, affine image projection,
// elementwise fusion with L2 normalization, logistic output.
struct CheckerModel {
    std::map<std::string, std::size_t> vocab;  // surface -> index >= 1; 0 is OOV
    Matrix embedding;                          // V x k, row 0 = OOV
    Matrix w_x;                                // k x k
    Matrix w_h;                                // k x k
    std::vector<double> b_r;                   // k
    Matrix w_p;                                // k x d
    std::vector<double> b_p;                   // k
    std::vector<double> w_o;                   // k
    double b_o = 0.0;
    std::size_t d = 0;
    std::size_t k = 0;

    std::size_t token_index(const std::string& surface) const;
    // Canonical-order token indices (modifiers then head).
    std::vector<std::size_t> phrase_indices(const NounPhrase& np) const;

    bool operator==(const CheckerModel&) const = default;
};

// Pre-normalization fusion vectors below this norm are treated as zero.
inline constexpr double kNormEps = 1e-12;

// Sorted description tokens of the corpus, indexed from 1 (0 stays OOV).
std::map<std::string, std::size_t> build_vocab(const Corpus& corpus);

CheckerModel init_checker(std::map<std::string, std::size_t> vocab, std::size_t d,
                          const TrainConfig& cfg);

// Final hidden state of h <- tanh(W_x E[t] + W_h h + b_r) over the phrase
// tokens; h starts at zero and unknown tokens use the OOV embedding.
std::vector<double> encode_text(const CheckerModel& model, const NounPhrase& np);

// sigmoid(w_o . normalize(project(features) * encode_text(np)) + b_o).
// Scores near 0 mean the phrase is not in the image.
double fuse_score(const CheckerModel& model, const std::vector<double>& features,
                  const NounPhrase& np);

struct CheckerGrads {
    Matrix embedding;
    Matrix w_x;
    Matrix w_h;
    std::vector<double> b_r;
    Matrix w_p;
    std::vector<double> b_p;
    std::vector<double> w_o;
    double b_o = 0.0;

    static CheckerGrads zeros_like(const CheckerModel& model);
    void zero();
};

// Flat views over all parameters (or gradients) in a fixed order; the two
// sequences are index-aligned.
struct ParamView {
    const char* name;
    double* data;
    std::size_t size;
};
std::vector<ParamView> param_views(CheckerModel& model);
std::vector<ParamView> grad_views(CheckerGrads& grads);

// Binary cross-entropy of fuse_score against label (0 or 1).
double checker_loss(const CheckerModel& model, const std::vector<double>& features,
                    const NounPhrase& np, double label);

// Adds this sample's gradient into grads; returns the sample loss.
double checker_loss_and_grads(const CheckerModel& model, const std::vector<double>& features,
                              const NounPhrase& np, double label, CheckerGrads& grads);

struct TrainedChecker {
    CheckerModel model;
    std::vector<double> epoch_loss;  // mean BCE per epoch, in pass order
};

// Seeded mini-batch gradient descent over the pairs. Deterministic given
// (corpus order, pairs order, cfg.seed). Throws EmptyPairsError /
// NonFiniteLossError.
TrainedChecker train_checker(const Corpus& corpus, const std::vector<TrainingPair>& pairs,
                             const TrainConfig& cfg);

// Max relative error between analytic and central finite-difference
// gradients over every parameter: |ga - gn| / max(1e-8, |ga| + |gn|).
double grad_check(CheckerModel model, const std::vector<double>& features, const NounPhrase& np,
                  double label, double step = 1e-5);

void save_checker(const CheckerModel& model, const std::string& path);
CheckerModel load_checker(const std::string& path);

}  // namespace cfx
