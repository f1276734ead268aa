#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "cfx/chunker.hpp"
#include "cfx/corpus.hpp"
#include "cfx/encoder.hpp"
#include "cfx/negmine.hpp"

namespace cfx {

struct GroundingResult {
    double raw_score = 0.0;              // uncalibrated
    std::vector<double> region_feature;  // dimension fixed per backend
};

// Maps (image, phrase) to a localization score and region feature. Backends
// are pure: repeated queries return identical results. The image record
// carries both the id (used by oracle-style and replay backends) and the
// feature vector (used by learned backends).
class GroundingBackend {
public:
    virtual ~GroundingBackend() = default;
    virtual GroundingResult ground(const ImageRecord& image, const NounPhrase& np) const = 0;
    virtual std::size_t region_dim() const = 0;
};

// Stand-in for an external grounding model, driven by the synthetic corpus
// oracle: raw_score = 2*match - 1 plus N(0, sigma) noise; region_feature is
// the image's attribute indicator slice for the queried head noun, padded to
// the widest noun block, plus the same noise scheme. Noise is a hash of
// (seed, image id, phrase, coordinate), so the backend stays pure.
class SyntheticBackend final : public GroundingBackend {
public:
    SyntheticBackend(const Corpus& corpus, double noise_sigma, std::uint64_t seed);

    GroundingResult ground(const ImageRecord& image, const NounPhrase& np) const override;
    std::size_t region_dim() const override { return region_dim_; }

private:
    std::map<std::string, std::map<std::string, std::string>> oracle_;  // image -> noun -> adj
    std::map<std::string, std::vector<std::string>> adjectives_;        // noun -> sorted adjectives
    double noise_sigma_;
    std::uint64_t seed_;
    std::size_t region_dim_ = 0;
};

// Replays grounding results precomputed elsewhere, from JSONL lines
// {"image_id": str, "phrase": canonical NP, "raw_score": f64,
//  "region_feature": [f64...]}.
class ReplayBackend final : public GroundingBackend {
public:
    explicit ReplayBackend(const std::string& path);

    GroundingResult ground(const ImageRecord& image, const NounPhrase& np) const override;
    std::size_t region_dim() const override { return region_dim_; }

private:
    std::map<std::string, GroundingResult> results_;  // key: image_id \n phrase
    std::size_t region_dim_ = 0;
};

// Logistic calibration over [raw_score, region_feature, bag-of-tokens phrase
// embedding].
struct CriticModel {
    std::map<std::string, std::size_t> vocab;  // surface -> index >= 1; 0 is OOV
    double w_raw = 0.0;
    std::vector<double> w_region;  // g
    std::vector<double> w_embed;   // m
    Matrix embedding;              // V x m bag-of-tokens table
    double bias = 0.0;
    std::size_t g = 0;
    std::size_t m = 0;

    bool operator==(const CriticModel&) const = default;
};

struct TrainedCritic {
    CriticModel model;
    std::vector<double> epoch_loss;
};

// Seeded mini-batch gradient descent, same determinism contract as
// train_checker. The embedding width m comes from cfg.k.
TrainedCritic train_critic(const Corpus& corpus, const GroundingBackend& backend,
                           const std::vector<TrainingPair>& pairs, const TrainConfig& cfg);

// sigmoid of the linear form over the assembled input; low means the phrase
// is not grounded in the image.
double critic_score(const CriticModel& model, const GroundingBackend& backend,
                    const ImageRecord& image, const NounPhrase& np);

void save_critic(const CriticModel& model, const std::string& path);
CriticModel load_critic(const std::string& path);

}  // namespace cfx
