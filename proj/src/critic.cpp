#include "cfx/critic.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

#include "cfx/error.hpp"
#include "cfx/rng.hpp"
#include "json.hpp"

namespace cfx {

using nlohmann::json;

namespace {

std::string join_modifiers(const std::vector<std::string>& modifiers) {
    std::string out;
    for (std::size_t i = 0; i < modifiers.size(); ++i) {
        if (i > 0) out += ' ';
        out += modifiers[i];
    }
    return out;
}

}  // namespace

SyntheticBackend::SyntheticBackend(const Corpus& corpus, double noise_sigma, std::uint64_t seed)
    : noise_sigma_(noise_sigma), seed_(seed) {
    if (!corpus.synthetic()) {
        throw DataError("synthetic backend requires a corpus with oracle_attributes");
    }
    std::map<std::string, std::set<std::string>> adjective_sets;
    for (const ImageRecord& rec : corpus.records) {
        oracle_[rec.id] = *rec.oracle_attributes;
        for (const auto& [noun, adj] : *rec.oracle_attributes) adjective_sets[noun].insert(adj);
    }
    for (const auto& [noun, adjs] : adjective_sets) {
        adjectives_[noun] = std::vector<std::string>(adjs.begin(), adjs.end());
        region_dim_ = std::max(region_dim_, adjs.size());
    }
}

GroundingResult SyntheticBackend::ground(const ImageRecord& image, const NounPhrase& np) const {
    auto oracle_it = oracle_.find(image.id);
    if (oracle_it == oracle_.end()) {
        throw DataError("synthetic backend: unknown image id " + image.id);
    }
    const auto& attrs = oracle_it->second;

    const std::string canonical = np.canonical();
    SplitMix64 noise(mix_seed(mix_seed(seed_, image.id), canonical));

    auto attr_it = attrs.find(np.head);
    const bool match = attr_it != attrs.end() && attr_it->second == join_modifiers(np.modifiers);

    GroundingResult result;
    result.raw_score = 2.0 * (match ? 1.0 : 0.0) - 1.0 + noise.normal(0.0, noise_sigma_);
    result.region_feature.assign(region_dim_, 0.0);
    auto adj_it = adjectives_.find(np.head);
    if (adj_it != adjectives_.end() && attr_it != attrs.end()) {
        const std::vector<std::string>& adjs = adj_it->second;
        auto pos = std::find(adjs.begin(), adjs.end(), attr_it->second);
        if (pos != adjs.end()) {
            result.region_feature[static_cast<std::size_t>(pos - adjs.begin())] = 1.0;
        }
    }
    for (double& x : result.region_feature) x += noise.normal(0.0, noise_sigma_);
    return result;
}

ReplayBackend::ReplayBackend(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open grounding dump: " + path);
    std::string line;
    std::size_t line_no = 0;
    bool first = true;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw ParseError("grounding dump line " + std::to_string(line_no) + ": " + e.what());
        }
        try {
            GroundingResult result;
            result.raw_score = j.at("raw_score").get<double>();
            result.region_feature = j.at("region_feature").get<std::vector<double>>();
            const std::string key =
                j.at("image_id").get<std::string>() + '\n' + j.at("phrase").get<std::string>();
            if (first) {
                region_dim_ = result.region_feature.size();
                first = false;
            } else if (result.region_feature.size() != region_dim_) {
                throw DataError("grounding dump line " + std::to_string(line_no) +
                                ": inconsistent region_feature dimension");
            }
            results_[key] = std::move(result);
        } catch (const json::exception& e) {
            throw ParseError("grounding dump line " + std::to_string(line_no) + ": " + e.what());
        }
    }
}

GroundingResult ReplayBackend::ground(const ImageRecord& image, const NounPhrase& np) const {
    auto it = results_.find(image.id + '\n' + np.canonical());
    if (it == results_.end()) {
        throw DataError("grounding dump has no entry for image " + image.id + ", phrase \"" +
                        np.canonical() + "\"");
    }
    return it->second;
}

namespace {

std::size_t critic_token_index(const CriticModel& model, const std::string& surface) {
    auto it = model.vocab.find(surface);
    return it == model.vocab.end() ? 0 : it->second;
}

std::vector<std::size_t> critic_phrase_indices(const CriticModel& model, const NounPhrase& np) {
    std::vector<std::size_t> indices;
    indices.reserve(np.modifiers.size() + 1);
    for (const std::string& m : np.modifiers) indices.push_back(critic_token_index(model, m));
    indices.push_back(critic_token_index(model, np.head));
    return indices;
}

double critic_logit(const CriticModel& model, const GroundingResult& grounding,
                    const NounPhrase& np) {
    if (grounding.region_feature.size() != model.g) {
        throw DataError("critic model expects region dimension " + std::to_string(model.g) +
                        ", backend produced " + std::to_string(grounding.region_feature.size()));
    }
    double logit = model.bias + model.w_raw * grounding.raw_score;
    logit += dot(model.w_region.data(), grounding.region_feature.data(), model.g);
    std::vector<double> bag(model.m, 0.0);
    for (std::size_t idx : critic_phrase_indices(model, np)) {
        const double* row = model.embedding.row(idx);
        for (std::size_t c = 0; c < model.m; ++c) bag[c] += row[c];
    }
    logit += dot(model.w_embed.data(), bag.data(), model.m);
    return logit;
}

}  // namespace

double critic_score(const CriticModel& model, const GroundingBackend& backend,
                    const ImageRecord& image, const NounPhrase& np) {
    return sigmoid(critic_logit(model, backend.ground(image, np), np));
}

TrainedCritic train_critic(const Corpus& corpus, const GroundingBackend& backend,
                           const std::vector<TrainingPair>& pairs, const TrainConfig& cfg) {
    cfg.validate();
    if (pairs.empty()) throw EmptyPairsError("train_critic: no training pairs");

    TrainedCritic result;
    CriticModel& model = result.model;
    model.vocab = build_vocab(corpus);
    model.g = backend.region_dim();
    model.m = cfg.k;
    const std::size_t v = model.vocab.size() + 1;

    Rng init_rng(cfg.seed);
    model.w_raw = init_rng.uniform(-cfg.init_scale, cfg.init_scale);
    model.w_region.resize(model.g);
    for (double& w : model.w_region) w = init_rng.uniform(-cfg.init_scale, cfg.init_scale);
    model.w_embed.resize(model.m);
    for (double& w : model.w_embed) w = init_rng.uniform(-cfg.init_scale, cfg.init_scale);
    model.embedding = Matrix(v, model.m);
    for (double& e : model.embedding.a) e = init_rng.uniform(-cfg.init_scale, cfg.init_scale);
    model.bias = init_rng.uniform(-cfg.init_scale, cfg.init_scale);

    // Backends are pure, so each pair's grounding is fixed; fetch once.
    std::vector<GroundingResult> groundings;
    groundings.reserve(pairs.size());
    std::vector<std::vector<std::size_t>> token_indices;
    token_indices.reserve(pairs.size());
    for (const TrainingPair& pair : pairs) {
        groundings.push_back(backend.ground(corpus.at(pair.image_id), pair.phrase));
        if (groundings.back().region_feature.size() != model.g) {
            throw DataError("backend produced inconsistent region dimension");
        }
        token_indices.push_back(critic_phrase_indices(model, pair.phrase));
    }

    Rng rng(mix_seed(cfg.seed, "shuffle"));
    std::vector<std::size_t> order(pairs.size());
    std::iota(order.begin(), order.end(), 0);

    double g_raw = 0.0;
    std::vector<double> g_region(model.g);
    std::vector<double> g_embed(model.m);
    Matrix g_table(v, model.m);
    double g_bias = 0.0;
    std::vector<double> bag(model.m);

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(order);
        double epoch_loss_sum = 0.0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(start + cfg.batch_size, order.size());
            g_raw = 0.0;
            std::fill(g_region.begin(), g_region.end(), 0.0);
            std::fill(g_embed.begin(), g_embed.end(), 0.0);
            g_table.fill(0.0);
            g_bias = 0.0;

            for (std::size_t i = start; i < end; ++i) {
                const std::size_t p = order[i];
                const GroundingResult& grounding = groundings[p];
                const double label = pairs[p].positive ? 1.0 : 0.0;

                std::fill(bag.begin(), bag.end(), 0.0);
                for (std::size_t idx : token_indices[p]) {
                    const double* row = model.embedding.row(idx);
                    for (std::size_t c = 0; c < model.m; ++c) bag[c] += row[c];
                }
                double logit = model.bias + model.w_raw * grounding.raw_score +
                               dot(model.w_region.data(), grounding.region_feature.data(), model.g) +
                               dot(model.w_embed.data(), bag.data(), model.m);
                epoch_loss_sum += bce_from_logit(logit, label);

                const double d_logit = sigmoid(logit) - label;
                g_raw += d_logit * grounding.raw_score;
                for (std::size_t c = 0; c < model.g; ++c) {
                    g_region[c] += d_logit * grounding.region_feature[c];
                }
                for (std::size_t c = 0; c < model.m; ++c) g_embed[c] += d_logit * bag[c];
                for (std::size_t idx : token_indices[p]) {
                    double* row = g_table.row(idx);
                    for (std::size_t c = 0; c < model.m; ++c) row[c] += d_logit * model.w_embed[c];
                }
                g_bias += d_logit;
            }

            const double scale = cfg.learning_rate / static_cast<double>(end - start);
            model.w_raw -= scale * g_raw;
            for (std::size_t c = 0; c < model.g; ++c) model.w_region[c] -= scale * g_region[c];
            for (std::size_t c = 0; c < model.m; ++c) model.w_embed[c] -= scale * g_embed[c];
            for (std::size_t i = 0; i < model.embedding.a.size(); ++i) {
                model.embedding.a[i] -= scale * g_table.a[i];
            }
            model.bias -= scale * g_bias;
        }
        const double epoch_loss = epoch_loss_sum / static_cast<double>(pairs.size());
        if (!std::isfinite(epoch_loss)) {
            throw NonFiniteLossError("train_critic: loss diverged at epoch " +
                                     std::to_string(epoch) + "; try a lower learning rate");
        }
        result.epoch_loss.push_back(epoch_loss);
    }
    return result;
}

void save_critic(const CriticModel& model, const std::string& path) {
    json j;
    j["format"] = "cfx-critic-v1";
    j["dims"] = {{"g", model.g}, {"m", model.m}, {"vocab_size", model.embedding.rows}};
    json vocab = json::object();
    for (const auto& [surface, index] : model.vocab) vocab[surface] = index;
    j["vocab"] = std::move(vocab);
    j["params"] = {{"w_raw", std::vector<double>{model.w_raw}},
                   {"w_region", model.w_region},
                   {"w_embed", model.w_embed},
                   {"embedding", model.embedding.a},
                   {"bias", std::vector<double>{model.bias}}};

    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write critic model: " + path);
    out << j.dump() << '\n';
    if (!out) throw IoError("failed writing critic model: " + path);
}

CriticModel load_critic(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open critic model: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ParseError(std::string("critic model: ") + e.what());
    }
    try {
        if (j.at("format").get<std::string>() != "cfx-critic-v1") {
            throw DataError("critic model: unexpected format tag");
        }
        CriticModel m;
        m.g = j.at("dims").at("g").get<std::size_t>();
        m.m = j.at("dims").at("m").get<std::size_t>();
        const std::size_t v = j.at("dims").at("vocab_size").get<std::size_t>();
        for (auto it = j.at("vocab").begin(); it != j.at("vocab").end(); ++it) {
            m.vocab[it.key()] = it.value().get<std::size_t>();
        }
        if (v != m.vocab.size() + 1) {
            throw DataError("critic model: vocab_size disagrees with vocab table");
        }
        const auto& params = j.at("params");
        m.w_raw = params.at("w_raw").get<std::vector<double>>().at(0);
        m.w_region = params.at("w_region").get<std::vector<double>>();
        m.w_embed = params.at("w_embed").get<std::vector<double>>();
        m.embedding = Matrix(v, m.m);
        m.embedding.a = params.at("embedding").get<std::vector<double>>();
        m.bias = params.at("bias").get<std::vector<double>>().at(0);
        if (m.w_region.size() != m.g || m.w_embed.size() != m.m ||
            m.embedding.a.size() != v * m.m) {
            throw DataError("critic model: parameter dimensions disagree with dims");
        }
        return m;
    } catch (const json::exception& e) {
        throw ParseError(std::string("critic model: ") + e.what());
    }
}

}  // namespace cfx
