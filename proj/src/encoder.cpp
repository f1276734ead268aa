#include "cfx/encoder.hpp"

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

void TrainConfig::validate() const {
    if (k == 0 || epochs == 0 || batch_size == 0) {
        throw DataError("train config: k, epochs, and batch_size must be positive");
    }
    if (!(learning_rate > 0.0) || !(init_scale > 0.0)) {
        throw DataError("train config: learning_rate and init_scale must be positive");
    }
}

std::size_t CheckerModel::token_index(const std::string& surface) const {
    auto it = vocab.find(surface);
    return it == vocab.end() ? 0 : it->second;
}

std::vector<std::size_t> CheckerModel::phrase_indices(const NounPhrase& np) const {
    std::vector<std::size_t> indices;
    indices.reserve(np.modifiers.size() + 1);
    for (const std::string& m : np.modifiers) indices.push_back(token_index(m));
    indices.push_back(token_index(np.head));
    return indices;
}

std::map<std::string, std::size_t> build_vocab(const Corpus& corpus) {
    std::set<std::string> surfaces;
    for (const ImageRecord& rec : corpus.records) {
        for (const Description& desc : rec.descriptions) {
            for (const Token& tok : desc.tokens) surfaces.insert(tok.surface);
        }
    }
    std::map<std::string, std::size_t> vocab;
    std::size_t next = 1;
    for (const std::string& s : surfaces) vocab[s] = next++;
    return vocab;
}

CheckerModel init_checker(std::map<std::string, std::size_t> vocab, std::size_t d,
                          const TrainConfig& cfg) {
    CheckerModel m;
    m.vocab = std::move(vocab);
    m.d = d;
    m.k = cfg.k;
    const std::size_t v = m.vocab.size() + 1;
    m.embedding = Matrix(v, m.k);
    m.w_x = Matrix(m.k, m.k);
    m.w_h = Matrix(m.k, m.k);
    m.b_r.assign(m.k, 0.0);
    m.w_p = Matrix(m.k, d);
    m.b_p.assign(m.k, 0.0);
    m.w_o.assign(m.k, 0.0);
    m.b_o = 0.0;

    Rng rng(cfg.seed);
    for (ParamView& view : param_views(m)) {
        for (std::size_t i = 0; i < view.size; ++i) {
            view.data[i] = rng.uniform(-cfg.init_scale, cfg.init_scale);
        }
    }
    return m;
}

namespace {

struct Forward {
    std::vector<std::size_t> tokens;
    std::vector<std::vector<double>> h;  // h[0] = 0, h[i] after token i-1
    std::vector<double> v;               // projected image features
    std::vector<double> z;               // v * t elementwise
    std::vector<double> z_hat;           // normalized (or zero)
    double z_norm = 0.0;
    double logit = 0.0;
    double score = 0.0;
};

Forward run_forward(const CheckerModel& m, const std::vector<double>& features,
                    const NounPhrase& np) {
    if (features.size() != m.d) {
        throw DataError("feature dimension mismatch: model expects " + std::to_string(m.d) +
                        ", got " + std::to_string(features.size()));
    }
    Forward f;
    f.tokens = m.phrase_indices(np);
    const std::size_t k = m.k;

    f.h.assign(f.tokens.size() + 1, std::vector<double>(k, 0.0));
    std::vector<double> a(k);
    for (std::size_t i = 0; i < f.tokens.size(); ++i) {
        const double* x = m.embedding.row(f.tokens[i]);
        matvec(m.w_x, x, a.data());
        for (std::size_t r = 0; r < k; ++r) {
            const double* wh_row = m.w_h.row(r);
            double acc = a[r] + m.b_r[r];
            const double* hprev = f.h[i].data();
            for (std::size_t c = 0; c < k; ++c) acc += wh_row[c] * hprev[c];
            f.h[i + 1][r] = std::tanh(acc);
        }
    }

    f.v.assign(k, 0.0);
    matvec(m.w_p, features.data(), f.v.data());
    for (std::size_t r = 0; r < k; ++r) f.v[r] += m.b_p[r];

    const std::vector<double>& t = f.h.back();
    f.z.resize(k);
    for (std::size_t r = 0; r < k; ++r) f.z[r] = f.v[r] * t[r];

    f.z_norm = norm2(f.z.data(), k);
    f.z_hat.assign(k, 0.0);
    if (f.z_norm > kNormEps) {
        for (std::size_t r = 0; r < k; ++r) f.z_hat[r] = f.z[r] / f.z_norm;
    }

    f.logit = dot(m.w_o.data(), f.z_hat.data(), k) + m.b_o;
    f.score = sigmoid(f.logit);
    return f;
}

}  // namespace

std::vector<double> encode_text(const CheckerModel& model, const NounPhrase& np) {
    const std::vector<std::size_t> tokens = model.phrase_indices(np);
    const std::size_t k = model.k;
    std::vector<double> h(k, 0.0);
    std::vector<double> a(k);
    std::vector<double> next(k);
    for (std::size_t idx : tokens) {
        matvec(model.w_x, model.embedding.row(idx), a.data());
        for (std::size_t r = 0; r < k; ++r) {
            const double* wh_row = model.w_h.row(r);
            double acc = a[r] + model.b_r[r];
            for (std::size_t c = 0; c < k; ++c) acc += wh_row[c] * h[c];
            next[r] = std::tanh(acc);
        }
        h.swap(next);
    }
    return h;
}

double fuse_score(const CheckerModel& model, const std::vector<double>& features,
                  const NounPhrase& np) {
    return run_forward(model, features, np).score;
}

CheckerGrads CheckerGrads::zeros_like(const CheckerModel& model) {
    CheckerGrads g;
    g.embedding = Matrix(model.embedding.rows, model.embedding.cols);
    g.w_x = Matrix(model.k, model.k);
    g.w_h = Matrix(model.k, model.k);
    g.b_r.assign(model.k, 0.0);
    g.w_p = Matrix(model.k, model.d);
    g.b_p.assign(model.k, 0.0);
    g.w_o.assign(model.k, 0.0);
    g.b_o = 0.0;
    return g;
}

void CheckerGrads::zero() {
    embedding.fill(0.0);
    w_x.fill(0.0);
    w_h.fill(0.0);
    std::fill(b_r.begin(), b_r.end(), 0.0);
    w_p.fill(0.0);
    std::fill(b_p.begin(), b_p.end(), 0.0);
    std::fill(w_o.begin(), w_o.end(), 0.0);
    b_o = 0.0;
}

std::vector<ParamView> param_views(CheckerModel& m) {
    return {
        {"embedding", m.embedding.a.data(), m.embedding.a.size()},
        {"w_x", m.w_x.a.data(), m.w_x.a.size()},
        {"w_h", m.w_h.a.data(), m.w_h.a.size()},
        {"b_r", m.b_r.data(), m.b_r.size()},
        {"w_p", m.w_p.a.data(), m.w_p.a.size()},
        {"b_p", m.b_p.data(), m.b_p.size()},
        {"w_o", m.w_o.data(), m.w_o.size()},
        {"b_o", &m.b_o, 1},
    };
}

std::vector<ParamView> grad_views(CheckerGrads& g) {
    return {
        {"embedding", g.embedding.a.data(), g.embedding.a.size()},
        {"w_x", g.w_x.a.data(), g.w_x.a.size()},
        {"w_h", g.w_h.a.data(), g.w_h.a.size()},
        {"b_r", g.b_r.data(), g.b_r.size()},
        {"w_p", g.w_p.a.data(), g.w_p.a.size()},
        {"b_p", g.b_p.data(), g.b_p.size()},
        {"w_o", g.w_o.data(), g.w_o.size()},
        {"b_o", &g.b_o, 1},
    };
}

double checker_loss(const CheckerModel& model, const std::vector<double>& features,
                    const NounPhrase& np, double label) {
    const Forward f = run_forward(model, features, np);
    return bce_from_logit(f.logit, label);
}

double checker_loss_and_grads(const CheckerModel& model, const std::vector<double>& features,
                              const NounPhrase& np, double label, CheckerGrads& grads) {
    const Forward f = run_forward(model, features, np);
    const std::size_t k = model.k;

    const double d_logit = f.score - label;

    for (std::size_t r = 0; r < k; ++r) grads.w_o[r] += d_logit * f.z_hat[r];
    grads.b_o += d_logit;

    // d z_hat = d_logit * w_o; through normalization (identity gradient on
    // the eps-guard branch where z_hat is constant zero).
    std::vector<double> dz(k, 0.0);
    if (f.z_norm > kNormEps) {
        double g_dot_zhat = 0.0;
        for (std::size_t r = 0; r < k; ++r) g_dot_zhat += d_logit * model.w_o[r] * f.z_hat[r];
        for (std::size_t r = 0; r < k; ++r) {
            dz[r] = (d_logit * model.w_o[r] - g_dot_zhat * f.z_hat[r]) / f.z_norm;
        }
    }

    const std::vector<double>& t = f.h.back();
    std::vector<double> dv(k);
    std::vector<double> dt(k);
    for (std::size_t r = 0; r < k; ++r) {
        dv[r] = dz[r] * t[r];
        dt[r] = dz[r] * f.v[r];
    }

    outer_add(grads.w_p, dv.data(), features.data());
    for (std::size_t r = 0; r < k; ++r) grads.b_p[r] += dv[r];

    // Backprop through time.
    std::vector<double> delta = dt;
    std::vector<double> da(k);
    std::vector<double> delta_prev(k);
    for (std::size_t i = f.tokens.size(); i-- > 0;) {
        const std::vector<double>& h_new = f.h[i + 1];
        for (std::size_t r = 0; r < k; ++r) da[r] = delta[r] * (1.0 - h_new[r] * h_new[r]);

        const double* x = model.embedding.row(f.tokens[i]);
        outer_add(grads.w_x, da.data(), x);
        outer_add(grads.w_h, da.data(), f.h[i].data());
        for (std::size_t r = 0; r < k; ++r) grads.b_r[r] += da[r];

        double* de = grads.embedding.row(f.tokens[i]);
        matvec_transpose_add(model.w_x, da.data(), de);

        std::fill(delta_prev.begin(), delta_prev.end(), 0.0);
        matvec_transpose_add(model.w_h, da.data(), delta_prev.data());
        delta.swap(delta_prev);
    }

    return bce_from_logit(f.logit, label);
}

TrainedChecker train_checker(const Corpus& corpus, const std::vector<TrainingPair>& pairs,
                             const TrainConfig& cfg) {
    cfg.validate();
    if (pairs.empty()) throw EmptyPairsError("train_checker: no training pairs");

    std::vector<const std::vector<double>*> pair_features(pairs.size());
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        pair_features[i] = &corpus.at(pairs[i].image_id).features;
    }

    TrainedChecker result;
    result.model = init_checker(build_vocab(corpus), corpus.feature_dim, cfg);
    CheckerModel& model = result.model;

    Rng rng(mix_seed(cfg.seed, "shuffle"));
    std::vector<std::size_t> order(pairs.size());
    std::iota(order.begin(), order.end(), 0);

    CheckerGrads grads = CheckerGrads::zeros_like(model);
    const auto views_g = grad_views(grads);
    const auto views_p = param_views(model);

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(order);
        double epoch_loss_sum = 0.0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(start + cfg.batch_size, order.size());
            grads.zero();
            double batch_loss = 0.0;
            for (std::size_t i = start; i < end; ++i) {
                const TrainingPair& pair = pairs[order[i]];
                batch_loss += checker_loss_and_grads(model, *pair_features[order[i]], pair.phrase,
                                                     pair.positive ? 1.0 : 0.0, grads);
            }
            epoch_loss_sum += batch_loss;
            const double scale = cfg.learning_rate / static_cast<double>(end - start);
            for (std::size_t s = 0; s < views_p.size(); ++s) {
                double* p = views_p[s].data;
                const double* g = views_g[s].data;
                for (std::size_t i = 0; i < views_p[s].size; ++i) p[i] -= scale * g[i];
            }
        }
        const double epoch_loss = epoch_loss_sum / static_cast<double>(pairs.size());
        if (!std::isfinite(epoch_loss)) {
            throw NonFiniteLossError("train_checker: loss diverged at epoch " +
                                     std::to_string(epoch) + "; try a lower learning rate");
        }
        result.epoch_loss.push_back(epoch_loss);
    }
    return result;
}

double grad_check(CheckerModel model, const std::vector<double>& features, const NounPhrase& np,
                  double label, double step) {
    CheckerGrads grads = CheckerGrads::zeros_like(model);
    checker_loss_and_grads(model, features, np, label, grads);

    const auto views_p = param_views(model);
    auto views_g = grad_views(grads);

    double max_rel = 0.0;
    for (std::size_t s = 0; s < views_p.size(); ++s) {
        for (std::size_t i = 0; i < views_p[s].size; ++i) {
            double& value = views_p[s].data[i];
            const double saved = value;
            value = saved + step;
            const double loss_plus = checker_loss(model, features, np, label);
            value = saved - step;
            const double loss_minus = checker_loss(model, features, np, label);
            value = saved;

            const double numeric = (loss_plus - loss_minus) / (2.0 * step);
            const double analytic = views_g[s].data[i];
            const double rel = std::fabs(analytic - numeric) /
                               std::fmax(1e-8, std::fabs(analytic) + std::fabs(numeric));
            max_rel = std::fmax(max_rel, rel);
        }
    }
    return max_rel;
}

namespace {

json vocab_to_json(const std::map<std::string, std::size_t>& vocab) {
    json j = json::object();
    for (const auto& [surface, index] : vocab) j[surface] = index;
    return j;
}

std::map<std::string, std::size_t> vocab_from_json(const json& j) {
    std::map<std::string, std::size_t> vocab;
    for (auto it = j.begin(); it != j.end(); ++it) vocab[it.key()] = it.value().get<std::size_t>();
    return vocab;
}

std::vector<double> params_at(const json& j, const char* name, std::size_t expected) {
    const auto values = j.at("params").at(name).get<std::vector<double>>();
    if (values.size() != expected) {
        throw DataError(std::string("checker model: parameter ") + name + " has " +
                        std::to_string(values.size()) + " entries, expected " +
                        std::to_string(expected));
    }
    for (double v : values) {
        if (!std::isfinite(v)) throw DataError(std::string("non-finite parameter in ") + name);
    }
    return values;
}

}  // namespace

void save_checker(const CheckerModel& model, const std::string& path) {
    json j;
    j["format"] = "cfx-checker-v1";
    j["dims"] = {{"d", model.d}, {"k", model.k}, {"vocab_size", model.embedding.rows}};
    j["vocab"] = vocab_to_json(model.vocab);
    json params = json::object();
    CheckerModel& mutable_model = const_cast<CheckerModel&>(model);
    for (const ParamView& view : param_views(mutable_model)) {
        params[view.name] = std::vector<double>(view.data, view.data + view.size);
    }
    j["params"] = std::move(params);

    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write checker model: " + path);
    out << j.dump() << '\n';
    if (!out) throw IoError("failed writing checker model: " + path);
}

CheckerModel load_checker(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checker model: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ParseError(std::string("checker model: ") + e.what());
    }
    try {
        if (j.at("format").get<std::string>() != "cfx-checker-v1") {
            throw DataError("checker model: unexpected format tag");
        }
        CheckerModel m;
        m.d = j.at("dims").at("d").get<std::size_t>();
        m.k = j.at("dims").at("k").get<std::size_t>();
        const std::size_t v = j.at("dims").at("vocab_size").get<std::size_t>();
        m.vocab = vocab_from_json(j.at("vocab"));
        if (v != m.vocab.size() + 1) {
            throw DataError("checker model: vocab_size disagrees with vocab table");
        }
        m.embedding = Matrix(v, m.k);
        m.embedding.a = params_at(j, "embedding", v * m.k);
        m.w_x = Matrix(m.k, m.k);
        m.w_x.a = params_at(j, "w_x", m.k * m.k);
        m.w_h = Matrix(m.k, m.k);
        m.w_h.a = params_at(j, "w_h", m.k * m.k);
        m.b_r = params_at(j, "b_r", m.k);
        m.w_p = Matrix(m.k, m.d);
        m.w_p.a = params_at(j, "w_p", m.k * m.d);
        m.b_p = params_at(j, "b_p", m.k);
        m.w_o = params_at(j, "w_o", m.k);
        m.b_o = params_at(j, "b_o", 1)[0];
        return m;
    } catch (const json::exception& e) {
        throw ParseError(std::string("checker model: ") + e.what());
    }
}

}  // namespace cfx
