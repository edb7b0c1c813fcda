#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "gda4rec/dataset.hpp"
#include "gda4rec/diffcore.hpp"
#include "gda4rec/graphs.hpp"

namespace gda4rec {

/// Three affine layers with GELU between them (linear output).
struct Mlp {
    std::array<Matrix, 3> weight;
    std::array<Matrix, 3> bias;  // 1 x out
};

struct ModelParams {
    std::size_t num_users = 0;
    std::size_t num_items = 0;
    std::size_t dim = 0;
    std::size_t hidden = 0;
    std::uint64_t seed = 0;
    Matrix embedding;  // rows [0, m) users, [m, m+n) items
    Mlp generator;     // d -> h -> h -> 2d (mean | log-variance)
    Mlp reconstructor; // d -> h -> h -> d

    /// Every trainable tensor in a fixed order shared by the optimizer and the
    /// checkpoint format.
    std::vector<std::pair<std::string, Matrix*>> tensors() {
        std::vector<std::pair<std::string, Matrix*>> out{{"embedding", &embedding}};
        for (auto [name, mlp] : {std::pair{"generator", &generator}, std::pair{"reconstructor", &reconstructor}}) {
            for (std::size_t l = 0; l < 3; ++l) {
                out.emplace_back(std::string(name) + ".w" + std::to_string(l), &mlp->weight[l]);
                out.emplace_back(std::string(name) + ".b" + std::to_string(l), &mlp->bias[l]);
            }
        }
        return out;
    }

    std::vector<std::pair<std::string, const Matrix*>> tensors() const {
        std::vector<std::pair<std::string, const Matrix*>> out;
        for (auto& [name, ptr] : const_cast<ModelParams*>(this)->tensors()) {
            out.emplace_back(name, ptr);
        }
        return out;
    }

    friend bool operator==(const ModelParams& a, const ModelParams& b) {
        if (a.num_users != b.num_users || a.num_items != b.num_items || a.dim != b.dim || a.hidden != b.hidden ||
            a.seed != b.seed) {
            return false;
        }
        auto ta = a.tensors();
        auto tb = b.tensors();
        for (std::size_t k = 0; k < ta.size(); ++k) {
            const Matrix& x = *ta[k].second;
            const Matrix& y = *tb[k].second;
            if (x.rows() != y.rows() || x.cols() != y.cols() || !(x.array() == y.array()).all()) {
                return false;
            }
        }
        return true;
    }
};

namespace detail {

inline Matrix xavier_uniform(Eigen::Index rows, Eigen::Index cols, double fan_in, double fan_out, Rng& rng) {
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Matrix m(rows, cols);
    for (Eigen::Index k = 0; k < m.size(); ++k) {
        m.data()[k] = dist(rng);
    }
    return m;
}

inline Mlp init_mlp(std::size_t in, std::size_t hidden, std::size_t out, Rng& rng) {
    Mlp mlp;
    const std::array<std::size_t, 4> widths{in, hidden, hidden, out};
    for (std::size_t l = 0; l < 3; ++l) {
        auto r = static_cast<Eigen::Index>(widths[l]);
        auto c = static_cast<Eigen::Index>(widths[l + 1]);
        mlp.weight[l] = xavier_uniform(r, c, static_cast<double>(r), static_cast<double>(c), rng);
        mlp.bias[l] = Matrix::Zero(1, c);
    }
    return mlp;
}

}  // namespace detail

inline ModelParams init_params(std::size_t m, std::size_t n, std::size_t d, std::size_t h, std::uint64_t seed) {
    if (d < 1 || h < 1) {
        throw ConfigError("init_params: d and h must be >= 1");
    }
    Rng rng(seed);
    ModelParams p;
    p.num_users = m;
    p.num_items = n;
    p.dim = d;
    p.hidden = h;
    p.seed = seed;
    const auto nodes = static_cast<Eigen::Index>(m + n);
    p.embedding = detail::xavier_uniform(nodes, static_cast<Eigen::Index>(d), static_cast<double>(m + n),
                                         static_cast<double>(d), rng);
    p.generator = detail::init_mlp(d, h, 2 * d, rng);
    p.reconstructor = detail::init_mlp(d, h, d, rng);
    return p;
}

struct MlpVars {
    std::array<ad::Var, 3> weight;
    std::array<ad::Var, 3> bias;
};

/// ModelParams recorded on a tape.
struct ParamVars {
    ad::Var embedding;
    MlpVars generator;
    MlpVars reconstructor;

    /// Same order as ModelParams::tensors().
    std::vector<ad::Var> flat() const {
        std::vector<ad::Var> out{embedding};
        for (const MlpVars* mlp : {&generator, &reconstructor}) {
            for (std::size_t l = 0; l < 3; ++l) {
                out.push_back(mlp->weight[l]);
                out.push_back(mlp->bias[l]);
            }
        }
        return out;
    }
};

/// Records every parameter on `tape`; as leaves when trainable, constants otherwise.
inline ParamVars record_params(ad::Tape& tape, const ModelParams& p, bool trainable = true) {
    auto put = [&](const Matrix& m) { return trainable ? tape.leaf(m) : tape.constant(m); };
    ParamVars v;
    v.embedding = put(p.embedding);
    for (std::size_t l = 0; l < 3; ++l) {
        v.generator.weight[l] = put(p.generator.weight[l]);
        v.generator.bias[l] = put(p.generator.bias[l]);
        v.reconstructor.weight[l] = put(p.reconstructor.weight[l]);
        v.reconstructor.bias[l] = put(p.reconstructor.bias[l]);
    }
    return v;
}

/// Rebuilds ParamVars from a flat list in tensors() order.
inline ParamVars unflatten_params(std::span<const ad::Var> flat) {
    if (flat.size() != 13) {
        throw ShapeError("unflatten_params: expected 13 tensors, got " + std::to_string(flat.size()));
    }
    ParamVars v;
    v.embedding = flat[0];
    for (std::size_t l = 0; l < 3; ++l) {
        v.generator.weight[l] = flat[1 + 2 * l];
        v.generator.bias[l] = flat[2 + 2 * l];
        v.reconstructor.weight[l] = flat[7 + 2 * l];
        v.reconstructor.bias[l] = flat[8 + 2 * l];
    }
    return v;
}

inline ad::Var mlp_forward(const ad::Var& x, const MlpVars& mlp) {
    ad::Var h = x;
    for (std::size_t l = 0; l < 3; ++l) {
        h = ad::add_row_broadcast(ad::matmul(h, mlp.weight[l]), mlp.bias[l]);
        if (l < 2) {
            h = ad::gelu(h);
        }
    }
    return h;
}

enum class NoiseMode { generative, random, none };
enum class NoiseDistribution { gaussian, uniform };
/// `variance`: N = mu + sigma^2 * eps (as printed). `stddev`: N = mu + sigma * eps.
enum class NoiseScale { variance, stddev };

struct NoiseConfig {
    NoiseMode mode = NoiseMode::generative;
    NoiseDistribution distribution = NoiseDistribution::gaussian;
    NoiseScale scale = NoiseScale::variance;
    double random_variance = 0.1;  // sigma^2 for NoiseMode::random
    double magnitude = 1.0;        // multiplier on the row-normalized sample
};

struct NoiseBlock {
    bool active = false;
    ad::Var mu;
    ad::Var log_variance;  // generative mode only
    ad::Var sigma2;
    Matrix epsilon;
    ad::Var sample;
};

inline NoiseBlock generate_noise(const ad::Var& z_prev, const MlpVars& generator, Rng& rng, const NoiseConfig& cfg) {
    ad::Tape& tape = *z_prev.tape();
    const Eigen::Index rows = z_prev.rows();
    const Eigen::Index d = z_prev.cols();
    NoiseBlock block;
    if (cfg.mode == NoiseMode::none) {
        block.sample = tape.constant(Matrix::Zero(rows, d));
        return block;
    }
    block.active = true;
    block.epsilon.resize(rows, d);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (Eigen::Index k = 0; k < block.epsilon.size(); ++k) {
        block.epsilon.data()[k] = normal(rng);
    }
    ad::Var eps = tape.constant(block.epsilon);
    ad::Var spread;
    if (cfg.mode == NoiseMode::random) {
        block.mu = tape.constant(Matrix::Zero(rows, d));
        block.sigma2 = tape.constant(Matrix::Constant(rows, d, cfg.random_variance));
        spread = cfg.scale == NoiseScale::variance
                     ? block.sigma2
                     : tape.constant(Matrix::Constant(rows, d, std::sqrt(cfg.random_variance)));
    } else {
        if (generator.weight[0].rows() != d) {
            throw ShapeError("generate_noise: generator expects " + std::to_string(generator.weight[0].rows()) +
                             " input columns, embeddings have " + std::to_string(d));
        }
        ad::Var out = mlp_forward(z_prev, generator);
        if (!out.value().allFinite()) {
            throw DivergenceError("generate_noise: generator produced non-finite output");
        }
        block.mu = ad::col_slice(out, 0, d);
        block.log_variance = ad::col_slice(out, d, d);
        block.sigma2 = ad::exp(block.log_variance);
        spread = cfg.scale == NoiseScale::variance ? block.sigma2 : ad::exp(ad::scale(block.log_variance, 0.5));
    }
    block.sample = ad::add(block.mu, ad::mul(spread, eps));
    if (cfg.distribution == NoiseDistribution::uniform) {
        block.sample = ad::gelu(block.sample);
    }
    return block;
}

/// A_norm * (z_prev + magnitude * rownorm(N)).
inline ad::Var propagate(const SparseMatrix& a_norm, const ad::Var& z_prev, const NoiseBlock& noise,
                         double magnitude = 1.0) {
    if (static_cast<Eigen::Index>(a_norm.rows()) != z_prev.rows() || a_norm.rows() != a_norm.cols()) {
        throw ShapeError("propagate: operator " + a_norm.shape_string() + " does not match embeddings with " +
                         std::to_string(z_prev.rows()) + " rows");
    }
    ad::Var input = z_prev;
    if (noise.active) {
        ad::detail::require_same_shape("propagate", z_prev, noise.sample);
        input = ad::add(z_prev, ad::scale(ad::row_l2_normalize(noise.sample), magnitude));
    }
    return ad::spmm(a_norm, input);
}

/// Layer selector for contrastive views: 1..L picks that layer, 0 the average.
struct LayerView {
    std::size_t layer = 0;

    static constexpr LayerView average() { return {0}; }
    bool is_average() const { return layer == 0; }
    std::string str() const { return is_average() ? "avg" : std::to_string(layer); }
    friend bool operator==(const LayerView&, const LayerView&) = default;
};

inline LayerView parse_layer_view(const std::string& text) {
    if (text == "avg") {
        return LayerView::average();
    }
    try {
        std::size_t used = 0;
        int value = std::stoi(text, &used);
        if (used == text.size() && value >= 1) {
            return {static_cast<std::size_t>(value)};
        }
    } catch (const std::exception&) {
    }
    throw ConfigError("invalid layer view '" + text + "' (expected avg or a positive layer number)");
}

struct ChannelOutput {
    std::vector<ad::Var> layers;  // z^(1) .. z^(L)
    std::vector<NoiseBlock> noise;
    ad::Var average;

    const ad::Var& view(LayerView v) const { return v.is_average() ? average : layers.at(v.layer - 1); }
};

struct EncodeOptions {
    std::size_t layers = 3;
    NoiseConfig noise;
    bool complement = true;
};

struct EncoderOutput {
    std::size_t num_users = 0;
    std::size_t num_items = 0;
    ChannelOutput ui;    // (m+n) x d per layer
    ChannelOutput comp;  // n x d per layer; empty when the channel is off
    bool has_complement = false;

    ad::Var z_u() const { return ad::row_block(ui.average, 0, static_cast<Eigen::Index>(num_users)); }
    ad::Var z_i() const {
        return ad::row_block(ui.average, static_cast<Eigen::Index>(num_users), static_cast<Eigen::Index>(num_items));
    }
    const ad::Var& z_c() const { return comp.average; }
};

namespace detail {

inline ChannelOutput run_channel(const SparseMatrix& op, ad::Var z0, const MlpVars& generator, std::size_t layers,
                                 const NoiseConfig& noise, Rng& rng) {
    ChannelOutput ch;
    ad::Var z = std::move(z0);
    for (std::size_t k = 0; k < layers; ++k) {
        NoiseBlock block = generate_noise(z, generator, rng, noise);
        z = propagate(op, z, block, noise.magnitude);
        ch.layers.push_back(z);
        ch.noise.push_back(std::move(block));
    }
    ad::Var total = ch.layers.front();
    for (std::size_t k = 1; k < layers; ++k) {
        total = ad::add(total, ch.layers[k]);
    }
    ch.average = layers == 1 ? total : ad::scale(total, 1.0 / static_cast<double>(layers));
    return ch;
}

}  // namespace detail

/// Runs the user-item channel over graph.ui from the full embedding table and,
/// when enabled, the complement channel over graph.comp from the item rows.
/// Noise for each layer is generated from that layer's input.
inline EncoderOutput encode(const ParamVars& params, const NormalizedGraph& graph, const EncodeOptions& opts,
                            Rng& rng) {
    if (opts.layers == 0) {
        throw ConfigError("encode: number of layers must be >= 1");
    }
    EncoderOutput out;
    out.num_users = graph.num_users;
    out.num_items = graph.num_items;
    out.ui = detail::run_channel(graph.ui, params.embedding, params.generator, opts.layers, opts.noise, rng);
    if (opts.complement) {
        ad::Var items = ad::row_block(params.embedding, static_cast<Eigen::Index>(graph.num_users),
                                      static_cast<Eigen::Index>(graph.num_items));
        out.comp = detail::run_channel(graph.comp, items, params.generator, opts.layers, opts.noise, rng);
        out.has_complement = true;
    }
    return out;
}

/// Final user and item representations without recording gradients.
struct Embeddings {
    Matrix users;
    Matrix items;
};

inline Embeddings infer_embeddings(const ModelParams& params, const NormalizedGraph& graph, std::size_t layers,
                                   const NoiseConfig& noise = {NoiseMode::none}, std::uint64_t seed = 0) {
    ad::Tape tape;
    ParamVars vars = record_params(tape, params, false);
    Rng rng(seed);
    EncoderOutput out = encode(vars, graph, {layers, noise, false}, rng);
    const Matrix& z = out.ui.average.value();
    const auto m = static_cast<Eigen::Index>(graph.num_users);
    return {z.topRows(m), z.bottomRows(static_cast<Eigen::Index>(graph.num_items))};
}

/// score(u, i) = z_u[u] . z_i[i] for the requested users (|users| x n).
inline Matrix predict_scores(const Matrix& z_u, const Matrix& z_i, std::span<const Index> users) {
    Matrix picked(static_cast<Eigen::Index>(users.size()), z_u.cols());
    for (std::size_t k = 0; k < users.size(); ++k) {
        picked.row(static_cast<Eigen::Index>(k)) = z_u.row(users[k]);
    }
    return picked * z_i.transpose();
}

/// R_hat(u, i) = f_phi(N_u) . f_phi(N_i) using the user-item channel noise
/// rows (user u at row u, item i at row m + i).
inline ad::Var reconstruct(const ad::Var& noise, const MlpVars& reconstructor, std::size_t num_users,
                           std::span<const Interaction> pairs) {
    std::vector<Index> user_rows;
    std::vector<Index> item_rows;
    user_rows.reserve(pairs.size());
    item_rows.reserve(pairs.size());
    for (const auto& p : pairs) {
        user_rows.push_back(p.user);
        item_rows.push_back(static_cast<Index>(num_users + p.item));
    }
    ad::Var fu = mlp_forward(ad::gather_rows(noise, std::move(user_rows)), reconstructor);
    ad::Var fi = mlp_forward(ad::gather_rows(noise, std::move(item_rows)), reconstructor);
    return ad::row_dot(fu, fi);
}

inline nlohmann::json checkpoint_json(const ModelParams& p) {
    nlohmann::json doc;
    doc["format"] = "gda4rec-checkpoint-v1";
    doc["num_users"] = p.num_users;
    doc["num_items"] = p.num_items;
    doc["dim"] = p.dim;
    doc["hidden"] = p.hidden;
    doc["seed"] = p.seed;
    doc["tensors"] = nlohmann::json::array();
    for (const auto& [name, m] : p.tensors()) {
        std::vector<double> flat(m->data(), m->data() + m->size());
        doc["tensors"].push_back({{"name", name}, {"rows", m->rows()}, {"cols", m->cols()}, {"data", flat}});
    }
    return doc;
}

inline ModelParams params_from_json(const nlohmann::json& doc) {
    if (doc.value("format", "") != "gda4rec-checkpoint-v1") {
        throw DataError("checkpoint: unknown format");
    }
    ModelParams p;
    p.num_users = doc.at("num_users").get<std::size_t>();
    p.num_items = doc.at("num_items").get<std::size_t>();
    p.dim = doc.at("dim").get<std::size_t>();
    p.hidden = doc.at("hidden").get<std::size_t>();
    p.seed = doc.at("seed").get<std::uint64_t>();
    auto slots = p.tensors();
    const auto& tensors = doc.at("tensors");
    if (tensors.size() != slots.size()) {
        throw DataError("checkpoint: expected " + std::to_string(slots.size()) + " tensors");
    }
    for (std::size_t k = 0; k < slots.size(); ++k) {
        const auto& t = tensors[k];
        if (t.at("name").get<std::string>() != slots[k].first) {
            throw DataError("checkpoint: tensor " + std::to_string(k) + " should be " + slots[k].first);
        }
        auto rows = t.at("rows").get<Eigen::Index>();
        auto cols = t.at("cols").get<Eigen::Index>();
        auto data = t.at("data").get<std::vector<double>>();
        if (static_cast<Eigen::Index>(data.size()) != rows * cols) {
            throw DataError("checkpoint: tensor " + slots[k].first + " has wrong element count");
        }
        *slots[k].second = Eigen::Map<const Matrix>(data.data(), rows, cols);
    }
    return p;
}

inline void save_checkpoint(const std::string& path, const ModelParams& p) {
    std::ofstream out(path);
    if (!out) {
        throw DataError("cannot write checkpoint: " + path);
    }
    out << checkpoint_json(p).dump() << '\n';
}

inline ModelParams load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot read checkpoint: " + path);
    }
    return params_from_json(nlohmann::json::parse(in));
}

}  // namespace gda4rec
