#pragma once

#include <algorithm>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "gda4rec/config.hpp"
#include "gda4rec/dataset.hpp"
#include "gda4rec/graphs.hpp"
#include "gda4rec/losses.hpp"
#include "gda4rec/metrics.hpp"
#include "gda4rec/model.hpp"

namespace gda4rec {

struct AdamOptions {
    double learning_rate = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    std::vector<Matrix> first;
    std::vector<Matrix> second;
    std::size_t step = 0;
};

/// One bias-corrected Adam update over every tensor in `params`.
inline void adam_step(std::span<Matrix* const> params, std::span<const Matrix> grads, AdamState& state,
                      const AdamOptions& opt) {
    if (params.size() != grads.size()) {
        throw ShapeError("adam_step: " + std::to_string(params.size()) + " parameters but " +
                         std::to_string(grads.size()) + " gradients");
    }
    if (!(opt.learning_rate > 0.0)) {
        throw ConfigError("adam_step: learning rate must be positive");
    }
    for (std::size_t k = 0; k < grads.size(); ++k) {
        if (grads[k].rows() != params[k]->rows() || grads[k].cols() != params[k]->cols()) {
            throw ShapeError("adam_step: gradient " + std::to_string(k) + " shape does not match its parameter");
        }
        if (!grads[k].allFinite()) {
            throw DivergenceError("adam_step: non-finite gradient for tensor " + std::to_string(k));
        }
    }
    if (state.first.empty()) {
        for (const Matrix* p : params) {
            state.first.push_back(Matrix::Zero(p->rows(), p->cols()));
            state.second.push_back(Matrix::Zero(p->rows(), p->cols()));
        }
    }
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double correct1 = 1.0 - std::pow(opt.beta1, t);
    const double correct2 = 1.0 - std::pow(opt.beta2, t);
    for (std::size_t k = 0; k < params.size(); ++k) {
        Matrix& m = state.first[k];
        Matrix& v = state.second[k];
        m = opt.beta1 * m + (1.0 - opt.beta1) * grads[k];
        v = opt.beta2 * v + (1.0 - opt.beta2) * grads[k].cwiseProduct(grads[k]);
        params[k]->array() -=
            opt.learning_rate * (m.array() / correct1) / ((v.array() / correct2).sqrt() + opt.eps);
    }
}

struct Triple {
    Index user;
    Index pos;
    Index neg;
};

struct BatchForward {
    JointLoss loss;
    double mmd_bandwidth = 0.0;
};

namespace detail {

inline std::vector<Index> unique_sorted(std::vector<Index> v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    return v;
}

inline std::vector<Index> offset_rows(const std::vector<Index>& items, std::size_t offset) {
    std::vector<Index> out;
    out.reserve(items.size());
    for (Index i : items) {
        out.push_back(static_cast<Index>(offset + i));
    }
    return out;
}

inline Matrix sample_prior(Eigen::Index rows, Eigen::Index cols, NoiseDistribution dist, Rng& rng) {
    Matrix out(rows, cols);
    if (dist == NoiseDistribution::gaussian) {
        std::normal_distribution<double> normal(0.0, 1.0);
        for (Eigen::Index k = 0; k < out.size(); ++k) {
            out.data()[k] = normal(rng);
        }
    } else {
        std::uniform_real_distribution<double> uniform(0.0, 1.0);
        for (Eigen::Index k = 0; k < out.size(); ++k) {
            out.data()[k] = uniform(rng);
        }
    }
    return out;
}

}  // namespace detail

/// Records the full joint objective for one batch of (user, positive,
/// negative) triples. `bandwidth` pins the MMD kernel width; otherwise the
/// median heuristic is applied to the batch.
inline BatchForward batch_loss(const ParamVars& params, const NormalizedGraph& graph, const TrainConfig& cfg,
                               std::span<const Triple> batch, Rng& rng,
                               std::optional<double> bandwidth = std::nullopt) {
    if (batch.empty()) {
        throw std::invalid_argument("batch_loss: empty batch");
    }
    ad::Tape& tape = *params.embedding.tape();
    const std::size_t m = graph.num_users;
    const std::size_t B = batch.size();

    EncodeOptions opts{cfg.L, cfg.noise, cfg.complement_enabled};
    EncoderOutput enc = encode(params, graph, opts, rng);

    std::vector<Index> users;
    std::vector<Index> pos_rows;
    std::vector<Index> neg_rows;
    std::vector<Index> pos_items;
    users.reserve(B);
    pos_rows.reserve(B);
    neg_rows.reserve(B);
    for (const auto& t : batch) {
        users.push_back(t.user);
        pos_rows.push_back(static_cast<Index>(m + t.pos));
        neg_rows.push_back(static_cast<Index>(m + t.neg));
        pos_items.push_back(t.pos);
    }

    LossTerms terms;
    const ad::Var& z = enc.ui.average;
    ad::Var zu = ad::gather_rows(z, users);
    terms.rec = bpr_loss(ad::row_dot(zu, ad::gather_rows(z, pos_rows)), ad::row_dot(zu, ad::gather_rows(z, neg_rows)));
    terms.reg = l2_reg({ad::gather_rows(params.embedding, users), ad::gather_rows(params.embedding, pos_rows),
                        ad::gather_rows(params.embedding, neg_rows)},
                       cfg.reg_coeff / static_cast<double>(B));

    if (cfg.lambda > 0.0) {
        auto uniq_users = detail::unique_sorted(users);
        auto uniq_items = detail::unique_sorted(pos_items);
        auto item_rows = detail::offset_rows(uniq_items, m);
        auto prepare = [&](const ad::Var& v) { return cfg.cl_normalize ? ad::row_l2_normalize(v) : v; };
        auto pair_for = [&](const ChannelOutput& ch, const std::vector<Index>& rows) {
            return ContrastPair{prepare(ad::gather_rows(ch.view(cfg.cl_view_a), rows)),
                                prepare(ad::gather_rows(ch.view(cfg.cl_view_b), rows))};
        };
        std::vector<ContrastPair> classes{pair_for(enc.ui, uniq_users), pair_for(enc.ui, item_rows)};
        if (enc.has_complement) {
            classes.push_back(pair_for(enc.comp, uniq_items));
        }
        terms.cl = multi_pair_cl(classes, cfg.tau);
    }

    BatchForward out;
    if (cfg.aug_enabled && cfg.noise.mode == NoiseMode::generative) {
        const NoiseBlock& block = enc.ui.noise.front();
        std::vector<Interaction> pairs;
        pairs.reserve(2 * B);
        Matrix target(static_cast<Eigen::Index>(2 * B), 1);
        for (std::size_t k = 0; k < B; ++k) {
            pairs.push_back({batch[k].user, batch[k].pos});
            target(static_cast<Eigen::Index>(k), 0) = 1.0;
        }
        for (std::size_t k = 0; k < B; ++k) {
            pairs.push_back({batch[k].user, batch[k].neg});
            target(static_cast<Eigen::Index>(B + k), 0) = 0.0;
        }
        terms.recon = recon_loss(reconstruct(block.sample, params.reconstructor, m, pairs), tape.constant(target));

        std::vector<Index> nodes = detail::unique_sorted(users);
        for (Index r : detail::unique_sorted([&] {
                 std::vector<Index> items = pos_rows;
                 items.insert(items.end(), neg_rows.begin(), neg_rows.end());
                 return items;
             }())) {
            nodes.push_back(r);
        }
        if (cfg.ddl == DdlKind::kl) {
            terms.ddl = kl_loss(ad::gather_rows(block.mu, nodes), ad::gather_rows(block.sigma2, nodes), cfg.kl_formula);
        } else {
            ad::Var generated = ad::gather_rows(block.sample, nodes);
            Matrix prior = detail::sample_prior(generated.rows(), generated.cols(), cfg.noise.distribution, rng);
            out.mmd_bandwidth = bandwidth ? *bandwidth : median_bandwidth(generated.value(), prior);
            terms.ddl = mmd_loss(generated, tape.constant(std::move(prior)), out.mmd_bandwidth);
        }
    }
    out.loss = joint_loss(terms, cfg.lambda);
    return out;
}

inline AdamOptions adam_options(const TrainConfig& cfg) {
    return {cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps};
}

/// One pass over the shuffled training positives. Returns per-component means
/// over batches.
inline LossReport train_epoch(ModelParams& params, AdamState& adam, const InteractionSet& train,
                              const UserItemIndex& index, const NormalizedGraph& graph, const TrainConfig& cfg,
                              Rng& rng) {
    std::vector<Interaction> positives = train.pairs;
    std::shuffle(positives.begin(), positives.end(), rng);
    const std::size_t per_batch = cfg.batch_size;
    LossReport sum;
    std::size_t batches = 0;
    auto slots = params.tensors();
    std::vector<Matrix*> tensors;
    for (auto& [name, ptr] : slots) {
        tensors.push_back(ptr);
    }
    for (std::size_t start = 0; start < positives.size(); start += per_batch) {
        const std::size_t end = std::min(positives.size(), start + per_batch);
        std::vector<Triple> batch;
        batch.reserve((end - start) * cfg.negatives);
        for (std::size_t k = start; k < end; ++k) {
            const auto& p = positives[k];
            for (Index neg : sample_negatives(index, p.user, cfg.negatives, rng)) {
                batch.push_back({p.user, p.item, neg});
            }
        }
        ad::Tape tape;
        ParamVars vars = record_params(tape, params);
        BatchForward fwd = batch_loss(vars, graph, cfg, batch, rng);
        tape.backward(fwd.loss.total);
        std::vector<Matrix> grads;
        for (const auto& v : vars.flat()) {
            grads.push_back(tape.gradient(v));
        }
        adam_step(tensors, grads, adam, adam_options(cfg));
        const auto& r = fwd.loss.report;
        sum.rec += r.rec;
        sum.cl += r.cl;
        sum.recon += r.recon;
        sum.ddl += r.ddl;
        sum.reg += r.reg;
        sum.total += r.total;
        ++batches;
    }
    const double n = static_cast<double>(std::max<std::size_t>(batches, 1));
    return {sum.rec / n, sum.cl / n, sum.recon / n, sum.ddl / n, sum.reg / n, sum.total / n};
}

inline constexpr std::size_t kReportCutoffs[] = {5, 10, 20};

inline Embeddings eval_embeddings(const ModelParams& params, const NormalizedGraph& graph, const TrainConfig& cfg) {
    NoiseConfig noise = cfg.noise;
    if (cfg.eval_noise == EvalNoise::off) {
        noise.mode = NoiseMode::none;
    }
    return infer_embeddings(params, graph, cfg.L, noise, cfg.seed);
}

struct HistoryRow {
    std::size_t epoch = 0;
    std::size_t step = 0;  // optimizer steps taken so far
    LossReport loss;
    std::optional<double> recall20;
    std::optional<double> ndcg20;
};

struct FitResult {
    ModelParams best;
    std::vector<HistoryRow> history;
    std::size_t best_epoch = 0;
    double best_recall20 = -1.0;
    std::vector<RankingMetrics> metrics;  // best checkpoint at k = 5, 10, 20
};

struct FitHooks {
    /// Called after every epoch with the current parameters.
    std::function<void(std::size_t epoch, const ModelParams&, const NormalizedGraph&)> on_epoch;
    /// Called with each history row once it is complete.
    std::function<void(const HistoryRow&)> on_history;
};

/// Everything derived from one training fold.
struct FoldContext {
    const FoldSplit* fold = nullptr;
    NormalizedGraph graph;
    UserItemIndex index;

    FoldContext(const FoldSplit& f, const TrainConfig& cfg)
        : fold(&f), graph(build_graph(f.train, cfg.gamma, cfg.filter_enabled)), index(f.train) {}
};

inline std::vector<RankingMetrics> evaluate_fold(const ModelParams& params, const FoldContext& ctx,
                                                 const TrainConfig& cfg) {
    Embeddings emb = eval_embeddings(params, ctx.graph, cfg);
    return evaluate_ranking(emb.users, emb.items, ctx.index, ctx.fold->test, kReportCutoffs, cfg.threads);
}

/// Trains on the fold's training split, evaluating Recall@20 on its test
/// split every eval_interval epochs (and after the last epoch). Stops after
/// `patience` evaluations without improvement and returns the best
/// parameters seen.
inline FitResult fit(const TrainConfig& cfg, const FoldSplit& fold, const FitHooks& hooks = {}) {
    validate(cfg);
    FoldContext ctx(fold, cfg);
    const std::uint64_t seed = cfg.seed + fold.fold_index;
    ModelParams params = init_params(fold.train.num_users, fold.train.num_items, cfg.d, cfg.h, seed);
    AdamState adam;
    Rng rng(seed ^ 0x9e3779b97f4a7c15ULL);
    FitResult result;
    result.best = params;
    std::size_t stale = 0;
    for (std::size_t epoch = 1; epoch <= cfg.epochs_max; ++epoch) {
        HistoryRow row;
        row.epoch = epoch;
        row.loss = train_epoch(params, adam, fold.train, ctx.index, ctx.graph, cfg, rng);
        row.step = adam.step;
        if (hooks.on_epoch) {
            hooks.on_epoch(epoch, params, ctx.graph);
        }
        if (epoch % cfg.eval_interval == 0 || epoch == cfg.epochs_max) {
            Embeddings emb = eval_embeddings(params, ctx.graph, cfg);
            const std::size_t k20[] = {20};
            auto m = evaluate_ranking(emb.users, emb.items, ctx.index, fold.test, k20, cfg.threads).front();
            row.recall20 = m.recall;
            row.ndcg20 = m.ndcg;
            if (m.recall > result.best_recall20) {
                result.best_recall20 = m.recall;
                result.best_epoch = epoch;
                result.best = params;
                stale = 0;
            } else {
                ++stale;
            }
        }
        result.history.push_back(row);
        if (hooks.on_history) {
            hooks.on_history(row);
        }
        if (stale >= cfg.patience) {
            break;
        }
    }
    result.metrics = evaluate_fold(result.best, ctx, cfg);
    return result;
}

}  // namespace gda4rec
