#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <thread>
#include <vector>

#include "gda4rec/dataset.hpp"
#include "gda4rec/sparse.hpp"

namespace gda4rec {

struct RankingMetrics {
    std::size_t k = 0;
    double precision = 0.0;
    double recall = 0.0;
    double ndcg = 0.0;
    std::size_t users_evaluated = 0;
    std::size_t users_skipped = 0;
};

/// Top-k items of one score row, skipping `exclude` (sorted). Higher score
/// first; ties go to the lower item index.
inline std::vector<Index> topk_row(std::span<const double> scores, std::span<const Index> exclude, std::size_t k) {
    std::vector<Index> candidates;
    candidates.reserve(scores.size());
    for (Index i = 0; i < scores.size(); ++i) {
        if (!std::binary_search(exclude.begin(), exclude.end(), i)) {
            candidates.push_back(i);
        }
    }
    const std::size_t take = std::min(k, candidates.size());
    auto better = [&](Index a, Index b) { return scores[a] != scores[b] ? scores[a] > scores[b] : a < b; };
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(take), candidates.end(),
                      better);
    candidates.resize(take);
    return candidates;
}

/// Ranks all non-training items for each user in `users` by z_u . z_i.
/// Work is split across `threads` contiguous user blocks; output order
/// follows `users`.
inline std::vector<std::vector<Index>> rank_topk(const Matrix& z_u, const Matrix& z_i, const UserItemIndex& train,
                                                 std::span<const Index> users, std::size_t k,
                                                 std::size_t threads = 1) {
    if (k > static_cast<std::size_t>(z_i.rows())) {
        throw std::invalid_argument("rank_topk: k exceeds number of items");
    }
    std::vector<std::vector<Index>> lists(users.size());
    constexpr std::size_t kBlock = 256;
    auto work = [&](std::size_t begin, std::size_t end) {
        for (std::size_t b = begin; b < end; b += kBlock) {
            const std::size_t e = std::min(end, b + kBlock);
            Matrix picked(static_cast<Eigen::Index>(e - b), z_u.cols());
            for (std::size_t r = b; r < e; ++r) {
                picked.row(static_cast<Eigen::Index>(r - b)) = z_u.row(users[r]);
            }
            Matrix scores = picked * z_i.transpose();
            for (std::size_t r = b; r < e; ++r) {
                auto row = scores.row(static_cast<Eigen::Index>(r - b));
                std::span<const double> view(row.data(), static_cast<std::size_t>(row.size()));
                std::span<const Index> exclude =
                    users[r] < train.num_users() ? train.items(users[r]) : std::span<const Index>{};
                lists[r] = topk_row(view, exclude, k);
            }
        }
    };
    threads = std::max<std::size_t>(1, std::min(threads, users.size() / kBlock + 1));
    if (threads == 1) {
        work(0, users.size());
    } else {
        std::vector<std::thread> pool;
        const std::size_t chunk = (users.size() + threads - 1) / threads;
        for (std::size_t t = 0; t < threads; ++t) {
            const std::size_t begin = t * chunk;
            const std::size_t end = std::min(users.size(), begin + chunk);
            if (begin < end) {
                pool.emplace_back(work, begin, end);
            }
        }
        for (auto& th : pool) {
            th.join();
        }
    }
    return lists;
}

/// Precision@k, Recall@k and binary-relevance NDCG@k averaged over users in
/// list order. `test[u]` must be sorted; users with an empty test set are
/// skipped and tallied.
inline RankingMetrics topk_metrics(const std::vector<std::vector<Index>>& lists,
                                   const std::vector<std::vector<Index>>& test, std::size_t k) {
    RankingMetrics out;
    out.k = k;
    for (std::size_t u = 0; u < lists.size(); ++u) {
        const auto& truth = test[u];
        if (truth.empty()) {
            ++out.users_skipped;
            continue;
        }
        double hits = 0.0;
        double dcg = 0.0;
        const std::size_t depth = std::min(k, lists[u].size());
        for (std::size_t pos = 0; pos < depth; ++pos) {
            if (std::binary_search(truth.begin(), truth.end(), lists[u][pos])) {
                hits += 1.0;
                dcg += 1.0 / std::log2(static_cast<double>(pos) + 2.0);
            }
        }
        double idcg = 0.0;
        for (std::size_t pos = 0; pos < std::min(truth.size(), k); ++pos) {
            idcg += 1.0 / std::log2(static_cast<double>(pos) + 2.0);
        }
        out.precision += hits / static_cast<double>(k);
        out.recall += hits / static_cast<double>(truth.size());
        out.ndcg += dcg / idcg;
        ++out.users_evaluated;
    }
    if (out.users_evaluated > 0) {
        const auto n = static_cast<double>(out.users_evaluated);
        out.precision /= n;
        out.recall /= n;
        out.ndcg /= n;
    }
    return out;
}

/// Test items grouped per user (sorted), indexed by user.
inline std::vector<std::vector<Index>> group_by_user(const InteractionSet& set) {
    std::vector<std::vector<Index>> grouped(set.num_users);
    for (const auto& p : set.pairs) {
        grouped[p.user].push_back(p.item);
    }
    for (auto& items : grouped) {
        std::sort(items.begin(), items.end());
    }
    return grouped;
}

/// Evaluates every user that has test items and at least one training item,
/// at each cutoff in `ks`. One ranking pass at max(ks).
inline std::vector<RankingMetrics> evaluate_ranking(const Matrix& z_u, const Matrix& z_i, const UserItemIndex& train,
                                                    const InteractionSet& test, std::span<const std::size_t> ks,
                                                    std::size_t threads = 1) {
    auto grouped = group_by_user(test);
    std::vector<Index> users;
    std::size_t no_train = 0;
    for (Index u = 0; u < grouped.size(); ++u) {
        if (grouped[u].empty()) {
            continue;
        }
        if (train.degree(u) == 0) {
            ++no_train;
            continue;
        }
        users.push_back(u);
    }
    const std::size_t max_k = *std::max_element(ks.begin(), ks.end());
    auto lists = rank_topk(z_u, z_i, train, users, max_k, threads);
    std::vector<std::vector<Index>> truth;
    truth.reserve(users.size());
    for (Index u : users) {
        truth.push_back(std::move(grouped[u]));
    }
    std::vector<RankingMetrics> out;
    for (std::size_t k : ks) {
        std::vector<std::vector<Index>> cut(lists.size());
        for (std::size_t r = 0; r < lists.size(); ++r) {
            cut[r].assign(lists[r].begin(), lists[r].begin() + static_cast<std::ptrdiff_t>(std::min(k, lists[r].size())));
        }
        RankingMetrics m = topk_metrics(cut, truth, k);
        m.users_skipped += no_train;
        out.push_back(m);
    }
    return out;
}

enum class UniformityFormula { pairwise, paper };

struct AlignmentUniformity {
    double align = 0.0;
    double uniform = 0.0;
};

namespace detail {

inline Matrix normalize_rows(const Matrix& x) {
    Matrix out = x;
    for (Eigen::Index r = 0; r < out.rows(); ++r) {
        double n = out.row(r).norm();
        if (n > 1e-12) {
            out.row(r) /= n;
        } else {
            out.row(r).setZero();
        }
    }
    return out;
}

/// log mean over distinct pairs of exp(-2 |x - y|^2).
inline double log_pairwise_gaussian(const Matrix& x) {
    if (x.rows() < 2) {
        return 0.0;
    }
    double total = 0.0;
    double count = 0.0;
    for (Eigen::Index a = 0; a < x.rows(); ++a) {
        for (Eigen::Index b = a + 1; b < x.rows(); ++b) {
            total += std::exp(-2.0 * (x.row(a) - x.row(b)).squaredNorm());
            count += 1.0;
        }
    }
    return std::log(total / count);
}

inline double log_mean_gaussian_norm(const Matrix& x) {
    double total = 0.0;
    for (Eigen::Index a = 0; a < x.rows(); ++a) {
        total += std::exp(-2.0 * x.row(a).squaredNorm());
    }
    return std::log(total / static_cast<double>(x.rows()));
}

}  // namespace detail

/// Alignment of positive pairs on the unit sphere and uniformity of the
/// user and positive-item distributions.
inline AlignmentUniformity alignment_uniformity(const Matrix& z_u, const Matrix& z_i,
                                                std::span<const Interaction> pairs,
                                                UniformityFormula formula = UniformityFormula::pairwise) {
    if (pairs.empty()) {
        throw std::invalid_argument("alignment_uniformity: no positive pairs");
    }
    Matrix users(static_cast<Eigen::Index>(pairs.size()), z_u.cols());
    Matrix items(static_cast<Eigen::Index>(pairs.size()), z_i.cols());
    for (std::size_t k = 0; k < pairs.size(); ++k) {
        users.row(static_cast<Eigen::Index>(k)) = z_u.row(pairs[k].user);
        items.row(static_cast<Eigen::Index>(k)) = z_i.row(pairs[k].item);
    }
    users = detail::normalize_rows(users);
    items = detail::normalize_rows(items);
    AlignmentUniformity out;
    out.align = (users - items).rowwise().squaredNorm().mean();
    if (formula == UniformityFormula::paper) {
        out.uniform = detail::log_mean_gaussian_norm(users) / 2.0 + detail::log_mean_gaussian_norm(items) / 2.0;
    } else {
        out.uniform = 0.5 * (detail::log_pairwise_gaussian(users) + detail::log_pairwise_gaussian(items));
    }
    return out;
}

}  // namespace gda4rec
