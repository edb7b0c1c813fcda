#pragma once

// Independent reference implementations used by the unit and acceptance
// suites. They favour obviousness over speed: dense matrices, full sorts and
// direct formula evaluation.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gda4rec/dataset.hpp"
#include "gda4rec/sparse.hpp"

namespace oracle {

using Dense = Eigen::MatrixXd;

inline Dense dense_interactions(const gda4rec::InteractionSet& set) {
    Dense r = Dense::Zero(static_cast<Eigen::Index>(set.num_users), static_cast<Eigen::Index>(set.num_items));
    for (const auto& p : set.pairs) {
        r(p.user, p.item) = 1.0;
    }
    return r;
}

inline Dense sym_normalize(const Dense& m) {
    Eigen::VectorXd deg = m.rowwise().sum();
    Dense out = Dense::Zero(m.rows(), m.cols());
    for (Eigen::Index a = 0; a < m.rows(); ++a) {
        for (Eigen::Index b = 0; b < m.cols(); ++b) {
            if (m(a, b) != 0.0) {
                out(a, b) = m(a, b) / (std::sqrt(deg(a)) * std::sqrt(deg(b)));
            }
        }
    }
    return out;
}

/// Co-occurrence counts with the diagonal zeroed and entries below gamma zeroed.
inline Dense filtered_cooccurrence(const Dense& r, double gamma) {
    Dense c = r.transpose() * r;
    for (Eigen::Index a = 0; a < c.rows(); ++a) {
        c(a, a) = 0.0;
        for (Eigen::Index b = 0; b < c.cols(); ++b) {
            if (c(a, b) < gamma) {
                c(a, b) = 0.0;
            }
        }
    }
    return c;
}

inline Dense complement(const Dense& r, double gamma) { return sym_normalize(filtered_cooccurrence(r, gamma)); }

inline Dense bipartite_adjacency(const Dense& r) {
    const Eigen::Index m = r.rows();
    const Eigen::Index n = r.cols();
    Dense a = Dense::Zero(m + n, m + n);
    a.topRightCorner(m, n) = r;
    a.bottomLeftCorner(n, m) = r.transpose();
    return a;
}

/// Plain LightGCN: mean of A^k E for k = 1..L.
inline Dense lightgcn(const Dense& a_norm, const Dense& e, std::size_t layers) {
    Dense z = e;
    Dense total = Dense::Zero(e.rows(), e.cols());
    for (std::size_t k = 0; k < layers; ++k) {
        z = a_norm * z;
        total += z;
    }
    return total / static_cast<double>(layers);
}

struct Metrics {
    double precision = 0.0;
    double recall = 0.0;
    double ndcg = 0.0;
    std::size_t evaluated = 0;
};

/// Sorts every candidate of a score row (descending score, then ascending
/// index) and returns the first k.
inline std::vector<gda4rec::Index> full_sort_topk(const std::vector<double>& scores,
                                                  const std::set<gda4rec::Index>& exclude, std::size_t k) {
    std::vector<gda4rec::Index> items;
    for (gda4rec::Index i = 0; i < scores.size(); ++i) {
        if (!exclude.count(i)) {
            items.push_back(i);
        }
    }
    std::sort(items.begin(), items.end(), [&](gda4rec::Index a, gda4rec::Index b) {
        if (scores[a] != scores[b]) {
            return scores[a] > scores[b];
        }
        return a < b;
    });
    items.resize(std::min(items.size(), k));
    return items;
}

inline Metrics ranking_metrics(const std::vector<std::vector<gda4rec::Index>>& lists,
                               const std::vector<std::set<gda4rec::Index>>& test, std::size_t k) {
    Metrics out;
    for (std::size_t u = 0; u < lists.size(); ++u) {
        if (test[u].empty()) {
            continue;
        }
        double hits = 0.0;
        double dcg = 0.0;
        for (std::size_t pos = 0; pos < lists[u].size() && pos < k; ++pos) {
            if (test[u].count(lists[u][pos])) {
                hits += 1.0;
                dcg += 1.0 / std::log2(static_cast<double>(pos) + 2.0);
            }
        }
        double idcg = 0.0;
        for (std::size_t pos = 0; pos < std::min(test[u].size(), k); ++pos) {
            idcg += 1.0 / std::log2(static_cast<double>(pos) + 2.0);
        }
        out.precision += hits / static_cast<double>(k);
        out.recall += hits / static_cast<double>(test[u].size());
        out.ndcg += dcg / idcg;
        ++out.evaluated;
    }
    if (out.evaluated > 0) {
        const auto n = static_cast<double>(out.evaluated);
        out.precision /= n;
        out.recall /= n;
        out.ndcg /= n;
    }
    return out;
}

/// Random interaction set over an m x n grid with roughly `density` filled.
/// Every user and item index is guaranteed to appear at least once.
inline gda4rec::InteractionSet random_interactions(std::size_t m, std::size_t n, double density, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::bernoulli_distribution keep(density);
    std::set<gda4rec::Interaction> pairs;
    for (gda4rec::Index u = 0; u < m; ++u) {
        for (gda4rec::Index i = 0; i < n; ++i) {
            if (keep(rng)) {
                pairs.insert({u, i});
            }
        }
    }
    std::uniform_int_distribution<gda4rec::Index> pick_item(0, static_cast<gda4rec::Index>(n - 1));
    std::uniform_int_distribution<gda4rec::Index> pick_user(0, static_cast<gda4rec::Index>(m - 1));
    for (gda4rec::Index u = 0; u < m; ++u) {
        pairs.insert({u, pick_item(rng)});
    }
    for (gda4rec::Index i = 0; i < n; ++i) {
        pairs.insert({pick_user(rng), i});
    }
    gda4rec::InteractionSet set;
    set.num_users = m;
    set.num_items = n;
    set.pairs.assign(pairs.begin(), pairs.end());
    return set;
}

/// Writes a clustered synthetic interaction log: users in cluster c mostly
/// consume items of cluster c. Returns the number of lines written.
inline std::size_t write_clustered_log(const std::string& path, std::size_t users, std::size_t items,
                                       std::size_t per_user, std::uint64_t seed, std::size_t clusters = 4) {
    std::mt19937_64 rng(seed);
    std::ofstream out(path);
    out << "# user,item,rating\n";
    std::size_t lines = 0;
    const std::size_t block = items / clusters;
    for (std::size_t u = 0; u < users; ++u) {
        const std::size_t c = u % clusters;
        std::set<std::size_t> chosen;
        std::uniform_int_distribution<std::size_t> in_cluster(c * block, c * block + block - 1);
        std::uniform_int_distribution<std::size_t> anywhere(0, items - 1);
        std::bernoulli_distribution stray(0.15);
        while (chosen.size() < per_user) {
            chosen.insert(stray(rng) ? anywhere(rng) : in_cluster(rng));
        }
        for (auto i : chosen) {
            out << "u" << u << ",i" << i << ",5\n";
            ++lines;
        }
    }
    return lines;
}

}  // namespace oracle
