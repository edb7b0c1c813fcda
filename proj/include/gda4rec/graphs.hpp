#pragma once

#include <cmath>
#include <vector>

#include "gda4rec/dataset.hpp"
#include "gda4rec/sparse.hpp"

namespace gda4rec {

/// Binary m x n interaction matrix R.
inline SparseMatrix build_interaction_matrix(const InteractionSet& train) {
    if (train.empty()) {
        throw DataError("build_interaction_matrix: empty training set");
    }
    std::vector<Triplet> entries;
    entries.reserve(train.size());
    for (const auto& p : train.pairs) {
        entries.push_back({p.user, p.item, 1.0});
    }
    auto r = SparseMatrix::from_triplets(train.num_users, train.num_items, std::move(entries));
    // Duplicates would have summed to 2; fold views are already deduplicated.
    for (double v : r.values()) {
        if (v != 1.0) {
            throw DataError("build_interaction_matrix: duplicate interaction in training set");
        }
    }
    return r;
}

/// Bipartite block matrix [[0, R], [R^T, 0]] of size (m+n) x (m+n).
inline SparseMatrix build_adjacency(const SparseMatrix& r) {
    const std::size_t m = r.rows();
    const std::size_t n = r.cols();
    std::vector<Triplet> entries;
    entries.reserve(2 * r.nnz());
    for (std::size_t u = 0; u < m; ++u) {
        for (std::size_t k = r.row_begin(u); k < r.row_end(u); ++k) {
            auto item_node = static_cast<Index>(m + r.col_indices()[k]);
            entries.push_back({static_cast<Index>(u), item_node, r.values()[k]});
            entries.push_back({item_node, static_cast<Index>(u), r.values()[k]});
        }
    }
    return SparseMatrix::from_triplets(m + n, m + n, std::move(entries));
}

/// D^{-1/2} M D^{-1/2} with D the row-sum degree. Zero-degree rows stay empty.
inline SparseMatrix sym_normalize(const SparseMatrix& mat) {
    if (mat.rows() != mat.cols()) {
        throw ShapeError("sym_normalize: matrix must be square, got " + mat.shape_string());
    }
    for (double v : mat.values()) {
        if (v < 0.0 || !std::isfinite(v)) {
            throw DataError("sym_normalize: entries must be finite and nonnegative");
        }
    }
    auto degree = mat.row_sums();
    std::vector<double> inv_sqrt(degree.size(), 0.0);
    for (std::size_t a = 0; a < degree.size(); ++a) {
        if (degree[a] > 0.0) {
            inv_sqrt[a] = 1.0 / std::sqrt(degree[a]);
        }
    }
    auto offsets = mat.row_offsets();
    auto columns = mat.col_indices();
    std::vector<double> values(mat.nnz());
    for (std::size_t a = 0; a < mat.rows(); ++a) {
        for (std::size_t k = mat.row_begin(a); k < mat.row_end(a); ++k) {
            values[k] = mat.values()[k] * inv_sqrt[a] * inv_sqrt[columns[k]];
        }
    }
    return SparseMatrix::from_csr(mat.rows(), mat.cols(), std::move(offsets), std::move(columns), std::move(values));
}

/// Off-diagonal item co-occurrence counts of R^T R, with entries below
/// `gamma` removed. Unnormalized.
inline SparseMatrix complement_counts(const SparseMatrix& r, double gamma) {
    if (gamma < 0.0) {
        throw ConfigError("build_complement: gamma must be nonnegative");
    }
    const std::size_t n = r.cols();
    const SparseMatrix rt = r.transpose();
    std::vector<double> acc(n, 0.0);
    std::vector<Index> touched;
    std::vector<std::size_t> offsets(n + 1, 0);
    std::vector<Index> columns;
    std::vector<double> values;
    for (std::size_t a = 0; a < n; ++a) {
        touched.clear();
        for (std::size_t ku = rt.row_begin(a); ku < rt.row_end(a); ++ku) {
            const std::size_t u = rt.col_indices()[ku];
            const double ra = rt.values()[ku];
            for (std::size_t ki = r.row_begin(u); ki < r.row_end(u); ++ki) {
                const Index b = r.col_indices()[ki];
                if (b == a) {
                    continue;
                }
                if (acc[b] == 0.0) {
                    touched.push_back(b);
                }
                acc[b] += ra * r.values()[ki];
            }
        }
        std::sort(touched.begin(), touched.end());
        for (Index b : touched) {
            if (acc[b] >= gamma) {
                columns.push_back(b);
                values.push_back(acc[b]);
            }
            acc[b] = 0.0;
        }
        offsets[a + 1] = values.size();
    }
    return SparseMatrix::from_csr(n, n, std::move(offsets), std::move(columns), std::move(values));
}

/// Normalized item complement matrix: sym_normalize(filter(R^T R - diag)).
/// An all-filtered result is an empty n x n matrix.
inline SparseMatrix build_complement(const SparseMatrix& r, double gamma) {
    return sym_normalize(complement_counts(r, gamma));
}

struct NormalizedGraph {
    SparseMatrix ui;    // (m+n) x (m+n)
    SparseMatrix comp;  // n x n
    double gamma = 0.0;
    std::size_t num_users = 0;
    std::size_t num_items = 0;

    /// True when the gamma filter removed every complement edge.
    bool complement_empty() const { return comp.empty(); }
};

/// With `filter_enabled == false` the gamma filter is skipped; self-loops are
/// still removed.
inline NormalizedGraph build_graph(const InteractionSet& train, double gamma, bool filter_enabled = true) {
    auto r = build_interaction_matrix(train);
    NormalizedGraph g;
    g.num_users = train.num_users;
    g.num_items = train.num_items;
    g.gamma = filter_enabled ? gamma : 0.0;
    g.ui = sym_normalize(build_adjacency(r));
    g.comp = build_complement(r, g.gamma);
    return g;
}

}  // namespace gda4rec
