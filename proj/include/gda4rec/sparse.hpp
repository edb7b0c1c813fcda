#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gda4rec/errors.hpp"

namespace gda4rec {

// Dense storage is row-major throughout: embeddings are indexed by node row.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Index = std::uint32_t;

struct Triplet {
    std::uint32_t row;
    std::uint32_t col;
    double value;
};

/// Compressed sparse row matrix with sorted, duplicate-free columns and no
/// stored zeros.
class SparseMatrix {
public:
    SparseMatrix() : row_offsets_(1, 0) {}

    SparseMatrix(std::size_t rows, std::size_t cols)
        : rows_(rows), cols_(cols), row_offsets_(rows + 1, 0) {}

    /// Duplicates are summed; entries that end up exactly zero are dropped.
    static SparseMatrix from_triplets(std::size_t rows, std::size_t cols, std::vector<Triplet> entries) {
        for (const auto& t : entries) {
            if (t.row >= rows || t.col >= cols) {
                throw ShapeError("sparse: triplet (" + std::to_string(t.row) + "," + std::to_string(t.col) +
                                 ") outside " + std::to_string(rows) + "x" + std::to_string(cols));
            }
        }
        std::sort(entries.begin(), entries.end(), [](const Triplet& a, const Triplet& b) {
            return a.row != b.row ? a.row < b.row : a.col < b.col;
        });
        SparseMatrix m(rows, cols);
        m.col_indices_.reserve(entries.size());
        m.values_.reserve(entries.size());
        std::vector<std::size_t> counts(rows, 0);
        for (std::size_t k = 0; k < entries.size();) {
            std::size_t j = k;
            double sum = 0.0;
            while (j < entries.size() && entries[j].row == entries[k].row && entries[j].col == entries[k].col) {
                sum += entries[j].value;
                ++j;
            }
            if (sum != 0.0) {
                m.col_indices_.push_back(entries[k].col);
                m.values_.push_back(sum);
                ++counts[entries[k].row];
            }
            k = j;
        }
        for (std::size_t r = 0; r < rows; ++r) {
            m.row_offsets_[r + 1] = m.row_offsets_[r] + counts[r];
        }
        return m;
    }

    /// Takes ownership of raw CSR arrays and validates them.
    static SparseMatrix from_csr(std::size_t rows, std::size_t cols, std::vector<std::size_t> offsets,
                                 std::vector<std::uint32_t> columns, std::vector<double> values) {
        SparseMatrix m(rows, cols);
        m.row_offsets_ = std::move(offsets);
        m.col_indices_ = std::move(columns);
        m.values_ = std::move(values);
        m.validate();
        return m;
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t nnz() const { return values_.size(); }
    bool empty() const { return values_.empty(); }

    const std::vector<std::size_t>& row_offsets() const { return row_offsets_; }
    const std::vector<std::uint32_t>& col_indices() const { return col_indices_; }
    const std::vector<double>& values() const { return values_; }

    std::size_t row_begin(std::size_t r) const { return row_offsets_[r]; }
    std::size_t row_end(std::size_t r) const { return row_offsets_[r + 1]; }

    double at(std::size_t r, std::size_t c) const {
        auto first = col_indices_.begin() + static_cast<std::ptrdiff_t>(row_offsets_[r]);
        auto last = col_indices_.begin() + static_cast<std::ptrdiff_t>(row_offsets_[r + 1]);
        auto it = std::lower_bound(first, last, static_cast<std::uint32_t>(c));
        if (it == last || *it != c) {
            return 0.0;
        }
        return values_[static_cast<std::size_t>(it - col_indices_.begin())];
    }

    std::vector<double> row_sums() const {
        std::vector<double> sums(rows_, 0.0);
        for (std::size_t r = 0; r < rows_; ++r) {
            for (std::size_t k = row_offsets_[r]; k < row_offsets_[r + 1]; ++k) {
                sums[r] += values_[k];
            }
        }
        return sums;
    }

    SparseMatrix transpose() const {
        SparseMatrix t(cols_, rows_);
        std::vector<std::size_t> counts(cols_ + 1, 0);
        for (auto c : col_indices_) {
            ++counts[c + 1];
        }
        for (std::size_t c = 0; c < cols_; ++c) {
            counts[c + 1] += counts[c];
        }
        t.row_offsets_ = counts;
        t.col_indices_.resize(nnz());
        t.values_.resize(nnz());
        std::vector<std::size_t> cursor(counts.begin(), counts.end() - 1);
        // Rows are visited in order, so each transposed row comes out sorted.
        for (std::size_t r = 0; r < rows_; ++r) {
            for (std::size_t k = row_offsets_[r]; k < row_offsets_[r + 1]; ++k) {
                std::size_t dst = cursor[col_indices_[k]]++;
                t.col_indices_[dst] = static_cast<std::uint32_t>(r);
                t.values_[dst] = values_[k];
            }
        }
        return t;
    }

    /// this * dense
    Matrix multiply(const Matrix& dense) const {
        if (dense.rows() != static_cast<Eigen::Index>(cols_)) {
            throw ShapeError("spmm: sparse " + shape_string() + " times dense " + std::to_string(dense.rows()) + "x" +
                             std::to_string(dense.cols()));
        }
        Matrix out = Matrix::Zero(static_cast<Eigen::Index>(rows_), dense.cols());
        for (std::size_t r = 0; r < rows_; ++r) {
            auto out_row = out.row(static_cast<Eigen::Index>(r));
            for (std::size_t k = row_offsets_[r]; k < row_offsets_[r + 1]; ++k) {
                out_row.noalias() += values_[k] * dense.row(col_indices_[k]);
            }
        }
        return out;
    }

    /// this^T * dense, accumulated in row order so the result is reproducible.
    Matrix transpose_multiply(const Matrix& dense) const {
        if (dense.rows() != static_cast<Eigen::Index>(rows_)) {
            throw ShapeError("spmm^T: sparse " + shape_string() + " transposed times dense " +
                             std::to_string(dense.rows()) + "x" + std::to_string(dense.cols()));
        }
        Matrix out = Matrix::Zero(static_cast<Eigen::Index>(cols_), dense.cols());
        for (std::size_t r = 0; r < rows_; ++r) {
            auto in_row = dense.row(static_cast<Eigen::Index>(r));
            for (std::size_t k = row_offsets_[r]; k < row_offsets_[r + 1]; ++k) {
                out.row(col_indices_[k]).noalias() += values_[k] * in_row;
            }
        }
        return out;
    }

    Matrix to_dense() const {
        Matrix d = Matrix::Zero(static_cast<Eigen::Index>(rows_), static_cast<Eigen::Index>(cols_));
        for (std::size_t r = 0; r < rows_; ++r) {
            for (std::size_t k = row_offsets_[r]; k < row_offsets_[r + 1]; ++k) {
                d(static_cast<Eigen::Index>(r), col_indices_[k]) = values_[k];
            }
        }
        return d;
    }

    bool is_symmetric(double tol) const {
        if (rows_ != cols_) {
            return false;
        }
        for (std::size_t r = 0; r < rows_; ++r) {
            for (std::size_t k = row_offsets_[r]; k < row_offsets_[r + 1]; ++k) {
                if (std::abs(values_[k] - at(col_indices_[k], r)) > tol) {
                    return false;
                }
            }
        }
        return true;
    }

    void validate() const {
        if (row_offsets_.size() != rows_ + 1 || row_offsets_.front() != 0 || row_offsets_.back() != values_.size() ||
            col_indices_.size() != values_.size()) {
            throw ShapeError("sparse: inconsistent CSR arrays for " + shape_string());
        }
        for (std::size_t r = 0; r < rows_; ++r) {
            if (row_offsets_[r] > row_offsets_[r + 1]) {
                throw ShapeError("sparse: row offsets decrease at row " + std::to_string(r));
            }
            for (std::size_t k = row_offsets_[r]; k < row_offsets_[r + 1]; ++k) {
                if (col_indices_[k] >= cols_) {
                    throw ShapeError("sparse: column index out of range in row " + std::to_string(r));
                }
                if (k > row_offsets_[r] && col_indices_[k] <= col_indices_[k - 1]) {
                    throw ShapeError("sparse: columns not strictly increasing in row " + std::to_string(r));
                }
                if (values_[k] == 0.0) {
                    throw ShapeError("sparse: explicit zero stored in row " + std::to_string(r));
                }
            }
        }
    }

    std::string shape_string() const { return std::to_string(rows_) + "x" + std::to_string(cols_); }

    friend bool operator==(const SparseMatrix&, const SparseMatrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<std::size_t> row_offsets_;
    std::vector<std::uint32_t> col_indices_;
    std::vector<double> values_;
};

/// Coordinate dump: header `rows cols nnz`, then one `row col value` line per
/// stored entry, 0-based, in CSR order.
inline void write_coordinate(std::ostream& out, const SparseMatrix& m) {
    auto old_precision = out.precision(17);
    out << m.rows() << ' ' << m.cols() << ' ' << m.nnz() << '\n';
    for (std::size_t r = 0; r < m.rows(); ++r) {
        for (std::size_t k = m.row_begin(r); k < m.row_end(r); ++k) {
            out << r << ' ' << m.col_indices()[k] << ' ' << m.values()[k] << '\n';
        }
    }
    out.precision(old_precision);
}

inline SparseMatrix read_coordinate(std::istream& in) {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::size_t nnz = 0;
    if (!(in >> rows >> cols >> nnz)) {
        throw DataError("coordinate matrix: missing `rows cols nnz` header");
    }
    std::vector<Triplet> entries;
    entries.reserve(nnz);
    for (std::size_t k = 0; k < nnz; ++k) {
        Triplet t{};
        if (!(in >> t.row >> t.col >> t.value)) {
            throw DataError("coordinate matrix: expected " + std::to_string(nnz) + " entries, got " + std::to_string(k));
        }
        entries.push_back(t);
    }
    return SparseMatrix::from_triplets(rows, cols, std::move(entries));
}

}  // namespace gda4rec
