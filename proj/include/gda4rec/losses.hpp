#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "gda4rec/diffcore.hpp"

namespace gda4rec {

/// mean over triples of -log sigmoid(s+ - s-), computed as softplus(s- - s+).
inline ad::Var bpr_loss(const ad::Var& pos_scores, const ad::Var& neg_scores) {
    return ad::mean(ad::softplus(ad::sub(neg_scores, pos_scores)));
}

/// Batch InfoNCE: row x of `anchor` is positive with row x of `other` and
/// negative with every other row of `other`.
inline ad::Var infonce(const ad::Var& anchor, const ad::Var& other, double tau) {
    ad::detail::require_same_shape("infonce", anchor, other);
    ad::Var logits = ad::scale(ad::matmul(anchor, ad::transpose(other)), 1.0 / tau);
    ad::Var positive = ad::scale(ad::row_dot(anchor, other), 1.0 / tau);
    return ad::mean(ad::sub(ad::row_logsumexp(logits), positive));
}

struct ContrastPair {
    ad::Var anchor;
    ad::Var other;
};

/// Mean of the per-class InfoNCE terms; classes that are switched off are
/// simply not passed in.
inline ad::Var multi_pair_cl(const std::vector<ContrastPair>& classes, double tau) {
    if (classes.empty()) {
        throw std::invalid_argument("multi_pair_cl: no view pairs");
    }
    ad::Var total = infonce(classes.front().anchor, classes.front().other, tau);
    for (std::size_t k = 1; k < classes.size(); ++k) {
        total = ad::add(total, infonce(classes[k].anchor, classes[k].other, tau));
    }
    return classes.size() == 1 ? total : ad::scale(total, 1.0 / static_cast<double>(classes.size()));
}

/// mean((predicted - actual)^2)
inline ad::Var recon_loss(const ad::Var& predicted, const ad::Var& actual) {
    return ad::mean(ad::square(ad::sub(predicted, actual)));
}

enum class KlFormula { standard, paper };

/// standard: mean of 0.5 (mu^2 + s2 - ln s2 - 1).
/// paper:    mean of ln(1/sigma) + (s2 + mu)/2 - 1/2, the printed form without
///           the square on mu.
inline ad::Var kl_loss(const ad::Var& mu, const ad::Var& sigma2, KlFormula formula = KlFormula::standard) {
    ad::detail::require_same_shape("kl_loss", mu, sigma2);
    ad::Var log_s2 = ad::log(sigma2);
    ad::Var mean_term = formula == KlFormula::standard ? ad::square(mu) : mu;
    ad::Var body = ad::sub(ad::add(mean_term, sigma2), log_s2);
    return ad::scale(ad::shift(ad::mean(body), -1.0), 0.5);
}

namespace detail {

/// rows(x) x rows(y) squared Euclidean distances.
inline ad::Var pairwise_sq_dist(const ad::Var& x, const ad::Var& y) {
    ad::Var xx = ad::row_sum(ad::square(x));
    ad::Var yy = ad::transpose(ad::row_sum(ad::square(y)));
    ad::Var cross = ad::scale(ad::matmul(x, ad::transpose(y)), -2.0);
    return ad::add_row_broadcast(ad::add_col_broadcast(cross, xx), yy);
}

inline ad::Var rbf_mean(const ad::Var& x, const ad::Var& y, double bandwidth) {
    return ad::mean(ad::exp(ad::scale(pairwise_sq_dist(x, y), -1.0 / (2.0 * bandwidth * bandwidth))));
}

}  // namespace detail

/// Biased (V-statistic) MMD^2 with k(a, b) = exp(-|a-b|^2 / (2 bw^2)).
inline ad::Var mmd_loss(const ad::Var& generated, const ad::Var& prior, double bandwidth) {
    if (!(bandwidth > 0.0)) {
        throw std::invalid_argument("mmd_loss: bandwidth must be positive");
    }
    if (generated.rows() == 0 || prior.rows() == 0 || generated.cols() != prior.cols()) {
        throw ShapeError("mmd_loss: samples must be non-empty with equal dimension, got " +
                         ad::detail::shape(generated) + " and " + ad::detail::shape(prior));
    }
    ad::Var kxx = detail::rbf_mean(generated, generated, bandwidth);
    ad::Var kyy = detail::rbf_mean(prior, prior, bandwidth);
    ad::Var kxy = detail::rbf_mean(generated, prior, bandwidth);
    return ad::sub(ad::add(kxx, kyy), ad::scale(kxy, 2.0));
}

/// Median pairwise distance over the pooled samples; 1 if that median is 0.
inline double median_bandwidth(const Matrix& x, const Matrix& y) {
    Matrix pooled(x.rows() + y.rows(), x.cols());
    pooled << x, y;
    std::vector<double> dists;
    dists.reserve(static_cast<std::size_t>(pooled.rows() * (pooled.rows() - 1) / 2));
    for (Eigen::Index a = 0; a < pooled.rows(); ++a) {
        for (Eigen::Index b = a + 1; b < pooled.rows(); ++b) {
            dists.push_back((pooled.row(a) - pooled.row(b)).norm());
        }
    }
    if (dists.empty()) {
        return 1.0;
    }
    auto mid = dists.begin() + static_cast<std::ptrdiff_t>(dists.size() / 2);
    std::nth_element(dists.begin(), mid, dists.end());
    double median = *mid;
    if (dists.size() % 2 == 0) {
        median = 0.5 * (median + *std::max_element(dists.begin(), mid));
    }
    return median > 0.0 ? median : 1.0;
}

/// coeff * sum of squared entries over the given embedding rows.
inline ad::Var l2_reg(const std::vector<ad::Var>& rows, double coeff) {
    if (coeff < 0.0) {
        throw std::invalid_argument("l2_reg: coefficient must be nonnegative");
    }
    if (rows.empty()) {
        throw std::invalid_argument("l2_reg: no rows");
    }
    ad::Var total = ad::sum(ad::square(rows.front()));
    for (std::size_t k = 1; k < rows.size(); ++k) {
        total = ad::add(total, ad::sum(ad::square(rows[k])));
    }
    return ad::scale(total, coeff);
}

struct LossReport {
    double rec = 0.0;
    double cl = 0.0;
    double recon = 0.0;
    double ddl = 0.0;
    double reg = 0.0;
    double total = 0.0;
};

/// The individual 1x1 terms of one forward pass.
struct LossTerms {
    ad::Var rec;
    ad::Var cl;
    ad::Var recon;
    ad::Var ddl;
    ad::Var reg;
};

struct JointLoss {
    ad::Var total;
    LossReport report;
};

/// total = rec + lambda * cl + (recon + ddl) + reg. Invalid (unset) terms
/// count as zero.
inline JointLoss joint_loss(const LossTerms& terms, double lambda) {
    const std::pair<const char*, const ad::Var*> named[] = {
        {"rec", &terms.rec}, {"cl", &terms.cl}, {"recon", &terms.recon}, {"ddl", &terms.ddl}, {"reg", &terms.reg}};
    ad::Tape* tape = nullptr;
    for (const auto& [name, var] : named) {
        if (!var->valid()) {
            continue;
        }
        if (!std::isfinite(var->scalar())) {
            throw DivergenceError(std::string("joint_loss: component '") + name + "' is not finite");
        }
        tape = var->tape();
    }
    if (tape == nullptr) {
        throw std::invalid_argument("joint_loss: no loss terms");
    }
    auto value = [](const ad::Var& v) { return v.valid() ? v.scalar() : 0.0; };
    JointLoss out;
    out.report.rec = value(terms.rec);
    out.report.cl = value(terms.cl);
    out.report.recon = value(terms.recon);
    out.report.ddl = value(terms.ddl);
    out.report.reg = value(terms.reg);

    ad::Var total;
    auto accumulate = [&](const ad::Var& v) { total = total.valid() ? ad::add(total, v) : v; };
    if (terms.rec.valid()) {
        accumulate(terms.rec);
    }
    if (terms.cl.valid() && lambda != 0.0) {
        accumulate(ad::scale(terms.cl, lambda));
    }
    for (const ad::Var* v : {&terms.recon, &terms.ddl, &terms.reg}) {
        if (v->valid()) {
            accumulate(*v);
        }
    }
    if (!total.valid()) {
        total = tape->constant(Matrix::Zero(1, 1));
    }
    out.total = total;
    out.report.total = total.scalar();
    return out;
}

}  // namespace gda4rec
