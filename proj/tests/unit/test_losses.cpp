#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "gda4rec/losses.hpp"

using namespace gda4rec;
using ad::Tape;
using ad::Var;

namespace {

// Closed-form reference values, computed independently to 17 significant digits.
constexpr double kLn2 = 0.6931471805599453;
constexpr double kSoftplusMinus1 = 0.31326168751822286;
constexpr double kSoftplusMinus5 = 0.006715348489118068;

Matrix col(std::initializer_list<double> values) {
    Matrix m(static_cast<Eigen::Index>(values.size()), 1);
    Eigen::Index k = 0;
    for (double v : values) {
        m(k++, 0) = v;
    }
    return m;
}

Matrix random_matrix(Eigen::Index r, Eigen::Index c, std::uint64_t seed, double scale = 1.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, scale);
    return Matrix::NullaryExpr(r, c, [&] { return n(rng); });
}

}  // namespace

TEST(Losses, BprEqualScoresIsLn2) {
    Tape t;
    Var s = t.constant(col({0.3, -1.0, 7.0}));
    EXPECT_NEAR(bpr_loss(s, s).scalar(), kLn2, 1e-15);
}

TEST(Losses, BprUnitMarginIsSoftplusMinusOne) {
    Tape t;
    EXPECT_NEAR(bpr_loss(t.constant(col({1.0})), t.constant(col({0.0}))).scalar(), kSoftplusMinus1, 1e-15);
}

TEST(Losses, BprLargeMarginTendsToZero) {
    Tape t;
    double v = bpr_loss(t.constant(col({500.0})), t.constant(col({-500.0}))).scalar();
    EXPECT_GE(v, 0.0);
    EXPECT_LT(v, 1e-300);
    double w = bpr_loss(t.constant(col({-500.0})), t.constant(col({500.0}))).scalar();
    EXPECT_DOUBLE_EQ(w, 1000.0);
}

TEST(Losses, BprIsMeanNotSum) {
    Tape t;
    double one = bpr_loss(t.constant(col({1.0})), t.constant(col({0.0}))).scalar();
    double two = bpr_loss(t.constant(col({1.0, 1.0})), t.constant(col({0.0, 0.0}))).scalar();
    EXPECT_DOUBLE_EQ(one, two);
}

TEST(Losses, InfoNceSingleRowIsZero) {
    Tape t;
    Var a = t.constant(random_matrix(1, 4, 1));
    Var b = t.constant(random_matrix(1, 4, 2));
    EXPECT_NEAR(infonce(a, b, 0.2).scalar(), 0.0, 1e-12);
}

TEST(Losses, InfoNceOrthonormalPairIsSoftplusMinusFive) {
    Tape t;
    Var a = t.constant(Matrix::Identity(2, 2));
    EXPECT_NEAR(infonce(a, a, 0.2).scalar(), kSoftplusMinus5, 1e-15);
}

TEST(Losses, InfoNceDecreasesWhenPositiveSimilarityGrows) {
    // anchor = I, other = diag(t, 1): loss = (softplus(-t/tau) + softplus(-1/tau)) / 2
    Tape t;
    const double tau = 0.2;
    double previous = std::numeric_limits<double>::infinity();
    for (double scale : {0.0, 0.25, 0.5, 1.0, 2.0, 4.0}) {
        Matrix other = Matrix::Identity(2, 2);
        other(0, 0) = scale;
        double v = infonce(t.constant(Matrix::Identity(2, 2)), t.constant(other), tau).scalar();
        double expected = 0.5 * (std::log1p(std::exp(-scale / tau)) + std::log1p(std::exp(-1.0 / tau)));
        EXPECT_NEAR(v, expected, 1e-14);
        EXPECT_LT(v, previous);
        previous = v;
    }
}

TEST(Losses, InfoNceInvariantUnderJointRowPermutation) {
    Matrix a = random_matrix(6, 4, 5);
    Matrix b = random_matrix(6, 4, 6);
    Eigen::PermutationMatrix<Eigen::Dynamic> perm(6);
    perm.indices() << 3, 0, 5, 1, 4, 2;
    Tape t;
    double base = infonce(t.constant(a), t.constant(b), 0.2).scalar();
    double permuted = infonce(t.constant(Matrix(perm * a)), t.constant(Matrix(perm * b)), 0.2).scalar();
    EXPECT_NEAR(base, permuted, 1e-12);
}

TEST(Losses, MultiPairIsMeanOfClasses) {
    Tape t;
    Var a = t.constant(Matrix::Identity(2, 2));
    double v = infonce(a, a, 0.2).scalar();
    EXPECT_NEAR(multi_pair_cl({{a, a}, {a, a}, {a, a}}, 0.2).scalar(), v, 1e-15);
    Var single = t.constant(random_matrix(1, 2, 7));
    EXPECT_NEAR(multi_pair_cl({{a, a}, {single, single}}, 0.2).scalar(), 0.5 * v, 1e-15);
    EXPECT_EQ(multi_pair_cl({{single, single}, {single, single}, {single, single}}, 0.2).scalar(), 0.0);
    EXPECT_THROW(multi_pair_cl({}, 0.2), std::invalid_argument);
}

TEST(Losses, ReconstructionExamples) {
    Tape t;
    EXPECT_EQ(recon_loss(t.constant(col({1.0, 0.0})), t.constant(col({1.0, 0.0}))).scalar(), 0.0);
    EXPECT_EQ(recon_loss(t.constant(col({0.0})), t.constant(col({1.0}))).scalar(), 1.0);
    EXPECT_DOUBLE_EQ(recon_loss(t.constant(col({1.0, 0.5})), t.constant(col({1.0, 0.0}))).scalar(), 0.125);
}

TEST(Losses, KlClosedForms) {
    Tape t;
    auto kl = [&](double mu, double s2, KlFormula f) {
        return kl_loss(t.constant(Matrix::Constant(2, 3, mu)), t.constant(Matrix::Constant(2, 3, s2)), f).scalar();
    };
    EXPECT_NEAR(kl(0.0, 1.0, KlFormula::standard), 0.0, 1e-15);
    EXPECT_NEAR(kl(0.0, 1.0, KlFormula::paper), 0.0, 1e-15);
    EXPECT_NEAR(kl(1.0, 1.0, KlFormula::standard), 0.5, 1e-15);
    EXPECT_NEAR(kl(1.0, 1.0, KlFormula::paper), 0.5, 1e-15);
    EXPECT_NEAR(kl(2.0, 1.0, KlFormula::standard), 2.0, 1e-15);
    EXPECT_NEAR(kl(2.0, 1.0, KlFormula::paper), 1.0, 1e-15);
}

TEST(Losses, KlStandardNonNegativeWithUniqueMinimum) {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(-2, 2);
    Tape t;
    for (int trial = 0; trial < 200; ++trial) {
        Matrix mu = Matrix::NullaryExpr(3, 2, [&] { return u(rng); });
        Matrix s2 = Matrix::NullaryExpr(3, 2, [&] { return std::exp(u(rng)); });
        EXPECT_GT(kl_loss(t.constant(mu), t.constant(s2)).scalar(), 0.0);
    }
}

TEST(Losses, KlNonPositiveVarianceIsDivergence) {
    Tape t;
    EXPECT_THROW(kl_loss(t.constant(Matrix::Zero(1, 1)), t.constant(Matrix::Zero(1, 1))), DivergenceError);
}

TEST(Losses, MmdIdenticalSetsIsZero) {
    Tape t;
    Var x = t.constant(random_matrix(7, 3, 9));
    EXPECT_NEAR(mmd_loss(x, x, 0.8).scalar(), 0.0, 1e-15);
}

TEST(Losses, MmdSingletonsClosedForm) {
    Tape t;
    Matrix x(1, 2);
    x << 0.0, 1.0;
    Matrix y(1, 2);
    y << 2.0, -1.0;
    const double bw = 1.5;
    const double k = std::exp(-8.0 / (2.0 * bw * bw));
    EXPECT_NEAR(mmd_loss(t.constant(x), t.constant(y), bw).scalar(), 2.0 * (1.0 - k), 1e-15);
}

TEST(Losses, MmdNonNegativeAndBandwidthValidated) {
    Tape t;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        Var x = t.constant(random_matrix(4, 3, seed));
        Var y = t.constant(random_matrix(5, 3, seed + 1000, 2.0));
        double bw = median_bandwidth(x.value(), y.value());
        EXPECT_GE(mmd_loss(x, y, bw).scalar(), -1e-12);
    }
    Var x = t.constant(random_matrix(2, 2, 1));
    EXPECT_THROW(mmd_loss(x, x, 0.0), std::invalid_argument);
    EXPECT_THROW(mmd_loss(x, x, -1.0), std::invalid_argument);
}

TEST(Losses, MedianBandwidthMatchesSortedPairs) {
    Matrix x(2, 1);
    x << 0.0, 1.0;
    Matrix y(2, 1);
    y << 3.0, 7.0;
    // Distances: 1, 3, 7, 2, 6, 4 -> sorted 1 2 3 4 6 7 -> median 3.5
    EXPECT_DOUBLE_EQ(median_bandwidth(x, y), 3.5);
    EXPECT_EQ(median_bandwidth(Matrix::Zero(2, 2), Matrix::Zero(1, 2)), 1.0);
}

TEST(Losses, L2RegExamples) {
    Tape t;
    Matrix row(1, 2);
    row << 3.0, 4.0;
    EXPECT_EQ(l2_reg({t.constant(row)}, 1.0).scalar(), 25.0);
    EXPECT_EQ(l2_reg({t.constant(Matrix::Zero(3, 2))}, 0.0001).scalar(), 0.0);
    EXPECT_DOUBLE_EQ(l2_reg({t.constant(row), t.constant(row)}, 0.0001).scalar(), 0.005);
}

TEST(Losses, JointLossComposition) {
    Tape t;
    auto scalar = [&](double v) { return t.constant(Matrix::Constant(1, 1, v)); };
    LossTerms zero{scalar(0), scalar(0), scalar(0), scalar(0), scalar(0)};
    EXPECT_EQ(joint_loss(zero, 1.0).report.total, 0.0);
    LossTerms two{scalar(1), scalar(1), {}, {}, {}};
    EXPECT_EQ(joint_loss(two, 1.0).report.total, 2.0);
    LossTerms mixed{scalar(0.5), scalar(0.2), scalar(0.1), scalar(0.05), scalar(0.01)};
    auto j = joint_loss(mixed, 1.0);
    EXPECT_NEAR(j.report.total, 0.86, 1e-12);
    EXPECT_NEAR(j.total.scalar(), j.report.rec + j.report.cl + j.report.recon + j.report.ddl + j.report.reg, 1e-12);
    auto half = joint_loss(mixed, 0.5);
    EXPECT_NEAR(half.report.total, 0.5 + 0.1 + 0.1 + 0.05 + 0.01, 1e-12);
    EXPECT_EQ(half.report.cl, 0.2);
}

TEST(Losses, JointLossNamesNonFiniteComponent) {
    Tape t;
    LossTerms bad{t.constant(Matrix::Constant(1, 1, 1.0)), {},
                  t.constant(Matrix::Constant(1, 1, std::numeric_limits<double>::quiet_NaN())), {}, {}};
    try {
        joint_loss(bad, 1.0);
        FAIL();
    } catch (const DivergenceError& e) {
        EXPECT_NE(std::string(e.what()).find("recon"), std::string::npos);
    }
}

// Every loss differentiated through the tape matches central differences on
// random 5-row instances.
TEST(Losses, GradientsMatchFiniteDifferences) {
    const std::vector<Matrix> point{random_matrix(5, 3, 11), random_matrix(5, 3, 12),
                                    random_matrix(5, 1, 13), random_matrix(5, 1, 14)};
    auto check = [&](const ad::LossBuilder& f) { return ad::check_gradients(f, point).max_rel_error; };
    EXPECT_LT(check([](Tape&, auto p) { return bpr_loss(p[2], p[3]); }), 1e-4);
    EXPECT_LT(check([](Tape&, auto p) { return infonce(p[0], p[1], 0.2); }), 1e-4);
    EXPECT_LT(check([](Tape&, auto p) {
                  return infonce(ad::row_l2_normalize(p[0]), ad::row_l2_normalize(p[1]), 0.2);
              }),
              1e-4);
    EXPECT_LT(check([](Tape&, auto p) { return multi_pair_cl({{p[0], p[1]}, {p[1], p[0]}}, 0.5); }), 1e-4);
    EXPECT_LT(check([](Tape&, auto p) { return recon_loss(p[2], p[3]); }), 1e-4);
    EXPECT_LT(check([](Tape&, auto p) { return kl_loss(p[0], ad::exp(p[1])); }), 1e-4);
    EXPECT_LT(check([](Tape&, auto p) { return kl_loss(p[0], ad::exp(p[1]), KlFormula::paper); }), 1e-4);
    EXPECT_LT(check([](Tape&, auto p) { return mmd_loss(p[0], p[1], 1.3); }), 1e-4);
    EXPECT_LT(check([](Tape&, auto p) { return l2_reg({p[0], p[1]}, 0.01); }), 1e-4);
}
