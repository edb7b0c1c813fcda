#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "gda4rec/model.hpp"
#include "support/oracles.hpp"

using namespace gda4rec;
using ad::Var;

namespace {

InteractionSet small_set(std::uint64_t seed = 4) { return oracle::random_interactions(6, 7, 0.3, seed); }

Mlp zero_mlp(std::size_t in, std::size_t hidden, std::size_t out) {
    Mlp mlp;
    const std::array<std::size_t, 4> widths{in, hidden, hidden, out};
    for (std::size_t l = 0; l < 3; ++l) {
        mlp.weight[l] = Matrix::Zero(static_cast<Eigen::Index>(widths[l]), static_cast<Eigen::Index>(widths[l + 1]));
        mlp.bias[l] = Matrix::Zero(1, static_cast<Eigen::Index>(widths[l + 1]));
    }
    return mlp;
}

MlpVars record_mlp(ad::Tape& t, const Mlp& mlp) {
    MlpVars v;
    for (std::size_t l = 0; l < 3; ++l) {
        v.weight[l] = t.leaf(mlp.weight[l]);
        v.bias[l] = t.leaf(mlp.bias[l]);
    }
    return v;
}

}  // namespace

TEST(Model, InitShapesBoundsAndDeterminism) {
    auto p = init_params(5, 7, 8, 6, 42);
    EXPECT_EQ(p.embedding.rows(), 12);
    EXPECT_EQ(p.embedding.cols(), 8);
    EXPECT_EQ(p.generator.weight[0].rows(), 8);
    EXPECT_EQ(p.generator.weight[0].cols(), 6);
    EXPECT_EQ(p.generator.weight[2].cols(), 16);
    EXPECT_EQ(p.reconstructor.weight[2].cols(), 8);
    EXPECT_EQ(p.generator.bias[1], Matrix::Zero(1, 6));
    const double bound = std::sqrt(6.0 / (5 + 7 + 8));
    EXPECT_LE(p.embedding.cwiseAbs().maxCoeff(), bound);
    EXPECT_TRUE(p.embedding.allFinite());
    EXPECT_EQ(p, init_params(5, 7, 8, 6, 42));
    EXPECT_FALSE(p == init_params(5, 7, 8, 6, 43));
    EXPECT_EQ(p.tensors().size(), 13u);
}

TEST(Model, ZeroGeneratorGivesEpsilonExactly) {
    ad::Tape t;
    Rng rng(3);
    Var z = t.leaf(Matrix::Random(4, 3));
    MlpVars gen = record_mlp(t, zero_mlp(3, 5, 6));
    NoiseBlock block = generate_noise(z, gen, rng, {});
    ASSERT_TRUE(block.active);
    EXPECT_EQ(block.mu.value(), Matrix::Zero(4, 3));
    EXPECT_EQ(block.log_variance.value(), Matrix::Zero(4, 3));
    EXPECT_EQ(block.sigma2.value(), Matrix::Ones(4, 3));
    EXPECT_EQ(block.sample.value(), block.epsilon);
}

TEST(Model, NoiseSampleFollowsSelectedScale) {
    auto p = init_params(3, 3, 4, 4, 8);
    for (auto scale : {NoiseScale::variance, NoiseScale::stddev}) {
        ad::Tape t;
        ParamVars v = record_params(t, p);
        Rng rng(1);
        NoiseConfig cfg;
        cfg.scale = scale;
        NoiseBlock b = generate_noise(v.embedding, v.generator, rng, cfg);
        Matrix spread = scale == NoiseScale::variance ? b.sigma2.value() : Matrix(b.sigma2.value().cwiseSqrt());
        Matrix expected = b.mu.value() + Matrix(spread.cwiseProduct(b.epsilon));
        EXPECT_LT((b.sample.value() - expected).cwiseAbs().maxCoeff(), 1e-15);
        EXPECT_TRUE((b.sigma2.value().array() > 0.0).all());
    }
}

TEST(Model, NoneAndRandomModes) {
    ad::Tape t;
    Rng rng(1);
    Var z = t.leaf(Matrix::Random(3, 2));
    MlpVars gen = record_mlp(t, zero_mlp(2, 2, 4));
    NoiseConfig none;
    none.mode = NoiseMode::none;
    auto off = generate_noise(z, gen, rng, none);
    EXPECT_FALSE(off.active);
    EXPECT_EQ(off.sample.value(), Matrix::Zero(3, 2));

    NoiseConfig random;
    random.mode = NoiseMode::random;
    auto r = generate_noise(z, gen, rng, random);
    EXPECT_EQ(r.mu.value(), Matrix::Zero(3, 2));
    EXPECT_EQ(r.sigma2.value(), Matrix::Constant(3, 2, 0.1));
    EXPECT_LT((r.sample.value() - 0.1 * r.epsilon).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Model, UniformDistributionAppliesGelu) {
    ad::Tape t;
    Rng rng(2);
    Var z = t.leaf(Matrix::Random(3, 2));
    MlpVars gen = record_mlp(t, zero_mlp(2, 2, 4));
    NoiseConfig cfg;
    cfg.distribution = NoiseDistribution::uniform;
    auto b = generate_noise(z, gen, rng, cfg);
    for (Eigen::Index k = 0; k < b.epsilon.size(); ++k) {
        double e = b.epsilon.data()[k];
        double expected = 0.5 * e * std::erfc(-e / std::sqrt(2.0));
        EXPECT_NEAR(b.sample.value().data()[k], expected, 1e-14);
    }
}

TEST(Model, NonFiniteGeneratorOutputIsDivergence) {
    ad::Tape t;
    Rng rng(2);
    Var z = t.leaf(Matrix::Constant(2, 2, std::numeric_limits<double>::infinity()));
    MlpVars gen = record_mlp(t, zero_mlp(2, 2, 4));
    gen.weight[0] = t.leaf(Matrix::Ones(2, 2));
    EXPECT_THROW(generate_noise(z, gen, rng, {}), DivergenceError);
}

TEST(Model, SingleEdgePropagationSwapsEmbeddings) {
    InteractionSet set;
    set.num_users = 1;
    set.num_items = 1;
    set.pairs = {{0, 0}};
    auto g = build_graph(set, 1.0);
    ad::Tape t;
    Matrix e(2, 3);
    e << 1, 2, 3, 4, 5, 6;
    Var z0 = t.leaf(e);
    NoiseBlock none;
    none.sample = t.constant(Matrix::Zero(2, 3));
    Var z1 = propagate(g.ui, z0, none);
    EXPECT_EQ(Matrix(z1.value().row(0)), Matrix(e.row(1)));
    EXPECT_EQ(Matrix(z1.value().row(1)), Matrix(e.row(0)));
}

TEST(Model, NormalizedNoiseRowsHaveUnitNorm) {
    auto p = init_params(6, 7, 5, 5, 1);
    auto g = build_graph(small_set(), 1.0);
    ad::Tape t;
    ParamVars v = record_params(t, p);
    Rng rng(9);
    EncoderOutput out = encode(v, g, {3, {}, true}, rng);
    for (const auto* ch : {&out.ui, &out.comp}) {
        ASSERT_EQ(ch->noise.size(), 3u);
        for (const auto& block : ch->noise) {
            Matrix normed = ad::row_l2_normalize(block.sample).value();
            for (Eigen::Index r = 0; r < normed.rows(); ++r) {
                double n = normed.row(r).norm();
                EXPECT_TRUE(std::abs(n - 1.0) < 1e-12 || n == 0.0);
            }
        }
    }
}

TEST(Model, LightGcnReductionMatchesDenseReference) {
    for (std::uint64_t seed : {1, 2, 3, 4, 5}) {
        auto set = oracle::random_interactions(5 + seed, 4 + 2 * seed, 0.3, seed);
        auto g = build_graph(set, 2.0);
        auto p = init_params(set.num_users, set.num_items, 4, 4, seed);
        oracle::Dense a = oracle::sym_normalize(oracle::bipartite_adjacency(oracle::dense_interactions(set)));
        for (std::size_t layers : {1u, 2u, 3u}) {
            ad::Tape t;
            ParamVars v = record_params(t, p);
            Rng rng(seed);
            NoiseConfig none;
            none.mode = NoiseMode::none;
            EncoderOutput out = encode(v, g, {layers, none, false}, rng);
            oracle::Dense expected = oracle::lightgcn(a, oracle::Dense(p.embedding), layers);
            EXPECT_LT((oracle::Dense(out.ui.average.value()) - expected).cwiseAbs().maxCoeff(), 1e-12);
            Embeddings emb = infer_embeddings(p, g, layers);
            EXPECT_LT((oracle::Dense(emb.users) - expected.topRows(set.num_users)).cwiseAbs().maxCoeff(), 1e-12);
            EXPECT_LT((oracle::Dense(emb.items) - expected.bottomRows(set.num_items)).cwiseAbs().maxCoeff(), 1e-12);
        }
    }
}

TEST(Model, AverageIsMeanOfLayersAndViewsSelectLayers) {
    auto p = init_params(6, 7, 4, 4, 2);
    auto g = build_graph(small_set(), 1.0);
    ad::Tape t;
    ParamVars v = record_params(t, p);
    Rng rng(5);
    EncoderOutput out = encode(v, g, {3, {}, true}, rng);
    Matrix mean = (out.ui.layers[0].value() + out.ui.layers[1].value() + out.ui.layers[2].value()) * (1.0 / 3.0);
    EXPECT_EQ((out.ui.average.value() - mean).cwiseAbs().maxCoeff(), 0.0);
    EXPECT_EQ(out.ui.view(LayerView{1}).id(), out.ui.layers[0].id());
    EXPECT_EQ(out.ui.view(LayerView::average()).id(), out.ui.average.id());
    EXPECT_EQ(out.z_u().value(), Matrix(out.ui.average.value().topRows(6)));
    EXPECT_EQ(out.z_i().value(), Matrix(out.ui.average.value().bottomRows(7)));
    EXPECT_EQ(out.z_c().rows(), 7);
}

TEST(Model, SingleLayerWithoutNoiseIsOnePropagation) {
    auto set = small_set();
    auto g = build_graph(set, 1.0);
    auto p = init_params(set.num_users, set.num_items, 3, 3, 7);
    Embeddings emb = infer_embeddings(p, g, 1);
    Matrix expected = g.ui.multiply(p.embedding);
    EXPECT_LT((emb.users - expected.topRows(6)).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Model, EmptyComplementGivesZeroChannel) {
    auto set = small_set();
    auto g = build_graph(set, 1000.0);
    ASSERT_TRUE(g.complement_empty());
    auto p = init_params(set.num_users, set.num_items, 3, 3, 7);
    ad::Tape t;
    ParamVars v = record_params(t, p);
    Rng rng(1);
    NoiseConfig none;
    none.mode = NoiseMode::none;
    EncoderOutput out = encode(v, g, {3, none, true}, rng);
    for (const auto& layer : out.comp.layers) {
        EXPECT_EQ(layer.value(), Matrix::Zero(7, 3));
    }
}

TEST(Model, EncodeRejectsZeroLayersAndIsDeterministic) {
    auto set = small_set();
    auto g = build_graph(set, 1.0);
    auto p = init_params(set.num_users, set.num_items, 3, 3, 7);
    auto run = [&](std::size_t layers) {
        ad::Tape t;
        ParamVars v = record_params(t, p);
        Rng rng(11);
        return Matrix(encode(v, g, {layers, {}, true}, rng).comp.average.value());
    };
    EXPECT_THROW(run(0), ConfigError);
    EXPECT_EQ(run(3), run(3));
}

TEST(Model, PredictScores) {
    Matrix zu(2, 2);
    zu << 1, 0, 3, 4;
    Matrix zi(2, 2);
    zi << 0.5, 2, 3, 4;
    std::vector<Index> users{0};
    EXPECT_EQ(predict_scores(zu, zi, users)(0, 0), 0.5);
    std::vector<Index> both{1, 0};
    Matrix s = predict_scores(zu, zi, both);
    EXPECT_EQ(s(0, 1), 25.0);
    EXPECT_EQ(s.row(1), predict_scores(zu, zi, users).row(0));
}

// With zero weights the reconstructor outputs its last bias for every row, so
// each prediction is the dot product of that bias with itself.
TEST(Model, ReconstructOfConstantFeaturesIsBiasDot) {
    ad::Tape t;
    MlpVars vars = record_mlp(t, zero_mlp(2, 2, 2));
    Matrix noise = Matrix::Zero(3, 2);
    std::vector<Interaction> pairs{{0, 0}, {1, 0}};
    Var r = reconstruct(t.leaf(noise), vars, 2, pairs);
    EXPECT_EQ(r.value(), Matrix::Zero(2, 1));

    ad::Tape t2;
    Mlp biased = zero_mlp(2, 2, 2);
    biased.bias[2] << 0.6, 0.8;
    MlpVars bv = record_mlp(t2, biased);
    Var r2 = reconstruct(t2.leaf(Matrix::Random(3, 2)), bv, 2, pairs);
    EXPECT_NEAR(r2.value()(0, 0), 1.0, 1e-15);
    EXPECT_NEAR(r2.value()(1, 0), 1.0, 1e-15);
}

TEST(Model, ReconstructGradientThroughGeneratorMatchesFiniteDifferences) {
    auto set = small_set();
    auto g = build_graph(set, 1.0);
    auto p = init_params(set.num_users, set.num_items, 3, 4, 13);
    std::vector<Matrix> point;
    for (auto& [name, m] : p.tensors()) {
        point.push_back(*m);
    }
    std::vector<Interaction> pairs{{0, 1}, {2, 3}, {4, 0}};
    auto f = [&](ad::Tape&, std::span<const Var> flat) {
        ParamVars v = unflatten_params(flat);
        Rng rng(21);
        NoiseBlock b = generate_noise(v.embedding, v.generator, rng, {});
        return ad::sum(ad::square(reconstruct(b.sample, v.reconstructor, set.num_users, pairs)));
    };
    EXPECT_LT(ad::check_gradients(f, point).max_rel_error, 1e-4);
}

TEST(Model, LayerViewParsing) {
    EXPECT_TRUE(parse_layer_view("avg").is_average());
    EXPECT_EQ(parse_layer_view("2").layer, 2u);
    EXPECT_EQ(parse_layer_view("3").str(), "3");
    EXPECT_THROW(parse_layer_view("0"), ConfigError);
    EXPECT_THROW(parse_layer_view("x1"), ConfigError);
    EXPECT_THROW(parse_layer_view("1.5"), ConfigError);
}

TEST(Model, CheckpointRoundTripIsBitExact) {
    auto p = init_params(4, 5, 6, 3, 99);
    p.embedding(0, 0) = 1.0 / 3.0;
    p.embedding(1, 1) = -2.2250738585072014e-308;
    p.generator.bias[2](0, 1) = 1e300;
    auto path = std::filesystem::temp_directory_path() / "gda4rec_ckpt_test.json";
    save_checkpoint(path.string(), p);
    ModelParams q = load_checkpoint(path.string());
    EXPECT_EQ(p, q);
    std::filesystem::remove(path);
}

TEST(Model, CheckpointRejectsWrongFormat) {
    nlohmann::json doc = checkpoint_json(init_params(1, 1, 2, 2, 1));
    doc["format"] = "other";
    EXPECT_THROW(params_from_json(doc), DataError);
    doc = checkpoint_json(init_params(1, 1, 2, 2, 1));
    doc["tensors"][3]["data"].erase(0);
    EXPECT_THROW(params_from_json(doc), DataError);
}
