#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "flan/matrix.hpp"
#include "flan/model.hpp"
#include "flan/rng.hpp"

using namespace flan;

namespace {

FlanModel random_model(int n_groups, int latent_dim, std::uint64_t seed,
                       bool predictor_bias = true, std::vector<int> enc_hidden = {5},
                       std::vector<int> pred_hidden = {4}, int output_dim = 1,
                       OutputKind kind = OutputKind::BinaryLogit) {
    Rng rng(seed);
    EncoderSpec enc;
    enc.latent_dim = latent_dim;
    enc.hidden_sizes = std::move(enc_hidden);
    return FlanModel::build(FeaturePartition::per_column(n_groups), enc,
                            std::move(pred_hidden), predictor_bias, Activation::Tanh,
                            kind, output_dim, rng);
}

// A 2-group, D=2 model with hand-set linear encoders and identity predictor:
// group 0 maps x0 to (x0, 0), group 1 maps x1 to (0, x1), psi = identity.
FlanModel hand_model() {
    FlanModel m = random_model(2, 2, 0, false, {}, {}, 2, OutputKind::ClassLogits);
    m.encoders()[0].weights[0] = Matrix(1, 2, {1, 0});
    m.encoders()[0].biases[0] = Matrix(1, 2);
    m.encoders()[1].weights[0] = Matrix(1, 2, {0, 1});
    m.encoders()[1].biases[0] = Matrix(1, 2);
    m.predictor().weights[0] = Matrix(2, 2, {1, 0, 0, 1});
    return m;
}

}  // namespace

TEST_CASE("per-column partition covers each dimension once") {
    FeaturePartition p = FeaturePartition::per_column(4);
    CHECK(p.n_groups() == 4);
    CHECK(p.raw_dim() == 4);
    CHECK(p.uniform_group_width());
    CHECK(p.group_names.size() == 4);
}

TEST_CASE("partition validation rejects overlap and gaps") {
    CHECK_THROWS_AS(FeaturePartition::from_groups({{0, 1}, {1, 2}}), std::invalid_argument);
    CHECK_THROWS_AS(FeaturePartition::from_groups({{0}, {2}}), std::invalid_argument);
}

TEST_CASE("square patches tile the image") {
    FeaturePartition p = FeaturePartition::square_patches(28, 7);
    CHECK(p.n_groups() == 16);  // 4x4 grid
    CHECK(p.raw_dim() == 784);
    for (int g = 0; g < 16; ++g) CHECK(p.group_width(g) == 49);
    // Patch 0 holds the top-left 7x7 block in row-major pixel order.
    CHECK(p.groups[0][0] == 0);
    CHECK(p.groups[0][7] == 28);

    FeaturePartition whole = FeaturePartition::square_patches(8, 8);
    CHECK(whole.n_groups() == 1);
    CHECK(whole.group_width(0) == 64);
    CHECK_THROWS_AS(FeaturePartition::square_patches(10, 3), std::invalid_argument);
}

TEST_CASE("build validates latent dimension and output arity") {
    Rng rng(0);
    EncoderSpec bad;
    bad.latent_dim = 0;
    CHECK_THROWS_AS(FlanModel::build(FeaturePartition::per_column(2), bad, {}, true,
                                     Activation::Tanh, OutputKind::BinaryLogit, 1, rng),
                    std::invalid_argument);
    EncoderSpec ok;
    ok.latent_dim = 4;
    CHECK_THROWS_AS(FlanModel::build(FeaturePartition::per_column(2), ok, {}, true,
                                     Activation::Tanh, OutputKind::BinaryLogit, 2, rng),
                    std::invalid_argument);
    CHECK_THROWS_AS(FlanModel::build(FeaturePartition::per_column(2), ok, {}, true,
                                     Activation::Tanh, OutputKind::ClassLogits, 1, rng),
                    std::invalid_argument);
}

TEST_CASE("shared encoders need positional codes and uniform widths") {
    Rng rng(0);
    EncoderSpec shared;
    shared.latent_dim = 4;
    shared.sharing = Sharing::SharedWithPositionalCode;
    shared.positional_code_dim = 0;
    CHECK_THROWS_AS(FlanModel::build(FeaturePartition::per_column(3), shared, {}, true,
                                     Activation::Tanh, OutputKind::BinaryLogit, 1, rng),
                    std::invalid_argument);
    shared.positional_code_dim = 2;
    FeaturePartition ragged = FeaturePartition::from_groups({{0, 1}, {2}});
    CHECK_THROWS_AS(FlanModel::build(ragged, shared, {}, true, Activation::Tanh,
                                     OutputKind::BinaryLogit, 1, rng),
                    std::invalid_argument);
    FlanModel m = FlanModel::build(FeaturePartition::per_column(3), shared, {}, true,
                                   Activation::Tanh, OutputKind::BinaryLogit, 1, rng);
    CHECK(m.encoders().size() == 1);
    CHECK(m.positional_codes().size() == 3);
}

TEST_CASE("zero encoder yields the zero latent") {
    FlanModel m = random_model(3, 4, 1);
    for (Matrix& w : m.encoders()[1].weights) w.fill(0.0);
    for (Matrix& b : m.encoders()[1].biases) b.fill(0.0);
    Rng rng(2);
    const Matrix x = Matrix::random_uniform(1, 3, -2, 2, rng);
    const Matrix z = m.encode_feature(x, 1);
    for (double v : z.data) CHECK(v == 0.0);
}

TEST_CASE("single-weight linear encoder passes its input through") {
    FlanModel m = random_model(2, 1, 3, true, {}, {}, 1);
    m.encoders()[0].weights[0] = Matrix(1, 1, {1});
    m.encoders()[0].biases[0] = Matrix(1, 1);
    const Matrix x(1, 2, {0.7, -0.3});
    CHECK(m.encode_feature(x, 0).data[0] == 0.7);
}

TEST_CASE("encoder output matches a straight-line re-evaluation") {
    FlanModel m = random_model(2, 3, 4, true, {4, 5});
    Rng rng(5);
    const Matrix x = Matrix::random_uniform(1, 2, -2, 2, rng);
    const Matrix got = m.encode_feature(x, 1);

    // Re-run the affine/tanh chain with explicit loops only.
    const Mlp& e = m.encoders()[1];
    std::vector<double> h = {x.data[1]};
    for (std::size_t layer = 0; layer < e.weights.size(); ++layer) {
        const Matrix& w = e.weights[layer];
        std::vector<double> next(w.cols, 0.0);
        for (int j = 0; j < w.cols; ++j) {
            for (int i = 0; i < w.rows; ++i) next[j] += h[i] * w.at(i, j);
            next[j] += e.biases[layer].data[j];
            if (layer + 1 < e.weights.size()) next[j] = std::tanh(next[j]);
        }
        h = std::move(next);
    }
    REQUIRE(static_cast<int>(h.size()) == got.cols);
    for (int j = 0; j < got.cols; ++j) CHECK(std::abs(got.data[j] - h[j]) < 1e-12);
}

TEST_CASE("all-zero encoders reduce forward to the predictor bias path") {
    FlanModel m = random_model(3, 4, 6);
    for (Mlp& e : m.encoders()) {
        for (Matrix& w : e.weights) w.fill(0.0);
        for (Matrix& b : e.biases) b.fill(0.0);
    }
    Rng rng(7);
    const Matrix x = Matrix::random_uniform(1, 3, -2, 2, rng);
    auto [out, bundle] = m.forward(x);
    const Matrix expected = m.predict_latent(Matrix(1, 4));
    CHECK(bit_equal(out, expected));
    for (double v : bundle.total.data) CHECK(v == 0.0);
}

TEST_CASE("unit-vector latents sum before the predictor") {
    FlanModel m = hand_model();
    const Matrix x(1, 2, {1, 1});
    auto [out, bundle] = m.forward(x);
    CHECK(bundle.per_feature[0].data == std::vector<double>{1, 0});
    CHECK(bundle.per_feature[1].data == std::vector<double>{0, 1});
    CHECK(bundle.total.data == std::vector<double>{1, 1});
    CHECK(out.data == std::vector<double>{1, 1});
}

TEST_CASE("forward equals the composition of encode and predict") {
    FlanModel m = random_model(4, 5, 8);
    Rng rng(9);
    for (int trial = 0; trial < 10; ++trial) {
        const Matrix x = Matrix::random_uniform(1, 4, -2, 2, rng);
        auto [out, bundle] = m.forward(x);
        Matrix total(1, 5);
        for (int i = 0; i < 4; ++i) total = add(total, m.encode_feature(x, i));
        CHECK(bit_equal(bundle.total, total));
        CHECK(bit_equal(out, m.predict_latent(total)));
    }
}

TEST_CASE("partial_forward keep-all reproduces forward bit-exactly") {
    FlanModel m = random_model(5, 3, 10);
    Rng rng(11);
    const Matrix x = Matrix::random_uniform(1, 5, -2, 2, rng);
    auto [out, bundle] = m.forward(x);
    CHECK(bit_equal(m.partial_forward(bundle, {0, 1, 2, 3, 4}), out));
    // The keep list may arrive in any order; summation is canonical.
    CHECK(bit_equal(m.partial_forward(bundle, {4, 2, 0, 3, 1}), out));
}

TEST_CASE("partial_forward with empty keep is the zero-latent prediction") {
    FlanModel m = random_model(3, 4, 12);
    Rng rng(13);
    const Matrix x = Matrix::random_uniform(1, 3, -2, 2, rng);
    auto [out, bundle] = m.forward(x);
    (void)out;
    CHECK(bit_equal(m.partial_forward(bundle, {}), m.predict_latent(Matrix(1, 4))));
}

TEST_CASE("partial_forward validates indices") {
    FlanModel m = random_model(3, 2, 14);
    Rng rng(15);
    const Matrix x = Matrix::random_uniform(1, 3, -2, 2, rng);
    auto [out, bundle] = m.forward(x);
    (void)out;
    CHECK_THROWS_AS(m.partial_forward(bundle, {3}), std::invalid_argument);
    CHECK_THROWS_AS(m.partial_forward(bundle, {-1}), std::invalid_argument);
    CHECK_THROWS_AS(m.partial_forward(bundle, {1, 1}), std::invalid_argument);
}

TEST_CASE("dropping a zero-norm feature leaves outputs bit-identical") {
    FlanModel m = random_model(4, 3, 16);
    for (Matrix& w : m.encoders()[2].weights) w.fill(0.0);
    for (Matrix& b : m.encoders()[2].biases) b.fill(0.0);
    Rng rng(17);
    const Matrix x = Matrix::random_uniform(1, 4, -2, 2, rng);
    auto [out, bundle] = m.forward(x);
    CHECK(l2_norm(bundle.per_feature[2]) == 0.0);
    CHECK(bit_equal(m.partial_forward(bundle, {0, 1, 3}), out));
    CHECK(bit_equal(m.partial_forward(bundle, {0, 1}), m.partial_forward(bundle, {0, 1, 2})));
}

TEST_CASE("additivity holds for chained single-feature additions") {
    FlanModel m = random_model(5, 4, 18);
    Rng rng(19);
    const Matrix x = Matrix::random_uniform(1, 5, -2, 2, rng);
    auto [out, bundle] = m.forward(x);
    (void)out;
    // Growing any subset one feature at a time equals psi of the partial sum.
    std::vector<int> keep;
    for (int i : {3, 0, 4, 1, 2}) {
        keep.push_back(i);
        std::vector<int> sorted = keep;
        std::sort(sorted.begin(), sorted.end());
        Matrix z(1, 4);
        for (int j : sorted) z = add(z, bundle.per_feature[j]);
        CHECK(bit_equal(m.partial_forward(bundle, keep), m.predict_latent(z)));
    }
}

TEST_CASE("group permutation preserves outputs up to summation order") {
    FlanModel m = random_model(4, 3, 20);
    Rng rng(21);
    const Matrix x = Matrix::random_uniform(1, 4, -2, 2, rng);

    // Rebuild the model with groups listed in a different order but the same
    // encoder bound to each raw column.
    const std::vector<int> perm = {2, 0, 3, 1};
    FeaturePartition shuffled = FeaturePartition::from_groups(
        {{perm[0]}, {perm[1]}, {perm[2]}, {perm[3]}});
    std::vector<Mlp> encoders;
    for (int g : perm) encoders.push_back(m.encoders()[g]);
    FlanModel permuted = FlanModel::assemble(shuffled, m.encoder_spec(), encoders, {},
                                             m.predictor(), m.output_kind(), m.output_dim());

    auto [out_a, bundle_a] = m.forward(x);
    auto [out_b, bundle_b] = permuted.forward(x);
    CHECK(max_abs_diff(out_a, out_b) < 1e-12);
    // Feature i of the original appears as feature perm^-1(i) of the permuted
    // model with an identical latent vector.
    for (int new_pos = 0; new_pos < 4; ++new_pos) {
        CHECK(bit_equal(bundle_b.per_feature[new_pos], bundle_a.per_feature[perm[new_pos]]));
    }
}

TEST_CASE("feature_effect evaluates the predictor on one latent") {
    FlanModel m = random_model(3, 2, 22, false, {5}, {}, 1);
    m.predictor().weights[0] = Matrix(2, 1, {0.4, -0.6});
    Rng rng(23);
    const Matrix x = Matrix::random_uniform(1, 3, -2, 2, rng);
    auto [out, bundle] = m.forward(x);
    (void)out;
    // Zero latent: effect is psi(0) = 0 for the bias-free linear predictor.
    LatentBundle zeroed = bundle;
    zeroed.per_feature[0] = Matrix(1, 2);
    CHECK(m.feature_effect(zeroed, 0).data[0] == 0.0);
    // Unit latent picks out one predictor weight row.
    zeroed.per_feature[1] = Matrix(1, 2, {1, 0});
    CHECK(m.feature_effect(zeroed, 1).data[0] == 0.4);
    CHECK_THROWS_AS(m.feature_effect(bundle, 3), std::invalid_argument);
}

TEST_CASE("feature effects of a binary model stay inside the link range") {
    FlanModel m = random_model(3, 4, 24);
    Rng rng(25);
    const Matrix x = Matrix::random_uniform(1, 3, -2, 2, rng);
    auto [out, bundle] = m.forward(x);
    (void)out;
    for (int i = 0; i < 3; ++i) {
        const Matrix p = m.probabilities(m.feature_effect(bundle, i));
        CHECK(p.data[0] > 0.0);
        CHECK(p.data[0] < 1.0);
    }
}

TEST_CASE("taylor residual vanishes for a bias-free linear predictor") {
    FlanModel m = random_model(4, 3, 26, false, {5}, {}, 2, OutputKind::ClassLogits);
    Rng rng(27);
    for (int trial = 0; trial < 20; ++trial) {
        const Matrix x = Matrix::random_uniform(1, 4, -2, 2, rng);
        auto [out, bundle] = m.forward(x);
        (void)out;
        for (int i = 0; i < 4; ++i) CHECK(m.taylor_residual(bundle, i) < 1e-12);
    }
}

TEST_CASE("taylor residual of an affine predictor equals the bias norm") {
    FlanModel m = random_model(3, 2, 28, true, {4}, {}, 2, OutputKind::ClassLogits);
    Rng rng(29);
    m.predictor().biases[0] = Matrix(1, 2, {0.3, -0.4});
    const double bias_norm = l2_norm(m.predictor().biases[0]);
    CHECK(bias_norm == doctest::Approx(0.5));
    const Matrix x = Matrix::random_uniform(1, 3, -2, 2, rng);
    auto [out, bundle] = m.forward(x);
    (void)out;
    for (int i = 0; i < 3; ++i) {
        CHECK(std::abs(m.taylor_residual(bundle, i) - bias_norm) < 1e-12);
    }
}

TEST_CASE("taylor residual matches a three-pass oracle on a nonlinear predictor") {
    FlanModel m = random_model(4, 3, 30, true, {5}, {6});
    Rng rng(31);
    const Matrix x = Matrix::random_uniform(1, 4, -2, 2, rng);
    auto [out, bundle] = m.forward(x);
    (void)out;
    for (int i = 0; i < 4; ++i) {
        Matrix rest(1, 3);
        for (int j = 0; j < 4; ++j) {
            if (j != i) rest = add(rest, bundle.per_feature[j]);
        }
        const Matrix delta = sub(m.predict_latent(add(rest, bundle.per_feature[i])),
                                 m.predict_latent(rest));
        const double expected = l2_norm(sub(delta, m.predict_latent(bundle.per_feature[i])));
        CHECK(std::abs(m.taylor_residual(bundle, i) - expected) < 1e-12);
    }
}

TEST_CASE("latent norms are Euclidean lengths") {
    FlanModel m = random_model(3, 2, 32);
    Rng rng(33);
    const Matrix x = Matrix::random_uniform(1, 3, -2, 2, rng);
    auto [out, bundle] = m.forward(x);
    (void)out;
    bundle.per_feature[0] = Matrix(1, 2);
    bundle.per_feature[1] = Matrix(1, 2, {3, 4});
    const std::vector<double> norms = m.latent_norms(bundle);
    CHECK(norms[0] == 0.0);
    CHECK(norms[1] == 5.0);
    // Independent sqrt-of-sum-of-squares recomputation for the third score.
    double ss = 0.0;
    for (double v : bundle.per_feature[2].data) ss += v * v;
    CHECK(std::abs(norms[2] - std::sqrt(ss)) < 1e-12);
}

TEST_CASE("predictor respects the Frobenius-product Lipschitz bound") {
    FlanModel m = random_model(2, 4, 34, true, {5}, {6, 5});
    double bound = 1.0;
    for (const Matrix& w : m.predictor().weights) bound *= frobenius_norm(w);

    Rng rng(35);
    for (int trial = 0; trial < 1000; ++trial) {
        const Matrix a = Matrix::random_uniform(1, 4, -3, 3, rng);
        const Matrix b = Matrix::random_uniform(1, 4, -3, 3, rng);
        const double lhs = l2_norm(sub(m.predict_latent(a), m.predict_latent(b)));
        const double rhs = bound * l2_norm(sub(a, b));
        CHECK(lhs <= rhs * (1.0 + 1e-12) + 1e-15);
    }
}

TEST_CASE("probabilities apply the right link per output kind") {
    FlanModel bin = random_model(2, 3, 36);
    const Matrix logit = Matrix::scalar(0.0);
    CHECK(bin.probabilities(logit).data[0] == doctest::Approx(0.5));
    CHECK(bin.predicted_class(Matrix::scalar(0.2)) == 1);
    CHECK(bin.predicted_class(Matrix::scalar(-0.2)) == 0);

    FlanModel multi = random_model(2, 3, 37, true, {5}, {4}, 3, OutputKind::ClassLogits);
    const Matrix probs = multi.probabilities(Matrix(1, 3, {1, 2, 3}));
    double s = 0.0;
    for (double v : probs.data) s += v;
    CHECK(std::abs(s - 1.0) <= 1e-12);
    CHECK(multi.predicted_class(Matrix(1, 3, {1, 5, 3})) == 1);
}

TEST_CASE("shared encoders give distinct latents through positional codes") {
    Rng rng(38);
    EncoderSpec shared;
    shared.latent_dim = 4;
    shared.hidden_sizes = {6};
    shared.sharing = Sharing::SharedWithPositionalCode;
    shared.positional_code_dim = 3;
    FlanModel m = FlanModel::build(FeaturePartition::per_column(3), shared, {4}, true,
                                   Activation::Tanh, OutputKind::BinaryLogit, 1, rng);
    const Matrix x(1, 3, {0.5, 0.5, 0.5});  // identical raw values per group
    auto [out, bundle] = m.forward(x);
    (void)out;
    CHECK_FALSE(bit_equal(bundle.per_feature[0], bundle.per_feature[1]));
    CHECK_FALSE(bit_equal(bundle.per_feature[1], bundle.per_feature[2]));

    // Duplicate positional codes violate the model contract.
    FlanModel broken = m;
    broken.positional_codes()[1] = broken.positional_codes()[0];
    CHECK_THROWS_AS(broken.validate(), std::invalid_argument);
}

TEST_CASE("parameter declaration order is stable and complete") {
    FlanModel m = random_model(2, 3, 39, true, {4}, {5});
    const auto params = m.parameters();
    int scalars = 0;
    for (const Matrix* p : params) scalars += p->size();
    CHECK(scalars == m.parameter_scalars());
    // encoders first (weight, bias per layer), then the predictor.
    CHECK(params.front() == &m.encoders()[0].weights[0]);
    CHECK(params.back() == &m.predictor().biases.back());
}

TEST_CASE("forward rejects inputs of the wrong width") {
    FlanModel m = random_model(3, 2, 40);
    CHECK_THROWS_AS(m.forward(Matrix(1, 4)), std::invalid_argument);
    CHECK_THROWS_AS(m.encode_feature(Matrix(1, 3), 5), std::invalid_argument);
}
