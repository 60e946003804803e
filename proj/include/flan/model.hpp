#pragma once

// Feature-wise latent additive network: per-group encoders into a shared
// D-dimensional latent space, sum aggregation (always in ascending group
// order, so additivity identities hold bit-exactly), and a predictor head.
//
//     f(x) = predictor( sum_i encode_feature(x, i) )
//
// Interpretation entry points (partial_forward, feature_effect,
// taylor_residual, latent_norms) all operate on the cached LatentBundle so
// they share one set of latents per sample.

#include <string>
#include <utility>
#include <vector>

#include "flan/matrix.hpp"
#include "flan/rng.hpp"
#include "flan/tape.hpp"

namespace flan {

enum class PartitionKind { PerColumn, TokenSequence, SquarePatch };
enum class Activation { Tanh, Relu };
enum class Sharing { Distinct, SharedWithPositionalCode };
enum class OutputKind { BinaryLogit, ClassLogits, Regression };

const char* partition_kind_name(PartitionKind k);
const char* activation_name(Activation a);
const char* sharing_name(Sharing s);
const char* output_kind_name(OutputKind k);

// Ordered list of disjoint raw-dimension index sets that jointly cover every
// raw input dimension exactly once.
struct FeaturePartition {
    PartitionKind kind = PartitionKind::PerColumn;
    std::vector<std::vector<int>> groups;
    std::vector<std::string> group_names;  // optional; validate() fills defaults
    int patch_size = 0;       // SquarePatch: side length s of each patch
    int image_side = 0;       // SquarePatch: side length of the full image
    int sequence_length = 0;  // TokenSequence: number of positions

    static FeaturePartition per_column(int n_columns);
    static FeaturePartition from_groups(std::vector<std::vector<int>> groups,
                                        PartitionKind kind = PartitionKind::PerColumn);
    // Row-major grid of s x s patches over a side x side image.
    static FeaturePartition square_patches(int image_side, int patch_size);

    int n_groups() const { return static_cast<int>(groups.size()); }
    int raw_dim() const;
    int group_width(int i) const { return static_cast<int>(groups[i].size()); }
    bool uniform_group_width() const;

    // Throws std::invalid_argument unless groups are pairwise disjoint and
    // cover 0..raw_dim-1 exactly; assigns default names where missing.
    void validate();
};

// Shape of every encoder network phi_i (all groups use the same shape).
struct EncoderSpec {
    int latent_dim = 16;  // D
    std::vector<int> hidden_sizes;
    Activation activation = Activation::Tanh;
    Sharing sharing = Sharing::Distinct;
    int positional_code_dim = 0;  // >= 1 required when sharing is enabled
    bool use_bias = true;
};

// Plain fully-connected network. Weights are (in x out); the activation is
// applied after every layer except the last, so an empty hidden list gives a
// purely linear (or affine) map.
struct Mlp {
    std::vector<Matrix> weights;
    std::vector<Matrix> biases;  // empty when use_bias is false
    bool use_bias = true;
    Activation activation = Activation::Tanh;

    static Mlp glorot(int in_dim, const std::vector<int>& hidden, int out_dim,
                      Activation act, bool use_bias, Rng& rng);

    int in_dim() const { return weights.front().rows; }
    int out_dim() const { return weights.back().cols; }
    int param_count() const;

    Matrix forward(const Matrix& x) const;

    void collect_params(std::vector<Matrix*>& out);
    void collect_params(std::vector<const Matrix*>& out) const;

    // Tape twin of forward(): `leaves[offset ..]` must hold this network's
    // parameters in collect_params order.
    NodeId forward_tape(Tape& t, NodeId x, const std::vector<NodeId>& leaves,
                        int offset) const;
};

// Per-feature latents z_i and their sum for one sample. `total` is always
// the ascending-index left fold of `per_feature`.
struct LatentBundle {
    std::vector<Matrix> per_feature;
    Matrix total;
};

// Everything produced by one tape-tracked forward pass; node ids index into
// the tape passed to forward_tape.
struct TapeForward {
    std::vector<NodeId> param_leaves;  // declaration order, one per parameter
    std::vector<NodeId> group_inputs;  // one leaf per feature group
    std::vector<NodeId> latents;       // z_i nodes
    NodeId latent_total = -1;
    NodeId output = -1;  // 1 x output_dim logits (or regression values)
};

class FlanModel {
public:
    FlanModel() = default;

    // Glorot-initializes all encoders (one per group, or one shared network
    // plus per-group positional codes), the positional codes (uniform in
    // [-0.5, 0.5]), and the predictor.
    static FlanModel build(FeaturePartition partition, EncoderSpec encoder_spec,
                           std::vector<int> predictor_hidden, bool predictor_bias,
                           Activation predictor_activation, OutputKind output_kind,
                           int output_dim, Rng& rng);

    const FeaturePartition& partition() const { return partition_; }
    const EncoderSpec& encoder_spec() const { return encoder_spec_; }
    OutputKind output_kind() const { return output_kind_; }
    int output_dim() const { return output_dim_; }
    int n_groups() const { return partition_.n_groups(); }
    int raw_dim() const { return partition_.raw_dim(); }
    int latent_dim() const { return encoder_spec_.latent_dim; }

    // Raw values of group i gathered into a 1 x width row.
    Matrix extract_group(const Matrix& x, int i) const;

    // z_i = phi_i(x_i); with a shared encoder, phi(concat(x_i, p_i)).
    Matrix encode_feature(const Matrix& x, int i) const;

    LatentBundle encode_all(const Matrix& x) const;

    // psi applied to an arbitrary latent vector.
    Matrix predict_latent(const Matrix& z) const;

    // Full pass: outputs = psi(sum_i z_i), plus the cached bundle.
    std::pair<Matrix, LatentBundle> forward(const Matrix& x) const;

    // psi over the partial sum of the kept groups (ascending index order).
    // keep = all indices reproduces forward bit-exactly; keep = {} gives
    // psi(0). Indices must be valid and duplicate-free.
    Matrix partial_forward(const LatentBundle& bundle, const std::vector<int>& keep) const;

    // psi(z_i): the effect of feature i in isolation.
    Matrix feature_effect(const LatentBundle& bundle, int i) const;

    // || [psi(z* + z_i) - psi(z*)] - psi(z_i) ||  with  z* = sum_{j != i} z_j.
    // Zero for a bias-free linear predictor; ||bias|| for an affine one.
    double taylor_residual(const LatentBundle& bundle, int i) const;

    // score_i = ||z_i||_2 — the native importance of each feature.
    std::vector<double> latent_norms(const LatentBundle& bundle) const;

    // Maps raw outputs to the probability scale: logistic for a binary
    // logit (1x1), row softmax for class logits, identity for regression.
    Matrix probabilities(const Matrix& outputs) const;

    // Binary: 1 iff logit > 0. Multiclass: argmax.
    int predicted_class(const Matrix& outputs) const;

    // All trainable matrices in declaration order: encoders (ascending
    // group; shared network first when sharing), positional codes, predictor.
    std::vector<Matrix*> parameters();
    std::vector<const Matrix*> parameters() const;
    int parameter_scalars() const;

    // Builds the complete forward graph for one sample on `t`, emitting all
    // parameters as leaves (same order as parameters()).
    TapeForward forward_tape(Tape& t, const Matrix& x) const;

    // Direct access for serialization and tests.
    std::vector<Mlp>& encoders() { return encoders_; }
    const std::vector<Mlp>& encoders() const { return encoders_; }
    std::vector<Matrix>& positional_codes() { return positional_codes_; }
    const std::vector<Matrix>& positional_codes() const { return positional_codes_; }
    Mlp& predictor() { return predictor_; }
    const Mlp& predictor() const { return predictor_; }

    // Re-checks structural invariants (shapes, distinct positional codes);
    // throws std::invalid_argument on violation. Called by build and by
    // checkpoint loading.
    void validate() const;

    static FlanModel assemble(FeaturePartition partition, EncoderSpec encoder_spec,
                              std::vector<Mlp> encoders,
                              std::vector<Matrix> positional_codes, Mlp predictor,
                              OutputKind output_kind, int output_dim);

private:
    FeaturePartition partition_;
    EncoderSpec encoder_spec_;
    std::vector<Mlp> encoders_;             // size N, or 1 when shared
    std::vector<Matrix> positional_codes_;  // size N when shared, else empty
    Mlp predictor_;
    OutputKind output_kind_ = OutputKind::BinaryLogit;
    int output_dim_ = 1;
};

}  // namespace flan
