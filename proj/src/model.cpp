#include "flan/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace flan {

const char* partition_kind_name(PartitionKind k) {
    switch (k) {
        case PartitionKind::PerColumn: return "per-column";
        case PartitionKind::TokenSequence: return "token-sequence";
        case PartitionKind::SquarePatch: return "square-patch";
    }
    return "?";
}

const char* activation_name(Activation a) {
    return a == Activation::Tanh ? "tanh" : "relu";
}

const char* sharing_name(Sharing s) {
    return s == Sharing::Distinct ? "distinct" : "shared";
}

const char* output_kind_name(OutputKind k) {
    switch (k) {
        case OutputKind::BinaryLogit: return "binary-logit";
        case OutputKind::ClassLogits: return "class-logits";
        case OutputKind::Regression: return "regression";
    }
    return "?";
}

// ---------------------------------------------------------------------------
// FeaturePartition

FeaturePartition FeaturePartition::per_column(int n_columns) {
    FeaturePartition p;
    p.kind = PartitionKind::PerColumn;
    p.groups.reserve(n_columns);
    for (int i = 0; i < n_columns; ++i) p.groups.push_back({i});
    p.validate();
    return p;
}

FeaturePartition FeaturePartition::from_groups(std::vector<std::vector<int>> groups,
                                               PartitionKind kind) {
    FeaturePartition p;
    p.kind = kind;
    p.groups = std::move(groups);
    p.validate();
    return p;
}

FeaturePartition FeaturePartition::square_patches(int image_side, int patch_size) {
    if (patch_size <= 0 || image_side <= 0 || image_side % patch_size != 0) {
        std::ostringstream os;
        os << "square_patches: image side " << image_side
           << " is not divisible by patch size " << patch_size;
        throw std::invalid_argument(os.str());
    }
    FeaturePartition p;
    p.kind = PartitionKind::SquarePatch;
    p.patch_size = patch_size;
    p.image_side = image_side;
    const int per_side = image_side / patch_size;
    for (int pr = 0; pr < per_side; ++pr) {
        for (int pc = 0; pc < per_side; ++pc) {
            std::vector<int> g;
            g.reserve(static_cast<std::size_t>(patch_size) * patch_size);
            for (int r = 0; r < patch_size; ++r) {
                for (int c = 0; c < patch_size; ++c) {
                    g.push_back((pr * patch_size + r) * image_side + (pc * patch_size + c));
                }
            }
            p.groups.push_back(std::move(g));
            std::ostringstream name;
            name << "patch_r" << pr << "_c" << pc;
            p.group_names.push_back(name.str());
        }
    }
    p.validate();
    return p;
}

int FeaturePartition::raw_dim() const {
    std::size_t n = 0;
    for (const auto& g : groups) n += g.size();
    return static_cast<int>(n);
}

bool FeaturePartition::uniform_group_width() const {
    for (const auto& g : groups) {
        if (g.size() != groups.front().size()) return false;
    }
    return true;
}

void FeaturePartition::validate() {
    if (groups.empty()) throw std::invalid_argument("FeaturePartition: no groups");
    const int dim = raw_dim();
    std::vector<int> seen(dim, 0);
    for (const auto& g : groups) {
        if (g.empty()) throw std::invalid_argument("FeaturePartition: empty group");
        for (int d : g) {
            if (d < 0 || d >= dim) {
                std::ostringstream os;
                os << "FeaturePartition: dimension " << d << " outside 0.." << dim - 1;
                throw std::invalid_argument(os.str());
            }
            if (seen[d]++) {
                std::ostringstream os;
                os << "FeaturePartition: dimension " << d << " appears in two groups";
                throw std::invalid_argument(os.str());
            }
        }
    }
    // Covering follows from: sum of sizes == dim and no duplicates.
    if (group_names.empty()) {
        for (int i = 0; i < n_groups(); ++i) {
            group_names.push_back("group_" + std::to_string(i));
        }
    }
    if (static_cast<int>(group_names.size()) != n_groups()) {
        throw std::invalid_argument("FeaturePartition: group_names size mismatch");
    }
}

// ---------------------------------------------------------------------------
// Mlp

Mlp Mlp::glorot(int in_dim, const std::vector<int>& hidden, int out_dim,
                Activation act, bool use_bias, Rng& rng) {
    if (in_dim <= 0 || out_dim <= 0) {
        throw std::invalid_argument("Mlp: layer dimensions must be positive");
    }
    Mlp m;
    m.use_bias = use_bias;
    m.activation = act;
    std::vector<int> dims;
    dims.push_back(in_dim);
    for (int h : hidden) {
        if (h <= 0) throw std::invalid_argument("Mlp: hidden sizes must be positive");
        dims.push_back(h);
    }
    dims.push_back(out_dim);
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        const double limit = std::sqrt(6.0 / (dims[l] + dims[l + 1]));
        m.weights.push_back(Matrix::random_uniform(dims[l], dims[l + 1], -limit, limit, rng));
        if (use_bias) m.biases.push_back(Matrix::zeros(1, dims[l + 1]));
    }
    return m;
}

int Mlp::param_count() const {
    return static_cast<int>(weights.size() + biases.size());
}

Matrix Mlp::forward(const Matrix& x) const {
    Matrix h = x;
    for (std::size_t l = 0; l < weights.size(); ++l) {
        h = matmul(h, weights[l]);
        if (use_bias) h = add(h, biases[l]);
        if (l + 1 < weights.size()) {
            if (activation == Activation::Tanh) {
                for (auto& v : h.data) v = std::tanh(v);
            } else {
                for (auto& v : h.data) v = v > 0.0 ? v : 0.0;
            }
        }
    }
    return h;
}

void Mlp::collect_params(std::vector<Matrix*>& out) {
    for (std::size_t l = 0; l < weights.size(); ++l) {
        out.push_back(&weights[l]);
        if (use_bias) out.push_back(&biases[l]);
    }
}

void Mlp::collect_params(std::vector<const Matrix*>& out) const {
    for (std::size_t l = 0; l < weights.size(); ++l) {
        out.push_back(&weights[l]);
        if (use_bias) out.push_back(&biases[l]);
    }
}

NodeId Mlp::forward_tape(Tape& t, NodeId x, const std::vector<NodeId>& leaves,
                         int offset) const {
    NodeId h = x;
    int k = offset;
    for (std::size_t l = 0; l < weights.size(); ++l) {
        h = t.matmul(h, leaves[k++]);
        if (use_bias) h = t.add(h, leaves[k++]);
        if (l + 1 < weights.size()) {
            h = activation == Activation::Tanh ? t.tanh_act(h) : t.relu(h);
        }
    }
    return h;
}

// ---------------------------------------------------------------------------
// FlanModel

FlanModel FlanModel::build(FeaturePartition partition, EncoderSpec encoder_spec,
                           std::vector<int> predictor_hidden, bool predictor_bias,
                           Activation predictor_activation, OutputKind output_kind,
                           int output_dim, Rng& rng) {
    partition.validate();
    if (encoder_spec.latent_dim < 1) {
        throw std::invalid_argument("EncoderSpec: latent_dim must be >= 1");
    }
    if (output_dim < 1) throw std::invalid_argument("FlanModel: output_dim must be >= 1");
    if (output_kind == OutputKind::BinaryLogit && output_dim != 1) {
        throw std::invalid_argument("FlanModel: binary-logit head requires output_dim 1");
    }
    if (output_kind == OutputKind::ClassLogits && output_dim < 2) {
        throw std::invalid_argument("FlanModel: class-logits head requires output_dim >= 2");
    }

    FlanModel m;
    m.partition_ = std::move(partition);
    m.encoder_spec_ = encoder_spec;
    m.output_kind_ = output_kind;
    m.output_dim_ = output_dim;

    const int n = m.partition_.n_groups();
    if (encoder_spec.sharing == Sharing::SharedWithPositionalCode) {
        if (encoder_spec.positional_code_dim < 1) {
            throw std::invalid_argument(
                "EncoderSpec: shared encoder requires positional_code_dim >= 1");
        }
        if (!m.partition_.uniform_group_width()) {
            throw std::invalid_argument(
                "EncoderSpec: shared encoder requires all feature groups to have "
                "equal width");
        }
        const int in_dim = m.partition_.group_width(0) + encoder_spec.positional_code_dim;
        m.encoders_.push_back(Mlp::glorot(in_dim, encoder_spec.hidden_sizes,
                                          encoder_spec.latent_dim, encoder_spec.activation,
                                          encoder_spec.use_bias, rng));
        for (int i = 0; i < n; ++i) {
            m.positional_codes_.push_back(Matrix::random_uniform(
                1, encoder_spec.positional_code_dim, -0.5, 0.5, rng));
        }
    } else {
        for (int i = 0; i < n; ++i) {
            m.encoders_.push_back(Mlp::glorot(
                m.partition_.group_width(i), encoder_spec.hidden_sizes,
                encoder_spec.latent_dim, encoder_spec.activation, encoder_spec.use_bias,
                rng));
        }
    }

    m.predictor_ = Mlp::glorot(encoder_spec.latent_dim, predictor_hidden, output_dim,
                               predictor_activation, predictor_bias, rng);
    m.validate();
    return m;
}

FlanModel FlanModel::assemble(FeaturePartition partition, EncoderSpec encoder_spec,
                              std::vector<Mlp> encoders,
                              std::vector<Matrix> positional_codes, Mlp predictor,
                              OutputKind output_kind, int output_dim) {
    FlanModel m;
    partition.validate();
    m.partition_ = std::move(partition);
    m.encoder_spec_ = std::move(encoder_spec);
    m.encoders_ = std::move(encoders);
    m.positional_codes_ = std::move(positional_codes);
    m.predictor_ = std::move(predictor);
    m.output_kind_ = output_kind;
    m.output_dim_ = output_dim;
    m.validate();
    return m;
}

void FlanModel::validate() const {
    const int n = partition_.n_groups();
    const bool shared = encoder_spec_.sharing == Sharing::SharedWithPositionalCode;
    if (shared) {
        if (encoders_.size() != 1) {
            throw std::invalid_argument("FlanModel: shared mode expects one encoder");
        }
        if (static_cast<int>(positional_codes_.size()) != n) {
            throw std::invalid_argument(
                "FlanModel: one positional code per group required");
        }
        for (int i = 0; i < n; ++i) {
            for (int j = i + 1; j < n; ++j) {
                if (bit_equal(positional_codes_[i], positional_codes_[j])) {
                    std::ostringstream os;
                    os << "FlanModel: positional codes " << i << " and " << j
                       << " are identical";
                    throw std::invalid_argument(os.str());
                }
            }
        }
    } else {
        if (static_cast<int>(encoders_.size()) != n) {
            throw std::invalid_argument("FlanModel: one encoder per group required");
        }
        if (!positional_codes_.empty()) {
            throw std::invalid_argument(
                "FlanModel: positional codes present without sharing");
        }
    }
    for (const auto& enc : encoders_) {
        if (enc.out_dim() != encoder_spec_.latent_dim) {
            std::ostringstream os;
            os << "FlanModel: encoder output dim " << enc.out_dim()
               << " != latent dim " << encoder_spec_.latent_dim;
            throw std::invalid_argument(os.str());
        }
    }
    if (predictor_.in_dim() != encoder_spec_.latent_dim) {
        std::ostringstream os;
        os << "FlanModel: predictor input dim " << predictor_.in_dim()
           << " != latent dim " << encoder_spec_.latent_dim;
        throw std::invalid_argument(os.str());
    }
    if (predictor_.out_dim() != output_dim_) {
        std::ostringstream os;
        os << "FlanModel: predictor output dim " << predictor_.out_dim()
           << " != output dim " << output_dim_;
        throw std::invalid_argument(os.str());
    }
}

Matrix FlanModel::extract_group(const Matrix& x, int i) const {
    if (x.rows != 1 || x.cols != raw_dim()) {
        std::ostringstream os;
        os << "FlanModel: input shape " << x.shape_str() << " != expected 1x" << raw_dim();
        throw std::invalid_argument(os.str());
    }
    if (i < 0 || i >= n_groups()) {
        throw std::invalid_argument("FlanModel: group index " + std::to_string(i) +
                                    " out of range");
    }
    const auto& g = partition_.groups[i];
    Matrix out(1, static_cast<int>(g.size()));
    for (std::size_t j = 0; j < g.size(); ++j) out.data[j] = x.data[g[j]];
    return out;
}

Matrix FlanModel::encode_feature(const Matrix& x, int i) const {
    const Matrix xi = extract_group(x, i);
    if (encoder_spec_.sharing == Sharing::SharedWithPositionalCode) {
        return encoders_[0].forward(concat_cols(xi, positional_codes_[i]));
    }
    return encoders_[i].forward(xi);
}

LatentBundle FlanModel::encode_all(const Matrix& x) const {
    LatentBundle b;
    b.per_feature.reserve(n_groups());
    for (int i = 0; i < n_groups(); ++i) b.per_feature.push_back(encode_feature(x, i));
    b.total = b.per_feature[0];
    for (int i = 1; i < n_groups(); ++i) b.total = add(b.total, b.per_feature[i]);
    return b;
}

Matrix FlanModel::predict_latent(const Matrix& z) const { return predictor_.forward(z); }

std::pair<Matrix, LatentBundle> FlanModel::forward(const Matrix& x) const {
    LatentBundle b = encode_all(x);
    Matrix out = predict_latent(b.total);
    return {std::move(out), std::move(b)};
}

Matrix FlanModel::partial_forward(const LatentBundle& bundle,
                                  const std::vector<int>& keep) const {
    std::vector<int> idx = keep;
    std::sort(idx.begin(), idx.end());
    for (std::size_t j = 0; j < idx.size(); ++j) {
        if (idx[j] < 0 || idx[j] >= n_groups()) {
            throw std::invalid_argument("partial_forward: group index " +
                                        std::to_string(idx[j]) + " out of range");
        }
        if (j > 0 && idx[j] == idx[j - 1]) {
            throw std::invalid_argument("partial_forward: duplicate group index " +
                                        std::to_string(idx[j]));
        }
    }
    Matrix z = Matrix::zeros(1, latent_dim());
    if (!idx.empty()) {
        z = bundle.per_feature[idx[0]];
        for (std::size_t j = 1; j < idx.size(); ++j) {
            z = add(z, bundle.per_feature[idx[j]]);
        }
    }
    return predict_latent(z);
}

Matrix FlanModel::feature_effect(const LatentBundle& bundle, int i) const {
    if (i < 0 || i >= n_groups()) {
        throw std::invalid_argument("feature_effect: group index " + std::to_string(i) +
                                    " out of range");
    }
    return predict_latent(bundle.per_feature[i]);
}

double FlanModel::taylor_residual(const LatentBundle& bundle, int i) const {
    if (i < 0 || i >= n_groups()) {
        throw std::invalid_argument("taylor_residual: group index " + std::to_string(i) +
                                    " out of range");
    }
    Matrix z_star = Matrix::zeros(1, latent_dim());
    bool first = true;
    for (int j = 0; j < n_groups(); ++j) {
        if (j == i) continue;
        if (first) {
            z_star = bundle.per_feature[j];
            first = false;
        } else {
            z_star = add(z_star, bundle.per_feature[j]);
        }
    }
    const Matrix delta =
        sub(predict_latent(add(z_star, bundle.per_feature[i])), predict_latent(z_star));
    return l2_norm(sub(delta, predict_latent(bundle.per_feature[i])));
}

std::vector<double> FlanModel::latent_norms(const LatentBundle& bundle) const {
    std::vector<double> norms;
    norms.reserve(bundle.per_feature.size());
    for (const auto& z : bundle.per_feature) norms.push_back(l2_norm(z));
    return norms;
}

Matrix FlanModel::probabilities(const Matrix& outputs) const {
    switch (output_kind_) {
        case OutputKind::BinaryLogit: {
            const double s = outputs.at(0, 0);
            const double p = s >= 0.0 ? 1.0 / (1.0 + std::exp(-s))
                                      : std::exp(s) / (1.0 + std::exp(s));
            return Matrix::scalar(p);
        }
        case OutputKind::ClassLogits:
            return softmax_rows(outputs);
        case OutputKind::Regression:
            return outputs;
    }
    return outputs;
}

int FlanModel::predicted_class(const Matrix& outputs) const {
    if (output_kind_ == OutputKind::BinaryLogit) return outputs.at(0, 0) > 0.0 ? 1 : 0;
    return argmax_row(outputs, 0);
}

std::vector<Matrix*> FlanModel::parameters() {
    std::vector<Matrix*> out;
    for (auto& enc : encoders_) enc.collect_params(out);
    for (auto& p : positional_codes_) out.push_back(&p);
    predictor_.collect_params(out);
    return out;
}

std::vector<const Matrix*> FlanModel::parameters() const {
    std::vector<const Matrix*> out;
    for (const auto& enc : encoders_) enc.collect_params(out);
    for (const auto& p : positional_codes_) out.push_back(&p);
    predictor_.collect_params(out);
    return out;
}

int FlanModel::parameter_scalars() const {
    int n = 0;
    for (const Matrix* p : parameters()) n += static_cast<int>(p->size());
    return n;
}

TapeForward FlanModel::forward_tape(Tape& t, const Matrix& x) const {
    if (x.rows != 1 || x.cols != raw_dim()) {
        std::ostringstream os;
        os << "forward_tape: input shape " << x.shape_str() << " != expected 1x"
           << raw_dim();
        throw std::invalid_argument(os.str());
    }
    TapeForward tf;
    const auto params = parameters();
    tf.param_leaves.reserve(params.size());
    for (const Matrix* p : params) tf.param_leaves.push_back(t.leaf(*p));

    const bool shared = encoder_spec_.sharing == Sharing::SharedWithPositionalCode;
    const int per_encoder = encoders_[0].param_count();
    const int n = n_groups();

    tf.group_inputs.reserve(n);
    tf.latents.reserve(n);
    for (int i = 0; i < n; ++i) {
        const NodeId xi = t.leaf(extract_group(x, i));
        tf.group_inputs.push_back(xi);
        NodeId z;
        if (shared) {
            // positional codes sit right after the shared encoder's params
            const NodeId pos = tf.param_leaves[per_encoder + i];
            z = encoders_[0].forward_tape(t, t.concat(xi, pos), tf.param_leaves, 0);
        } else {
            z = encoders_[i].forward_tape(t, xi, tf.param_leaves, i * per_encoder);
        }
        tf.latents.push_back(z);
    }

    tf.latent_total = tf.latents[0];
    for (int i = 1; i < n; ++i) tf.latent_total = t.add(tf.latent_total, tf.latents[i]);

    const int predictor_offset =
        shared ? per_encoder + n : n * per_encoder;
    tf.output = predictor_.forward_tape(t, tf.latent_total, tf.param_leaves,
                                        predictor_offset);
    return tf;
}

}  // namespace flan
