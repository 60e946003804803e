#include "flan/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

#include "json.hpp"

#include "flan/errors.hpp"

namespace flan {

namespace {

using nlohmann::json;

void write_f64_le(std::ostream& out, double v) {
    std::uint64_t bits = 0;
    std::memcpy(&bits, &v, sizeof bits);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(bits >> (8 * i));
    out.write(reinterpret_cast<const char*>(b), 8);
}

double read_f64_le(std::istream& in, const std::string& path) {
    unsigned char b[8];
    in.read(reinterpret_cast<char*>(b), 8);
    if (!in) throw IoError(path + ": truncated checkpoint payload");
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= std::uint64_t(b[i]) << (8 * i);
    double v = 0.0;
    std::memcpy(&v, &bits, sizeof v);
    return v;
}

json mlp_header(const Mlp& m) {
    json j;
    std::vector<int> hidden;
    for (std::size_t l = 0; l + 1 < m.weights.size(); ++l) {
        hidden.push_back(m.weights[l].cols);
    }
    j["hidden"] = hidden;
    j["in"] = m.in_dim();
    j["out"] = m.out_dim();
    j["bias"] = m.use_bias;
    j["activation"] = activation_name(m.activation);
    return j;
}

Activation parse_activation(const std::string& s, const std::string& path) {
    if (s == "tanh") return Activation::Tanh;
    if (s == "relu") return Activation::Relu;
    throw IoError(path + ": unknown activation '" + s + "' in checkpoint header");
}

Mlp mlp_from_header(const json& j, const std::string& path) {
    Mlp m;
    m.use_bias = j.at("bias").get<bool>();
    m.activation = parse_activation(j.at("activation").get<std::string>(), path);
    std::vector<int> dims;
    dims.push_back(j.at("in").get<int>());
    for (int h : j.at("hidden").get<std::vector<int>>()) dims.push_back(h);
    dims.push_back(j.at("out").get<int>());
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        m.weights.push_back(Matrix::zeros(dims[l], dims[l + 1]));
        if (m.use_bias) m.biases.push_back(Matrix::zeros(1, dims[l + 1]));
    }
    return m;
}

}  // namespace

void save_checkpoint(const std::string& path, const FlanModel& model,
                     const std::string& config_hash) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);

    json header;
    header["config_hash"] = config_hash;
    header["output_kind"] = output_kind_name(model.output_kind());
    header["output_dim"] = model.output_dim();

    const FeaturePartition& p = model.partition();
    json jp;
    jp["kind"] = partition_kind_name(p.kind);
    jp["groups"] = p.groups;
    jp["names"] = p.group_names;
    jp["patch_size"] = p.patch_size;
    jp["image_side"] = p.image_side;
    jp["sequence_length"] = p.sequence_length;
    header["partition"] = jp;

    const EncoderSpec& es = model.encoder_spec();
    json je;
    je["latent_dim"] = es.latent_dim;
    je["hidden"] = es.hidden_sizes;
    je["activation"] = activation_name(es.activation);
    je["sharing"] = sharing_name(es.sharing);
    je["positional_code_dim"] = es.positional_code_dim;
    je["bias"] = es.use_bias;
    header["encoder_spec"] = je;

    json encs = json::array();
    for (const Mlp& enc : model.encoders()) encs.push_back(mlp_header(enc));
    header["encoders"] = encs;
    header["positional_codes"] = model.positional_codes().size();
    header["predictor"] = mlp_header(model.predictor());

    json shapes = json::array();
    for (const Matrix* m : model.parameters()) {
        shapes.push_back(json::array({m->rows, m->cols}));
    }
    header["params"] = shapes;

    out.write("FLAN", 4);
    out.put(static_cast<char>(kCheckpointVersion));
    const std::string header_text = header.dump();
    out << header_text << '\n';
    for (const Matrix* m : model.parameters()) {
        for (double v : m->data) write_f64_le(out, v);
    }
    if (!out) throw IoError("write failed for " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);

    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "FLAN", 4) != 0) {
        throw IoError(path + ": bad checkpoint magic");
    }
    const int version = in.get();
    if (version != kCheckpointVersion) {
        throw IoError(path + ": unsupported checkpoint version " +
                      std::to_string(version));
    }
    std::string header_text;
    if (!std::getline(in, header_text)) {
        throw IoError(path + ": truncated checkpoint header");
    }
    json header;
    try {
        header = json::parse(header_text);
    } catch (const json::exception& e) {
        throw IoError(path + ": malformed checkpoint header: " + e.what());
    }

    LoadedCheckpoint result;
    try {
        result.config_hash = header.at("config_hash").get<std::string>();

        FeaturePartition p;
        const json& jp = header.at("partition");
        const std::string kind = jp.at("kind").get<std::string>();
        if (kind == "per-column") {
            p.kind = PartitionKind::PerColumn;
        } else if (kind == "token-sequence") {
            p.kind = PartitionKind::TokenSequence;
        } else if (kind == "square-patch") {
            p.kind = PartitionKind::SquarePatch;
        } else {
            throw IoError(path + ": unknown partition kind '" + kind + "'");
        }
        p.groups = jp.at("groups").get<std::vector<std::vector<int>>>();
        p.group_names = jp.at("names").get<std::vector<std::string>>();
        p.patch_size = jp.at("patch_size").get<int>();
        p.image_side = jp.at("image_side").get<int>();
        p.sequence_length = jp.at("sequence_length").get<int>();

        EncoderSpec es;
        const json& je = header.at("encoder_spec");
        es.latent_dim = je.at("latent_dim").get<int>();
        es.hidden_sizes = je.at("hidden").get<std::vector<int>>();
        es.activation = parse_activation(je.at("activation").get<std::string>(), path);
        es.sharing = je.at("sharing").get<std::string>() == "shared"
                         ? Sharing::SharedWithPositionalCode
                         : Sharing::Distinct;
        es.positional_code_dim = je.at("positional_code_dim").get<int>();
        es.use_bias = je.at("bias").get<bool>();

        std::vector<Mlp> encoders;
        for (const json& jm : header.at("encoders")) {
            encoders.push_back(mlp_from_header(jm, path));
        }
        const int n_codes = header.at("positional_codes").get<int>();
        std::vector<Matrix> codes;
        for (int i = 0; i < n_codes; ++i) {
            // Distinct placeholders keep assemble()'s validation happy until
            // the real values are read from the payload below.
            Matrix c = Matrix::zeros(1, es.positional_code_dim);
            c.data[0] = i + 1.0;
            codes.push_back(std::move(c));
        }
        Mlp predictor = mlp_from_header(header.at("predictor"), path);

        const std::string ok = header.at("output_kind").get<std::string>();
        OutputKind output_kind;
        if (ok == "binary-logit") {
            output_kind = OutputKind::BinaryLogit;
        } else if (ok == "class-logits") {
            output_kind = OutputKind::ClassLogits;
        } else if (ok == "regression") {
            output_kind = OutputKind::Regression;
        } else {
            throw IoError(path + ": unknown output kind '" + ok + "'");
        }
        const int output_dim = header.at("output_dim").get<int>();

        result.model = FlanModel::assemble(std::move(p), es, std::move(encoders),
                                           std::move(codes), std::move(predictor),
                                           output_kind, output_dim);

        // Validate declared shapes, then read the payload in declaration
        // order. Positional codes were zero-initialized above and are
        // overwritten here like every other parameter.
        const auto params = result.model.parameters();
        const json& shapes = header.at("params");
        if (shapes.size() != params.size()) {
            throw IoError(path + ": parameter count mismatch in header");
        }
        for (std::size_t k = 0; k < params.size(); ++k) {
            if (shapes[k][0].get<int>() != params[k]->rows ||
                shapes[k][1].get<int>() != params[k]->cols) {
                throw IoError(path + ": parameter shape mismatch at block " +
                              std::to_string(k));
            }
        }
        for (Matrix* m : params) {
            for (double& v : m->data) v = read_f64_le(in, path);
        }
    } catch (const json::exception& e) {
        throw IoError(path + ": malformed checkpoint header: " + e.what());
    }
    if (in.peek() != std::char_traits<char>::eof()) {
        throw IoError(path + ": trailing bytes after checkpoint payload");
    }
    result.model.validate();
    return result;
}

}  // namespace flan
