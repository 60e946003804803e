#include "flan/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

#include "flan/errors.hpp"

namespace flan {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& path, const std::string& what) {
    throw ConfigError(path + ": " + what);
}

void check_keys(const json& j, const std::string& path,
                std::initializer_list<const char*> allowed) {
    if (!j.is_object()) fail(path, "expected an object");
    for (const auto& item : j.items()) {
        bool known = false;
        for (const char* k : allowed) {
            if (item.key() == k) {
                known = true;
                break;
            }
        }
        if (!known) fail(path + "." + item.key(), "unknown key");
    }
}

template <typename T>
T req(const json& j, const std::string& path, const char* key) {
    if (!j.contains(key)) fail(path + "." + key, "missing required field");
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        fail(path + "." + key, "wrong type");
    }
}

template <typename T>
T opt(const json& j, const std::string& path, const char* key, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        fail(path + "." + key, "wrong type");
    }
}

ColumnKind parse_column_kind(const std::string& s, const std::string& path) {
    if (s == "numeric") return ColumnKind::Numeric;
    if (s == "binary") return ColumnKind::Binary;
    if (s == "categorical") return ColumnKind::Categorical;
    fail(path, "unknown column kind '" + s + "' (numeric|binary|categorical)");
}

Activation parse_activation_cfg(const std::string& s, const std::string& path) {
    if (s == "tanh") return Activation::Tanh;
    if (s == "relu") return Activation::Relu;
    fail(path, "unknown activation '" + s + "' (tanh|relu)");
}

Provider parse_provider(const std::string& s, const std::string& path) {
    if (s == "flan-norm") return Provider::FlanNorm;
    if (s == "saliency") return Provider::Saliency;
    if (s == "input-x-gradient") return Provider::InputXGradient;
    if (s == "integrated-gradients") return Provider::IntegratedGradients;
    fail(path, "unknown provider '" + s + "'");
}

SplitSpec parse_split(const json& j, const std::string& path) {
    SplitSpec s;
    if (j.is_null()) return s;
    check_keys(j, path, {"train", "val", "test", "all_train", "seed"});
    s.train = opt<double>(j, path, "train", s.train);
    s.val = opt<double>(j, path, "val", s.val);
    s.test = opt<double>(j, path, "test", s.test);
    s.all_train = opt<bool>(j, path, "all_train", s.all_train);
    s.seed = opt<std::uint64_t>(j, path, "seed", s.seed);
    s.validate();
    return s;
}

TaskConfig parse_task(const json& j, const std::string& path) {
    TaskConfig t;
    check_keys(j, path,
               {"source", "path", "label", "columns", "standardize", "split",
                "images", "labels", "patch_size", "alphabet", "max_primary",
                "max_secondary", "generator", "n_samples", "n_features",
                "n_irrelevant", "noise_std", "data_seed"});
    t.source = req<std::string>(j, path, "source");
    t.split = parse_split(j.contains("split") ? j.at("split") : json(), path + ".split");

    if (t.source == "csv") {
        t.path = req<std::string>(j, path, "path");
        t.schema.label_column = req<std::string>(j, path, "label");
        t.schema.standardize = opt<bool>(j, path, "standardize", true);
        if (!j.contains("columns") || !j.at("columns").is_array()) {
            fail(path + ".columns", "expected an array of {name, kind}");
        }
        int c = 0;
        for (const json& jc : j.at("columns")) {
            const std::string cpath = path + ".columns[" + std::to_string(c++) + "]";
            check_keys(jc, cpath, {"name", "kind"});
            DatasetSchema::Column col;
            col.name = req<std::string>(jc, cpath, "name");
            col.kind = parse_column_kind(req<std::string>(jc, cpath, "kind"), cpath);
            t.schema.columns.push_back(std::move(col));
        }
        if (t.schema.columns.empty()) fail(path + ".columns", "no columns declared");
    } else if (t.source == "idx") {
        t.images_path = req<std::string>(j, path, "images");
        t.labels_path = req<std::string>(j, path, "labels");
        t.patch_size = req<int>(j, path, "patch_size");
        if (t.patch_size < 1) fail(path + ".patch_size", "must be >= 1");
    } else if (t.source == "tokens") {
        t.path = req<std::string>(j, path, "path");
        t.alphabet = req<std::string>(j, path, "alphabet");
        t.max_primary = req<int>(j, path, "max_primary");
        t.max_secondary = opt<int>(j, path, "max_secondary", 0);
        if (t.max_primary < 1) fail(path + ".max_primary", "must be >= 1");
        if (t.max_secondary < 0) fail(path + ".max_secondary", "must be >= 0");
    } else if (t.source == "synthetic") {
        const std::string g = req<std::string>(j, path, "generator");
        if (g == "xor") {
            t.synthetic.generator = Generator::Xor;
        } else if (g == "additive") {
            t.synthetic.generator = Generator::Additive;
        } else if (g == "interaction") {
            t.synthetic.generator = Generator::Interaction;
        } else if (g == "planted-relevance") {
            t.synthetic.generator = Generator::PlantedRelevance;
        } else {
            fail(path + ".generator", "unknown generator '" + g + "'");
        }
        t.synthetic.n_samples = req<int>(j, path, "n_samples");
        t.synthetic.n_features = req<int>(j, path, "n_features");
        t.synthetic.n_irrelevant = opt<int>(j, path, "n_irrelevant", 0);
        t.synthetic.noise_std = opt<double>(j, path, "noise_std", 0.0);
        t.synthetic.seed = opt<std::uint64_t>(j, path, "data_seed", 0);
        t.synthetic.validate();
    } else {
        fail(path + ".source", "unknown source '" + t.source +
                                   "' (csv|idx|tokens|synthetic)");
    }
    return t;
}

ModelConfig parse_model(const json& j, const std::string& path) {
    ModelConfig m;
    check_keys(j, path,
               {"latent_dim", "encoder_hidden", "encoder_activation", "encoder_bias",
                "sharing", "positional_code_dim", "predictor_hidden",
                "predictor_activation", "predictor_bias", "output"});
    m.encoder.latent_dim = opt<int>(j, path, "latent_dim", 16);
    m.encoder.hidden_sizes = opt<std::vector<int>>(j, path, "encoder_hidden", {});
    m.encoder.activation = parse_activation_cfg(
        opt<std::string>(j, path, "encoder_activation", "tanh"),
        path + ".encoder_activation");
    m.encoder.use_bias = opt<bool>(j, path, "encoder_bias", true);
    const std::string sharing = opt<std::string>(j, path, "sharing", "distinct");
    if (sharing == "distinct") {
        m.encoder.sharing = Sharing::Distinct;
    } else if (sharing == "shared") {
        m.encoder.sharing = Sharing::SharedWithPositionalCode;
    } else {
        fail(path + ".sharing", "unknown sharing '" + sharing + "' (distinct|shared)");
    }
    m.encoder.positional_code_dim = opt<int>(j, path, "positional_code_dim", 0);
    if (m.encoder.sharing == Sharing::SharedWithPositionalCode &&
        m.encoder.positional_code_dim < 1) {
        fail(path + ".positional_code_dim", "must be >= 1 with shared encoders");
    }
    if (m.encoder.latent_dim < 1) fail(path + ".latent_dim", "must be >= 1");
    m.predictor_hidden = opt<std::vector<int>>(j, path, "predictor_hidden", {});
    m.predictor_activation = parse_activation_cfg(
        opt<std::string>(j, path, "predictor_activation", "tanh"),
        path + ".predictor_activation");
    m.predictor_bias = opt<bool>(j, path, "predictor_bias", true);
    m.output = opt<std::string>(j, path, "output", "auto");
    if (m.output != "auto" && m.output != "binary-logit" && m.output != "class-logits") {
        fail(path + ".output", "unknown output '" + m.output +
                                   "' (auto|binary-logit|class-logits)");
    }
    return m;
}

TrainConfig parse_train(const json& j, const std::string& path) {
    TrainConfig t;
    check_keys(j, path,
               {"optimizer", "lr", "betas", "eps", "weight_decay", "schedule",
                "epochs", "batch_size", "early_stop_patience"});
    const std::string optimizer = opt<std::string>(j, path, "optimizer", "adam");
    if (optimizer == "adam") {
        t.optimizer = Optimizer::Adam;
    } else if (optimizer == "adamw") {
        t.optimizer = Optimizer::AdamW;
    } else if (optimizer == "radam") {
        fail(path + ".optimizer", "radam is not supported in this build; use adam or adamw");
    } else {
        fail(path + ".optimizer", "unknown optimizer '" + optimizer + "' (adam|adamw)");
    }
    t.lr = opt<double>(j, path, "lr", t.lr);
    if (j.contains("betas")) {
        const auto betas = req<std::vector<double>>(j, path, "betas");
        if (betas.size() != 2) fail(path + ".betas", "expected [beta1, beta2]");
        t.beta1 = betas[0];
        t.beta2 = betas[1];
    }
    t.eps = opt<double>(j, path, "eps", t.eps);
    t.weight_decay = opt<double>(j, path, "weight_decay", t.weight_decay);
    t.epochs = opt<int>(j, path, "epochs", t.epochs);
    t.batch_size = opt<int>(j, path, "batch_size", t.batch_size);
    t.early_stop_patience = opt<int>(j, path, "early_stop_patience", t.early_stop_patience);

    if (j.contains("schedule")) {
        const json& js = j.at("schedule");
        const std::string spath = path + ".schedule";
        const std::string kind = req<std::string>(js, spath, "kind");
        if (kind == "none") {
            check_keys(js, spath, {"kind"});
            t.schedule = Schedule::None;
        } else if (kind == "exponential") {
            check_keys(js, spath, {"kind", "gamma"});
            t.schedule = Schedule::ExponentialDecay;
            t.gamma = req<double>(js, spath, "gamma");
        } else if (kind == "step") {
            check_keys(js, spath, {"kind", "period", "factor"});
            t.schedule = Schedule::StepDecay;
            t.step_period = req<int>(js, spath, "period");
            t.step_factor = req<double>(js, spath, "factor");
        } else if (kind == "cosine") {
            check_keys(js, spath, {"kind", "period", "restarts"});
            t.schedule = Schedule::CosineAnnealing;
            t.cosine_period = req<int>(js, spath, "period");
            t.cosine_restarts = opt<bool>(js, spath, "restarts", false);
        } else {
            fail(spath + ".kind",
                 "unknown schedule '" + kind + "' (none|exponential|step|cosine)");
        }
    }
    t.validate();
    return t;
}

InterpretConfig parse_interpret(const json& j, const std::string& path) {
    InterpretConfig i;
    check_keys(j, path, {"providers", "top_k", "match_k", "neighbors", "ig_steps",
                         "ig_baseline"});
    if (j.contains("providers")) {
        i.providers.clear();
        int c = 0;
        for (const json& jp : j.at("providers")) {
            const std::string ppath = path + ".providers[" + std::to_string(c++) + "]";
            if (!jp.is_string()) fail(ppath, "expected a provider name string");
            i.providers.push_back(parse_provider(jp.get<std::string>(), ppath));
        }
        if (i.providers.empty()) fail(path + ".providers", "must not be empty");
    }
    i.top_k = opt<int>(j, path, "top_k", i.top_k);
    i.match_k = opt<int>(j, path, "match_k", i.match_k);
    i.neighbors = opt<int>(j, path, "neighbors", i.neighbors);
    i.ig_steps = opt<int>(j, path, "ig_steps", i.ig_steps);
    i.ig_baseline = opt<std::string>(j, path, "ig_baseline", i.ig_baseline);
    if (i.top_k < 1) fail(path + ".top_k", "must be >= 1");
    if (i.match_k < 1) fail(path + ".match_k", "must be >= 1");
    if (i.neighbors < 1) fail(path + ".neighbors", "must be >= 1");
    if (i.ig_steps < 1) fail(path + ".ig_steps", "must be >= 1");
    if (i.ig_baseline != "zero" && i.ig_baseline != "train-mean") {
        fail(path + ".ig_baseline",
             "unknown baseline '" + i.ig_baseline + "' (zero|train-mean)");
    }
    return i;
}

MetricsConfig parse_metrics(const json& j, const std::string& path) {
    MetricsConfig m;
    check_keys(j, path, {"score_tol", "effect_tol", "prototypes", "local_k", "spaces",
                         "scopes", "max_samples"});
    m.score_tol = opt<double>(j, path, "score_tol", m.score_tol);
    m.effect_tol = opt<double>(j, path, "effect_tol", m.effect_tol);
    m.prototypes = opt<int>(j, path, "prototypes", m.prototypes);
    m.local_k = opt<int>(j, path, "local_k", m.local_k);
    m.max_samples = opt<int>(j, path, "max_samples", m.max_samples);
    if (m.score_tol < 0) fail(path + ".score_tol", "must be >= 0");
    if (m.effect_tol < 0) fail(path + ".effect_tol", "must be >= 0");
    if (m.prototypes < 1) fail(path + ".prototypes", "must be >= 1");
    if (m.local_k < 1) fail(path + ".local_k", "must be >= 1");
    if (m.max_samples < 0) fail(path + ".max_samples", "must be >= 0");
    auto parse_set = [&](const char* key, bool& a, bool& b, const char* na,
                         const char* nb) {
        if (!j.contains(key)) return;
        a = b = false;
        int c = 0;
        for (const json& js : j.at(key)) {
            const std::string spath = path + "." + key + "[" + std::to_string(c++) + "]";
            if (!js.is_string()) fail(spath, "expected a string");
            const std::string s = js.get<std::string>();
            if (s == na) {
                a = true;
            } else if (s == nb) {
                b = true;
            } else {
                fail(spath, "unknown value '" + s + "'");
            }
        }
        if (!a && !b) fail(path + "." + key, "must not be empty");
    };
    parse_set("spaces", m.space_original, m.space_latent, "original", "latent");
    parse_set("scopes", m.scope_global, m.scope_local, "global", "local");
    return m;
}

json split_to_json(const SplitSpec& s) {
    return json{{"train", s.train}, {"val", s.val},           {"test", s.test},
                {"all_train", s.all_train}, {"seed", s.seed}};
}

json task_to_json(const TaskConfig& t) {
    json j;
    j["source"] = t.source;
    j["split"] = split_to_json(t.split);
    if (t.source == "csv") {
        j["path"] = t.path;
        j["label"] = t.schema.label_column;
        j["standardize"] = t.schema.standardize;
        json cols = json::array();
        for (const auto& c : t.schema.columns) {
            cols.push_back(json{{"name", c.name}, {"kind", column_kind_name(c.kind)}});
        }
        j["columns"] = cols;
    } else if (t.source == "idx") {
        j["images"] = t.images_path;
        j["labels"] = t.labels_path;
        j["patch_size"] = t.patch_size;
    } else if (t.source == "tokens") {
        j["path"] = t.path;
        j["alphabet"] = t.alphabet;
        j["max_primary"] = t.max_primary;
        j["max_secondary"] = t.max_secondary;
    } else {
        j["generator"] = generator_name(t.synthetic.generator);
        j["n_samples"] = t.synthetic.n_samples;
        j["n_features"] = t.synthetic.n_features;
        j["n_irrelevant"] = t.synthetic.n_irrelevant;
        j["noise_std"] = t.synthetic.noise_std;
        j["data_seed"] = t.synthetic.seed;
    }
    return j;
}

json model_to_json(const ModelConfig& m) {
    return json{{"latent_dim", m.encoder.latent_dim},
                {"encoder_hidden", m.encoder.hidden_sizes},
                {"encoder_activation", activation_name(m.encoder.activation)},
                {"encoder_bias", m.encoder.use_bias},
                {"sharing", sharing_name(m.encoder.sharing)},
                {"positional_code_dim", m.encoder.positional_code_dim},
                {"predictor_hidden", m.predictor_hidden},
                {"predictor_activation", activation_name(m.predictor_activation)},
                {"predictor_bias", m.predictor_bias},
                {"output", m.output}};
}

json train_to_json(const TrainConfig& t) {
    json schedule;
    switch (t.schedule) {
        case Schedule::None:
            schedule = json{{"kind", "none"}};
            break;
        case Schedule::ExponentialDecay:
            schedule = json{{"kind", "exponential"}, {"gamma", t.gamma}};
            break;
        case Schedule::StepDecay:
            schedule = json{{"kind", "step"}, {"period", t.step_period},
                            {"factor", t.step_factor}};
            break;
        case Schedule::CosineAnnealing:
            schedule = json{{"kind", "cosine"}, {"period", t.cosine_period},
                            {"restarts", t.cosine_restarts}};
            break;
    }
    return json{{"optimizer", optimizer_name(t.optimizer)},
                {"lr", t.lr},
                {"betas", json::array({t.beta1, t.beta2})},
                {"eps", t.eps},
                {"weight_decay", t.weight_decay},
                {"schedule", schedule},
                {"epochs", t.epochs},
                {"batch_size", t.batch_size},
                {"early_stop_patience", t.early_stop_patience}};
}

json interpret_to_json(const InterpretConfig& i) {
    json providers = json::array();
    for (Provider p : i.providers) providers.push_back(provider_name(p));
    return json{{"providers", providers}, {"top_k", i.top_k},
                {"match_k", i.match_k},   {"neighbors", i.neighbors},
                {"ig_steps", i.ig_steps}, {"ig_baseline", i.ig_baseline}};
}

json metrics_to_json(const MetricsConfig& m) {
    json spaces = json::array(), scopes = json::array();
    if (m.space_original) spaces.push_back("original");
    if (m.space_latent) spaces.push_back("latent");
    if (m.scope_global) scopes.push_back("global");
    if (m.scope_local) scopes.push_back("local");
    return json{{"score_tol", m.score_tol},   {"effect_tol", m.effect_tol},
                {"prototypes", m.prototypes}, {"local_k", m.local_k},
                {"spaces", spaces},           {"scopes", scopes},
                {"max_samples", m.max_samples}};
}

}  // namespace

std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

std::string hash_hex(std::uint64_t h) {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[i] = digits[h & 0xF];
        h >>= 4;
    }
    return out;
}

RunConfig parse_run_config(const std::string& text, const std::string& origin) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(origin + ": invalid JSON: " + e.what());
    }
    check_keys(j, "config", {"task", "model", "train", "interpret", "metrics", "seeds"});
    if (!j.contains("task")) fail("config.task", "missing required block");
    if (!j.contains("model")) fail("config.model", "missing required block");

    RunConfig rc;
    rc.task = parse_task(j.at("task"), "task");
    rc.model = parse_model(j.at("model"), "model");
    rc.train = j.contains("train") ? parse_train(j.at("train"), "train") : TrainConfig{};
    rc.interpret = j.contains("interpret")
                       ? parse_interpret(j.at("interpret"), "interpret")
                       : InterpretConfig{};
    rc.metrics = j.contains("metrics") ? parse_metrics(j.at("metrics"), "metrics")
                                       : MetricsConfig{};
    if (j.contains("seeds")) {
        try {
            rc.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
        } catch (const json::exception&) {
            fail("config.seeds", "expected an array of unsigned integers");
        }
        if (rc.seeds.empty()) fail("config.seeds", "must not be empty");
    }

    json resolved;
    resolved["task"] = task_to_json(rc.task);
    resolved["model"] = model_to_json(rc.model);
    resolved["train"] = train_to_json(rc.train);
    resolved["interpret"] = interpret_to_json(rc.interpret);
    resolved["metrics"] = metrics_to_json(rc.metrics);
    resolved["seeds"] = rc.seeds;
    rc.resolved = resolved.dump();

    // The hash covers what a checkpoint depends on: the data pipeline and
    // the architecture. Train/interpret/metrics settings may vary between
    // the training run and later explain/metrics runs.
    json hashed;
    hashed["task"] = resolved["task"];
    hashed["model"] = resolved["model"];
    rc.config_hash = hash_hex(fnv1a64(hashed.dump()));
    return rc;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_run_config(ss.str(), path);
}

namespace {

std::vector<TokenRecord> read_token_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    std::vector<TokenRecord> records;
    std::string line;
    int row = 0;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty()) continue;
        // Format: primary,secondary,label (secondary may be empty).
        const std::size_t c1 = line.find(',');
        const std::size_t c2 = line.find(',', c1 + 1);
        if (c1 == std::string::npos || c2 == std::string::npos) {
            throw IoError(path + " row " + std::to_string(row) +
                          ": expected primary,secondary,label");
        }
        TokenRecord r;
        r.primary = line.substr(0, c1);
        r.secondary = line.substr(c1 + 1, c2 - c1 - 1);
        try {
            r.label = std::stoi(line.substr(c2 + 1));
        } catch (const std::exception&) {
            throw IoError(path + " row " + std::to_string(row) + ": bad label");
        }
        records.push_back(std::move(r));
    }
    return records;
}

}  // namespace

Dataset build_dataset(const TaskConfig& task) {
    if (task.source == "csv") {
        return load_delimited(task.path, task.schema, task.split);
    }
    if (task.source == "idx") {
        return load_idx_images(task.images_path, task.labels_path, task.patch_size,
                               task.split);
    }
    if (task.source == "tokens") {
        return tokenize_sequences(read_token_file(task.path), task.alphabet,
                                  task.max_primary, task.max_secondary, task.split);
    }
    return generate(task.synthetic, task.split);
}

FlanModel build_model(const ModelConfig& mc, const Dataset& data, std::uint64_t seed) {
    OutputKind kind;
    int output_dim;
    if (mc.output == "binary-logit" ||
        (mc.output == "auto" && data.n_classes == 2)) {
        if (data.n_classes != 2) {
            throw ConfigError("model.output: binary-logit requires a 2-class task, got " +
                              std::to_string(data.n_classes) + " classes");
        }
        kind = OutputKind::BinaryLogit;
        output_dim = 1;
    } else {
        if (data.n_classes < 2) {
            throw ConfigError("model.output: task has fewer than 2 classes");
        }
        kind = OutputKind::ClassLogits;
        output_dim = data.n_classes;
    }
    Rng rng(seed);
    return FlanModel::build(data.partition, mc.encoder, mc.predictor_hidden,
                            mc.predictor_bias, mc.predictor_activation, kind,
                            output_dim, rng);
}

}  // namespace flan
