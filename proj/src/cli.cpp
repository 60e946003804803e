#include "flan/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "flan/checkpoint.hpp"
#include "flan/config.hpp"
#include "flan/data.hpp"
#include "flan/errors.hpp"
#include "flan/interpret.hpp"
#include "flan/matrix.hpp"
#include "flan/model.hpp"
#include "flan/tape.hpp"
#include "flan/train.hpp"
#include "flan/xai_metrics.hpp"

namespace fs = std::filesystem;

namespace flan {
namespace {

using nlohmann::json;

struct CliOptions {
    std::string config_path;
    std::string checkpoint_path;
    std::string out_dir = "out";
    std::uint64_t seed_override = 0;
    bool has_seed_override = false;
    bool allow_hash_mismatch = false;
    std::string samples;  // explain: comma-separated dataset row ids
};

std::string f4(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return buf;
}

// One JSON object per line; reports carry no timestamps so identical runs
// produce identical bytes.
class ReportWriter {
public:
    explicit ReportWriter(const fs::path& path) : path_(path.string()), out_(path) {
        if (!out_) throw IoError("cannot open report " + path_ + " for writing");
    }
    void record(const json& j) { out_ << j.dump() << "\n"; }
    const std::string& path() const { return path_; }

private:
    std::string path_;
    std::ofstream out_;
};

// Decorrelated per-purpose streams derived from one user-facing seed.
struct DerivedSeeds {
    std::uint64_t model = 0;
    std::uint64_t train = 0;
    std::uint64_t prototypes = 0;
};

DerivedSeeds derive_seeds(std::uint64_t seed) {
    Rng base(seed);
    DerivedSeeds d;
    d.model = base.fork(0).seed();
    d.train = base.fork(1).seed();
    d.prototypes = base.fork(2).seed();
    return d;
}

std::vector<std::uint64_t> effective_seeds(const RunConfig& cfg, const CliOptions& opts) {
    if (opts.has_seed_override) return {opts.seed_override};
    return cfg.seeds;
}

struct Agg {
    double mean = 0.0;
    double stddev = 0.0;
    double max = 0.0;
};

Agg aggregate(const std::vector<double>& v) {
    Agg a;
    if (v.empty()) return a;
    a.max = v.front();
    for (double x : v) {
        a.mean += x;
        a.max = std::max(a.max, x);
    }
    a.mean /= static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - a.mean) * (x - a.mean);
    a.stddev = std::sqrt(ss / static_cast<double>(v.size()));
    return a;
}

json agg_json(const Agg& a) {
    return json{{"mean", a.mean}, {"std", a.stddev}, {"max", a.max}};
}

json metrics_json(const Metrics& m) {
    json j{{"loss", m.loss}, {"accuracy", m.accuracy}};
    if (m.has_auc) j["auc"] = m.auc;
    return j;
}

fs::path checkpoint_location(const CliOptions& opts) {
    if (!opts.checkpoint_path.empty()) return fs::path(opts.checkpoint_path);
    return fs::path(opts.out_dir) / "checkpoint.flan";
}

LoadedCheckpoint load_checked(const RunConfig& cfg, const CliOptions& opts,
                              ReportWriter& report) {
    const fs::path path = checkpoint_location(opts);
    LoadedCheckpoint ck = load_checkpoint(path.string());
    if (ck.config_hash != cfg.config_hash) {
        if (!opts.allow_hash_mismatch) {
            throw ConfigError("checkpoint " + path.string() + " was trained under config hash " +
                              ck.config_hash + " but the current config hashes to " +
                              cfg.config_hash + "; pass --allow-hash-mismatch to proceed");
        }
        report.record(json{{"type", "warning"},
                           {"message", "config hash mismatch accepted"},
                           {"checkpoint_hash", ck.config_hash},
                           {"config_hash", cfg.config_hash}});
        std::cerr << "warning: checkpoint hash " << ck.config_hash
                  << " != config hash " << cfg.config_hash << " (override in effect)\n";
    }
    return ck;
}

// Attribution baseline shared by integrated gradients and the post-hoc
// removal metric: all zeros, or the mean of the training rows.
Matrix resolve_baseline(const RunConfig& cfg, const Dataset& data) {
    Matrix b(1, data.X.cols);
    if (cfg.interpret.ig_baseline == "train-mean") {
        const std::vector<int>& rows = data.train_idx;
        if (!rows.empty()) {
            for (int r : rows) {
                for (int c = 0; c < data.X.cols; ++c) b.data[c] += data.X.at(r, c);
            }
            for (int c = 0; c < data.X.cols; ++c) {
                b.data[c] /= static_cast<double>(rows.size());
            }
        }
    }
    return b;
}

struct ProviderRun {
    AttributionVector attr;
    bool has_gap = false;
    double completeness_gap = 0.0;
};

ProviderRun run_provider(const FlanModel& model, const Matrix& x, Provider p,
                         int target, const Matrix& baseline, int ig_steps) {
    ProviderRun out;
    switch (p) {
        case Provider::FlanNorm:
            out.attr = attribute_flan(model, x);
            break;
        case Provider::Saliency:
            out.attr = saliency(model, x, target);
            break;
        case Provider::InputXGradient:
            out.attr = input_x_gradient(model, x, target);
            break;
        case Provider::IntegratedGradients: {
            IgResult ig = integrated_gradients(model, x, baseline, target, ig_steps);
            out.attr = ig.attribution;
            out.has_gap = true;
            out.completeness_gap = ig.completeness_gap;
            break;
        }
    }
    return out;
}

std::vector<double> probabilities_row(const FlanModel& model, const Matrix& outputs) {
    return model.probabilities(outputs).data;
}

// Output index to explain: the predicted class, except that a binary model
// exposes a single logit shared by both classes.
int attribution_target(const FlanModel& model, const Matrix& outputs) {
    if (model.output_kind() == OutputKind::BinaryLogit) return 0;
    return model.predicted_class(outputs);
}

// Which dataset rows an explain run covers: an explicit --samples list, or
// the first (up to) 8 test rows, or the first rows overall when there is no
// test split.
std::vector<int> explain_rows(const Dataset& data, const CliOptions& opts) {
    if (!opts.samples.empty()) {
        std::vector<int> rows;
        std::stringstream ss(opts.samples);
        std::string tok;
        while (std::getline(ss, tok, ',')) {
            std::size_t used = 0;
            int v = 0;
            try {
                v = std::stoi(tok, &used);
            } catch (const std::exception&) {
                throw ConfigError("--samples: '" + tok + "' is not a row index");
            }
            if (used != tok.size()) {
                throw ConfigError("--samples: '" + tok + "' is not a row index");
            }
            if (v < 0 || v >= data.n_rows()) {
                throw ConfigError("--samples: row " + std::to_string(v) +
                                  " out of range [0, " + std::to_string(data.n_rows()) + ")");
            }
            rows.push_back(v);
        }
        if (rows.empty()) throw ConfigError("--samples: empty list");
        return rows;
    }
    const std::vector<int>& pool = data.test_idx.empty() ? data.train_idx : data.test_idx;
    std::vector<int> rows;
    for (int i = 0; i < static_cast<int>(pool.size()) && i < 8; ++i) {
        rows.push_back(pool[i]);
    }
    return rows;
}

json neighbor_json(const Neighbor& nb, const CorpusLatents& corpus) {
    return json{{"corpus_position", nb.id},
                {"row", corpus.rows[nb.id]},
                {"distance", nb.distance}};
}

json match_json(const AssignmentResult& m) {
    return json{{"source_features", m.source_features},
                {"matched_targets", m.matched_targets},
                {"total_cost", m.total_cost}};
}

// ---------------------------------------------------------------- train --

int cmd_train(const RunConfig& cfg, const CliOptions& opts) {
    Dataset data = build_dataset(cfg.task);
    fs::create_directories(opts.out_dir);
    ReportWriter report(fs::path(opts.out_dir) / "train_report.jsonl");
    report.record(json{{"type", "run_config"},
                       {"config_hash", cfg.config_hash},
                       {"resolved", json::parse(cfg.resolved)}});
    report.record(json{{"type", "split_sizes"},
                       {"rows", data.n_rows()},
                       {"train", data.train_idx.size()},
                       {"val", data.val_idx.size()},
                       {"test", data.test_idx.size()},
                       {"dropped_rows", data.dropped_rows},
                       {"n_classes", data.n_classes},
                       {"groups", data.partition.n_groups()},
                       {"provenance", data.provenance}});

    const std::vector<std::uint64_t> seeds = effective_seeds(cfg, opts);
    std::vector<double> test_aucs, test_accs, val_selectors;
    bool all_have_auc = true;

    FlanModel best_model;
    std::uint64_t best_seed = 0;
    double best_selector = -std::numeric_limits<double>::infinity();
    bool have_best = false;

    for (std::uint64_t seed : seeds) {
        const DerivedSeeds ds = derive_seeds(seed);
        FlanModel model = build_model(cfg.model, data, ds.model);
        TrainConfig tc = cfg.train;
        tc.seed = ds.train;
        EvalResult res = train(model, data.X, data.labels, data.train_idx,
                               data.val_idx, tc);

        for (const EpochStats& e : res.series) {
            json je{{"type", "epoch"},          {"seed", seed},
                    {"epoch", e.epoch},         {"lr", e.lr},
                    {"train_loss", e.train_loss}, {"train_accuracy", e.train_accuracy},
                    {"val_loss", e.val_loss},   {"val_accuracy", e.val_accuracy}};
            if (e.has_auc) {
                je["train_auc"] = e.train_auc;
                je["val_auc"] = e.val_auc;
            }
            report.record(je);
        }

        json jr{{"type", "seed_result"},
                {"seed", seed},
                {"best_epoch", res.best_epoch},
                {"epochs_run", res.epochs_run},
                {"early_stopped", res.early_stopped},
                {"val_loss", res.loss},
                {"val_accuracy", res.accuracy}};
        if (res.has_auc) jr["val_auc"] = res.auc;

        std::string test_note = "no test split";
        if (!data.test_idx.empty()) {
            const Metrics test = evaluate(model, data.X, data.labels, data.test_idx);
            jr["test"] = metrics_json(test);
            test_accs.push_back(test.accuracy);
            if (test.has_auc) {
                test_aucs.push_back(test.auc);
            } else {
                all_have_auc = false;
            }
            test_note = "test acc " + f4(test.accuracy) +
                        (test.has_auc ? " auc " + f4(test.auc) : "");
        }
        report.record(jr);

        const double selector = res.has_auc ? res.auc : res.accuracy;
        val_selectors.push_back(selector);
        if (!have_best || selector > best_selector) {
            have_best = true;
            best_selector = selector;
            best_seed = seed;
            best_model = model;
        }

        std::cout << "seed " << seed << ": val "
                  << (res.has_auc ? "auc " + f4(res.auc) : "acc " + f4(res.accuracy))
                  << " | " << test_note << " | best epoch " << res.best_epoch << "/"
                  << res.epochs_run << (res.early_stopped ? " (early stop)" : "")
                  << "\n";
    }

    json summary{{"type", "summary"}, {"seeds", seeds.size()}};
    if (!test_accs.empty()) {
        summary["test_accuracy"] = agg_json(aggregate(test_accs));
        if (all_have_auc && test_aucs.size() == seeds.size()) {
            summary["test_auc"] = agg_json(aggregate(test_aucs));
        }
    }
    summary["val_selector"] = agg_json(aggregate(val_selectors));
    summary["best_seed"] = best_seed;
    report.record(summary);

    const fs::path ck_path = checkpoint_location(opts);
    save_checkpoint(ck_path.string(), best_model, cfg.config_hash);
    report.record(json{{"type", "checkpoint"},
                       {"path", ck_path.string()},
                       {"seed", best_seed},
                       {"config_hash", cfg.config_hash}});

    if (!test_accs.empty()) {
        const Agg acc = aggregate(test_accs);
        std::cout << "test accuracy: mean " << f4(acc.mean) << " (max " << f4(acc.max)
                  << ") +/- " << f4(acc.stddev) << " over " << seeds.size()
                  << " seed(s)\n";
        if (all_have_auc && test_aucs.size() == seeds.size()) {
            const Agg auc_agg = aggregate(test_aucs);
            std::cout << "test auc: mean " << f4(auc_agg.mean) << " (max "
                      << f4(auc_agg.max) << ") +/- " << f4(auc_agg.stddev) << "\n";
        }
    }
    std::cout << "checkpoint: " << ck_path.string() << " (seed " << best_seed << ")\n";
    return 0;
}

// -------------------------------------------------------------- explain --

int cmd_explain(const RunConfig& cfg, const CliOptions& opts) {
    Dataset data = build_dataset(cfg.task);
    fs::create_directories(opts.out_dir);
    ReportWriter report(fs::path(opts.out_dir) / "explain_report.jsonl");
    report.record(json{{"type", "run_config"},
                       {"config_hash", cfg.config_hash},
                       {"resolved", json::parse(cfg.resolved)}});

    LoadedCheckpoint ck = load_checked(cfg, opts, report);
    const FlanModel& model = ck.model;
    if (model.raw_dim() != data.X.cols) {
        throw ConfigError("checkpoint expects " + std::to_string(model.raw_dim()) +
                          " input dimensions but the dataset has " +
                          std::to_string(data.X.cols));
    }

    const std::vector<int>& corpus_rows =
        data.train_idx.empty() ? data.test_idx : data.train_idx;
    const CorpusLatents corpus = compute_corpus_latents(model, data.X, corpus_rows);
    const Matrix baseline = resolve_baseline(cfg, data);
    const std::vector<int> rows = explain_rows(data, opts);
    const int n_groups = model.n_groups();
    const auto& names = model.partition().group_names;

    for (int row : rows) {
        const Matrix x = extract_row(data.X, row);
        auto [outputs, bundle] = model.forward(x);
        const int predicted = model.predicted_class(outputs);
        const int target = attribution_target(model, outputs);
        std::vector<std::string> warnings;

        json rec{{"type", "sample"},
                 {"row", row},
                 {"label", data.labels[row]},
                 {"predicted", predicted},
                 {"probabilities", probabilities_row(model, outputs)}};

        // Attributions from every enabled provider, summarized per group.
        json attributions = json::array();
        for (Provider p : cfg.interpret.providers) {
            const ProviderRun pr = run_provider(model, x, p, target, baseline,
                                                cfg.interpret.ig_steps);
            json ja{{"provider", provider_name(p)},
                    {"group_scores", group_scores(pr.attr, model.partition())}};
            if (pr.has_gap) ja["completeness_gap"] = pr.completeness_gap;
            attributions.push_back(ja);
        }
        rec["attributions"] = attributions;

        // Native per-feature view: latent norm, effect on each output, the
        // interaction residual, and the flip effect for binary columns.
        const std::vector<double> norms = model.latent_norms(bundle);
        json features = json::array();
        for (int i = 0; i < n_groups; ++i) {
            json jf{{"group", i},
                    {"name", names[i]},
                    {"latent_norm", norms[i]},
                    {"effect", model.feature_effect(bundle, i).data},
                    {"taylor_residual", model.taylor_residual(bundle, i)}};
            if (model.partition().group_width(i) == 1) {
                const double v = x.data[model.partition().groups[i][0]];
                if (v == 0.0 || v == 1.0) {
                    jf["flip_effect"] = binary_flip_effect(model, x, i, target);
                }
            }
            features.push_back(jf);
        }
        rec["features"] = features;

        // Cumulative partial forwards over the strongest features.
        int top_k = cfg.interpret.top_k;
        if (top_k > n_groups) {
            warnings.push_back("top_k " + std::to_string(top_k) + " clamped to " +
                               std::to_string(n_groups) + " feature groups");
            top_k = n_groups;
        }
        std::vector<int> order(n_groups);
        for (int i = 0; i < n_groups; ++i) order[i] = i;
        std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
            if (norms[a] != norms[b]) return norms[a] > norms[b];
            return a < b;
        });
        json partials = json::array();
        std::vector<int> keep;
        for (int r = 0; r < top_k; ++r) {
            keep.push_back(order[r]);
            const Matrix part = model.partial_forward(bundle, keep);
            partials.push_back(json{{"keep", keep},
                                    {"probabilities", probabilities_row(model, part)}});
        }
        rec["partial_forward"] = partials;

        // Nearest / farthest training examples with feature matchings.
        int k = cfg.interpret.neighbors;
        if (k > static_cast<int>(corpus.rows.size())) {
            warnings.push_back("neighbors " + std::to_string(k) + " clamped to corpus size " +
                               std::to_string(corpus.rows.size()));
            k = static_cast<int>(corpus.rows.size());
        }
        int match_k = cfg.interpret.match_k;
        if (match_k > n_groups) {
            warnings.push_back("match_k " + std::to_string(match_k) + " clamped to " +
                               std::to_string(n_groups) + " feature groups");
            match_k = n_groups;
        }
        const ExampleExplanation ex = nearest_examples(model, bundle, corpus, k, match_k);
        json neighbors = json::array();
        for (const Neighbor& nb : ex.neighbors) neighbors.push_back(neighbor_json(nb, corpus));
        rec["neighbors"] = neighbors;
        rec["farthest"] = neighbor_json(ex.farthest, corpus);
        rec["nearest_match"] = match_json(ex.nearest_match);
        rec["farthest_match"] = match_json(ex.farthest_match);
        rec["warnings"] = warnings;
        report.record(rec);

        std::cout << "row " << row << ": label " << data.labels[row] << ", predicted "
                  << predicted << "; top feature " << names[order[0]] << " (|z|="
                  << f4(norms[order[0]]) << "); nearest train row "
                  << corpus.rows[ex.neighbors.front().id] << " (d="
                  << f4(ex.neighbors.front().distance) << ")\n";
    }
    std::cout << "explained " << rows.size() << " sample(s) -> " << report.path() << "\n";
    return 0;
}

// -------------------------------------------------------------- metrics --

// Space representations for prototype metrics.
struct SpacePoints {
    std::vector<Matrix> points;  // one per corpus/query row
    std::vector<Matrix> probs;   // matching output probabilities
};

SpacePoints space_points(const FlanModel& model, const Matrix& X,
                         const std::vector<int>& rows, bool latent) {
    const CorpusLatents lat = compute_corpus_latents(model, X, rows);
    SpacePoints sp;
    sp.points.reserve(rows.size());
    sp.probs.reserve(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        sp.points.push_back(latent ? lat.bundles[i].total : extract_row(X, rows[i]));
        sp.probs.push_back(model.probabilities(model.predict_latent(lat.bundles[i].total)));
    }
    return sp;
}

std::vector<int> metric_rows(const Dataset& data, int max_samples) {
    std::vector<int> rows = data.test_idx.empty() ? data.train_idx : data.test_idx;
    if (max_samples > 0 && static_cast<int>(rows.size()) > max_samples) {
        rows.resize(max_samples);
    }
    return rows;
}

int cmd_metrics(const RunConfig& cfg, const CliOptions& opts) {
    Dataset data = build_dataset(cfg.task);
    fs::create_directories(opts.out_dir);
    ReportWriter report(fs::path(opts.out_dir) / "metrics_report.jsonl");
    report.record(json{{"type", "run_config"},
                       {"config_hash", cfg.config_hash},
                       {"resolved", json::parse(cfg.resolved)}});
    report.record(json{
        {"type", "definitions"},
        {"monotonicity",
         "Spearman rank correlation between attribution magnitudes and "
         "removal effects |p(x) - p(x without feature i)| on the explained "
         "output's probability; constant ranks on either side degenerate to 0"},
        {"non_sensitivity",
         "cardinality of the symmetric difference between {i : |score_i| <= "
         "score_tol} and {i : removal effect_i <= effect_tol}"},
        {"diversity", "mean pairwise Euclidean distance between prototypes"},
        {"non_representativeness_global",
         "mean Euclidean distance between each query's output probabilities "
         "and those of its nearest prototype in the chosen space"},
        {"non_representativeness_local",
         "mean over each query's k nearest corpus points of the output "
         "probability distance"}});

    LoadedCheckpoint ck = load_checked(cfg, opts, report);
    const FlanModel& model = ck.model;
    if (model.raw_dim() != data.X.cols) {
        throw ConfigError("checkpoint expects " + std::to_string(model.raw_dim()) +
                          " input dimensions but the dataset has " +
                          std::to_string(data.X.cols));
    }

    const Matrix baseline = resolve_baseline(cfg, data);
    const std::vector<int> rows = metric_rows(data, cfg.metrics.max_samples);
    if (rows.empty()) throw ConfigError("metrics: no evaluation rows available");

    for (Provider p : cfg.interpret.providers) {
        std::vector<double> mono_vals, ns_vals;
        int degenerate = 0;
        for (int row : rows) {
            const Matrix x = extract_row(data.X, row);
            auto [outputs, bundle] = model.forward(x);
            (void)bundle;
            const int target = attribution_target(model, outputs);
            const ProviderRun pr = run_provider(model, x, p, target, baseline,
                                                cfg.interpret.ig_steps);
            const SpearmanResult mono = monotonicity(model, x, pr.attr, baseline);
            mono_vals.push_back(mono.value);
            if (mono.degenerate) ++degenerate;
            ns_vals.push_back(static_cast<double>(
                non_sensitivity(model, x, pr.attr, baseline, cfg.metrics.score_tol,
                                cfg.metrics.effect_tol)));
        }
        const Agg mono_agg = aggregate(mono_vals);
        const Agg ns_agg = aggregate(ns_vals);
        report.record(json{{"type", "attribution_metrics"},
                           {"provider", provider_name(p)},
                           {"samples", rows.size()},
                           {"monotonicity", agg_json(mono_agg)},
                           {"monotonicity_degenerate", degenerate},
                           {"non_sensitivity", agg_json(ns_agg)},
                           {"score_tol", cfg.metrics.score_tol},
                           {"effect_tol", cfg.metrics.effect_tol}});
        std::cout << provider_name(p) << ": monotonicity " << f4(mono_agg.mean)
                  << " +/- " << f4(mono_agg.stddev) << " (" << degenerate
                  << " degenerate), non-sensitivity " << f4(ns_agg.mean) << " +/- "
                  << f4(ns_agg.stddev) << " over " << rows.size() << " sample(s)\n";
    }

    const std::vector<int>& corpus_rows =
        data.train_idx.empty() ? data.test_idx : data.train_idx;
    const std::uint64_t proto_seed =
        derive_seeds(effective_seeds(cfg, opts).front()).prototypes;

    std::vector<std::pair<std::string, bool>> spaces;
    if (cfg.metrics.space_original) spaces.emplace_back("original", false);
    if (cfg.metrics.space_latent) spaces.emplace_back("latent", true);

    for (const auto& [space_name, latent] : spaces) {
        const SpacePoints corpus = space_points(model, data.X, corpus_rows, latent);
        const SpacePoints queries = space_points(model, data.X, rows, latent);
        const int k = std::min<int>(cfg.metrics.prototypes,
                                    static_cast<int>(corpus.points.size()));
        const PrototypeSet protos = k_medoids(corpus.points, k, proto_seed);
        std::vector<Matrix> proto_pts, proto_probs;
        std::vector<int> proto_rows;
        for (int m : protos.medoids) {
            proto_pts.push_back(corpus.points[m]);
            proto_probs.push_back(corpus.probs[m]);
            proto_rows.push_back(corpus_rows[m]);
        }
        json jr{{"type", "prototype_metrics"},
                {"space", space_name},
                {"prototypes", k},
                {"medoid_rows", proto_rows},
                {"total_cost", protos.total_cost}};
        if (k != cfg.metrics.prototypes) {
            jr["warning"] = "prototype count clamped to corpus size";
        }
        std::string line = "prototypes [" + space_name + "]: ";
        if (k >= 2) {
            const double div = diversity(proto_pts);
            jr["diversity"] = div;
            line += "diversity " + f4(div);
        }
        if (cfg.metrics.scope_global) {
            const double nr = non_representativeness_global(queries.points, queries.probs,
                                                            proto_pts, proto_probs);
            jr["non_representativeness_global"] = nr;
            line += ", NR global " + f4(nr);
        }
        if (cfg.metrics.scope_local) {
            const int lk = std::min<int>(cfg.metrics.local_k,
                                         static_cast<int>(corpus.points.size()));
            const double nr = non_representativeness_local(queries.points, queries.probs,
                                                           corpus.points, corpus.probs, lk);
            jr["non_representativeness_local"] = nr;
            jr["local_k"] = lk;
            line += ", NR local " + f4(nr);
        }
        report.record(jr);
        std::cout << line << "\n";
    }
    std::cout << "metrics over " << rows.size() << " sample(s) -> " << report.path()
              << "\n";
    return 0;
}

// ----------------------------------------------------------- prototypes --

int cmd_prototypes(const RunConfig& cfg, const CliOptions& opts) {
    Dataset data = build_dataset(cfg.task);
    fs::create_directories(opts.out_dir);
    ReportWriter report(fs::path(opts.out_dir) / "prototypes_report.jsonl");
    report.record(json{{"type", "run_config"},
                       {"config_hash", cfg.config_hash},
                       {"resolved", json::parse(cfg.resolved)}});

    LoadedCheckpoint ck = load_checked(cfg, opts, report);
    const FlanModel& model = ck.model;
    if (model.raw_dim() != data.X.cols) {
        throw ConfigError("checkpoint expects " + std::to_string(model.raw_dim()) +
                          " input dimensions but the dataset has " +
                          std::to_string(data.X.cols));
    }

    const std::vector<int>& corpus_rows =
        data.train_idx.empty() ? data.test_idx : data.train_idx;
    if (corpus_rows.empty()) throw ConfigError("prototypes: no corpus rows available");
    const std::uint64_t proto_seed =
        derive_seeds(effective_seeds(cfg, opts).front()).prototypes;

    std::vector<std::pair<std::string, bool>> spaces;
    if (cfg.metrics.space_original) spaces.emplace_back("original", false);
    if (cfg.metrics.space_latent) spaces.emplace_back("latent", true);

    for (const auto& [space_name, latent] : spaces) {
        const SpacePoints corpus = space_points(model, data.X, corpus_rows, latent);
        const int k = std::min<int>(cfg.metrics.prototypes,
                                    static_cast<int>(corpus.points.size()));
        const PrototypeSet protos = k_medoids(corpus.points, k, proto_seed);

        std::vector<int> cluster_sizes(protos.medoids.size(), 0);
        for (int a : protos.assignment) {
            for (std::size_t m = 0; m < protos.medoids.size(); ++m) {
                if (protos.medoids[m] == a) {
                    ++cluster_sizes[m];
                    break;
                }
            }
        }
        json medoids = json::array();
        std::vector<Matrix> proto_pts;
        for (std::size_t m = 0; m < protos.medoids.size(); ++m) {
            const int pos = protos.medoids[m];
            medoids.push_back(json{{"corpus_position", pos},
                                   {"row", corpus_rows[pos]},
                                   {"label", data.labels[corpus_rows[pos]]},
                                   {"cluster_size", cluster_sizes[m]}});
            proto_pts.push_back(corpus.points[pos]);
        }
        json jr{{"type", "prototypes"},
                {"space", space_name},
                {"k", k},
                {"medoids", medoids},
                {"total_cost", protos.total_cost},
                {"cost_history", protos.cost_history}};
        if (k >= 2) jr["diversity"] = diversity(proto_pts);
        report.record(jr);
        std::cout << "space " << space_name << ": " << k << " medoid(s), cost "
                  << f4(protos.total_cost) << ", " << protos.cost_history.size() - 1
                  << " swap(s)\n";
    }
    std::cout << "prototypes -> " << report.path() << "\n";
    return 0;
}

// ------------------------------------------------------------ selfcheck --

// Fast invariant battery: one line per check, exit 3 on the first failure
// (all checks still run).
int cmd_selfcheck() {
    int failures = 0;
    auto check = [&failures](const std::string& name, bool ok,
                             const std::string& detail = "") {
        if (ok) {
            std::cout << "ok   " << name << "\n";
        } else {
            ++failures;
            std::cout << "FAIL " << name << (detail.empty() ? "" : ": " + detail)
                      << "\n";
        }
    };

    Rng rng(2024);
    SyntheticSpec spec;
    spec.generator = Generator::PlantedRelevance;
    spec.n_samples = 64;
    spec.n_features = 6;
    spec.n_irrelevant = 2;
    spec.seed = 7;
    SplitSpec split;
    split.seed = 7;
    Dataset data = generate(spec, split);

    EncoderSpec enc;
    enc.latent_dim = 8;
    enc.hidden_sizes = {6};
    FlanModel model = FlanModel::build(data.partition, enc, {6}, true,
                                       Activation::Tanh, OutputKind::BinaryLogit, 1, rng);
    const Matrix x = extract_row(data.X, 0);
    auto [outputs, bundle] = model.forward(x);

    // Additivity: keeping every feature reproduces the full forward pass.
    std::vector<int> all_groups(model.n_groups());
    for (int i = 0; i < model.n_groups(); ++i) all_groups[i] = i;
    check("partial_forward(all) == forward",
          bit_equal(model.partial_forward(bundle, all_groups), outputs));

    // Zeroing one encoder removes exactly that feature's contribution.
    {
        FlanModel zeroed = model;
        for (Matrix& w : zeroed.encoders()[2].weights) w.fill(0.0);
        for (Matrix& b : zeroed.encoders()[2].biases) b.fill(0.0);
        auto [zout, zbundle] = zeroed.forward(x);
        std::vector<int> without;
        for (int i = 0; i < model.n_groups(); ++i) {
            if (i != 2) without.push_back(i);
        }
        check("zeroed encoder contributes nothing",
              bit_equal(zout, zeroed.partial_forward(zbundle, without)));
    }

    // Reverse-mode gradients match central finite differences.
    {
        Tape t;
        TapeForward tf = model.forward_tape(t, x);
        const NodeId loss = t.logistic_xent(tf.output, 1);
        t.backward(loss);
        const Matrix g = t.grad(tf.group_inputs[0]);
        auto f = [&](const Matrix& xi) {
            Matrix xt = x;
            const auto& group = model.partition().groups[0];
            for (std::size_t d = 0; d < group.size(); ++d) {
                xt.data[group[d]] = xi.data[d];
            }
            auto [o, b] = model.forward(xt);
            (void)b;
            const double s = o.data[0];
            return std::max(s, 0.0) - s * 1.0 + std::log1p(std::exp(-std::abs(s)));
        };
        const Matrix fd = finite_diff_gradient(f, model.extract_group(x, 0));
        check("tape gradient matches finite differences",
              max_abs_diff(g, fd) < 1e-6 * (1.0 + frobenius_norm(fd)));
    }

    // One Adam step on a scalar parameter, worked by hand.
    {
        Matrix p = Matrix::scalar(1.0);
        Matrix g = Matrix::scalar(2.0);
        std::vector<Matrix*> params{&p};
        AdamState st = AdamState::init(params);
        TrainConfig tc;
        adam_step(params, {g}, st, tc, tc.lr);
        const double expected = 1.0 - 0.001 * (2.0 / (2.0 + 1e-8));
        check("adam hand step", std::abs(p.data[0] - expected) < 1e-15);
    }

    // Exact AUC equals all-pairs counting.
    {
        Rng r2(5);
        std::vector<double> scores;
        std::vector<int> labels;
        for (int i = 0; i < 200; ++i) {
            scores.push_back(static_cast<double>(r2.next_below(20)));
            labels.push_back(static_cast<int>(r2.next_below(2)));
        }
        if (std::count(labels.begin(), labels.end(), 1) == 0) labels[0] = 1;
        if (std::count(labels.begin(), labels.end(), 0) == 0) labels[1] = 0;
        long long wins = 0, ties = 0, pairs = 0;
        for (std::size_t i = 0; i < scores.size(); ++i) {
            for (std::size_t j = 0; j < scores.size(); ++j) {
                if (labels[i] == 1 && labels[j] == 0) {
                    ++pairs;
                    if (scores[i] > scores[j]) ++wins;
                    if (scores[i] == scores[j]) ++ties;
                }
            }
        }
        const double oracle = (2.0 * wins + ties) / (2.0 * pairs);
        check("auc equals pair counting", auc(scores, labels) == oracle);
    }

    // Hungarian assignment equals brute force on a 5x5 instance.
    {
        Rng r3(11);
        Matrix cost = Matrix::random_uniform(5, 5, 0.0, 10.0, r3);
        const std::vector<int> got = hungarian_min_assignment(cost);
        double got_cost = 0.0;
        for (int r = 0; r < 5; ++r) got_cost += cost.at(r, got[r]);
        std::vector<int> perm{0, 1, 2, 3, 4};
        double best = std::numeric_limits<double>::infinity();
        do {
            double c = 0.0;
            for (int r = 0; r < 5; ++r) c += cost.at(r, perm[r]);
            best = std::min(best, c);
        } while (std::next_permutation(perm.begin(), perm.end()));
        check("hungarian equals brute force", got_cost == best);
    }

    // K-Medoids cost history strictly decreases.
    {
        Rng r4(3);
        std::vector<Matrix> pts;
        for (int i = 0; i < 40; ++i) pts.push_back(Matrix::random_uniform(1, 2, -1, 1, r4));
        const PrototypeSet ps = k_medoids(pts, 4, 9);
        bool strict = true;
        for (std::size_t i = 1; i < ps.cost_history.size(); ++i) {
            if (!(ps.cost_history[i] < ps.cost_history[i - 1])) strict = false;
        }
        check("k-medoids cost strictly decreases", strict);
    }

    // Checkpoint round trip is bit-exact.
    {
        const fs::path tmp = fs::temp_directory_path() / "flan_selfcheck.ckpt";
        save_checkpoint(tmp.string(), model, "selfcheck");
        const LoadedCheckpoint lk = load_checkpoint(tmp.string());
        bool same = lk.config_hash == "selfcheck";
        const auto a = model.parameters();
        const auto b = lk.model.parameters();
        if (a.size() != b.size()) same = false;
        for (std::size_t i = 0; same && i < a.size(); ++i) {
            if (!bit_equal(*a[i], *b[i])) same = false;
        }
        fs::remove(tmp);
        check("checkpoint round trip bit-exact", same);
    }

    // Parallel kernels agree bit-for-bit with their serial twins.
    {
        std::vector<int> batch;
        for (int i = 0; i < 16; ++i) batch.push_back(i);
        const BatchResult bp = batch_gradients(model, data.X, data.labels, batch);
        const BatchResult bs = batch_gradients_serial(model, data.X, data.labels, batch);
        bool same = bp.mean_loss == bs.mean_loss && bp.grads.size() == bs.grads.size();
        for (std::size_t i = 0; same && i < bp.grads.size(); ++i) {
            if (!bit_equal(bp.grads[i], bs.grads[i])) same = false;
        }
        check("parallel batch gradients match serial", same);

        const CorpusLatents cp = compute_corpus_latents(model, data.X, batch);
        const CorpusLatents cs = compute_corpus_latents_serial(model, data.X, batch);
        bool lsame = cp.rows == cs.rows;
        for (std::size_t i = 0; lsame && i < cp.bundles.size(); ++i) {
            if (!bit_equal(cp.bundles[i].total, cs.bundles[i].total)) lsame = false;
        }
        check("parallel corpus latents match serial", lsame);

        std::vector<Matrix> pts;
        Rng r5(17);
        for (int i = 0; i < 24; ++i) pts.push_back(Matrix::random_uniform(1, 3, -2, 2, r5));
        check("parallel pairwise distances match serial",
              bit_equal(pairwise_distances(pts), pairwise_distances_serial(pts)));
    }

    // The stabilized logistic loss stays finite at extreme logits.
    {
        const double big = sample_loss(model, Matrix::scalar(1000.0), 0);
        const double small = sample_loss(model, Matrix::scalar(-1000.0), 1);
        check("logistic loss finite at extreme logits",
              std::isfinite(big) && std::isfinite(small));
    }

    if (failures == 0) {
        std::cout << "selfcheck passed\n";
        return 0;
    }
    std::cout << "selfcheck failed (" << failures << " check(s))\n";
    return 3;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"feature-wise latent additive networks"};
    app.require_subcommand(1);

    CliOptions opts;
    auto add_common = [&opts](CLI::App* sub, bool config_required) {
        auto* c = sub->add_option("--config", opts.config_path, "run configuration JSON");
        if (config_required) c->required();
        sub->add_option("--checkpoint", opts.checkpoint_path,
                        "checkpoint path (default: <out>/checkpoint.flan)");
        sub->add_option("--out", opts.out_dir, "report/output directory")
            ->capture_default_str();
        sub->add_option("--seed-override", opts.seed_override,
                        "replace the config's seed list with this one seed");
        sub->add_flag("--allow-hash-mismatch", opts.allow_hash_mismatch,
                      "proceed when the checkpoint's config hash differs");
    };

    CLI::App* train_cmd = app.add_subcommand("train", "train across seeds and checkpoint the best model");
    add_common(train_cmd, true);
    CLI::App* explain_cmd = app.add_subcommand("explain", "per-sample interpretability report");
    add_common(explain_cmd, true);
    explain_cmd->add_option("--samples", opts.samples,
                            "comma-separated dataset row ids (default: first 8 test rows)");
    CLI::App* metrics_cmd = app.add_subcommand("metrics", "interpretability metric suite");
    add_common(metrics_cmd, true);
    CLI::App* proto_cmd = app.add_subcommand("prototypes", "K-Medoids prototype extraction");
    add_common(proto_cmd, true);
    app.add_subcommand("selfcheck", "fast internal consistency battery");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        CLI::App* sub = app.get_subcommands().front();
        if (sub->get_name() == "selfcheck") return cmd_selfcheck();
        opts.has_seed_override = sub->count("--seed-override") > 0;
        const RunConfig cfg = load_run_config(opts.config_path);
        if (sub == train_cmd) return cmd_train(cfg, opts);
        if (sub == explain_cmd) return cmd_explain(cfg, opts);
        if (sub == metrics_cmd) return cmd_metrics(cfg, opts);
        return cmd_prototypes(cfg, opts);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
}

}  // namespace flan
