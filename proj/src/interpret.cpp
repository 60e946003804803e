#include "flan/interpret.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "flan/parallel.hpp"
#include "flan/tape.hpp"

namespace flan {

const char* provider_name(Provider p) {
    switch (p) {
        case Provider::FlanNorm: return "flan-norm";
        case Provider::Saliency: return "saliency";
        case Provider::InputXGradient: return "input-x-gradient";
        case Provider::IntegratedGradients: return "integrated-gradients";
    }
    return "?";
}

std::vector<double> group_scores(const AttributionVector& attr,
                                 const FeaturePartition& partition) {
    if (attr.per_group) {
        if (static_cast<int>(attr.scores.size()) != partition.n_groups()) {
            throw std::invalid_argument("group_scores: size mismatch with partition");
        }
        return attr.scores;
    }
    if (static_cast<int>(attr.scores.size()) != partition.raw_dim()) {
        throw std::invalid_argument("group_scores: size mismatch with raw dimension");
    }
    std::vector<double> out(partition.n_groups(), 0.0);
    for (int i = 0; i < partition.n_groups(); ++i) {
        for (int d : partition.groups[i]) out[i] += attr.scores[d];
    }
    return out;
}

std::vector<double> dim_scores(const AttributionVector& attr,
                               const FeaturePartition& partition) {
    if (!attr.per_group) {
        if (static_cast<int>(attr.scores.size()) != partition.raw_dim()) {
            throw std::invalid_argument("dim_scores: size mismatch with raw dimension");
        }
        return attr.scores;
    }
    if (static_cast<int>(attr.scores.size()) != partition.n_groups()) {
        throw std::invalid_argument("dim_scores: size mismatch with partition");
    }
    std::vector<double> out(partition.raw_dim(), 0.0);
    for (int i = 0; i < partition.n_groups(); ++i) {
        for (int d : partition.groups[i]) out[d] = attr.scores[i];
    }
    return out;
}

AttributionVector attribute_flan(const FlanModel& model, const Matrix& x) {
    AttributionVector a;
    a.provider = Provider::FlanNorm;
    a.per_group = true;
    a.target = 0;
    a.scores = model.latent_norms(model.encode_all(x));
    return a;
}

Matrix input_gradient(const FlanModel& model, const Matrix& x, int target) {
    if (target < 0 || target >= model.output_dim()) {
        throw std::invalid_argument("input_gradient: target output " +
                                    std::to_string(target) + " out of range");
    }
    Tape tape;
    const TapeForward tf = model.forward_tape(tape, x);
    const NodeId scalar_out = tape.pick(tf.output, target);
    tape.backward(scalar_out);

    Matrix g(1, model.raw_dim());
    const auto& groups = model.partition().groups;
    for (int i = 0; i < model.n_groups(); ++i) {
        const Matrix& gi = tape.grad(tf.group_inputs[i]);
        for (std::size_t j = 0; j < groups[i].size(); ++j) {
            g.data[groups[i][j]] = gi.data[j];
        }
    }
    return g;
}

AttributionVector saliency(const FlanModel& model, const Matrix& x, int target) {
    AttributionVector a;
    a.provider = Provider::Saliency;
    a.target = target;
    const Matrix g = input_gradient(model, x, target);
    a.scores.reserve(g.data.size());
    for (double v : g.data) a.scores.push_back(std::fabs(v));
    return a;
}

AttributionVector input_x_gradient(const FlanModel& model, const Matrix& x, int target) {
    AttributionVector a;
    a.provider = Provider::InputXGradient;
    a.target = target;
    const Matrix g = input_gradient(model, x, target);
    a.scores.reserve(g.data.size());
    for (std::size_t d = 0; d < g.data.size(); ++d) {
        a.scores.push_back(x.data[d] * g.data[d]);
    }
    return a;
}

IgResult integrated_gradients(const FlanModel& model, const Matrix& x,
                              const Matrix& baseline, int target, int steps) {
    if (!x.same_shape(baseline)) {
        throw std::invalid_argument("integrated_gradients: baseline shape " +
                                    baseline.shape_str() + " != input shape " +
                                    x.shape_str());
    }
    if (steps < 1) throw std::invalid_argument("integrated_gradients: steps must be >= 1");

    Matrix mean_grad(1, x.cols);
    for (int k = 0; k < steps; ++k) {
        const double alpha = (k + 0.5) / steps;
        Matrix point = baseline;
        for (int d = 0; d < x.cols; ++d) {
            point.data[d] += alpha * (x.data[d] - baseline.data[d]);
        }
        const Matrix g = input_gradient(model, point, target);
        for (int d = 0; d < x.cols; ++d) mean_grad.data[d] += g.data[d];
    }
    for (int d = 0; d < x.cols; ++d) mean_grad.data[d] /= steps;

    IgResult r;
    r.attribution.provider = Provider::IntegratedGradients;
    r.attribution.target = target;
    r.attribution.scores.reserve(x.cols);
    double total = 0.0;
    for (int d = 0; d < x.cols; ++d) {
        const double s = (x.data[d] - baseline.data[d]) * mean_grad.data[d];
        r.attribution.scores.push_back(s);
        total += s;
    }
    const double fx = model.forward(x).first.at(0, target);
    const double fb = model.forward(baseline).first.at(0, target);
    r.completeness_gap = std::fabs(total - (fx - fb));
    return r;
}

// ---------------------------------------------------------------------------
// Linear assignment

std::vector<int> hungarian_min_assignment(const Matrix& cost) {
    if (cost.rows != cost.cols || cost.rows < 1) {
        throw std::invalid_argument("hungarian_min_assignment: cost matrix must be square");
    }
    const int n = cost.rows;
    const double inf = std::numeric_limits<double>::infinity();
    // Potentials u, v and the column -> row matching p (1-indexed; index 0
    // is the virtual root used while growing the alternating tree).
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<int> p(n + 1, 0), way(n + 1, 0);
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::vector<double> minv(n + 1, inf);
        std::vector<bool> used(n + 1, false);
        do {
            used[j0] = true;
            const int i0 = p[j0];
            int j1 = -1;
            double delta = inf;
            for (int j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = cost.at(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const int j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    std::vector<int> row_to_col(n, -1);
    for (int j = 1; j <= n; ++j) {
        if (p[j] >= 1) row_to_col[p[j] - 1] = j - 1;
    }
    return row_to_col;
}

AssignmentResult match_features(const LatentBundle& source, const LatentBundle& target,
                                int k) {
    const int n_source = static_cast<int>(source.per_feature.size());
    const int n_target = static_cast<int>(target.per_feature.size());
    if (k < 1 || k > n_source || k > n_target) {
        std::ostringstream os;
        os << "match_features: K=" << k << " exceeds feature count (source "
           << n_source << ", target " << n_target << ")";
        throw std::invalid_argument(os.str());
    }

    // Top-K source features by latent norm, ties broken by ascending index;
    // reported in ascending group index.
    std::vector<int> order(n_source);
    std::iota(order.begin(), order.end(), 0);
    std::vector<double> norms;
    norms.reserve(n_source);
    for (const auto& z : source.per_feature) norms.push_back(l2_norm(z));
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        if (norms[a] != norms[b]) return norms[a] > norms[b];
        return a < b;
    });
    std::vector<int> chosen(order.begin(), order.begin() + k);
    std::sort(chosen.begin(), chosen.end());

    // K x N costs, padded to square with a constant sentinel so the dummy
    // rows cannot influence which real assignment is optimal.
    Matrix real_cost(k, n_target);
    double max_cost = 0.0;
    for (int i = 0; i < k; ++i) {
        for (int j = 0; j < n_target; ++j) {
            const double c = l2_norm(sub(source.per_feature[chosen[i]],
                                         target.per_feature[j]));
            real_cost.at(i, j) = c;
            max_cost = std::max(max_cost, c);
        }
    }
    Matrix padded(n_target, n_target);
    padded.fill(2.0 * max_cost + 1.0);
    for (int i = 0; i < k; ++i) {
        for (int j = 0; j < n_target; ++j) padded.at(i, j) = real_cost.at(i, j);
    }
    const std::vector<int> row_to_col = hungarian_min_assignment(padded);

    AssignmentResult r;
    r.source_features = chosen;
    r.matched_targets.reserve(k);
    for (int i = 0; i < k; ++i) {
        r.matched_targets.push_back(row_to_col[i]);
        r.total_cost += real_cost.at(i, row_to_col[i]);
    }
    return r;
}

// ---------------------------------------------------------------------------
// Example-based interpretation

namespace {

CorpusLatents corpus_latents_impl(const FlanModel& model, const Matrix& X,
                                  const std::vector<int>& rows, bool run_parallel) {
    CorpusLatents c;
    c.rows = rows;
    c.bundles.resize(rows.size());
    const int n = static_cast<int>(rows.size());
    const auto body = [&](int i) {
        c.bundles[i] = model.encode_all(extract_row(X, rows[i]));
    };
    if (run_parallel) {
        parallel_for(n, body);
    } else {
        serial_for(n, body);
    }
    return c;
}

}  // namespace

CorpusLatents compute_corpus_latents(const FlanModel& model, const Matrix& X,
                                     const std::vector<int>& rows) {
    return corpus_latents_impl(model, X, rows, true);
}

CorpusLatents compute_corpus_latents_serial(const FlanModel& model, const Matrix& X,
                                            const std::vector<int>& rows) {
    return corpus_latents_impl(model, X, rows, false);
}

ExampleExplanation nearest_examples(const FlanModel& model, const LatentBundle& query,
                                    const CorpusLatents& corpus, int k, int match_k) {
    const int n = static_cast<int>(corpus.bundles.size());
    if (n == 0) throw std::invalid_argument("nearest_examples: empty corpus");
    if (k < 1) throw std::invalid_argument("nearest_examples: k must be >= 1");
    k = std::min(k, n);

    std::vector<double> dist(n, 0.0);
    parallel_for(n, [&](int i) {
        dist[i] = l2_norm(sub(query.total, corpus.bundles[i].total));
    });

    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (dist[a] != dist[b]) return dist[a] < dist[b];
        return a < b;
    });

    ExampleExplanation e;
    e.neighbors.reserve(k);
    for (int r = 0; r < k; ++r) e.neighbors.push_back({order[r], dist[order[r]]});
    // Farthest: maximal distance, ties broken by ascending position as well.
    int far = 0;
    for (int i = 1; i < n; ++i) {
        if (dist[i] > dist[far]) far = i;
    }
    e.farthest = {far, dist[far]};

    const int mk = std::min({match_k, model.n_groups()});
    e.nearest_match = match_features(query, corpus.bundles[e.neighbors[0].id], mk);
    e.farthest_match = match_features(query, corpus.bundles[far], mk);
    return e;
}

double binary_flip_effect(const FlanModel& model, const Matrix& x, int i, int target) {
    if (i < 0 || i >= model.n_groups()) {
        throw std::invalid_argument("binary_flip_effect: group index out of range");
    }
    const auto& group = model.partition().groups[i];
    if (group.size() != 1) {
        throw std::invalid_argument("binary_flip_effect: group " + std::to_string(i) +
                                    " is not a single column");
    }
    const double current = x.data[group[0]];
    if (current != 0.0 && current != 1.0) {
        std::ostringstream os;
        os << "binary_flip_effect: group " << i << " holds non-binary value " << current;
        throw std::invalid_argument(os.str());
    }
    if (target < 0 || target >= model.output_dim()) {
        throw std::invalid_argument("binary_flip_effect: target output out of range");
    }

    Matrix on = x, off = x;
    on.data[group[0]] = 1.0;
    off.data[group[0]] = 0.0;
    const Matrix p_on = model.probabilities(model.forward(on).first);
    const Matrix p_off = model.probabilities(model.forward(off).first);
    return p_on.at(0, target) - p_off.at(0, target);
}

MeanImportance mean_importance(const FlanModel& model, const Matrix& X,
                               const std::vector<int>& rows) {
    if (rows.empty()) throw std::invalid_argument("mean_importance: empty dataset");
    const CorpusLatents corpus = compute_corpus_latents(model, X, rows);

    MeanImportance m;
    m.n_samples = static_cast<int>(rows.size());
    m.raw.assign(model.n_groups(), 0.0);
    m.normalized.assign(model.n_groups(), 0.0);
    for (const auto& bundle : corpus.bundles) {
        const std::vector<double> norms = model.latent_norms(bundle);
        double total = 0.0;
        for (double v : norms) total += v;
        for (int i = 0; i < model.n_groups(); ++i) {
            m.raw[i] += norms[i];
            if (total > 0.0) m.normalized[i] += norms[i] / total;
        }
    }
    for (int i = 0; i < model.n_groups(); ++i) {
        m.raw[i] /= m.n_samples;
        m.normalized[i] /= m.n_samples;
    }
    return m;
}

}  // namespace flan
