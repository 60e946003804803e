#include "flan/xai_metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "flan/parallel.hpp"
#include "flan/rng.hpp"

namespace flan {

namespace {

// Tie-averaged ranks (1-based): tied values share the mean of their
// positions in the sorted order.
std::vector<double> tied_ranks(const std::vector<double>& values) {
    const int n = static_cast<int>(values.size());
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (values[a] != values[b]) return values[a] < values[b];
        return a < b;
    });
    std::vector<double> ranks(n, 0.0);
    int i = 0;
    while (i < n) {
        int j = i;
        while (j < n && values[order[j]] == values[order[i]]) ++j;
        const double mean_rank = (i + 1 + j) / 2.0;  // average of i+1 .. j
        for (int t = i; t < j; ++t) ranks[order[t]] = mean_rank;
        i = j;
    }
    return ranks;
}

}  // namespace

SpearmanResult spearman(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) {
        throw std::invalid_argument("spearman: input lengths differ");
    }
    SpearmanResult r;
    const int n = static_cast<int>(a.size());
    if (n < 2) {
        r.degenerate = true;
        return r;
    }
    const bool a_const = std::all_of(a.begin(), a.end(),
                                     [&](double v) { return v == a.front(); });
    const bool b_const = std::all_of(b.begin(), b.end(),
                                     [&](double v) { return v == b.front(); });
    if (a_const || b_const) {
        r.degenerate = true;
        return r;
    }
    const std::vector<double> ra = tied_ranks(a);
    const std::vector<double> rb = tied_ranks(b);
    double mean_a = 0.0, mean_b = 0.0;
    for (int i = 0; i < n; ++i) {
        mean_a += ra[i];
        mean_b += rb[i];
    }
    mean_a /= n;
    mean_b /= n;
    double cov = 0.0, var_a = 0.0, var_b = 0.0;
    for (int i = 0; i < n; ++i) {
        const double da = ra[i] - mean_a;
        const double db = rb[i] - mean_b;
        cov += da * db;
        var_a += da * da;
        var_b += db * db;
    }
    if (var_a == 0.0 || var_b == 0.0) {
        r.degenerate = true;
        return r;
    }
    r.value = cov / std::sqrt(var_a * var_b);
    return r;
}

std::vector<double> removal_effects(const FlanModel& model, const Matrix& x,
                                    Provider provider, int target,
                                    const Matrix& baseline) {
    if (target < 0 || target >= model.output_dim()) {
        throw std::invalid_argument("removal_effects: target output out of range");
    }
    const int n = model.n_groups();
    std::vector<double> effects(n, 0.0);

    if (provider == Provider::FlanNorm) {
        const LatentBundle bundle = model.encode_all(x);
        std::vector<int> all(n);
        std::iota(all.begin(), all.end(), 0);
        const double p_full =
            model.probabilities(model.partial_forward(bundle, all)).at(0, target);
        parallel_for(n, [&](int i) {
            std::vector<int> keep;
            keep.reserve(n - 1);
            for (int j = 0; j < n; ++j) {
                if (j != i) keep.push_back(j);
            }
            const double p_wo =
                model.probabilities(model.partial_forward(bundle, keep)).at(0, target);
            effects[i] = std::fabs(p_full - p_wo);
        });
        return effects;
    }

    if (!x.same_shape(baseline)) {
        throw std::invalid_argument("removal_effects: baseline shape mismatch");
    }
    const double p_full = model.probabilities(model.forward(x).first).at(0, target);
    const auto& groups = model.partition().groups;
    parallel_for(n, [&](int i) {
        Matrix x_wo = x;
        for (int d : groups[i]) x_wo.data[d] = baseline.data[d];
        const double p_wo = model.probabilities(model.forward(x_wo).first).at(0, target);
        effects[i] = std::fabs(p_full - p_wo);
    });
    return effects;
}

SpearmanResult monotonicity(const FlanModel& model, const Matrix& x,
                            const AttributionVector& attr, const Matrix& baseline) {
    std::vector<double> magnitudes = group_scores(attr, model.partition());
    for (double& v : magnitudes) v = std::fabs(v);
    const std::vector<double> effects =
        removal_effects(model, x, attr.provider, attr.target, baseline);
    return spearman(magnitudes, effects);
}

int non_sensitivity(const FlanModel& model, const Matrix& x,
                    const AttributionVector& attr, const Matrix& baseline,
                    double score_tol, double effect_tol) {
    if (score_tol < 0.0 || effect_tol < 0.0) {
        throw std::invalid_argument("non_sensitivity: tolerances must be >= 0");
    }
    std::vector<double> magnitudes = group_scores(attr, model.partition());
    const std::vector<double> effects =
        removal_effects(model, x, attr.provider, attr.target, baseline);
    int count = 0;
    for (std::size_t i = 0; i < magnitudes.size(); ++i) {
        const bool claimed_irrelevant = std::fabs(magnitudes[i]) <= score_tol;
        const bool actually_irrelevant = effects[i] <= effect_tol;
        if (claimed_irrelevant != actually_irrelevant) ++count;
    }
    return count;
}

double diversity(const std::vector<Matrix>& prototypes) {
    const int k = static_cast<int>(prototypes.size());
    if (k < 2) throw std::invalid_argument("diversity: need at least 2 prototypes");
    double total = 0.0;
    int pairs = 0;
    for (int i = 0; i < k; ++i) {
        for (int j = i + 1; j < k; ++j) {
            total += l2_norm(sub(prototypes[i], prototypes[j]));
            ++pairs;
        }
    }
    return total / pairs;
}

namespace {

int nearest_index(const Matrix& query, const std::vector<Matrix>& points) {
    int best = 0;
    double best_d = l2_norm(sub(query, points[0]));
    for (std::size_t j = 1; j < points.size(); ++j) {
        const double d = l2_norm(sub(query, points[j]));
        if (d < best_d) {
            best_d = d;
            best = static_cast<int>(j);
        }
    }
    return best;
}

}  // namespace

double non_representativeness_global(const std::vector<Matrix>& query_space,
                                     const std::vector<Matrix>& query_probs,
                                     const std::vector<Matrix>& proto_space,
                                     const std::vector<Matrix>& proto_probs) {
    if (query_space.empty()) {
        throw std::invalid_argument("non_representativeness: empty corpus");
    }
    if (query_space.size() != query_probs.size() ||
        proto_space.size() != proto_probs.size() || proto_space.empty()) {
        throw std::invalid_argument("non_representativeness: inconsistent inputs");
    }
    const int n = static_cast<int>(query_space.size());
    std::vector<double> dist(n, 0.0);
    parallel_for(n, [&](int q) {
        const int p = nearest_index(query_space[q], proto_space);
        dist[q] = l2_norm(sub(query_probs[q], proto_probs[p]));
    });
    double total = 0.0;
    for (double d : dist) total += d;
    return total / n;
}

double non_representativeness_local(const std::vector<Matrix>& query_space,
                                    const std::vector<Matrix>& query_probs,
                                    const std::vector<Matrix>& corpus_space,
                                    const std::vector<Matrix>& corpus_probs, int k) {
    if (query_space.empty() || corpus_space.empty()) {
        throw std::invalid_argument("non_representativeness: empty corpus");
    }
    if (k < 1) throw std::invalid_argument("non_representativeness: k must be >= 1");
    const int kk = std::min<int>(k, static_cast<int>(corpus_space.size()));
    const int n = static_cast<int>(query_space.size());
    std::vector<double> mean_dist(n, 0.0);
    parallel_for(n, [&](int q) {
        const int m = static_cast<int>(corpus_space.size());
        std::vector<int> order(m);
        std::iota(order.begin(), order.end(), 0);
        std::vector<double> d(m);
        for (int j = 0; j < m; ++j) d[j] = l2_norm(sub(query_space[q], corpus_space[j]));
        std::sort(order.begin(), order.end(), [&](int a, int b) {
            if (d[a] != d[b]) return d[a] < d[b];
            return a < b;
        });
        double acc = 0.0;
        for (int r = 0; r < kk; ++r) {
            acc += l2_norm(sub(query_probs[q], corpus_probs[order[r]]));
        }
        mean_dist[q] = acc / kk;
    });
    double total = 0.0;
    for (double d : mean_dist) total += d;
    return total / n;
}

namespace {

Matrix pairwise_impl(const std::vector<Matrix>& points, bool run_parallel) {
    const int n = static_cast<int>(points.size());
    Matrix d(n, n);
    const auto body = [&](int i) {
        for (int j = 0; j < n; ++j) {
            d.at(i, j) = i == j ? 0.0 : l2_norm(sub(points[i], points[j]));
        }
    };
    if (run_parallel) {
        parallel_for(n, body);
    } else {
        serial_for(n, body);
    }
    return d;
}

double assignment_cost(const Matrix& dist, const std::vector<int>& medoids,
                       std::vector<int>* assignment) {
    const int n = dist.rows;
    double cost = 0.0;
    for (int i = 0; i < n; ++i) {
        int best = medoids[0];
        double best_d = dist.at(i, medoids[0]);
        for (std::size_t m = 1; m < medoids.size(); ++m) {
            const double dd = dist.at(i, medoids[m]);
            if (dd < best_d || (dd == best_d && medoids[m] < best)) {
                best_d = dd;
                best = medoids[m];
            }
        }
        if (assignment) (*assignment)[i] = best;
        cost += best_d;
    }
    return cost;
}

}  // namespace

Matrix pairwise_distances(const std::vector<Matrix>& points) {
    return pairwise_impl(points, true);
}

Matrix pairwise_distances_serial(const std::vector<Matrix>& points) {
    return pairwise_impl(points, false);
}

PrototypeSet k_medoids(const std::vector<Matrix>& points, int k, std::uint64_t seed) {
    const int n = static_cast<int>(points.size());
    if (k < 1 || k > n) {
        throw std::invalid_argument("k_medoids: k must be in [1, corpus size]");
    }
    const Matrix dist = pairwise_distances(points);

    // Seeded draw of k distinct starting medoids.
    Rng rng(seed);
    std::vector<int> pool(n);
    std::iota(pool.begin(), pool.end(), 0);
    rng.shuffle(pool);
    std::vector<int> medoids(pool.begin(), pool.begin() + k);
    std::sort(medoids.begin(), medoids.end());

    PrototypeSet result;
    result.assignment.assign(n, -1);
    double cost = assignment_cost(dist, medoids, nullptr);
    result.cost_history.push_back(cost);

    std::vector<bool> is_medoid(n, false);
    for (int m : medoids) is_medoid[m] = true;

    // PAM swap phase: apply the best strictly-improving swap until none.
    while (true) {
        double best_cost = cost;
        int best_m = -1, best_c = -1;
        for (int mi = 0; mi < k; ++mi) {
            for (int c = 0; c < n; ++c) {
                if (is_medoid[c]) continue;
                std::vector<int> trial = medoids;
                trial[mi] = c;
                const double trial_cost = assignment_cost(dist, trial, nullptr);
                if (trial_cost < best_cost) {
                    best_cost = trial_cost;
                    best_m = mi;
                    best_c = c;
                }
            }
        }
        if (best_m < 0) break;
        is_medoid[medoids[best_m]] = false;
        is_medoid[best_c] = true;
        medoids[best_m] = best_c;
        std::sort(medoids.begin(), medoids.end());
        cost = best_cost;
        result.cost_history.push_back(cost);
    }

    result.medoids = medoids;
    result.total_cost = assignment_cost(dist, medoids, &result.assignment);
    return result;
}

}  // namespace flan
