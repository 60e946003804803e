#pragma once

// Functionally-grounded interpretability metrics: monotonicity and
// non-sensitivity for attribution providers, diversity and
// non-representativeness for example/prototype sets, plus K-Medoids (PAM)
// prototype selection. The operational definitions are fixed here and
// quoted verbatim in every emitted report:
//
//   monotonicity          Spearman rank correlation between attribution
//                         magnitudes and removal-effect magnitudes
//                         e_i = |f(x) - f(x without feature i)| on the
//                         explained output's probability; removal is
//                         drop-from-inner-sum for flan-norm and baseline
//                         substitution for post-hoc providers.
//   non-sensitivity       |{i : score_i <= tol} symdiff {i : e_i <= tol'}|
//   diversity             mean pairwise Euclidean distance between
//                         prototype representations in the chosen space.
//   non-representativeness  mean Euclidean distance between a query's
//                         output probabilities and those of its nearest
//                         prototype (global scope: fixed K-Medoids set)
//                         or the mean over its k nearest training samples
//                         acting as prototypes (local scope).

#include <string>
#include <vector>

#include "flan/interpret.hpp"
#include "flan/matrix.hpp"
#include "flan/model.hpp"

namespace flan {

struct SpearmanResult {
    double value = 0.0;
    bool degenerate = false;  // constant ranks on either side -> value 0
};

// Rank correlation with tie-averaged ranks.
SpearmanResult spearman(const std::vector<double>& a, const std::vector<double>& b);

// e_i = |p(x) - p(x without group i)| on output `target`'s probability.
// flan-norm removes by dropping z_i from the inner sum; post-hoc providers
// substitute the group's dimensions with the baseline's.
std::vector<double> removal_effects(const FlanModel& model, const Matrix& x,
                                    Provider provider, int target,
                                    const Matrix& baseline);

SpearmanResult monotonicity(const FlanModel& model, const Matrix& x,
                            const AttributionVector& attr, const Matrix& baseline);

// Defaults for the two tolerances below.
inline constexpr double kNonSensitivityScoreTol = 1e-6;
inline constexpr double kNonSensitivityEffectTol = 1e-4;

// Cardinality of the symmetric difference between the low-score set
// {i : |score_i| <= score_tol} and the low-effect set {i : e_i <= effect_tol}.
int non_sensitivity(const FlanModel& model, const Matrix& x,
                    const AttributionVector& attr, const Matrix& baseline,
                    double score_tol = kNonSensitivityScoreTol,
                    double effect_tol = kNonSensitivityEffectTol);

// Mean pairwise Euclidean distance; requires >= 2 prototypes.
double diversity(const std::vector<Matrix>& prototypes);

// Mean over queries of the Euclidean distance between the query's output
// probabilities and those of its nearest prototype (nearest in the chosen
// space representation).
double non_representativeness_global(const std::vector<Matrix>& query_space,
                                     const std::vector<Matrix>& query_probs,
                                     const std::vector<Matrix>& proto_space,
                                     const std::vector<Matrix>& proto_probs);

// Local scope: each query's prototypes are its k nearest corpus points in
// the chosen space; the reported value is the mean (over queries, then over
// those k prototypes) of the output-probability distance.
double non_representativeness_local(const std::vector<Matrix>& query_space,
                                    const std::vector<Matrix>& query_probs,
                                    const std::vector<Matrix>& corpus_space,
                                    const std::vector<Matrix>& corpus_probs, int k);

// Symmetric n x n Euclidean distance matrix. Parallel across rows with a
// serial twin; results are bit-identical.
Matrix pairwise_distances(const std::vector<Matrix>& points);
Matrix pairwise_distances_serial(const std::vector<Matrix>& points);

struct PrototypeSet {
    std::vector<int> medoids;        // corpus positions, ascending
    std::vector<int> assignment;     // per corpus point: its medoid's position
    double total_cost = 0.0;         // sum of distances to assigned medoids
    std::vector<double> cost_history;  // strictly decreasing, one entry per
                                       // accepted swap (front = initial cost)
};

// PAM: seeded random initial medoids, then repeatedly apply the best
// cost-decreasing (medoid, non-medoid) swap until none improves.
// Deterministic given seed. k must not exceed the corpus size.
PrototypeSet k_medoids(const std::vector<Matrix>& points, int k, std::uint64_t seed);

}  // namespace flan
