#pragma once

// Interpretability providers: the model's native latent-norm scores plus
// three gradient-based post-hoc baselines (saliency, input-x-gradient,
// integrated gradients), nearest-example explanations with exact linear
// assignment matching of feature latents, binary flip effects, and
// dataset-level mean importances.

#include <string>
#include <vector>

#include "flan/matrix.hpp"
#include "flan/model.hpp"

namespace flan {

enum class Provider { FlanNorm, Saliency, InputXGradient, IntegratedGradients };

const char* provider_name(Provider p);

// Importance scores from one provider for one sample. Native FLAN scores
// are per feature group; post-hoc providers score raw input dimensions.
struct AttributionVector {
    Provider provider = Provider::FlanNorm;
    std::vector<double> scores;
    int target = 0;        // explained output index (ignored by FlanNorm)
    bool per_group = false;
};

// Sum of member-dimension scores per group (identity when already grouped).
std::vector<double> group_scores(const AttributionVector& attr,
                                 const FeaturePartition& partition);
// Group score replicated across member dimensions (identity when per-dim).
std::vector<double> dim_scores(const AttributionVector& attr,
                               const FeaturePartition& partition);

// Native importance: score_i = ||z_i||_2.
AttributionVector attribute_flan(const FlanModel& model, const Matrix& x);

// d output[target] / d x as a 1 x raw_dim row (raw logit scale).
Matrix input_gradient(const FlanModel& model, const Matrix& x, int target);

// score_d = |d output[target] / d x_d|
AttributionVector saliency(const FlanModel& model, const Matrix& x, int target);

// score_d = x_d * d output[target] / d x_d
AttributionVector input_x_gradient(const FlanModel& model, const Matrix& x, int target);

struct IgResult {
    AttributionVector attribution;
    // |sum of scores - (f(x) - f(baseline))| on the target output.
    double completeness_gap = 0.0;
};

// Riemann midpoint integration of gradients along the straight path from
// `baseline` to `x` (alpha_k = (k+0.5)/steps), scaled by (x - baseline).
IgResult integrated_gradients(const FlanModel& model, const Matrix& x,
                              const Matrix& baseline, int target, int steps);

// Injective minimum-cost matching of the top-K source features (by latent
// norm) onto target features; pairs listed in ascending source group index,
// total_cost summed in that order.
struct AssignmentResult {
    std::vector<int> source_features;
    std::vector<int> matched_targets;
    double total_cost = 0.0;
};

AssignmentResult match_features(const LatentBundle& source, const LatentBundle& target,
                                int k);

// Exact minimum-cost assignment on a square cost matrix; returns the column
// chosen for each row. O(n^3) potential/augmenting-path method.
std::vector<int> hungarian_min_assignment(const Matrix& cost);

// Aggregate (pre-predictor) latent bundles for a set of corpus rows.
// Parallel across rows with a serial twin; results are bit-identical.
struct CorpusLatents {
    std::vector<int> rows;  // dataset row of each bundle
    std::vector<LatentBundle> bundles;
};

CorpusLatents compute_corpus_latents(const FlanModel& model, const Matrix& X,
                                     const std::vector<int>& rows);
CorpusLatents compute_corpus_latents_serial(const FlanModel& model, const Matrix& X,
                                            const std::vector<int>& rows);

struct Neighbor {
    int id = -1;  // position within the corpus (index into CorpusLatents)
    double distance = 0.0;
};

struct ExampleExplanation {
    std::vector<Neighbor> neighbors;  // k nearest, distance ascending
    Neighbor farthest;
    AssignmentResult nearest_match;   // query top-K onto nearest neighbor
    AssignmentResult farthest_match;  // query top-K onto farthest neighbor
};

// Euclidean nearest/farthest corpus items on the aggregate latent z; ties
// broken by ascending corpus position. k is clamped to the corpus size.
// match_k (clamped to the group count) drives the assignment matchings.
ExampleExplanation nearest_examples(const FlanModel& model, const LatentBundle& query,
                                    const CorpusLatents& corpus, int k, int match_k);

// f(x with group i = 1) - f(x with group i = 0) on the probability scale of
// `target`. Group i must be one column wide and currently hold 0 or 1.
double binary_flip_effect(const FlanModel& model, const Matrix& x, int i, int target);

// Dataset-mean native importances: raw mean of ||z_i|| and the mean of the
// per-sample-normalized shares ||z_i|| / sum_j ||z_j|| (samples whose norms
// are all zero contribute zero shares).
struct MeanImportance {
    std::vector<double> raw;
    std::vector<double> normalized;
    int n_samples = 0;
};

MeanImportance mean_importance(const FlanModel& model, const Matrix& X,
                               const std::vector<int>& rows);

}  // namespace flan
