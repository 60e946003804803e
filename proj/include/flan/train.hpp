#pragma once

// Optimizers (Adam / AdamW), learning-rate schedules, the mini-batch
// training loop, and predictive metrics (accuracy, exact tie-aware AUC).
//
// Determinism contract: given (seed, config, data), training is bit-exact —
// initialization, shuffling and batching are seeded, per-sample gradients
// are computed on independent tapes and reduced in ascending sample order,
// so results do not depend on the worker count.

#include <cstdint>
#include <vector>

#include "flan/matrix.hpp"
#include "flan/model.hpp"

namespace flan {

enum class Optimizer { Adam, AdamW };
enum class Schedule { None, ExponentialDecay, StepDecay, CosineAnnealing };

const char* optimizer_name(Optimizer o);
const char* schedule_name(Schedule s);

struct TrainConfig {
    Optimizer optimizer = Optimizer::Adam;
    double lr = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;  // AdamW decoupled decay factor (lambda)

    Schedule schedule = Schedule::None;
    double gamma = 0.99;         // ExponentialDecay: lr * gamma^t
    int step_period = 100;       // StepDecay
    double step_factor = 0.5;    // StepDecay: lr * factor^floor(t/period)
    int cosine_period = 1000;    // CosineAnnealing: T
    bool cosine_restarts = false;

    int epochs = 100;
    int batch_size = 32;
    std::uint64_t seed = 0;
    int early_stop_patience = 20;

    // Throws ConfigError naming the offending field.
    void validate() const;
};

// Scheduled learning rate at optimizer step t (0-based).
// none: lr. exponential: lr*gamma^t. step: lr*factor^floor(t/period).
// cosine: lr*(1+cos(pi*phase/T))/2 with phase = t mod T when restarting,
// min(t, T) otherwise (so the rate reaches 0 at t=T and stays there).
double lr_at(const TrainConfig& cfg, int t);

// First/second moment buffers, one per parameter block.
struct AdamState {
    std::vector<Matrix> m;
    std::vector<Matrix> v;
    int t = 0;  // completed steps

    static AdamState init(const std::vector<Matrix*>& params);
};

// One bias-corrected Adam step at rate `lr`:
//   p -= lr * m_hat / (sqrt(v_hat) + eps)
// AdamW additionally subtracts lr * weight_decay * p (decoupled, using the
// pre-update value). Throws on shape mismatch or non-finite gradients,
// naming the parameter block.
void adam_step(const std::vector<Matrix*>& params, const std::vector<Matrix>& grads,
               AdamState& state, const TrainConfig& cfg, double lr);

// Mean loss over a batch and the gradient of that mean w.r.t. every
// parameter (declaration order). One tape per sample; samples fan out to
// workers; reduction is in ascending sample order. The _serial twin runs
// the identical kernel on the calling thread; tests assert bit-equality.
struct BatchResult {
    double mean_loss = 0.0;
    std::vector<Matrix> grads;
};

BatchResult batch_gradients(const FlanModel& model, const Matrix& X,
                            const std::vector<int>& labels,
                            const std::vector<int>& batch);
BatchResult batch_gradients_serial(const FlanModel& model, const Matrix& X,
                                   const std::vector<int>& labels,
                                   const std::vector<int>& batch);

// Per-sample loss (logistic or softmax cross-entropy) without a tape.
double sample_loss(const FlanModel& model, const Matrix& outputs, int label);

struct Metrics {
    double loss = 0.0;
    double accuracy = 0.0;
    double auc = 0.0;
    bool has_auc = false;  // false for multiclass or single-class subsets
};

Metrics evaluate(const FlanModel& model, const Matrix& X,
                 const std::vector<int>& labels, const std::vector<int>& idx);

struct EpochStats {
    int epoch = 0;
    double lr = 0.0;
    double train_loss = 0.0, train_accuracy = 0.0, train_auc = 0.0;
    double val_loss = 0.0, val_accuracy = 0.0, val_auc = 0.0;
    bool has_auc = false;
};

struct EvalResult {
    // Validation metrics of the retained (best-validation) parameters.
    double accuracy = 0.0;
    double auc = 0.0;
    double loss = 0.0;
    bool has_auc = false;
    int best_epoch = -1;
    int epochs_run = 0;
    bool early_stopped = false;
    std::vector<EpochStats> series;
};

// Mini-batch training with early stopping on validation AUC (binary) or
// accuracy (multiclass), patience in epochs. The model is left at the
// best-validation parameters. Throws TrainingDiverged naming epoch/batch
// when the loss turns non-finite.
EvalResult train(FlanModel& model, const Matrix& X, const std::vector<int>& labels,
                 const std::vector<int>& train_idx, const std::vector<int>& val_idx,
                 const TrainConfig& cfg);

// Probability that a uniformly random positive outscores a uniformly random
// negative, ties counted half. Computed from exact integer win/tie counts,
// so it equals brute-force pair counting bit-for-bit. Throws
// std::invalid_argument when labels are single-class.
double auc(const std::vector<double>& scores, const std::vector<int>& labels);

double accuracy_score(const std::vector<int>& predicted, const std::vector<int>& labels);

}  // namespace flan
