#include "flan/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "flan/errors.hpp"
#include "flan/parallel.hpp"
#include "flan/rng.hpp"
#include "flan/tape.hpp"

namespace flan {

const char* optimizer_name(Optimizer o) {
    return o == Optimizer::Adam ? "adam" : "adamw";
}

const char* schedule_name(Schedule s) {
    switch (s) {
        case Schedule::None: return "none";
        case Schedule::ExponentialDecay: return "exponential";
        case Schedule::StepDecay: return "step";
        case Schedule::CosineAnnealing: return "cosine";
    }
    return "?";
}

void TrainConfig::validate() const {
    if (!(lr > 0.0)) throw ConfigError("train.lr: must be > 0");
    if (beta1 < 0.0 || beta1 >= 1.0) throw ConfigError("train.beta1: must be in [0,1)");
    if (beta2 < 0.0 || beta2 >= 1.0) throw ConfigError("train.beta2: must be in [0,1)");
    if (!(eps > 0.0)) throw ConfigError("train.eps: must be > 0");
    if (weight_decay < 0.0) throw ConfigError("train.weight_decay: must be >= 0");
    if (epochs < 0) throw ConfigError("train.epochs: must be >= 0");
    if (batch_size < 1) throw ConfigError("train.batch_size: must be >= 1");
    if (early_stop_patience < 1) throw ConfigError("train.early_stop_patience: must be >= 1");
    switch (schedule) {
        case Schedule::None:
            break;
        case Schedule::ExponentialDecay:
            if (!(gamma > 0.0)) throw ConfigError("train.gamma: must be > 0");
            break;
        case Schedule::StepDecay:
            if (step_period < 1) throw ConfigError("train.step_period: must be >= 1");
            if (!(step_factor > 0.0)) throw ConfigError("train.step_factor: must be > 0");
            break;
        case Schedule::CosineAnnealing:
            if (cosine_period < 1) throw ConfigError("train.cosine_period: must be >= 1");
            break;
    }
}

double lr_at(const TrainConfig& cfg, int t) {
    switch (cfg.schedule) {
        case Schedule::None:
            return cfg.lr;
        case Schedule::ExponentialDecay:
            return cfg.lr * std::pow(cfg.gamma, t);
        case Schedule::StepDecay:
            return cfg.lr * std::pow(cfg.step_factor, t / cfg.step_period);
        case Schedule::CosineAnnealing: {
            const int T = cfg.cosine_period;
            const int phase = cfg.cosine_restarts ? t % T : std::min(t, T);
            const double pi = 3.14159265358979323846;
            return cfg.lr * (1.0 + std::cos(pi * phase / T)) / 2.0;
        }
    }
    return cfg.lr;
}

AdamState AdamState::init(const std::vector<Matrix*>& params) {
    AdamState s;
    s.m.reserve(params.size());
    s.v.reserve(params.size());
    for (const Matrix* p : params) {
        s.m.push_back(Matrix::zeros(p->rows, p->cols));
        s.v.push_back(Matrix::zeros(p->rows, p->cols));
    }
    return s;
}

void adam_step(const std::vector<Matrix*>& params, const std::vector<Matrix>& grads,
               AdamState& state, const TrainConfig& cfg, double lr) {
    if (params.size() != grads.size() || params.size() != state.m.size()) {
        throw std::invalid_argument("adam_step: parameter/gradient/state count mismatch");
    }
    state.t += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, state.t);
    const double bc2 = 1.0 - std::pow(cfg.beta2, state.t);
    for (std::size_t k = 0; k < params.size(); ++k) {
        Matrix& p = *params[k];
        const Matrix& g = grads[k];
        if (!p.same_shape(g)) {
            std::ostringstream os;
            os << "adam_step: parameter block " << k << " has shape " << p.shape_str()
               << " but gradient has " << g.shape_str();
            throw std::invalid_argument(os.str());
        }
        for (double gv : g.data) {
            if (!std::isfinite(gv)) {
                std::ostringstream os;
                os << "adam_step: non-finite gradient in parameter block " << k
                   << " (shape " << p.shape_str() << ")";
                throw std::runtime_error(os.str());
            }
        }
        Matrix& m = state.m[k];
        Matrix& v = state.v[k];
        for (std::size_t i = 0; i < p.data.size(); ++i) {
            const double gv = g.data[i];
            m.data[i] = cfg.beta1 * m.data[i] + (1.0 - cfg.beta1) * gv;
            v.data[i] = cfg.beta2 * v.data[i] + (1.0 - cfg.beta2) * gv * gv;
            const double m_hat = m.data[i] / bc1;
            const double v_hat = v.data[i] / bc2;
            double update = lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
            if (cfg.optimizer == Optimizer::AdamW) {
                update += lr * cfg.weight_decay * p.data[i];
            }
            p.data[i] -= update;
        }
    }
}

namespace {

NodeId loss_node(const FlanModel& model, Tape& tape, NodeId output, int label) {
    switch (model.output_kind()) {
        case OutputKind::BinaryLogit:
            return tape.logistic_xent(output, static_cast<double>(label));
        case OutputKind::ClassLogits:
            return tape.softmax_xent(output, label);
        case OutputKind::Regression:
            throw ConfigError("train: regression output kind is not trainable");
    }
    throw ConfigError("train: unknown output kind");
}

BatchResult batch_gradients_impl(const FlanModel& model, const Matrix& X,
                                 const std::vector<int>& labels,
                                 const std::vector<int>& batch, bool run_parallel) {
    const auto params = model.parameters();
    const int b = static_cast<int>(batch.size());
    if (b == 0) throw std::invalid_argument("batch_gradients: empty batch");

    std::vector<double> losses(b, 0.0);
    std::vector<std::vector<Matrix>> sample_grads(b);

    const auto body = [&](int s) {
        const int row = batch[s];
        Tape tape;
        const TapeForward tf = model.forward_tape(tape, extract_row(X, row));
        const NodeId loss = loss_node(model, tape, tf.output, labels[row]);
        tape.backward(loss);
        losses[s] = tape.value(loss).at(0, 0);
        auto& dst = sample_grads[s];
        dst.reserve(tf.param_leaves.size());
        for (NodeId leaf : tf.param_leaves) dst.push_back(tape.grad(leaf));
    };
    if (run_parallel) {
        parallel_for(b, body);
    } else {
        serial_for(b, body);
    }

    // Ascending-index reduction: results are independent of worker count.
    BatchResult r;
    r.grads.reserve(params.size());
    for (const Matrix* p : params) r.grads.push_back(Matrix::zeros(p->rows, p->cols));
    for (int s = 0; s < b; ++s) {
        for (std::size_t k = 0; k < r.grads.size(); ++k) {
            auto& acc = r.grads[k].data;
            const auto& src = sample_grads[s][k].data;
            for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += src[i];
        }
        r.mean_loss += losses[s];
    }
    const double inv = 1.0 / b;
    for (auto& g : r.grads) {
        for (auto& x : g.data) x *= inv;
    }
    r.mean_loss *= inv;
    return r;
}

}  // namespace

BatchResult batch_gradients(const FlanModel& model, const Matrix& X,
                            const std::vector<int>& labels,
                            const std::vector<int>& batch) {
    return batch_gradients_impl(model, X, labels, batch, true);
}

BatchResult batch_gradients_serial(const FlanModel& model, const Matrix& X,
                                   const std::vector<int>& labels,
                                   const std::vector<int>& batch) {
    return batch_gradients_impl(model, X, labels, batch, false);
}

double sample_loss(const FlanModel& model, const Matrix& outputs, int label) {
    switch (model.output_kind()) {
        case OutputKind::BinaryLogit: {
            const double s = outputs.at(0, 0);
            const double y = static_cast<double>(label);
            return std::max(s, 0.0) - s * y + std::log1p(std::exp(-std::fabs(s)));
        }
        case OutputKind::ClassLogits: {
            double mx = outputs.data[0];
            for (double v : outputs.data) mx = std::max(mx, v);
            double denom = 0.0;
            for (double v : outputs.data) denom += std::exp(v - mx);
            return mx + std::log(denom) - outputs.at(0, label);
        }
        case OutputKind::Regression:
            throw ConfigError("sample_loss: regression output kind is not trainable");
    }
    return 0.0;
}

Metrics evaluate(const FlanModel& model, const Matrix& X,
                 const std::vector<int>& labels, const std::vector<int>& idx) {
    if (idx.empty()) throw std::invalid_argument("evaluate: empty index set");
    Metrics m;
    std::vector<double> scores;
    std::vector<int> subset_labels;
    scores.reserve(idx.size());
    subset_labels.reserve(idx.size());
    int correct = 0;

    const int n = static_cast<int>(idx.size());
    std::vector<double> losses(n, 0.0);
    std::vector<int> predictions(n, 0);
    std::vector<double> pos_scores(n, 0.0);
    parallel_for(n, [&](int s) {
        const int row = idx[s];
        const Matrix out = model.forward(extract_row(X, row)).first;
        losses[s] = sample_loss(model, out, labels[row]);
        predictions[s] = model.predicted_class(out);
        if (model.output_kind() == OutputKind::BinaryLogit) {
            pos_scores[s] = model.probabilities(out).at(0, 0);
        }
    });
    for (int s = 0; s < n; ++s) {
        const int row = idx[s];
        m.loss += losses[s];
        if (predictions[s] == labels[row]) ++correct;
        scores.push_back(pos_scores[s]);
        subset_labels.push_back(labels[row]);
    }
    m.loss /= n;
    m.accuracy = static_cast<double>(correct) / n;

    if (model.output_kind() == OutputKind::BinaryLogit) {
        const int pos = static_cast<int>(std::count(subset_labels.begin(),
                                                    subset_labels.end(), 1));
        if (pos > 0 && pos < n) {
            m.auc = auc(scores, subset_labels);
            m.has_auc = true;
        }
    }
    return m;
}

EvalResult train(FlanModel& model, const Matrix& X, const std::vector<int>& labels,
                 const std::vector<int>& train_idx, const std::vector<int>& val_idx,
                 const TrainConfig& cfg) {
    cfg.validate();
    if (train_idx.empty()) throw std::invalid_argument("train: empty training split");
    for (int row : train_idx) {
        if (row < 0 || row >= X.rows) {
            throw std::invalid_argument("train: training index out of range");
        }
    }

    EvalResult result;
    if (cfg.epochs == 0) return result;

    Rng rng(cfg.seed);
    const auto params = model.parameters();
    AdamState state = AdamState::init(params);

    std::vector<Matrix> best_params;
    double best_metric = -1.0;
    int stale_epochs = 0;
    int global_step = 0;

    std::vector<int> order = train_idx;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(order);
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
            const std::vector<int> batch(order.begin() + start, order.begin() + stop);
            const double lr = lr_at(cfg, global_step);
            BatchResult br;
            try {
                br = batch_gradients(model, X, labels, batch);
            } catch (const std::runtime_error& e) {
                std::ostringstream os;
                os << "training diverged at epoch " << epoch << ", batch "
                   << start / cfg.batch_size << ": " << e.what();
                throw TrainingDiverged(os.str());
            }
            if (!std::isfinite(br.mean_loss)) {
                std::ostringstream os;
                os << "training diverged at epoch " << epoch << ", batch "
                   << start / cfg.batch_size << ": non-finite loss";
                throw TrainingDiverged(os.str());
            }
            adam_step(params, br.grads, state, cfg, lr);
            ++global_step;
        }

        EpochStats es;
        es.epoch = epoch;
        es.lr = lr_at(cfg, global_step - 1);
        const Metrics train_m = evaluate(model, X, labels, train_idx);
        es.train_loss = train_m.loss;
        es.train_accuracy = train_m.accuracy;
        es.train_auc = train_m.auc;
        Metrics val_m;
        if (!val_idx.empty()) {
            val_m = evaluate(model, X, labels, val_idx);
            es.val_loss = val_m.loss;
            es.val_accuracy = val_m.accuracy;
            es.val_auc = val_m.auc;
            es.has_auc = val_m.has_auc;
        } else {
            val_m = train_m;
        }
        result.series.push_back(es);
        result.epochs_run = epoch + 1;

        // Early-stopping metric: validation AUC when defined, else accuracy.
        const double metric = val_m.has_auc ? val_m.auc : val_m.accuracy;
        if (metric > best_metric) {
            best_metric = metric;
            result.best_epoch = epoch;
            best_params.clear();
            for (const Matrix* p : params) best_params.push_back(*p);
            result.loss = val_m.loss;
            result.accuracy = val_m.accuracy;
            result.auc = val_m.auc;
            result.has_auc = val_m.has_auc;
            stale_epochs = 0;
        } else {
            ++stale_epochs;
            if (stale_epochs >= cfg.early_stop_patience) {
                result.early_stopped = true;
                break;
            }
        }
    }

    if (!best_params.empty()) {
        for (std::size_t k = 0; k < params.size(); ++k) *params[k] = best_params[k];
    }
    return result;
}

double auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size()) {
        throw std::invalid_argument("auc: scores and labels differ in length");
    }
    const int n = static_cast<int>(scores.size());
    long long positives = 0;
    for (int y : labels) {
        if (y != 0 && y != 1) throw std::invalid_argument("auc: labels must be 0 or 1");
        positives += y;
    }
    const long long negatives = n - positives;
    if (positives == 0 || negatives == 0) {
        throw std::invalid_argument("auc: need at least one positive and one negative label");
    }

    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (scores[a] != scores[b]) return scores[a] < scores[b];
        return a < b;
    });

    // Exact integer counting: a positive beats every negative with a strictly
    // lower score; ties contribute half a win each.
    long long wins = 0, ties = 0, negatives_below = 0;
    int i = 0;
    while (i < n) {
        int j = i;
        long long tie_pos = 0, tie_neg = 0;
        while (j < n && scores[order[j]] == scores[order[i]]) {
            if (labels[order[j]] == 1) {
                ++tie_pos;
            } else {
                ++tie_neg;
            }
            ++j;
        }
        wins += tie_pos * negatives_below;
        ties += tie_pos * tie_neg;
        negatives_below += tie_neg;
        i = j;
    }
    return static_cast<double>(2 * wins + ties) /
           (2.0 * static_cast<double>(positives) * static_cast<double>(negatives));
}

double accuracy_score(const std::vector<int>& predicted, const std::vector<int>& labels) {
    if (predicted.size() != labels.size() || predicted.empty()) {
        throw std::invalid_argument("accuracy_score: length mismatch or empty input");
    }
    int correct = 0;
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        if (predicted[i] == labels[i]) ++correct;
    }
    return static_cast<double>(correct) / predicted.size();
}

}  // namespace flan
