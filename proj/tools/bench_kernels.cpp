// Micro-benchmark for the three parallel kernels against their serial
// reference twins. Verifies bit-identical results while timing, so any
// nondeterminism in the parallel paths shows up here immediately.
//
// Usage: flan_bench [scale]   (scale >= 1 multiplies the workload)

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <string>
#include <vector>

#include "flan/data.hpp"
#include "flan/interpret.hpp"
#include "flan/matrix.hpp"
#include "flan/model.hpp"
#include "flan/parallel.hpp"
#include "flan/rng.hpp"
#include "flan/train.hpp"
#include "flan/xai_metrics.hpp"

using namespace flan;

namespace {

double seconds(const std::chrono::steady_clock::time_point& a,
               const std::chrono::steady_clock::time_point& b) {
    return std::chrono::duration<double>(b - a).count();
}

template <typename F>
double time_best_of(int reps, F&& fn) {
    double best = 1e300;
    for (int r = 0; r < reps; ++r) {
        const auto t0 = std::chrono::steady_clock::now();
        fn();
        const auto t1 = std::chrono::steady_clock::now();
        best = std::min(best, seconds(t0, t1));
    }
    return best;
}

void report(const char* name, double serial_s, double parallel_s, bool identical) {
    std::printf("%-24s serial %8.4fs  parallel %8.4fs  speedup %5.2fx  %s\n", name,
                serial_s, parallel_s, serial_s / parallel_s,
                identical ? "bit-identical" : "MISMATCH");
}

}  // namespace

int main(int argc, char** argv) {
    int scale = 1;
    if (argc > 1) scale = std::max(1, std::atoi(argv[1]));

    SyntheticSpec spec;
    spec.generator = Generator::Additive;
    spec.n_samples = 512 * scale;
    spec.n_features = 12;
    spec.seed = 42;
    SplitSpec split;
    split.all_train = true;
    Dataset data = generate(spec, split);

    Rng rng(1);
    EncoderSpec enc;
    enc.latent_dim = 16;
    enc.hidden_sizes = {24};
    FlanModel model = FlanModel::build(data.partition, enc, {24}, true,
                                       Activation::Tanh, OutputKind::BinaryLogit, 1, rng);

    std::printf("workers: %d, samples: %d, groups: %d, params: %d\n", worker_count(),
                data.n_rows(), model.n_groups(), model.parameter_scalars());

    std::vector<int> rows(data.n_rows());
    for (int i = 0; i < data.n_rows(); ++i) rows[i] = i;

    bool all_identical = true;
    const int reps = 3;

    {
        BatchResult rp, rs;
        const double tp = time_best_of(
            reps, [&] { rp = batch_gradients(model, data.X, data.labels, rows); });
        const double ts = time_best_of(
            reps, [&] { rs = batch_gradients_serial(model, data.X, data.labels, rows); });
        bool same = rp.mean_loss == rs.mean_loss;
        for (std::size_t i = 0; same && i < rp.grads.size(); ++i) {
            same = bit_equal(rp.grads[i], rs.grads[i]);
        }
        all_identical = all_identical && same;
        report("batch_gradients", ts, tp, same);
    }

    {
        CorpusLatents lp, ls;
        const double tp =
            time_best_of(reps, [&] { lp = compute_corpus_latents(model, data.X, rows); });
        const double ts = time_best_of(
            reps, [&] { ls = compute_corpus_latents_serial(model, data.X, rows); });
        bool same = lp.rows == ls.rows;
        for (std::size_t i = 0; same && i < lp.bundles.size(); ++i) {
            same = bit_equal(lp.bundles[i].total, ls.bundles[i].total);
        }
        all_identical = all_identical && same;
        report("corpus_latents", ts, tp, same);
    }

    {
        std::vector<Matrix> points;
        points.reserve(rows.size());
        for (int r : rows) points.push_back(extract_row(data.X, r));
        Matrix dp, ds;
        const double tp = time_best_of(reps, [&] { dp = pairwise_distances(points); });
        const double ts =
            time_best_of(reps, [&] { ds = pairwise_distances_serial(points); });
        const bool same = bit_equal(dp, ds);
        all_identical = all_identical && same;
        report("pairwise_distances", ts, tp, same);
    }

    return all_identical ? 0 : 1;
}
