#pragma once

// Dataset ingestion and generation: delimited tabular files, IDX image
// grids, token sequences, and the synthetic task generators used by tests.
// Every loader emits a Dataset whose FeaturePartition satisfies the model
// module's disjoint-cover invariant.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "flan/matrix.hpp"
#include "flan/model.hpp"

namespace flan {

enum class ColumnKind { Numeric, Binary, Categorical };

const char* column_kind_name(ColumnKind k);

// Declared (and, after loading, fitted) description of a tabular file.
struct DatasetSchema {
    struct Column {
        std::string name;
        ColumnKind kind = ColumnKind::Numeric;
        std::vector<std::string> levels;  // categorical: closed world after fit
        double mean = 0.0;                // numeric: train-split statistics
        double stddev = 1.0;
    };
    std::vector<Column> columns;  // feature columns in file order
    std::string label_column;
    std::vector<std::string> label_levels;  // sorted distinct label strings
    bool standardize = true;
    bool fitted = false;

    int n_classes() const { return static_cast<int>(label_levels.size()); }
};

// How to split rows. Fractions must sum to 1; stratification keeps class
// ratios within one sample per class. all_train routes every row to train.
struct SplitSpec {
    double train = 0.70;
    double val = 0.15;
    double test = 0.15;
    bool all_train = false;
    std::uint64_t seed = 0;

    void validate() const;  // throws ConfigError
};

struct Dataset {
    Matrix X;  // n_rows x raw_dim
    std::vector<int> labels;
    int n_classes = 2;
    FeaturePartition partition;
    DatasetSchema schema;  // fitted (tabular loads only)
    std::vector<int> train_idx, val_idx, test_idx;
    std::string provenance;
    int dropped_rows = 0;  // rows discarded for missing values

    int n_rows() const { return X.rows; }
};

// Loads a comma-separated file (UTF-8, first row = header, no quoting).
// Numeric columns are standardized with train-split statistics (unless
// schema.standardize is false); categorical columns become one-hot blocks,
// each block one feature group; binary columns are single-column groups.
// Rows with missing cells ('' or '?') are dropped and counted. When the
// schema is already fitted its statistics and level sets are reused, and an
// unseen categorical level or label is an error.
Dataset load_delimited(const std::string& path, const DatasetSchema& schema,
                       const SplitSpec& split);

// Writes matrix + labels as a delimited file readable by load_delimited
// (numeric columns x0..x{d-1} plus `label`). Values are printed with 17
// significant digits so a round trip reproduces every double exactly.
void write_delimited(const std::string& path, const Matrix& X,
                     const std::vector<int>& labels);

// Loads an IDX image/label pair (big-endian; magic 0x00000803 for images,
// 0x00000801 for labels). Pixels are scaled to [0,1]; the partition is the
// row-major grid of patch_size x patch_size patches.
Dataset load_idx_images(const std::string& images_path, const std::string& labels_path,
                        int patch_size, const SplitSpec& split);

// One record of a (possibly paired) sequence classification task.
struct TokenRecord {
    std::string primary;
    std::string secondary;  // empty for single-sequence tasks
    int label = 0;
};

// Encodes sequences position-by-position: each position is one feature
// group carrying a one-hot code of width |alphabet|+1 (the extra code is
// PAD, used beyond a sequence's length). Pairs are concatenated with
// primary positions first. Unknown symbols and overlong sequences are
// errors.
Dataset tokenize_sequences(const std::vector<TokenRecord>& records,
                           const std::string& alphabet, int max_primary,
                           int max_secondary, const SplitSpec& split);

// Reverses tokenize_sequences for one row (trailing PADs stripped).
std::pair<std::string, std::string> detokenize_row(const Dataset& data,
                                                   const std::string& alphabet,
                                                   int max_primary, int row);

enum class Generator { Xor, Additive, Interaction, PlantedRelevance };

const char* generator_name(Generator g);

struct SyntheticSpec {
    Generator generator = Generator::Xor;
    int n_samples = 100;
    int n_features = 2;
    int n_irrelevant = 0;  // must be < n_features; irrelevant columns come last
    double noise_std = 0.0;
    std::uint64_t seed = 0;

    void validate() const;  // throws ConfigError
};

// Synthetic binary tasks:
//  xor     — features in {0,1}, rows cycle the four (x0,x1) patterns so
//            n=4 is the exact truth table; label = x0 XOR x1; extra
//            columns are seeded random bits; noise_std ignored.
//  additive— x ~ U[-2,2]; y = sum_i g_i(x_i) + noise, thresholded at the
//            sample median; g cycles {sin(x), x^2/4, tanh(x), |x|-1}.
//  interaction — x ~ U[-1,1]; label = [x0*x1 + noise > 0]; remaining
//            columns are distractors.
//  planted-relevance — x ~ N(0,1); label = [sum over the first
//            (n_features - n_irrelevant) columns of w_i*x_i + noise > 0]
//            with seeded weights, |w_i| in [1,2]; the last n_irrelevant
//            columns never influence the label.
Dataset generate(const SyntheticSpec& spec, const SplitSpec& split);

// The additive generator's per-column link functions, exposed so tests can
// recompute labels independently.
double additive_g(int column_index, double x);

// Stratified split indices for `labels`: per-class largest-remainder
// allocation of the requested fractions, class rows shuffled with `seed`.
// Returns {train, val, test}; splits are disjoint and cover every row.
std::vector<std::vector<int>> stratified_split(const std::vector<int>& labels,
                                               const SplitSpec& split);

}  // namespace flan
