#include "flan/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "flan/errors.hpp"
#include "flan/rng.hpp"

namespace flan {

const char* column_kind_name(ColumnKind k) {
    switch (k) {
        case ColumnKind::Numeric: return "numeric";
        case ColumnKind::Binary: return "binary";
        case ColumnKind::Categorical: return "categorical";
    }
    return "?";
}

const char* generator_name(Generator g) {
    switch (g) {
        case Generator::Xor: return "xor";
        case Generator::Additive: return "additive";
        case Generator::Interaction: return "interaction";
        case Generator::PlantedRelevance: return "planted-relevance";
    }
    return "?";
}

void SplitSpec::validate() const {
    if (all_train) return;
    if (train < 0.0 || val < 0.0 || test < 0.0 ||
        std::fabs(train + val + test - 1.0) > 1e-9) {
        throw ConfigError("split: train/val/test fractions must be >= 0 and sum to 1");
    }
}

void SyntheticSpec::validate() const {
    if (n_samples < 1) throw ConfigError("synthetic.n_samples: must be >= 1");
    if (n_features < 1) throw ConfigError("synthetic.n_features: must be >= 1");
    if (n_irrelevant < 0 || n_irrelevant >= n_features) {
        throw ConfigError("synthetic.n_irrelevant: must be in [0, n_features)");
    }
    if (noise_std < 0.0) throw ConfigError("synthetic.noise_std: must be >= 0");
    if (generator == Generator::Xor && n_features < 2) {
        throw ConfigError("synthetic.n_features: xor needs at least 2 features");
    }
    if (generator == Generator::Interaction && n_features < 2) {
        throw ConfigError("synthetic.n_features: interaction needs at least 2 features");
    }
}

// ---------------------------------------------------------------------------
// Splits

std::vector<std::vector<int>> stratified_split(const std::vector<int>& labels,
                                               const SplitSpec& split) {
    split.validate();
    const int n = static_cast<int>(labels.size());
    std::vector<std::vector<int>> out(3);
    if (split.all_train) {
        out[0].resize(n);
        std::iota(out[0].begin(), out[0].end(), 0);
        return out;
    }

    int n_classes = 0;
    for (int y : labels) n_classes = std::max(n_classes, y + 1);
    std::vector<std::vector<int>> by_class(n_classes);
    for (int i = 0; i < n; ++i) {
        if (labels[i] < 0) throw std::invalid_argument("stratified_split: negative label");
        by_class[labels[i]].push_back(i);
    }

    Rng rng(split.seed);
    const double fractions[3] = {split.train, split.val, split.test};
    for (auto& rows : by_class) {
        if (rows.empty()) continue;
        rng.shuffle(rows);
        // Largest-remainder apportionment keeps each class within one
        // sample of the requested ratio.
        const int c = static_cast<int>(rows.size());
        int counts[3];
        double remainders[3];
        int assigned = 0;
        for (int k = 0; k < 3; ++k) {
            const double exact = fractions[k] * c;
            counts[k] = static_cast<int>(exact);
            remainders[k] = exact - counts[k];
            assigned += counts[k];
        }
        while (assigned < c) {
            int best = 0;
            for (int k = 1; k < 3; ++k) {
                if (remainders[k] > remainders[best]) best = k;
            }
            ++counts[best];
            remainders[best] = -1.0;
            ++assigned;
        }
        int pos = 0;
        for (int k = 0; k < 3; ++k) {
            for (int j = 0; j < counts[k]; ++j) out[k].push_back(rows[pos++]);
        }
    }
    for (auto& idx : out) std::sort(idx.begin(), idx.end());
    return out;
}

// ---------------------------------------------------------------------------
// Delimited loader

namespace {

std::string trim(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && (s[a] == ' ' || s[a] == '\t' || s[a] == '\r')) ++a;
    while (b > a && (s[b - 1] == ' ' || s[b - 1] == '\t' || s[b - 1] == '\r')) --b;
    return s.substr(a, b - a);
}

std::vector<std::string> split_commas(const std::string& line) {
    std::vector<std::string> cells;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            cells.push_back(trim(cur));
            cur.clear();
        } else {
            cur.push_back(ch);
        }
    }
    cells.push_back(trim(cur));
    return cells;
}

bool is_missing(const std::string& cell) { return cell.empty() || cell == "?"; }

double parse_number(const std::string& cell, int file_row, const std::string& column) {
    std::size_t consumed = 0;
    double v = 0.0;
    try {
        v = std::stod(cell, &consumed);
    } catch (const std::exception&) {
        consumed = 0;
    }
    if (consumed != cell.size()) {
        std::ostringstream os;
        os << "row " << file_row << ", column " << column << ": cannot parse '" << cell
           << "' as a number";
        throw IoError(os.str());
    }
    return v;
}

}  // namespace

Dataset load_delimited(const std::string& path, const DatasetSchema& schema,
                       const SplitSpec& split) {
    split.validate();
    if (schema.columns.empty()) throw ConfigError("schema: no feature columns declared");
    if (schema.label_column.empty()) throw ConfigError("schema: label column not declared");

    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);

    std::string line;
    if (!std::getline(in, line)) throw IoError(path + ": empty file");
    const std::vector<std::string> header = split_commas(line);

    // Map every declared column (and the label) to its file position.
    auto position_of = [&](const std::string& name) {
        for (std::size_t i = 0; i < header.size(); ++i) {
            if (header[i] == name) return static_cast<int>(i);
        }
        throw ConfigError("schema: column '" + name + "' not present in " + path);
    };
    std::vector<int> col_pos;
    col_pos.reserve(schema.columns.size());
    for (const auto& c : schema.columns) col_pos.push_back(position_of(c.name));
    const int label_pos = position_of(schema.label_column);
    if (header.size() != schema.columns.size() + 1) {
        std::ostringstream os;
        os << "schema: file has " << header.size() << " columns but schema declares "
           << schema.columns.size() << " features + 1 label";
        throw ConfigError(os.str());
    }

    // Read all rows, dropping those with missing cells.
    std::vector<std::vector<std::string>> rows;
    std::vector<int> file_rows;  // original line numbers, for error messages
    std::vector<std::string> raw_labels;
    int dropped = 0;
    int file_row = 1;
    while (std::getline(in, line)) {
        ++file_row;
        if (trim(line).empty()) continue;
        std::vector<std::string> cells = split_commas(line);
        if (cells.size() != header.size()) {
            std::ostringstream os;
            os << path << " row " << file_row << ": expected " << header.size()
               << " cells, found " << cells.size();
            throw IoError(os.str());
        }
        const bool missing =
            std::any_of(cells.begin(), cells.end(),
                        [](const std::string& c) { return is_missing(c); });
        if (missing) {
            ++dropped;
            continue;
        }
        raw_labels.push_back(cells[label_pos]);
        rows.push_back(std::move(cells));
        file_rows.push_back(file_row);
    }
    if (rows.empty()) throw IoError(path + ": no usable rows");

    Dataset ds;
    ds.schema = schema;
    ds.dropped_rows = dropped;
    ds.provenance = "csv:" + path;

    // Labels: sorted distinct strings define the class ids.
    if (!ds.schema.fitted) {
        std::vector<std::string> levels = raw_labels;
        std::sort(levels.begin(), levels.end());
        levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
        ds.schema.label_levels = std::move(levels);
    }
    ds.n_classes = ds.schema.n_classes();
    ds.labels.reserve(raw_labels.size());
    for (const auto& s : raw_labels) {
        const auto it = std::find(ds.schema.label_levels.begin(),
                                  ds.schema.label_levels.end(), s);
        if (it == ds.schema.label_levels.end()) {
            throw IoError(path + ": unseen label level '" + s + "'");
        }
        ds.labels.push_back(static_cast<int>(it - ds.schema.label_levels.begin()));
    }

    // Split before fitting so standardization sees the train rows only.
    auto splits = stratified_split(ds.labels, split);
    ds.train_idx = std::move(splits[0]);
    ds.val_idx = std::move(splits[1]);
    ds.test_idx = std::move(splits[2]);

    // Fit categorical level sets (over all kept rows, so every split is
    // encodable) and numeric statistics (train rows only).
    const int n = static_cast<int>(rows.size());
    if (!ds.schema.fitted) {
        for (std::size_t c = 0; c < ds.schema.columns.size(); ++c) {
            auto& col = ds.schema.columns[c];
            if (col.kind == ColumnKind::Categorical) {
                std::vector<std::string> levels;
                for (const auto& r : rows) levels.push_back(r[col_pos[c]]);
                std::sort(levels.begin(), levels.end());
                levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
                col.levels = std::move(levels);
            } else if (col.kind == ColumnKind::Numeric && ds.schema.standardize) {
                double mean = 0.0;
                for (int r : ds.train_idx) {
                    mean += parse_number(rows[r][col_pos[c]], file_rows[r], col.name);
                }
                mean /= static_cast<double>(ds.train_idx.size());
                double var = 0.0;
                for (int r : ds.train_idx) {
                    const double v = parse_number(rows[r][col_pos[c]], file_rows[r], col.name);
                    var += (v - mean) * (v - mean);
                }
                var /= static_cast<double>(ds.train_idx.size());
                col.mean = mean;
                col.stddev = var > 1e-24 ? std::sqrt(var) : 1.0;
            }
        }
        ds.schema.fitted = true;
    }

    // Encode: numeric/binary -> one column each, categorical -> one-hot
    // block; each declared column is one feature group.
    int raw_dim = 0;
    std::vector<std::vector<int>> groups;
    std::vector<std::string> names;
    for (const auto& col : ds.schema.columns) {
        const int width = col.kind == ColumnKind::Categorical
                              ? static_cast<int>(col.levels.size())
                              : 1;
        std::vector<int> g(width);
        std::iota(g.begin(), g.end(), raw_dim);
        groups.push_back(std::move(g));
        names.push_back(col.name);
        raw_dim += width;
    }

    ds.X = Matrix(n, raw_dim);
    for (int r = 0; r < n; ++r) {
        int d = 0;
        for (std::size_t c = 0; c < ds.schema.columns.size(); ++c) {
            const auto& col = ds.schema.columns[c];
            const std::string& cell = rows[r][col_pos[c]];
            switch (col.kind) {
                case ColumnKind::Numeric: {
                    double v = parse_number(cell, file_rows[r], col.name);
                    if (ds.schema.standardize) v = (v - col.mean) / col.stddev;
                    ds.X.at(r, d++) = v;
                    break;
                }
                case ColumnKind::Binary: {
                    const double v = parse_number(cell, file_rows[r], col.name);
                    if (v != 0.0 && v != 1.0) {
                        std::ostringstream os;
                        os << "row " << file_rows[r] << ", column " << col.name
                           << ": binary column holds '" << cell << "'";
                        throw IoError(os.str());
                    }
                    ds.X.at(r, d++) = v;
                    break;
                }
                case ColumnKind::Categorical: {
                    const auto it =
                        std::find(col.levels.begin(), col.levels.end(), cell);
                    if (it == col.levels.end()) {
                        std::ostringstream os;
                        os << "row " << file_rows[r] << ", column " << col.name
                           << ": unseen categorical level '" << cell << "'";
                        throw IoError(os.str());
                    }
                    for (std::size_t l = 0; l < col.levels.size(); ++l) {
                        ds.X.at(r, d++) = (static_cast<int>(l) == it - col.levels.begin())
                                              ? 1.0
                                              : 0.0;
                    }
                    break;
                }
            }
        }
    }

    FeaturePartition p;
    p.kind = PartitionKind::PerColumn;
    p.groups = std::move(groups);
    p.group_names = std::move(names);
    p.validate();
    ds.partition = std::move(p);
    return ds;
}

void write_delimited(const std::string& path, const Matrix& X,
                     const std::vector<int>& labels) {
    if (static_cast<int>(labels.size()) != X.rows) {
        throw std::invalid_argument("write_delimited: labels/rows mismatch");
    }
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    for (int j = 0; j < X.cols; ++j) out << "x" << j << ",";
    out << "label\n";
    char buf[64];
    for (int r = 0; r < X.rows; ++r) {
        for (int j = 0; j < X.cols; ++j) {
            std::snprintf(buf, sizeof buf, "%.17g", X.at(r, j));
            out << buf << ",";
        }
        out << labels[r] << "\n";
    }
    if (!out) throw IoError("write failed for " + path);
}

// ---------------------------------------------------------------------------
// IDX loader

namespace {

std::uint32_t read_u32_be(std::istream& in, const std::string& path) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw IoError(path + ": truncated IDX header");
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
           (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

}  // namespace

Dataset load_idx_images(const std::string& images_path, const std::string& labels_path,
                        int patch_size, const SplitSpec& split) {
    split.validate();
    std::ifstream img(images_path, std::ios::binary);
    if (!img) throw IoError("cannot open " + images_path);
    std::ifstream lab(labels_path, std::ios::binary);
    if (!lab) throw IoError("cannot open " + labels_path);

    const std::uint32_t img_magic = read_u32_be(img, images_path);
    if (img_magic != 0x00000803u) {
        std::ostringstream os;
        os << images_path << ": bad IDX image magic 0x" << std::hex << img_magic;
        throw IoError(os.str());
    }
    const int n = static_cast<int>(read_u32_be(img, images_path));
    const int rows = static_cast<int>(read_u32_be(img, images_path));
    const int cols = static_cast<int>(read_u32_be(img, images_path));
    if (rows != cols) {
        throw IoError(images_path + ": images are not square");
    }
    if (patch_size <= 0 || rows % patch_size != 0) {
        std::ostringstream os;
        os << images_path << ": side " << rows << " not divisible by patch size "
           << patch_size;
        throw IoError(os.str());
    }

    const std::uint32_t lab_magic = read_u32_be(lab, labels_path);
    if (lab_magic != 0x00000801u) {
        std::ostringstream os;
        os << labels_path << ": bad IDX label magic 0x" << std::hex << lab_magic;
        throw IoError(os.str());
    }
    const int n_labels = static_cast<int>(read_u32_be(lab, labels_path));
    if (n_labels != n) {
        throw IoError(labels_path + ": image/label counts disagree");
    }

    Dataset ds;
    ds.provenance = "idx:" + images_path + "+" + labels_path;
    ds.X = Matrix(n, rows * cols);
    std::vector<unsigned char> buf(static_cast<std::size_t>(rows) * cols);
    for (int i = 0; i < n; ++i) {
        img.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
        if (!img) throw IoError(images_path + ": truncated pixel data");
        for (std::size_t d = 0; d < buf.size(); ++d) {
            ds.X.at(i, static_cast<int>(d)) = buf[d] / 255.0;
        }
    }
    ds.labels.resize(n);
    int max_label = 0;
    for (int i = 0; i < n; ++i) {
        char b = 0;
        lab.read(&b, 1);
        if (!lab) throw IoError(labels_path + ": truncated label data");
        ds.labels[i] = static_cast<unsigned char>(b);
        max_label = std::max(max_label, ds.labels[i]);
    }
    ds.n_classes = max_label + 1;
    ds.partition = FeaturePartition::square_patches(rows, patch_size);

    auto splits = stratified_split(ds.labels, split);
    ds.train_idx = std::move(splits[0]);
    ds.val_idx = std::move(splits[1]);
    ds.test_idx = std::move(splits[2]);
    return ds;
}

// ---------------------------------------------------------------------------
// Token sequences

Dataset tokenize_sequences(const std::vector<TokenRecord>& records,
                           const std::string& alphabet, int max_primary,
                           int max_secondary, const SplitSpec& split) {
    split.validate();
    if (records.empty()) throw std::invalid_argument("tokenize_sequences: no records");
    if (alphabet.empty()) throw std::invalid_argument("tokenize_sequences: empty alphabet");
    if (max_primary < 1 || max_secondary < 0) {
        throw std::invalid_argument("tokenize_sequences: bad max lengths");
    }

    const int width = static_cast<int>(alphabet.size()) + 1;  // + PAD
    const int pad_code = static_cast<int>(alphabet.size());
    const int positions = max_primary + max_secondary;

    auto code_of = [&](char ch) {
        const std::size_t at = alphabet.find(ch);
        if (at == std::string::npos) {
            throw std::invalid_argument(std::string("tokenize_sequences: symbol '") + ch +
                                        "' not in alphabet");
        }
        return static_cast<int>(at);
    };

    Dataset ds;
    const int n = static_cast<int>(records.size());
    ds.X = Matrix(n, positions * width);
    ds.labels.reserve(n);
    int max_label = 0;
    for (int r = 0; r < n; ++r) {
        const auto& rec = records[r];
        if (static_cast<int>(rec.primary.size()) > max_primary) {
            throw std::invalid_argument("tokenize_sequences: primary sequence longer than " +
                                        std::to_string(max_primary));
        }
        if (static_cast<int>(rec.secondary.size()) > max_secondary) {
            throw std::invalid_argument(
                "tokenize_sequences: secondary sequence longer than " +
                std::to_string(max_secondary));
        }
        for (int pos = 0; pos < positions; ++pos) {
            int code = pad_code;
            if (pos < max_primary) {
                if (pos < static_cast<int>(rec.primary.size())) {
                    code = code_of(rec.primary[pos]);
                }
            } else {
                const int s = pos - max_primary;
                if (s < static_cast<int>(rec.secondary.size())) {
                    code = code_of(rec.secondary[s]);
                }
            }
            ds.X.at(r, pos * width + code) = 1.0;
        }
        ds.labels.push_back(rec.label);
        max_label = std::max(max_label, rec.label);
    }
    ds.n_classes = max_label + 1;
    ds.provenance = "tokens:" + std::to_string(n) + " records";

    std::vector<std::vector<int>> groups;
    std::vector<std::string> names;
    for (int pos = 0; pos < positions; ++pos) {
        std::vector<int> g(width);
        std::iota(g.begin(), g.end(), pos * width);
        groups.push_back(std::move(g));
        if (pos < max_primary) {
            names.push_back("p" + std::to_string(pos));
        } else {
            names.push_back("s" + std::to_string(pos - max_primary));
        }
    }
    FeaturePartition p;
    p.kind = PartitionKind::TokenSequence;
    p.sequence_length = positions;
    p.groups = std::move(groups);
    p.group_names = std::move(names);
    p.validate();
    ds.partition = std::move(p);

    auto splits = stratified_split(ds.labels, split);
    ds.train_idx = std::move(splits[0]);
    ds.val_idx = std::move(splits[1]);
    ds.test_idx = std::move(splits[2]);
    return ds;
}

std::pair<std::string, std::string> detokenize_row(const Dataset& data,
                                                   const std::string& alphabet,
                                                   int max_primary, int row) {
    const int width = static_cast<int>(alphabet.size()) + 1;
    const int pad_code = static_cast<int>(alphabet.size());
    const int positions = data.partition.n_groups();
    std::string primary, secondary;
    for (int pos = 0; pos < positions; ++pos) {
        int code = 0;
        for (int c = 1; c < width; ++c) {
            if (data.X.at(row, pos * width + c) > data.X.at(row, pos * width + code)) {
                code = c;
            }
        }
        if (code == pad_code) continue;
        if (pos < max_primary) {
            primary.push_back(alphabet[code]);
        } else {
            secondary.push_back(alphabet[code]);
        }
    }
    return {primary, secondary};
}

// ---------------------------------------------------------------------------
// Synthetic generators

double additive_g(int column_index, double x) {
    switch (column_index % 4) {
        case 0: return std::sin(x);
        case 1: return x * x / 4.0;
        case 2: return std::tanh(x);
        default: return std::fabs(x) - 1.0;
    }
}

Dataset generate(const SyntheticSpec& spec, const SplitSpec& split) {
    spec.validate();
    split.validate();
    Rng rng(spec.seed);
    const int n = spec.n_samples;
    const int d = spec.n_features;

    Dataset ds;
    ds.X = Matrix(n, d);
    ds.labels.resize(n);
    ds.n_classes = 2;
    std::ostringstream prov;
    prov << "synthetic:" << generator_name(spec.generator) << ":seed=" << spec.seed;
    ds.provenance = prov.str();

    switch (spec.generator) {
        case Generator::Xor: {
            // Rows cycle the four (x0,x1) patterns, so n=4 is exactly the
            // truth table; any further columns are random bits.
            for (int r = 0; r < n; ++r) {
                const int pattern = r % 4;
                ds.X.at(r, 0) = pattern & 1 ? 1.0 : 0.0;
                ds.X.at(r, 1) = pattern & 2 ? 1.0 : 0.0;
                for (int j = 2; j < d; ++j) {
                    ds.X.at(r, j) = rng.next_below(2) ? 1.0 : 0.0;
                }
                ds.labels[r] = (pattern & 1) ^ ((pattern >> 1) & 1);
            }
            break;
        }
        case Generator::Additive: {
            std::vector<double> y(n, 0.0);
            for (int r = 0; r < n; ++r) {
                for (int j = 0; j < d; ++j) {
                    const double x = rng.uniform(-2.0, 2.0);
                    ds.X.at(r, j) = x;
                    y[r] += additive_g(j, x);
                }
                if (spec.noise_std > 0.0) y[r] += rng.normal(0.0, spec.noise_std);
            }
            std::vector<double> sorted = y;
            std::nth_element(sorted.begin(), sorted.begin() + n / 2, sorted.end());
            const double median = sorted[n / 2];
            for (int r = 0; r < n; ++r) ds.labels[r] = y[r] > median ? 1 : 0;
            break;
        }
        case Generator::Interaction: {
            for (int r = 0; r < n; ++r) {
                for (int j = 0; j < d; ++j) ds.X.at(r, j) = rng.uniform(-1.0, 1.0);
                double y = ds.X.at(r, 0) * ds.X.at(r, 1);
                if (spec.noise_std > 0.0) y += rng.normal(0.0, spec.noise_std);
                ds.labels[r] = y > 0.0 ? 1 : 0;
            }
            break;
        }
        case Generator::PlantedRelevance: {
            const int relevant = d - spec.n_irrelevant;
            std::vector<double> w(relevant);
            for (int j = 0; j < relevant; ++j) {
                const double magnitude = 1.0 + rng.uniform();
                w[j] = rng.next_below(2) ? magnitude : -magnitude;
            }
            for (int r = 0; r < n; ++r) {
                double y = 0.0;
                for (int j = 0; j < d; ++j) {
                    const double x = rng.normal(0.0, 1.0);
                    ds.X.at(r, j) = x;
                    if (j < relevant) y += w[j] * x;
                }
                if (spec.noise_std > 0.0) y += rng.normal(0.0, spec.noise_std);
                ds.labels[r] = y > 0.0 ? 1 : 0;
            }
            break;
        }
    }

    ds.partition = FeaturePartition::per_column(d);
    auto splits = stratified_split(ds.labels, split);
    ds.train_idx = std::move(splits[0]);
    ds.val_idx = std::move(splits[1]);
    ds.test_idx = std::move(splits[2]);
    return ds;
}

}  // namespace flan
