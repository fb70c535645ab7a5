#include "safe/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

namespace safe {

Dataset::Dataset(std::vector<Column> columns, std::vector<std::uint8_t> labels)
    : columns_(std::move(columns)), labels_(std::move(labels)) {
    for (auto l : labels_) {
        if (l > 1) throw DataError("labels must be 0 or 1");
    }
    index_.reserve(columns_.size());
    for (std::size_t i = 0; i < columns_.size(); ++i) {
        const auto& c = columns_[i];
        if (c.name.empty()) throw DataError("column " + std::to_string(i) + " has an empty name");
        if (c.values.size() != labels_.size()) {
            throw DataError("column '" + c.name + "' has " + std::to_string(c.values.size()) +
                            " values, expected " + std::to_string(labels_.size()));
        }
        if (!index_.emplace(c.name, i).second) {
            throw DataError("duplicate column name '" + c.name + "'");
        }
    }
}

std::optional<std::size_t> Dataset::find(std::string_view name) const {
    auto it = index_.find(std::string(name));
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

std::size_t Dataset::index_of(std::string_view name) const {
    auto i = find(name);
    if (!i) throw DataError("unknown column '" + std::string(name) + "'");
    return *i;
}

std::span<const double> Dataset::values(std::string_view name) const {
    return columns_[index_of(name)].values;
}

std::vector<std::string> Dataset::names() const {
    std::vector<std::string> out;
    out.reserve(columns_.size());
    for (const auto& c : columns_) out.push_back(c.name);
    return out;
}

std::size_t Dataset::count_positive() const {
    return static_cast<std::size_t>(std::count(labels_.begin(), labels_.end(), 1));
}

bool Dataset::has_both_classes() const {
    const auto pos = count_positive();
    return pos > 0 && pos < labels_.size();
}

Dataset Dataset::take_rows(std::span<const std::size_t> rows) const {
    std::vector<Column> cols;
    cols.reserve(columns_.size());
    for (const auto& c : columns_) {
        Column out{c.name, {}};
        out.values.reserve(rows.size());
        for (auto r : rows) out.values.push_back(c.values.at(r));
        cols.push_back(std::move(out));
    }
    std::vector<std::uint8_t> labels;
    labels.reserve(rows.size());
    for (auto r : rows) labels.push_back(labels_.at(r));
    return Dataset(std::move(cols), std::move(labels));
}

Dataset Dataset::with_columns(std::vector<Column> columns) const {
    return Dataset(std::move(columns), labels_);
}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

std::optional<double> parse_real(std::string_view cell) {
    if (cell.empty()) return std::nullopt;
    if (cell.front() == '+') cell.remove_prefix(1);
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
    if (ec != std::errc() || ptr != cell.data() + cell.size()) return std::nullopt;
    if (!std::isfinite(v)) return std::nullopt;
    return v;
}

}  // namespace

std::vector<std::string> split_csv_line(std::string_view line) {
    std::vector<std::string> cells;
    std::string current;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char ch = line[i];
        if (quoted) {
            if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                current.push_back('"');
                ++i;
            } else if (ch == '"') {
                quoted = false;
            } else {
                current.push_back(ch);
            }
        } else if (ch == '"') {
            quoted = true;
        } else if (ch == ',') {
            cells.emplace_back(trim(current));
            current.clear();
        } else {
            current.push_back(ch);
        }
    }
    cells.emplace_back(trim(current));
    return cells;
}

std::string csv_field(std::string_view text) {
    const bool plain = text.find_first_of(",\"") == std::string_view::npos &&
                       (text.empty() || (text.front() != ' ' && text.back() != ' '));
    if (plain) return std::string(text);
    std::string out = "\"";
    for (char c : text) {
        if (c == '"') out.push_back('"');
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

std::string format_real(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

Dataset load_csv(const std::filesystem::path& path, std::string_view label_column,
                 MissingPolicy policy) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open '" + path.string() + "'");

    std::string line;
    if (!std::getline(in, line)) throw DataError("'" + path.string() + "' has no header row");
    if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
    const auto header = split_csv_line(line);

    std::size_t label_idx = header.size();
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (header[i] == label_column) label_idx = i;
    }
    if (label_idx == header.size()) {
        throw DataError("unknown label column '" + std::string(label_column) + "'");
    }

    const std::size_t width = header.size();
    std::vector<std::vector<double>> values(width);
    std::vector<std::vector<std::uint8_t>> observed(width);
    std::vector<std::uint8_t> labels;

    std::size_t row = 0;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        ++row;
        const auto cells = split_csv_line(line);
        if (cells.size() != width) {
            throw DataError("row " + std::to_string(row) + ": expected " + std::to_string(width) +
                            " cells, found " + std::to_string(cells.size()));
        }
        for (std::size_t c = 0; c < width; ++c) {
            const auto v = parse_real(cells[c]);
            if (c == label_idx) {
                if (!v || (*v != 0.0 && *v != 1.0)) {
                    throw DataError("row " + std::to_string(row) + ", column '" + header[c] +
                                    "': label '" + cells[c] + "' is not 0 or 1");
                }
                labels.push_back(static_cast<std::uint8_t>(*v));
                continue;
            }
            if (!v && policy == MissingPolicy::reject) {
                throw DataError("row " + std::to_string(row) + ", column '" + header[c] +
                                "': missing or non-numeric value '" + cells[c] + "'");
            }
            values[c].push_back(v.value_or(0.0));
            observed[c].push_back(v ? 1 : 0);
        }
    }

    std::vector<Column> columns;
    for (std::size_t c = 0; c < width; ++c) {
        if (c == label_idx) continue;
        auto& col = values[c];
        const auto& seen = observed[c];
        const auto n_seen = static_cast<std::size_t>(std::count(seen.begin(), seen.end(), 1));
        if (n_seen != col.size()) {
            if (n_seen == 0) throw DataError("column '" + header[c] + "' has no observed values");
            double sum = 0.0;
            for (std::size_t r = 0; r < col.size(); ++r) {
                if (seen[r]) sum += col[r];
            }
            const double mean = sum / static_cast<double>(n_seen);
            for (std::size_t r = 0; r < col.size(); ++r) {
                if (!seen[r]) col[r] = mean;
            }
        }
        columns.push_back(Column{header[c], std::move(col)});
    }
    return Dataset(std::move(columns), std::move(labels));
}

void write_csv(const Dataset& d, const std::filesystem::path& path, std::string_view label_column) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write '" + path.string() + "'");
    for (const auto& c : d.columns()) out << csv_field(c.name) << ',';
    out << csv_field(label_column) << '\n';
    const auto labels = d.labels();
    for (std::size_t r = 0; r < d.n_rows(); ++r) {
        for (const auto& c : d.columns()) out << format_real(c.values[r]) << ',';
        out << static_cast<int>(labels[r]) << '\n';
    }
}

// ---------------------------------------------------------------------------
// Splitting

void SplitSpec::validate() const {
    for (double f : {train_fraction, valid_fraction, test_fraction}) {
        if (!(f >= 0.0 && f <= 1.0)) throw DataError("split fractions must lie in [0, 1]");
    }
    if (std::abs(train_fraction + valid_fraction + test_fraction - 1.0) > 1e-9) {
        throw DataError("split fractions must sum to 1");
    }
}

std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed) {
    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    // mt19937_64 output is fixed by the standard; the bounded draw below is
    // ours so the permutation does not depend on the library's distributions.
    std::mt19937_64 gen(seed);
    for (std::size_t i = n; i > 1; --i) {
        const std::uint64_t bound = i;
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
        std::uint64_t draw = gen();
        while (draw >= limit) draw = gen();
        std::swap(perm[i - 1], perm[draw % bound]);
    }
    return perm;
}

SplitIndices split_indices(std::size_t n_rows, const SplitSpec& spec, SplitRequirement required) {
    spec.validate();
    if (n_rows < 3) throw DataError("split needs at least 3 rows");
    const auto n = static_cast<double>(n_rows);
    const auto n_valid = static_cast<std::size_t>(std::floor(n * spec.valid_fraction + 1e-9));
    const auto n_test = static_cast<std::size_t>(std::floor(n * spec.test_fraction + 1e-9));
    const std::size_t n_train = n_rows - n_valid - n_test;

    const auto perm = seeded_permutation(n_rows, spec.seed);
    SplitIndices out;
    out.train.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_train));
    out.valid.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_train),
                     perm.begin() + static_cast<std::ptrdiff_t>(n_train + n_valid));
    out.test.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_train + n_valid), perm.end());

    if (required.train && out.train.empty()) throw DataError("split produced an empty train set");
    if (required.valid && out.valid.empty()) throw DataError("split produced an empty validation set");
    if (required.test && out.test.empty()) throw DataError("split produced an empty test set");
    return out;
}

std::array<Dataset, 3> split(const Dataset& d, const SplitSpec& spec, SplitRequirement required) {
    const auto idx = split_indices(d.n_rows(), spec, required);
    return {d.take_rows(idx.train), d.take_rows(idx.valid), d.take_rows(idx.test)};
}

ColumnStats column_stats(const Dataset& d, std::string_view name) {
    const auto v = d.values(name);
    ColumnStats s;
    if (v.empty()) return s;
    double sum = 0.0;
    for (double x : v) sum += x;
    s.mean = sum / static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - s.mean) * (x - s.mean);
    s.stdev = std::sqrt(ss / static_cast<double>(v.size()));
    auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    s.min = *lo;
    s.max = *hi;
    // Rounded summation can push the mean a hair outside [min, max].
    s.mean = std::clamp(s.mean, s.min, s.max);
    std::vector<double> sorted(v.begin(), v.end());
    std::sort(sorted.begin(), sorted.end());
    s.distinct_count = static_cast<std::size_t>(std::unique(sorted.begin(), sorted.end()) - sorted.begin());
    return s;
}

}  // namespace safe
