#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace safe {

/// Raised for malformed input data and violated dataset invariants.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Column {
    std::string name;
    std::vector<double> values;
};

/// Columnar numeric feature matrix with a binary label vector.
///
/// Immutable after construction. Column names are unique and non-empty and
/// every column has exactly n_rows() values.
class Dataset {
public:
    Dataset() = default;
    Dataset(std::vector<Column> columns, std::vector<std::uint8_t> labels);

    std::size_t n_rows() const { return labels_.size(); }
    std::size_t n_features() const { return columns_.size(); }

    const std::vector<Column>& columns() const { return columns_; }
    const Column& column(std::size_t i) const { return columns_.at(i); }
    std::span<const std::uint8_t> labels() const { return labels_; }

    std::optional<std::size_t> find(std::string_view name) const;
    /// Throws DataError naming the column if it is absent.
    std::size_t index_of(std::string_view name) const;
    std::span<const double> values(std::string_view name) const;
    std::vector<std::string> names() const;

    std::size_t count_positive() const;
    bool has_both_classes() const;

    /// Rows in the given order, all columns.
    Dataset take_rows(std::span<const std::size_t> rows) const;
    /// Same labels, replaced feature columns.
    Dataset with_columns(std::vector<Column> columns) const;

private:
    std::vector<Column> columns_;
    std::vector<std::uint8_t> labels_;
    std::unordered_map<std::string, std::size_t> index_;
};

enum class MissingPolicy { reject, impute_mean };

Dataset load_csv(const std::filesystem::path& path, std::string_view label_column,
                 MissingPolicy policy = MissingPolicy::reject);

/// Writes features followed by the label column. Reals are printed in their
/// shortest round-trip form so load_csv recovers them bit-exactly.
void write_csv(const Dataset& d, const std::filesystem::path& path,
               std::string_view label_column);

/// Parses a single CSV line into raw cells. Surrounding whitespace and one
/// level of double quotes are stripped.
std::vector<std::string> split_csv_line(std::string_view line);

/// Quotes a CSV field when it contains a comma, quote or leading/trailing
/// space.
std::string csv_field(std::string_view text);

/// Shortest decimal text that parses back to exactly the same double.
std::string format_real(double v);

struct SplitSpec {
    double train_fraction = 0.8;
    double valid_fraction = 0.0;
    double test_fraction = 0.2;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Which of (train, valid, test) must come out non-empty.
struct SplitRequirement {
    bool train = true;
    bool valid = false;
    bool test = false;
};

struct SplitIndices {
    std::vector<std::size_t> train, valid, test;
};

/// Seeded permutation of [0, n); identical for identical (n, seed) on every
/// platform.
std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed);

/// valid and test sizes are floor(N * fraction); the remainder goes to train.
SplitIndices split_indices(std::size_t n_rows, const SplitSpec& spec,
                           SplitRequirement required = {});

std::array<Dataset, 3> split(const Dataset& d, const SplitSpec& spec,
                             SplitRequirement required = {});

struct ColumnStats {
    double mean = 0.0;
    double stdev = 0.0;  // population
    double min = 0.0;
    double max = 0.0;
    std::size_t distinct_count = 0;
};

ColumnStats column_stats(const Dataset& d, std::string_view name);

}  // namespace safe
