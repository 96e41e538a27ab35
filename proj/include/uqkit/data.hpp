#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace uqkit {

// Id-indexed feature matrix plus targets. Immutable by convention after
// ingestion; subsets are copies.
struct Dataset {
    std::vector<std::string> ids;
    std::vector<std::string> feature_names;
    Eigen::MatrixXd features;  // n x d
    Eigen::VectorXd targets;   // n
    std::string unit;

    std::size_t size() const { return ids.size(); }
    std::size_t dims() const { return feature_names.size(); }

    Dataset subset(const std::vector<int>& rows) const;
    Dataset select_features(const std::vector<std::string>& names) const;

    // Throws InvalidArgument if the shape/uniqueness/finiteness invariants fail.
    void validate() const;
};

struct LoadResult {
    Dataset data;
    std::size_t dropped_rows = 0;
};

// CSV (comma-separated, one header row) or JSON, chosen by file extension.
LoadResult load_dataset(const std::filesystem::path& path, const std::string& target_column,
                        const std::string& id_column, const std::string& unit = "");

LoadResult parse_csv_dataset(const std::string& text, const std::string& target_column,
                             const std::string& id_column, const std::string& unit = "");

LoadResult parse_json_dataset(const std::string& text);

// RFC 4180-ish field splitter: double quotes may wrap a field and "" escapes a quote.
std::vector<std::string> split_csv_line(std::string_view line);

// Canonical CSV bytes of a dataset (header id,<features...>,target; %.17g).
std::string canonical_csv(const Dataset& data);

// SHA-256 hex digest over canonical_csv().
std::string dataset_hash(const Dataset& data);

enum class SplitKind { TwoWay, ThreeWay };

// Seeded permutation sliced into contiguous partitions. The held-out slice
// (TwoWay test, ThreeWay validation) is always taken from the front of the
// permutation, so both kinds with the same (n, seed) hold out the same rows.
struct SplitPlan {
    SplitKind kind = SplitKind::TwoWay;
    std::vector<double> fractions;
    std::uint64_t seed = 0;
    std::vector<std::vector<int>> partitions;  // TwoWay: {train, test}; ThreeWay: {base, error, validation}
};

SplitPlan make_split(std::size_t n, SplitKind kind, std::uint64_t seed);

std::string to_string(SplitKind kind);

}  // namespace uqkit
