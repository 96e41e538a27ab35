#include "uqkit/data.hpp"

#include "uqkit/error.hpp"
#include "uqkit/format.hpp"
#include "uqkit/hash.hpp"
#include "uqkit/random.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_map>

namespace uqkit {

namespace {

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::IoError, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

std::vector<std::string> split_csv_line(std::string_view line) {
    std::vector<std::string> fields;
    std::string current;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    current += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                current += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(std::move(current));
            current.clear();
        } else {
            current += c;
        }
    }
    fields.push_back(std::move(current));
    return fields;
}

namespace {

std::string trim(std::string s) {
    const auto first = s.find_first_not_of(" \t");
    if (first == std::string::npos) return {};
    const auto last = s.find_last_not_of(" \t");
    return s.substr(first, last - first + 1);
}

bool is_missing_token(const std::string& s) {
    return s.empty();
}

}  // namespace

Dataset Dataset::subset(const std::vector<int>& rows) const {
    Dataset out;
    out.feature_names = feature_names;
    out.unit = unit;
    out.features.resize(static_cast<Eigen::Index>(rows.size()), features.cols());
    out.targets.resize(static_cast<Eigen::Index>(rows.size()));
    out.ids.reserve(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto r = rows[i];
        require(r >= 0 && static_cast<std::size_t>(r) < size(), ErrorCode::InvalidArgument,
                "subset row index out of range");
        out.ids.push_back(ids[static_cast<std::size_t>(r)]);
        out.features.row(static_cast<Eigen::Index>(i)) = features.row(r);
        out.targets(static_cast<Eigen::Index>(i)) = targets(r);
    }
    return out;
}

Dataset Dataset::select_features(const std::vector<std::string>& names) const {
    std::unordered_map<std::string, Eigen::Index> index;
    for (std::size_t j = 0; j < feature_names.size(); ++j) {
        index.emplace(feature_names[j], static_cast<Eigen::Index>(j));
    }
    Dataset out;
    out.ids = ids;
    out.unit = unit;
    out.targets = targets;
    out.feature_names = names;
    out.features.resize(features.rows(), static_cast<Eigen::Index>(names.size()));
    for (std::size_t j = 0; j < names.size(); ++j) {
        auto it = index.find(names[j]);
        if (it == index.end()) fail(ErrorCode::MissingColumn, "unknown feature: " + names[j]);
        out.features.col(static_cast<Eigen::Index>(j)) = features.col(it->second);
    }
    return out;
}

void Dataset::validate() const {
    const auto n = static_cast<Eigen::Index>(ids.size());
    require(features.rows() == n && targets.size() == n, ErrorCode::InvalidArgument,
            "dataset ids, feature rows and targets differ in length");
    require(features.cols() == static_cast<Eigen::Index>(feature_names.size()), ErrorCode::InvalidArgument,
            "feature_names length differs from feature columns");
    std::set<std::string> unique(feature_names.begin(), feature_names.end());
    require(unique.size() == feature_names.size(), ErrorCode::InvalidArgument, "duplicate feature names");
    require(features.allFinite() && targets.allFinite(), ErrorCode::InvalidArgument,
            "non-finite values in dataset");
}

LoadResult parse_csv_dataset(const std::string& text, const std::string& target_column,
                             const std::string& id_column, const std::string& unit) {
    std::istringstream in(text);
    std::string line;
    std::vector<std::string> header;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (header.empty() && line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
        header = split_csv_line(line);
        break;
    }
    if (header.empty()) fail(ErrorCode::EmptyDataset, "CSV has no header row");
    for (auto& h : header) h = trim(h);

    int id_idx = -1;
    int target_idx = -1;
    for (std::size_t j = 0; j < header.size(); ++j) {
        if (header[j] == id_column) id_idx = static_cast<int>(j);
        if (header[j] == target_column) target_idx = static_cast<int>(j);
    }
    if (id_idx < 0) fail(ErrorCode::MissingColumn, "missing id column: " + id_column);
    if (target_idx < 0) fail(ErrorCode::MissingColumn, "missing target column: " + target_column);

    std::vector<int> feature_cols;
    LoadResult result;
    for (std::size_t j = 0; j < header.size(); ++j) {
        if (static_cast<int>(j) == id_idx || static_cast<int>(j) == target_idx) continue;
        feature_cols.push_back(static_cast<int>(j));
        result.data.feature_names.push_back(header[j]);
    }
    {
        std::set<std::string> unique(result.data.feature_names.begin(), result.data.feature_names.end());
        require(unique.size() == result.data.feature_names.size(), ErrorCode::InvalidArgument,
                "duplicate feature column names");
    }

    std::vector<double> values;
    std::vector<double> targets;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        ++row;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto fields = split_csv_line(line);
        if (fields.size() != header.size()) {
            fail(ErrorCode::ParseError, "row " + std::to_string(row) + " has " + std::to_string(fields.size()) +
                                            " fields, expected " + std::to_string(header.size()));
        }
        bool finite = true;
        std::vector<double> row_values;
        row_values.reserve(feature_cols.size());
        auto parse_field = [&](int col) {
            auto field = trim(fields[static_cast<std::size_t>(col)]);
            if (is_missing_token(field)) {
                finite = false;
                return 0.0;
            }
            auto v = parse_double(field);
            if (!v) {
                fail(ErrorCode::UnparseableNumeric,
                     "unparseable numeric at row " + std::to_string(row) + ", column " + header[static_cast<std::size_t>(col)]);
            }
            if (!std::isfinite(*v)) finite = false;
            return *v;
        };
        for (int col : feature_cols) row_values.push_back(parse_field(col));
        const double y = parse_field(target_idx);
        if (!finite) {
            ++result.dropped_rows;
            continue;
        }
        result.data.ids.push_back(trim(fields[static_cast<std::size_t>(id_idx)]));
        values.insert(values.end(), row_values.begin(), row_values.end());
        targets.push_back(y);
    }
    if (targets.empty()) fail(ErrorCode::EmptyDataset, "no usable rows");

    const auto n = static_cast<Eigen::Index>(targets.size());
    const auto d = static_cast<Eigen::Index>(feature_cols.size());
    result.data.features = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        values.data(), n, d);
    result.data.targets = Eigen::Map<Eigen::VectorXd>(targets.data(), n);
    result.data.unit = unit;
    return result;
}

LoadResult parse_json_dataset(const std::string& text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::ParseError, std::string("dataset JSON: ") + e.what());
    }
    for (const char* key : {"ids", "feature_names", "features", "targets"}) {
        if (!doc.contains(key)) fail(ErrorCode::MissingColumn, std::string("dataset JSON missing key: ") + key);
    }
    LoadResult result;
    auto ids = doc["ids"].get<std::vector<std::string>>();
    auto names = doc["feature_names"].get<std::vector<std::string>>();
    const auto& rows = doc["features"];
    const auto& ys = doc["targets"];
    require(rows.is_array() && ys.is_array() && rows.size() == ids.size() && ys.size() == ids.size(),
            ErrorCode::ParseError, "dataset JSON arrays differ in length");

    auto as_number = [](const nlohmann::json& v, std::size_t r, const std::string& col) {
        if (v.is_number()) return v.get<double>();
        if (v.is_null()) return std::nan("");
        if (v.is_string()) {
            if (auto p = parse_double(v.get<std::string>())) return *p;
        }
        fail(ErrorCode::UnparseableNumeric, "unparseable numeric at row " + std::to_string(r + 1) + ", column " + col);
    };

    std::vector<double> values;
    std::vector<double> targets;
    for (std::size_t r = 0; r < ids.size(); ++r) {
        require(rows[r].is_array() && rows[r].size() == names.size(), ErrorCode::ParseError,
                "feature row " + std::to_string(r + 1) + " has wrong width");
        std::vector<double> row_values;
        bool finite = true;
        for (std::size_t j = 0; j < names.size(); ++j) {
            row_values.push_back(as_number(rows[r][j], r, names[j]));
            finite = finite && std::isfinite(row_values.back());
        }
        const double y = as_number(ys[r], r, "targets");
        if (!finite || !std::isfinite(y)) {
            ++result.dropped_rows;
            continue;
        }
        result.data.ids.push_back(ids[r]);
        values.insert(values.end(), row_values.begin(), row_values.end());
        targets.push_back(y);
    }
    if (targets.empty()) fail(ErrorCode::EmptyDataset, "no usable rows");
    const auto n = static_cast<Eigen::Index>(targets.size());
    const auto d = static_cast<Eigen::Index>(names.size());
    result.data.feature_names = std::move(names);
    result.data.features = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        values.data(), n, d);
    result.data.targets = Eigen::Map<Eigen::VectorXd>(targets.data(), n);
    result.data.unit = doc.value("unit", std::string());
    result.data.validate();
    return result;
}

LoadResult load_dataset(const std::filesystem::path& path, const std::string& target_column,
                        const std::string& id_column, const std::string& unit) {
    if (!std::filesystem::exists(path)) fail(ErrorCode::IoError, "file not found: " + path.string());
    const auto text = read_file(path);
    auto ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".json") {
        auto result = parse_json_dataset(text);
        if (!unit.empty()) result.data.unit = unit;
        return result;
    }
    return parse_csv_dataset(text, target_column, id_column, unit);
}

std::string canonical_csv(const Dataset& data) {
    std::string out = "id";
    for (const auto& name : data.feature_names) out += "," + name;
    out += ",target\n";
    for (std::size_t i = 0; i < data.size(); ++i) {
        out += data.ids[i];
        const auto r = static_cast<Eigen::Index>(i);
        for (Eigen::Index j = 0; j < data.features.cols(); ++j) out += "," + format_double(data.features(r, j));
        out += "," + format_double(data.targets(r)) + "\n";
    }
    return out;
}

std::string dataset_hash(const Dataset& data) { return sha256_hex(canonical_csv(data)); }

std::string to_string(SplitKind kind) { return kind == SplitKind::TwoWay ? "two_way" : "three_way"; }

SplitPlan make_split(std::size_t n, SplitKind kind, std::uint64_t seed) {
    if (n < 10) fail(ErrorCode::TooFewSamples, "split needs at least 10 samples, got " + std::to_string(n));
    SplitPlan plan;
    plan.kind = kind;
    plan.seed = seed;

    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    Rng rng(derive_seed(seed, 0x5b1e));
    rng.shuffle(perm);

    const auto held_out = static_cast<std::size_t>(std::lround(0.10 * static_cast<double>(n)));
    auto slice = [&](std::size_t begin, std::size_t end) {
        std::vector<int> part(perm.begin() + static_cast<std::ptrdiff_t>(begin),
                              perm.begin() + static_cast<std::ptrdiff_t>(end));
        std::sort(part.begin(), part.end());
        return part;
    };

    if (kind == SplitKind::TwoWay) {
        plan.fractions = {0.9, 0.1};
        plan.partitions = {slice(held_out, n), slice(0, held_out)};
    } else {
        plan.fractions = {0.45, 0.45, 0.10};
        const std::size_t rest = n - held_out;
        const std::size_t first = (rest + 1) / 2;
        plan.partitions = {slice(held_out, held_out + first), slice(held_out + first, n), slice(0, held_out)};
    }
    return plan;
}

}  // namespace uqkit
