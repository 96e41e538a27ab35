#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "uqkit/data.hpp"
#include "uqkit/error.hpp"
#include "uqkit/format.hpp"
#include "uqkit/random.hpp"

#include <algorithm>
#include <cmath>
#include <set>

using namespace uqkit;

namespace {

ErrorCode code_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected an uqkit::Error");
    return ErrorCode::InvalidArgument;
}

}  // namespace

TEST_CASE("three finite rows load with d = columns - 2") {
    const auto r = parse_csv_dataset("id,a,b,y\nr1,1,2,3\nr2,4,5,6\nr3,7,8.5e-1,9\n", "y", "id");
    CHECK(r.data.size() == 3);
    CHECK(r.data.dims() == 2);
    CHECK(r.dropped_rows == 0);
    CHECK(r.data.feature_names == std::vector<std::string>{"a", "b"});
    CHECK(r.data.features(2, 1) == 0.85);
    CHECK(r.data.targets(1) == 6.0);
    CHECK(r.data.ids[0] == "r1");
}

TEST_CASE("non-finite target drops the row and counts it") {
    const auto r = parse_csv_dataset("id,a,y\nr1,1,2\nr2,3,NaN\nr3,5,inf\nr4,7,\n", "y", "id");
    CHECK(r.data.size() == 1);
    CHECK(r.dropped_rows == 3);
}

TEST_CASE("error contracts") {
    CHECK(code_of([] { parse_csv_dataset("id,a,b\nr,1,2\n", "y", "id"); }) == ErrorCode::MissingColumn);
    CHECK(code_of([] { parse_csv_dataset("name,a,y\nr,1,2\n", "y", "id"); }) == ErrorCode::MissingColumn);
    CHECK(code_of([] { parse_csv_dataset("id,a,y\nr,abc,2\n", "y", "id"); }) == ErrorCode::UnparseableNumeric);
    CHECK(code_of([] { parse_csv_dataset("id,a,y\nr,1,nan\n", "y", "id"); }) == ErrorCode::EmptyDataset);
    CHECK(code_of([] { parse_csv_dataset("", "y", "id"); }) == ErrorCode::EmptyDataset);
    CHECK(code_of([] { load_dataset("/nonexistent/file.csv", "y", "id"); }) == ErrorCode::IoError);
}

TEST_CASE("quoted fields, CRLF and BOM") {
    const auto r = parse_csv_dataset("\xEF\xBB\xBFid,a,y\r\n\"x,1\",+1.5,2\r\n", "y", "id");
    REQUIRE(r.data.size() == 1);
    CHECK(r.data.ids[0] == "x,1");
    CHECK(r.data.features(0, 0) == 1.5);
}

TEST_CASE("JSON ingestion matches CSV") {
    const auto j = parse_json_dataset(
        R"({"ids":["a","b"],"feature_names":["f"],"features":[[1.0],[null]],"targets":[3,4],"unit":"eV"})");
    CHECK(j.data.size() == 1);
    CHECK(j.dropped_rows == 1);
    CHECK(j.data.unit == "eV");
    const auto c = parse_csv_dataset("id,f,target\na,1,3\n", "target", "id");
    CHECK(canonical_csv(j.data) == canonical_csv(c.data));
}

TEST_CASE("ingestion is idempotent") {
    const std::string text = "id,a,b,y\nr1,0.1,2,3\nr2,1e-300,5,6\n";
    const auto a = parse_csv_dataset(text, "y", "id");
    const auto b = parse_csv_dataset(text, "y", "id");
    CHECK(canonical_csv(a.data) == canonical_csv(b.data));
    CHECK(dataset_hash(a.data) == dataset_hash(b.data));
    CHECK(dataset_hash(a.data).size() == 64);
}

TEST_CASE("format_double round-trips") {
    Rng rng(5);
    for (int i = 0; i < 1000; ++i) {
        const double v = std::ldexp(rng.uniform(-1.0, 1.0), static_cast<int>(rng.index(200)) - 100);
        CHECK(parse_double(format_double(v)).value() == v);
    }
    CHECK(format_double(0.1) == "0.1");
    CHECK(!parse_double("1.0x").has_value());
    CHECK(!parse_double("").has_value());
}

TEST_CASE("split sizes") {
    auto two = make_split(100, SplitKind::TwoWay, 7);
    CHECK(two.partitions[0].size() == 90);
    CHECK(two.partitions[1].size() == 10);
    auto three = make_split(100, SplitKind::ThreeWay, 7);
    CHECK(three.partitions[0].size() == 45);
    CHECK(three.partitions[1].size() == 45);
    CHECK(three.partitions[2].size() == 10);
    CHECK(code_of([] { make_split(9, SplitKind::TwoWay, 0); }) == ErrorCode::TooFewSamples);
}

TEST_CASE("split is deterministic and the held-out slice agrees across kinds") {
    const auto a = make_split(137, SplitKind::ThreeWay, 11);
    const auto b = make_split(137, SplitKind::ThreeWay, 11);
    CHECK(a.partitions == b.partitions);
    const auto two = make_split(137, SplitKind::TwoWay, 11);
    CHECK(two.partitions[1] == a.partitions[2]);
    CHECK(make_split(137, SplitKind::TwoWay, 12).partitions != two.partitions);
}

TEST_CASE("partitions are disjoint, exhaustive and within one of their fractions") {
    for (std::size_t n = 10; n <= 400; n += 7) {
        for (auto kind : {SplitKind::TwoWay, SplitKind::ThreeWay}) {
            for (std::uint64_t seed : {0ULL, 1ULL, 99ULL}) {
                const auto plan = make_split(n, kind, seed);
                std::vector<int> all;
                for (const auto& p : plan.partitions) all.insert(all.end(), p.begin(), p.end());
                std::sort(all.begin(), all.end());
                REQUIRE(all.size() == n);
                for (std::size_t i = 0; i < n; ++i) CHECK(all[i] == static_cast<int>(i));
                for (std::size_t k = 0; k < plan.partitions.size(); ++k) {
                    const double expect = plan.fractions[k] * static_cast<double>(n);
                    CHECK(std::abs(static_cast<double>(plan.partitions[k].size()) - expect) <= 1.0);
                }
                CHECK(plan.partitions.back().size() == static_cast<std::size_t>(std::lround(0.1 * n)));
            }
        }
    }
}

TEST_CASE("shuffled input rows keep partition sizes") {
    std::string text = "id,a,y\n";
    for (int i = 0; i < 50; ++i) text += "r" + std::to_string(i) + "," + std::to_string(i) + "," + std::to_string(2 * i) + "\n";
    std::string shuffled = "id,a,y\n";
    std::vector<int> order(50);
    for (int i = 0; i < 50; ++i) order[static_cast<std::size_t>(i)] = (i * 17) % 50;
    for (int i : order) shuffled += "r" + std::to_string(i) + "," + std::to_string(i) + "," + std::to_string(2 * i) + "\n";
    const auto a = parse_csv_dataset(text, "y", "id").data;
    const auto b = parse_csv_dataset(shuffled, "y", "id").data;
    const auto pa = make_split(a.size(), SplitKind::ThreeWay, 3);
    const auto pb = make_split(b.size(), SplitKind::ThreeWay, 3);
    std::set<std::string> ma, mb;
    for (int r : pa.partitions[2]) ma.insert(a.ids[static_cast<std::size_t>(r)]);
    for (int r : pb.partitions[2]) mb.insert(b.ids[static_cast<std::size_t>(r)]);
    for (std::size_t k = 0; k < 3; ++k) CHECK(pa.partitions[k].size() == pb.partitions[k].size());
    CHECK(ma != mb);
}

TEST_CASE("subset and select_features") {
    const auto d = parse_csv_dataset("id,a,b,y\nr1,1,2,3\nr2,4,5,6\nr3,7,8,9\n", "y", "id").data;
    const auto s = d.subset({2, 0});
    CHECK(s.ids == std::vector<std::string>{"r3", "r1"});
    CHECK(s.targets(0) == 9.0);
    const auto f = d.select_features({"b"});
    CHECK(f.dims() == 1);
    CHECK(f.features(1, 0) == 5.0);
    CHECK(code_of([&] { d.select_features({"zz"}); }) == ErrorCode::MissingColumn);
}
