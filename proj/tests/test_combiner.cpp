#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "safe/combiner.hpp"
#include "oracles.hpp"
#include "synthetic.hpp"

using namespace safe;
using namespace safe::combiner;
using gbdt::TreeEnsemble;
using gbdt::TreeNode;

namespace {

TreeNode split(int f, double v, int l, int r) {
    TreeNode n;
    n.feature = f;
    n.split_value = v;
    n.left = l;
    n.right = r;
    return n;
}

TreeNode leaf() { return TreeNode{}; }

/// Root x1; both children split on x2; below them x3 and x4.
TreeEnsemble fig2_ensemble() {
    gbdt::Tree t;
    t.nodes = {split(0, 0.0, 1, 2),  split(1, 1.0, 3, 4),  split(1, 1.0, 5, 6), split(2, 2.0, 7, 8),
               split(3, 3.0, 9, 10), split(2, 2.0, 11, 12), split(3, 3.0, 13, 14)};
    for (int i = 0; i < 8; ++i) t.nodes.push_back(leaf());
    TreeEnsemble e;
    e.trees.push_back(t);
    e.feature_names = {"x1", "x2", "x3", "x4"};
    return e;
}

std::vector<std::size_t> features_of(const Path& p) {
    std::vector<std::size_t> out;
    for (const auto& it : p) out.push_back(it.feature);
    return out;
}

}  // namespace

TEST_CASE("paths of the Fig. 2 shaped tree") {
    const auto p = extract_paths(fig2_ensemble());
    REQUIRE(p.size() == 2);
    CHECK(features_of(p.paths[0]) == std::vector<std::size_t>{0, 1, 2});
    CHECK(features_of(p.paths[1]) == std::vector<std::size_t>{0, 1, 3});
    CHECK(p.paths[0][2].split_values == std::vector<double>{2.0});
}

TEST_CASE("single split tree gives one path") {
    gbdt::Tree t;
    t.nodes = {split(0, 0.5, 1, 2), leaf(), leaf()};
    TreeEnsemble e;
    e.trees = {t};
    const auto p = extract_paths(e);
    REQUIRE(p.size() == 1);
    CHECK(p.paths[0] == Path{PathItem{0, {0.5}}});
}

TEST_CASE("repeated feature on one route merges split values") {
    gbdt::Tree t;
    t.nodes = {split(0, 1.0, 1, 2), leaf(), split(0, 2.0, 3, 4), leaf(), leaf()};
    TreeEnsemble e;
    e.trees = {t};
    const auto p = extract_paths(e);
    // Root is a leaf parent too: its path is [(a,{1})]; the deeper one [(a,{1,2})].
    bool found = false;
    for (const auto& path : p.paths) {
        if (path == Path{PathItem{0, {1.0, 2.0}}}) found = true;
    }
    CHECK(found);
}

TEST_CASE("single-leaf trees have no paths") {
    gbdt::Tree t;
    t.nodes = {leaf()};
    TreeEnsemble e;
    e.trees = {t, t};
    CHECK(extract_paths(e).empty());
}

TEST_CASE("enumerate_combinations: subsets merged across paths") {
    PathSet ps;
    ps.paths = {Path{PathItem{0, {1}}, PathItem{1, {2}}, PathItem{2, {3}}},
                Path{PathItem{0, {5}}, PathItem{1, {2}}, PathItem{3, {4}}}};
    const auto combos = enumerate_combinations(ps, 2);
    std::vector<std::vector<std::size_t>> got;
    for (const auto& c : combos) got.push_back(c.features);
    const std::vector<std::vector<std::size_t>> want{{0}, {1}, {2}, {3}, {0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}};
    CHECK(got == want);
    // Split values of a are unioned across both paths.
    CHECK(combos[0].split_values[0] == std::vector<double>{1, 5});
    CHECK(combos[4].cell_count() == 3 * 2);
}

TEST_CASE("enumerate_combinations edge cases") {
    CHECK(enumerate_combinations(PathSet{}, 2).empty());
    PathSet one;
    one.paths = {Path{PathItem{0, {1}}}};
    const auto c = enumerate_combinations(one, 2);
    REQUIRE(c.size() == 1);
    CHECK(c[0].features == std::vector<std::size_t>{0});
}

TEST_CASE("partition boundary convention") {
    const Dataset d({Column{"a", {0.2, 0.5, 0.9}}}, {0, 1, 1});
    FeatureCombination c;
    c.features = {0};
    c.split_values = {{0.5}};
    CHECK(partition_cells(d, c) == std::vector<std::uint64_t>{0, 1, 1});
    c.split_values = {{}};
    CHECK(partition_cells(d, c) == std::vector<std::uint64_t>{0, 0, 0});
}

TEST_CASE("two features with one split each give four cells") {
    const Dataset d({Column{"a", {0, 0, 1, 1}}, Column{"b", {0, 1, 0, 1}}}, {0, 1, 1, 0});
    FeatureCombination c;
    c.features = {0, 1};
    c.split_values = {{0.5}, {0.5}};
    CHECK(c.cell_count() == 4);
    const auto cells = partition_cells(d, c);
    std::vector<std::uint64_t> sorted = cells;
    std::sort(sorted.begin(), sorted.end());
    CHECK(sorted == std::vector<std::uint64_t>{0, 1, 2, 3});
}

TEST_CASE("IGR hand examples") {
    const std::vector<std::uint8_t> y{0, 0, 1, 1};
    CHECK(information_gain_ratio(std::vector<std::uint64_t>{0, 0, 1, 1}, y) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(information_gain_ratio(std::vector<std::uint64_t>{0, 1, 0, 1}, y) == 0.0);
    CHECK(information_gain_ratio(std::vector<std::uint64_t>{3, 3, 3, 3}, y) == 0.0);
    CHECK(information_gain_ratio(std::vector<std::uint64_t>{0, 0, 1, 1}, y, ComboScore::gain) ==
          doctest::Approx(1.0));
}

TEST_CASE("IGR matches a contingency-table oracle on small 2-feature fixtures") {
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        safe::testing::Rng rng(seed + 100);
        const std::size_t n = 2 + rng.below(29);
        std::vector<double> a(n), b(n);
        std::vector<std::uint8_t> y(n);
        for (std::size_t r = 0; r < n; ++r) {
            a[r] = static_cast<double>(rng.below(5));
            b[r] = static_cast<double>(rng.below(4));
            y[r] = static_cast<std::uint8_t>(rng.below(2));
        }
        FeatureCombination c;
        c.features = {0, 1};
        c.split_values = {{0.5, 2.5}, {1.5}};
        if (rng.below(2)) c.split_values[0].push_back(3.5);
        const Dataset d({Column{"a", a}, Column{"b", b}}, y);
        const auto cells = partition_cells(d, c);
        const double got = information_gain_ratio(cells, y);
        CAPTURE(seed);
        CHECK(std::abs(got - safe::testing::oracle::igr(cells, y)) <= 1e-12);
    }
}

TEST_CASE("score_combinations fills in the gain ratio") {
    const auto d = safe::testing::make_product_dataset(200, 3, 1);
    std::vector<FeatureCombination> combos(2);
    combos[0].features = {0, 1};
    combos[0].split_values = {{0.0}, {0.0}};
    combos[1].features = {2};
    combos[1].split_values = {{0.0}};
    score_combinations(d, combos);
    CHECK(combos[0].igr == doctest::Approx(safe::testing::oracle::igr(partition_cells(d, combos[0]), d.labels())).epsilon(1e-12));
    CHECK(combos[0].igr > combos[1].igr);
}

TEST_CASE("top_gamma ordering and ties") {
    std::vector<FeatureCombination> c(3);
    c[0].features = {0};
    c[0].igr = 0.1;
    c[1].features = {1};
    c[1].igr = 0.9;
    c[2].features = {2};
    c[2].igr = 0.5;
    auto top = top_gamma(c, 2);
    REQUIRE(top.size() == 2);
    CHECK(top[0].features == std::vector<std::size_t>{1});
    CHECK(top[1].features == std::vector<std::size_t>{2});
    CHECK(top_gamma(c, 0).empty());
    CHECK(top_gamma(c, 10).size() == 3);

    std::vector<FeatureCombination> t(2);
    t[0].features = {0, 1};
    t[0].igr = 0.5;
    t[1].features = {3};
    t[1].igr = 0.5;
    top = top_gamma(t, 1);
    CHECK(top[0].arity() == 1);
}

TEST_CASE("write_combinations_csv") {
    std::vector<FeatureCombination> c(1);
    c[0].features = {0, 1};
    c[0].igr = 0.25;
    std::ostringstream os;
    write_combinations_csv(c, {"a", "b"}, os);
    CHECK(os.str().find("0.25") != std::string::npos);
}
