#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "safe/eval.hpp"
#include "synthetic.hpp"

using namespace safe;
using namespace safe::eval;

TEST_CASE("auc examples") {
    const std::vector<std::uint8_t> y{0, 0, 1, 1};
    CHECK(auc(std::vector<double>{0, 0, 1, 1}, y) == 1.0);
    CHECK(auc(std::vector<double>{3, 3, 3, 3}, y) == 0.5);
    CHECK(auc(std::vector<double>{0.1, 0.4, 0.35, 0.8}, y) == 0.75);
    CHECK(auc(std::vector<double>{1, 1, 0, 0}, y) == 0.0);
    CHECK_THROWS(auc(std::vector<double>{1, 2}, std::vector<std::uint8_t>{1, 1}));
}

TEST_CASE("auc equals pairwise counting") {
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        safe::testing::Rng rng(seed);
        const std::size_t n = 2 + rng.below(80);
        std::vector<double> s(n);
        std::vector<std::uint8_t> y(n);
        for (std::size_t i = 0; i < n; ++i) {
            s[i] = static_cast<double>(rng.below(7));
            y[i] = static_cast<std::uint8_t>(rng.below(2));
        }
        y[0] = 0;
        y[1] = 1;
        double num = 0, den = 0;
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                if (y[i] == 1 && y[j] == 0) {
                    den += 1;
                    num += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
                }
            }
        }
        CHECK(auc(s, y) == doctest::Approx(num / den).epsilon(1e-14));
    }
}

TEST_CASE("stability: identical runs give zero") {
    const std::vector<std::vector<std::string>> runs(4, {"a", "b"});
    CHECK(stability_jsd(runs, 1) == 0.0);
}

TEST_CASE("stability: disjoint two-name runs with M = 1") {
    const std::vector<std::vector<std::string>> runs{{"a", "b"}, {"c", "d"}};
    // P = (1,1,1,1)/4 over {a,b,c,d}; ideal Q = (2,2,0,0)/4.
    const double expected = 0.75 * std::log(4.0 / 3.0);
    CHECK(std::abs(stability_jsd(runs, 1) - expected) <= 1e-12);
    const auto dist = feature_distribution(runs, 1);
    CHECK(dist.runs == 2);
    CHECK(dist.counts.size() == 4);
}

TEST_CASE("divergences") {
    const std::vector<double> p{0.5, 0.5, 0.0}, q{0.25, 0.25, 0.5};
    CHECK(kl_divergence(p, p) == 0.0);
    CHECK(kl_divergence(p, q) == doctest::Approx(std::log(2.0)));
    CHECK(js_divergence(p, q) == doctest::Approx(js_divergence(q, p)).epsilon(1e-15));
    CHECK(js_divergence(std::vector<double>{1, 0}, std::vector<double>{0, 1}) ==
          doctest::Approx(std::numbers::ln2));
}

TEST_CASE("stability lies in [0, ln 2] on random run collections") {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        safe::testing::Rng rng(seed + 77);
        const std::size_t t = 2 + rng.below(6);
        const std::size_t m = 1 + rng.below(4);
        std::vector<std::vector<std::string>> runs(t);
        for (auto& r : runs) {
            const std::size_t k = rng.below(2 * m + 2);
            std::set<std::string> names;
            for (std::size_t i = 0; i < k; ++i) names.insert("f" + std::to_string(rng.below(3 * m + 1)));
            r.assign(names.begin(), names.end());
        }
        if (std::all_of(runs.begin(), runs.end(), [](const auto& r) { return r.empty(); })) runs[0] = {"f0"};
        const double j = stability_jsd(runs, m);
        CHECK(j >= 0.0);
        CHECK(j <= std::numbers::ln2 + 1e-15);
    }
    CHECK_THROWS(stability_jsd(std::vector<std::vector<std::string>>{}, 1));
}

TEST_CASE("importance report") {
    const auto d = safe::testing::make_product_dataset(1000, 3, 31);
    gbdt::GbdtConfig cfg;
    cfg.n_trees = 20;
    auto rows = importance_report(d, ops::identity_plan(d.names()), cfg);
    CHECK(rows.size() == 3);
    for (const auto& r : rows) CHECK(!r.generated);

    ops::TransformPlan plan;
    const auto x1 = ops::FeatureDef::base("x1"), x2 = ops::FeatureDef::base("x2");
    plan.features = {ops::FeatureDef::derived("mul", {x1, x2}), ops::FeatureDef::derived("add", {x1, x2})};
    rows = importance_report(d, plan, cfg);
    CHECK(rows.size() == 5);
    const auto best = std::max_element(rows.begin(), rows.end(),
                                       [](const auto& a, const auto& b) { return a.importance < b.importance; });
    CHECK(best->feature == "mul(x1,x2)");
    CHECK(best->generated);
    std::ostringstream os;
    write_importance_csv(rows, os);
    CHECK(os.str().find("\"mul(x1,x2)\",generated,") != std::string::npos);
}

TEST_CASE("linear scorer and holdout auc") {
    const auto train = safe::testing::make_dataset(
        800, 3, 1, [](std::span<const double> x) { return x[0] - 0.5 * x[2] > 0; }, 0.05);
    const auto test = safe::testing::make_dataset(
        400, 3, 2, [](std::span<const double> x) { return x[0] - 0.5 * x[2] > 0; }, 0.05);
    const auto lin = LinearScorer::fit(train);
    CHECK(auc(lin.score(test), test.labels()) > 0.9);
    gbdt::GbdtConfig cfg;
    CHECK(holdout_auc(train, test, cfg) > 0.85);
}
