#include <doctest.h>

#include <initializer_list>
#include <sstream>

#include "cli.hpp"
#include "helpers.hpp"
#include "safe/dataset.hpp"
#include "safe/operators.hpp"
#include "synthetic.hpp"

using namespace safe;
using safe::testing::read_file;
using safe::testing::scratch_dir;
using safe::testing::write_file;

namespace {

struct Outcome {
    int code;
    std::string out, err;
};

Outcome invoke(std::initializer_list<std::string> args) {
    std::vector<std::string> owned{"safe"};
    owned.insert(owned.end(), args.begin(), args.end());
    std::vector<const char*> argv;
    for (const auto& a : owned) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

struct Files {
    std::filesystem::path dir, train, test;
};

Files product_files(const std::string& name) {
    Files f;
    f.dir = scratch_dir(name);
    f.train = f.dir / "train.csv";
    f.test = f.dir / "test.csv";
    write_csv(safe::testing::make_product_dataset(1200, 4, 61), f.train, "y");
    write_csv(safe::testing::make_product_dataset(400, 4, 62), f.test, "y");
    return f;
}

double parse_after(const std::string& text, const std::string& key) {
    const auto at = text.find(key);
    REQUIRE(at != std::string::npos);
    return std::stod(text.substr(at + key.size()));
}

}  // namespace

TEST_CASE("cli fit writes its artifacts") {
    const auto f = product_files("cli_fit");
    const auto out = (f.dir / "out").string();
    const auto r = invoke({"fit", "--train", f.train.string(), "--label", "y", "--mode", "safe", "--output", out,
                           "--n-trees", "20", "--threads", "1"});
    CHECK(r.code == 0);
    for (const char* name : {"psi.json", "selection_report.csv", "trace.txt", "train_features.csv"}) {
        CHECK(std::filesystem::exists(f.dir / "out" / name));
    }
    const auto plan = ops::deserialize(read_file(f.dir / "out" / "psi.json"));
    CHECK(plan.derived_count() > 0);
    CHECK(read_file(f.dir / "out" / "selection_report.csv").rfind("feature,iv,importance,kept,dropped_by,stage", 0) ==
          0);
    CHECK(read_file(f.dir / "out" / "trace.txt").find("iteration=0") != std::string::npos);
}

TEST_CASE("cli fit without --label fails naming the flag") {
    const auto f = product_files("cli_nolabel");
    const auto r = invoke({"fit", "--train", f.train.string()});
    CHECK(r.code == 1);
    CHECK(r.err.find("--label") != std::string::npos);
}

TEST_CASE("cli errors exit 1") {
    CHECK(invoke({}).code == 1);
    CHECK(invoke({"bogus"}).code == 1);
    CHECK(invoke({"fit", "--train", "/nonexistent.csv", "--label", "y"}).code == 1);
    const auto f = product_files("cli_badflags");
    auto r = invoke({"fit", "--train", f.train.string(), "--label", "y", "--mode", "nope", "--output",
                     (f.dir / "o").string()});
    CHECK(r.code == 1);
    CHECK(r.err.find("error:") != std::string::npos);
    r = invoke({"fit", "--train", f.train.string(), "--label", "y", "--operators", "cube", "--output",
                (f.dir / "o").string()});
    CHECK(r.code == 1);
}

TEST_CASE("cli fit is byte-identical across repeated runs") {
    const auto f = product_files("cli_determinism");
    for (const char* sub : {"a", "b"}) {
        const auto r = invoke({"fit", "--train", f.train.string(), "--label", "y", "--mode", "rand", "--seed", "3",
                               "--n-trees", "15", "--output", (f.dir / sub).string()});
        REQUIRE(r.code == 0);
    }
    for (const char* name : {"psi.json", "selection_report.csv", "train_features.csv"}) {
        CHECK(read_file(f.dir / "a" / name) == read_file(f.dir / "b" / name));
    }
}

TEST_CASE("cli transform reproduces fit-time columns") {
    const auto f = product_files("cli_transform");
    REQUIRE(invoke({"fit", "--train", f.train.string(), "--label", "y", "--n-trees", "20", "--output",
                    (f.dir / "fit").string()})
                .code == 0);
    const auto r = invoke({"transform", "--psi", (f.dir / "fit" / "psi.json").string(), "--input", f.train.string(),
                           "--label", "y", "--output", (f.dir / "tr").string()});
    CHECK(r.code == 0);
    CHECK(read_file(f.dir / "tr" / "transformed.csv") == read_file(f.dir / "fit" / "train_features.csv"));
}

TEST_CASE("cli transform with an identity plan projects the input") {
    const auto f = product_files("cli_identity");
    write_file(f.dir / "psi.json", ops::serialize(ops::identity_plan({"x3", "x1"})));
    REQUIRE(invoke({"transform", "--psi", (f.dir / "psi.json").string(), "--input", f.test.string(), "--output",
                    (f.dir / "o").string()})
                .code == 0);
    const auto in = load_csv(f.test, "y");
    const auto text = read_file(f.dir / "o" / "transformed.csv");
    std::istringstream ss(text);
    std::string line;
    std::getline(ss, line);
    CHECK(line == "x3,x1");
    std::size_t r = 0;
    while (std::getline(ss, line)) {
        CHECK(line == format_real(in.values("x3")[r]) + "," + format_real(in.values("x1")[r]));
        ++r;
    }
    CHECK(r == in.n_rows());
}

TEST_CASE("cli transform failures") {
    const auto f = product_files("cli_transform_fail");
    write_file(f.dir / "bad.json", "{\"format\": 3");
    auto r = invoke({"transform", "--psi", (f.dir / "bad.json").string(), "--input", f.test.string(), "--output",
                     (f.dir / "o").string()});
    CHECK(r.code == 1);

    write_file(f.dir / "psi.json", ops::serialize(ops::identity_plan({"x1", "nope"})));
    r = invoke({"transform", "--psi", (f.dir / "psi.json").string(), "--input", f.test.string(), "--output",
                (f.dir / "o").string()});
    CHECK(r.code == 1);
    CHECK(r.err.find("nope") != std::string::npos);
}

TEST_CASE("cli evaluate") {
    const auto f = product_files("cli_evaluate");
    REQUIRE(invoke({"fit", "--train", f.train.string(), "--label", "y", "--output", (f.dir / "fit").string()})
                .code == 0);
    auto r = invoke({"evaluate", "--train", f.train.string(), "--test", f.test.string(), "--label", "y", "--psi",
                     (f.dir / "fit" / "psi.json").string()});
    CHECK(r.code == 0);
    CHECK(parse_after(r.out, "PSI auc=") >= parse_after(r.out, "ORIG auc="));

    r = invoke({"evaluate", "--train", f.train.string(), "--test", f.test.string(), "--label", "y"});
    CHECK(r.code == 0);
    CHECK(r.out.find("ORIG auc=") != std::string::npos);
    CHECK(r.out.find("PSI") == std::string::npos);

    write_file(f.dir / "one.csv", "x1,x2,x3,x4,y\n1,2,3,4,1\n2,3,4,5,1\n");
    r = invoke({"evaluate", "--train", f.train.string(), "--test", (f.dir / "one.csv").string(), "--label", "y"});
    CHECK(r.code == 1);
}

TEST_CASE("cli stability") {
    const auto f = product_files("cli_stability");
    auto r = invoke({"stability", "--train", f.train.string(), "--label", "y", "--runs", "2", "--n-trees", "15"});
    CHECK(r.code == 0);
    // Training is deterministic and SAFE draws no random numbers: seeds do not matter.
    CHECK(parse_after(r.out, "stability_jsd=") == 0.0);
    r = invoke({"stability", "--train", f.train.string(), "--label", "y", "--runs", "1"});
    CHECK(r.code == 1);
}

TEST_CASE("cli help lists every flag with its default") {
    auto r = invoke({"--help"});
    CHECK(r.code == 0);
    for (const char* sub : {"fit", "transform", "evaluate", "stability"}) CHECK(r.out.find(sub) != std::string::npos);
    r = invoke({"fit", "--help"});
    CHECK(r.code == 0);
    for (const char* flag : {"--train", "--label", "--valid", "--valid-fraction", "--output", "--missing", "--mode",
                             "--seed", "--n-iter", "--time-budget", "--gamma", "--max-arity", "--combo-score",
                             "--operators", "--alpha", "--beta", "--theta", "--max-features", "--iv-formula",
                             "--pearson-row-cap", "--n-trees", "--max-depth", "--learning-rate", "--reg-lambda",
                             "--min-gain", "--min-child-rows"}) {
        CHECK_MESSAGE(r.out.find(flag) != std::string::npos, flag);
    }
    CHECK(r.out.find("0.8") != std::string::npos);
    CHECK(r.out.find("add,mul,sub,rsub,div,rdiv") != std::string::npos);
}
