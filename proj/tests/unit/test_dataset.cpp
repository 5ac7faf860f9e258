#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "fastval/dataset.hpp"
#include "fastval/errors.hpp"

using namespace fastval;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "fastval_dataset_tests";
    fs::create_directories(dir);
    return dir / name;
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

GenerateOptions small(Mode mode, std::size_t count, std::uint64_t seed = 7) {
    GenerateOptions o;
    o.mode = mode;
    o.count = count;
    o.seed = seed;
    o.solver.grid = {64, 64};
    return o;
}

}  // namespace

TEST(UniformStream, FiftyThreeBitUniforms) {
    UniformStream a(1), b(1), c(2);
    std::mt19937_64 ref(1);
    for (int i = 0; i < 1000; ++i) {
        const double u = a.next();
        EXPECT_EQ(u, b.next());
        EXPECT_EQ(u, static_cast<double>(ref() >> 11) * 0x1.0p-53);
        EXPECT_GE(u, 0.0);
        EXPECT_LT(u, 1.0);
    }
    EXPECT_NE(a.next(), c.next());
}

TEST(Sample, DeterministicGivenSeed) {
    EXPECT_EQ(sample(Mode::AmPut, Split::Train, 50, 99), sample(Mode::AmPut, Split::Train, 50, 99));
    EXPECT_NE(sample(Mode::AmPut, Split::Train, 50, 99), sample(Mode::AmPut, Split::Train, 50, 100));
    EXPECT_EQ(sample(Mode::VarSwap, Split::Test, 1, 3).front().size(), 6u);
}

TEST(Sample, RhoLawOfLargeNumbers) {
    const auto xs = sample(Mode::VarSwap, Split::Train, 10000, 2024);
    double lo = 1e9, hi = -1e9, sum = 0.0;
    for (const auto& x : xs) {
        lo = std::min(lo, x[2]);
        hi = std::max(hi, x[2]);
        sum += x[2];
    }
    EXPECT_GT(lo, -0.4);
    EXPECT_LT(hi, 0.8);
    EXPECT_NEAR(sum / 10000.0, 0.2, 0.02);
}

TEST(Sample, TestDrawsStayInsideTrainingBounds) {
    for (Mode mode : {Mode::VarSwap, Mode::AmPut}) {
        const RangeSpec r = RangeSpec::defaults(mode);
        const auto xs = sample(mode, Split::Test, 5000, 11);
        for (const auto& x : xs) {
            for (std::size_t k = 0; k < x.size(); ++k) {
                EXPECT_GE(x[k], r.test[k].lo);
                EXPECT_LE(x[k], r.test[k].hi);
                EXPECT_GE(x[k], r.train[k].lo);
                EXPECT_LE(x[k], r.train[k].hi);
            }
        }
    }
}

TEST(Sample, TableRanges) {
    const RangeSpec v = RangeSpec::defaults(Mode::VarSwap);
    ASSERT_EQ(v.names, input_columns(Mode::VarSwap));
    EXPECT_EQ(v.train[0].hi, 0.02);
    EXPECT_EQ(v.test[1].lo, 0.05);
    EXPECT_EQ(v.test[1].hi, 0.25);
    EXPECT_EQ(v.train[5].hi, 0.06);
    const RangeSpec a = RangeSpec::defaults(Mode::AmPut);
    EXPECT_EQ(a.names[5], "lambda");
    EXPECT_EQ(a.train[6].lo, 0.85);
    EXPECT_EQ(a.train[6].hi, 1.15);
    EXPECT_EQ(a.test[6].lo, 0.9);
    EXPECT_EQ(a.test[5].hi, 0.9);
}

TEST(Modes, NamesAndErrors) {
    EXPECT_EQ(parse_mode("varswap"), Mode::VarSwap);
    EXPECT_EQ(parse_mode("amput"), Mode::AmPut);
    try {
        parse_mode("bermudan");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::UnknownMode);
    }
    EXPECT_EQ(input_columns(Mode::VarSwap).size() + target_columns(Mode::VarSwap).size(), 7u);
    EXPECT_EQ(input_columns(Mode::AmPut).size() + target_columns(Mode::AmPut).size(), 12u);
}

TEST(RangeSpec, ValidationAndOverrides) {
    const RangeSpec base = RangeSpec::defaults(Mode::VarSwap);
    const RangeSpec merged = RangeSpec::merge(base, {{"rho", {{"train", {-0.5, 0.9}}}}});
    EXPECT_EQ(merged.train[2].lo, -0.5);
    EXPECT_EQ(merged.test[2].lo, -0.3);
    EXPECT_NO_THROW(merged.validate());
    EXPECT_THROW(RangeSpec::merge(base, {{"rho", {{"test", {-0.5, 0.0}}}}}), Error);
    RangeSpec unordered = base;
    unordered.train[0] = {0.02, 0.0};
    EXPECT_THROW(unordered.validate(), Error);
    EXPECT_THROW(RangeSpec::merge(base, {{"kappa", {{"train", {0, 1}}}}}), Error);
}

TEST(Generate, VarSwapShapeAndMetadata) {
    const Dataset d = generate(small(Mode::VarSwap, 20));
    ASSERT_EQ(d.records.size(), 20u);
    for (const auto& r : d.records) {
        EXPECT_EQ(r.x.size() + r.y.size(), 7u);
        EXPECT_TRUE(std::isfinite(r.y[0]));
        EXPECT_GT(r.y[0], 0.0);
    }
    EXPECT_EQ(d.meta["seed"], 7);
    EXPECT_EQ(d.meta["generator"], std::string(kGeneratorName));
    EXPECT_EQ(d.meta["count"], 20);
    EXPECT_TRUE(d.meta.contains("ranges"));
    EXPECT_TRUE(d.meta.contains("solver"));
    EXPECT_EQ(d.meta["dropped"], 0);
    // Rows are the first draws of the seeded stream.
    EXPECT_EQ(d.records.front().x, sample(Mode::VarSwap, Split::Train, 1, 7).front());
}

TEST(Generate, AmericanPutShapeAndDrops) {
    GenerateOptions o = small(Mode::AmPut, 12);
    std::size_t callbacks = 0;
    o.on_drop = [&](std::size_t, const std::string& reason) {
        EXPECT_EQ(reason.rfind("butterfly_violation", 0), 0u) << reason;
        ++callbacks;
    };
    const Dataset d = generate(o);
    ASSERT_EQ(d.records.size(), 12u);
    for (const auto& r : d.records) {
        ASSERT_EQ(r.x.size() + r.y.size(), 12u);
        for (double y : r.y) EXPECT_TRUE(std::isfinite(y));
        EXPECT_GT(r.y[0], 0.0);
        EXPECT_LT(r.y[1], 0.0);
    }
    EXPECT_EQ(d.meta["dropped"].get<std::size_t>(), callbacks);
    EXPECT_EQ(d.meta["attempts"].get<std::size_t>(), 12 + callbacks);
}

TEST(Generate, IndependentOfThreadCount) {
    GenerateOptions one = small(Mode::AmPut, 10, 5);
    one.solver.threads = 1;
    GenerateOptions three = one;
    three.solver.threads = 3;
    EXPECT_EQ(generate(one).records, generate(three).records);
}

TEST(Generate, FlatSkewDrawGivesLevel) {
    GenerateOptions o = small(Mode::VarSwap, 1, 17);
    o.ranges = RangeSpec::merge(RangeSpec::defaults(Mode::VarSwap), {{"b", {{"train", {0.0, 0.0}}, {"test", {0.0, 0.0}}}}});
    const Dataset d = generate(o);
    ASSERT_EQ(d.records.size(), 1u);
    EXPECT_EQ(d.records[0].x[1], 0.0);
    EXPECT_NEAR(d.records[0].y[0], d.records[0].x[0], 1e-6);
}

TEST(Generate, ExcessiveSolverFailuresAbort) {
    GenerateOptions o = small(Mode::AmPut, 10);
    o.solver.psor.max_iter = 1;
    try {
        generate(o);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::ExcessiveDropRate);
        EXPECT_NE(std::string(e.what()).find("non_convergence"), std::string::npos);
    }
}

TEST(Generate, ExcessiveArbitrageAborts) {
    GenerateOptions o = small(Mode::AmPut, 20);
    o.solver.max_arbitrage_drop_rate = 0.0;
    try {
        generate(o);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::ExcessiveDropRate);
    }
}

TEST(Generate, RejectsBadOptions) {
    EXPECT_THROW(generate(small(Mode::VarSwap, 0)), Error);
    GenerateOptions o = small(Mode::AmPut, 3);
    o.solver.grid = {8, 8};
    EXPECT_THROW(generate(o), Error);
}

TEST(Csv, RoundTripIsExact) {
    const Dataset d = generate(small(Mode::AmPut, 6, 8));
    const fs::path p = scratch("round_trip.csv");
    write_csv(d, p);
    const Dataset back = read_csv(p);
    EXPECT_EQ(back.records, d.records);
    EXPECT_EQ(back.mode, d.mode);
    EXPECT_EQ(back.meta, d.meta);
    EXPECT_TRUE(back == d);
    // Re-writing what was read reproduces the bytes.
    const fs::path p2 = scratch("round_trip_2.csv");
    write_csv(back, p2);
    EXPECT_EQ(slurp(p), slurp(p2));
}

TEST(Csv, HeaderAndColumns) {
    const fs::path p = scratch("header.csv");
    write_csv(generate(small(Mode::VarSwap, 3)), p);
    std::ifstream is(p);
    std::string tag, header;
    std::getline(is, tag);
    std::getline(is, header);
    EXPECT_EQ(tag.rfind("# fastval-dataset v1 {", 0), 0u);
    EXPECT_EQ(header, "a_prime,b,rho,m,sigma,r,K_var");
}

TEST(Csv, RegenerationIsByteIdentical) {
    const fs::path a = scratch("regen_a.csv"), b = scratch("regen_b.csv");
    write_csv(generate(small(Mode::VarSwap, 15, 123)), a);
    write_csv(generate(small(Mode::VarSwap, 15, 123)), b);
    EXPECT_EQ(slurp(a), slurp(b));
}

TEST(Csv, RejectsMalformedFiles) {
    const fs::path p = scratch("bad.csv");
    {
        std::ofstream os(p);
        os << "a_prime,b\n1,2\n";
    }
    try {
        read_csv(p);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::SchemaMismatch);
    }
    {
        std::ofstream os(p);
        os << "# fastval-dataset v1 {\"mode\":\"varswap\"}\na_prime,b,rho,m,sigma,r,K_var\n1,2,3\n";
    }
    EXPECT_THROW(read_csv(p), Error);
    try {
        read_csv(scratch("missing.csv"));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::Io);
    }
}

TEST(RelativeError, Definition) {
    const std::vector<double> t = {1.0, 2.0, 3.0}, p = {1.1, 1.9, 3.3};
    EXPECT_NEAR(relative_error(t, p), (0.1 + 0.1 + 0.3) / 3.0 / 2.0, 1e-15);
    EXPECT_EQ(relative_error(t, t), 0.0);
    // Negative targets are normalised by |mean|.
    const std::vector<double> tn = {-1.0, -2.0, -3.0}, pn = {-1.1, -1.9, -3.3};
    EXPECT_NEAR(relative_error(tn, pn), relative_error(t, p), 1e-15);
}

TEST(RelativeError, ScaleInvariant) {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.5, 1.5);
    std::vector<double> t(100), p(100);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = u(rng), p[i] = t[i] * u(rng);
    const double base = relative_error(t, p);
    for (double c : {1e-3, 0.25, 7.0, 1e4}) {
        std::vector<double> tc(t), pc(p);
        for (auto& v : tc) v *= c;
        for (auto& v : pc) v *= c;
        EXPECT_NEAR(relative_error(tc, pc), base, 1e-13 * base);
    }
}

TEST(Evaluate, OwnTrainingSetInterpolates) {
    const Dataset d = generate(small(Mode::VarSwap, 300, 31));
    HyperSearch s = HyperSearch::length_only();
    const auto fit_result = fit(d.inputs(), d.targets().col(0), s, "K_var");
    EXPECT_EQ(fit_result.selected.noise, 0.0);
    const Evaluation ev = evaluate({fit_result.model}, d);
    EXPECT_LT(ev.report.err.at("K_var"), 1e-6);
    EXPECT_EQ(ev.report.n_test, 300u);
    EXPECT_EQ(ev.report.n_train, 300u);
}

TEST(Evaluate, SchemaMismatch) {
    const Dataset d = generate(small(Mode::VarSwap, 30, 32));
    const auto fit_result = fit(d.inputs(), d.targets().col(0), HyperSearch::length_only(), "K_var");
    Dataset wrong = d;
    wrong.mode = Mode::AmPut;
    try {
        evaluate({fit_result.model}, wrong);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::SchemaMismatch);
    }
}

TEST(EvalReport, JsonRoundTrip) {
    EvalReport r;
    r.mode = Mode::AmPut;
    r.n_train = 5000;
    r.n_test = 2000;
    r.err = {{"V", 0.01}, {"delta", 0.02}};
    r.timing_seconds = 0.5;
    r.seed = 42;
    r.config = {{"k", 1}};
    const auto j = r.to_json();
    for (const char* key : {"mode", "n_train", "n_test", "err", "timing_seconds", "seed", "config"}) {
        EXPECT_TRUE(j.contains(key)) << key;
    }
    const EvalReport back = EvalReport::from_json(j);
    EXPECT_EQ(back.to_json(), j);
}

TEST(SolverConfig, JsonRoundTrip) {
    SolverConfig c;
    c.grid = {123, 45};
    c.psor.omega = 1.3;
    c.quadrature.tolerance = 1e-9;
    c.max_drop_rate = 0.1;
    EXPECT_EQ(SolverConfig::from_json(c.to_json()).to_json(), c.to_json());
    EXPECT_FALSE(c.to_json().contains("threads"));
}
