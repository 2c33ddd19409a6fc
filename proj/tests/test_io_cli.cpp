#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "crw/cli.hpp"
#include "crw/io.hpp"

using namespace crw;
namespace fs = std::filesystem;

namespace {

struct CliRun {
    int code = 0;
    std::string out, err;
};

CliRun cli(std::vector<std::string> args) {
    std::ostringstream o, e;
    CliRun r;
    r.code = run_command(std::move(args), o, e);
    r.out = o.str();
    r.err = e.str();
    return r;
}

Json first_record(const std::string& text) {
    std::istringstream is(text);
    std::string line;
    std::getline(is, line);
    return Json::parse(line);
}

fs::path scratch_dir(const std::string& name) {
    const auto p = fs::temp_directory_path() / ("crw-test-" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

}  // namespace

TEST(DistributionJson, FloatRoundTrip) {
    const auto d = evolve<double>(fast_until_zero_policy(0.7), 9, 2);
    for (bool split : {false, true}) {
        const Json j = distribution_to_json(d, split);
        EXPECT_EQ(j.at("time"), 9);
        EXPECT_EQ(j.at("offset"), d.lo());
        EXPECT_EQ(j.at("flag_split"), split);
        const auto back = distribution_from_json<double>(Json::parse(j.dump()));
        for (Site x = d.lo(); x <= d.hi(); ++x) {
            EXPECT_EQ(back.at(x), d.at(x));
            if (split) { EXPECT_EQ(back.at(x, Flag::hit), d.at(x, Flag::hit)); }
        }
    }
}

TEST(DistributionJson, RationalMassesAreFractions) {
    const auto d = evolve<Rational>(constant_policy(0.3, 0.3), 2, 0);
    const Json j = distribution_to_json(d);
    EXPECT_EQ(j.at("mass")[2], "67/200");
    const auto back = distribution_from_json<Rational>(j);
    EXPECT_EQ(back.at(0), d.at(0));
}

TEST(PolicyJson, AllKindsRoundTrip) {
    const auto bb = solve_extremal(0.6, 20, Objective::max).policy.to_policy();
    std::vector<PolicySpec> policies{constant_policy(0.5, 0.25), two_zone_policy(0.8, 5), fast_until_zero_policy(0.9),
                                     schedule_policy(0.9, multiscale_localization_schedule(0.9, 0.8, 0.25, 2, 1024)),
                                     schedule_policy(0.95, multiscale_qto1_schedule(0.95, 4, 1024)), bb};
    for (const auto& p : policies) {
        const Json j = policy_to_json(p);
        const auto back = policy_from_json(Json::parse(j.dump()));
        EXPECT_EQ(back.kind(), p.kind());
        EXPECT_EQ(policy_to_json(back).dump(), j.dump());
        const Step n = p.horizon().value_or(50);
        EXPECT_EQ(hit_probability<double>(back, n, 0), hit_probability<double>(p, n, 0));
    }
}

TEST(PolicyJson, RejectsUnknownKind) {
    EXPECT_THROW(policy_from_json(Json{{"kind", "random"}, {"q_cap", 0.5}}), ParameterError);
}

TEST(SweepCsv, HeaderAndRows) {
    const auto r = exponent_sweep(SweepPolicy::constant, 0.5, {128, 256, 512}, SweepMethod::exact);
    std::ostringstream os;
    write_sweep_csv(os, r.records);
    std::istringstream is(os.str());
    std::string header, row;
    std::getline(is, header);
    std::getline(is, row);
    EXPECT_EQ(header, "policy_kind,q,n,p,method,ci_low,ci_high");
    EXPECT_EQ(row.rfind("constant,0.5,128,", 0), 0u);
    const Json f = fit_to_json(*r.fit);
    for (const char* key : {"sigma_hat", "intercept", "r2", "n_min", "n_max"}) EXPECT_TRUE(f.contains(key)) << key;
}

TEST(CertificateJson, Lemma6RoundTripIsBitExact) {
    const auto c = calibrate_lemma6(0.2);
    const auto back = lemma6_from_json(Json::parse(lemma6_to_json(c).dump()));
    EXPECT_EQ(back.q, c.q);
    EXPECT_EQ(back.per_scale[2].slow_failure, c.per_scale[2].slow_failure);
    EXPECT_TRUE(replay_lemma6(back).identical);
}

TEST(PolicyString, Parses) {
    EXPECT_EQ(parse_policy_string("constant:q=0.5,u=0.5", 10).kind(), PolicyKind::constant);
    EXPECT_EQ(parse_policy_string("simple", 10).q_cap(), 0.0);
    EXPECT_EQ(parse_policy_string("two-zone:q=0.5,band=3", 10).kind(), PolicyKind::two_zone);
    EXPECT_EQ(parse_policy_string("multiscale:q=0.9,alpha=0.8,beta=0.25,K0=2", 4096).horizon(), 4096);
    EXPECT_EQ(parse_policy_string("qto1:q=0.95,A=4", 1024).horizon(), 1024);
    EXPECT_EQ(parse_policy_string("optimal:q=0.5", 16).kind(), PolicyKind::bang_bang_table);
    EXPECT_THROW(parse_policy_string("constant:q=0.5,v=1", 10), ParameterError);
    EXPECT_THROW(parse_policy_string("constant:q=abc", 10), ParameterError);
    EXPECT_THROW(parse_policy_string("warp:q=0.5", 10), ParameterError);
}

TEST(Cli, EvolveReportsBinomialProbability) {
    const auto r = cli({"evolve", "--policy", "constant:q=0.5,u=0.5", "--n", "100", "--start", "0"});
    ASSERT_EQ(r.code, 0) << r.err;
    const Json rec = first_record(r.out);
    EXPECT_EQ(rec.at("command"), "evolve");
    EXPECT_EQ(rec.at("provenance").at("method"), "exact");
    EXPECT_NEAR(rec.at("payload").at("p").get<double>(), hit_probability<double>(lazy_policy(0.5), 100, 0), 0.0);
    for (const char* key : {"config", "version", "started_at", "finished_at", "payload"}) EXPECT_TRUE(rec.contains(key));
}

TEST(Cli, SolveValueAndRegion) {
    const auto r = cli({"solve", "--q", "0.5", "--n", "2", "--objective", "max", "--region"});
    ASSERT_EQ(r.code, 0) << r.err;
    const Json p = first_record(r.out).at("payload");
    EXPECT_EQ(p.at("value").get<double>(), 0.5);
    EXPECT_EQ(p.at("region").size(), 2u);
}

TEST(Cli, RationalModeIsExact) {
    const auto r = cli({"solve", "--q", "0.5", "--n", "2", "--objective", "min", "--mode", "rational"});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(first_record(r.out).at("payload").at("value"), "1/8");
    EXPECT_EQ(cli({"evolve", "--policy", "lazy:q=0.5", "--n", "65", "--mode", "rational"}).code, 2);
}

TEST(Cli, MonteCarloCommandsRequireSeed) {
    EXPECT_EQ(cli({"simulate", "--policy", "lazy:q=0.5", "--n", "10"}).code, 2);
    EXPECT_EQ(cli({"barriers", "--policy", "lazy:q=0.5", "--n", "64"}).code, 2);
    EXPECT_EQ(cli({"verify", "lemma0", "--q", "0.9"}).code, 2);
    EXPECT_EQ(cli({"exponent", "--q", "0.5", "--method", "mc"}).code, 2);
}

TEST(Cli, SimulateIsReproducible) {
    const std::vector<std::string> args{"simulate", "--policy", "two-zone:q=0.6,band=3", "--n", "64",
                                        "--trials", "3000", "--seed", "12"};
    const auto a = cli(args), b = cli(args);
    ASSERT_EQ(a.code, 0) << a.err;
    const Json pa = first_record(a.out).at("payload"), pb = first_record(b.out).at("payload");
    EXPECT_EQ(pa.at("hits"), pb.at("hits"));
    EXPECT_EQ(first_record(a.out).at("provenance").at("method"), "mc");
    for (const char* key : {"policy", "n", "trials", "seed", "p_hat", "ci_low", "ci_high", "stage_stats"})
        EXPECT_TRUE(pa.contains(key)) << key;
}

TEST(Cli, ExitCodes) {
    EXPECT_EQ(cli({"teleport"}).code, 2);
    EXPECT_EQ(cli({}).code, 2);
    EXPECT_EQ(cli({"solve", "--q", "1.5", "--n", "4"}).code, 2);
    EXPECT_EQ(cli({"evolve", "--policy", "constant:q=0.5,u=0.7", "--n", "4"}).code, 2);
    EXPECT_EQ(cli({"calibrate", "lemma6", "--eps", "1.5"}).code, 2);
    EXPECT_EQ(cli({"verify", "heatkernel", "--q", "0.5", "--band", "16", "--t-max", "64", "--tolerance", "0"}).code, 4);
    EXPECT_EQ(cli({"verify", "lemma6", "--q", "0.5", "--A", "1", "--K", "8", "--starts", "16", "--trials", "500",
                   "--seed", "1"})
                  .code,
              4);
    EXPECT_EQ(cli({"--help"}).code, 0);
}

TEST(Cli, VerifyLemma0Passes) {
    const auto r = cli({"verify", "lemma0", "--q", "0.9", "--h", "1", "--delta", "0.1", "--ell", "240", "--trials",
                        "20000", "--seed", "7"});
    ASSERT_EQ(r.code, 0) << r.err;
    const Json p = first_record(r.out).at("payload");
    EXPECT_TRUE(p.at("pass").get<bool>());
    EXPECT_NEAR(p.at("estimate").at("p_hat").get<double>(), 0.5, 0.02);
}

TEST(Cli, ReversibilityRationalIsZero) {
    const auto r = cli({"verify", "reversibility", "--q", "0.3", "--band", "4", "--mode", "rational"});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(first_record(r.out).at("payload").at("residual"), "0");
}

TEST(Cli, OutAndConfigRoundTrip) {
    const auto dir = scratch_dir("roundtrip");
    const auto first = (dir / "first.ndjson").string();
    const auto second = (dir / "second.ndjson").string();
    ASSERT_EQ(cli({"simulate", "--policy", "lazy:q=0.7", "--n", "80", "--trials", "2000", "--seed", "3", "--out", first})
                  .code,
              0);
    ASSERT_EQ(cli({"simulate", "--config", first, "--out", second}).code, 0);
    const auto a = read_ndjson_file(first), b = read_ndjson_file(second);
    ASSERT_EQ(a.size(), 1u);
    ASSERT_EQ(b.size(), 1u);
    EXPECT_EQ(a[0].at("payload").dump(), b[0].at("payload").dump());
    EXPECT_EQ(a[0].at("config").at("seed"), b[0].at("config").at("seed"));
}

TEST(Cli, FlagsOverrideConfig) {
    const auto dir = scratch_dir("override");
    const auto cfg = (dir / "cfg.json").string();
    std::ofstream(cfg) << R"({"policy": "lazy:q=0.5", "n": 10, "start": 0})";
    const auto r = cli({"evolve", "--config", cfg, "--n", "2"});
    ASSERT_EQ(r.code, 0) << r.err;
    const Json rec = first_record(r.out);
    EXPECT_EQ(rec.at("config").at("n"), 2);
    EXPECT_EQ(rec.at("payload").at("p").get<double>(), 0.375);
}

TEST(Cli, ExponentWritesPointsFitAndCsv) {
    const auto dir = scratch_dir("exponent");
    const auto out = (dir / "sweep.ndjson").string();
    const auto csv = (dir / "sweep.csv").string();
    const auto r = cli({"exponent", "--policy", "constant", "--q", "0.5", "--n-min", "128", "--n-max", "1024", "--out",
                        out, "--csv", csv});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto recs = read_ndjson_file(out);
    ASSERT_EQ(recs.size(), 5u);
    EXPECT_EQ(recs[0].at("payload").at("record"), "point");
    EXPECT_NEAR(recs[4].at("payload").at("fit").at("sigma_hat").get<double>(), 0.5, 0.02);
    std::ifstream f(csv);
    std::string header;
    std::getline(f, header);
    EXPECT_EQ(header, kSweepCsvHeader);
}

TEST(Cli, DefaultOutputDirectoryFromEnvironment) {
    const auto dir = scratch_dir("envdir");
    ::setenv("CRW_OUT_DIR", dir.c_str(), 1);
    const auto r = cli({"solve", "--q", "0.5", "--n", "4"});
    ::unsetenv("CRW_OUT_DIR");
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_TRUE(fs::exists(dir / "solve.ndjson"));
}

TEST(Cli, CalibrateThenVerifyReplays) {
    const auto dir = scratch_dir("calibrate");
    const auto cert5 = (dir / "lemma5.ndjson").string();
    const auto cert6 = (dir / "lemma6.ndjson").string();
    ASSERT_EQ(cli({"calibrate", "lemma5", "--q", "0.5", "--out", cert5}).code, 0);
    ASSERT_EQ(cli({"calibrate", "lemma6", "--eps", "0.2", "--out", cert6}).code, 0);
    const auto v5 = cli({"verify", "lemma5", "--certificate", cert5});
    ASSERT_EQ(v5.code, 0) << v5.err;
    EXPECT_TRUE(first_record(v5.out).at("payload").at("replay").at("identical").get<bool>());
    const auto v6 = cli({"verify", "lemma6", "--certificate", cert6});
    ASSERT_EQ(v6.code, 0) << v6.err;

    // A certificate whose numbers were edited no longer replays.
    auto rec = read_ndjson_file(cert5).front();
    rec["payload"]["per_scale"][0]["identity_sums"][0] = 0.5;
    const auto bad = (dir / "bad.ndjson").string();
    std::ofstream(bad) << rec.dump() << '\n';
    EXPECT_EQ(cli({"verify", "lemma5", "--certificate", bad}).code, 4);
}

TEST(Cli, BarriersAndRegion) {
    const auto dir = scratch_dir("region");
    const auto csv = (dir / "boundary.csv").string();
    const auto b = cli({"barriers", "--policy", "lazy:q=0.5", "--n", "256", "--trials", "2000", "--seed", "4"});
    ASSERT_EQ(b.code, 0) << b.err;
    EXPECT_EQ(first_record(b.out).at("payload").at("zero_violations"), 0);
    const auto r = cli({"region", "--q", "0.5", "--n", "32", "--boundary-csv", csv});
    ASSERT_EQ(r.code, 0) << r.err;
    std::ifstream f(csv);
    std::string header;
    std::getline(f, header);
    EXPECT_EQ(header, "t,max_radius");
}
