#pragma once

// Command-line front end. Every subcommand writes newline-delimited JSON
// ResultRecords {command, config, version, started_at, finished_at, payload,
// provenance} to --out, to $CRW_OUT_DIR/<command>.ndjson, or to stdout.

#include <CLI11.hpp>

#include <chrono>
#include <charconv>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "crw/analysis.hpp"
#include "crw/dp.hpp"
#include "crw/errors.hpp"
#include "crw/evolve.hpp"
#include "crw/io.hpp"
#include "crw/montecarlo.hpp"
#include "crw/policy.hpp"

#ifndef CRW_VERSION
#define CRW_VERSION "unknown"
#endif

namespace crw {

namespace exit_code {
inline constexpr int ok = 0;
inline constexpr int parameter = 2;
inline constexpr int calibration = 3;
inline constexpr int invariant = 4;
}  // namespace exit_code

inline constexpr Step kRationalMaxN = 64;

// ---------------------------------------------------------------------------
// Policy strings: kind[:key=value,...]

/// Parses e.g. "constant:q=0.5,u=0.5", "two-zone:q=0.5,band=8",
/// "multiscale:q=0.9,alpha=0.8,beta=0.25,K0=2", "qto1:q=0.95,A=4",
/// "optimal:q=0.5" or "file:policy.json". Missing horizons default to n.
inline PolicySpec parse_policy_string(const std::string& text, Step n) {
    const auto colon = text.find(':');
    const std::string kind = text.substr(0, colon);
    std::map<std::string, std::string> kv;
    if (colon != std::string::npos) {
        if (kind == "file") {
            const Json j = read_json_file(text.substr(colon + 1));
            return policy_from_json(j.contains("policy") ? j.at("policy") : j);
        }
        std::stringstream ss(text.substr(colon + 1));
        std::string item;
        while (std::getline(ss, item, ',')) {
            const auto eq = item.find('=');
            if (eq == std::string::npos) throw ParameterError("policy parameter '" + item + "' is not key=value");
            kv[item.substr(0, eq)] = item.substr(eq + 1);
        }
    }
    auto num = [&](const std::string& key, std::optional<double> fallback = std::nullopt) {
        auto it = kv.find(key);
        if (it == kv.end()) {
            if (fallback) return *fallback;
            throw ParameterError("policy '" + kind + "' needs " + key + "=");
        }
        double v = 0.0;
        auto [ptr, ec] = std::from_chars(it->second.data(), it->second.data() + it->second.size(), v);
        if (ec != std::errc{} || ptr != it->second.data() + it->second.size())
            throw ParameterError("policy parameter " + key + "='" + it->second + "' is not a number");
        kv.erase(it);
        return v;
    };
    auto done = [&](PolicySpec p) {
        if (!kv.empty()) throw ParameterError("unknown policy parameter '" + kv.begin()->first + "' for " + kind);
        return p;
    };
    const double nd = static_cast<double>(n);
    if (kind == "constant") {
        const double q = num("q");
        return done(constant_policy(q, num("u", q)));
    }
    if (kind == "lazy") return done(lazy_policy(num("q")));
    if (kind == "simple") return done(constant_policy(num("q", 0.0), 0.0));
    if (kind == "two-zone") {
        const double q = num("q");
        return done(two_zone_policy(q, static_cast<Site>(num("band"))));
    }
    if (kind == "fast-until-zero") return done(fast_until_zero_policy(num("q")));
    if (kind == "multiscale") {
        const double q = num("q"), alpha = num("alpha"), beta = num("beta"), K0 = num("K0");
        const auto T = static_cast<Step>(num("T", nd));
        return done(schedule_policy(q, multiscale_localization_schedule(q, alpha, beta, K0, T)));
    }
    if (kind == "qto1") {
        const double q = num("q"), A = num("A");
        const auto horizon = static_cast<Step>(num("n", nd));
        return done(schedule_policy(q, multiscale_qto1_schedule(q, A, horizon)));
    }
    if (kind == "optimal") {
        const double q = num("q");
        const auto horizon = static_cast<Step>(num("n", nd));
        const auto obj = kv.count("objective") ? parse_objective(kv["objective"]) : Objective::max;
        kv.erase("objective");
        return done(solve_extremal(q, horizon, obj, {0, 0}, SolveOptions{false}).policy.to_policy());
    }
    throw ParameterError("unknown policy kind '" + kind + "'");
}

namespace detail {

inline std::string utc_now() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t tt = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&tt, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

inline std::vector<Step> parse_step_list(const std::string& s) {
    std::vector<Step> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        Step v = 0;
        auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
        if (ec != std::errc{} || ptr != item.data() + item.size())
            throw ParameterError("'" + item + "' is not an integer");
        out.push_back(v);
    }
    return out;
}

inline std::vector<Step> powers_of_two(Step lo, Step hi) {
    std::vector<Step> out;
    for (Step v = 1; v <= hi; v *= 2)
        if (v >= lo) out.push_back(v);
    if (out.empty()) throw ParameterError("empty power-of-two range");
    return out;
}

/// Typed JSON for a CLI value string: integers and finite decimals become
/// numbers, anything else stays a string.
inline Json typed_value(const std::string& s) {
    if (s.empty()) return s;
    if (s == "true") return true;
    if (s == "false") return false;
    long long i = 0;
    if (auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), i); ec == std::errc{} && p == s.data() + s.size())
        return i;
    double d = 0.0;
    if (auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), d); ec == std::errc{} && p == s.data() + s.size())
        return d;
    return s;
}

inline std::string config_arg(const Json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_array()) {
        std::string out;
        for (const auto& x : v) out += (out.empty() ? "" : ",") + config_arg(x);
        return out;
    }
    return v.dump();
}

/// Appends --key value for every config entry not given on the command line.
inline std::vector<std::string> merge_config(std::vector<std::string> args) {
    std::optional<std::string> path;
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
        else if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
    }
    if (!path) return args;
    Json cfg;
    try {
        auto recs = read_ndjson_file(*path);
        if (recs.empty()) throw ParameterError("config file '" + *path + "' is empty");
        cfg = recs.front();
    } catch (const ParameterError&) {
        cfg = read_json_file(*path);
    }
    if (cfg.contains("config") && cfg.contains("command")) cfg = cfg.at("config");
    if (!cfg.is_object()) throw ParameterError("config must be a JSON object");
    auto given = [&](const std::string& key) {
        for (const auto& a : args)
            if (a == "--" + key || a.rfind("--" + key + "=", 0) == 0) return true;
        return false;
    };
    for (const auto& [key, value] : cfg.items()) {
        if (key == "config" || given(key) || value.is_null()) continue;
        if (value.is_boolean()) {
            if (value.get<bool>()) args.push_back("--" + key);
            continue;
        }
        args.push_back("--" + key);
        args.push_back(config_arg(value));
    }
    return args;
}

/// Effective option values of the selected (sub)command.
inline Json config_echo(const CLI::App* app) {
    Json cfg = Json::object();
    for (const CLI::Option* opt : app->get_options()) {
        if (opt->get_lnames().empty()) continue;
        const std::string key = opt->get_lnames().front();
        if (key == "help" || key == "config") continue;
        if (opt->count() > 0) {
            const auto& res = opt->results();
            cfg[key] = res.size() == 1 ? typed_value(res.front()) : Json(res);
        } else if (!opt->get_default_str().empty()) {
            cfg[key] = typed_value(opt->get_default_str());
        }
    }
    return cfg;
}

}  // namespace detail

struct CommonOptions {
    std::optional<std::uint64_t> seed;
    std::string out;
    std::string config;
    unsigned threads = 1;
    std::string mode = "float";
    std::string csv;

    bool rational() const { return mode == "rational"; }

    std::uint64_t require_seed(const std::string& cmd) const {
        if (!seed) throw ParameterError(cmd + " draws random samples and requires --seed");
        return *seed;
    }
};

/// Collects records and writes them once the command has finished.
class RecordWriter {
public:
    RecordWriter(std::string command, Json config, std::ostream& out)
        : command_(std::move(command)), config_(std::move(config)), out_(out), started_(detail::utc_now()) {}

    void add(Json payload, Json provenance) {
        Json r;
        r["command"] = command_;
        r["config"] = config_;
        r["version"] = CRW_VERSION;
        r["started_at"] = started_;
        r["finished_at"] = detail::utc_now();
        r["payload"] = std::move(payload);
        r["provenance"] = std::move(provenance);
        records_.push_back(std::move(r));
    }

    void flush(const std::string& out_path) {
        std::string path = out_path;
        if (path.empty()) {
            if (const char* dir = std::getenv("CRW_OUT_DIR"); dir && *dir) {
                std::string name = command_;
                for (char& c : name)
                    if (c == ' ') c = '-';
                path = (std::filesystem::path(dir) / (name + ".ndjson")).string();
            }
        }
        if (path.empty()) {
            for (const auto& r : records_) out_ << r.dump() << '\n';
            return;
        }
        if (auto parent = std::filesystem::path(path).parent_path(); !parent.empty())
            std::filesystem::create_directories(parent);
        std::ofstream f(path);
        if (!f) throw ParameterError("cannot write '" + path + "'");
        for (const auto& r : records_) f << r.dump() << '\n';
        out_ << "wrote " << records_.size() << " record(s) to " << path << '\n';
    }

private:
    std::string command_;
    Json config_;
    std::ostream& out_;
    std::string started_;
    std::vector<Json> records_;
};

namespace detail {

inline Json exact_tag() { return {{"method", "exact"}}; }

inline Json mc_tag(std::uint64_t seed, std::uint64_t trials) {
    return {{"method", "mc"}, {"seed", seed}, {"trials", trials}};
}

inline void check_rational_n(const CommonOptions& c, Step n) {
    if (c.rational() && n > kRationalMaxN)
        throw ParameterError("rational mode is limited to n <= " + std::to_string(kRationalMaxN));
}

inline Json load_certificate(const std::string& path) {
    Json j;
    try {
        auto recs = read_ndjson_file(path);
        if (recs.empty()) throw ParameterError("certificate file '" + path + "' is empty");
        j = recs.back();
    } catch (const ParameterError&) {
        j = read_json_file(path);
    }
    return j.contains("payload") ? j.at("payload") : j;
}

}  // namespace detail

/// Runs one CLI invocation (args exclude the program name) and returns the
/// process exit code.
inline int run_command(std::vector<std::string> args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"Controlled random walk localization toolkit", "crw"};
    app.require_subcommand(1);
    // "-h" stays free for the level option of verify lemma0.
    app.set_help_flag("--help", "Print this help message and exit");
    app.set_version_flag("--version", CRW_VERSION);

    CommonOptions common;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--seed", common.seed, "Master seed for Monte Carlo streams");
        sub->add_option("--out", common.out, "Output NDJSON path");
        sub->add_option("--config", common.config, "Flat JSON config or stored ResultRecord; flags override it");
        sub->add_option("--threads", common.threads, "Worker thread cap")->capture_default_str();
        sub->add_option("--mode", common.mode, "Number representation")
            ->check(CLI::IsMember({"float", "rational"}))
            ->capture_default_str();
    };

    // evolve
    std::string policy_str;
    Step n = 0;
    Site start = 0, target_lo = 0, target_hi = 0;
    bool dump = false, flag_split = false;
    auto* evolve_cmd = app.add_subcommand("evolve", "Exact law of S_n under a policy");
    evolve_cmd->add_option("--policy", policy_str, "Policy string")->required();
    evolve_cmd->add_option("--n", n, "Number of steps")->required();
    evolve_cmd->add_option("--start", start, "Start site")->capture_default_str();
    evolve_cmd->add_option("--target-lo", target_lo, "Target interval low end")->capture_default_str();
    evolve_cmd->add_option("--target-hi", target_hi, "Target interval high end")->capture_default_str();
    evolve_cmd->add_flag("--dump", dump, "Include the full distribution");
    evolve_cmd->add_flag("--flag-split", flag_split, "Split the dumped distribution by visited-0 flag");
    add_common(evolve_cmd);

    // solve
    double q = 0.5;
    std::string objective = "max";
    std::string values_csv, boundary_csv;
    Site cutoff = 64;
    bool with_region = false;
    auto* solve_cmd = app.add_subcommand("solve", "Backward induction for the extremal hit probability");
    solve_cmd->add_option("--q", q, "Stay-probability cap")->required();
    solve_cmd->add_option("--n", n, "Horizon")->required();
    solve_cmd->add_option("--objective", objective, "max or min")->capture_default_str();
    solve_cmd->add_option("--start", start, "Start site")->capture_default_str();
    solve_cmd->add_option("--target-lo", target_lo, "Target interval low end")->capture_default_str();
    solve_cmd->add_option("--target-hi", target_hi, "Target interval high end")->capture_default_str();
    solve_cmd->add_option("--values-csv", values_csv, "Write V_t(x) as CSV");
    solve_cmd->add_option("--cutoff", cutoff, "|x| cutoff for the values CSV")->capture_default_str();
    solve_cmd->add_flag("--region", with_region, "Include the extremal region intervals");
    add_common(solve_cmd);

    // region
    auto* region_cmd = app.add_subcommand("region", "Extremal bang-bang region and its boundary curve");
    region_cmd->add_option("--q", q, "Stay-probability cap")->required();
    region_cmd->add_option("--n", n, "Horizon")->required();
    region_cmd->add_option("--objective", objective, "max or min")->capture_default_str();
    region_cmd->add_option("--boundary-csv", boundary_csv, "Write the (t, max_radius) curve as CSV");
    add_common(region_cmd);

    // simulate
    std::uint64_t trials = 10000;
    std::string terminal_csv;
    auto* sim_cmd = app.add_subcommand("simulate", "Monte Carlo estimate of P(S_n in target)");
    sim_cmd->add_option("--policy", policy_str, "Policy string")->required();
    sim_cmd->add_option("--n", n, "Number of steps")->required();
    sim_cmd->add_option("--start", start, "Start site")->capture_default_str();
    sim_cmd->add_option("--target-lo", target_lo, "Target interval low end")->capture_default_str();
    sim_cmd->add_option("--target-hi", target_hi, "Target interval high end")->capture_default_str();
    sim_cmd->add_option("--trials", trials, "Number of trials")->capture_default_str();
    sim_cmd->add_option("--terminal-csv", terminal_csv, "Dump per-trial terminal sites");
    add_common(sim_cmd);

    // exponent
    std::string kind = "constant", n_grid_str, method = "exact";
    Step n_min = 256, n_max = 8192, fit_cutoff = kDefaultFitCutoff;
    SweepParams sweep;
    auto* exp_cmd = app.add_subcommand("exponent", "Sweep P(S_n = 0) over n and fit the decay exponent");
    exp_cmd->add_option("--policy", kind, "constant|simple|two-zone|fast-until-zero|multiscale|qto1|optimal")
        ->capture_default_str();
    exp_cmd->add_option("--q", q, "Stay-probability cap")->required();
    exp_cmd->add_option("--n-grid", n_grid_str, "Comma-separated n values (overrides --n-min/--n-max)");
    exp_cmd->add_option("--n-min", n_min, "Smallest power of two in the grid")->capture_default_str();
    exp_cmd->add_option("--n-max", n_max, "Largest power of two in the grid")->capture_default_str();
    exp_cmd->add_option("--method", method, "exact or mc")
        ->check(CLI::IsMember({"exact", "mc"}))
        ->capture_default_str();
    exp_cmd->add_option("--trials", trials, "Trials per grid point (mc)")->capture_default_str();
    exp_cmd->add_option("--band", sweep.band, "two-zone band")->capture_default_str();
    exp_cmd->add_option("--alpha", sweep.alpha, "multiscale alpha")->capture_default_str();
    exp_cmd->add_option("--beta", sweep.beta, "multiscale beta")->capture_default_str();
    exp_cmd->add_option("--K0", sweep.K0, "multiscale K0")->capture_default_str();
    exp_cmd->add_option("--A", sweep.A, "qto1 A")->capture_default_str();
    exp_cmd->add_option("--fit-cutoff", fit_cutoff, "Exclude n below this from the fit")->capture_default_str();
    exp_cmd->add_option("--csv", common.csv, "Aggregate sweep CSV path");
    add_common(exp_cmd);

    // barriers
    double beta_exp = 0.0;
    std::string rule = "non-strict";
    auto* bar_cmd = app.add_subcommand("barriers", "Barrier-family entrance diagnostics");
    bar_cmd->add_option("--policy", policy_str, "Policy string")->required();
    bar_cmd->add_option("--n", n, "Horizon")->required();
    bar_cmd->add_option("--beta", beta_exp, "Window exponent in [0, 1/2)")->capture_default_str();
    bar_cmd->add_option("--trials", trials, "Number of trials")->capture_default_str();
    bar_cmd->add_option("--rule", rule, "Stage entrance rule")
        ->check(CLI::IsMember({"non-strict", "strict"}))
        ->capture_default_str();
    add_common(bar_cmd);

    // verify
    auto* verify_cmd = app.add_subcommand("verify", "Check a structural statement numerically");
    verify_cmd->require_subcommand(1);
    double h = 1.0, delta = 0.1, A = 4.0, eps = 0.2, alpha = 0.8, beta = 0.25, K0 = 2.0, tolerance = 0.01;
    Step ell = 240, t_min = 16, t_max = 4096;
    Site band = 4, window = -1, K = 16;
    std::string certificate, probes_str, starts_str;

    auto* v_lemma0 = verify_cmd->add_subcommand("lemma0", "Exit-side probability of the lazy walk");
    v_lemma0->add_option("--q", q, "Lazy stay probability")->required();
    v_lemma0->add_option("--h", h, "Level h")->capture_default_str();
    v_lemma0->add_option("--delta", delta, "Variance floor delta")->capture_default_str();
    v_lemma0->add_option("--ell", ell, "Step budget")->capture_default_str();
    v_lemma0->add_option("--trials", trials, "Number of trials")->capture_default_str();
    add_common(v_lemma0);

    auto* v_lemma5 = verify_cmd->add_subcommand("lemma5", "Replay or evaluate a two-zone focusing certificate");
    v_lemma5->add_option("--certificate", certificate, "Stored certificate to replay");
    v_lemma5->add_option("--q", q, "Stay-probability cap");
    v_lemma5->add_option("--alpha", alpha, "alpha")->capture_default_str();
    v_lemma5->add_option("--beta", beta, "beta")->capture_default_str();
    v_lemma5->add_option("--K0", K0, "K0")->capture_default_str();
    add_common(v_lemma5);

    auto* v_lemma6 = verify_cmd->add_subcommand("lemma6", "Replay a fast-until-zero certificate or sample it");
    v_lemma6->add_option("--certificate", certificate, "Stored certificate to replay");
    v_lemma6->add_option("--q", q, "Stay-probability cap");
    v_lemma6->add_option("--A", A, "Phase length factor")->capture_default_str();
    v_lemma6->add_option("--K", K, "Scale")->capture_default_str();
    v_lemma6->add_option("--eps", eps, "Target failure probability")->capture_default_str();
    v_lemma6->add_option("--starts", starts_str, "Comma-separated start sites (default all of [-2K, 2K])");
    v_lemma6->add_option("--trials", trials, "Trials per start")->capture_default_str();
    add_common(v_lemma6);

    auto* v_rev = verify_cmd->add_subcommand("reversibility", "Detailed balance of the two-zone chain");
    v_rev->add_option("--q", q, "Stay-probability cap")->required();
    v_rev->add_option("--band", band, "Slow band half-width")->capture_default_str();
    v_rev->add_option("--window", window, "Check window half-width (default 2 band + 8)");
    add_common(v_rev);

    auto* v_heat = verify_cmd->add_subcommand("heatkernel", "sqrt(t)-scaled heat kernel of the two-zone chain");
    v_heat->add_option("--q", q, "Stay-probability cap")->required();
    v_heat->add_option("--band", band, "Slow band half-width")->capture_default_str();
    v_heat->add_option("--t-min", t_min, "Smallest power-of-two time")->capture_default_str();
    v_heat->add_option("--t-max", t_max, "Largest power-of-two time")->capture_default_str();
    v_heat->add_option("--probes", probes_str, "Comma-separated probe sites");
    v_heat->add_option("--tolerance", tolerance, "Allowed top-octave increase")->capture_default_str();
    add_common(v_heat);

    // calibrate
    auto* cal_cmd = app.add_subcommand("calibrate", "Search for certified parameters");
    cal_cmd->require_subcommand(1);
    auto* c_lemma5 = cal_cmd->add_subcommand("lemma5", "alpha, beta, K0, eps for the two-zone focusing bound");
    c_lemma5->add_option("--q", q, "Stay-probability cap")->required();
    add_common(c_lemma5);
    auto* c_lemma6 = cal_cmd->add_subcommand("lemma6", "A and q for the fast-until-zero bound");
    c_lemma6->add_option("--eps", eps, "Target failure probability")->required();
    add_common(c_lemma6);

    try {
        args = detail::merge_config(std::move(args));
        std::reverse(args.begin(), args.end());
        app.parse(args);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? exit_code::ok : exit_code::parameter;
    } catch (const ParameterError& e) {
        err << "error: " << e.what() << '\n';
        return exit_code::parameter;
    }

    CLI::App* leaf = app.get_subcommands().front();
    std::string command = leaf->get_name();
    while (!leaf->get_subcommands().empty()) {
        leaf = leaf->get_subcommands().front();
        command += " " + leaf->get_name();
    }
    RecordWriter writer(command, detail::config_echo(leaf), out);

    try {
        const SiteInterval target{target_lo, target_hi};
        if (target.lo > target.hi) throw ParameterError("--target-lo must not exceed --target-hi");

        if (command == "evolve") {
            detail::check_rational_n(common, n);
            const PolicySpec policy = parse_policy_string(policy_str, n);
            Json payload{{"policy", policy_to_json(policy)}, {"n", n}, {"start", start},
                         {"target", {target.lo, target.hi}}, {"mode", common.mode}};
            auto fill = [&](const auto& d) {
                const auto p = interval_mass(d, target);
                payload["p"] = detail::scalar_json(p);
                payload["p_float"] = to_double(p);
                payload["total_mass"] = to_double(d.total());
                if (dump) payload["distribution"] = distribution_to_json(d, flag_split);
            };
            if (common.rational()) fill(evolve<Rational>(policy, n, start));
            else fill(evolve<double>(policy, n, start));
            writer.add(std::move(payload), detail::exact_tag());
        } else if (command == "solve") {
            detail::check_rational_n(common, n);
            const Objective obj = parse_objective(objective);
            Json payload{{"q", q}, {"n", n}, {"objective", to_string(obj)}, {"start", start},
                         {"target", {target.lo, target.hi}}, {"mode", common.mode}};
            auto run = [&](auto tag) {
                using Real = decltype(tag);
                const auto sol = solve_extremal<Real>(q, n, obj, target, SolveOptions{!values_csv.empty()});
                const Real v = sol.values.initial(start);
                payload["value"] = detail::scalar_json(v);
                payload["value_float"] = to_double(v);
                if (with_region) payload["region"] = region_to_json(extract_region(sol.policy));
                if (!values_csv.empty()) {
                    std::ofstream f(values_csv);
                    if (!f) throw ParameterError("cannot write '" + values_csv + "'");
                    sol.values.write_csv(f, cutoff);
                }
            };
            if (common.rational()) run(Rational{});
            else run(0.0);
            writer.add(std::move(payload), detail::exact_tag());
        } else if (command == "region") {
            const Objective obj = parse_objective(objective);
            const auto sol = solve_extremal<double>(q, n, obj, {0, 0}, SolveOptions{false});
            const auto slices = extract_region(sol.policy);
            if (!boundary_csv.empty()) {
                std::ofstream f(boundary_csv);
                if (!f) throw ParameterError("cannot write '" + boundary_csv + "'");
                write_region_boundary_csv(f, slices);
            }
            writer.add({{"q", q}, {"n", n}, {"objective", to_string(obj)}, {"value", sol.values.initial(0)},
                        {"region", region_to_json(slices)}},
                       detail::exact_tag());
        } else if (command == "simulate") {
            const auto seed = common.require_seed(command);
            const PolicySpec policy = parse_policy_string(policy_str, n);
            const auto batch = estimate_hit(policy, n, start, target, trials, seed, common.threads, !terminal_csv.empty());
            if (!terminal_csv.empty()) {
                std::ofstream f(terminal_csv);
                if (!f) throw ParameterError("cannot write '" + terminal_csv + "'");
                f << "trial,site\n";
                for (std::size_t j = 0; j < batch.terminal_sites.size(); ++j) f << j << ',' << batch.terminal_sites[j] << '\n';
            }
            Json payload = batch_to_json(policy, n, seed, batch.estimate);
            payload["start"] = start;
            payload["target"] = {target.lo, target.hi};
            writer.add(std::move(payload), detail::mc_tag(seed, trials));
        } else if (command == "exponent") {
            const auto grid = n_grid_str.empty() ? detail::powers_of_two(n_min, n_max) : detail::parse_step_list(n_grid_str);
            const SweepMethod m = method == "mc" ? SweepMethod::mc : SweepMethod::exact;
            sweep.trials = trials;
            sweep.seed = common.seed;
            sweep.threads = common.threads;
            sweep.fit_cutoff = fit_cutoff;
            if (m == SweepMethod::mc) common.require_seed(command);
            const auto res = exponent_sweep(parse_sweep_policy(kind), q, grid, m, sweep);
            const Json tag = m == SweepMethod::mc ? detail::mc_tag(*common.seed, trials) : detail::exact_tag();
            for (const auto& r : res.records) writer.add({{"record", "point"}, {"point", sweep_record_to_json(r)}}, tag);
            Json fit_payload{{"record", "fit"}};
            if (res.fit) fit_payload["fit"] = fit_to_json(*res.fit);
            else fit_payload["fit_error"] = res.fit_error;
            writer.add(std::move(fit_payload), tag);
            if (!common.csv.empty()) {
                std::ofstream f(common.csv);
                if (!f) throw ParameterError("cannot write '" + common.csv + "'");
                write_sweep_csv(f, res.records);
            }
        } else if (command == "barriers") {
            const auto seed = common.require_seed(command);
            const PolicySpec policy = parse_policy_string(policy_str, n);
            const auto rep = barrier_diagnostics(policy, n, beta_exp,
                                                 trials, seed,
                                                 rule == "strict" ? EntranceRule::strict : EntranceRule::non_strict,
                                                 common.threads);
            Json payload = barrier_report_to_json(rep);
            payload["policy"] = policy_to_json(policy);
            writer.add(std::move(payload), detail::mc_tag(seed, trials));
        } else if (command == "verify lemma0") {
            const auto seed = common.require_seed(command);
            const auto r = lemma0_check(q, h, delta, ell, trials, seed, common.threads);
            writer.add(lemma0_to_json(r), detail::mc_tag(seed, trials));
            writer.flush(common.out);
            if (r.violation) throw InvariantViolation("upper confidence bound " + std::to_string(r.estimate.ci_high) + " < 1/6");
            return exit_code::ok;
        } else if (command == "verify lemma5") {
            bool pass = false;
            if (!certificate.empty()) {
                const auto cert = lemma5_from_json(detail::load_certificate(certificate));
                const auto rep = replay_lemma5(cert);
                pass = rep.identical;
                writer.add({{"replay", replay_to_json(rep)}, {"certificate", lemma5_to_json(cert)}, {"pass", pass}},
                           detail::exact_tag());
            } else {
                if (v_lemma5->count("--q") == 0) throw ParameterError("verify lemma5 needs --certificate or --q");
                const auto cert = detail::lemma5_certify(q, alpha, beta, K0, 4096);
                pass = cert.eps > 0.0 && cert.max_crosscheck_diff <= kCrosscheckTolerance;
                writer.add({{"certificate", lemma5_to_json(cert)}, {"pass", pass}}, detail::exact_tag());
            }
            writer.flush(common.out);
            if (!pass) throw InvariantViolation("lemma5 verification failed");
            return exit_code::ok;
        } else if (command == "verify lemma6") {
            bool pass = false;
            if (!certificate.empty()) {
                const auto cert = lemma6_from_json(detail::load_certificate(certificate));
                const auto rep = replay_lemma6(cert);
                pass = rep.identical;
                writer.add({{"replay", replay_to_json(rep)}, {"certificate", lemma6_to_json(cert)}, {"pass", pass}},
                           detail::exact_tag());
            } else {
                if (v_lemma6->count("--q") == 0) throw ParameterError("verify lemma6 needs --certificate or --q");
                const auto seed = common.require_seed(command);
                std::vector<Site> starts;
                if (!starts_str.empty())
                    for (Step s : detail::parse_step_list(starts_str)) starts.push_back(s);
                const auto r = lemma_ori_check(q, A, K, trials, seed, starts, common.threads);
                pass = r.min_contained > 1.0 - eps;
                Json payload = lemma_ori_to_json(r);
                payload["eps"] = eps;
                payload["pass"] = pass;
                writer.add(std::move(payload), detail::mc_tag(seed, trials));
            }
            writer.flush(common.out);
            if (!pass) throw InvariantViolation("lemma6 verification failed");
            return exit_code::ok;
        } else if (command == "verify reversibility") {
            const Site w = window >= 0 ? window : 2 * band + 8;
            Json payload{{"q", q}, {"band", band}, {"window", w}, {"mode", common.mode}};
            bool pass = false;
            if (common.rational()) {
                const ChainSpec<Rational> chain{from_double<Rational>(q), band};
                const Rational res = reversibility_check(chain, w);
                const Rational mis = kernel_mismatch(chain, w);
                payload["residual"] = res.str();
                payload["kernel_mismatch"] = mis.str();
                pass = res == 0 && mis == 0;
            } else {
                const ChainSpec<double> chain{q, band};
                const double res = reversibility_check(chain, w);
                const double mis = kernel_mismatch(chain, w);
                payload["residual"] = res;
                payload["kernel_mismatch"] = mis;
                pass = res <= 1e-15 && mis <= 1e-15;
            }
            payload["pass"] = pass;
            writer.add(std::move(payload), detail::exact_tag());
            writer.flush(common.out);
            if (!pass) throw InvariantViolation("detailed balance residual above tolerance");
            return exit_code::ok;
        } else if (command == "verify heatkernel") {
            std::vector<Site> probes;
            if (probes_str.empty()) probes = {0, band / 2, band, band + 1, 2 * band, 4 * band};
            else
                for (Step s : detail::parse_step_list(probes_str)) probes.push_back(s);
            const auto prof = heat_kernel_profile(q, band, detail::powers_of_two(t_min, t_max), probes);
            const bool pass = prof.bounded && prof.top_octave_increase < tolerance;
            Json payload = heat_kernel_to_json(prof);
            payload["tolerance"] = tolerance;
            payload["pass"] = pass;
            writer.add(std::move(payload), detail::exact_tag());
            writer.flush(common.out);
            if (!pass) throw InvariantViolation("scaled heat kernel still growing over the top octave");
            return exit_code::ok;
        } else if (command == "calibrate lemma5") {
            writer.add(lemma5_to_json(calibrate_lemma5(q)), detail::exact_tag());
        } else if (command == "calibrate lemma6") {
            writer.add(lemma6_to_json(calibrate_lemma6(eps)), detail::exact_tag());
        } else {
            throw ParameterError("unknown command '" + command + "'");
        }
        writer.flush(common.out);
        return exit_code::ok;
    } catch (const CalibrationError& e) {
        err << "calibration failed: " << e.what() << '\n';
        return exit_code::calibration;
    } catch (const InvariantViolation& e) {
        err << "invariant violated: " << e.what() << '\n';
        return exit_code::invariant;
    } catch (const ParameterError& e) {
        err << "error: " << e.what() << '\n';
        return exit_code::parameter;
    } catch (const AdmissibilityError& e) {
        err << "error: " << e.what() << '\n';
        return exit_code::parameter;
    } catch (const nlohmann::json::exception& e) {
        err << "error: malformed input: " << e.what() << '\n';
        return exit_code::parameter;
    }
}

inline int run_command(int argc, char** argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    return run_command(std::vector<std::string>(argv + 1, argv + argc), out, err);
}

}  // namespace crw
